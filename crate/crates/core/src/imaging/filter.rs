//! Spatial filters: median blur, separable Gaussian blur, unsharp mask.
//! Borders are handled by edge replication in all three.

use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;

/// Median filter with a kernel x kernel window per channel. The median is
/// selected from a sliding 256-bin histogram, so runtime is independent of
/// kernel size beyond window updates.
pub fn median_blur(img: &ImageBuffer, kernel: u32) -> Result<ImageBuffer> {
    if kernel < 3 || kernel.is_multiple_of(2) {
        return Err(Error::contract(format!(
            "median kernel must be odd and >= 3, got {kernel}"
        )));
    }
    let (w, h) = (img.width(), img.height());
    let r = (kernel / 2) as i64;
    let rank = (kernel as u64 * kernel as u64).div_ceil(2);
    let clamp_x = |x: i64| x.clamp(0, w as i64 - 1) as u32;
    let clamp_y = |y: i64| y.clamp(0, h as i64 - 1) as u32;

    let mut out = img.clone();
    for c in 0..img.channels() {
        for y in 0..h as i64 {
            let mut hist = [0u32; 256];
            for dx in -r..=r {
                for dy in -r..=r {
                    hist[img.sample(clamp_x(dx), clamp_y(y + dy), c) as usize] += 1;
                }
            }
            for x in 0..w as i64 {
                if x > 0 {
                    // Slide the window: drop the leaving column, add the entering one.
                    for dy in -r..=r {
                        hist[img.sample(clamp_x(x - 1 - r), clamp_y(y + dy), c) as usize] -= 1;
                        hist[img.sample(clamp_x(x + r), clamp_y(y + dy), c) as usize] += 1;
                    }
                }
                let mut cumulative = 0u64;
                let mut median = 0u8;
                for (v, &count) in hist.iter().enumerate() {
                    cumulative += count as u64;
                    if cumulative >= rank {
                        median = v as u8;
                        break;
                    }
                }
                out.set_sample(x as u32, y as u32, c, median);
            }
        }
    }
    Ok(out)
}

/// Normalized Gaussian kernel of radius ceil(3*sigma).
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut weights: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    weights
}

/// Separable Gaussian blur. Both passes accumulate in f64; rounding (half
/// away from zero) happens once, after the vertical pass.
pub fn gaussian_blur(img: &ImageBuffer, sigma: f64) -> Result<ImageBuffer> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::contract("sigma must be positive"));
    }
    let weights = gaussian_kernel(sigma);
    let radius = (weights.len() / 2) as i64;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let channels = img.channels() as usize;

    let mut horizontal = vec![0.0f64; img.data().len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..channels {
                let mut acc = 0.0;
                for (k, weight) in weights.iter().enumerate() {
                    let sx = (x + k as i64 - radius).clamp(0, w - 1);
                    acc += weight * img.sample(sx as u32, y as u32, c as u8) as f64;
                }
                horizontal[(y * w + x) as usize * channels + c] = acc;
            }
        }
    }

    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            for c in 0..channels {
                let mut acc = 0.0;
                for (k, weight) in weights.iter().enumerate() {
                    let sy = (y + k as i64 - radius).clamp(0, h - 1);
                    acc += weight * horizontal[(sy * w + x) as usize * channels + c];
                }
                out.set_sample(x as u32, y as u32, c as u8, acc.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(out)
}

/// Unsharp masking: out = clamp(round(orig + amount * (orig - blurred))).
pub fn unsharp_mask(img: &ImageBuffer, sigma: f64, amount: f64) -> Result<ImageBuffer> {
    if amount < 0.0 {
        return Err(Error::contract("amount must be nonnegative"));
    }
    let blurred = gaussian_blur(img, sigma)?;
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            for c in 0..img.channels() {
                let orig = img.sample(x, y, c) as f64;
                let blur = blurred.sample(x, y, c) as f64;
                let sharpened = (orig + amount * (orig - blur)).round().clamp(0.0, 255.0);
                out.set_sample(x, y, c, sharpened as u8);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::seeded_rng;
    use rand_chacha::rand_core::RngCore;

    /// Brute-force median: sort the window, take the middle element.
    fn median_oracle(img: &ImageBuffer, kernel: u32) -> ImageBuffer {
        let r = (kernel / 2) as i64;
        let (w, h) = (img.width() as i64, img.height() as i64);
        let mut out = img.clone();
        for c in 0..img.channels() {
            for y in 0..h {
                for x in 0..w {
                    let mut window = Vec::with_capacity((kernel * kernel) as usize);
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let sx = (x + dx).clamp(0, w - 1) as u32;
                            let sy = (y + dy).clamp(0, h - 1) as u32;
                            window.push(img.sample(sx, sy, c));
                        }
                    }
                    window.sort_unstable();
                    out.set_sample(x as u32, y as u32, c, window[window.len() / 2]);
                }
            }
        }
        out
    }

    #[test]
    fn median_preserves_constant_images() {
        let img = ImageBuffer::constant(9, 7, 1, 42).unwrap();
        assert_eq!(median_blur(&img, 3).unwrap(), img);
        assert_eq!(median_blur(&img, 5).unwrap(), img);
    }

    #[test]
    fn median_rejects_lone_impulse() {
        let mut img = ImageBuffer::constant(8, 8, 1, 0).unwrap();
        img.set_sample(4, 4, 0, 255);
        let out = median_blur(&img, 3).unwrap();
        assert!(out.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn median_rejects_even_kernel() {
        let img = ImageBuffer::constant(8, 8, 1, 0).unwrap();
        assert!(median_blur(&img, 4).is_err());
    }

    #[test]
    fn median_matches_sort_oracle_on_random_images() {
        let mut rng = seeded_rng(99);
        for _ in 0..50 {
            let data: Vec<u8> = (0..64).map(|_| (rng.next_u32() & 0xff) as u8).collect();
            let img = ImageBuffer::new(8, 8, 1, data).unwrap();
            for kernel in [3, 5] {
                assert_eq!(median_blur(&img, kernel).unwrap(), median_oracle(&img, kernel));
            }
        }
    }

    #[test]
    fn gaussian_preserves_constant_images_exactly() {
        let img = ImageBuffer::constant(16, 16, 3, 200).unwrap();
        assert_eq!(gaussian_blur(&img, 1.5).unwrap(), img);
    }

    #[test]
    fn gaussian_impulse_response_is_the_kernel_outer_product() {
        let mut img = ImageBuffer::constant(31, 31, 1, 0).unwrap();
        img.set_sample(15, 15, 0, 255);
        let sigma = 1.5;
        let out = gaussian_blur(&img, sigma).unwrap();
        let weights = gaussian_kernel(sigma);
        let radius = (weights.len() / 2) as i64;
        for y in 0..31i64 {
            for x in 0..31i64 {
                let dx = x - 15;
                let dy = y - 15;
                let expected = if dx.abs() <= radius && dy.abs() <= radius {
                    255.0 * weights[(dx + radius) as usize] * weights[(dy + radius) as usize]
                } else {
                    0.0
                };
                let got = out.sample(x as u32, y as u32, 0) as f64;
                assert!(
                    (got - expected).abs() <= 0.5 + 1e-9,
                    "({x},{y}): got {got}, expected {expected}"
                );
            }
        }
    }

    #[test]
    fn tiny_sigma_is_near_identity() {
        // sigma = 0.1 gives radius 1 with side weights exp(-50), so the
        // center weight is 1 within ~4e-22; the output must round back.
        let mut rng = seeded_rng(5);
        let data: Vec<u8> = (0..256).map(|_| (rng.next_u32() & 0xff) as u8).collect();
        let img = ImageBuffer::new(16, 16, 1, data).unwrap();
        let out = gaussian_blur(&img, 0.1).unwrap();
        for (o, i) in out.data().iter().zip(img.data()) {
            assert!((*o as i16 - *i as i16).abs() <= 1);
        }
    }

    #[test]
    fn unsharp_preserves_constants_and_zero_amount() {
        let img = ImageBuffer::constant(12, 12, 1, 99).unwrap();
        assert_eq!(unsharp_mask(&img, 2.0, 1.0).unwrap(), img);

        let mut varied = ImageBuffer::constant(12, 12, 1, 99).unwrap();
        varied.set_sample(3, 3, 0, 7);
        assert_eq!(unsharp_mask(&varied, 2.0, 0.0).unwrap(), varied);
    }

    #[test]
    fn unsharp_step_edge_saturates_and_overshoots() {
        // Step edge: left half 0, right half 255.
        let w = 24u32;
        let mut img = ImageBuffer::constant(w, 4, 1, 0).unwrap();
        for y in 0..4 {
            for x in w / 2..w {
                img.set_sample(x, y, 0, 255);
            }
        }
        let sigma = 1.0;
        let out = unsharp_mask(&img, sigma, 1.0).unwrap();

        // 1-D convolution oracle for the blurred row (the image is constant
        // along y away from borders, so row 2 behaves as a 1-D signal).
        let weights = gaussian_kernel(sigma);
        let radius = (weights.len() / 2) as i64;
        let row: Vec<f64> = (0..w as i64)
            .map(|x| if x >= w as i64 / 2 { 255.0 } else { 0.0 })
            .collect();
        let blur_1d = |x: i64| -> f64 {
            weights
                .iter()
                .enumerate()
                .map(|(k, wt)| wt * row[(x + k as i64 - radius).clamp(0, w as i64 - 1) as usize])
                .sum()
        };

        let edge = w / 2;
        // Bright side of the edge stays clamped at 255, dark side at 0.
        assert_eq!(out.sample(edge, 2, 0), 255);
        assert_eq!(out.sample(edge - 1, 2, 0), 0);
        // One pixel inside the bright region exceeds its blurred value.
        let x_in = (edge + 1) as i64;
        let blurred = blur_1d(x_in);
        assert!(blurred < 255.0);
        assert!(out.sample(x_in as u32, 2, 0) as f64 > blurred);
    }
}
