//! Contrast-limited adaptive histogram equalization.
//!
//! The image is padded by edge replication so the tile grid divides it
//! evenly, per-tile histograms are clipped and the excess redistributed
//! uniformly (single pass, remainder round-robin from bin 0), and each
//! output pixel bilinearly interpolates the mappings of the four nearest
//! tile centers, with edge tiles replicated.

use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;

fn tile_mapping(hist: &mut [u64; 256], tile_pixels: u64, clip_limit: f64) -> [u8; 256] {
    if clip_limit.is_finite() {
        let threshold = ((clip_limit * tile_pixels as f64 / 256.0).floor() as u64).max(1);
        let mut excess = 0u64;
        for bin in hist.iter_mut() {
            if *bin > threshold {
                excess += *bin - threshold;
                *bin = threshold;
            }
        }
        let base = excess / 256;
        let remainder = (excess % 256) as usize;
        for (i, bin) in hist.iter_mut().enumerate() {
            *bin += base + u64::from(i < remainder);
        }
    }
    let mut mapping = [0u8; 256];
    let mut cumulative = 0u64;
    for v in 0..256 {
        cumulative += hist[v];
        mapping[v] = (255.0 * cumulative as f64 / tile_pixels as f64).round() as u8;
    }
    mapping
}

pub fn clahe(img: &ImageBuffer, clip_limit: f64, tiles: (u32, u32)) -> Result<ImageBuffer> {
    if img.channels() != 1 {
        return Err(Error::contract("clahe requires a single-channel image"));
    }
    if tiles.0 == 0 || tiles.1 == 0 {
        return Err(Error::contract("tile counts must be positive"));
    }
    if clip_limit.is_nan() || clip_limit <= 0.0 {
        return Err(Error::contract("clip_limit must be positive"));
    }
    let (w, h) = (img.width(), img.height());
    let (tiles_x, tiles_y) = tiles;
    let tile_w = w.div_ceil(tiles_x);
    let tile_h = h.div_ceil(tiles_y);
    let tile_pixels = tile_w as u64 * tile_h as u64;

    // Padded sampling: edge replication beyond the right/bottom borders.
    let sample = |x: u32, y: u32| img.sample(x.min(w - 1), y.min(h - 1), 0);

    let mut mappings = vec![[0u8; 256]; tiles_x as usize * tiles_y as usize];
    for tj in 0..tiles_y {
        for ti in 0..tiles_x {
            let mut hist = [0u64; 256];
            for y in tj * tile_h..(tj + 1) * tile_h {
                for x in ti * tile_w..(ti + 1) * tile_w {
                    hist[sample(x, y) as usize] += 1;
                }
            }
            mappings[(tj * tiles_x + ti) as usize] = tile_mapping(&mut hist, tile_pixels, clip_limit);
        }
    }

    let mapping_at = |ti: i64, tj: i64| -> &[u8; 256] {
        let ti = ti.clamp(0, tiles_x as i64 - 1) as usize;
        let tj = tj.clamp(0, tiles_y as i64 - 1) as usize;
        &mappings[tj * tiles_x as usize + ti]
    };

    let mut out = Vec::with_capacity(w as usize * h as usize);
    for y in 0..h {
        let gy = (y as f64 + 0.5) / tile_h as f64 - 0.5;
        let j0 = gy.floor() as i64;
        let fy = gy - j0 as f64;
        for x in 0..w {
            let gx = (x as f64 + 0.5) / tile_w as f64 - 0.5;
            let i0 = gx.floor() as i64;
            let fx = gx - i0 as f64;
            let v = img.sample(x, y, 0) as usize;

            let m00 = mapping_at(i0, j0);
            let m01 = mapping_at(i0 + 1, j0);
            let m10 = mapping_at(i0, j0 + 1);
            let m11 = mapping_at(i0 + 1, j0 + 1);
            // Plain lookup when all four neighbors collapse to one tile, so
            // the single-tile configuration is exactly a global mapping.
            let value = if std::ptr::eq(m00, m11) && std::ptr::eq(m00, m01) && std::ptr::eq(m00, m10)
            {
                m00[v] as f64
            } else {
                let top = (1.0 - fx) * m00[v] as f64 + fx * m01[v] as f64;
                let bottom = (1.0 - fx) * m10[v] as f64 + fx * m11[v] as f64;
                (1.0 - fy) * top + fy * bottom
            };
            out.push(value.round().clamp(0.0, 255.0) as u8);
        }
    }
    ImageBuffer::new(w, h, 1, out)
}
