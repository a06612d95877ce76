//! Deterministic 8-bit image kernels and the two enhancement chains used by
//! the curation pipeline.
//!
//! All kernels are pure functions on [`ImageBuffer`]: same input, same
//! parameters, same output bytes, regardless of thread count. Rounding is
//! half away from zero everywhere.

mod clahe;
mod filter;
mod geom;
mod hsv;
mod io;

pub use clahe::clahe;
pub use filter::{gaussian_blur, median_blur, unsharp_mask};
pub use geom::transform_image;
pub use hsv::{apply_hsv_factors, draw_jitter_factors, hsv_jitter, hsv_to_rgb, rgb_to_hsv};
pub use io::{read_png, write_png};

use crate::error::{Error, Result};

/// 8-bit raster, row-major, interleaved when 3-channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::contract("image dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::contract(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::contract(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn constant(width: u32, height: u32, channels: u8, value: u8) -> Result<Self> {
        let len = width as usize * height as usize * channels as usize;
        ImageBuffer::new(width, height, channels, vec![value; len])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn sample(&self, x: u32, y: u32, c: u8) -> u8 {
        let idx = (y as usize * self.width as usize + x as usize) * self.channels as usize
            + c as usize;
        self.data[idx]
    }

    #[inline]
    pub fn set_sample(&mut self, x: u32, y: u32, c: u8, value: u8) {
        let idx = (y as usize * self.width as usize + x as usize) * self.channels as usize
            + c as usize;
        self.data[idx] = value;
    }

    /// Rec.601 luma plane of a 3-channel image.
    pub fn luma(&self) -> Result<ImageBuffer> {
        if self.channels != 3 {
            return Err(Error::contract("luma requires a 3-channel image"));
        }
        let mut data = Vec::with_capacity(self.width as usize * self.height as usize);
        for px in self.data.chunks_exact(3) {
            let y = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
            data.push(y.round().clamp(0.0, 255.0) as u8);
        }
        ImageBuffer::new(self.width, self.height, 1, data)
    }
}

/// Parameters of the enhancement kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnhanceParams {
    /// CLAHE histogram clip multiplier.
    pub clahe_clip_limit: f64,
    /// CLAHE tile grid (columns, rows).
    pub clahe_tiles: (u32, u32),
    /// Median filter kernel size, odd and >= 3.
    pub median_kernel: u32,
    pub unsharp_sigma: f64,
    pub unsharp_amount: f64,
}

impl Default for EnhanceParams {
    fn default() -> Self {
        EnhanceParams {
            clahe_clip_limit: 2.0,
            clahe_tiles: (8, 8),
            median_kernel: 5,
            unsharp_sigma: 2.0,
            unsharp_amount: 1.0,
        }
    }
}

impl EnhanceParams {
    pub fn validate(&self) -> Result<()> {
        if self.clahe_clip_limit.is_nan() || self.clahe_clip_limit <= 0.0 {
            return Err(Error::contract("clahe_clip_limit must be positive"));
        }
        if self.clahe_tiles.0 == 0 || self.clahe_tiles.1 == 0 {
            return Err(Error::contract("clahe_tiles must be positive"));
        }
        if self.median_kernel < 3 || self.median_kernel.is_multiple_of(2) {
            return Err(Error::contract(format!(
                "median_kernel must be odd and >= 3, got {}",
                self.median_kernel
            )));
        }
        if !(self.unsharp_sigma.is_finite() && self.unsharp_sigma > 0.0) {
            return Err(Error::contract("unsharp_sigma must be positive"));
        }
        if self.unsharp_amount < 0.0 {
            return Err(Error::contract("unsharp_amount must be nonnegative"));
        }
        Ok(())
    }
}

/// Seeded HSV jitter parameters; gains are fractions in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JitterParams {
    pub hue_gain: f64,
    pub sat_gain: f64,
    pub val_gain: f64,
    pub seed: u64,
}

impl JitterParams {
    pub fn validate(&self) -> Result<()> {
        for (name, g) in [
            ("hue_gain", self.hue_gain),
            ("sat_gain", self.sat_gain),
            ("val_gain", self.val_gain),
        ] {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::contract(format!("{name} must be in [0, 1], got {g}")));
            }
        }
        Ok(())
    }
}

/// CLAHE for either channel layout: single-channel images directly, color
/// images on the Rec.601 luma plane with chroma offsets preserved.
pub fn clahe_any(img: &ImageBuffer, clip_limit: f64, tiles: (u32, u32)) -> Result<ImageBuffer> {
    if img.channels() == 1 {
        return clahe(img, clip_limit, tiles);
    }
    let luma = img.luma()?;
    let equalized = clahe(&luma, clip_limit, tiles)?;
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let delta = equalized.sample(x, y, 0) as f64 - luma.sample(x, y, 0) as f64;
            for c in 0..3 {
                let v = img.sample(x, y, c) as f64 + delta;
                out.set_sample(x, y, c, v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(out)
}

/// Soft enhancement chain: CLAHE followed by median blur.
pub fn enhance_soft(img: &ImageBuffer, params: &EnhanceParams) -> Result<ImageBuffer> {
    params.validate()?;
    let equalized = clahe_any(img, params.clahe_clip_limit, params.clahe_tiles)?;
    median_blur(&equalized, params.median_kernel)
}

/// Final enhancement chain: unsharp mask followed by CLAHE.
pub fn enhance_final(img: &ImageBuffer, params: &EnhanceParams) -> Result<ImageBuffer> {
    params.validate()?;
    let sharpened = unsharp_mask(img, params.unsharp_sigma, params.unsharp_amount)?;
    clahe_any(&sharpened, params.clahe_clip_limit, params.clahe_tiles)
}
