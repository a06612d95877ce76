//! PNG read/write for 8-bit grayscale and RGB images.

use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;

pub fn read_png(path: &Path) -> Result<ImageBuffer> {
    let img = image::open(path)?;
    match img {
        DynamicImage::ImageLuma8(g) => {
            let (w, h) = (g.width(), g.height());
            ImageBuffer::new(w, h, 1, g.into_raw())
        }
        DynamicImage::ImageRgb8(rgb) => {
            let (w, h) = (rgb.width(), rgb.height());
            ImageBuffer::new(w, h, 3, rgb.into_raw())
        }
        other => Err(Error::validation(format!(
            "{}: unsupported pixel format {:?}, expected 8-bit grayscale or RGB",
            path.display(),
            other.color()
        ))),
    }
}

pub fn write_png(path: &Path, img: &ImageBuffer) -> Result<()> {
    match img.channels() {
        1 => {
            let buf = image::GrayImage::from_raw(img.width(), img.height(), img.data().to_vec())
                .expect("dimensions checked at construction");
            buf.save_with_format(path, ImageFormat::Png)?;
        }
        _ => {
            let buf = image::RgbImage::from_raw(img.width(), img.height(), img.data().to_vec())
                .expect("dimensions checked at construction");
            buf.save_with_format(path, ImageFormat::Png)?;
        }
    }
    Ok(())
}
