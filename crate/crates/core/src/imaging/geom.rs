//! Pixel-side geometric transforms, paired with the coordinate maps applied
//! to annotations. Translation and scaling resample with nearest neighbor
//! through the inverse map; uncovered pixels are filled with 0.

use crate::error::Result;
use crate::geometry::GeometricTransform;
use crate::imaging::ImageBuffer;

pub fn transform_image(img: &ImageBuffer, transform: GeometricTransform) -> Result<ImageBuffer> {
    transform.validate()?;
    let (w, h) = (img.width(), img.height());
    match transform {
        GeometricTransform::Identity => Ok(img.clone()),
        GeometricTransform::HFlip => {
            let mut out = img.clone();
            for y in 0..h {
                for x in 0..w {
                    for c in 0..img.channels() {
                        out.set_sample(x, y, c, img.sample(w - 1 - x, y, c));
                    }
                }
            }
            Ok(out)
        }
        GeometricTransform::VFlip => {
            let mut out = img.clone();
            for y in 0..h {
                for x in 0..w {
                    for c in 0..img.channels() {
                        out.set_sample(x, y, c, img.sample(x, h - 1 - y, c));
                    }
                }
            }
            Ok(out)
        }
        GeometricTransform::Translate { .. } | GeometricTransform::Scale { .. } => {
            let mut out = ImageBuffer::constant(w, h, img.channels(), 0)?;
            let (wf, hf) = (w as f64, h as f64);
            for y in 0..h {
                for x in 0..w {
                    // Inverse-map the output pixel center into the source.
                    let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                    let (sx, sy) = match transform {
                        GeometricTransform::Translate { dx, dy } => (cx - dx, cy - dy),
                        GeometricTransform::Scale { factor } => (
                            wf / 2.0 + (cx - wf / 2.0) / factor,
                            hf / 2.0 + (cy - hf / 2.0) / factor,
                        ),
                        _ => unreachable!(),
                    };
                    let (px, py) = (sx.floor(), sy.floor());
                    if px >= 0.0 && px < wf && py >= 0.0 && py < hf {
                        for c in 0..img.channels() {
                            out.set_sample(x, y, c, img.sample(px as u32, py as u32, c));
                        }
                    }
                }
            }
            Ok(out)
        }
    }
}
