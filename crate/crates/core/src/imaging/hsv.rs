//! RGB <-> HSV conversion (hexcone model, H in [0, 360), S and V in [0, 1])
//! and the seeded HSV jitter augmentation.

use crate::canon::{seeded_rng, uniform_in};
use crate::error::{Error, Result};
use crate::imaging::{ImageBuffer, JitterParams};

pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let rf = r as f64 / 255.0;
    let gf = g as f64 / 255.0;
    let bf = b as f64 / 255.0;
    let max = rf.max(gf).max(bf);
    let min = rf.min(gf).min(bf);
    let delta = max - min;

    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == rf {
        60.0 * (((gf - bf) / delta).rem_euclid(6.0))
    } else if max == gf {
        60.0 * ((bf - rf) / delta + 2.0)
    } else {
        60.0 * ((rf - gf) / delta + 4.0)
    };
    (h.rem_euclid(360.0), s, v)
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (u8, u8, u8) {
    let h = h.rem_euclid(360.0);
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r1, g1, b1) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to_u8 = |f: f64| ((f + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    (to_u8(r1), to_u8(g1), to_u8(b1))
}

/// Draw the three jitter factors from the seeded generator, in a fixed
/// order: hue shift fraction, saturation gain, value gain.
pub fn draw_jitter_factors(params: &JitterParams) -> Result<(f64, f64, f64)> {
    params.validate()?;
    let mut rng = seeded_rng(params.seed);
    let r_h = uniform_in(&mut rng, -params.hue_gain, params.hue_gain);
    let r_s = uniform_in(&mut rng, 1.0 - params.sat_gain, 1.0 + params.sat_gain);
    let r_v = uniform_in(&mut rng, 1.0 - params.val_gain, 1.0 + params.val_gain);
    Ok((r_h, r_s, r_v))
}

/// Apply explicit HSV factors: H += 360 * r_h (mod 360), S *= r_s, V *= r_v,
/// with S and V clamped to [0, 1].
pub fn apply_hsv_factors(img: &ImageBuffer, r_h: f64, r_s: f64, r_v: f64) -> Result<ImageBuffer> {
    if img.channels() != 3 {
        return Err(Error::contract("hsv jitter requires a 3-channel image"));
    }
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let (h, s, v) = rgb_to_hsv(img.sample(x, y, 0), img.sample(x, y, 1), img.sample(x, y, 2));
            let (r, g, b) = hsv_to_rgb(
                (h + 360.0 * r_h).rem_euclid(360.0),
                (s * r_s).clamp(0.0, 1.0),
                (v * r_v).clamp(0.0, 1.0),
            );
            out.set_sample(x, y, 0, r);
            out.set_sample(x, y, 1, g);
            out.set_sample(x, y, 2, b);
        }
    }
    Ok(out)
}

/// Seeded HSV jitter: draw factors, then apply them.
pub fn hsv_jitter(img: &ImageBuffer, params: &JitterParams) -> Result<ImageBuffer> {
    let (r_h, r_s, r_v) = draw_jitter_factors(params)?;
    apply_hsv_factors(img, r_h, r_s, r_v)
}
