//! Polygon geometry: shoelace area, scanline rasterization onto a bitmask,
//! rectangle clipping, and the geometric transforms applied to annotations.
//!
//! Mask semantics are fixed once for the whole toolkit: a pixel (row r,
//! column c) is covered iff its center (c + 0.5, r + 0.5) lies inside any of
//! the annotation's polygons under the even-odd rule. Boundary cases resolve
//! through the half-open crossing predicate below, which matches the classic
//! ray-casting test exactly, so the scanline fill and a per-pixel
//! point-in-polygon check agree bit for bit.

use crate::canon::round6;
use crate::error::{Error, Result};

/// Row-major binary mask backed by 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    width: u32,
    height: u32,
    words: Vec<u64>,
}

impl BitMask {
    pub fn new(width: u32, height: u32) -> Self {
        let bits = width as usize * height as usize;
        BitMask {
            width,
            height,
            words: vec![0; bits.div_ceil(64)],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> bool {
        let idx = row as usize * self.width as usize + col as usize;
        self.words[idx / 64] >> (idx % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: u32, col: u32) {
        let idx = row as usize * self.width as usize + col as usize;
        self.words[idx / 64] |= 1 << (idx % 64);
    }

    /// Number of set pixels.
    pub fn popcount(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn intersection_count(&self, other: &BitMask) -> u64 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as u64)
            .sum()
    }

    pub fn union_count(&self, other: &BitMask) -> u64 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as u64)
            .sum()
    }

    pub fn union_with(&mut self, other: &BitMask) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }
}

fn check_polygon(poly: &[f64]) -> Result<()> {
    if !poly.len().is_multiple_of(2) {
        return Err(Error::validation(format!(
            "polygon has odd coordinate count {}",
            poly.len()
        )));
    }
    if poly.len() < 6 {
        return Err(Error::validation(format!(
            "polygon has {} coordinates, need at least 6",
            poly.len()
        )));
    }
    Ok(())
}

/// Absolute shoelace area of a flat [x1,y1,...,xn,yn] polygon.
pub fn polygon_area(poly: &[f64]) -> Result<f64> {
    check_polygon(poly)?;
    let n = poly.len() / 2;
    let mut acc = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        acc += poly[2 * i] * poly[2 * j + 1] - poly[2 * j] * poly[2 * i + 1];
    }
    Ok(acc.abs() / 2.0)
}

/// The crossing predicate shared by the scanline fill and the reference
/// point-in-polygon test: an edge (x1,y1)-(x2,y2) crosses the horizontal
/// line y = py iff exactly one endpoint is strictly above it, and the
/// crossing abscissa is computed with this exact expression.
#[inline]
fn edge_crossing(x1: f64, y1: f64, x2: f64, y2: f64, py: f64) -> Option<f64> {
    if (y1 > py) != (y2 > py) {
        Some((x2 - x1) * (py - y1) / (y2 - y1) + x1)
    } else {
        None
    }
}

/// Even-odd point-in-polygon test at (px, py) for a single polygon.
pub fn point_in_polygon(poly: &[f64], px: f64, py: f64) -> bool {
    let n = poly.len() / 2;
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        if let Some(x) = edge_crossing(poly[2 * j], poly[2 * j + 1], poly[2 * i], poly[2 * i + 1], py)
        {
            if px < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Rasterize the union of `polygons` onto a width x height mask. Each
/// polygon is filled under the even-odd rule at pixel centers; polygons are
/// then OR-combined.
pub fn rasterize(polygons: &[Vec<f64>], width: u32, height: u32) -> Result<BitMask> {
    if width == 0 || height == 0 {
        return Err(Error::contract("rasterize requires positive dimensions"));
    }
    let mut mask = BitMask::new(width, height);
    let mut crossings: Vec<f64> = Vec::new();
    for poly in polygons {
        check_polygon(poly)?;
        let n = poly.len() / 2;
        for row in 0..height {
            let py = row as f64 + 0.5;
            crossings.clear();
            let mut j = n - 1;
            for i in 0..n {
                if let Some(x) =
                    edge_crossing(poly[2 * j], poly[2 * j + 1], poly[2 * i], poly[2 * i + 1], py)
                {
                    crossings.push(x);
                }
                j = i;
            }
            if crossings.is_empty() {
                continue;
            }
            crossings.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
            // A pixel center px is inside iff the number of crossings
            // strictly greater than px is odd. Sweep columns and crossings
            // together.
            let m = crossings.len();
            let mut k = 0; // crossings <= px so far
            for col in 0..width {
                let px = col as f64 + 0.5;
                while k < m && crossings[k] <= px {
                    k += 1;
                }
                if (m - k) % 2 == 1 {
                    mask.set(row, col);
                }
            }
        }
    }
    Ok(mask)
}

/// Tight axis-aligned bounds [x, y, w, h] of the union of polygons.
pub fn polygons_bbox(polygons: &[Vec<f64>]) -> Result<[f64; 4]> {
    let mut min_x = f64::INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    let mut any = false;
    for poly in polygons {
        check_polygon(poly)?;
        for pair in poly.chunks_exact(2) {
            min_x = min_x.min(pair[0]);
            max_x = max_x.max(pair[0]);
            min_y = min_y.min(pair[1]);
            max_y = max_y.max(pair[1]);
            any = true;
        }
    }
    if !any {
        return Err(Error::validation("bbox of empty polygon list"));
    }
    Ok([min_x, min_y, max_x - min_x, max_y - min_y])
}

/// Geometric transform of annotation coordinates within an image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeometricTransform {
    Identity,
    /// x -> width - x
    HFlip,
    /// y -> height - y
    VFlip,
    /// (x, y) -> (x + dx, y + dy), in pixels
    Translate { dx: f64, dy: f64 },
    /// Scale about the image center; factor must be positive.
    Scale { factor: f64 },
}

impl GeometricTransform {
    pub fn validate(&self) -> Result<()> {
        if let GeometricTransform::Scale { factor } = self {
            if !(factor.is_finite() && *factor > 0.0) {
                return Err(Error::contract(format!(
                    "scale factor must be positive, got {factor}"
                )));
            }
        }
        Ok(())
    }

    /// Map a single point forward. Width/height are the image dimensions.
    pub fn apply_point(&self, x: f64, y: f64, width: f64, height: f64) -> (f64, f64) {
        match *self {
            GeometricTransform::Identity => (x, y),
            GeometricTransform::HFlip => (width - x, y),
            GeometricTransform::VFlip => (x, height - y),
            GeometricTransform::Translate { dx, dy } => (x + dx, y + dy),
            GeometricTransform::Scale { factor } => {
                let cx = width / 2.0;
                let cy = height / 2.0;
                (cx + (x - cx) * factor, cy + (y - cy) * factor)
            }
        }
    }
}

/// Clip a polygon to the rectangle [0, w] x [0, h] (Sutherland-Hodgman,
/// inclusive boundaries). Returns the clipped vertex list, which may be
/// empty or degenerate.
pub fn clip_polygon_to_rect(poly: &[f64], width: f64, height: f64) -> Vec<f64> {
    #[derive(Clone, Copy)]
    enum HalfPlane {
        XMin,
        XMax(f64),
        YMin,
        YMax(f64),
    }
    impl HalfPlane {
        fn inside(&self, x: f64, y: f64) -> bool {
            match *self {
                HalfPlane::XMin => x >= 0.0,
                HalfPlane::XMax(w) => x <= w,
                HalfPlane::YMin => y >= 0.0,
                HalfPlane::YMax(h) => y <= h,
            }
        }
        fn intersect(&self, x1: f64, y1: f64, x2: f64, y2: f64) -> (f64, f64) {
            match *self {
                HalfPlane::XMin => (0.0, y1 + (y2 - y1) * (0.0 - x1) / (x2 - x1)),
                HalfPlane::XMax(w) => (w, y1 + (y2 - y1) * (w - x1) / (x2 - x1)),
                HalfPlane::YMin => (x1 + (x2 - x1) * (0.0 - y1) / (y2 - y1), 0.0),
                HalfPlane::YMax(h) => (x1 + (x2 - x1) * (h - y1) / (y2 - y1), h),
            }
        }
    }

    let mut current: Vec<(f64, f64)> = poly
        .chunks_exact(2)
        .map(|p| (p[0], p[1]))
        .collect();
    for plane in [
        HalfPlane::XMin,
        HalfPlane::XMax(width),
        HalfPlane::YMin,
        HalfPlane::YMax(height),
    ] {
        if current.is_empty() {
            break;
        }
        let mut next: Vec<(f64, f64)> = Vec::with_capacity(current.len() + 4);
        let mut prev = *current.last().expect("nonempty");
        for &cur in &current {
            let prev_in = plane.inside(prev.0, prev.1);
            let cur_in = plane.inside(cur.0, cur.1);
            if cur_in {
                if !prev_in {
                    next.push(plane.intersect(prev.0, prev.1, cur.0, cur.1));
                }
                next.push(cur);
            } else if prev_in {
                next.push(plane.intersect(prev.0, prev.1, cur.0, cur.1));
            }
            prev = cur;
        }
        current = next;
    }

    // Canonical precision, then drop consecutive duplicates (clipping can
    // emit them when a vertex lies exactly on a boundary).
    let rounded: Vec<(f64, f64)> = current
        .into_iter()
        .map(|(x, y)| (round6(x), round6(y)))
        .collect();
    let mut out: Vec<f64> = Vec::with_capacity(rounded.len() * 2);
    for (i, &(x, y)) in rounded.iter().enumerate() {
        let prev = if i == 0 { rounded[rounded.len() - 1] } else { rounded[i - 1] };
        if rounded.len() > 1 && (x, y) == prev {
            continue;
        }
        out.push(x);
        out.push(y);
    }
    out
}
