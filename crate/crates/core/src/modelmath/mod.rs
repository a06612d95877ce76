//! Training-side numeric formulas, detached from any network: binary
//! cross-entropy, distributional focal loss, box IoU loss, the weighted
//! composite of the four, and checkpoint weight averaging.
//!
//! All logarithms clamp probabilities to [EPS, 1 - EPS]; accumulation is in
//! double precision throughout.

mod checkpoint;

pub use checkpoint::{average_checkpoints, read_checkpoint, write_checkpoint, Checkpoint, Tensor};

use crate::error::{Error, Result};

/// Probability clamp for logarithms.
pub const EPS: f64 = 1e-7;

/// Weight of each loss component. Defaults are the tuned gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainCoefficients {
    pub lambda_b: f64,
    pub lambda_c: f64,
    pub lambda_s: f64,
    pub lambda_f: f64,
}

impl Default for GainCoefficients {
    fn default() -> Self {
        GainCoefficients {
            lambda_b: 7.5,
            lambda_c: 0.5,
            lambda_s: 0.468,
            lambda_f: 2.0,
        }
    }
}

impl GainCoefficients {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_b", self.lambda_b),
            ("lambda_c", self.lambda_c),
            ("lambda_s", self.lambda_s),
            ("lambda_f", self.lambda_f),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::contract(format!(
                    "{name} must be a nonnegative finite value, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Values of the four loss components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossComponents {
    /// Classification loss (BCE).
    pub l_c: f64,
    /// Distributional focal loss.
    pub l_f: f64,
    /// Segmentation mask loss (BCE).
    pub l_s: f64,
    /// Box IoU loss.
    pub l_b: f64,
}

impl LossComponents {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("l_c", self.l_c),
            ("l_f", self.l_f),
            ("l_s", self.l_s),
            ("l_b", self.l_b),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::contract(format!(
                    "{name} must be a nonnegative finite value, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Binary cross-entropy of predicted probability `p` against label `y`
/// (which must be exactly 0 or 1).
pub fn bce(p: f64, y: f64) -> Result<f64> {
    if y != 0.0 && y != 1.0 {
        return Err(Error::contract(format!("label must be 0 or 1, got {y}")));
    }
    let p = p.clamp(EPS, 1.0 - EPS);
    Ok(-(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
}

/// Element-wise BCE averaged over a vector of (probability, label) pairs.
pub fn bce_mean(probabilities: &[f64], labels: &[f64]) -> Result<f64> {
    if probabilities.len() != labels.len() {
        return Err(Error::contract(format!(
            "probability and label vectors differ in length: {} vs {}",
            probabilities.len(),
            labels.len()
        )));
    }
    if probabilities.is_empty() {
        return Err(Error::contract("bce over an empty vector"));
    }
    let mut sum = 0.0;
    for (&p, &y) in probabilities.iter().zip(labels) {
        sum += bce(p, y)?;
    }
    Ok(sum / probabilities.len() as f64)
}

/// Distributional focal loss against a continuous target in [0, n], where
/// `dist` is a probability vector over the integer bins 0..=n.
///
/// With l = floor(target) and r = l + 1, the loss is the cross-entropy of
/// the two bracketing bins weighted by proximity:
/// `-((r - t) * ln dist[l] + (t - l) * ln dist[r])`. An integer target uses
/// only its own bin.
pub fn dfl(dist: &[f64], target: f64) -> Result<f64> {
    if dist.len() < 2 {
        return Err(Error::contract("distribution needs at least 2 bins"));
    }
    let n = (dist.len() - 1) as f64;
    if !(0.0..=n).contains(&target) {
        return Err(Error::contract(format!(
            "target {target} outside [0, {n}]"
        )));
    }
    let mut sum = 0.0;
    for &p in dist {
        if !(0.0..=1.0 + 1e-9).contains(&p) {
            return Err(Error::contract(format!(
                "distribution entry {p} outside [0, 1]"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::contract(format!(
            "distribution sums to {sum}, expected 1"
        )));
    }

    let left = target.floor();
    let l = left as usize;
    if target == left {
        return Ok(-dist[l].clamp(EPS, 1.0).ln());
    }
    let right_weight = target - left;
    let left_weight = 1.0 - right_weight;
    Ok(-(left_weight * dist[l].clamp(EPS, 1.0).ln()
        + right_weight * dist[l + 1].clamp(EPS, 1.0).ln()))
}

/// Box IoU loss: 1 - IoU of two [x, y, w, h] boxes. An empty union counts
/// as full loss.
pub fn iou_loss(box_a: [f64; 4], box_b: [f64; 4]) -> Result<f64> {
    for b in [&box_a, &box_b] {
        if b[2] < 0.0 || b[3] < 0.0 {
            return Err(Error::contract(format!(
                "box width/height must be nonnegative, got {b:?}"
            )));
        }
    }
    let ix = (box_a[0] + box_a[2]).min(box_b[0] + box_b[2]) - box_a[0].max(box_b[0]);
    let iy = (box_a[1] + box_a[3]).min(box_b[1] + box_b[3]) - box_a[1].max(box_b[1]);
    let intersection = ix.max(0.0) * iy.max(0.0);
    let union = box_a[2] * box_a[3] + box_b[2] * box_b[3] - intersection;
    if union <= 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - intersection / union)
}

/// The weighted composite loss:
/// lambda_c*L_c + lambda_f*L_f + lambda_s*L_s + lambda_b*L_b.
pub fn composite_loss(components: LossComponents, gains: GainCoefficients) -> Result<f64> {
    components.validate()?;
    gains.validate()?;
    Ok(gains.lambda_c * components.l_c
        + gains.lambda_f * components.l_f
        + gains.lambda_s * components.l_s
        + gains.lambda_b * components.l_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TOL: f64 = 1e-12;

    #[test]
    fn bce_at_half_is_ln2() {
        assert!((bce(0.5, 1.0).unwrap() - std::f64::consts::LN_2).abs() < TOL);
    }

    #[test]
    fn bce_confident_correct_is_near_zero() {
        assert!(bce(1.0 - EPS, 1.0).unwrap() <= 1.1e-7);
        assert!(bce(1.0, 1.0).unwrap() <= 1.1e-7);
    }

    #[test]
    fn bce_confident_wrong_hits_the_clamp() {
        let expected = -(EPS).ln(); // ln(1e7) = 16.118...
        assert!((bce(EPS, 1.0).unwrap() - expected).abs() < 1e-9);
        assert!((bce(0.0, 1.0).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn bce_rejects_non_binary_label() {
        assert!(bce(0.5, 0.5).is_err());
        assert!(bce(0.5, 2.0).is_err());
    }

    #[test]
    fn bce_mean_averages_elements() {
        let m = bce_mean(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!((m - std::f64::consts::LN_2).abs() < TOL);
    }

    #[test]
    fn dfl_one_hot_integer_target_is_zero() {
        let mut dist = vec![0.0; 8];
        dist[3] = 1.0;
        assert!(dfl(&dist, 3.0).unwrap() <= 1.1e-7);
    }

    #[test]
    fn dfl_symmetric_half_is_ln2() {
        let dist = vec![0.0, 0.0, 0.5, 0.5];
        assert!((dfl(&dist, 2.5).unwrap() - std::f64::consts::LN_2).abs() < TOL);
    }

    #[test]
    fn dfl_quarter_case_matches_formula() {
        let dist = vec![0.0, 0.0, 0.75, 0.25];
        let expected = -(0.75 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        assert!((dfl(&dist, 2.25).unwrap() - expected).abs() < TOL);
        assert!((expected - 0.562335).abs() < 1e-6);
    }

    #[test]
    fn dfl_is_continuous_at_bin_boundaries() {
        let dist = vec![0.1, 0.2, 0.3, 0.4];
        for k in 1..3 {
            let t = k as f64;
            let below = dfl(&dist, t - 1e-9).unwrap();
            let at = dfl(&dist, t).unwrap();
            let above = dfl(&dist, t + 1e-9).unwrap();
            assert!((below - at).abs() < 1e-7, "left limit at {t}");
            assert!((above - at).abs() < 1e-7, "right limit at {t}");
        }
    }

    #[test]
    fn dfl_rejects_malformed_distribution() {
        assert!(dfl(&[0.5, 0.4], 0.5).is_err()); // sums to 0.9
        assert!(dfl(&[1.5, -0.5], 0.5).is_err()); // out-of-range entries
        assert!(dfl(&[0.5, 0.5], 3.0).is_err()); // target outside bins
    }

    #[test]
    fn iou_loss_identical_and_disjoint() {
        assert_eq!(iou_loss([0.0, 0.0, 2.0, 2.0], [0.0, 0.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(iou_loss([0.0, 0.0, 1.0, 1.0], [5.0, 5.0, 1.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn iou_loss_half_overlapping_unit_boxes() {
        let loss = iou_loss([0.0, 0.0, 1.0, 1.0], [0.5, 0.0, 1.0, 1.0]).unwrap();
        assert!((loss - 2.0 / 3.0).abs() < TOL);
    }

    #[test]
    fn iou_loss_rejects_negative_extent() {
        assert!(iou_loss([0.0, 0.0, -1.0, 1.0], [0.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn composite_with_default_gains_and_unit_components() {
        let loss = composite_loss(
            LossComponents {
                l_c: 1.0,
                l_f: 1.0,
                l_s: 1.0,
                l_b: 1.0,
            },
            GainCoefficients::default(),
        )
        .unwrap();
        assert!((loss - 10.468).abs() < TOL);
    }

    #[test]
    fn composite_of_zeros_is_zero() {
        let loss = composite_loss(
            LossComponents {
                l_c: 0.0,
                l_f: 0.0,
                l_s: 0.0,
                l_b: 0.0,
            },
            GainCoefficients::default(),
        )
        .unwrap();
        assert_eq!(loss, 0.0);
    }

    proptest! {
        #[test]
        fn composite_is_linear_in_gains(
            c in (0.0f64..10.0, 0.0f64..10.0, 0.0f64..10.0, 0.0f64..10.0),
            g in (0.0f64..10.0, 0.0f64..10.0, 0.0f64..10.0, 0.0f64..10.0),
            k in 0.0f64..8.0,
        ) {
            let components = LossComponents { l_c: c.0, l_f: c.1, l_s: c.2, l_b: c.3 };
            let gains = GainCoefficients { lambda_b: g.0, lambda_c: g.1, lambda_s: g.2, lambda_f: g.3 };
            let scaled = GainCoefficients {
                lambda_b: g.0 * k, lambda_c: g.1 * k, lambda_s: g.2 * k, lambda_f: g.3 * k,
            };
            let base = composite_loss(components, gains).unwrap();
            let after = composite_loss(components, scaled).unwrap();
            prop_assert!((after - k * base).abs() <= 1e-9 * (1.0 + base.abs() * k));
        }

        #[test]
        fn zero_gain_annihilates_its_component(x in 0.0f64..100.0) {
            let gains = GainCoefficients { lambda_b: 0.0, lambda_c: 1.0, lambda_s: 0.0, lambda_f: 0.0 };
            let a = composite_loss(LossComponents { l_c: 2.0, l_f: x, l_s: x, l_b: x }, gains).unwrap();
            prop_assert_eq!(a, 2.0);
        }

        #[test]
        fn bce_is_monotone_decreasing_for_positive_label(
            p1 in 0.01f64..0.99,
            p2 in 0.01f64..0.99,
        ) {
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            prop_assert!(bce(lo, 1.0).unwrap() >= bce(hi, 1.0).unwrap());
        }

        #[test]
        fn dfl_at_integer_targets_is_negative_log_bin(bin in 0usize..4) {
            let dist = vec![0.25, 0.25, 0.25, 0.25];
            let loss = dfl(&dist, bin as f64).unwrap();
            prop_assert!((loss - (-(0.25f64).ln())).abs() < 1e-12);
        }

        #[test]
        fn iou_loss_is_symmetric_and_bounded(
            a in (0.0f64..10.0, 0.0f64..10.0, 0.0f64..5.0, 0.0f64..5.0),
            b in (0.0f64..10.0, 0.0f64..10.0, 0.0f64..5.0, 0.0f64..5.0),
        ) {
            let box_a = [a.0, a.1, a.2, a.3];
            let box_b = [b.0, b.1, b.2, b.3];
            let ab = iou_loss(box_a, box_b).unwrap();
            let ba = iou_loss(box_b, box_a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }
    }
}
