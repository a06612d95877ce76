//! Instance-segmentation evaluation: mask IoU, confidence-ordered greedy
//! matching, per-class and pooled F1, and 101-point interpolated AP at IoU
//! 0.5.
//!
//! The matching protocol: predictions are sorted by descending score (ties
//! by ascending index) and each is greedily assigned to the unmatched
//! same-class ground truth of highest IoU >= threshold. Micro F1 pools
//! tp/fp/fn across classes; macro F1 averages per-class F1 over classes
//! with at least one ground-truth instance; mAP@50 averages AP@50 over
//! those same classes. Empty denominators evaluate to 0.

use std::collections::BTreeMap;

use crate::canon::fmt_fixed6;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{rasterize, BitMask};

/// A scored prediction within one image.
#[derive(Debug, Clone, PartialEq)]
pub struct PredInstance {
    pub category_id: u64,
    pub score: f64,
    pub segmentation: Vec<Vec<f64>>,
}

/// A ground-truth instance within one image.
#[derive(Debug, Clone, PartialEq)]
pub struct GtInstance {
    pub category_id: u64,
    pub segmentation: Vec<Vec<f64>>,
}

/// All instances of one image, with its raster dimensions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageEval {
    pub width: u32,
    pub height: u32,
    pub predictions: Vec<PredInstance>,
    pub ground_truths: Vec<GtInstance>,
}

/// Outcome of matching one image's predictions against its ground truths.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// (prediction index, ground-truth index, IoU) triples.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_predictions: Vec<usize>,
    pub unmatched_ground_truths: Vec<usize>,
}

/// IoU of two rasterized polygon sets; 0 when the union is empty.
pub fn mask_iou(a: &[Vec<f64>], b: &[Vec<f64>], width: u32, height: u32) -> Result<f64> {
    let mask_a = rasterize(a, width, height)?;
    let mask_b = rasterize(b, width, height)?;
    Ok(bitmask_iou(&mask_a, &mask_b))
}

fn bitmask_iou(a: &BitMask, b: &BitMask) -> f64 {
    let union = a.union_count(b);
    if union == 0 {
        0.0
    } else {
        a.intersection_count(b) as f64 / union as f64
    }
}

/// Greedy confidence-ordered one-to-one matching within one image.
pub fn match_instances(
    predictions: &[PredInstance],
    ground_truths: &[GtInstance],
    width: u32,
    height: u32,
    iou_threshold: f64,
) -> Result<MatchResult> {
    for p in predictions {
        if !p.score.is_finite() {
            return Err(Error::contract("prediction scores must be finite"));
        }
    }
    let pred_masks: Vec<BitMask> = predictions
        .iter()
        .map(|p| rasterize(&p.segmentation, width, height))
        .collect::<Result<_>>()?;
    let gt_masks: Vec<BitMask> = ground_truths
        .iter()
        .map(|g| rasterize(&g.segmentation, width, height))
        .collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| {
        predictions[b]
            .score
            .partial_cmp(&predictions[a].score)
            .expect("finite scores")
            .then(a.cmp(&b))
    });

    let mut gt_taken = vec![false; ground_truths.len()];
    let mut pairs = Vec::new();
    let mut unmatched_predictions = Vec::new();
    for &pi in &order {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in ground_truths.iter().enumerate() {
            if gt_taken[gi] || gt.category_id != predictions[pi].category_id {
                continue;
            }
            let iou = bitmask_iou(&pred_masks[pi], &gt_masks[gi]);
            if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        match best {
            Some((gi, iou)) => {
                gt_taken[gi] = true;
                pairs.push((pi, gi, iou));
            }
            None => unmatched_predictions.push(pi),
        }
    }
    unmatched_predictions.sort_unstable();
    let unmatched_ground_truths = (0..ground_truths.len())
        .filter(|&gi| !gt_taken[gi])
        .collect();
    Ok(MatchResult {
        pairs,
        unmatched_predictions,
        unmatched_ground_truths,
    })
}

/// Per-class evaluation entries of an [`EvalReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// 101-point AP at IoU 0.5; absent for classes with no ground truth.
    pub ap50: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub per_class: BTreeMap<u64, ClassReport>,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub map50: f64,
}

fn safe_div(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn f1_from_counts(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    let precision = safe_div(tp as f64, (tp + fp) as f64);
    let recall = safe_div(tp as f64, (tp + fn_) as f64);
    let f1 = safe_div(2.0 * tp as f64, (2 * tp + fp + fn_) as f64);
    (precision, recall, f1)
}

/// 101-point interpolated average precision at IoU 0.5 for one class,
/// pooled over images. `None` when the class has no ground truth.
pub fn average_precision_50(images: &[ImageEval], class_id: u64) -> Result<Option<f64>> {
    let mut flags: Vec<(f64, bool)> = Vec::new();
    let mut total_gt = 0u64;
    for image in images {
        let preds: Vec<PredInstance> = image
            .predictions
            .iter()
            .filter(|p| p.category_id == class_id)
            .cloned()
            .collect();
        let gts: Vec<GtInstance> = image
            .ground_truths
            .iter()
            .filter(|g| g.category_id == class_id)
            .cloned()
            .collect();
        total_gt += gts.len() as u64;
        let result = match_instances(&preds, &gts, image.width, image.height, 0.5)?;
        let mut is_tp = vec![false; preds.len()];
        for &(pi, _, _) in &result.pairs {
            is_tp[pi] = true;
        }
        for (pi, p) in preds.iter().enumerate() {
            flags.push((p.score, is_tp[pi]));
        }
    }
    Ok(ap_from_flags(&mut flags, total_gt))
}

/// AP from (score, is_true_positive) flags: sort by descending score (ties
/// keep pooled order), sweep the PR curve, interpolate precision as the
/// running maximum over recalls >= r, and average over the 101 recall
/// samples {0.00, 0.01, ..., 1.00}.
fn ap_from_flags(flags: &mut [(f64, bool)], total_gt: u64) -> Option<f64> {
    if total_gt == 0 {
        return None;
    }
    flags.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores"));
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut recalls = Vec::with_capacity(flags.len());
    let mut precisions = Vec::with_capacity(flags.len());
    for &(_, hit) in flags.iter() {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        recalls.push(tp as f64 / total_gt as f64);
        precisions.push(tp as f64 / (tp + fp) as f64);
    }
    // Running maximum from the right: envelope[i] = max precision at any
    // sweep point with recall >= recalls[i] (recall is nondecreasing).
    let mut envelope = precisions.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut sum = 0.0;
    for step in 0..=100u32 {
        let r = step as f64 / 100.0;
        // first sweep point with recall >= r
        let idx = recalls.partition_point(|&rec| rec < r);
        if idx < envelope.len() {
            sum += envelope[idx];
        }
    }
    Some(sum / 101.0)
}

fn check_same_tables(pred: &Dataset, gt: &Dataset) -> Result<()> {
    let mut imgs_a = pred.images.clone();
    let mut imgs_b = gt.images.clone();
    imgs_a.sort_by_key(|i| i.id);
    imgs_b.sort_by_key(|i| i.id);
    if imgs_a != imgs_b {
        return Err(Error::contract(
            "prediction and ground-truth datasets have different image tables",
        ));
    }
    let mut cats_a = pred.categories.clone();
    let mut cats_b = gt.categories.clone();
    cats_a.sort_by_key(|c| c.id);
    cats_b.sort_by_key(|c| c.id);
    if cats_a != cats_b {
        return Err(Error::contract(
            "prediction and ground-truth datasets have different category tables",
        ));
    }
    Ok(())
}

/// Pair both datasets image by image. Prediction annotations without a
/// score are treated as fully confident (score 1.0).
fn collect_image_evals(pred: &Dataset, gt: &Dataset) -> Vec<ImageEval> {
    let mut by_image: BTreeMap<u64, ImageEval> = BTreeMap::new();
    for img in &gt.images {
        by_image.insert(
            img.id,
            ImageEval {
                width: img.width,
                height: img.height,
                ..ImageEval::default()
            },
        );
    }
    for ann in &pred.annotations {
        by_image
            .get_mut(&ann.image_id)
            .expect("validated dataset")
            .predictions
            .push(PredInstance {
                category_id: ann.category_id,
                score: ann.score.unwrap_or(1.0),
                segmentation: ann.segmentation.clone(),
            });
    }
    for ann in &gt.annotations {
        by_image
            .get_mut(&ann.image_id)
            .expect("validated dataset")
            .ground_truths
            .push(GtInstance {
                category_id: ann.category_id,
                segmentation: ann.segmentation.clone(),
            });
    }
    by_image.into_values().collect()
}

/// F1-only evaluation (per-class, micro, macro) at the given IoU threshold.
/// AP fields are left empty.
pub fn f1_report(pred: &Dataset, gt: &Dataset, iou_threshold: f64) -> Result<EvalReport> {
    check_same_tables(pred, gt)?;
    let images = collect_image_evals(pred, gt);
    f1_over_images(&images, iou_threshold)
}

fn f1_over_images(images: &[ImageEval], iou_threshold: f64) -> Result<EvalReport> {
    #[derive(Default)]
    struct Counts {
        tp: u64,
        fp: u64,
        fn_: u64,
    }
    let mut per_class: BTreeMap<u64, Counts> = BTreeMap::new();
    for image in images {
        let result = match_instances(
            &image.predictions,
            &image.ground_truths,
            image.width,
            image.height,
            iou_threshold,
        )?;
        for &(pi, _, _) in &result.pairs {
            per_class
                .entry(image.predictions[pi].category_id)
                .or_default()
                .tp += 1;
        }
        for &pi in &result.unmatched_predictions {
            per_class
                .entry(image.predictions[pi].category_id)
                .or_default()
                .fp += 1;
        }
        for &gi in &result.unmatched_ground_truths {
            per_class
                .entry(image.ground_truths[gi].category_id)
                .or_default()
                .fn_ += 1;
        }
    }

    let mut report = EvalReport::default();
    let (mut tp_all, mut fp_all, mut fn_all) = (0u64, 0u64, 0u64);
    let mut macro_sum = 0.0;
    let mut macro_n = 0u64;
    for (class_id, counts) in per_class {
        let (precision, recall, f1) = f1_from_counts(counts.tp, counts.fp, counts.fn_);
        tp_all += counts.tp;
        fp_all += counts.fp;
        fn_all += counts.fn_;
        if counts.tp + counts.fn_ > 0 {
            macro_sum += f1;
            macro_n += 1;
        }
        report.per_class.insert(
            class_id,
            ClassReport {
                tp: counts.tp,
                fp: counts.fp,
                fn_: counts.fn_,
                precision,
                recall,
                f1,
                ap50: None,
            },
        );
    }
    report.micro_f1 = f1_from_counts(tp_all, fp_all, fn_all).2;
    report.macro_f1 = safe_div(macro_sum, macro_n as f64);
    Ok(report)
}

/// Full evaluation: F1 at `iou_threshold` plus AP@50 and mAP@50 (AP always
/// matches at IoU 0.5, independent of the F1 threshold).
pub fn evaluate(pred: &Dataset, gt: &Dataset, iou_threshold: f64) -> Result<EvalReport> {
    check_same_tables(pred, gt)?;
    let images = collect_image_evals(pred, gt);
    let mut report = f1_over_images(&images, iou_threshold)?;

    let mut ap_sum = 0.0;
    let mut ap_n = 0u64;
    let class_ids: Vec<u64> = report.per_class.keys().copied().collect();
    for class_id in class_ids {
        let ap = average_precision_50(&images, class_id)?;
        if let Some(value) = ap {
            ap_sum += value;
            ap_n += 1;
        }
        report.per_class.get_mut(&class_id).expect("present").ap50 = ap;
    }
    report.map50 = safe_div(ap_sum, ap_n as f64);
    Ok(report)
}

impl EvalReport {
    /// Canonical JSON: sorted keys, 6-decimal fractions, integral counts.
    pub fn to_canonical_json(&self) -> String {
        let mut out = String::new();
        out.push_str("{\n");
        out.push_str(&format!("  \"macro_f1\": {},\n", fmt_fixed6(self.macro_f1)));
        out.push_str(&format!("  \"map50\": {},\n", fmt_fixed6(self.map50)));
        out.push_str(&format!("  \"micro_f1\": {},\n", fmt_fixed6(self.micro_f1)));
        out.push_str("  \"per_class\": {");
        for (i, (class_id, c)) in self.per_class.iter().enumerate() {
            out.push_str(if i == 0 { "\n" } else { ",\n" });
            let ap = match c.ap50 {
                Some(v) => fmt_fixed6(v),
                None => "null".to_string(),
            };
            out.push_str(&format!(
                "    \"{}\": {{\"ap50\":{},\"f1\":{},\"fn\":{},\"fp\":{},\"precision\":{},\"recall\":{},\"tp\":{}}}",
                class_id,
                ap,
                fmt_fixed6(c.f1),
                c.fn_,
                c.fp,
                fmt_fixed6(c.precision),
                fmt_fixed6(c.recall),
                c.tp
            ));
        }
        out.push_str(if self.per_class.is_empty() { "}\n" } else { "\n  }\n" });
        out.push_str("}\n");
        out
    }

    /// Per-class table as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class_id,tp,fp,fn,precision,recall,f1,ap50\n");
        for (class_id, c) in &self.per_class {
            let ap = c.ap50.map(fmt_fixed6).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                class_id,
                c.tp,
                c.fp,
                c.fn_,
                fmt_fixed6(c.precision),
                fmt_fixed6(c.recall),
                fmt_fixed6(c.f1),
                ap
            ));
        }
        out
    }
}
