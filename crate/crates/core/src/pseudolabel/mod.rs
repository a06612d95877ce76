//! Pseudo-label curation: filter model predictions by confidence, convert
//! the survivors into a pseudo-annotated dataset, and merge it with the
//! labeled dataset.
//!
//! The model itself stays behind the file-based adapter protocol in
//! [`adapter`]; everything here operates on its validated output.

pub mod adapter;

pub use adapter::{read_manifest, run_inference_adapter, write_manifest, AdapterSpec};

use serde::{Deserialize, Serialize};

use crate::dataset::{Annotation, Category, Dataset, ImageRecord, Source};
use crate::error::{Error, Result};

/// One model output: a polygon-set prediction with a confidence score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_id: u64,
    pub category_id: u64,
    /// List of flat [x1,y1,...,xn,yn] polygons.
    pub segmentation: Vec<Vec<f64>>,
    pub score: f64,
}

/// Confidence gate for pseudo-labels. The comparison is inclusive: a
/// prediction at exactly `tau` survives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub tau: f64,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy { tau: 0.5 }
    }
}

impl ThresholdPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::contract(format!(
                "tau must be in [0, 1], got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Keep exactly the predictions with score >= tau, preserving order.
pub fn filter_predictions(
    predictions: &[PredictionRecord],
    policy: ThresholdPolicy,
) -> Result<Vec<PredictionRecord>> {
    policy.validate()?;
    Ok(predictions
        .iter()
        .filter(|p| p.score >= policy.tau)
        .cloned()
        .collect())
}

/// Build the pseudo-annotated dataset from filtered predictions.
///
/// Every input image is retained, including those with no surviving
/// predictions (they remain trainable background). Annotation ids are
/// assigned 1..n in input order; every annotation carries `source=pseudo`
/// and its confidence score.
pub fn predictions_to_dataset(
    predictions: &[PredictionRecord],
    images: &[ImageRecord],
    categories: &[Category],
) -> Result<Dataset> {
    let image_by_id: std::collections::HashMap<u64, &ImageRecord> =
        images.iter().map(|i| (i.id, i)).collect();
    let category_ids: std::collections::HashSet<u64> = categories.iter().map(|c| c.id).collect();

    let mut annotations = Vec::with_capacity(predictions.len());
    for (idx, pred) in predictions.iter().enumerate() {
        let image = *image_by_id.get(&pred.image_id).ok_or_else(|| {
            Error::referential(format!(
                "prediction {}: image_id {} does not resolve",
                idx + 1,
                pred.image_id
            ))
        })?;
        if !category_ids.contains(&pred.category_id) {
            return Err(Error::referential(format!(
                "prediction {}: category_id {} is not in the category table",
                idx + 1,
                pred.category_id
            )));
        }
        annotations.push(Annotation::from_polygons(
            idx as u64 + 1,
            pred.image_id,
            pred.category_id,
            pred.segmentation.clone(),
            Some(pred.score),
            Source::Pseudo,
            image,
        )?);
    }

    let dataset = Dataset {
        images: images.to_vec(),
        annotations,
        categories: categories.to_vec(),
        provenance: Default::default(),
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Merge a labeled dataset with a pseudo-labeled one.
///
/// Both category tables must be identical (by id and name). Records are
/// concatenated, never deduplicated: the output has the labeled block first,
/// ids reindexed consecutively, and source tags preserved. Provenance
/// records the digests of both inputs.
pub fn merge_datasets(labeled: &Dataset, pseudo: &Dataset) -> Result<Dataset> {
    let mut cats_a: Vec<&Category> = labeled.categories.iter().collect();
    let mut cats_b: Vec<&Category> = pseudo.categories.iter().collect();
    cats_a.sort_by_key(|c| c.id);
    cats_b.sort_by_key(|c| c.id);
    if cats_a.len() != cats_b.len()
        || cats_a
            .iter()
            .zip(&cats_b)
            .any(|(a, b)| a.id != b.id || a.name != b.name)
    {
        return Err(Error::contract(
            "category tables differ between the datasets being merged",
        ));
    }

    let mut images = Vec::with_capacity(labeled.images.len() + pseudo.images.len());
    let mut annotations =
        Vec::with_capacity(labeled.annotations.len() + pseudo.annotations.len());
    let mut next_image_id = 1u64;
    let mut next_annotation_id = 1u64;

    for part in [labeled, pseudo] {
        let mut part_images: Vec<&ImageRecord> = part.images.iter().collect();
        part_images.sort_by_key(|i| i.id);
        let mut id_map = std::collections::HashMap::with_capacity(part_images.len());
        for img in part_images {
            id_map.insert(img.id, next_image_id);
            images.push(ImageRecord {
                id: next_image_id,
                ..img.clone()
            });
            next_image_id += 1;
        }
        let mut part_annotations: Vec<&Annotation> = part.annotations.iter().collect();
        part_annotations.sort_by_key(|a| a.id);
        for ann in part_annotations {
            annotations.push(Annotation {
                id: next_annotation_id,
                image_id: id_map[&ann.image_id],
                ..ann.clone()
            });
            next_annotation_id += 1;
        }
    }

    let mut provenance = serde_json::Map::new();
    provenance.insert(
        "merged_labeled_sha256".into(),
        serde_json::Value::String(labeled.digest()),
    );
    provenance.insert(
        "merged_pseudo_sha256".into(),
        serde_json::Value::String(pseudo.digest()),
    );

    let merged = Dataset {
        images,
        annotations,
        categories: labeled.categories.clone(),
        provenance,
    };
    merged.validate()?;
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pred(image_id: u64, score: f64) -> PredictionRecord {
        PredictionRecord {
            image_id,
            category_id: 1,
            segmentation: vec![vec![0.0, 0.0, 2.0, 0.0, 2.0, 2.0, 0.0, 2.0]],
            score,
        }
    }

    fn images(n: u64) -> Vec<ImageRecord> {
        (1..=n)
            .map(|id| ImageRecord {
                id,
                file_name: format!("img_{id}.png"),
                width: 8,
                height: 8,
            })
            .collect()
    }

    fn categories() -> Vec<Category> {
        vec![Category {
            id: 1,
            name: "vessel".into(),
        }]
    }

    #[test]
    fn threshold_is_inclusive_at_tau() {
        let preds = vec![pred(1, 0.49), pred(1, 0.50), pred(1, 0.90)];
        let kept = filter_predictions(&preds, ThresholdPolicy { tau: 0.5 }).unwrap();
        let scores: Vec<f64> = kept.iter().map(|p| p.score).collect();
        assert_eq!(scores, vec![0.50, 0.90]);
    }

    #[test]
    fn zero_tau_keeps_everything_and_empty_stays_empty() {
        let preds = vec![pred(1, 0.0), pred(1, 0.1)];
        assert_eq!(
            filter_predictions(&preds, ThresholdPolicy { tau: 0.0 }).unwrap(),
            preds
        );
        assert!(filter_predictions(&[], ThresholdPolicy::default())
            .unwrap()
            .is_empty());
    }

    proptest! {
        #[test]
        fn filter_is_monotone_in_tau(
            scores in proptest::collection::vec(0.0f64..=1.0, 0..30),
            tau1 in 0.0f64..=1.0,
            tau2 in 0.0f64..=1.0,
        ) {
            let (lo, hi) = if tau1 <= tau2 { (tau1, tau2) } else { (tau2, tau1) };
            let preds: Vec<PredictionRecord> = scores.iter().map(|&s| pred(1, s)).collect();
            let kept_lo = filter_predictions(&preds, ThresholdPolicy { tau: lo }).unwrap();
            let kept_hi = filter_predictions(&preds, ThresholdPolicy { tau: hi }).unwrap();
            // survivors at the higher threshold are a subset of the lower's
            for p in &kept_hi {
                prop_assert!(kept_lo.iter().any(|q| q == p));
            }
        }
    }

    #[test]
    fn empty_predictions_keep_background_images() {
        let d = predictions_to_dataset(&[], &images(5), &categories()).unwrap();
        assert_eq!(d.images.len(), 5);
        assert!(d.annotations.is_empty());
    }

    #[test]
    fn converted_annotations_are_pseudo_with_ids_in_order() {
        let preds = vec![pred(1, 0.9), pred(1, 0.7)];
        let d = predictions_to_dataset(&preds, &images(1), &categories()).unwrap();
        assert_eq!(d.annotations.len(), 2);
        assert_eq!(d.annotations[0].id, 1);
        assert_eq!(d.annotations[1].id, 2);
        for ann in &d.annotations {
            assert_eq!(ann.source, Source::Pseudo);
            assert!(ann.score.is_some());
        }
    }

    #[test]
    fn converted_annotation_gets_bbox_and_area() {
        let d = predictions_to_dataset(&[pred(1, 0.8)], &images(1), &categories()).unwrap();
        let ann = &d.annotations[0];
        assert_eq!(ann.bbox, [0.0, 0.0, 2.0, 2.0]);
        assert_eq!(ann.area, 4.0);
    }

    #[test]
    fn unknown_category_is_referential_error() {
        let mut p = pred(1, 0.8);
        p.category_id = 9;
        let err = predictions_to_dataset(&[p], &images(1), &categories()).unwrap_err();
        assert!(matches!(err, Error::Referential(_)), "{err}");
    }

    fn labeled_dataset(n_images: u64, ann_per_image: usize) -> Dataset {
        let images = images(n_images);
        let mut annotations = Vec::new();
        let mut id = 1;
        for img in &images {
            for k in 0..ann_per_image {
                annotations.push(
                    Annotation::from_polygons(
                        id,
                        img.id,
                        1,
                        vec![vec![
                            k as f64,
                            0.0,
                            k as f64 + 2.0,
                            0.0,
                            k as f64 + 2.0,
                            2.0,
                            k as f64,
                            2.0,
                        ]],
                        None,
                        Source::Labeled,
                        img,
                    )
                    .unwrap(),
                );
                id += 1;
            }
        }
        Dataset {
            images,
            annotations,
            categories: categories(),
            provenance: Default::default(),
        }
    }

    #[test]
    fn merge_concatenates_counts() {
        let a = labeled_dataset(3, 2);
        let preds = vec![pred(1, 0.9), pred(2, 0.8)];
        let b = predictions_to_dataset(&preds, &images(2), &categories()).unwrap();
        let merged = merge_datasets(&a, &b).unwrap();
        assert_eq!(merged.images.len(), 5);
        assert_eq!(merged.annotations.len(), 8);
        let labeled_count = merged
            .annotations
            .iter()
            .filter(|x| x.source == Source::Labeled)
            .count();
        assert_eq!(labeled_count, 6);
    }

    #[test]
    fn merge_with_empty_pseudo_is_identity_on_counts() {
        let a = labeled_dataset(4, 1);
        let b = Dataset {
            categories: categories(),
            ..Dataset::default()
        };
        let merged = merge_datasets(&a, &b).unwrap();
        assert_eq!(merged.images.len(), a.images.len());
        assert_eq!(merged.annotations.len(), a.annotations.len());
    }

    #[test]
    fn merge_reindexes_colliding_image_ids() {
        let a = labeled_dataset(7, 0);
        let b = predictions_to_dataset(&[], &images(7), &categories()).unwrap();
        // both sides contain image id 7
        let merged = merge_datasets(&a, &b).unwrap();
        assert_eq!(merged.images.len(), 14);
        let mut ids: Vec<u64> = merged.images.iter().map(|i| i.id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (1..=14).collect::<Vec<u64>>());
    }

    #[test]
    fn merge_rejects_mismatched_categories() {
        let a = labeled_dataset(1, 0);
        let mut b = labeled_dataset(1, 0);
        b.categories[0].name = "other".into();
        assert!(matches!(
            merge_datasets(&a, &b).unwrap_err(),
            Error::Contract(_)
        ));
    }

    #[test]
    fn merge_records_input_digests() {
        let a = labeled_dataset(1, 1);
        let b = predictions_to_dataset(&[], &images(1), &categories()).unwrap();
        let merged = merge_datasets(&a, &b).unwrap();
        assert_eq!(
            merged.provenance["merged_labeled_sha256"],
            serde_json::Value::String(a.digest())
        );
        assert_eq!(
            merged.provenance["merged_pseudo_sha256"],
            serde_json::Value::String(b.digest())
        );
    }
}
