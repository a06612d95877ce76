//! Shared fixture builders for the integration and acceptance suites.
//!
//! The committed fixture files under `tests/fixtures/` are generated from
//! these builders by the ignored `regenerate_fixtures` test; the suites
//! assert against the committed bytes.
#![allow(dead_code)] // each test target uses a different subset

use std::path::{Path, PathBuf};
use std::process::Command;

use rand_chacha::rand_core::RngCore;
use segcurate::canon::seeded_rng;
use segcurate::dataset::{Annotation, Category, Dataset, ImageRecord, Source};
use segcurate::imaging::{write_png, ImageBuffer};

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn bin_path() -> &'static str {
    env!("CARGO_BIN_EXE_segcurate")
}

/// Run the CLI in `dir` with a pinned SOURCE_DATE_EPOCH so provenance
/// timestamps are reproducible.
pub fn run_cli(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(bin_path())
        .args(args)
        .current_dir(dir)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .expect("spawn segcurate")
}

/// Flat square polygon [x0,y0, x0+s,y0, x0+s,y0+s, x0,y0+s].
pub fn sq(x0: f64, y0: f64, s: f64) -> Vec<f64> {
    vec![x0, y0, x0 + s, y0, x0 + s, y0 + s, x0, y0 + s]
}

fn image(id: u64, name: &str, side: u32) -> ImageRecord {
    ImageRecord {
        id,
        file_name: name.to_string(),
        width: side,
        height: side,
    }
}

fn categories3() -> Vec<Category> {
    vec![
        Category { id: 1, name: "lm".into() },
        Category { id: 2, name: "lad".into() },
        Category { id: 3, name: "lcx".into() },
    ]
}

fn annotation(
    id: u64,
    image: &ImageRecord,
    category_id: u64,
    poly: Vec<f64>,
    score: Option<f64>,
) -> Annotation {
    let source = if score.is_some() { Source::Pseudo } else { Source::Labeled };
    Annotation::from_polygons(id, image.id, category_id, vec![poly], score, source, image)
        .expect("fixture annotation")
}

/// Mixed 3-class evaluation fixture: 2 images, 5 ground truths.
pub fn eval3_gt() -> Dataset {
    let images = vec![image(1, "i1.png", 16), image(2, "i2.png", 16)];
    let annotations = vec![
        annotation(1, &images[0], 1, sq(0.0, 0.0, 4.0), None),
        annotation(2, &images[0], 1, sq(8.0, 0.0, 4.0), None),
        annotation(3, &images[0], 2, vec![0.0, 8.0, 6.0, 8.0, 6.0, 14.0, 0.0, 14.0], None),
        annotation(4, &images[1], 1, sq(0.0, 0.0, 4.0), None),
        annotation(5, &images[1], 3, sq(8.0, 8.0, 8.0), None),
    ];
    Dataset {
        images,
        annotations,
        categories: categories3(),
        provenance: Default::default(),
    }
}

/// Predictions over the eval3 ground truth: 7 scored instances giving
/// tp/fp/fn = (2,1,1) for class 1, (1,2,0) for class 2, (1,0,0) for class 3.
pub fn eval3_pred() -> Dataset {
    let images = vec![image(1, "i1.png", 16), image(2, "i2.png", 16)];
    let annotations = vec![
        annotation(1, &images[0], 1, sq(0.0, 0.0, 4.0), Some(0.95)),
        annotation(2, &images[0], 1, sq(10.0, 0.0, 4.0), Some(0.80)),
        annotation(3, &images[0], 2, vec![0.0, 8.0, 6.0, 8.0, 6.0, 14.0, 0.0, 14.0], Some(0.60)),
        annotation(4, &images[0], 2, vec![0.0, 8.0, 6.0, 8.0, 6.0, 14.0, 0.0, 14.0], Some(0.55)),
        annotation(5, &images[1], 1, sq(0.0, 0.0, 4.0), Some(0.40)),
        annotation(6, &images[1], 3, sq(8.0, 8.0, 6.0), Some(0.70)),
        annotation(7, &images[1], 2, sq(8.0, 8.0, 8.0), Some(0.30)),
    ];
    Dataset {
        images,
        annotations,
        categories: categories3(),
        provenance: Default::default(),
    }
}

pub fn pipeline12_unlabeled_images() -> Vec<ImageRecord> {
    (1..=12)
        .map(|id| image(id, &format!("unl_{id:03}.png"), 32))
        .collect()
}

/// Labeled dataset of the 12-image pipeline fixture: one annotation per
/// image, categories cycling 1..3.
pub fn pipeline12_labeled() -> Dataset {
    let images: Vec<ImageRecord> = (1..=12)
        .map(|id| image(id, &format!("lab_{id:03}.png"), 32))
        .collect();
    let annotations: Vec<Annotation> = images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let cat = (i % 3) as u64 + 1;
            let offset = (i % 4) as f64 * 4.0;
            annotation(i as u64 + 1, img, cat, sq(offset, offset, 8.0), None)
        })
        .collect();
    Dataset {
        images,
        annotations,
        categories: categories3(),
        provenance: Default::default(),
    }
}

/// Ground truth over the unlabeled images, for scoring the pseudo-labels.
pub fn pipeline12_gt_unlabeled() -> Dataset {
    let images = pipeline12_unlabeled_images();
    let at = |id: u64| &images[(id - 1) as usize];
    let annotations = vec![
        annotation(1, at(1), 1, sq(0.0, 0.0, 8.0), None),
        annotation(2, at(1), 2, sq(16.0, 16.0, 8.0), None),
        annotation(3, at(2), 1, sq(6.0, 4.0, 8.0), None),
        annotation(4, at(3), 2, sq(8.0, 8.0, 8.0), None),
        annotation(5, at(4), 1, sq(0.0, 16.0, 8.0), None),
        annotation(6, at(5), 3, sq(12.0, 0.0, 10.0), None),
        annotation(7, at(6), 1, sq(12.0, 12.0, 6.0), None),
        annotation(8, at(7), 2, sq(5.0, 5.0, 21.0), None),
        annotation(9, at(8), 1, sq(0.0, 0.0, 6.0), None),
        annotation(10, at(11), 3, sq(8.0, 16.0, 6.0), None),
    ];
    Dataset {
        images,
        annotations,
        categories: categories3(),
        provenance: Default::default(),
    }
}

/// Stub adapter output: 18 predictions, 10 at or above the 0.5 gate.
pub fn pipeline12_predictions_jsonl() -> String {
    let records: Vec<(u64, u64, Vec<f64>, f64)> = vec![
        (1, 1, sq(0.0, 0.0, 8.0), 0.95),
        (1, 2, sq(16.0, 16.0, 8.0), 0.90),
        (2, 1, sq(4.0, 4.0, 8.0), 0.85),
        (2, 3, sq(20.0, 20.0, 6.0), 0.80),
        (3, 2, sq(8.0, 8.0, 8.0), 0.75),
        (3, 2, sq(8.0, 8.0, 8.0), 0.70),
        (4, 1, sq(0.0, 16.0, 8.0), 0.65),
        (5, 3, sq(12.0, 0.0, 10.0), 0.60),
        (6, 1, sq(2.0, 2.0, 6.0), 0.55),
        (7, 2, sq(5.0, 5.0, 21.0), 0.50),
        (8, 1, sq(0.0, 0.0, 6.0), 0.49),
        (8, 1, sq(0.0, 0.0, 6.0), 0.45),
        (9, 2, sq(10.0, 10.0, 6.0), 0.40),
        (9, 3, sq(0.0, 20.0, 6.0), 0.30),
        (10, 1, sq(16.0, 0.0, 6.0), 0.25),
        (10, 2, sq(16.0, 8.0, 6.0), 0.20),
        (11, 3, sq(8.0, 16.0, 6.0), 0.15),
        (12, 1, sq(24.0, 24.0, 8.0), 0.10),
    ];
    let mut out = String::new();
    for (image_id, category_id, poly, score) in records {
        out.push_str(&format!(
            "{{\"image_id\":{image_id},\"category_id\":{category_id},\"segmentation\":[{poly:?}],\"score\":{score}}}\n"
        ));
    }
    out
}

pub fn pipeline12_config_json() -> String {
    r#"{
  "seed": 42,
  "paths": {
    "labeled_dataset": "labeled.json",
    "unlabeled_manifest": "manifest.json",
    "unlabeled_images": "images",
    "output_dir": "out"
  },
  "enhance": {"chain": "soft", "clahe_clip_limit": 2.0, "clahe_tiles": [4, 4], "median_kernel": 3},
  "adapter": {"mode": "file", "path": "predictions.jsonl"},
  "threshold": {"tau": 0.5},
  "eval": {"iou_threshold": 0.5}
}
"#
    .to_string()
}

/// Deterministic grayscale noise images for the enhance stage.
pub fn generate_unlabeled_pngs(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    for img in pipeline12_unlabeled_images() {
        let mut rng = seeded_rng(1000 + img.id);
        let data: Vec<u8> = (0..32 * 32).map(|_| (rng.next_u32() & 0xff) as u8).collect();
        let buffer = ImageBuffer::new(32, 32, 1, data).unwrap();
        write_png(&dir.join(&img.file_name), &buffer).unwrap();
    }
}

/// Copy the committed pipeline12 fixture inputs into a working directory
/// and generate its input images.
pub fn stage_pipeline12(workdir: &Path) {
    let src = fixtures_dir().join("pipeline12");
    std::fs::create_dir_all(workdir).unwrap();
    for name in ["labeled.json", "manifest.json", "gt_unlabeled.json", "predictions.jsonl", "config.json"] {
        std::fs::copy(src.join(name), workdir.join(name)).unwrap();
    }
    generate_unlabeled_pngs(&workdir.join("images"));
}
