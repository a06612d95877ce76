//! Command implementations behind the CLI: enhance, augment, pseudo-label,
//! merge, evaluate, avg-weights, loss.
//!
//! Every command is deterministic given (config, inputs): per-image
//! randomness is keyed by (seed, image id), parallel results are merged in
//! sorted order, and all outputs embed the config digest and seed. Two runs
//! differ only in the `timestamp` provenance field (pin `SOURCE_DATE_EPOCH`
//! to make them byte-identical).

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::Value;

use crate::canon::{canonical_value, derive_seed, seeded_rng, sha256_hex, timestamp_unix, unit_f64, uniform_in};
use crate::config::{ChainKind, PipelineConfig};
use crate::dataset::{parse_dataset, transform_annotation, write_dataset, Dataset};
use crate::error::{Error, Result};
use crate::geometry::GeometricTransform;
use crate::imaging::{
    apply_hsv_factors, enhance_final, enhance_soft, read_png, transform_image, write_png,
    ImageBuffer,
};
use crate::metrics::{evaluate, EvalReport};
use crate::modelmath::{
    average_checkpoints, composite_loss, read_checkpoint, write_checkpoint, GainCoefficients,
    LossComponents,
};
use crate::pseudolabel::{
    filter_predictions, merge_datasets, predictions_to_dataset, read_manifest,
    run_inference_adapter,
};

/// Flags shared by every command.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunContext {
    pub jobs: Option<usize>,
    pub dry_run: bool,
}

/// One line of JSON on standard error. Data outputs never mix with logs.
pub fn log_json(level: &str, msg: &str, fields: &[(&str, Value)]) {
    let mut map = serde_json::Map::new();
    map.insert("level".into(), Value::String(level.into()));
    map.insert("msg".into(), Value::String(msg.into()));
    for (k, v) in fields {
        map.insert((*k).into(), v.clone());
    }
    eprintln!("{}", canonical_value(&Value::Object(map)));
}

fn with_pool<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match jobs {
        None | Some(0) => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::contract(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn base_provenance(command: &str, config: &PipelineConfig) -> serde_json::Map<String, Value> {
    let mut map = serde_json::Map::new();
    map.insert("command".into(), Value::String(command.into()));
    map.insert(
        "config_sha256".into(),
        Value::String(config.params_digest()),
    );
    map.insert("seed".into(), serde_json::json!(config.seed));
    map.insert(
        "tool_version".into(),
        Value::String(env!("CARGO_PKG_VERSION").into()),
    );
    map.insert("timestamp".into(), serde_json::json!(timestamp_unix()));
    map
}

fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn apply_chain(img: &ImageBuffer, config: &PipelineConfig) -> Result<ImageBuffer> {
    let params = config.enhance.params();
    match config.enhance.chain {
        ChainKind::Soft => enhance_soft(img, &params),
        ChainKind::Final => enhance_final(img, &params),
        ChainKind::None => Ok(img.clone()),
    }
}

/// Apply the configured enhancement chain to every PNG in `in_dir`, writing
/// results and a provenance file into `out_dir`. With `chain=none` the
/// input bytes are copied verbatim. Per-file failures are logged and
/// reported at the end; remaining files are still processed.
pub fn cmd_enhance(
    config: &PipelineConfig,
    in_dir: &Path,
    out_dir: &Path,
    ctx: RunContext,
) -> Result<()> {
    config.validate()?;
    let files = list_pngs(in_dir)?;
    if ctx.dry_run {
        log_json(
            "info",
            "dry-run: would enhance images",
            &[
                ("count", serde_json::json!(files.len())),
                ("chain", serde_json::json!(config.enhance.chain.as_str())),
                ("out_dir", serde_json::json!(out_dir.display().to_string())),
            ],
        );
        return Ok(());
    }
    std::fs::create_dir_all(out_dir)?;

    struct FileOutcome {
        name: String,
        result: Result<(String, String)>, // (input digest, output digest)
    }

    let process = |path: &PathBuf| -> FileOutcome {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        let out_path = out_dir.join(&name);
        let result = (|| -> Result<(String, String)> {
            let input_bytes = std::fs::read(path)?;
            let input_digest = sha256_hex(&input_bytes);
            if config.enhance.chain == ChainKind::None {
                std::fs::write(&out_path, &input_bytes)?;
                return Ok((input_digest.clone(), input_digest));
            }
            let img = read_png(path)?;
            let enhanced = apply_chain(&img, config)?;
            write_png(&out_path, &enhanced)?;
            let output_digest = sha256_hex(&std::fs::read(&out_path)?);
            Ok((input_digest, output_digest))
        })();
        FileOutcome { name, result }
    };

    let outcomes: Vec<FileOutcome> =
        with_pool(ctx.jobs, || files.par_iter().map(process).collect())?;

    let mut entries = Vec::new();
    let mut failures = 0usize;
    for outcome in &outcomes {
        match &outcome.result {
            Ok((input_digest, output_digest)) => {
                entries.push(serde_json::json!({
                    "input": outcome.name,
                    "input_sha256": input_digest,
                    "output": outcome.name,
                    "output_sha256": output_digest,
                }));
            }
            Err(err) => {
                failures += 1;
                log_json(
                    "error",
                    "failed to enhance image",
                    &[
                        ("file", serde_json::json!(outcome.name)),
                        ("error", serde_json::json!(err.to_string())),
                    ],
                );
            }
        }
    }

    let mut provenance = base_provenance("enhance", config);
    provenance.insert(
        "chain".into(),
        Value::String(config.enhance.chain.as_str().into()),
    );
    provenance.insert(
        "params".into(),
        serde_json::json!({
            "clahe_clip_limit": config.enhance.clahe_clip_limit,
            "clahe_tiles": [config.enhance.clahe_tiles.0, config.enhance.clahe_tiles.1],
            "median_kernel": config.enhance.median_kernel,
            "unsharp_sigma": config.enhance.unsharp_sigma,
            "unsharp_amount": config.enhance.unsharp_amount,
        }),
    );
    provenance.insert("files".into(), Value::Array(entries));
    let mut text = serde_json::to_string_pretty(&Value::Object(provenance))
        .expect("provenance serialization");
    text.push('\n');
    std::fs::write(out_dir.join("provenance.json"), text)?;

    log_json(
        "info",
        "enhance finished",
        &[
            ("processed", serde_json::json!(outcomes.len() - failures)),
            ("failed", serde_json::json!(failures)),
        ],
    );
    if failures > 0 {
        return Err(Error::validation(format!(
            "{failures} image(s) failed to enhance"
        )));
    }
    Ok(())
}

/// Draws for one image's augmentation, in a fixed order so results are
/// independent of scheduling.
struct AugmentDraw {
    transforms: Vec<GeometricTransform>,
    hsv: Option<(f64, f64, f64)>,
}

fn draw_augment(config: &PipelineConfig, image_id: u64, width: u32, height: u32) -> AugmentDraw {
    let aug = &config.augment;
    let mut rng = seeded_rng(derive_seed(config.seed, &format!("image:{image_id}")));
    let mut transforms = Vec::new();
    if aug.hflip && unit_f64(&mut rng) < 0.5 {
        transforms.push(GeometricTransform::HFlip);
    }
    if aug.vflip && unit_f64(&mut rng) < 0.5 {
        transforms.push(GeometricTransform::VFlip);
    }
    if aug.translate_frac > 0.0 {
        let dx = uniform_in(
            &mut rng,
            -aug.translate_frac * width as f64,
            aug.translate_frac * width as f64,
        );
        let dy = uniform_in(
            &mut rng,
            -aug.translate_frac * height as f64,
            aug.translate_frac * height as f64,
        );
        transforms.push(GeometricTransform::Translate { dx, dy });
    }
    if aug.scale_delta > 0.0 {
        let factor = uniform_in(&mut rng, 1.0 - aug.scale_delta, 1.0 + aug.scale_delta);
        transforms.push(GeometricTransform::Scale { factor });
    }
    let hsv = if aug.hue_gain > 0.0 || aug.sat_gain > 0.0 || aug.val_gain > 0.0 {
        let r_h = uniform_in(&mut rng, -aug.hue_gain, aug.hue_gain);
        let r_s = uniform_in(&mut rng, 1.0 - aug.sat_gain, 1.0 + aug.sat_gain);
        let r_v = uniform_in(&mut rng, 1.0 - aug.val_gain, 1.0 + aug.val_gain);
        Some((r_h, r_s, r_v))
    } else {
        None
    };
    AugmentDraw { transforms, hsv }
}

/// Apply seeded random augmentations (flips, translation, scaling, HSV
/// jitter) to a dataset and its images. Annotations are transformed
/// consistently with the pixels; ones that leave the frame are dropped.
pub fn cmd_augment(
    config: &PipelineConfig,
    dataset_path: &Path,
    images_dir: &Path,
    out_dir: &Path,
    ctx: RunContext,
) -> Result<()> {
    config.validate()?;
    let text = std::fs::read_to_string(dataset_path)?;
    let dataset = parse_dataset(&text)?;
    if ctx.dry_run {
        log_json(
            "info",
            "dry-run: would augment dataset",
            &[("images", serde_json::json!(dataset.images.len()))],
        );
        return Ok(());
    }
    std::fs::create_dir_all(out_dir)?;

    let mut images = dataset.images.clone();
    images.sort_by_key(|i| i.id);
    let mut annotations_by_image: std::collections::BTreeMap<u64, Vec<&crate::dataset::Annotation>> =
        Default::default();
    for ann in &dataset.annotations {
        annotations_by_image.entry(ann.image_id).or_default().push(ann);
    }

    type ImageResult = Result<Vec<crate::dataset::Annotation>>;
    let process = |img: &crate::dataset::ImageRecord| -> ImageResult {
        let draw = draw_augment(config, img.id, img.width, img.height);
        let mut buffer = read_png(&images_dir.join(&img.file_name))?;
        for t in &draw.transforms {
            buffer = transform_image(&buffer, *t)?;
        }
        if let Some((r_h, r_s, r_v)) = draw.hsv {
            if buffer.channels() == 3 {
                buffer = apply_hsv_factors(&buffer, r_h, r_s, r_v)?;
            }
        }
        write_png(&out_dir.join(&img.file_name), &buffer)?;

        let mut kept = Vec::new();
        if let Some(anns) = annotations_by_image.get(&img.id) {
            for ann in anns {
                let mut current = Some((*ann).clone());
                for t in &draw.transforms {
                    current = match current {
                        Some(a) => transform_annotation(&a, *t, img)?,
                        None => None,
                    };
                }
                if let Some(a) = current {
                    kept.push(a);
                }
            }
        }
        Ok(kept)
    };

    let results: Vec<ImageResult> =
        with_pool(ctx.jobs, || images.par_iter().map(process).collect())?;

    let mut annotations = Vec::new();
    for result in results {
        annotations.extend(result?);
    }
    annotations.sort_by_key(|a| a.id);

    let mut out_dataset = Dataset {
        images,
        annotations,
        categories: dataset.categories.clone(),
        provenance: dataset.provenance.clone(),
    };
    for (k, v) in base_provenance("augment", config) {
        out_dataset.provenance.insert(k, v);
    }
    out_dataset
        .provenance
        .insert("input_sha256".into(), Value::String(dataset.digest()));
    std::fs::write(out_dir.join("dataset.json"), write_dataset(&out_dataset))?;
    log_json(
        "info",
        "augment finished",
        &[
            ("images", serde_json::json!(out_dataset.images.len())),
            ("annotations", serde_json::json!(out_dataset.annotations.len())),
        ],
    );
    Ok(())
}

/// Generate the pseudo-labeled dataset: run the inference adapter over the
/// unlabeled image set, gate predictions by confidence, and convert the
/// survivors into annotations (all images retained).
pub fn cmd_pseudo_label(config: &PipelineConfig, out_path: &Path, ctx: RunContext) -> Result<()> {
    config.validate()?;
    let labeled_path = config.paths.labeled_dataset.as_ref().ok_or_else(|| {
        Error::contract("config is missing paths.labeled_dataset (category table source)")
    })?;
    let manifest_path = config.paths.unlabeled_manifest.as_ref().ok_or_else(|| {
        Error::contract("config is missing paths.unlabeled_manifest")
    })?;
    let adapter = config
        .adapter
        .as_ref()
        .ok_or_else(|| Error::contract("config is missing the adapter section"))?;

    let labeled_text = std::fs::read_to_string(labeled_path)?;
    let labeled = parse_dataset(&labeled_text)?;
    let manifest_bytes = std::fs::read(manifest_path)?;
    let images = read_manifest(manifest_path)?;

    if ctx.dry_run {
        log_json(
            "info",
            "dry-run: would pseudo-label images",
            &[
                ("images", serde_json::json!(images.len())),
                ("adapter_mode", serde_json::json!(adapter.mode_name())),
                ("tau", serde_json::json!(config.threshold.tau)),
            ],
        );
        return Ok(());
    }

    // Optional pre-inference enhancement: stage enhanced copies and point
    // the adapter's manifest at them (absolute paths).
    let mut staging: Option<PathBuf> = None;
    let adapter_images = if config.enhance.before_inference
        && config.enhance.chain != ChainKind::None
    {
        let images_dir = config.paths.unlabeled_images.as_ref().ok_or_else(|| {
            Error::contract("enhance.before_inference requires paths.unlabeled_images")
        })?;
        let dir = std::env::temp_dir().join(format!(
            "segcurate-stage-{}-{}",
            std::process::id(),
            timestamp_unix()
        ));
        std::fs::create_dir_all(&dir)?;
        let mut staged = Vec::with_capacity(images.len());
        for img in &images {
            let buffer = read_png(&images_dir.join(&img.file_name))?;
            let enhanced = apply_chain(&buffer, config)?;
            let staged_path = dir.join(&img.file_name);
            write_png(&staged_path, &enhanced)?;
            staged.push(crate::dataset::ImageRecord {
                file_name: staged_path.display().to_string(),
                ..img.clone()
            });
        }
        staging = Some(dir);
        staged
    } else {
        images.clone()
    };

    let adapter_result = run_inference_adapter(adapter, &adapter_images);
    if let Some(dir) = staging {
        let _ = std::fs::remove_dir_all(dir);
    }
    let predictions = adapter_result?;
    let kept = filter_predictions(&predictions, config.threshold)?;
    let mut dataset = predictions_to_dataset(&kept, &images, &labeled.categories)?;

    for (k, v) in base_provenance("pseudo-label", config) {
        dataset.provenance.insert(k, v);
    }
    dataset
        .provenance
        .insert("adapter_mode".into(), Value::String(adapter.mode_name().into()));
    dataset
        .provenance
        .insert("manifest_sha256".into(), Value::String(sha256_hex(&manifest_bytes)));
    dataset
        .provenance
        .insert("predictions_total".into(), serde_json::json!(predictions.len()));
    dataset
        .provenance
        .insert("predictions_kept".into(), serde_json::json!(kept.len()));
    dataset
        .provenance
        .insert("tau".into(), serde_json::json!(config.threshold.tau));

    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(out_path, write_dataset(&dataset))?;
    log_json(
        "info",
        "pseudo-label finished",
        &[
            ("predictions_total", serde_json::json!(predictions.len())),
            ("predictions_kept", serde_json::json!(kept.len())),
            ("images", serde_json::json!(dataset.images.len())),
        ],
    );
    Ok(())
}

/// Merge the labeled and pseudo-labeled datasets into one combined dataset.
pub fn cmd_merge(
    config: &PipelineConfig,
    labeled_path: &Path,
    pseudo_path: &Path,
    out_path: &Path,
    ctx: RunContext,
) -> Result<()> {
    config.validate()?;
    let labeled = parse_dataset(&std::fs::read_to_string(labeled_path)?)?;
    let pseudo = parse_dataset(&std::fs::read_to_string(pseudo_path)?)?;
    if ctx.dry_run {
        log_json(
            "info",
            "dry-run: would merge datasets",
            &[
                ("labeled_images", serde_json::json!(labeled.images.len())),
                ("pseudo_images", serde_json::json!(pseudo.images.len())),
            ],
        );
        return Ok(());
    }
    let mut merged = merge_datasets(&labeled, &pseudo)?;
    for (k, v) in base_provenance("merge", config) {
        merged.provenance.insert(k, v);
    }
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(out_path, write_dataset(&merged))?;
    log_json(
        "info",
        "merge finished",
        &[
            ("images", serde_json::json!(merged.images.len())),
            ("annotations", serde_json::json!(merged.annotations.len())),
        ],
    );
    Ok(())
}

/// Evaluate a prediction dataset against ground truth; writes the canonical
/// report (and optional CSV) and prints the headline metrics as key=value
/// lines on standard output.
pub fn cmd_evaluate(
    config: &PipelineConfig,
    pred_path: &Path,
    gt_path: &Path,
    out_path: &Path,
    csv_path: Option<&Path>,
    ctx: RunContext,
) -> Result<EvalReport> {
    config.validate()?;
    let pred = parse_dataset(&std::fs::read_to_string(pred_path)?)?;
    let gt = parse_dataset(&std::fs::read_to_string(gt_path)?)?;
    if ctx.dry_run {
        log_json(
            "info",
            "dry-run: would evaluate",
            &[
                ("pred_annotations", serde_json::json!(pred.annotations.len())),
                ("gt_annotations", serde_json::json!(gt.annotations.len())),
            ],
        );
        return Ok(EvalReport::default());
    }
    let report = evaluate(&pred, &gt, config.eval.iou_threshold)?;

    let mut provenance = base_provenance("evaluate", config);
    provenance.insert(
        "iou_threshold".into(),
        serde_json::json!(config.eval.iou_threshold),
    );
    provenance.insert("pred_sha256".into(), Value::String(pred.digest()));
    provenance.insert("gt_sha256".into(), Value::String(gt.digest()));

    // Canonical report with provenance appended as the (lexicographically
    // last) top-level key.
    let mut text = report.to_canonical_json();
    let trimmed = text.trim_end().trim_end_matches('}').trim_end();
    let mut with_provenance = String::from(trimmed);
    with_provenance.push_str(",\n  \"provenance\": ");
    with_provenance.push_str(&canonical_value(&Value::Object(provenance)));
    with_provenance.push_str("\n}\n");
    text = with_provenance;

    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(out_path, text)?;
    if let Some(csv) = csv_path {
        std::fs::write(csv, report.to_csv())?;
    }

    println!("micro_f1={}", crate::canon::fmt_fixed6(report.micro_f1));
    println!("macro_f1={}", crate::canon::fmt_fixed6(report.macro_f1));
    println!("map50={}", crate::canon::fmt_fixed6(report.map50));
    Ok(report)
}

/// Average checkpoint files into one.
pub fn cmd_avg_weights(
    config: &PipelineConfig,
    inputs: &[PathBuf],
    out_path: &Path,
    ctx: RunContext,
) -> Result<()> {
    let mut checkpoints = Vec::with_capacity(inputs.len());
    let mut digests = Vec::with_capacity(inputs.len());
    for path in inputs {
        digests.push(Value::String(sha256_hex(&std::fs::read(path)?)));
        checkpoints.push(read_checkpoint(path)?);
    }
    if ctx.dry_run {
        log_json(
            "info",
            "dry-run: would average checkpoints",
            &[("count", serde_json::json!(checkpoints.len()))],
        );
        return Ok(());
    }
    let mut averaged = average_checkpoints(&checkpoints)?;
    averaged.provenance = base_provenance("avg-weights", config);
    averaged
        .provenance
        .insert("input_sha256".into(), Value::Array(digests));
    write_checkpoint(&averaged, out_path)?;
    log_json(
        "info",
        "avg-weights finished",
        &[
            ("inputs", serde_json::json!(inputs.len())),
            ("tensors", serde_json::json!(averaged.tensors.len())),
        ],
    );
    Ok(())
}

/// Composite loss of explicit components under the given gains.
pub fn cmd_loss(components: LossComponents, gains: GainCoefficients) -> Result<f64> {
    composite_loss(components, gains)
}
