//! External inference adapter protocol.
//!
//! The network stays out of process. In `file` mode, predictions are read
//! from an existing JSON Lines file. In `exec` mode the adapter command is
//! spawned as `<command...> <manifest_path> <output_path>`: it reads the
//! image manifest, writes predictions to the output path, and exits 0.
//! Each predictions line is an object with `image_id`, `category_id`,
//! `segmentation` (list of flat polygon arrays), and `score`.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dataset::ImageRecord;
use crate::error::{Error, Result};
use crate::pseudolabel::PredictionRecord;

fn default_timeout_secs() -> u64 {
    300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum AdapterSpec {
    /// Read a predictions file produced out of band.
    File { path: PathBuf },
    /// Spawn `command... <manifest> <output>` and read its output file.
    Exec {
        command: Vec<String>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
}

impl AdapterSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            AdapterSpec::File { .. } => Ok(()),
            AdapterSpec::Exec { command, timeout_secs } => {
                if command.is_empty() {
                    return Err(Error::contract("adapter command must not be empty"));
                }
                if *timeout_secs == 0 {
                    return Err(Error::contract("adapter timeout must be positive"));
                }
                Ok(())
            }
        }
    }

    pub fn mode_name(&self) -> &'static str {
        match self {
            AdapterSpec::File { .. } => "file",
            AdapterSpec::Exec { .. } => "exec",
        }
    }
}

/// Write the image manifest consumed by exec-mode adapters: a JSON list of
/// `{id, file_name, width, height}`, sorted by id.
pub fn write_manifest(images: &[ImageRecord], path: &Path) -> Result<()> {
    let mut sorted: Vec<&ImageRecord> = images.iter().collect();
    sorted.sort_by_key(|i| i.id);
    let entries: Vec<serde_json::Value> = sorted
        .iter()
        .map(|img| {
            serde_json::json!({
                "id": img.id,
                "file_name": img.file_name,
                "width": img.width,
                "height": img.height,
            })
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&entries).expect("manifest serialization");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Parse the image manifest format written by [`write_manifest`].
pub fn read_manifest(path: &Path) -> Result<Vec<ImageRecord>> {
    let text = std::fs::read_to_string(path)?;
    let entries: Vec<serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| Error::from_json(&e, &text))?;
    let mut images = Vec::with_capacity(entries.len());
    for (i, v) in entries.iter().enumerate() {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::validation(format!("manifest entry {i}: not an object")))?;
        let get = |key: &str| {
            obj.get(key)
                .and_then(serde_json::Value::as_u64)
                .ok_or_else(|| Error::validation(format!("manifest entry {i}: bad `{key}`")))
        };
        images.push(ImageRecord {
            id: get("id")?,
            file_name: obj
                .get("file_name")
                .and_then(serde_json::Value::as_str)
                .ok_or_else(|| Error::validation(format!("manifest entry {i}: bad `file_name`")))?
                .to_string(),
            width: get("width")? as u32,
            height: get("height")? as u32,
        });
    }
    Ok(images)
}

#[derive(Deserialize)]
struct PredictionLine {
    image_id: u64,
    category_id: u64,
    segmentation: Vec<Vec<f64>>,
    score: f64,
}

fn parse_predictions(text: &str, images: &[ImageRecord]) -> Result<Vec<PredictionRecord>> {
    let image_by_id: std::collections::HashMap<u64, &ImageRecord> =
        images.iter().map(|i| (i.id, i)).collect();
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: PredictionLine = serde_json::from_str(line).map_err(|e| {
            Error::validation(format!("predictions line {}: {e}", lineno + 1))
        })?;
        let image = *image_by_id.get(&parsed.image_id).ok_or_else(|| {
            Error::referential(format!(
                "predictions line {}: image_id {} does not resolve",
                lineno + 1,
                parsed.image_id
            ))
        })?;
        if !(0.0..=1.0).contains(&parsed.score) {
            return Err(Error::validation(format!(
                "predictions line {}: score {} outside [0, 1]",
                lineno + 1,
                parsed.score
            )));
        }
        for poly in &parsed.segmentation {
            if !poly.len().is_multiple_of(2) || poly.len() < 6 {
                return Err(Error::validation(format!(
                    "predictions line {}: polygon must have an even count of >= 6 coordinates",
                    lineno + 1
                )));
            }
            for pair in poly.chunks_exact(2) {
                if pair[0] < 0.0
                    || pair[0] > image.width as f64
                    || pair[1] < 0.0
                    || pair[1] > image.height as f64
                {
                    return Err(Error::validation(format!(
                        "predictions line {}: coordinate ({}, {}) outside image {} bounds",
                        lineno + 1,
                        pair[0],
                        pair[1],
                        image.id
                    )));
                }
            }
        }
        records.push(PredictionRecord {
            image_id: parsed.image_id,
            category_id: parsed.category_id,
            segmentation: parsed.segmentation,
            score: parsed.score,
        });
    }
    Ok(records)
}

fn run_exec_adapter(
    command: &[String],
    timeout: Duration,
    manifest_path: &Path,
    output_path: &Path,
) -> Result<()> {
    let mut cmd = Command::new(&command[0]);
    cmd.args(&command[1..])
        .arg(manifest_path)
        .arg(output_path)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    let mut child = cmd
        .spawn()
        .map_err(|e| Error::adapter(format!("failed to spawn `{}`: {e}", command[0]), ""))?;

    let started = Instant::now();
    let status = loop {
        match child.try_wait()? {
            Some(status) => break status,
            None => {
                if started.elapsed() > timeout {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::adapter(
                        format!(
                            "adapter `{}` timed out after {} s",
                            command[0],
                            timeout.as_secs()
                        ),
                        collect_output(&mut child),
                    ));
                }
                std::thread::sleep(Duration::from_millis(20));
            }
        }
    };

    if !status.success() {
        return Err(Error::adapter(
            format!("adapter `{}` exited with {status}", command[0]),
            collect_output(&mut child),
        ));
    }
    Ok(())
}

fn collect_output(child: &mut std::process::Child) -> String {
    let mut diagnostics = String::new();
    if let Some(out) = child.stdout.as_mut() {
        let mut s = String::new();
        let _ = out.read_to_string(&mut s);
        if !s.trim().is_empty() {
            diagnostics.push_str("stdout:\n");
            diagnostics.push_str(s.trim_end());
            diagnostics.push('\n');
        }
    }
    if let Some(err) = child.stderr.as_mut() {
        let mut s = String::new();
        let _ = err.read_to_string(&mut s);
        if !s.trim().is_empty() {
            diagnostics.push_str("stderr:\n");
            diagnostics.push_str(s.trim_end());
            diagnostics.push('\n');
        }
    }
    diagnostics
}

/// Obtain predictions for `images` through the configured adapter and
/// validate them against the image set.
pub fn run_inference_adapter(
    spec: &AdapterSpec,
    images: &[ImageRecord],
) -> Result<Vec<PredictionRecord>> {
    spec.validate()?;
    match spec {
        AdapterSpec::File { path } => {
            let text = std::fs::read_to_string(path)?;
            parse_predictions(&text, images)
        }
        AdapterSpec::Exec { command, timeout_secs } => {
            let workdir = tempfile_dir()?;
            let manifest_path = workdir.join("manifest.json");
            let output_path = workdir.join("predictions.jsonl");
            write_manifest(images, &manifest_path)?;
            let result = run_exec_adapter(
                command,
                Duration::from_secs(*timeout_secs),
                &manifest_path,
                &output_path,
            )
            .and_then(|()| {
                let text = std::fs::read_to_string(&output_path).map_err(|e| {
                    Error::adapter(
                        format!("adapter did not produce {}: {e}", output_path.display()),
                        "",
                    )
                })?;
                parse_predictions(&text, images)
            });
            let _ = std::fs::remove_dir_all(&workdir);
            result
        }
    }
}

fn tempfile_dir() -> Result<PathBuf> {
    let base = std::env::temp_dir();
    let pid = std::process::id();
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    let dir = base.join(format!("segcurate-adapter-{pid}-{nanos}"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(n: u64) -> Vec<ImageRecord> {
        (1..=n)
            .map(|id| ImageRecord {
                id,
                file_name: format!("img_{id}.png"),
                width: 16,
                height: 16,
            })
            .collect()
    }

    #[test]
    fn file_mode_empty_file_yields_no_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.jsonl");
        std::fs::write(&path, "").unwrap();
        let spec = AdapterSpec::File { path };
        assert!(run_inference_adapter(&spec, &images(2)).unwrap().is_empty());
    }

    #[test]
    fn file_mode_parses_well_formed_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"image_id\":1,\"category_id\":1,\"segmentation\":[[0,0,4,0,4,4,0,4]],\"score\":0.9}\n",
                "{\"image_id\":2,\"category_id\":1,\"segmentation\":[[1,1,5,1,5,5,1,5]],\"score\":0.6}\n",
                "{\"image_id\":2,\"category_id\":2,\"segmentation\":[[2,2,6,2,6,6,2,6]],\"score\":0.4}\n",
            ),
        )
        .unwrap();
        let spec = AdapterSpec::File { path };
        let preds = run_inference_adapter(&spec, &images(2)).unwrap();
        assert_eq!(preds.len(), 3);
        assert_eq!(preds[0].image_id, 1);
        assert_eq!(preds[2].score, 0.4);
    }

    #[test]
    fn file_mode_rejects_unknown_image_and_bad_score() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.jsonl");
        std::fs::write(
            &path,
            "{\"image_id\":9,\"category_id\":1,\"segmentation\":[[0,0,4,0,4,4,0,4]],\"score\":0.9}\n",
        )
        .unwrap();
        let spec = AdapterSpec::File { path: path.clone() };
        assert!(matches!(
            run_inference_adapter(&spec, &images(2)).unwrap_err(),
            Error::Referential(_)
        ));

        std::fs::write(
            &path,
            "{\"image_id\":1,\"category_id\":1,\"segmentation\":[[0,0,4,0,4,4,0,4]],\"score\":1.5}\n",
        )
        .unwrap();
        assert!(matches!(
            run_inference_adapter(&spec, &images(2)).unwrap_err(),
            Error::Validation(_)
        ));
    }

    #[test]
    fn exec_mode_stub_round_trips_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let fixture = dir.path().join("fixture.jsonl");
        std::fs::write(
            &fixture,
            "{\"image_id\":1,\"category_id\":1,\"segmentation\":[[0,0,8,0,8,8,0,8]],\"score\":0.9}\n",
        )
        .unwrap();
        let spec = AdapterSpec::Exec {
            command: vec![
                "/bin/sh".into(),
                "-c".into(),
                format!("cp {} \"$2\"", fixture.display()),
                "stub".into(),
            ],
            timeout_secs: 30,
        };
        let preds = run_inference_adapter(&spec, &images(1)).unwrap();
        assert_eq!(preds.len(), 1);
        assert_eq!(preds[0].segmentation[0], vec![0.0, 0.0, 8.0, 0.0, 8.0, 8.0, 0.0, 8.0]);
        assert_eq!(preds[0].score, 0.9);
    }

    #[test]
    fn exec_mode_failure_carries_diagnostics() {
        let spec = AdapterSpec::Exec {
            command: vec![
                "/bin/sh".into(),
                "-c".into(),
                "echo boom >&2; exit 3".into(),
                "stub".into(),
            ],
            timeout_secs: 30,
        };
        let err = run_inference_adapter(&spec, &images(1)).unwrap_err();
        match err {
            Error::Adapter { message, diagnostics } => {
                assert!(message.contains("exit"), "{message}");
                assert!(diagnostics.contains("boom"), "{diagnostics}");
            }
            other => panic!("expected adapter error, got {other:?}"),
        }
    }

    #[test]
    fn exec_mode_timeout_is_reported() {
        let spec = AdapterSpec::Exec {
            command: vec!["/bin/sh".into(), "-c".into(), "sleep 5".into(), "stub".into()],
            timeout_secs: 1,
        };
        // the stub ignores the manifest/output arguments and never writes
        // the output file, so the timeout fires first.
        let err = run_inference_adapter(&spec, &images(1)).unwrap_err();
        assert!(err.to_string().contains("timed out"), "{err}");
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let imgs = images(3);
        write_manifest(&imgs, &path).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), imgs);
    }
}
