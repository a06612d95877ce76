//! Python bindings for the segcurate toolkit: datasets, image kernels,
//! pseudo-label filtering and merging, evaluation, and the loss/checkpoint
//! arithmetic. Built as the `_segcurate` extension module; see
//! `python/smoke_test.py` for usage.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use segcurate::dataset as ds;
use segcurate::error::Error;
use segcurate::imaging as img;
use segcurate::metrics;
use segcurate::modelmath as mm;
use segcurate::pseudolabel as pl;

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Io(_) | Error::Image(_) | Error::Adapter { .. } => {
            PyRuntimeError::new_err(err.to_string())
        }
        _ => PyValueError::new_err(err.to_string()),
    }
}

/// COCO-style instance-segmentation dataset.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Dataset {
    inner: ds::Dataset,
}

#[pymethods]
impl Dataset {
    /// Parse the canonical JSON document format.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Dataset {
            inner: ds::parse_dataset(text).map_err(to_py_err)?,
        })
    }

    /// Canonical serialization (sorted ids, 6-decimal coordinates).
    fn to_json(&self) -> String {
        ds::write_dataset(&self.inner)
    }

    /// SHA-256 of the canonical serialization.
    fn digest(&self) -> String {
        self.inner.digest()
    }

    #[getter]
    fn num_images(&self) -> usize {
        self.inner.images.len()
    }

    #[getter]
    fn num_annotations(&self) -> usize {
        self.inner.annotations.len()
    }

    #[getter]
    fn num_categories(&self) -> usize {
        self.inner.categories.len()
    }

    /// Merge with a pseudo-labeled dataset (categories must match).
    fn merge(&self, pseudo: &Dataset) -> PyResult<Dataset> {
        Ok(Dataset {
            inner: pl::merge_datasets(&self.inner, &pseudo.inner).map_err(to_py_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(images={}, annotations={}, categories={})",
            self.inner.images.len(),
            self.inner.annotations.len(),
            self.inner.categories.len()
        )
    }
}

/// 8-bit raster image (grayscale or interleaved RGB).
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Image {
    inner: img::ImageBuffer,
}

impl Image {
    fn wrap(inner: img::ImageBuffer) -> Self {
        Image { inner }
    }
}

#[pymethods]
impl Image {
    #[new]
    fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> PyResult<Self> {
        Ok(Image::wrap(
            img::ImageBuffer::new(width, height, channels, data).map_err(to_py_err)?,
        ))
    }

    #[staticmethod]
    fn constant(width: u32, height: u32, channels: u8, value: u8) -> PyResult<Self> {
        Ok(Image::wrap(
            img::ImageBuffer::constant(width, height, channels, value).map_err(to_py_err)?,
        ))
    }

    #[getter]
    fn width(&self) -> u32 {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> u32 {
        self.inner.height()
    }

    #[getter]
    fn channels(&self) -> u8 {
        self.inner.channels()
    }

    /// Raw row-major samples.
    fn data<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.inner.data())
    }

    #[pyo3(signature = (clip_limit=2.0, tiles=(8, 8)))]
    fn clahe(&self, clip_limit: f64, tiles: (u32, u32)) -> PyResult<Self> {
        Ok(Image::wrap(
            img::clahe(&self.inner, clip_limit, tiles).map_err(to_py_err)?,
        ))
    }

    #[pyo3(signature = (kernel=5))]
    fn median_blur(&self, kernel: u32) -> PyResult<Self> {
        Ok(Image::wrap(
            img::median_blur(&self.inner, kernel).map_err(to_py_err)?,
        ))
    }

    fn gaussian_blur(&self, sigma: f64) -> PyResult<Self> {
        Ok(Image::wrap(
            img::gaussian_blur(&self.inner, sigma).map_err(to_py_err)?,
        ))
    }

    #[pyo3(signature = (sigma=2.0, amount=1.0))]
    fn unsharp_mask(&self, sigma: f64, amount: f64) -> PyResult<Self> {
        Ok(Image::wrap(
            img::unsharp_mask(&self.inner, sigma, amount).map_err(to_py_err)?,
        ))
    }

    /// Apply explicit HSV factors (hue shift fraction, saturation gain,
    /// value gain) to a 3-channel image.
    fn apply_hsv(&self, r_h: f64, r_s: f64, r_v: f64) -> PyResult<Self> {
        Ok(Image::wrap(
            img::apply_hsv_factors(&self.inner, r_h, r_s, r_v).map_err(to_py_err)?,
        ))
    }

    /// Seeded HSV jitter with gains in [0, 1].
    #[pyo3(signature = (hue_gain=0.0, sat_gain=0.0, val_gain=0.0, seed=0))]
    fn hsv_jitter(&self, hue_gain: f64, sat_gain: f64, val_gain: f64, seed: u64) -> PyResult<Self> {
        let params = img::JitterParams {
            hue_gain,
            sat_gain,
            val_gain,
            seed,
        };
        Ok(Image::wrap(
            img::hsv_jitter(&self.inner, &params).map_err(to_py_err)?,
        ))
    }

    /// CLAHE then median blur.
    #[pyo3(signature = (clip_limit=2.0, tiles=(8, 8), median_kernel=5))]
    fn enhance_soft(&self, clip_limit: f64, tiles: (u32, u32), median_kernel: u32) -> PyResult<Self> {
        let params = img::EnhanceParams {
            clahe_clip_limit: clip_limit,
            clahe_tiles: tiles,
            median_kernel,
            ..img::EnhanceParams::default()
        };
        Ok(Image::wrap(
            img::enhance_soft(&self.inner, &params).map_err(to_py_err)?,
        ))
    }

    /// Unsharp mask then CLAHE.
    #[pyo3(signature = (sigma=2.0, amount=1.0, clip_limit=2.0, tiles=(8, 8)))]
    fn enhance_final(
        &self,
        sigma: f64,
        amount: f64,
        clip_limit: f64,
        tiles: (u32, u32),
    ) -> PyResult<Self> {
        let params = img::EnhanceParams {
            unsharp_sigma: sigma,
            unsharp_amount: amount,
            clahe_clip_limit: clip_limit,
            clahe_tiles: tiles,
            ..img::EnhanceParams::default()
        };
        Ok(Image::wrap(
            img::enhance_final(&self.inner, &params).map_err(to_py_err)?,
        ))
    }

    fn __repr__(&self) -> String {
        format!(
            "Image({}x{}, channels={})",
            self.inner.width(),
            self.inner.height(),
            self.inner.channels()
        )
    }
}

/// Named map of shaped tensors.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Checkpoint {
    inner: mm::Checkpoint,
}

#[pymethods]
impl Checkpoint {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: mm::Checkpoint =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(to_py_err)?;
        Ok(Checkpoint { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn tensor_names(&self) -> Vec<String> {
        self.inner.tensors.keys().cloned().collect()
    }

    /// (shape, flat data) of one tensor.
    fn tensor(&self, name: &str) -> PyResult<(Vec<usize>, Vec<f64>)> {
        let t = self
            .inner
            .tensors
            .get(name)
            .ok_or_else(|| PyValueError::new_err(format!("no tensor named `{name}`")))?;
        Ok((t.shape.clone(), t.data.clone()))
    }

    /// Element-wise mean of several checkpoints.
    #[staticmethod]
    fn average(checkpoints: Vec<Checkpoint>) -> PyResult<Checkpoint> {
        let inner: Vec<mm::Checkpoint> = checkpoints.into_iter().map(|c| c.inner).collect();
        Ok(Checkpoint {
            inner: mm::average_checkpoints(&inner).map_err(to_py_err)?,
        })
    }
}

/// Absolute shoelace area of a flat [x1,y1,...] polygon.
#[pyfunction]
fn polygon_area(poly: Vec<f64>) -> PyResult<f64> {
    segcurate::geometry::polygon_area(&poly).map_err(to_py_err)
}

/// Rasterize polygons onto a width x height grid; returns the mask as 0/1
/// bytes, row-major.
#[pyfunction]
fn rasterize_mask<'py>(
    py: Python<'py>,
    polygons: Vec<Vec<f64>>,
    width: u32,
    height: u32,
) -> PyResult<Bound<'py, PyBytes>> {
    let mask = segcurate::geometry::rasterize(&polygons, width, height).map_err(to_py_err)?;
    let mut bytes = Vec::with_capacity((width * height) as usize);
    for row in 0..height {
        for col in 0..width {
            bytes.push(mask.get(row, col) as u8);
        }
    }
    Ok(PyBytes::new(py, &bytes))
}

/// IoU of two rasterized polygon sets.
#[pyfunction]
fn mask_iou(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, width: u32, height: u32) -> PyResult<f64> {
    metrics::mask_iou(&a, &b, width, height).map_err(to_py_err)
}

/// Filter JSON-Lines predictions by confidence (score >= tau), preserving
/// order; returns the surviving lines.
#[pyfunction]
#[pyo3(signature = (jsonl, tau=0.5))]
fn filter_predictions_jsonl(jsonl: &str, tau: f64) -> PyResult<String> {
    let mut records = Vec::new();
    for (lineno, line) in jsonl.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: pl::PredictionRecord = serde_json::from_str(line)
            .map_err(|e| PyValueError::new_err(format!("line {}: {e}", lineno + 1)))?;
        records.push(record);
    }
    let kept =
        pl::filter_predictions(&records, pl::ThresholdPolicy { tau }).map_err(to_py_err)?;
    let mut out = String::new();
    for record in kept {
        out.push_str(&serde_json::to_string(&record).expect("record serialization"));
        out.push('\n');
    }
    Ok(out)
}

/// Evaluate predictions against ground truth; returns the canonical JSON
/// report (per-class tp/fp/fn, precision/recall/F1, AP@50, micro/macro F1,
/// mAP@50).
#[pyfunction]
#[pyo3(signature = (predictions, ground_truth, iou_threshold=0.5))]
fn evaluate(predictions: &Dataset, ground_truth: &Dataset, iou_threshold: f64) -> PyResult<String> {
    let report = metrics::evaluate(&predictions.inner, &ground_truth.inner, iou_threshold)
        .map_err(to_py_err)?;
    Ok(report.to_canonical_json())
}

/// Binary cross-entropy of probability `p` against a 0/1 label.
#[pyfunction]
fn bce(p: f64, y: f64) -> PyResult<f64> {
    mm::bce(p, y).map_err(to_py_err)
}

/// Distributional focal loss of a bin distribution against a continuous
/// target in [0, len(dist) - 1].
#[pyfunction]
fn dfl(dist: Vec<f64>, target: f64) -> PyResult<f64> {
    mm::dfl(&dist, target).map_err(to_py_err)
}

/// 1 - IoU of two [x, y, w, h] boxes.
#[pyfunction]
fn iou_loss(box_a: [f64; 4], box_b: [f64; 4]) -> PyResult<f64> {
    mm::iou_loss(box_a, box_b).map_err(to_py_err)
}

/// Weighted composite loss with the tuned default gains.
#[pyfunction]
#[pyo3(signature = (l_c, l_f, l_s, l_b, lambda_b=7.5, lambda_c=0.5, lambda_s=0.468, lambda_f=2.0))]
#[allow(clippy::too_many_arguments)]
fn composite_loss(
    l_c: f64,
    l_f: f64,
    l_s: f64,
    l_b: f64,
    lambda_b: f64,
    lambda_c: f64,
    lambda_s: f64,
    lambda_f: f64,
) -> PyResult<f64> {
    mm::composite_loss(
        mm::LossComponents { l_c, l_f, l_s, l_b },
        mm::GainCoefficients {
            lambda_b,
            lambda_c,
            lambda_s,
            lambda_f,
        },
    )
    .map_err(to_py_err)
}

#[pymodule]
fn _segcurate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Image>()?;
    m.add_class::<Checkpoint>()?;
    m.add_function(wrap_pyfunction!(polygon_area, m)?)?;
    m.add_function(wrap_pyfunction!(rasterize_mask, m)?)?;
    m.add_function(wrap_pyfunction!(mask_iou, m)?)?;
    m.add_function(wrap_pyfunction!(filter_predictions_jsonl, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(bce, m)?)?;
    m.add_function(wrap_pyfunction!(dfl, m)?)?;
    m.add_function(wrap_pyfunction!(iou_loss, m)?)?;
    m.add_function(wrap_pyfunction!(composite_loss, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
