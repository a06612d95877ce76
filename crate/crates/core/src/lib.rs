//! Model-agnostic curation toolkit for instance-segmentation datasets:
//! image enhancement, confidence-gated pseudo-labeling of an unlabeled
//! cross-task image set, dataset merging, evaluation (F1 and mAP@50), and
//! the training-side loss/checkpoint arithmetic. The network itself stays
//! behind a file-based inference-adapter protocol.

pub mod canon;
pub mod config;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod imaging;
pub mod metrics;
pub mod modelmath;
pub mod pipeline;
pub mod pseudolabel;

pub use error::{Error, Result};
