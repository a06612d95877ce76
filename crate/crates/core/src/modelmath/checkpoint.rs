//! Checkpoint weight averaging and its JSON file format.
//!
//! A checkpoint is a named map of shaped tensors, stored as a canonical
//! JSON document (names sorted, full-precision floats) so averages are
//! diffable and reproducible.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Run metadata attached by the CLI; not part of the averaged payload.
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub provenance: serde_json::Map<String, serde_json::Value>,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn validate(&self) -> Result<()> {
        for (name, tensor) in &self.tensors {
            let expected: usize = tensor.shape.iter().product();
            if tensor.data.len() != expected {
                return Err(Error::contract(format!(
                    "tensor `{name}`: data length {} does not match shape {:?}",
                    tensor.data.len(),
                    tensor.shape
                )));
            }
            if tensor.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::contract(format!(
                    "tensor `{name}` contains non-finite values"
                )));
            }
        }
        Ok(())
    }
}

/// Element-wise arithmetic mean of checkpoints sharing identical tensor
/// names and shapes.
///
/// Per-element addends are sorted by value before summation, so the result
/// is exactly invariant under permutation of the input list.
pub fn average_checkpoints(checkpoints: &[Checkpoint]) -> Result<Checkpoint> {
    let first = checkpoints
        .first()
        .ok_or_else(|| Error::contract("cannot average an empty checkpoint list"))?;
    for ckpt in checkpoints {
        ckpt.validate()?;
        if ckpt.tensors.len() != first.tensors.len()
            || !ckpt.tensors.keys().eq(first.tensors.keys())
        {
            let missing = first
                .tensors
                .keys()
                .find(|k| !ckpt.tensors.contains_key(*k))
                .or_else(|| ckpt.tensors.keys().find(|k| !first.tensors.contains_key(*k)))
                .cloned()
                .unwrap_or_default();
            return Err(Error::contract(format!(
                "checkpoints disagree on tensor `{missing}`"
            )));
        }
        for (name, tensor) in &ckpt.tensors {
            if tensor.shape != first.tensors[name].shape {
                return Err(Error::contract(format!(
                    "tensor `{name}`: shape {:?} does not match {:?}",
                    tensor.shape, first.tensors[name].shape
                )));
            }
        }
    }

    let n = checkpoints.len() as f64;
    let mut tensors = BTreeMap::new();
    let mut addends = vec![0.0f64; checkpoints.len()];
    for (name, reference) in &first.tensors {
        let mut data = Vec::with_capacity(reference.data.len());
        for i in 0..reference.data.len() {
            for (k, ckpt) in checkpoints.iter().enumerate() {
                addends[k] = ckpt.tensors[name].data[i];
            }
            // The mean of identical values is that value; taking this exit
            // exactly is required because sum-then-divide rounds (e.g.
            // 5x/5 != x for ~14% of mantissas).
            if addends.iter().all(|a| a.to_bits() == addends[0].to_bits()) {
                data.push(addends[0]);
                continue;
            }
            addends.sort_by(f64::total_cmp);
            data.push(addends.iter().sum::<f64>() / n);
        }
        tensors.insert(
            name.clone(),
            Tensor {
                shape: reference.shape.clone(),
                data,
            },
        );
    }
    Ok(Checkpoint {
        provenance: Default::default(),
        tensors,
    })
}

/// Serialize with full float precision; BTreeMap keeps names sorted.
pub fn write_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    checkpoint.validate()?;
    let mut text =
        serde_json::to_string_pretty(checkpoint).expect("checkpoint serialization cannot fail");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)?;
    let checkpoint: Checkpoint =
        serde_json::from_str(&text).map_err(|e| Error::from_json(&e, &text))?;
    checkpoint.validate()?;
    Ok(checkpoint)
}
