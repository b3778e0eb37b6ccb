use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

use super::{ModelConfig, ModelWeights};

pub const CHECKPOINT_VERSION: u64 = 1;

/// Provenance of a trained model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingMeta {
    pub epochs: usize,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
    pub dataset_seed: Option<u64>,
    pub train_seed: Option<u64>,
    pub init_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub weights: ModelWeights,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct TensorDoc {
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    format_version: u64,
    config: ModelConfig,
    tensors: BTreeMap<String, TensorDoc>,
    #[serde(default)]
    metadata: TrainingMeta,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<u64>,
}

pub fn checkpoint_to_json(ck: &Checkpoint) -> String {
    let tensors = ck
        .weights
        .names()
        .iter()
        .zip(ck.weights.tensors())
        .map(|(n, t)| {
            (
                n.clone(),
                TensorDoc {
                    shape: t.shape(),
                    data: t.data().to_vec(),
                },
            )
        })
        .collect();
    let doc = CheckpointDoc {
        format_version: CHECKPOINT_VERSION,
        config: ck.weights.config().clone(),
        tensors,
        metadata: ck.meta.clone(),
    };
    serde_json::to_string(&doc).expect("checkpoint serialization cannot fail")
}

pub fn checkpoint_from_json(text: &str) -> Result<Checkpoint> {
    let probe: VersionProbe = serde_json::from_str(text)?;
    match probe.format_version {
        Some(CHECKPOINT_VERSION) => {}
        Some(found) => {
            return Err(Error::Version {
                found,
                expected: CHECKPOINT_VERSION,
            })
        }
        None => return Err(Error::Parse("checkpoint has no format_version".into())),
    }
    let doc: CheckpointDoc = serde_json::from_str(text)?;
    let named = doc
        .tensors
        .into_iter()
        .map(|(name, t)| {
            let [r, c] = t.shape;
            Tensor::from_vec(r, c, t.data)
                .map(|t| (name.clone(), t))
                .map_err(|e| Error::Parse(format!("tensor {name}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let weights =
        ModelWeights::from_named(doc.config, named).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(Checkpoint {
        weights,
        meta: doc.metadata,
    })
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, checkpoint_to_json(ck))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    checkpoint_from_json(&std::fs::read_to_string(path)?)
}
