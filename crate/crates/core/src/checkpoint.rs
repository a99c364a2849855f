//! Trained model persistence and inference.
//!
//! A checkpoint is one JSON document. Weights are base64 strings of
//! little-endian f64 values so they survive the round trip bit for bit.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use fragnet_chem::fragment::{fragmenter_by_name, fragmenter_names, Fragmenter};
use fragnet_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::data::{prepare, Prepared, Record};
use crate::error::{CoreError, Result};
use crate::hiergraph::HierGraphs;
use crate::model::{forward, param_specs, ForwardTrace, FragNetParams, ModelConfig, Task};

pub const FORMAT: &str = "fragnet-checkpoint";
pub const VERSION: u32 = 1;

/// Per-task z-score parameters. Classification tasks use the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn identity(n_tasks: usize) -> Self {
        Self {
            mean: vec![0.0; n_tasks],
            std: vec![1.0; n_tasks],
        }
    }

    /// Fits on the labelled entries of `records`. A constant task gets std 1.
    pub fn fit(records: &[&Record], n_tasks: usize) -> Self {
        let mut mean = vec![0.0; n_tasks];
        let mut std = vec![1.0; n_tasks];
        for k in 0..n_tasks {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.mask.as_ref().map_or(true, |m| m[k]))
                .map(|r| r.targets[k])
                .collect();
            if values.is_empty() {
                continue;
            }
            let n = values.len() as f64;
            let m = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean[k] = m;
            if var > 0.0 {
                std[k] = var.sqrt();
            }
        }
        Self { mean, std }
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        y.iter().enumerate().map(|(k, v)| (v - self.mean[k]) / self.std[k]).collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter().enumerate().map(|(k, v)| v * self.std[k] + self.mean[k]).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingMetadata {
    pub dataset: String,
    pub target_names: Vec<String>,
    pub seed: u64,
    pub split: String,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub metrics: BTreeMap<String, f64>,
}

pub struct Checkpoint {
    pub params: FragNetParams,
    pub standardization: Standardization,
    pub metadata: TrainingMetadata,
    fragmenter: Arc<dyn Fragmenter>,
}

impl fmt::Debug for Checkpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Checkpoint")
            .field("config", &self.params.config)
            .field("standardization", &self.standardization)
            .field("metadata", &self.metadata)
            .finish_non_exhaustive()
    }
}

impl Clone for Checkpoint {
    fn clone(&self) -> Self {
        Self {
            params: self.params.clone(),
            standardization: self.standardization.clone(),
            metadata: self.metadata.clone(),
            fragmenter: Arc::clone(&self.fragmenter),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ParamDoc {
    name: String,
    shape: [usize; 2],
    data: String,
}

#[derive(Serialize, Deserialize)]
struct Doc {
    format: String,
    version: u32,
    config: ModelConfig,
    standardization: Standardization,
    params: Vec<ParamDoc>,
    metadata: TrainingMetadata,
}

fn encode(t: &Tensor) -> String {
    let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    B64.encode(bytes)
}

fn decode(name: &str, rows: usize, cols: usize, text: &str) -> Result<Tensor> {
    let bytes = B64
        .decode(text)
        .map_err(|e| CoreError::Checkpoint(format!("{name}: {e}")))?;
    if bytes.len() != rows * cols * 8 {
        return Err(CoreError::Checkpoint(format!(
            "{name}: {} bytes for a {rows}x{cols} tensor",
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Tensor::matrix(rows, cols, data)?)
}

pub fn resolve_fragmenter(name: &str) -> Result<Arc<dyn Fragmenter>> {
    fragmenter_by_name(name)
        .ok_or_else(|| CoreError::Config(format!("unknown fragmenter {name:?}; known: {:?}", fragmenter_names())))
}

impl Checkpoint {
    pub fn new(params: FragNetParams, standardization: Standardization, metadata: TrainingMetadata) -> Result<Self> {
        let n = params.config.n_tasks;
        if standardization.mean.len() != n || standardization.std.len() != n {
            return Err(CoreError::Checkpoint(format!(
                "standardization covers {} tasks, model has {n}",
                standardization.mean.len()
            )));
        }
        let fragmenter = resolve_fragmenter(&params.config.fragmenter)?;
        Ok(Self {
            params,
            standardization,
            metadata,
            fragmenter,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    pub fn task(&self) -> Task {
        self.params.config.task
    }

    pub fn fragmenter(&self) -> &dyn Fragmenter {
        self.fragmenter.as_ref()
    }

    pub fn to_json(&self) -> Result<String> {
        let specs = param_specs(&self.params.config);
        let doc = Doc {
            format: FORMAT.into(),
            version: VERSION,
            config: self.params.config.clone(),
            standardization: self.standardization.clone(),
            params: specs
                .iter()
                .zip(&self.params.tensors)
                .map(|(s, t)| ParamDoc {
                    name: s.name.clone(),
                    shape: [s.rows, s.cols],
                    data: encode(t),
                })
                .collect(),
            metadata: self.metadata.clone(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| CoreError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Doc = serde_json::from_str(text).map_err(|e| CoreError::Checkpoint(e.to_string()))?;
        if doc.format != FORMAT {
            return Err(CoreError::Checkpoint(format!("unexpected format tag {:?}", doc.format)));
        }
        if doc.version != VERSION {
            return Err(CoreError::Checkpoint(format!("unsupported version {}", doc.version)));
        }
        let specs = param_specs(&doc.config);
        if specs.len() != doc.params.len() {
            return Err(CoreError::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                specs.len(),
                doc.params.len()
            )));
        }
        let mut tensors = Vec::with_capacity(specs.len());
        for (s, p) in specs.iter().zip(&doc.params) {
            if p.name != s.name || p.shape != [s.rows, s.cols] {
                return Err(CoreError::Checkpoint(format!(
                    "parameter {:?} {:?} does not match expected {:?} {}x{}",
                    p.name, p.shape, s.name, s.rows, s.cols
                )));
            }
            tensors.push(decode(&p.name, s.rows, s.cols, &p.data)?);
        }
        let params = FragNetParams::from_tensors(doc.config, tensors)?;
        Self::new(params, doc.standardization, doc.metadata)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn prepare(&self, smiles: &str) -> Result<Prepared> {
        prepare(smiles, self.fragmenter(), &self.params.config.features)
    }

    pub fn trace(&self, graphs: &HierGraphs) -> Result<ForwardTrace> {
        forward(graphs, &self.params)
    }

    /// Converts raw model output to target units (logits stay logits).
    pub fn output_units(&self, raw: &[f64]) -> Vec<f64> {
        match self.task() {
            Task::Regression => self.standardization.invert(raw),
            Task::BinaryMultitask => raw.to_vec(),
        }
    }

    pub fn predict_graphs(&self, graphs: &HierGraphs) -> Result<Vec<f64>> {
        Ok(self.output_units(&self.trace(graphs)?.prediction))
    }

    /// Regression values in target units, or one logit per task.
    pub fn predict(&self, smiles: &str) -> Result<Vec<f64>> {
        self.predict_graphs(&self.prepare(smiles)?.graphs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checkpoint() -> Checkpoint {
        let cfg = ModelConfig {
            hidden_dim: 6,
            heads: 2,
            ..ModelConfig::default()
        };
        let params = FragNetParams::init(&cfg, 9).unwrap();
        Checkpoint::new(
            params,
            Standardization {
                mean: vec![-3.0],
                std: vec![2.0],
            },
            TrainingMetadata::default(),
        )
        .unwrap()
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let c = checkpoint();
        let a = c.to_json().unwrap();
        let back = Checkpoint::from_json(&a).unwrap();
        assert_eq!(back.params, c.params);
        assert_eq!(back.to_json().unwrap(), a);
    }

    #[test]
    fn corrupted_weights_are_rejected() {
        let text = checkpoint().to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let mut bad = v.clone();
        bad["params"][0]["data"] = "AAAA".into();
        assert!(Checkpoint::from_json(&bad.to_string()).is_err());
        let mut bad = v;
        bad["version"] = 7.into();
        assert!(Checkpoint::from_json(&bad.to_string()).is_err());
    }

    #[test]
    fn standardization_inverts() {
        let s = Standardization {
            mean: vec![1.5, -2.0],
            std: vec![0.3, 4.0],
        };
        let y = [0.25, 7.0];
        let back = s.invert(&s.apply(&y));
        for (a, b) in back.iter().zip(y) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
