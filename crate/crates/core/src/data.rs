//! Datasets, CSV ingestion and train/valid/test splitters.

use std::path::Path;
use std::sync::Arc;

use fragnet_chem::fragment::Fragmenter;
use fragnet_chem::scaffold::{scaffold_key, scaffold_split_keys, SplitError};
use fragnet_chem::{parse_smiles, Molecule};
use fragnet_tensor::SplitMix64;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::features::FeatureConfig;
use crate::hiergraph::{build_hier_graphs, HierGraphs};
use crate::model::Task;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub smiles: String,
    pub targets: Vec<f64>,
    /// `false` marks a missing label. `None` means every label is present.
    pub mask: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub task: Task,
    pub target_names: Vec<String>,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_tasks(&self) -> usize {
        self.target_names.len()
    }

    pub fn smiles(&self) -> Vec<String> {
        self.records.iter().map(|r| r.smiles.clone()).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            task: self.task,
            target_names: self.target_names.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }
}

/// Reads a CSV with a header row. Rows whose SMILES fail to parse are
/// dropped with a logged reason. Regression rows with an empty target are
/// dropped too; classification rows keep missing labels masked.
pub fn load_csv(path: impl AsRef<Path>, smiles_col: &str, target_cols: &[&str], task: Task) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CoreError::MissingColumn(name.to_string()))
    };
    let smiles_idx = col(smiles_col)?;
    let target_idx = target_cols.iter().map(|c| col(c)).collect::<Result<Vec<_>>>()?;
    if target_idx.is_empty() {
        return Err(CoreError::Config("at least one target column is required".into()));
    }

    let mut records = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let smiles = row.get(smiles_idx).unwrap_or("").trim().to_string();
        if let Err(e) = parse_smiles(&smiles) {
            warn!("dropping row {} ({smiles:?}): {e}", line + 2);
            continue;
        }
        let mut targets = Vec::with_capacity(target_idx.len());
        let mut mask = Vec::with_capacity(target_idx.len());
        let mut bad = None;
        for (&k, name) in target_idx.iter().zip(target_cols) {
            let cell = row.get(k).unwrap_or("").trim();
            if cell.is_empty() {
                targets.push(0.0);
                mask.push(false);
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() && (task == Task::Regression || v == 0.0 || v == 1.0) => {
                    targets.push(v);
                    mask.push(true);
                }
                _ => {
                    bad = Some(format!("bad value {cell:?} in column {name:?}"));
                    break;
                }
            }
        }
        if let Some(reason) = bad {
            warn!("dropping row {} ({smiles:?}): {reason}", line + 2);
            continue;
        }
        let complete = mask.iter().all(|&m| m);
        if task == Task::Regression && !complete {
            warn!("dropping row {} ({smiles:?}): missing target", line + 2);
            continue;
        }
        if !mask.iter().any(|&m| m) {
            warn!("dropping row {} ({smiles:?}): no labels", line + 2);
            continue;
        }
        records.push(Record {
            smiles,
            targets,
            mask: (!complete).then_some(mask),
        });
    }
    if records.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    Ok(Dataset {
        name: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        task,
        target_names: target_cols.iter().map(|s| s.to_string()).collect(),
        records,
    })
}

/// A parsed and featurized molecule.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub mol: Molecule,
    pub graphs: HierGraphs,
}

pub fn prepare(smiles: &str, fragmenter: &dyn Fragmenter, features: &FeatureConfig) -> Result<Prepared> {
    let mol = parse_smiles(smiles)?;
    let decomp = fragmenter.decompose(&mol);
    let graphs = build_hier_graphs(&mol, &decomp, features);
    Ok(Prepared { mol, graphs })
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// A train/valid/test partitioning strategy over SMILES strings.
pub trait Splitter: Send + Sync {
    fn name(&self) -> &str;

    fn split(&self, smiles: &[String], fractions: [f64; 3], seed: u64) -> Result<Split>;
}

/// Groups molecules by Murcko scaffold so no scaffold spans two splits.
/// Deterministic; the seed is unused.
pub struct ScaffoldSplitter;

impl Splitter for ScaffoldSplitter {
    fn name(&self) -> &str {
        "scaffold"
    }

    fn split(&self, smiles: &[String], fractions: [f64; 3], _seed: u64) -> Result<Split> {
        let keys = smiles
            .iter()
            .map(|s| parse_smiles(s).map(|m| scaffold_key(&m)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let (train, valid, test) = scaffold_split_keys(&keys, (fractions[0], fractions[1], fractions[2]))?;
        Ok(Split { train, valid, test })
    }
}

/// Seeded uniform shuffle.
pub struct RandomSplitter;

impl Splitter for RandomSplitter {
    fn name(&self) -> &str {
        "random"
    }

    fn split(&self, smiles: &[String], fractions: [f64; 3], seed: u64) -> Result<Split> {
        let [ft, fv, fs] = fractions;
        let tuple = (ft, fv, fs);
        if !(ft > 0.0 && fv > 0.0 && fs > 0.0) || ((ft + fv + fs) - 1.0).abs() > 1e-9 {
            return Err(SplitError::InvalidFractions(tuple).into());
        }
        let n = smiles.len();
        let mut order: Vec<usize> = (0..n).collect();
        SplitMix64::new(seed).shuffle(&mut order);
        let n_train = (ft * n as f64).round() as usize;
        let n_valid = ((fv * n as f64).round() as usize).min(n - n_train.min(n));
        let n_train = n_train.min(n);
        let (train, rest) = order.split_at(n_train);
        let (valid, test) = rest.split_at(n_valid);
        if train.is_empty() || valid.is_empty() || test.is_empty() {
            return Err(SplitError::DatasetTooSmall {
                train: train.len(),
                valid: valid.len(),
                test: test.len(),
            }
            .into());
        }
        let sorted = |s: &[usize]| {
            let mut v = s.to_vec();
            v.sort_unstable();
            v
        };
        Ok(Split {
            train: sorted(train),
            valid: sorted(valid),
            test: sorted(test),
        })
    }
}

pub fn splitter_names() -> &'static [&'static str] {
    &["scaffold", "random"]
}

pub fn splitter_by_name(name: &str) -> Option<Arc<dyn Splitter>> {
    match name {
        "scaffold" => Some(Arc::new(ScaffoldSplitter)),
        "random" => Some(Arc::new(RandomSplitter)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub kind: String,
    pub fractions: [f64; 3],
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            kind: "scaffold".into(),
            fractions: [0.8, 0.1, 0.1],
        }
    }
}

impl SplitConfig {
    pub fn apply(&self, smiles: &[String], seed: u64) -> Result<Split> {
        let splitter = splitter_by_name(&self.kind).ok_or_else(|| {
            CoreError::Config(format!("unknown splitter {:?}; known: {:?}", self.kind, splitter_names()))
        })?;
        splitter.split(smiles, self.fractions, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| "C".repeat(i % 7 + 1)).collect()
    }

    #[test]
    fn random_split_partitions() {
        let s = RandomSplitter.split(&names(50), [0.8, 0.1, 0.1], 4).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (40, 5, 5));
        let mut all: Vec<usize> = s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert_eq!(s, RandomSplitter.split(&names(50), [0.8, 0.1, 0.1], 4).unwrap());
    }

    #[test]
    fn bad_fractions_rejected() {
        assert!(RandomSplitter.split(&names(10), [0.5, 0.1, 0.1], 0).is_err());
        assert!(splitter_by_name("cluster").is_none());
    }
}
