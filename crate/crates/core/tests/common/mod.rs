#![allow(dead_code)]

use std::path::PathBuf;

use fragnet_chem::fragment::fragment_brics;
use fragnet_chem::{parse_smiles, Molecule};
use fragnet_core::checkpoint::{Standardization, TrainingMetadata};
use fragnet_core::{build_hier_graphs, load_csv, Checkpoint, Dataset, FeatureConfig, FragNetParams, HierGraphs, ModelConfig, Task};

pub const ESOL_TARGET: &str = "measured log solubility in mols per litre";
pub const SALT: &str = "CC[NH+](CCCl)CCOc1cccc2ccccc12.[Cl-]";

pub fn esol_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/esol.csv")
}

pub fn esol() -> Dataset {
    load_csv(esol_path(), "smiles", &[ESOL_TARGET], Task::Regression).unwrap()
}

pub fn small_config() -> ModelConfig {
    ModelConfig {
        hidden_dim: 8,
        heads: 2,
        ..ModelConfig::default()
    }
}

pub fn graphs_of(mol: &Molecule) -> HierGraphs {
    build_hier_graphs(mol, &fragment_brics(mol), &FeatureConfig::default())
}

pub fn graphs(smiles: &str) -> HierGraphs {
    graphs_of(&parse_smiles(smiles).unwrap())
}

pub fn checkpoint(config: &ModelConfig, seed: u64) -> Checkpoint {
    Checkpoint::new(
        FragNetParams::init(config, seed).unwrap(),
        Standardization {
            mean: vec![-3.0; config.n_tasks],
            std: vec![2.0; config.n_tasks],
        },
        TrainingMetadata::default(),
    )
    .unwrap()
}
