#![allow(dead_code)]

use std::path::{Path, PathBuf};

use fragnet_core::checkpoint::{Standardization, TrainingMetadata};
use fragnet_core::{Checkpoint, FragNetParams, ModelConfig};

pub const SALT: &str = "CC[NH+](CCCl)CCOc1cccc2ccccc12.[Cl-]";
pub const ESOL_TARGET: &str = "measured log solubility in mols per litre";

pub fn esol_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/esol.csv")
}

pub fn random_checkpoint(seed: u64) -> Checkpoint {
    let cfg = ModelConfig {
        hidden_dim: 8,
        heads: 2,
        ..ModelConfig::default()
    };
    let meta = TrainingMetadata {
        target_names: vec![ESOL_TARGET.into()],
        ..TrainingMetadata::default()
    };
    Checkpoint::new(
        FragNetParams::init(&cfg, seed).unwrap(),
        Standardization {
            mean: vec![-3.0],
            std: vec![2.0],
        },
        meta,
    )
    .unwrap()
}

pub fn write_models(dir: &Path, names: &[&str]) {
    for (i, n) in names.iter().enumerate() {
        random_checkpoint(i as u64 + 1).save(dir.join(format!("{n}.json"))).unwrap();
    }
}
