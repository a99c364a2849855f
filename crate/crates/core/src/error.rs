use fragnet_chem::scaffold::SplitError;
use fragnet_chem::ChemError;
use fragnet_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Chem(#[from] ChemError),

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error(transparent)]
    Split(#[from] SplitError),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error("dataset is empty after dropping invalid rows")]
    EmptyDataset,

    #[error("checkpoint task {checkpoint} does not match dataset task {dataset}")]
    TaskMismatch { checkpoint: String, dataset: String },

    #[error("no molecule passes the selection: {0}")]
    EmptySelection(String),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
