use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChemError {
    #[error("SMILES syntax error: {0}")]
    Syntax(String),

    #[error("valence error: {0}")]
    Valence(String),

    #[error("unsupported feature: {0}")]
    Unsupported(String),
}
