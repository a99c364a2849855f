//! SMILES reading and canonical writing.

mod parse;
mod write;

pub use parse::parse_smiles;
pub use write::{canonical_ranks, to_smiles, to_smiles_with_dummies};
