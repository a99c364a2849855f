//! Molecular graphs parsed from SMILES, fragment decomposition and scaffolds.

pub mod element;
mod error;
pub mod fragment;
mod molecule;
mod perceive;
mod rings;
pub mod scaffold;
mod smiles;

pub use error::ChemError;
pub use molecule::{Atom, Bond, BondOrder, BondStereo, Chirality, Hybridization, Molecule, StereoRef};
pub use smiles::{canonical_ranks, parse_smiles, to_smiles, to_smiles_with_dummies};

/// Smallest set of smallest rings as ordered atom cycles; empty when acyclic.
pub fn canonical_ring_info(mol: &Molecule) -> Vec<Vec<usize>> {
    mol.rings().to_vec()
}
