//! Bemis-Murcko scaffolds and scaffold-grouped dataset splits.

use std::collections::BTreeMap;

use log::warn;
use thiserror::Error;

use crate::molecule::Molecule;
use crate::smiles::to_smiles;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplitError {
    #[error("split fractions must be positive and sum to 1, got {0:?}")]
    InvalidFractions((f64, f64, f64)),

    #[error("dataset too small: split sizes train={train} valid={valid} test={test}")]
    DatasetTooSmall { train: usize, valid: usize, test: usize },
}

/// Atoms that survive repeated removal of acyclic atoms with degree at most one.
pub fn murcko_atoms(mol: &Molecule) -> Vec<bool> {
    let n = mol.atoms.len();
    let mut keep = vec![true; n];
    let mut degree: Vec<usize> = (0..n).map(|i| mol.degree(i)).collect();
    let mut stack: Vec<usize> = (0..n).filter(|&i| !mol.atoms[i].in_ring && degree[i] <= 1).collect();
    while let Some(u) = stack.pop() {
        if !keep[u] {
            continue;
        }
        keep[u] = false;
        for &(v, _) in mol.neighbors(u) {
            if keep[v] {
                degree[v] -= 1;
                if !mol.atoms[v].in_ring && degree[v] <= 1 {
                    stack.push(v);
                }
            }
        }
    }
    keep
}

/// Ring systems plus linkers; an empty molecule for acyclic input.
pub fn murcko_scaffold(mol: &Molecule) -> Molecule {
    let keep = murcko_atoms(mol);
    if !keep.iter().any(|&k| k) {
        return Molecule::empty();
    }
    mol.induced_subgraph(&keep).unwrap_or_else(|e| {
        warn!("scaffold of {:?} could not be rebuilt ({e}); treating as acyclic", mol.source_smiles);
        Molecule::empty()
    })
}

/// Label-independent scaffold identity; empty for acyclic molecules.
pub fn scaffold_key(mol: &Molecule) -> String {
    to_smiles(&murcko_scaffold(mol))
}

/// Scaffold split over precomputed keys. Groups are taken largest first
/// (ties: later first occurrence first) and placed into train while it stays
/// under its cut, then valid, then test.
pub fn scaffold_split_keys(
    keys: &[String],
    fractions: (f64, f64, f64),
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>), SplitError> {
    let (ft, fv, fs) = fractions;
    if !(ft > 0.0 && fv > 0.0 && fs > 0.0) || ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(SplitError::InvalidFractions(fractions));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        groups.entry(k.as_str()).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
    groups.sort_by(|a, b| b.len().cmp(&a.len()).then(b[0].cmp(&a[0])));

    let n = keys.len() as f64;
    let train_cut = ft * n;
    let valid_cut = (ft + fv) * n;
    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for g in groups {
        if (train.len() + g.len()) as f64 > train_cut {
            if (train.len() + valid.len() + g.len()) as f64 > valid_cut {
                test.extend(g);
            } else {
                valid.extend(g);
            }
        } else {
            train.extend(g);
        }
    }
    if train.is_empty() || valid.is_empty() || test.is_empty() {
        return Err(SplitError::DatasetTooSmall {
            train: train.len(),
            valid: valid.len(),
            test: test.len(),
        });
    }
    train.sort_unstable();
    valid.sort_unstable();
    test.sort_unstable();
    Ok((train, valid, test))
}

pub fn scaffold_split(
    dataset: &[Molecule],
    fractions: (f64, f64, f64),
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>), SplitError> {
    let keys: Vec<String> = dataset.iter().map(scaffold_key).collect();
    scaffold_split_keys(&keys, fractions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse_smiles;

    fn key(s: &str) -> String {
        scaffold_key(&parse_smiles(s).unwrap())
    }

    #[test]
    fn acyclic_scaffold_is_empty() {
        assert!(murcko_scaffold(&parse_smiles("CCCC").unwrap()).is_empty());
        assert_eq!(key("CCCC"), "");
    }

    #[test]
    fn benzene_is_its_own_scaffold() {
        let s = murcko_scaffold(&parse_smiles("c1ccccc1").unwrap());
        assert_eq!(s.atom_count(), 6);
        assert_eq!(key("c1ccccc1"), "c1ccccc1");
    }

    #[test]
    fn side_chains_removed() {
        assert_eq!(key("CCc1ccccc1O"), "c1ccccc1");
        // Linker kept between two rings.
        let s = murcko_scaffold(&parse_smiles("c1ccccc1CCc1ccccc1C").unwrap());
        assert_eq!(s.atom_count(), 14);
    }

    #[test]
    fn salt_counter_ion_removed() {
        assert_eq!(key("CC[NH+](CCCl)CCOc1cccc2ccccc12.[Cl-]"), key("c1ccc2ccccc2c1"));
    }

    #[test]
    fn single_scaffold_is_too_small() {
        let keys = vec!["c1ccccc1".to_string(); 10];
        assert!(matches!(
            scaffold_split_keys(&keys, (0.8, 0.1, 0.1)),
            Err(SplitError::DatasetTooSmall { .. })
        ));
    }

    #[test]
    fn three_scaffolds_three_splits() {
        let keys: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let third = 1.0 / 3.0;
        let (tr, va, te) = scaffold_split_keys(&keys, (third, third, third)).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (1, 1, 1));
    }

    #[test]
    fn fractions_validated() {
        let keys = vec!["a".to_string(); 3];
        assert!(matches!(
            scaffold_split_keys(&keys, (0.5, 0.5, 0.5)),
            Err(SplitError::InvalidFractions(_))
        ));
    }
}
