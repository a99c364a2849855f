//! Atom, bond, angle and connection feature encoders.

use fragnet_chem::element::SUPPORTED;
use fragnet_chem::fragment::ConnectionKind;
use fragnet_chem::{Atom, Bond, BondOrder, BondStereo, Chirality, Hybridization, Molecule};
use serde::{Deserialize, Serialize};

pub const BOND_FEATURE_DIM: usize = 9;
pub const ANGLE_FEATURE_DIM: usize = 5;
pub const CONN_FEATURE_DIM: usize = 3 + BOND_FEATURE_DIM;

/// Caps of the count-valued one-hot blocks. Values above a cap share the last slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub max_implicit_valence: usize,
    pub max_abs_charge: usize,
    pub max_radicals: usize,
    pub max_total_h: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            max_implicit_valence: 4,
            max_abs_charge: 2,
            max_radicals: 2,
            max_total_h: 4,
        }
    }
}

impl FeatureConfig {
    pub fn atom_dim(&self) -> usize {
        SUPPORTED.len()
            + self.max_implicit_valence
            + 1
            + 2 * self.max_abs_charge
            + 1
            + self.max_radicals
            + 1
            + 4
            + 1
            + 1
            + self.max_total_h
            + 1
            + 3
    }

    /// Atomic number, implicit valence, formal charge, radical electrons,
    /// hybridization, aromaticity, ring membership, total hydrogens, chirality.
    pub fn atom_features(&self, atom: &Atom) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.atom_dim());
        one_hot(&mut out, SUPPORTED.iter().position(|&e| e == atom.element).unwrap_or(0), SUPPORTED.len());
        capped(&mut out, atom.implicit_valence as usize, self.max_implicit_valence);
        let c = self.max_abs_charge as i64;
        let charge = (atom.formal_charge as i64).clamp(-c, c) + c;
        one_hot(&mut out, charge as usize, 2 * self.max_abs_charge + 1);
        capped(&mut out, atom.radical_electrons as usize, self.max_radicals);
        let hyb = match atom.hybridization {
            Hybridization::Sp => 0,
            Hybridization::Sp2 => 1,
            Hybridization::Sp3 => 2,
            Hybridization::Other => 3,
        };
        one_hot(&mut out, hyb, 4);
        out.push(f64::from(u8::from(atom.is_aromatic)));
        out.push(f64::from(u8::from(atom.in_ring)));
        capped(&mut out, atom.total_h() as usize, self.max_total_h);
        let chi = match atom.chirality {
            Chirality::None => 0,
            Chirality::Cw => 1,
            Chirality::Ccw => 2,
        };
        one_hot(&mut out, chi, 3);
        out
    }
}

/// Bond type, conjugation, ring membership, stereo.
pub fn bond_features(bond: &Bond) -> [f64; BOND_FEATURE_DIM] {
    let mut out = [0.0; BOND_FEATURE_DIM];
    let kind = match bond.order {
        BondOrder::Single => 0,
        BondOrder::Double => 1,
        BondOrder::Triple => 2,
        BondOrder::Aromatic => 3,
    };
    out[kind] = 1.0;
    out[4] = f64::from(u8::from(bond.is_conjugated));
    out[5] = f64::from(u8::from(bond.in_ring));
    let stereo = match bond.stereo {
        BondStereo::None => 0,
        BondStereo::E => 1,
        BondStereo::Z => 2,
    };
    out[6 + stereo] = 1.0;
    out
}

/// One-hot over {180, 120, 109.5, other} degrees from the shared atom's
/// geometry, followed by the cosine of that angle.
pub fn angle_features(shared: &Atom) -> [f64; ANGLE_FEATURE_DIM] {
    let (bucket, cos) = if shared.is_aromatic {
        (1, -0.5)
    } else {
        match shared.hybridization {
            Hybridization::Sp => (0, -1.0),
            Hybridization::Sp2 => (1, -0.5),
            Hybridization::Sp3 => (2, -1.0 / 3.0),
            Hybridization::Other => (3, 0.0),
        }
    };
    let mut out = [0.0; ANGLE_FEATURE_DIM];
    out[bucket] = 1.0;
    out[4] = cos;
    out
}

/// Angle features for two bonds sharing exactly one atom; `None` otherwise.
pub fn idealized_angle_features(mol: &Molecule, bond_i: usize, bond_j: usize) -> Option<[f64; ANGLE_FEATURE_DIM]> {
    let (bi, bj) = (&mol.bonds[bond_i], &mol.bonds[bond_j]);
    if bond_i == bond_j {
        return None;
    }
    let shared = [bi.a1, bi.a2].into_iter().find(|&a| bj.contains(a))?;
    Some(angle_features(&mol.atoms[shared]))
}

/// Connection kind one-hot followed by the cleaved bond's features (zeros
/// for virtual and self connections).
pub fn conn_features(kind: ConnectionKind, bond: Option<&Bond>) -> [f64; CONN_FEATURE_DIM] {
    let mut out = [0.0; CONN_FEATURE_DIM];
    let k = match kind {
        ConnectionKind::Regular => 0,
        ConnectionKind::Virtual => 1,
        ConnectionKind::SelfLoop => 2,
    };
    out[k] = 1.0;
    if let Some(b) = bond {
        out[3..].copy_from_slice(&bond_features(b));
    }
    out
}

fn one_hot(out: &mut Vec<f64>, index: usize, width: usize) {
    let start = out.len();
    out.resize(start + width, 0.0);
    out[start + index.min(width - 1)] = 1.0;
}

fn capped(out: &mut Vec<f64>, value: usize, cap: usize) {
    one_hot(out, value.min(cap), cap + 1);
}

#[cfg(test)]
mod tests {
    use super::*;
    use fragnet_chem::parse_smiles;

    #[test]
    fn atom_vector_has_one_hot_blocks() {
        let cfg = FeatureConfig::default();
        assert_eq!(cfg.atom_dim(), 42);
        let m = parse_smiles("C[NH3+]").unwrap();
        let f = cfg.atom_features(&m.atoms[1]);
        assert_eq!(f.len(), 42);
        // Seven one-hot blocks plus two flags.
        let blocks = [15, 5, 5, 3, 4, 1, 1, 5, 3];
        let mut start = 0;
        for (k, w) in blocks.iter().enumerate() {
            let s: f64 = f[start..start + w].iter().sum();
            if *w > 1 {
                assert_eq!(s, 1.0, "block {k}");
            }
            start += w;
        }
        // Nitrogen, charge +1, three hydrogens.
        assert_eq!(f[4], 1.0);
        assert_eq!(f[20 + 3], 1.0);
        assert_eq!(f[15 + 5 + 5 + 3 + 4 + 2 + 3], 1.0);
    }

    #[test]
    fn angle_buckets() {
        let sp3 = parse_smiles("CCC").unwrap();
        assert_eq!(idealized_angle_features(&sp3, 0, 1).unwrap(), [0.0, 0.0, 1.0, 0.0, -1.0 / 3.0]);
        let arom = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(idealized_angle_features(&arom, 0, 1).unwrap(), [0.0, 1.0, 0.0, 0.0, -0.5]);
        let sp = parse_smiles("CC#CC").unwrap();
        assert_eq!(idealized_angle_features(&sp, 0, 1).unwrap(), [1.0, 0.0, 0.0, 0.0, -1.0]);
        assert!(idealized_angle_features(&sp, 0, 2).is_none());
    }

    #[test]
    fn bond_vector() {
        let m = parse_smiles("F/C=C/F").unwrap();
        let f = bond_features(&m.bonds[1]);
        assert_eq!(f, [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }
}
