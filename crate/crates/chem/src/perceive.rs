//! Perception of rings, aromaticity, hydrogens, hybridization and conjugation.

use crate::element;
use crate::error::ChemError;
use crate::molecule::{BondOrder, BondStereo, Hybridization, Molecule};
use crate::rings;

pub(crate) fn perceive(mol: &mut Molecule) -> Result<(), ChemError> {
    assign_hydrogens(mol)?;
    assign_rings(mol)?;
    perceive_kekule_aromaticity(mol)?;
    assign_hybridization(mol);
    assign_conjugation(mol);
    for bond in &mut mol.bonds {
        if bond.order != BondOrder::Double {
            bond.stereo = BondStereo::None;
            bond.stereo_refs = None;
        }
    }
    Ok(())
}

fn has_double(mol: &Molecule, atom: usize) -> bool {
    mol.neighbors(atom)
        .iter()
        .any(|&(_, b)| mol.bonds[b].order == BondOrder::Double)
}

fn sigma_sum(mol: &Molecule, atom: usize) -> u8 {
    mol.neighbors(atom)
        .iter()
        .map(|&(_, b)| mol.bonds[b].order.sigma_valence())
        .sum()
}

/// Hydrogens a non-bracket atom carries given its bonds.
pub(crate) fn default_hydrogens(element: u8, aromatic: bool, sigma: u8, has_double: bool) -> Result<u8, ChemError> {
    let allowed = element::allowed_valences(element, 0)
        .ok_or_else(|| ChemError::Unsupported(format!("element {}", element::symbol(element))))?;
    let max = *allowed.last().expect("non-empty valence list");
    if sigma > max {
        return Err(ChemError::Valence(format!(
            "{} has bonded valence {sigma}, maximum {max}",
            element::symbol(element)
        )));
    }
    if aromatic {
        let pi = u8::from(!has_double);
        return Ok(allowed[0].saturating_sub(sigma + pi));
    }
    let target = allowed.iter().find(|&&v| v >= sigma).copied().unwrap_or(max);
    Ok(target - sigma)
}

fn assign_hydrogens(mol: &mut Molecule) -> Result<(), ChemError> {
    for i in 0..mol.atoms.len() {
        let sigma = sigma_sum(mol, i);
        let dbl = has_double(mol, i);
        let atom = &mol.atoms[i];
        if !element::is_supported(atom.element) {
            return Err(ChemError::Unsupported(format!("atomic number {}", atom.element)));
        }
        let allowed = element::allowed_valences(atom.element, atom.formal_charge).ok_or_else(|| {
            ChemError::Unsupported(format!("{} with charge {}", atom.symbol(), atom.formal_charge))
        })?;
        if atom.bracket {
            let pi = u8::from(atom.is_aromatic && !dbl);
            let total = sigma + pi + atom.explicit_h;
            let max = *allowed.last().expect("non-empty valence list");
            // Aromatic atoms may carry a pi share on top of a full valence
            // (pyrrole-type nitrogen), so only their sigma part is checked.
            let checked = if atom.is_aromatic { sigma + atom.explicit_h } else { total };
            let between = !atom.is_aromatic && total > allowed[0] && !allowed.contains(&total);
            if checked > max || between {
                return Err(ChemError::Valence(format!(
                    "atom {i} ({}{:+}) has valence {checked}, maximum {max}",
                    atom.symbol(),
                    atom.formal_charge
                )));
            }
            let radicals = if atom.is_aromatic || element::is_metal(atom.element) {
                0
            } else {
                allowed[0].saturating_sub(total)
            };
            let a = &mut mol.atoms[i];
            a.implicit_h = 0;
            a.radical_electrons = radicals;
        } else {
            if atom.formal_charge != 0 {
                return Err(ChemError::Syntax(format!("charged atom {i} must be written in brackets")));
            }
            let h = default_hydrogens(atom.element, atom.is_aromatic, sigma, dbl)
                .map_err(|e| match e {
                    ChemError::Valence(m) => ChemError::Valence(format!("atom {i}: {m}")),
                    other => other,
                })?;
            let a = &mut mol.atoms[i];
            a.implicit_h = h;
            a.explicit_h = 0;
            a.radical_electrons = 0;
        }
        let a = &mut mol.atoms[i];
        a.implicit_valence = a.implicit_h;
    }
    Ok(())
}

fn assign_rings(mol: &mut Molecule) -> Result<(), ChemError> {
    let pairs: Vec<(usize, usize)> = mol.bonds.iter().map(|b| (b.a1, b.a2)).collect();
    let adjacency: Vec<Vec<(usize, usize)>> = (0..mol.atoms.len()).map(|i| mol.neighbors(i).to_vec()).collect();
    let rings = rings::sssr(mol.atoms.len(), &pairs, &adjacency, mol.components.len());

    for atom in &mut mol.atoms {
        atom.in_ring = false;
    }
    for bond in &mut mol.bonds {
        bond.in_ring = false;
    }
    for ring in &rings {
        for k in 0..ring.len() {
            let (a, b) = (ring[k], ring[(k + 1) % ring.len()]);
            mol.atoms[a].in_ring = true;
            let bi = mol.bond_between(a, b).expect("ring edges are bonds");
            mol.bonds[bi].in_ring = true;
        }
    }
    for (i, atom) in mol.atoms.iter().enumerate() {
        if atom.is_aromatic && !atom.in_ring {
            return Err(ChemError::Syntax(format!("aromatic atom {i} is not in a ring")));
        }
    }
    for bond in &mut mol.bonds {
        if bond.order == BondOrder::Aromatic && !bond.in_ring {
            bond.order = BondOrder::Single;
        }
    }
    mol.rings = rings;
    Ok(())
}

/// Pi electrons an atom donates to a ring, or `None` if it breaks conjugation.
fn pi_electrons(mol: &Molecule, atom: usize) -> Option<u8> {
    let a = &mol.atoms[atom];
    if a.is_aromatic {
        return Some(1);
    }
    let mut double_partner = None;
    for &(n, b) in mol.neighbors(atom) {
        match mol.bonds[b].order {
            BondOrder::Double => double_partner = Some(n),
            BondOrder::Triple => return None,
            _ => {}
        }
    }
    if let Some(n) = double_partner {
        let partner = &mol.atoms[n];
        if partner.in_ring {
            return Some(1);
        }
        // Exocyclic C=O style double bonds leave an empty p orbital.
        return matches!(partner.element, 7 | 8 | 16).then_some(0);
    }
    let connections = mol.degree(atom) + usize::from(a.total_h());
    match (a.element, a.formal_charge) {
        (7 | 15, 0) if connections == 3 => Some(2),
        (8 | 16, 0) if connections == 2 => Some(2),
        (7, -1) if connections == 2 => Some(2),
        (6, -1) if connections == 3 => Some(2),
        (6, 1) if connections == 3 => Some(0),
        (5, 0) if connections == 3 => Some(0),
        _ => None,
    }
}

fn perceive_kekule_aromaticity(mol: &mut Molecule) -> Result<(), ChemError> {
    let rings = mol.rings.clone();
    let mut aromatic_rings = Vec::new();
    for ring in &rings {
        if ring.iter().all(|&a| mol.atoms[a].is_aromatic) {
            continue;
        }
        let mut total = 0u32;
        let mut ok = true;
        for &a in ring {
            match pi_electrons(mol, a) {
                Some(e) => total += u32::from(e),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && total % 4 == 2 {
            aromatic_rings.push(ring.clone());
        }
    }
    for ring in aromatic_rings {
        for k in 0..ring.len() {
            let (a, b) = (ring[k], ring[(k + 1) % ring.len()]);
            let bi = mol.bond_between(a, b).expect("ring edges are bonds");
            mol.bonds[bi].order = BondOrder::Aromatic;
            mol.bonds[bi].stereo = BondStereo::None;
            mol.bonds[bi].stereo_refs = None;
        }
        for &a in &ring {
            if mol.atoms[a].is_aromatic {
                continue;
            }
            mol.atoms[a].is_aromatic = true;
            // Pin hydrogens that the aromatic default rule would not reproduce.
            if !mol.atoms[a].bracket {
                let sigma = sigma_sum(mol, a);
                let dbl = has_double(mol, a);
                let atom = &mol.atoms[a];
                let expected = default_hydrogens(atom.element, true, sigma, dbl)?;
                if expected != atom.implicit_h {
                    let atom = &mut mol.atoms_mut()[a];
                    atom.bracket = true;
                    atom.explicit_h = atom.implicit_h;
                    atom.implicit_h = 0;
                    atom.implicit_valence = 0;
                }
            }
        }
    }
    Ok(())
}

fn assign_hybridization(mol: &mut Molecule) {
    for i in 0..mol.atoms.len() {
        let (mut doubles, mut triples) = (0, 0);
        for &(_, b) in mol.neighbors(i) {
            match mol.bonds[b].order {
                BondOrder::Double => doubles += 1,
                BondOrder::Triple => triples += 1,
                _ => {}
            }
        }
        let atom = &mol.atoms[i];
        let connections = mol.degree(i) + usize::from(atom.total_h());
        let hyb = if element::is_metal(atom.element) || connections == 0 || atom.element == 1 {
            Hybridization::Other
        } else if atom.is_aromatic {
            Hybridization::Sp2
        } else if triples > 0 || doubles >= 2 {
            Hybridization::Sp
        } else if doubles == 1 {
            Hybridization::Sp2
        } else {
            Hybridization::Sp3
        };
        mol.atoms[i].hybridization = hyb;
    }
}

fn assign_conjugation(mol: &mut Molecule) {
    let n_bonds = mol.bonds.len();
    let has_other_multiple = |mol: &Molecule, atom: usize, except: usize| {
        mol.neighbors(atom)
            .iter()
            .any(|&(_, b)| b != except && mol.bonds[b].order.is_multiple())
    };
    let lone_pair = |mol: &Molecule, atom: usize| {
        let a = &mol.atoms[atom];
        element::has_lone_pair_donor(a.element) && a.formal_charge <= 0 && a.hybridization == Hybridization::Sp3
    };

    let mut conj = vec![false; n_bonds];
    for (i, bond) in mol.bonds.iter().enumerate() {
        conj[i] = match bond.order {
            BondOrder::Aromatic => true,
            BondOrder::Single => {
                let (a, b) = (bond.a1, bond.a2);
                let ma = has_other_multiple(mol, a, i);
                let mb = has_other_multiple(mol, b, i);
                (ma && (mb || lone_pair(mol, b))) || (mb && lone_pair(mol, a))
            }
            _ => false,
        };
    }
    for (i, bond) in mol.bonds.iter().enumerate() {
        if !bond.order.is_multiple() || bond.order == BondOrder::Aromatic {
            continue;
        }
        conj[i] = [bond.a1, bond.a2].iter().any(|&x| {
            mol.neighbors(x).iter().any(|&(_, b)| {
                b != i && (conj[b] && mol.bonds[b].order == BondOrder::Single || mol.bonds[b].order.is_multiple())
            })
        });
    }
    for (bond, c) in mol.bonds.iter_mut().zip(conj) {
        bond.is_conjugated = c;
    }
}
