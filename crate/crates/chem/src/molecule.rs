use crate::error::ChemError;
use crate::perceive;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Hybridization {
    Sp,
    Sp2,
    Sp3,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Chirality {
    None,
    Cw,
    Ccw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to the valence sum, with aromatic bonds counted as single
    /// sigma bonds (their pi share is handled per atom).
    pub fn sigma_valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub fn is_multiple(self) -> bool {
        !matches!(self, BondOrder::Single)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondStereo {
    None,
    E,
    Z,
}

/// One slot in the neighbour ordering a tetrahedral marker refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StereoRef {
    Atom(usize),
    ImplicitH,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub element: u8,
    pub formal_charge: i8,
    /// Hydrogens written inside a bracket atom.
    pub explicit_h: u8,
    /// Hydrogens implied by valence rules (always 0 for bracket atoms).
    pub implicit_h: u8,
    pub is_aromatic: bool,
    pub in_ring: bool,
    pub hybridization: Hybridization,
    pub implicit_valence: u8,
    pub radical_electrons: u8,
    pub chirality: Chirality,
    /// Neighbour order the chirality marker is relative to.
    pub chiral_refs: Vec<StereoRef>,
    /// Hydrogen count was fixed by a bracket and is not recomputed.
    pub bracket: bool,
}

impl Atom {
    pub fn new(element: u8) -> Self {
        Self {
            element,
            formal_charge: 0,
            explicit_h: 0,
            implicit_h: 0,
            is_aromatic: false,
            in_ring: false,
            hybridization: Hybridization::Other,
            implicit_valence: 0,
            radical_electrons: 0,
            chirality: Chirality::None,
            chiral_refs: Vec::new(),
            bracket: false,
        }
    }

    pub fn total_h(&self) -> u8 {
        self.explicit_h + self.implicit_h
    }

    pub fn symbol(&self) -> &'static str {
        crate::element::symbol(self.element)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bond {
    pub a1: usize,
    pub a2: usize,
    pub order: BondOrder,
    pub is_conjugated: bool,
    pub in_ring: bool,
    pub stereo: BondStereo,
    /// Reference neighbours of `a1` and `a2` that E/Z is defined against.
    pub stereo_refs: Option<(usize, usize)>,
}

impl Bond {
    pub fn new(a1: usize, a2: usize, order: BondOrder) -> Self {
        Self {
            a1,
            a2,
            order,
            is_conjugated: false,
            in_ring: false,
            stereo: BondStereo::None,
            stereo_refs: None,
        }
    }

    pub fn other(&self, atom: usize) -> usize {
        if self.a1 == atom {
            self.a2
        } else {
            self.a1
        }
    }

    pub fn contains(&self, atom: usize) -> bool {
        self.a1 == atom || self.a2 == atom
    }
}

/// Parsed molecular graph with perceived properties.
#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    /// Connected components as sorted atom index lists, ordered by first atom.
    pub components: Vec<Vec<usize>>,
    pub source_smiles: String,
    pub(crate) rings: Vec<Vec<usize>>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl Molecule {
    /// Assembles a molecule from atoms and bonds, recomputing hydrogens of
    /// non-bracket atoms and every perceived property. Aromatic flags given
    /// on input are kept; Kekulé rings are perceived as aromatic when they
    /// satisfy the 4n+2 rule.
    pub fn from_parts(atoms: Vec<Atom>, bonds: Vec<Bond>, source: impl Into<String>) -> Result<Self, ChemError> {
        let mut mol = Self::unperceived(atoms, bonds, source.into())?;
        perceive::perceive(&mut mol)?;
        Ok(mol)
    }

    pub(crate) fn unperceived(atoms: Vec<Atom>, bonds: Vec<Bond>, source: String) -> Result<Self, ChemError> {
        let mut adjacency = vec![Vec::new(); atoms.len()];
        for (i, b) in bonds.iter().enumerate() {
            if b.a1 >= atoms.len() || b.a2 >= atoms.len() || b.a1 == b.a2 {
                return Err(ChemError::Syntax(format!("bond {i} has invalid endpoints {}-{}", b.a1, b.a2)));
            }
            if adjacency[b.a1].iter().any(|&(n, _)| n == b.a2) {
                return Err(ChemError::Syntax(format!("duplicate bond between atoms {} and {}", b.a1, b.a2)));
            }
            adjacency[b.a1].push((b.a2, i));
            adjacency[b.a2].push((b.a1, i));
        }
        let components = connected_components(atoms.len(), &adjacency);
        Ok(Self {
            atoms,
            bonds,
            components,
            source_smiles: source,
            rings: Vec::new(),
            adjacency,
        })
    }

    pub fn empty() -> Self {
        Self {
            atoms: Vec::new(),
            bonds: Vec::new(),
            components: Vec::new(),
            source_smiles: String::new(),
            rings: Vec::new(),
            adjacency: Vec::new(),
        }
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `(neighbour atom, bond index)` pairs in bond insertion order.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency[a].iter().find(|&&(n, _)| n == b).map(|&(_, i)| i)
    }

    /// Smallest set of smallest rings, each as an ordered atom cycle.
    pub fn rings(&self) -> &[Vec<usize>] {
        &self.rings
    }

    /// Index of the component containing `atom`.
    pub fn component_of(&self, atom: usize) -> usize {
        self.components
            .iter()
            .position(|c| c.binary_search(&atom).is_ok())
            .expect("every atom belongs to a component")
    }

    /// Same molecule with atom `i` moved to index `atom_perm[i]` and bond `j`
    /// to index `bond_perm[j]`.
    pub fn relabeled(&self, atom_perm: &[usize], bond_perm: &[usize]) -> Result<Self, ChemError> {
        check_permutation(atom_perm, self.atoms.len())?;
        check_permutation(bond_perm, self.bonds.len())?;
        let mut atoms = vec![Atom::new(0); self.atoms.len()];
        for (i, atom) in self.atoms.iter().enumerate() {
            let mut a = atom.clone();
            a.chiral_refs = a
                .chiral_refs
                .iter()
                .map(|r| match r {
                    StereoRef::Atom(n) => StereoRef::Atom(atom_perm[*n]),
                    StereoRef::ImplicitH => StereoRef::ImplicitH,
                })
                .collect();
            atoms[atom_perm[i]] = a;
        }
        let mut bonds = vec![Bond::new(0, 0, BondOrder::Single); self.bonds.len()];
        for (j, bond) in self.bonds.iter().enumerate() {
            let mut b = bond.clone();
            b.a1 = atom_perm[bond.a1];
            b.a2 = atom_perm[bond.a2];
            b.stereo_refs = bond.stereo_refs.map(|(x, y)| (atom_perm[x], atom_perm[y]));
            bonds[bond_perm[j]] = b;
        }
        Self::from_parts(atoms, bonds, self.source_smiles.clone())
    }

    /// Keeps the atoms flagged in `keep`, dropping bonds to removed atoms.
    /// Hydrogens of non-bracket atoms are recomputed for the new valence.
    pub fn induced_subgraph(&self, keep: &[bool]) -> Result<Self, ChemError> {
        let mut new_index = vec![usize::MAX; self.atoms.len()];
        let mut atoms = Vec::new();
        for (i, atom) in self.atoms.iter().enumerate() {
            if keep[i] {
                new_index[i] = atoms.len();
                atoms.push(atom.clone());
            }
        }
        for atom in &mut atoms {
            // Stereo references may point at removed atoms; drop the marker.
            let refs_kept = atom.chiral_refs.iter().all(|r| match r {
                StereoRef::Atom(n) => keep[*n],
                StereoRef::ImplicitH => true,
            });
            if refs_kept {
                atom.chiral_refs = atom
                    .chiral_refs
                    .iter()
                    .map(|r| match r {
                        StereoRef::Atom(n) => StereoRef::Atom(new_index[*n]),
                        StereoRef::ImplicitH => StereoRef::ImplicitH,
                    })
                    .collect();
            } else {
                atom.chirality = Chirality::None;
                atom.chiral_refs.clear();
            }
        }
        let mut bonds = Vec::new();
        for bond in &self.bonds {
            if keep[bond.a1] && keep[bond.a2] {
                let mut b = bond.clone();
                b.a1 = new_index[bond.a1];
                b.a2 = new_index[bond.a2];
                b.stereo_refs = match bond.stereo_refs {
                    Some((x, y)) if keep[x] && keep[y] => Some((new_index[x], new_index[y])),
                    _ => None,
                };
                if b.stereo_refs.is_none() {
                    b.stereo = BondStereo::None;
                }
                bonds.push(b);
            }
        }
        Self::from_parts(atoms, bonds, String::new())
    }

    pub(crate) fn atoms_mut(&mut self) -> &mut [Atom] {
        &mut self.atoms
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<(), ChemError> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(ChemError::Syntax(format!("permutation has {} entries for {n} items", perm.len())));
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(ChemError::Syntax("invalid permutation".into()));
        }
        seen[p] = true;
    }
    Ok(())
}

fn connected_components(n: usize, adjacency: &[Vec<(usize, usize)>]) -> Vec<Vec<usize>> {
    let mut comp = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![start];
        comp[start] = id;
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &(v, _) in &adjacency[u] {
                if comp[v] == usize::MAX {
                    comp[v] = id;
                    members.push(v);
                    stack.push(v);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}
