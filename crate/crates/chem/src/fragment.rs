//! Fragment decomposition and typed fragment connections.

use std::fmt;
use std::sync::Arc;

use crate::element;
use crate::error::ChemError;
use crate::molecule::{BondOrder, Hybridization, Molecule};
use crate::scaffold::murcko_atoms;
use crate::smiles::to_smiles_with_dummies;

/// Rule table shipped with the crate.
pub const DEFAULT_RULES: &str = include_str!("../rules/brics.rules");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConnectionKind {
    Regular,
    Virtual,
    SelfLoop,
}

impl ConnectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConnectionKind::Regular => "REGULAR",
            ConnectionKind::Virtual => "VIRTUAL",
            ConnectionKind::SelfLoop => "SELF",
        }
    }
}

impl fmt::Display for ConnectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connection {
    pub frag_a: usize,
    pub frag_b: usize,
    pub kind: ConnectionKind,
    /// Cleaved bond, present only for regular connections.
    pub via_bond: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FragmentDecomposition {
    /// Sorted atom lists, ordered by their smallest atom.
    pub fragments: Vec<Vec<usize>>,
    pub connections: Vec<Connection>,
    pub frag_smiles: Vec<String>,
}

impl FragmentDecomposition {
    /// Fragment index of every atom.
    pub fn atom_to_fragment(&self, n_atoms: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n_atoms];
        for (f, atoms) in self.fragments.iter().enumerate() {
            for &a in atoms {
                out[a] = f;
            }
        }
        out
    }
}

/// A bond-cleavage strategy.
pub trait Fragmenter: Send + Sync {
    fn name(&self) -> &str;

    /// Indices of bonds to cut, ascending.
    fn cleavable_bonds(&self, mol: &Molecule) -> Vec<usize>;

    fn decompose(&self, mol: &Molecule) -> FragmentDecomposition {
        decompose_at(mol, &self.cleavable_bonds(mol))
    }
}

/// Names accepted by [`fragmenter_by_name`].
pub fn fragmenter_names() -> &'static [&'static str] {
    &["brics", "murcko"]
}

pub fn fragmenter_by_name(name: &str) -> Option<Arc<dyn Fragmenter>> {
    match name {
        "brics" => Some(Arc::new(RuleFragmenter::default())),
        "murcko" => Some(Arc::new(MurckoFragmenter)),
        _ => None,
    }
}

/// Fragments `mol` with the shipped rule table.
pub fn fragment_brics(mol: &Molecule) -> FragmentDecomposition {
    RuleFragmenter::default().decompose(mol)
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Predicate {
    Element(u8),
    Any,
    Aromatic(bool),
    Ring(bool),
    Hybrid(Hybridization),
    Carbonyl(bool),
    Double(bool),
    Charged(bool),
    MinDegree(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub name: String,
    left: Vec<Predicate>,
    right: Vec<Predicate>,
}

/// Cleaves acyclic single bonds whose endpoints match a rule.
#[derive(Debug, Clone)]
pub struct RuleFragmenter {
    rules: Vec<Rule>,
}

impl Default for RuleFragmenter {
    fn default() -> Self {
        Self::from_rules_text(DEFAULT_RULES).expect("shipped rule table parses")
    }
}

impl RuleFragmenter {
    pub fn from_rules_text(text: &str) -> Result<Self, ChemError> {
        let mut rules = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(ChemError::Syntax(format!(
                    "rule line {}: expected name and two predicate lists",
                    lineno + 1
                )));
            }
            let parse = |s: &str| -> Result<Vec<Predicate>, ChemError> {
                s.split(',')
                    .map(|p| parse_predicate(p).map_err(|m| ChemError::Syntax(format!("rule line {}: {m}", lineno + 1))))
                    .collect()
            };
            rules.push(Rule {
                name: fields[0].to_string(),
                left: parse(fields[1])?,
                right: parse(fields[2])?,
            });
        }
        if rules.is_empty() {
            return Err(ChemError::Syntax("rule table has no rules".into()));
        }
        Ok(Self { rules })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Name of the first rule that cleaves `bond`, if any.
    pub fn matching_rule(&self, mol: &Molecule, bond: usize) -> Option<&str> {
        let b = &mol.bonds[bond];
        if b.order != BondOrder::Single || b.in_ring {
            return None;
        }
        for &x in &[b.a1, b.a2] {
            let atom = &mol.atoms[x];
            if atom.element == 1 || (atom.formal_charge != 0 && mol.degree(x) <= 1) {
                return None;
            }
        }
        self.rules
            .iter()
            .find(|r| {
                (all_match(mol, b.a1, &r.left) && all_match(mol, b.a2, &r.right))
                    || (all_match(mol, b.a2, &r.left) && all_match(mol, b.a1, &r.right))
            })
            .map(|r| r.name.as_str())
    }
}

impl Fragmenter for RuleFragmenter {
    fn name(&self) -> &str {
        "brics"
    }

    fn cleavable_bonds(&self, mol: &Molecule) -> Vec<usize> {
        (0..mol.bonds.len()).filter(|&b| self.matching_rule(mol, b).is_some()).collect()
    }
}

/// Splits ring systems and linkers from side chains.
#[derive(Debug, Clone, Copy, Default)]
pub struct MurckoFragmenter;

impl Fragmenter for MurckoFragmenter {
    fn name(&self) -> &str {
        "murcko"
    }

    fn cleavable_bonds(&self, mol: &Molecule) -> Vec<usize> {
        let keep = murcko_atoms(mol);
        mol.bonds
            .iter()
            .enumerate()
            .filter(|(_, b)| keep[b.a1] != keep[b.a2] && b.order == BondOrder::Single)
            .map(|(i, _)| i)
            .collect()
    }
}

fn parse_predicate(p: &str) -> Result<Predicate, String> {
    let p = p.trim();
    if let Some(n) = p.strip_prefix("deg>=") {
        return n.parse().map(Predicate::MinDegree).map_err(|_| format!("bad degree in {p:?}"));
    }
    let (neg, word) = match p.strip_prefix('!') {
        Some(w) => (true, w),
        None => (false, p),
    };
    let pred = match word {
        "*" if !neg => Predicate::Any,
        "arom" => Predicate::Aromatic(!neg),
        "ring" => Predicate::Ring(!neg),
        "carbonyl" => Predicate::Carbonyl(!neg),
        "dbl" => Predicate::Double(!neg),
        "charged" => Predicate::Charged(!neg),
        "sp2" if !neg => Predicate::Hybrid(Hybridization::Sp2),
        "sp3" if !neg => Predicate::Hybrid(Hybridization::Sp3),
        sym if !neg => Predicate::Element(element::from_symbol(sym).ok_or_else(|| format!("unknown predicate {p:?}"))?),
        _ => return Err(format!("unknown predicate {p:?}")),
    };
    Ok(pred)
}

fn all_match(mol: &Molecule, atom: usize, preds: &[Predicate]) -> bool {
    preds.iter().all(|p| matches(mol, atom, p))
}

fn matches(mol: &Molecule, atom: usize, pred: &Predicate) -> bool {
    let a = &mol.atoms[atom];
    let double_to = |elements: &[u8]| {
        mol.neighbors(atom)
            .iter()
            .any(|&(n, b)| mol.bonds[b].order == BondOrder::Double && elements.contains(&mol.atoms[n].element))
    };
    match *pred {
        Predicate::Any => true,
        Predicate::Element(e) => a.element == e,
        Predicate::Aromatic(v) => a.is_aromatic == v,
        Predicate::Ring(v) => a.in_ring == v,
        Predicate::Hybrid(h) => a.hybridization == h,
        Predicate::Carbonyl(v) => (a.element == 6 && double_to(&[8])) == v,
        Predicate::Double(v) => double_to(&element::SUPPORTED) == v,
        Predicate::Charged(v) => (a.formal_charge != 0) == v,
        Predicate::MinDegree(n) => mol.degree(atom) >= n,
    }
}

/// Partitions `mol` by removing `cut` bonds and builds the connections.
pub fn decompose_at(mol: &Molecule, cut: &[usize]) -> FragmentDecomposition {
    let n = mol.atoms.len();
    let mut is_cut = vec![false; mol.bonds.len()];
    for &b in cut {
        is_cut[b] = true;
    }
    let mut frag_of = vec![usize::MAX; n];
    let mut fragments: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if frag_of[start] != usize::MAX {
            continue;
        }
        let id = fragments.len();
        frag_of[start] = id;
        let mut members = vec![start];
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &(v, b) in mol.neighbors(u) {
                if !is_cut[b] && frag_of[v] == usize::MAX {
                    frag_of[v] = id;
                    members.push(v);
                    stack.push(v);
                }
            }
        }
        members.sort_unstable();
        fragments.push(members);
    }

    let mut connections = Vec::new();
    for (b, bond) in mol.bonds.iter().enumerate() {
        if is_cut[b] {
            connections.push(Connection {
                frag_a: frag_of[bond.a1],
                frag_b: frag_of[bond.a2],
                kind: ConnectionKind::Regular,
                via_bond: Some(b),
            });
        }
    }
    // Fragments of each component, in fragment order.
    let comp_frags: Vec<Vec<usize>> = mol
        .components
        .iter()
        .map(|comp| {
            let mut f: Vec<usize> = comp.iter().map(|&a| frag_of[a]).collect();
            f.sort_unstable();
            f.dedup();
            f
        })
        .collect();
    for frags in &comp_frags {
        if frags.len() == 1 {
            connections.push(Connection {
                frag_a: frags[0],
                frag_b: frags[0],
                kind: ConnectionKind::SelfLoop,
                via_bond: None,
            });
        }
    }
    for i in 0..comp_frags.len() {
        for j in i + 1..comp_frags.len() {
            for &fa in &comp_frags[i] {
                for &fb in &comp_frags[j] {
                    connections.push(Connection {
                        frag_a: fa,
                        frag_b: fb,
                        kind: ConnectionKind::Virtual,
                        via_bond: None,
                    });
                }
            }
        }
    }
    let frag_smiles = fragments.iter().map(|f| to_smiles_with_dummies(mol, f)).collect();
    FragmentDecomposition {
        fragments,
        connections,
        frag_smiles,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse_smiles;

    fn decomp(s: &str) -> FragmentDecomposition {
        fragment_brics(&parse_smiles(s).unwrap())
    }

    #[test]
    fn ethane_is_one_fragment_with_self_loop() {
        let d = decomp("CC");
        assert_eq!(d.fragments, vec![vec![0, 1]]);
        assert_eq!(d.connections.len(), 1);
        assert_eq!(d.connections[0].kind, ConnectionKind::SelfLoop);
        assert_eq!(d.frag_smiles, vec!["CC"]);
    }

    #[test]
    fn ethanol_is_not_split() {
        // The ether rule needs an oxygen bridging two atoms.
        assert_eq!(decomp("CCO").fragments.len(), 1);
    }

    #[test]
    fn rule_names_reported() {
        let mol = parse_smiles("CCOC(=O)c1ccccc1").unwrap();
        let f = RuleFragmenter::default();
        let names: Vec<&str> = (0..mol.bonds.len()).filter_map(|b| f.matching_rule(&mol, b)).collect();
        assert_eq!(names, vec!["ether_alkyl", "acyl_oxygen", "acyl_ring"]);
    }

    #[test]
    fn carbonyl_fragment_uses_wildcards() {
        let d = decomp("CC(=O)OC(=O)C");
        assert_eq!(d.frag_smiles, vec!["CC(=O)[*]", "O([*])[*]", "CC(=O)[*]"]);
    }

    #[test]
    fn bad_rule_lines_rejected() {
        assert!(RuleFragmenter::from_rules_text("only two").is_err());
        assert!(RuleFragmenter::from_rules_text("r C,bogus O").is_err());
        assert!(RuleFragmenter::from_rules_text("# nothing\n").is_err());
        let custom = RuleFragmenter::from_rules_text("cc C C").unwrap();
        assert_eq!(custom.decompose(&parse_smiles("CCC").unwrap()).fragments.len(), 3);
    }

    #[test]
    fn registry_lists_both_fragmenters() {
        for name in fragmenter_names() {
            assert_eq!(fragmenter_by_name(name).unwrap().name(), *name);
        }
        assert!(fragmenter_by_name("recap").is_none());
    }

    #[test]
    fn murcko_fragmenter_splits_side_chains() {
        let mol = parse_smiles("CCc1ccccc1O").unwrap();
        let d = MurckoFragmenter.decompose(&mol);
        assert_eq!(d.fragments.len(), 3);
    }
}
