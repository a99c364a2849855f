use std::collections::BTreeMap;

use log::warn;

use crate::element;
use crate::error::ChemError;
use crate::molecule::{Atom, Bond, BondOrder, BondStereo, Chirality, Molecule, StereoRef};

/// Bond symbol read between two atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondToken {
    Single,
    Double,
    Triple,
    Aromatic,
    Up,
    Down,
}

struct RingOpen {
    atom: usize,
    token: Option<BondToken>,
    /// Position in the opening atom's neighbour order awaiting the partner.
    slot: usize,
}

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    /// Per bond: direction marker and the atom it was written after.
    directions: Vec<Option<(BondToken, usize)>>,
    order: Vec<Vec<StereoRef>>,
    rings: BTreeMap<u32, RingOpen>,
}

/// Parses a SMILES string into a perceived [`Molecule`].
pub fn parse_smiles(text: &str) -> Result<Molecule, ChemError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(ChemError::Syntax("empty SMILES".into()));
    }
    if let Some(c) = trimmed.chars().find(|c| c.is_whitespace()) {
        return Err(ChemError::Syntax(format!("unexpected whitespace {c:?}")));
    }
    let mut p = Parser {
        text: trimmed,
        bytes: trimmed.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        directions: Vec::new(),
        order: Vec::new(),
        rings: BTreeMap::new(),
    };
    p.run()?;
    p.finish()
}

impl<'a> Parser<'a> {
    fn err(&self, msg: impl std::fmt::Display) -> ChemError {
        ChemError::Syntax(format!("{msg} at position {} in {:?}", self.pos, self.text))
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn run(&mut self) -> Result<(), ChemError> {
        let mut prev: Option<usize> = None;
        let mut branches: Vec<Option<usize>> = Vec::new();
        let mut pending: Option<BondToken> = None;
        // A dot is pending until the next atom starts a new component.
        let mut expect_atom = true;

        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    if prev.is_none() || expect_atom {
                        return Err(self.err("branch without a preceding atom"));
                    }
                    branches.push(prev);
                    self.pos += 1;
                }
                b')' => {
                    if pending.is_some() {
                        return Err(self.err("bond symbol before ')'"));
                    }
                    prev = branches.pop().ok_or_else(|| self.err("unbalanced ')'"))?;
                    self.pos += 1;
                }
                b'.' => {
                    if pending.is_some() || prev.is_none() {
                        return Err(self.err("misplaced '.'"));
                    }
                    if !branches.is_empty() {
                        return Err(self.err("'.' inside a branch"));
                    }
                    prev = None;
                    expect_atom = true;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if pending.is_some() {
                        return Err(self.err("two consecutive bond symbols"));
                    }
                    pending = Some(match c {
                        b'-' => BondToken::Single,
                        b'=' => BondToken::Double,
                        b'#' => BondToken::Triple,
                        b':' => BondToken::Aromatic,
                        b'/' => BondToken::Up,
                        _ => BondToken::Down,
                    });
                    self.pos += 1;
                }
                b'$' => return Err(ChemError::Unsupported("quadruple bonds".into())),
                b'0'..=b'9' | b'%' => {
                    let atom = prev.ok_or_else(|| self.err("ring closure without an atom"))?;
                    if expect_atom {
                        return Err(self.err("ring closure without an atom"));
                    }
                    let digit = self.ring_number()?;
                    self.ring_closure(atom, digit, pending.take())?;
                }
                _ => {
                    let atom = self.atom()?;
                    if let Some(p) = prev {
                        self.bond(p, atom, pending.take())?;
                    } else if pending.is_some() {
                        return Err(self.err("bond symbol without a preceding atom"));
                    }
                    prev = Some(atom);
                    expect_atom = false;
                }
            }
        }
        if !branches.is_empty() {
            return Err(self.err("unbalanced '('"));
        }
        if pending.is_some() {
            return Err(self.err("trailing bond symbol"));
        }
        if let Some((digit, _)) = self.rings.iter().next() {
            return Err(self.err(format!("unclosed ring bond {digit}")));
        }
        if expect_atom {
            return Err(self.err("SMILES ends without an atom"));
        }
        Ok(())
    }

    fn ring_number(&mut self) -> Result<u32, ChemError> {
        let c = self.peek().expect("caller checked");
        if c == b'%' {
            let digits = self.bytes.get(self.pos + 1..self.pos + 3).ok_or_else(|| self.err("truncated %nn"))?;
            if !digits.iter().all(u8::is_ascii_digit) {
                return Err(self.err("%nn needs two digits"));
            }
            self.pos += 3;
            Ok(u32::from(digits[0] - b'0') * 10 + u32::from(digits[1] - b'0'))
        } else {
            self.pos += 1;
            Ok(u32::from(c - b'0'))
        }
    }

    fn ring_closure(&mut self, atom: usize, digit: u32, token: Option<BondToken>) -> Result<(), ChemError> {
        match self.rings.remove(&digit) {
            None => {
                let slot = self.order[atom].len();
                // Placeholder until the closing atom is known.
                self.order[atom].push(StereoRef::ImplicitH);
                self.rings.insert(digit, RingOpen { atom, token, slot });
            }
            Some(open) => {
                if open.atom == atom {
                    return Err(self.err("ring bond from an atom to itself"));
                }
                let token = match (open.token, token) {
                    (Some(a), Some(b)) if a != b && !is_direction(a) && !is_direction(b) => {
                        return Err(self.err("conflicting ring-closure bond symbols"));
                    }
                    (Some(a), _) => Some((a, open.atom)),
                    (None, Some(b)) => Some((b, atom)),
                    (None, None) => None,
                };
                self.order[open.atom][open.slot] = StereoRef::Atom(atom);
                self.order[atom].push(StereoRef::Atom(open.atom));
                self.add_bond(open.atom, atom, token)?;
            }
        }
        Ok(())
    }

    fn bond(&mut self, from: usize, to: usize, token: Option<BondToken>) -> Result<(), ChemError> {
        self.order[from].push(StereoRef::Atom(to));
        // The new atom's first neighbour is the atom it was written after.
        self.order[to].insert(0, StereoRef::Atom(from));
        self.add_bond(from, to, token.map(|t| (t, from)))
    }

    fn add_bond(&mut self, a: usize, b: usize, token: Option<(BondToken, usize)>) -> Result<(), ChemError> {
        if self.bonds.iter().any(|x| x.contains(a) && x.contains(b)) {
            return Err(self.err(format!("duplicate bond between atoms {a} and {b}")));
        }
        let both_aromatic = self.atoms[a].is_aromatic && self.atoms[b].is_aromatic;
        let order = match token.map(|t| t.0) {
            None => {
                if both_aromatic {
                    BondOrder::Aromatic
                } else {
                    BondOrder::Single
                }
            }
            Some(BondToken::Single | BondToken::Up | BondToken::Down) => BondOrder::Single,
            Some(BondToken::Double) => BondOrder::Double,
            Some(BondToken::Triple) => BondOrder::Triple,
            Some(BondToken::Aromatic) => BondOrder::Aromatic,
        };
        self.bonds.push(Bond::new(a, b, order));
        self.directions.push(token.filter(|t| is_direction(t.0)));
        Ok(())
    }

    fn push_atom(&mut self, atom: Atom) -> usize {
        self.atoms.push(atom);
        self.order.push(Vec::new());
        self.atoms.len() - 1
    }

    fn atom(&mut self) -> Result<usize, ChemError> {
        let c = self.peek().expect("caller checked");
        if c == b'[' {
            return self.bracket_atom();
        }
        if c == b'*' {
            return Err(ChemError::Unsupported("wildcard atoms".into()));
        }
        let rest = &self.text[self.pos..];
        let (symbol, aromatic, len) = if rest.starts_with("Cl") {
            ("Cl", false, 2)
        } else if rest.starts_with("Br") {
            ("Br", false, 2)
        } else {
            match c {
                b'B' => ("B", false, 1),
                b'C' => ("C", false, 1),
                b'N' => ("N", false, 1),
                b'O' => ("O", false, 1),
                b'P' => ("P", false, 1),
                b'S' => ("S", false, 1),
                b'F' => ("F", false, 1),
                b'I' => ("I", false, 1),
                b'b' => ("B", true, 1),
                b'c' => ("C", true, 1),
                b'n' => ("N", true, 1),
                b'o' => ("O", true, 1),
                b'p' => ("P", true, 1),
                b's' => ("S", true, 1),
                _ if c.is_ascii_alphabetic() => {
                    return Err(ChemError::Unsupported(format!(
                        "element outside the organic subset at position {}",
                        self.pos
                    )))
                }
                _ => return Err(self.err(format!("unexpected character {:?}", c as char))),
            }
        };
        self.pos += len;
        let mut atom = Atom::new(element::from_symbol(symbol).expect("organic subset symbol"));
        atom.is_aromatic = aromatic;
        Ok(self.push_atom(atom))
    }

    fn bracket_atom(&mut self) -> Result<usize, ChemError> {
        let start = self.pos;
        let end = self.text[start..]
            .find(']')
            .map(|i| start + i)
            .ok_or_else(|| self.err("unclosed '['"))?;
        let body = &self.text[start + 1..end];
        self.pos = end + 1;
        let b = body.as_bytes();
        let mut i;

        if b.first().is_some_and(u8::is_ascii_digit) {
            return Err(ChemError::Unsupported(format!("isotope in [{body}]")));
        }
        if b.first() == Some(&b'*') {
            return Err(ChemError::Unsupported("wildcard atoms".into()));
        }
        // Element symbol: aromatic lowercase or capitalised with optional lowercase.
        let (elem, aromatic) = if b.first().is_some_and(u8::is_ascii_lowercase) {
            let two = body.get(0..2).unwrap_or("");
            if matches!(two, "se" | "as") {
                return Err(ChemError::Unsupported(format!("aromatic {two}")));
            }
            let sym = match b[0] {
                b'b' => "B",
                b'c' => "C",
                b'n' => "N",
                b'o' => "O",
                b'p' => "P",
                b's' => "S",
                _ => return Err(ChemError::Syntax(format!("bad aromatic symbol in [{body}]"))),
            };
            i = 1;
            (element::from_symbol(sym).expect("aromatic subset"), true)
        } else if b.first().is_some_and(u8::is_ascii_uppercase) {
            let two_letter = b.get(1).is_some_and(u8::is_ascii_lowercase);
            // Nothing valid follows an element symbol in lowercase.
            let candidates: &[usize] = if two_letter { &[2] } else { &[1] };
            let mut found = None;
            for &len in candidates {
                if let Some(e) = element::from_symbol(&body[..len]) {
                    found = Some((e, len));
                    break;
                }
            }
            let (e, len) = found.ok_or_else(|| {
                let sym = if two_letter { &body[..2] } else { &body[..1] };
                ChemError::Unsupported(format!("element {sym}"))
            })?;
            i = len;
            (e, false)
        } else {
            return Err(ChemError::Syntax(format!("missing element in [{body}]")));
        };

        let mut atom = Atom::new(elem);
        atom.is_aromatic = aromatic;
        atom.bracket = true;

        if b.get(i) == Some(&b'@') {
            i += 1;
            let mut tag = Chirality::Ccw;
            if b.get(i) == Some(&b'@') {
                i += 1;
                tag = Chirality::Cw;
            }
            if b.get(i).is_some_and(|c| c.is_ascii_uppercase() && *c != b'H') {
                // @TH1, @SP2, ... are accepted but not interpreted.
                while b.get(i).is_some_and(u8::is_ascii_alphanumeric) && b[i] != b'H' {
                    i += 1;
                }
                warn!("unsupported chirality class in [{body}] ignored");
                tag = Chirality::None;
            }
            atom.chirality = tag;
        }
        if b.get(i) == Some(&b'H') {
            i += 1;
            let mut n = 1u8;
            if b.get(i).is_some_and(u8::is_ascii_digit) {
                n = b[i] - b'0';
                i += 1;
            }
            atom.explicit_h = n;
        }
        if let Some(&sign) = b.get(i).filter(|c| **c == b'+' || **c == b'-') {
            i += 1;
            let unit: i8 = if sign == b'+' { 1 } else { -1 };
            let mut charge = unit;
            if b.get(i).is_some_and(u8::is_ascii_digit) {
                charge = unit * (b[i] - b'0') as i8;
                i += 1;
            } else {
                while b.get(i) == Some(&sign) {
                    charge += unit;
                    i += 1;
                }
            }
            atom.formal_charge = charge;
        }
        if b.get(i) == Some(&b':') {
            i += 1;
            if !b.get(i).is_some_and(u8::is_ascii_digit) {
                return Err(ChemError::Syntax(format!("atom class needs digits in [{body}]")));
            }
            while b.get(i).is_some_and(u8::is_ascii_digit) {
                i += 1;
            }
        }
        if i != b.len() {
            return Err(ChemError::Syntax(format!("unexpected {:?} in [{body}]", &body[i..])));
        }
        if aromatic && !element::can_be_aromatic(elem) {
            return Err(ChemError::Syntax(format!("{} cannot be aromatic", element::symbol(elem))));
        }
        let idx = self.push_atom(atom);
        if self.atoms[idx].explicit_h > 0 {
            self.order[idx].push(StereoRef::ImplicitH);
        }
        Ok(idx)
    }

    fn finish(mut self) -> Result<Molecule, ChemError> {
        for (i, atom) in self.atoms.iter_mut().enumerate() {
            if atom.chirality == Chirality::None {
                continue;
            }
            let refs = &self.order[i];
            if refs.len() < 3 {
                warn!("chirality on atom {i} with {} neighbours ignored", refs.len());
                atom.chirality = Chirality::None;
            } else {
                atom.chiral_refs = refs.clone();
            }
        }
        self.assign_double_bond_stereo();
        let atoms = std::mem::take(&mut self.atoms);
        let bonds = std::mem::take(&mut self.bonds);
        Molecule::from_parts(atoms, bonds, self.text.to_string())
    }

    /// Side (+1 up, -1 down) of `to` relative to `from` for a directional bond.
    fn side(&self, bond: usize, from: usize) -> Option<i8> {
        let (token, written_after) = self.directions[bond]?;
        let base: i8 = if token == BondToken::Up { 1 } else { -1 };
        Some(if written_after == from { base } else { -base })
    }

    fn assign_double_bond_stereo(&mut self) {
        for d in 0..self.bonds.len() {
            if self.bonds[d].order != BondOrder::Double {
                continue;
            }
            let (a, b) = (self.bonds[d].a1, self.bonds[d].a2);
            let pick = |atom: usize| {
                self.bonds
                    .iter()
                    .enumerate()
                    .filter(|&(j, bond)| j != d && bond.contains(atom))
                    .find_map(|(j, bond)| self.side(j, atom).map(|s| (bond.other(atom), s)))
            };
            match (pick(a), pick(b)) {
                (Some((x, sa)), Some((y, sb))) => {
                    let bond = &mut self.bonds[d];
                    bond.stereo = if sa != sb { BondStereo::E } else { BondStereo::Z };
                    bond.stereo_refs = Some((x, y));
                }
                (Some(_), None) | (None, Some(_)) => {
                    warn!("incomplete double-bond stereo around atoms {a}={b} ignored");
                }
                (None, None) => {}
            }
        }
    }
}

fn is_direction(t: BondToken) -> bool {
    matches!(t, BondToken::Up | BondToken::Down)
}
