//! 2D depiction coordinates: regular-polygon ring templates, zigzag chain
//! growth, clash relaxation for chain atoms and side-by-side components.

use std::f64::consts::PI;

use fragnet_chem::{BondOrder, Molecule};
use serde::{Deserialize, Serialize};

type P = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutBond {
    pub a1: usize,
    pub a2: usize,
    /// "single", "double", "triple" or "aromatic".
    pub order: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutResult {
    pub coords: Vec<P>,
    pub bonds: Vec<LayoutBond>,
}

const COMPONENT_GAP: f64 = 2.0;

fn sub(a: P, b: P) -> P {
    [a[0] - b[0], a[1] - b[1]]
}

fn add(a: P, b: P) -> P {
    [a[0] + b[0], a[1] + b[1]]
}

fn scale(a: P, f: f64) -> P {
    [a[0] * f, a[1] * f]
}

fn norm(a: P) -> f64 {
    a[0].hypot(a[1])
}

fn unit(a: P) -> P {
    let n = norm(a);
    if n < 1e-12 {
        [1.0, 0.0]
    } else {
        scale(a, 1.0 / n)
    }
}

fn rotate(a: P, theta: f64) -> P {
    let (s, c) = theta.sin_cos();
    [a[0] * c - a[1] * s, a[0] * s + a[1] * c]
}

pub fn layout_2d(mol: &Molecule) -> LayoutResult {
    let n = mol.atom_count();
    let mut coords = vec![[0.0, 0.0]; n];
    let mut offset_x = 0.0;
    let n_components = (0..n).map(|a| mol.component_of(a) + 1).max().unwrap_or(0);
    for c in 0..n_components {
        let atoms: Vec<usize> = (0..n).filter(|&a| mol.component_of(a) == c).collect();
        let local = layout_component(mol, &atoms);
        let min_x = atoms.iter().map(|&a| local[a][0]).fold(f64::INFINITY, f64::min);
        let max_x = atoms.iter().map(|&a| local[a][0]).fold(f64::NEG_INFINITY, f64::max);
        for &a in &atoms {
            coords[a] = [local[a][0] - min_x + offset_x, local[a][1]];
        }
        offset_x += max_x - min_x + COMPONENT_GAP;
    }
    separate_coincident(&mut coords);
    let bonds = mol
        .bonds
        .iter()
        .map(|b| LayoutBond {
            a1: b.a1,
            a2: b.a2,
            order: match b.order {
                BondOrder::Single => "single",
                BondOrder::Double => "double",
                BondOrder::Triple => "triple",
                BondOrder::Aromatic => "aromatic",
            }
            .into(),
        })
        .collect();
    LayoutResult { coords, bonds }
}

struct State<'a> {
    mol: &'a Molecule,
    pos: Vec<Option<P>>,
    /// Zigzag turn direction used when the atom was grown.
    turn: Vec<f64>,
    fixed: Vec<bool>,
}

impl State<'_> {
    fn placed_neighbors(&self, a: usize) -> Vec<P> {
        self.mol.neighbors(a).iter().filter_map(|&(m, _)| self.pos[m]).collect()
    }

    /// Regular polygon through `ring` with `ring[0]` at `anchor`, centred
    /// along `dir`.
    fn place_ring_from_atom(&mut self, ring: &[usize], anchor: P, dir: P) {
        let k = ring.len();
        let radius = 1.0 / (2.0 * (PI / k as f64).sin());
        let center = add(anchor, scale(unit(dir), radius));
        let start = sub(anchor, center);
        for (i, &a) in ring.iter().enumerate() {
            self.pos[a] = Some(add(center, rotate(start, 2.0 * PI * i as f64 / k as f64)));
            self.fixed[a] = true;
        }
    }

    /// Regular polygon sharing the placed edge `ring[0]-ring[1]`.
    fn place_fused(&mut self, ring: &[usize]) {
        let (u, v) = (self.pos[ring[0]].unwrap(), self.pos[ring[1]].unwrap());
        let k = ring.len();
        let side = norm(sub(v, u));
        let apothem = side / (2.0 * (PI / k as f64).tan());
        let mid = scale(add(u, v), 0.5);
        let mut others: Vec<P> = Vec::new();
        for &end in &ring[..2] {
            for &(m, _) in self.mol.neighbors(end) {
                if m != ring[0] && m != ring[1] {
                    if let Some(p) = self.pos[m] {
                        others.push(p);
                    }
                }
            }
        }
        let edge = sub(v, u);
        let mut normal = [-edge[1], edge[0]];
        if !others.is_empty() {
            let c = scale(others.iter().fold([0.0, 0.0], |s, p| add(s, *p)), 1.0 / others.len() as f64);
            if normal[0] * (c[0] - mid[0]) + normal[1] * (c[1] - mid[1]) > 0.0 {
                normal = scale(normal, -1.0);
            }
        }
        let center = add(mid, scale(unit(normal), apothem));
        let step = 2.0 * PI / k as f64;
        // Pick the rotation sense that carries u onto v.
        let su = sub(u, center);
        let sign = if norm(sub(add(center, rotate(su, step)), v)) < norm(sub(add(center, rotate(su, -step)), v)) {
            1.0
        } else {
            -1.0
        };
        for (i, &a) in ring.iter().enumerate().skip(2) {
            self.pos[a] = Some(add(center, rotate(su, sign * step * i as f64)));
        }
        for &a in ring {
            self.fixed[a] = true;
        }
    }

    /// Closes a ring whose first `run` atoms are placed with unit chords
    /// on a circular arc bulging away from the placed path.
    fn place_arc(&mut self, ring: &[usize], run: usize) {
        let k = ring.len();
        let m = k - run;
        let s = self.pos[ring[0]].unwrap();
        let e = self.pos[ring[run - 1]].unwrap();
        let c = norm(sub(s, e));
        let chords = (m + 1) as f64;
        // Half-angle beta with sin(beta) / sin(beta / chords) = c.
        let f = |b: f64| b.sin() / (b / chords).sin();
        let (mut lo, mut hi) = (1e-9, PI - 1e-9);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > c {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let beta = 0.5 * (lo + hi);
        let radius = 1.0 / (2.0 * (beta / chords).sin());
        let mid = scale(add(s, e), 0.5);
        let path_c = scale(ring[..run].iter().fold([0.0, 0.0], |acc, &a| add(acc, self.pos[a].unwrap())), 1.0 / run as f64);
        let chord = sub(s, e);
        let mut normal = unit([-chord[1], chord[0]]);
        if normal[0] * (path_c[0] - mid[0]) + normal[1] * (path_c[1] - mid[1]) > 0.0 {
            normal = scale(normal, -1.0);
        }
        let center = sub(mid, scale(normal, radius * beta.cos()));
        let apex = add(center, scale(normal, radius));
        let se = sub(e, center);
        let sign = if norm(sub(add(center, rotate(se, beta)), apex)) < norm(sub(add(center, rotate(se, -beta)), apex)) {
            1.0
        } else {
            -1.0
        };
        let step = 2.0 * beta / chords;
        for (j, &a) in ring[run..].iter().enumerate() {
            self.pos[a] = Some(add(center, rotate(se, sign * step * (j + 1) as f64)));
        }
        for &a in ring {
            self.fixed[a] = true;
        }
    }

    /// Places a ring touching the layout, if one is ready. Fused edges win
    /// over single-atom attachments.
    fn try_ring(&mut self, rings: &[Vec<usize>]) -> bool {
        let mut single = None;
        for ring in rings {
            let placed: Vec<bool> = ring.iter().map(|&a| self.pos[a].is_some()).collect();
            let count = placed.iter().filter(|&&p| p).count();
            if count == 0 || count == ring.len() {
                continue;
            }
            if count >= 2 {
                let k = ring.len();
                // Start of the placed run; the run must be the only one.
                if let Some(i) = (0..k).find(|&i| placed[i] && !placed[(i + k - 1) % k]) {
                    let run = (0..k).take_while(|&j| placed[(i + j) % k]).count();
                    if run == count {
                        let rotated: Vec<usize> = (0..k).map(|j| ring[(i + j) % k]).collect();
                        if count == 2 {
                            self.place_fused(&rotated);
                        } else {
                            self.place_arc(&rotated, count);
                        }
                        return true;
                    }
                }
            }
            if count == 1 && single.is_none() {
                single = Some(ring);
            }
        }
        if let Some(ring) = single {
            let k = ring.len();
            let i = (0..k).find(|&i| self.pos[ring[i]].is_some()).unwrap();
            let rotated: Vec<usize> = (0..k).map(|j| ring[(i + j) % k]).collect();
            let anchor = self.pos[rotated[0]].unwrap();
            let nbrs = self.placed_neighbors(rotated[0]);
            let dir = if nbrs.is_empty() {
                [1.0, 0.0]
            } else {
                nbrs.iter().fold([0.0, 0.0], |s, p| add(s, unit(sub(anchor, *p))))
            };
            self.place_ring_from_atom(&rotated, anchor, dir);
            return true;
        }
        false
    }

    /// Places every unplaced neighbour of the first atom that has one.
    fn grow(&mut self, atoms: &[usize]) -> bool {
        for &a in atoms {
            let Some(pa) = self.pos[a] else { continue };
            let todo: Vec<usize> = self
                .mol
                .neighbors(a)
                .iter()
                .map(|&(m, _)| m)
                .filter(|&m| self.pos[m].is_none())
                .collect();
            if todo.is_empty() {
                continue;
            }
            let placed = self.placed_neighbors(a);
            let linear = self.mol.neighbors(a).iter().any(|&(_, b)| self.mol.bonds[b].order == BondOrder::Triple)
                || self.mol.neighbors(a).iter().filter(|&&(_, b)| self.mol.bonds[b].order == BondOrder::Double).count() == 2;
            let angles: Vec<f64> = match (placed.len(), todo.len()) {
                (0, k) => (0..k).map(|i| -2.0 * PI * i as f64 / k.max(3) as f64).collect(),
                (1, 1) if linear => vec![0.0],
                (1, 1) => vec![self.turn[a] * PI / 3.0],
                (1, 2) => vec![PI / 3.0, -PI / 3.0],
                (1, k) => (0..k).map(|i| PI / 2.0 - PI * i as f64 / (k - 1) as f64).collect(),
                (_, 1) => vec![0.0],
                (_, k) => (0..k).map(|i| PI / 6.0 * (i as f64 - (k - 1) as f64 / 2.0)).collect(),
            };
            let base = if placed.is_empty() {
                [1.0, 0.0]
            } else {
                unit(placed.iter().fold([0.0, 0.0], |s, p| add(s, unit(sub(pa, *p)))))
            };
            for (m, theta) in todo.into_iter().zip(angles) {
                self.pos[m] = Some(add(pa, rotate(base, theta)));
                self.turn[m] = -self.turn[a];
            }
            return true;
        }
        false
    }
}

fn layout_component(mol: &Molecule, atoms: &[usize]) -> Vec<P> {
    let n = mol.atom_count();
    let mut st = State {
        mol,
        pos: vec![None; n],
        turn: vec![1.0; n],
        fixed: vec![false; n],
    };
    let rings: Vec<Vec<usize>> = mol
        .rings()
        .iter()
        .filter(|r| mol.component_of(r[0]) == mol.component_of(atoms[0]))
        .cloned()
        .collect();
    if let Some(first) = rings.first() {
        st.place_ring_from_atom(first, [0.0, 0.0], [1.0, 0.0]);
    } else {
        st.pos[atoms[0]] = Some([0.0, 0.0]);
    }
    while atoms.iter().any(|&a| st.pos[a].is_none()) {
        if !st.try_ring(&rings) && !st.grow(atoms) {
            break;
        }
    }
    let mut out: Vec<P> = st.pos.iter().map(|p| p.unwrap_or([0.0, 0.0])).collect();
    relax(mol, atoms, &st.fixed, &mut out);
    out
}

/// Pushes apart non-bonded chain atoms that ended up too close, keeping
/// bond lengths near 1. Ring atoms stay on their templates.
fn relax(mol: &Molecule, atoms: &[usize], fixed: &[bool], pos: &mut [P]) {
    let clash = |pos: &[P]| {
        atoms.iter().any(|&a| {
            atoms
                .iter()
                .any(|&b| a < b && mol.bond_between(a, b).is_none() && norm(sub(pos[a], pos[b])) < 0.5)
        })
    };
    if !clash(pos) || atoms.iter().all(|&a| fixed[a]) {
        return;
    }
    for _ in 0..300 {
        let mut force = vec![[0.0, 0.0]; pos.len()];
        for (i, &a) in atoms.iter().enumerate() {
            for &b in &atoms[i + 1..] {
                let d = sub(pos[a], pos[b]);
                let r = norm(d).max(1e-3);
                let f = if mol.bond_between(a, b).is_some() {
                    scale(unit(d), -(r - 1.0) * 0.5)
                } else if r < 1.5 {
                    scale(unit(d), 0.1 * (1.5 - r))
                } else {
                    continue;
                };
                force[a] = add(force[a], f);
                force[b] = sub(force[b], f);
            }
        }
        for &a in atoms {
            if !fixed[a] {
                pos[a] = add(pos[a], force[a]);
            }
        }
    }
}

/// Guarantees distinct coordinates with small deterministic nudges.
fn separate_coincident(coords: &mut [P]) {
    for i in 0..coords.len() {
        let mut k = 1.0;
        while (0..i).any(|j| norm(sub(coords[i], coords[j])) < 1e-6) {
            coords[i] = add(coords[i], [0.1 * k, 0.07 * k]);
            k += 1.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fragnet_chem::parse_smiles;

    fn dist(l: &LayoutResult, a: usize, b: usize) -> f64 {
        norm(sub(l.coords[a], l.coords[b]))
    }

    #[test]
    fn benzene_is_a_regular_hexagon() {
        let l = layout_2d(&parse_smiles("c1ccccc1").unwrap());
        let c = scale(l.coords.iter().fold([0.0, 0.0], |s, p| add(s, *p)), 1.0 / 6.0);
        for i in 0..6 {
            assert!((dist(&l, i, (i + 1) % 6) - 1.0).abs() < 1e-6);
            assert!((norm(sub(l.coords[i], c)) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn ethanol_bonds_match() {
        let l = layout_2d(&parse_smiles("CCO").unwrap());
        let (a, b) = (dist(&l, 0, 1), dist(&l, 1, 2));
        assert!((a / b - 1.0).abs() < 0.05);
    }

    #[test]
    fn naphthalene_rings_share_an_edge() {
        let l = layout_2d(&parse_smiles("c1ccc2ccccc2c1").unwrap());
        for b in &l.bonds {
            assert!((dist(&l, b.a1, b.a2) - 1.0).abs() < 1e-6);
        }
    }
}
