use std::collections::BTreeMap;

use log::warn;

use crate::element;
use crate::molecule::{BondOrder, BondStereo, Chirality, Molecule, StereoRef};
use crate::perceive::default_hydrogens;

/// Upper bound on tie-breaking leaves explored per molecule.
const MAX_LEAVES: usize = 2000;

#[derive(Debug, Clone)]
struct Node {
    /// 0 marks an attachment point.
    element: u8,
    aromatic: bool,
    charge: i8,
    total_h: u8,
    radicals: u8,
    in_ring: bool,
    chirality: Chirality,
    /// `None` stands for the implicit hydrogen.
    chiral_refs: Vec<Option<usize>>,
}

#[derive(Debug, Clone)]
struct Edge {
    a: usize,
    b: usize,
    order: BondOrder,
    stereo: BondStereo,
    refs: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
struct Graph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    adj: Vec<Vec<(usize, usize)>>,
}

impl Graph {
    fn build(nodes: Vec<Node>, edges: Vec<Edge>) -> Self {
        let mut adj = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            adj[e.a].push((e.b, i));
            adj[e.b].push((e.a, i));
        }
        Self { nodes, edges, adj }
    }

    /// Graph of the atoms in `subset`, with a dummy node per bond leaving it.
    fn from_molecule(mol: &Molecule, subset: &[usize]) -> Self {
        let mut index = vec![usize::MAX; mol.atoms.len()];
        for (k, &a) in subset.iter().enumerate() {
            index[a] = k;
        }
        let mut nodes: Vec<Node> = subset
            .iter()
            .map(|&a| {
                let atom = &mol.atoms[a];
                Node {
                    element: atom.element,
                    aromatic: atom.is_aromatic,
                    charge: atom.formal_charge,
                    total_h: atom.total_h(),
                    radicals: atom.radical_electrons,
                    in_ring: atom.in_ring,
                    chirality: atom.chirality,
                    chiral_refs: Vec::new(),
                }
            })
            .collect();
        let mut edges = Vec::new();
        // (inside atom, outside atom) -> dummy node
        let mut dummies: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for bond in &mol.bonds {
            let (ia, ib) = (index[bond.a1], index[bond.a2]);
            let (a, b) = match (ia != usize::MAX, ib != usize::MAX) {
                (true, true) => (ia, ib),
                (true, false) | (false, true) => {
                    let (inside, outside) = if ia != usize::MAX { (bond.a1, bond.a2) } else { (bond.a2, bond.a1) };
                    let d = nodes.len();
                    nodes.push(Node {
                        element: 0,
                        aromatic: false,
                        charge: 0,
                        total_h: 0,
                        radicals: 0,
                        in_ring: false,
                        chirality: Chirality::None,
                        chiral_refs: Vec::new(),
                    });
                    dummies.insert((inside, outside), d);
                    edges.push(Edge {
                        a: index[inside],
                        b: d,
                        order: bond.order,
                        stereo: BondStereo::None,
                        refs: None,
                    });
                    continue;
                }
                (false, false) => continue,
            };
            edges.push(Edge {
                a,
                b,
                order: bond.order,
                stereo: bond.stereo,
                refs: None,
            });
        }
        let map_ref = |from: usize, other: usize| -> Option<usize> {
            if index[other] != usize::MAX {
                Some(index[other])
            } else {
                dummies.get(&(from, other)).copied()
            }
        };
        for (k, &a) in subset.iter().enumerate() {
            let atom = &mol.atoms[a];
            if atom.chirality == Chirality::None {
                continue;
            }
            let refs: Option<Vec<Option<usize>>> = atom
                .chiral_refs
                .iter()
                .map(|r| match r {
                    StereoRef::Atom(n) => map_ref(a, *n).map(Some),
                    StereoRef::ImplicitH => Some(None),
                })
                .collect();
            match refs {
                Some(r) => nodes[k].chiral_refs = r,
                None => nodes[k].chirality = Chirality::None,
            }
        }
        // Double-bond references, in edge order of the internal bonds.
        for bond in &mol.bonds {
            if index[bond.a1] == usize::MAX && index[bond.a2] == usize::MAX {
                continue;
            }
            let edge_pos = edges
                .iter()
                .position(|e| {
                    let (x, y) = (e.a, e.b);
                    (x == index[bond.a1] && y == index[bond.a2]) || (x == index[bond.a2] && y == index[bond.a1])
                });
            let Some(pos) = edge_pos else { continue };
            if let Some((x, y)) = bond.stereo_refs {
                let rx = map_ref(bond.a1, x);
                let ry = map_ref(bond.a2, y);
                match (rx, ry) {
                    (Some(rx), Some(ry)) => {
                        let e = &mut edges[pos];
                        // Keep refs oriented as (neighbour of e.a, neighbour of e.b).
                        e.refs = if e.a == index[bond.a1] { Some((rx, ry)) } else { Some((ry, rx)) };
                    }
                    _ => edges[pos].stereo = BondStereo::None,
                }
            } else {
                edges[pos].stereo = BondStereo::None;
            }
        }
        Self::build(nodes, edges)
    }

    fn sigma(&self, n: usize) -> u8 {
        self.adj[n].iter().map(|&(_, e)| self.edges[e].order.sigma_valence()).sum()
    }

    fn has_double(&self, n: usize) -> bool {
        self.adj[n].iter().any(|&(_, e)| self.edges[e].order == BondOrder::Double)
    }

    fn components(&self) -> Vec<Vec<usize>> {
        let n = self.nodes.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut stack = vec![s];
            let mut comp = vec![s];
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                        comp.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

fn order_code(o: BondOrder) -> u8 {
    match o {
        BondOrder::Single => 1,
        BondOrder::Double => 2,
        BondOrder::Triple => 3,
        BondOrder::Aromatic => 4,
    }
}

/// Dense ranks: each entry is the number of strictly smaller keys.
fn ranks_from_keys<K: Ord>(keys: &[K]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut ranks = vec![0; keys.len()];
    for (pos, &i) in idx.iter().enumerate() {
        ranks[i] = if pos > 0 && keys[idx[pos - 1]] == keys[i] { ranks[idx[pos - 1]] } else { pos };
    }
    ranks
}

fn class_count(ranks: &[usize]) -> usize {
    let mut r = ranks.to_vec();
    r.sort_unstable();
    r.dedup();
    r.len()
}

fn initial_ranks(g: &Graph) -> Vec<usize> {
    let keys: Vec<_> = g
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| {
            (
                n.element == 0,
                g.adj[i].len(),
                n.element,
                n.aromatic,
                n.charge,
                n.total_h,
                n.radicals,
                n.in_ring,
            )
        })
        .collect();
    ranks_from_keys(&keys)
}

fn refine(g: &Graph, mut ranks: Vec<usize>) -> Vec<usize> {
    let mut classes = class_count(&ranks);
    loop {
        let keys: Vec<(usize, Vec<(usize, u8)>)> = (0..g.nodes.len())
            .map(|i| {
                let mut nb: Vec<(usize, u8)> =
                    g.adj[i].iter().map(|&(v, e)| (ranks[v], order_code(g.edges[e].order))).collect();
                nb.sort_unstable();
                (ranks[i], nb)
            })
            .collect();
        let next = ranks_from_keys(&keys);
        let c = class_count(&next);
        ranks = next;
        if c == classes {
            return ranks;
        }
        classes = c;
    }
}

fn symmetry_classes(g: &Graph) -> Vec<usize> {
    refine(g, initial_ranks(g))
}

/// Symmetry classes of atoms: equal values mean the atoms are
/// indistinguishable by iterated neighbourhood refinement.
pub fn canonical_ranks(mol: &Molecule) -> Vec<usize> {
    let all: Vec<usize> = (0..mol.atoms.len()).collect();
    symmetry_classes(&Graph::from_molecule(mol, &all))
}

/// Canonical SMILES of the whole molecule.
pub fn to_smiles(mol: &Molecule) -> String {
    let all: Vec<usize> = (0..mol.atoms.len()).collect();
    canonical(&Graph::from_molecule(mol, &all))
}

/// Canonical SMILES of the atoms in `atoms`, with `[*]` for each bond that
/// leaves the set. Hydrogen counts are taken from the parent molecule.
pub fn to_smiles_with_dummies(mol: &Molecule, atoms: &[usize]) -> String {
    let mut subset = atoms.to_vec();
    subset.sort_unstable();
    subset.dedup();
    canonical(&Graph::from_molecule(mol, &subset))
}

fn canonical(g: &Graph) -> String {
    if g.nodes.is_empty() {
        return String::new();
    }
    let mut parts: Vec<String> = g
        .components()
        .into_iter()
        .map(|comp| {
            let sub = induced(g, &comp);
            let base = symmetry_classes(&sub);
            let mut best: Option<String> = None;
            let mut leaves = 0;
            search(&sub, base, &mut best, &mut leaves);
            best.expect("at least one leaf")
        })
        .collect();
    parts.sort();
    parts.join(".")
}

fn induced(g: &Graph, comp: &[usize]) -> Graph {
    let mut index = vec![usize::MAX; g.nodes.len()];
    for (k, &a) in comp.iter().enumerate() {
        index[a] = k;
    }
    let nodes = comp
        .iter()
        .map(|&a| {
            let mut n = g.nodes[a].clone();
            n.chiral_refs = n.chiral_refs.iter().map(|r| r.map(|x| index[x])).collect();
            n
        })
        .collect();
    let edges = g
        .edges
        .iter()
        .filter(|e| index[e.a] != usize::MAX)
        .map(|e| Edge {
            a: index[e.a],
            b: index[e.b],
            order: e.order,
            stereo: e.stereo,
            refs: e.refs.map(|(x, y)| (index[x], index[y])),
        })
        .collect();
    Graph::build(nodes, edges)
}

fn search(g: &Graph, ranks: Vec<usize>, best: &mut Option<String>, leaves: &mut usize) {
    let n = ranks.len();
    // Smallest rank value shared by more than one atom.
    let mut counts = vec![0usize; n];
    for &r in &ranks {
        counts[r] += 1;
    }
    let tied = (0..n).find(|&r| counts[r] > 1);
    let Some(r) = tied else {
        *leaves += 1;
        let s = emit(g, &ranks);
        if best.as_ref().is_none_or(|b| s < *b) {
            *best = Some(s);
        }
        return;
    };
    let members: Vec<usize> = (0..n).filter(|&i| ranks[i] == r).collect();
    for (k, &chosen) in members.iter().enumerate() {
        if k > 0 && *leaves >= MAX_LEAVES {
            break;
        }
        let mut next = ranks.clone();
        for &m in &members {
            if m != chosen {
                next[m] = r + 1;
            }
        }
        search(g, refine(g, next), best, leaves);
    }
}

struct Layout {
    parent_edge: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    /// Ring-closure edges per atom, in the order their digits are written.
    ring_edges: Vec<Vec<usize>>,
    visit: Vec<usize>,
    /// Per edge: the atom written first.
    written_from: Vec<usize>,
}

fn layout(g: &Graph, ranks: &[usize], start: usize) -> Layout {
    let n = g.nodes.len();
    let mut l = Layout {
        parent_edge: vec![None; n],
        children: vec![Vec::new(); n],
        ring_edges: vec![Vec::new(); n],
        visit: vec![usize::MAX; n],
        written_from: vec![usize::MAX; g.edges.len()],
    };
    let mut counter = 0;
    let mut ring_seen = vec![false; g.edges.len()];
    dfs(g, ranks, start, None, &mut l, &mut counter, &mut ring_seen);
    // Openings are written with the atom; order closures then openings by partner visit time.
    for u in 0..n {
        let visit = &l.visit;
        let edges = &g.edges;
        l.ring_edges[u].sort_by_key(|&e| {
            let other = if edges[e].a == u { edges[e].b } else { edges[e].a };
            visit[other]
        });
    }
    l
}

fn dfs(
    g: &Graph,
    ranks: &[usize],
    u: usize,
    parent: Option<usize>,
    l: &mut Layout,
    counter: &mut usize,
    ring_seen: &mut [bool],
) {
    l.visit[u] = *counter;
    *counter += 1;
    let mut nbrs = g.adj[u].clone();
    nbrs.sort_by_key(|&(v, _)| ranks[v]);
    // Ring closures are discovered before descending so digits precede branches.
    for &(v, e) in &nbrs {
        if Some(e) == parent || l.visit[v] == usize::MAX || ring_seen[e] {
            continue;
        }
        ring_seen[e] = true;
        l.ring_edges[u].push(e);
        l.ring_edges[v].push(e);
        l.written_from[e] = v;
    }
    for &(v, e) in &nbrs {
        if Some(e) == parent || ring_seen[e] {
            continue;
        }
        if l.visit[v] != usize::MAX {
            // Became visited inside an earlier sibling subtree: a ring closure
            // opened at v and closed here would have been recorded by v.
            continue;
        }
        l.parent_edge[v] = Some(e);
        l.children[u].push(v);
        l.written_from[e] = u;
        dfs(g, ranks, v, Some(e), l, counter, ring_seen);
    }
}

fn emit(g: &Graph, ranks: &[usize]) -> String {
    let start = (0..g.nodes.len()).min_by_key(|&i| ranks[i]).expect("non-empty component");
    let l = layout(g, ranks, start);
    let markers = direction_markers(g, &l);
    let mut out = String::new();
    let mut digits: BTreeMap<usize, usize> = BTreeMap::new();
    let mut free: Vec<bool> = vec![true; 100];
    write_atom(g, &l, &markers, start, &mut out, &mut digits, &mut free);
    out
}

fn write_atom(
    g: &Graph,
    l: &Layout,
    markers: &[Option<char>],
    u: usize,
    out: &mut String,
    digits: &mut BTreeMap<usize, usize>,
    free: &mut [bool],
) {
    // Neighbour order as a reader will see it.
    let mut seen_order: Vec<Option<usize>> = Vec::new();
    if let Some(e) = l.parent_edge[u] {
        seen_order.push(Some(other(g, e, u)));
    }
    let node = &g.nodes[u];
    let bracket = needs_bracket(g, u);
    if bracket && node.total_h > 0 && node.chirality != Chirality::None {
        seen_order.push(None);
    }
    for &e in &l.ring_edges[u] {
        seen_order.push(Some(other(g, e, u)));
    }
    for &c in &l.children[u] {
        seen_order.push(Some(c));
    }
    out.push_str(&atom_symbol(g, u, bracket, &seen_order));

    let mut released = Vec::new();
    for &e in &l.ring_edges[u] {
        if let Some(d) = digits.remove(&e) {
            released.push(d);
            push_digit(out, d);
        } else {
            let d = (1..100).find(|&d| free[d]).expect("fewer than 100 open rings");
            free[d] = false;
            digits.insert(e, d);
            out.push_str(&bond_symbol(g, markers, e));
            push_digit(out, d);
        }
    }
    for d in released {
        free[d] = true;
    }
    let n = l.children[u].len();
    for (k, &c) in l.children[u].iter().enumerate() {
        let e = l.parent_edge[c].expect("child has a parent edge");
        let branch = k + 1 < n;
        if branch {
            out.push('(');
        }
        out.push_str(&bond_symbol(g, markers, e));
        write_atom(g, l, markers, c, out, digits, free);
        if branch {
            out.push(')');
        }
    }
}

fn push_digit(out: &mut String, d: usize) {
    if d < 10 {
        out.push(char::from(b'0' + d as u8));
    } else {
        out.push_str(&format!("%{d:02}"));
    }
}

fn other(g: &Graph, e: usize, u: usize) -> usize {
    if g.edges[e].a == u {
        g.edges[e].b
    } else {
        g.edges[e].a
    }
}

fn needs_bracket(g: &Graph, u: usize) -> bool {
    let n = &g.nodes[u];
    if n.element == 0 || n.chirality != Chirality::None || n.charge != 0 || n.radicals != 0 {
        return true;
    }
    if !element::is_organic(n.element) {
        return true;
    }
    match default_hydrogens(n.element, n.aromatic, g.sigma(u), g.has_double(u)) {
        Ok(h) => h != n.total_h,
        Err(_) => true,
    }
}

fn atom_symbol(g: &Graph, u: usize, bracket: bool, seen_order: &[Option<usize>]) -> String {
    let n = &g.nodes[u];
    if n.element == 0 {
        return "[*]".into();
    }
    let mut sym = element::symbol(n.element).to_string();
    if n.aromatic {
        sym = sym.to_lowercase();
    }
    if !bracket {
        return sym;
    }
    let mut s = format!("[{sym}");
    match chirality_tag(n, seen_order) {
        Chirality::Ccw => s.push('@'),
        Chirality::Cw => s.push_str("@@"),
        Chirality::None => {}
    }
    match n.total_h {
        0 => {}
        1 => s.push('H'),
        h => s.push_str(&format!("H{h}")),
    }
    match n.charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        c if c > 0 => s.push_str(&format!("+{c}")),
        c => s.push_str(&format!("-{}", -c)),
    }
    s.push(']');
    s
}

/// Tag relative to the written neighbour order.
fn chirality_tag(n: &Node, seen_order: &[Option<usize>]) -> Chirality {
    if n.chirality == Chirality::None {
        return Chirality::None;
    }
    let refs = &n.chiral_refs;
    if refs.len() != seen_order.len() {
        return Chirality::None;
    }
    let mut perm = Vec::with_capacity(refs.len());
    for r in seen_order {
        match refs.iter().position(|x| x == r) {
            Some(p) => perm.push(p),
            None => return Chirality::None,
        }
    }
    if permutation_is_odd(&perm) {
        match n.chirality {
            Chirality::Cw => Chirality::Ccw,
            Chirality::Ccw => Chirality::Cw,
            Chirality::None => Chirality::None,
        }
    } else {
        n.chirality
    }
}

fn permutation_is_odd(perm: &[usize]) -> bool {
    let mut inversions = 0;
    for i in 0..perm.len() {
        for j in i + 1..perm.len() {
            if perm[i] > perm[j] {
                inversions += 1;
            }
        }
    }
    inversions % 2 == 1
}

fn bond_symbol(g: &Graph, markers: &[Option<char>], e: usize) -> String {
    let edge = &g.edges[e];
    let both_aromatic = g.nodes[edge.a].aromatic && g.nodes[edge.b].aromatic;
    match edge.order {
        BondOrder::Double => "=".into(),
        BondOrder::Triple => "#".into(),
        BondOrder::Aromatic => {
            if both_aromatic {
                String::new()
            } else {
                ":".into()
            }
        }
        BondOrder::Single => match markers[e] {
            Some(c) => c.to_string(),
            None if both_aromatic => "-".into(),
            None => String::new(),
        },
    }
}

/// Chooses '/' or '\' per single bond so every E/Z double bond reads back.
/// Markers go on the earliest-visited neighbour bond of each end, and the
/// first written marker of a free double bond is always '/'.
fn direction_markers(g: &Graph, l: &Layout) -> Vec<Option<char>> {
    let mut markers: Vec<Option<char>> = vec![None; g.edges.len()];
    let side_of = |markers: &[Option<char>], s: usize, from: usize| -> Option<i8> {
        let base: i8 = if markers[s]? == '/' { 1 } else { -1 };
        Some(if l.written_from[s] == from { base } else { -base })
    };
    let set_side = |markers: &mut [Option<char>], s: usize, from: usize, side: i8| {
        let base = if l.written_from[s] == from { side } else { -side };
        markers[s] = Some(if base > 0 { '/' } else { '\\' });
    };
    let written_at = |e: usize| l.visit[g.edges[e].a].max(l.visit[g.edges[e].b]);

    let mut doubles: Vec<usize> = (0..g.edges.len())
        .filter(|&d| g.edges[d].order == BondOrder::Double && g.edges[d].stereo != BondStereo::None)
        .collect();
    doubles.sort_by_key(|&d| l.visit[g.edges[d].a].min(l.visit[g.edges[d].b]));

    for d in doubles {
        let edge = &g.edges[d];
        let Some((x, y)) = edge.refs else { continue };
        // Single-bond neighbours of one end, earliest visited first.
        let singles = |end: usize, skip: usize| -> Vec<(usize, usize)> {
            let mut v: Vec<(usize, usize)> = g.adj[end]
                .iter()
                .filter(|&&(v, e)| v != skip && e != d && g.edges[e].order == BondOrder::Single)
                .copied()
                .collect();
            v.sort_by_key(|&(n, _)| l.visit[n]);
            v
        };
        let sa = singles(edge.a, edge.b);
        let sb = singles(edge.b, edge.a);
        if !sa.iter().any(|&(v, _)| v == x) || !sb.iter().any(|&(v, _)| v == y) {
            continue;
        }
        // Side of the reference neighbour implied by an existing marker.
        let fixed = |markers: &[Option<char>], end: usize, list: &[(usize, usize)], r: usize| -> Option<i8> {
            list.iter()
                .find_map(|&(v, s)| side_of(markers, s, end).map(|side| if v == r { side } else { -side }))
        };
        let want_same = edge.stereo == BondStereo::Z;
        let fa = fixed(&markers, edge.a, &sa, x);
        let fb = fixed(&markers, edge.b, &sb, y);
        let (na, ba) = sa[0];
        let (nb, bb) = sb[0];
        let (side_x, side_y) = match (fa, fb) {
            (Some(a), Some(b)) => {
                if (a == b) != want_same {
                    warn!("conflicting double-bond stereo markers; stereo dropped");
                }
                continue;
            }
            (Some(a), None) => (a, if want_same { a } else { -a }),
            (None, Some(b)) => (if want_same { b } else { -b }, b),
            (None, None) => {
                // Pick the side that makes the earlier written bond '/'.
                let first_is_a = written_at(ba) <= written_at(bb);
                let (bond, end, n, r) = if first_is_a { (ba, edge.a, na, x) } else { (bb, edge.b, nb, y) };
                let side_n = if l.written_from[bond] == end { 1 } else { -1 };
                let side_r = if n == r { side_n } else { -side_n };
                let other = if want_same { side_r } else { -side_r };
                if first_is_a {
                    (side_r, other)
                } else {
                    (other, side_r)
                }
            }
        };
        if fa.is_none() {
            set_side(&mut markers, ba, edge.a, if na == x { side_x } else { -side_x });
        }
        if fb.is_none() {
            set_side(&mut markers, bb, edge.b, if nb == y { side_y } else { -side_y });
        }
    }
    markers
}
