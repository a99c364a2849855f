//! Smallest set of smallest rings via Horton candidates and GF(2) elimination.

/// Returns the minimum cycle basis as ordered atom cycles, sorted by size
/// and then by atom content.
pub(crate) fn sssr(n_atoms: usize, bonds: &[(usize, usize)], adjacency: &[Vec<(usize, usize)>], components: usize) -> Vec<Vec<usize>> {
    let rank = (bonds.len() + components).saturating_sub(n_atoms);
    if rank == 0 {
        return Vec::new();
    }
    let words = bonds.len().div_ceil(64);
    let mut candidates: Vec<(usize, Vec<u64>)> = Vec::new();

    for root in 0..n_atoms {
        let (dist, parent_edge) = bfs(root, n_atoms, adjacency);
        for (e, &(x, y)) in bonds.iter().enumerate() {
            if dist[x] == usize::MAX || dist[y] == usize::MAX {
                continue;
            }
            if parent_edge[x] == Some(e) || parent_edge[y] == Some(e) {
                continue;
            }
            let px = path_to_root(x, bonds, &parent_edge);
            let py = path_to_root(y, bonds, &parent_edge);
            // Paths must share only the root.
            let atoms_x = path_atoms(x, bonds, &px);
            let atoms_y = path_atoms(y, bonds, &py);
            if atoms_x.iter().filter(|a| atoms_y.contains(a)).count() != 1 {
                continue;
            }
            let mut bits = vec![0u64; words];
            for &pe in px.iter().chain(&py) {
                bits[pe / 64] |= 1 << (pe % 64);
            }
            bits[e / 64] |= 1 << (e % 64);
            let len = px.len() + py.len() + 1;
            candidates.push((len, bits));
        }
    }
    candidates.sort();
    candidates.dedup();

    let mut basis: Vec<Vec<u64>> = Vec::new();
    let mut chosen = Vec::new();
    for (_, cycle) in candidates {
        let mut reduced = cycle.clone();
        for row in &basis {
            let pivot = lowest_bit(row).expect("basis rows are non-zero");
            if reduced[pivot / 64] >> (pivot % 64) & 1 == 1 {
                for (r, b) in reduced.iter_mut().zip(row) {
                    *r ^= b;
                }
            }
        }
        if lowest_bit(&reduced).is_some() {
            basis.push(reduced);
            // Keep basis rows with distinct pivots for the elimination above.
            basis.sort_by_key(|r| lowest_bit(r));
            chosen.push(cycle);
            if chosen.len() == rank {
                break;
            }
        }
    }

    let mut rings: Vec<Vec<usize>> = chosen.iter().map(|bits| order_cycle(bits, bonds)).collect();
    rings.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| {
        let mut sa = a.clone();
        let mut sb = b.clone();
        sa.sort_unstable();
        sb.sort_unstable();
        sa.cmp(&sb)
    }));
    rings
}

fn lowest_bit(bits: &[u64]) -> Option<usize> {
    bits.iter()
        .enumerate()
        .find(|(_, w)| **w != 0)
        .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
}

fn bfs(root: usize, n: usize, adjacency: &[Vec<(usize, usize)>]) -> (Vec<usize>, Vec<Option<usize>>) {
    let mut dist = vec![usize::MAX; n];
    let mut parent = vec![None; n];
    let mut queue = std::collections::VecDeque::new();
    dist[root] = 0;
    queue.push_back(root);
    while let Some(u) = queue.pop_front() {
        for &(v, e) in &adjacency[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                parent[v] = Some(e);
                queue.push_back(v);
            }
        }
    }
    (dist, parent)
}

fn path_to_root(mut atom: usize, bonds: &[(usize, usize)], parent: &[Option<usize>]) -> Vec<usize> {
    let mut edges = Vec::new();
    while let Some(e) = parent[atom] {
        edges.push(e);
        let (a, b) = bonds[e];
        atom = if a == atom { b } else { a };
    }
    edges
}

fn path_atoms(start: usize, bonds: &[(usize, usize)], edges: &[usize]) -> Vec<usize> {
    let mut atoms = vec![start];
    let mut cur = start;
    for &e in edges {
        let (a, b) = bonds[e];
        cur = if a == cur { b } else { a };
        atoms.push(cur);
    }
    atoms
}

fn order_cycle(bits: &[u64], bonds: &[(usize, usize)]) -> Vec<usize> {
    let edges: Vec<(usize, usize)> = bonds
        .iter()
        .enumerate()
        .filter(|(e, _)| bits[e / 64] >> (e % 64) & 1 == 1)
        .map(|(_, &ab)| ab)
        .collect();
    let start = edges.iter().map(|&(a, b)| a.min(b)).min().expect("cycle has edges");
    let mut ring = vec![start];
    let mut used = vec![false; edges.len()];
    let mut cur = start;
    loop {
        let next = edges
            .iter()
            .enumerate()
            .filter(|(i, &(a, b))| !used[*i] && (a == cur || b == cur))
            .map(|(i, &(a, b))| (if a == cur { b } else { a }, i))
            .min();
        match next {
            Some((n, i)) => {
                used[i] = true;
                if n == start {
                    break;
                }
                ring.push(n);
                cur = n;
            }
            None => break,
        }
    }
    ring
}
