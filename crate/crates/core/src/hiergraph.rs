//! The four featurized graphs and the index maps tying them together.

use std::sync::Arc;

use fragnet_chem::fragment::{ConnectionKind, FragmentDecomposition};
use fragnet_chem::Molecule;
use fragnet_tensor::{Indices, Tensor};
use serde::Serialize;

use crate::features::{angle_features, bond_features, conn_features, FeatureConfig, ANGLE_FEATURE_DIM, BOND_FEATURE_DIM, CONN_FEATURE_DIM};

/// Directed edge list with the index arrays a GAT layer consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub n_nodes: usize,
    /// Sender of each edge.
    pub src: Indices,
    /// Receiver of each edge.
    pub dst: Indices,
    /// Receiver of each edge, renumbered over nodes with at least one in-edge.
    pub dst_compact: Indices,
    /// Node behind each compact receiver id.
    pub receivers: Indices,
    /// Nodes without in-edges.
    pub isolated: Indices,
}

impl Topology {
    pub fn new(n_nodes: usize, edges: &[(usize, usize)]) -> Self {
        let mut compact = vec![usize::MAX; n_nodes];
        let mut receivers = Vec::new();
        // Compact ids follow node order so results do not depend on edge order.
        let mut has_in = vec![false; n_nodes];
        for &(_, d) in edges {
            has_in[d] = true;
        }
        for (v, &h) in has_in.iter().enumerate() {
            if h {
                compact[v] = receivers.len();
                receivers.push(v);
            }
        }
        let isolated: Vec<usize> = (0..n_nodes).filter(|&v| !has_in[v]).collect();
        Self {
            n_nodes,
            src: edges.iter().map(|e| e.0).collect::<Vec<_>>().into(),
            dst: edges.iter().map(|e| e.1).collect::<Vec<_>>().into(),
            dst_compact: edges.iter().map(|e| compact[e.1]).collect::<Vec<_>>().into(),
            receivers: receivers.into(),
            isolated: isolated.into(),
        }
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }

    pub fn is_self_edge(&self, e: usize) -> bool {
        self.src[e] == self.dst[e]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomGraph {
    pub node_feats: Tensor,
    /// Both directions of every bond, then one self-edge per atom.
    pub topology: Topology,
    /// Bond-graph node behind each edge; `None` for self-edges.
    pub edge_to_bondnode: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BondGraph {
    pub node_feats: Tensor,
    pub topology: Topology,
    pub edge_feats: Tensor,
    /// Atom shared by the two bonds of each edge.
    pub shared_atom: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnGraph {
    pub node_feats: Tensor,
    pub topology: Topology,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FragGraph {
    pub n_frags: usize,
    pub topology: Topology,
    /// Connection (conn-graph node) behind each edge.
    pub edge_to_conn_node: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierGraphs {
    pub atom: AtomGraph,
    pub bond: BondGraph,
    pub conn: ConnGraph,
    pub frag: FragGraph,
    pub frag_of_atom: Indices,
    pub decomposition: FragmentDecomposition,
    /// Precomputed scatter indices for bond outputs onto atom-graph edges.
    pub(crate) atom_edge_rows: Indices,
    pub(crate) atom_edge_bonds: Indices,
    pub(crate) frag_edge_conns: Indices,
}

pub fn build_hier_graphs(mol: &Molecule, decomp: &FragmentDecomposition, config: &FeatureConfig) -> HierGraphs {
    let n_atoms = mol.atom_count();
    let n_bonds = mol.bond_count();

    // Atom graph.
    let atom_rows: Vec<Vec<f64>> = mol.atoms.iter().map(|a| config.atom_features(a)).collect();
    let atom_feats = Tensor::from_rows(&atom_rows, config.atom_dim()).expect("rows share the atom width");
    let mut atom_edges = Vec::with_capacity(2 * n_bonds + n_atoms);
    let mut edge_to_bondnode = Vec::with_capacity(2 * n_bonds + n_atoms);
    for (b, bond) in mol.bonds.iter().enumerate() {
        atom_edges.push((bond.a1, bond.a2));
        atom_edges.push((bond.a2, bond.a1));
        edge_to_bondnode.push(Some(b));
        edge_to_bondnode.push(Some(b));
    }
    for a in 0..n_atoms {
        atom_edges.push((a, a));
        edge_to_bondnode.push(None);
    }

    // Bond graph: bonds sharing exactly one atom, both directions.
    let bond_rows: Vec<Vec<f64>> = mol.bonds.iter().map(|b| bond_features(b).to_vec()).collect();
    let bond_feats = Tensor::from_rows(&bond_rows, BOND_FEATURE_DIM).expect("rows share the bond width");
    let mut bond_edges = Vec::new();
    let mut shared_atom = Vec::new();
    let mut angle_rows = Vec::new();
    for a in 0..n_atoms {
        let incident: Vec<usize> = mol.neighbors(a).iter().map(|&(_, b)| b).collect();
        for &i in &incident {
            for &j in &incident {
                if i != j {
                    bond_edges.push((j, i));
                    shared_atom.push(a);
                    angle_rows.push(angle_features(&mol.atoms[a]).to_vec());
                }
            }
        }
    }
    let angle_feats = Tensor::from_rows(&angle_rows, ANGLE_FEATURE_DIM).expect("rows share the angle width");

    // Connection graph.
    let conn_rows: Vec<Vec<f64>> = decomp
        .connections
        .iter()
        .map(|c| conn_features(c.kind, c.via_bond.map(|b| &mol.bonds[b])).to_vec())
        .collect();
    let conn_feats = Tensor::from_rows(&conn_rows, CONN_FEATURE_DIM).expect("rows share the connection width");
    let frags_of = |c: usize| {
        let conn = &decomp.connections[c];
        [conn.frag_a, conn.frag_b]
    };
    let mut conn_edges = Vec::new();
    for i in 0..decomp.connections.len() {
        for j in 0..decomp.connections.len() {
            if i != j && frags_of(i).iter().any(|f| frags_of(j).contains(f)) {
                conn_edges.push((j, i));
            }
        }
    }

    // Fragment graph.
    let mut frag_edges = Vec::new();
    let mut edge_to_conn_node = Vec::new();
    for (c, conn) in decomp.connections.iter().enumerate() {
        if conn.kind == ConnectionKind::SelfLoop || conn.frag_a == conn.frag_b {
            frag_edges.push((conn.frag_a, conn.frag_a));
            edge_to_conn_node.push(c);
        } else {
            frag_edges.push((conn.frag_a, conn.frag_b));
            frag_edges.push((conn.frag_b, conn.frag_a));
            edge_to_conn_node.push(c);
            edge_to_conn_node.push(c);
        }
    }

    let frag_of_atom: Vec<usize> = decomp.atom_to_fragment(n_atoms);
    let (rows, bonds): (Vec<usize>, Vec<usize>) = edge_to_bondnode
        .iter()
        .enumerate()
        .filter_map(|(e, b)| b.map(|b| (e, b)))
        .unzip();

    HierGraphs {
        atom: AtomGraph {
            node_feats: atom_feats,
            topology: Topology::new(n_atoms, &atom_edges),
            edge_to_bondnode,
        },
        bond: BondGraph {
            node_feats: bond_feats,
            topology: Topology::new(n_bonds, &bond_edges),
            edge_feats: angle_feats,
            shared_atom,
        },
        conn: ConnGraph {
            node_feats: conn_feats,
            topology: Topology::new(decomp.connections.len(), &conn_edges),
        },
        frag: FragGraph {
            n_frags: decomp.fragments.len(),
            topology: Topology::new(decomp.fragments.len(), &frag_edges),
            edge_to_conn_node: edge_to_conn_node.clone(),
        },
        frag_of_atom: frag_of_atom.into(),
        decomposition: decomp.clone(),
        atom_edge_rows: rows.into(),
        atom_edge_bonds: bonds.into(),
        frag_edge_conns: Arc::from(edge_to_conn_node),
    }
}

impl HierGraphs {
    /// Copy with the atom features of `frags` and the bond features of their
    /// internal bonds zeroed. Topology is unchanged.
    pub fn masked(&self, mol: &Molecule, frags: &[usize]) -> HierGraphs {
        let mut out = self.clone();
        let mut hit = vec![false; self.frag.n_frags];
        for &f in frags {
            hit[f] = true;
        }
        let width = out.atom.node_feats.cols();
        for (a, &f) in self.frag_of_atom.iter().enumerate() {
            if hit[f] {
                out.atom.node_feats.data_mut()[a * width..(a + 1) * width].fill(0.0);
            }
        }
        let bw = out.bond.node_feats.cols();
        for (b, bond) in mol.bonds.iter().enumerate() {
            let (fa, fb) = (self.frag_of_atom[bond.a1], self.frag_of_atom[bond.a2]);
            if fa == fb && hit[fa] {
                out.bond.node_feats.data_mut()[b * bw..(b + 1) * bw].fill(0.0);
            }
        }
        out
    }

    /// Copy without virtual connections, for ablations.
    pub fn without_virtual(&self, mol: &Molecule, config: &FeatureConfig) -> HierGraphs {
        let mut decomp = self.decomposition.clone();
        decomp.connections.retain(|c| c.kind != ConnectionKind::Virtual);
        build_hier_graphs(mol, &decomp, config)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let dump = |t: &Topology| TopologyDump {
            n_nodes: t.n_nodes,
            edges: t.src.iter().zip(t.dst.iter()).map(|(&s, &d)| [s, d]).collect(),
        };
        let rows = |t: &Tensor| (0..t.rows()).map(|r| t.row(r).to_vec()).collect::<Vec<_>>();
        serde_json::json!({
            "atom_graph": {
                "topology": dump(&self.atom.topology),
                "node_feats": rows(&self.atom.node_feats),
                "edge_to_bondnode": self.atom.edge_to_bondnode,
            },
            "bond_graph": {
                "topology": dump(&self.bond.topology),
                "node_feats": rows(&self.bond.node_feats),
                "edge_feats": rows(&self.bond.edge_feats),
                "shared_atom": self.bond.shared_atom,
            },
            "frag_graph": {
                "topology": dump(&self.frag.topology),
                "edge_to_conn_node": self.frag.edge_to_conn_node,
                "fragments": self.decomposition.fragments,
                "frag_smiles": self.decomposition.frag_smiles,
            },
            "conn_graph": {
                "topology": dump(&self.conn.topology),
                "node_feats": rows(&self.conn.node_feats),
                "kinds": self.decomposition.connections.iter().map(|c| c.kind.as_str()).collect::<Vec<_>>(),
            },
            "frag_of_atom": self.frag_of_atom.to_vec(),
        })
    }
}

#[derive(Serialize)]
struct TopologyDump {
    n_nodes: usize,
    edges: Vec<[usize; 2]>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use fragnet_chem::fragment::fragment_brics;
    use fragnet_chem::parse_smiles;

    fn build(s: &str) -> (Molecule, HierGraphs) {
        let m = parse_smiles(s).unwrap();
        let d = fragment_brics(&m);
        let g = build_hier_graphs(&m, &d, &FeatureConfig::default());
        (m, g)
    }

    #[test]
    fn methane() {
        let (_, g) = build("C");
        assert_eq!(g.atom.topology.n_edges(), 1);
        assert!(g.atom.topology.is_self_edge(0));
        assert_eq!(g.bond.topology.n_nodes, 0);
        assert_eq!(g.frag.n_frags, 1);
        assert_eq!(g.conn.topology.n_nodes, 1);
        assert_eq!(g.conn.topology.n_edges(), 0);
        assert_eq!(g.frag.topology.n_edges(), 1);
    }

    #[test]
    fn ethanol_bond_graph() {
        let (_, g) = build("CCO");
        assert_eq!(g.bond.topology.n_nodes, 2);
        assert_eq!(g.bond.topology.n_edges(), 2);
        assert_eq!(g.atom.topology.n_edges(), 2 * 2 + 3);
    }

    #[test]
    fn salt_connection_count() {
        let (_, g) = build("CC[NH+](CCCl)CCOc1cccc2ccccc12.[Cl-]");
        assert_eq!(g.conn.topology.n_nodes, 12);
        assert_eq!(g.frag.n_frags, 7);
    }

    #[test]
    fn bond_graph_edges_share_one_atom() {
        let (m, g) = build("CC(C)(C)c1ccccc1O");
        let t = &g.bond.topology;
        for e in 0..t.n_edges() {
            let (i, j) = (&m.bonds[t.src[e]], &m.bonds[t.dst[e]]);
            let shared = [i.a1, i.a2].iter().filter(|a| j.contains(**a)).count();
            assert_eq!(shared, 1);
            assert_ne!(t.src[e], t.dst[e]);
        }
        // Every pair of bonds sharing an atom appears in both directions.
        let mut expected = 0;
        for a in 0..m.atom_count() {
            let d = m.degree(a);
            expected += d * d.saturating_sub(1);
        }
        assert_eq!(t.n_edges(), expected);
    }

    #[test]
    fn json_dump_has_all_levels() {
        let (_, g) = build("CCOC(=O)c1ccccc1");
        let v = g.to_json();
        for key in ["atom_graph", "bond_graph", "frag_graph", "conn_graph"] {
            assert!(v.get(key).is_some());
        }
    }
}
