mod common;

use common::*;
use fragnet_chem::fragment::{fragment_brics, ConnectionKind};
use fragnet_chem::parse_smiles;
use fragnet_core::hiergraph::Topology;
use fragnet_core::model::{forward, param_specs, record, GatLayer};
use fragnet_core::{FragNetParams, HierGraphs, ModelConfig};
use fragnet_tensor::{SplitMix64, Tensor};
use proptest::prelude::*;
use std::sync::OnceLock;

fn random(rng: &mut SplitMix64, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

/// Edge-by-edge scalar re-implementation of one attention layer.
fn naive_layer(layer: &GatLayer, x: &Tensor, edges: &[(usize, usize)], e: &Tensor, slope: f64) -> Vec<Vec<f64>> {
    let heads = layer.heads;
    let h = layer.bias.cols();
    let n = x.rows();
    let wh: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..heads * h)
                .map(|c| (0..x.cols()).map(|m| x.get(i, m) * layer.w.get(m, c)).sum())
                .collect()
        })
        .collect();
    let (we, ae) = layer.edge.as_ref().unwrap();
    let mut out = vec![vec![0.0; h]; n];
    for i in 0..n {
        let incoming: Vec<usize> = (0..edges.len()).filter(|&k| edges[k].1 == i).collect();
        for k in 0..heads {
            let block = k * h..(k + 1) * h;
            if incoming.is_empty() {
                for c in 0..h {
                    out[i][c] += wh[i][k * h + c] / heads as f64;
                }
                continue;
            }
            let mut scores = Vec::new();
            for &ed in &incoming {
                let j = edges[ed].0;
                let mut m = 0.0;
                for c in block.clone() {
                    m += layer.a_recv.get(c, k) * wh[i][c];
                    m += layer.a_send.get(c, k) * wh[j][c];
                    let proj: f64 = (0..e.cols()).map(|q| e.get(ed, q) * we.get(q, c)).sum();
                    m += ae.get(c, k) * proj;
                }
                scores.push(if m > 0.0 { m } else { slope * m });
            }
            let max = scores.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
            for (t, &ed) in incoming.iter().enumerate() {
                let alpha = (scores[t] - max).exp() / z;
                let j = edges[ed].0;
                for c in 0..h {
                    out[i][c] += alpha * wh[j][k * h + c] / heads as f64;
                }
            }
        }
        for c in 0..h {
            out[i][c] += layer.bias.get(0, c);
        }
    }
    out
}

#[test]
fn layer_matches_naive_oracle() {
    let mut rng = SplitMix64::new(11);
    let (d_in, d_e, h, heads) = (4, 3, 3, 2);
    // Node 4 has no in-edges; node 0 has three.
    let edges = [(1, 0), (2, 0), (3, 0), (0, 1), (2, 1), (1, 2), (4, 3), (3, 3)];
    let layer = GatLayer {
        w: random(&mut rng, d_in, h * heads),
        a_recv: random(&mut rng, h * heads, heads),
        a_send: random(&mut rng, h * heads, heads),
        edge: Some((random(&mut rng, d_e, h * heads), random(&mut rng, h * heads, heads))),
        bias: random(&mut rng, 1, h),
        heads,
    };
    let x = random(&mut rng, 5, d_in);
    let e = random(&mut rng, edges.len(), d_e);
    let topo = Topology::new(5, &edges);
    let (out, alpha) = layer.apply(&x, &topo, Some(&e), 0.2).unwrap();
    let expect = naive_layer(&layer, &x, &edges, &e, 0.2);
    for i in 0..5 {
        for c in 0..h {
            assert!((out.get(i, c) - expect[i][c]).abs() < 1e-12, "node {i} col {c}");
        }
    }
    assert_eq!(alpha.unwrap().shape(), [edges.len(), heads]);
}

#[test]
fn isolated_node_passes_transform_through() {
    let mut rng = SplitMix64::new(2);
    let layer = GatLayer {
        w: random(&mut rng, 2, 4),
        a_recv: random(&mut rng, 4, 2),
        a_send: random(&mut rng, 4, 2),
        edge: None,
        bias: Tensor::zeros(1, 2),
        heads: 2,
    };
    let x = random(&mut rng, 1, 2);
    let (out, alpha) = layer.apply(&x, &Topology::new(1, &[]), None, 0.2).unwrap();
    assert!(alpha.is_none());
    for c in 0..2 {
        let wh = |col: usize| x.get(0, 0) * layer.w.get(0, col) + x.get(0, 1) * layer.w.get(1, col);
        assert!((out.get(0, c) - (wh(c) + wh(2 + c)) / 2.0).abs() < 1e-15);
    }
}

fn loss(graphs: &[HierGraphs], params: &FragNetParams) -> f64 {
    graphs
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let p = forward(g, params).unwrap().prediction[0];
            let t = 0.3 * k as f64 - 0.5;
            (p - t) * (p - t)
        })
        .sum()
}

fn analytic(graphs: &[HierGraphs], params: &FragNetParams) -> Vec<Tensor> {
    let mut total: Option<Vec<Tensor>> = None;
    for (k, g) in graphs.iter().enumerate() {
        let rec = record(g, params, true).unwrap();
        let mut tape = rec.tape;
        let target = Tensor::scalar(0.3 * k as f64 - 0.5);
        let l = tape.mse_loss(rec.prediction, target, None).unwrap();
        let mut grads = tape.backward(l).unwrap();
        let gs: Vec<Tensor> = rec.params.iter().zip(&params.tensors).map(|(v, t)| grads.take_or_zeros(*v, t)).collect();
        match total.as_mut() {
            None => total = Some(gs),
            Some(acc) => acc.iter_mut().zip(&gs).for_each(|(a, g)| a.add_assign(g).unwrap()),
        }
    }
    total.unwrap()
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let cfg = ModelConfig {
        hidden_dim: 4,
        heads: 2,
        ..ModelConfig::default()
    };
    let graphs: Vec<HierGraphs> = ["CCOC(=O)c1ccccc1", "C[NH3+].[Cl-]", "OCC(N)C#N"].iter().map(|s| graphs(s)).collect();
    let params = FragNetParams::init(&cfg, 21).unwrap();
    let grads = analytic(&graphs, &params);
    let specs = param_specs(&cfg);
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for (p, spec) in specs.iter().enumerate() {
        for i in 0..params.tensors[p].len() {
            let mut plus = params.clone();
            plus.tensors[p].data_mut()[i] += eps;
            let mut minus = params.clone();
            minus.tensors[p].data_mut()[i] -= eps;
            let numeric = (loss(&graphs, &plus) - loss(&graphs, &minus)) / (2.0 * eps);
            let a = grads[p].data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            assert!(rel < 1e-4, "{}[{i}]: analytic {a} numeric {numeric}", spec.name);
            worst = worst.max(rel);
        }
    }
    assert!(worst.is_finite());
}

fn esol_smiles() -> &'static [String] {
    static SMILES: OnceLock<Vec<String>> = OnceLock::new();
    SMILES.get_or_init(|| esol().smiles())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn attention_sums_to_one_per_receiver(i in 0usize..1128, seed in 0u64..1000) {
        let params = FragNetParams::init(&small_config(), seed).unwrap();
        let g = graphs(&esol_smiles()[i]);
        let t = forward(&g, &params).unwrap();
        let levels = [
            (&g.bond.topology, &t.alphas.bond),
            (&g.atom.topology, &t.alphas.atom),
            (&g.conn.topology, &t.alphas.conn),
            (&g.frag.topology, &t.alphas.frag),
        ];
        for (topo, layers) in levels {
            for layer in layers {
                for h in 0..layer.cols() {
                    let mut sums = vec![0.0; topo.n_nodes];
                    for e in 0..topo.n_edges() {
                        sums[topo.dst[e]] += layer.get(e, h);
                    }
                    for &v in topo.receivers.iter() {
                        prop_assert!((sums[v] - 1.0).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn relabeling_atoms_keeps_prediction(i in 0usize..1128, seed in any::<u64>()) {
        let params = FragNetParams::init(&small_config(), 8).unwrap();
        let mut rng = SplitMix64::new(seed);
        let mol = parse_smiles(&esol_smiles()[i]).unwrap();
        let mut ap: Vec<usize> = (0..mol.atom_count()).collect();
        let mut bp: Vec<usize> = (0..mol.bond_count()).collect();
        rng.shuffle(&mut ap);
        rng.shuffle(&mut bp);
        let moved = mol.relabeled(&ap, &bp).unwrap();
        let a = forward(&graphs_of(&mol), &params).unwrap().prediction[0];
        let b = forward(&graphs_of(&moved), &params).unwrap().prediction[0];
        prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn relabeling_the_salt_keeps_prediction() {
    let params = FragNetParams::init(&small_config(), 8).unwrap();
    let mol = parse_smiles(SALT).unwrap();
    let ap: Vec<usize> = (0..mol.atom_count()).rev().collect();
    let bp: Vec<usize> = (0..mol.bond_count()).rev().collect();
    let moved = mol.relabeled(&ap, &bp).unwrap();
    let a = forward(&graphs_of(&mol), &params).unwrap().prediction[0];
    let b = forward(&graphs_of(&moved), &params).unwrap().prediction[0];
    assert!((a - b).abs() < 1e-9, "{a} vs {b}");
}

#[test]
fn virtual_connections_carry_messages() {
    let mol = parse_smiles(SALT).unwrap();
    let g = graphs_of(&mol);
    assert!(g.decomposition.connections.iter().any(|c| c.kind == ConnectionKind::Virtual));
    let params = FragNetParams::init(&small_config(), 5).unwrap();
    let with = forward(&g, &params).unwrap().prediction[0];
    let without = forward(&g.without_virtual(&mol, &params.config.features), &params).unwrap().prediction[0];
    assert!((with - without).abs() > 1e-6);

    // The two components run separately and summed differ from the salt.
    let cation = forward(&graphs("CC[NH+](CCCl)CCOc1cccc2ccccc12"), &params).unwrap().prediction[0];
    let anion = forward(&graphs("[Cl-]"), &params).unwrap().prediction[0];
    let bias = params.tensors[params.index_of("head.b").unwrap()].item();
    assert!((with - (cation + anion - bias)).abs() > 1e-6);
}

#[test]
fn single_ion_forward_completes() {
    let params = FragNetParams::init(&ModelConfig::default(), 1).unwrap();
    let g = graphs("[Cl-]");
    assert_eq!(g.bond.topology.n_nodes, 0);
    let t = forward(&g, &params).unwrap();
    assert!(t.prediction[0].is_finite());
    // The only atom edge is its self-edge.
    assert_eq!(t.alphas.atom[0].data(), &[1.0; 4]);
}

#[test]
fn predictions_are_deterministic() {
    let c = checkpoint(&ModelConfig::default(), 6);
    assert_eq!(c.predict("CCO").unwrap(), c.predict("CCO").unwrap());
}

#[test]
fn zero_head_predicts_zero_for_methane() {
    let mut params = FragNetParams::init(&ModelConfig::default(), 6).unwrap();
    let w = params.index_of("head.w").unwrap();
    params.tensors[w] = Tensor::zeros(256, 1);
    let mol = parse_smiles("C").unwrap();
    let g = fragnet_core::build_hier_graphs(&mol, &fragment_brics(&mol), &params.config.features);
    assert_eq!(forward(&g, &params).unwrap().prediction, vec![0.0]);
}
