//! Attention-based node importance, masking contributions, substructure
//! statistics and embedding export.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use fragnet_tensor::Tensor;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{Dataset, Prepared};
use crate::error::{CoreError, Result};
use crate::hiergraph::{HierGraphs, Topology};
use crate::model::{Level, Task};

/// Collapses per-edge attention of every layer into one score per node.
pub trait ImportanceReducer: Send + Sync {
    fn name(&self) -> &str;

    /// `alphas` holds one `[n_edges x heads]` matrix per layer.
    fn reduce(&self, topo: &Topology, alphas: &[Tensor]) -> Vec<f64>;
}

/// Sum of attention a node hands out as sender over non-self edges,
/// averaged over layers and heads.
pub struct SenderReducer;

/// Same, counting the edges where the node is the receiver.
pub struct ReceiverReducer;

/// Largest single attention value a node receives as sender.
pub struct MaxReducer;

fn summed_by(topo: &Topology, alphas: &[Tensor], endpoint: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; topo.n_nodes];
    let mut slices = 0usize;
    for layer in alphas {
        if layer.rows() == 0 {
            continue;
        }
        for h in 0..layer.cols() {
            slices += 1;
            for e in 0..topo.n_edges() {
                if !topo.is_self_edge(e) {
                    out[endpoint[e]] += layer.get(e, h);
                }
            }
        }
    }
    if slices > 0 {
        out.iter_mut().for_each(|v| *v /= slices as f64);
    }
    out
}

impl ImportanceReducer for SenderReducer {
    fn name(&self) -> &str {
        "sender"
    }

    fn reduce(&self, topo: &Topology, alphas: &[Tensor]) -> Vec<f64> {
        summed_by(topo, alphas, &topo.src)
    }
}

impl ImportanceReducer for ReceiverReducer {
    fn name(&self) -> &str {
        "receiver"
    }

    fn reduce(&self, topo: &Topology, alphas: &[Tensor]) -> Vec<f64> {
        summed_by(topo, alphas, &topo.dst)
    }
}

impl ImportanceReducer for MaxReducer {
    fn name(&self) -> &str {
        "max"
    }

    fn reduce(&self, topo: &Topology, alphas: &[Tensor]) -> Vec<f64> {
        let mut out = vec![0.0f64; topo.n_nodes];
        for layer in alphas.iter().filter(|l| l.rows() > 0) {
            for e in (0..topo.n_edges()).filter(|&e| !topo.is_self_edge(e)) {
                for h in 0..layer.cols() {
                    out[topo.src[e]] = out[topo.src[e]].max(layer.get(e, h));
                }
            }
        }
        out
    }
}

pub fn reducer_names() -> &'static [&'static str] {
    &["sender", "receiver", "max"]
}

pub fn reducer_by_name(name: &str) -> Option<Arc<dyn ImportanceReducer>> {
    match name {
        "sender" => Some(Arc::new(SenderReducer)),
        "receiver" => Some(Arc::new(ReceiverReducer)),
        "max" => Some(Arc::new(MaxReducer)),
        _ => None,
    }
}

fn resolve_reducer(name: &str) -> Result<Arc<dyn ImportanceReducer>> {
    reducer_by_name(name)
        .ok_or_else(|| CoreError::Config(format!("unknown importance reducer {name:?}; known: {:?}", reducer_names())))
}

/// Min-max scaling to [0, 1]. A constant vector maps to zeros.
pub fn min_max_scale(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentRow {
    pub id: usize,
    pub smiles: String,
    pub atoms: Vec<usize>,
    pub weight: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionRow {
    pub id: usize,
    pub frag_a: usize,
    pub frag_b: usize,
    pub kind: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub smiles: String,
    pub reducer: String,
    /// Task the prediction and contributions refer to.
    pub task: usize,
    pub prediction: f64,
    pub atom_weights: Vec<f64>,
    pub bond_weights: Vec<f64>,
    pub frag_weights: Vec<f64>,
    pub conn_weights: Vec<f64>,
    pub frag_contributions: Vec<f64>,
    pub embedding: Vec<f64>,
    pub fragments: Vec<FragmentRow>,
    pub connections: Vec<ConnectionRow>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplainOptions {
    pub reducer: String,
    pub task: usize,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        Self {
            reducer: "sender".into(),
            task: 0,
        }
    }
}

fn output(checkpoint: &Checkpoint, graphs: &HierGraphs, task: usize) -> Result<f64> {
    Ok(checkpoint.predict_graphs(graphs)?[task])
}

/// Prediction without the mask minus prediction with the atom features of
/// `frags` (and their internal bond features) zeroed, in target units.
pub fn mask_fragment(checkpoint: &Checkpoint, prepared: &Prepared, frags: &[usize], task: usize) -> Result<f64> {
    let full = output(checkpoint, &prepared.graphs, task)?;
    let masked = output(checkpoint, &prepared.graphs.masked(&prepared.mol, frags), task)?;
    Ok(full - masked)
}

pub fn explain(checkpoint: &Checkpoint, smiles: &str, options: &ExplainOptions) -> Result<Explanation> {
    let prepared = checkpoint.prepare(smiles)?;
    explain_prepared(checkpoint, smiles, &prepared, options)
}

pub fn explain_prepared(checkpoint: &Checkpoint, smiles: &str, prepared: &Prepared, options: &ExplainOptions) -> Result<Explanation> {
    let n_tasks = checkpoint.config().n_tasks;
    if options.task >= n_tasks {
        return Err(CoreError::Config(format!("task {} out of range for {n_tasks} tasks", options.task)));
    }
    let reducer = resolve_reducer(&options.reducer)?;
    let g = &prepared.graphs;
    let trace = checkpoint.trace(g)?;
    let prediction = checkpoint.output_units(&trace.prediction)[options.task];
    let weights = |level: Level, topo: &Topology| reducer.reduce(topo, trace.alphas.level(level));
    let atom_weights = min_max_scale(&weights(Level::Atom, &g.atom.topology));
    let bond_weights = min_max_scale(&weights(Level::Bond, &g.bond.topology));
    let frag_weights = weights(Level::Frag, &g.frag.topology);
    let conn_weights = weights(Level::Conn, &g.conn.topology);

    let decomp = &g.decomposition;
    let frag_contributions = (0..decomp.fragments.len())
        .map(|f| Ok(prediction - output(checkpoint, &g.masked(&prepared.mol, &[f]), options.task)?))
        .collect::<Result<Vec<f64>>>()?;

    let fragments = decomp
        .fragments
        .iter()
        .enumerate()
        .map(|(f, atoms)| FragmentRow {
            id: f,
            smiles: decomp.frag_smiles[f].clone(),
            atoms: atoms.clone(),
            weight: frag_weights[f],
            contribution: frag_contributions[f],
        })
        .collect();
    let connections = decomp
        .connections
        .iter()
        .enumerate()
        .map(|(c, conn)| ConnectionRow {
            id: c,
            frag_a: conn.frag_a,
            frag_b: conn.frag_b,
            kind: conn.kind.as_str().into(),
            weight: conn_weights[c],
        })
        .collect();

    Ok(Explanation {
        smiles: smiles.into(),
        reducer: reducer.name().into(),
        task: options.task,
        prediction,
        atom_weights,
        bond_weights,
        frag_weights,
        conn_weights,
        frag_contributions,
        embedding: trace.penultimate,
        fragments,
        connections,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentStats {
    pub frag_smiles: String,
    /// Mean absolute error of the selected molecules containing the fragment.
    pub mean_error: f64,
    pub mean_weight: f64,
    pub mean_contribution: f64,
    /// Percentage of low-error molecules containing the fragment.
    pub pct_in_low_error: f64,
    /// Percentage of high-error molecules containing the fragment.
    pub pct_in_high_error: f64,
    /// Number of selected molecules containing the fragment.
    pub count: usize,
    /// Present in high-error molecules only.
    pub only_high_error: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub n_molecules: usize,
    pub n_low_error: usize,
    pub n_high_error: usize,
    /// Fragments of the high-error molecules, largest mean error first.
    pub high_error: Vec<FragmentStats>,
    /// Fragments of the low-error molecules, largest mean weight first.
    pub low_error: Vec<FragmentStats>,
}

/// One explained molecule with its absolute error.
#[derive(Debug, Clone)]
pub struct Explained {
    pub explanation: Explanation,
    pub error: f64,
}

/// Explains every record of a regression dataset (first task).
pub fn explain_dataset(checkpoint: &Checkpoint, dataset: &Dataset, options: &ExplainOptions) -> Result<Vec<Explained>> {
    if checkpoint.task() != Task::Regression || dataset.task != Task::Regression {
        return Err(CoreError::TaskMismatch {
            checkpoint: checkpoint.task().as_str().into(),
            dataset: "substructure analysis needs regression".into(),
        });
    }
    dataset
        .records
        .par_iter()
        .map(|r| {
            let explanation = explain(checkpoint, &r.smiles, options)?;
            let error = (explanation.prediction - r.targets[options.task]).abs();
            Ok(Explained { explanation, error })
        })
        .collect()
}

fn fragment_table(selection: &[&Explained], n_low: usize, n_high: usize, low: &BTreeMap<String, usize>, high: &BTreeMap<String, usize>) -> Vec<FragmentStats> {
    #[derive(Default)]
    struct Acc {
        mols: usize,
        error: f64,
        weight: f64,
        contribution: f64,
        occurrences: usize,
    }
    let mut acc: BTreeMap<&str, Acc> = BTreeMap::new();
    for m in selection {
        let mut seen: Vec<&str> = Vec::new();
        for f in &m.explanation.fragments {
            let a = acc.entry(&f.smiles).or_default();
            a.weight += f.weight;
            a.contribution += f.contribution;
            a.occurrences += 1;
            if !seen.contains(&f.smiles.as_str()) {
                seen.push(&f.smiles);
                a.mols += 1;
                a.error += m.error;
            }
        }
    }
    let pct = |map: &BTreeMap<String, usize>, key: &str, n: usize| {
        if n == 0 {
            0.0
        } else {
            100.0 * *map.get(key).unwrap_or(&0) as f64 / n as f64
        }
    };
    acc.into_iter()
        .map(|(smiles, a)| {
            let pct_low = pct(low, smiles, n_low);
            let pct_high = pct(high, smiles, n_high);
            FragmentStats {
                frag_smiles: smiles.into(),
                mean_error: a.error / a.mols as f64,
                mean_weight: a.weight / a.occurrences as f64,
                mean_contribution: a.contribution / a.occurrences as f64,
                pct_in_low_error: pct_low,
                pct_in_high_error: pct_high,
                count: a.mols,
                only_high_error: pct_low == 0.0 && pct_high > 0.0,
            }
        })
        .collect()
}

fn membership(selection: &[&Explained]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for m in selection {
        let mut names: Vec<&str> = m.explanation.fragments.iter().map(|f| f.smiles.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        for n in names {
            *out.entry(n.to_string()).or_insert(0) += 1;
        }
    }
    out
}

/// Low-error molecules have absolute error below `low_threshold`; the
/// high-error set is the `top_fraction` of molecules with the largest
/// errors (at least one).
pub fn aggregate_explained(explained: &[Explained], low_threshold: f64, top_fraction: f64) -> Result<AggregateReport> {
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(CoreError::Config(format!("top_fraction {top_fraction} must lie in (0, 1]")));
    }
    let low: Vec<&Explained> = explained.iter().filter(|m| m.error < low_threshold).collect();
    if low.is_empty() {
        return Err(CoreError::EmptySelection(format!("no molecule has error below {low_threshold}")));
    }
    let mut by_error: Vec<&Explained> = explained.iter().collect();
    by_error.sort_by(|a, b| b.error.total_cmp(&a.error));
    let n_high = ((top_fraction * explained.len() as f64).ceil() as usize).clamp(1, explained.len());
    let high = &by_error[..n_high];

    let low_members = membership(&low);
    let high_members = membership(high);
    let mut high_table = fragment_table(high, low.len(), high.len(), &low_members, &high_members);
    high_table.sort_by(|a, b| b.mean_error.total_cmp(&a.mean_error).then_with(|| a.frag_smiles.cmp(&b.frag_smiles)));
    let mut low_table = fragment_table(&low, low.len(), high.len(), &low_members, &high_members);
    low_table.sort_by(|a, b| b.mean_weight.total_cmp(&a.mean_weight).then_with(|| a.frag_smiles.cmp(&b.frag_smiles)));
    Ok(AggregateReport {
        n_molecules: explained.len(),
        n_low_error: low.len(),
        n_high_error: high.len(),
        high_error: high_table,
        low_error: low_table,
    })
}

pub fn aggregate_substructures(checkpoint: &Checkpoint, dataset: &Dataset, low_threshold: f64, top_fraction: f64) -> Result<AggregateReport> {
    let explained = explain_dataset(checkpoint, dataset, &ExplainOptions::default())?;
    aggregate_explained(&explained, low_threshold, top_fraction)
}

/// Writes the Table-style report: one row per high-error fragment.
pub fn write_fragment_stats(path: impl AsRef<Path>, stats: &[FragmentStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in stats {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV of `smiles, target, prediction, e_0 .. e_{d-1}` (first task).
pub fn export_embeddings(checkpoint: &Checkpoint, dataset: &Dataset, out: impl AsRef<Path>) -> Result<()> {
    let rows = dataset
        .records
        .par_iter()
        .map(|r| {
            let p = checkpoint.prepare(&r.smiles)?;
            let trace = checkpoint.trace(&p.graphs)?;
            Ok((checkpoint.output_units(&trace.prediction)[0], trace.penultimate))
        })
        .collect::<Result<Vec<_>>>()?;
    let dim = checkpoint.config().embedding_dim();
    let mut w = csv::Writer::from_path(out)?;
    let mut header = vec!["smiles".to_string(), "target".into(), "prediction".into()];
    header.extend((0..dim).map(|i| format!("e_{i}")));
    w.write_record(&header)?;
    for (r, (pred, emb)) in dataset.records.iter().zip(rows) {
        let target = match &r.mask {
            Some(m) if !m[0] => String::new(),
            _ => r.targets[0].to_string(),
        };
        let mut row = vec![r.smiles.clone(), target, pred.to_string()];
        row.extend(emb.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkpoint::{Standardization, TrainingMetadata};
    use crate::model::{FragNetParams, ModelConfig};

    fn checkpoint(seed: u64) -> Checkpoint {
        let cfg = ModelConfig {
            hidden_dim: 8,
            heads: 2,
            ..ModelConfig::default()
        };
        Checkpoint::new(
            FragNetParams::init(&cfg, seed).unwrap(),
            Standardization::identity(1),
            TrainingMetadata::default(),
        )
        .unwrap()
    }

    #[test]
    fn scaling_hits_both_ends() {
        assert_eq!(min_max_scale(&[2.0, 4.0, 3.0]), vec![0.0, 1.0, 0.5]);
        assert_eq!(min_max_scale(&[1.5, 1.5]), vec![0.0, 0.0]);
        assert!(min_max_scale(&[]).is_empty());
    }

    #[test]
    fn single_fragment_has_one_self_row() {
        let e = explain(&checkpoint(1), "CCC", &ExplainOptions::default()).unwrap();
        assert_eq!(e.frag_weights.len(), 1);
        assert_eq!(e.connections.len(), 1);
        assert_eq!(e.connections[0].kind, "SELF");
        assert_eq!(e.atom_weights.iter().cloned().fold(f64::MIN, f64::max), 1.0);
        assert_eq!(e.atom_weights.iter().cloned().fold(f64::MAX, f64::min), 0.0);
    }

    #[test]
    fn empty_mask_contributes_nothing() {
        let c = checkpoint(2);
        let p = c.prepare("CCOc1ccccc1").unwrap();
        assert_eq!(mask_fragment(&c, &p, &[], 0).unwrap(), 0.0);
    }

    #[test]
    fn reducers_by_name() {
        for n in reducer_names() {
            assert_eq!(reducer_by_name(n).unwrap().name(), *n);
        }
        assert!(explain(&checkpoint(1), "CC", &ExplainOptions { reducer: "mean".into(), task: 0 }).is_err());
    }

    fn fake(frags: &[&str], error: f64) -> Explained {
        Explained {
            error,
            explanation: Explanation {
                smiles: String::new(),
                reducer: "sender".into(),
                task: 0,
                prediction: 0.0,
                atom_weights: vec![],
                bond_weights: vec![],
                frag_weights: vec![],
                conn_weights: vec![],
                frag_contributions: vec![],
                embedding: vec![],
                fragments: frags
                    .iter()
                    .enumerate()
                    .map(|(i, s)| FragmentRow {
                        id: i,
                        smiles: s.to_string(),
                        atoms: vec![],
                        weight: 1.0 + i as f64,
                        contribution: -0.5,
                    })
                    .collect(),
                connections: vec![],
            },
        }
    }

    #[test]
    fn shared_fragment_in_all_low_error() {
        let mols = [fake(&["[*]O", "C[*]"], 0.01), fake(&["[*]O", "CC[*]"], 0.05)];
        let r = aggregate_explained(&mols, 0.1, 0.5).unwrap();
        let o = r.low_error.iter().find(|s| s.frag_smiles == "[*]O").unwrap();
        assert_eq!(o.pct_in_low_error, 100.0);
        assert_eq!(o.count, 2);
    }

    #[test]
    fn high_only_fragments_are_flagged() {
        let mols = [fake(&["C[*]", "[*]O"], 0.02), fake(&["C[*]", "[Na+]"], 2.0), fake(&["CC"], 0.5)];
        let r = aggregate_explained(&mols, 0.1, 0.2).unwrap();
        assert_eq!(r.n_high_error, 1);
        let na = r.high_error.iter().find(|s| s.frag_smiles == "[Na+]").unwrap();
        assert!(na.only_high_error);
        assert_eq!((na.pct_in_low_error, na.pct_in_high_error), (0.0, 100.0));
        let c = r.high_error.iter().find(|s| s.frag_smiles == "C[*]").unwrap();
        assert!(!c.only_high_error);
    }

    #[test]
    fn strict_threshold_selects_nothing() {
        let mols = [fake(&["C"], 0.3)];
        assert!(matches!(aggregate_explained(&mols, 0.1, 0.2), Err(CoreError::EmptySelection(_))));
    }
}
