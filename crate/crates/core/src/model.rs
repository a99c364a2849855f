//! Graph attention layers and the hierarchical forward pass.

use fragnet_tensor::{Indices, SplitMix64, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::features::{FeatureConfig, ANGLE_FEATURE_DIM, BOND_FEATURE_DIM, CONN_FEATURE_DIM};
use crate::hiergraph::{HierGraphs, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    BinaryMultitask,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Regression => "regression",
            Task::BinaryMultitask => "binary_multitask",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub layers_per_graph: usize,
    pub heads: usize,
    pub leaky_slope: f64,
    pub n_tasks: usize,
    pub task: Task,
    pub fragmenter: String,
    pub features: FeatureConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 128,
            layers_per_graph: 2,
            heads: 4,
            leaky_slope: 0.2,
            n_tasks: 1,
            task: Task::Regression,
            fragmenter: "brics".into(),
            features: FeatureConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.layers_per_graph == 0 || self.heads == 0 || self.n_tasks == 0 {
            return Err(CoreError::Config(
                "hidden_dim, layers_per_graph, heads and n_tasks must be positive".into(),
            ));
        }
        if !self.leaky_slope.is_finite() {
            return Err(CoreError::Config("leaky_slope must be finite".into()));
        }
        Ok(())
    }

    /// Width of the penultimate embedding.
    pub fn embedding_dim(&self) -> usize {
        2 * self.hidden_dim
    }
}

/// The four graph levels, in forward order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Bond,
    Atom,
    Conn,
    Frag,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::Bond, Level::Atom, Level::Conn, Level::Frag];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Bond => "bond",
            Level::Atom => "atom",
            Level::Conn => "conn",
            Level::Frag => "frag",
        }
    }

    fn dims(self, config: &ModelConfig) -> (usize, usize) {
        let h = config.hidden_dim;
        match self {
            Level::Bond => (BOND_FEATURE_DIM, ANGLE_FEATURE_DIM),
            Level::Atom => (config.features.atom_dim(), h),
            Level::Conn => (CONN_FEATURE_DIM, 0),
            Level::Frag => (h, h),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// Positions of one GAT layer's tensors in the flat parameter list.
#[derive(Debug, Clone, Copy)]
struct LayerSlots {
    w: usize,
    a_recv: usize,
    a_send: usize,
    edge: Option<(usize, usize)>,
    bias: usize,
}

/// Tensor names and shapes in storage order.
pub fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let (h, heads) = (config.hidden_dim, config.heads);
    let hd = h * heads;
    let mut out = Vec::new();
    let mut push = |name: String, rows, cols| out.push(ParamSpec { name, rows, cols });
    for level in Level::ALL {
        let (d_in, d_e) = level.dims(config);
        for l in 0..config.layers_per_graph {
            let d = if l == 0 { d_in } else { h };
            let p = format!("{}.{l}", level.as_str());
            push(format!("{p}.w"), d, hd);
            push(format!("{p}.a_recv"), hd, heads);
            push(format!("{p}.a_send"), hd, heads);
            if d_e > 0 {
                push(format!("{p}.w_e"), d_e, hd);
                push(format!("{p}.a_e"), hd, heads);
            }
            push(format!("{p}.bias"), 1, h);
        }
    }
    push("head.w".into(), 2 * h, config.n_tasks);
    push("head.b".into(), 1, config.n_tasks);
    out
}

fn layer_slots(config: &ModelConfig) -> Vec<Vec<LayerSlots>> {
    let mut idx = 0;
    let mut next = || {
        idx += 1;
        idx - 1
    };
    Level::ALL
        .iter()
        .map(|level| {
            let (_, d_e) = level.dims(config);
            (0..config.layers_per_graph)
                .map(|_| {
                    let w = next();
                    let a_recv = next();
                    let a_send = next();
                    let edge = (d_e > 0).then(|| {
                        let we = next();
                        (we, next())
                    });
                    LayerSlots {
                        w,
                        a_recv,
                        a_send,
                        edge,
                        bias: next(),
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FragNetParams {
    pub config: ModelConfig,
    pub tensors: Vec<Tensor>,
}

impl FragNetParams {
    /// Glorot-uniform weights and attention vectors, zero biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SplitMix64::new(seed);
        let tensors = param_specs(config)
            .iter()
            .map(|s| {
                if s.name.ends_with("bias") || s.name.ends_with(".b") {
                    return Tensor::zeros(s.rows, s.cols);
                }
                // Attention vectors only use one block per head column.
                let fan_in = if s.name.contains(".a_") { s.rows / config.heads } else { s.rows };
                let limit = (6.0 / (fan_in + s.cols) as f64).sqrt();
                let data = (0..s.rows * s.cols).map(|_| rng.uniform(-limit, limit)).collect();
                Tensor::matrix(s.rows, s.cols, data).expect("spec shape")
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }

    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config);
        if specs.len() != tensors.len() {
            return Err(CoreError::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                specs.len(),
                tensors.len()
            )));
        }
        for (s, t) in specs.iter().zip(&tensors) {
            if t.shape() != [s.rows, s.cols] {
                return Err(CoreError::Checkpoint(format!(
                    "{}: expected {}x{}, found {:?}",
                    s.name,
                    s.rows,
                    s.cols,
                    t.shape()
                )));
            }
        }
        Ok(Self { config, tensors })
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        param_specs(&self.config).iter().position(|s| s.name == name)
    }
}

/// Attention coefficients per level and layer, each `[n_edges x heads]`.
/// A level with no edges stores an empty `0 x heads` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Alphas {
    pub bond: Vec<Tensor>,
    pub atom: Vec<Tensor>,
    pub conn: Vec<Tensor>,
    pub frag: Vec<Tensor>,
}

impl Alphas {
    pub fn level(&self, level: Level) -> &[Tensor] {
        match level {
            Level::Bond => &self.bond,
            Level::Atom => &self.atom,
            Level::Conn => &self.conn,
            Level::Frag => &self.frag,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub alphas: Alphas,
    pub penultimate: Vec<f64>,
    /// Model output in training units (standardized values or logits).
    pub prediction: Vec<f64>,
}

/// A recorded forward pass, ready for backpropagation.
pub struct Recorded {
    pub tape: Tape,
    pub params: Vec<Var>,
    pub prediction: Var,
    pub penultimate: Var,
    alpha_vars: [Vec<Option<Var>>; 4],
    heads: usize,
}

impl Recorded {
    pub fn trace(&self) -> ForwardTrace {
        let collect = |vars: &Vec<Option<Var>>| {
            vars.iter()
                .map(|v| match v {
                    Some(v) => self.tape.value(*v).clone(),
                    None => Tensor::zeros(0, self.heads),
                })
                .collect()
        };
        ForwardTrace {
            alphas: Alphas {
                bond: collect(&self.alpha_vars[0]),
                atom: collect(&self.alpha_vars[1]),
                conn: collect(&self.alpha_vars[2]),
                frag: collect(&self.alpha_vars[3]),
            },
            penultimate: self.tape.value(self.penultimate).data().to_vec(),
            prediction: self.tape.value(self.prediction).data().to_vec(),
        }
    }
}

struct Constants {
    /// `[hd x heads]`, 1 where row belongs to the column's head.
    block: Var,
    /// `[heads x hd]`, broadcasts a per-head scalar over its block.
    expand: Var,
    /// `[hd x h]`, averages the heads.
    average: Var,
}

fn constants(tape: &mut Tape, h: usize, heads: usize) -> Constants {
    let hd = h * heads;
    let mut block = Tensor::zeros(hd, heads);
    let mut expand = Tensor::zeros(heads, hd);
    let mut average = Tensor::zeros(hd, h);
    for k in 0..heads {
        for j in 0..h {
            block.set(k * h + j, k, 1.0);
            expand.set(k, k * h + j, 1.0);
            average.set(k * h + j, j, 1.0 / heads as f64);
        }
    }
    Constants {
        block: tape.constant(block),
        expand: tape.constant(expand),
        average: tape.constant(average),
    }
}

/// One multi-head attention layer. Returns the new node features and the
/// attention coefficients (absent when the graph has no edges).
fn gat_layer(
    tape: &mut Tape,
    x: Var,
    topo: &Topology,
    edge_feats: Option<Var>,
    params: &[Var],
    slots: &LayerSlots,
    consts: &Constants,
    slope: f64,
) -> Result<(Var, Option<Var>)> {
    let n = topo.n_nodes;
    let wh = tape.matmul(x, params[slots.w])?;
    let bias = params[slots.bias];
    if topo.n_edges() == 0 {
        let mean = tape.matmul(wh, consts.average)?;
        return Ok((tape.add_row(mean, bias)?, None));
    }
    let a_recv = tape.mul(params[slots.a_recv], consts.block)?;
    let a_send = tape.mul(params[slots.a_send], consts.block)?;
    // Receiver i, sender j: M_ij = a[W h_i || W h_j || W_e e_ij].
    let s_recv = tape.matmul(wh, a_recv)?;
    let s_send = tape.matmul(wh, a_send)?;
    let recv = tape.row_gather(s_recv, &topo.dst)?;
    let send = tape.row_gather(s_send, &topo.src)?;
    let mut logits = tape.add(recv, send)?;
    if let (Some((we, ae)), Some(e)) = (slots.edge, edge_feats) {
        let ae = tape.mul(params[ae], consts.block)?;
        let proj = tape.matmul(params[we], ae)?;
        let es = tape.matmul(e, proj)?;
        logits = tape.add(logits, es)?;
    }
    let act = tape.leaky_relu(logits, slope);
    let n_recv = topo.receivers.len();
    let alpha = tape.softmax_by_segment(act, &topo.dst_compact, n_recv)?;
    let alpha_wide = tape.matmul(alpha, consts.expand)?;
    let msg = tape.row_gather(wh, &topo.src)?;
    let weighted = tape.mul(msg, alpha_wide)?;
    let agg = tape.segment_sum(weighted, &topo.dst_compact, n_recv)?;
    let mean = tape.matmul(agg, consts.average)?;
    let mut out = tape.segment_sum(mean, &topo.receivers, n)?;
    if !topo.isolated.is_empty() {
        // Nodes with no in-edges pass W h through.
        let iso = tape.row_gather(wh, &topo.isolated)?;
        let iso_mean = tape.matmul(iso, consts.average)?;
        let placed = tape.segment_sum(iso_mean, &topo.isolated, n)?;
        out = tape.add(out, placed)?;
    }
    Ok((tape.add_row(out, bias)?, Some(alpha)))
}

/// One layer's tensors, evaluated outside the full model.
#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    pub w: Tensor,
    pub a_recv: Tensor,
    pub a_send: Tensor,
    /// Edge weight matrix and edge attention block.
    pub edge: Option<(Tensor, Tensor)>,
    pub bias: Tensor,
    pub heads: usize,
}

impl GatLayer {
    /// Node outputs (before any activation) and attention coefficients.
    pub fn apply(&self, x: &Tensor, topo: &Topology, edge_feats: Option<&Tensor>, slope: f64) -> Result<(Tensor, Option<Tensor>)> {
        let mut tape = Tape::new();
        let mut vars = vec![
            tape.constant(self.w.clone()),
            tape.constant(self.a_recv.clone()),
            tape.constant(self.a_send.clone()),
            tape.constant(self.bias.clone()),
        ];
        let edge = self.edge.as_ref().map(|(we, ae)| {
            vars.push(tape.constant(we.clone()));
            vars.push(tape.constant(ae.clone()));
            (4, 5)
        });
        let slots = LayerSlots {
            w: 0,
            a_recv: 1,
            a_send: 2,
            edge,
            bias: 3,
        };
        let consts = constants(&mut tape, self.bias.cols(), self.heads);
        let x = tape.constant(x.clone());
        let e = edge_feats.map(|e| tape.constant(e.clone()));
        let (out, alpha) = gat_layer(&mut tape, x, topo, e, &vars, &slots, &consts, slope)?;
        Ok((tape.value(out).clone(), alpha.map(|a| tape.value(a).clone())))
    }
}

impl FragNetParams {
    pub fn layer(&self, level: Level, index: usize) -> GatLayer {
        let s = layer_slots(&self.config)[level as usize][index];
        let t = |i: usize| self.tensors[i].clone();
        GatLayer {
            w: t(s.w),
            a_recv: t(s.a_recv),
            a_send: t(s.a_send),
            edge: s.edge.map(|(we, ae)| (t(we), t(ae))),
            bias: t(s.bias),
            heads: self.config.heads,
        }
    }
}

fn stack(
    tape: &mut Tape,
    mut x: Var,
    topo: &Topology,
    edge_feats: Option<Var>,
    params: &[Var],
    slots: &[LayerSlots],
    consts: &Constants,
    config: &ModelConfig,
) -> Result<(Var, Vec<Option<Var>>)> {
    let mut alphas = Vec::with_capacity(slots.len());
    for (l, s) in slots.iter().enumerate() {
        let (out, alpha) = gat_layer(tape, x, topo, edge_feats, params, s, consts, config.leaky_slope)?;
        alphas.push(alpha);
        x = if l + 1 < slots.len() { tape.elu(out) } else { out };
    }
    Ok((x, alphas))
}

fn zeros_index(n: usize) -> Indices {
    vec![0usize; n].into()
}

/// Records the forward pass. With `trainable`, parameters are tape params
/// and receive gradients; otherwise they are constants.
pub fn record(graphs: &HierGraphs, params: &FragNetParams, trainable: bool) -> Result<Recorded> {
    let config = &params.config;
    let h = config.hidden_dim;
    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .tensors
        .iter()
        .map(|t| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) })
        .collect();
    let slots = layer_slots(config);
    let consts = constants(&mut tape, h, config.heads);

    // Bond graph.
    let n_bonds = graphs.bond.topology.n_nodes;
    let (bond_out, bond_alpha) = if n_bonds > 0 {
        let x = tape.constant(graphs.bond.node_feats.clone());
        let e = tape.constant(graphs.bond.edge_feats.clone());
        let (out, a) = stack(&mut tape, x, &graphs.bond.topology, Some(e), &vars, &slots[0], &consts, config)?;
        (Some(out), a)
    } else {
        (None, vec![None; config.layers_per_graph])
    };

    // Atom graph, edge features from the bond graph; self-edges stay zero.
    let n_atom_edges = graphs.atom.topology.n_edges();
    let atom_edge = match bond_out {
        Some(b) => {
            let per_bond = tape.row_gather(b, &graphs.atom_edge_bonds)?;
            tape.segment_sum(per_bond, &graphs.atom_edge_rows, n_atom_edges)?
        }
        None => tape.constant(Tensor::zeros(n_atom_edges, h)),
    };
    let x = tape.constant(graphs.atom.node_feats.clone());
    let (atom_out, atom_alpha) = stack(&mut tape, x, &graphs.atom.topology, Some(atom_edge), &vars, &slots[1], &consts, config)?;

    // Fragment initial features: sum of member atoms.
    let frag_init = tape.segment_sum(atom_out, &graphs.frag_of_atom, graphs.frag.n_frags)?;

    // Connection graph (no edge features).
    let x = tape.constant(graphs.conn.node_feats.clone());
    let (conn_out, conn_alpha) = stack(&mut tape, x, &graphs.conn.topology, None, &vars, &slots[2], &consts, config)?;

    // Fragment graph, edge features from the connection graph.
    let frag_edge = tape.row_gather(conn_out, &graphs.frag_edge_conns)?;
    let (frag_out, frag_alpha) = stack(&mut tape, frag_init, &graphs.frag.topology, Some(frag_edge), &vars, &slots[3], &consts, config)?;

    let atom_sum = tape.segment_sum(atom_out, &zeros_index(graphs.atom.topology.n_nodes), 1)?;
    let frag_sum = tape.segment_sum(frag_out, &zeros_index(graphs.frag.n_frags), 1)?;
    let penultimate = tape.concat(&[atom_sum, frag_sum])?;
    let n = vars.len();
    let head = tape.matmul(penultimate, vars[n - 2])?;
    let prediction = tape.add_row(head, vars[n - 1])?;

    Ok(Recorded {
        tape,
        params: vars,
        prediction,
        penultimate,
        alpha_vars: [bond_alpha, atom_alpha, conn_alpha, frag_alpha],
        heads: config.heads,
    })
}

pub fn forward(graphs: &HierGraphs, params: &FragNetParams) -> Result<ForwardTrace> {
    Ok(record(graphs, params, false)?.trace())
}
