//! Central finite differences (eps = 1e-5) against every backward rule.

use std::sync::Arc;

use fragnet_tensor::{Indices, SplitMix64, Tape, Tensor, Var};

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random(rng: &mut SplitMix64, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.uniform(lo, hi)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Builds `sum(f(inputs) ⊙ probe)` so every output entry gets a distinct weight.
fn scalar_loss<F>(tape: &mut Tape, vars: &[Var], f: &F, probe_seed: u64) -> Var
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let out = f(tape, vars);
    let v = tape.value(out);
    if v.len() == 1 {
        return out;
    }
    let mut rng = SplitMix64::new(probe_seed);
    let probe = tape.constant(random(&mut rng, v.rows(), v.cols(), -1.0, 1.0));
    let weighted = tape.mul(out, probe).unwrap();
    tape.sum(weighted)
}

fn evaluate<F>(inputs: &[Tensor], f: &F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = scalar_loss(&mut tape, &vars, f, 99);
    tape.value(loss).item()
}

/// Largest relative error between analytic and numeric gradients.
fn max_relative_error<F>(inputs: Vec<Tensor>, f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = scalar_loss(&mut tape, &vars, &f, 99);
    let grads = tape.backward(loss).unwrap();

    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).cloned().unwrap_or_else(|| Tensor::zeros(input.rows(), input.cols()));
        for i in 0..input.len() {
            let mut plus = inputs.clone();
            plus[k].data_mut()[i] += EPS;
            let mut minus = inputs.clone();
            minus[k].data_mut()[i] -= EPS;
            let numeric = (evaluate(&plus, &f) - evaluate(&minus, &f)) / (2.0 * EPS);
            let a = analytic.data()[i];
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}

fn idx(v: &[usize]) -> Indices {
    Arc::from(v)
}

fn assert_ok(name: &str, err: f64) {
    assert!(err < TOL, "{name}: max relative error {err:e}");
}

#[test]
fn matmul() {
    let mut rng = SplitMix64::new(1);
    let a = random(&mut rng, 3, 4, -1.0, 1.0);
    let b = random(&mut rng, 4, 2, -1.0, 1.0);
    assert_ok("matmul", max_relative_error(vec![a, b], |t, v| t.matmul(v[0], v[1]).unwrap()));
}

#[test]
fn add_mul_scale() {
    let mut rng = SplitMix64::new(2);
    let a = random(&mut rng, 3, 4, -1.0, 1.0);
    let b = random(&mut rng, 3, 4, -1.0, 1.0);
    assert_ok("add", max_relative_error(vec![a.clone(), b.clone()], |t, v| t.add(v[0], v[1]).unwrap()));
    assert_ok("mul", max_relative_error(vec![a.clone(), b], |t, v| t.mul(v[0], v[1]).unwrap()));
    assert_ok("scale", max_relative_error(vec![a], |t, v| t.scale(v[0], -2.5)));
}

#[test]
fn add_row() {
    let mut rng = SplitMix64::new(3);
    let x = random(&mut rng, 3, 4, -1.0, 1.0);
    let b = random(&mut rng, 1, 4, -1.0, 1.0);
    assert_ok("add_row", max_relative_error(vec![x, b], |t, v| t.add_row(v[0], v[1]).unwrap()));
}

#[test]
fn concat() {
    let mut rng = SplitMix64::new(4);
    let a = random(&mut rng, 3, 4, -1.0, 1.0);
    let b = random(&mut rng, 3, 2, -1.0, 1.0);
    assert_ok("concat", max_relative_error(vec![a, b], |t, v| t.concat(&[v[0], v[1]]).unwrap()));
}

#[test]
fn row_gather_and_segment_sum() {
    let mut rng = SplitMix64::new(5);
    let x = random(&mut rng, 3, 4, -1.0, 1.0);
    let gather = idx(&[2, 0, 2, 1, 2]);
    assert_ok(
        "row_gather",
        max_relative_error(vec![x.clone()], move |t, v| t.row_gather(v[0], &gather).unwrap()),
    );
    let seg = idx(&[1, 1, 0]);
    assert_ok(
        "segment_sum",
        max_relative_error(vec![x], move |t, v| t.segment_sum(v[0], &seg, 2).unwrap()),
    );
}

#[test]
fn elementwise_nonlinearities() {
    let mut rng = SplitMix64::new(6);
    let x = random(&mut rng, 3, 4, -2.0, 2.0);
    assert_ok("leaky_relu", max_relative_error(vec![x.clone()], |t, v| t.leaky_relu(v[0], 0.2)));
    assert_ok("elu", max_relative_error(vec![x.clone()], |t, v| t.elu(v[0])));
    assert_ok("exp", max_relative_error(vec![x], |t, v| t.exp(v[0])));
    let pos = random(&mut rng, 3, 4, 0.2, 3.0);
    assert_ok("log", max_relative_error(vec![pos], |t, v| t.log(v[0]).unwrap()));
}

#[test]
fn softmax_by_segment() {
    let mut rng = SplitMix64::new(7);
    let x = random(&mut rng, 3, 4, -2.0, 2.0);
    let seg = idx(&[0, 1, 0]);
    assert_ok(
        "softmax_by_segment",
        max_relative_error(vec![x], move |t, v| t.softmax_by_segment(v[0], &seg, 2).unwrap()),
    );
}

#[test]
fn losses() {
    let mut rng = SplitMix64::new(8);
    let p = random(&mut rng, 3, 4, -2.0, 2.0);
    let target = random(&mut rng, 3, 4, -2.0, 2.0);
    let labels = Tensor::matrix(3, 4, (0..12).map(|i| (i % 2) as f64).collect()).unwrap();
    let mask = Tensor::matrix(3, 4, (0..12).map(|i| if i % 5 == 0 { 0.0 } else { 1.0 }).collect()).unwrap();

    let (t1, m1) = (target.clone(), mask.clone());
    assert_ok(
        "mse_loss",
        max_relative_error(vec![p.clone()], move |t, v| t.mse_loss(v[0], t1.clone(), Some(m1.clone())).unwrap()),
    );
    assert_ok(
        "bce_with_logits_loss",
        max_relative_error(vec![p], move |t, v| {
            t.bce_with_logits_loss(v[0], labels.clone(), Some(mask.clone())).unwrap()
        }),
    );
}

#[test]
fn attention_composite() {
    // logits -> leaky_relu -> segment softmax -> weighted gather -> segment sum,
    // the exact chain a graph attention layer records.
    let mut rng = SplitMix64::new(9);
    let h = random(&mut rng, 4, 3, -1.0, 1.0);
    let w = random(&mut rng, 3, 3, -1.0, 1.0);
    let a = random(&mut rng, 3, 1, -1.0, 1.0);
    let src = idx(&[1, 2, 0, 3, 3, 0]);
    let dst = idx(&[0, 0, 1, 1, 2, 3]);
    let f = move |t: &mut Tape, v: &[Var]| {
        let wh = t.matmul(v[0], v[1]).unwrap();
        let score = t.matmul(wh, v[2]).unwrap();
        let s_src = t.row_gather(score, &src).unwrap();
        let s_dst = t.row_gather(score, &dst).unwrap();
        let logits = t.add(s_src, s_dst).unwrap();
        let act = t.leaky_relu(logits, 0.2);
        let alpha = t.softmax_by_segment(act, &dst, 4).unwrap();
        let ones = t.constant(Tensor::filled(1, 3, 1.0));
        let alpha_wide = t.matmul(alpha, ones).unwrap();
        let msg = t.row_gather(wh, &src).unwrap();
        let weighted = t.mul(msg, alpha_wide).unwrap();
        let out = t.segment_sum(weighted, &dst, 4).unwrap();
        t.elu(out)
    };
    assert_ok("attention composite", max_relative_error(vec![h, w, a], f));
}
