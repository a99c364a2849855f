use crate::error::{mismatch, TensorError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn for_params(params: &[Tensor]) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect(),
        }
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<(), TensorError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(mismatch(
            "adam_step",
            format!(
                "{} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(mismatch(
                "adam_step",
                format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape()),
            ));
        }
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((w, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *mv = config.beta1 * *mv + (1.0 - config.beta1) * gv;
            *vv = config.beta2 * *vv + (1.0 - config.beta2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *w -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut params = vec![Tensor::matrix(1, 2, vec![1.5, -2.0]).unwrap()];
        let mut state = AdamState::for_params(&params);
        state.m[0] = Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap();
        state.v[0] = Tensor::matrix(1, 2, vec![0.4, 0.2]).unwrap();
        let grads = vec![Tensor::zeros(1, 2)];
        adam_step(&mut params, &grads, &mut state, &AdamConfig::default()).unwrap();
        assert_eq!(params[0].data(), &[1.5, -2.0]);
        assert!((state.v[0].data()[0] - 0.4 * 0.999).abs() < 1e-15);
        assert!((state.v[0].data()[1] - 0.2 * 0.999).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // At t=1 the bias-corrected ratio is g/(|g|+eps).
        let cfg = AdamConfig::default();
        let mut params = vec![Tensor::matrix(1, 3, vec![0.0, 0.0, 0.0]).unwrap()];
        let mut state = AdamState::for_params(&params);
        let g = [0.3, -4.0, 1e-3];
        let grads = vec![Tensor::matrix(1, 3, g.to_vec()).unwrap()];
        adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
        for (p, gv) in params[0].data().iter().zip(g) {
            let expected = -cfg.lr * gv / (gv.abs() + cfg.eps);
            assert!((p - expected).abs() < 1e-15, "{p} vs {expected}");
        }
    }

    #[test]
    fn minimizes_a_parabola() {
        // f(x) = x^2 from x = 5 with lr 0.1; scalar re-simulation is the oracle.
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut params = vec![Tensor::scalar(5.0)];
        let mut state = AdamState::for_params(&params);

        let (mut x, mut m, mut v) = (5.0f64, 0.0f64, 0.0f64);
        for t in 1..=100 {
            let grads = vec![Tensor::scalar(2.0 * params[0].item())];
            adam_step(&mut params, &grads, &mut state, &cfg).unwrap();

            let g = 2.0 * x;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
        assert!(params[0].item().abs() < 0.5);
        assert!((params[0].item() - x).abs() < 1e-12);
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let mut params = vec![Tensor::zeros(2, 2)];
        let mut state = AdamState::for_params(&params);
        let grads = vec![Tensor::zeros(1, 2)];
        assert!(adam_step(&mut params, &grads, &mut state, &AdamConfig::default()).is_err());
    }
}
