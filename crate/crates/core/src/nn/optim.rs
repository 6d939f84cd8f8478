use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerSpec {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd { momentum: f64, nesterov: bool },
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter moment buffers. Created lazily on the first step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One update of `params` in place. `params` and `grads` are matching lists of
/// flat tensors.
pub fn optimizer_step(
    state: &mut OptimizerState,
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    spec: &OptimizerSpec,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
        return Err(Error::Shape("parameter and gradient lists differ".into()));
    }
    if !(lr >= 0.0) {
        return Err(Error::InvalidArgument(format!("learning rate {lr}")));
    }
    if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(Error::Numerical("gradient".into()));
    }
    if state.first.is_empty() {
        state.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        if matches!(spec, OptimizerSpec::Adam { .. }) {
            state.second = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        }
    }
    state.step += 1;
    match *spec {
        OptimizerSpec::Sgd { momentum, nesterov } => {
            for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut state.first) {
                for i in 0..p.len() {
                    v[i] = momentum * v[i] + g[i];
                    let update = if nesterov { g[i] + momentum * v[i] } else { v[i] };
                    p[i] -= lr * update;
                }
            }
        }
        OptimizerSpec::Adam { beta1, beta2, eps } => {
            let t = state.step as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            for (((p, g), m), v) in params
                .iter_mut()
                .zip(grads)
                .zip(&mut state.first)
                .zip(&mut state.second)
            {
                for i in 0..p.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                    let mh = m[i] / c1;
                    let vh = v[i] / c2;
                    p[i] -= lr * mh / (vh.sqrt() + eps);
                }
            }
        }
    }
    Ok(())
}

/// Scales gradients so their global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(state: &mut OptimizerState, p: &mut f64, g: f64, spec: &OptimizerSpec, lr: f64) {
        let mut ps = [std::slice::from_mut(p)];
        optimizer_step(state, &mut ps, &[&[g]], spec, lr).unwrap();
    }

    #[test]
    fn plain_sgd() {
        let spec = OptimizerSpec::Sgd { momentum: 0.0, nesterov: false };
        let mut p = 1.0;
        step(&mut OptimizerState::new(), &mut p, 0.5, &spec, 0.1);
        assert!((p - 0.95).abs() < 1e-15);
    }

    #[test]
    fn momentum_two_steps() {
        let spec = OptimizerSpec::Sgd { momentum: 0.9, nesterov: false };
        let mut st = OptimizerState::new();
        let mut p = 1.0;
        step(&mut st, &mut p, 1.0, &spec, 0.1);
        step(&mut st, &mut p, 1.0, &spec, 0.1);
        assert!((p - 0.71).abs() < 1e-12);
    }

    #[test]
    fn nesterov_two_steps() {
        // v1 = 1, update g + m v1 = 1.9; v2 = 1.9, update 1 + 0.9 * 1.9 = 2.71.
        let spec = OptimizerSpec::Sgd { momentum: 0.9, nesterov: true };
        let mut st = OptimizerState::new();
        let mut p = 1.0;
        step(&mut st, &mut p, 1.0, &spec, 0.1);
        assert!((p - 0.81).abs() < 1e-12);
        step(&mut st, &mut p, 1.0, &spec, 0.1);
        assert!((p - (0.81 - 0.271)).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        for g in [3.0, -0.02, 1e-3] {
            let mut p = 0.5;
            step(&mut OptimizerState::new(), &mut p, g, &OptimizerSpec::default(), 0.01);
            let moved = 0.5 - p;
            assert!((moved - 0.01 * f64::signum(g)).abs() < 1e-6, "{g}: {moved}");
        }
    }

    #[test]
    fn nan_gradient_is_error() {
        let mut p = 0.0;
        let mut ps = [std::slice::from_mut(&mut p)];
        let err = optimizer_step(&mut OptimizerState::new(), &mut ps, &[&[f64::NAN]], &OptimizerSpec::default(), 0.1);
        assert!(matches!(err, Err(Error::Numerical(_))));
    }

    #[test]
    fn clipping() {
        let mut a = [3.0, 4.0];
        let mut gs = [&mut a[..]];
        assert_eq!(clip_global_norm(&mut gs, 1.0), 5.0);
        assert!((a[0] - 0.6).abs() < 1e-15 && (a[1] - 0.8).abs() < 1e-15);
    }
}
