//! Finite-difference gradient check of the full utterance loss.

use ndarray::ArrayView2;

use super::loss::{loss_and_grad, loss_only, LossSpec};
use super::model::{Mode, ModelParams};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-3;
/// Denominator floor so parameters with near-zero gradient do not blow up the ratio.
pub const REL_FLOOR: f64 = 1e-6;

/// Maximum relative error between the analytic gradient and five-point
/// central differences with step `FD_STEP`, over every parameter. Runs in eval mode.
pub fn grad_check(params: &ModelParams, input: ArrayView2<'_, f64>, phonemes: &[usize], spec: &LossSpec) -> Result<f64> {
    let (_, analytic) = loss_and_grad(params, input, phonemes, spec, Mode::Eval)?;
    let analytic: Vec<f64> = analytic.slices().iter().flat_map(|s| s.iter().copied()).collect();
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    let mut flat = 0;
    let tensors = probe.slices().len();
    for k in 0..tensors {
        let len = probe.slices()[k].len();
        for i in 0..len {
            let orig = probe.slices()[k][i];
            let mut at = |d: f64| {
                probe.slices_mut()[k][i] = orig + d;
                loss_only(&probe, input, phonemes, spec)
            };
            let h = FD_STEP;
            let numeric = (8.0 * (at(h)? - at(-h)?) - (at(2.0 * h)? - at(-2.0 * h)?)) / (12.0 * h);
            probe.slices_mut()[k][i] = orig;
            let a = analytic[flat];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(rel);
            flat += 1;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Objective;
    use crate::nn::model::ModelConfig;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn phoneme_objective_tiny_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = ModelConfig {
            input_dim: 3,
            hidden: 3,
            layers: 1,
            layer_norm_head: false,
            num_classes: Objective::Phoneme.num_classes(),
        };
        let p = ModelParams::init(cfg, &mut rng);
        let x = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
        let err = grad_check(&p, x.view(), &[3, 7], &LossSpec::plain(Objective::Phoneme)).unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
