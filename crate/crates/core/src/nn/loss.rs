//! Full utterance objective: forward, log-softmax, CTC (+FastEmit), backward.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::ctc::{ctc_loss_and_grad, fastemit_augment};
use super::model::{backward, forward, log_softmax, log_softmax_backward, Mode, ModelParams};
use crate::alphabet::{marginalize_into, to_diphones, Objective, NUM_PHONEMES, PHONEME_BLANK, PHONEME_CLASSES};
use crate::error::{Error, Result};

/// Where the CTC loss is applied for a diphone-output model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiphoneLoss {
    /// CTC over diphone label sequences.
    #[default]
    Paths,
    /// CTC over phoneme labels on marginalized diphone posteriors.
    Marginalized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub objective: Objective,
    pub diphone_loss: DiphoneLoss,
    pub fastemit_lambda: f64,
}

impl LossSpec {
    pub fn plain(objective: Objective) -> Self {
        LossSpec {
            objective,
            diphone_loss: DiphoneLoss::Paths,
            fastemit_lambda: 0.0,
        }
    }
}

/// Marginalizes every row of a `T x 1601` diphone log-probability matrix.
pub fn marginalize_rows(log_probs: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros((log_probs.nrows(), PHONEME_CLASSES));
    for (src, mut dst) in log_probs.rows().into_iter().zip(out.rows_mut()) {
        let src = src.to_vec();
        marginalize_into(&src, dst.as_slice_mut().unwrap());
    }
    out
}

/// Phoneme log-posteriors (`T x 41`) from model log-probabilities of either objective.
pub fn phoneme_posteriors(objective: Objective, log_probs: Array2<f64>) -> Array2<f64> {
    match objective {
        Objective::Phoneme => log_probs,
        Objective::Diphone => marginalize_rows(log_probs.view()),
    }
}

/// Loss and `d loss / d log_probs` for one utterance.
pub fn objective_and_grad(log_probs: ArrayView2<'_, f64>, phonemes: &[usize], spec: &LossSpec) -> Result<(f64, Array2<f64>)> {
    match (spec.objective, spec.diphone_loss) {
        (Objective::Phoneme, _) => {
            let out = ctc_loss_and_grad(log_probs, phonemes, PHONEME_BLANK)?;
            Ok((out.loss, fastemit_augment(&out, spec.fastemit_lambda)?))
        }
        (Objective::Diphone, DiphoneLoss::Paths) => {
            let labels = to_diphones(phonemes)?;
            let out = ctc_loss_and_grad(log_probs, &labels, Objective::Diphone.blank())?;
            Ok((out.loss, fastemit_augment(&out, spec.fastemit_lambda)?))
        }
        (Objective::Diphone, DiphoneLoss::Marginalized) => {
            let marg = marginalize_rows(log_probs);
            let out = ctc_loss_and_grad(marg.view(), phonemes, PHONEME_BLANK)?;
            let g_marg = fastemit_augment(&out, spec.fastemit_lambda)?;
            let mut g = Array2::zeros(log_probs.dim());
            for t in 0..log_probs.nrows() {
                for prev in 0..NUM_PHONEMES {
                    for cur in 0..NUM_PHONEMES {
                        let d = prev * NUM_PHONEMES + cur;
                        g[[t, d]] = g_marg[[t, cur]] * (log_probs[[t, d]] - marg[[t, cur]]).exp();
                    }
                }
                g[[t, Objective::Diphone.blank()]] = g_marg[[t, PHONEME_BLANK]];
            }
            Ok((out.loss, g))
        }
    }
}

/// Loss and parameter gradients for one stacked utterance.
pub fn loss_and_grad(
    params: &ModelParams,
    input: ArrayView2<'_, f64>,
    phonemes: &[usize],
    spec: &LossSpec,
    mode: Mode<'_>,
) -> Result<(f64, ModelParams)> {
    if params.config.num_classes != spec.objective.num_classes() {
        return Err(Error::Shape(format!(
            "model emits {} classes, objective needs {}",
            params.config.num_classes,
            spec.objective.num_classes()
        )));
    }
    let (logits, cache) = forward(params, input, mode)?;
    let lp = log_softmax(logits.view());
    let (loss, g_lp) = objective_and_grad(lp.view(), phonemes, spec)?;
    let d_logits = log_softmax_backward(lp.view(), g_lp.view());
    Ok((loss, backward(params, &cache, d_logits.view())))
}

/// Loss only, in eval mode.
pub fn loss_only(params: &ModelParams, input: ArrayView2<'_, f64>, phonemes: &[usize], spec: &LossSpec) -> Result<f64> {
    let (logits, _) = forward(params, input, Mode::Eval)?;
    let lp = log_softmax(logits.view());
    Ok(objective_and_grad(lp.view(), phonemes, spec)?.0)
}
