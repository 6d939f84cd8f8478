//! Mini-batch training loop.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ctc::min_frames;
use super::loss::{loss_and_grad, phoneme_posteriors, DiphoneLoss, LossSpec};
use super::model::{forward, log_softmax, Mode, ModelConfig, ModelParams};
use super::optim::{clip_global_norm, optimizer_step, OptimizerSpec, OptimizerState};
use super::schedule::{lr_at, Schedule};
use super::speckle::speckle_mask;
use super::stack::{stack_inputs, stacked_len};
use crate::alphabet::Objective;
use crate::data::Utterance;
use crate::decode::greedy_decode;
use crate::error::{Error, Result};
use crate::metrics::corpus_error_rate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: Objective,
    pub diphone_loss: DiphoneLoss,
    pub optimizer: OptimizerSpec,
    pub schedule: Schedule,
    pub fastemit_lambda: f64,
    pub speckle_prob: f64,
    pub dropout_prob: f64,
    pub window: usize,
    pub stride: usize,
    pub hidden: usize,
    pub layers: usize,
    pub layer_norm_head: bool,
    pub batch_size: usize,
    pub iterations: u64,
    pub clip_norm: f64,
    pub val_fraction: f64,
    pub eval_every: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::Phoneme,
            diphone_loss: DiphoneLoss::Paths,
            optimizer: OptimizerSpec::default(),
            schedule: Schedule::Linear {
                start: 0.003,
                end: 0.0001,
                total_iters: 2000,
            },
            fastemit_lambda: 0.01,
            speckle_prob: 0.3,
            dropout_prob: 0.1,
            window: 4,
            stride: 2,
            hidden: 128,
            layers: 2,
            layer_norm_head: true,
            batch_size: 8,
            iterations: 2000,
            clip_norm: 10.0,
            val_fraction: 0.1,
            eval_every: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.fastemit_lambda >= 0.0) {
            return bad("fastemit_lambda must be >= 0");
        }
        if !(0.0..1.0).contains(&self.speckle_prob) {
            return bad("speckle_prob must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return bad("dropout_prob must be in [0, 1)");
        }
        if self.window == 0 || self.stride == 0 || self.hidden == 0 || self.batch_size == 0 {
            return bad("window, stride, hidden and batch_size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must be in [0, 1)");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be > 0");
        }
        match self.optimizer {
            OptimizerSpec::Adam { beta1, beta2, eps } if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 => {
                bad("adam betas must be in [0, 1) and eps > 0")
            }
            OptimizerSpec::Sgd { momentum, .. } if !(0.0..1.0).contains(&momentum) => bad("momentum must be in [0, 1)"),
            _ => Ok(()),
        }
    }

    pub fn model_config(&self, feature_dim: usize) -> ModelConfig {
        ModelConfig {
            input_dim: feature_dim * self.window,
            hidden: self.hidden,
            layers: self.layers,
            layer_norm_head: self.layer_norm_head,
            num_classes: self.objective.num_classes(),
        }
    }

    pub fn loss_spec(&self) -> LossSpec {
        LossSpec {
            objective: self.objective,
            diphone_loss: self.diphone_loss,
            fastemit_lambda: self.fastemit_lambda,
        }
    }
}

/// Trained weights together with the recipe that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub config: TrainConfig,
}

impl TrainedModel {
    pub fn stack(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        stack_inputs(features, self.config.window, self.config.stride)
    }

    /// Model log-probabilities over its own alphabet.
    pub fn log_probs(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let x = self.stack(features)?;
        let (logits, _) = forward(&self.params, x.view(), Mode::Eval)?;
        Ok(log_softmax(logits.view()))
    }

    /// Phoneme log-posteriors (`T' x 41`); diphone models are marginalized.
    pub fn phoneme_log_probs(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(phoneme_posteriors(self.config.objective, self.log_probs(features)?))
    }

    pub fn greedy_phonemes(&self, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        Ok(greedy_decode(self.phoneme_log_probs(features)?.view()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub iteration: u64,
    pub lr: f64,
    /// Mean per-utterance training loss since the previous row.
    pub loss: f64,
    pub val_per: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<TrainLogRow>,
    /// Ids of utterances too short for their label sequence.
    pub skipped: Vec<String>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,lr,loss,val_per\n");
        for r in &self.rows {
            let per = r.val_per.map(|v| format!("{v:.6}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:e},{:.6},{}", r.iteration, r.lr, r.loss, per);
        }
        out
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.loss)
    }
}

struct Example {
    input: Array2<f64>,
    phonemes: Vec<usize>,
}

fn prepare(dataset: &[Utterance], cfg: &TrainConfig, log: &mut TrainLog) -> Result<Vec<Example>> {
    let mut out = Vec::with_capacity(dataset.len());
    for u in dataset {
        let labels = cfg.objective.labels(&u.phonemes)?;
        let frames = stacked_len(u.num_frames(), cfg.window, cfg.stride);
        if labels.is_empty() || frames < min_frames(&labels) {
            log::warn!("skipping {}: {} frames for {} labels", u.id, frames, labels.len());
            log.skipped.push(u.id.clone());
            continue;
        }
        out.push(Example {
            input: stack_inputs(u.features.view(), cfg.window, cfg.stride)?,
            phonemes: u.phonemes.clone(),
        });
    }
    Ok(out)
}

/// Pooled greedy phoneme error rate of `model` on `examples`.
fn greedy_per(params: &ModelParams, objective: Objective, examples: &[Example]) -> Result<f64> {
    let mut pairs = Vec::with_capacity(examples.len());
    for ex in examples {
        let (logits, _) = forward(params, ex.input.view(), Mode::Eval)?;
        let lp = phoneme_posteriors(objective, log_softmax(logits.view()));
        pairs.push((ex.phonemes.clone(), greedy_decode(lp.view())));
    }
    corpus_error_rate(&pairs)
}

/// Trains a decoder on `dataset`. A `val_fraction` share of the utterances is
/// held out for periodic greedy PER.
pub fn train(dataset: &[Utterance], cfg: &TrainConfig) -> Result<(TrainedModel, TrainLog)> {
    cfg.validate()?;
    let first = dataset
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty training set".into()))?;
    let feature_dim = first.feature_dim();
    if dataset.iter().any(|u| u.feature_dim() != feature_dim) {
        return Err(Error::Shape("feature dimension varies across the dataset".into()));
    }

    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut split_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5917_0a11);
    order.shuffle(&mut split_rng);
    let n_val = if dataset.len() > 1 {
        ((dataset.len() as f64 * cfg.val_fraction).round() as usize).min(dataset.len() - 1)
    } else {
        0
    };
    let val_set: Vec<Utterance> = order[..n_val].iter().map(|&i| dataset[i].clone()).collect();
    let train_set: Vec<Utterance> = order[n_val..].iter().map(|&i| dataset[i].clone()).collect();
    let train_ex = prepare(&train_set, cfg, &mut log)?;
    let val_ex = prepare(&val_set, cfg, &mut log)?;
    if train_ex.is_empty() {
        return Err(Error::InvalidArgument("no trainable utterances".into()));
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(cfg.model_config(feature_dim), &mut init_rng);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let mut state = OptimizerState::new();
    let spec = cfg.loss_spec();

    let mut epoch: Vec<usize> = Vec::new();
    let mut loss_acc = 0.0;
    let mut loss_count = 0usize;
    for it in 0..cfg.iterations {
        let mut grads = params.zeros_like();
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch_size.min(train_ex.len()) {
            if epoch.is_empty() {
                epoch = (0..train_ex.len()).collect();
                epoch.shuffle(&mut batch_rng);
            }
            let ex = &train_ex[epoch.pop().unwrap()];
            let input = speckle_mask(&ex.input, cfg.speckle_prob, &mut noise_rng)?;
            let mode = Mode::Train {
                dropout: cfg.dropout_prob,
                rng: &mut noise_rng,
            };
            let (loss, g) = loss_and_grad(&params, input.view(), &ex.phonemes, &spec, mode)?;
            batch_loss += loss;
            grads.add_assign(&g);
        }
        let n = cfg.batch_size.min(train_ex.len()) as f64;
        grads.scale(1.0 / n);
        batch_loss /= n;
        clip_global_norm(&mut grads.slices_mut(), cfg.clip_norm);
        let lr = lr_at(&cfg.schedule, it);
        optimizer_step(&mut state, &mut params.slices_mut(), &grads.slices(), &cfg.optimizer, lr)?;
        loss_acc += batch_loss;
        loss_count += 1;

        let last = it + 1 == cfg.iterations;
        if (cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0) || last {
            let val_per = if val_ex.is_empty() {
                None
            } else {
                Some(greedy_per(&params, cfg.objective, &val_ex)?)
            };
            let row = TrainLogRow {
                iteration: it + 1,
                lr,
                loss: loss_acc / loss_count as f64,
                val_per,
            };
            log::info!("iter {} lr {:.2e} loss {:.4} val_per {:?}", row.iteration, row.lr, row.loss, row.val_per);
            log.rows.push(row);
            loss_acc = 0.0;
            loss_count = 0;
        }
    }
    Ok((
        TrainedModel {
            params,
            config: cfg.clone(),
        },
        log,
    ))
}
