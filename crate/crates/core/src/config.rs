//! Flat `key = value` run configuration covering every stage.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are rejected.
//! `RunConfig::to_text` writes every key, so an echoed config fully
//! reproduces a run.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::alphabet::Objective;
use crate::data::{CorpusConfig, SynthConfig};
use crate::decode::BeamConfig;
use crate::error::{Error, Result};
use crate::llm_client::ScorerEndpoint;
use crate::lm::NgramTrainConfig;
use crate::nn::{DiphoneLoss, OptimizerSpec, Schedule, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    /// Hypotheses taken from each decoder's N-best list.
    pub top_m: usize,
    /// Remote merge/score service; `None` runs fully offline.
    pub endpoint: Option<ScorerEndpoint>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig { top_m: 1, endpoint: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub corpus: CorpusConfig,
    pub train: TrainConfig,
    pub lm: NgramTrainConfig,
    pub beam: BeamConfig,
    pub ensemble: EnsembleConfig,
}

/// Keys in the order they are written, grouped by stage.
pub const KEYS: &[&str] = &[
    "feature_dim",
    "frames_per_phoneme_mean",
    "frames_per_phoneme_jitter",
    "noise_sigma",
    "prototype_seed",
    "transition_blend",
    "vocab_size",
    "num_train",
    "num_test",
    "min_words",
    "max_words",
    "branching",
    "corpus_seed",
    "objective",
    "diphone_loss",
    "optimizer",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "momentum",
    "nesterov",
    "schedule",
    "lr",
    "lr_end",
    "lr_total_iters",
    "lr_factor",
    "lr_step_iters",
    "lr_step_at",
    "fastemit_lambda",
    "speckle_prob",
    "dropout_prob",
    "window",
    "stride",
    "hidden",
    "layers",
    "layer_norm_head",
    "batch_size",
    "iterations",
    "clip_norm",
    "val_fraction",
    "eval_every",
    "seed",
    "lm_order",
    "lm_discount",
    "alpha",
    "beta",
    "beam_width",
    "nbest_k",
    "top_m",
    "endpoint",
    "endpoint_timeout_ms",
    "endpoint_retries",
    "endpoint_max_concurrent",
    "endpoint_token",
    "preamble_blocklist",
];

fn value<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = &map[key];
    raw.parse()
        .map_err(|_| Error::Config(format!("bad value `{raw}` for `{key}`")))
}

impl RunConfig {
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        let s = &self.synth;
        put("feature_dim", s.feature_dim.to_string());
        put("frames_per_phoneme_mean", s.frames_per_phoneme_mean.to_string());
        put("frames_per_phoneme_jitter", s.frames_per_phoneme_jitter.to_string());
        put("noise_sigma", s.noise_sigma.to_string());
        put("prototype_seed", s.prototype_seed.to_string());
        put("transition_blend", s.transition_blend.to_string());
        let c = &self.corpus;
        put("vocab_size", c.vocab_size.to_string());
        put("num_train", c.num_train.to_string());
        put("num_test", c.num_test.to_string());
        put("min_words", c.min_words.to_string());
        put("max_words", c.max_words.to_string());
        put("branching", c.branching.to_string());
        put("corpus_seed", c.seed.to_string());
        let t = &self.train;
        put("objective", t.objective.to_string());
        put(
            "diphone_loss",
            match t.diphone_loss {
                DiphoneLoss::Paths => "paths",
                DiphoneLoss::Marginalized => "marginalized",
            }
            .into(),
        );
        let (beta1, beta2, eps, momentum, nesterov) = match t.optimizer {
            OptimizerSpec::Adam { beta1, beta2, eps } => (beta1, beta2, eps, 0.9, false),
            OptimizerSpec::Sgd { momentum, nesterov } => (0.9, 0.999, 1e-8, momentum, nesterov),
        };
        put(
            "optimizer",
            if matches!(t.optimizer, OptimizerSpec::Adam { .. }) { "adam" } else { "sgd" }.into(),
        );
        put("adam_beta1", beta1.to_string());
        put("adam_beta2", beta2.to_string());
        put("adam_eps", eps.to_string());
        put("momentum", momentum.to_string());
        put("nesterov", nesterov.to_string());
        let (kind, lr, lr_end, total, factor, step, at) = match t.schedule {
            Schedule::Constant { lr } => ("constant", lr, lr, t.iterations, 0.1, 1000, 1000),
            Schedule::Linear { start, end, total_iters } => ("linear", start, end, total_iters, 0.1, 1000, 1000),
            Schedule::Step { start, factor, step_iters } => ("step", start, start, t.iterations, factor, step_iters, 1000),
            Schedule::SingleStep { start, factor, at } => ("single_step", start, start, t.iterations, factor, 1000, at),
        };
        put("schedule", kind.into());
        put("lr", lr.to_string());
        put("lr_end", lr_end.to_string());
        put("lr_total_iters", total.to_string());
        put("lr_factor", factor.to_string());
        put("lr_step_iters", step.to_string());
        put("lr_step_at", at.to_string());
        put("fastemit_lambda", t.fastemit_lambda.to_string());
        put("speckle_prob", t.speckle_prob.to_string());
        put("dropout_prob", t.dropout_prob.to_string());
        put("window", t.window.to_string());
        put("stride", t.stride.to_string());
        put("hidden", t.hidden.to_string());
        put("layers", t.layers.to_string());
        put("layer_norm_head", t.layer_norm_head.to_string());
        put("batch_size", t.batch_size.to_string());
        put("iterations", t.iterations.to_string());
        put("clip_norm", t.clip_norm.to_string());
        put("val_fraction", t.val_fraction.to_string());
        put("eval_every", t.eval_every.to_string());
        put("seed", t.seed.to_string());
        put("lm_order", self.lm.order.to_string());
        put("lm_discount", self.lm.discount.to_string());
        let b = &self.beam;
        put("alpha", b.alpha.to_string());
        put("beta", b.beta.to_string());
        put("beam_width", b.beam_width.to_string());
        put("nbest_k", b.nbest_k.to_string());
        put("top_m", self.ensemble.top_m.to_string());
        let ep = self.ensemble.endpoint.clone().unwrap_or_else(|| ScorerEndpoint::new(""));
        put("endpoint", ep.base_url.clone());
        put("endpoint_timeout_ms", ep.timeout_ms.to_string());
        put("endpoint_retries", ep.max_retries.to_string());
        put("endpoint_max_concurrent", ep.max_concurrent.to_string());
        put("endpoint_token", ep.bearer_token.clone().unwrap_or_default());
        put("preamble_blocklist", ep.preamble_blocklist.join("|"));
        m
    }

    pub fn from_map(m: &BTreeMap<String, String>) -> Result<Self> {
        for k in m.keys() {
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
        }
        let mut full = RunConfig::default().to_map();
        full.extend(m.iter().map(|(k, v)| (k.clone(), v.clone())));
        let m = &full;

        let synth = SynthConfig {
            feature_dim: value(m, "feature_dim")?,
            frames_per_phoneme_mean: value(m, "frames_per_phoneme_mean")?,
            frames_per_phoneme_jitter: value(m, "frames_per_phoneme_jitter")?,
            noise_sigma: value(m, "noise_sigma")?,
            prototype_seed: value(m, "prototype_seed")?,
            transition_blend: value(m, "transition_blend")?,
        };
        let corpus = CorpusConfig {
            vocab_size: value(m, "vocab_size")?,
            num_train: value(m, "num_train")?,
            num_test: value(m, "num_test")?,
            min_words: value(m, "min_words")?,
            max_words: value(m, "max_words")?,
            branching: value(m, "branching")?,
            seed: value(m, "corpus_seed")?,
        };
        let optimizer = match m["optimizer"].as_str() {
            "adam" => OptimizerSpec::Adam {
                beta1: value(m, "adam_beta1")?,
                beta2: value(m, "adam_beta2")?,
                eps: value(m, "adam_eps")?,
            },
            "sgd" => OptimizerSpec::Sgd {
                momentum: value(m, "momentum")?,
                nesterov: value(m, "nesterov")?,
            },
            other => return Err(Error::Config(format!("unknown optimizer `{other}`"))),
        };
        let lr: f64 = value(m, "lr")?;
        let schedule = match m["schedule"].as_str() {
            "constant" => Schedule::Constant { lr },
            "linear" => Schedule::Linear {
                start: lr,
                end: value(m, "lr_end")?,
                total_iters: value(m, "lr_total_iters")?,
            },
            "step" => Schedule::Step {
                start: lr,
                factor: value(m, "lr_factor")?,
                step_iters: value(m, "lr_step_iters")?,
            },
            "single_step" => Schedule::SingleStep {
                start: lr,
                factor: value(m, "lr_factor")?,
                at: value(m, "lr_step_at")?,
            },
            other => return Err(Error::Config(format!("unknown schedule `{other}`"))),
        };
        let train = TrainConfig {
            objective: value::<Objective>(m, "objective")?,
            diphone_loss: match m["diphone_loss"].as_str() {
                "paths" => DiphoneLoss::Paths,
                "marginalized" => DiphoneLoss::Marginalized,
                other => return Err(Error::Config(format!("unknown diphone_loss `{other}`"))),
            },
            optimizer,
            schedule,
            fastemit_lambda: value(m, "fastemit_lambda")?,
            speckle_prob: value(m, "speckle_prob")?,
            dropout_prob: value(m, "dropout_prob")?,
            window: value(m, "window")?,
            stride: value(m, "stride")?,
            hidden: value(m, "hidden")?,
            layers: value(m, "layers")?,
            layer_norm_head: value(m, "layer_norm_head")?,
            batch_size: value(m, "batch_size")?,
            iterations: value(m, "iterations")?,
            clip_norm: value(m, "clip_norm")?,
            val_fraction: value(m, "val_fraction")?,
            eval_every: value(m, "eval_every")?,
            seed: value(m, "seed")?,
        };
        let lm = NgramTrainConfig {
            order: value(m, "lm_order")?,
            discount: value(m, "lm_discount")?,
        };
        let beam = BeamConfig {
            alpha: value(m, "alpha")?,
            beta: value(m, "beta")?,
            beam_width: value(m, "beam_width")?,
            nbest_k: value(m, "nbest_k")?,
        };
        let url = m["endpoint"].trim().to_string();
        let endpoint = if url.is_empty() {
            None
        } else {
            let token = m["endpoint_token"].trim().to_string();
            let blocklist: Vec<String> = m["preamble_blocklist"]
                .split('|')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
            let mut ep = ScorerEndpoint::new(url);
            ep.timeout_ms = value(m, "endpoint_timeout_ms")?;
            ep.max_retries = value(m, "endpoint_retries")?;
            ep.max_concurrent = value(m, "endpoint_max_concurrent")?;
            ep.bearer_token = (!token.is_empty()).then_some(token);
            ep.preamble_blocklist = blocklist;
            Some(ep)
        };
        let cfg = RunConfig {
            synth,
            corpus,
            train,
            lm,
            beam,
            ensemble: EnsembleConfig {
                top_m: value(m, "top_m")?,
                endpoint,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        self.synth.validate().map_err(cfg_err)?;
        self.corpus.validate().map_err(cfg_err)?;
        self.train.validate().map_err(cfg_err)?;
        if self.lm.order == 0 || !(self.lm.discount > 0.0 && self.lm.discount < 1.0) {
            return Err(Error::Config("lm_order must be >= 1 and lm_discount in (0, 1)".into()));
        }
        if self.beam.beam_width == 0 || self.beam.nbest_k == 0 || !self.beam.alpha.is_finite() || !self.beam.beta.is_finite() {
            return Err(Error::Config("beam_width and nbest_k must be >= 1, alpha and beta finite".into()));
        }
        if self.ensemble.top_m == 0 {
            return Err(Error::Config("top_m must be >= 1".into()));
        }
        if let Some(ep) = &self.ensemble.endpoint {
            ep.validate()?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key `{k}`", i + 1)));
            }
            if m.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
        }
        Self::from_map(&m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Every key in canonical order.
    pub fn to_text(&self) -> String {
        let m = self.to_map();
        KEYS.iter().map(|k| format!("{k} = {}\n", m[*k])).collect()
    }
}
