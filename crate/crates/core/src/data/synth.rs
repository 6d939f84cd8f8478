//! Synthetic "neural activity" generator.
//!
//! Every phoneme owns a fixed random prototype vector. An utterance is a
//! sequence of phoneme segments of jittered length; the start of each segment
//! ramps linearly from the previous phoneme's prototype, so the features carry
//! transition (diphone) information as well as phoneme identity.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::alphabet::{NUM_PHONEMES, SIL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub feature_dim: usize,
    pub frames_per_phoneme_mean: usize,
    pub frames_per_phoneme_jitter: usize,
    pub noise_sigma: f64,
    pub prototype_seed: u64,
    pub transition_blend: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            feature_dim: 64,
            frames_per_phoneme_mean: 6,
            frames_per_phoneme_jitter: 2,
            noise_sigma: 1.0,
            prototype_seed: 1234,
            transition_blend: 0.3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if self.frames_per_phoneme_mean < 2 {
            return Err(Error::Config("frames_per_phoneme_mean must be >= 2".into()));
        }
        if self.frames_per_phoneme_jitter >= self.frames_per_phoneme_mean {
            return Err(Error::Config("frames_per_phoneme_jitter must be < mean".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be finite and >= 0".into()));
        }
        if !(0.0..=0.5).contains(&self.transition_blend) {
            return Err(Error::Config("transition_blend must be in [0, 0.5]".into()));
        }
        Ok(())
    }
}

/// Generated features plus the frame-level ground truth used by tests.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub features: Array2<f64>,
    /// Phoneme owning each frame.
    pub frame_phonemes: Vec<usize>,
    /// Whether the frame lies in a transition ramp.
    pub in_blend: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct Synthesizer {
    cfg: SynthConfig,
    prototypes: Array2<f64>,
}

impl Synthesizer {
    pub fn new(cfg: SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.prototype_seed);
        let prototypes = Array2::from_shape_simple_fn((NUM_PHONEMES, cfg.feature_dim), || {
            StandardNormal.sample(&mut rng)
        });
        Ok(Synthesizer { cfg, prototypes })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    /// `NUM_PHONEMES x D` prototype matrix.
    pub fn prototypes(&self) -> &Array2<f64> {
        &self.prototypes
    }

    pub fn prototype(&self, phoneme: usize) -> ArrayView1<'_, f64> {
        self.prototypes.row(phoneme)
    }

    pub fn generate(&self, phonemes: &[usize], seed: u64) -> Result<SynthOutput> {
        if phonemes.is_empty() {
            return Err(Error::InvalidArgument("cannot synthesize an empty phoneme sequence".into()));
        }
        for &p in phonemes {
            crate::alphabet::symbol_of(p)?;
        }
        let cfg = &self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo = cfg.frames_per_phoneme_mean - cfg.frames_per_phoneme_jitter;
        let hi = cfg.frames_per_phoneme_mean + cfg.frames_per_phoneme_jitter;
        let durations: Vec<usize> = phonemes.iter().map(|_| rng.random_range(lo..=hi)).collect();
        let total: usize = durations.iter().sum();

        let dim = cfg.feature_dim;
        let mut features = Array2::<f64>::zeros((total, dim));
        let mut frame_phonemes = Vec::with_capacity(total);
        let mut in_blend = Vec::with_capacity(total);
        let mut row = 0;
        let mut prev = SIL;
        for (&cur, &len) in phonemes.iter().zip(&durations) {
            let ramp = (cfg.transition_blend * len as f64).floor() as usize;
            for j in 0..len {
                let target = self.prototypes.row(cur);
                let mut out = features.row_mut(row);
                if j < ramp {
                    let alpha = (j + 1) as f64 / (ramp + 1) as f64;
                    let source = self.prototypes.row(prev);
                    for k in 0..dim {
                        out[k] = (1.0 - alpha) * source[k] + alpha * target[k];
                    }
                } else {
                    out.assign(&target);
                }
                frame_phonemes.push(cur);
                in_blend.push(j < ramp);
                row += 1;
            }
            prev = cur;
        }
        if cfg.noise_sigma > 0.0 {
            let noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
            features.mapv_inplace(|v| v + noise.sample(&mut rng));
        }
        Ok(SynthOutput {
            features,
            frame_phonemes,
            in_blend,
        })
    }
}

/// Convenience wrapper: generates only the features.
pub fn synth_utterance(phonemes: &[usize], cfg: &SynthConfig, rng_seed: u64) -> Result<Array2<f64>> {
    Ok(Synthesizer::new(cfg.clone())?.generate(phonemes, rng_seed)?.features)
}
