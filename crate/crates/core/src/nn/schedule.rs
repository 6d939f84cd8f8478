use serde::{Deserialize, Serialize};

/// Learning-rate schedules, indexed by optimizer iteration (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant { lr: f64 },
    /// Linear interpolation from `start` to `end` over `total_iters`, then flat.
    Linear { start: f64, end: f64, total_iters: u64 },
    /// `start * factor^floor(iter / step_iters)`.
    Step { start: f64, factor: f64, step_iters: u64 },
    /// `start` until `at`, then `start * factor`.
    SingleStep { start: f64, factor: f64, at: u64 },
}

impl Schedule {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = match *self {
            Schedule::Constant { lr } => lr >= 0.0,
            Schedule::Linear { start, end, total_iters } => start >= 0.0 && end >= 0.0 && end <= start && total_iters > 0,
            Schedule::Step { start, factor, step_iters } => start >= 0.0 && (0.0..=1.0).contains(&factor) && step_iters > 0,
            Schedule::SingleStep { start, factor, .. } => start >= 0.0 && (0.0..=1.0).contains(&factor),
        };
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Config(format!("invalid schedule {self:?}")))
        }
    }
}

/// `start * factor^k`. A factor like 0.1 is inexact in binary, so when
/// `1/factor` is a whole number the power is taken of that instead. For
/// powers of ten up to 10^22 that power is exact, leaving a single rounding.
fn decay(start: f64, factor: f64, k: i32) -> f64 {
    let inv = (1.0 / factor).round();
    if factor > 0.0 && (inv * factor - 1.0).abs() < 1e-12 && k <= 22 {
        start / inv.powi(k)
    } else {
        start * factor.powi(k)
    }
}

pub fn lr_at(schedule: &Schedule, iteration: u64) -> f64 {
    match *schedule {
        Schedule::Constant { lr } => lr,
        Schedule::Linear { start, end, total_iters } => {
            if iteration >= total_iters {
                end
            } else {
                // Weighted form keeps the result within a couple of ulps of the exact value.
                let (i, n) = (iteration as f64, total_iters as f64);
                (start * (n - i) + end * i) / n
            }
        }
        Schedule::Step { start, factor, step_iters } => {
            let k = (iteration / step_iters).min(i32::MAX as u64) as i32;
            decay(start, factor, k)
        }
        Schedule::SingleStep { start, factor, at } => {
            if iteration < at {
                start
            } else {
                decay(start, factor, 1)
            }
        }
    }
}
