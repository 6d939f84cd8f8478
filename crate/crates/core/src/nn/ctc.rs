//! CTC loss by the forward-backward recursion in log space.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::math::{log_add, logsumexp};

/// Loss, gradient and per-class occupancy of one CTC evaluation.
#[derive(Debug, Clone)]
pub struct CtcOutput {
    /// `-ln P(labels | log_probs)`.
    pub loss: f64,
    /// Posterior probability that frame `t` emits class `k` (T x C).
    pub occupancy: Array2<f64>,
    /// `d loss / d log_probs`, equal to `-occupancy`.
    pub grad: Array2<f64>,
    pub blank: usize,
}

/// Minimum number of frames that can carry `labels`: one per label plus a
/// separating blank between equal neighbours.
pub fn min_frames(labels: &[usize]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

/// CTC negative log-likelihood of `labels` under per-frame log-probabilities.
/// The gradient treats every entry of `log_probs` as a free variable.
pub fn ctc_loss_and_grad(log_probs: ArrayView2<'_, f64>, labels: &[usize], blank: usize) -> Result<CtcOutput> {
    let (frames, classes) = log_probs.dim();
    if blank >= classes {
        return Err(Error::InvalidIndex { index: blank, limit: classes });
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("CTC labels must be non-empty".into()));
    }
    for &l in labels {
        if l >= classes || l == blank {
            return Err(Error::InvalidIndex { index: l, limit: classes });
        }
    }
    let required = min_frames(labels);
    if frames < required {
        return Err(Error::InfeasibleAlignment { frames, required });
    }

    // Extended sequence: blank, l1, blank, l2, ..., blank.
    let states = 2 * labels.len() + 1;
    let ext = |s: usize| if s % 2 == 0 { blank } else { labels[s / 2] };
    // Skip transition s-2 -> s allowed for labels differing from the one two back.
    let can_skip = |s: usize| s >= 2 && s % 2 == 1 && ext(s) != ext(s - 2);

    let ninf = f64::NEG_INFINITY;
    let mut alpha = Array2::from_elem((frames, states), ninf);
    alpha[[0, 0]] = log_probs[[0, blank]];
    alpha[[0, 1]] = log_probs[[0, labels[0]]];
    for t in 1..frames {
        for s in 0..states {
            let mut a = alpha[[t - 1, s]];
            if s >= 1 {
                a = log_add(a, alpha[[t - 1, s - 1]]);
            }
            if can_skip(s) {
                a = log_add(a, alpha[[t - 1, s - 2]]);
            }
            alpha[[t, s]] = if a == ninf { ninf } else { a + log_probs[[t, ext(s)]] };
        }
    }

    let mut beta = Array2::from_elem((frames, states), ninf);
    beta[[frames - 1, states - 1]] = log_probs[[frames - 1, blank]];
    beta[[frames - 1, states - 2]] = log_probs[[frames - 1, labels[labels.len() - 1]]];
    for t in (0..frames - 1).rev() {
        for s in 0..states {
            let mut b = beta[[t + 1, s]];
            if s + 1 < states {
                b = log_add(b, beta[[t + 1, s + 1]]);
            }
            if s + 2 < states && can_skip(s + 2) {
                b = log_add(b, beta[[t + 1, s + 2]]);
            }
            beta[[t, s]] = if b == ninf { ninf } else { b + log_probs[[t, ext(s)]] };
        }
    }

    let log_p = log_add(alpha[[frames - 1, states - 1]], alpha[[frames - 1, states - 2]]);
    if !log_p.is_finite() {
        return Err(Error::Numerical("ctc likelihood".into()));
    }

    let mut occupancy = Array2::zeros((frames, classes));
    let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); classes];
    for t in 0..frames {
        for v in per_class.iter_mut() {
            v.clear();
        }
        for s in 0..states {
            let k = ext(s);
            let a = alpha[[t, s]];
            let b = beta[[t, s]];
            if a > ninf && b > ninf {
                per_class[k].push(a + b - log_probs[[t, k]]);
            }
        }
        for (k, v) in per_class.iter().enumerate() {
            if !v.is_empty() {
                occupancy[[t, k]] = (logsumexp(v) - log_p).exp();
            }
        }
    }
    let grad = occupancy.mapv(|g| -g);
    Ok(CtcOutput {
        loss: -log_p,
        occupancy,
        grad,
        blank,
    })
}

/// FastEmit-style gradient: label-emission occupancy is weighted by
/// `1 + lambda`, blank occupancy is left alone. `lambda = 0` returns the plain
/// CTC gradient.
pub fn fastemit_augment(ctc: &CtcOutput, lambda: f64) -> Result<Array2<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("fastemit lambda {lambda} < 0")));
    }
    if lambda == 0.0 {
        return Ok(ctc.grad.clone());
    }
    let mut g = ctc.grad.clone();
    for mut row in g.rows_mut() {
        for (k, v) in row.iter_mut().enumerate() {
            if k != ctc.blank {
                *v *= 1.0 + lambda;
            }
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Sums the probability of every frame-level path that collapses to `labels`.
    fn brute_force(lp: &Array2<f64>, labels: &[usize], blank: usize) -> f64 {
        let (t, c) = lp.dim();
        let mut total = 0.0;
        let mut path = vec![0usize; t];
        loop {
            let mut collapsed = Vec::new();
            let mut prev = None;
            for &k in &path {
                if Some(k) != prev && k != blank {
                    collapsed.push(k);
                }
                prev = Some(k);
            }
            if collapsed == labels {
                total += path.iter().enumerate().map(|(i, &k)| lp[[i, k]]).sum::<f64>().exp();
            }
            let mut i = 0;
            loop {
                if i == t {
                    return -total.ln();
                }
                path[i] += 1;
                if path[i] < c {
                    break;
                }
                path[i] = 0;
                i += 1;
            }
        }
    }

    fn random_log_probs(rng: &mut ChaCha8Rng, t: usize, c: usize) -> Array2<f64> {
        let mut a = Array2::from_shape_fn((t, c), |_| rng.random_range(-3.0..3.0));
        for mut row in a.rows_mut() {
            crate::math::log_softmax_in_place(row.as_slice_mut().unwrap());
        }
        a
    }

    #[test]
    fn uniform_two_frames_single_label() {
        let lp = Array2::from_elem((2, 2), 0.5f64.ln());
        let out = ctc_loss_and_grad(lp.view(), &[1], 0).unwrap();
        assert!((out.loss - -(0.75f64).ln()).abs() < 1e-12);
        assert!((out.loss - 0.287682).abs() < 1e-6);
    }

    #[test]
    fn one_hot_alignment_has_zero_loss() {
        // Path: blank A A blank B
        let path = [0, 1, 1, 0, 2];
        let mut lp = Array2::from_elem((5, 3), -1e4);
        for (t, &k) in path.iter().enumerate() {
            lp[[t, k]] = 0.0;
        }
        let out = ctc_loss_and_grad(lp.view(), &[1, 2], 0).unwrap();
        assert!(out.loss.abs() < 1e-9);
    }

    #[test]
    fn infeasible_alignment() {
        let lp = Array2::from_elem((2, 3), -(3f64).ln());
        assert!(matches!(
            ctc_loss_and_grad(lp.view(), &[1, 1], 0),
            Err(Error::InfeasibleAlignment { frames: 2, required: 3 })
        ));
        assert!(ctc_loss_and_grad(lp.view(), &[], 0).is_err());
        assert!(ctc_loss_and_grad(lp.view(), &[0], 0).is_err());
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let c = rng.random_range(2..=4);
            let t = rng.random_range(1..=5);
            let n = rng.random_range(1..=3);
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(1..c)).collect();
            if min_frames(&labels) > t {
                continue;
            }
            let lp = random_log_probs(&mut rng, t, c);
            let out = ctc_loss_and_grad(lp.view(), &labels, 0).unwrap();
            let expect = brute_force(&lp, &labels, 0);
            assert!((out.loss - expect).abs() < 1e-8, "{labels:?} {} vs {}", out.loss, expect);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let lp = random_log_probs(&mut rng, 6, 4);
        let labels = [1, 3, 3];
        let out = ctc_loss_and_grad(lp.view(), &labels, 0).unwrap();
        let h = 1e-6;
        for t in 0..6 {
            for k in 0..4 {
                let mut p = lp.clone();
                p[[t, k]] += h;
                let mut m = lp.clone();
                m[[t, k]] -= h;
                let fd = (ctc_loss_and_grad(p.view(), &labels, 0).unwrap().loss
                    - ctc_loss_and_grad(m.view(), &labels, 0).unwrap().loss)
                    / (2.0 * h);
                assert!((fd - out.grad[[t, k]]).abs() < 1e-7);
            }
        }
        // Occupancy rows sum to one.
        for row in out.occupancy.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fastemit_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lp = random_log_probs(&mut rng, 5, 4);
        let out = ctc_loss_and_grad(lp.view(), &[2, 1], 0).unwrap();
        assert_eq!(fastemit_augment(&out, 0.0).unwrap(), out.grad);
        assert!(fastemit_augment(&out, -0.1).is_err());
    }

    #[test]
    fn fastemit_weakens_push_toward_blank() {
        // Through log-softmax, the logit gradient is g - softmax * sum(g). The
        // descent direction on the blank logit must not grow.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let lp = random_log_probs(&mut rng, 6, 4);
            let out = ctc_loss_and_grad(lp.view(), &[1, 2], 0).unwrap();
            let aug = fastemit_augment(&out, 0.5).unwrap();
            for t in 0..6 {
                let push = |g: &Array2<f64>| {
                    let s: f64 = g.row(t).sum();
                    -(g[[t, 0]] - lp[[t, 0]].exp() * s)
                };
                assert!(push(&aug) <= push(&out.grad) + 1e-15);
            }
        }
    }
}
