use ndarray::ArrayView2;

use crate::alphabet::PHONEME_BLANK;
use crate::math::argmax;

/// Collapses repeats and drops blanks from a frame-level label path.
pub fn collapse_path(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &k in path {
        if Some(k) != prev && k != blank {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

/// Best-path decoding of `T x 41` phoneme log-probabilities.
pub fn greedy_decode(log_probs: ArrayView2<'_, f64>) -> Vec<usize> {
    let path: Vec<usize> = log_probs
        .rows()
        .into_iter()
        .map(|r| argmax(&r.to_vec()))
        .collect();
    collapse_path(&path, PHONEME_BLANK)
}
