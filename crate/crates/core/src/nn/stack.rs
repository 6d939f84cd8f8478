use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Number of stacked rows produced for `frames` input frames.
pub fn stacked_len(frames: usize, window: usize, stride: usize) -> usize {
    if frames < window {
        0
    } else {
        (frames - window) / stride + 1
    }
}

/// Concatenates windows of `window` consecutive frames taken every `stride`
/// frames. Row `t` holds frames `[t * stride, t * stride + window)`.
pub fn stack_inputs(features: ArrayView2<'_, f64>, window: usize, stride: usize) -> Result<Array2<f64>> {
    if window == 0 || stride == 0 {
        return Err(Error::InvalidArgument("window and stride must be >= 1".into()));
    }
    let (frames, dim) = features.dim();
    if frames < window {
        return Err(Error::TooShort { len: frames, window });
    }
    let rows = stacked_len(frames, window, stride);
    let mut out = Array2::zeros((rows, dim * window));
    for t in 0..rows {
        let start = t * stride;
        for w in 0..window {
            out.slice_mut(s![t, w * dim..(w + 1) * dim])
                .assign(&features.row(start + w));
        }
    }
    Ok(out)
}
