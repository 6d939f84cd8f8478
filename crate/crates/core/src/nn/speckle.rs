use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};

/// Zeroes each entry independently with probability `prob` and rescales the
/// survivors by `1 / (1 - prob)`.
pub fn speckle_mask<R: Rng + ?Sized>(features: &Array2<f64>, prob: f64, rng: &mut R) -> Result<Array2<f64>> {
    if !(0.0..1.0).contains(&prob) {
        return Err(Error::InvalidArgument(format!("speckle probability {prob} outside [0, 1)")));
    }
    if prob == 0.0 {
        return Ok(features.clone());
    }
    let keep = 1.0 / (1.0 - prob);
    Ok(features.mapv(|v| if rng.random::<f64>() < prob { 0.0 } else { v * keep }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_prob_is_identity() {
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i + j) as f64 + 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(speckle_mask(&x, 0.0, &mut rng).unwrap(), x);
    }

    #[test]
    fn masked_fraction_near_point_three() {
        let x = Array2::from_elem((1000, 1000), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let y = speckle_mask(&x, 0.3, &mut rng).unwrap();
        let zeros = y.iter().filter(|&&v| v == 0.0).count() as f64 / 1e6;
        assert!((zeros - 0.3).abs() < 0.01, "{zeros}");
    }

    #[test]
    fn expectation_is_preserved() {
        let x = Array2::from_shape_fn((200, 50), |(i, j)| 1.0 + ((i * 50 + j) % 7) as f64);
        let mean_in = x.mean().unwrap();
        let mut acc = 0.0;
        let runs = 50;
        for seed in 0..runs {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            acc += speckle_mask(&x, 0.3, &mut rng).unwrap().mean().unwrap();
        }
        let mean_out = acc / runs as f64;
        assert!(((mean_out - mean_in) / mean_in).abs() < 0.01, "{mean_in} vs {mean_out}");
    }

    #[test]
    fn rejects_prob_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(speckle_mask(&Array2::zeros((1, 1)), 1.0, &mut rng).is_err());
    }
}
