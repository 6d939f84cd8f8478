//! Phoneme and diphone alphabets.
//!
//! Phoneme indices are `0..40`: `SIL` first, then the 39 ARPABET phonemes in
//! lexicographic order. The CTC blank follows the last real class in both
//! alphabets (41 phoneme classes, 1601 diphone classes).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::logsumexp;

/// The phoneme symbols in index order.
pub const PHONEMES: [&str; 40] = [
    "SIL", "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G",
    "HH", "IH", "IY", "JH", "K", "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH",
    "UH", "UW", "V", "W", "Y", "Z", "ZH",
];

pub const NUM_PHONEMES: usize = 40;
pub const SIL: usize = 0;
/// Blank index in the phoneme alphabet.
pub const PHONEME_BLANK: usize = NUM_PHONEMES;
/// Width of a phoneme logit vector.
pub const PHONEME_CLASSES: usize = NUM_PHONEMES + 1;

pub const NUM_DIPHONES: usize = NUM_PHONEMES * NUM_PHONEMES;
/// Blank index in the diphone alphabet.
pub const DIPHONE_BLANK: usize = NUM_DIPHONES;
/// Width of a diphone logit vector.
pub const DIPHONE_CLASSES: usize = NUM_DIPHONES + 1;

/// Which alphabet a decoder is trained against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Phoneme,
    Diphone,
}

impl Objective {
    pub fn num_classes(self) -> usize {
        match self {
            Objective::Phoneme => PHONEME_CLASSES,
            Objective::Diphone => DIPHONE_CLASSES,
        }
    }

    pub fn blank(self) -> usize {
        match self {
            Objective::Phoneme => PHONEME_BLANK,
            Objective::Diphone => DIPHONE_BLANK,
        }
    }

    /// Converts a reference phoneme sequence into this objective's label sequence.
    pub fn labels(self, phonemes: &[usize]) -> Result<Vec<usize>> {
        match self {
            Objective::Phoneme => {
                check_phoneme(phonemes.iter().copied())?;
                Ok(phonemes.to_vec())
            }
            Objective::Diphone => to_diphones(phonemes),
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phoneme" => Ok(Objective::Phoneme),
            "diphone" => Ok(Objective::Diphone),
            _ => Err(Error::Config(format!("unknown objective `{s}`"))),
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::Phoneme => "phoneme",
            Objective::Diphone => "diphone",
        })
    }
}

pub fn phoneme_id(symbol: &str) -> Result<usize> {
    PHONEMES
        .iter()
        .position(|&p| p == symbol)
        .ok_or_else(|| Error::UnknownPhoneme(symbol.to_string()))
}

pub fn symbol_of(index: usize) -> Result<&'static str> {
    PHONEMES.get(index).copied().ok_or(Error::InvalidIndex {
        index,
        limit: NUM_PHONEMES,
    })
}

fn check_phoneme(indices: impl IntoIterator<Item = usize>) -> Result<()> {
    for index in indices {
        if index >= NUM_PHONEMES {
            return Err(Error::InvalidIndex {
                index,
                limit: NUM_PHONEMES,
            });
        }
    }
    Ok(())
}

pub fn diphone_id(prev: usize, cur: usize) -> Result<usize> {
    check_phoneme([prev, cur])?;
    Ok(prev * NUM_PHONEMES + cur)
}

/// Inverse of [`diphone_id`]: `(prev, cur)`.
pub fn split_diphone(id: usize) -> Result<(usize, usize)> {
    if id >= NUM_DIPHONES {
        return Err(Error::InvalidIndex {
            index: id,
            limit: NUM_DIPHONES,
        });
    }
    Ok((id / NUM_PHONEMES, id % NUM_PHONEMES))
}

/// Maps a phoneme sequence to diphones; the first phoneme is preceded by `SIL`.
pub fn to_diphones(phonemes: &[usize]) -> Result<Vec<usize>> {
    let mut prev = SIL;
    phonemes
        .iter()
        .map(|&cur| {
            let id = diphone_id(prev, cur)?;
            prev = cur;
            Ok(id)
        })
        .collect()
}

/// Tolerance on `logsumexp(frame)` accepted as normalized.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// Collapses a normalized diphone log-probability frame (1601 classes) to a
/// phoneme frame (41 classes) by summing over the preceding phoneme.
pub fn marginalize_diphones(frame: &[f64]) -> Result<Vec<f64>> {
    if frame.len() != DIPHONE_CLASSES {
        return Err(Error::Shape(format!(
            "diphone frame has {} classes, expected {DIPHONE_CLASSES}",
            frame.len()
        )));
    }
    let total = logsumexp(frame);
    if !(total.abs() <= NORMALIZATION_TOL) {
        return Err(Error::NotADistribution(total));
    }
    let mut out = vec![0.0; PHONEME_CLASSES];
    marginalize_into(frame, &mut out);
    Ok(out)
}

/// Unchecked marginalization kernel; `out` must have 41 slots.
pub(crate) fn marginalize_into(frame: &[f64], out: &mut [f64]) {
    let mut column = [0.0; NUM_PHONEMES];
    for (cur, slot) in out.iter_mut().take(NUM_PHONEMES).enumerate() {
        for (prev, c) in column.iter_mut().enumerate() {
            *c = frame[prev * NUM_PHONEMES + cur];
        }
        *slot = logsumexp(&column);
    }
    out[PHONEME_BLANK] = frame[DIPHONE_BLANK];
}

/// Writes the inventory as one symbol per line, in index order.
pub fn write_inventory(path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::new();
    for p in PHONEMES {
        let _ = writeln!(text, "{p}");
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads an inventory file and checks it matches the built-in ordering.
pub fn read_inventory(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let symbols: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if symbols.len() != NUM_PHONEMES {
        return Err(Error::parse(
            path,
            symbols.len(),
            format!("expected {NUM_PHONEMES} symbols"),
        ));
    }
    for (i, s) in symbols.iter().enumerate() {
        if s != PHONEMES[i] {
            return Err(Error::parse(path, i + 1, format!("expected `{}`, found `{s}`", PHONEMES[i])));
        }
    }
    Ok(symbols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
        let mut f: Vec<f64> = (0..DIPHONE_CLASSES)
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        crate::math::log_softmax_in_place(&mut f);
        f
    }

    #[test]
    fn inventory_ordering() {
        assert_eq!(phoneme_id("SIL").unwrap(), 0);
        assert_eq!(phoneme_id("AA").unwrap(), 1);
        assert!(matches!(phoneme_id("QQ"), Err(Error::UnknownPhoneme(s)) if s == "QQ"));

        let mut arpabet: Vec<&str> = PHONEMES[1..].to_vec();
        arpabet.sort();
        assert_eq!(&arpabet[..], &PHONEMES[1..]);
        let mut uniq = PHONEMES.to_vec();
        uniq.dedup();
        assert_eq!(uniq.len(), 40);
        for (i, p) in PHONEMES.iter().enumerate() {
            assert_eq!(symbol_of(i).unwrap(), *p);
        }
    }

    #[test]
    fn diphone_index_roundtrip() {
        assert_eq!(diphone_id(0, 0).unwrap(), 0);
        assert_eq!(diphone_id(1, 2).unwrap(), 42);
        assert!(matches!(diphone_id(40, 0), Err(Error::InvalidIndex { .. })));
        let mut seen = vec![false; NUM_DIPHONES];
        for p in 0..NUM_PHONEMES {
            for c in 0..NUM_PHONEMES {
                let id = diphone_id(p, c).unwrap();
                assert!(!seen[id]);
                seen[id] = true;
                assert_eq!(split_diphone(id).unwrap(), (p, c));
            }
        }
    }

    #[test]
    fn to_diphones_examples() {
        let aa = phoneme_id("AA").unwrap();
        let d = phoneme_id("D").unwrap();
        assert!(to_diphones(&[]).unwrap().is_empty());
        assert_eq!(to_diphones(&[aa]).unwrap(), vec![diphone_id(SIL, aa).unwrap()]);
        assert_eq!(
            to_diphones(&[aa, d]).unwrap(),
            vec![diphone_id(SIL, aa).unwrap(), diphone_id(aa, d).unwrap()]
        );
    }

    #[test]
    fn marginalize_uniform() {
        let frame = vec![-(DIPHONE_CLASSES as f64).ln(); DIPHONE_CLASSES];
        let out = marginalize_diphones(&frame).unwrap();
        for &v in &out[..NUM_PHONEMES] {
            assert!((v - (40.0f64 / 1601.0).ln()).abs() < 1e-12);
        }
        assert!((out[PHONEME_BLANK] - (1.0f64 / 1601.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn marginalize_one_hot() {
        let aa = phoneme_id("AA").unwrap();
        let d = phoneme_id("D").unwrap();
        let mut frame = vec![f64::NEG_INFINITY; DIPHONE_CLASSES];
        frame[diphone_id(aa, d).unwrap()] = 0.0;
        let out = marginalize_diphones(&frame).unwrap();
        for (i, &v) in out.iter().enumerate() {
            if i == d {
                assert_eq!(v, 0.0);
            } else {
                assert_eq!(v, f64::NEG_INFINITY);
            }
        }
    }

    #[test]
    fn marginalize_rejects_unnormalized() {
        let frame = vec![0.0; DIPHONE_CLASSES];
        assert!(matches!(marginalize_diphones(&frame), Err(Error::NotADistribution(_))));
    }

    #[test]
    fn marginalize_survives_deep_log_values() {
        // Everything near -700 except one dominant entry.
        let mut frame = vec![-700.0; DIPHONE_CLASSES];
        frame[5] = 0.0;
        crate::math::log_softmax_in_place(&mut frame);
        let out = marginalize_diphones(&frame).unwrap();
        assert!(out.iter().all(|v| v.is_finite()));
        assert!(out[6] < -690.0);
    }

    #[test]
    fn marginalize_matches_linear_space_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let frame = random_frame(&mut rng, 5.0);
            let out = marginalize_diphones(&frame).unwrap();
            for cur in 0..NUM_PHONEMES {
                let mut p = 0.0;
                for prev in 0..NUM_PHONEMES {
                    p += frame[prev * NUM_PHONEMES + cur].exp();
                }
                assert!((out[cur].exp() - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inventory_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phonemes.txt");
        write_inventory(&path).unwrap();
        let syms = read_inventory(&path).unwrap();
        assert_eq!(syms[0], "SIL");
        assert_eq!(syms.len(), 40);
    }

    proptest! {
        #[test]
        fn marginal_is_normalized_and_prev_permutation_invariant(seed in any::<u64>(), shift in 0usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frame = random_frame(&mut rng, 8.0);
            let out = marginalize_diphones(&frame).unwrap();
            prop_assert!(logsumexp(&out).abs() < 1e-9);

            // Rotate the prev axis.
            let mut permuted = frame.clone();
            for prev in 0..NUM_PHONEMES {
                let src = (prev + shift) % NUM_PHONEMES;
                for cur in 0..NUM_PHONEMES {
                    permuted[prev * NUM_PHONEMES + cur] = frame[src * NUM_PHONEMES + cur];
                }
            }
            let out2 = marginalize_diphones(&permuted).unwrap();
            for (a, b) in out.iter().zip(&out2) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn diphones_recover_phonemes(seq in proptest::collection::vec(0usize..40, 0..30)) {
            let di = to_diphones(&seq).unwrap();
            prop_assert_eq!(di.len(), seq.len());
            let cur: Vec<usize> = di.iter().map(|&d| split_diphone(d).unwrap().1).collect();
            prop_assert_eq!(cur, seq);
        }
    }
}
