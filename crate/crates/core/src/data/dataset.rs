use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::alphabet::{phoneme_id, symbol_of};
use crate::error::{Error, Result};

/// One training/evaluation example: features paired with its transcription.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub text: String,
    pub phonemes: Vec<usize>,
    /// `T x D`, row-major.
    pub features: Array2<f64>,
}

impl Utterance {
    pub fn num_frames(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    text: String,
    phonemes: Vec<String>,
    features: Vec<Vec<f64>>,
}

fn to_record(u: &Utterance) -> Result<Record> {
    Ok(Record {
        id: u.id.clone(),
        text: u.text.clone(),
        phonemes: u
            .phonemes
            .iter()
            .map(|&p| symbol_of(p).map(str::to_string))
            .collect::<Result<_>>()?,
        features: u.features.rows().into_iter().map(|r| r.to_vec()).collect(),
    })
}

pub fn write_dataset(path: impl AsRef<Path>, utterances: &[Utterance]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for u in utterances {
        if u.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite feature in utterance {}", u.id)));
        }
        serde_json::to_writer(&mut w, &to_record(u)?)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<Utterance>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out: Vec<Utterance> = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        let phonemes = rec
            .phonemes
            .iter()
            .map(|s| phoneme_id(s).map_err(|e| Error::parse(path, line_no, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let rows = rec.features.len();
        let cols = rec.features.first().map_or(0, Vec::len);
        if rec.features.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape(format!("line {line_no}: ragged feature rows")));
        }
        match dim {
            Some(d) if d != cols => {
                return Err(Error::Shape(format!(
                    "line {line_no}: feature dim {cols} differs from {d}"
                )))
            }
            _ => dim = Some(cols),
        }
        let flat: Vec<f64> = rec.features.into_iter().flatten().collect();
        let features = Array2::from_shape_vec((rows, cols), flat)
            .map_err(|e| Error::Shape(format!("line {line_no}: {e}")))?;
        out.push(Utterance {
            id: rec.id,
            text: rec.text,
            phonemes,
            features,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{SynthConfig, Synthesizer};

    fn sample(n: usize) -> Vec<Utterance> {
        let synth = Synthesizer::new(SynthConfig {
            feature_dim: 8,
            ..Default::default()
        })
        .unwrap();
        (0..n)
            .map(|i| {
                let phonemes = vec![1 + i % 39, 0, 5, 0];
                Utterance {
                    id: format!("utt{i:03}"),
                    text: format!("word{i}"),
                    features: synth.generate(&phonemes, i as u64).unwrap().features,
                    phonemes,
                }
            })
            .collect()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let data = sample(10);
        write_dataset(&path, &data).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, data);
        for (a, b) in back.iter().zip(&data) {
            for (x, y) in a.features.iter().zip(b.features.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn truncated_line_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_dataset(&path, &sample(3)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() - 20]).unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn mixed_dims_is_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let mut data = sample(2);
        data[1].features = Array2::zeros((5, 3));
        write_dataset(&path, &data).unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Shape(_))));
    }
}
