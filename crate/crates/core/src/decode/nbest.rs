use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alphabet::{phoneme_id, symbol_of};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub text: String,
    pub words: Vec<String>,
    pub phonemes: Vec<usize>,
    /// Natural-log CTC probability of the label sequence.
    pub acoustic: f64,
    /// Natural-log LM probability, including the end-of-sentence token.
    pub lm: f64,
    pub combined: f64,
    pub decoder_id: String,
}

impl Hypothesis {
    pub fn word_count(&self) -> usize {
        self.words.len()
    }
}

/// Descending combined score, then ascending text.
pub fn rank_order(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.combined
        .partial_cmp(&a.combined)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.text.cmp(&b.text))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NBestList {
    pub utt_id: String,
    pub hypotheses: Vec<Hypothesis>,
}

impl NBestList {
    pub fn sort(&mut self) {
        self.hypotheses.sort_by(rank_order);
    }

    pub fn top(&self) -> Option<&Hypothesis> {
        self.hypotheses.first()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NBestRecord {
    utt_id: String,
    rank: usize,
    text: String,
    phonemes: Vec<String>,
    acoustic: f64,
    lm: f64,
    combined: f64,
    decoder_id: String,
}

pub fn nbest_to_jsonl(lists: &[NBestList]) -> Result<String> {
    let mut out = String::new();
    for list in lists {
        for (rank, h) in list.hypotheses.iter().enumerate() {
            let rec = NBestRecord {
                utt_id: list.utt_id.clone(),
                rank,
                text: h.text.clone(),
                phonemes: h
                    .phonemes
                    .iter()
                    .map(|&p| symbol_of(p).map(str::to_string))
                    .collect::<Result<_>>()?,
                acoustic: h.acoustic,
                lm: h.lm,
                combined: h.combined,
                decoder_id: h.decoder_id.clone(),
            };
            out.push_str(&serde_json::to_string(&rec)?);
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn write_nbest(path: impl AsRef<Path>, lists: &[NBestList]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(nbest_to_jsonl(lists)?.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Reads N-best JSONL. Consecutive records with the same `utt_id` form one list.
/// Non-finite scores are written by serde as `null` and read back as -inf.
pub fn read_nbest(path: impl AsRef<Path>) -> Result<Vec<NBestList>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut lists: Vec<NBestList> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, &e.to_string()))?;
        let score = |k: &str| -> Result<f64> {
            match v.get(k) {
                Some(serde_json::Value::Null) => Ok(f64::NEG_INFINITY),
                Some(x) => x.as_f64().ok_or_else(|| Error::parse(path, i + 1, &format!("`{k}` is not a number"))),
                None => Err(Error::parse(path, i + 1, &format!("missing `{k}`"))),
            }
        };
        let (acoustic, lm, combined) = (score("acoustic")?, score("lm")?, score("combined")?);
        let mut obj = v.clone();
        for k in ["acoustic", "lm", "combined"] {
            obj[k] = serde_json::json!(0.0);
        }
        let rec: NBestRecord = serde_json::from_value(obj).map_err(|e| Error::parse(path, i + 1, &e.to_string()))?;
        let phonemes = rec
            .phonemes
            .iter()
            .map(|s| phoneme_id(s))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::parse(path, i + 1, &e.to_string()))?;
        let hyp = Hypothesis {
            words: rec.text.split_whitespace().map(str::to_string).collect(),
            text: rec.text,
            phonemes,
            acoustic,
            lm,
            combined,
            decoder_id: rec.decoder_id,
        };
        match lists.last_mut() {
            Some(l) if l.utt_id == rec.utt_id => l.hypotheses.push(hyp),
            _ => lists.push(NBestList {
                utt_id: rec.utt_id,
                hypotheses: vec![hyp],
            }),
        }
    }
    Ok(lists)
}
