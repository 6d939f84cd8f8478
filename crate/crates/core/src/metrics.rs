//! Edit-distance alignment and pooled error rates (WER / PER).

use std::fmt::Write as _;

use crate::data::normalize_words;
use crate::error::{Error, Result};

/// Levenshtein alignment between a reference and a hypothesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditAlignment<T> {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub hits: usize,
    /// `(reference, hypothesis)` pairs; `None` marks an inserted/deleted slot.
    pub pairs: Vec<(Option<T>, Option<T>)>,
}

impl<T> EditAlignment<T> {
    pub fn distance(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    pub fn ref_len(&self) -> usize {
        self.substitutions + self.deletions + self.hits
    }
}

fn cost_table<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Vec<Vec<usize>> {
    let (n, m) = (reference.len(), hypothesis.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            d[i][j] = sub.min(d[i][j - 1] + 1).min(d[i - 1][j] + 1);
        }
    }
    d
}

pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    cost_table(a, b)[a.len()][b.len()]
}

/// Unit-cost alignment. On equal cost the backtrace prefers a diagonal step
/// (hit or substitution), then an insertion, then a deletion.
pub fn align<T: PartialEq + Clone>(reference: &[T], hypothesis: &[T]) -> EditAlignment<T> {
    let d = cost_table(reference, hypothesis);
    let (mut i, mut j) = (reference.len(), hypothesis.len());
    let mut out = EditAlignment {
        substitutions: 0,
        insertions: 0,
        deletions: 0,
        hits: 0,
        pairs: Vec::with_capacity(i.max(j)),
    };
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if d[i][j] == d[i - 1][j - 1] + usize::from(!same) {
                if same {
                    out.hits += 1;
                } else {
                    out.substitutions += 1;
                }
                out.pairs
                    .push((Some(reference[i - 1].clone()), Some(hypothesis[j - 1].clone())));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && d[i][j] == d[i][j - 1] + 1 {
            out.insertions += 1;
            out.pairs.push((None, Some(hypothesis[j - 1].clone())));
            j -= 1;
        } else {
            out.deletions += 1;
            out.pairs.push((Some(reference[i - 1].clone()), None));
            i -= 1;
        }
    }
    out.pairs.reverse();
    out
}

/// Pooled error rate: total edits over total reference tokens.
pub fn corpus_error_rate<T: PartialEq, R: AsRef<[T]>, H: AsRef<[T]>>(pairs: &[(R, H)]) -> Result<f64> {
    let mut edits = 0usize;
    let mut ref_total = 0usize;
    for (r, h) in pairs {
        edits += edit_distance(r.as_ref(), h.as_ref());
        ref_total += r.as_ref().len();
    }
    if ref_total == 0 {
        return Err(Error::DegenerateCorpus);
    }
    Ok(edits as f64 / ref_total as f64)
}

/// Corpus WER over raw sentence strings, after case-folding and punctuation
/// stripping.
pub fn word_error_rate<S: AsRef<str>>(pairs: &[(S, S)]) -> Result<f64> {
    let tokenized: Vec<(Vec<String>, Vec<String>)> = pairs
        .iter()
        .map(|(r, h)| (normalize_words(r.as_ref()), normalize_words(h.as_ref())))
        .collect();
    corpus_error_rate(&tokenized)
}

/// Per-utterance error counts for the evaluation report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceErrors {
    pub id: String,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub ref_len: usize,
}

impl UtteranceErrors {
    pub fn from_texts(id: &str, reference: &str, hypothesis: &str) -> Self {
        let a = align(&normalize_words(reference), &normalize_words(hypothesis));
        UtteranceErrors {
            id: id.to_string(),
            substitutions: a.substitutions,
            insertions: a.insertions,
            deletions: a.deletions,
            ref_len: a.ref_len(),
        }
    }

    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

/// CSV report `id,S,I,D,ref_len` with a final `TOTAL` row. Returns the text
/// and the pooled rate.
pub fn error_report(rows: &[UtteranceErrors]) -> Result<(String, f64)> {
    let mut csv = String::from("id,S,I,D,ref_len\n");
    let (mut s, mut i, mut d, mut n) = (0, 0, 0, 0);
    for r in rows {
        let _ = writeln!(csv, "{},{},{},{},{}", r.id, r.substitutions, r.insertions, r.deletions, r.ref_len);
        s += r.substitutions;
        i += r.insertions;
        d += r.deletions;
        n += r.ref_len;
    }
    if n == 0 {
        return Err(Error::DegenerateCorpus);
    }
    let _ = writeln!(csv, "TOTAL,{s},{i},{d},{n}");
    Ok((csv, (s + i + d) as f64 / n as f64))
}
