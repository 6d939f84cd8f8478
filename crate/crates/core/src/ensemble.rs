//! Combining hypotheses from several decoders into one transcription.
//!
//! Every strategy first puts the candidates into a canonical order, so the
//! result does not depend on the order decoders were listed in.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alphabet::symbol_of;
use crate::decode::{NBestList, TextScorer};
use crate::error::{Error, Result};
use crate::metrics::{align, edit_distance};

pub const MERGE_INSTRUCTION: &str = "You are given candidate transcriptions of one spoken sentence, each with the phoneme sequence its decoder heard. Choose the transcript that is most accurate, correcting words only when the phonemes support it. Reply with the transcript text only, with no preamble or explanation.";

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub text: String,
    pub decoder_id: String,
    pub score: f64,
    pub phonemes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub utt_id: String,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn new(utt_id: impl Into<String>, candidates: Vec<Candidate>) -> Result<Self> {
        let utt_id = utt_id.into();
        if candidates.is_empty() {
            return Err(Error::InvalidArgument(format!("no candidates for {utt_id}")));
        }
        if let Some(c) = candidates.iter().find(|c| !c.score.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite score {} for `{}` in {utt_id}",
                c.score, c.text
            )));
        }
        Ok(CandidateSet { utt_id, candidates })
    }

    /// Candidates sorted by text, then decoder id, then score.
    fn canonical(&self) -> Vec<&Candidate> {
        let mut c: Vec<&Candidate> = self.candidates.iter().collect();
        c.sort_by(|a, b| {
            a.text
                .cmp(&b.text)
                .then_with(|| a.decoder_id.cmp(&b.decoder_id))
                .then_with(|| a.score.total_cmp(&b.score))
        });
        c
    }

    fn unique_texts(&self) -> Vec<&str> {
        let mut t: Vec<&str> = self.candidates.iter().map(|c| c.text.as_str()).collect();
        t.sort_unstable();
        t.dedup();
        t
    }
}

/// Builds one candidate set per utterance from per-decoder N-best lists,
/// taking the top `top_m` hypotheses of each decoder. Utterances follow the
/// order of first appearance.
pub fn candidate_sets(per_decoder: &[Vec<NBestList>], top_m: usize) -> Result<Vec<CandidateSet>> {
    let mut order: Vec<String> = Vec::new();
    let mut pool: BTreeMap<String, Vec<Candidate>> = BTreeMap::new();
    for (d, lists) in per_decoder.iter().enumerate() {
        for list in lists {
            let entry = pool.entry(list.utt_id.clone()).or_insert_with(|| {
                order.push(list.utt_id.clone());
                Vec::new()
            });
            for h in list.hypotheses.iter().take(top_m.max(1)) {
                let decoder_id = if h.decoder_id.is_empty() { format!("decoder{d}") } else { h.decoder_id.clone() };
                entry.push(Candidate {
                    text: h.text.clone(),
                    decoder_id,
                    score: h.combined,
                    phonemes: h.phonemes.clone(),
                });
            }
        }
    }
    order
        .into_iter()
        .map(|id| {
            let c = pool.remove(&id).unwrap_or_default();
            CandidateSet::new(id, c)
        })
        .collect()
}

/// Argmax of `scorer` over the unique candidate texts; ties go to the
/// lexicographically smallest text.
pub fn scorer_select(set: &CandidateSet, scorer: &dyn TextScorer) -> Result<String> {
    let texts: Vec<String> = set.unique_texts().into_iter().map(str::to_string).collect();
    let scores = scorer.score_batch(&texts).map_err(|e| Error::SelectFailed(e.to_string()))?;
    if scores.len() != texts.len() {
        return Err(Error::SelectFailed(format!("{} scores for {} texts", scores.len(), texts.len())));
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.is_nan() {
            return Err(Error::SelectFailed(format!("NaN score for `{}`", texts[i])));
        }
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(texts[best].clone())
}

/// Negative word edit distance to a known reference.
pub struct EditDistanceOracle {
    reference: Vec<String>,
}

impl EditDistanceOracle {
    pub fn new(reference: &str) -> Self {
        EditDistanceOracle {
            reference: reference.split_whitespace().map(str::to_string).collect(),
        }
    }
}

impl TextScorer for EditDistanceOracle {
    fn score(&self, text: &str) -> Result<f64> {
        let hyp: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        Ok(-(edit_distance(&self.reference, &hyp) as f64))
    }
}

/// Softmax of the scores of `cands`.
fn softmax_weights(cands: &[&Candidate]) -> Vec<f64> {
    let max = cands.iter().map(|c| c.score).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = cands.iter().map(|c| (c.score - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Canonical candidates with their weights. Explicit weights are given in the
/// set's original order.
fn weighted<'a>(set: &'a CandidateSet, weights: Option<&[f64]>) -> Result<(Vec<&'a Candidate>, Vec<f64>)> {
    let canon = set.canonical();
    let w = match weights {
        None => softmax_weights(&canon),
        Some(w) => {
            if w.len() != set.candidates.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} weights for {} candidates",
                    w.len(),
                    set.candidates.len()
                )));
            }
            if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || w.iter().all(|v| *v == 0.0) {
                return Err(Error::InvalidArgument("weights must be >= 0 and not all zero".into()));
            }
            canon
                .iter()
                .map(|c| {
                    let i = set.candidates.iter().position(|x| std::ptr::eq(x, *c)).unwrap();
                    w[i]
                })
                .collect()
        }
    };
    Ok((canon, w))
}

fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Expected word edit distance of every unique text under the weighted
/// candidate distribution, with the total weight carried by that text.
pub fn mbr_risks(set: &CandidateSet, weights: Option<&[f64]>) -> Result<Vec<(String, f64, f64)>> {
    let (canon, w) = weighted(set, weights)?;
    Ok(set
        .unique_texts()
        .into_iter()
        .map(|t| {
            let tw = words(t);
            let mut risk = 0.0;
            let mut own = 0.0;
            for (c, wj) in canon.iter().zip(&w) {
                risk += wj * edit_distance(&tw, &words(&c.text)) as f64;
                if c.text == t {
                    own += wj;
                }
            }
            (t.to_string(), risk, own)
        })
        .collect())
}

/// Minimum Bayes risk selection. Default weights are the softmax of the
/// combined scores. Ties go to the text with more weight, then lexicographic.
pub fn mbr_select(set: &CandidateSet, weights: Option<&[f64]>) -> Result<String> {
    let risks = mbr_risks(set, weights)?;
    let best = risks
        .iter()
        .min_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then_with(|| b.2.total_cmp(&a.2))
                .then_with(|| a.0.cmp(&b.0))
        })
        .unwrap();
    Ok(best.0.clone())
}

/// Word-level voting against the highest-scored candidate. Default weights are
/// the softmax of the combined scores. A slot whose weighted majority is NULL
/// is dropped; a tied vote keeps the pivot's choice.
pub fn rover_merge(set: &CandidateSet, weights: Option<&[f64]>) -> Result<String> {
    let (canon, w) = weighted(set, weights)?;
    let pivot = (0..canon.len())
        .min_by(|&a, &b| {
            canon[b]
                .score
                .total_cmp(&canon[a].score)
                .then_with(|| a.cmp(&b))
        })
        .unwrap();
    let pw = words(&canon[pivot].text);
    let n = pw.len();

    // Slot (gap, k) is the k-th inserted word before pivot word `gap`
    // (gap == n is after the last one).
    let mut aligned: Vec<(Vec<Option<&str>>, BTreeMap<(usize, usize), &str>)> = Vec::with_capacity(canon.len());
    let mut ins_slots = std::collections::BTreeSet::new();
    for c in &canon {
        let mut at = vec![None; n];
        let mut ins = BTreeMap::new();
        let (mut pos, mut k) = (0, 0);
        for (r, h) in align(&pw, &words(&c.text)).pairs {
            if r.is_some() {
                at[pos] = h;
                pos += 1;
                k = 0;
            } else if let Some(h) = h {
                ins.insert((pos, k), h);
                ins_slots.insert((pos, k));
                k += 1;
            }
        }
        aligned.push((at, ins));
    }
    let mut word_votes: Vec<BTreeMap<Option<&str>, f64>> = vec![BTreeMap::new(); n];
    let mut ins_votes: BTreeMap<(usize, usize), BTreeMap<Option<&str>, f64>> = BTreeMap::new();
    for ((at, ins), wj) in aligned.iter().zip(&w) {
        for (votes, h) in word_votes.iter_mut().zip(at) {
            *votes.entry(*h).or_default() += wj;
        }
        for slot in &ins_slots {
            *ins_votes.entry(*slot).or_default().entry(ins.get(slot).copied()).or_default() += wj;
        }
    }

    let decide = |votes: &BTreeMap<Option<&'_ str>, f64>, pivot_choice: Option<&str>| -> Option<String> {
        let max = votes.values().copied().fold(f64::NEG_INFINITY, f64::max);
        let winner = if votes.get(&pivot_choice).copied() == Some(max) {
            pivot_choice
        } else {
            *votes.iter().find(|(_, v)| **v == max).unwrap().0
        };
        winner.map(str::to_string)
    };
    let mut out: Vec<String> = Vec::new();
    for gap in 0..=n {
        for (_, votes) in ins_votes.range((gap, 0)..(gap + 1, 0)) {
            out.extend(decide(votes, None));
        }
        if gap < n {
            out.extend(decide(&word_votes[gap], Some(pw[gap])));
        }
    }
    Ok(out.join(" "))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRequest {
    pub instruction: String,
    pub candidates: Vec<String>,
    /// Space-separated phoneme labels, one string per candidate.
    pub phonemes: Vec<String>,
}

/// Payload for a remote merge, in input order.
pub fn build_merge_request(set: &CandidateSet) -> Result<MergeRequest> {
    let phonemes = set
        .candidates
        .iter()
        .map(|c| {
            c.phonemes
                .iter()
                .map(|&p| symbol_of(p))
                .collect::<Result<Vec<_>>>()
                .map(|v| v.join(" "))
        })
        .collect::<Result<_>>()?;
    Ok(MergeRequest {
        instruction: MERGE_INSTRUCTION.to_string(),
        candidates: set.candidates.iter().map(|c| c.text.clone()).collect(),
        phonemes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Top1,
    Mbr,
    Rover,
    ScorerSelect,
    Oracle,
    Merge,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Top1,
        Strategy::Mbr,
        Strategy::Rover,
        Strategy::ScorerSelect,
        Strategy::Oracle,
        Strategy::Merge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Top1 => "top1",
            Strategy::Mbr => "mbr",
            Strategy::Rover => "rover",
            Strategy::ScorerSelect => "scorer-select",
            Strategy::Oracle => "oracle",
            Strategy::Merge => "merge",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

/// Highest-scored candidate; ties to the smallest text.
pub fn top1(set: &CandidateSet) -> String {
    let canon = set.canonical();
    canon
        .iter()
        .min_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.text.cmp(&b.text)))
        .unwrap()
        .text
        .clone()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalTranscript {
    pub utt_id: String,
    pub text: String,
    pub strategy: String,
}

pub fn write_transcripts(path: impl AsRef<Path>, rows: &[FinalTranscript]) -> Result<()> {
    let mut f = File::create(path)?;
    for r in rows {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

pub fn read_transcripts(path: impl AsRef<Path>) -> Result<Vec<FinalTranscript>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, &e.to_string()))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::Strategy;
    use proptest::strategy::Strategy as _;
    use crate::decode::NgramScorer;
    use crate::lm::{fixture_path, parse_arpa};
    use proptest::prelude::*;

    fn set(texts: &[&str]) -> CandidateSet {
        let c = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Candidate {
                text: t.to_string(),
                decoder_id: format!("d{i}"),
                score: -1.0,
                phonemes: vec![i % 40, 0],
            })
            .collect();
        CandidateSet::new("u", c).unwrap()
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(CandidateSet::new("u", vec![]).is_err());
        let mut s = set(&["a"]);
        s.candidates[0].score = f64::NAN;
        assert!(CandidateSet::new("u", s.candidates).is_err());
    }

    #[test]
    fn scorer_select_examples() {
        let lm = parse_arpa(fixture_path("tiny_bigram.arpa")).unwrap();
        assert_eq!(scorer_select(&set(&["a b", "a b"]), &NgramScorer(&lm)).unwrap(), "a b");
        // log10 P(a b) = log10(.6 * .5 * .125) vs log10 P(b c) = log10(.2 * .5 * .7)
        assert_eq!(scorer_select(&set(&["b c", "a b"]), &NgramScorer(&lm)).unwrap(), "b c");
        let s = set(&["a c", "a b c", "x"]);
        assert_eq!(scorer_select(&s, &EditDistanceOracle::new("a b c")).unwrap(), "a b c");
    }

    #[test]
    fn scorer_ties_go_lexicographic() {
        struct Flat;
        impl TextScorer for Flat {
            fn score(&self, _: &str) -> Result<f64> {
                Ok(0.0)
            }
        }
        assert_eq!(scorer_select(&set(&["z", "m", "q"]), &Flat).unwrap(), "m");
    }

    #[test]
    fn mbr_examples() {
        assert_eq!(mbr_select(&set(&["a b", "a b", "a c"]), None).unwrap(), "a b");
        let r = mbr_risks(&set(&["a b", "a b", "a c"]), None).unwrap();
        assert!((r[0].1 - 1.0 / 3.0).abs() < 1e-12);
        assert!((r[1].1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(mbr_select(&set(&["only"]), None).unwrap(), "only");
        assert!(mbr_select(&set(&["a", "b"]), Some(&[0.0, 0.0])).is_err());
        assert_eq!(mbr_select(&set(&["a", "b"]), Some(&[0.2, 0.8])).unwrap(), "b");
    }

    #[test]
    fn rover_examples() {
        assert_eq!(rover_merge(&set(&["a b", "a b"]), None).unwrap(), "a b");
        assert_eq!(rover_merge(&set(&["a b c", "a x c", "a b c"]), None).unwrap(), "a b c");
        assert_eq!(rover_merge(&set(&["a b", "a c", "a d"]), None).unwrap(), "a b");
        // Majority insertion and deletion.
        assert_eq!(rover_merge(&set(&["a c", "a b c", "a b c"]), None).unwrap(), "a b c");
        assert_eq!(rover_merge(&set(&["a b c", "a c", "a c"]), None).unwrap(), "a c");
    }

    #[test]
    fn rover_output_may_be_new() {
        let mut s = set(&["a x c", "a b y", "z b c"]);
        s.candidates[0].score = 0.0;
        assert_eq!(rover_merge(&s, Some(&[1.0, 1.0, 1.0])).unwrap(), "a b c");
    }

    #[test]
    fn merge_request_keeps_input_order_and_is_deterministic() {
        let s = set(&["b c", "a b"]);
        let r = build_merge_request(&s).unwrap();
        assert_eq!(r.candidates, ["b c", "a b"]);
        assert_eq!(r.phonemes, ["SIL SIL", "AA SIL"]);
        assert!(r.instruction.contains("most accurate"));
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            serde_json::to_string(&build_merge_request(&s).unwrap()).unwrap()
        );
    }

    #[test]
    fn transcripts_roundtrip() {
        let rows = vec![FinalTranscript {
            utt_id: "u".into(),
            text: "a b".into(),
            strategy: Strategy::Mbr.to_string(),
        }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        write_transcripts(&p, &rows).unwrap();
        assert_eq!(read_transcripts(&p).unwrap(), rows);
    }

    fn arb_set() -> impl proptest::strategy::Strategy<Value = Vec<(String, f64)>> {
        let word = prop::sample::select(vec!["a", "b", "c", "d"]);
        let text = prop::collection::vec(word, 1..4).prop_map(|w| w.join(" "));
        prop::collection::vec((text, -5.0f64..0.0), 1..6)
    }

    fn build(items: &[(String, f64)]) -> CandidateSet {
        CandidateSet::new(
            "u",
            items
                .iter()
                .enumerate()
                .map(|(i, (t, s))| Candidate {
                    text: t.clone(),
                    decoder_id: format!("d{i}"),
                    score: *s,
                    phonemes: vec![],
                })
                .collect(),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn strategies_are_permutation_stable(items in arb_set(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let a = build(&items);
            let mut shuffled = items.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            // Decoder ids travel with their candidates.
            let mut b = a.clone();
            let mut order: Vec<usize> = (0..items.len()).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            b.candidates = order.iter().map(|&i| a.candidates[i].clone()).collect();
            prop_assert_eq!(mbr_select(&a, None).unwrap(), mbr_select(&b, None).unwrap());
            prop_assert_eq!(rover_merge(&a, None).unwrap(), rover_merge(&b, None).unwrap());
            prop_assert_eq!(top1(&a), top1(&b));
            let o = EditDistanceOracle::new("a b c");
            prop_assert_eq!(scorer_select(&a, &o).unwrap(), scorer_select(&b, &o).unwrap());
        }

        #[test]
        fn mbr_choice_has_minimal_risk(items in arb_set()) {
            let s = build(&items);
            let chosen = mbr_select(&s, None).unwrap();
            let risks = mbr_risks(&s, None).unwrap();
            let mine = risks.iter().find(|r| r.0 == chosen).unwrap().1;
            // Brute-force risk table.
            let z: f64 = items.iter().map(|(_, sc)| sc.exp()).sum();
            for (t, _) in &items {
                let r: f64 = items.iter().map(|(u, sc)| sc.exp() / z * edit_distance(&words(t), &words(u)) as f64).sum();
                prop_assert!(mine <= r + 1e-9);
            }
        }
    }
}
