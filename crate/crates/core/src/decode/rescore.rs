use super::nbest::{Hypothesis, NBestList};
use crate::error::{Error, Result};
use crate::lm::ArpaLm;
use crate::math::LN_10;

/// Maps candidate texts to natural-log scores.
pub trait TextScorer {
    fn score(&self, text: &str) -> Result<f64>;

    fn score_batch(&self, texts: &[String]) -> Result<Vec<f64>> {
        texts.iter().map(|t| self.score(t)).collect()
    }
}

/// Sentence log-probability under an n-gram LM, in natural log.
pub struct NgramScorer<'a>(pub &'a ArpaLm);

impl TextScorer for NgramScorer<'_> {
    fn score(&self, text: &str) -> Result<f64> {
        Ok(LN_10 * self.0.sentence_logprob(text))
    }
}

/// Test-time oracle: a large bonus for the reference transcript.
pub struct OracleScorer {
    pub reference: String,
    pub bonus: f64,
}

impl OracleScorer {
    pub fn new(reference: &str) -> Self {
        OracleScorer {
            reference: reference.split_whitespace().collect::<Vec<_>>().join(" "),
            bonus: 1e6,
        }
    }
}

impl TextScorer for OracleScorer {
    fn score(&self, text: &str) -> Result<f64> {
        Ok(if text == self.reference { self.bonus } else { 0.0 })
    }
}

/// Adds `gamma * scorer(text)` to every combined score and re-sorts. Other
/// fields are untouched. On failure, the hypotheses rescored so far are
/// returned inside the error.
pub fn rescore(nbest: &NBestList, scorer: &dyn TextScorer, gamma: f64) -> Result<NBestList> {
    let mut out = nbest.clone();
    if gamma == 0.0 {
        return Ok(out);
    }
    let mut done: Vec<Hypothesis> = Vec::with_capacity(out.hypotheses.len());
    for h in &out.hypotheses {
        match scorer.score(&h.text) {
            Ok(s) if !s.is_nan() => {
                let mut h = h.clone();
                h.combined += gamma * s;
                done.push(h);
            }
            Ok(_) => {
                return Err(Error::RescoreFailed {
                    reason: format!("scorer returned NaN for `{}`", h.text),
                    partial: done,
                })
            }
            Err(e) => {
                return Err(Error::RescoreFailed {
                    reason: e.to_string(),
                    partial: done,
                })
            }
        }
    }
    out.hypotheses = done;
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::nbest::rank_order;
    use crate::lm::{fixture_path, parse_arpa};

    fn list(lm: &ArpaLm, alpha: f64) -> NBestList {
        let cands = [("a b", -3.0), ("a", -2.2), ("b c", -2.9), ("c", -4.0), ("a b c", -1.5)];
        let mut hyps: Vec<Hypothesis> = cands
            .iter()
            .map(|&(t, ac)| {
                let lmv = LN_10 * lm.sentence_logprob(t);
                let words: Vec<String> = t.split(' ').map(str::to_string).collect();
                Hypothesis {
                    text: t.into(),
                    combined: ac + alpha * lmv - 0.5 * words.len() as f64,
                    words,
                    phonemes: vec![],
                    acoustic: ac,
                    lm: lmv,
                    decoder_id: "d".into(),
                }
            })
            .collect();
        hyps.sort_by(rank_order);
        NBestList {
            utt_id: "u".into(),
            hypotheses: hyps,
        }
    }

    fn texts(l: &NBestList) -> Vec<&str> {
        l.hypotheses.iter().map(|h| h.text.as_str()).collect()
    }

    #[test]
    fn zero_gamma_keeps_order() {
        let lm = parse_arpa(fixture_path("tiny_bigram.arpa")).unwrap();
        let l = list(&lm, 1.0);
        assert_eq!(rescore(&l, &NgramScorer(&lm), 0.0).unwrap(), l);
    }

    #[test]
    fn same_lm_doubles_alpha() {
        let lm = parse_arpa(fixture_path("tiny_bigram.arpa")).unwrap();
        let r = rescore(&list(&lm, 1.0), &NgramScorer(&lm), 1.0).unwrap();
        let d = list(&lm, 2.0);
        assert_eq!(texts(&r), texts(&d));
        for (a, b) in r.hypotheses.iter().zip(&d.hypotheses) {
            assert!((a.combined - b.combined).abs() < 1e-9);
        }
    }

    #[test]
    fn oracle_ranks_reference_first() {
        let lm = parse_arpa(fixture_path("tiny_bigram.arpa")).unwrap();
        let r = rescore(&list(&lm, 1.0), &OracleScorer::new("c"), 1.0).unwrap();
        assert_eq!(r.top().unwrap().text, "c");
    }

    struct Failing;
    impl TextScorer for Failing {
        fn score(&self, text: &str) -> Result<f64> {
            if text.contains('c') {
                Err(Error::Unavailable("down".into()))
            } else {
                Ok(0.0)
            }
        }
    }

    #[test]
    fn failure_carries_partial_results() {
        let lm = parse_arpa(fixture_path("tiny_bigram.arpa")).unwrap();
        let l = list(&lm, 1.0);
        match rescore(&l, &Failing, 1.0) {
            Err(Error::RescoreFailed { partial, .. }) => {
                assert!(partial.len() < l.hypotheses.len());
                assert!(partial.iter().all(|h| !h.text.contains('c')));
            }
            other => panic!("{other:?}"),
        }
    }
}
