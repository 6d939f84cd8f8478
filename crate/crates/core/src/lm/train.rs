//! Small n-gram estimator: absolute discounting with Katz-style back-off
//! weights chosen so every context normalizes exactly.

use std::collections::BTreeMap;

use super::arpa::{ArpaLm, NgramEntry, BOS, EOS, UNK};
use crate::error::{Error, Result};

/// log10 value written for `<s>` as a predicted word.
const BOS_LOGPROB: f64 = -99.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgramTrainConfig {
    pub order: usize,
    /// Absolute discount subtracted from every observed count, in (0, 1).
    pub discount: f64,
}

impl Default for NgramTrainConfig {
    fn default() -> Self {
        NgramTrainConfig {
            order: 3,
            discount: 0.5,
        }
    }
}

/// Estimates a model from whitespace-tokenized sentences.
pub fn train_ngram<S: AsRef<str>>(sentences: &[S], cfg: NgramTrainConfig) -> Result<ArpaLm> {
    if cfg.order == 0 {
        return Err(Error::Config("n-gram order must be >= 1".into()));
    }
    if !(cfg.discount > 0.0 && cfg.discount < 1.0) {
        return Err(Error::Config("discount must be in (0, 1)".into()));
    }
    // counts[k][ngram] for (k+1)-grams.
    let mut counts: Vec<BTreeMap<Vec<String>, f64>> = vec![BTreeMap::new(); cfg.order];
    for s in sentences {
        let mut toks = vec![BOS.to_string()];
        toks.extend(s.as_ref().split_whitespace().map(str::to_string));
        toks.push(EOS.to_string());
        for k in 0..cfg.order {
            for win in toks.windows(k + 1) {
                // A unigram `<s>` is never predicted.
                if k == 0 && win[0] == BOS {
                    continue;
                }
                *counts[k].entry(win.to_vec()).or_default() += 1.0;
            }
        }
    }
    if counts[0].is_empty() {
        return Err(Error::InvalidArgument("no training text".into()));
    }
    let d = cfg.discount;

    // Linear-space probabilities per order; back-off weights filled below.
    let mut probs: Vec<BTreeMap<Vec<String>, f64>> = vec![BTreeMap::new(); cfg.order];
    let mut backoffs: Vec<BTreeMap<Vec<String>, f64>> = vec![BTreeMap::new(); cfg.order];

    let total: f64 = counts[0].values().sum();
    let mut unk_mass = 0.0;
    for (w, &c) in &counts[0] {
        probs[0].insert(w.clone(), (c - d) / total);
        unk_mass += d / total;
    }
    // `<unk>` absorbs the discounted unigram mass.
    *probs[0].entry(vec![UNK.to_string()]).or_default() += unk_mass;

    for k in 1..cfg.order {
        let mut ctx_totals: BTreeMap<&[String], f64> = BTreeMap::new();
        for (g, &c) in &counts[k] {
            *ctx_totals.entry(&g[..k]).or_default() += c;
        }
        for (g, &c) in &counts[k] {
            probs[k].insert(g.clone(), (c - d) / ctx_totals[&g[..k]]);
        }
        // Back-off weights for order-k contexts.
        let mut by_ctx: BTreeMap<Vec<String>, Vec<&Vec<String>>> = BTreeMap::new();
        for g in probs[k].keys() {
            by_ctx.entry(g[..k].to_vec()).or_default().push(g);
        }
        for (ctx, grams) in by_ctx {
            let seen: f64 = grams.iter().map(|g| probs[k][*g]).sum();
            let lower: f64 = grams
                .iter()
                .map(|g| lower_prob(&probs, &backoffs, &g[1..]))
                .sum();
            let bo = (1.0 - seen) / (1.0 - lower);
            backoffs[k - 1].insert(ctx, bo);
        }
    }

    let mut tables: Vec<Vec<(Vec<String>, NgramEntry)>> = Vec::with_capacity(cfg.order);
    for k in 0..cfg.order {
        let mut rows: Vec<(Vec<String>, NgramEntry)> = probs[k]
            .iter()
            .map(|(g, &p)| {
                (
                    g.clone(),
                    NgramEntry {
                        logprob: p.log10(),
                        backoff: backoffs[k].get(g).map(|b| b.log10()),
                    },
                )
            })
            .collect();
        if k == 0 {
            let bo = backoffs[0].get(&vec![BOS.to_string()]).map(|b| b.log10());
            rows.push((vec![BOS.to_string()], NgramEntry { logprob: BOS_LOGPROB, backoff: bo }));
        }
        tables.push(rows);
    }
    ArpaLm::from_tables(tables)
}

/// Back-off probability of `gram[last]` given `gram[..last]`, from the orders
/// estimated so far.
fn lower_prob(
    probs: &[BTreeMap<Vec<String>, f64>],
    backoffs: &[BTreeMap<Vec<String>, f64>],
    gram: &[String],
) -> f64 {
    let n = gram.len();
    if let Some(&p) = probs[n - 1].get(gram) {
        return p;
    }
    if n == 1 {
        return probs[0][&vec![UNK.to_string()]];
    }
    let ctx = &gram[..n - 1];
    let bo = backoffs[n - 2].get(ctx).copied().unwrap_or(1.0);
    bo * lower_prob(probs, backoffs, &gram[1..])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<&'static str> {
        vec!["a b c", "a b", "b c a", "c c", "a c b a", "b"]
    }

    fn check_normalized(lm: &ArpaLm, contexts: &[Vec<&str>]) {
        let words: Vec<&str> = lm.vocab().iter().map(String::as_str).filter(|w| *w != BOS).collect();
        for ctx in contexts {
            let s: f64 = words.iter().map(|w| 10f64.powf(lm.cond_logprob(ctx, w))).sum();
            assert!((s - 1.0).abs() < 1e-9, "context {ctx:?} sums to {s}");
        }
    }

    #[test]
    fn every_context_normalizes() {
        for order in 1..=4 {
            let lm = train_ngram(&corpus(), NgramTrainConfig { order, discount: 0.5 }).unwrap();
            assert_eq!(lm.max_order(), order);
            let mut contexts = vec![vec![], vec!["<s>"], vec!["a"], vec!["zzz"]];
            contexts.push(vec!["<s>", "a"]);
            contexts.push(vec!["a", "b"]);
            contexts.push(vec!["c", "c"]);
            contexts.push(vec!["<s>", "a", "c"]);
            check_normalized(&lm, &contexts);
        }
    }

    #[test]
    fn seen_bigram_beats_unseen() {
        let lm = train_ngram(&corpus(), NgramTrainConfig::default()).unwrap();
        assert!(lm.cond_logprob(&["a"], "b") > lm.cond_logprob(&["a"], "zzz"));
        assert!(lm.sentence_logprob("a b c") > lm.sentence_logprob("c a a"));
    }

    #[test]
    fn arpa_text_roundtrip() {
        let lm = train_ngram(&corpus(), NgramTrainConfig { order: 3, discount: 0.4 }).unwrap();
        let back = ArpaLm::parse(&lm.to_arpa(), std::path::Path::new("x")).unwrap();
        assert_eq!(back, lm);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(train_ngram(&corpus(), NgramTrainConfig { order: 0, discount: 0.5 }).is_err());
        assert!(train_ngram(&corpus(), NgramTrainConfig { order: 2, discount: 1.0 }).is_err());
    }
}
