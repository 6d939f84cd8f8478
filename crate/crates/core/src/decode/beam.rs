//! Lexicon-constrained CTC prefix beam search with n-gram shallow fusion.
//!
//! A hypothesis spells `pron(w1) SIL pron(w2) SIL ... pron(wn) SIL`. Prefixes
//! walk the pronunciation trie; a `SIL` after a word-final node emits the word
//! and adds its LM score.

use std::collections::HashMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::nbest::{rank_order, Hypothesis, NBestList};
use super::trie::LexiconTrie;
use crate::alphabet::{PHONEME_BLANK, PHONEME_CLASSES, SIL};
use crate::error::{Error, Result};
use crate::lm::{ArpaLm, WordId};
use crate::math::{log_add, LN_10};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub alpha: f64,
    pub beta: f64,
    pub beam_width: usize,
    pub nbest_k: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            alpha: 0.5,
            beta: -0.5,
            beam_width: 128,
            nbest_k: 10,
        }
    }
}

/// Interned word history. Index 0 is the empty history.
struct History {
    parent: usize,
    word: usize,
    lm_id: WordId,
    /// Natural-log LM score of the words so far.
    lm: f64,
    count: usize,
}

struct Histories<'a> {
    nodes: Vec<History>,
    index: HashMap<(usize, usize), usize>,
    lm: &'a ArpaLm,
    lm_ids: Vec<WordId>,
}

impl<'a> Histories<'a> {
    fn new(lm: &'a ArpaLm, trie: &LexiconTrie) -> Self {
        Histories {
            nodes: vec![History {
                parent: 0,
                word: usize::MAX,
                lm_id: lm.bos(),
                lm: 0.0,
                count: 0,
            }],
            index: HashMap::new(),
            lm,
            lm_ids: trie.words.iter().map(|w| lm.word_id(w)).collect(),
        }
    }

    /// LM context: `<s>` followed by the words, truncated to the model order.
    fn context(&self, mut h: usize) -> Vec<WordId> {
        let keep = self.lm.max_order().saturating_sub(1);
        let mut ctx = Vec::with_capacity(keep);
        while ctx.len() < keep {
            ctx.push(self.nodes[h].lm_id);
            if h == 0 {
                break;
            }
            h = self.nodes[h].parent;
        }
        ctx.reverse();
        ctx
    }

    fn extend(&mut self, h: usize, word: usize) -> usize {
        if let Some(&id) = self.index.get(&(h, word)) {
            return id;
        }
        let lm_id = self.lm_ids[word];
        let step = LN_10 * self.lm.cond_logprob_ids(&self.context(h), lm_id);
        self.nodes.push(History {
            parent: h,
            word,
            lm_id,
            lm: self.nodes[h].lm + step,
            count: self.nodes[h].count + 1,
        });
        let id = self.nodes.len() - 1;
        self.index.insert((h, word), id);
        id
    }

    fn words(&self, mut h: usize) -> Vec<usize> {
        let mut out = Vec::new();
        while h != 0 {
            out.push(self.nodes[h].word);
            h = self.nodes[h].parent;
        }
        out.reverse();
        out
    }
}

#[derive(Clone, Copy)]
struct Prefix {
    hist: usize,
    node: usize,
    /// Log-probability of the prefix with the last frame blank / non-blank.
    p_b: f64,
    p_nb: f64,
}

impl Prefix {
    fn total(&self) -> f64 {
        log_add(self.p_b, self.p_nb)
    }
}

/// Beam of prefixes keyed by `(history, trie node)`, kept in insertion order.
#[derive(Default)]
struct Beam {
    items: Vec<Prefix>,
    index: HashMap<(usize, usize), usize>,
}

impl Beam {
    fn slot(&mut self, hist: usize, node: usize) -> &mut Prefix {
        let n = self.items.len();
        let i = *self.index.entry((hist, node)).or_insert(n);
        if i == n {
            self.items.push(Prefix {
                hist,
                node,
                p_b: f64::NEG_INFINITY,
                p_nb: f64::NEG_INFINITY,
            });
        }
        &mut self.items[i]
    }
}

/// Decodes `T x 41` phoneme log-probabilities into an N-best list. The
/// returned list has an empty `utt_id` and `decoder_id`.
pub fn beam_search(log_probs: ArrayView2<'_, f64>, trie: &LexiconTrie, lm: &ArpaLm, cfg: &BeamConfig) -> Result<NBestList> {
    if log_probs.ncols() != PHONEME_CLASSES {
        return Err(Error::Shape(format!(
            "beam search expects {PHONEME_CLASSES} columns, got {}",
            log_probs.ncols()
        )));
    }
    if cfg.beam_width == 0 || cfg.nbest_k == 0 {
        return Err(Error::InvalidArgument("beam_width and nbest_k must be >= 1".into()));
    }
    if !cfg.alpha.is_finite() || !cfg.beta.is_finite() {
        return Err(Error::InvalidArgument("alpha and beta must be finite".into()));
    }
    let root = LexiconTrie::ROOT;
    let mut hists = Histories::new(lm, trie);
    let mut beam = Beam::default();
    beam.slot(0, root).p_b = 0.0;

    for row in log_probs.rows() {
        let mut next = Beam::default();
        for &pre in &beam.items {
            let total = pre.total();
            let node = &trie.nodes[pre.node];
            let last = if pre.node != root {
                Some(node.phoneme)
            } else if pre.hist != 0 {
                Some(SIL)
            } else {
                None
            };

            let stay = next.slot(pre.hist, pre.node);
            stay.p_b = log_add(stay.p_b, total + row[PHONEME_BLANK]);
            if let Some(l) = last {
                stay.p_nb = log_add(stay.p_nb, pre.p_nb + row[l]);
            }

            let from = |c: usize| if Some(c) == last { pre.p_b } else { total };
            for (&c, &child) in &node.children {
                let s = next.slot(pre.hist, child);
                s.p_nb = log_add(s.p_nb, from(c) + row[c]);
            }
            if pre.node != root {
                for &w in &node.words {
                    let h = hists.extend(pre.hist, w);
                    let s = next.slot(h, root);
                    s.p_nb = log_add(s.p_nb, from(SIL) + row[SIL]);
                }
            }
        }

        let score = |p: &Prefix| {
            let h = &hists.nodes[p.hist];
            p.total() + cfg.alpha * h.lm + cfg.beta * h.count as f64
        };
        let mut scored: Vec<(f64, Prefix)> = next
            .items
            .into_iter()
            .filter(|p| p.total() > f64::NEG_INFINITY)
            .map(|p| (score(&p), p))
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        scored.truncate(cfg.beam_width);
        beam = Beam::default();
        for (_, p) in scored {
            *beam.slot(p.hist, p.node) = p;
        }
    }

    let mut best: HashMap<String, Hypothesis> = HashMap::new();
    for pre in &beam.items {
        if pre.node != root || pre.hist == 0 {
            continue;
        }
        let acoustic = pre.total();
        let h = &hists.nodes[pre.hist];
        let lm_total = h.lm + LN_10 * lm.cond_logprob_ids(&hists.context(pre.hist), lm.eos());
        let ids = hists.words(pre.hist);
        let words: Vec<String> = ids.iter().map(|&w| trie.words[w].clone()).collect();
        let mut phonemes = Vec::new();
        for &w in &ids {
            phonemes.extend_from_slice(&trie.prons[w]);
            phonemes.push(SIL);
        }
        let hyp = Hypothesis {
            text: words.join(" "),
            combined: acoustic + cfg.alpha * lm_total + cfg.beta * words.len() as f64,
            words,
            phonemes,
            acoustic,
            lm: lm_total,
            decoder_id: String::new(),
        };
        match best.get(&hyp.text) {
            Some(old) if rank_order(old, &hyp).is_le() => {}
            _ => {
                best.insert(hyp.text.clone(), hyp);
            }
        }
    }
    if best.is_empty() {
        return Err(Error::EmptyBeam);
    }
    let mut hypotheses: Vec<Hypothesis> = best.into_values().collect();
    hypotheses.sort_by(rank_order);
    hypotheses.truncate(cfg.nbest_k);
    Ok(NBestList {
        utt_id: String::new(),
        hypotheses,
    })
}
