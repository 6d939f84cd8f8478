//! ARPA back-off n-gram models.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

pub type WordId = u32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgramEntry {
    /// log10 probability.
    pub logprob: f64,
    /// log10 back-off weight; absent means 0.
    pub backoff: Option<f64>,
}

/// Back-off n-gram model with log10 scores.
#[derive(Debug, Clone)]
pub struct ArpaLm {
    vocab: Vec<String>,
    ids: HashMap<String, WordId>,
    /// `orders[k]` holds the (k+1)-grams.
    orders: Vec<HashMap<Vec<WordId>, NgramEntry>>,
    unk: WordId,
    bos: WordId,
    eos: WordId,
}

/// Models are equal when they hold the same n-grams with the same scores,
/// whatever order the words were numbered in.
impl PartialEq for ArpaLm {
    fn eq(&self, other: &Self) -> bool {
        let named = |lm: &ArpaLm| -> Vec<std::collections::BTreeMap<Vec<String>, NgramEntry>> {
            lm.orders
                .iter()
                .map(|t| {
                    t.iter()
                        .map(|(k, e)| (k.iter().map(|&i| lm.vocab[i as usize].clone()).collect(), *e))
                        .collect()
                })
                .collect()
        };
        named(self) == named(other)
    }
}

impl ArpaLm {
    /// Builds a model from explicit n-gram tables. Every token appearing in a
    /// higher-order entry must also appear as a unigram.
    pub fn from_tables(tables: Vec<Vec<(Vec<String>, NgramEntry)>>) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::InvalidArgument("model has no n-gram orders".into()));
        }
        let mut vocab = Vec::new();
        let mut ids = HashMap::new();
        for (words, _) in &tables[0] {
            if words.len() != 1 {
                return Err(Error::InvalidArgument("unigram entry with wrong arity".into()));
            }
            if !ids.contains_key(&words[0]) {
                ids.insert(words[0].clone(), vocab.len() as WordId);
                vocab.push(words[0].clone());
            }
        }
        let lookup = |w: &str| -> Result<WordId> {
            ids.get(w)
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("`{w}` missing from unigrams")))
        };
        let unk = lookup(UNK)?;
        let bos = lookup(BOS)?;
        let eos = lookup(EOS)?;
        let mut orders = Vec::with_capacity(tables.len());
        for (k, table) in tables.iter().enumerate() {
            let mut map = HashMap::with_capacity(table.len());
            for (words, entry) in table {
                if words.len() != k + 1 {
                    return Err(Error::InvalidArgument(format!("{}-gram entry in order {}", words.len(), k + 1)));
                }
                let key = words.iter().map(|w| lookup(w)).collect::<Result<Vec<_>>>()?;
                map.insert(key, *entry);
            }
            orders.push(map);
        }
        Ok(ArpaLm {
            vocab,
            ids,
            orders,
            unk,
            bos,
            eos,
        })
    }

    pub fn max_order(&self) -> usize {
        self.orders.len()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn count(&self, order: usize) -> usize {
        self.orders.get(order - 1).map_or(0, HashMap::len)
    }

    pub fn bos(&self) -> WordId {
        self.bos
    }

    pub fn eos(&self) -> WordId {
        self.eos
    }

    /// Id of `word`, mapping unknown words to `<unk>`.
    pub fn word_id(&self, word: &str) -> WordId {
        self.ids.get(word).copied().unwrap_or(self.unk)
    }

    pub fn entry(&self, words: &[&str]) -> Option<&NgramEntry> {
        let key: Vec<WordId> = words.iter().map(|w| self.ids.get(*w).copied()).collect::<Option<_>>()?;
        self.orders.get(key.len().checked_sub(1)?)?.get(&key)
    }

    /// Katz back-off conditional log10 probability over ids. Contexts longer
    /// than `max_order - 1` are truncated from the left.
    pub fn cond_logprob_ids(&self, context: &[WordId], word: WordId) -> f64 {
        let keep = context.len().min(self.max_order() - 1);
        let mut ctx = &context[context.len() - keep..];
        let mut penalty = 0.0;
        let mut key = Vec::with_capacity(ctx.len() + 1);
        loop {
            key.clear();
            key.extend_from_slice(ctx);
            key.push(word);
            if let Some(e) = self.orders[ctx.len()].get(&key) {
                return penalty + e.logprob;
            }
            if ctx.is_empty() {
                // `<unk>` is always present, so this only triggers for ids
                // outside the vocabulary.
                return penalty + self.orders[0][&vec![self.unk]].logprob;
            }
            if let Some(bo) = self.orders[ctx.len() - 1].get(ctx).and_then(|e| e.backoff) {
                penalty += bo;
            }
            ctx = &ctx[1..];
        }
    }

    pub fn cond_logprob(&self, context: &[&str], word: &str) -> f64 {
        let ctx: Vec<WordId> = context.iter().map(|w| self.word_id(w)).collect();
        self.cond_logprob_ids(&ctx, self.word_id(word))
    }

    /// log10 probability of a whitespace-tokenized sentence, padded with
    /// `<s>` and terminated by `</s>`.
    pub fn sentence_logprob(&self, text: &str) -> f64 {
        let mut history = vec![self.bos];
        let mut total = 0.0;
        for tok in text.split_whitespace() {
            let id = self.word_id(tok);
            total += self.cond_logprob_ids(&history, id);
            history.push(id);
        }
        total + self.cond_logprob_ids(&history, self.eos)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::parse(path, line, msg);
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

        let mut declared: Vec<usize> = Vec::new();
        let mut seen_data = false;
        let mut section: Option<usize> = None;
        let mut tables: Vec<Vec<(Vec<String>, NgramEntry)>> = Vec::new();
        let mut ended = false;

        for (no, line) in lines.by_ref() {
            if line.is_empty() {
                continue;
            }
            if !seen_data {
                if line == "\\data\\" {
                    seen_data = true;
                }
                continue;
            }
            if line == "\\end\\" {
                ended = true;
                break;
            }
            if let Some(rest) = line.strip_prefix("ngram ") {
                let (n, c) = rest.split_once('=').ok_or_else(|| err(no, "malformed ngram count"))?;
                let n: usize = n.trim().parse().map_err(|_| err(no, "bad order"))?;
                let c: usize = c.trim().parse().map_err(|_| err(no, "bad count"))?;
                if n != declared.len() + 1 {
                    return Err(err(no, "ngram counts out of order"));
                }
                declared.push(c);
                continue;
            }
            if line.starts_with('\\') && line.ends_with("-grams:") {
                let n: usize = line[1..line.len() - 7].parse().map_err(|_| err(no, "bad section header"))?;
                if n != tables.len() + 1 || n > declared.len() {
                    return Err(err(no, "unexpected n-gram section"));
                }
                if let Some(prev) = section {
                    if tables[prev - 1].len() != declared[prev - 1] {
                        return Err(err(no, &format!("{prev}-gram count mismatch")));
                    }
                }
                tables.push(Vec::new());
                section = Some(n);
                continue;
            }
            let n = section.ok_or_else(|| err(no, "entry outside of an n-gram section"))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != n + 1 && fields.len() != n + 2 {
                return Err(err(no, &format!("expected {n}-gram entry")));
            }
            let logprob: f64 = fields[0].parse().map_err(|_| err(no, "bad log probability"))?;
            if logprob > 0.0 {
                return Err(err(no, "positive log probability"));
            }
            let backoff = match fields.get(n + 1) {
                Some(s) => Some(s.parse::<f64>().map_err(|_| err(no, "bad back-off weight"))?),
                None => None,
            };
            let words = fields[1..=n].iter().map(|s| s.to_string()).collect();
            tables[n - 1].push((words, NgramEntry { logprob, backoff }));
        }
        let last_line = text.lines().count();
        if !seen_data {
            return Err(err(1, "missing \\data\\ header"));
        }
        if !ended {
            return Err(err(last_line, "missing \\end\\"));
        }
        if tables.len() != declared.len() || declared.is_empty() {
            return Err(err(last_line, "section count does not match header"));
        }
        for (k, t) in tables.iter().enumerate() {
            if t.len() != declared[k] {
                return Err(err(last_line, &format!("{}-gram count mismatch", k + 1)));
            }
        }
        ArpaLm::from_tables(tables).map_err(|e| err(last_line, &e.to_string()))
    }

    /// Serializes with entries sorted by token sequence.
    pub fn to_arpa(&self) -> String {
        let mut out = String::from("\\data\\\n");
        for (k, m) in self.orders.iter().enumerate() {
            let _ = writeln!(out, "ngram {}={}", k + 1, m.len());
        }
        for (k, m) in self.orders.iter().enumerate() {
            let _ = write!(out, "\n\\{}-grams:\n", k + 1);
            let mut rows: Vec<(Vec<&str>, &NgramEntry)> = m
                .iter()
                .map(|(key, e)| (key.iter().map(|&id| self.vocab[id as usize].as_str()).collect(), e))
                .collect();
            rows.sort_by(|a, b| a.0.cmp(&b.0));
            for (words, e) in rows {
                let _ = write!(out, "{}\t{}", e.logprob, words.join(" "));
                if let Some(bo) = e.backoff {
                    let _ = write!(out, "\t{bo}");
                }
                out.push('\n');
            }
        }
        out.push_str("\n\\end\\\n");
        out
    }
}

pub fn parse_arpa(path: impl AsRef<Path>) -> Result<ArpaLm> {
    let path = path.as_ref();
    ArpaLm::parse(&std::fs::read_to_string(path)?, path)
}

pub fn write_arpa(path: impl AsRef<Path>, lm: &ArpaLm) -> Result<()> {
    std::fs::write(path, lm.to_arpa())?;
    Ok(())
}
