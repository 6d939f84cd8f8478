//! Synthetic corpus: a pseudo-word lexicon, a sparse Markov sentence source,
//! and utterance generation on top of [`Synthesizer`].

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Utterance;
use super::lexicon::{text_to_phonemes, Lexicon};
use super::synth::Synthesizer;
use crate::alphabet::phoneme_id;
use crate::error::{Error, Result};

const VOWELS: &[&str] = &[
    "AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER", "EY", "IH", "IY", "OW", "OY", "UH", "UW",
];
const CONSONANTS: &[&str] = &[
    "B", "CH", "D", "DH", "F", "G", "HH", "JH", "K", "L", "M", "N", "NG", "P", "R", "S", "SH",
    "T", "TH", "V", "W", "Y", "Z", "ZH",
];

fn spelling(label: &str) -> &'static str {
    match label {
        "AA" => "ah",
        "AE" => "a",
        "AH" => "u",
        "AO" => "aw",
        "AW" => "ow",
        "AY" => "i",
        "EH" => "e",
        "ER" => "er",
        "EY" => "ay",
        "IH" => "ih",
        "IY" => "ee",
        "OW" => "o",
        "OY" => "oy",
        "UH" => "oo",
        "UW" => "ue",
        "B" => "b",
        "CH" => "ch",
        "D" => "d",
        "DH" => "dh",
        "F" => "f",
        "G" => "g",
        "HH" => "h",
        "JH" => "j",
        "K" => "k",
        "L" => "l",
        "M" => "m",
        "N" => "n",
        "NG" => "ng",
        "P" => "p",
        "R" => "r",
        "S" => "s",
        "SH" => "sh",
        "T" => "t",
        "TH" => "th",
        "V" => "v",
        "W" => "w",
        "Y" => "y",
        "Z" => "z",
        "ZH" => "zh",
        _ => unreachable!("no spelling for {label}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub vocab_size: usize,
    pub num_train: usize,
    pub num_test: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Successor words per word in the sentence source.
    pub branching: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            vocab_size: 200,
            num_train: 500,
            num_test: 100,
            min_words: 3,
            max_words: 6,
            branching: 4,
            seed: 2024,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 || self.branching == 0 || self.branching > self.vocab_size {
            return Err(Error::Config("vocab_size >= 2 and 1 <= branching <= vocab_size required".into()));
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return Err(Error::Config("need 1 <= min_words <= max_words".into()));
        }
        Ok(())
    }
}

/// Generates `size` pronounceable pseudo-words with distinct spellings and
/// distinct pronunciations of 2 to 5 phonemes.
pub fn generate_lexicon(size: usize, seed: u64) -> Lexicon {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lex = Lexicon::new();
    let mut prons: HashSet<Vec<usize>> = HashSet::new();
    while lex.len() < size {
        let syllables = rng.random_range(1..=2);
        let mut labels: Vec<&str> = Vec::new();
        for _ in 0..syllables {
            if rng.random_bool(0.8) {
                labels.push(CONSONANTS.choose(&mut rng).unwrap());
            }
            labels.push(VOWELS.choose(&mut rng).unwrap());
            if rng.random_bool(0.5) {
                labels.push(CONSONANTS.choose(&mut rng).unwrap());
            }
        }
        if labels.len() < 2 || labels.len() > 5 {
            continue;
        }
        let word: String = labels.iter().map(|l| spelling(l)).collect();
        let pron: Vec<usize> = labels.iter().map(|l| phoneme_id(l).unwrap()).collect();
        if lex.get(&word).is_some() || prons.contains(&pron) {
            continue;
        }
        prons.insert(pron.clone());
        lex.insert(&word, pron).expect("generated entry is valid");
    }
    lex
}

/// First-order Markov sentence source with a sparse successor table.
#[derive(Debug, Clone)]
pub struct SentenceSource {
    words: Vec<String>,
    starts: Vec<(usize, f64)>,
    successors: Vec<Vec<(usize, f64)>>,
    min_words: usize,
    max_words: usize,
}

fn pick(rng: &mut ChaCha8Rng, table: &[(usize, f64)]) -> usize {
    let total: f64 = table.iter().map(|(_, w)| w).sum();
    let mut x = rng.random::<f64>() * total;
    for &(i, w) in table {
        if x < w {
            return i;
        }
        x -= w;
    }
    table.last().unwrap().0
}

impl SentenceSource {
    pub fn new(lexicon: &Lexicon, cfg: &CorpusConfig) -> Result<Self> {
        cfg.validate()?;
        let words: Vec<String> = lexicon.iter().map(|(w, _)| w.to_string()).collect();
        let n = words.len();
        if n < cfg.branching {
            return Err(Error::Config("lexicon smaller than branching factor".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_5e47);
        let table = |rng: &mut ChaCha8Rng, k: usize| -> Vec<(usize, f64)> {
            rand::seq::index::sample(rng, n, k)
                .into_iter()
                .map(|i| (i, rng.random_range(0.2..1.0)))
                .collect()
        };
        let starts = table(&mut rng, (n / 10).max(1));
        let successors = (0..n).map(|_| table(&mut rng, cfg.branching)).collect();
        Ok(SentenceSource {
            words,
            starts,
            successors,
            min_words: cfg.min_words,
            max_words: cfg.max_words,
        })
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> String {
        let len = rng.random_range(self.min_words..=self.max_words);
        let mut cur = pick(rng, &self.starts);
        let mut out = vec![self.words[cur].as_str()];
        while out.len() < len {
            cur = pick(rng, &self.successors[cur]);
            out.push(&self.words[cur]);
        }
        out.join(" ")
    }
}

/// A generated corpus split.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub lexicon: Lexicon,
    pub train: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

pub fn generate_corpus(cfg: &CorpusConfig, synth: &Synthesizer) -> Result<Corpus> {
    cfg.validate()?;
    let lexicon = generate_lexicon(cfg.vocab_size, cfg.seed);
    let source = SentenceSource::new(&lexicon, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut make = |prefix: &str, count: usize| -> Result<Vec<Utterance>> {
        (0..count)
            .map(|i| {
                let text = source.sample(&mut rng);
                let phonemes = text_to_phonemes(&text, &lexicon)?;
                let feat_seed = rng.random::<u64>();
                let features = synth.generate(&phonemes, feat_seed)?.features;
                Ok(Utterance {
                    id: format!("{prefix}{i:05}"),
                    text,
                    phonemes,
                    features,
                })
            })
            .collect()
    };
    let train = make("train", cfg.num_train)?;
    let test = make("test", cfg.num_test)?;
    Ok(Corpus {
        lexicon,
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::SynthConfig;

    #[test]
    fn lexicon_has_unique_entries() {
        let lex = generate_lexicon(200, 5);
        assert_eq!(lex.len(), 200);
        let prons: HashSet<&[usize]> = lex.iter().map(|(_, p)| p).collect();
        assert_eq!(prons.len(), 200);
        assert!(lex.iter().all(|(_, p)| (2..=5).contains(&p.len())));
        assert!(lex.iter().all(|(_, p)| !p.contains(&crate::alphabet::SIL)));
    }

    #[test]
    fn corpus_is_deterministic() {
        let cfg = CorpusConfig {
            vocab_size: 30,
            num_train: 5,
            num_test: 2,
            ..Default::default()
        };
        let synth = Synthesizer::new(SynthConfig::default()).unwrap();
        let a = generate_corpus(&cfg, &synth).unwrap();
        let b = generate_corpus(&cfg, &synth).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        for u in a.train.iter().chain(&a.test) {
            let n = u.text.split(' ').count();
            assert!((cfg.min_words..=cfg.max_words).contains(&n));
            assert_eq!(u.phonemes, text_to_phonemes(&u.text, &a.lexicon).unwrap());
        }
    }
}
