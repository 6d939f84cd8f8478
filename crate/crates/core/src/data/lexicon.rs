use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::alphabet::{phoneme_id, symbol_of, SIL};
use crate::error::{Error, Result};

/// Characters removed before tokenizing text.
pub const STRIP_CHARS: &[char] = &['.', ',', '?', '!', '\'', '"'];

/// Lowercases, strips punctuation and splits on whitespace.
pub fn normalize_words(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !STRIP_CHARS.contains(c))
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Word to pronunciation map. Only the first pronunciation of a word is kept.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<usize>>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a word unless it is already present. Returns whether it was added.
    pub fn insert(&mut self, word: &str, pron: Vec<usize>) -> Result<bool> {
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("bad lexicon word `{word}`")));
        }
        if pron.is_empty() {
            return Err(Error::InvalidArgument(format!("empty pronunciation for `{word}`")));
        }
        for &p in &pron {
            symbol_of(p)?;
        }
        let word = word.to_lowercase();
        if self.entries.contains_key(&word) {
            return Ok(false);
        }
        self.entries.insert(word, pron);
        Ok(true)
    }

    pub fn get(&self, word: &str) -> Option<&[usize]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in lexicographic word order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.entries.iter().map(|(w, p)| (w.as_str(), p.as_slice()))
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lex = Lexicon::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, pron) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, line_no, "expected `word<TAB>PHONEMES`"))?;
            let pron = pron
                .split_whitespace()
                .map(|s| phoneme_id(s).map_err(|e| Error::parse(path, line_no, e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            lex.insert(word.trim(), pron)
                .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        }
        if lex.is_empty() {
            return Err(Error::EmptyLexicon);
        }
        Ok(lex)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (word, pron) in self.iter() {
            let labels: Vec<&str> = pron.iter().map(|&p| symbol_of(p).unwrap()).collect();
            let _ = writeln!(out, "{word}\t{}", labels.join(" "));
        }
        out
    }
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    Lexicon::parse(&text, path)
}

pub fn write_lexicon(path: impl AsRef<Path>, lexicon: &Lexicon) -> Result<()> {
    std::fs::write(path, lexicon.to_text())?;
    Ok(())
}

/// Word pronunciations joined by single `SIL`s, with a trailing `SIL`.
pub fn text_to_phonemes(text: &str, lexicon: &Lexicon) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for word in normalize_words(text) {
        let pron = lexicon.get(&word).ok_or_else(|| Error::OovWord(word.clone()))?;
        out.extend_from_slice(pron);
        out.push(SIL);
    }
    Ok(out)
}
