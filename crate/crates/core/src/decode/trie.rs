use std::collections::BTreeMap;

use crate::alphabet::SIL;
use crate::data::Lexicon;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct TrieNode {
    /// Phoneme on the edge into this node (`SIL` for the root).
    pub phoneme: usize,
    pub children: BTreeMap<usize, usize>,
    /// Indices into `LexiconTrie::words` of words ending here.
    pub words: Vec<usize>,
}

/// Pronunciation prefix tree. `SIL` inside a pronunciation is dropped, since
/// the decoder uses it as the word delimiter.
#[derive(Debug, Clone)]
pub struct LexiconTrie {
    pub nodes: Vec<TrieNode>,
    pub words: Vec<String>,
    pub prons: Vec<Vec<usize>>,
}

impl LexiconTrie {
    pub const ROOT: usize = 0;

    pub fn new(lexicon: &Lexicon) -> Result<Self> {
        let mut trie = LexiconTrie {
            nodes: vec![TrieNode::default()],
            words: Vec::new(),
            prons: Vec::new(),
        };
        for (word, pron) in lexicon.iter() {
            let pron: Vec<usize> = pron.iter().copied().filter(|&p| p != SIL).collect();
            if pron.is_empty() {
                log::warn!("lexicon word `{word}` has no non-silence phonemes; skipped");
                continue;
            }
            let mut node = Self::ROOT;
            for &p in &pron {
                node = match trie.nodes[node].children.get(&p) {
                    Some(&n) => n,
                    None => {
                        trie.nodes.push(TrieNode {
                            phoneme: p,
                            ..TrieNode::default()
                        });
                        let n = trie.nodes.len() - 1;
                        trie.nodes[node].children.insert(p, n);
                        n
                    }
                };
            }
            trie.nodes[node].words.push(trie.words.len());
            trie.words.push(word.to_string());
            trie.prons.push(pron);
        }
        if trie.words.is_empty() {
            return Err(Error::EmptyLexicon);
        }
        Ok(trie)
    }

    pub fn lookup(&self, pron: &[usize]) -> Option<usize> {
        pron.iter()
            .try_fold(Self::ROOT, |n, p| self.nodes[n].children.get(p).copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::phoneme_id;

    fn ph(s: &str) -> Vec<usize> {
        s.split_whitespace().map(|x| phoneme_id(x).unwrap()).collect()
    }

    #[test]
    fn shares_prefixes_and_marks_word_ends() {
        let mut lex = Lexicon::new();
        lex.insert("hi", ph("HH AY")).unwrap();
        lex.insert("high", ph("HH AY")).unwrap();
        lex.insert("hike", ph("HH AY K")).unwrap();
        let t = LexiconTrie::new(&lex).unwrap();
        assert_eq!(t.nodes.len(), 4);
        let n = t.lookup(&ph("HH AY")).unwrap();
        assert_eq!(t.nodes[n].words.len(), 2);
        assert!(t.nodes[t.lookup(&ph("HH")).unwrap()].words.is_empty());
    }

    #[test]
    fn silence_only_lexicon_is_empty() {
        let mut lex = Lexicon::new();
        lex.insert("pause", vec![SIL]).unwrap();
        assert!(matches!(LexiconTrie::new(&lex), Err(Error::EmptyLexicon)));
    }
}
