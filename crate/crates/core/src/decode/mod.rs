//! Greedy and lexicon-constrained beam decoding, N-best lists and rescoring.

pub mod beam;
pub mod greedy;
pub mod nbest;
pub mod rescore;
pub mod trie;

pub use beam::{beam_search, BeamConfig};
pub use greedy::{collapse_path, greedy_decode};
pub use nbest::{nbest_to_jsonl, rank_order, read_nbest, write_nbest, Hypothesis, NBestList};
pub use rescore::{rescore, NgramScorer, OracleScorer, TextScorer};
pub use trie::{LexiconTrie, TrieNode};
