//! Lexicon handling, text-to-phoneme conversion, synthetic features and
//! dataset persistence.

pub mod corpus;
pub mod dataset;
pub mod lexicon;
pub mod synth;

pub use corpus::{generate_corpus, generate_lexicon, Corpus, CorpusConfig, SentenceSource};
pub use dataset::{read_dataset, write_dataset, Utterance};
pub use lexicon::{load_lexicon, normalize_words, text_to_phonemes, write_lexicon, Lexicon};
pub use synth::{synth_utterance, SynthConfig, SynthOutput, Synthesizer};
