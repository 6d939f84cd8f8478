//! Back-off n-gram language models in ARPA format.
//!
//! Scores are kept in log10 as stored in the file. Decoders convert to
//! natural log with a single multiplication by `ln 10`.

pub mod arpa;
pub mod train;

pub use arpa::{parse_arpa, write_arpa, ArpaLm, NgramEntry, WordId, BOS, EOS, UNK};
pub use train::{train_ngram, NgramTrainConfig};

/// Path of the hand-built bigram fixture shipped with the crate.
pub fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join("lm")
        .join(name)
}
