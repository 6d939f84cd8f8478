use b2t_core::alphabet::{PHONEME_BLANK, PHONEME_CLASSES, SIL};
use b2t_core::data::Lexicon;
use b2t_core::decode::{beam_search, BeamConfig, LexiconTrie};
use b2t_core::lm::{train_ngram, ArpaLm, NgramTrainConfig};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup(seed: u64, frames: usize) -> (LexiconTrie, ArpaLm, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lex = Lexicon::new();
    for (w, pron) in [("ka", vec![1, 2]), ("po", vec![2]), ("mi", vec![3, 1]), ("tu", vec![1, 2, 3]), ("na", vec![3])] {
        lex.insert(w, pron).unwrap();
    }
    let lm = train_ngram(&["ka po", "mi tu na", "po po ka", "na ka"], NgramTrainConfig::default()).unwrap();
    let mut lp = Array2::from_shape_fn((frames, PHONEME_CLASSES), |(_, k)| {
        let boost = if [SIL, 1, 2, 3, PHONEME_BLANK].contains(&k) { 4.0 } else { 0.0 };
        boost + rng.random_range(-1.0..1.0)
    });
    for mut row in lp.rows_mut() {
        let z = row.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        row.mapv_inplace(|x| x - z);
    }
    (LexiconTrie::new(&lex).unwrap(), lm, lp)
}

#[test]
fn zero_weights_rank_by_acoustic_only() {
    let (trie, lm, lp) = setup(1, 10);
    let cfg = BeamConfig {
        alpha: 0.0,
        beta: 0.0,
        beam_width: 10_000,
        nbest_k: 50,
    };
    let out = beam_search(lp.view(), &trie, &lm, &cfg).unwrap();
    assert!(out.hypotheses.len() > 3);
    for w in out.hypotheses.windows(2) {
        assert!(w[0].acoustic >= w[1].acoustic);
    }
    for h in &out.hypotheses {
        assert_eq!(h.combined, h.acoustic);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn narrower_beam_never_scores_higher(seed in 0u64..10_000, frames in 6usize..14, narrow in 1usize..12) {
        let (trie, lm, lp) = setup(seed, frames);
        let wide = BeamConfig { beam_width: 4096, nbest_k: 1, ..BeamConfig::default() };
        let small = BeamConfig { beam_width: narrow, ..wide };
        let best = beam_search(lp.view(), &trie, &lm, &wide).unwrap().hypotheses[0].combined;
        if let Ok(n) = beam_search(lp.view(), &trie, &lm, &small) {
            prop_assert!(n.hypotheses[0].combined <= best + 1e-9);
        }
    }
}
