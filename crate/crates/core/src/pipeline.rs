//! End-to-end runs: corpus, LM, per-seed decoders, ensembles, report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::config::RunConfig;
use crate::data::{generate_corpus, Corpus, Synthesizer, Utterance};
use crate::decode::{beam_search, greedy_decode, nbest_to_jsonl, Hypothesis, LexiconTrie, NBestList};
use crate::ensemble::{
    candidate_sets, mbr_select, rover_merge, scorer_select, write_transcripts, CandidateSet, EditDistanceOracle,
    FinalTranscript, Strategy,
};
use crate::error::{Error, Result};
use crate::llm_client::{merge_with_fallback, FallbackScorer, LlmClient};
use crate::lm::{train_ngram, write_arpa, ArpaLm};
use crate::metrics::{corpus_error_rate, word_error_rate};
use crate::nn::{save_checkpoint, train, TrainLog, TrainedModel};

/// Shared inputs for every decoder of a run.
pub struct Prepared {
    pub corpus: Corpus,
    pub lm: ArpaLm,
    pub trie: LexiconTrie,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let synth = Synthesizer::new(cfg.synth.clone())?;
    let corpus = generate_corpus(&cfg.corpus, &synth)?;
    let texts: Vec<&str> = corpus.train.iter().map(|u| u.text.as_str()).collect();
    let lm = train_ngram(&texts, cfg.lm)?;
    let trie = LexiconTrie::new(&corpus.lexicon)?;
    Ok(Prepared { corpus, lm, trie })
}

/// Decodes one utterance. An empty beam falls back to the greedy phonemes
/// with empty text, scored by the best-path log-probability.
pub fn decode_utterance(
    model: &TrainedModel,
    utt: &Utterance,
    trie: &LexiconTrie,
    lm: &ArpaLm,
    cfg: &RunConfig,
    decoder_id: &str,
) -> Result<(NBestList, Vec<usize>)> {
    let lp = model.phoneme_log_probs(utt.features.view())?;
    let greedy = greedy_decode(lp.view());
    let mut nbest = match beam_search(lp.view(), trie, lm, &cfg.beam) {
        Ok(n) => n,
        Err(Error::EmptyBeam) => {
            log::warn!("{}: empty beam, using greedy phonemes", utt.id);
            let best_path: f64 = lp.rows().into_iter().map(|r| r.fold(f64::NEG_INFINITY, |a, &b| a.max(b))).sum();
            NBestList {
                utt_id: String::new(),
                hypotheses: vec![Hypothesis {
                    text: String::new(),
                    words: vec![],
                    phonemes: greedy.clone(),
                    acoustic: best_path,
                    lm: 0.0,
                    combined: best_path,
                    decoder_id: String::new(),
                }],
            }
        }
        Err(e) => return Err(e),
    };
    nbest.utt_id = utt.id.clone();
    for h in &mut nbest.hypotheses {
        h.decoder_id = decoder_id.to_string();
    }
    Ok((nbest, greedy))
}

/// One trained decoder and its test-set results.
pub struct SeedRun {
    pub seed: u64,
    pub model: TrainedModel,
    pub log: TrainLog,
    pub nbest: Vec<NBestList>,
    pub greedy: Vec<Vec<usize>>,
    pub wer: f64,
    pub per: f64,
    pub train_secs: f64,
}

pub fn evaluate_model(model: &TrainedModel, prep: &Prepared, cfg: &RunConfig, decoder_id: &str) -> Result<(Vec<NBestList>, Vec<Vec<usize>>, f64, f64)> {
    let mut nbest = Vec::with_capacity(prep.corpus.test.len());
    let mut greedy = Vec::with_capacity(prep.corpus.test.len());
    for u in &prep.corpus.test {
        let (n, g) = decode_utterance(model, u, &prep.trie, &prep.lm, cfg, decoder_id)?;
        nbest.push(n);
        greedy.push(g);
    }
    let wer = word_error_rate(
        &prep
            .corpus
            .test
            .iter()
            .zip(&nbest)
            .map(|(u, n)| (u.text.as_str(), n.top().map(|h| h.text.as_str()).unwrap_or("")))
            .collect::<Vec<_>>(),
    )?;
    let per = corpus_error_rate(
        &prep
            .corpus
            .test
            .iter()
            .zip(&greedy)
            .map(|(u, g)| (u.phonemes.as_slice(), g.as_slice()))
            .collect::<Vec<_>>(),
    )?;
    Ok((nbest, greedy, wer, per))
}

/// Trains with `seed` and evaluates on the test split.
pub fn run_seed(cfg: &RunConfig, prep: &Prepared, seed: u64) -> Result<SeedRun> {
    let mut tc = cfg.train.clone();
    tc.seed = seed;
    let t0 = Instant::now();
    let (model, log) = train(&prep.corpus.train, &tc)?;
    let train_secs = t0.elapsed().as_secs_f64();
    let (nbest, greedy, wer, per) = evaluate_model(&model, prep, cfg, &format!("seed{seed}"))?;
    log::info!("seed {seed}: WER {wer:.4} PER {per:.4} ({train_secs:.1}s)");
    Ok(SeedRun {
        seed,
        model,
        log,
        nbest,
        greedy,
        wer,
        per,
        train_secs,
    })
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub strategy: Strategy,
    pub wer: f64,
    pub transcripts: Vec<FinalTranscript>,
}

/// Applies `strategy` to every candidate set. `Merge` goes through the remote
/// client with the offline fallback chain; the recorded strategy per
/// utterance is the one actually used.
pub fn apply_strategy(
    strategy: Strategy,
    sets: &[CandidateSet],
    refs: &BTreeMap<&str, &str>,
    lm: &ArpaLm,
    client: Option<&LlmClient>,
) -> Result<Vec<FinalTranscript>> {
    let row = |set: &CandidateSet, text: String, s: Strategy| FinalTranscript {
        utt_id: set.utt_id.clone(),
        text,
        strategy: s.to_string(),
    };
    match strategy {
        Strategy::Merge => Ok(merge_with_fallback(client, sets, lm)?
            .into_iter()
            .zip(sets)
            .map(|((t, s), set)| row(set, t, s))
            .collect()),
        _ => sets
            .iter()
            .map(|set| {
                let text = match strategy {
                    Strategy::Top1 => crate::ensemble::top1(set),
                    Strategy::Mbr => mbr_select(set, None)?,
                    Strategy::Rover => rover_merge(set, None)?,
                    Strategy::ScorerSelect => scorer_select(set, &FallbackScorer { client, lm })?,
                    Strategy::Oracle => {
                        let r = refs.get(set.utt_id.as_str()).copied().unwrap_or("");
                        scorer_select(set, &EditDistanceOracle::new(r))?
                    }
                    Strategy::Merge => unreachable!(),
                };
                Ok(row(set, text, strategy))
            })
            .collect(),
    }
}

pub fn transcripts_wer(transcripts: &[FinalTranscript], refs: &BTreeMap<&str, &str>) -> Result<f64> {
    let pairs: Vec<(&str, &str)> = transcripts
        .iter()
        .map(|t| (refs.get(t.utt_id.as_str()).copied().unwrap_or(""), t.text.as_str()))
        .collect();
    word_error_rate(&pairs)
}

pub fn evaluate_ensembles(
    cfg: &RunConfig,
    prep: &Prepared,
    nbest_per_decoder: &[Vec<NBestList>],
    strategies: &[Strategy],
    client: Option<&LlmClient>,
) -> Result<Vec<EnsembleResult>> {
    let sets = candidate_sets(nbest_per_decoder, cfg.ensemble.top_m)?;
    let refs: BTreeMap<&str, &str> = prep.corpus.test.iter().map(|u| (u.id.as_str(), u.text.as_str())).collect();
    strategies
        .iter()
        .map(|&s| {
            let transcripts = apply_strategy(s, &sets, &refs, &prep.lm, client)?;
            Ok(EnsembleResult {
                strategy: s,
                wer: transcripts_wer(&transcripts, &refs)?,
                transcripts,
            })
        })
        .collect()
}

pub struct BenchmarkReport {
    pub runs: Vec<SeedRun>,
    /// Table rows, in print order.
    pub ensembles: Vec<EnsembleResult>,
    pub oracle: EnsembleResult,
}

impl BenchmarkReport {
    pub fn mean_single_wer(&self) -> f64 {
        self.runs.iter().map(|r| r.wer).sum::<f64>() / self.runs.len() as f64
    }

    pub fn min_single_wer(&self) -> f64 {
        self.runs.iter().map(|r| r.wer).fold(f64::INFINITY, f64::min)
    }

    pub fn ensemble(&self, s: Strategy) -> Option<&EnsembleResult> {
        self.ensembles.iter().chain([&self.oracle]).find(|e| e.strategy == s)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<24} {:>8} {:>8}", "decoder", "WER", "PER");
        for r in &self.runs {
            let _ = writeln!(out, "{:<24} {:>8.4} {:>8.4}", format!("seed{}", r.seed), r.wer, r.per);
        }
        for e in &self.ensembles {
            let _ = writeln!(out, "{:<24} {:>8.4} {:>8}", format!("ensemble:{}", e.strategy), e.wer, "-");
        }
        out
    }
}

/// Ensemble rows printed by the benchmark. `merge` is added when an endpoint
/// is configured.
pub fn table_strategies(with_merge: bool) -> Vec<Strategy> {
    let mut s = vec![Strategy::Mbr, Strategy::Rover, Strategy::ScorerSelect];
    if with_merge {
        s.push(Strategy::Merge);
    }
    s
}

/// Trains one decoder per seed (optionally in parallel threads), decodes the
/// test split and evaluates every ensemble strategy. Artifacts go to
/// `out_dir` when given.
pub fn run_benchmark(
    cfg: &RunConfig,
    seeds: &[u64],
    out_dir: Option<&Path>,
    client: Option<&LlmClient>,
    parallel: bool,
) -> Result<BenchmarkReport> {
    if seeds.is_empty() {
        return Err(Error::Config("benchmark needs at least one seed".into()));
    }
    let prep = prepare(cfg)?;
    let runs: Vec<SeedRun> = if parallel {
        let results: Vec<Result<SeedRun>> = std::thread::scope(|s| {
            let handles: Vec<_> = seeds.iter().map(|&seed| {
                let prep = &prep;
                s.spawn(move || run_seed(cfg, prep, seed))
            }).collect();
            handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
        });
        results.into_iter().collect::<Result<_>>()?
    } else {
        seeds.iter().map(|&seed| run_seed(cfg, &prep, seed)).collect::<Result<_>>()?
    };
    let nbest: Vec<Vec<NBestList>> = runs.iter().map(|r| r.nbest.clone()).collect();
    let ensembles = evaluate_ensembles(cfg, &prep, &nbest, &table_strategies(cfg.ensemble.endpoint.is_some()), client)?;
    let oracle = evaluate_ensembles(cfg, &prep, &nbest, &[Strategy::Oracle], None)?.remove(0);
    let report = BenchmarkReport { runs, ensembles, oracle };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("run.cfg"), cfg.to_text())?;
        write_arpa(dir.join("lm.arpa"), &prep.lm)?;
        for r in &report.runs {
            save_checkpoint(dir.join(format!("seed{}.ckpt.json", r.seed)), &r.model)?;
            fs::write(dir.join(format!("seed{}.train.csv", r.seed)), r.log.to_csv())?;
            fs::write(dir.join(format!("seed{}.nbest.jsonl", r.seed)), nbest_to_jsonl(&r.nbest)?)?;
        }
        for e in report.ensembles.iter().chain([&report.oracle]) {
            write_transcripts(dir.join(format!("ensemble.{}.jsonl", e.strategy)), &e.transcripts)?;
        }
        fs::write(dir.join("report.txt"), report.table())?;
    }
    Ok(report)
}
