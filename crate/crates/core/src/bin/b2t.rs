//! Command-line driver. Exit codes: 0 success, 2 usage or configuration
//! error, 3 runtime error.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use b2t_core::alphabet::{phoneme_id, write_inventory};
use b2t_core::config::RunConfig;
use b2t_core::data::{generate_corpus, load_lexicon, read_dataset, write_dataset, write_lexicon, Synthesizer};
use b2t_core::decode::{write_nbest, read_nbest, LexiconTrie};
use b2t_core::ensemble::{candidate_sets, write_transcripts, Strategy};
use b2t_core::llm_client::LlmClient;
use b2t_core::lm::{parse_arpa, train_ngram, write_arpa};
use b2t_core::metrics::{corpus_error_rate, error_report, UtteranceErrors};
use b2t_core::nn::{load_checkpoint, save_checkpoint, train};
use b2t_core::pipeline::{apply_strategy, decode_utterance, run_benchmark};
use b2t_core::{Error, Result};

#[derive(Parser)]
#[command(name = "b2t", version, about = "Synthetic neural-feature to text decoding")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corpus: train/test JSONL, lexicon, inventory.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train an ARPA n-gram LM on the texts of a dataset.
    TrainLm {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a decoder; writes a checkpoint and a CSV training log.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Beam-decode a dataset into N-best JSONL.
    Decode {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        lm: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "decoder0")]
        decoder_id: String,
    },
    /// Merge N-best files from several decoders into final transcripts.
    Ensemble {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "nbest", required = true)]
        nbest: Vec<PathBuf>,
        /// top1 | mbr | rover | scorer-select | merge
        #[arg(long, default_value = "mbr")]
        strategy: String,
        #[arg(long)]
        lm: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score hypotheses against references; prints pooled WER (and PER when
    /// both sides carry phonemes).
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        /// Per-utterance metrics CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline over K seeds; prints per-seed and ensemble WER.
    Benchmark {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        seed_base: u64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Train the seeds in parallel threads.
        #[arg(long)]
        parallel: bool,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

/// Writes `cfg` next to an output artifact as `<out>.cfg`.
fn echo_config(out: &Path, cfg: &RunConfig) -> Result<()> {
    let mut name = out.as_os_str().to_owned();
    name.push(".cfg");
    fs::write(PathBuf::from(name), cfg.to_text())?;
    Ok(())
}

struct EvalRow {
    text: String,
    phonemes: Option<Vec<usize>>,
}

/// Reads `{id|utt_id, text, phonemes?}` records. Only the first record of each
/// id is kept, so N-best files yield their top hypothesis.
fn read_eval_rows(path: &Path) -> Result<(Vec<String>, BTreeMap<String, EvalRow>)> {
    let mut order = Vec::new();
    let mut rows = BTreeMap::new();
    for (i, line) in BufReader::new(fs::File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: m.to_string(),
        };
        let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| bad(&e.to_string()))?;
        let id = v
            .get("utt_id")
            .or_else(|| v.get("id"))
            .and_then(|x| x.as_str())
            .ok_or_else(|| bad("missing `id`/`utt_id`"))?
            .to_string();
        let text = v.get("text").and_then(|x| x.as_str()).ok_or_else(|| bad("missing `text`"))?.to_string();
        let phonemes = match v.get("phonemes").and_then(|x| x.as_array()) {
            Some(a) => Some(
                a.iter()
                    .map(|s| s.as_str().ok_or_else(|| bad("phoneme is not a string")).and_then(|s| phoneme_id(s)))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        if !rows.contains_key(&id) {
            order.push(id.clone());
            rows.insert(id, EvalRow { text, phonemes });
        }
    }
    Ok((order, rows))
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenData { config, out_dir } => {
            let cfg = load_config(&config)?;
            let corpus = generate_corpus(&cfg.corpus, &Synthesizer::new(cfg.synth.clone())?)?;
            fs::create_dir_all(&out_dir)?;
            write_dataset(out_dir.join("train.jsonl"), &corpus.train)?;
            write_dataset(out_dir.join("test.jsonl"), &corpus.test)?;
            write_lexicon(out_dir.join("lexicon.txt"), &corpus.lexicon)?;
            write_inventory(out_dir.join("inventory.txt"))?;
            fs::write(out_dir.join("run.cfg"), cfg.to_text())?;
            println!(
                "wrote {} train / {} test utterances, {} words to {}",
                corpus.train.len(),
                corpus.test.len(),
                corpus.lexicon.len(),
                out_dir.display()
            );
        }
        Cmd::TrainLm { config, data, out } => {
            let cfg = load_config(&config)?;
            let utts = read_dataset(&data)?;
            let texts: Vec<&str> = utts.iter().map(|u| u.text.as_str()).collect();
            let lm = train_ngram(&texts, cfg.lm)?;
            write_arpa(&out, &lm)?;
            echo_config(&out, &cfg)?;
            println!("wrote {}-gram LM with {} words to {}", lm.max_order(), lm.vocab().len(), out.display());
        }
        Cmd::Train { config, data, out, log, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            let utts = read_dataset(&data)?;
            let (model, tlog) = train(&utts, &cfg.train)?;
            save_checkpoint(&out, &model)?;
            echo_config(&out, &cfg)?;
            if let Some(l) = log {
                fs::write(l, tlog.to_csv())?;
            }
            if let Some(r) = tlog.rows.last() {
                println!("iteration {} loss {:.4} val_per {}", r.iteration, r.loss, r.val_per.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()));
            }
        }
        Cmd::Decode {
            config,
            model,
            data,
            lexicon,
            lm,
            out,
            decoder_id,
        } => {
            let cfg = load_config(&config)?;
            let model = load_checkpoint(&model)?;
            let utts = read_dataset(&data)?;
            let trie = LexiconTrie::new(&load_lexicon(&lexicon)?)?;
            let lm = parse_arpa(&lm)?;
            let mut lists = Vec::with_capacity(utts.len());
            for u in &utts {
                lists.push(decode_utterance(&model, u, &trie, &lm, &cfg, &decoder_id)?.0);
            }
            write_nbest(&out, &lists)?;
            echo_config(&out, &cfg)?;
            println!("decoded {} utterances to {}", lists.len(), out.display());
        }
        Cmd::Ensemble {
            config,
            nbest,
            strategy,
            lm,
            out,
        } => {
            let cfg = load_config(&config)?;
            let strategy: Strategy = strategy.parse()?;
            if strategy == Strategy::Oracle {
                return Err(Error::Config("the oracle strategy needs references; use benchmark".into()));
            }
            let per_decoder = nbest.iter().map(read_nbest).collect::<Result<Vec<_>>>()?;
            let sets = candidate_sets(&per_decoder, cfg.ensemble.top_m)?;
            let lm = parse_arpa(&lm)?;
            let client = match &cfg.ensemble.endpoint {
                Some(ep) => Some(LlmClient::new(ep.clone())?),
                None => None,
            };
            let rows = apply_strategy(strategy, &sets, &BTreeMap::new(), &lm, client.as_ref())?;
            write_transcripts(&out, &rows)?;
            echo_config(&out, &cfg)?;
            println!("merged {} utterances with {} to {}", rows.len(), strategy, out.display());
        }
        Cmd::Eval { reference, hyp, out } => {
            let (order, refs) = read_eval_rows(&reference)?;
            let (_, hyps) = read_eval_rows(&hyp)?;
            let mut rows = Vec::with_capacity(order.len());
            let mut phone_pairs = Vec::new();
            for id in &order {
                let r = &refs[id];
                let h = hyps.get(id);
                rows.push(UtteranceErrors::from_texts(id, &r.text, h.map(|h| h.text.as_str()).unwrap_or("")));
                if let (Some(rp), Some(hp)) = (&r.phonemes, h.and_then(|h| h.phonemes.as_ref())) {
                    phone_pairs.push((rp.clone(), hp.clone()));
                }
            }
            let (csv, wer) = error_report(&rows)?;
            if let Some(o) = out {
                fs::write(o, csv)?;
            }
            println!("WER {wer:.4}");
            if !phone_pairs.is_empty() && phone_pairs.len() == order.len() {
                println!("PER {:.4}", corpus_error_rate(&phone_pairs)?);
            }
        }
        Cmd::Benchmark {
            config,
            seeds,
            seed_base,
            out_dir,
            parallel,
        } => {
            let cfg = load_config(&config)?;
            let client = match &cfg.ensemble.endpoint {
                Some(ep) => Some(LlmClient::new(ep.clone())?),
                None => None,
            };
            let seed_list: Vec<u64> = (seed_base..seed_base + seeds).collect();
            let report = run_benchmark(&cfg, &seed_list, out_dir.as_deref(), client.as_ref(), parallel)?;
            print!("{}", report.table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
