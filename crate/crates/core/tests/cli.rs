use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
# small and fast
vocab_size = 15
num_train = 30
num_test = 4
max_words = 3
hidden = 16
layers = 1
iterations = 20
eval_every = 0
beam_width = 16
nbest_k = 3
";

fn b2t(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_b2t")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn eval_identical_files_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    let data = dir.path().join("data");
    assert!(b2t(&["gen-data", "--config", p(&cfg), "--out-dir", p(&data)]).status.success());
    let test = data.join("test.jsonl");
    let csv = dir.path().join("m.csv");
    let o = b2t(&["eval", "--ref", p(&test), "--hyp", p(&test), "--out", p(&csv)]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("WER 0.0000"), "{out}");
    assert!(out.contains("PER 0.0000"), "{out}");
    let metrics = std::fs::read_to_string(csv).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 4 + 1);
    assert!(metrics.lines().last().unwrap().starts_with("TOTAL,0,0,0,"));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "noise_sigma = 1.0\nnot_a_key = 3\n").unwrap();
    let o = b2t(&["gen-data", "--config", p(&cfg), "--out-dir", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not_a_key"));
}

#[test]
fn usage_error_exits_2_and_runtime_error_exits_3() {
    assert_eq!(b2t(&["train"]).status.code(), Some(2));
    assert_eq!(b2t(&["frobnicate"]).status.code(), Some(2));
    let o = b2t(&["eval", "--ref", "/nonexistent/a.jsonl", "--hyp", "/nonexistent/b.jsonl"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn pipeline_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("tiny.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    let c = p(&cfg);
    let data = d.join("data");
    let ok = |args: &[&str]| {
        let o = b2t(args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        o
    };
    ok(&["gen-data", "--config", c, "--out-dir", p(&data)]);
    for f in ["train.jsonl", "test.jsonl", "lexicon.txt", "inventory.txt"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let (train, test, lex) = (data.join("train.jsonl"), data.join("test.jsonl"), data.join("lexicon.txt"));
    let lm = d.join("lm.arpa");
    ok(&["train-lm", "--config", c, "--data", p(&train), "--out", p(&lm)]);
    assert!(std::fs::read_to_string(&lm).unwrap().starts_with("\\data\\"));

    let mut nbests = Vec::new();
    for seed in ["1", "2"] {
        let ck = d.join(format!("m{seed}.json"));
        let log = d.join(format!("m{seed}.csv"));
        ok(&["train", "--config", c, "--data", p(&train), "--out", p(&ck), "--log", p(&log), "--seed", seed]);
        assert!(std::fs::read_to_string(&log).unwrap().starts_with("iteration,lr,loss,val_per"));
        assert!(d.join(format!("m{seed}.json.cfg")).exists());
        let nb = d.join(format!("nb{seed}.jsonl"));
        ok(&[
            "decode", "--config", c, "--model", p(&ck), "--data", p(&test), "--lexicon", p(&lex), "--lm", p(&lm), "--out", p(&nb),
            "--decoder-id", &format!("seed{seed}"),
        ]);
        nbests.push(nb);
    }
    for strategy in ["top1", "mbr", "rover", "scorer-select", "merge"] {
        let out = d.join(format!("final.{strategy}.jsonl"));
        ok(&[
            "ensemble", "--config", c, "--nbest", p(&nbests[0]), "--nbest", p(&nbests[1]), "--strategy", strategy, "--lm", p(&lm),
            "--out", p(&out),
        ]);
        let rows = b2t_core::ensemble::read_transcripts(&out).unwrap();
        assert_eq!(rows.len(), 4);
        let o = ok(&["eval", "--ref", p(&test), "--hyp", p(&out)]);
        assert!(stdout(&o).starts_with("WER "));
    }
    let o = b2t(&["ensemble", "--nbest", p(&nbests[0]), "--strategy", "oracle", "--lm", p(&lm), "--out", p(&d.join("x"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn benchmark_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("bench");
    let o = b2t(&["benchmark", "--config", p(&cfg), "--seeds", "2", "--seed-base", "10", "--out-dir", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = stdout(&o);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 1 + 2 + 3, "{table}");
    assert!(lines[0].starts_with("decoder"));
    assert!(lines[1].starts_with("seed10") && lines[2].starts_with("seed11"));
    for (l, s) in lines[3..].iter().zip(["mbr", "rover", "scorer-select"]) {
        assert!(l.starts_with(&format!("ensemble:{s} ")), "{l}");
    }
    assert_eq!(std::fs::read_to_string(out.join("report.txt")).unwrap(), table);
    for f in ["run.cfg", "lm.arpa", "seed10.ckpt.json", "seed11.nbest.jsonl", "ensemble.mbr.jsonl", "ensemble.oracle.jsonl"] {
        assert!(out.join(f).exists(), "{f}");
    }
}
