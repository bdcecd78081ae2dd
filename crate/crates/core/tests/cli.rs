mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lar_core::config::PipelineConfig;
use lar_core::corpus::TokenizerMode;
use lar_core::distill::LogitMatrix;
use lar_core::manifest::{manifest_path, RunManifest};
use lar_core::vocab::LatentVocabulary;
use serde_json::json;

use common::*;

fn lar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lar"))
        .args(args)
        .env_remove("LAR_PRESET_DIR")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = lar(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn preset_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(format!("{name}.toml"))
}

fn write_corpus(path: &Path, trajectories: &[Vec<String>]) {
    let mut text = String::new();
    for (i, steps) in trajectories.iter().enumerate() {
        let steps: Vec<_> = steps.iter().map(|a| json!({"observation": "obs", "action": a})).collect();
        text.push_str(&json!({"id": format!("t{i}"), "steps": steps}).to_string());
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

fn planted(dir: &Path, seed: u64) -> (PathBuf, Vec<Vec<String>>) {
    let (actions, _) = planted_actions(&mut rng(seed), 12_000, 0.3, 4);
    let path = dir.join("corpus.jsonl");
    write_corpus(&path, &actions);
    (path, actions)
}

#[test]
fn no_arguments_prints_usage_and_exits_1() {
    let out = lar(&[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_subcommand_or_flag_exits_1() {
    assert_eq!(lar(&["mine"]).status.code(), Some(1));
    assert_eq!(lar(&["rate", "--pairs", "x", "--bogus"]).status.code(), Some(1));
    assert_eq!(lar(&["--help"]).status.code(), Some(0));
    assert_eq!(lar(&["--version"]).status.code(), Some(0));
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = lar(&["identify", "--preset", "kodcode", "--corpus", "/nonexistent/c.jsonl", "--out", p(&dir.path().join("v.lar"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/c.jsonl"));
}

#[test]
fn identify_matches_the_reference_replay() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, actions) = planted(dir.path(), 1);
    let vocab_path = dir.path().join("v.lar");
    ok(&["identify", "--config", p(&preset_file("kodcode")), "--corpus", p(&corpus), "--out", p(&vocab_path)]);

    let vocab = LatentVocabulary::load(&vocab_path).unwrap();
    let cfg = PipelineConfig::preset("kodcode").unwrap();
    let want = oracle::identify(&actions, &cfg.miner);
    assert!(!want.is_empty());
    assert_eq!(vocab.len(), want.len());
    for (a, w) in vocab.actions().iter().zip(&want) {
        assert_eq!(a.segment.iter().map(|s| s.to_string()).collect::<Vec<_>>(), w.words);
        assert_eq!(a.freq, w.freq);
        assert!((a.entropy_bits - w.entropy).abs() <= 1e-9);
        assert!((a.score - w.score).abs() <= 1e-9);
    }

    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(manifest_path(&vocab_path)).unwrap()).unwrap();
    assert_eq!(manifest.command, "identify");
    assert_eq!(manifest.inputs["corpus"], p(&corpus));
    assert_eq!(manifest.vocab_fingerprint.as_deref(), Some(vocab.fingerprint()));
    assert_eq!(manifest.corpus_digest.as_deref(), vocab.corpus_digest());
    assert_eq!(manifest.config.unwrap()["f_min"], 10);
}

#[test]
fn full_pipeline_round_trips_and_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = planted(dir.path(), 2);
    let run = |tag: &str| -> Vec<Vec<u8>> {
        let v = dir.path().join(format!("v{tag}.lar"));
        let pairs = dir.path().join(format!("p{tag}.jsonl"));
        let distill = dir.path().join(format!("d{tag}.jsonl"));
        let csv = dir.path().join(format!("s{tag}.csv"));
        let rep = dir.path().join(format!("r{tag}.json"));
        ok(&["identify", "--preset", "kodcode", "--corpus", p(&corpus), "--out", p(&v)]);
        ok(&["compress", "--corpus", p(&corpus), "--vocab", p(&v), "--out", p(&pairs)]);
        let verified = ok(&["expand", "--pairs", p(&pairs), "--vocab", p(&v), "--verify"]);
        assert!(verified.contains("verified"));
        ok(&["prep-distill", "--pairs", p(&pairs), "--vocab", p(&v), "--out", p(&distill)]);
        ok(&["sweep", "--corpus", p(&corpus), "--vocab", p(&v), "--ks", "0,1,2,5", "--out", p(&csv)]);
        ok(&["report", "--corpus", p(&corpus), "--preset", "kodcode", "--vocab", p(&v), "--pairs", p(&pairs), "--out", p(&rep)]);
        for out in [&v, &pairs, &distill, &csv, &rep] {
            assert!(manifest_path(out).exists(), "no manifest for {}", out.display());
        }
        [v, pairs, distill, csv, rep].iter().map(|f| fs::read(f).unwrap()).collect()
    };
    let first = run("1");
    let second = run("2");
    assert_eq!(first, second);

    let rate: f64 = ok(&["rate", "--pairs", p(&dir.path().join("p1.jsonl"))]).trim().parse().unwrap();
    // One scaffold of length 4 covers 30% of tokens.
    assert!((rate - (1.0 - 0.3 * 3.0 / 4.0)).abs() < 1e-9, "{rate}");

    let csv = String::from_utf8(first[3].clone()).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,rate,mean_H_lat,replaced_fraction"));
    assert!(lines.next().unwrap().starts_with("0,1,"));

    let first_record: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&first[2]).lines().next().unwrap()).unwrap();
    for key in ["teacher_tokens", "student_tokens", "mask_pairs"] {
        assert!(first_record.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn expand_writes_trajectories_that_reload_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = planted(dir.path(), 3);
    let v = dir.path().join("v.lar");
    let pairs = dir.path().join("p.jsonl");
    let back = dir.path().join("back.jsonl");
    ok(&["identify", "--preset", "kodcode", "--corpus", p(&corpus), "--out", p(&v)]);
    ok(&["compress", "--corpus", p(&corpus), "--vocab", p(&v), "--out", p(&pairs)]);
    ok(&["expand", "--pairs", p(&pairs), "--vocab", p(&v), "--out", p(&back)]);
    let a = lar_core::corpus::load_corpus(&corpus, TokenizerMode::Words).unwrap();
    let b = lar_core::corpus::load_corpus(&back, TokenizerMode::Words).unwrap();
    assert_eq!(a.digest(), b.digest());
}

#[test]
fn compress_refuses_foreign_vocabulary_without_flag() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = planted(dir.path(), 4);
    let other = dir.path().join("other.jsonl");
    write_corpus(&other, &planted_actions(&mut rng(5), 12_000, 0.3, 4).0);
    let v = dir.path().join("v.lar");
    let pairs = dir.path().join("p.jsonl");
    ok(&["identify", "--preset", "kodcode", "--corpus", p(&corpus), "--out", p(&v)]);

    let refused = lar(&["compress", "--corpus", p(&other), "--vocab", p(&v), "--out", p(&pairs)]);
    assert_eq!(refused.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("fingerprint mismatch"));
    assert!(!pairs.exists());

    ok(&["compress", "--corpus", p(&other), "--vocab", p(&v), "--out", p(&pairs), "--allow-cross-corpus"]);
    ok(&["expand", "--pairs", p(&pairs), "--vocab", p(&v), "--verify"]);
}

#[test]
fn strict_and_lenient_parsing() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    let mut text = String::new();
    for i in 0..30 {
        text.push_str(&json!({"id": format!("t{i}"), "steps": [{"observation": "", "action": "open the page then click ok"}]}).to_string());
        text.push('\n');
    }
    text.push_str("{not json\n");
    fs::write(&corpus, text).unwrap();
    let v = dir.path().join("v.lar");

    let strict = lar(&["identify", "--preset", "kodcode", "--corpus", p(&corpus), "--out", p(&v)]);
    assert_eq!(strict.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&strict.stderr).contains("line 31"));

    let lenient = lar(&["--lenient", "identify", "--preset", "kodcode", "--corpus", p(&corpus), "--out", p(&v)]);
    assert_eq!(lenient.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("31"));
    assert!(!LatentVocabulary::load(&v).unwrap().is_empty());
}

#[test]
fn preset_directory_override() {
    let dir = tempfile::tempdir().unwrap();
    let presets = dir.path().join("presets");
    fs::create_dir(&presets).unwrap();
    fs::write(
        presets.join("tiny.toml"),
        "n = [2, 2]\nf_min = 2\nH_max = 10.0\nK = 1\nrho = 0.7\ntokenizer = \"words\"\n",
    )
    .unwrap();
    let corpus = dir.path().join("c.jsonl");
    write_corpus(&corpus, &[vec!["go home".into(), "go home".into(), "stay in".into()]]);
    let v = dir.path().join("v.lar");

    let missing = lar(&["identify", "--preset", "tiny", "--corpus", p(&corpus), "--out", p(&v)]);
    assert_eq!(missing.status.code(), Some(1));

    let out = Command::new(env!("CARGO_BIN_EXE_lar"))
        .args(["identify", "--preset", "tiny", "--corpus", p(&corpus), "--out", p(&v)])
        .env("LAR_PRESET_DIR", &presets)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let vocab = LatentVocabulary::load(&v).unwrap();
    assert_eq!(vocab.len(), 1);
    assert_eq!(vocab.actions()[0].segment.join(" "), "go home");
}

#[test]
fn vocab_show_and_head() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = planted(dir.path(), 6);
    let v = dir.path().join("v.lar");
    let head = dir.path().join("head.lar");
    ok(&["--threads", "2", "identify", "--preset", "kodcode", "--corpus", p(&corpus), "--out", p(&v)]);
    let shown = ok(&["vocab", "show", "--vocab", p(&v)]);
    assert!(shown.contains("\u{27E8}LAR_0\u{27E9}"));
    assert!(shown.contains("s0 s1 s2 s3"));
    ok(&["vocab", "head", "--vocab", p(&v), "--k", "1", "--out", p(&head)]);
    let full = LatentVocabulary::load(&v).unwrap();
    assert_eq!(LatentVocabulary::load(&head).unwrap(), full.prefix(1));
    let printed = ok(&["vocab", "head", "--vocab", p(&v), "--k", "0"]);
    assert!(!printed.contains("LAR_0"));
}

#[test]
fn corrupted_vocabulary_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = planted(dir.path(), 7);
    let v = dir.path().join("v.lar");
    ok(&["identify", "--preset", "kodcode", "--corpus", p(&corpus), "--out", p(&v)]);
    let text = fs::read_to_string(&v).unwrap().replacen("s0", "sX", 1);
    fs::write(&v, text).unwrap();
    let out = lar(&["vocab", "show", "--vocab", p(&v)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn kl_loss_reads_logit_containers() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, rows: &[Vec<f64>]| {
        let path = dir.path().join(name);
        let mut f = fs::File::create(&path).unwrap();
        LogitMatrix::from_rows(rows).unwrap().write_to(&mut f).unwrap();
        path
    };
    let t = write("t.bin", &[vec![2.0, 0.0]]);
    let s = write("s.bin", &[vec![0.0, 0.0]]);
    let nats: f64 = ok(&["kl-loss", "--teacher", p(&t), "--student", p(&s)]).trim().parse().unwrap();
    assert!((nats - 0.1109).abs() < 1e-3);
    let bits: f64 = ok(&["kl-loss", "--teacher", p(&t), "--student", p(&s), "--bits"]).trim().parse().unwrap();
    assert!((bits - nats / std::f64::consts::LN_2).abs() < 1e-12);
    let scaled: f64 = ok(&["kl-loss", "--teacher", p(&t), "--student", p(&s), "--scale-tau-squared"]).trim().parse().unwrap();
    assert!((scaled - 4.0 * nats).abs() < 1e-12);

    let wide = write("w.bin", &[vec![0.0, 0.0, 0.0]]);
    assert_eq!(lar(&["kl-loss", "--teacher", p(&t), "--student", p(&wide)]).status.code(), Some(1));
}
