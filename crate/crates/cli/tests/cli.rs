use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};
use uniqsync::corpus::{build_vocabulary, encode, type_token_curve, TokenMode};
use uniqsync::embed_sync::complexity_plan;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn uniqsync(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uniqsync"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = uniqsync(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn stats_curve_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("tiny.txt");
    let text = "The cat sat. The dog sat, too! A cat and a dog.";
    fs::write(&corpus, text).unwrap();
    let out = tmp.path().join("out");
    ok(&out, &["stats", corpus.to_str().unwrap(), "--checkpoints", "1,2,4,8,16"]);
    let vocab = build_vocabulary(text.as_bytes(), TokenMode::Word, usize::MAX).unwrap();
    let curve = type_token_curve(&encode(text.as_bytes(), &vocab).unwrap(), &[1, 2, 4, 8, 16]).unwrap();
    assert_eq!(fs::read_to_string(out.join("curve.csv")).unwrap(), curve.to_csv());
    assert_eq!(fs::read_to_string(out.join("vocab.tsv")).unwrap(), vocab.to_tsv());

    let manifest = json(&out.join("manifest.json"));
    let digest = hex::encode(Sha256::digest(text.as_bytes()));
    assert_eq!(manifest["inputs"][0]["sha256"], digest.as_str());
    for f in manifest["outputs"].as_array().unwrap() {
        let name = f.as_str().unwrap();
        assert!(!Path::new(name).is_absolute());
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn stats_errors_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    let o = uniqsync(tmp.path(), &["stats", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty"));

    let missing = tmp.path().join("nope.txt");
    let o = uniqsync(tmp.path(), &["stats", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.txt"));
}

#[test]
fn fit_recovers_planted_law() {
    let tmp = tempfile::tempdir().unwrap();
    let curve = tmp.path().join("curve.csv");
    let mut text = String::from("n,u\n");
    for n in [100u64, 10_000, 1_000_000] {
        text.push_str(&format!("{n},{}\n", 2 * (n as f64).sqrt() as u64));
    }
    fs::write(&curve, text).unwrap();
    let out = tmp.path().join("out");
    ok(&out, &["fit", curve.to_str().unwrap()]);
    let fit = json(&out.join("fit.json"));
    assert!((fit["alpha"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((fit["coeff"].as_f64().unwrap() - 2.0).abs() < 1e-9);
}

#[test]
fn plan_matches_library_and_worked_example() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = ok(tmp.path(), &["plan"]);
    let plan: Value = serde_json::from_str(&stdout).unwrap();
    let gb = |k: &str| plan[k].as_f64().unwrap() / 1e9;
    assert!((gb("baseline_bytes") / 35.2 - 1.0).abs() <= 0.01);
    assert!((gb("unique_grad_bytes") / 0.137 - 1.0).abs() <= 0.02);

    let one: Value = serde_json::from_str(&ok(tmp.path(), &["plan", "--g", "1", "--k", "1", "--d", "1"])).unwrap();
    assert!(one["saving_factor"].as_f64().unwrap().is_finite());

    for (g, k, d, alpha) in [(3u64, 70u64, 9u64, 0.3), (64, 1024, 512, 0.9), (7, 5, 2, 1.0)] {
        let args = ["plan", "--g", &g.to_string(), "--k", &k.to_string(), "--d", &d.to_string(), "--alpha", &alpha.to_string()];
        let want = serde_json::to_string_pretty(&serde_json::to_value(complexity_plan(g, k, d, alpha, 4, 4).unwrap()).unwrap()).unwrap();
        assert_eq!(ok(tmp.path(), &args), want + "\n");
    }
    assert_eq!(uniqsync(tmp.path(), &["plan", "--alpha", "1.5"]).status.code(), Some(2));
}

fn totals(out: &Path, path: &str) -> Value {
    json(&out.join("simulate.json"))["totals"][path].clone()
}

#[test]
fn simulate_pairs_and_codec() {
    let tmp = tempfile::tempdir().unwrap();
    let base = ["simulate", "--g", "8", "--k", "128", "--d", "8", "--vocab", "5000", "--zipf-s", "1.1"];
    let b = tmp.path().join("b");
    let u = tmp.path().join("u");
    ok(&b, &[&base[..], &["--path", "baseline"]].concat());
    ok(&u, &[&base[..], &["--path", "unique"]].concat());
    let sent = |t: Value| t["gradient_sent"].as_u64().unwrap();
    assert!(sent(totals(&u, "unique")) < sent(totals(&b, "baseline")));

    let one = tmp.path().join("one");
    ok(&one, &["simulate", "--g", "1", "--k", "64", "--d", "4", "--vocab", "1000"]);
    assert_eq!(sent(totals(&one, "unique")), 0);
    assert_eq!(sent(totals(&one, "baseline")), 0);

    let half = tmp.path().join("half");
    ok(&half, &[&base[..], &["--compress", "fp16:512"]].concat());
    let full = tmp.path().join("full");
    ok(&full, &base);
    for p in ["baseline", "unique"] {
        assert_eq!(2 * sent(totals(&half, p)), sent(totals(&full, p)), "{p}");
        assert_eq!(totals(&half, p)["index_sent"], totals(&full, p)["index_sent"]);
    }
    let report = json(&full.join("simulate.json"));
    assert!(report["steps"][0]["max_rel_diff"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn train_small_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("a");
    let cfg = configs().join("small.conf");
    ok(&out, &["train", cfg.to_str().unwrap()]);
    let report = json(&out.join("report.json"));
    let ppl: Vec<f64> = report["epochs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["eval"]["ppl"].as_f64().unwrap())
        .collect();
    assert!(ppl.windows(2).all(|w| w[1] < w[0]), "{ppl:?}");
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("step,ce,ppl,bpc,bytes_total\n"));

    let seeds = json(&out.join("seeds.json"));
    assert_eq!(seeds["group_count"], 4);

    let same = tmp.path().join("same");
    ok(&same, &["train", cfg.to_str().unwrap(), "--seed-policy", "same", "--compress", "fp16:512"]);
    assert_eq!(json(&same.join("seeds.json"))["group_count"], 1);
    assert_eq!(json(&same.join("manifest.json"))["config"]["compression"], "fp16:512");
    let traffic = |d: &Path| json(&d.join("report.json"))["traffic"]["output_gradient"].as_u64().unwrap();
    assert!(traffic(&same) < traffic(&out));

    let again = tmp.path().join("b");
    ok(&again, &["train", cfg.to_str().unwrap()]);
    assert_eq!(csv, fs::read_to_string(again.join("metrics.csv")).unwrap());
}

#[test]
fn train_rejects_unknown_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.conf");
    fs::write(&cfg, "g = 2\nwarmup = 10\n").unwrap();
    let o = uniqsync(tmp.path(), &["train", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warmup"));
}

#[test]
fn text_corpus_config_resolves_relative_path() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("cfg");
    fs::create_dir(&dir).unwrap();
    let words: String = (0..3000).map(|i| format!("w{} ", (i * i) % 97)).collect();
    fs::write(tmp.path().join("words.txt"), words).unwrap();
    fs::write(dir.join("t.conf"), "g = 2\nk = 16\nc = 4\nd = 4\nvocab_size = 50\ns = 10\nepochs = 1\ncorpus = file:../words.txt\n").unwrap();
    let out = tmp.path().join("out");
    ok(&out, &["train", dir.join("t.conf").to_str().unwrap()]);
    assert_eq!(json(&out.join("manifest.json"))["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn every_command_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("c.txt");
    fs::write(&corpus, "one two three two one four five two one six").unwrap();
    let curve = tmp.path().join("curve.csv");
    fs::write(&curve, "n,u\n1,1\n10,4\n100,12\n").unwrap();
    let small = configs().join("small.conf");
    let runs: Vec<Vec<&str>> = vec![
        vec!["stats", corpus.to_str().unwrap()],
        vec!["fit", curve.to_str().unwrap()],
        vec!["plan"],
        vec!["simulate", "--g", "4", "--k", "64", "--d", "4", "--vocab", "2000", "--steps", "2"],
        vec!["train", small.to_str().unwrap()],
        vec!["bench", "--g-list", "1,2,4", "--k", "32", "--d", "4", "--vocab", "1000"],
    ];
    for args in runs {
        let a = tmp.path().join("a");
        let b = tmp.path().join("b");
        let seeded = [&["--seed", "7"][..], &args[..]].concat();
        let out_a = ok(&a, &seeded);
        let out_b = ok(&b, &seeded);
        assert_eq!(out_a, out_b, "{args:?}");
        assert_eq!(dir_snapshot(&a), dir_snapshot(&b), "{args:?}");
        fs::remove_dir_all(&a).unwrap();
        fs::remove_dir_all(&b).unwrap();
    }
}

#[test]
fn schedulers_produce_identical_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("s");
    let p = tmp.path().join("p");
    let args = ["simulate", "--g", "4", "--k", "64", "--d", "4", "--vocab", "2000", "--steps", "2"];
    ok(&s, &[&args[..], &["--scheduler", "sequential"]].concat());
    ok(&p, &[&args[..], &["--scheduler", "parallel"]].concat());
    assert_eq!(fs::read(s.join("trace.jsonl")).unwrap(), fs::read(p.join("trace.jsonl")).unwrap());
}
