//! The `grapher` binary end to end on a tiny corpus and model.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use grapher::checkpoint::Checkpoint;
use grapher::config::parse_corpus_spec;
use grapher::dataset::read_records;
use grapher::kv::KvFile;
use grapher::report::parse_kv;
use grapher_core::corpus::CorpusSpec;
use grapher_core::eval::score_corpus;

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn grapher(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grapher")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = grapher(args);
    assert!(
        out.status.success(),
        "grapher {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small corpus spec derived from the shipped demo spec.
fn small_spec(dir: &Path, overrides: &[&str]) -> PathBuf {
    let mut kv = KvFile::parse(&fs::read_to_string(repo_file("configs/corpus.kv")).unwrap()).unwrap();
    let mut all = vec!["train=12", "dev=4", "test=4"];
    all.extend_from_slice(overrides);
    kv.apply_overrides(&all.iter().map(|s| s.to_string()).collect::<Vec<_>>()).unwrap();
    let path = dir.join("spec.kv");
    fs::write(&path, kv.render()).unwrap();
    path
}

const TINY: &[&str] = &[
    "--set", "d_model=8", "--set", "d_ff=8", "--set", "layers=1", "--set", "edge_hidden=8",
    "--set", "batch_size=2", "--set", "eval_interval=5",
];

fn train_args<'a>(config: &'a str, data: &'a Path, out: &'a Path, extra: &[&'a str]) -> Vec<&'a str> {
    let mut a = vec!["train", "--config", config, "--data", p(data), "--out", p(out)];
    a.extend_from_slice(TINY);
    a.extend_from_slice(extra);
    a
}

fn train_config() -> String {
    repo_file("configs/train.kv").to_str().unwrap().to_string()
}

#[test]
fn shipped_corpus_spec_is_the_demo_spec() {
    let kv = KvFile::parse(&fs::read_to_string(repo_file("configs/corpus.kv")).unwrap()).unwrap();
    let (spec, seed) = parse_corpus_spec(&kv).unwrap();
    assert_eq!(spec, CorpusSpec::demo());
    assert_eq!(seed, Some(7));
}

#[test]
fn gen_corpus_is_deterministic_and_checks_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path(), &[]);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["gen-corpus", "--spec", p(&spec), "--out", p(&a), "--seed", "3"]);
    ok(&["gen-corpus", "--spec", p(&spec), "--out", p(&b), "--seed", "3"]);
    for split in ["train", "dev", "test"] {
        let x = fs::read(a.join(format!("{split}.jsonl"))).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.join(format!("{split}.jsonl"))).unwrap());
    }
    let too_big = small_spec(dir.path(), &["max_nodes=9"]);
    let out = grapher(&["gen-corpus", "--spec", p(&too_big), "--out", p(&a)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("capacity"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(grapher(&["train"]).status.code(), Some(1));
    assert_eq!(grapher(&["no-such-command"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.kv");
    fs::write(&cfg, "lr = 0.1\n").unwrap();
    let spec = small_spec(dir.path(), &[]);
    ok(&["gen-corpus", "--spec", p(&spec), "--out", p(dir.path()), "--seed", "1"]);
    let out = grapher(&["train", "--config", p(&cfg), "--data", p(dir.path()), "--out", p(&dir.path().join("m"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn train_resume_infer_score_round() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let cfg = train_config();
    ok(&["gen-corpus", "--spec", p(&small_spec(dir.path(), &[])), "--out", p(&data), "--seed", "5"]);

    // uninterrupted 10 steps vs 5 + resumed 5
    let full = dir.path().join("full.grph");
    let log_full = ok(&train_args(&cfg, &data, &full, &["--set", "max_steps=10"]));
    for key in ["step=5 ", "node_loss=", "edge_loss=", "dev_exact_f1="] {
        assert!(log_full.contains(key), "{log_full}");
    }
    let half = dir.path().join("half.grph");
    ok(&train_args(&cfg, &data, &half, &["--set", "max_steps=5"]));
    let half_latest = dir.path().join("half.grph.latest");
    let log_resumed = ok(&["train", "--data", p(&data), "--out", p(&half), "--resume", p(&half_latest), "--set", "max_steps=10"]);
    let tail = |log: &str| log.lines().filter(|l| l.starts_with("step=10 ")).map(String::from).collect::<Vec<_>>();
    assert_eq!(tail(&log_full), tail(&log_resumed));
    assert_eq!(fs::read(dir.path().join("full.grph.latest")).unwrap(), fs::read(&half_latest).unwrap());

    // inference is deterministic and parses back
    let test = data.join("test.jsonl");
    let (o1, o2) = (dir.path().join("o1.jsonl"), dir.path().join("o2.jsonl"));
    ok(&["infer", "--ckpt", p(&full), "--in", p(&test), "--out", p(&o1)]);
    ok(&["infer", "--ckpt", p(&full), "--in", p(&test), "--out", p(&o2)]);
    assert_eq!(fs::read(&o1).unwrap(), fs::read(&o2).unwrap());
    let records = read_records(&o1).unwrap();
    assert_eq!(records.len(), read_records(&test).unwrap().len());
    for r in &records {
        r.to_example().unwrap();
    }
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let o3 = dir.path().join("o3.jsonl");
    ok(&["infer", "--ckpt", p(&full), "--in", p(&empty), "--out", p(&o3)]);
    assert_eq!(fs::read(&o3).unwrap(), b"");

    // score matches the library
    let report = dir.path().join("report.tsv");
    let kv = ok(&["score", "--cand", p(&o1), "--ref", p(&test), "--out", p(&report)]);
    let cand: Vec<_> = read_records(&o1).unwrap().iter().map(|r| r.triples()).collect();
    let refs: Vec<_> = read_records(&test).unwrap().iter().map(|r| r.triples()).collect();
    let lib = score_corpus(cand.iter().zip(&refs).map(|(a, b)| (a.as_slice(), b.as_slice())));
    assert_eq!(parse_kv(&kv), Some(lib));

    let self_kv = ok(&["score", "--cand", p(&test), "--ref", p(&test), "--out", p(&report)]);
    let s = parse_kv(&self_kv).unwrap();
    for (_, prf) in s.rows() {
        assert_eq!((prf.precision, prf.recall, prf.f1), (1.0, 1.0, 1.0));
    }
    let tsv = fs::read_to_string(&report).unwrap();
    let rows: Vec<&str> = tsv.lines().collect();
    assert_eq!(rows[0], "Match\tF1\tPrecision\tRecall");
    assert_eq!(rows[1], "Exact\t1.0000\t1.0000\t1.0000");
    assert!(rows[2].starts_with("Partial\t") && rows[3].starts_with("Strict\t"));

    // text-mode checkpoints have no node queries to inspect
    let out = grapher(&["inspect-attention", "--ckpt", p(&full), "--text", "Ada knows Bob.", "--out", p(&dir.path().join("h.tsv"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn inspect_attention_dumps_row_stochastic_maps() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let cfg = train_config();
    ok(&["gen-corpus", "--spec", p(&small_spec(dir.path(), &[])), "--out", p(&data), "--seed", "5"]);
    let ckpt = dir.path().join("q.grph");
    ok(&train_args(&cfg, &data, &ckpt, &["--set", "max_steps=2", "--set", "node_mode=query"]));
    let text = "Ada Lovelace was born in London.";
    for extra in [&[][..], &["--layer", "0", "--head", "1"][..]] {
        let heat = dir.path().join("heat.tsv");
        let mut args = vec!["inspect-attention", "--ckpt", p(&ckpt), "--text", text, "--out", p(&heat)];
        args.extend_from_slice(extra);
        ok(&args);
        let tsv = fs::read_to_string(&heat).unwrap();
        let mut lines = tsv.lines();
        let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
        let model = Checkpoint::load(&ckpt).unwrap().model;
        let tokens: Vec<&str> = model.net.encode_input(text).into_iter().map(|id| model.vocab().token(id)).collect();
        assert_eq!(header[0], "slot");
        assert_eq!(header[1..], tokens[..]);
        let rows: Vec<Vec<f64>> = lines.map(|l| l.split('\t').skip(1).map(|x| x.parse().unwrap()).collect()).collect();
        assert_eq!(rows.len(), 8);
        for r in &rows {
            assert_eq!(r.len(), header.len() - 1);
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
    let bad = grapher(&["inspect-attention", "--ckpt", p(&ckpt), "--text", text, "--out", p(&dir.path().join("x")), "--layer", "3"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn corrupt_checkpoint_exits_2_with_manifest_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("bad.grph");
    fs::write(&ckpt, b"GRPH1\n\x05\0\0\0\0\0\0\0abc").unwrap();
    let input = dir.path().join("in.jsonl");
    fs::write(&input, "").unwrap();
    let out = grapher(&["infer", "--ckpt", p(&ckpt), "--in", p(&input), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest"));
}

#[test]
fn diverging_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let cfg = train_config();
    ok(&["gen-corpus", "--spec", p(&small_spec(dir.path(), &[])), "--out", p(&data), "--seed", "5"]);
    let out = grapher(&train_args(&cfg, &data, &dir.path().join("m"), &["--set", "max_steps=20", "--set", "lr=1e300"]));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
