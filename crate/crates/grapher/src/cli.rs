//! Command-line surface: `gen-corpus`, `train`, `infer`, `score` and
//! `inspect-attention`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use grapher_core::corpus::{generate_corpus, Example};
use grapher_core::eval::{count_matches, score_corpus, MatchCounts, TripleScores};
use grapher_core::model::Prepared;
use grapher_core::train::Trainer;
use grapher_core::{GrapherModel, NodeMode};

use crate::checkpoint::Checkpoint;
use crate::config::{parse_corpus_spec, RunConfig};
use crate::dataset::{examples_to_records, read_examples, read_records, render_jsonl, write_atomic, Record};
use crate::error::{CliError, CliResult};
use crate::kv::KvFile;
use crate::report::{render_kv, render_tsv};

#[derive(Debug, Parser)]
#[command(name = "grapher", version, about = "Text to knowledge graph: nodes first, then edges")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic train/dev/test corpus.
    GenCorpus {
        /// Corpus spec (key = value file).
        #[arg(long)]
        spec: PathBuf,
        /// Output directory; train.jsonl, dev.jsonl and test.jsonl are written there.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model and write the best-dev checkpoint to OUT and the latest to OUT.latest.
    Train {
        /// Run config (key = value file); optional with --resume.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory holding train.jsonl and optionally dev.jsonl.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint (usually OUT.latest).
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Config overrides, `key=value`; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Extract a graph for every text in a JSONL file.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score candidate graphs against references (line-aligned JSONL files).
    Score {
        #[arg(long)]
        cand: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Tab-separated report; key=value lines always go to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump node-query cross-attention over the input tokens (query mode).
    InspectAttention {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long)]
        out: PathBuf,
        /// Decoder layer (default: last).
        #[arg(long)]
        layer: Option<usize>,
        /// Attention head (default: mean over heads).
        #[arg(long)]
        head: Option<usize>,
    },
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => CliError::Usage(String::new()),
        _ => CliError::Usage(e.to_string()),
    })?;
    match cli.command {
        Command::GenCorpus { spec, out, seed } => gen_corpus(&spec, &out, seed, stdout),
        Command::Train {
            config,
            data,
            out,
            resume,
            overrides,
        } => train(config.as_deref(), &data, &out, resume.as_deref(), &overrides, stdout),
        Command::Infer { ckpt, input, out } => infer(&ckpt, &input, &out),
        Command::Score { cand, reference, out } => score(&cand, &reference, out.as_deref(), stdout),
        Command::InspectAttention {
            ckpt,
            text,
            out,
            layer,
            head,
        } => inspect_attention(&ckpt, &text, &out, layer, head),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn emit(stdout: &mut dyn Write, line: &str) -> CliResult<()> {
    stdout
        .write_all(line.as_bytes())
        .map_err(|e| CliError::Data(format!("stdout: {e}")))
}

pub fn gen_corpus(spec_path: &Path, out: &Path, seed: Option<u64>, stdout: &mut dyn Write) -> CliResult<()> {
    let kv = KvFile::parse(&read_text(spec_path)?).map_err(|e| CliError::Usage(format!("{}: {e}", spec_path.display())))?;
    let (spec, spec_seed) = parse_corpus_spec(&kv).map_err(|e| CliError::Usage(format!("{}: {e}", spec_path.display())))?;
    let seed = seed
        .or(spec_seed)
        .ok_or_else(|| CliError::Usage("a seed is required (--seed or `seed` in the spec)".into()))?;
    let corpus = generate_corpus(&spec, seed).map_err(|e| CliError::Usage(format!("{}: {e}", spec_path.display())))?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    for (name, split) in [("train", &corpus.train), ("dev", &corpus.dev), ("test", &corpus.test)] {
        let path = out.join(format!("{name}.jsonl"));
        write_atomic(&path, render_jsonl(&examples_to_records(split)).as_bytes())?;
        emit(stdout, &format!("{name}={} {}\n", split.len(), path.display()))?;
    }
    Ok(())
}

/// Micro-averaged scores of greedy inference against the examples' graphs.
pub fn evaluate_examples(model: &GrapherModel, examples: &[Example]) -> CliResult<TripleScores> {
    let mut total = MatchCounts::default();
    for ex in examples {
        let g = model.infer_graph(&ex.text)?;
        total.add(&count_matches(&g.to_triples().triples, &ex.triples().triples));
    }
    Ok(total.scores())
}

pub fn train(
    config: Option<&Path>,
    data: &Path,
    out: &Path,
    resume: Option<&Path>,
    overrides: &[String],
    stdout: &mut dyn Write,
) -> CliResult<()> {
    let train_set = read_examples(&data.join("train.jsonl"))?;
    let dev_path = data.join("dev.jsonl");
    let dev_set = if dev_path.exists() { read_examples(&dev_path)? } else { Vec::new() };
    if train_set.is_empty() {
        return Err(CliError::Data(format!("{}: no training examples", data.join("train.jsonl").display())));
    }

    let resumed = resume.map(Checkpoint::load).transpose()?;
    let mut kv = match (&resumed, config) {
        (_, Some(path)) => KvFile::parse(&read_text(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?,
        (Some(ck), None) => ck.run.to_kv(),
        (None, None) => return Err(CliError::Usage("train needs --config (or --resume)".into())),
    };
    kv.apply_overrides(overrides).map_err(CliError::Usage)?;
    let run = RunConfig::from_kv(&kv).map_err(CliError::Usage)?;

    let (model, optimizer, mut best) = match resumed {
        Some(ck) => {
            let mut expect = run.model.clone();
            expect.vocab_size = ck.model.config().vocab_size;
            expect.edge_classes = ck.model.config().edge_classes;
            if &expect != ck.model.config() {
                return Err(CliError::Usage("--resume: model settings differ from the checkpoint".into()));
            }
            (ck.model, ck.optimizer, ck.best_dev_f1)
        }
        None => (GrapherModel::for_examples(run.model.clone(), &train_set, run.train.seed)?, None, None),
    };
    let prepared = train_set
        .iter()
        .enumerate()
        .map(|(i, ex)| model.prepare(ex).map_err(|e| CliError::Data(format!("train.jsonl line {}: {e}", i + 1))))
        .collect::<CliResult<Vec<Prepared>>>()?;
    let mut trainer = match optimizer {
        Some(opt) => Trainer::resume(model, opt, prepared, run.train.clone())?,
        None => Trainer::new(model, prepared, run.train.clone())?,
    };

    let latest = {
        let mut p = out.as_os_str().to_owned();
        p.push(".latest");
        PathBuf::from(p)
    };
    let snapshot = |trainer: &Trainer, best: Option<f64>| Checkpoint {
        run: run.clone(),
        model: trainer.model().clone(),
        optimizer: Some(trainer.optimizer().clone()),
        best_dev_f1: best,
    };
    let interval = run.train.eval_interval;
    let mut failure: Option<CliError> = None;
    let evaluates = interval > 0 && !dev_set.is_empty();
    let mut wrote_best = resume.is_some() && out.exists();
    let result = trainer.run(|tr, log| {
        let step = log.step;
        let at_eval = interval > 0 && step % interval == 0;
        if !(at_eval || step == run.train.max_steps) {
            return Ok(true);
        }
        let mut line = format!("step={step} node_loss={:.6} edge_loss={:.6}", log.loss.node_loss, log.loss.edge_loss);
        let step_result = (|| -> CliResult<()> {
            let mut improved = false;
            if at_eval && !dev_set.is_empty() {
                let f1 = evaluate_examples(tr.model(), &dev_set)?.exact.f1;
                line.push_str(&format!(" dev_exact_f1={f1:.6}"));
                if best.is_none_or(|b| f1 > b) {
                    best = Some(f1);
                    improved = true;
                }
            }
            let ck = snapshot(tr, best);
            if improved || !evaluates || !wrote_best {
                ck.save(out)?;
                wrote_best = true;
            }
            ck.save(&latest)?;
            line.push('\n');
            emit(stdout, &line)
        })();
        match step_result {
            Ok(()) => Ok(true),
            Err(e) => {
                failure = Some(e);
                Ok(false)
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    result?;
    if !latest.exists() || !wrote_best {
        // no step ran (already at max_steps); still leave valid files
        let ck = snapshot(&trainer, best);
        ck.save(&latest)?;
        if !wrote_best {
            ck.save(out)?;
        }
    }
    Ok(())
}

pub fn infer(ckpt: &Path, input: &Path, out: &Path) -> CliResult<()> {
    let ck = Checkpoint::load(ckpt)?;
    let records = read_records(input)?;
    let mut outputs = Vec::with_capacity(records.len());
    for r in &records {
        let g = ck.model.infer_graph(&r.text)?;
        outputs.push(Record::from_graph(&r.text, &g));
    }
    write_atomic(out, render_jsonl(&outputs).as_bytes())
}

pub fn score(cand: &Path, reference: &Path, out: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
    let c = read_records(cand)?;
    let r = read_records(reference)?;
    if c.len() != r.len() {
        return Err(CliError::Data(format!(
            "{} has {} lines but {} has {}",
            cand.display(),
            c.len(),
            reference.display(),
            r.len()
        )));
    }
    let ct: Vec<_> = c.iter().map(Record::triples).collect();
    let rt: Vec<_> = r.iter().map(Record::triples).collect();
    let scores = score_corpus(ct.iter().zip(&rt).map(|(a, b)| (a.as_slice(), b.as_slice())));
    if let Some(path) = out {
        write_atomic(path, render_tsv(&scores).as_bytes())?;
    }
    emit(stdout, &render_kv(&scores))
}

pub fn inspect_attention(ckpt: &Path, text: &str, out: &Path, layer: Option<usize>, head: Option<usize>) -> CliResult<()> {
    let ck = Checkpoint::load(ckpt)?;
    let cfg = ck.model.config();
    if cfg.node_mode != NodeMode::Query {
        return Err(CliError::Usage("inspect-attention needs a query-mode checkpoint (this one uses text nodes)".into()));
    }
    let layer = layer.unwrap_or(cfg.layers - 1);
    if layer >= cfg.layers {
        return Err(CliError::Usage(format!("--layer {layer}: the model has {} layers", cfg.layers)));
    }
    if let Some(h) = head.filter(|&h| h >= cfg.heads) {
        return Err(CliError::Usage(format!("--head {h}: the model has {} heads", cfg.heads)));
    }
    let att = ck.model.dump_cross_attention(text)?;
    let maps: Vec<_> = att
        .maps
        .iter()
        .filter(|m| m.layer == layer && head.is_none_or(|h| m.head == h))
        .collect();
    let rows = maps[0].weights.len();
    let cols = att.tokens.len();
    let mut tsv = String::from("slot");
    for tok in &att.tokens {
        tsv.push('\t');
        tsv.push_str(tok);
    }
    tsv.push('\n');
    for r in 0..rows {
        tsv.push_str(&r.to_string());
        for c in 0..cols {
            let w = maps.iter().map(|m| m.weights[r][c]).sum::<f64>() / maps.len() as f64;
            tsv.push_str(&format!("\t{w}"));
        }
        tsv.push('\n');
    }
    write_atomic(out, tsv.as_bytes())
}
