//! GRPH1 checkpoint files.
//!
//! ```text
//! "GRPH1\n"            6 bytes
//! manifest length      u64, little endian
//! manifest             UTF-8 key = value text
//! payload              f64 little endian: parameters in manifest order,
//!                      then AdamW first moments, then second moments
//! ```
//!
//! The manifest holds the run config (`config.*`), the vocabulary
//! (`vocab.<i>`), the edge classes (`edge_class.<i>`), one `param.<i> =
//! name d0xd1...` line per tensor, and optionally `optimizer.step` and
//! `best_dev_f1`. Round trips are bit exact.

use std::path::Path;

use grapher_core::tensor::{AdamW, ParamStore, Tensor};
use grapher_core::vocab::Vocab;
use grapher_core::GrapherModel;

use crate::config::RunConfig;
use crate::dataset::write_atomic;
use crate::error::{CliError, CliResult};
use crate::kv::KvFile;

pub const MAGIC: &[u8; 6] = b"GRPH1\n";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub run: RunConfig,
    pub model: GrapherModel,
    pub optimizer: Option<AdamW>,
    /// Best dev Exact F1 seen so far, if the run evaluated on dev.
    pub best_dev_f1: Option<f64>,
}

fn manifest_err(msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("corrupt checkpoint manifest: {msg}"))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut kv = KvFile::default();
        for e in self.run.to_kv().entries {
            kv.set(&format!("config.{}", e.key), &e.value);
        }
        for (i, tok) in self.model.vocab().tokens().iter().enumerate() {
            kv.set(&format!("vocab.{i}"), tok);
        }
        for (i, label) in self.model.edge_labels().iter().enumerate() {
            kv.set(&format!("edge_class.{i}"), label);
        }
        for (id, p) in self.model.params.iter() {
            let dims: Vec<String> = p.value.shape().iter().map(usize::to_string).collect();
            kv.set(&format!("param.{}", id.0), &format!("{} {}", p.name, dims.join("x")));
        }
        if let Some(opt) = &self.optimizer {
            kv.set("optimizer.step", &opt.step_count().to_string());
        }
        if let Some(f1) = self.best_dev_f1 {
            kv.set("best_dev_f1", &f1.to_string());
        }
        let manifest = kv.render();

        let mut out = Vec::with_capacity(14 + manifest.len() + 8 * 3 * self.model.params.numel());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        let mut push = |xs: &[f64]| {
            for x in xs {
                out.extend_from_slice(&x.to_le_bytes());
            }
        };
        for (_, p) in self.model.params.iter() {
            push(p.value.data());
        }
        if let Some(opt) = &self.optimizer {
            let (m, v) = opt.moments();
            m.iter().chain(v).for_each(|x| push(x));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> CliResult<Checkpoint> {
        if bytes.len() < 14 || &bytes[..6] != MAGIC {
            return Err(manifest_err("missing GRPH1 header"));
        }
        let len = u64::from_le_bytes(bytes[6..14].try_into().expect("8 bytes")) as usize;
        let manifest = bytes
            .get(14..14usize.saturating_add(len))
            .ok_or_else(|| manifest_err(format!("declared length {len} exceeds file size {}", bytes.len())))?;
        let manifest = std::str::from_utf8(manifest).map_err(|e| manifest_err(format!("not UTF-8: {e}")))?;
        let kv = KvFile::parse(manifest).map_err(manifest_err)?;

        let mut config = KvFile::default();
        for e in &kv.entries {
            if let Some(k) = e.key.strip_prefix("config.") {
                config.set(k, &e.value);
            }
        }
        let run = RunConfig::from_kv(&config).map_err(manifest_err)?;
        let indexed = |prefix: &str| -> Vec<String> {
            (0..)
                .map_while(|i| kv.get(&format!("{prefix}.{i}")).map(str::to_string))
                .collect()
        };
        let vocab = Vocab::from_tokens(indexed("vocab")).map_err(manifest_err)?;
        let labels = indexed("edge_class");

        let mut payload = &bytes[14 + len..];
        let mut take = |n: usize, what: &str| -> CliResult<Vec<f64>> {
            if payload.len() < n * 8 {
                return Err(manifest_err(format!("payload too short for {what}")));
            }
            let (head, rest) = payload.split_at(n * 8);
            payload = rest;
            Ok(head.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
        };
        let mut params = ParamStore::new();
        for spec in indexed("param") {
            let (name, dims) = spec
                .rsplit_once(' ')
                .ok_or_else(|| manifest_err(format!("bad param line {spec:?}")))?;
            let shape = dims
                .split('x')
                .map(str::parse)
                .collect::<Result<Vec<usize>, _>>()
                .map_err(|e| manifest_err(format!("bad shape in {spec:?}: {e}")))?;
            let data = take(shape.iter().product(), name)?;
            params.add(name, Tensor::new(shape, data).map_err(manifest_err)?);
        }
        let model = GrapherModel::from_parts(run.model.clone(), vocab, labels, params).map_err(manifest_err)?;

        let optimizer = match kv.parsed::<u64>("optimizer.step").map_err(manifest_err)? {
            None => None,
            Some(step) => {
                let sizes: Vec<usize> = model.params.iter().map(|(_, p)| p.value.len()).collect();
                let mut read = |what: &str| sizes.iter().map(|&n| take(n, what)).collect::<CliResult<Vec<_>>>();
                let m = read("first moments")?;
                let v = read("second moments")?;
                Some(AdamW::from_state(run.train.optimizer.clone(), m, v, step))
            }
        };
        if !payload.is_empty() {
            return Err(manifest_err(format!("{} trailing payload bytes", payload.len())));
        }
        let best_dev_f1 = kv.parsed("best_dev_f1").map_err(manifest_err)?;
        Ok(Checkpoint {
            run,
            model,
            optimizer,
            best_dev_f1,
        })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> CliResult<Checkpoint> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}
