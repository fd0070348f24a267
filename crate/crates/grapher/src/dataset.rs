//! JSON Lines datasets: one `{"text": ..., "triples": [[s, p, o], ...]}` per line.

use std::fs;
use std::io::Write;
use std::path::Path;

use grapher_core::corpus::Example;
use grapher_core::{KnowledgeGraph, Triple, TripleSet};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub text: String,
    #[serde(default)]
    pub triples: Vec<[String; 3]>,
}

impl Record {
    pub fn from_graph(text: &str, g: &KnowledgeGraph) -> Record {
        Record {
            text: text.to_string(),
            triples: g
                .to_triples()
                .triples
                .into_iter()
                .map(|t| [t.subject, t.predicate, t.object])
                .collect(),
        }
    }

    pub fn triples(&self) -> Vec<Triple> {
        self.triples.iter().map(|[s, p, o]| Triple::new(s, p, o)).collect()
    }

    pub fn to_example(&self) -> grapher_core::Result<Example> {
        Ok(Example {
            text: self.text.clone(),
            graph: KnowledgeGraph::from_triples(&TripleSet::new(self.triples()))?,
        })
    }
}

pub fn parse_jsonl(src: &str, origin: &str) -> CliResult<Vec<Record>> {
    let mut out = Vec::new();
    for (i, line) in src.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(line).map_err(|e| CliError::Data(format!("{origin}:{}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> CliResult<Vec<Record>> {
    let src = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_jsonl(&src, &path.display().to_string())
}

pub fn read_examples(path: &Path) -> CliResult<Vec<Example>> {
    read_records(path)?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.to_example()
                .map_err(|e| CliError::Data(format!("{}: record {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn render_jsonl(records: &[Record]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records always serialize"));
        out.push('\n');
    }
    out
}

pub fn write_records(path: &Path, records: &[Record]) -> CliResult<()> {
    write_atomic(path, render_jsonl(records).as_bytes())
}

pub fn examples_to_records(examples: &[Example]) -> Vec<Record> {
    examples.iter().map(|e| Record::from_graph(&e.text, &e.graph)).collect()
}

/// Writes to a sibling temporary file and renames it into place, so readers
/// never see a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    let mut f = fs::File::create(tmp).map_err(|e| CliError::io(tmp, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(tmp, e))?;
    drop(f);
    fs::rename(tmp, path).map_err(|e| CliError::io(path, e))
}
