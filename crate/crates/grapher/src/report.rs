//! Score reports: a tab-separated table (rows Exact, Partial, Strict) and
//! `key=value` lines for scripts.

use grapher_core::eval::TripleScores;

pub fn render_tsv(s: &TripleScores) -> String {
    let mut out = String::from("Match\tF1\tPrecision\tRecall\n");
    for (name, p) in s.rows() {
        out.push_str(&format!("{name}\t{:.4}\t{:.4}\t{:.4}\n", p.f1, p.precision, p.recall));
    }
    out
}

/// Full-precision values, e.g. `exact_f1=0.75`.
pub fn render_kv(s: &TripleScores) -> String {
    let mut out = String::new();
    for (name, p) in s.rows() {
        let n = name.to_lowercase();
        out.push_str(&format!("{n}_f1={}\n{n}_precision={}\n{n}_recall={}\n", p.f1, p.precision, p.recall));
    }
    out
}

/// Reads back [`render_kv`] output.
pub fn parse_kv(src: &str) -> Option<TripleScores> {
    let get = |key: &str| -> Option<f64> {
        src.lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .and_then(|v| v.trim().parse().ok())
    };
    let prf = |n: &str| -> Option<grapher_core::eval::Prf> {
        Some(grapher_core::eval::Prf {
            f1: get(&format!("{n}_f1"))?,
            precision: get(&format!("{n}_precision"))?,
            recall: get(&format!("{n}_recall"))?,
        })
    };
    Some(TripleScores {
        exact: prf("exact")?,
        partial: prf("partial")?,
        strict: prf("strict")?,
    })
}
