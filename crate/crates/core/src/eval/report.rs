//! Evaluation report: one TSV row per measured value plus a text summary.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use crate::{Error, Result};

pub const REPORT_HEADER: &str = "evaluation\tcondition\tmetric\tvalue\tn\tskipped";

/// One metric value. `value` is `None` when nothing could be evaluated, in
/// which case `reason` says why; the reason only appears in the text block.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub evaluation: String,
    pub condition: String,
    pub metric: String,
    pub value: Option<f64>,
    pub n: usize,
    pub skipped: usize,
    pub reason: Option<String>,
}

impl EvalRecord {
    pub fn new(evaluation: &str, condition: &str, metric: &str, value: f64, n: usize, skipped: usize) -> Self {
        EvalRecord {
            evaluation: evaluation.to_string(),
            condition: condition.to_string(),
            metric: metric.to_string(),
            value: Some(value),
            n,
            skipped,
            reason: None,
        }
    }

    pub fn not_available(evaluation: &str, condition: &str, metric: &str, skipped: usize, reason: &str) -> Self {
        EvalRecord {
            evaluation: evaluation.to_string(),
            condition: condition.to_string(),
            metric: metric.to_string(),
            value: None,
            n: 0,
            skipped,
            reason: Some(reason.to_string()),
        }
    }
}

fn check_field(field: &str) -> Result<()> {
    if field.is_empty() || field.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidArgument(format!(
            "report field {field:?} is empty or has tabs/newlines"
        )));
    }
    Ok(())
}

pub fn write_report_tsv<W: Write>(mut out: W, records: &[EvalRecord]) -> Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for r in records {
        for f in [&r.evaluation, &r.condition, &r.metric] {
            check_field(f)?;
        }
        let value = match r.value {
            Some(v) => format!("{v}"),
            None => "NA".to_string(),
        };
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.evaluation, r.condition, r.metric, value, r.n, r.skipped
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn parse_report_tsv<R: BufRead>(input: R) -> Result<Vec<EvalRecord>> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(|h| h.trim_end_matches('\r')) != Some(REPORT_HEADER) {
        return Err(Error::parse(1, "missing report header"));
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        let lineno = n + 2;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(Error::parse(lineno, format!("expected 6 columns, found {}", f.len())));
        }
        if f[..3].iter().any(|s| s.is_empty()) {
            return Err(Error::parse(lineno, "empty name column"));
        }
        let value = match f[3] {
            "NA" => None,
            v => Some(
                v.parse::<f64>()
                    .map_err(|_| Error::parse(lineno, format!("invalid value {v:?}")))?,
            ),
        };
        let count = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(lineno, format!("invalid count {s:?}")))
        };
        out.push(EvalRecord {
            evaluation: f[0].to_string(),
            condition: f[1].to_string(),
            metric: f[2].to_string(),
            value,
            n: count(f[4])?,
            skipped: count(f[5])?,
            reason: None,
        });
    }
    Ok(out)
}

/// Human-readable block, grouped by evaluation in first-seen order.
pub fn render_text(records: &[EvalRecord]) -> String {
    let mut out = String::new();
    let mut seen: Vec<&str> = Vec::new();
    for r in records {
        if !seen.contains(&r.evaluation.as_str()) {
            seen.push(&r.evaluation);
        }
    }
    for eval in seen {
        let _ = writeln!(out, "== {eval}");
        for r in records.iter().filter(|r| r.evaluation == eval) {
            match r.value {
                Some(v) => {
                    let _ = writeln!(
                        out,
                        "  {:<10} {:<12} {:.4}  (n={}, skipped={})",
                        r.condition, r.metric, v, r.n, r.skipped
                    );
                }
                None => {
                    let _ = writeln!(
                        out,
                        "  {:<10} {:<12} NA  (skipped={}): {}",
                        r.condition,
                        r.metric,
                        r.skipped,
                        r.reason.as_deref().unwrap_or("nothing to evaluate")
                    );
                }
            }
        }
    }
    out
}

/// Writes the TSV to `path` and the text block next to it with a `.txt`
/// extension.
pub fn emit_report(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    write_report_tsv(BufWriter::new(file), records)?;
    let text_path = path.with_extension("txt");
    std::fs::write(&text_path, render_text(records)).map_err(|e| Error::file(&text_path, e))?;
    Ok(())
}
