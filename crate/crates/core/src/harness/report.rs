use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{HarnessError, SweepResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "md" | "markdown" => Ok(Self::Markdown),
            other => Err(HarnessError::Report(format!("unknown format {other:?}"))),
        }
    }
}

impl ReportFormat {
    /// Guesses from a file extension.
    pub fn for_path(path: &Path) -> Option<Self> {
        path.extension()?.to_str()?.parse().ok()
    }
}

fn fmt_acc(acc: Option<f64>) -> String {
    acc.map(|a| format!("{a:.6}")).unwrap_or_else(|| "NA".into())
}

fn csv(sweep: &SweepResult) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| HarnessError::Report(e.to_string());
    w.write_record(["method", "proportion", "k", "repeat", "accuracy", "mean"])
        .map_err(err)?;
    for t in &sweep.trials {
        let mean = sweep
            .aggregate(&t.method, t.proportion, t.k)
            .and_then(|a| a.mean_accuracy);
        w.write_record([
            t.method.clone(),
            t.proportion.to_string(),
            t.k.to_string(),
            t.repeat.to_string(),
            fmt_acc(t.accuracy),
            fmt_acc(mean),
        ])
        .map_err(err)?;
    }
    for a in &sweep.aggregates {
        w.write_record([
            a.method.clone(),
            a.proportion.to_string(),
            a.k.to_string(),
            "mean".into(),
            fmt_acc(a.mean_accuracy),
            fmt_acc(a.mean_accuracy),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Report(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Report(e.to_string()))
}

/// Methods as rows, `(proportion, k)` cells as columns, mean accuracy in
/// percent.
fn markdown(sweep: &SweepResult) -> String {
    let mut methods: Vec<&str> = Vec::new();
    let mut columns: Vec<(f64, usize)> = Vec::new();
    for a in &sweep.aggregates {
        if !methods.contains(&a.method.as_str()) {
            methods.push(&a.method);
        }
        if !columns.contains(&(a.proportion, a.k)) {
            columns.push((a.proportion, a.k));
        }
    }
    let single_k = columns.iter().all(|c| c.1 == columns[0].1);

    let mut out = String::from("| method |");
    for (p, k) in &columns {
        let pct = p * 100.0;
        if single_k {
            let _ = write!(out, " {pct}% missing |");
        } else {
            let _ = write!(out, " {pct}% missing, k={k} |");
        }
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(columns.len()));
    out.push('\n');
    for m in methods {
        let _ = write!(out, "| {m} |");
        for &(p, k) in &columns {
            let cell = match sweep.aggregate(m, p, k) {
                Some(a) => match a.mean_accuracy {
                    Some(acc) => format!("{:.1}", acc * 100.0),
                    None => "failed".into(),
                },
                None => "-".into(),
            };
            let _ = write!(out, " {cell} |");
        }
        out.push('\n');
    }
    out
}

/// Renders `sweep`; the output depends only on the trial results.
pub fn render_report(sweep: &SweepResult, format: ReportFormat) -> Result<String, HarnessError> {
    if sweep.trials.is_empty() {
        return Err(HarnessError::EmptyResults);
    }
    match format {
        ReportFormat::Csv => csv(sweep),
        ReportFormat::Json => serde_json::to_string_pretty(sweep)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| HarnessError::Report(e.to_string())),
        ReportFormat::Markdown => Ok(markdown(sweep)),
    }
}

pub fn emit_report(sweep: &SweepResult, format: ReportFormat, path: &Path) -> Result<(), HarnessError> {
    let text = render_report(sweep, format)?;
    fs::write(path, text).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
