//! Grid reports: CSV rows, markdown pivots and a JSON archive.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::config::ExperimentConfig;
use crate::frame_select::MethodKind;
use crate::kernels::KernelKind;

pub const CSV_COLUMNS: [&str; 14] = [
    "kernel",
    "feature",
    "C",
    "sigma",
    "K",
    "method",
    "frame_acc",
    "phoneme_acc",
    "train_s",
    "test_s",
    "n_train",
    "n_test",
    "skipped",
    "converged_pairs",
];

/// Outcome of one grid cell. Accuracies are percentages; `None` when the
/// cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub kernel: KernelKind,
    pub feature: String,
    pub c: f64,
    pub sigma: f64,
    pub k: usize,
    pub method: MethodKind,
    pub frame_acc: Option<f64>,
    pub phoneme_acc: Option<f64>,
    pub train_s: f64,
    pub test_s: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub skipped: usize,
    pub converged_pairs: usize,
    pub pairs: usize,
    pub label_names: Vec<String>,
    /// Token counts, row = true class, column = predicted class.
    pub confusion: Vec<Vec<usize>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub cells: Vec<CellResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::invalid(format!("unknown report format `{other}`"))),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn render_csv(report: &RunReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::format(format!("csv: {e}"));
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for c in &report.cells {
        w.write_record([
            c.kernel.to_string(),
            c.feature.clone(),
            c.c.to_string(),
            c.sigma.to_string(),
            c.k.to_string(),
            c.method.to_string(),
            opt(c.frame_acc),
            opt(c.phoneme_acc),
            c.train_s.to_string(),
            c.test_s.to_string(),
            c.n_train.to_string(),
            c.n_test.to_string(),
            c.skipped.to_string(),
            c.converged_pairs.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn fmt_acc(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}"))
}

fn best<'a>(cells: impl Iterator<Item = &'a CellResult>) -> Option<&'a CellResult> {
    cells
        .filter(|c| c.phoneme_acc.is_some())
        .fold(None, |acc: Option<&CellResult>, c| match acc {
            Some(b) if b.phoneme_acc >= c.phoneme_acc => Some(b),
            _ => Some(c),
        })
}

fn uniq<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

fn pivot<C: PartialEq + Clone>(
    out: &mut String,
    title: &str,
    report: &RunReport,
    columns: &[C],
    label: impl Fn(&C) -> String,
    belongs: impl Fn(&CellResult, &C) -> bool,
) {
    let kernels = {
        let mut k = uniq(report.cells.iter().map(|c| c.kernel));
        k.sort();
        k
    };
    writeln!(out, "## {title}\n").unwrap();
    out.push_str("| kernel |");
    for c in columns {
        write!(out, " {} |", label(c)).unwrap();
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(columns.len()));
    out.push('\n');
    for k in kernels {
        write!(out, "| {k} |").unwrap();
        for col in columns {
            let cell = best(report.cells.iter().filter(|c| c.kernel == k && belongs(c, col)));
            match cell {
                Some(c) => write!(
                    out,
                    " {} / {} |",
                    fmt_acc(c.phoneme_acc),
                    fmt_acc(c.frame_acc)
                )
                .unwrap(),
                None => out.push_str(" n/a |"),
            }
        }
        out.push('\n');
    }
    out.push('\n');
}

/// Markdown with kernel × (C, feature), kernel × (K, method) and
/// kernel × σ pivots plus a full cell listing. Pivot entries show
/// `phoneme % / frame %` of the best cell over the unlisted axes.
pub fn render_markdown(report: &RunReport) -> String {
    let mut out = String::new();
    writeln!(out, "# Grid report\n").unwrap();
    writeln!(
        out,
        "seed {}, {} cells, {} failed.\n",
        report.seed,
        report.cells.len(),
        report.cells.iter().filter(|c| c.error.is_some()).count()
    )
    .unwrap();
    out.push_str("Entries are `phoneme accuracy % / frame accuracy %`, best over the axes not shown.\n\n");

    let cf = uniq(report.cells.iter().map(|c| (c.c, c.feature.clone())));
    let mut cf_sorted = cf.clone();
    cf_sorted.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.total_cmp(&b.0)));
    pivot(
        &mut out,
        "Accuracy by kernel, C and feature",
        report,
        &cf_sorted,
        |(c, f)| format!("C={c} {f}"),
        |cell, (c, f)| cell.c == *c && cell.feature == *f,
    );

    let mut km = uniq(report.cells.iter().map(|c| (c.k, c.method)));
    km.sort();
    pivot(
        &mut out,
        "Accuracy by kernel, K and frame selection",
        report,
        &km,
        |(k, m)| format!("K={k} {m}"),
        |cell, (k, m)| cell.k == *k && cell.method == *m,
    );

    let mut sigmas = uniq(report.cells.iter().map(|c| c.sigma));
    sigmas.sort_by(f64::total_cmp);
    pivot(
        &mut out,
        "Accuracy by kernel and sigma",
        report,
        &sigmas,
        |s| format!("σ={s}"),
        |cell, s| cell.sigma == *s,
    );

    out.push_str("## All cells\n\n");
    out.push_str("| kernel | feature | C | sigma | K | method | phoneme % | frame % | converged | train s | test s | note |\n");
    out.push_str("|---|---|---|---|---|---|---|---|---|---|---|---|\n");
    for c in &report.cells {
        writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {}/{} | {:.2} | {:.2} | {} |",
            c.kernel,
            c.feature,
            c.c,
            c.sigma,
            c.k,
            c.method,
            fmt_acc(c.phoneme_acc),
            fmt_acc(c.frame_acc),
            c.converged_pairs,
            c.pairs,
            c.train_s,
            c.test_s,
            c.error.as_deref().unwrap_or("").replace('|', "/")
        )
        .unwrap();
    }
    out
}

pub fn write_report_json(report: &RunReport, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::format(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_report_json(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

/// Writes `report` to `path` in the given format.
pub fn emit_report(report: &RunReport, format: ReportFormat, path: &Path) -> Result<()> {
    if report.cells.is_empty() {
        return Err(Error::invalid("report has no cells"));
    }
    let text = match format {
        ReportFormat::Csv => render_csv(report)?,
        ReportFormat::Markdown => render_markdown(report),
        ReportFormat::Json => return write_report_json(report, path),
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(kernel: KernelKind, feature: &str, c: f64, k: usize, method: MethodKind, acc: f64) -> CellResult {
        CellResult {
            kernel,
            feature: feature.into(),
            c,
            sigma: 0.027,
            k,
            method,
            frame_acc: Some(acc - 1.5),
            phoneme_acc: Some(acc),
            train_s: 0.25,
            test_s: 0.125,
            n_train: 100,
            n_test: 40,
            skipped: 2,
            converged_pairs: 10,
            pairs: 10,
            label_names: vec![],
            confusion: vec![],
            error: None,
        }
    }

    fn report(cells: Vec<CellResult>) -> RunReport {
        RunReport {
            config: ExperimentConfig::default(),
            seed: 3,
            cells,
        }
    }

    #[test]
    fn one_cell_one_row() {
        let csv = render_csv(&report(vec![cell(KernelKind::Rbf, "mfcc36", 10.0, 3, MethodKind::Middle, 51.6)])).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], CSV_COLUMNS.join(","));
        assert_eq!(lines[1], "rbf,mfcc36,10,0.027,3,middle,50.1,51.6,0.25,0.125,100,40,2,10");
    }

    #[test]
    fn csv_reparses_exactly() {
        let mut c = cell(KernelKind::Sigmoid, "plp36", 1e4, 5, MethodKind::Fcm, 100.0 / 3.0);
        c.sigma = 0.1 + 0.2;
        c.train_s = 1.0 / 7.0;
        let mut failed = c.clone();
        failed.frame_acc = None;
        failed.phoneme_acc = None;
        let r = report(vec![c.clone(), failed]);
        let csv = render_csv(&r).unwrap();
        let mut rd = csv::Reader::from_reader(csv.as_bytes());
        let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows[0][2].parse::<f64>().unwrap(), c.c);
        assert_eq!(rows[0][3].parse::<f64>().unwrap(), c.sigma);
        assert_eq!(rows[0][7].parse::<f64>().unwrap(), c.phoneme_acc.unwrap());
        assert_eq!(rows[0][8].parse::<f64>().unwrap(), c.train_s);
        assert_eq!(&rows[1][7], "");
    }

    #[test]
    fn table_one_shape() {
        let mut cells = Vec::new();
        for kernel in [KernelKind::Polynomial, KernelKind::Rbf, KernelKind::Sigmoid] {
            for k in [3, 5, 7] {
                for m in [MethodKind::Fcm, MethodKind::Middle] {
                    cells.push(cell(kernel, "mfcc36", 10.0, k, m, 40.0 + k as f64));
                }
            }
        }
        let md = render_markdown(&report(cells));
        let section = md
            .split("## Accuracy by kernel, K and frame selection")
            .nth(1)
            .unwrap()
            .split("##")
            .next()
            .unwrap();
        let rows: Vec<&str> = section.lines().filter(|l| l.starts_with('|')).collect();
        assert_eq!(rows.len(), 2 + 3);
        for r in &rows[2..] {
            assert_eq!(r.matches('|').count(), 1 + 1 + 6);
        }
        assert!(rows[0].contains("K=3 middle") && rows[0].contains("K=7 fcm"));
    }

    #[test]
    fn json_round_trip() {
        let r = report(vec![cell(KernelKind::Rbf, "mfcc36", 10.0, 3, MethodKind::Middle, 51.6)]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        emit_report(&r, ReportFormat::Json, &p).unwrap();
        assert_eq!(read_report_json(&p).unwrap(), r);
        assert!(emit_report(&report(vec![]), ReportFormat::Csv, &p).is_err());
        assert!(matches!(
            emit_report(&r, ReportFormat::Csv, &dir.path().join("no/such/dir.csv")),
            Err(Error::Io { .. })
        ));
    }
}
