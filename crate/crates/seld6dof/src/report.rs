//! Cross-run comparison: mean ± standard error over seeds per variant and
//! subset, plus training curves as SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use seld6dof_core::sim::Split;

use crate::dataset::Status;
use crate::error::{usage, AppError, Result};
use crate::eval::{report_path, EvalConfig, EvalReport, SUBSETS};
use crate::io;
use crate::train::{read_log, EpochLog, TRAIN_LOG};

/// One evaluated run directory.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub dir: PathBuf,
    /// Variant letter, or `-` for runs without a model.
    pub label: String,
    pub eval: EvalReport,
    pub log: Vec<EpochLog>,
}

pub fn load_run(dir: &Path, split: Split) -> Result<RunResult> {
    let path = report_path(dir, split);
    if !path.exists() {
        usage!("{} has no evaluation report for split `{}`", dir.display(), split.as_str());
    }
    let eval: EvalReport = io::read_json(&path)?;
    let log_path = dir.join(TRAIN_LOG);
    let log = if log_path.exists() { read_log(&log_path)? } else { Vec::new() };
    let label = eval.config.variant.map_or_else(|| "-".to_string(), |v| v.letter().to_string());
    Ok(RunResult { dir: dir.to_path_buf(), label, eval, log })
}

/// Mean and standard error (sample standard deviation over √n); the error
/// is `None` for a single value.
pub fn mean_se(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub variant: String,
    pub subset: String,
    pub runs: usize,
    /// `(mean, se)` for ER, F, LE_CD and LR_CD.
    pub metrics: [(f64, Option<f64>); 4],
}

pub fn summarize(runs: &[RunResult]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<&str, Vec<&RunResult>> = BTreeMap::new();
    for r in runs {
        groups.entry(&r.label).or_default().push(r);
    }
    let mut rows = Vec::new();
    for (label, group) in groups {
        for subset in SUBSETS {
            let reports: Vec<_> = group.iter().filter_map(|r| r.eval.subset(subset)).map(|s| &s.report).collect();
            if reports.is_empty() {
                continue;
            }
            let col =
                |f: fn(&seld6dof_core::metrics::MetricReport) -> f64| mean_se(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
            rows.push(SummaryRow {
                variant: label.to_string(),
                subset: subset.to_string(),
                runs: reports.len(),
                metrics: [col(|r| r.er), col(|r| r.f1), col(|r| r.le_cd), col(|r| r.lr_cd)],
            });
        }
    }
    rows
}

const METRIC_NAMES: [&str; 4] = ["er", "f1", "le_cd", "lr_cd"];

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("variant,subset,runs");
    for m in METRIC_NAMES {
        write!(s, ",{m}_mean,{m}_se").unwrap();
    }
    s.push('\n');
    for r in rows {
        write!(s, "{},{},{}", r.variant, r.subset, r.runs).unwrap();
        for (mean, se) in r.metrics {
            write!(s, ",{mean:.6},{}", se.map_or(String::new(), |v| format!("{v:.6}"))).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn summary_table(rows: &[SummaryRow]) -> String {
    let cell = |(m, se): (f64, Option<f64>), p: usize| match se {
        Some(se) => format!("{m:.p$} ± {se:.p$}"),
        None => format!("{m:.p$}"),
    };
    let mut s = String::from("| variant | subset | runs | ER | F (%) | LE_CD (°) | LR_CD (%) |\n|---|---|---|---|---|---|---|\n");
    for r in rows {
        let [er, f, le, lr] = r.metrics;
        writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.variant,
            r.subset,
            r.runs,
            cell(er, 3),
            cell(f, 1),
            cell(le, 1),
            cell(lr, 1)
        )
        .unwrap();
    }
    s
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#555555"];

/// Train (dashed) and validation (solid) loss per run, one colour per variant.
pub fn loss_svg(runs: &[RunResult]) -> String {
    let (w, h, m) = (720.0, 420.0, 50.0);
    let curves: Vec<&RunResult> = runs.iter().filter(|r| !r.log.is_empty()).collect();
    let max_epoch = curves.iter().flat_map(|r| r.log.iter().map(|e| e.epoch)).max().unwrap_or(1).max(2) as f64;
    let losses = || curves.iter().flat_map(|r| r.log.iter().flat_map(|e| [e.train_loss, e.val_loss]));
    let lo = losses().fold(f64::INFINITY, f64::min);
    let hi = losses().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (0.0, 1.0) };
    let x = |e: usize| m + (e as f64 - 1.0) / (max_epoch - 1.0) * (w - 2.0 * m);
    let y = |v: f64| h - m - (v - lo) / (hi - lo) * (h - 2.0 * m);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m).unwrap();
    writeln!(s, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#, w / 2.0, h - 15.0).unwrap();
    writeln!(s, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">ADPIT loss</text>"#, h / 2.0, h / 2.0)
        .unwrap();
    for (v, anchor) in [(lo, h - m), (hi, m)] {
        writeln!(s, r#"<text x="{}" y="{anchor:.1}" text-anchor="end">{v:.4}</text>"#, m - 4.0).unwrap();
    }
    writeln!(s, r#"<text x="{m}" y="{}" text-anchor="middle">1</text>"#, h - m + 15.0).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{max_epoch}</text>"#, w - m, h - m + 15.0).unwrap();

    let mut labels: Vec<&str> = curves.iter().map(|r| r.label.as_str()).collect();
    labels.dedup();
    for (i, r) in curves.iter().enumerate() {
        let color = COLORS[labels.iter().position(|l| *l == r.label).unwrap_or(i) % COLORS.len()];
        for (dash, pick) in [(" stroke-dasharray=\"4 3\"", 0), ("", 1)] {
            let pts: Vec<String> = r
                .log
                .iter()
                .map(|e| format!("{:.1},{:.1}", x(e.epoch), y(if pick == 0 { e.train_loss } else { e.val_loss })))
                .collect();
            writeln!(s, r#"<polyline fill="none" stroke="{color}"{dash} points="{}"/>"#, pts.join(" ")).unwrap();
        }
    }
    for (i, l) in labels.iter().enumerate() {
        let ly = m + 16.0 * i as f64;
        writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}"/>"#,
            w - m - 60.0,
            w - m - 40.0,
            COLORS[i % COLORS.len()]
        )
        .unwrap();
        writeln!(s, r#"<text x="{}" y="{}">{l}</text>"#, w - m - 35.0, ly + 4.0).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Reads the runs, checks that their metric settings agree, and writes
/// `summary.csv`, `summary.md` and `loss_curves.svg` into `out_dir`.
/// Returns the table.
pub fn report(run_dirs: &[PathBuf], split: Split, out_dir: &Path, force: bool) -> Result<(Status, String)> {
    if run_dirs.is_empty() {
        usage!("report needs at least one run directory");
    }
    let mut runs = run_dirs.iter().map(|d| load_run(d, split)).collect::<Result<Vec<_>>>()?;
    runs.sort_by(|a, b| (&a.label, a.eval.config.seed, &a.dir).cmp(&(&b.label, b.eval.config.seed, &b.dir)));
    let reference: &EvalConfig = &runs[0].eval.config;
    for r in &runs[1..] {
        let c = &r.eval.config;
        if c.metrics != reference.metrics || c.decode != reference.decode {
            usage!(
                "{} was scored with {:?} / {:?}, but {} with {:?} / {:?}",
                r.dir.display(),
                c.metrics,
                c.decode,
                runs[0].dir.display(),
                reference.metrics,
                reference.decode
            );
        }
    }
    let rows = summarize(&runs);
    let table = summary_table(&rows);
    let md_path = out_dir.join("summary.md");
    if md_path.exists() && !force {
        let existing = std::fs::read_to_string(&md_path).map_err(|e| AppError::io(&md_path, e))?;
        if existing == table {
            return Ok((Status::UpToDate, table));
        }
    }
    io::write_bytes(&out_dir.join("summary.csv"), summary_csv(&rows).as_bytes())?;
    io::write_bytes(&out_dir.join("loss_curves.svg"), loss_svg(&runs).as_bytes())?;
    io::write_bytes(&md_path, table.as_bytes())?;
    Ok((Status::Created, table))
}
