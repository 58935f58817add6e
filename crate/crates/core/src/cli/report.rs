//! Tables and plot data from one or more aggregate CSVs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::experiment::{AggregateRow, AGGREGATE_COLUMNS};
use super::util::{fmt_opt, write_atomic};
use super::CliError;
use crate::feedback::FeedbackMode;
use crate::trainer::{AblationArm, Method};

const DEFAULT_BETA: f64 = 20.0;

/// Reads an aggregate CSV, or `aggregate.csv` inside a directory.
pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>, CliError> {
    let file: PathBuf = if path.is_dir() { path.join("aggregate.csv") } else { path.to_path_buf() };
    let mut r = csv::Reader::from_path(&file).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
    let headers = r.headers().map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?.clone();
    let missing: Vec<&str> = AGGREGATE_COLUMNS.iter().copied().filter(|c| !headers.iter().any(|h| h == *c)).collect();
    if !missing.is_empty() {
        return Err(CliError::Config(format!("{}: missing columns {}", file.display(), missing.join(", "))));
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| CliError::Config(format!("{}: row {}: {e}", file.display(), i + 1))))
        .collect()
}

/// Series name: the method, qualified when an interactive run deviates from
/// the default feedback settings.
pub fn series(r: &AggregateRow) -> String {
    if r.method != Method::Iteach {
        return r.method.as_str().to_string();
    }
    let mode = r.feedback_mode.unwrap_or(FeedbackMode::Both);
    let warm = r.warm_start.unwrap_or(true);
    let beta = r.beta.unwrap_or(DEFAULT_BETA);
    let mut tags = Vec::new();
    if mode != FeedbackMode::Both || !warm {
        tags.push(AblationArm { mode, warm_start: warm }.label());
    }
    if beta != DEFAULT_BETA {
        tags.push(format!("beta={beta}"));
    }
    if tags.is_empty() {
        "iteach".into()
    } else {
        format!("iteach[{}]", tags.join(" "))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; `None` below two values.
    pub std: Option<f64>,
}

pub fn stats(values: &[f64]) -> Stats {
    let n = values.len();
    if n == 0 {
        return Stats::default();
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (n >= 2).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
    Stats { n, mean, std }
}

fn fmt_std(s: &Stats) -> String {
    s.std.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into())
}

fn mean_opt(values: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = values.iter().flatten().copied().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Everything `report` writes, keyed by file name.
pub struct Report {
    pub files: Vec<(&'static str, Vec<u8>)>,
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn build_report(rows: &[AggregateRow]) -> Result<Report, CliError> {
    if rows.is_empty() {
        return Err(CliError::Config("no result rows to report".into()));
    }

    // table: (task, series, episodes)
    let mut table: BTreeMap<(String, String, usize), (Vec<f64>, Vec<Option<f64>>, Vec<String>)> = BTreeMap::new();
    for r in rows {
        let e = table.entry((r.task.clone(), series(r), r.episodes)).or_default();
        e.0.push(r.success_rate);
        e.1.push(r.correction_rate);
        if !e.2.contains(&r.config_hash) {
            e.2.push(r.config_hash.clone());
        }
    }
    let header = ["task", "method", "episodes", "seeds", "mean_success", "std_success", "mean_correction_rate", "config_hash"];
    let table_rows: Vec<Vec<String>> = table
        .iter()
        .map(|((task, s, ep), (succ, corr, hashes))| {
            let st = stats(succ);
            vec![
                task.clone(),
                s.clone(),
                ep.to_string(),
                st.n.to_string(),
                format!("{:.4}", st.mean),
                fmt_std(&st),
                fmt_opt(mean_opt(corr)),
                hashes.join(";"),
            ]
        })
        .collect();
    let text = aligned(&header[..7], table_rows.iter().map(|r| r[..7].to_vec()).collect());

    // success against training episodes, over tasks and seeds
    let mut curve: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| !series(r).contains('[')) {
        curve.entry((series(r), r.episodes)).or_default().push(r.success_rate);
    }
    let curve_rows = curve
        .iter()
        .map(|((s, ep), v)| {
            let st = stats(v);
            vec![s.clone(), ep.to_string(), st.n.to_string(), format!("{:.4}", st.mean), fmt_std(&st)]
        })
        .collect();

    // feedback / warm-start arms at the default beta
    let mut arms: BTreeMap<(String, usize), (Vec<f64>, Vec<Option<f64>>)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.method == Method::Iteach && r.beta.unwrap_or(DEFAULT_BETA) == DEFAULT_BETA) {
        let arm = AblationArm {
            mode: r.feedback_mode.unwrap_or(FeedbackMode::Both),
            warm_start: r.warm_start.unwrap_or(true),
        };
        let e = arms.entry((arm.label(), r.episodes)).or_default();
        e.0.push(r.success_rate);
        e.1.push(r.correction_rate);
    }
    let ablation = arms
        .iter()
        .map(|((arm, ep), (succ, corr))| {
            let st = stats(succ);
            vec![arm.clone(), ep.to_string(), st.n.to_string(), format!("{:.4}", st.mean), fmt_std(&st), fmt_opt(mean_opt(corr))]
        })
        .collect();

    // beta sweep: final checkpoint of default-arm interactive runs
    let mut final_ep: BTreeMap<(String, String, u64), usize> = BTreeMap::new();
    let default_arm = |r: &AggregateRow| {
        r.method == Method::Iteach
            && r.feedback_mode.unwrap_or(FeedbackMode::Both) == FeedbackMode::Both
            && r.warm_start.unwrap_or(true)
    };
    for r in rows.iter().filter(|r| default_arm(r)) {
        let e = final_ep.entry((r.task.clone(), r.config_hash.clone(), r.seed)).or_insert(0);
        *e = (*e).max(r.episodes);
    }
    let mut sweep: BTreeMap<u64, (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows.iter().filter(|r| default_arm(r)) {
        if final_ep[&(r.task.clone(), r.config_hash.clone(), r.seed)] != r.episodes {
            continue;
        }
        let beta = r.beta.unwrap_or(DEFAULT_BETA);
        let e = sweep.entry(beta.to_bits()).or_insert((beta, Vec::new(), Vec::new()));
        e.1.push(r.success_rate);
        if let Some(c) = r.correction_rate {
            e.2.push(c);
        }
    }
    let mut sweep: Vec<_> = sweep.into_values().collect();
    sweep.sort_by(|a, b| a.0.total_cmp(&b.0));
    let beta_rows = sweep
        .iter()
        .map(|(beta, succ, corr)| {
            let s = stats(succ);
            let c = stats(corr);
            vec![
                beta.to_string(),
                s.n.to_string(),
                format!("{:.4}", s.mean),
                fmt_std(&s),
                if c.n > 0 { format!("{:.4}", c.mean) } else { String::new() },
                if c.n > 0 { fmt_std(&c) } else { String::new() },
            ]
        })
        .collect();

    Ok(Report {
        files: vec![
            ("report.txt", text.into_bytes()),
            ("report.csv", csv_bytes(&header, table_rows)),
            ("success_vs_episodes.csv", csv_bytes(&["method", "episodes", "n", "mean_success", "std_success"], curve_rows)),
            (
                "ablation_curves.csv",
                csv_bytes(&["arm", "episodes", "n", "mean_success", "std_success", "mean_correction_rate"], ablation),
            ),
            (
                "beta_sweep.csv",
                csv_bytes(&["beta", "n", "mean_success", "std_success", "mean_correction_rate", "std_correction_rate"], beta_rows),
            ),
        ],
    })
}

fn aligned(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<String>| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.iter().map(|s| s.to_string()).collect());
    out += &line(widths.iter().map(|w| "-".repeat(*w)).collect());
    for r in rows {
        out += &line(r);
    }
    out
}

/// Reads every input, builds the whole report in memory, then writes it.
pub fn run_report(inputs: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut rows = Vec::new();
    for p in inputs {
        rows.extend(read_aggregate(p)?);
    }
    let report = build_report(&rows)?;
    let mut written = Vec::new();
    for (name, bytes) in report.files {
        let path = out_dir.join(name);
        write_atomic(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}
