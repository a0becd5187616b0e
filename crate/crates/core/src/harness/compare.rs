use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use crate::error::{usage, Error, Result};

use super::config::TrainConfig;
use super::metrics::read_metrics;

/// Last-k averages of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub seed: u64,
    pub return_c: f64,
    pub return_d: f64,
    pub win_c: f64,
    pub win_d: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation (n − 1); zero for a single value.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupSummary {
    pub label: String,
    pub config_key: String,
    pub runs: Vec<RunSummary>,
    pub return_c: MeanStd,
    pub return_d: MeanStd,
    pub win_c: MeanStd,
    pub win_d: MeanStd,
}

pub fn summarize_run(dir: &Path, last_k: usize) -> Result<(TrainConfig, RunSummary)> {
    if last_k == 0 {
        return usage("last_k must be positive");
    }
    let cfg = TrainConfig::load(&dir.join("config.txt"))?;
    let rows = read_metrics(&dir.join("metrics.csv"))?;
    if rows.len() < last_k {
        return Err(Error::Usage(format!("{} has {} evaluation rows, fewer than {last_k}", dir.display(), rows.len())));
    }
    let tail = &rows[rows.len() - last_k..];
    let avg = |f: fn(&super::metrics::MetricsRow) -> f64| tail.iter().map(f).sum::<f64>() / last_k as f64;
    let summary = RunSummary {
        dir: dir.to_path_buf(),
        seed: cfg.seed,
        return_c: avg(|r| r.eval_return_c),
        return_d: avg(|r| r.eval_return_d),
        win_c: avg(|r| r.eval_win_c),
        win_d: avg(|r| r.eval_win_d),
    };
    Ok((cfg, summary))
}

/// Group runs whose configurations differ only in the seed. Returns the
/// groups and warnings about runs that had to be split off.
pub fn compare(dirs: &[PathBuf], last_k: usize) -> Result<(Vec<GroupSummary>, Vec<String>)> {
    if dirs.is_empty() {
        return usage("compare needs at least one run directory");
    }
    let mut groups: IndexMap<String, (TrainConfig, Vec<RunSummary>)> = IndexMap::new();
    for dir in dirs {
        let (cfg, run) = summarize_run(dir, last_k)?;
        groups.entry(cfg.group_key()).or_insert_with(|| (cfg, Vec::new())).1.push(run);
    }
    let mut warnings = Vec::new();
    if groups.len() > 1 {
        let first = &groups[0].0;
        for (cfg, runs) in groups.values().skip(1) {
            let diff: Vec<String> = super::config::KEYS
                .iter()
                .filter(|&&k| k != "seed" && cfg.value_of(k) != first.value_of(k))
                .map(|k| format!("{k}={}", cfg.value_of(k)))
                .collect();
            warnings.push(format!(
                "configs differ ({}); split {} run(s) into a separate group",
                diff.join(", "),
                runs.len()
            ));
        }
    }
    let out = groups
        .into_iter()
        .map(|(key, (cfg, runs))| {
            let col = |f: fn(&RunSummary) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>());
            GroupSummary {
                label: format!("{} {} {}", cfg.env, cfg.value_of("mixer"), cfg.value_of("agent")),
                config_key: key,
                return_c: col(|r| r.return_c),
                return_d: col(|r| r.return_d),
                win_c: col(|r| r.win_c),
                win_d: col(|r| r.win_d),
                runs,
            }
        })
        .collect();
    Ok((out, warnings))
}

fn pm(m: MeanStd) -> String {
    format!("{:.4} ± {:.4}", m.mean, m.std)
}

pub fn format_table(groups: &[GroupSummary]) -> String {
    let header = ["group", "seeds", "return C", "return D", "win C", "win D"];
    let rows: Vec<[String; 6]> = groups
        .iter()
        .map(|g| {
            [
                g.label.clone(),
                g.runs.len().to_string(),
                pm(g.return_c),
                pm(g.return_d),
                pm(g.win_c),
                pm(g.win_d),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let padded: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    for r in &rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

pub const COMPARE_HEADER: &str = "group,seeds,return_c_mean,return_c_std,return_d_mean,return_d_std,win_c_mean,win_c_std,win_d_mean,win_d_std,config";

pub fn format_csv(groups: &[GroupSummary]) -> String {
    let mut out = format!("{COMPARE_HEADER}\n");
    for g in groups {
        let _ = writeln!(
            out,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},\"{}\"",
            g.label,
            g.runs.len(),
            g.return_c.mean,
            g.return_c.std,
            g.return_d.mean,
            g.return_d.std,
            g.win_c.mean,
            g.win_c.std,
            g.win_d.mean,
            g.win_d.std,
            g.config_key
        );
    }
    out
}
