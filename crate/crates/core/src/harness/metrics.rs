use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "step,episode,loss_td,loss_prune,sigma,epsilon,mean_diag_conf,eval_return_c,eval_return_d,eval_win_c,eval_win_d";

/// One evaluation point. Losses are NaN before the first update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub episode: u64,
    pub loss_td: f64,
    pub loss_prune: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub mean_diag_conf: f64,
    pub eval_return_c: f64,
    pub eval_return_d: f64,
    pub eval_win_c: f64,
    pub eval_win_d: f64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let floats = [
            self.loss_td,
            self.loss_prune,
            self.sigma,
            self.epsilon,
            self.mean_diag_conf,
            self.eval_return_c,
            self.eval_return_d,
            self.eval_win_c,
            self.eval_win_d,
        ];
        let mut line = format!("{},{}", self.step, self.episode);
        for f in floats {
            line.push_str(&format!(",{f:.16e}"));
        }
        line
    }

    pub fn parse(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 11 {
            return Err(Error::Format(format!("metrics row has {} fields, expected 11", fields.len())));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|_| Error::Format(format!("bad integer {s:?}")));
        let float = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("bad number {s:?}")));
        Ok(MetricsRow {
            step: int(fields[0])?,
            episode: int(fields[1])?,
            loss_td: float(fields[2])?,
            loss_prune: float(fields[3])?,
            sigma: float(fields[4])?,
            epsilon: float(fields[5])?,
            mean_diag_conf: float(fields[6])?,
            eval_return_c: float(fields[7])?,
            eval_return_d: float(fields[8])?,
            eval_win_c: float(fields[9])?,
            eval_win_d: float(fields[10])?,
        })
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    match lines.next().transpose()? {
        Some(header) if header.trim() == METRICS_HEADER => {}
        _ => return Err(Error::Format(format!("{} lacks the metrics header", path.display()))),
    }
    let mut rows: Vec<MetricsRow> = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = MetricsRow::parse(&line)?;
        if rows.last().is_some_and(|prev| prev.step >= row.step) {
            return Err(Error::Format(format!("metrics steps not increasing at {}", row.step)));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Append-only writer; creates the file with its header when missing.
pub struct MetricsWriter {
    file: File,
}

impl MetricsWriter {
    pub fn open(path: &Path) -> Result<Self> {
        let fresh = !path.exists();
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if fresh {
            writeln!(file, "{METRICS_HEADER}")?;
        }
        Ok(MetricsWriter { file })
    }

    /// Start over from the rows at or before `step`, for resuming.
    pub fn truncate_after(path: &Path, step: u64) -> Result<Self> {
        let kept: Vec<MetricsRow> = if path.exists() {
            read_metrics(path)?.into_iter().filter(|r| r.step <= step).collect()
        } else {
            Vec::new()
        };
        let mut file = File::create(path)?;
        writeln!(file, "{METRICS_HEADER}")?;
        for row in kept {
            writeln!(file, "{}", row.to_csv())?;
        }
        drop(file);
        Self::open(path)
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        writeln!(self.file, "{}", row.to_csv())?;
        self.file.flush()?;
        Ok(())
    }
}
