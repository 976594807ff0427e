//! Artifact writers. Every file is written to a temporary sibling and renamed
//! into place, so readers never see a partial file.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{Format, RunConfig};
use crate::run::{CaseOutcome, CaseResult, RunReport};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot serialize {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("cannot write CSV {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), OutputError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io_err(path))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| OutputError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

fn csv_bytes(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, OutputError> {
    let err = |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| OutputError::Io {
        path: path.to_path_buf(),
        source: e.into_error(),
    })
}

fn coord_header(p: usize) -> Vec<String> {
    (1..=p).map(|k| format!("x{k}")).collect()
}

/// Result as pretty JSON with full-precision floats.
pub fn result_json(result: &CaseResult) -> Result<Vec<u8>, serde_json::Error> {
    let mut bytes = serde_json::to_vec_pretty(result)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Certificate values for plotting: one row per design point with columns
/// `x1..xp, d, weight`.
pub fn plot_rows(cfg: &RunConfig, result: &CaseResult) -> Result<Vec<Vec<String>>, OutputError> {
    let space = cfg.build_space().map_err(|e| OutputError::Io {
        path: PathBuf::from("space"),
        source: std::io::Error::other(e.to_string()),
    })?;
    let scale = match &result.transform {
        Some(crate::run::Transform::Scale(t)) => Some(t.clone()),
        _ => None,
    };
    Ok((0..space.len())
        .map(|i| {
            let mut row: Vec<String> = space
                .point(i)
                .iter()
                .enumerate()
                .map(|(k, x)| (x * scale.as_ref().map_or(1.0, |t| t[k])).to_string())
                .collect();
            row.push(result.certificate.d[i].to_string());
            row.push(result.weights[i].to_string());
            row
        })
        .collect())
}

pub fn plot_header(p: usize) -> Vec<String> {
    let mut h = coord_header(p);
    h.push("d".into());
    h.push("weight".into());
    h
}

fn trace_csv(path: &Path, result: &CaseResult) -> Result<Vec<u8>, OutputError> {
    let header: Vec<String> = ["iteration", "loss", "step_norm", "inner_iterations", "inner_gap", "inner_converged"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<String>> = result
        .trace
        .iter()
        .map(|t| {
            vec![
                t.iteration.to_string(),
                t.loss.to_string(),
                t.step_norm.to_string(),
                t.inner_iterations.to_string(),
                t.inner_gap.to_string(),
                t.inner_converged.to_string(),
            ]
        })
        .collect();
    csv_bytes(path, &header, &rows)
}

/// Design table over the untransformed cases: the union of support points,
/// one weight column per case, then residual (sub-threshold mass) and loss
/// rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignTable {
    pub cases: Vec<String>,
    pub rows: Vec<TableRow>,
    pub residual: Vec<Option<f64>>,
    pub loss: Vec<Option<f64>>,
    pub wall_time: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub index: usize,
    pub x: Vec<f64>,
    pub weights: Vec<Option<f64>>,
}

impl DesignTable {
    pub fn build(report: &RunReport, threshold: f64) -> Self {
        let base: Vec<_> = report.cases.iter().filter(|c| c.spec.transform.is_none()).collect();
        let mut points: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
        for c in &base {
            if let Some(r) = c.result() {
                for s in &r.support {
                    points.entry(s.index).or_insert_with(|| s.x.clone());
                }
            }
        }
        let rows = points
            .into_iter()
            .map(|(index, x)| TableRow {
                index,
                x,
                weights: base.iter().map(|c| c.result().map(|r| r.weights[index])).collect(),
            })
            .collect();
        let residual = base
            .iter()
            .map(|c| {
                c.result()
                    .map(|r| r.weights.iter().filter(|&&w| w < threshold).sum::<f64>())
            })
            .collect();
        Self {
            cases: base.iter().map(|c| c.spec.id.clone()).collect(),
            rows,
            residual,
            loss: base.iter().map(|c| c.result().map(|r| r.loss)).collect(),
            wall_time: base.iter().map(|c| c.wall_time()).collect(),
        }
    }

    fn p(&self) -> usize {
        self.rows.first().map_or(0, |r| r.x.len())
    }

    /// CSV without timings so that it is reproducible.
    pub fn to_csv(&self, path: &Path) -> Result<Vec<u8>, OutputError> {
        let p = self.p();
        let mut header = vec!["row".to_string()];
        header.extend(coord_header(p));
        header.extend(self.cases.iter().cloned());
        let cell = |v: &Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut row = vec!["point".to_string()];
                row.extend(r.x.iter().map(f64::to_string));
                row.extend(r.weights.iter().map(cell));
                row
            })
            .collect();
        for (label, values) in [("residual", &self.residual), ("loss", &self.loss)] {
            let mut row = vec![label.to_string()];
            row.extend(std::iter::repeat_n(String::new(), p));
            row.extend(values.iter().map(cell));
            rows.push(row);
        }
        csv_bytes(path, &header, &rows)
    }

    /// Aligned text rendering with 4-decimal weights and a time row.
    pub fn to_text(&self) -> String {
        let fmt_opt = |v: &Option<f64>, prec: usize| v.map_or("failed".to_string(), |x| format!("{x:.prec$}"));
        let mut lines: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["point".to_string()];
        header.extend(self.cases.iter().cloned());
        lines.push(header);
        for r in &self.rows {
            let coords: Vec<String> = r.x.iter().map(|x| format!("{x}")).collect();
            let mut line = vec![format!("({})", coords.join(", "))];
            line.extend(r.weights.iter().map(|w| fmt_opt(w, 4)));
            lines.push(line);
        }
        let mut residual = vec!["residual".to_string()];
        residual.extend(self.residual.iter().map(|v| v.map_or("failed".into(), |x| format!("{x:.2e}"))));
        lines.push(residual);
        let mut loss = vec!["loss".to_string()];
        loss.extend(self.loss.iter().map(|v| fmt_opt(v, 4)));
        lines.push(loss);
        let mut time = vec!["time (s)".to_string()];
        time.extend(self.wall_time.iter().map(|v| fmt_opt(v, 2)));
        lines.push(time);

        let ncol = lines[0].len();
        let widths: Vec<usize> = (0..ncol)
            .map(|k| lines.iter().map(|l| l[k].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, l) in lines.iter().enumerate() {
            for (k, cell) in l.iter().enumerate() {
                let pad = widths[k] - cell.chars().count();
                if k == 0 {
                    out.push_str(cell);
                    out.push_str(&" ".repeat(pad));
                } else {
                    out.push_str("  ");
                    out.push_str(&" ".repeat(pad));
                    out.push_str(cell);
                }
            }
            out.push('\n');
            if i == 0 || i == self.rows.len() {
                let total: usize = widths.iter().sum::<usize>() + 2 * (ncol - 1);
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        out
    }
}

/// One-line status per case plus invariance comparisons.
pub fn summary_text(report: &RunReport) -> String {
    let mut s = String::new();
    for c in &report.cases {
        match &c.outcome {
            CaseOutcome::Solved { result, wall_time } => {
                let _ = writeln!(
                    s,
                    "{:<40} loss {:>10.4}  outer {:>4}  max d {:>10.3e}  {}  {:.2}s",
                    c.spec.id,
                    result.loss,
                    result.outer_iterations,
                    result.certificate.max_violation,
                    match (result.converged, result.certificate.pass) {
                        (true, true) => "ok",
                        (false, _) => "NOT CONVERGED",
                        (true, false) => "CERTIFICATE FAILED",
                    },
                    wall_time
                );
            }
            CaseOutcome::Failed { error } => {
                let _ = writeln!(s, "{:<40} FAILED: {error}", c.spec.id);
            }
        }
    }
    for inv in &report.invariance {
        let _ = writeln!(
            s,
            "{} vs {}: max |Δw| {:.3e}, Δloss {:.3e}, support {}  {}",
            inv.transformed,
            inv.base,
            inv.max_weight_diff,
            inv.loss_diff,
            if inv.support_match { "matches" } else { "differs" },
            if inv.pass { "ok" } else { "FAILED" }
        );
    }
    s
}

/// Writes every requested artifact of a run.
pub fn write_all(cfg: &RunConfig, report: &RunReport) -> Result<(), OutputError> {
    let dir = &report.out_dir;
    for c in &report.cases {
        let Some(result) = c.result() else { continue };
        let case_dir = dir.join(&c.spec.id);
        if cfg.wants(Format::Json) {
            let path = case_dir.join("result.json");
            let bytes = result_json(result).map_err(|source| OutputError::Json {
                path: path.clone(),
                source,
            })?;
            write_atomic(&path, &bytes)?;
        }
        if cfg.wants(Format::Plot) {
            let path = case_dir.join("plot.csv");
            let rows = plot_rows(cfg, result)?;
            write_atomic(&path, &csv_bytes(&path, &plot_header(cfg.model.p), &rows)?)?;
        }
        if cfg.wants(Format::Trace) {
            let path = case_dir.join("trace.csv");
            write_atomic(&path, &trace_csv(&path, result)?)?;
        }
    }
    let table = DesignTable::build(report, cfg.solver.support_threshold);
    if cfg.wants(Format::Csv) {
        let path = dir.join("designs.csv");
        write_atomic(&path, &table.to_csv(&path)?)?;
    }
    if cfg.wants(Format::Table) {
        let mut text = table.to_text();
        text.push('\n');
        text.push_str(&summary_text(report));
        write_atomic(&dir.join("designs.txt"), text.as_bytes())?;
    }
    if cfg.wants(Format::Json) && !report.invariance.is_empty() {
        let path = dir.join("invariance.json");
        let mut bytes = serde_json::to_vec_pretty(&report.invariance).map_err(|source| OutputError::Json {
            path: path.clone(),
            source,
        })?;
        bytes.push(b'\n');
        write_atomic(&path, &bytes)?;
    }
    Ok(())
}
