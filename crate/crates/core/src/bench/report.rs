use std::collections::BTreeSet;
use std::fmt::Write;

use super::{BenchReport, RunResult};
use crate::network::Topology;

/// Row labels of each topology block, in order.
pub const METRIC_ROWS: [&str; 8] = [
    "time_s",
    "epoch",
    "mse",
    "nmse",
    "mae",
    "min_abs_err",
    "max_abs_err",
    "r",
];

const TEXT_LABELS: [&str; 8] = [
    "Modelling time (s)",
    "Epoch",
    "MSE",
    "NMSE",
    "MAE",
    "Min abs error",
    "Max abs error",
    "R",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReportOptions {
    /// Print `NA` instead of wall-clock times so reruns compare equal.
    pub redact_timing: bool,
}

fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-3..1e6).contains(&a) {
        format!("{v:.6}")
    } else {
        format!("{v:.4e}")
    }
}

fn metric_cells(run: Option<&RunResult>, opts: &ReportOptions) -> [String; 8] {
    let Some(r) = run else {
        return Default::default();
    };
    let time = if opts.redact_timing {
        "NA".to_string()
    } else {
        format!("{:.3}", r.wall_time_s)
    };
    let Some(t) = r.test.as_ref().filter(|_| !r.diverged()) else {
        let mut out: [String; 8] = std::array::from_fn(|_| "DIV".to_string());
        if !r.diverged() {
            out = std::array::from_fn(|_| "NA".to_string());
        }
        out[0] = time;
        out[1] = r.epochs_run.to_string();
        return out;
    };
    let opt = |v: Option<f64>| v.map_or("NA".to_string(), num);
    [
        time,
        r.epochs_run.to_string(),
        num(t.mse),
        opt(t.nmse),
        num(t.mae_abs),
        num(t.min_abs_err),
        num(t.max_abs_err),
        opt(t.r_mean),
    ]
}

fn topologies(report: &BenchReport) -> Vec<Topology> {
    let mut seen = Vec::new();
    for c in &report.cells {
        if !seen.contains(&c.topology) {
            seen.push(c.topology);
        }
    }
    seen
}

/// Render the report grid: one block per topology with the eight metric rows
/// and one column per hidden-layer count. Cells show the best restart by
/// test MSE; diverged cells show `DIV`.
pub fn emit_report(report: &BenchReport, format: ReportFormat, opts: &ReportOptions) -> String {
    let depths: Vec<usize> = report
        .cells
        .iter()
        .map(|c| c.hidden_layers)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let topos = topologies(report);
    let cell_run = |t: Topology, h: usize| -> Option<&RunResult> {
        let cell = report.cell(t, h)?;
        match cell.best {
            Some(i) => Some(&report.runs[i]),
            // every restart diverged: show the first one as DIV
            None => report.runs.iter().find(|r| r.topology == t && r.hidden_layers == h),
        }
    };
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str("topology,metric");
            for h in &depths {
                let _ = write!(out, ",h{h}");
            }
            out.push('\n');
            for &t in &topos {
                let cols: Vec<[String; 8]> = depths.iter().map(|&h| metric_cells(cell_run(t, h), opts)).collect();
                for (m, name) in METRIC_ROWS.iter().enumerate() {
                    let _ = write!(out, "{},{}", t.code(), name);
                    for c in &cols {
                        let _ = write!(out, ",{}", c[m]);
                    }
                    out.push('\n');
                }
            }
        }
        ReportFormat::Text => {
            let label_w = TEXT_LABELS.iter().map(|s| s.len()).max().unwrap_or(0);
            for &t in &topos {
                let cols: Vec<[String; 8]> = depths.iter().map(|&h| metric_cells(cell_run(t, h), opts)).collect();
                let col_w = cols
                    .iter()
                    .flat_map(|c| c.iter().map(String::len))
                    .chain(std::iter::once(2))
                    .max()
                    .unwrap_or(2);
                let _ = writeln!(out, "{:<label_w$}  HIDDEN LAYERS", t.code());
                let _ = write!(out, "{:<label_w$}", "");
                for h in &depths {
                    let _ = write!(out, "  {:>col_w$}", h);
                }
                out.push('\n');
                for (m, label) in TEXT_LABELS.iter().enumerate() {
                    let _ = write!(out, "{label:<label_w$}");
                    for c in &cols {
                        let _ = write!(out, "  {:>col_w$}", c[m]);
                    }
                    out.push('\n');
                }
                out.push('\n');
            }
            if let Some(c) = report.champion_run() {
                let _ = writeln!(
                    out,
                    "champion: {} with {} hidden layer(s), restart {}, seed {}",
                    c.topology.code(),
                    c.hidden_layers,
                    c.restart,
                    c.seed
                );
            }
        }
    }
    out
}
