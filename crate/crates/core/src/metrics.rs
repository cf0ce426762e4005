//! Scalar performance measures, horizon sweeps and CSV export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::Topology;
use crate::sim::{run_closed_loop, MpcKind, Scenario, SimError, SimTrace};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no samples inside the requested window")]
    EmptyWindow,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MetricsError + '_ {
    move |source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    /// Per area (Hz).
    pub max_abs_freq_dev: Vec<f64>,
    /// Per area, mean of |Δf| (Hz).
    pub mean_abs_freq_dev: Vec<f64>,
    /// Unwrapped angle difference (rad).
    pub max_abs_angle_diff: f64,
    pub mean_abs_tie_power: f64,
    /// Per area, battery plus secondary set-point (p.u.).
    pub mean_abs_control_input: Vec<f64>,
    /// Mean solver time over optimizer calls (s); zero without MPC.
    pub mean_solve_time: f64,
    /// Samples where at least one controller fell back.
    pub infeasible_step_count: usize,
}

pub fn compute_metrics(trace: &SimTrace, window: Option<(f64, f64)>) -> Result<RunMetrics, MetricsError> {
    let idx: Vec<usize> = (0..trace.len())
        .filter(|&k| window.is_none_or(|(t0, t1)| trace.time[k] >= t0 && trace.time[k] <= t1))
        .collect();
    if idx.is_empty() {
        return Err(MetricsError::EmptyWindow);
    }
    let count = idx.len() as f64;
    let max_abs = |s: &[f64]| idx.iter().fold(0.0, |m: f64, &k| m.max(s[k].abs()));
    let mean_abs = |s: &[f64]| idx.iter().map(|&k| s[k].abs()).sum::<f64>() / count;

    let areas = 0..trace.n_areas();
    let control: Vec<Vec<f64>> = areas
        .clone()
        .map(|i| {
            trace.battery[i]
                .iter()
                .zip(&trace.generation[i])
                .map(|(b, g)| b + g)
                .collect()
        })
        .collect();
    let mut solves = 0usize;
    let mut solve_time = 0.0;
    let mut fallback_steps = 0usize;
    for &k in &idx {
        let d = &trace.diagnostics[k];
        solves += d.len();
        solve_time += d.iter().map(|x| x.solve_time).sum::<f64>();
        if d.iter().any(|x| x.fallback) {
            fallback_steps += 1;
        }
    }
    Ok(RunMetrics {
        max_abs_freq_dev: areas.clone().map(|i| max_abs(&trace.freq_hz[i])).collect(),
        mean_abs_freq_dev: areas.clone().map(|i| mean_abs(&trace.freq_hz[i])).collect(),
        max_abs_angle_diff: max_abs(&trace.angle),
        mean_abs_tie_power: mean_abs(&trace.tie_power),
        mean_abs_control_input: control.iter().map(|c| mean_abs(c)).collect(),
        mean_solve_time: if solves > 0 { solve_time / solves as f64 } else { 0.0 },
        infeasible_step_count: fallback_steps,
    })
}

/// One (topology, coordination, mode, N) combination of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepCell {
    pub topology: Topology,
    pub coordinated: bool,
    pub kind: MpcKind,
    pub horizon: usize,
}

impl SweepCell {
    pub fn coordination_label(&self) -> &'static str {
        match (self.topology, self.coordinated) {
            (Topology::OneArea, _) => "single",
            (Topology::TwoArea, true) => "coordinated",
            (Topology::TwoArea, false) => "uncoordinated",
        }
    }
}

/// Cells in output order: coordination (uncoordinated first), then the
/// given mode order, then ascending horizon.
pub fn sweep_cells(topology: Topology, modes: &[MpcKind], horizons: &[usize]) -> Vec<SweepCell> {
    let coordinations: &[bool] = match topology {
        Topology::OneArea => &[false],
        Topology::TwoArea => &[false, true],
    };
    let mut cells = Vec::new();
    for &coordinated in coordinations {
        for &kind in modes {
            for &horizon in horizons {
                cells.push(SweepCell {
                    topology,
                    coordinated,
                    kind,
                    horizon,
                });
            }
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub cell: SweepCell,
    /// Metrics, or the reason the cell failed.
    pub result: Result<RunMetrics, String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub cells: Vec<CellOutcome>,
}

impl SweepResult {
    pub fn failures(&self) -> impl Iterator<Item = &CellOutcome> {
        self.cells.iter().filter(|c| c.result.is_err())
    }
}

/// Runs every cell on up to `workers` threads. `build` turns a cell into a
/// scenario; output order follows `cells` regardless of scheduling.
pub fn sweep_horizons<F>(cells: &[SweepCell], workers: usize, build: F) -> SweepResult
where
    F: Fn(&SweepCell) -> Result<Scenario, SimError> + Sync,
{
    let run = |cell: &SweepCell| CellOutcome {
        cell: *cell,
        result: build(cell)
            .and_then(|s| run_closed_loop(&s))
            .map_err(|e| e.to_string())
            .and_then(|t| compute_metrics(&t, None).map_err(|e| e.to_string())),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build();
    let cells = match pool {
        Ok(pool) => pool.install(|| cells.par_iter().map(run).collect()),
        Err(_) => cells.iter().map(run).collect(),
    };
    SweepResult { cells }
}

/// Formats with 12 significant digits.
pub fn fmt_value(v: f64) -> String {
    format!("{v:.11e}")
}

pub const METRICS_HEADER: [&str; 14] = [
    "topology",
    "coordination",
    "mode",
    "N",
    "max_abs_freq_dev_a1",
    "max_abs_freq_dev_a2",
    "mean_abs_freq_dev_a1",
    "mean_abs_freq_dev_a2",
    "max_abs_angle_diff",
    "mean_abs_tie_power",
    "mean_abs_control_input_a1",
    "mean_abs_control_input_a2",
    "mean_solve_time",
    "infeasible_step_count",
];

/// Columns whose values depend on wall-clock time.
pub const TIMING_COLUMNS: [&str; 1] = ["mean_solve_time"];

fn per_area(v: &[f64], i: usize) -> String {
    v.get(i).map(|x| fmt_value(*x)).unwrap_or_default()
}

pub fn metrics_row(cell: &SweepCell, result: &Result<RunMetrics, String>) -> Vec<String> {
    let mut row = vec![
        cell.topology.as_str().to_string(),
        cell.coordination_label().to_string(),
        cell.kind.as_str().to_string(),
        cell.horizon.to_string(),
    ];
    match result {
        Ok(m) => row.extend([
            per_area(&m.max_abs_freq_dev, 0),
            per_area(&m.max_abs_freq_dev, 1),
            per_area(&m.mean_abs_freq_dev, 0),
            per_area(&m.mean_abs_freq_dev, 1),
            fmt_value(m.max_abs_angle_diff),
            fmt_value(m.mean_abs_tie_power),
            per_area(&m.mean_abs_control_input, 0),
            per_area(&m.mean_abs_control_input, 1),
            fmt_value(m.mean_solve_time),
            m.infeasible_step_count.to_string(),
        ]),
        Err(_) => row.extend(std::iter::repeat_n("FAILED".to_string(), METRICS_HEADER.len() - 4)),
    }
    row
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn csv_err(path: &Path, e: csv::Error) -> MetricsError {
    MetricsError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

pub fn write_metrics_csv(result: &SweepResult, path: &Path) -> Result<(), MetricsError> {
    let rows: Vec<Vec<String>> = result.cells.iter().map(|c| metrics_row(&c.cell, &c.result)).collect();
    write_rows(path, &METRICS_HEADER, &rows)
}

/// Reads a metrics table back. Failed cells come back as `Err`.
pub fn read_metrics_csv(path: &Path) -> Result<SweepResult, MetricsError> {
    let bad = |reason: String| MetricsError::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(METRICS_HEADER.iter().copied()) {
        return Err(bad("unexpected header".into()));
    }
    let mut cells = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let topology = match &rec[0] {
            "one-area" => Topology::OneArea,
            "two-area" => Topology::TwoArea,
            other => return Err(bad(format!("unknown topology {other}"))),
        };
        let kind = MpcKind::parse(&rec[2]).ok_or_else(|| bad(format!("unknown mode {}", &rec[2])))?;
        let horizon = rec[3].parse().map_err(|_| bad(format!("bad horizon {}", &rec[3])))?;
        let cell = SweepCell {
            topology,
            coordinated: &rec[1] == "coordinated",
            kind,
            horizon,
        };
        if &rec[4] == "FAILED" {
            cells.push(CellOutcome {
                cell,
                result: Err("FAILED".into()),
            });
            continue;
        }
        let num = |i: usize| -> Result<Option<f64>, MetricsError> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                rec[i].parse().map(Some).map_err(|_| bad(format!("bad number {}", &rec[i])))
            }
        };
        let pair = |i: usize| -> Result<Vec<f64>, MetricsError> {
            Ok([num(i)?, num(i + 1)?].into_iter().flatten().collect())
        };
        let m = RunMetrics {
            max_abs_freq_dev: pair(4)?,
            mean_abs_freq_dev: pair(6)?,
            max_abs_angle_diff: num(8)?.unwrap_or(0.0),
            mean_abs_tie_power: num(9)?.unwrap_or(0.0),
            mean_abs_control_input: pair(10)?,
            mean_solve_time: num(12)?.unwrap_or(0.0),
            infeasible_step_count: rec[13].parse().map_err(|_| bad("bad count".into()))?,
        };
        cells.push(CellOutcome { cell, result: Ok(m) });
    }
    Ok(SweepResult { cells })
}

/// File names of the per-metric tables written by [`write_plot_data`].
pub const PLOT_TABLES: [&str; 6] = [
    "max_freq_dev.csv",
    "mean_freq_dev.csv",
    "max_angle_diff.csv",
    "mean_tie_power.csv",
    "mean_control_input.csv",
    "mean_solve_time.csv",
];

/// Writes one long-format table per performance measure into `dir`, one
/// row per sweep cell.
pub fn write_plot_data(result: &SweepResult, dir: &Path) -> Result<(), MetricsError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let key = |c: &SweepCell| {
        vec![
            c.topology.as_str().to_string(),
            c.coordination_label().to_string(),
            c.kind.as_str().to_string(),
            c.horizon.to_string(),
        ]
    };
    type Extract = fn(&RunMetrics) -> Vec<f64>;
    let tables: [(&str, bool, Extract); 6] = [
        (PLOT_TABLES[0], true, |m| m.max_abs_freq_dev.clone()),
        (PLOT_TABLES[1], true, |m| m.mean_abs_freq_dev.clone()),
        (PLOT_TABLES[2], false, |m| vec![m.max_abs_angle_diff]),
        (PLOT_TABLES[3], false, |m| vec![m.mean_abs_tie_power]),
        (PLOT_TABLES[4], true, |m| m.mean_abs_control_input.clone()),
        (PLOT_TABLES[5], false, |m| vec![m.mean_solve_time]),
    ];
    for (name, per_area_table, extract) in tables {
        let header: Vec<&str> = if per_area_table {
            vec!["topology", "coordination", "mode", "N", "value_a1", "value_a2"]
        } else {
            vec!["topology", "coordination", "mode", "N", "value"]
        };
        let width = header.len() - 4;
        let rows: Vec<Vec<String>> = result
            .cells
            .iter()
            .map(|c| {
                let mut row = key(&c.cell);
                match &c.result {
                    Ok(m) => {
                        let v = extract(m);
                        row.extend((0..width).map(|i| per_area(&v, i)));
                    }
                    Err(_) => row.extend(std::iter::repeat_n("FAILED".to_string(), width)),
                }
                row
            })
            .collect();
        write_rows(&dir.join(name), &header, &rows)?;
    }
    Ok(())
}

/// Full time series of one run.
pub fn write_trace_csv(trace: &SimTrace, path: &Path) -> Result<(), MetricsError> {
    let areas = trace.n_areas();
    let mut header = vec!["time".to_string()];
    for i in 1..=areas {
        for name in ["freq_hz", "soc", "battery", "generation", "fault"] {
            header.push(format!("{name}_a{i}"));
        }
    }
    header.extend(
        ["angle", "tie_power", "solver_status", "fallback", "objective", "solve_time"].map(String::from),
    );
    let mut rows = Vec::with_capacity(trace.len());
    for k in 0..trace.len() {
        let mut row = vec![fmt_value(trace.time[k])];
        for i in 0..areas {
            for s in [
                &trace.freq_hz[i],
                &trace.soc[i],
                &trace.battery[i],
                &trace.generation[i],
                &trace.fault[i],
            ] {
                row.push(fmt_value(s[k]));
            }
        }
        row.push(fmt_value(trace.angle[k]));
        row.push(fmt_value(trace.tie_power[k]));
        let d = &trace.diagnostics[k];
        let mut status = String::new();
        let mut objective = String::new();
        let mut solve = String::new();
        for (j, x) in d.iter().enumerate() {
            let sep = if j > 0 { ";" } else { "" };
            let s = x.status.map(|s| s.as_str()).unwrap_or("error");
            let _ = write!(status, "{sep}{s}");
            let _ = write!(objective, "{sep}{}", fmt_value(x.objective));
            let _ = write!(solve, "{sep}{}", fmt_value(x.solve_time));
        }
        row.push(status);
        row.push(if d.iter().any(|x| x.fallback) { "1" } else { "0" }.to_string());
        row.push(objective);
        row.push(solve);
        rows.push(row);
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(path, &header_refs, &rows)
}

/// Single-run metrics table, same columns as a sweep.
pub fn write_run_metrics_csv(cell: &SweepCell, metrics: &RunMetrics, path: &Path) -> Result<(), MetricsError> {
    write_rows(path, &METRICS_HEADER, &[metrics_row(cell, &Ok(metrics.clone()))])
}

/// Copy of a CSV with the named columns removed, for byte comparisons that
/// must ignore timing.
pub fn strip_columns(text: &str, drop: &[&str]) -> String {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut keep: Vec<bool> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let Ok(rec) = rec else { continue };
        if i == 0 {
            keep = rec.iter().map(|h| !drop.contains(&h)).collect();
        }
        let fields: Vec<&str> = rec
            .iter()
            .zip(keep.iter().chain(std::iter::repeat(&true)))
            .filter(|(_, k)| **k)
            .map(|(f, _)| f)
            .collect();
        let _ = out.write_record(fields);
    }
    String::from_utf8(out.into_inner().unwrap_or_default()).unwrap_or_default()
}
