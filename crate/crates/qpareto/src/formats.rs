//! CSV and JSON output formats.
//!
//! Every float is written with 17 significant digits so values round-trip
//! exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use qpareto_core::dmorph::OptimizationTrace;
use qpareto_core::pft::{ParetoPoint, ScalingRow};
use qpareto_core::phase::PhaseRunRecord;
use qpareto_core::{ControlFieldSet, TimeGrid};

use crate::config::OutputFormat;

/// `{:.16e}`: 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Header plus formatted rows of one output table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Rows as JSON objects; cells that parse as numbers become numbers.
    pub fn to_json(&self) -> serde_json::Value {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let obj = self
                    .header
                    .iter()
                    .zip(row)
                    .map(|(h, cell)| (h.clone(), json_cell(cell)))
                    .collect::<serde_json::Map<_, _>>();
                serde_json::Value::Object(obj)
            })
            .collect();
        serde_json::Value::Array(rows)
    }

    /// Writes `<stem>.csv` or `<stem>.json` and returns the path.
    pub fn write(&self, stem: &Path, format: OutputFormat) -> Result<PathBuf> {
        match format {
            OutputFormat::Csv => {
                let path = stem.with_extension("csv");
                write_csv(&path, &self.header, &self.rows)?;
                Ok(path)
            }
            OutputFormat::Json => {
                let path = stem.with_extension("json");
                write_json(&path, &self.to_json())?;
                Ok(path)
            }
        }
    }
}

fn json_cell(cell: &str) -> serde_json::Value {
    if cell.is_empty() {
        return serde_json::Value::Null;
    }
    if let Ok(i) = cell.parse::<i64>() {
        return i.into();
    }
    match cell.parse::<f64>() {
        Ok(x) if x.is_finite() => x.into(),
        _ => match cell {
            "true" => true.into(),
            "false" => false.into(),
            _ => cell.into(),
        },
    }
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Field CSV: `t, eps_1, …, eps_n`, one row per knob at its reporting time.
pub fn write_fields_csv(path: &Path, fields: &ControlFieldSet) -> Result<()> {
    let n = fields.fields();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|k| format!("eps_{k}")));
    let rows: Vec<Vec<String>> = (0..fields.grid.steps())
        .map(|j| {
            let mut row = vec![num(fields.grid.knob_time(j))];
            row.extend(fields.values.iter().map(|f| num(f[j])));
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Reads a field CSV written by [`write_fields_csv`]; the grid is recovered
/// from the last reporting time and the row count.
pub fn read_fields_csv(path: &Path) -> Result<ControlFieldSet> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let n = r.headers()?.len().saturating_sub(1);
    let mut times = Vec::new();
    let mut values = vec![Vec::new(); n];
    for rec in r.records() {
        let rec = rec?;
        times.push(rec[0].parse::<f64>()?);
        for k in 0..n {
            values[k].push(rec[k + 1].parse::<f64>()?);
        }
    }
    let duration = *times.last().context("field CSV has no rows")?;
    let grid = TimeGrid::new(duration, times.len())?;
    Ok(ControlFieldSet::new(grid, values)?)
}

/// JSON envelope of a field set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldArchive {
    pub duration: f64,
    pub steps: usize,
    pub seed: u64,
    pub fields: Vec<Vec<f64>>,
}

impl FieldArchive {
    pub fn new(fields: &ControlFieldSet, seed: u64) -> Self {
        Self {
            duration: fields.grid.duration(),
            steps: fields.grid.steps(),
            seed,
            fields: fields.values.clone(),
        }
    }

    pub fn to_fields(&self) -> Result<ControlFieldSet> {
        let grid = TimeGrid::new(self.duration, self.steps)?;
        Ok(ControlFieldSet::new(grid, self.fields.clone())?)
    }
}

pub fn trace_table(trace: &OptimizationTrace, fields: usize) -> Table {
    Table {
        header: trace_header(fields),
        rows: trace_rows(trace),
    }
}

pub fn trace_header(n: usize) -> Vec<String> {
    let mut h = strings(&[
        "step",
        "s",
        "ds",
        "objective",
        "sigma",
        "lambda",
        "fluence_total",
    ]);
    h.extend((1..=n).map(|k| format!("fluence_{k}")));
    h
}

pub fn trace_rows(trace: &OptimizationTrace) -> Vec<Vec<String>> {
    trace
        .steps
        .iter()
        .enumerate()
        .map(|(i, st)| {
            let mut row = vec![
                i.to_string(),
                num(st.s),
                num(st.ds),
                num(st.objective),
                num(st.sigma),
                num(st.lambda),
                num(st.fluences.iter().sum()),
            ];
            row.extend(st.fluences.iter().map(|f| num(*f)));
            row
        })
        .collect()
}

/// Per-seed optimization summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeSummary {
    pub seed: u64,
    pub time: f64,
    pub steps: usize,
    pub termination: String,
    pub final_objective: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub gradient_evaluations: usize,
    pub phase_singularities: usize,
    pub lambda_star: f64,
    pub fluence_star: f64,
    pub final_sigma: f64,
}

impl OptimizeSummary {
    pub fn new(seed: u64, trace: &OptimizationTrace, steps: usize) -> Self {
        Self {
            seed,
            time: trace.duration,
            steps,
            termination: trace.termination.as_str().into(),
            final_objective: trace.final_objective(),
            accepted_steps: trace.accepted_steps,
            rejected_steps: trace.rejected_steps,
            gradient_evaluations: trace.gradient_evaluations,
            phase_singularities: trace.phase_singularities,
            lambda_star: trace.lambda_star(),
            fluence_star: trace.fluence_star(),
            final_sigma: trace.final_sigma(),
        }
    }
}

pub fn pareto_header() -> Vec<String> {
    strings(&[
        "T",
        "best_objective",
        "effort",
        "lambda_star",
        "fluence_star",
        "termination",
        "seed",
    ])
}

pub fn pareto_rows(points: &[ParetoPoint], seed: u64) -> Vec<Vec<String>> {
    points
        .iter()
        .map(|p| {
            vec![
                num(p.time),
                num(p.objective),
                p.effort.to_string(),
                num(p.lambda_star),
                num(p.fluence_star),
                p.termination.as_str().to_string(),
                seed.to_string(),
            ]
        })
        .collect()
}

pub fn pareto_table(points: &[ParetoPoint], seed: u64) -> Table {
    Table {
        header: pareto_header(),
        rows: pareto_rows(points, seed),
    }
}

/// Scaling CSV: `J, T_star, slope`; the slope is repeated on every row and
/// empty rows mark failed systems.
pub fn scaling_table(rows: &[ScalingRow], slope: Option<f64>) -> Table {
    let slope_s = slope.map(num).unwrap_or_default();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.coupling),
                r.t_star.as_ref().map(|c| num(c.t_star)).unwrap_or_default(),
                slope_s.clone(),
            ]
        })
        .collect();
    Table {
        header: strings(&["J", "T_star", "slope"]),
        rows: body,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub sigma2: f64,
    pub time: f64,
    pub predicted: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub trials: usize,
    pub seed: u64,
}

pub fn noise_table(rows: &[NoiseRow]) -> Table {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.sigma2),
                num(r.time),
                num(r.predicted),
                num(r.mc_mean),
                num(r.mc_stderr),
                r.trials.to_string(),
                r.seed.to_string(),
            ]
        })
        .collect();
    Table {
        header: strings(&[
            "sigma2",
            "T",
            "predicted",
            "mc_mean",
            "mc_stderr",
            "trials",
            "seed",
        ]),
        rows: body,
    }
}

pub fn ensemble_table(records: &[PhaseRunRecord]) -> Table {
    let body: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.seed.to_string(),
                num(r.final_g),
                r.converged.to_string(),
                r.phase_m.to_string(),
                r.effort.to_string(),
                num(r.lambda_star),
            ]
        })
        .collect();
    Table {
        header: strings(&[
            "seed",
            "final_G",
            "converged",
            "phase_m",
            "effort",
            "lambda_star",
        ]),
        rows: body,
    }
}

/// One failed job, collected into `failures.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub job: String,
    pub error: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, 4.12, 1e-300, -2.5e17, f64::MIN_POSITIVE] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(1.25e-4), "1.2500000000000000e-4");
    }

    #[test]
    fn field_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = TimeGrid::new(1.7, 5).unwrap();
        let f = ControlFieldSet::new(
            grid,
            vec![
                vec![0.1, -0.2, 0.3, 1.0 / 3.0, 5.0],
                vec![1.0, 2.0, 3.0, 4.0, 5e-9],
            ],
        )
        .unwrap();
        let path = dir.path().join("f.csv");
        write_fields_csv(&path, &f).unwrap();
        let back = read_fields_csv(&path).unwrap();
        assert_eq!(back.values, f.values);
        assert_eq!(back.grid.steps(), 5);
        assert_eq!(back.grid.duration(), 1.7);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,eps_1,eps_2\n"));
    }
}
