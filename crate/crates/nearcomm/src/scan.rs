//! Parameter scans over `(delta, seed)` written as CSV.

use std::io::Write;

use nearcomm_core::oracle::exact_ground_energy;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::pipeline::run_in_memory;

pub const HEADER: [&str; 10] = [
    "delta_requested",
    "seed",
    "delta_actual",
    "displacement_max",
    "epsilon_report",
    "witness_energy_over_M",
    "exact_ground_over_M",
    "accept_at_r",
    "runtime_s",
    "error",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub delta: f64,
    pub seed: u64,
    pub delta_actual: Option<f64>,
    pub displacement_max: Option<f64>,
    pub epsilon_report: Option<f64>,
    pub witness_energy_over_m: Option<f64>,
    pub exact_ground_over_m: Option<f64>,
    pub accepted: Option<bool>,
    pub runtime_s: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScanOptions {
    pub workers: usize,
    /// Adds wall-clock seconds per row, which makes the output nondeterministic.
    pub record_runtime: bool,
}

fn scan_row(cfg: &ExperimentConfig, delta: f64, seed: u64, record_runtime: bool) -> ScanRow {
    let start = std::time::Instant::now();
    let mut row = ScanRow {
        delta,
        seed,
        delta_actual: None,
        displacement_max: None,
        epsilon_report: None,
        witness_energy_over_m: None,
        exact_ground_over_m: None,
        accepted: None,
        runtime_s: None,
        error: None,
    };
    match run_in_memory(cfg, delta, seed) {
        Ok(run) => {
            let m = run.original.m() as f64;
            row.delta_actual = Some(run.original.metadata.delta_actual);
            row.displacement_max = Some(run.sweep.max_displacement);
            row.epsilon_report = Some(run.sweep.epsilon_report);
            row.witness_energy_over_m = Some(run.energy_original.per_m);
            row.accepted = Some(run.verdict.accepted());
            if (cfg.d as f64).powi(cfg.n as i32) <= cfg.oracle_cap as f64 {
                match exact_ground_energy(&run.original, cfg.oracle_cap) {
                    Ok((e, _)) => row.exact_ground_over_m = Some(e / m),
                    Err(e) => row.error = Some(format!("oracle: {e}")),
                }
            }
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    if record_runtime {
        row.runtime_s = Some(start.elapsed().as_secs_f64());
    }
    row
}

/// One row per `(delta, seed)` in that order, independent of the worker count.
pub fn run_scan(cfg: &ExperimentConfig, opts: ScanOptions) -> Result<Vec<ScanRow>> {
    cfg.validate()?;
    let jobs: Vec<(f64, u64)> = cfg.deltas.iter().flat_map(|&d| (0..cfg.seeds as u64).map(move |s| (d, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::Config(vec![crate::error::field("workers", e.to_string())]))?;
    Ok(pool.install(|| jobs.par_iter().map(|&(d, s)| scan_row(cfg, d, s, opts.record_runtime)).collect()))
}

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    Some(if k % 2 == 1 { xs[k / 2] } else { 0.5 * (xs[k / 2 - 1] + xs[k / 2]) })
}

pub const SUMMARY_HEADER: [&str; 8] = [
    "delta_requested",
    "runs",
    "failures",
    "median_delta_actual",
    "median_displacement_max",
    "median_epsilon_report",
    "median_witness_energy_over_M",
    "accept_rate",
];

/// Rows, then a blank line, then per-delta medians over the successful rows.
pub fn write_csv<W: Write>(rows: &[ScanRow], mut out: W) -> Result<()> {
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(HEADER)?;
        for r in rows {
            w.write_record([
                r.delta.to_string(),
                r.seed.to_string(),
                num(r.delta_actual),
                num(r.displacement_max),
                num(r.epsilon_report),
                num(r.witness_energy_over_m),
                num(r.exact_ground_over_m),
                r.accepted.map(|a| a.to_string()).unwrap_or_default(),
                num(r.runtime_s),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
    }
    out.write_all(b"\n").map_err(csv::Error::from)?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(SUMMARY_HEADER)?;
    let mut deltas: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    deltas.dedup();
    for d in deltas {
        let group: Vec<&ScanRow> = rows.iter().filter(|r| r.delta == d).collect();
        let ok: Vec<&ScanRow> = group.iter().copied().filter(|r| r.error.is_none()).collect();
        let col = |f: fn(&ScanRow) -> Option<f64>| median(ok.iter().filter_map(|r| f(r)).collect());
        let accepted = ok.iter().filter(|r| r.accepted == Some(true)).count();
        let rate = if ok.is_empty() { None } else { Some(accepted as f64 / ok.len() as f64) };
        w.write_record([
            d.to_string(),
            group.len().to_string(),
            (group.len() - ok.len()).to_string(),
            num(col(|r| r.delta_actual)),
            num(col(|r| r.displacement_max)),
            num(col(|r| r.epsilon_report)),
            num(col(|r| r.witness_energy_over_m)),
            num(rate),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(vec![]), None);
    }

    #[test]
    fn failed_rows_count_as_failures() {
        let row = |delta, error: Option<&str>| ScanRow {
            delta,
            seed: 0,
            delta_actual: Some(delta),
            displacement_max: Some(0.0),
            epsilon_report: Some(0.0),
            witness_energy_over_m: Some(0.0),
            exact_ground_over_m: None,
            accepted: Some(true),
            runtime_s: None,
            error: error.map(String::from),
        };
        let mut buf = Vec::new();
        write_csv(&[row(0.0, None), row(0.0, Some("boom"))], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let summary = text.split("\n\n").nth(1).unwrap();
        assert!(summary.lines().nth(1).unwrap().starts_with("0,2,1,0,"));
    }
}
