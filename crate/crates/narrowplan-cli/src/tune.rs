//! Parameter-grid evaluation for the stochastic engine's trust-region scale
//! and moment decay.

use anyhow::Result;

use narrowplan_core::isago::{IsagoConfig, PlanMode};

use crate::bench::{run_matrix, BenchRecord};
use crate::scene::Loaded;

#[derive(Debug, Clone)]
pub struct TuneCell {
    pub delta: f64,
    pub gamma: f64,
    pub runs: usize,
    pub successes: usize,
    pub mean_time_s: f64,
    pub records: Vec<BenchRecord>,
}

/// Runs the full benchmark matrix once per (delta, gamma) pair, always in
/// the incremental mode the parameters belong to.
pub fn run_grid(
    loaded: &Loaded,
    deltas: &[f64],
    gammas: &[f64],
    repeats: usize,
    base_seed: u64,
    base_cfg: &IsagoConfig,
) -> Result<Vec<TuneCell>> {
    let mut out = Vec::new();
    for &delta in deltas {
        for &gamma in gammas {
            let mut cfg = base_cfg.clone();
            cfg.stoma.delta = delta;
            cfg.stoma.gamma = gamma;
            let records = run_matrix(loaded, &[PlanMode::Isago], repeats, base_seed, &cfg)?;
            let runs = records.len();
            let successes = records.iter().filter(|r| r.success).count();
            let mean_time_s = records.iter().map(|r| r.time_s).sum::<f64>() / runs.max(1) as f64;
            out.push(TuneCell { delta, gamma, runs, successes, mean_time_s, records });
        }
    }
    Ok(out)
}

pub fn to_csv(cells: &[TuneCell], fixed_time: bool) -> String {
    let mut out = String::from("delta,gamma,runs,successes,scr_pct,avt_s\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{:.2},{:.6}\n",
            c.delta,
            c.gamma,
            c.runs,
            c.successes,
            100.0 * c.successes as f64 / c.runs.max(1) as f64,
            if fixed_time { 0.0 } else { c.mean_time_s }
        ));
    }
    out
}
