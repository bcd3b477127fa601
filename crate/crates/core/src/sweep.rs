//! Grid sweep over locality/region counts.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::eval::classify_report;
use crate::roadnet::{RoadNetwork, TrajectorySet};
use crate::training::Trainer;

pub const SWEEP_HEADER: &str = "n_l,n_r,status,final_loss,macro_f1,macro_auc";

#[derive(Clone, Debug, PartialEq)]
pub enum CellStatus {
    Ok,
    /// Violates `N_R < N_L < N_S`; not trained.
    Invalid,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub n_l: usize,
    pub n_r: usize,
    pub seed: u64,
    pub status: CellStatus,
    pub final_loss: Option<f64>,
    pub macro_f1: Option<f64>,
    pub macro_auc: Option<f64>,
}

/// Seed for cell `k`, so cells are independent yet reproducible.
pub fn cell_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64 + 1)
}

/// Worker count from `HIFINET_THREADS`, default 1.
pub fn worker_threads() -> usize {
    std::env::var("HIFINET_THREADS").ok().and_then(|v| v.trim().parse().ok()).filter(|&n: &usize| n >= 1).unwrap_or(1)
}

pub struct SweepSpec<'a> {
    pub network: &'a RoadNetwork,
    pub trajectories: &'a TrajectorySet,
    pub labels: &'a [usize],
    pub base: &'a TrainConfig,
    pub n_l: &'a [usize],
    pub n_r: &'a [usize],
    pub epochs: usize,
    pub seed: u64,
}

fn run_cell(spec: &SweepSpec<'_>, n_l: usize, n_r: usize, seed: u64) -> SweepCell {
    let mut cell =
        SweepCell { n_l, n_r, seed, status: CellStatus::Ok, final_loss: None, macro_f1: None, macro_auc: None };
    let cfg = TrainConfig { n_l: Some(n_l), n_r: Some(n_r), ..spec.base.clone() };
    if cfg.hierarchy_sizes(spec.network.n_segments()).is_err() {
        cell.status = CellStatus::Invalid;
        return cell;
    }
    let outcome = (|| -> Result<()> {
        let mut trainer = Trainer::new(spec.network, spec.trajectories, &cfg, seed)?;
        let trace = trainer.run(spec.epochs)?;
        let state = trainer.model().evaluate(trainer.params())?;
        cell.final_loss = trace.last().map(|r| r.total);
        // Same split for every cell so metrics are comparable.
        let report = classify_report(&state.h_hat, spec.labels, spec.seed)?;
        cell.macro_f1 = Some(report.macro_f1);
        cell.macro_auc = Some(report.macro_auc);
        Ok(())
    })();
    if let Err(e) = outcome {
        log::warn!("sweep cell N_L={n_l} N_R={n_r} failed: {e}");
        cell.status = CellStatus::Failed(e.to_string());
    }
    cell
}

/// Runs every `(n_l, n_r)` pair in row-major order on up to `threads` workers.
/// Output order and values do not depend on the thread count.
pub fn run_sweep(spec: &SweepSpec<'_>, threads: usize) -> Result<Vec<SweepCell>> {
    if spec.labels.len() != spec.network.n_segments() {
        return Err(Error::Data(format!("{} labels for {} segments", spec.labels.len(), spec.network.n_segments())));
    }
    spec.base.validate()?;
    let grid: Vec<(usize, usize)> = spec.n_l.iter().flat_map(|&l| spec.n_r.iter().map(move |&r| (l, r))).collect();
    let results: Vec<Mutex<Option<SweepCell>>> = grid.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, grid.len().max(1)) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(l, r)) = grid.get(k) else { break };
                let cell = run_cell(spec, l, r, cell_seed(spec.seed, k));
                *results[k].lock().expect("sweep result lock") = Some(cell);
            });
        }
    });
    Ok(results.into_iter().map(|m| m.into_inner().expect("sweep result lock").expect("every cell runs")).collect())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn write_sweep_csv(mut w: impl Write, cells: &[SweepCell]) -> Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for c in cells {
        let status = match &c.status {
            CellStatus::Ok => "ok".to_string(),
            CellStatus::Invalid => "invalid".to_string(),
            CellStatus::Failed(msg) => format!("failed: {}", msg.replace([',', '\n'], ";")),
        };
        writeln!(w, "{},{},{},{},{},{}", c.n_l, c.n_r, status, opt(c.final_loss), opt(c.macro_f1), opt(c.macro_auc))?;
    }
    Ok(())
}
