//! Randomised verification suite for hard equi-partition coarsening.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::coarsening::{
    energy_report, hard_assignment, random_equipartitioned_graph, verify_laplacian_identity, Coarsening, EnergyReport,
    Partition,
};
use super::eigen::eigendecompose;
use crate::error::Result;
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Random signals per instance.
    pub trials: usize,
    pub instances: usize,
    pub min_n: usize,
    pub max_n: usize,
    pub identity_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { seed: 7, trials: 200, instances: 100, min_n: 4, max_n: 64, identity_tol: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplacianIdentitySummary {
    pub instances: usize,
    pub max_deviation: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSummary {
    /// max |A_XY·A_XYᵀ − I|
    pub row_orthonormality_error: f64,
    /// max |P² − P|
    pub idempotence_error: f64,
    /// max |P − Pᵀ|
    pub symmetry_error: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocumentedCounterexample {
    pub graph: String,
    pub clusters: Vec<Vec<usize>>,
    pub signal: Vec<f64>,
    pub e_x: f64,
    pub e_y: f64,
    pub ratio: f64,
    pub reproduced: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub laplacian_identity: LaplacianIdentitySummary,
    pub projection: ProjectionSummary,
    pub energy: EnergyReport,
    pub piecewise_constant_exact: bool,
    pub top_eigvec_contracts: bool,
    pub documented_counterexample: DocumentedCounterexample,
    pub passed: bool,
}

fn instance_rng(seed: u64, i: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ i as u64)
}

/// Projection properties of `P = A_XYᵀ·A_XY` for one partition.
pub(crate) fn projection_errors(p: &Partition) -> Result<(f64, f64, f64, f64, f64)> {
    let a = hard_assignment(p)?;
    let rows = a.matmul_t(&a)?.max_abs_diff(&Matrix::identity(a.rows()))?;
    let proj = a.t_matmul(&a)?;
    let idem = proj.matmul(&proj)?.max_abs_diff(&proj)?;
    let sym = proj.max_abs_diff(&proj.transpose())?;
    let eig = eigendecompose(&proj)?;
    let min = eig.eigenvalues.first().copied().unwrap_or(0.0);
    let max = eig.eigenvalues.last().copied().unwrap_or(0.0);
    Ok((rows, idem, sym, min, max))
}

fn path(n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 })
}

pub fn run_verify_suite(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let mut identity = LaplacianIdentitySummary { instances: 0, max_deviation: 0.0, pass: true };
    let mut proj = ProjectionSummary {
        row_orthonormality_error: 0.0,
        idempotence_error: 0.0,
        symmetry_error: 0.0,
        min_eigenvalue: f64::INFINITY,
        max_eigenvalue: f64::NEG_INFINITY,
        pass: true,
    };
    let mut reports = Vec::with_capacity(cfg.instances);
    for i in 0..cfg.instances {
        let mut rng = instance_rng(cfg.seed, i);
        let (a, p) = random_equipartitioned_graph(&mut rng, cfg.min_n, cfg.max_n)?;

        let l1 = verify_laplacian_identity(&a, &p, cfg.identity_tol)?;
        identity.instances += 1;
        identity.max_deviation = identity.max_deviation.max(l1.max_deviation);
        identity.pass &= l1.pass;

        let (rows, idem, sym, min, max) = projection_errors(&p)?;
        proj.row_orthonormality_error = proj.row_orthonormality_error.max(rows);
        proj.idempotence_error = proj.idempotence_error.max(idem);
        proj.symmetry_error = proj.symmetry_error.max(sym);
        proj.min_eigenvalue = proj.min_eigenvalue.min(min);
        proj.max_eigenvalue = proj.max_eigenvalue.max(max);

        reports.push(energy_report(&a, &p, cfg.trials.max(1), cfg.seed ^ ((i as u64) << 32))?);
    }
    proj.pass = proj.row_orthonormality_error < 1e-12
        && proj.idempotence_error < 1e-12
        && proj.symmetry_error < 1e-12
        && proj.min_eigenvalue >= -1e-9
        && proj.max_eigenvalue <= 1.0 + 1e-9;

    let energy = EnergyReport::merge(&reports);

    let p4 = Partition::contiguous(4, 2)?;
    let signal = vec![4.0, 3.0, 1.0, 0.0];
    let e = Coarsening::new(&path(4), &p4)?.probe(&signal)?;
    let documented = DocumentedCounterexample {
        graph: "path4".into(),
        clusters: p4.clusters().to_vec(),
        signal,
        e_x: e.e_x,
        e_y: e.e_y,
        ratio: e.ratio.unwrap_or(f64::NAN),
        reproduced: (e.e_x - 6.0).abs() < 1e-9 && (e.e_y - 9.0).abs() < 1e-9,
    };

    let passed = identity.pass && proj.pass && energy.asserted_properties_hold() && documented.reproduced;
    Ok(VerifyReport {
        seed: cfg.seed,
        laplacian_identity: identity,
        projection: proj,
        piecewise_constant_exact: energy.piecewise_constant_exact,
        top_eigvec_contracts: energy.top_eigvec_contracts,
        energy,
        documented_counterexample: documented,
        passed,
    })
}
