//! Hard equi-partition coarsening and the checks around it.
//!
//! With clusters of equal size `m`, the assignment `A_XY` has entries `1/√m`
//! on (cluster, member) pairs. Its rows are orthonormal, so `P = A_XYᵀA_XY`
//! is an orthogonal projection and the coarse Laplacian built from row sums
//! of `A_Y = A_XY·A_X·A_XYᵀ` equals `A_XY·L_X·A_XYᵀ`.
//!
//! The energy inequality `E_Y ≤ E_X` for an arbitrary signal does not follow
//! from that: `P·L_X·P ⪯ L_X` fails in general (path-4 with clusters
//! {0,1},{2,3} and `z = (4,3,1,0)` gives `E_X = 6`, `E_Y = 9`). Only the
//! cases that are actually provable are asserted here; the rest is measured.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::eigen::eigendecompose;
use super::graph::{degree_laplacian, dirichlet_energy, symmetrize};
use crate::error::{contract_err, shape_err, Result};
use crate::tensor::Matrix;

/// Disjoint cover of `0..n` by clusters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    clusters: Vec<Vec<usize>>,
    n: usize,
}

impl Partition {
    pub fn new(clusters: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for (c, members) in clusters.iter().enumerate() {
            if members.is_empty() {
                return Err(contract_err("partition", format!("cluster {c} is empty")));
            }
            for &k in members {
                if k >= n {
                    return Err(contract_err("partition", format!("node {k} out of range for {n} nodes")));
                }
                if std::mem::replace(&mut seen[k], true) {
                    return Err(contract_err("partition", format!("node {k} appears in more than one cluster")));
                }
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(contract_err("partition", format!("node {k} is not covered")));
        }
        Ok(Self { clusters, n })
    }

    /// Consecutive blocks `{0..m}, {m..2m}, …`.
    pub fn contiguous(n: usize, m: usize) -> Result<Self> {
        if m == 0 || !n.is_multiple_of(m) {
            return Err(contract_err("partition", format!("cluster size {m} does not divide {n}")));
        }
        Self::new((0..n / m).map(|c| (c * m..(c + 1) * m).collect()).collect(), n)
    }

    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut clusters = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            clusters[l].push(i);
        }
        clusters.retain(|c| !c.is_empty());
        Self::new(clusters, labels.len())
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// `Some(m)` iff every cluster has exactly `m` members.
    pub fn cluster_size(&self) -> Option<usize> {
        let m = self.clusters.first()?.len();
        self.clusters.iter().all(|c| c.len() == m).then_some(m)
    }

    pub fn is_equi(&self) -> bool {
        self.cluster_size().is_some()
    }

    pub fn cluster_of(&self) -> Vec<usize> {
        let mut of = vec![0; self.n];
        for (c, members) in self.clusters.iter().enumerate() {
            for &k in members {
                of[k] = c;
            }
        }
        of
    }
}

/// `A_XY` (clusters × nodes) with `1/√m` on member entries.
pub fn hard_assignment(p: &Partition) -> Result<Matrix> {
    let m = p
        .cluster_size()
        .ok_or_else(|| contract_err("hard_assignment", "partition is not an equi-partition (cluster sizes differ)"))?;
    let w = 1.0 / (m as f64).sqrt();
    let mut a = Matrix::zeros(p.n_clusters(), p.n());
    for (c, members) in p.clusters().iter().enumerate() {
        for &k in members {
            a.set(c, k, w);
        }
    }
    Ok(a)
}

/// `A_Y = A_XY·A_X·A_XYᵀ` and `L_Y = D_Y − A_Y` with `D_Y` from the rows of `A_Y`.
pub fn coarsen(a_x: &Matrix, a_xy: &Matrix) -> Result<(Matrix, Matrix)> {
    if !a_x.is_square() || a_xy.cols() != a_x.rows() {
        return Err(shape_err(
            "coarsen",
            format!("adjacency is {}x{}, assignment is {}x{}", a_x.rows(), a_x.cols(), a_xy.rows(), a_xy.cols()),
        ));
    }
    let a_y = a_xy.matmul(a_x)?.matmul_t(a_xy)?;
    let l_y = degree_laplacian(&a_y)?;
    Ok((a_y, l_y))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplacianIdentityCheck {
    pub max_deviation: f64,
    pub pass: bool,
}

/// Compares `L_Y` from the coarse degrees with the projected Laplacian
/// `A_XY·L_X·A_XYᵀ`.
pub fn verify_laplacian_identity(a_x: &Matrix, p: &Partition, tol: f64) -> Result<LaplacianIdentityCheck> {
    let a_x = symmetrize(a_x)?;
    let a_xy = hard_assignment(p)?;
    let (_, l_y) = coarsen(&a_x, &a_xy)?;
    let l_x = degree_laplacian(&a_x)?;
    let projected = a_xy.matmul(&l_x)?.matmul_t(&a_xy)?;
    let max_deviation = l_y.max_abs_diff(&projected)?;
    Ok(LaplacianIdentityCheck { max_deviation, pass: max_deviation < tol })
}

/// Energies of one signal before and after projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalEnergy {
    pub e_x: f64,
    pub e_y: f64,
    /// `E_Y / E_X`, absent when `E_X` is (numerically) zero.
    pub ratio: Option<f64>,
}

/// Fine and coarse Laplacians of one partitioned graph.
#[derive(Clone, Debug)]
pub struct Coarsening {
    pub l_x: Matrix,
    pub l_y: Matrix,
    pub a_xy: Matrix,
    pub partition: Partition,
}

impl Coarsening {
    pub fn new(a_x: &Matrix, p: &Partition) -> Result<Self> {
        let a_x = symmetrize(a_x)?;
        if a_x.rows() != p.n() {
            return Err(shape_err("coarsening", format!("graph has {} nodes, partition covers {}", a_x.rows(), p.n())));
        }
        let a_xy = hard_assignment(p)?;
        let (_, l_y) = coarsen(&a_x, &a_xy)?;
        Ok(Self { l_x: degree_laplacian(&a_x)?, l_y, a_xy, partition: p.clone() })
    }

    pub fn probe(&self, z: &[f64]) -> Result<SignalEnergy> {
        let e_x = dirichlet_energy(&self.l_x, z)?;
        let z_y = self.a_xy.matmul(&Matrix::column(z))?.into_vec();
        let e_y = dirichlet_energy(&self.l_y, &z_y)?;
        let ratio = (e_x.abs() > 1e-12).then(|| e_y / e_x);
        Ok(SignalEnergy { e_x, e_y, ratio })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioStats {
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
}

impl RatioStats {
    fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let k = v.len();
        let median = if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) };
        Some(Self { min: v[0], median, mean: v.iter().sum::<f64>() / k as f64, max: v[k - 1] })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub trial: usize,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedEnergy {
    pub signal: String,
    #[serde(flatten)]
    pub energy: SignalEnergy,
}

/// Energy behaviour of a coarsening over random and structured signals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub trials: usize,
    pub ratios: Option<RatioStats>,
    /// Cluster-constant signals keep their energy (|E_X − E_Y| ≤ 1e-9).
    pub piecewise_constant_exact: bool,
    /// The top eigenvector does not gain energy (E_Y ≤ E_X + 1e-9).
    pub top_eigvec_contracts: bool,
    /// The constant signal has zero energy on both graphs.
    pub constant_zero: bool,
    /// Random trials whose energy ratio exceeds 1.
    pub counterexamples: Vec<Counterexample>,
    pub structured: Vec<NamedEnergy>,
    #[serde(skip)]
    pub records: Vec<SignalEnergy>,
}

impl EnergyReport {
    /// Pools several reports; trial indices are renumbered consecutively.
    pub fn merge(reports: &[EnergyReport]) -> EnergyReport {
        let mut records = Vec::new();
        let mut counterexamples = Vec::new();
        let mut offset = 0;
        for r in reports {
            records.extend(r.records.iter().cloned());
            counterexamples
                .extend(r.counterexamples.iter().map(|c| Counterexample { trial: c.trial + offset, ratio: c.ratio }));
            offset += r.trials;
        }
        let ratios: Vec<f64> = records.iter().filter_map(|r| r.ratio).collect();
        EnergyReport {
            trials: offset,
            ratios: RatioStats::from_values(&ratios),
            piecewise_constant_exact: reports.iter().all(|r| r.piecewise_constant_exact),
            top_eigvec_contracts: reports.iter().all(|r| r.top_eigvec_contracts),
            constant_zero: reports.iter().all(|r| r.constant_zero),
            counterexamples,
            structured: Vec::new(),
            records,
        }
    }

    pub fn asserted_properties_hold(&self) -> bool {
        self.piecewise_constant_exact && self.top_eigvec_contracts && self.constant_zero
    }
}

const ENERGY_TOL: f64 = 1e-9;
const PIECEWISE_SIGNALS: usize = 5;

pub fn energy_report(a_x: &Matrix, p: &Partition, trials: usize, seed: u64) -> Result<EnergyReport> {
    if trials == 0 {
        return Err(contract_err("energy_report", "need at least one trial"));
    }
    let c = Coarsening::new(a_x, p)?;
    let n = p.n();
    let basis = eigendecompose(&c.l_x)?;

    let mut records = Vec::with_capacity(trials);
    let mut counterexamples = Vec::new();
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        z.iter_mut().for_each(|v| *v /= norm);
        let rec = c.probe(&z)?;
        if let Some(ratio) = rec.ratio {
            if ratio > 1.0 + ENERGY_TOL {
                counterexamples.push(Counterexample { trial: t, ratio });
            }
        }
        records.push(rec);
    }

    let mut structured = Vec::new();
    let cluster_of = p.cluster_of();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5EED));
    let mut piecewise_constant_exact = true;
    for k in 0..PIECEWISE_SIGNALS {
        let values: Vec<f64> = (0..p.n_clusters()).map(|_| rng.sample(StandardNormal)).collect();
        let z: Vec<f64> = cluster_of.iter().map(|&c| values[c]).collect();
        let e = c.probe(&z)?;
        piecewise_constant_exact &= (e.e_x - e.e_y).abs() <= ENERGY_TOL;
        structured.push(NamedEnergy { signal: format!("piecewise_constant_{k}"), energy: e });
    }

    let constant = c.probe(&vec![1.0; n])?;
    let constant_zero = constant.e_x.abs() <= ENERGY_TOL && constant.e_y.abs() <= ENERGY_TOL;
    structured.push(NamedEnergy { signal: "constant".into(), energy: constant });

    let low = c.probe(&basis.vector(0))?;
    structured.push(NamedEnergy { signal: "lowest_eigvec".into(), energy: low });
    if n > 1 {
        let fiedler = c.probe(&basis.vector(1))?;
        structured.push(NamedEnergy { signal: "fiedler_eigvec".into(), energy: fiedler });
    }
    let top = c.probe(&basis.vector(n - 1))?;
    let top_eigvec_contracts = top.e_y <= top.e_x + ENERGY_TOL;
    structured.push(NamedEnergy { signal: "highest_eigvec".into(), energy: top });

    let ratios: Vec<f64> = records.iter().filter_map(|r| r.ratio).collect();
    Ok(EnergyReport {
        trials,
        ratios: RatioStats::from_values(&ratios),
        piecewise_constant_exact,
        top_eigvec_contracts,
        constant_zero,
        counterexamples,
        structured,
        records,
    })
}

/// A random connected undirected graph on `n ∈ [min_n, max_n]` nodes with an
/// equi-partition whose cluster size divides `n`.
pub fn random_equipartitioned_graph(rng: &mut impl Rng, min_n: usize, max_n: usize) -> Result<(Matrix, Partition)> {
    let n = rng.random_range(min_n.max(1)..=max_n.max(min_n));
    let divisors: Vec<usize> = (1..=n).filter(|m| n % m == 0).collect();
    let m = divisors[rng.random_range(0..divisors.len())];

    let mut a = Matrix::zeros(n, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    // random spanning tree keeps the graph connected
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        let child = order[k];
        a.set(parent, child, 1.0);
        a.set(child, parent, 1.0);
    }
    let p_extra = rng.random_range(0.0..0.3);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p_extra) {
                a.set(i, j, 1.0);
                a.set(j, i, 1.0);
            }
        }
    }

    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(rng);
    let clusters = nodes.chunks(m).map(<[usize]>::to_vec).collect();
    Ok((a, Partition::new(clusters, n)?))
}
