use serde::{Deserialize, Serialize};

use super::eigen::eigendecompose;
use super::graph::{dirichlet_energy, frequency_split, gft, laplacian};
use crate::error::{shape_err, Result};
use crate::roadnet::RoadNetwork;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeClass {
    Low,
    High,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeFrequency {
    pub source: usize,
    pub target: usize,
    pub class: EdgeClass,
}

/// Frequency view of one signal on a road network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub n_segments: usize,
    pub low_band: usize,
    pub eigenvalues: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub energy_total: f64,
    pub energy_low: f64,
    pub energy_high: f64,
    pub high_edges: usize,
    pub low_edges: usize,
    pub edges: Vec<EdgeFrequency>,
}

/// `⌈0.1·n⌉` lowest frequencies.
pub fn default_low_band(n: usize) -> usize {
    n.div_ceil(10)
}

/// Splits `signal` into low/high bands and labels every undirected edge.
///
/// Edge `{i, j}` is high-frequency when `|x_high(i)| + |x_high(j)|` exceeds
/// `|x_low(i) − x̄_low| + |x_low(j) − x̄_low|`.
pub fn edge_frequency_report(net: &RoadNetwork, signal: &[f64], low_band: Option<usize>) -> Result<SpectralReport> {
    let n = net.n_segments();
    if signal.len() != n {
        return Err(shape_err(
            "edge_frequency_report",
            format!("signal has length {}, network has {n} segments", signal.len()),
        ));
    }
    let l = laplacian(&net.adjacency())?;
    let basis = eigendecompose(&l)?;
    let k = low_band.unwrap_or_else(|| default_low_band(n));
    let (low, high) = frequency_split(&basis, signal, k)?;
    let coefficients = gft(&basis, signal)?;
    let mean_low = if n == 0 { 0.0 } else { low.iter().sum::<f64>() / n as f64 };

    let mut pairs: Vec<(usize, usize)> = net.edges().map(|(a, b)| (a.min(b), a.max(b))).collect();
    pairs.sort_unstable();
    pairs.dedup();
    let edges: Vec<EdgeFrequency> = pairs
        .into_iter()
        .map(|(i, j)| {
            let hf = high[i].abs() + high[j].abs();
            let lf = (low[i] - mean_low).abs() + (low[j] - mean_low).abs();
            EdgeFrequency { source: i, target: j, class: if hf > lf { EdgeClass::High } else { EdgeClass::Low } }
        })
        .collect();
    let high_edges = edges.iter().filter(|e| e.class == EdgeClass::High).count();
    Ok(SpectralReport {
        n_segments: n,
        low_band: k,
        energy_total: dirichlet_energy(&l, signal)?,
        energy_low: dirichlet_energy(&l, &low)?,
        energy_high: dirichlet_energy(&l, &high)?,
        eigenvalues: basis.eigenvalues,
        coefficients,
        low_edges: edges.len() - high_edges,
        high_edges,
        edges,
    })
}
