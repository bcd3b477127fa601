//! Synthetic grid road networks with a planted region/locality hierarchy.
//!
//! Segments sit on the cells of a `width × height` grid and connect to their
//! four neighbours. Regions are rectangular blocks of the grid and each region
//! is cut into rectangular localities. Central segments carry more lanes and a
//! noisier flow signal than peripheral ones, so the high-frequency part of the
//! flow concentrates in the middle of the map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::network::{RoadNetwork, SegmentAttr};
use super::trajectory::TrajectorySet;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub width: usize,
    pub height: usize,
    pub regions: usize,
    pub localities_per_region: usize,
    pub trajectories: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that a walk step prefers a neighbour in the same region.
    pub p_stay: f64,
    /// Probability that a two-way street is made one-way.
    pub p_oneway: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            width: 10,
            height: 10,
            regions: 4,
            localities_per_region: 4,
            trajectories: 400,
            min_len: 4,
            max_len: 16,
            p_stay: 0.8,
            p_oneway: 0.1,
        }
    }
}

impl GeneratorConfig {
    pub fn grid(width: usize, height: usize, regions: usize) -> Self {
        Self { width, height, regions, ..Self::default() }
    }

    /// Named presets: `toy12` (4×3), `grid10` (10×10), `grid20` (20×20).
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "toy12" => Ok(Self {
                width: 4,
                height: 3,
                regions: 2,
                localities_per_region: 2,
                trajectories: 40,
                min_len: 2,
                max_len: 6,
                ..Self::default()
            }),
            "grid10" => Ok(Self::default()),
            "grid20" => Ok(Self { trajectories: 1600, min_len: 6, max_len: 30, ..Self::grid(20, 20, 9) }),
            other => Err(Error::Config(format!("unknown preset `{other}` (expected toy12, grid10 or grid20)"))),
        }
    }
}

/// Ground-truth grouping used to build the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedHierarchy {
    pub region_of: Vec<usize>,
    pub locality_of: Vec<usize>,
    pub n_regions: usize,
    pub n_localities: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticBundle {
    pub network: RoadNetwork,
    pub trajectories: TrajectorySet,
    pub labels: Vec<usize>,
    pub planted: PlantedHierarchy,
}

/// Factor `k = a·b` with `a ≤ max_a`, `b ≤ max_b`, as square as possible.
fn factor(k: usize, max_a: usize, max_b: usize) -> Option<(usize, usize)> {
    (1..=k)
        .filter(|&a| k.is_multiple_of(a))
        .map(|a| (a, k / a))
        .filter(|&(a, b)| a <= max_a && b <= max_b)
        .min_by_key(|&(a, b)| (a.abs_diff(b), a))
}

/// Splits `0..len` into `parts` contiguous blocks; returns the block of `x`
/// and that block's `(start, size)`.
fn block_of(x: usize, len: usize, parts: usize) -> (usize, usize, usize) {
    let b = x * parts / len;
    let start = (b * len).div_ceil(parts);
    let end = ((b + 1) * len).div_ceil(parts);
    (b, start, end - start)
}

pub fn generate_synthetic(cfg: &GeneratorConfig, seed: u64) -> Result<SyntheticBundle> {
    let (w, h) = (cfg.width, cfg.height);
    let n = w * h;
    if w == 0 || h == 0 {
        return Err(Error::Config("grid dimensions must be positive".into()));
    }
    if cfg.regions == 0 || cfg.localities_per_region == 0 {
        return Err(Error::Config("regions and localities per region must be positive".into()));
    }
    if cfg.regions * cfg.localities_per_region > n {
        return Err(Error::Config(format!(
            "{} regions × {} localities exceed {n} segments",
            cfg.regions, cfg.localities_per_region
        )));
    }
    if cfg.min_len < 2 || cfg.max_len < cfg.min_len {
        return Err(Error::Config(format!("invalid trajectory length bounds {}..={}", cfg.min_len, cfg.max_len)));
    }
    if !(0.0..=1.0).contains(&cfg.p_stay) || !(0.0..=1.0).contains(&cfg.p_oneway) {
        return Err(Error::Config("probabilities must lie in [0, 1]".into()));
    }
    let (rx, ry) = factor(cfg.regions, w, h)
        .ok_or_else(|| Error::Config(format!("cannot tile a {w}x{h} grid into {} regions", cfg.regions)))?;
    let min_block_w = w / rx;
    let min_block_h = h / ry;
    let (lx, ly) = factor(cfg.localities_per_region, min_block_w, min_block_h).ok_or_else(|| {
        Error::Config(format!(
            "cannot cut {}x{} region blocks into {} localities",
            min_block_w, min_block_h, cfg.localities_per_region
        ))
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = |x: usize, y: usize| y * w + x;

    let mut region_of = vec![0; n];
    let mut locality_of = vec![0; n];
    for y in 0..h {
        for x in 0..w {
            let (bx, x0, bw) = block_of(x, w, rx);
            let (by, y0, bh) = block_of(y, h, ry);
            let region = by * rx + bx;
            let (sx, _, _) = block_of(x - x0, bw, lx);
            let (sy, _, _) = block_of(y - y0, bh, ly);
            region_of[cell(x, y)] = region;
            locality_of[cell(x, y)] = region * cfg.localities_per_region + sy * lx + sx;
        }
    }

    // Normalised distance from the map centre: 0 in the middle, 1 at the corners.
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let max_d = (cx * cx + cy * cy).sqrt().max(1e-12);
    let centrality = |x: usize, y: usize| {
        let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
        1.0 - d / max_d
    };

    let mut segments = Vec::with_capacity(n);
    for y in 0..h {
        for x in 0..w {
            let c = centrality(x, y);
            let lanes = 1 + (c * 4.0).floor() as u32 + u32::from(rng.random_bool(0.3));
            let length_m = rng.random_range(80.0..400.0);
            let lon = 116.30 + x as f64 * 0.002 + rng.random_range(-2e-4..2e-4);
            let lat = 39.90 + y as f64 * 0.002 + rng.random_range(-2e-4..2e-4);
            let u = if w > 1 { x as f64 / (w - 1) as f64 } else { 0.5 };
            let v = if h > 1 { y as f64 / (h - 1) as f64 } else { 0.5 };
            let base =
                200.0 + 120.0 * (std::f64::consts::PI * (u - 0.5)).cos() * (std::f64::consts::PI * (v - 0.5)).cos();
            let noise_sd = 2.0 + 80.0 * c * c;
            let noise = Normal::new(0.0, noise_sd).expect("positive sd").sample(&mut rng);
            segments.push(SegmentAttr {
                id: cell(x, y),
                lane_count: lanes,
                length_m,
                lon,
                lat,
                label: Some(region_of[cell(x, y)]),
                flow: Some((base + noise).max(0.0)),
            });
        }
    }

    // Undirected grid streets, some made one-way while every segment keeps
    // at least one way in and one way out.
    let mut streets = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                streets.push((cell(x, y), cell(x + 1, y)));
            }
            if y + 1 < h {
                streets.push((cell(x, y), cell(x, y + 1)));
            }
        }
    }
    let mut out_deg = vec![0usize; n];
    let mut in_deg = vec![0usize; n];
    for &(a, b) in &streets {
        out_deg[a] += 1;
        out_deg[b] += 1;
        in_deg[a] += 1;
        in_deg[b] += 1;
    }
    let mut edges = Vec::with_capacity(2 * streets.len());
    for &(a, b) in &streets {
        let mut keep_ab = true;
        let mut keep_ba = true;
        if rng.random_bool(cfg.p_oneway) {
            // drop (src → dst)
            let (src, dst) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
            if out_deg[src] > 1 && in_deg[dst] > 1 {
                out_deg[src] -= 1;
                in_deg[dst] -= 1;
                if src == a {
                    keep_ab = false;
                } else {
                    keep_ba = false;
                }
            }
        }
        if keep_ab {
            edges.push((a, b));
        }
        if keep_ba {
            edges.push((b, a));
        }
    }
    let (network, _) = RoadNetwork::from_parts(segments, &edges)?;

    let mut trajectories = Vec::with_capacity(cfg.trajectories);
    while trajectories.len() < cfg.trajectories {
        if n < 2 {
            return Err(Error::Config("trajectories need at least two segments".into()));
        }
        let target = rng.random_range(cfg.min_len..=cfg.max_len);
        let mut walk = vec![rng.random_range(0..n)];
        while walk.len() < target {
            let cur = *walk.last().expect("non-empty walk");
            let prev = walk.len().checked_sub(2).map(|k| walk[k]);
            let mut options: Vec<usize> =
                network.out_neighbors(cur).iter().copied().filter(|&s| Some(s) != prev).collect();
            if options.is_empty() {
                options = network.out_neighbors(cur).to_vec();
            }
            if options.is_empty() {
                break;
            }
            let same: Vec<usize> = options.iter().copied().filter(|&s| region_of[s] == region_of[cur]).collect();
            let pool = if !same.is_empty() && rng.random_bool(cfg.p_stay) { &same } else { &options };
            walk.push(pool[rng.random_range(0..pool.len())]);
        }
        if walk.len() >= 2 {
            trajectories.push(walk);
        }
    }

    Ok(SyntheticBundle {
        labels: region_of.clone(),
        network,
        trajectories: TrajectorySet::new(trajectories)?,
        planted: PlantedHierarchy {
            region_of,
            locality_of,
            n_regions: cfg.regions,
            n_localities: cfg.regions * cfg.localities_per_region,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_region_two_by_two() {
        let cfg = GeneratorConfig { localities_per_region: 1, ..GeneratorConfig::grid(2, 2, 1) };
        let b = generate_synthetic(&cfg, 1).unwrap();
        assert_eq!(b.network.n_segments(), 4);
        assert!(b.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn too_many_localities_is_config_error() {
        let cfg = GeneratorConfig { localities_per_region: 5, ..GeneratorConfig::grid(2, 2, 1) };
        assert!(matches!(generate_synthetic(&cfg, 1), Err(Error::Config(_))));
    }

    #[test]
    fn bad_length_bounds_rejected() {
        let cfg = GeneratorConfig { min_len: 1, ..GeneratorConfig::default() };
        assert!(generate_synthetic(&cfg, 1).is_err());
    }

    #[test]
    fn blocks_cover_range() {
        for len in 1..20 {
            for parts in 1..=len {
                let mut sizes = vec![0; parts];
                for x in 0..len {
                    let (b, start, size) = block_of(x, len, parts);
                    assert!(x >= start && x < start + size);
                    sizes[b] += 1;
                }
                assert!(sizes.iter().all(|&s| s > 0));
            }
        }
    }

    #[test]
    fn regions_and_localities_planted() {
        let b = generate_synthetic(&GeneratorConfig::default(), 3).unwrap();
        let mut regions = b.planted.region_of.clone();
        regions.sort_unstable();
        regions.dedup();
        assert_eq!(regions, vec![0, 1, 2, 3]);
        let mut locs = b.planted.locality_of.clone();
        locs.sort_unstable();
        locs.dedup();
        assert_eq!(locs.len(), 16);
        for (s, &l) in b.planted.locality_of.iter().enumerate() {
            assert_eq!(l / 4, b.planted.region_of[s]);
        }
    }
}
