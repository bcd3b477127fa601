use serde::{Deserialize, Serialize};

use crate::error::{contract_err, Result};
use crate::roadnet::RoadNetwork;
use crate::tensor::{Tape, Var};

/// Lane counts are clipped to `1..=LANE_BINS`.
pub const LANE_BINS: usize = 8;

/// Uniform `g×g` grid over the bounding box of the segment coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoGrid {
    pub min_lon: f64,
    pub max_lon: f64,
    pub min_lat: f64,
    pub max_lat: f64,
    pub g: usize,
}

impl GeoGrid {
    pub fn fit(net: &RoadNetwork, g: usize) -> Self {
        let mut grid = GeoGrid {
            min_lon: f64::INFINITY,
            max_lon: f64::NEG_INFINITY,
            min_lat: f64::INFINITY,
            max_lat: f64::NEG_INFINITY,
            g,
        };
        for s in net.segments() {
            grid.min_lon = grid.min_lon.min(s.lon);
            grid.max_lon = grid.max_lon.max(s.lon);
            grid.min_lat = grid.min_lat.min(s.lat);
            grid.max_lat = grid.max_lat.max(s.lat);
        }
        grid
    }

    fn axis(&self, v: f64, lo: f64, hi: f64) -> usize {
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // also catches NaN
        if !(hi > lo) {
            return 0;
        }
        let t = ((v - lo) / (hi - lo) * self.g as f64).floor();
        (t.max(0.0) as usize).min(self.g - 1)
    }

    /// Row-major cell index; points outside the box fall in the border cells.
    pub fn cell(&self, lon: f64, lat: f64) -> usize {
        self.axis(lat, self.min_lat, self.max_lat) * self.g + self.axis(lon, self.min_lon, self.max_lon)
    }

    pub fn cells(&self) -> usize {
        self.g * self.g
    }
}

/// Per-segment lookup indices into the attribute tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputLayout {
    pub n_segments: usize,
    pub length_bins: usize,
    /// Strictly increasing interior cut points.
    pub length_edges: Vec<f64>,
    pub geo: GeoGrid,
    pub lane_idx: Vec<usize>,
    pub length_idx: Vec<usize>,
    pub geo_idx: Vec<usize>,
}

fn quantile_edges(values: &[f64], bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut edges: Vec<f64> = Vec::new();
    if n == 0 {
        return edges;
    }
    for k in 1..bins {
        let e = sorted[((k * n) / bins).min(n - 1)];
        if edges.last().is_none_or(|&last| e > last) {
            edges.push(e);
        }
    }
    edges
}

impl InputLayout {
    pub fn from_network(net: &RoadNetwork, length_bins: usize, geo_grid: usize) -> Self {
        let lengths: Vec<f64> = net.segments().iter().map(|s| s.length_m).collect();
        let length_edges = quantile_edges(&lengths, length_bins);
        let geo = GeoGrid::fit(net, geo_grid);
        let mut layout = InputLayout {
            n_segments: net.n_segments(),
            length_bins,
            length_edges,
            geo,
            lane_idx: Vec::new(),
            length_idx: Vec::new(),
            geo_idx: Vec::new(),
        };
        for s in net.segments() {
            layout.lane_idx.push(Self::lane_bin(s.lane_count));
            layout.length_idx.push(layout.length_bin(s.length_m));
            layout.geo_idx.push(layout.geo.cell(s.lon, s.lat));
        }
        layout
    }

    pub fn lane_bin(lanes: u32) -> usize {
        (lanes as usize).clamp(1, LANE_BINS) - 1
    }

    pub fn length_bin(&self, length: f64) -> usize {
        self.length_edges.partition_point(|&e| e <= length).min(self.length_bins - 1)
    }
}

/// Handles of the four lookup tables on a tape.
#[derive(Clone, Copy, Debug)]
pub struct EmbeddingTables {
    pub id: Var,
    pub lane: Var,
    pub length: Var,
    pub geo: Var,
}

/// `V_S`: per-segment concatenation of id, lane, length and location embeddings.
pub fn contextual_embed(tape: &mut Tape, layout: &InputLayout, tables: &EmbeddingTables) -> Result<Var> {
    let n = layout.n_segments;
    let expect = [
        ("id", tables.id, n),
        ("lane", tables.lane, LANE_BINS),
        ("length", tables.length, layout.length_bins),
        ("geo", tables.geo, layout.geo.cells()),
    ];
    for (name, var, rows) in expect {
        if tape.value(var).rows() != rows {
            return Err(contract_err(
                "contextual_embed",
                format!("{name} table has {} rows, layout needs {rows}", tape.value(var).rows()),
            ));
        }
    }
    let ids: Vec<usize> = (0..n).collect();
    let e_id = tape.gather_rows(tables.id, ids)?;
    let e_ln = tape.gather_rows(tables.lane, layout.lane_idx.clone())?;
    let e_sl = tape.gather_rows(tables.length, layout.length_idx.clone())?;
    let e_ll = tape.gather_rows(tables.geo, layout.geo_idx.clone())?;
    tape.concat_cols(&[e_id, e_ln, e_sl, e_ll])
}
