use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Raw attributes of one road segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentAttr {
    pub id: usize,
    #[serde(rename = "lanes")]
    pub lane_count: u32,
    pub length_m: f64,
    pub lon: f64,
    pub lat: f64,
    #[serde(default)]
    pub label: Option<usize>,
    /// Traffic-flow signal; used for spectral analysis only, never embedded.
    #[serde(default)]
    pub flow: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    segments: Vec<SegmentAttr>,
    edges: Vec<[i64; 2]>,
}

/// Counts of inputs silently normalised while loading.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub self_loops_dropped: usize,
    pub duplicates_dropped: usize,
}

/// Directed segment graph with per-segment attributes.
///
/// Adjacency is stored as sorted out-neighbour lists; `A_S[i, j] = 1` iff
/// `j` is in `out[i]`. There are no self-loops and no duplicate edges.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadNetwork {
    segments: Vec<SegmentAttr>,
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
}

fn load_err(context: impl Into<String>, detail: impl Into<String>) -> Error {
    Error::Load { context: context.into(), detail: detail.into() }
}

impl RoadNetwork {
    /// Validates attributes and edges, dropping self-loops and duplicates.
    pub fn from_parts(segments: Vec<SegmentAttr>, edges: &[(usize, usize)]) -> Result<(Self, LoadReport)> {
        for (pos, s) in segments.iter().enumerate() {
            let ctx = |field: &str| format!("segments[{pos}].{field}");
            if s.id != pos {
                return Err(load_err(ctx("id"), format!("id {} does not match position {pos}", s.id)));
            }
            if s.lane_count < 1 {
                return Err(load_err(ctx("lanes"), "lane count must be at least 1"));
            }
            if !(s.length_m.is_finite() && s.length_m > 0.0) {
                return Err(load_err(ctx("length_m"), format!("length must be positive, got {}", s.length_m)));
            }
            if !s.lon.is_finite() || !s.lat.is_finite() {
                return Err(load_err(ctx("lon/lat"), "coordinates must be finite"));
            }
            if let Some(f) = s.flow {
                if !(f.is_finite() && f >= 0.0) {
                    return Err(load_err(ctx("flow"), format!("flow must be non-negative, got {f}")));
                }
            }
        }
        let n = segments.len();
        let mut out = vec![Vec::new(); n];
        let mut report = LoadReport::default();
        for (k, &(a, b)) in edges.iter().enumerate() {
            for idx in [a, b] {
                if idx >= n {
                    return Err(load_err(
                        format!("edges[{k}]"),
                        format!("segment index {idx} out of range ({n} segments)"),
                    ));
                }
            }
            if a == b {
                report.self_loops_dropped += 1;
                continue;
            }
            out[a].push(b);
        }
        for list in &mut out {
            list.sort_unstable();
            let before = list.len();
            list.dedup();
            report.duplicates_dropped += before - list.len();
        }
        let mut inc = vec![Vec::new(); n];
        for (a, list) in out.iter().enumerate() {
            for &b in list {
                inc[b].push(a);
            }
        }
        if report.self_loops_dropped > 0 || report.duplicates_dropped > 0 {
            log::warn!(
                "normalised network input: {} self-loop(s), {} duplicate edge(s) dropped",
                report.self_loops_dropped,
                report.duplicates_dropped
            );
        }
        Ok((Self { segments, out, inc }, report))
    }

    pub fn parse_json(text: &str) -> Result<(Self, LoadReport)> {
        let file: NetworkFile = serde_json::from_str(text)
            .map_err(|e| load_err(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        let mut edges = Vec::with_capacity(file.edges.len());
        for (k, [a, b]) in file.edges.into_iter().enumerate() {
            let conv = |v: i64| {
                usize::try_from(v).map_err(|_| load_err(format!("edges[{k}]"), format!("negative segment index {v}")))
            };
            edges.push((conv(a)?, conv(b)?));
        }
        Self::from_parts(file.segments, &edges)
    }

    pub fn to_json(&self) -> Result<String> {
        let edges = self.edges().map(|(a, b)| [a as i64, b as i64]).collect();
        let file = NetworkFile { segments: self.segments.clone(), edges };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn segments(&self) -> &[SegmentAttr] {
        &self.segments
    }

    pub fn segment(&self, i: usize) -> &SegmentAttr {
        &self.segments[i]
    }

    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out[i]
    }

    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.inc[i]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.out.get(a).is_some_and(|l| l.binary_search(&b).is_ok())
    }

    /// Directed edges in `(source, target)` lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out.iter().enumerate().flat_map(|(a, l)| l.iter().map(move |&b| (a, b)))
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    /// Dense binary adjacency `A_S`.
    pub fn adjacency(&self) -> Matrix {
        let n = self.n_segments();
        let mut a = Matrix::zeros(n, n);
        for (i, j) in self.edges() {
            a.set(i, j, 1.0);
        }
        a
    }

    pub fn labels(&self) -> Option<Vec<usize>> {
        self.segments.iter().map(|s| s.label).collect()
    }

    pub fn flow(&self) -> Option<Vec<f64>> {
        self.segments.iter().map(|s| s.flow).collect()
    }

    /// Weak connectivity by breadth-first traversal ignoring direction.
    pub fn is_weakly_connected(&self) -> bool {
        let n = self.n_segments();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in self.out[v].iter().chain(&self.inc[v]) {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == n
    }
}

pub fn load_network(path: impl AsRef<Path>) -> Result<(RoadNetwork, LoadReport)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| load_err(path.display().to_string(), e.to_string()))?;
    RoadNetwork::parse_json(&text)
}

pub fn write_network(net: &RoadNetwork, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, net.to_json()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(id: usize) -> String {
        format!(r#"{{"id":{id},"lanes":2,"length_m":100.0,"lon":116.0,"lat":39.0,"label":null,"flow":null}}"#)
    }

    fn file(n: usize, edges: &str) -> String {
        let segs: Vec<String> = (0..n).map(seg).collect();
        format!(r#"{{"segments":[{}],"edges":{edges}}}"#, segs.join(","))
    }

    #[test]
    fn minimal_file() {
        let (net, report) = RoadNetwork::parse_json(&file(2, "[[0,1]]")).unwrap();
        assert_eq!(net.n_segments(), 2);
        assert!(net.has_edge(0, 1));
        assert!(!net.has_edge(1, 0));
        assert_eq!(report, LoadReport::default());
    }

    #[test]
    fn self_loop_dropped_with_count() {
        let (net, report) = RoadNetwork::parse_json(&file(2, "[[0,0],[0,1],[0,1]]")).unwrap();
        assert_eq!(report.self_loops_dropped, 1);
        assert_eq!(report.duplicates_dropped, 1);
        assert_eq!(net.edge_count(), 1);
    }

    #[test]
    fn out_of_range_index_is_named() {
        let err = RoadNetwork::parse_json(&file(3, "[[0,5]]")).unwrap_err().to_string();
        assert!(err.contains('5') && err.contains("edges[0]"), "{err}");
    }

    #[test]
    fn non_positive_length_rejected() {
        let text = file(2, "[]").replace("\"length_m\":100.0", "\"length_m\":0.0");
        let err = RoadNetwork::parse_json(&text).unwrap_err().to_string();
        assert!(err.contains("length_m"), "{err}");
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = RoadNetwork::parse_json("{\"segments\": [").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn mismatched_id_rejected() {
        let text = format!(r#"{{"segments":[{}],"edges":[]}}"#, seg(4));
        assert!(RoadNetwork::parse_json(&text).is_err());
    }
}
