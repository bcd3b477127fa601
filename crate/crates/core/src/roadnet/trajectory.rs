use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Trips as sequences of segment ids, each of length ≥ 2.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectorySet {
    trajectories: Vec<Vec<usize>>,
}

impl TrajectorySet {
    pub fn new(trajectories: Vec<Vec<usize>>) -> Result<Self> {
        if let Some(k) = trajectories.iter().position(|t| t.len() < 2) {
            return Err(Error::Data(format!("trajectory {k} has fewer than 2 segments")));
        }
        Ok(Self { trajectories })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.trajectories.iter().map(Vec::as_slice)
    }

    pub fn get(&self, k: usize) -> &[usize] {
        &self.trajectories[k]
    }

    fn subset(&self, idx: &[usize]) -> TrajectorySet {
        TrajectorySet { trajectories: idx.iter().map(|&i| self.trajectories[i].clone()).collect() }
    }

    /// Parses JSON-lines: one array of segment ids per non-blank line.
    pub fn parse_jsonl(text: &str) -> Result<Self> {
        Self::read_jsonl(text.as_bytes())
    }

    pub fn read_jsonl(reader: impl std::io::Read) -> Result<Self> {
        let mut trajectories = Vec::new();
        for (lineno, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t: Vec<usize> = serde_json::from_str(&line).map_err(|e| Error::Load {
                context: format!("trajectories line {}", lineno + 1),
                detail: e.to_string(),
            })?;
            trajectories.push(t);
        }
        Self::new(trajectories)
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for t in &self.trajectories {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Checks every id against the segment count.
    pub fn validate_ids(&self, n: usize) -> Result<()> {
        for (k, t) in self.trajectories.iter().enumerate() {
            if let Some(&bad) = t.iter().find(|&&s| s >= n) {
                return Err(Error::Data(format!("trajectory {k} references segment {bad} (only {n} segments)")));
            }
        }
        Ok(())
    }
}

pub fn load_trajectories(path: impl AsRef<Path>) -> Result<TrajectorySet> {
    TrajectorySet::read_jsonl(fs::File::open(path)?)
}

pub fn write_trajectories(trajs: &TrajectorySet, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    trajs.write_jsonl(&mut f)?;
    f.flush()?;
    Ok(())
}

/// Row-stochastic origin–destination matrix `O_S`.
#[derive(Clone, Debug, PartialEq)]
pub struct OdMatrix {
    pub o: Matrix,
}

/// Counts first→last segment pairs and normalises each non-empty row.
pub fn build_od_matrix(trajs: &TrajectorySet, n: usize) -> Result<OdMatrix> {
    trajs.validate_ids(n)?;
    let mut o = Matrix::zeros(n, n);
    for t in trajs.iter() {
        let (first, last) = (t[0], t[t.len() - 1]);
        o.set(first, last, o.get(first, last) + 1.0);
    }
    for r in 0..n {
        let total: f64 = o.row(r).iter().sum();
        if total > 0.0 {
            o.row_mut(r).iter_mut().for_each(|v| *v /= total);
        }
    }
    Ok(OdMatrix { o })
}

/// Index partition in 7:1:2 proportions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Deterministic shuffled split of `0..n` into ⌊0.7n⌋ / ⌊0.1n⌋ / remainder.
pub fn split_indices(n: usize, seed: u64) -> Result<Split> {
    if n < 10 {
        return Err(Error::Data(format!("need at least 10 items to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n * 7 / 10;
    let n_val = n / 10;
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok(Split { train: idx, val, test })
}

pub fn split_trajectories(trajs: &TrajectorySet, seed: u64) -> Result<(TrajectorySet, TrajectorySet, TrajectorySet)> {
    let s = split_indices(trajs.len(), seed)?;
    Ok((trajs.subset(&s.train), trajs.subset(&s.val), trajs.subset(&s.test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_trip_od() {
        let t = TrajectorySet::new(vec![vec![0, 2, 3]]).unwrap();
        let od = build_od_matrix(&t, 4).unwrap();
        assert_eq!(od.o.get(0, 3), 1.0);
        assert_eq!(od.o.sum(), 1.0);
    }

    #[test]
    fn two_trips_from_one_origin() {
        let t = TrajectorySet::new(vec![vec![0, 1], vec![0, 2]]).unwrap();
        let od = build_od_matrix(&t, 4).unwrap();
        assert_eq!(od.o.row(0), &[0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn empty_set_gives_zero_matrix() {
        let od = build_od_matrix(&TrajectorySet::default(), 3).unwrap();
        assert_eq!(od.o, Matrix::zeros(3, 3));
    }

    #[test]
    fn out_of_range_names_trajectory() {
        let t = TrajectorySet::new(vec![vec![0, 1], vec![1, 9]]).unwrap();
        let err = build_od_matrix(&t, 4).unwrap_err().to_string();
        assert!(err.contains("trajectory 1"), "{err}");
    }

    #[test]
    fn split_sizes() {
        for (n, expect) in [(10, (7, 1, 2)), (23, (16, 2, 5)), (100, (70, 10, 20))] {
            let s = split_indices(n, 1).unwrap();
            assert_eq!((s.train.len(), s.val.len(), s.test.len()), expect);
        }
        assert!(split_indices(9, 1).is_err());
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let a = split_indices(100, 5).unwrap();
        assert_eq!(a, split_indices(100, 5).unwrap());
        let mut all: Vec<usize> = a.train.iter().chain(&a.val).chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn short_trajectory_rejected() {
        assert!(TrajectorySet::new(vec![vec![3]]).is_err());
        assert!(TrajectorySet::parse_jsonl("[0,1]\n\n[2]\n").is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let t = TrajectorySet::new(vec![vec![0, 1, 2], vec![4, 3]]).unwrap();
        let mut buf = Vec::new();
        t.write_jsonl(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "[0,1,2]\n[4,3]\n");
        assert_eq!(TrajectorySet::read_jsonl(buf.as_slice()).unwrap(), t);
    }
}
