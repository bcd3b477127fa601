//! Training configuration shared by the library and the command-line tool.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adjacency term mixed into the transformer attention.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TgtAdjacency {
    /// Binary `A_S` as given.
    Raw,
    /// `rownorm(A_S + I)`.
    #[default]
    Normalized,
}

/// Gram matrix used by the semantic loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SemanticGram {
    Raw,
    #[default]
    Normalized,
}

/// Loss weights, InfoNCE temperature and the adjacency/OD balance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: f64,
    pub tau: f64,
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { gamma1: 1.0, gamma2: 1.0, gamma3: 1.0, gamma4: 1.0, tau: 0.2, lambda: 0.5 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, g) in
            [("gamma1", self.gamma1), ("gamma2", self.gamma2), ("gamma3", self.gamma3), ("gamma4", self.gamma4)]
        {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {g}")));
            }
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Hidden width of every level.
    pub d: usize,
    pub d_id: usize,
    pub d_ln: usize,
    pub d_sl: usize,
    pub d_ll: usize,
    /// Feed-forward hidden width; `None` means `2·d`.
    pub d_ff: Option<usize>,
    pub length_bins: usize,
    /// The geographic table has `geo_grid²` cells.
    pub geo_grid: usize,
    /// Locality count; `None` scales with the network.
    pub n_l: Option<usize>,
    pub n_r: Option<usize>,
    pub n_blocks: usize,
    pub k_neighbors: usize,
    pub leaky_slope: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossWeights,
    pub share_gat: bool,
    pub tgt_adjacency: TgtAdjacency,
    pub semantic_gram: SemanticGram,
    pub od_from_train_only: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d: 16,
            d_id: 8,
            d_ln: 2,
            d_sl: 2,
            d_ll: 4,
            d_ff: None,
            length_bins: 8,
            geo_grid: 4,
            n_l: None,
            n_r: None,
            n_blocks: 2,
            k_neighbors: 8,
            leaky_slope: 0.2,
            lr: 1e-3,
            epochs: 500,
            seed: 0,
            loss: LossWeights::default(),
            share_gat: false,
            tgt_adjacency: TgtAdjacency::Normalized,
            semantic_gram: SemanticGram::Normalized,
            od_from_train_only: true,
        }
    }
}

/// Locality/region counts used when the config leaves them unset. Large
/// networks saturate at 200 localities and 30 regions.
pub fn auto_hierarchy(n_s: usize) -> (usize, usize) {
    let n_l = ((n_s as f64).sqrt().round() as usize).clamp(2, 200);
    let n_r = n_l.div_ceil(3).clamp(1, 30);
    (n_l, n_r)
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {} column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// `d_id + d_ln + d_sl + d_ll`.
    pub fn d_input(&self) -> usize {
        self.d_id + self.d_ln + self.d_sl + self.d_ll
    }

    pub fn d_ff(&self) -> usize {
        self.d_ff.unwrap_or(2 * self.d)
    }

    /// Checks that do not depend on the network size.
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d", self.d),
            ("d_id", self.d_id),
            ("d_ln", self.d_ln),
            ("d_sl", self.d_sl),
            ("d_ll", self.d_ll),
            ("d_ff", self.d_ff()),
            ("length_bins", self.length_bins),
            ("geo_grid", self.geo_grid),
            ("n_blocks", self.n_blocks),
            ("k_neighbors", self.k_neighbors),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be >= 1")));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config(format!("leaky_slope must lie in (0, 1), got {}", self.leaky_slope)));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        self.loss.validate()
    }

    /// Resolves the hierarchy sizes for a network of `n_s` segments and checks
    /// `N_R < N_L < N_S`.
    pub fn hierarchy_sizes(&self, n_s: usize) -> Result<(usize, usize)> {
        let (auto_l, auto_r) = auto_hierarchy(n_s);
        let n_l = self.n_l.unwrap_or(auto_l);
        let n_r = self.n_r.unwrap_or_else(|| if self.n_l.is_some() { n_l.div_ceil(3).clamp(1, 30) } else { auto_r });
        if !(n_r >= 1 && n_r < n_l && n_l < n_s) {
            return Err(Error::Config(format!(
                "hierarchy sizes must satisfy 1 <= N_R < N_L < N_S, got N_R={n_r}, N_L={n_l}, N_S={n_s}"
            )));
        }
        Ok((n_l, n_r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!(c.d_input(), 16);
        assert_eq!(c.d_ff(), 32);
        assert_eq!(c.hierarchy_sizes(100).unwrap(), (10, 4));
    }

    #[test]
    fn large_inputs_saturate() {
        assert_eq!(auto_hierarchy(1_000_000), (200, 30));
        assert_eq!(auto_hierarchy(12), (3, 1));
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = TrainConfig::from_json(r#"{"d": 8, "dropout": 0.1}"#).unwrap_err();
        assert!(err.to_string().contains("dropout"), "{err}");
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c = TrainConfig::from_json(r#"{"d": 8, "loss": {"tau": 0.5}, "tgt_adjacency": "raw"}"#).unwrap();
        assert_eq!(c.d, 8);
        assert_eq!(c.loss.tau, 0.5);
        assert_eq!(c.loss.lambda, 0.5);
        assert_eq!(c.tgt_adjacency, TgtAdjacency::Raw);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(TrainConfig::from_json(r#"{"n_blocks": 0}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"loss": {"gamma2": -1.0}}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"loss": {"lambda": 1.5}}"#).is_err());
        let c = TrainConfig { n_l: Some(5), n_r: Some(5), ..TrainConfig::default() };
        assert!(c.hierarchy_sizes(20).is_err());
        let c = TrainConfig { n_l: Some(20), n_r: Some(2), ..TrainConfig::default() };
        assert!(c.hierarchy_sizes(20).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let c = TrainConfig { n_l: Some(7), share_gat: true, ..TrainConfig::default() };
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(TrainConfig::from_json(&text).unwrap(), c);
    }
}
