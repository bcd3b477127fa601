//! Parameter layout and the full forward pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{contract_err, Result};
use crate::freqdecomp::{attention_adjacency, decompose, reconstruct, tgt_traced, TgtBlock, TgtParams};
use crate::hierarchy::{
    aggregate_parent, coarsen_adjacency, contextual_embed, initial_features, propagate_low_frequency, soft_assignment,
    EmbeddingTables, Ffn, GatParams, InputLayout, LowPassInputs, Neighborhoods, LANE_BINS,
};
use crate::roadnet::RoadNetwork;
use crate::tensor::{normal, xavier_uniform, Bound, Matrix, ParamStore, Tape, Var};

/// Scale of the learnable locality/region initial features.
pub const HIER_INIT_STD: f64 = 0.1;
/// Scale of the attribute lookup tables.
pub const EMBED_INIT_STD: f64 = 0.1;

/// Network-dependent constants plus the resolved configuration.
#[derive(Clone, Debug)]
pub struct HiFiNet {
    cfg: TrainConfig,
    n_s: usize,
    n_l: usize,
    n_r: usize,
    layout: InputLayout,
    a_s: Matrix,
    a_hat: Matrix,
    nb_s: Neighborhoods,
}

/// Tape handles for every intermediate of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub v_s: Var,
    pub h_s: Var,
    pub a_sl: Var,
    pub h_l: Var,
    pub a_lr: Var,
    pub h_r: Var,
    pub a_l: Matrix,
    pub a_r: Matrix,
    pub h_s_low: Var,
    pub h_s_high: Var,
    pub h_low_updated: Var,
    pub h_high_updated: Var,
    pub h_hat: Var,
    /// `ATT` of every transformer block, low stream then high stream.
    pub att: Vec<Var>,
}

/// Detached values of one forward pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardState {
    pub v_s: Matrix,
    pub h_s: Matrix,
    pub a_sl: Matrix,
    pub h_l: Matrix,
    pub a_l: Matrix,
    pub a_lr: Matrix,
    pub h_r: Matrix,
    pub a_r: Matrix,
    pub h_s_low: Matrix,
    pub h_s_high: Matrix,
    pub h_low_updated: Matrix,
    pub h_high_updated: Matrix,
    pub h_hat: Matrix,
    pub att: Vec<Matrix>,
}

impl ForwardVars {
    pub fn snapshot(&self, tape: &Tape) -> ForwardState {
        let v = |x: Var| tape.value(x).clone();
        ForwardState {
            v_s: v(self.v_s),
            h_s: v(self.h_s),
            a_sl: v(self.a_sl),
            h_l: v(self.h_l),
            a_l: self.a_l.clone(),
            a_lr: v(self.a_lr),
            h_r: v(self.h_r),
            a_r: self.a_r.clone(),
            h_s_low: v(self.h_s_low),
            h_s_high: v(self.h_s_high),
            h_low_updated: v(self.h_low_updated),
            h_high_updated: v(self.h_high_updated),
            h_hat: v(self.h_hat),
            att: self.att.iter().map(|&a| v(a)).collect(),
        }
    }
}

impl ForwardState {
    pub fn is_finite(&self) -> bool {
        [
            &self.v_s,
            &self.h_s,
            &self.a_sl,
            &self.h_l,
            &self.a_l,
            &self.a_lr,
            &self.h_r,
            &self.a_r,
            &self.h_s_low,
            &self.h_s_high,
            &self.h_low_updated,
            &self.h_high_updated,
            &self.h_hat,
        ]
        .iter()
        .all(|m| m.is_finite())
            && self.att.iter().all(Matrix::is_finite)
    }
}

fn gat_names(cfg: &TrainConfig) -> [&'static str; 3] {
    if cfg.share_gat {
        ["gat.shared"; 3]
    } else {
        ["gat.region", "gat.locality", "gat.segment"]
    }
}

fn block_prefix(stream: &str, b: usize) -> String {
    format!("tgt.{stream}.block{b}")
}

impl HiFiNet {
    pub fn new(net: &RoadNetwork, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let n_s = net.n_segments();
        let (n_l, n_r) = cfg.hierarchy_sizes(n_s)?;
        Ok(Self {
            cfg: cfg.clone(),
            n_s,
            n_l,
            n_r,
            layout: InputLayout::from_network(net, cfg.length_bins, cfg.geo_grid),
            a_s: net.adjacency(),
            a_hat: attention_adjacency(net, cfg.tgt_adjacency),
            nb_s: Neighborhoods::in_neighbors(net),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// `(N_S, N_L, N_R)`.
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.n_s, self.n_l, self.n_r)
    }

    pub fn layout(&self) -> &InputLayout {
        &self.layout
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.a_s
    }

    pub fn attention_adjacency(&self) -> &Matrix {
        &self.a_hat
    }

    /// Name and shape of every parameter, in initialisation order.
    pub fn param_shapes(&self) -> Vec<(String, usize, usize)> {
        let c = &self.cfg;
        let (d, d_ff, d_in) = (c.d, c.d_ff(), c.d_input());
        let mut s: Vec<(String, usize, usize)> = vec![
            ("emb.id".into(), self.n_s, c.d_id),
            ("emb.lane".into(), LANE_BINS, c.d_ln),
            ("emb.length".into(), c.length_bins, c.d_sl),
            ("emb.geo".into(), c.geo_grid * c.geo_grid, c.d_ll),
            ("ffn0.w1".into(), d_in, d_ff),
            ("ffn0.b1".into(), 1, d_ff),
            ("ffn0.w2".into(), d_ff, d),
            ("ffn0.b2".into(), 1, d),
            ("assign_sl.w_child".into(), d, d),
            ("assign_sl.w_parent".into(), d, d),
            ("assign_lr.w_child".into(), d, d),
            ("assign_lr.w_parent".into(), d, d),
            ("hier.h_l_init".into(), self.n_l, d),
            ("hier.h_r_init".into(), self.n_r, d),
        ];
        let mut gats = gat_names(c).to_vec();
        gats.dedup();
        for g in gats {
            s.push((format!("{g}.w"), d, d));
            s.push((format!("{g}.attn"), 2 * d, 1));
        }
        for stream in ["low", "high"] {
            s.push((format!("tgt.{stream}.alpha_logit"), 1, 1));
            for b in 0..c.n_blocks {
                let p = block_prefix(stream, b);
                for w in ["wq", "wk", "wv"] {
                    s.push((format!("{p}.{w}"), d, d));
                }
                s.push((format!("{p}.ffn.w1"), d, d_ff));
                s.push((format!("{p}.ffn.b1"), 1, d_ff));
                s.push((format!("{p}.ffn.w2"), d_ff, d));
                s.push((format!("{p}.ffn.b2"), 1, d));
                for ln in ["ln1", "ln2"] {
                    s.push((format!("{p}.{ln}.gain"), 1, d));
                    s.push((format!("{p}.{ln}.bias"), 1, d));
                }
            }
        }
        s.push(("recon.beta_logit".into(), 1, 1));
        s
    }

    /// Seeded initial parameters: lookup tables and hierarchy features are
    /// normal, weight matrices Xavier-uniform, biases and logits zero, layer
    /// norm gains one.
    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for (name, r, c) in self.param_shapes() {
            let value = if name.starts_with("emb.") {
                normal(r, c, EMBED_INIT_STD, &mut rng)
            } else if name.starts_with("hier.") {
                normal(r, c, HIER_INIT_STD, &mut rng)
            } else if name.ends_with(".gain") {
                Matrix::filled(r, c, 1.0)
            } else if r == 1 {
                Matrix::zeros(r, c)
            } else {
                xavier_uniform(r, c, &mut rng)
            };
            store.insert(name, value);
        }
        store
    }

    /// Checks that `store` has exactly the expected names and shapes.
    pub fn check_params(&self, store: &ParamStore) -> Result<()> {
        let expect = self.param_shapes();
        if expect.len() != store.len() {
            return Err(contract_err(
                "parameter check",
                format!("expected {} parameters, found {}", expect.len(), store.len()),
            ));
        }
        for (name, r, c) in expect {
            let v = store.value(&name)?;
            if v.shape() != (r, c) {
                return Err(contract_err(
                    "parameter check",
                    format!("`{name}` is {}x{}, expected {r}x{c}", v.rows(), v.cols()),
                ));
            }
        }
        Ok(())
    }

    fn ffn(b: &Bound, prefix: &str) -> Result<Ffn> {
        Ok(Ffn {
            w1: b.get(&format!("{prefix}.w1"))?,
            b1: b.get(&format!("{prefix}.b1"))?,
            w2: b.get(&format!("{prefix}.w2"))?,
            b2: b.get(&format!("{prefix}.b2"))?,
        })
    }

    fn tgt_params(&self, b: &Bound, stream: &str) -> Result<TgtParams> {
        let mut blocks = Vec::with_capacity(self.cfg.n_blocks);
        for i in 0..self.cfg.n_blocks {
            let p = block_prefix(stream, i);
            let g = |s: &str| b.get(&format!("{p}.{s}"));
            blocks.push(TgtBlock {
                wq: g("wq")?,
                wk: g("wk")?,
                wv: g("wv")?,
                ffn: Self::ffn(b, &format!("{p}.ffn"))?,
                ln1_gain: g("ln1.gain")?,
                ln1_bias: g("ln1.bias")?,
                ln2_gain: g("ln2.gain")?,
                ln2_bias: g("ln2.bias")?,
            });
        }
        Ok(TgtParams { blocks, alpha_logit: b.get(&format!("tgt.{stream}.alpha_logit"))? })
    }

    /// Embedding, hierarchy, low-pass propagation, decomposition, both
    /// transformer streams and reconstruction.
    pub fn forward(&self, tape: &mut Tape, b: &Bound) -> Result<ForwardVars> {
        let tables = EmbeddingTables {
            id: b.get("emb.id")?,
            lane: b.get("emb.lane")?,
            length: b.get("emb.length")?,
            geo: b.get("emb.geo")?,
        };
        let v_s = contextual_embed(tape, &self.layout, &tables)?;
        let h_s = initial_features(tape, v_s, &Self::ffn(b, "ffn0")?)?;

        let h_l_init = b.get("hier.h_l_init")?;
        let a_sl = soft_assignment(tape, h_s, h_l_init, b.get("assign_sl.w_child")?, b.get("assign_sl.w_parent")?)?;
        let h_l = aggregate_parent(tape, a_sl, h_s, h_l_init)?;
        let a_l = coarsen_adjacency(tape.value(a_sl), &self.a_s)?;

        let h_r_init = b.get("hier.h_r_init")?;
        let a_lr = soft_assignment(tape, h_l, h_r_init, b.get("assign_lr.w_child")?, b.get("assign_lr.w_parent")?)?;
        let h_r = aggregate_parent(tape, a_lr, h_l, h_r_init)?;
        let a_r = coarsen_adjacency(tape.value(a_lr), &a_l)?;

        let nb_l = Neighborhoods::top_k(&a_l, self.cfg.k_neighbors)?;
        let nb_r = Neighborhoods::top_k(&a_r, self.cfg.k_neighbors)?;
        let [gr, gl, gs] = gat_names(&self.cfg);
        let gat = |name: &str| -> Result<GatParams> {
            Ok(GatParams {
                w: b.get(&format!("{name}.w"))?,
                attn: b.get(&format!("{name}.attn"))?,
                leaky_slope: self.cfg.leaky_slope,
            })
        };
        let low_in = LowPassInputs { h_r, a_lr, a_sl, nb_r: &nb_r, nb_l: &nb_l, nb_s: &self.nb_s };
        let h_s_low = propagate_low_frequency(tape, &low_in, &gat(gr)?, &gat(gl)?, &gat(gs)?)?;
        let h_s_high = decompose(tape, h_s, h_s_low)?;

        let a_hat = tape.constant(self.a_hat.clone());
        let (h_low_updated, mut att) = tgt_traced(tape, h_s_low, a_hat, &self.tgt_params(b, "low")?)?;
        let (h_high_updated, att_high) = tgt_traced(tape, h_s_high, a_hat, &self.tgt_params(b, "high")?)?;
        att.extend(att_high);
        let h_hat = reconstruct(tape, h_low_updated, h_high_updated, b.get("recon.beta_logit")?)?;

        Ok(ForwardVars {
            v_s,
            h_s,
            a_sl,
            h_l,
            a_lr,
            h_r,
            a_l,
            a_r,
            h_s_low,
            h_s_high,
            h_low_updated,
            h_high_updated,
            h_hat,
            att,
        })
    }

    /// Forward pass on a fresh tape, returning detached values.
    pub fn evaluate(&self, store: &ParamStore) -> Result<ForwardState> {
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let vars = self.forward(&mut tape, &b)?;
        Ok(vars.snapshot(&tape))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roadnet::{generate_synthetic, GeneratorConfig};

    fn toy() -> (RoadNetwork, TrainConfig) {
        let b = generate_synthetic(&GeneratorConfig::preset("toy12").unwrap(), 3).unwrap();
        let cfg = TrainConfig {
            d: 4,
            d_id: 1,
            d_ln: 1,
            d_sl: 1,
            d_ll: 1,
            n_l: Some(4),
            n_r: Some(2),
            ..TrainConfig::default()
        };
        (b.network, cfg)
    }

    #[test]
    fn forward_shapes() {
        let (net, cfg) = toy();
        let m = HiFiNet::new(&net, &cfg).unwrap();
        let s = m.evaluate(&m.init_params(1)).unwrap();
        assert_eq!(s.v_s.shape(), (12, 4));
        assert_eq!(s.a_sl.shape(), (12, 4));
        assert_eq!(s.a_l.shape(), (4, 4));
        assert_eq!(s.a_lr.shape(), (4, 2));
        assert_eq!(s.h_r.shape(), (2, 4));
        assert_eq!(s.a_r.shape(), (2, 2));
        assert_eq!(s.h_hat.shape(), (12, 4));
        assert_eq!(s.att.len(), 4);
        assert!(s.is_finite());
    }

    #[test]
    fn init_is_seeded() {
        let (net, cfg) = toy();
        let m = HiFiNet::new(&net, &cfg).unwrap();
        assert_eq!(m.init_params(5), m.init_params(5));
        assert_ne!(m.init_params(5), m.init_params(6));
        m.check_params(&m.init_params(5)).unwrap();
    }

    #[test]
    fn shared_gat_has_fewer_params() {
        let (net, cfg) = toy();
        let sep = HiFiNet::new(&net, &cfg).unwrap().init_params(0);
        let shared = HiFiNet::new(&net, &TrainConfig { share_gat: true, ..cfg }).unwrap().init_params(0);
        assert_eq!(sep.len(), shared.len() + 4);
        assert!(shared.contains("gat.shared.w"));
    }

    #[test]
    fn wrong_store_rejected() {
        let (net, cfg) = toy();
        let m = HiFiNet::new(&net, &cfg).unwrap();
        let mut p = m.init_params(0);
        p.insert("emb.id", Matrix::zeros(3, 1));
        assert!(m.check_params(&p).is_err());
    }
}
