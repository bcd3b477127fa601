//! Frequency decomposition, topology-aware graph transformer and
//! reconstruction of segment features.

use crate::config::TgtAdjacency;
use crate::error::{shape_err, Error, Result};
use crate::hierarchy::{ffn, Ffn};
use crate::roadnet::RoadNetwork;
use crate::tensor::{Matrix, Tape, Var, LAYER_NORM_EPS};

/// `H_S − H_S_low`.
pub fn decompose(tape: &mut Tape, h_s: Var, h_low: Var) -> Result<Var> {
    tape.sub(h_s, h_low)
}

/// Adjacency term of the transformer attention.
pub fn attention_adjacency(net: &RoadNetwork, mode: TgtAdjacency) -> Matrix {
    let mut a = net.adjacency();
    if mode == TgtAdjacency::Normalized {
        for i in 0..a.rows() {
            a.set(i, i, a.get(i, i) + 1.0);
            let s: f64 = a.row(i).iter().sum();
            a.row_mut(i).iter_mut().for_each(|v| *v /= s);
        }
    }
    a
}

/// One transformer block.
#[derive(Clone, Copy, Debug)]
pub struct TgtBlock {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub ffn: Ffn,
    pub ln1_gain: Var,
    pub ln1_bias: Var,
    pub ln2_gain: Var,
    pub ln2_bias: Var,
}

/// A stream's blocks and its shared mixing logit (`α = sigmoid(alpha_logit)`).
#[derive(Clone, Debug)]
pub struct TgtParams {
    pub blocks: Vec<TgtBlock>,
    pub alpha_logit: Var,
}

/// `α·softmax(QKᵀ/√d) + (1−α)·Â`; `alpha` is a 1x1 node.
pub fn tgt_attention(tape: &mut Tape, h: Var, a_hat: Var, block: &TgtBlock, alpha: Var) -> Result<Var> {
    let n = tape.value(h).rows();
    if tape.value(a_hat).shape() != (n, n) {
        let (r, c) = tape.value(a_hat).shape();
        return Err(shape_err("tgt_attention", format!("adjacency is {r}x{c} for {n} nodes")));
    }
    let q = tape.matmul(h, block.wq)?;
    let k = tape.matmul(h, block.wk)?;
    let d = tape.value(q).cols();
    let kt = tape.transpose(k);
    let logits = tape.matmul(q, kt)?;
    let logits = tape.scale(logits, 1.0 / (d as f64).sqrt());
    let global = tape.softmax_rows(logits);
    let global = tape.scale_by(alpha, global)?;
    let one_minus = tape.affine(alpha, -1.0, 1.0);
    let local = tape.scale_by(one_minus, a_hat)?;
    tape.add(global, local)
}

/// Attention output of a block together with the block output, so callers
/// can inspect `ATT`.
pub fn tgt_block_traced(tape: &mut Tape, h: Var, a_hat: Var, block: &TgtBlock, alpha: Var) -> Result<(Var, Var)> {
    let att = tgt_attention(tape, h, a_hat, block, alpha)?;
    let v = tape.matmul(h, block.wv)?;
    let mixed = tape.matmul(att, v)?;
    let res = tape.add(mixed, h)?;
    let h1 = tape.layer_norm(res, block.ln1_gain, block.ln1_bias, LAYER_NORM_EPS)?;
    let f = ffn(tape, h1, &block.ffn)?;
    let res = tape.add(f, h1)?;
    let out = tape.layer_norm(res, block.ln2_gain, block.ln2_bias, LAYER_NORM_EPS)?;
    Ok((att, out))
}

pub fn tgt_block(tape: &mut Tape, h: Var, a_hat: Var, block: &TgtBlock, alpha: Var) -> Result<Var> {
    tgt_block_traced(tape, h, a_hat, block, alpha).map(|(_, out)| out)
}

/// Runs every block in order; returns the output and each block's `ATT`.
pub fn tgt_traced(tape: &mut Tape, h: Var, a_hat: Var, p: &TgtParams) -> Result<(Var, Vec<Var>)> {
    if p.blocks.is_empty() {
        return Err(Error::Config("the transformer needs at least one block".into()));
    }
    let alpha = tape.sigmoid(p.alpha_logit);
    let mut cur = h;
    let mut atts = Vec::with_capacity(p.blocks.len());
    for block in &p.blocks {
        let (att, out) = tgt_block_traced(tape, cur, a_hat, block, alpha)?;
        atts.push(att);
        cur = out;
    }
    Ok((cur, atts))
}

pub fn tgt(tape: &mut Tape, h: Var, a_hat: Var, p: &TgtParams) -> Result<Var> {
    tgt_traced(tape, h, a_hat, p).map(|(out, _)| out)
}

/// `β·H_low + (1−β)·H_high` with `β = sigmoid(beta_logit)`.
pub fn reconstruct(tape: &mut Tape, h_low: Var, h_high: Var, beta_logit: Var) -> Result<Var> {
    let beta = tape.sigmoid(beta_logit);
    reconstruct_with(tape, h_low, h_high, beta)
}

/// Same as [`reconstruct`] with `β` given directly as a 1x1 node.
pub fn reconstruct_with(tape: &mut Tape, h_low: Var, h_high: Var, beta: Var) -> Result<Var> {
    if tape.value(h_low).shape() != tape.value(h_high).shape() {
        return Err(shape_err("reconstruct", "low and high streams differ in shape"));
    }
    let low = tape.scale_by(beta, h_low)?;
    let one_minus = tape.affine(beta, -1.0, 1.0);
    let high = tape.scale_by(one_minus, h_high)?;
    tape.add(low, high)
}
