use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::{Matrix, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moments per parameter and the step counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    m: BTreeMap<String, Matrix>,
    v: BTreeMap<String, Matrix>,
    t: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update from the gradients stored in `params`.
/// Nothing is modified when any gradient is non-finite.
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState, hp: &AdamConfig) -> Result<()> {
    if let Some((name, _)) = params.iter().find(|(_, p)| !p.grad.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient for parameter `{name}`")));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    for (name, p) in params.iter_mut() {
        let (r, c) = p.value.shape();
        let m = state.m.entry(name.to_string()).or_insert_with(|| Matrix::zeros(r, c));
        let v = state.v.entry(name.to_string()).or_insert_with(|| Matrix::zeros(r, c));
        if m.shape() != (r, c) {
            return Err(Error::Numeric(format!("moment shape mismatch for parameter `{name}`")));
        }
        let g = p.grad.as_slice();
        let (ms, vs, xs) = (m.as_mut_slice(), v.as_mut_slice(), p.value.as_mut_slice());
        for i in 0..g.len() {
            ms[i] = hp.beta1 * ms[i] + (1.0 - hp.beta1) * g[i];
            vs[i] = hp.beta2 * vs[i] + (1.0 - hp.beta2) * g[i] * g[i];
            let mhat = ms[i] / bc1;
            let vhat = vs[i] / bc2;
            xs[i] -= hp.lr * mhat / (vhat.sqrt() + hp.eps);
        }
    }
    Ok(())
}
