//! Central finite-difference check of tape gradients.

use super::params::{Bound, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub coords_checked: usize,
}

/// Which coordinates of each parameter to perturb.
#[derive(Clone, Copy, Debug)]
pub enum Coverage {
    All,
    /// At most this many evenly strided coordinates per parameter.
    Strided(usize),
}

fn evaluate<F>(store: &ParamStore, f: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let loss = f(&mut tape, &bound)?;
    let v = tape.value(loss).item();
    if !v.is_finite() {
        return Err(Error::Numeric(format!("objective evaluated to {v}")));
    }
    Ok(v)
}

/// Compares tape gradients with `(f(θ+εe) − f(θ−εe)) / 2ε` at every checked
/// coordinate. The relative error uses `max(1, |analytic|, |numeric|)` as
/// denominator.
pub fn grad_check<F>(store: &ParamStore, eps: f64, coverage: Coverage, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let loss = f(&mut tape, &bound)?;
    if !tape.value(loss).item().is_finite() {
        return Err(Error::Numeric("objective is not finite at the base point".into()));
    }
    let grads = tape.backward(loss)?;

    let mut probe = store.clone();
    let mut report =
        GradCheckReport { max_rel_error: 0.0, worst: None, analytic: 0.0, numeric: 0.0, coords_checked: 0 };
    let names: Vec<String> = store.names().map(str::to_owned).collect();
    for name in names {
        let var = bound.get(&name)?;
        let n = store.value(&name)?.len();
        let analytic = grads.get(var).map(|g| g.as_slice().to_vec()).unwrap_or_else(|| vec![0.0; n]);
        let step = match coverage {
            Coverage::All => 1,
            Coverage::Strided(k) => n.div_ceil(k.max(1)).max(1),
        };
        for i in (0..n).step_by(step) {
            let orig = store.value(&name)?.as_slice()[i];
            probe.value_mut(&name)?.as_mut_slice()[i] = orig + eps;
            let plus = evaluate(&probe, &f)?;
            probe.value_mut(&name)?.as_mut_slice()[i] = orig - eps;
            let minus = evaluate(&probe, &f)?;
            probe.value_mut(&name)?.as_mut_slice()[i] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[i];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.coords_checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), i));
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;

    #[test]
    fn quadratic_is_exact() {
        let mut store = ParamStore::new();
        store.insert("x", Matrix::column(&[1.0, 2.0]));
        let r = grad_check(&store, 1e-5, Coverage::All, |t, b| Ok(t.sum_squares(b.get("x")?))).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn constant_objective_has_zero_error() {
        let mut store = ParamStore::new();
        store.insert("x", Matrix::column(&[1.0, 2.0]));
        let r = grad_check(&store, 1e-5, Coverage::All, |t, _| Ok(t.constant(Matrix::scalar(3.0)))).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert_eq!(r.analytic, 0.0);
        assert_eq!(r.numeric, 0.0);
    }

    #[test]
    fn non_finite_objective_is_reported() {
        let mut store = ParamStore::new();
        store.insert("x", Matrix::column(&[1.0]));
        let r = grad_check(&store, 1e-5, Coverage::All, |t, _| Ok(t.constant(Matrix::scalar(f64::NAN))));
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
