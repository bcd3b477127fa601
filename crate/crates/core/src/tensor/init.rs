use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::Matrix;

/// Glorot/Xavier uniform initialisation with bound `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Matrix::from_fn(rows, cols, |_, _| dist.sample(rng))
}

pub fn normal<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Matrix {
    let dist = Normal::new(0.0, std).expect("non-negative std");
    Matrix::from_fn(rows, cols, |_, _| dist.sample(rng))
}
