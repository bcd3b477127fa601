//! Dense symmetric eigendecomposition: Householder reduction to tridiagonal
//! form followed by the implicit QL algorithm (the classic EISPACK
//! `tred2`/`tql2` pair).

// Index loops mirror the reference routine.
#![allow(clippy::needless_range_loop)]

use crate::error::{contract_err, Error, Result};
use crate::tensor::Matrix;

const MAX_QL_ITERATIONS: usize = 60;

/// Laplacian eigensystem, eigenvalues ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBasis {
    pub eigenvalues: Vec<f64>,
    /// Column `j` is the unit eigenvector for `eigenvalues[j]`.
    pub eigenvectors: Matrix,
}

impl SpectralBasis {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, j: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.eigenvectors.get(i, j)).collect()
    }

    /// Max deviation of `UᵀU` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let u = &self.eigenvectors;
        let utu = u.t_matmul(u).expect("square basis");
        utu.max_abs_diff(&Matrix::identity(self.n())).expect("same shape")
    }

    /// Max entry of `|L·U − U·diag(λ)|`.
    pub fn reconstruction_error(&self, l: &Matrix) -> Result<f64> {
        let lu = l.matmul(&self.eigenvectors)?;
        let mut ul = self.eigenvectors.clone();
        for r in 0..ul.rows() {
            for (c, v) in ul.row_mut(r).iter_mut().enumerate() {
                *v *= self.eigenvalues[c];
            }
        }
        lu.max_abs_diff(&ul)
    }
}

pub fn check_symmetric(m: &Matrix, tol: f64, op: &'static str) -> Result<()> {
    if !m.is_square() {
        return Err(crate::error::shape_err(op, format!("matrix is {}x{}, expected square", m.rows(), m.cols())));
    }
    let n = m.rows();
    for i in 0..n {
        for j in i + 1..n {
            let d = (m.get(i, j) - m.get(j, i)).abs();
            if d > tol {
                return Err(contract_err(op, format!("matrix is not symmetric: |m[{i},{j}] − m[{j},{i}]| = {d:e}")));
            }
        }
    }
    Ok(())
}

/// Full eigendecomposition of a symmetric matrix.
///
/// Each eigenvector is signed so that its largest-magnitude component is
/// positive; among components of equal magnitude the lowest index decides.
pub fn eigendecompose(l: &Matrix) -> Result<SpectralBasis> {
    check_symmetric(l, 1e-10, "eigendecompose")?;
    if !l.is_finite() {
        return Err(Error::Numeric("eigendecompose: matrix has non-finite entries".into()));
    }
    let n = l.rows();
    if n == 0 {
        return Ok(SpectralBasis { eigenvalues: vec![], eigenvectors: Matrix::zeros(0, 0) });
    }
    // Work on the exactly symmetrised input.
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| 0.5 * (l.get(i, j) + l.get(j, i))).collect()).collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e);
    ql_implicit(&mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| d[k]).collect();
    let mut vecs = Matrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let column: Vec<f64> = (0..n).map(|i| v[i][k]).collect();
        let max = column.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let pivot = column.iter().position(|x| x.abs() >= max * (1.0 - 1e-10)).unwrap_or(0);
        let sign = if column[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (i, x) in column.iter().enumerate() {
            vecs.set(i, col, sign * x);
        }
    }
    Ok(SpectralBasis { eigenvalues, eigenvectors: vecs })
}

/// Householder reduction of the symmetric matrix in `v` to tridiagonal form.
/// On return `v` holds the accumulated orthogonal transform, `d` the diagonal
/// and `e[1..]` the sub-diagonal.
fn tridiagonalize(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    d.copy_from_slice(&v[n - 1][..n]);
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for k in j + 1..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k][i + 1] * v[k][j];
                }
                for k in 0..=i {
                    v[k][j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k][i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL iterations on the tridiagonal system, rotating `v` along.
fn ql_implicit(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1 = 0.0_f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_ITERATIONS {
                    return Err(Error::Numeric(format!(
                        "eigendecompose: QL iteration did not converge for eigenvalue {l} after {MAX_QL_ITERATIONS} sweeps"
                    )));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in v.iter_mut() {
                        h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge_closed_form() {
        let l = Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]);
        let b = eigendecompose(&l).unwrap();
        assert!(b.eigenvalues[0].abs() < 1e-14);
        assert!((b.eigenvalues[1] - 2.0).abs() < 1e-14);
        let s = 1.0 / 2f64.sqrt();
        assert!((b.eigenvectors.get(0, 0) - s).abs() < 1e-14);
        assert!((b.eigenvectors.get(1, 0) - s).abs() < 1e-14);
        // second vector (1,−1)/√2, largest component first → positive at index 0
        assert!((b.eigenvectors.get(0, 1) - s).abs() < 1e-14);
        assert!((b.eigenvectors.get(1, 1) + s).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix() {
        let b = eigendecompose(&Matrix::zeros(3, 3)).unwrap();
        assert_eq!(b.eigenvalues, vec![0.0; 3]);
        assert!(b.orthonormality_error() < 1e-14);
    }

    #[test]
    fn one_by_one() {
        let b = eigendecompose(&Matrix::scalar(-3.5)).unwrap();
        assert_eq!(b.eigenvalues, vec![-3.5]);
        assert_eq!(b.eigenvectors.item(), 1.0);
    }

    #[test]
    fn rejects_non_symmetric() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]);
        assert!(matches!(eigendecompose(&m), Err(Error::Contract { .. })));
    }

    #[test]
    fn diagonal_input_sorted() {
        let m = Matrix::diag(&[3.0, -1.0, 2.0]);
        let b = eigendecompose(&m).unwrap();
        assert_eq!(b.eigenvalues, vec![-1.0, 2.0, 3.0]);
        assert!(b.reconstruction_error(&m).unwrap() < 1e-14);
    }
}
