use crate::error::{shape_err, Result};
use crate::tensor::Matrix;

use super::eigen::SpectralBasis;

/// `max(A, Aᵀ)` entrywise.
pub fn symmetrize(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(shape_err("symmetrize", format!("adjacency is {}x{}, expected square", a.rows(), a.cols())));
    }
    Ok(Matrix::from_fn(a.rows(), a.cols(), |i, j| a.get(i, j).max(a.get(j, i))))
}

/// `D − A` built from a matrix that is already symmetric (or used as is).
pub fn degree_laplacian(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(shape_err("laplacian", format!("adjacency is {}x{}, expected square", a.rows(), a.cols())));
    }
    let deg = a.row_sums();
    let mut l = a.scale(-1.0);
    for (i, d) in deg.iter().enumerate() {
        l.set(i, i, l.get(i, i) + d);
    }
    Ok(l)
}

/// Unnormalised Laplacian of the symmetrised adjacency: `D − max(A, Aᵀ)`.
pub fn laplacian(a: &Matrix) -> Result<Matrix> {
    degree_laplacian(&symmetrize(a)?)
}

/// `xᵀ L x`.
pub fn dirichlet_energy(l: &Matrix, x: &[f64]) -> Result<f64> {
    if !l.is_square() || l.rows() != x.len() {
        return Err(shape_err(
            "dirichlet_energy",
            format!("Laplacian is {}x{}, signal has length {}", l.rows(), l.cols(), x.len()),
        ));
    }
    let mut total = 0.0;
    for i in 0..x.len() {
        let row = l.row(i);
        total += x[i] * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(total)
}

fn check_len(basis: &SpectralBasis, len: usize, op: &'static str) -> Result<()> {
    if basis.n() != len {
        return Err(shape_err(op, format!("basis has dimension {}, signal has length {len}", basis.n())));
    }
    Ok(())
}

/// Graph Fourier transform `x̂ = Uᵀx`.
pub fn gft(basis: &SpectralBasis, x: &[f64]) -> Result<Vec<f64>> {
    check_len(basis, x.len(), "gft")?;
    let u = &basis.eigenvectors;
    Ok((0..basis.n()).map(|j| (0..x.len()).map(|i| u.get(i, j) * x[i]).sum()).collect())
}

/// Inverse transform `x = U x̂`.
pub fn igft(basis: &SpectralBasis, coeffs: &[f64]) -> Result<Vec<f64>> {
    check_len(basis, coeffs.len(), "igft")?;
    let u = &basis.eigenvectors;
    Ok((0..basis.n()).map(|i| u.row(i).iter().zip(coeffs).map(|(a, b)| a * b).sum()).collect())
}

/// Projection onto the `k` lowest-frequency eigenvectors and its residual.
pub fn frequency_split(basis: &SpectralBasis, x: &[f64], k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if k > basis.n() {
        return Err(crate::error::contract_err(
            "frequency_split",
            format!("band size {k} exceeds dimension {}", basis.n()),
        ));
    }
    let mut coeffs = gft(basis, x)?;
    coeffs.iter_mut().skip(k).for_each(|c| *c = 0.0);
    let low = igft(basis, &coeffs)?;
    let high = x.iter().zip(&low).map(|(a, b)| a - b).collect();
    Ok((low, high))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::eigendecompose;

    fn path(n: usize) -> Matrix {
        Matrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 })
    }

    #[test]
    fn path_three_laplacian() {
        let expect = Matrix::from_rows(&[vec![1.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 1.0]]);
        assert_eq!(laplacian(&path(3)).unwrap(), expect);
    }

    #[test]
    fn edgeless_laplacian_is_zero() {
        assert_eq!(laplacian(&Matrix::zeros(3, 3)).unwrap(), Matrix::zeros(3, 3));
    }

    #[test]
    fn directed_edge_symmetrised() {
        let mut a = Matrix::zeros(2, 2);
        a.set(0, 1, 1.0);
        let mut u = a.clone();
        u.set(1, 0, 1.0);
        assert_eq!(laplacian(&a).unwrap(), laplacian(&u).unwrap());
    }

    #[test]
    fn non_square_rejected() {
        assert!(laplacian(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn energy_examples() {
        let l = laplacian(&path(3)).unwrap();
        assert_eq!(dirichlet_energy(&l, &[0.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(dirichlet_energy(&l, &[4.0, 4.0, 4.0]).unwrap(), 0.0);
        assert!(dirichlet_energy(&l, &[1.0]).is_err());
        let b = eigendecompose(&l).unwrap();
        for j in 0..3 {
            assert!((dirichlet_energy(&l, &b.vector(j)).unwrap() - b.eigenvalues[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn basis_vector_transforms_to_unit() {
        let l = laplacian(&path(4)).unwrap();
        let b = eigendecompose(&l).unwrap();
        let c = gft(&b, &b.vector(0)).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn band_endpoints() {
        let l = laplacian(&path(4)).unwrap();
        let b = eigendecompose(&l).unwrap();
        let x = [1.0, -2.0, 0.5, 3.0];
        let (lo, hi) = frequency_split(&b, &x, 4).unwrap();
        assert!(lo.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(hi.iter().all(|v| v.abs() < 1e-12));
        let (lo, hi) = frequency_split(&b, &x, 0).unwrap();
        assert!(lo.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(hi, x.to_vec());
        assert!(frequency_split(&b, &x, 5).is_err());
    }
}
