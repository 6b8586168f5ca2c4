//! Small dense linear-algebra helpers.
//!
//! Local frames only ever need eigendecompositions of `d x d` symmetric
//! matrices with `d <= 3`, so those go through a cyclic Jacobi sweep that is
//! accurate to a few ulps and fully deterministic. Larger dense problems
//! (graph Laplacians, frame operators) are handed to `nalgebra`.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

const JACOBI_MAX_SWEEPS: usize = 64;

/// Eigendecomposition of a small symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching orthonormal
/// eigenvectors as columns. A matrix that is already diagonal is returned
/// with identity eigenvectors (up to the descending reorder).
pub fn jacobi_eigen_desc(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "expected square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);

    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let negligible = 1e-20 * frob;
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= negligible {
                    m[[p, q]] = 0.0;
                    m[[q, p]] = 0.0;
                    continue;
                }
                rotated = true;
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                m[[p, q]] = 0.0;
                m[[q, p]] = 0.0;
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::EigensolverNoConvergence(JACOBI_MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps the identity ordering for exact ties
    order.sort_by(|&i, &j| m[[j, j]].total_cmp(&m[[i, i]]));
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    Ok((values, vectors))
}

/// Dense symmetric eigendecomposition with eigenvalues in ascending order.
pub fn symmetric_eigen_asc(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    const MAX_ITER: usize = 100_000;
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "expected square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[[i, j]]);
    let eig = nalgebra::SymmetricEigen::try_new(m, f64::EPSILON, MAX_ITER)
        .ok_or(Error::EigensolverNoConvergence(MAX_ITER))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[[r, dst]] = eig.eigenvectors[(r, src)];
        }
    }
    Ok((values, vectors))
}

/// Smallest eigenvalue of a dense symmetric matrix.
pub fn min_symmetric_eigenvalue(a: &Array2<f64>) -> Result<f64> {
    let (values, _) = symmetric_eigen_asc(a)?;
    Ok(values.first().copied().unwrap_or(f64::NAN))
}

/// `max |x_i - y_i|`.
pub fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().map(|a| a.abs()).fold(0.0, f64::max)
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn jacobi_two_by_two_closed_form() {
        // [[2,1],[1,2]] has eigenpairs 3 -> (1,1)/sqrt2, 1 -> (1,-1)/sqrt2
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = jacobi_eigen_desc(&a).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-14);
        assert!((vals[1] - 1.0).abs() < 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((vecs[[0, 0]].abs() - r).abs() < 1e-14);
        assert!((vecs[[0, 0]] - vecs[[1, 0]]).abs() < 1e-14);
        assert!((vecs[[0, 1]] + vecs[[1, 1]]).abs() < 1e-14);
    }

    #[test]
    fn jacobi_diagonal_input_keeps_identity() {
        let a = array![[1.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 3.0]];
        let (vals, vecs) = jacobi_eigen_desc(&a).unwrap();
        assert_eq!(vals.to_vec(), vec![5.0, 3.0, 1.0]);
        assert_eq!(vecs[[1, 0]], 1.0);
        assert_eq!(vecs[[2, 1]], 1.0);
        assert_eq!(vecs[[0, 2]], 1.0);
    }

    #[test]
    fn jacobi_multiple_of_identity_is_identity() {
        let a = Array2::<f64>::eye(3) * 2.5;
        let (_, vecs) = jacobi_eigen_desc(&a).unwrap();
        assert_eq!(vecs, Array2::<f64>::eye(3));
    }

    #[test]
    fn jacobi_reconstructs_random_symmetric() {
        let a = array![
            [4.0, -1.2, 0.3],
            [-1.2, 2.0, 0.7],
            [0.3, 0.7, -1.0]
        ];
        let (vals, vecs) = jacobi_eigen_desc(&a).unwrap();
        let recon = vecs.dot(&Array2::from_diag(&vals)).dot(&vecs.t());
        for (x, y) in recon.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-13);
        }
        let gram = vecs.t().dot(&vecs);
        for ((i, j), g) in gram.indexed_iter() {
            let e = if i == j { 1.0 } else { 0.0 };
            assert!((g - e).abs() < 1e-14);
        }
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
    }

    #[test]
    fn nalgebra_route_sorted_ascending() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, _) = symmetric_eigen_asc(&a).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-13 && (vals[1] - 3.0).abs() < 1e-13);
    }
}
