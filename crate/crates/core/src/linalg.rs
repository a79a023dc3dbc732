//! Dense helpers for the small symmetric systems the estimators need
//! (moment matrices of dimension d <= a few, ridge normal equations of
//! dimension up to a few hundred).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Cholesky factor L (lower) of a symmetric positive definite matrix.
pub fn cholesky(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::invalid("cholesky: matrix not square"));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::DegenerateDesign(format!(
                        "matrix not positive definite (pivot {sum:e} at {i})"
                    )));
                }
                l[[i, i]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solve A x = b for symmetric positive definite A via Cholesky.
pub fn solve_spd(a: &ArrayView2<f64>, b: &ArrayView1<f64>) -> Result<Array1<f64>> {
    let l = cholesky(a)?;
    let n = b.len();
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[[i, k]] * y[k];
        }
        y[i] = sum / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[[k, i]] * x[k];
        }
        x[i] = sum / l[[i, i]];
    }
    Ok(x)
}

/// Inverse of a symmetric positive definite matrix.
pub fn inverse_spd(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut inv = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::<f64>::zeros(n);
        e[j] = 1.0;
        let col = solve_spd(a, &e.view())?;
        inv.column_mut(j).assign(&col);
    }
    // Symmetrize to kill round-off drift.
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (inv[[i, j]] + inv[[j, i]]);
            inv[[i, j]] = v;
            inv[[j, i]] = v;
        }
    }
    Ok(inv)
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi method, ascending.
pub fn sym_eigenvalues(a: &ArrayView2<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.to_owned();
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + m.diag().iter().map(|d| d.abs()).sum::<f64>()) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
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
            }
        }
    }
    let mut eig: Vec<f64> = m.diag().to_vec();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eig
}

/// Symmetric positive semidefinite square root, eigenvalues clipped at zero.
/// Returns the root together with a flag telling whether clipping happened.
pub fn sqrt_psd(a: &ArrayView2<f64>) -> (Array2<f64>, bool) {
    let n = a.nrows();
    // Jacobi with eigenvector accumulation.
    let mut m = a.to_owned();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + m.diag().iter().map(|d| d.abs()).sum::<f64>()) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut clipped = false;
    let mut root = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut sum = 0.0;
            for k in 0..n {
                let lam = m[[k, k]];
                let sq = if lam < 0.0 {
                    clipped = true;
                    0.0
                } else {
                    lam.sqrt()
                };
                sum += v[[i, k]] * sq * v[[j, k]];
            }
            root[[i, j]] = sum;
        }
    }
    (root, clipped)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Matrix-vector product for small square matrices stored as Array2.
pub fn matvec(a: &ArrayView2<f64>, x: &[f64]) -> Vec<f64> {
    let n = a.nrows();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..a.ncols() {
            s += a[[i, j]] * x[j];
        }
        out[i] = s;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_solves_and_inverts() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let b = array![1.0, 2.0];
        let x = solve_spd(&a.view(), &b.view()).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-12);

        let inv = inverse_spd(&a.view()).unwrap();
        let prod = a.dot(&inv);
        assert!((prod[[0, 0]] - 1.0).abs() < 1e-12);
        assert!(prod[[0, 1]].abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_of_known_matrix() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let eig = sym_eigenvalues(&a.view());
        assert!((eig[0] - 1.0).abs() < 1e-10);
        assert!((eig[1] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let a = array![[2.0, 0.5], [0.5, 1.0]];
        let (r, clipped) = sqrt_psd(&a.view());
        assert!(!clipped);
        let sq = r.dot(&r);
        for i in 0..2 {
            for j in 0..2 {
                assert!((sq[[i, j]] - a[[i, j]]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn not_spd_is_an_error() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky(&a.view()).is_err());
    }
}
