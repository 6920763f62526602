//! Dense value-space linear algebra for small symmetric problems: Cholesky,
//! cyclic-Jacobi symmetric eigensolver, and the generalized symmetric
//! eigenproblem `A x = λ G x` with `G` positive definite.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{identity, zeros2, Mat};

/// Lower-triangular `L` with `L Lᵀ = a`; fails if `a` is not positive
/// definite.
pub fn cholesky<T: Real>(a: &Mat<T>) -> Result<Mat<T>> {
    let n = a.len();
    let mut l = zeros2::<T>(n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= T::zero() {
                    return Err(Error::Numerical(format!(
                        "matrix not positive definite (pivot {s} at row {i})"
                    )));
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Solve `L x = b` for lower-triangular `L`.
pub fn forward_sub<T: Real>(l: &Mat<T>, b: &[T]) -> Vec<T> {
    let n = b.len();
    let mut x = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Solve `Lᵀ x = b` for lower-triangular `L`.
pub fn back_sub_t<T: Real>(l: &Mat<T>, b: &[T]) -> Vec<T> {
    let n = b.len();
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Determinant by LU with partial pivoting.
pub fn lu_det<T: Real>(a: &Mat<T>) -> T {
    let n = a.len();
    let mut m = a.clone();
    let mut det = T::one();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&p, &q| {
                m[p][col]
                    .abs()
                    .partial_cmp(&m[q][col].abs())
                    .expect("comparable pivots")
            })
            .expect("nonempty");
        if m[piv][col] == T::zero() {
            return T::zero();
        }
        if piv != col {
            m.swap(piv, col);
            det = -det;
        }
        det *= m[col][col];
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                let t = f * m[col][c];
                m[r][c] -= t;
            }
        }
    }
    det
}

/// Solve `A x = b` by LU with partial pivoting (square, well-conditioned
/// value-space systems).
pub fn lu_solve<T: Real>(a: &Mat<T>, b: &[T]) -> Result<Vec<T>> {
    let n = a.len();
    let mut m = a.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&p, &q| {
                m[p][col]
                    .abs()
                    .partial_cmp(&m[q][col].abs())
                    .expect("comparable pivots")
            })
            .expect("nonempty");
        if m[piv][col] == T::zero() {
            return Err(Error::Numerical("singular linear system".into()));
        }
        if piv != col {
            m.swap(piv, col);
            x.swap(piv, col);
        }
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                let t = f * m[col][c];
                m[r][c] -= t;
            }
            let t = f * x[col];
            x[r] -= t;
        }
    }
    for r in (0..n).rev() {
        let mut s = x[r];
        for c in r + 1..n {
            s -= m[r][c] * x[c];
        }
        x[r] = s / m[r][r];
    }
    Ok(x)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// columns (`vecs[row][k]` is component `row` of eigenvector `k`); the
/// columns are orthonormal.
pub fn sym_eig<T: Real>(a: &Mat<T>) -> (Vec<T>, Mat<T>) {
    let n = a.len();
    let mut a = a.clone();
    let mut v = identity::<T>(n);
    let frob: T = a
        .iter()
        .flatten()
        .map(|&x| x * x)
        .sum::<T>()
        .sqrt();
    let stop = T::epsilon() * (T::one() + frob);
    for _sweep in 0..64 {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += a[p][q].abs();
            }
        }
        if off <= stop {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() <= T::epsilon() * frob * T::of(1e-3) {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (T::of(2.0) * a[p][q]);
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[i][i]
            .partial_cmp(&a[j][j])
            .expect("comparable eigenvalues")
    });
    let vals: Vec<T> = order.iter().map(|&i| a[i][i]).collect();
    let mut vecs = zeros2::<T>(n);
    for (k, &src) in order.iter().enumerate() {
        for r in 0..n {
            vecs[r][k] = v[r][src];
        }
    }
    (vals, vecs)
}

/// Generalized symmetric eigenproblem `A x = λ G x` with `G` positive
/// definite, solved through the Cholesky reduction `G = L Lᵀ`,
/// `B = L⁻¹ A L⁻ᵀ`. Eigenvalues ascend; eigenvector columns are
/// `G`-orthonormal (`Xᵀ G X = I`).
pub fn eig_in_metric<T: Real>(a: &Mat<T>, g: &Mat<T>) -> Result<(Vec<T>, Mat<T>)> {
    let n = a.len();
    let l = cholesky(g)?;
    // B = L⁻¹ A L⁻ᵀ, built column by column
    let mut b = zeros2::<T>(n);
    for j in 0..n {
        let col: Vec<T> = (0..n).map(|i| a[i][j]).collect();
        let y = forward_sub(&l, &col);
        for i in 0..n {
            b[i][j] = y[i];
        }
    }
    for i in 0..n {
        let row = b[i].clone();
        let y = forward_sub(&l, &row);
        b[i] = y;
    }
    // enforce exact symmetry lost to roundoff
    for i in 0..n {
        for j in 0..i {
            let m = (b[i][j] + b[j][i]) * T::of(0.5);
            b[i][j] = m;
            b[j][i] = m;
        }
    }
    let (vals, v) = sym_eig(&b);
    let mut x = zeros2::<T>(n);
    for k in 0..n {
        let col: Vec<T> = (0..n).map(|r| v[r][k]).collect();
        let xk = back_sub_t(&l, &col);
        for r in 0..n {
            x[r][k] = xk[r];
        }
    }
    Ok((vals, x))
}
