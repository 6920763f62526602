//! Small dense value-tensor containers and norms.
//!
//! Tensors here are nested `Vec`s indexed `[i][j]...` with every axis of
//! length `n` (the chart dimension, at most 8). At these sizes plain nested
//! indexing reads closest to the index formulas it implements, so no strided
//! array machinery is used.

use crate::scalar::Real;

pub type Mat<T> = Vec<Vec<T>>;
pub type Arr3<T> = Vec<Vec<Vec<T>>>;
pub type Arr4<T> = Vec<Vec<Vec<Vec<T>>>>;
pub type Arr5<T> = Vec<Vec<Vec<Vec<Vec<T>>>>>;

pub fn zeros2<T: Real>(n: usize) -> Mat<T> {
    vec![vec![T::zero(); n]; n]
}

pub fn zeros3<T: Real>(n: usize) -> Arr3<T> {
    vec![zeros2(n); n]
}

pub fn zeros4<T: Real>(n: usize) -> Arr4<T> {
    vec![zeros3(n); n]
}

pub fn zeros5<T: Real>(n: usize) -> Arr5<T> {
    vec![zeros4(n); n]
}

pub fn identity<T: Real>(n: usize) -> Mat<T> {
    let mut m = zeros2(n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = T::one();
    }
    m
}

/// Largest absolute entry.
pub fn sup1<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

pub fn sup2<T: Real>(a: &Mat<T>) -> T {
    a.iter().fold(T::zero(), |m, r| m.max(sup1(r)))
}

pub fn sup3<T: Real>(a: &Arr3<T>) -> T {
    a.iter().fold(T::zero(), |m, r| m.max(sup2(r)))
}

pub fn sup4<T: Real>(a: &Arr4<T>) -> T {
    a.iter().fold(T::zero(), |m, r| m.max(sup3(r)))
}

pub fn sup5<T: Real>(a: &Arr5<T>) -> T {
    a.iter().fold(T::zero(), |m, r| m.max(sup4(r)))
}

/// Largest absolute entry of the difference.
pub fn sup2_diff<T: Real>(a: &Mat<T>, b: &Mat<T>) -> T {
    let n = a.len();
    let mut m = T::zero();
    for i in 0..n {
        for j in 0..n {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

pub fn sup3_diff<T: Real>(a: &Arr3<T>, b: &Arr3<T>) -> T {
    let n = a.len();
    let mut m = T::zero();
    for i in 0..n {
        m = m.max(sup2_diff(&a[i], &b[i]));
    }
    m
}

pub fn mat_mul<T: Real>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let n = a.len();
    let mut c = zeros2(n);
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            for j in 0..n {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

pub fn mat_vec<T: Real>(a: &Mat<T>, x: &[T]) -> Vec<T> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(&r, &v)| r * v).sum())
        .collect()
}

pub fn transpose<T: Real>(a: &Mat<T>) -> Mat<T> {
    let n = a.len();
    let mut t = zeros2(n);
    for i in 0..n {
        for j in 0..n {
            t[j][i] = a[i][j];
        }
    }
    t
}

pub fn trace<T: Real>(a: &Mat<T>) -> T {
    (0..a.len()).map(|i| a[i][i]).sum()
}

/// Bilinear form `xᵀ g y`.
pub fn bilinear<T: Real>(g: &Mat<T>, x: &[T], y: &[T]) -> T {
    let mut s = T::zero();
    for (i, row) in g.iter().enumerate() {
        for (j, &gij) in row.iter().enumerate() {
            s += gij * x[i] * y[j];
        }
    }
    s
}

/// Full metric contraction of a rank-3 covariant tensor with itself:
/// `g^{ia} g^{jb} g^{kc} t_{ijk} t_{abc}`.
pub fn norm2_cov3<T: Real>(ginv: &Mat<T>, t: &Arr3<T>) -> T {
    let n = t.len();
    // raise one index at a time to keep this O(n^4)
    let mut t1 = zeros3(n); // t1^i_{jk}
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for a in 0..n {
                    t1[i][j][k] += ginv[i][a] * t[a][j][k];
                }
            }
        }
    }
    let mut t2 = zeros3(n); // t2^{ij}_k
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for b in 0..n {
                    t2[i][j][k] += ginv[j][b] * t1[i][b][k];
                }
            }
        }
    }
    let mut s = T::zero();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for c in 0..n {
                    s += ginv[k][c] * t2[i][j][k] * t[i][j][c];
                }
            }
        }
    }
    s
}

/// Full metric contraction of a rank-2 covariant tensor with itself.
pub fn norm2_cov2<T: Real>(ginv: &Mat<T>, t: &Mat<T>) -> T {
    let n = t.len();
    let mut s = T::zero();
    for i in 0..n {
        for j in 0..n {
            for a in 0..n {
                for b in 0..n {
                    s += ginv[i][a] * ginv[j][b] * t[i][j] * t[a][b];
                }
            }
        }
    }
    s
}
