//! Construction of the full equiaffine (Blaschke) structure at a chart point.
//!
//! Input: the jets of an immersion `F: U ⊂ R^n -> R^{n+1}` at a point, to
//! order `N`. Output: the affine metric `h`, affine normal `ξ`, shape
//! operator `S`, induced and Levi-Civita connections `Γ`, `Γ̂`, difference
//! tensor `K`, and cubic form `C` — each still jet-valued so that downstream
//! curvature work can differentiate them.
//!
//! Order bookkeeping (input order `N`): frame `N−1`; tentative decomposition
//! and `h` at `N−2`; `Γ̂`, `ξ`, `Γ`, `K`, `C` at `N−3`; `S` at `N−4`. The
//! construction therefore requires `N ≥ 4`.
//!
//! The steps, all exact over the jet ring:
//! 1. Seed transversal `ξ̃` = generalized Euclidean cross product of the
//!    frame; solve `∂²F = Γ̃·frame + h̃·ξ̃`.
//! 2. Orientation: if `h̃` is negative definite flip `ξ̃`; if indefinite the
//!    point is not locally strongly convex and the computation stops.
//! 3. Normalize: `h = |det h̃|^{−1/(n+2)} |θ|^{2/(n+2)} h̃` with
//!    `θ = det[F₁…Fₙ, ξ̃]` — the unique weighting invariant under transversal
//!    rescaling and unimodular chart change.
//! 4. Affine normal via the Laplace–Beltrami formula `ξ = (1/n)Δ_h F`, then
//!    re-decompose `∂²F` against `(frame, ξ)` to get the induced connection
//!    (and `h` again — an internal consistency check).
//! 5. `S` from the Weingarten relation `∂ξ = −S·frame` (the transversal part
//!    of `∂ξ` is the equiaffinity residual and should vanish).
//! 6. `K = Γ − Γ̂` and `C = −2 h K`.

use std::sync::Arc;

use crate::dsl::{ImmersionSpec, NoProfiles, ProfileSource};
use crate::error::{Error, Result};
use crate::jet::{jet_det, jet_solve, jet_space, Jet, JetSpace};
use crate::linalg::lu_det;
use crate::scalar::Real;
use crate::tensor::{norm2_cov3, zeros2, Arr3, Mat};

/// Outcome of decomposing `∂²F` against the frame and the Euclidean seed
/// transversal.
pub struct TentativeFrame<T: Real> {
    /// `frame[i][a]`: ambient component `a` of `F_i = ∂F/∂u_i` (order `N−1`).
    pub frame: Vec<Vec<Jet<T>>>,
    /// Seed transversal (cross product of the frame), sign fixed so the
    /// tentative second fundamental form is positive definite.
    pub xi_tilde: Vec<Jet<T>>,
    /// Tentative second fundamental form `h̃[i][j]` (order `N−2`).
    pub h_tilde: Mat<Jet<T>>,
    /// Tangential coefficients `Γ̃^k_{ij}` of the tentative decomposition.
    pub gamma_tilde: Arr3<Jet<T>>,
    /// `θ = det[F₁,…,Fₙ, ξ̃]` (order `N−1`).
    pub theta: Jet<T>,
    /// Second derivatives `∂²F/∂uᵢ∂uⱼ` for `i ≤ j`, keyed by pair index.
    second: Vec<Vec<Jet<T>>>,
}

/// Upper-triangular pair ordering used for the decomposition columns.
fn pairs(n: usize) -> Vec<(usize, usize)> {
    let mut ps = Vec::new();
    for i in 0..n {
        for j in i..n {
            ps.push((i, j));
        }
    }
    ps
}

/// Generalized cross product: the vector Euclidean-orthogonal to the `n`
/// frame columns, with `det[F₁,…,Fₙ, ξ̃] = |ξ̃|² > 0`.
fn cross_product<T: Real>(frame: &[Vec<Jet<T>>], n: usize) -> Result<Vec<Jet<T>>> {
    let mut out = Vec::with_capacity(n + 1);
    for a in 0..=n {
        let mut minor = Vec::with_capacity(n);
        for r in (0..=n).filter(|&r| r != a) {
            let row: Vec<Jet<T>> = (0..n).map(|i| frame[i][r].clone()).collect();
            minor.push(row);
        }
        let sign = if (n + a) % 2 == 0 { T::one() } else { -T::one() };
        out.push(jet_det(&minor)?.scale(sign));
    }
    Ok(out)
}

/// Decompose the second derivatives of `F` against the frame and the
/// Euclidean seed transversal; fixes orientation and rejects non-convex
/// points.
pub fn tentative_frame<T: Real>(f_jets: &[Jet<T>]) -> Result<TentativeFrame<T>> {
    let n = f_jets.len() - 1;
    let order = f_jets[0].order();
    if f_jets[0].num_vars() != n {
        return Err(Error::Dimension(format!(
            "{} components require jets in {} variables, got {}",
            n + 1,
            n,
            f_jets[0].num_vars()
        )));
    }
    if order < 2 {
        return Err(Error::OrderTooLow {
            required: 2,
            available: order,
        });
    }
    let frame: Vec<Vec<Jet<T>>> = (0..n)
        .map(|i| f_jets.iter().map(|fa| fa.derivative(i)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let mut xi_tilde = cross_product(&frame, n)?;
    if xi_tilde.iter().all(|j| j.value() == T::zero()) {
        return Err(Error::DegenerateFrame(
            "frame vectors linearly dependent (zero cross product)".into(),
        ));
    }
    let mut theta = {
        let m: Vec<Vec<Jet<T>>> = (0..=n)
            .map(|a| {
                let mut row: Vec<Jet<T>> = (0..n).map(|i| frame[i][a].clone()).collect();
                row.push(xi_tilde[a].clone());
                row
            })
            .collect();
        jet_det(&m)?
    };
    // second derivatives (order N−2) and the decomposition solve
    let ps = pairs(n);
    let no = order - 2;
    let mut second = Vec::with_capacity(ps.len());
    for &(i, j) in &ps {
        let col: Vec<Jet<T>> = frame[i]
            .iter()
            .map(|fa| fa.derivative(j))
            .collect::<Result<_>>()?;
        second.push(col);
    }
    let m: Vec<Vec<Jet<T>>> = (0..=n)
        .map(|a| {
            let mut row: Vec<Jet<T>> = (0..n)
                .map(|i| frame[i][a].truncated(no))
                .collect::<Result<_>>()?;
            row.push(xi_tilde[a].truncated(no)?);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let rhs: Vec<Vec<Jet<T>>> = (0..=n)
        .map(|a| {
            second
                .iter()
                .map(|col| col[a].truncated(no))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let sol = jet_solve(&m, &rhs)?;
    let mut h_tilde: Mat<Jet<T>> = vec![Vec::new(); n];
    for row in h_tilde.iter_mut() {
        row.resize(n, Jet::zero(sol[n][0].space()));
    }
    let mut gamma_tilde: Arr3<Jet<T>> = vec![vec![Vec::new(); n]; n];
    for k in 0..n {
        for row in gamma_tilde[k].iter_mut() {
            row.resize(n, Jet::zero(sol[n][0].space()));
        }
    }
    for (col, &(i, j)) in ps.iter().enumerate() {
        h_tilde[i][j] = sol[n][col].clone();
        h_tilde[j][i] = sol[n][col].clone();
        for k in 0..n {
            gamma_tilde[k][i][j] = sol[k][col].clone();
            gamma_tilde[k][j][i] = sol[k][col].clone();
        }
    }
    // definiteness by leading principal minors of the value part
    let hv: Mat<T> = h_tilde
        .iter()
        .map(|row| row.iter().map(|j| j.value()).collect())
        .collect();
    let minors: Vec<T> = (0..n)
        .map(|k| {
            let sub: Mat<T> = hv[..=k].iter().map(|row| row[..=k].to_vec()).collect();
            lu_det(&sub)
        })
        .collect();
    let neg_definite = minors
        .iter()
        .enumerate()
        .all(|(k, &mk)| if k % 2 == 0 { mk < T::zero() } else { mk > T::zero() });
    if neg_definite {
        for v in xi_tilde.iter_mut() {
            *v = v.scale(-T::one());
        }
        theta = theta.scale(-T::one());
        for row in h_tilde.iter_mut() {
            for v in row.iter_mut() {
                *v = v.scale(-T::one());
            }
        }
    } else if !minors.iter().all(|&mk| mk > T::zero()) {
        return Err(Error::NotConvex { point: Vec::new() });
    }
    Ok(TentativeFrame {
        frame,
        xi_tilde,
        h_tilde,
        gamma_tilde,
        theta,
        second,
    })
}

/// Normalize the tentative form into the affine metric:
/// `h = |det h̃|^{−1/(n+2)} · |θ|^{2/(n+2)} · h̃`.
pub fn affine_metric<T: Real>(h_tilde: &Mat<Jet<T>>, theta: &Jet<T>) -> Result<Mat<Jet<T>>> {
    let n = h_tilde.len();
    let no = h_tilde[0][0].order();
    let det_ht = jet_det(h_tilde)?;
    let sd = if det_ht.value() > T::zero() {
        T::one()
    } else {
        -T::one()
    };
    let st = if theta.value() > T::zero() {
        T::one()
    } else {
        -T::one()
    };
    let np2 = T::of_usize(n + 2);
    let conf = det_ht
        .scale(sd)
        .powf(-T::one() / np2)?
        .checked_mul(&theta.truncated(no)?.scale(st).powf(T::of(2.0) / np2)?)?;
    Ok(h_tilde
        .iter()
        .map(|row| row.iter().map(|v| conf.checked_mul(v).expect("same space")).collect())
        .collect())
}

/// The full equiaffine structure of an immersion at one chart point, kept
/// jet-valued for downstream differentiation.
pub struct BlaschkePoint<T: Real> {
    pub n: usize,
    /// Input jet order `N`.
    pub order: usize,
    /// `frame[i][a]` = ambient component `a` of `∂F/∂u_i` (order `N−1`).
    pub frame: Vec<Vec<Jet<T>>>,
    /// Affine metric `h[i][j]` (order `N−2`).
    pub h: Mat<Jet<T>>,
    /// Inverse metric `h^{ij}` (order `N−2`).
    pub hinv: Mat<Jet<T>>,
    /// Levi-Civita coefficients `Γ̂^k_{ij}` indexed `[k][i][j]` (order `N−3`).
    pub gamma_hat: Arr3<Jet<T>>,
    /// Affine normal `ξ` (order `N−3`).
    pub xi: Vec<Jet<T>>,
    /// Induced-connection coefficients `Γ^k_{ij}` (order `N−3`).
    pub gamma: Arr3<Jet<T>>,
    /// Metric re-derived from the second decomposition (order `N−3`);
    /// must equal `h` — self-consistency of the affine normal.
    pub h2: Mat<Jet<T>>,
    /// Shape operator `S^k_i` indexed `[k][i]` (order `N−4`).
    pub shape: Mat<Jet<T>>,
    /// Transversal components of `∂ξ/∂u_i` (equiaffinity residuals; ≈ 0).
    pub equi: Vec<T>,
    /// Difference tensor `K^k_{ij}` indexed `[k][i][j]` (order `N−3`).
    pub k_tensor: Arr3<Jet<T>>,
    /// Cubic form `C_{ijk}` indexed `[i][j][k]` (order `N−3`).
    pub cubic: Arr3<Jet<T>>,
}

/// Run the full construction on the jets of the immersion components.
pub fn blaschke_from_jets<T: Real>(f_jets: &[Jet<T>]) -> Result<BlaschkePoint<T>> {
    let n = f_jets.len() - 1;
    let order = f_jets[0].order();
    if order < 4 {
        return Err(Error::OrderTooLow {
            required: 4,
            available: order,
        });
    }
    let tf = tentative_frame(f_jets)?;
    let h = affine_metric(&tf.h_tilde, &tf.theta)?;
    let no = order - 2;
    let sp_no = jet_space(n, no)?;
    // inverse metric over the jet ring
    let hinv = {
        let eye: Vec<Vec<Jet<T>>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        Jet::constant(&sp_no, if i == j { T::one() } else { T::zero() })
                    })
                    .collect()
            })
            .collect();
        jet_solve(&h, &eye)?
    };
    // Levi-Civita coefficients at order N−3
    let ng = order - 3;
    let sp_ng = jet_space(n, ng)?;
    let dh: Vec<Vec<Vec<Jet<T>>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    (0..n)
                        .map(|l| h[i][j].derivative(l)?.truncated(ng))
                        .collect::<Result<_>>()
                })
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let hinv_ng: Mat<Jet<T>> = hinv
        .iter()
        .map(|row| row.iter().map(|v| v.truncated(ng)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let mut gamma_hat: Arr3<Jet<T>> = vec![vec![vec![Jet::zero(&sp_ng); n]; n]; n];
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut acc = Jet::zero(&sp_ng);
                for l in 0..n {
                    let sum = dh[j][l][i]
                        .checked_add(&dh[i][l][j])?
                        .checked_sub(&dh[i][j][l])?;
                    acc += &hinv_ng[k][l].checked_mul(&sum)?;
                }
                let half = acc.scale(T::of(0.5));
                gamma_hat[k][i][j] = half.clone();
                gamma_hat[k][j][i] = half;
            }
        }
    }
    // affine normal: ξ = (1/n) h^{ij} (F_{ij} − Γ̂^k_{ij} F_k)
    let ps = pairs(n);
    let pair_col = |i: usize, j: usize| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        ps.iter().position(|&p| p == (a, b)).expect("pair present")
    };
    let frame_ng: Vec<Vec<Jet<T>>> = tf
        .frame
        .iter()
        .map(|col| col.iter().map(|v| v.truncated(ng)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let mut xi = vec![Jet::zero(&sp_ng); n + 1];
    for i in 0..n {
        for j in 0..n {
            for (a, xa) in xi.iter_mut().enumerate() {
                let mut term = tf.second[pair_col(i, j)][a].truncated(ng)?;
                for k in 0..n {
                    term -= &gamma_hat[k][i][j].checked_mul(&frame_ng[k][a])?;
                }
                *xa += &hinv_ng[i][j].checked_mul(&term)?;
            }
        }
    }
    let inv_n = T::one() / T::of_usize(n);
    for xa in xi.iter_mut() {
        *xa = xa.scale(inv_n);
    }
    // re-decompose against (frame, ξ): induced connection and h again
    let m3: Vec<Vec<Jet<T>>> = (0..=n)
        .map(|a| {
            let mut row: Vec<Jet<T>> = frame_ng.iter().map(|col| col[a].clone()).collect();
            row.push(xi[a].clone());
            row
        })
        .collect();
    let rhs3: Vec<Vec<Jet<T>>> = (0..=n)
        .map(|a| {
            tf.second
                .iter()
                .map(|col| col[a].truncated(ng))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let sol3 = jet_solve(&m3, &rhs3)?;
    let mut gamma: Arr3<Jet<T>> = vec![vec![vec![Jet::zero(&sp_ng); n]; n]; n];
    let mut h2: Mat<Jet<T>> = vec![vec![Jet::zero(&sp_ng); n]; n];
    for (col, &(i, j)) in ps.iter().enumerate() {
        h2[i][j] = sol3[n][col].clone();
        h2[j][i] = sol3[n][col].clone();
        for k in 0..n {
            gamma[k][i][j] = sol3[k][col].clone();
            gamma[k][j][i] = sol3[k][col].clone();
        }
    }
    // shape operator from ∂ξ = −S·frame (order N−4)
    let ns = order - 4;
    let m4: Vec<Vec<Jet<T>>> = (0..=n)
        .map(|a| {
            let mut row: Vec<Jet<T>> = tf
                .frame
                .iter()
                .map(|col| col[a].truncated(ns))
                .collect::<Result<_>>()?;
            row.push(xi[a].truncated(ns)?);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let rhs4: Vec<Vec<Jet<T>>> = (0..=n)
        .map(|a| {
            (0..n)
                .map(|i| xi[a].derivative(i)?.truncated(ns))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let sol4 = jet_solve(&m4, &rhs4)?;
    let shape: Mat<Jet<T>> = (0..n)
        .map(|k| (0..n).map(|i| sol4[k][i].scale(-T::one())).collect())
        .collect();
    let equi: Vec<T> = (0..n).map(|i| sol4[n][i].value()).collect();
    // difference tensor and cubic form
    let mut k_tensor: Arr3<Jet<T>> = vec![vec![vec![Jet::zero(&sp_ng); n]; n]; n];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                k_tensor[k][i][j] = gamma[k][i][j].checked_sub(&gamma_hat[k][i][j])?;
            }
        }
    }
    let mut cubic: Arr3<Jet<T>> = vec![vec![vec![Jet::zero(&sp_ng); n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut acc = Jet::zero(&sp_ng);
                for l in 0..n {
                    acc += &h[k][l].truncated(ng)?.checked_mul(&k_tensor[l][i][j])?;
                }
                cubic[i][j][k] = acc.scale(-T::of(2.0));
            }
        }
    }
    Ok(BlaschkePoint {
        n,
        order,
        frame: tf.frame,
        h,
        hinv,
        gamma_hat,
        xi,
        gamma,
        h2,
        shape,
        equi,
        k_tensor,
        cubic,
    })
}

/// Evaluate a spec at a chart point and run the construction, labelling
/// convexity errors with the point.
pub fn blaschke_point<T: Real>(
    spec: &ImmersionSpec,
    p: &[T],
    order: usize,
) -> Result<BlaschkePoint<T>> {
    blaschke_point_with(spec, p, order, &NoProfiles)
}

/// [`blaschke_point`] with a profile table for specs that reference
/// `profile_<k>` functions.
pub fn blaschke_point_with<T: Real>(
    spec: &ImmersionSpec,
    p: &[T],
    order: usize,
    profiles: &dyn ProfileSource<T>,
) -> Result<BlaschkePoint<T>> {
    let jets = spec.eval_jet_with(p, order, profiles)?;
    blaschke_from_jets(&jets).map_err(|e| match e {
        Error::NotConvex { point } if point.is_empty() => Error::NotConvex {
            point: p.iter().map(|&x| x.f64()).collect(),
        },
        other => other,
    })
}

impl<T: Real> std::fmt::Debug for BlaschkePoint<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlaschkePoint")
            .field("n", &self.n)
            .field("order", &self.order)
            .field("h", &self.h_values())
            .field("xi", &self.xi_values())
            .field("S", &self.shape_values())
            .finish_non_exhaustive()
    }
}

impl<T: Real> BlaschkePoint<T> {
    fn values2(m: &Mat<Jet<T>>) -> Mat<T> {
        m.iter()
            .map(|row| row.iter().map(|j| j.value()).collect())
            .collect()
    }

    fn values3(a: &Arr3<Jet<T>>) -> Arr3<T> {
        a.iter().map(Self::values2).collect()
    }

    pub fn h_values(&self) -> Mat<T> {
        Self::values2(&self.h)
    }

    pub fn hinv_values(&self) -> Mat<T> {
        Self::values2(&self.hinv)
    }

    pub fn shape_values(&self) -> Mat<T> {
        Self::values2(&self.shape)
    }

    pub fn cubic_values(&self) -> Arr3<T> {
        Self::values3(&self.cubic)
    }

    pub fn k_values(&self) -> Arr3<T> {
        Self::values3(&self.k_tensor)
    }

    pub fn xi_values(&self) -> Vec<T> {
        self.xi.iter().map(|j| j.value()).collect()
    }

    pub fn frame_values(&self) -> Vec<Vec<T>> {
        self.frame
            .iter()
            .map(|col| col.iter().map(|j| j.value()).collect())
            .collect()
    }

    /// Mean affine curvature `H = tr S / n`.
    pub fn mean_curvature(&self) -> T {
        (0..self.n).map(|k| self.shape[k][k].value()).sum::<T>() / T::of_usize(self.n)
    }

    /// Pick invariant `J = ‖K‖²_h / (n(n−1))`, computed through the cubic
    /// form (`‖C‖²_h = 4‖K‖²_h`).
    pub fn pick_invariant(&self) -> T {
        let c2 = norm2_cov3(&self.hinv_values(), &self.cubic_values());
        c2 / (T::of(4.0) * T::of_usize(self.n) * T::of_usize(self.n - 1))
    }

    /// `‖C‖²_h` (full metric contraction).
    pub fn cubic_norm2(&self) -> T {
        norm2_cov3(&self.hinv_values(), &self.cubic_values())
    }

    /// Sup-norm of the apolarity trace `Σ_k K^k_{ki}`.
    pub fn apolarity_residual(&self) -> T {
        let kv = self.k_values();
        let mut worst = T::zero();
        for i in 0..self.n {
            let tr: T = (0..self.n).map(|k| kv[k][k][i]).sum();
            worst = worst.max(tr.abs());
        }
        worst
    }

    /// Sup-norm residual of the transversal parts of `∂ξ` (equiaffinity).
    pub fn equiaffine_residual(&self) -> T {
        self.equi.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    /// Sup-norm of `h₂ − h`: the metric recomputed against the affine normal
    /// must reproduce the normalized metric.
    pub fn metric_consistency_residual(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                worst = worst.max((self.h2[i][j].value() - self.h[i][j].value()).abs());
            }
        }
        worst
    }

    /// Relative residual of the volume normalization
    /// `det[F₁,…,Fₙ, ξ]² = det h`.
    pub fn volume_residual(&self) -> T {
        let n = self.n;
        let mut m = zeros2::<T>(n + 1);
        for a in 0..=n {
            for i in 0..n {
                m[a][i] = self.frame[i][a].value();
            }
            m[a][n] = self.xi[a].value();
        }
        let theta = lu_det(&m);
        let det_h = lu_det(&self.h_values());
        (theta * theta - det_h).abs() / det_h.abs().max(T::one())
    }

    /// Space handle for the order the connection-level jets live at (`N−3`).
    pub fn connection_space(&self) -> Result<Arc<JetSpace>> {
        jet_space(self.n, self.order - 3)
    }
}
