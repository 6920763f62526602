//! Intrinsic curvature of the affine metric and derived structure checks.
//!
//! Starting from a [`BlaschkePoint`] this module computes the curvature tensor
//! of the metric connection, its Ricci/scalar traces, the Schouten and Weyl
//! pieces of the curvature decomposition, the covariant derivative of the
//! cubic form, and the action of the curvature operator on the cubic form by
//! two independent routes:
//!
//! * **commutator route** — differentiate the cubic form covariantly twice and
//!   antisymmetrise in the two derivative slots (needs one jet order more than
//!   the rest of the stack), and
//! * **action route** — contract the already-computed curvature tensor against
//!   the cubic form algebraically.
//!
//! The two routes agree identically for every immersion; their gap is a
//! numerical health check, while their common value is the semi-parallelism
//! obstruction used by the classifier.
//!
//! All residuals reported here are absolute sup-norms over tensor components.
//! The built-in families are normalised so that curvature components are O(1),
//! which keeps absolute thresholds meaningful.

use crate::blaschke::BlaschkePoint;
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::scalar::Real;
use crate::tensor::{zeros2, zeros3, zeros4, zeros5, Arr3, Arr4, Arr5, Mat};

/// Value-level curvature data at a single chart point.
///
/// Index conventions (all indices range over `0..n`):
/// * `riem[l][i][j][k]` is the `(1,3)` curvature tensor `R^l_{ijk}` of the
///   metric connection, defined by
///   `R^l_{ijk} = d_i G^l_{jk} - d_j G^l_{ik} + G^l_{im} G^m_{jk} - G^l_{jm} G^m_{ik}`
///   where `G` are the metric connection coefficients;
/// * `ricci[j][k] = sum_i riem[i][i][j][k]`;
/// * `ricci_op` is the Ricci endomorphism obtained by raising the first slot;
/// * `schouten` is the `(1,1)` Schouten operator
///   `P = ricci_op/(n-2) - scalar/(2(n-1)(n-2)) * id`;
/// * `weyl[l][i][j][k]` is the trace-free remainder of `riem` after removing
///   the metric wedge of the Schouten operator;
/// * `grad_c[l][i][j][k]` is the covariant derivative of the cubic form,
///   differentiating in slot `l`;
/// * `rc_action[a][b][i][j][k]` is the curvature operator acting on the cubic
///   form as a derivation, `-(R(d_a, d_b) . C)_{ijk}`;
/// * `rc_comm` is the same quantity from the commutator of two covariant
///   derivatives of the cubic form; it is available when the evaluation order
///   is at least 5.
#[derive(Debug, Clone)]
pub struct CurvaturePack<T: Real> {
    /// Chart dimension.
    pub n: usize,
    /// Jet order of the underlying evaluation.
    pub order: usize,
    /// Affine metric values.
    pub h: Mat<T>,
    /// Inverse affine metric values.
    pub hinv: Mat<T>,
    /// Shape operator values `S^k_i`, indexed `[k][i]`.
    pub shape: Mat<T>,
    /// Difference tensor values `K^k_{ij}`, indexed `[k][i][j]`.
    pub k: Arr3<T>,
    /// Cubic form values `C_{ijk}`.
    pub cubic: Arr3<T>,
    /// Curvature tensor of the metric connection.
    pub riem: Arr4<T>,
    /// Ricci tensor (covariant).
    pub ricci: Mat<T>,
    /// Scalar curvature.
    pub scalar: T,
    /// Ricci endomorphism `Q^i_j = h^{ik} ricci[k][j]`.
    pub ricci_op: Mat<T>,
    /// Schouten operator (`(1,1)` form).
    pub schouten: Mat<T>,
    /// Weyl tensor (`(1,3)` form).
    pub weyl: Arr4<T>,
    /// Covariant derivative of the cubic form.
    pub grad_c: Arr4<T>,
    /// Curvature acting on the cubic form, algebraic route.
    pub rc_action: Arr5<T>,
    /// Curvature acting on the cubic form, commutator route (order >= 5).
    pub rc_comm: Option<Arr5<T>>,
}

fn riemann_of<T: Real>(bp: &BlaschkePoint<T>) -> Result<Arr4<T>> {
    let n = bp.n;
    let gh = &bp.gamma_hat;
    let mut riem = zeros4::<T>(n);
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                for kk in 0..n {
                    let mut s = gh[l][j][kk].derivative(i)?.value()
                        - gh[l][i][kk].derivative(j)?.value();
                    for m in 0..n {
                        s += gh[l][i][m].value() * gh[m][j][kk].value()
                            - gh[l][j][m].value() * gh[m][i][kk].value();
                    }
                    riem[l][i][j][kk] = s;
                }
            }
        }
    }
    Ok(riem)
}

fn ricci_of<T: Real>(riem: &Arr4<T>) -> Mat<T> {
    let n = riem.len();
    let mut ricci = zeros2::<T>(n);
    for j in 0..n {
        for kk in 0..n {
            let mut s = T::zero();
            for i in 0..n {
                s += riem[i][i][j][kk];
            }
            ricci[j][kk] = s;
        }
    }
    ricci
}

fn ricci_op_of<T: Real>(hinv: &Mat<T>, ricci: &Mat<T>) -> Mat<T> {
    let n = hinv.len();
    let mut op = zeros2::<T>(n);
    for i in 0..n {
        for j in 0..n {
            let mut s = T::zero();
            for kk in 0..n {
                s += hinv[i][kk] * ricci[kk][j];
            }
            op[i][j] = s;
        }
    }
    op
}

fn schouten_of<T: Real>(n: usize, ricci_op: &Mat<T>, scalar: T) -> Mat<T> {
    let nm2 = T::of_usize(n - 2);
    let shift = scalar / (T::of_usize(2 * (n - 1)) * nm2);
    let mut schouten = zeros2::<T>(n);
    for i in 0..n {
        for j in 0..n {
            schouten[i][j] = ricci_op[i][j] / nm2;
            if i == j {
                schouten[i][j] -= shift;
            }
        }
    }
    schouten
}

fn check_pack_preconditions<T: Real>(bp: &BlaschkePoint<T>) -> Result<()> {
    if bp.n < 3 {
        return Err(Error::Dimension(format!(
            "curvature decomposition needs chart dimension >= 3, got {}",
            bp.n
        )));
    }
    if bp.order < 4 {
        return Err(Error::OrderTooLow {
            required: 4,
            available: bp.order,
        });
    }
    Ok(())
}

/// Curvature of the metric connection with its traces and the Schouten
/// operator — the subset of [`CurvaturePack`] needed to locate eigenstructure,
/// skipping the cubic-form derivative arrays.  Used for the off-center stencil
/// evaluations of the classifier, where the full pack would be wasted work.
#[derive(Debug, Clone)]
pub struct MetricCurvature<T: Real> {
    /// Curvature tensor of the metric connection, indexed `[l][i][j][k]`.
    pub riem: Arr4<T>,
    /// Ricci tensor (covariant).
    pub ricci: Mat<T>,
    /// Scalar curvature.
    pub scalar: T,
    /// Schouten operator (`(1,1)` form).
    pub schouten: Mat<T>,
}

/// Compute only the metric-connection curvature stack (see
/// [`MetricCurvature`]).  Same preconditions as [`curvature_pack`].
pub fn metric_curvature<T: Real>(bp: &BlaschkePoint<T>) -> Result<MetricCurvature<T>> {
    check_pack_preconditions(bp)?;
    let n = bp.n;
    let hinv = bp.hinv_values();
    let riem = riemann_of(bp)?;
    let ricci = ricci_of(&riem);
    let mut scalar = T::zero();
    for j in 0..n {
        for kk in 0..n {
            scalar += hinv[j][kk] * ricci[j][kk];
        }
    }
    let ricci_op = ricci_op_of(&hinv, &ricci);
    let schouten = schouten_of(n, &ricci_op, scalar);
    Ok(MetricCurvature {
        riem,
        ricci,
        scalar,
        schouten,
    })
}

/// Compute the curvature stack at one point.
///
/// Requires chart dimension at least 3 (the Schouten/Weyl decomposition
/// divides by `n - 2`) and evaluation order at least 4.  With order exactly 4
/// the commutator route is skipped (`rc_comm` is `None`); order 5 and above
/// fills it in.
pub fn curvature_pack<T: Real>(bp: &BlaschkePoint<T>) -> Result<CurvaturePack<T>> {
    check_pack_preconditions(bp)?;
    let n = bp.n;
    let order = bp.order;

    let h = bp.h_values();
    let hinv = bp.hinv_values();
    let shape = bp.shape_values();
    let k = bp.k_values();
    let cubic = bp.cubic_values();

    // Curvature tensor of the metric connection; the connection jets have
    // order `order - 3`, so this is a plain value once differentiated.
    let gh = &bp.gamma_hat;
    let riem = riemann_of(bp)?;
    let ricci = ricci_of(&riem);
    let mut scalar = T::zero();
    for j in 0..n {
        for kk in 0..n {
            scalar += hinv[j][kk] * ricci[j][kk];
        }
    }
    let ricci_op = ricci_op_of(&hinv, &ricci);
    let schouten = schouten_of(n, &ricci_op, scalar);

    // Weyl: remove the metric wedge of the Schouten operator from `riem`.
    let mut hp = zeros2::<T>(n);
    for j in 0..n {
        for kk in 0..n {
            let mut s = T::zero();
            for m in 0..n {
                s += h[j][m] * schouten[m][kk];
            }
            hp[j][kk] = s;
        }
    }
    let mut weyl = zeros4::<T>(n);
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                for kk in 0..n {
                    let mut wedge = h[j][kk] * schouten[l][i] - h[i][kk] * schouten[l][j];
                    if l == i {
                        wedge += hp[j][kk];
                    }
                    if l == j {
                        wedge -= hp[i][kk];
                    }
                    weyl[l][i][j][kk] = riem[l][i][j][kk] - wedge;
                }
            }
        }
    }

    // Covariant derivative of the cubic form, kept as jets of order
    // `order - 4` so the commutator route can differentiate once more.
    let grad_order = order - 4;
    let mut gh_t: Arr3<Jet<T>> = Vec::with_capacity(n);
    for l in 0..n {
        let mut plane = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = Vec::with_capacity(n);
            for j in 0..n {
                row.push(gh[l][i][j].truncated(grad_order)?);
            }
            plane.push(row);
        }
        gh_t.push(plane);
    }
    let mut c_t: Arr3<Jet<T>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut plane = Vec::with_capacity(n);
        for j in 0..n {
            let mut row = Vec::with_capacity(n);
            for kk in 0..n {
                row.push(bp.cubic[i][j][kk].truncated(grad_order)?);
            }
            plane.push(row);
        }
        c_t.push(plane);
    }
    let mut grad_c_jets: Arr4<Jet<T>> = Vec::with_capacity(n);
    for l in 0..n {
        let mut cube = Vec::with_capacity(n);
        for i in 0..n {
            let mut plane = Vec::with_capacity(n);
            for j in 0..n {
                let mut row = Vec::with_capacity(n);
                for kk in 0..n {
                    let mut s = bp.cubic[i][j][kk].derivative(l)?;
                    for m in 0..n {
                        s = &s - &(&gh_t[m][l][i] * &c_t[m][j][kk]);
                        s = &s - &(&gh_t[m][l][j] * &c_t[i][m][kk]);
                        s = &s - &(&gh_t[m][l][kk] * &c_t[i][j][m]);
                    }
                    row.push(s);
                }
                plane.push(row);
            }
            cube.push(plane);
        }
        grad_c_jets.push(cube);
    }
    let mut grad_c = zeros4::<T>(n);
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                for kk in 0..n {
                    grad_c[l][i][j][kk] = grad_c_jets[l][i][j][kk].value();
                }
            }
        }
    }

    // Commutator route: second covariant derivative, antisymmetrised.
    let rc_comm = if order >= 5 {
        let o2 = order - 5;
        let mut gh2: Arr3<Jet<T>> = Vec::with_capacity(n);
        for l in 0..n {
            let mut plane = Vec::with_capacity(n);
            for i in 0..n {
                let mut row = Vec::with_capacity(n);
                for j in 0..n {
                    row.push(gh[l][i][j].truncated(o2)?);
                }
                plane.push(row);
            }
            gh2.push(plane);
        }
        let mut gc_t: Arr4<Jet<T>> = Vec::with_capacity(n);
        for l in 0..n {
            let mut cube = Vec::with_capacity(n);
            for i in 0..n {
                let mut plane = Vec::with_capacity(n);
                for j in 0..n {
                    let mut row = Vec::with_capacity(n);
                    for kk in 0..n {
                        row.push(grad_c_jets[l][i][j][kk].truncated(o2)?);
                    }
                    plane.push(row);
                }
                cube.push(plane);
            }
            gc_t.push(cube);
        }
        let mut comm = zeros5::<T>(n);
        for a in 0..n {
            for b in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        for kk in 0..n {
                            let mut s = grad_c_jets[b][i][j][kk].derivative(a)?;
                            for m in 0..n {
                                s = &s - &(&gh2[m][a][b] * &gc_t[m][i][j][kk]);
                                s = &s - &(&gh2[m][a][i] * &gc_t[b][m][j][kk]);
                                s = &s - &(&gh2[m][a][j] * &gc_t[b][i][m][kk]);
                                s = &s - &(&gh2[m][a][kk] * &gc_t[b][i][j][m]);
                            }
                            comm[a][b][i][j][kk] = s.value();
                        }
                    }
                }
            }
        }
        let mut rc = zeros5::<T>(n);
        for a in 0..n {
            for b in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        for kk in 0..n {
                            rc[a][b][i][j][kk] = comm[a][b][i][j][kk] - comm[b][a][i][j][kk];
                        }
                    }
                }
            }
        }
        Some(rc)
    } else {
        None
    };

    // Action route: curvature as a derivation on the cubic form.
    let mut rc_action = zeros5::<T>(n);
    for a in 0..n {
        for b in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for kk in 0..n {
                        let mut s = T::zero();
                        for m in 0..n {
                            s += riem[m][a][b][i] * cubic[m][j][kk]
                                + riem[m][a][b][j] * cubic[i][m][kk]
                                + riem[m][a][b][kk] * cubic[i][j][m];
                        }
                        rc_action[a][b][i][j][kk] = -s;
                    }
                }
            }
        }
    }

    Ok(CurvaturePack {
        n,
        order,
        h,
        hinv,
        shape,
        k,
        cubic,
        riem,
        ricci,
        scalar,
        ricci_op,
        schouten,
        weyl,
        grad_c,
        rc_action,
        rc_comm,
    })
}

impl<T: Real> CurvaturePack<T> {
    /// Normalised scalar curvature `scalar / (n (n - 1))`.
    pub fn chi(&self) -> T {
        self.scalar / T::of_usize(self.n * (self.n - 1))
    }

    /// Sup norm of the curvature tensor.
    pub fn riem_sup(&self) -> T {
        crate::tensor::sup4(&self.riem)
    }

    /// Sup norm of the Weyl tensor.
    pub fn weyl_sup(&self) -> T {
        crate::tensor::sup4(&self.weyl)
    }

    /// Sup norm of the covariant derivative of the cubic form.
    pub fn grad_c_sup(&self) -> T {
        crate::tensor::sup4(&self.grad_c)
    }

    /// Semi-parallelism obstruction from the algebraic route.
    pub fn semi_parallel_action(&self) -> T {
        crate::tensor::sup5(&self.rc_action)
    }

    /// Semi-parallelism obstruction from the commutator route, when computed.
    pub fn semi_parallel_comm(&self) -> Option<T> {
        self.rc_comm.as_ref().map(crate::tensor::sup5)
    }

    /// Sup gap between the two semi-parallelism routes, when both exist.
    pub fn route_gap(&self) -> Option<T> {
        let rc = self.rc_comm.as_ref()?;
        let n = self.n;
        let mut worst = T::zero();
        for a in 0..n {
            for b in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        for kk in 0..n {
                            let d = (rc[a][b][i][j][kk] - self.rc_action[a][b][i][j][kk]).abs();
                            if d > worst {
                                worst = d;
                            }
                        }
                    }
                }
            }
        }
        Some(worst)
    }

    /// Covariant bilinear form of the Schouten operator, `h P` as a matrix.
    pub fn lowered_schouten(&self) -> Mat<T> {
        let n = self.n;
        let mut hp = zeros2::<T>(n);
        for j in 0..n {
            for kk in 0..n {
                let mut s = T::zero();
                for m in 0..n {
                    s += self.h[j][m] * self.schouten[m][kk];
                }
                hp[j][kk] = s;
            }
        }
        hp
    }

    /// Trace-free part of the Ricci tensor (covariant).
    pub fn traceless_ricci(&self) -> Mat<T> {
        let n = self.n;
        let shift = self.scalar / T::of_usize(n);
        let mut out = zeros2::<T>(n);
        for j in 0..n {
            for kk in 0..n {
                out[j][kk] = self.ricci[j][kk] - shift * self.h[j][kk];
            }
        }
        out
    }
}

/// Named residuals of identities that hold for every nondegenerate immersion.
///
/// Every entry is an absolute sup-norm.  `codazzi_shape` and `route_gap` need
/// one extra jet order and are absent at the minimum evaluation order.
#[derive(Debug, Clone)]
pub struct StructureResiduals<T: Real> {
    /// Trace of the difference tensor (vanishes by the volume normalisation).
    pub apolarity: T,
    /// Derivative of the transversal field along the frame directions.
    pub equiaffine: T,
    /// Gap between the metric from the normalised transversal field and the
    /// metric used to build it.
    pub metric_consistency: T,
    /// `det(frame, transversal)^2` versus `det h`.
    pub volume_normalization: T,
    /// Self-adjointness of the shape operator with respect to the metric.
    pub shape_self_adjoint: T,
    /// Curvature tensor versus shape/difference-tensor expression.
    pub gauss: T,
    /// Antisymmetrised covariant derivative of the difference tensor versus
    /// its shape-operator expression.
    pub codazzi_cubic: T,
    /// Antisymmetrised covariant derivative of the shape operator versus its
    /// difference-tensor expression (needs order >= 5).
    pub codazzi_shape: Option<T>,
    /// Covariant constancy of the metric under the metric connection.
    pub metricity: T,
    /// Derivative of the metric under the induced connection versus the cubic
    /// form.
    pub cubic_compatibility: T,
    /// Normalised scalar curvature versus mean curvature plus Pick invariant.
    pub chi_decomposition: T,
    /// Cyclic symmetry of the curvature tensor.
    pub bianchi_first: T,
    /// Pair-interchange symmetry of the lowered curvature tensor.
    pub riem_pair_symmetry: T,
    /// All trace contractions of the Weyl tensor.
    pub weyl_traces: T,
    /// Gap between the two semi-parallelism routes (needs order >= 5).
    pub route_gap: Option<T>,
}

impl<T: Real> StructureResiduals<T> {
    /// Name/value pairs for the residuals that were computed.
    pub fn entries(&self) -> Vec<(&'static str, T)> {
        let mut out = vec![
            ("apolarity", self.apolarity),
            ("equiaffine", self.equiaffine),
            ("metric_consistency", self.metric_consistency),
            ("volume_normalization", self.volume_normalization),
            ("shape_self_adjoint", self.shape_self_adjoint),
            ("gauss", self.gauss),
            ("codazzi_cubic", self.codazzi_cubic),
        ];
        if let Some(v) = self.codazzi_shape {
            out.push(("codazzi_shape", v));
        }
        out.push(("metricity", self.metricity));
        out.push(("cubic_compatibility", self.cubic_compatibility));
        out.push(("chi_decomposition", self.chi_decomposition));
        out.push(("bianchi_first", self.bianchi_first));
        out.push(("riem_pair_symmetry", self.riem_pair_symmetry));
        out.push(("weyl_traces", self.weyl_traces));
        if let Some(v) = self.route_gap {
            out.push(("route_gap", v));
        }
        out
    }

    /// Largest residual across the suite.
    pub fn sup(&self) -> T {
        self.entries()
            .into_iter()
            .fold(T::zero(), |acc, (_, v)| if v > acc { v } else { acc })
    }

    /// Name and value of the largest residual.
    pub fn worst(&self) -> (&'static str, T) {
        self.entries()
            .into_iter()
            .fold(("apolarity", T::zero()), |acc, e| if e.1 > acc.1 { e } else { acc })
    }
}

/// Evaluate the structure-identity residual suite at one point.
///
/// `bp` and `cp` must come from the same evaluation (same spec, point and
/// order); the function only reads them.
pub fn structure_residuals<T: Real>(
    bp: &BlaschkePoint<T>,
    cp: &CurvaturePack<T>,
) -> Result<StructureResiduals<T>> {
    let n = cp.n;
    let (h, hinv, shape, k, cubic, riem) =
        (&cp.h, &cp.hinv, &cp.shape, &cp.k, &cp.cubic, &cp.riem);

    let mut hs = zeros2::<T>(n);
    for j in 0..n {
        for kk in 0..n {
            let mut s = T::zero();
            for m in 0..n {
                s += h[j][m] * shape[m][kk];
            }
            hs[j][kk] = s;
        }
    }
    let mut shape_self_adjoint = T::zero();
    for i in 0..n {
        for j in 0..n {
            let d = (hs[i][j] - hs[j][i]).abs();
            if d > shape_self_adjoint {
                shape_self_adjoint = d;
            }
        }
    }

    // Gauss: curvature from shape operator and difference tensor.
    let half = T::of(0.5);
    let mut gauss = T::zero();
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                for kk in 0..n {
                    let mut wedge = h[j][kk] * shape[l][i] - h[i][kk] * shape[l][j];
                    if l == i {
                        wedge += hs[j][kk];
                    }
                    if l == j {
                        wedge -= hs[i][kk];
                    }
                    let mut kcomm = T::zero();
                    for m in 0..n {
                        kcomm += k[l][i][m] * k[m][j][kk] - k[l][j][m] * k[m][i][kk];
                    }
                    let d = (riem[l][i][j][kk] - half * wedge + kcomm).abs();
                    if d > gauss {
                        gauss = d;
                    }
                }
            }
        }
    }

    // Covariant derivative of the difference tensor (values suffice: the
    // difference-tensor jets carry one more order than needed here).
    let gh = &bp.gamma_hat;
    let mut nk = zeros4::<T>(n); // nk[a][l][j][k] = (grad_a K)^l_{jk}
    for a in 0..n {
        for l in 0..n {
            for j in 0..n {
                for kk in 0..n {
                    let mut s = bp.k_tensor[l][j][kk].derivative(a)?.value();
                    for m in 0..n {
                        s += gh[l][a][m].value() * k[m][j][kk]
                            - gh[m][a][j].value() * k[l][m][kk]
                            - gh[m][a][kk].value() * k[l][j][m];
                    }
                    nk[a][l][j][kk] = s;
                }
            }
        }
    }
    let mut codazzi_cubic = T::zero();
    for i in 0..n {
        for j in 0..n {
            for kk in 0..n {
                for l in 0..n {
                    let lhs = nk[i][l][j][kk] - nk[j][l][i][kk];
                    let mut rhs = h[j][kk] * shape[l][i] - h[i][kk] * shape[l][j];
                    if l == i {
                        rhs -= hs[j][kk];
                    }
                    if l == j {
                        rhs += hs[i][kk];
                    }
                    let d = (lhs - half * rhs).abs();
                    if d > codazzi_cubic {
                        codazzi_cubic = d;
                    }
                }
            }
        }
    }

    // Covariant derivative of the shape operator; its jets sit one order
    // lower, so this needs an extra order of input.
    let codazzi_shape = if cp.order >= 5 {
        let mut ns = zeros3::<T>(n); // ns[a][l][b] = (grad_a S)^l_b
        for a in 0..n {
            for l in 0..n {
                for b in 0..n {
                    let mut s = bp.shape[l][b].derivative(a)?.value();
                    for m in 0..n {
                        s += gh[l][a][m].value() * shape[m][b]
                            - gh[m][a][b].value() * shape[l][m];
                    }
                    ns[a][l][b] = s;
                }
            }
        }
        let mut worst = T::zero();
        for a in 0..n {
            for b in 0..n {
                for l in 0..n {
                    let lhs = ns[a][l][b] - ns[b][l][a];
                    let mut rhs = T::zero();
                    for m in 0..n {
                        rhs += k[l][m][b] * shape[m][a] - k[l][m][a] * shape[m][b];
                    }
                    let d = (lhs - rhs).abs();
                    if d > worst {
                        worst = d;
                    }
                }
            }
        }
        Some(worst)
    } else {
        None
    };

    // Metric derivative under both connections.
    let gam = &bp.gamma;
    let mut metricity = T::zero();
    let mut cubic_compatibility = T::zero();
    for i in 0..n {
        for j in 0..n {
            for kk in 0..n {
                let dh = bp.h[j][kk].derivative(i)?.value();
                let mut s_hat = dh;
                let mut s_ind = dh;
                for m in 0..n {
                    s_hat -= gh[m][i][j].value() * h[m][kk] + gh[m][i][kk].value() * h[j][m];
                    s_ind -= gam[m][i][j].value() * h[m][kk] + gam[m][i][kk].value() * h[j][m];
                }
                if s_hat.abs() > metricity {
                    metricity = s_hat.abs();
                }
                let d = (s_ind - cubic[i][j][kk]).abs();
                if d > cubic_compatibility {
                    cubic_compatibility = d;
                }
            }
        }
    }

    let chi_decomposition =
        (cp.chi() - bp.mean_curvature() - bp.pick_invariant()).abs();

    let mut bianchi_first = T::zero();
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                for kk in 0..n {
                    let d = (riem[l][i][j][kk] + riem[l][j][kk][i] + riem[l][kk][i][j]).abs();
                    if d > bianchi_first {
                        bianchi_first = d;
                    }
                }
            }
        }
    }

    // Lowered curvature tensor and its pair-interchange symmetry.
    let mut rl = zeros4::<T>(n); // rl[i][j][k][l] = h(R(d_i, d_j) d_k, d_l)
    for i in 0..n {
        for j in 0..n {
            for kk in 0..n {
                for l in 0..n {
                    let mut s = T::zero();
                    for m in 0..n {
                        s += h[l][m] * riem[m][i][j][kk];
                    }
                    rl[i][j][kk][l] = s;
                }
            }
        }
    }
    let mut riem_pair_symmetry = T::zero();
    for i in 0..n {
        for j in 0..n {
            for kk in 0..n {
                for l in 0..n {
                    let d = (rl[i][j][kk][l] - rl[kk][l][i][j]).abs();
                    if d > riem_pair_symmetry {
                        riem_pair_symmetry = d;
                    }
                }
            }
        }
    }

    // Weyl trace contractions: first-slot trace, last-slot trace, and the
    // metric trace over the middle covariant pair.
    let w = &cp.weyl;
    let mut weyl_traces = T::zero();
    for j in 0..n {
        for kk in 0..n {
            let mut t1 = T::zero();
            for l in 0..n {
                t1 += w[l][l][j][kk];
            }
            if t1.abs() > weyl_traces {
                weyl_traces = t1.abs();
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            let mut t2 = T::zero();
            for l in 0..n {
                t2 += w[l][i][j][l];
            }
            if t2.abs() > weyl_traces {
                weyl_traces = t2.abs();
            }
        }
    }
    for l in 0..n {
        for j in 0..n {
            let mut t3 = T::zero();
            for i in 0..n {
                for kk in 0..n {
                    t3 += hinv[i][kk] * w[l][i][j][kk];
                }
            }
            if t3.abs() > weyl_traces {
                weyl_traces = t3.abs();
            }
        }
    }

    Ok(StructureResiduals {
        apolarity: bp.apolarity_residual(),
        equiaffine: bp.equiaffine_residual(),
        metric_consistency: bp.metric_consistency_residual(),
        volume_normalization: bp.volume_residual(),
        shape_self_adjoint,
        gauss,
        codazzi_cubic,
        codazzi_shape,
        metricity,
        cubic_compatibility,
        chi_decomposition,
        bianchi_first,
        riem_pair_symmetry,
        weyl_traces,
        route_gap: cp.route_gap(),
    })
}
