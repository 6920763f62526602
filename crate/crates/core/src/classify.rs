//! Eigenstructure detection and the classification decision tree.
//!
//! The classifier looks at one immersion through a fixed pipeline:
//!
//! 1. evaluate the metric, shape operator, cubic form and curvature at a
//!    point ([`crate::blaschke`], [`crate::curvature`]);
//! 2. cluster the eigenvalues of the Schouten operator and of the shape
//!    operator with respect to the metric ([`eigen_partition`]);
//! 3. when the Schouten spectrum splits as one simple eigenvalue plus an
//!    `(n-1)`-fold one, build the adapted frame `T`, `X_1..X_{n-1}` and read
//!    off the scalar structure constants λ, μ, ν and the logarithmic warp
//!    rate α;
//! 4. check every identity the classified families must satisfy, and walk a
//!    decision tree to a [`Verdict`].
//!
//! All directional derivatives along the frame are 5-point finite differences
//! of whole pipeline evaluations at nearby chart points; nothing assumes the
//! chart is adapted to the structure (the `t`-coordinate may point anywhere).
//! `Unclassified` is a valid outcome and is preferred over guessing whenever
//! a quantity lands between the "zero" and "definitely nonzero" thresholds.

use crate::blaschke::{blaschke_point_with, BlaschkePoint};
use crate::curvature::{curvature_pack, metric_curvature, CurvaturePack};
use crate::dsl::{ImmersionSpec, NoProfiles, ProfileSource};
use crate::error::{Error, Result};
use crate::linalg::eig_in_metric;
use crate::scalar::Real;
use crate::tensor::{bilinear, zeros2, Mat};
use crate::tolerance::Tolerances;

/// Final classification outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Vanishing cubic form: the immersion is a piece of a quadric.
    Quadric,
    /// Flat affine metric without further recognised structure.
    FlatMetric,
    /// Flat hyperbolic affine sphere with nonvanishing parallel cubic form
    /// (the exponential-product chart is the model).
    CalabiSphere,
    /// Affine sphere with a two-eigenvalue Schouten spectrum (the
    /// Lorentz-quadric chart is the model).
    LorentzSphere,
    /// One of the six warped-product families, numbered 1..=6.
    WarpedFamily(u8),
    /// No branch of the classification matched at the working tolerances.
    Unclassified,
}

impl Verdict {
    /// Stable name used in reports.
    pub fn name(self) -> String {
        match self {
            Verdict::Quadric => "Quadric".to_string(),
            Verdict::FlatMetric => "FlatMetric".to_string(),
            Verdict::CalabiSphere => "CalabiSphere".to_string(),
            Verdict::LorentzSphere => "LorentzSphere".to_string(),
            Verdict::WarpedFamily(k) => format!("WarpedFamily{k}"),
            Verdict::Unclassified => "Unclassified".to_string(),
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

/// Eigenvalues of an `h`-self-adjoint operator, clustered into groups that
/// are indistinguishable at the working tolerance.
#[derive(Debug, Clone)]
pub struct EigenPartition<T: Real> {
    /// All eigenvalues, ascending.
    pub raw: Vec<T>,
    /// `h`-orthonormal eigenvector columns (`vectors[row][k]` pairs with
    /// `raw[k]`).
    pub vectors: Mat<T>,
    /// Cluster means, ascending.
    pub values: Vec<T>,
    /// Cluster sizes (sum to `n`).
    pub multiplicities: Vec<usize>,
    /// First raw index of each cluster.
    pub starts: Vec<usize>,
    /// Smallest inter-cluster gap over the largest intra-cluster spread
    /// (infinite for a single cluster).
    pub gap_ratio: T,
    /// Whether the cluster count is stable under an order of magnitude of
    /// threshold wiggle and the gap ratio clears the required factor.
    pub confident: bool,
    /// Cluster counts at a 10x coarser and a 10x finer merge threshold.
    pub m_range: (usize, usize),
}

fn cluster_count<T: Real>(vals: &[T], thr: T) -> usize {
    let mut m = 1;
    for i in 1..vals.len() {
        if vals[i] - vals[i - 1] > thr {
            m += 1;
        }
    }
    m
}

/// Solve the `h`-symmetric eigenproblem for a `(1,1)` operator and cluster
/// its spectrum.
///
/// `op` need not be numerically symmetric after lowering; the symmetric part
/// of `h · op` is used (callers should check self-adjointness separately).
pub fn eigen_partition<T: Real>(
    op: &Mat<T>,
    h: &Mat<T>,
    tol: &Tolerances,
) -> Result<EigenPartition<T>> {
    let n = op.len();
    let mut low = zeros2::<T>(n);
    for i in 0..n {
        for j in 0..n {
            let mut s = T::zero();
            for m in 0..n {
                s += h[i][m] * op[m][j];
            }
            low[i][j] = s;
        }
    }
    for i in 0..n {
        for j in 0..i {
            let m = (low[i][j] + low[j][i]) * T::of(0.5);
            low[i][j] = m;
            low[j][i] = m;
        }
    }
    let (raw, vectors) = eig_in_metric(&low, h)?;

    let scale = raw.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    let thr = T::of(tol.abs_floor).max(T::of(tol.zero) * scale);

    let mut starts = vec![0usize];
    for i in 1..n {
        if raw[i] - raw[i - 1] > thr {
            starts.push(i);
        }
    }
    let m = starts.len();
    let mut multiplicities = Vec::with_capacity(m);
    let mut values = Vec::with_capacity(m);
    let mut intra = T::zero();
    for c in 0..m {
        let lo = starts[c];
        let hi = if c + 1 < m { starts[c + 1] } else { n };
        multiplicities.push(hi - lo);
        let mut mean = T::zero();
        for v in &raw[lo..hi] {
            mean += *v;
        }
        values.push(mean / T::of_usize(hi - lo));
        intra = intra.max(raw[hi - 1] - raw[lo]);
    }
    let mut inter = T::infinity();
    for c in 1..m {
        inter = inter.min(raw[starts[c]] - raw[starts[c] - 1]);
    }
    let gap_ratio = if m == 1 {
        T::infinity()
    } else {
        inter / intra.max(thr)
    };

    let factor = T::of(tol.gap_factor);
    let m_lo = cluster_count(&raw, thr * factor);
    let m_hi = cluster_count(&raw, thr / factor);
    let confident = m_lo == m_hi && (m == 1 || gap_ratio >= factor);

    Ok(EigenPartition {
        raw,
        vectors,
        values,
        multiplicities,
        starts,
        gap_ratio,
        confident,
        m_range: (m_lo, m_hi),
    })
}

impl<T: Real> EigenPartition<T> {
    /// Number of clusters.
    pub fn m(&self) -> usize {
        self.values.len()
    }

    /// Index of the unique single-eigenvalue cluster when the spectrum splits
    /// as `1 + (n-1)` with `n > 2`.
    pub fn simple_cluster(&self) -> Option<usize> {
        if self.m() != 2 {
            return None;
        }
        match (self.multiplicities[0], self.multiplicities[1]) {
            (1, f) if f > 1 => Some(0),
            (f, 1) if f > 1 => Some(1),
            _ => None,
        }
    }

    /// Eigenvector column `idx` within cluster `cluster`.
    pub fn vector(&self, cluster: usize, idx: usize) -> Vec<T> {
        let col = self.starts[cluster] + idx;
        self.vectors.iter().map(|row| row[col]).collect()
    }
}

/// Warp-function branch of the classified warped products.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarpFunction {
    /// Constant warp: the metric is a product along the distinguished line.
    Constant,
    /// Warp growing linearly in the distinguished arclength coordinate.
    Linear,
}

impl WarpFunction {
    /// Label used in reports ("1" or "t").
    pub fn label(self) -> &'static str {
        match self {
            WarpFunction::Constant => "1",
            WarpFunction::Linear => "t",
        }
    }
}

/// Adapted frame and scalar structure constants for the `1 + (n-1)` split.
#[derive(Debug, Clone)]
pub struct StructureFrame<T: Real> {
    /// `h`-unit eigenvector of the simple Schouten eigenvalue, orientation
    /// fixed deterministically.
    pub t_dir: Vec<T>,
    /// `h`-orthonormal basis of the complementary eigenspace.
    pub x_dirs: Vec<Vec<T>>,
    /// Simple Schouten eigenvalue.
    pub nu1: T,
    /// Repeated Schouten eigenvalue.
    pub nu2: T,
    /// `h(K(T,T), T)`.
    pub lambda1: T,
    /// `h(K(T,X), X)` for a unit `X` in the repeated eigenspace.
    pub lambda2: T,
    /// `h(S T, T)`.
    pub mu1: T,
    /// `h(S X, X)`.
    pub mu2: T,
    /// Logarithmic derivative of the warp function along `-T`; present when
    /// the classifier ran the eigenvector-field stencil.
    pub alpha: Option<T>,
}

/// Finite-difference and algebraic checks specific to the warped branch.
#[derive(Debug, Clone)]
pub struct WarpedChecks<T: Real> {
    /// `K` restricted to the repeated eigenspace minus its rank-one model.
    pub l2: T,
    /// `1 - |h(T_schouten, T_shape)|`: the two simple directions must agree.
    pub t_alignment: T,
    /// `|T(α) - α²|`.
    pub fd_alpha: T,
    /// `|T(λ₂) - ((n+1) λ₂ α + (μ₁ - μ₂)/2)|`.
    pub fd_lambda2: T,
    /// `|T(μ₂) - (μ₂ - μ₁)(α - λ₂)|`.
    pub fd_mu2: T,
    /// Detected warp-function branch.
    pub f_tag: WarpFunction,
    /// Recovered curvature constant of the fiber quadric.
    pub c_value: T,
}

/// Everything the classifier measured at one sample point.
#[derive(Debug, Clone)]
pub struct PointRecord<T: Real> {
    /// Chart coordinates of the sample.
    pub point: Vec<T>,
    /// Schouten cluster count.
    pub m: usize,
    /// Whether the Schouten partition is confident.
    pub m_confident: bool,
    /// Shape-operator cluster count.
    pub sigma: usize,
    /// Whether the shape partition is confident.
    pub sigma_confident: bool,
    /// Schouten cluster means.
    pub p_values: Vec<T>,
    /// Schouten cluster sizes.
    pub p_mults: Vec<usize>,
    /// Shape cluster means.
    pub s_values: Vec<T>,
    /// Shape cluster sizes.
    pub s_mults: Vec<usize>,
    /// Mean curvature `H`.
    pub mean_curvature: T,
    /// Pick invariant `J`.
    pub pick: T,
    /// Scalar curvature `r`.
    pub scalar: T,
    /// Sup norm of the cubic form.
    pub cubic_sup: T,
    /// Sup norm of the curvature tensor.
    pub riem_sup: T,
    /// Sup norm of the Weyl tensor.
    pub weyl_sup: T,
    /// Semi-parallelism obstruction (max over available routes).
    pub semi_parallel: T,
    /// Gap between the two semi-parallelism routes.
    pub route_gap: Option<T>,
    /// `sup |S - H id|`: distance from being an affine sphere.
    pub sphere_gap: T,
    /// Adapted frame when the `1 + (n-1)` split is present.
    pub frame: Option<StructureFrame<T>>,
    /// Warped-branch checks when they ran.
    pub warped: Option<WarpedChecks<T>>,
    /// Named identity residuals that applied at this point.
    pub residuals: Vec<(&'static str, T)>,
    /// Per-point verdict.
    pub verdict: Verdict,
    /// Human-readable justification.
    pub evidence: String,
}

/// Classification driver bound to one immersion spec.
pub struct Classifier<'a, T: Real> {
    spec: &'a ImmersionSpec,
    profiles: &'a dyn ProfileSource<T>,
    order: usize,
    tol: Tolerances,
}

impl<'a, T: Real> Classifier<'a, T> {
    /// Classifier with the default evaluation order, no profile table and
    /// default tolerances.
    pub fn new(spec: &'a ImmersionSpec) -> Self {
        Classifier {
            spec,
            profiles: &NoProfiles,
            order: crate::DEFAULT_ORDER,
            tol: Tolerances::default(),
        }
    }

    /// Attach a profile table for specs that call `profile_<k>`.
    pub fn with_profiles(mut self, profiles: &'a dyn ProfileSource<T>) -> Self {
        self.profiles = profiles;
        self
    }

    /// Override the jet order (minimum 4; 5 enables the commutator route).
    pub fn with_order(mut self, order: usize) -> Self {
        self.order = order;
        self
    }

    /// Override the tolerance ladder.
    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    /// The tolerance ladder in use.
    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    fn eval_full(&self, p: &[T]) -> Result<(BlaschkePoint<T>, CurvaturePack<T>)> {
        let bp = blaschke_point_with(self.spec, p, self.order, self.profiles)?;
        let cp = curvature_pack(&bp)?;
        Ok((bp, cp))
    }

    /// Pipeline evaluation at the minimum order, for stencil points where
    /// only the metric-connection curvature is needed.
    fn eval_light(&self, p: &[T]) -> Result<(BlaschkePoint<T>, Mat<T>, Mat<T>)> {
        let bp = blaschke_point_with(self.spec, p, 4, self.profiles)?;
        let mc = metric_curvature(&bp)?;
        let h = bp.h_values();
        Ok((bp, h, mc.schouten))
    }

    /// Simple-eigenvalue direction of the Schouten operator at `p`, oriented
    /// against `reference` (metric and direction of the stencil center) or,
    /// at a center, by making the largest `h`-pairing component positive.
    fn t_vector_at(
        &self,
        p: &[T],
        reference: Option<(&Mat<T>, &[T])>,
    ) -> Result<Vec<T>> {
        let (_, h, schouten) = self.eval_light(p)?;
        let part = eigen_partition(&schouten, &h, &self.tol)?;
        let simple = part.simple_cluster().ok_or_else(|| {
            Error::StructureMismatch(format!(
                "expected a simple + repeated Schouten spectrum near the \
                 stencil, found multiplicities {:?}",
                part.multiplicities
            ))
        })?;
        let mut t = part.vector(simple, 0);
        orient(&mut t, &h, reference);
        Ok(t)
    }

    /// Logarithmic warp rate at `p`: differentiate the `T`-eigenvector field
    /// along a straight line in the `X` direction (5-point stencil), correct
    /// with the connection, and pair back with `X`.
    fn alpha_at(
        &self,
        p: &[T],
        bp: &BlaschkePoint<T>,
        h: &Mat<T>,
        t_dir: &[T],
        x_dir: &[T],
    ) -> Result<T> {
        let n = bp.n;
        let step = T::of(self.tol.fd_step);
        let mut samples: Vec<Vec<T>> = Vec::with_capacity(4);
        for k in [-2.0, -1.0, 1.0, 2.0] {
            let off = step * T::of(k);
            let q: Vec<T> = (0..n).map(|i| p[i] + off * x_dir[i]).collect();
            samples.push(self.t_vector_at(&q, Some((h, t_dir)))?);
        }
        let denom = T::of(12.0) * step;
        let eight = T::of(8.0);
        let mut cov = vec![T::zero(); n];
        for kk in 0..n {
            let dt = (-samples[3][kk] + eight * samples[2][kk] - eight * samples[1][kk]
                + samples[0][kk])
                / denom;
            let mut s = dt;
            for i in 0..n {
                for j in 0..n {
                    s += bp.gamma_hat[kk][i][j].value() * x_dir[i] * t_dir[j];
                }
            }
            cov[kk] = s;
        }
        Ok(-bilinear(h, &cov, x_dir) / bilinear(h, x_dir, x_dir))
    }

    /// Frame scalars at a stencil point `q` (order-4 evaluation), with the
    /// `T` orientation tied to the center frame.
    fn stencil_scalars(
        &self,
        q: &[T],
        center_h: &Mat<T>,
        center_t: &[T],
    ) -> Result<(T, T, T)> {
        let (bp, h, schouten) = self.eval_light(q)?;
        let part = eigen_partition(&schouten, &h, &self.tol)?;
        let simple = part.simple_cluster().ok_or_else(|| {
            Error::StructureMismatch(
                "Schouten spectrum lost its simple + repeated split along the stencil".to_string(),
            )
        })?;
        let fiber = 1 - simple;
        let mut t = part.vector(simple, 0);
        orient(&mut t, &h, Some((center_h, center_t)));
        let x = part.vector(fiber, 0);
        let k = bp.k_values();
        let shape = bp.shape_values();
        let kt_x = apply_k(&k, &t, &x);
        let lam2 = bilinear(&h, &kt_x, &x);
        let sx = apply_op(&shape, &x);
        let mu2 = bilinear(&h, &sx, &x);
        let alpha = self.alpha_at(q, &bp, &h, &t, &x)?;
        Ok((lam2, mu2, alpha))
    }

    /// Classify one sample point.
    pub fn classify_point(&self, p: &[T]) -> Result<PointRecord<T>> {
        let (bp, cp) = self.eval_full(p)?;
        let n = cp.n;
        let z = T::of(self.tol.zero);
        let nz = T::of(self.tol.nonzero);

        let h = &cp.h;
        let mean_curvature = bp.mean_curvature();
        let pick = bp.pick_invariant();
        let scalar = cp.scalar;
        let cubic_sup = crate::tensor::sup3(&cp.cubic);
        let riem_sup = cp.riem_sup();
        let weyl_sup = cp.weyl_sup();
        let semi_parallel = match cp.semi_parallel_comm() {
            Some(c) => c.max(cp.semi_parallel_action()),
            None => cp.semi_parallel_action(),
        };
        let route_gap = cp.route_gap();

        let mut sphere_gap = T::zero();
        for i in 0..n {
            for j in 0..n {
                let id = if i == j { mean_curvature } else { T::zero() };
                sphere_gap = sphere_gap.max((cp.shape[i][j] - id).abs());
            }
        }

        let pp = eigen_partition(&cp.schouten, h, &self.tol)?;
        let ps = eigen_partition(&cp.shape, h, &self.tol)?;

        let mut rec = PointRecord {
            point: p.to_vec(),
            m: pp.m(),
            m_confident: pp.confident,
            sigma: ps.m(),
            sigma_confident: ps.confident,
            p_values: pp.values.clone(),
            p_mults: pp.multiplicities.clone(),
            s_values: ps.values.clone(),
            s_mults: ps.multiplicities.clone(),
            mean_curvature,
            pick,
            scalar,
            cubic_sup,
            riem_sup,
            weyl_sup,
            semi_parallel,
            route_gap,
            sphere_gap,
            frame: None,
            warped: None,
            residuals: Vec::new(),
            verdict: Verdict::Unclassified,
            evidence: String::new(),
        };

        // --- decision tree -------------------------------------------------

        if cubic_sup < z {
            rec.verdict = Verdict::Quadric;
            rec.evidence = format!(
                "cubic form vanishes (sup {:.3e}); shape operator is {:.6} times the identity",
                cubic_sup.f64(),
                mean_curvature.f64()
            );
            return Ok(rec);
        }
        if cubic_sup < nz {
            rec.evidence = format!(
                "cubic form sup {:.3e} falls between the zero and nonzero thresholds",
                cubic_sup.f64()
            );
            return Ok(rec);
        }
        if semi_parallel >= z {
            rec.evidence = if semi_parallel >= nz {
                format!(
                    "cubic form is not semi-parallel (curvature action residual {:.3e})",
                    semi_parallel.f64()
                )
            } else {
                format!(
                    "semi-parallelism residual {:.3e} is in the indeterminate band",
                    semi_parallel.f64()
                )
            };
            return Ok(rec);
        }
        if n >= 4 && weyl_sup >= z {
            rec.evidence = format!(
                "Weyl tensor does not vanish (sup {:.3e})",
                weyl_sup.f64()
            );
            return Ok(rec);
        }
        if !pp.confident {
            rec.evidence = format!(
                "Schouten eigenvalue clustering is ambiguous (gap ratio {:.2e}, \
                 cluster count in [{}, {}])",
                pp.gap_ratio.f64(),
                pp.m_range.0,
                pp.m_range.1
            );
            return Ok(rec);
        }

        match pp.m() {
            1 => self.classify_single_cluster(&mut rec),
            2 => self.classify_split(&mut rec, &bp, &cp, &pp, &ps, p)?,
            m => {
                rec.evidence = format!(
                    "{m} distinct Schouten eigenvalue clusters ({:?}); at most two \
                     occur in the classified branches",
                    pp.values.iter().map(|v| v.f64()).collect::<Vec<_>>()
                );
            }
        }
        Ok(rec)
    }

    fn classify_single_cluster(&self, rec: &mut PointRecord<T>) {
        let z = T::of(self.tol.zero);
        let nz = T::of(self.tol.nonzero);
        if rec.riem_sup >= z {
            rec.evidence = if rec.riem_sup >= nz {
                format!(
                    "curved metric (curvature sup {:.3e}) with a single Schouten \
                     eigenvalue and nonvanishing cubic form matches no classified branch",
                    rec.riem_sup.f64()
                )
            } else {
                format!(
                    "curvature sup {:.3e} is in the indeterminate band",
                    rec.riem_sup.f64()
                )
            };
            return;
        }
        // Flat metric from here on.
        if rec.sphere_gap < z {
            if rec.mean_curvature < -z {
                rec.verdict = Verdict::CalabiSphere;
                rec.evidence = format!(
                    "flat metric, hyperbolic affine sphere (H = {:.6}), parallel \
                     nonvanishing cubic form",
                    rec.mean_curvature.f64()
                );
            } else {
                rec.verdict = Verdict::FlatMetric;
                rec.evidence = format!(
                    "flat improper affine sphere (H = {:.3e}); only the hyperbolic \
                     case is refined further",
                    rec.mean_curvature.f64()
                );
            }
            return;
        }
        if rec.sphere_gap < nz {
            rec.evidence = format!(
                "affine-sphere deviation {:.3e} is in the indeterminate band",
                rec.sphere_gap.f64()
            );
            return;
        }
        rec.verdict = Verdict::FlatMetric;
        rec.evidence = format!(
            "flat metric, not an affine sphere (deviation {:.3e}); shape operator \
             has {} eigenvalue cluster(s)",
            rec.sphere_gap.f64(),
            rec.sigma
        );
    }

    #[allow(clippy::too_many_arguments)]
    fn classify_split(
        &self,
        rec: &mut PointRecord<T>,
        bp: &BlaschkePoint<T>,
        cp: &CurvaturePack<T>,
        pp: &EigenPartition<T>,
        ps: &EigenPartition<T>,
        p: &[T],
    ) -> Result<()> {
        let n = cp.n;
        let z = T::of(self.tol.zero);
        let nz = T::of(self.tol.nonzero);
        let idt = T::of(self.tol.identity);

        let Some(simple) = pp.simple_cluster() else {
            rec.evidence = format!(
                "two Schouten clusters with multiplicities {:?}; the classified \
                 branches need a simple + (n-1)-fold split",
                pp.multiplicities
            );
            return Ok(());
        };
        let fiber = 1 - simple;

        let h = &cp.h;
        let mut t_dir = pp.vector(simple, 0);
        orient(&mut t_dir, h, None);
        let x_dirs: Vec<Vec<T>> = (0..pp.multiplicities[fiber])
            .map(|i| pp.vector(fiber, i))
            .collect();

        let k = &cp.k;
        let shape = &cp.shape;
        let ktt = apply_k(k, &t_dir, &t_dir);
        let lambda1 = bilinear(h, &ktt, &t_dir);
        let ktx = apply_k(k, &t_dir, &x_dirs[0]);
        let lambda2 = bilinear(h, &ktx, &x_dirs[0]);
        let st = apply_op(shape, &t_dir);
        let mu1 = bilinear(h, &st, &t_dir);
        let sx = apply_op(shape, &x_dirs[0]);
        let mu2 = bilinear(h, &sx, &x_dirs[0]);
        let nu1 = pp.values[simple];
        let nu2 = pp.values[fiber];

        let mut frame = StructureFrame {
            t_dir: t_dir.clone(),
            x_dirs: x_dirs.clone(),
            nu1,
            nu2,
            lambda1,
            lambda2,
            mu1,
            mu2,
            alpha: None,
        };

        // Identity residuals for the split structure.
        let r = cp.scalar;
        let nm1 = T::of_usize(n - 1);
        let mut res: Vec<(&'static str, T)> = Vec::new();

        let mut k_tt = T::zero();
        for kk in 0..n {
            k_tt = k_tt.max((ktt[kk] - lambda1 * t_dir[kk]).abs());
        }
        res.push(("k_tt", k_tt));

        let mut k_tx = T::zero();
        for x in &x_dirs {
            let v = apply_k(k, &t_dir, x);
            for kk in 0..n {
                k_tx = k_tx.max((v[kk] - lambda2 * x[kk]).abs());
            }
        }
        res.push(("k_tx", k_tx));

        let mut k_xy = T::zero();
        for (a, xa) in x_dirs.iter().enumerate() {
            for (b, xb) in x_dirs.iter().enumerate() {
                let v = apply_k(k, xa, xb);
                let delta = if a == b { lambda2 } else { T::zero() };
                for kk in 0..n {
                    k_xy = k_xy.max((v[kk] - delta * t_dir[kk]).abs());
                }
            }
        }
        res.push(("k_xy", k_xy));

        let qt = apply_op(&cp.ricci_op, &t_dir);
        let mut q_t = T::zero();
        for kk in 0..n {
            q_t = q_t.max(qt[kk].abs());
        }
        res.push(("q_t", q_t));

        let mut q_x = T::zero();
        let fiber_val = r / nm1;
        for x in &x_dirs {
            let v = apply_op(&cp.ricci_op, x);
            for kk in 0..n {
                q_x = q_x.max((v[kk] - fiber_val * x[kk]).abs());
            }
        }
        res.push(("q_x", q_x));

        res.push(("lambda_balance", (lambda1 + nm1 * lambda2).abs()));
        res.push(("nu_balance", (nu1 + nu2).abs()));
        res.push(("mu2_relation", (mu2 - T::of(2.0) * nu2 - lambda2 * lambda2).abs()));
        res.push((
            "mu_sum",
            (mu1 + mu2 + T::of_usize(2 * n) * lambda2 * lambda2).abs(),
        ));
        res.push((
            "mu2_scalar",
            (mu2 - lambda2 * lambda2 - r / (nm1 * T::of_usize(n - 2))).abs(),
        ));

        rec.frame = Some(frame.clone());
        rec.residuals = res.clone();

        if let Some((name, v)) = res.iter().find(|(_, v)| *v >= idt) {
            rec.evidence = format!(
                "structure identity `{name}` failed (residual {:.3e})",
                v.f64()
            );
            return Ok(());
        }
        if lambda2.abs() <= nz {
            rec.evidence = format!(
                "transversal cubic coefficient {:.3e} is not clearly nonzero",
                lambda2.f64()
            );
            return Ok(());
        }
        if !ps.confident {
            rec.evidence = format!(
                "shape-operator eigenvalue clustering is ambiguous (gap ratio {:.2e})",
                ps.gap_ratio.f64()
            );
            return Ok(());
        }

        match ps.m() {
            1 => {
                // Affine-sphere branch with split Schouten spectrum.
                if rec.sphere_gap >= z {
                    rec.evidence = format!(
                        "single shape eigenvalue but affine-sphere deviation {:.3e}",
                        rec.sphere_gap.f64()
                    );
                    return Ok(());
                }
                let hm = rec.mean_curvature;
                if hm >= -z {
                    rec.evidence = format!(
                        "affine sphere with nonnegative mean curvature {:.3e} does \
                         not occur in the split branch",
                        hm.f64()
                    );
                    return Ok(());
                }
                let mut extra: Vec<(&'static str, T)> = Vec::new();
                extra.push(("sphere_h", (hm + T::of_usize(n) * lambda2 * lambda2).abs()));
                extra.push((
                    "sphere_r",
                    (r - T::of_usize((n * n - 1) * (n - 2)) * hm / T::of_usize(n)).abs(),
                ));
                extra.push((
                    "sphere_j",
                    (rec.pick + T::of_usize(n + 2) * hm / T::of_usize(n * n)).abs(),
                ));
                let tf = cp.traceless_ricci();
                let tf_norm2 = crate::tensor::norm2_cov2(&cp.hinv, &tf);
                extra.push((
                    "ricci_norm",
                    (tf_norm2 - r * r / T::of_usize(n * (n - 1))).abs(),
                ));
                rec.residuals.extend(extra.iter().cloned());
                if let Some((name, v)) = extra.iter().find(|(_, v)| *v >= idt) {
                    rec.evidence = format!(
                        "affine-sphere identity `{name}` failed (residual {:.3e})",
                        v.f64()
                    );
                    return Ok(());
                }
                rec.verdict = Verdict::LorentzSphere;
                rec.evidence = format!(
                    "hyperbolic affine sphere (H = {:.6}) with Schouten multiplicities \
                     (1, {}) and a rank-one cubic structure",
                    hm.f64(),
                    n - 1
                );
                Ok(())
            }
            2 => {
                let Some(s_simple) = ps.simple_cluster() else {
                    rec.evidence = format!(
                        "shape-operator multiplicities {:?} do not form a simple + \
                         (n-1)-fold split",
                        ps.multiplicities
                    );
                    return Ok(());
                };
                let mut t_shape = ps.vector(s_simple, 0);
                orient(&mut t_shape, h, Some((h, &t_dir)));
                let t_alignment = T::one() - bilinear(h, &t_dir, &t_shape).abs();
                if t_alignment >= z {
                    rec.evidence = format!(
                        "simple directions of the Schouten and shape operators \
                         disagree (1 - |pairing| = {:.3e})",
                        t_alignment.f64()
                    );
                    return Ok(());
                }

                // Warp rate at the center, then finite differences along T.
                let alpha = self.alpha_at(p, bp, h, &t_dir, &x_dirs[0])?;
                frame.alpha = Some(alpha);
                rec.frame = Some(frame.clone());

                let step = T::of(self.tol.fd_step);
                let mut lam_s = Vec::with_capacity(4);
                let mut mu_s = Vec::with_capacity(4);
                let mut al_s = Vec::with_capacity(4);
                for kf in [-2.0, -1.0, 1.0, 2.0] {
                    let off = step * T::of(kf);
                    let q: Vec<T> = (0..n).map(|i| p[i] + off * t_dir[i]).collect();
                    let (l2v, m2v, av) = self.stencil_scalars(&q, h, &t_dir)?;
                    lam_s.push(l2v);
                    mu_s.push(m2v);
                    al_s.push(av);
                }
                let denom = T::of(12.0) * step;
                let eight = T::of(8.0);
                let fd =
                    |s: &[T]| (-s[3] + eight * s[2] - eight * s[1] + s[0]) / denom;
                let t_lambda2 = fd(&lam_s);
                let t_mu2 = fd(&mu_s);
                let t_alpha = fd(&al_s);

                let fd_alpha = (t_alpha - alpha * alpha).abs();
                let fd_lambda2 = (t_lambda2
                    - (T::of_usize(n + 1) * lambda2 * alpha
                        + T::of(0.5) * (mu1 - mu2)))
                    .abs();
                let fd_mu2 = (t_mu2 - (mu2 - mu1) * (alpha - lambda2)).abs();

                let fd_tol = T::of(self.tol.finite_difference);
                let l2 = k_xy;

                // Warp-function branch and the fiber curvature constant.
                let nm = T::of_usize((n - 1) * (n - 2));
                let (f_tag, c_value) = if alpha.abs() < z {
                    (WarpFunction::Constant, r / nm)
                } else if alpha.abs() >= nz {
                    (WarpFunction::Linear, T::one() + r / (alpha * alpha * nm))
                } else {
                    rec.evidence = format!(
                        "warp rate {:.3e} is in the indeterminate band",
                        alpha.f64()
                    );
                    return Ok(());
                };

                let warped = WarpedChecks {
                    l2,
                    t_alignment,
                    fd_alpha,
                    fd_lambda2,
                    fd_mu2,
                    f_tag,
                    c_value,
                };
                rec.warped = Some(warped.clone());
                rec.residuals.push(("fd_alpha", fd_alpha));
                rec.residuals.push(("fd_lambda2", fd_lambda2));
                rec.residuals.push(("fd_mu2", fd_mu2));
                rec.residuals.push(("t_alignment", t_alignment));

                for (name, v) in [
                    ("fd_alpha", fd_alpha),
                    ("fd_lambda2", fd_lambda2),
                    ("fd_mu2", fd_mu2),
                ] {
                    if v >= fd_tol {
                        rec.evidence = format!(
                            "derivative identity `{name}` failed (residual {:.3e})",
                            v.f64()
                        );
                        return Ok(());
                    }
                }

                let family = match f_tag {
                    WarpFunction::Constant => {
                        if c_value > nz {
                            Some(1)
                        } else if c_value < -nz {
                            Some(2)
                        } else {
                            rec.evidence = format!(
                                "constant warp with fiber constant {:.3e}; a product \
                                 structure needs it clearly nonzero",
                                c_value.f64()
                            );
                            None
                        }
                    }
                    WarpFunction::Linear => {
                        if c_value > nz {
                            Some(3)
                        } else if c_value < -nz {
                            Some(4)
                        } else if c_value.abs() <= z {
                            if mu2.abs() < z && (alpha - lambda2).abs() < z {
                                Some(6)
                            } else if mu2.abs() >= nz || (alpha - lambda2).abs() >= nz {
                                Some(5)
                            } else {
                                rec.evidence = format!(
                                    "flat-fiber invariants are in the indeterminate \
                                     band (mu2 = {:.3e}, alpha - lambda2 = {:.3e})",
                                    mu2.f64(),
                                    (alpha - lambda2).f64()
                                );
                                None
                            }
                        } else {
                            rec.evidence = format!(
                                "fiber constant {:.3e} is in the indeterminate band",
                                c_value.f64()
                            );
                            None
                        }
                    }
                };
                if let Some(kf) = family {
                    rec.verdict = Verdict::WarpedFamily(kf);
                    rec.evidence = format!(
                        "warped product with f = {}, fiber constant c = {:.6}, \
                         warp rate alpha = {:.6}",
                        f_tag.label(),
                        c_value.f64(),
                        alpha.f64()
                    );
                }
                Ok(())
            }
            s => {
                rec.evidence = format!(
                    "{s} distinct shape-operator clusters; the classified branches \
                     have at most two"
                );
                Ok(())
            }
        }
    }

    /// Classify every point and fold the records into one verdict.
    pub fn classify_sample(&self, points: &[Vec<T>]) -> Result<SampleClassification<T>> {
        use rayon::prelude::*;
        let records: Result<Vec<PointRecord<T>>> = points
            .par_iter()
            .map(|p| self.classify_point(p))
            .collect();
        let records = records?;
        let (verdict, evidence) = fold_records(&records, &self.tol);
        Ok(SampleClassification {
            records,
            verdict,
            evidence,
        })
    }
}

/// Per-point records plus the folded verdict.
#[derive(Debug, Clone)]
pub struct SampleClassification<T: Real> {
    /// One record per sample point, in input order.
    pub records: Vec<PointRecord<T>>,
    /// Folded verdict.
    pub verdict: Verdict,
    /// Folded justification.
    pub evidence: String,
}

/// Deterministic fold of per-point records into a sample-level verdict:
/// unanimity is required, and sphere mean curvature / warped fiber constants
/// must be constant across points (relative to `max(|mean|, 1)`).
pub fn fold_records<T: Real>(records: &[PointRecord<T>], tol: &Tolerances) -> (Verdict, String) {
    if records.is_empty() {
        return (
            Verdict::Unclassified,
            "no sample points were classified".to_string(),
        );
    }
    let unclassified = records
        .iter()
        .filter(|r| r.verdict == Verdict::Unclassified)
        .count();
    if unclassified > 0 {
        let first = records
            .iter()
            .find(|r| r.verdict == Verdict::Unclassified)
            .expect("counted above");
        return (
            Verdict::Unclassified,
            format!(
                "{unclassified} of {} points unclassified; first at {:?}: {}",
                records.len(),
                first.point.iter().map(|v| v.f64()).collect::<Vec<_>>(),
                first.evidence
            ),
        );
    }
    let v0 = records[0].verdict;
    if records.iter().any(|r| r.verdict != v0) {
        let mut names: Vec<String> = records.iter().map(|r| r.verdict.name()).collect();
        names.sort();
        names.dedup();
        return (
            Verdict::Unclassified,
            format!("points disagree: {}", names.join(", ")),
        );
    }

    let constancy = |vals: Vec<T>| -> (T, T) {
        let count = T::of_usize(vals.len());
        let mut mean = T::zero();
        for v in &vals {
            mean += *v;
        }
        mean /= count;
        let mut dev = T::zero();
        for v in &vals {
            dev = dev.max((*v - mean).abs());
        }
        (mean, dev / mean.abs().max(T::one()))
    };
    let ctol = T::of(tol.constancy);

    match v0 {
        Verdict::Quadric | Verdict::CalabiSphere | Verdict::LorentzSphere => {
            let (mean, dev) = constancy(records.iter().map(|r| r.mean_curvature).collect());
            if dev > ctol {
                return (
                    Verdict::Unclassified,
                    format!(
                        "mean curvature is not constant across the sample \
                         (relative deviation {:.3e})",
                        dev.f64()
                    ),
                );
            }
            (
                v0,
                format!(
                    "{} points agree; mean curvature {:.6} constant to {:.1e}",
                    records.len(),
                    mean.f64(),
                    dev.f64().max(1e-17)
                ),
            )
        }
        Verdict::WarpedFamily(_) => {
            let cs: Vec<T> = records
                .iter()
                .map(|r| r.warped.as_ref().expect("warped verdict has checks").c_value)
                .collect();
            let (mean, dev) = constancy(cs);
            if dev > ctol {
                return (
                    Verdict::Unclassified,
                    format!(
                        "fiber constant is not constant across the sample \
                         (relative deviation {:.3e})",
                        dev.f64()
                    ),
                );
            }
            (
                v0,
                format!(
                    "{} points agree; fiber constant {:.6} constant to {:.1e}",
                    records.len(),
                    mean.f64(),
                    dev.f64().max(1e-17)
                ),
            )
        }
        _ => (v0, format!("{} points agree", records.len())),
    }
}

fn orient<T: Real>(v: &mut [T], h: &Mat<T>, reference: Option<(&Mat<T>, &[T])>) {
    let flip = match reference {
        Some((h_ref, t_ref)) => bilinear(h_ref, v, t_ref) < T::zero(),
        None => {
            let n = v.len();
            let mut pivot = 0;
            let mut best = T::zero();
            for i in 0..n {
                let mut s = T::zero();
                for j in 0..n {
                    s += h[i][j] * v[j];
                }
                if s.abs() > best {
                    best = s.abs();
                    pivot = i;
                }
            }
            let mut s = T::zero();
            for j in 0..v.len() {
                s += h[pivot][j] * v[j];
            }
            s < T::zero()
        }
    };
    if flip {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

fn apply_op<T: Real>(op: &Mat<T>, v: &[T]) -> Vec<T> {
    let n = op.len();
    (0..n)
        .map(|i| {
            let mut s = T::zero();
            for j in 0..n {
                s += op[i][j] * v[j];
            }
            s
        })
        .collect()
}

fn apply_k<T: Real>(k: &crate::tensor::Arr3<T>, u: &[T], v: &[T]) -> Vec<T> {
    let n = k.len();
    (0..n)
        .map(|kk| {
            let mut s = T::zero();
            for i in 0..n {
                for j in 0..n {
                    s += k[kk][i][j] * u[i] * v[j];
                }
            }
            s
        })
        .collect()
}
