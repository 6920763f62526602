//! Generators for the model families the classifier recognises: quadrics,
//! the exponential-product and Lorentz-quadric affine-sphere charts, and the
//! six warped-product families.
//!
//! Every family is produced as an [`ImmersionSpec`] plus (when a profile has
//! no elementary antiderivative) a [`ProfileTable`] backing the spec's
//! `profile_<k>` nodes. Profiles are defined by an exact *integrand*
//! expression; values come from a piecewise-Chebyshev antiderivative of that
//! integrand, and all derivatives fed to the jet evaluator come from the
//! integrand's own Taylor expansion — the fitted proxy is never
//! differentiated, so profile derivatives carry no interpolation error.
//!
//! Warped-product generators have two axis profiles `γ₁, γ₂` tied together
//! by a linear second-order equation for `k = γ₂^{n+1}` of Euler type, which
//! solves in closed form for every parameter value ([`KSolution`]); numerical
//! work is only ever the single quadrature for the remaining antiderivative.

use serde::{Deserialize, Serialize};

use crate::classify::Verdict;
use crate::dsl::{
    eval_expr, parse_expr, print_expr, Expr, Func, ImmersionSpec, NoProfiles, ProfileSource,
    Rational,
};
use crate::error::{Error, Result};
use crate::jet::{jet_space, Jet};
use crate::scalar::Real;

// ---------------------------------------------------------------------------
// piecewise-Chebyshev antiderivative
// ---------------------------------------------------------------------------

const CHEB_DEGREE: usize = 30;
const MAX_SEGMENTS: usize = 4096;
const FIT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
struct ChebSegment {
    a: f64,
    b: f64,
    /// Chebyshev coefficients of the segment antiderivative (zero at `a`).
    anti: Vec<f64>,
    /// Antiderivative value carried in from the segments to the left.
    offset: f64,
}

fn clenshaw(coeffs: &[f64], x: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in coeffs[1..].iter().rev() {
        let t = 2.0 * x * b1 - b2 + c;
        b2 = b1;
        b1 = t;
    }
    x * b1 - b2 + coeffs[0]
}

/// Antiderivative of a smooth scalar function on an interval, represented by
/// adaptive piecewise-Chebyshev series integrated term by term.
#[derive(Debug, Clone)]
pub struct PiecewiseCheb {
    segments: Vec<ChebSegment>,
    lo: f64,
    hi: f64,
    fit_error: f64,
}

impl PiecewiseCheb {
    /// Fit the antiderivative of `f` on `[lo, hi]` with value `base` at `lo`.
    /// Each segment carries a degree-30 interpolant; segments split until the
    /// trailing coefficients fall below a scaled `1e-12`.
    fn fit(f: &mut dyn FnMut(f64) -> Result<f64>, lo: f64, hi: f64, base: f64) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Numerical(format!(
                "invalid profile domain [{lo}, {hi}]"
            )));
        }
        let deg = CHEB_DEGREE;
        // Lobatto abscissas descend from +1 to -1.
        let nodes: Vec<f64> = (0..=deg)
            .map(|j| (std::f64::consts::PI * j as f64 / deg as f64).cos())
            .collect();

        let mut stack = vec![(lo, hi)];
        let mut segments: Vec<ChebSegment> = Vec::new();
        let mut fit_error = 0.0f64;
        let mut offset = base;
        while let Some((a, b)) = stack.pop() {
            if segments.len() + stack.len() >= MAX_SEGMENTS {
                return Err(Error::Numerical(format!(
                    "profile fit on [{lo}, {hi}] exceeded {MAX_SEGMENTS} segments; \
                     the integrand is too rough or near-singular"
                )));
            }
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            let values: Vec<f64> = nodes
                .iter()
                .map(|&x| f(mid + half * x))
                .collect::<Result<_>>()?;
            let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));

            let mut coeffs = vec![0.0f64; deg + 1];
            for (k, c) in coeffs.iter_mut().enumerate() {
                let mut s = 0.5
                    * (values[0] + values[deg] * if k % 2 == 0 { 1.0 } else { -1.0 });
                for (j, v) in values.iter().enumerate().take(deg).skip(1) {
                    s += v * (std::f64::consts::PI * (k * j) as f64 / deg as f64).cos();
                }
                *c = 2.0 * s / deg as f64;
            }
            coeffs[0] *= 0.5;
            coeffs[deg] *= 0.5;

            let tail = coeffs[deg - 1].abs().max(coeffs[deg].abs());
            if tail > FIT_TOLERANCE * scale && (b - a) > 1e-8 * (hi - lo) {
                stack.push((mid, b));
                stack.push((a, mid));
                continue;
            }
            fit_error = fit_error.max(tail * half);

            // Term-by-term antiderivative, zero at the left endpoint x = -1.
            // The integral of the constant term feeds T_1 with full weight,
            // hence the doubled c_0 in the k = 1 step.
            let mut anti = vec![0.0f64; deg + 2];
            for k in 1..=deg + 1 {
                let lower = if k == 1 { 2.0 * coeffs[0] } else { coeffs[k - 1] };
                let upper = if k + 1 <= deg { coeffs[k + 1] } else { 0.0 };
                anti[k] = half * (lower - upper) / (2.0 * k as f64);
            }
            let mut at_left = 0.0;
            for (k, c) in anti.iter().enumerate().skip(1) {
                at_left += c * if k % 2 == 0 { 1.0 } else { -1.0 };
            }
            anti[0] = -at_left;

            let at_right = clenshaw(&anti, 1.0);
            segments.push(ChebSegment { a, b, anti, offset });
            offset += at_right;
        }
        Ok(PiecewiseCheb {
            segments,
            lo,
            hi,
            fit_error,
        })
    }

    /// Antiderivative value at `t`.
    fn value(&self, t: f64) -> Result<f64> {
        let slack = 1e-9 * (self.hi - self.lo);
        if t < self.lo - slack || t > self.hi + slack {
            return Err(Error::Domain {
                expr: "profile".into(),
                msg: format!(
                    "argument {t} outside the fitted profile domain [{}, {}]",
                    self.lo, self.hi
                ),
            });
        }
        let idx = self
            .segments
            .partition_point(|s| s.b < t)
            .min(self.segments.len() - 1);
        let s = &self.segments[idx];
        let x = ((2.0 * (t - s.a) / (s.b - s.a)) - 1.0).clamp(-1.0, 1.0);
        Ok(s.offset + clenshaw(&s.anti, x))
    }

    /// Largest per-segment error estimate of the fitted antiderivative.
    pub fn fit_error(&self) -> f64 {
        self.fit_error
    }

    /// Number of Chebyshev segments the fit needed.
    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }
}

// ---------------------------------------------------------------------------
// profiles
// ---------------------------------------------------------------------------

/// Univariate profile function defined by an exact integrand expression; the
/// value comes from a fitted antiderivative, every derivative from the
/// integrand's own jet.
#[derive(Debug, Clone)]
pub struct Profile {
    integrand: Expr,
    domain: (f64, f64),
    base: f64,
    anti: PiecewiseCheb,
}

impl Profile {
    /// Build a profile `p` with `p' = integrand` (an expression in `u1`) on
    /// `domain`, normalised by `p(domain.0) = base`.
    pub fn from_integrand(integrand: Expr, domain: (f64, f64), base: f64) -> Result<Profile> {
        let space = jet_space(1, 0)?;
        let mut eval = |t: f64| -> Result<f64> {
            let vars = vec![Jet::variable(&space, 0, t)?];
            Ok(eval_expr(&integrand, &vars, &space, &NoProfiles)?.value())
        };
        let anti = PiecewiseCheb::fit(&mut eval, domain.0, domain.1, base)?;
        Ok(Profile {
            integrand,
            domain,
            base,
            anti,
        })
    }

    /// Profile value at `t`.
    pub fn value(&self, t: f64) -> Result<f64> {
        self.anti.value(t)
    }

    /// The exact derivative expression.
    pub fn integrand(&self) -> &Expr {
        &self.integrand
    }

    /// Fitted domain.
    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    /// Value pinned at the left end of the domain.
    pub fn base(&self) -> f64 {
        self.base
    }

    /// Error estimate of the value fit (derivatives are exact).
    pub fn fit_error(&self) -> f64 {
        self.anti.fit_error()
    }
}

/// Profile table backing the `profile_<k>` nodes of a generated spec.
#[derive(Debug, Clone, Default)]
pub struct ProfileTable {
    profiles: Vec<Profile>,
}

impl ProfileTable {
    pub fn new() -> Self {
        ProfileTable::default()
    }

    pub fn push(&mut self, p: Profile) {
        self.profiles.push(p);
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn get(&self, k: usize) -> Option<&Profile> {
        self.profiles.get(k)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Profile> {
        self.profiles.iter()
    }
}

impl<T: Real> ProfileSource<T> for ProfileTable {
    fn profile_count(&self) -> usize {
        self.profiles.len()
    }

    fn taylor(&self, k: usize, at: T, len: usize) -> Result<Vec<T>> {
        let p = self.profiles.get(k).ok_or_else(|| Error::Domain {
            expr: format!("profile_{k}"),
            msg: format!("profile table has {} entries", self.profiles.len()),
        })?;
        let mut out = vec![T::zero(); len];
        if len == 0 {
            return Ok(out);
        }
        out[0] = T::of(p.anti.value(at.f64())?);
        if len >= 2 {
            let order = len - 2;
            let space = jet_space(1, order)?;
            let vars = vec![Jet::variable(&space, 0, at)?];
            let g = eval_expr(&p.integrand, &vars, &space, &NoProfiles)?;
            for j in 0..=order {
                out[j + 1] = g.coeff(&[j as u8]) / T::of_usize(j + 1);
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// the axis profile equation
// ---------------------------------------------------------------------------

/// Closed-form solution of the axis profile equation
/// `t² k'' - (n+1) t k' + (n+1) c k = 0` (Euler type): substituting
/// `k = t^τ` gives `τ² - (n+2) τ + (n+1) c = 0`, so the general solution is
/// spanned by two power / power-log / power-trig modes depending on the sign
/// of the discriminant `(n+2)² - 4 (n+1) c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KSolution {
    /// Distinct real exponents: `k = c2 t^{tau1} + c3 t^{tau2}` with
    /// `tau1 > tau2`.
    RealPowers { tau1: f64, tau2: f64, c2: f64, c3: f64 },
    /// Double exponent at zero discriminant: `k = t^tau (c2 + c3 ln t)`.
    DoublePower { tau: f64, c2: f64, c3: f64 },
    /// Complex exponents: `k = t^re (c2 cos(im ln t) + c3 sin(im ln t))`.
    ComplexPowers { re: f64, im: f64, c2: f64, c3: f64 },
}

/// Solve the axis profile equation for dimension `n` and constant `c`, with
/// mode coefficients `c2`, `c3`.
pub fn solve_profile_equation(n: usize, c: f64, c2: f64, c3: f64) -> KSolution {
    let nf = n as f64;
    let half = (nf + 2.0) / 2.0;
    let disc = (nf + 2.0) * (nf + 2.0) - 4.0 * (nf + 1.0) * c;
    if disc > 0.0 {
        let s = disc.sqrt() / 2.0;
        KSolution::RealPowers {
            tau1: half + s,
            tau2: half - s,
            c2,
            c3,
        }
    } else if disc == 0.0 {
        KSolution::DoublePower { tau: half, c2, c3 }
    } else {
        KSolution::ComplexPowers {
            re: half,
            im: (-disc).sqrt() / 2.0,
            c2,
            c3,
        }
    }
}

impl KSolution {
    /// Evaluate `k(t)` (requires `t > 0`).
    pub fn eval(&self, t: f64) -> f64 {
        let l = t.ln();
        match *self {
            KSolution::RealPowers { tau1, tau2, c2, c3 } => {
                c2 * (tau1 * l).exp() + c3 * (tau2 * l).exp()
            }
            KSolution::DoublePower { tau, c2, c3 } => (tau * l).exp() * (c2 + c3 * l),
            KSolution::ComplexPowers { re, im, c2, c3 } => {
                (re * l).exp() * (c2 * (im * l).cos() + c3 * (im * l).sin())
            }
        }
    }

    /// The solution as an expression in `u1`.
    pub fn expr(&self) -> Expr {
        let logt = call(Func::Log, var(0));
        match *self {
            KSolution::RealPowers { tau1, tau2, c2, c3 } => {
                let m1 = mul(num(c2), call(Func::Exp, mul(num(tau1), logt.clone())));
                if c3 == 0.0 {
                    m1
                } else {
                    add(m1, mul(num(c3), call(Func::Exp, mul(num(tau2), logt))))
                }
            }
            KSolution::DoublePower { tau, c2, c3 } => mul(
                call(Func::Exp, mul(num(tau), logt.clone())),
                add(num(c2), mul(num(c3), logt)),
            ),
            KSolution::ComplexPowers { re, im, c2, c3 } => mul(
                call(Func::Exp, mul(num(re), logt.clone())),
                add(
                    mul(num(c2), call(Func::Cos, mul(num(im), logt.clone()))),
                    mul(num(c3), call(Func::Sin, mul(num(im), logt))),
                ),
            ),
        }
    }

    /// Residual of `t² k'' - (n+1) t k' + (n+1) c k` at `t`, normalised by
    /// the size of the three terms; derivatives come from the jet ring, the
    /// same path the immersion evaluator uses.
    pub fn ode_residual(&self, n: usize, c: f64, t: f64) -> Result<f64> {
        let space = jet_space(1, 2)?;
        let vars = vec![Jet::variable(&space, 0, t)?];
        let j = eval_expr(&self.expr(), &vars, &space, &NoProfiles)?;
        let k = j.coeff(&[0]);
        let k1 = j.coeff(&[1]);
        let k2 = 2.0 * j.coeff(&[2]);
        let nf = n as f64;
        let terms = [t * t * k2, -(nf + 1.0) * t * k1, (nf + 1.0) * c * k];
        let scale = terms.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        Ok(terms.iter().sum::<f64>().abs() / scale)
    }
}

// ---------------------------------------------------------------------------
// expression-building helpers
// ---------------------------------------------------------------------------

fn num(x: f64) -> Expr {
    Expr::Num(x)
}

fn var(i: usize) -> Expr {
    Expr::Var(i)
}

fn add(a: Expr, b: Expr) -> Expr {
    Expr::Add(Box::new(a), Box::new(b))
}

fn sub(a: Expr, b: Expr) -> Expr {
    Expr::Sub(Box::new(a), Box::new(b))
}

fn mul(a: Expr, b: Expr) -> Expr {
    Expr::Mul(Box::new(a), Box::new(b))
}

fn div(a: Expr, b: Expr) -> Expr {
    Expr::Div(Box::new(a), Box::new(b))
}

fn neg(a: Expr) -> Expr {
    Expr::Neg(Box::new(a))
}

fn powr(a: Expr, numr: i64, den: i64) -> Expr {
    Expr::Pow(Box::new(a), Rational { num: numr, den })
}

fn powi(a: Expr, e: i64) -> Expr {
    Expr::Pow(Box::new(a), Rational::integer(e))
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

fn profile(k: usize, a: Expr) -> Expr {
    Expr::Profile(k, Box::new(a))
}

/// `u_{from+1}^2 + ... + u_{to}^2` (zero-based variable range `from..to`).
fn square_sum(from: usize, to: usize) -> Expr {
    let mut terms = (from..to).map(|i| powi(var(i), 2));
    let first = terms.next().expect("nonempty variable range");
    terms.fold(first, add)
}

// ---------------------------------------------------------------------------
// family identifiers and builds
// ---------------------------------------------------------------------------

/// Identifier of a generated model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyId {
    Ellipsoid,
    Hyperboloid,
    Paraboloid,
    Calabi,
    Lorentz,
    /// Warped-product family number 1..=6.
    Warped(u8),
}

impl FamilyId {
    /// Parse a family identifier (case-insensitive; a few legacy aliases are
    /// accepted on input).
    pub fn parse(s: &str) -> Result<FamilyId> {
        let k = s.trim().to_ascii_lowercase();
        Ok(match k.as_str() {
            "ellipsoid" => FamilyId::Ellipsoid,
            "hyperboloid" => FamilyId::Hyperboloid,
            "paraboloid" => FamilyId::Paraboloid,
            "calabi" | "calabi_1_2" => FamilyId::Calabi,
            "lorentz" | "lorentz_1_3" => FamilyId::Lorentz,
            "w1" => FamilyId::Warped(1),
            "w2" => FamilyId::Warped(2),
            "w3" => FamilyId::Warped(3),
            "w4" => FamilyId::Warped(4),
            "w5" => FamilyId::Warped(5),
            "w6" => FamilyId::Warped(6),
            _ => {
                return Err(Error::Parameter(format!(
                    "unknown family `{s}`; known ids: ellipsoid, hyperboloid, \
                     paraboloid, calabi, lorentz, w1..w6"
                )))
            }
        })
    }

    /// Canonical identifier.
    pub fn name(self) -> &'static str {
        match self {
            FamilyId::Ellipsoid => "ellipsoid",
            FamilyId::Hyperboloid => "hyperboloid",
            FamilyId::Paraboloid => "paraboloid",
            FamilyId::Calabi => "calabi",
            FamilyId::Lorentz => "lorentz",
            FamilyId::Warped(1) => "w1",
            FamilyId::Warped(2) => "w2",
            FamilyId::Warped(3) => "w3",
            FamilyId::Warped(4) => "w4",
            FamilyId::Warped(5) => "w5",
            FamilyId::Warped(6) => "w6",
            FamilyId::Warped(_) => "w?",
        }
    }

    /// Every supported family, in a fixed scan order.
    pub fn all() -> Vec<FamilyId> {
        let mut v = vec![
            FamilyId::Ellipsoid,
            FamilyId::Hyperboloid,
            FamilyId::Paraboloid,
            FamilyId::Calabi,
            FamilyId::Lorentz,
        ];
        for k in 1..=6 {
            v.push(FamilyId::Warped(k));
        }
        v
    }

    /// What the classifier should report for a member of this family.
    pub fn expected_verdict(self) -> Verdict {
        match self {
            FamilyId::Ellipsoid | FamilyId::Hyperboloid | FamilyId::Paraboloid => Verdict::Quadric,
            FamilyId::Calabi => Verdict::CalabiSphere,
            FamilyId::Lorentz => Verdict::LorentzSphere,
            FamilyId::Warped(k) => Verdict::WarpedFamily(k),
        }
    }
}

/// A generated family member: the spec, its profile table (possibly empty),
/// the resolved parameters, and the recommended sampling box.
#[derive(Debug, Clone)]
pub struct FamilyBuild {
    pub id: FamilyId,
    pub spec: ImmersionSpec,
    pub profiles: ProfileTable,
    /// Resolved parameter values in a fixed order.
    pub params: Vec<(String, f64)>,
    /// Per-variable sampling box (also stored as the spec's domain hint).
    pub sample_box: Vec<(f64, f64)>,
}

impl FamilyBuild {
    pub fn expected_verdict(&self) -> Verdict {
        self.id.expected_verdict()
    }

    pub fn has_profiles(&self) -> bool {
        !self.profiles.is_empty()
    }
}

/// Margin by which profile domains extend past the sampling box, so
/// finite-difference stencils at interior samples never step off the fit.
const PROFILE_MARGIN: f64 = 0.05;

fn resolve_consts(
    family: &str,
    given: &[(String, f64)],
    allowed: &[(&str, f64)],
) -> Result<Vec<f64>> {
    for (name, _) in given {
        if !allowed.iter().any(|(a, _)| a == name) {
            let names: Vec<&str> = allowed.iter().map(|(a, _)| *a).collect();
            return Err(Error::Parameter(if names.is_empty() {
                format!("family `{family}` takes no named constants, got `{name}`")
            } else {
                format!(
                    "family `{family}` knows constants {names:?}, got `{name}`"
                )
            }));
        }
    }
    Ok(allowed
        .iter()
        .map(|(name, dflt)| {
            given
                .iter()
                .rev()
                .find(|(g, _)| g == name)
                .map(|(_, v)| *v)
                .unwrap_or(*dflt)
        })
        .collect())
}

fn reject_c(family: &str, c: Option<f64>) -> Result<()> {
    match c {
        None => Ok(()),
        Some(x) if x == 0.0 => Ok(()),
        Some(x) => Err(Error::Parameter(format!(
            "family `{family}` has no curvature parameter (got c = {x})"
        ))),
    }
}

fn positive_c(family: &str, c: Option<f64>, dflt: f64) -> Result<f64> {
    let c = c.unwrap_or(dflt);
    if c > 0.0 {
        Ok(c)
    } else {
        Err(Error::Parameter(format!(
            "family `{family}` needs c > 0, got {c}"
        )))
    }
}

fn negative_c(family: &str, c: Option<f64>, dflt: f64) -> Result<f64> {
    let c = c.unwrap_or(dflt);
    if c < 0.0 {
        Ok(c)
    } else {
        Err(Error::Parameter(format!(
            "family `{family}` needs c < 0, got {c}"
        )))
    }
}

fn check_dim(family: &str, n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::Parameter(format!(
            "family `{family}` needs chart dimension n >= {min}, got {n}"
        )));
    }
    if n > crate::jet::MAX_VARS {
        return Err(Error::Parameter(format!(
            "chart dimension {n} exceeds the supported maximum {}",
            crate::jet::MAX_VARS
        )));
    }
    Ok(())
}

/// Check positivity of a closed-form scalar on an interval by dense sampling.
fn require_positive(
    family: &str,
    what: &str,
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
) -> Result<()> {
    let steps = 512;
    let mut min_v = f64::INFINITY;
    let mut min_t = lo;
    for i in 0..=steps {
        let t = lo + (hi - lo) * i as f64 / steps as f64;
        let v = f(t);
        if v < min_v {
            min_v = v;
            min_t = t;
        }
    }
    if min_v <= 0.0 || !min_v.is_finite() {
        return Err(Error::Parameter(format!(
            "family `{family}`: {what} is not positive on [{lo:.3}, {hi:.3}] \
             (min {min_v:.3e} near t = {min_t:.3}); shrink the box or change \
             the constants"
        )));
    }
    Ok(())
}

/// Stereographic chart of the round sphere of curvature `c > 0`, scaled so
/// it is the fiber quadric of the positive-curvature families: `fiber_dim`
/// components of `2 R u / (1+|u|²)` plus `R (1-|u|²)/(1+|u|²)`, in the
/// zero-based variables `from..from+fiber_dim`.
fn sphere_fiber(radius: f64, from: usize, fiber_dim: usize) -> Vec<Expr> {
    let q = square_sum(from, from + fiber_dim);
    let denom = add(num(1.0), q.clone());
    let mut comps: Vec<Expr> = (from..from + fiber_dim)
        .map(|i| div(mul(num(2.0 * radius), var(i)), denom.clone()))
        .collect();
    comps.push(div(mul(num(radius), sub(num(1.0), q)), denom));
    comps
}

/// Graph chart of the hyperboloid fiber: `u`, then `sqrt(a + |u|²)`.
fn hyperboloid_fiber(a: f64, from: usize, fiber_dim: usize) -> Vec<Expr> {
    let q = square_sum(from, from + fiber_dim);
    let mut comps: Vec<Expr> = (from..from + fiber_dim).map(var).collect();
    comps.push(call(Func::Sqrt, add(num(a), q)));
    comps
}

fn centered_box(n: usize) -> Vec<(f64, f64)> {
    vec![(-0.5, 0.5); n]
}

fn warped_box(n: usize, t_lo: f64, t_hi: f64) -> Vec<(f64, f64)> {
    let mut b = vec![(t_lo, t_hi)];
    b.extend(vec![(-0.5, 0.5); n - 1]);
    b
}

fn finish(
    id: FamilyId,
    n: usize,
    label: String,
    comps: Vec<Expr>,
    profiles: ProfileTable,
    params: Vec<(String, f64)>,
    sample_box: Vec<(f64, f64)>,
) -> Result<FamilyBuild> {
    let hints = sample_box.iter().map(|&(a, b)| Some((a, b))).collect();
    let spec = ImmersionSpec::from_parts(n, Some(label), hints, comps)?;
    Ok(FamilyBuild {
        id,
        spec,
        profiles,
        params,
        sample_box,
    })
}

/// Build a member of `id` in chart dimension `n`, with optional curvature
/// parameter `c` and named mode constants (`c1`, `c2`, `c3` where the family
/// has them). Unused or out-of-range parameters are rejected with an
/// explanation, and profile positivity is verified on the sampling box.
pub fn build_family(
    id: FamilyId,
    n: usize,
    c: Option<f64>,
    consts: &[(String, f64)],
) -> Result<FamilyBuild> {
    match id {
        FamilyId::Ellipsoid => {
            check_dim("ellipsoid", n, 2)?;
            resolve_consts("ellipsoid", consts, &[])?;
            let c = positive_c("ellipsoid", c, 1.0)?;
            let nf = n as f64;
            let radius = c.powf(-(nf + 2.0) / (2.0 * (nf + 1.0)));
            let comps = sphere_fiber(radius, 0, n);
            finish(
                id,
                n,
                format!("ellipsoid n={n} c={c}"),
                comps,
                ProfileTable::new(),
                vec![("c".into(), c)],
                centered_box(n),
            )
        }
        FamilyId::Hyperboloid => {
            check_dim("hyperboloid", n, 2)?;
            resolve_consts("hyperboloid", consts, &[])?;
            let c = negative_c("hyperboloid", c, -1.0)?;
            let nf = n as f64;
            let a = (-c).powf(-(nf + 2.0) / (nf + 1.0));
            let comps = hyperboloid_fiber(a, 0, n);
            finish(
                id,
                n,
                format!("hyperboloid n={n} c={c}"),
                comps,
                ProfileTable::new(),
                vec![("c".into(), c)],
                centered_box(n),
            )
        }
        FamilyId::Paraboloid => {
            check_dim("paraboloid", n, 2)?;
            resolve_consts("paraboloid", consts, &[])?;
            reject_c("paraboloid", c)?;
            let mut comps: Vec<Expr> = (0..n).map(var).collect();
            comps.push(div(square_sum(0, n), num(2.0)));
            finish(
                id,
                n,
                format!("paraboloid n={n}"),
                comps,
                ProfileTable::new(),
                vec![],
                centered_box(n),
            )
        }
        FamilyId::Calabi => {
            check_dim("calabi", n, 2)?;
            resolve_consts("calabi", consts, &[])?;
            reject_c("calabi", c)?;
            let mut comps: Vec<Expr> = (0..n).map(|i| call(Func::Exp, var(i))).collect();
            let vsum = (1..n).fold(var(0), |acc, i| add(acc, var(i)));
            comps.push(call(Func::Exp, neg(vsum)));
            finish(
                id,
                n,
                format!("calabi n={n}"),
                comps,
                ProfileTable::new(),
                vec![],
                centered_box(n),
            )
        }
        FamilyId::Lorentz => {
            check_dim("lorentz", n, 2)?;
            resolve_consts("lorentz", consts, &[])?;
            reject_c("lorentz", c)?;
            let es = call(Func::Exp, var(0));
            let mut comps: Vec<Expr> =
                (1..n).map(|i| mul(es.clone(), var(i))).collect();
            comps.push(mul(
                es,
                call(Func::Sqrt, add(num(1.0), square_sum(1, n))),
            ));
            comps.push(call(Func::Exp, mul(num(-(n as f64)), var(0))));
            finish(
                id,
                n,
                format!("lorentz n={n}"),
                comps,
                ProfileTable::new(),
                vec![],
                centered_box(n),
            )
        }
        FamilyId::Warped(k) => build_warped(k, n, c, consts),
    }
}

fn build_warped(which: u8, n: usize, c: Option<f64>, consts: &[(String, f64)]) -> Result<FamilyBuild> {
    let nf = n as f64;
    let id = FamilyId::Warped(which);
    match which {
        1 | 2 => {
            let fam = if which == 1 { "w1" } else { "w2" };
            check_dim(fam, n, 3)?;
            let (c, c1, c2) = if which == 1 {
                let c = positive_c(fam, c, 0.1)?;
                let cs = resolve_consts(fam, consts, &[("c1", 1.0), ("c2", 0.0)])?;
                (c, cs[0], cs[1])
            } else {
                let c = negative_c(fam, c, -1.0)?;
                let cs = resolve_consts(fam, consts, &[("c1", 1.0), ("c2", 1.0)])?;
                if cs[0] * cs[1] == 0.0 {
                    return Err(Error::Parameter(format!(
                        "family `w2` needs both mode constants nonzero \
                         (c1 = {}, c2 = {}); a single exponential mode \
                         degenerates to an affine sphere — use `lorentz` for \
                         that",
                        cs[0], cs[1]
                    )));
                }
                (c, cs[0], cs[1])
            };
            if which == 1 && c1 == 0.0 && c2 == 0.0 {
                return Err(Error::Parameter(
                    "family `w1` needs a nonzero mode (c1, c2)".into(),
                ));
            }
            let omega = ((nf + 1.0) * c.abs()).sqrt();
            let sample_box = if which == 1 {
                warped_box(n, 0.5, 2.0)
            } else {
                // The two shape eigenvalues approach each other exponentially
                // in t; keep the box where they stay resolvable.
                warped_box(n, 0.5, 1.5)
            };
            let (t_lo, t_hi) = sample_box[0];
            let (p_lo, p_hi) = (t_lo - PROFILE_MARGIN, t_hi + PROFILE_MARGIN);

            // k(t) solves k'' + (n+1) c k = 0; gamma2 = k^{1/(n+1)}.
            let k_expr = if which == 1 {
                add(
                    mul(num(c1), call(Func::Cos, mul(num(omega), var(0)))),
                    mul(num(c2), call(Func::Sin, mul(num(omega), var(0)))),
                )
            } else {
                add(
                    mul(num(c1), call(Func::Exp, mul(num(omega), var(0)))),
                    mul(num(c2), call(Func::Exp, mul(num(-omega), var(0)))),
                )
            };
            let k_fn = |t: f64| {
                if which == 1 {
                    c1 * (omega * t).cos() + c2 * (omega * t).sin()
                } else {
                    c1 * (omega * t).exp() + c2 * (-omega * t).exp()
                }
            };
            require_positive(fam, "the axis profile k(t)", k_fn, p_lo, p_hi)?;

            let gamma2 = powr(k_expr.clone(), 1, (n + 1) as i64);
            // gamma1' = k^{-n/(n+1)}: no elementary antiderivative.
            let integrand = powr(k_expr, -(n as i64), (n + 1) as i64);
            let mut profiles = ProfileTable::new();
            profiles.push(Profile::from_integrand(integrand, (p_lo, p_hi), 0.0)?);

            let fiber = if which == 1 {
                let radius = c.powf(-(nf + 1.0) / (2.0 * nf));
                sphere_fiber(radius, 1, n - 1)
            } else {
                let a = (-c).powf(-(nf + 1.0) / nf);
                hyperboloid_fiber(a, 1, n - 1)
            };
            let mut comps = vec![profile(0, var(0))];
            comps.extend(fiber.into_iter().map(|f| mul(gamma2.clone(), f)));

            finish(
                id,
                n,
                format!("{fam} n={n} c={c} c1={c1} c2={c2}"),
                comps,
                profiles,
                vec![("c".into(), c), ("c1".into(), c1), ("c2".into(), c2)],
                sample_box,
            )
        }
        3 | 4 => {
            let fam = if which == 3 { "w3" } else { "w4" };
            check_dim(fam, n, 3)?;
            let c = if which == 3 {
                positive_c(fam, c, 0.5)?
            } else {
                negative_c(fam, c, -1.0)?
            };
            let cs = resolve_consts(fam, consts, &[("c2", 1.0), ("c3", 0.0)])?;
            let (c2, c3) = (cs[0], cs[1]);
            if c2 == 0.0 && c3 == 0.0 {
                return Err(Error::Parameter(format!(
                    "family `{fam}` needs a nonzero mode (c2, c3)"
                )));
            }
            let sample_box = warped_box(n, 0.5, 2.0);
            let (t_lo, t_hi) = sample_box[0];
            let (p_lo, p_hi) = (t_lo - PROFILE_MARGIN, t_hi + PROFILE_MARGIN);

            let k = solve_profile_equation(n, c, c2, c3);
            require_positive(fam, "the axis profile k(t)", |t| k.eval(t), p_lo, p_hi)?;
            let gamma2 = powr(k.expr(), 1, (n + 1) as i64);

            // gamma1' = t^{n+1} k^{-n/(n+1)}; with a single power mode the
            // antiderivative is elementary, otherwise fit a profile.
            let mut profiles = ProfileTable::new();
            let gamma1 = match k {
                KSolution::RealPowers { tau1, c2: m2, c3: m3, .. } if m3 == 0.0 && m2 > 0.0 => {
                    let e = nf + 1.0 - nf * tau1 / (nf + 1.0);
                    let scale = m2.powf(-nf / (nf + 1.0));
                    if (e + 1.0).abs() > 1e-9 {
                        mul(
                            num(scale / (e + 1.0)),
                            call(Func::Exp, mul(num(e + 1.0), call(Func::Log, var(0)))),
                        )
                    } else {
                        mul(num(scale), call(Func::Log, var(0)))
                    }
                }
                _ => {
                    let integrand = mul(
                        powi(var(0), (n + 1) as i64),
                        powr(k.expr(), -(n as i64), (n + 1) as i64),
                    );
                    profiles.push(Profile::from_integrand(integrand, (p_lo, p_hi), 0.0)?);
                    profile(0, var(0))
                }
            };

            let fiber = if which == 3 {
                let radius = c.powf(-(nf + 1.0) / (2.0 * nf));
                sphere_fiber(radius, 1, n - 1)
            } else {
                let a = (-c).powf(-(nf + 1.0) / nf);
                hyperboloid_fiber(a, 1, n - 1)
            };
            let mut comps = vec![gamma1];
            comps.extend(fiber.into_iter().map(|f| mul(gamma2.clone(), f)));

            finish(
                id,
                n,
                format!("{fam} n={n} c={c} c2={c2} c3={c3}"),
                comps,
                profiles,
                vec![("c".into(), c), ("c2".into(), c2), ("c3".into(), c3)],
                sample_box,
            )
        }
        5 => {
            check_dim("w5", n, 3)?;
            reject_c("w5", c)?;
            let cs = resolve_consts("w5", consts, &[("c1", 0.0)])?;
            let c1 = cs[0];
            let sample_box = warped_box(n, 0.5, 2.0);
            let (t_lo, t_hi) = sample_box[0];
            let (p_lo, p_hi) = (t_lo - PROFILE_MARGIN, t_hi + PROFILE_MARGIN);
            let a = (nf + 1.0) / (nf + 2.0);

            let mut profiles = ProfileTable::new();
            let (gamma1, gamma2) = if c1 == 0.0 {
                // gamma1 = kappa t^{(n+2)/(n+1)} with kappa = A^{1/(n+1)};
                // the second profile integrates in closed form.
                let kappa = a.powf(1.0 / (nf + 1.0));
                let e = (nf + 2.0) / (nf + 1.0);
                let te = call(Func::Exp, mul(num(e), call(Func::Log, var(0))));
                let g1 = mul(num(kappa), te.clone());
                let g2 = mul(
                    mul(num(kappa * (nf + 1.0) / (nf + 2.0)), te),
                    sub(call(Func::Log, var(0)), num(1.0)),
                );
                (g1, g2)
            } else {
                let base = add(mul(num(a), powi(var(0), (n + 2) as i64)), num(c1));
                require_positive(
                    "w5",
                    "the radicand A t^{n+2} + c1",
                    |t| a * t.powi((n + 2) as i32) + c1,
                    p_lo,
                    p_hi,
                )?;
                let g1 = powr(base.clone(), 1, (n + 1) as i64);
                // gamma2' = A gamma1'(t) ln t - gamma1 / ((n+2) t) with
                // gamma1' = A (n+2)/(n+1) t^{n+1} (A t^{n+2} + c1)^{-n/(n+1)}.
                let g1p = mul(
                    num(a * (nf + 2.0) / (nf + 1.0)),
                    mul(
                        powi(var(0), (n + 1) as i64),
                        powr(base.clone(), -(n as i64), (n + 1) as i64),
                    ),
                );
                let integrand = sub(
                    mul(mul(num(a), g1p), call(Func::Log, var(0))),
                    div(g1.clone(), mul(num(nf + 2.0), var(0))),
                );
                profiles.push(Profile::from_integrand(integrand, (p_lo, p_hi), 0.0)?);
                (g1, profile(0, var(0)))
            };

            let q = square_sum(1, n);
            let mut comps: Vec<Expr> = (1..n).map(|i| mul(gamma1.clone(), var(i))).collect();
            comps.push(add(mul(gamma1.clone(), div(q, num(2.0))), gamma2));
            comps.push(gamma1);

            finish(
                id,
                n,
                format!("w5 n={n} c1={c1}"),
                comps,
                profiles,
                vec![("c1".into(), c1)],
                sample_box,
            )
        }
        6 => {
            check_dim("w6", n, 3)?;
            reject_c("w6", c)?;
            resolve_consts("w6", consts, &[])?;
            let sample_box = warped_box(n, 0.5, 2.0);
            let np2 = (n + 2) as f64;
            let q = square_sum(1, n);
            let mut comps: Vec<Expr> = (1..n).map(var).collect();
            comps.push(sub(
                div(q, num(2.0)),
                div(call(Func::Log, var(0)), num(np2)),
            ));
            comps.push(div(powi(var(0), (n + 2) as i64), num(np2)));
            finish(
                id,
                n,
                format!("w6 n={n}"),
                comps,
                ProfileTable::new(),
                vec![],
                sample_box,
            )
        }
        other => Err(Error::Parameter(format!(
            "warped family number must be 1..=6, got {other}"
        ))),
    }
}

// ---------------------------------------------------------------------------
// bundles: persisting specs together with their profile tables
// ---------------------------------------------------------------------------

const BUNDLE_FORMAT: &str = "immersion-bundle/1";

#[derive(Serialize, Deserialize)]
struct BundleFile {
    format: String,
    sdl: String,
    profiles: Vec<BundleProfile>,
}

#[derive(Serialize, Deserialize)]
struct BundleProfile {
    integrand: String,
    domain: [f64; 2],
    base: f64,
}

/// Serialise a build (spec text plus exact profile definitions) as JSON.
/// Loading re-fits the antiderivatives from the integrand expressions, so a
/// bundle is reproducible without shipping Chebyshev coefficients.
pub fn emit_bundle(build: &FamilyBuild) -> Result<String> {
    let file = BundleFile {
        format: BUNDLE_FORMAT.to_string(),
        sdl: build.spec.print(),
        profiles: build
            .profiles
            .iter()
            .map(|p| BundleProfile {
                integrand: print_expr(p.integrand()),
                domain: [p.domain().0, p.domain().1],
                base: p.base(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Numerical(format!("bundle serialisation failed: {e}")))
}

/// Load a JSON bundle produced by [`emit_bundle`].
pub fn load_bundle(text: &str) -> Result<(ImmersionSpec, ProfileTable)> {
    let file: BundleFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        col: e.column(),
        msg: format!("invalid bundle JSON: {e}"),
    })?;
    if file.format != BUNDLE_FORMAT {
        return Err(Error::Parameter(format!(
            "unsupported bundle format `{}` (expected `{BUNDLE_FORMAT}`)",
            file.format
        )));
    }
    let spec = ImmersionSpec::parse(&file.sdl)?;
    let mut table = ProfileTable::new();
    for bp in &file.profiles {
        let integrand = parse_expr(&bp.integrand, 1)?;
        table.push(Profile::from_integrand(
            integrand,
            (bp.domain[0], bp.domain[1]),
            bp.base,
        )?);
    }
    Ok((spec, table))
}
