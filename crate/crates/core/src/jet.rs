//! Truncated multivariate Taylor arithmetic ("jets").
//!
//! A `Jet<T>` stores the Taylor coefficients of a smooth function at a point,
//! truncated at total degree `order`, in `num_vars` variables: the coefficient
//! for multi-index `a` is `d^a f / a!`. Storage is dense over all multi-indices
//! of total degree `<= order`, enumerated in graded-lexicographic order (by
//! degree, then lexicographically descending on exponents), so the enumeration
//! for order `N` is a prefix of the one for order `N+1` and truncation is a
//! slice.
//!
//! Arithmetic is exact truncated-polynomial arithmetic; composition with the
//! elementary functions goes through univariate Taylor coefficients and Horner
//! evaluation over the jet ring.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest supported number of variables / truncation order. Keeps the dense
/// coefficient tables small (worst case C(16,8) = 12870 entries).
pub const MAX_VARS: usize = 8;
pub const MAX_ORDER: usize = 8;

/// Shared combinatorial data for jets with a fixed `(num_vars, order)`.
pub struct JetSpace {
    num_vars: usize,
    order: usize,
    /// Multi-indices in graded-lex order.
    indices: Vec<Box<[u8]>>,
    rank: HashMap<Box<[u8]>, u32>,
    /// All `(i, j, k)` with `index[i] + index[j] = index[k]` (degrees within
    /// truncation); the whole multiplication kernel is one pass over this.
    prod_pairs: Vec<(u32, u32, u32)>,
    /// `deriv[v][t] = (source rank, factor)`: coefficient `t` of `d/dv` (a jet
    /// of order `order - 1`) is `factor * coeffs[source]`.
    deriv: Vec<Vec<(u32, u32)>>,
}

impl JetSpace {
    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn indices(&self) -> impl Iterator<Item = &[u8]> {
        self.indices.iter().map(|b| &b[..])
    }

    pub fn rank_of(&self, index: &[u8]) -> Option<usize> {
        self.rank.get(index).map(|&r| r as usize)
    }

    fn build(num_vars: usize, order: usize) -> Self {
        let mut indices = Vec::new();
        for degree in 0..=order {
            push_degree(num_vars, degree, &mut Vec::new(), &mut indices);
        }
        let rank: HashMap<Box<[u8]>, u32> = indices
            .iter()
            .enumerate()
            .map(|(i, idx)| (idx.clone(), i as u32))
            .collect();
        let mut prod_pairs = Vec::new();
        for (i, a) in indices.iter().enumerate() {
            let da: usize = a.iter().map(|&x| x as usize).sum();
            for (j, b) in indices.iter().enumerate() {
                let db: usize = b.iter().map(|&x| x as usize).sum();
                if da + db > order {
                    continue;
                }
                let sum: Box<[u8]> = a.iter().zip(b.iter()).map(|(x, y)| x + y).collect();
                prod_pairs.push((i as u32, j as u32, rank[&sum]));
            }
        }
        // group writes by target for cache friendliness
        prod_pairs.sort_unstable_by_key(|&(_, _, k)| k);
        let lower_len = if order == 0 {
            0
        } else {
            count_indices(num_vars, order - 1)
        };
        let mut deriv = Vec::with_capacity(num_vars);
        for v in 0..num_vars {
            let mut table = Vec::with_capacity(lower_len);
            for idx in indices.iter().take(lower_len) {
                let mut src: Box<[u8]> = idx.clone();
                src[v] += 1;
                table.push((rank[&src], src[v] as u32));
            }
            deriv.push(table);
        }
        JetSpace {
            num_vars,
            order,
            indices,
            rank,
            prod_pairs,
            deriv,
        }
    }
}

fn push_degree(num_vars: usize, degree: usize, prefix: &mut Vec<u8>, out: &mut Vec<Box<[u8]>>) {
    if prefix.len() == num_vars - 1 {
        prefix.push(degree as u8);
        out.push(prefix.clone().into_boxed_slice());
        prefix.pop();
        return;
    }
    for k in (0..=degree).rev() {
        prefix.push(k as u8);
        push_degree(num_vars, degree - k, prefix, out);
        prefix.pop();
    }
}

fn count_indices(num_vars: usize, order: usize) -> usize {
    // C(num_vars + order, order)
    let mut c: usize = 1;
    for i in 1..=num_vars {
        c = c * (order + i) / i;
    }
    c
}

static SPACES: Lazy<Mutex<HashMap<(usize, usize), Arc<JetSpace>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

/// Shared handle to the combinatorial tables for `(num_vars, order)`.
pub fn jet_space(num_vars: usize, order: usize) -> Result<Arc<JetSpace>> {
    if num_vars == 0 || num_vars > MAX_VARS || order > MAX_ORDER {
        return Err(Error::UnsupportedShape(format!(
            "num_vars {num_vars} (1..={MAX_VARS}), order {order} (0..={MAX_ORDER})"
        )));
    }
    let mut map = SPACES.lock().expect("jet space cache poisoned");
    Ok(map
        .entry((num_vars, order))
        .or_insert_with(|| Arc::new(JetSpace::build(num_vars, order)))
        .clone())
}

/// Truncated Taylor expansion of a scalar function.
#[derive(Clone)]
pub struct Jet<T> {
    space: Arc<JetSpace>,
    coeffs: Vec<T>,
}

impl<T: Real> Jet<T> {
    pub fn zero(space: &Arc<JetSpace>) -> Self {
        Jet {
            space: space.clone(),
            coeffs: vec![T::zero(); space.len()],
        }
    }

    pub fn constant(space: &Arc<JetSpace>, value: T) -> Self {
        let mut j = Jet::zero(space);
        j.coeffs[0] = value;
        j
    }

    /// The jet of the coordinate function `u_var` at `value`.
    pub fn variable(space: &Arc<JetSpace>, var: usize, value: T) -> Result<Self> {
        if var >= space.num_vars() {
            return Err(Error::Dimension(format!(
                "variable index {var} out of range for {} vars",
                space.num_vars()
            )));
        }
        let mut j = Jet::constant(space, value);
        if space.order() >= 1 {
            // rank of e_var: degree-1 block is enumerated descending, so e_0
            // comes first
            j.coeffs[1 + var] = T::one();
        }
        Ok(j)
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn num_vars(&self) -> usize {
        self.space.num_vars
    }

    pub fn order(&self) -> usize {
        self.space.order
    }

    /// Constant term (the value of the function at the expansion point).
    pub fn value(&self) -> T {
        self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Coefficient for a multi-index (`d^a f / a!`).
    pub fn coeff(&self, index: &[u8]) -> T {
        match self.space.rank_of(index) {
            Some(r) => self.coeffs[r],
            None => T::zero(),
        }
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.num_vars() != other.num_vars() || self.order() != other.order() {
            return Err(Error::ShapeMismatch {
                lhs_vars: self.num_vars(),
                lhs_order: self.order(),
                rhs_vars: other.num_vars(),
                rhs_order: other.order(),
            });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Jet {
            space: self.space.clone(),
            coeffs,
        })
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Jet {
            space: self.space.clone(),
            coeffs,
        })
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let mut out = vec![T::zero(); self.coeffs.len()];
        let a = &self.coeffs;
        let b = &other.coeffs;
        for &(i, j, k) in &self.space.prod_pairs {
            out[k as usize] += a[i as usize] * b[j as usize];
        }
        Ok(Jet {
            space: self.space.clone(),
            coeffs: out,
        })
    }

    pub fn scale(&self, s: T) -> Self {
        Jet {
            space: self.space.clone(),
            coeffs: self.coeffs.iter().map(|&a| a * s).collect(),
        }
    }

    /// Multiplicative inverse via Newton iteration on the truncated ring
    /// (`x <- x(2 - ax)` doubles the correct order each step).
    pub fn recip(&self) -> Result<Self> {
        let a0 = self.value();
        if a0 == T::zero() {
            return Err(Error::Domain {
                expr: "1/x".into(),
                msg: "reciprocal of jet with zero constant term".into(),
            });
        }
        let mut x = Jet::constant(&self.space, T::one() / a0);
        let mut correct = 1usize;
        let two = T::of(2.0);
        while correct < self.order() + 1 {
            // x = x * (2 - a x)
            let ax = self.checked_mul(&x)?;
            let mut t = ax.scale(-T::one());
            t.coeffs[0] += two;
            x = x.checked_mul(&t)?;
            correct *= 2;
        }
        Ok(x)
    }

    pub fn checked_div(&self, other: &Self) -> Result<Self> {
        self.checked_mul(&other.recip()?)
    }

    /// Partial derivative with respect to variable `var`; drops order by one.
    pub fn derivative(&self, var: usize) -> Result<Self> {
        if self.order() == 0 {
            return Err(Error::OrderTooLow {
                required: 1,
                available: 0,
            });
        }
        if var >= self.num_vars() {
            return Err(Error::Dimension(format!(
                "variable index {var} out of range for {} vars",
                self.num_vars()
            )));
        }
        let lower = jet_space(self.num_vars(), self.order() - 1)?;
        let table = &self.space.deriv[var];
        let coeffs = table
            .iter()
            .map(|&(src, factor)| self.coeffs[src as usize] * T::of_usize(factor as usize))
            .collect();
        Ok(Jet {
            space: lower,
            coeffs,
        })
    }

    /// Truncate to a lower (or equal) order; the coefficient layout nests.
    pub fn truncated(&self, order: usize) -> Result<Self> {
        if order > self.order() {
            return Err(Error::OrderTooLow {
                required: order,
                available: self.order(),
            });
        }
        if order == self.order() {
            return Ok(self.clone());
        }
        let space = jet_space(self.num_vars(), order)?;
        let coeffs = self.coeffs[..space.len()].to_vec();
        Ok(Jet { space, coeffs })
    }

    /// Horner evaluation of `sum_k cs[k] (self - self.value())^k` over the jet
    /// ring. With `cs[k] = f^(k)(value)/k!` this is composition with `f`;
    /// exact at truncation order because the shifted jet is nilpotent.
    pub fn compose_univariate(&self, cs: &[T]) -> Self {
        let mut delta = self.clone();
        delta.coeffs[0] = T::zero();
        let mut res = Jet::constant(&self.space, *cs.last().expect("nonempty coefficients"));
        for &c in cs[..cs.len() - 1].iter().rev() {
            res = res.checked_mul(&delta).expect("same space");
            res.coeffs[0] += c;
        }
        res
    }

    fn domain_positive(&self, what: &str) -> Result<T> {
        let a0 = self.value();
        if a0 <= T::zero() {
            return Err(Error::Domain {
                expr: what.into(),
                msg: format!("argument has non-positive value {a0}"),
            });
        }
        Ok(a0)
    }

    pub fn exp(&self) -> Self {
        let e = self.value().exp();
        let mut cs = Vec::with_capacity(self.order() + 1);
        let mut f = T::one();
        for k in 0..=self.order() {
            cs.push(e / f);
            f *= T::of_usize(k + 1);
        }
        self.compose_univariate(&cs)
    }

    pub fn ln(&self) -> Result<Self> {
        let a0 = self.domain_positive("log")?;
        let mut cs = Vec::with_capacity(self.order() + 1);
        cs.push(a0.ln());
        let mut p = a0;
        for k in 1..=self.order() {
            let sign = if k % 2 == 1 { T::one() } else { -T::one() };
            cs.push(sign / (T::of_usize(k) * p));
            p *= a0;
        }
        Ok(self.compose_univariate(&cs))
    }

    pub fn sqrt(&self) -> Result<Self> {
        self.domain_positive("sqrt")?;
        Ok(self.powf(T::of(0.5)).expect("positive base"))
    }

    /// Integer power by repeated squaring (valid for any base; negative
    /// exponents require a nonzero constant term).
    pub fn powi(&self, p: i64) -> Result<Self> {
        if p < 0 {
            return self.powi(-p)?.recip();
        }
        let mut res = Jet::constant(&self.space, T::one());
        let mut base = self.clone();
        let mut p = p as u64;
        while p > 0 {
            if p & 1 == 1 {
                res = res.checked_mul(&base)?;
            }
            base = base.checked_mul(&base)?;
            p >>= 1;
        }
        Ok(res)
    }

    /// Real power `self^p` (binomial series; requires positive constant term).
    pub fn powf(&self, p: T) -> Result<Self> {
        let a0 = self.domain_positive("pow")?;
        let mut cs = Vec::with_capacity(self.order() + 1);
        let mut binom = T::one();
        for k in 0..=self.order() {
            cs.push(binom * a0.powf(p - T::of_usize(k)));
            binom *= (p - T::of_usize(k)) / T::of_usize(k + 1);
        }
        Ok(self.compose_univariate(&cs))
    }

    pub fn sin(&self) -> Self {
        self.trig(true)
    }

    pub fn cos(&self) -> Self {
        self.trig(false)
    }

    fn trig(&self, sin: bool) -> Self {
        let (s, c) = (self.value().sin(), self.value().cos());
        let cycle = if sin { [s, c, -s, -c] } else { [c, -s, -c, s] };
        let mut cs = Vec::with_capacity(self.order() + 1);
        let mut f = T::one();
        for k in 0..=self.order() {
            cs.push(cycle[k % 4] / f);
            f *= T::of_usize(k + 1);
        }
        self.compose_univariate(&cs)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Largest absolute coefficient.
    pub fn sup_coeff(&self) -> T {
        self.coeffs
            .iter()
            .fold(T::zero(), |m, &c| if c.abs() > m { c.abs() } else { m })
    }
}

impl<T: Real> fmt::Debug for Jet<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("num_vars", &self.num_vars())
            .field("order", &self.order())
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

// Operator sugar; panics on shape mismatch (use the checked_* methods where
// mismatched shapes are reachable).
macro_rules! ref_binop {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl<'a, T: Real> $trait<&'a Jet<T>> for &'a Jet<T> {
            type Output = Jet<T>;
            fn $method(self, rhs: &'a Jet<T>) -> Jet<T> {
                self.$checked(rhs).expect("jet shape mismatch")
            }
        }
        impl<T: Real> $trait<Jet<T>> for Jet<T> {
            type Output = Jet<T>;
            fn $method(self, rhs: Jet<T>) -> Jet<T> {
                self.$checked(&rhs).expect("jet shape mismatch")
            }
        }
        impl<'a, T: Real> $trait<&'a Jet<T>> for Jet<T> {
            type Output = Jet<T>;
            fn $method(self, rhs: &'a Jet<T>) -> Jet<T> {
                self.$checked(rhs).expect("jet shape mismatch")
            }
        }
    };
}

ref_binop!(Add, add, checked_add);
ref_binop!(Sub, sub, checked_sub);
ref_binop!(Mul, mul, checked_mul);
ref_binop!(Div, div, checked_div);

impl<T: Real> Neg for Jet<T> {
    type Output = Jet<T>;
    fn neg(self) -> Jet<T> {
        self.scale(-T::one())
    }
}

impl<T: Real> Neg for &Jet<T> {
    type Output = Jet<T>;
    fn neg(self) -> Jet<T> {
        self.scale(-T::one())
    }
}

impl<T: Real> AddAssign<&Jet<T>> for Jet<T> {
    fn add_assign(&mut self, rhs: &Jet<T>) {
        self.same_shape(rhs).expect("jet shape mismatch");
        for (a, &b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
    }
}

impl<T: Real> SubAssign<&Jet<T>> for Jet<T> {
    fn sub_assign(&mut self, rhs: &Jet<T>) {
        self.same_shape(rhs).expect("jet shape mismatch");
        for (a, &b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a -= b;
        }
    }
}

/// Determinant of a square matrix of jets.
///
/// Division-free Laplace expansion with minors shared across column subsets
/// (`O(k·2^k)` ring products), so matrices that are singular at the base
/// point but regular as jets — e.g. cross-product minors at special points —
/// are handled exactly.
pub fn jet_det<T: Real>(m: &[Vec<Jet<T>>]) -> Result<Jet<T>> {
    let k = m.len();
    let space = m[0][0].space().clone();
    // minors[mask] = det of (rows 0..popcount(mask)) × (columns in mask)
    let mut minors: Vec<Jet<T>> = vec![Jet::zero(&space); 1 << k];
    minors[0] = Jet::constant(&space, T::one());
    for mask in 1usize..(1 << k) {
        let r = (mask.count_ones() - 1) as usize;
        let mut acc = Jet::zero(&space);
        let mut pos = 0u32;
        for c in 0..k {
            if mask & (1 << c) == 0 {
                continue;
            }
            let term = m[r][c].checked_mul(&minors[mask & !(1 << c)])?;
            if (r + pos as usize) % 2 == 0 {
                acc += &term;
            } else {
                acc -= &term;
            }
            pos += 1;
        }
        minors[mask] = acc;
    }
    Ok(minors[(1 << k) - 1].clone())
}

/// Solve `M X = B` over the jet ring for several right-hand sides
/// (`rhs[r][c]`, one column per system). Returns `X` in the same layout.
pub fn jet_solve<T: Real>(m: &[Vec<Jet<T>>], rhs: &[Vec<Jet<T>>]) -> Result<Vec<Vec<Jet<T>>>> {
    let k = m.len();
    let cols = rhs[0].len();
    let mut m: Vec<Vec<Jet<T>>> = m.to_vec();
    let mut rhs: Vec<Vec<Jet<T>>> = rhs.to_vec();
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&a, &b| {
                m[a][col]
                    .value()
                    .abs()
                    .partial_cmp(&m[b][col].value().abs())
                    .expect("comparable pivots")
            })
            .expect("nonempty");
        if m[piv][col].value() == T::zero() {
            return Err(Error::DegenerateFrame(
                "singular jet system (no invertible pivot)".into(),
            ));
        }
        if piv != col {
            m.swap(piv, col);
            rhs.swap(piv, col);
        }
        let inv = m[col][col].recip()?;
        for r in col + 1..k {
            let f = m[r][col].checked_mul(&inv)?;
            for c in col..k {
                let t = f.checked_mul(&m[col][c])?;
                m[r][c] = m[r][c].checked_sub(&t)?;
            }
            for c in 0..cols {
                let t = f.checked_mul(&rhs[col][c])?;
                rhs[r][c] = rhs[r][c].checked_sub(&t)?;
            }
        }
    }
    let space = m[0][0].space().clone();
    let mut xs = vec![vec![Jet::zero(&space); cols]; k];
    for c in 0..cols {
        for r in (0..k).rev() {
            let mut acc = rhs[r][c].clone();
            for rr in r + 1..k {
                let t = m[r][rr].checked_mul(&xs[rr][c])?;
                acc = acc.checked_sub(&t)?;
            }
            xs[r][c] = acc.checked_mul(&m[r][r].recip()?)?;
        }
    }
    Ok(xs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sp(n: usize, order: usize) -> Arc<JetSpace> {
        jet_space(n, order).unwrap()
    }

    #[test]
    fn index_enumeration_is_graded_lex_and_nested() {
        let s = sp(2, 3);
        let got: Vec<Vec<u8>> = s.indices().map(|i| i.to_vec()).collect();
        assert_eq!(
            got,
            vec![
                vec![0, 0],
                vec![1, 0],
                vec![0, 1],
                vec![2, 0],
                vec![1, 1],
                vec![0, 2],
                vec![3, 0],
                vec![2, 1],
                vec![1, 2],
                vec![0, 3],
            ]
        );
        // the order-2 enumeration is a prefix
        let s2 = sp(2, 2);
        let got2: Vec<Vec<u8>> = s2.indices().map(|i| i.to_vec()).collect();
        assert_eq!(&got[..6], &got2[..]);
    }

    #[test]
    fn space_len_is_binomial() {
        assert_eq!(sp(3, 5).len(), 56); // C(8,3)
        assert_eq!(sp(4, 5).len(), 126); // C(9,4)
        assert_eq!(sp(1, 4).len(), 5);
    }

    #[test]
    fn product_matches_polynomial_expansion() {
        // (1+u)(1-u) = 1 - u^2 exactly
        let s = sp(1, 2);
        let u = Jet::<f64>::variable(&s, 0, 0.0).unwrap();
        let one = Jet::constant(&s, 1.0);
        let p = (&one + &u).checked_mul(&(&one - &u)).unwrap();
        assert_eq!(p.coeffs(), &[1.0, 0.0, -1.0]);
    }

    #[test]
    fn bivariate_product_coefficients() {
        // (1 + u + v)^2 = 1 + 2u + 2v + u^2 + 2uv + v^2
        let s = sp(2, 2);
        let u = Jet::<f64>::variable(&s, 0, 0.0).unwrap();
        let v = Jet::<f64>::variable(&s, 1, 0.0).unwrap();
        let mut a = Jet::constant(&s, 1.0);
        a += &u;
        a += &v;
        let p = a.checked_mul(&a).unwrap();
        assert_eq!(p.coeffs(), &[1.0, 2.0, 2.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn exp_series_at_origin() {
        let s = sp(1, 3);
        let u = Jet::<f64>::variable(&s, 0, 0.0).unwrap();
        let e = u.exp();
        assert_eq!(e.coeffs()[0], 1.0);
        assert_eq!(e.coeffs()[1], 1.0);
        assert_relative_eq!(e.coeffs()[2], 0.5, epsilon = 1e-15);
        assert_relative_eq!(e.coeffs()[3], 1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn sqrt_series() {
        // sqrt(1+u) = 1 + u/2 - u^2/8 + u^3/16 - ...
        let s = sp(1, 3);
        let u = Jet::<f64>::variable(&s, 0, 1.0).unwrap();
        let r = u.sqrt().unwrap();
        assert_relative_eq!(r.coeffs()[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(r.coeffs()[1], 0.5, epsilon = 1e-15);
        assert_relative_eq!(r.coeffs()[2], -0.125, epsilon = 1e-15);
        assert_relative_eq!(r.coeffs()[3], 1.0 / 16.0, epsilon = 1e-15);
    }

    #[test]
    fn log_exp_round_trip() {
        let s = sp(2, 5);
        let u = Jet::<f64>::variable(&s, 0, 0.3).unwrap();
        let v = Jet::<f64>::variable(&s, 1, -0.1).unwrap();
        let a = &u + &v.scale(2.0);
        let back = a.exp().ln().unwrap();
        for (x, y) in back.coeffs().iter().zip(a.coeffs()) {
            assert_relative_eq!(x, y, epsilon = 1e-14);
        }
    }

    #[test]
    fn reciprocal_inverts() {
        let s = sp(2, 4);
        let u = Jet::<f64>::variable(&s, 0, 0.4).unwrap();
        let v = Jet::<f64>::variable(&s, 1, 0.2).unwrap();
        let a = Jet::constant(&s, 1.0) + &u * &v + u;
        let prod = a.checked_mul(&a.recip().unwrap()).unwrap();
        assert_relative_eq!(prod.coeffs()[0], 1.0, epsilon = 1e-14);
        for &c in &prod.coeffs()[1..] {
            assert!(c.abs() < 1e-14, "residual coefficient {c}");
        }
    }

    #[test]
    fn derivative_lowers_order_and_scales() {
        // d/du (u^3) at u=2: value 12, first coeff 12... full jet of 3u^2 at 2
        let s = sp(1, 4);
        let u = Jet::<f64>::variable(&s, 0, 2.0).unwrap();
        let cube = u.powi(3).unwrap();
        let d = cube.derivative(0).unwrap();
        assert_eq!(d.order(), 3);
        assert_relative_eq!(d.coeffs()[0], 12.0, epsilon = 1e-13);
        assert_relative_eq!(d.coeffs()[1], 12.0, epsilon = 1e-13);
        assert_relative_eq!(d.coeffs()[2], 3.0, epsilon = 1e-13);
        assert_relative_eq!(d.coeffs()[3], 0.0, epsilon = 1e-13);
    }

    #[test]
    fn determinant_of_jet_matrix() {
        // det [[1+u, u], [u, 1]] = 1 + u - u^2
        let s = sp(1, 2);
        let u = Jet::<f64>::variable(&s, 0, 0.0).unwrap();
        let one = Jet::constant(&s, 1.0);
        let m = vec![vec![&one + &u, u.clone()], vec![u.clone(), one.clone()]];
        let d = jet_det(&m).unwrap();
        assert_eq!(d.coeffs(), &[1.0, 1.0, -1.0]);
    }

    #[test]
    fn determinant_handles_point_singular_matrices() {
        // det [[u, 1], [1, u]] = u² − 1: value-singular at u = 0 but a
        // perfectly regular jet
        let s = sp(1, 2);
        let u = Jet::<f64>::variable(&s, 0, 0.0).unwrap();
        let one = Jet::constant(&s, 1.0);
        let d = jet_det(&vec![vec![u.clone(), one.clone()], vec![one, u.clone()]]).unwrap();
        assert_eq!(d.coeffs(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn determinant_of_four_by_four_matches_cofactor_shuffle() {
        // permutation-style check: diag(2,3,4,5) with an off-diagonal jet pair
        let s = sp(2, 2);
        let u = Jet::<f64>::variable(&s, 0, 0.3).unwrap();
        let v = Jet::<f64>::variable(&s, 1, -0.2).unwrap();
        let z = Jet::<f64>::zero(&s);
        let c = |x: f64| Jet::<f64>::constant(&s, x);
        let m = vec![
            vec![c(2.0), u.clone(), z.clone(), z.clone()],
            vec![v.clone(), c(3.0), z.clone(), z.clone()],
            vec![z.clone(), z.clone(), c(4.0), z.clone()],
            vec![z.clone(), z.clone(), z.clone(), c(5.0)],
        ];
        // det = (6 − uv)·20
        let d = jet_det(&m).unwrap();
        let uv = u.checked_mul(&v).unwrap();
        for (i, &coef) in d.coeffs().iter().enumerate() {
            let want = if i == 0 { 120.0 } else { 0.0 } - 20.0 * uv.coeffs()[i];
            assert_relative_eq!(coef, want, epsilon = 1e-13);
        }
    }

    #[test]
    fn solve_round_trips() {
        let s = sp(2, 3);
        let u = Jet::<f64>::variable(&s, 0, 0.1).unwrap();
        let v = Jet::<f64>::variable(&s, 1, -0.2).unwrap();
        let one = Jet::constant(&s, 1.0);
        let m = vec![
            vec![&one + &u, v.clone()],
            vec![u.clone(), &one - &(&u * &v)],
        ];
        let x0 = vec![vec![u.exp()], vec![(&one + &(&v * &v)).recip().unwrap()]];
        let rhs = vec![
            vec![&(&m[0][0] * &x0[0][0]) + &(&m[0][1] * &x0[1][0])],
            vec![&(&m[1][0] * &x0[0][0]) + &(&m[1][1] * &x0[1][0])],
        ];
        let got = jet_solve(&m, &rhs).unwrap();
        for r in 0..2 {
            for (a, b) in got[r][0].coeffs().iter().zip(x0[r][0].coeffs()) {
                assert_relative_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Jet::<f64>::constant(&sp(2, 3), 1.0);
        let b = Jet::<f64>::constant(&sp(2, 2), 1.0);
        assert!(matches!(
            a.checked_add(&b),
            Err(Error::ShapeMismatch { .. })
        ));
        let c = Jet::<f64>::constant(&sp(3, 3), 1.0);
        assert!(a.checked_mul(&c).is_err());
    }

    #[test]
    fn zero_constant_reciprocal_is_an_error() {
        let s = sp(1, 3);
        let u = Jet::<f64>::variable(&s, 0, 0.0).unwrap();
        assert!(matches!(u.recip(), Err(Error::Domain { .. })));
        assert!(matches!(
            Jet::constant(&s, -1.0).ln(),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            Jet::constant(&s, -1.0).sqrt(),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn order_zero_derivative_is_an_error() {
        let a = Jet::<f64>::constant(&sp(2, 0), 1.0);
        assert!(matches!(
            a.derivative(0),
            Err(Error::OrderTooLow { .. })
        ));
    }

    #[test]
    fn truncation_is_a_prefix() {
        let s = sp(2, 4);
        let u = Jet::<f64>::variable(&s, 0, 0.5).unwrap();
        let e = u.exp();
        let t = e.truncated(2).unwrap();
        assert_eq!(t.coeffs(), &e.coeffs()[..6]);
    }

    #[test]
    fn unsupported_shapes_rejected() {
        assert!(jet_space(0, 3).is_err());
        assert!(jet_space(9, 3).is_err());
        assert!(jet_space(3, 9).is_err());
    }

    #[test]
    fn finite_difference_cross_check() {
        // jet coefficients of f(u,v) = exp(u) * cos(v) / (1 + u^2) against
        // central differences of the plain evaluation
        let f = |u: f64, v: f64| u.exp() * v.cos() / (1.0 + u * u);
        let (p, q) = (0.3, -0.4);
        let s = sp(2, 3);
        let u = Jet::<f64>::variable(&s, 0, p).unwrap();
        let v = Jet::<f64>::variable(&s, 1, q).unwrap();
        let one = Jet::constant(&s, 1.0);
        let jet = &(&u.exp() * &v.cos()) / &(&one + &(&u * &u));
        let eps = 1e-5;
        // df/du
        let fd_u = (f(p + eps, q) - f(p - eps, q)) / (2.0 * eps);
        assert_relative_eq!(jet.coeff(&[1, 0]), fd_u, epsilon = 1e-9);
        // df/dv
        let fd_v = (f(p, q + eps) - f(p, q - eps)) / (2.0 * eps);
        assert_relative_eq!(jet.coeff(&[0, 1]), fd_v, epsilon = 1e-9);
        // d2f/dudv / 1!1!
        let fd_uv = (f(p + eps, q + eps) - f(p + eps, q - eps) - f(p - eps, q + eps)
            + f(p - eps, q - eps))
            / (4.0 * eps * eps);
        assert_relative_eq!(jet.coeff(&[1, 1]), fd_uv, epsilon = 1e-6);
    }

    proptest::proptest! {
        #[test]
        fn product_agrees_with_brute_force_convolution(
            a in proptest::collection::vec(-2.0f64..2.0, 10),
            b in proptest::collection::vec(-2.0f64..2.0, 10),
        ) {
            // order-3, two-variable jets have exactly 10 coefficients; the
            // product must equal the truncated convolution of the exponent maps
            let s = sp(2, 3);
            let ja = Jet { space: s.clone(), coeffs: a.clone() };
            let jb = Jet { space: s.clone(), coeffs: b.clone() };
            let fast = ja.checked_mul(&jb).unwrap();
            let idx: Vec<Vec<u8>> = s.indices().map(|i| i.to_vec()).collect();
            let mut slow = vec![0.0f64; 10];
            for (i, ia) in idx.iter().enumerate() {
                for (j, ib) in idx.iter().enumerate() {
                    let sum: Vec<u8> = ia.iter().zip(ib).map(|(x, y)| x + y).collect();
                    if sum.iter().map(|&x| x as usize).sum::<usize>() <= 3 {
                        let k = s.rank_of(&sum).unwrap();
                        slow[k] += a[i] * b[j];
                    }
                }
            }
            for (x, y) in fast.coeffs().iter().zip(&slow) {
                proptest::prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn works_in_f32() {
        let s = sp(2, 3);
        let u = Jet::<f32>::variable(&s, 0, 0.5).unwrap();
        let v = Jet::<f32>::variable(&s, 1, 0.25).unwrap();
        let r = (&u.exp() * &v.cos()).ln().unwrap();
        assert!(r.is_finite());
        assert_relative_eq!(r.value(), 0.5 + 0.25f32.cos().ln(), epsilon = 1e-6);
    }
}
