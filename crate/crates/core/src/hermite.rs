//! Hermite polynomials and exact first-order calculus on Hermite expansions.
//!
//! Polynomials use the physicists' normalisation, `H_{n+1} = 2t H_n - 2n H_{n-1}`,
//! which is orthogonal for the Gaussian measure `pi^{-d/2} exp(-|x|^2) dx` with
//! `<H_m, H_n> = delta_{mn} 2^n n!`. In this normalisation
//!
//! * `d/dx_i H_n = 2n H_{n-1}`,
//! * `(2x_i - d/dx_i) H_n = H_{n+1}`,
//! * `x_i H_n = H_{n+1}/2 + n H_{n-1}`,
//!
//! so every operator below is a pure relabelling of coefficients.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A multi-index `alpha = (alpha_1, ..., alpha_d)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        Self(entries)
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    /// `e_i`, with `i` 1-based.
    pub fn unit(dim: usize, i: usize) -> Self {
        let mut v = vec![0; dim];
        v[i - 1] = 1;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Total degree `|alpha|`.
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    /// Entry at 1-based coordinate `i`.
    pub fn get(&self, i: usize) -> u32 {
        self.0[i - 1]
    }

    fn shifted(&self, i: usize, up: bool) -> Option<Self> {
        let mut v = self.0.clone();
        let e = &mut v[i - 1];
        if up {
            *e += 1;
        } else {
            *e = e.checked_sub(1)?;
        }
        Some(Self(v))
    }

    /// `||H_alpha||^2_{L^2(gamma)} = prod_i 2^{alpha_i} alpha_i!`.
    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|&n| hermite_norm_sq(n)).product()
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, e) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// `2^n n!`, exact in integer arithmetic while it fits in `u128`.
pub fn hermite_norm_sq(n: u32) -> f64 {
    if n <= 25 {
        let mut acc: u128 = 1;
        for k in 1..=n as u128 {
            acc *= 2 * k;
        }
        acc as f64
    } else {
        (1..=n).fold(1.0, |acc, k| acc * 2.0 * k as f64)
    }
}

/// A point of R^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("point coordinates must be finite".into()));
        }
        Ok(Self(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl From<&[f64]> for Point {
    fn from(v: &[f64]) -> Self {
        Self(v.to_vec())
    }
}

/// `H_n(t)` via the three-term recurrence.
pub fn hermite_1d(n: u32, t: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 2.0 * t;
    for k in 1..n {
        let next = 2.0 * t * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// All of `H_0(t), ..., H_n(t)`.
pub fn hermite_table(n: u32, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(2.0 * t);
    }
    for k in 1..n as usize {
        let next = 2.0 * t * out[k] - 2.0 * k as f64 * out[k - 1];
        out.push(next);
    }
    out
}

/// A finite linear combination of tensor Hermite polynomials on R^d.
///
/// Zero coefficients are never stored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HermiteExpansion {
    dim: usize,
    coeffs: BTreeMap<MultiIndex, f64>,
}

impl PartialEq for HermiteExpansion {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.coeffs == other.coeffs
    }
}

impl HermiteExpansion {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            coeffs: BTreeMap::new(),
        }
    }

    /// `c * H_alpha`.
    pub fn monomial(alpha: impl Into<MultiIndex>, c: f64) -> Self {
        let alpha = alpha.into();
        let mut out = Self::zero(alpha.dim());
        out.add_term(alpha, c);
        out
    }

    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, f64)>,
    {
        let mut out = Self::zero(dim);
        for (alpha, c) in terms {
            if alpha.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: alpha.dim(),
                });
            }
            if !c.is_finite() {
                return Err(Error::InvalidArgument("non-finite coefficient".into()));
            }
            out.add_term(alpha, c);
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> f64 {
        self.coeffs.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> + '_ {
        self.coeffs.iter().map(|(a, &c)| (a, c))
    }

    pub fn max_degree(&self) -> Option<u32> {
        self.coeffs.keys().map(MultiIndex::degree).max()
    }

    fn add_term(&mut self, alpha: MultiIndex, c: f64) {
        debug_assert_eq!(alpha.dim(), self.dim);
        if c == 0.0 {
            return;
        }
        match self.coeffs.get_mut(&alpha) {
            Some(v) => {
                *v += c;
                if *v == 0.0 {
                    self.coeffs.remove(&alpha);
                }
            }
            None => {
                self.coeffs.insert(alpha, c);
            }
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: dim,
            });
        }
        Ok(())
    }

    fn check_coord(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.dim {
            return Err(Error::CoordinateOutOfRange { index: i, dim: self.dim });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim)?;
        let mut out = self.clone();
        for (a, c) in other.terms() {
            out.add_term(a.clone(), c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = Self::zero(self.dim);
        for (a, v) in self.terms() {
            out.add_term(a.clone(), v * c);
        }
        out
    }

    /// Maps every coefficient through `f(alpha, c)`, keeping the index.
    pub fn map_coeffs<F: FnMut(&MultiIndex, f64) -> f64>(&self, mut f: F) -> Self {
        let mut out = Self::zero(self.dim);
        for (a, c) in self.terms() {
            out.add_term(a.clone(), f(a, c));
        }
        out
    }

    /// `sum_alpha c_alpha prod_i H_{alpha_i}(x_i)`.
    pub fn eval(&self, x: &Point) -> Result<f64> {
        self.check_dim(x.dim())?;
        Ok(self.eval_slice(x.coords()))
    }

    /// Like [`eval`](Self::eval) on raw coordinates; `x` must have length `dim`.
    pub fn eval_slice(&self, x: &[f64]) -> f64 {
        let top = self
            .coeffs
            .keys()
            .flat_map(|a| a.entries().iter().copied())
            .max()
            .unwrap_or(0);
        let tables: Vec<Vec<f64>> = x.iter().map(|&t| hermite_table(top, t)).collect();
        self.coeffs
            .iter()
            .map(|(a, c)| {
                c * a
                    .entries()
                    .iter()
                    .enumerate()
                    .map(|(k, &n)| tables[k][n as usize])
                    .product::<f64>()
            })
            .sum()
    }

    /// L^2(gamma) inner product computed in coefficient space.
    pub fn inner_product_gamma(&self, other: &Self) -> Result<f64> {
        self.check_dim(other.dim)?;
        Ok(self
            .coeffs
            .iter()
            .filter_map(|(a, c)| other.coeffs.get(a).map(|d| c * d * a.norm_sq()))
            .sum())
    }

    pub fn norm_gamma(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(a, c)| c * c * a.norm_sq())
            .sum::<f64>()
            .sqrt()
    }

    /// `d/dx_i`, with `i` 1-based.
    pub fn apply_partial(&self, i: usize) -> Result<Self> {
        self.check_coord(i)?;
        let mut out = Self::zero(self.dim);
        for (a, c) in self.terms() {
            if let Some(b) = a.shifted(i, false) {
                out.add_term(b, c * (2 * a.get(i)) as f64);
            }
        }
        Ok(out)
    }

    /// `d/dx_i^* = 2 x_i - d/dx_i`, with `i` 1-based.
    pub fn apply_partial_star(&self, i: usize) -> Result<Self> {
        self.check_coord(i)?;
        let mut out = Self::zero(self.dim);
        for (a, c) in self.terms() {
            let b = a.shifted(i, true).expect("raising never fails");
            out.add_term(b, c);
        }
        Ok(out)
    }

    /// Multiplication by `x_i`, with `i` 1-based.
    pub fn apply_multiplication(&self, i: usize) -> Result<Self> {
        self.check_coord(i)?;
        let mut out = Self::zero(self.dim);
        for (a, c) in self.terms() {
            out.add_term(a.shifted(i, true).expect("raising never fails"), 0.5 * c);
            if let Some(b) = a.shifted(i, false) {
                out.add_term(b, c * a.get(i) as f64);
            }
        }
        Ok(out)
    }

    /// The Ornstein–Uhlenbeck operator: multiplies `c_alpha` by `|alpha|`.
    pub fn apply_ou(&self) -> Self {
        self.map_coeffs(|a, c| c * a.degree() as f64)
    }

    /// Orthogonal projection onto polynomials of exact total degree `j`.
    pub fn project_degree(&self, j: u32) -> Self {
        let mut out = Self::zero(self.dim);
        for (a, c) in self.terms().filter(|(a, _)| a.degree() == j) {
            out.add_term(a.clone(), c);
        }
        out
    }
}

/// Random expansion with up to six terms of total degree at most `max_degree`.
/// With `integer` set, coefficients are small integers so that exact operator
/// identities can be compared with `==`.
pub fn random_expansion<R: Rng>(rng: &mut R, dim: usize, max_degree: u32, integer: bool) -> HermiteExpansion {
    let terms = rng.gen_range(1..=6);
    let mut out = Vec::new();
    for _ in 0..terms {
        let mut left = rng.gen_range(0..=max_degree);
        let mut entries = vec![0u32; dim];
        for k in 0..dim {
            let e = if k + 1 == dim { left } else { rng.gen_range(0..=left) };
            entries[k] = e;
            left -= e;
        }
        // shuffle which coordinate carries the remainder
        let rot = rng.gen_range(0..dim);
        entries.rotate_left(rot);
        let c = if integer {
            let v: i32 = rng.gen_range(1..=9);
            if rng.gen_bool(0.5) { v as f64 } else { -v as f64 }
        } else {
            rng.gen_range(-1.0..1.0)
        };
        out.push((MultiIndex::new(entries), c));
    }
    HermiteExpansion::from_terms(dim, out).expect("dimensions agree")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{gauss_hermite_rule, random_expansion};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn h(alpha: &[u32], c: f64) -> HermiteExpansion {
        HermiteExpansion::monomial(alpha.to_vec(), c)
    }

    #[test]
    fn hermite_values() {
        assert_eq!(hermite_1d(0, 5.0), 1.0);
        assert_eq!(hermite_1d(1, 3.0), 6.0);
        assert_eq!(hermite_1d(2, 1.0), 2.0);
        // H_3(t) = 8t^3 - 12t
        assert_eq!(hermite_1d(3, 2.0), 40.0);
    }

    #[test]
    fn eval_examples() {
        let x = Point::from(vec![0.7]);
        assert_eq!(HermiteExpansion::zero(1).eval(&x).unwrap(), 0.0);
        assert_eq!(h(&[1], 1.0).eval(&Point::from(vec![2.0])).unwrap(), 4.0);
        assert_eq!(h(&[1, 1], 1.0).eval(&Point::from(vec![1.0, 1.0])).unwrap(), 4.0);
        assert!(matches!(
            h(&[1], 1.0).eval(&Point::from(vec![1.0, 2.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn inner_product_examples() {
        assert_eq!(h(&[0], 1.0).inner_product_gamma(&h(&[0], 1.0)).unwrap(), 1.0);
        assert_eq!(h(&[2], 1.0).inner_product_gamma(&h(&[2], 1.0)).unwrap(), 8.0);
        assert_eq!(h(&[1], 1.0).inner_product_gamma(&h(&[2], 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn norms_match_gauss_hermite_oracle() {
        // <H_m, H_n>_gamma by 40-point Gauss-Hermite quadrature
        let (nodes, weights) = gauss_hermite_rule(40);
        for m in 0..=12u32 {
            for n in 0..=12u32 {
                let q: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&t, &w)| w * hermite_1d(m, t) * hermite_1d(n, t))
                    .sum();
                let exact = if m == n { hermite_norm_sq(n) } else { 0.0 };
                let scale = (hermite_norm_sq(m) * hermite_norm_sq(n)).sqrt();
                assert!((q - exact).abs() <= 1e-10 * scale, "m={m} n={n} q={q}");
            }
        }
    }

    #[test]
    fn orthogonality_in_two_dimensions() {
        let (nodes, weights) = gauss_hermite_rule(30);
        let idx: Vec<MultiIndex> = (0..=10u32)
            .flat_map(|a| (0..=(10 - a)).map(move |b| MultiIndex::new(vec![a, b])))
            .step_by(7)
            .collect();
        for a in &idx {
            for b in &idx {
                let fa = HermiteExpansion::monomial(a.clone(), 1.0);
                let fb = HermiteExpansion::monomial(b.clone(), 1.0);
                let exact = fa.inner_product_gamma(&fb).unwrap();
                if a != b {
                    assert_eq!(exact, 0.0);
                }
                let mut q = 0.0;
                for (i, &s) in nodes.iter().enumerate() {
                    for (j, &t) in nodes.iter().enumerate() {
                        let p = Point::from(vec![s, t]);
                        q += weights[i] * weights[j] * fa.eval(&p).unwrap() * fb.eval(&p).unwrap();
                    }
                }
                let scale = (a.norm_sq() * b.norm_sq()).sqrt();
                assert!((q - exact).abs() <= 1e-10 * scale, "{a} {b}");
            }
        }
    }

    #[test]
    fn partial_examples() {
        assert_eq!(h(&[3], 1.0).apply_partial(1).unwrap(), h(&[2], 6.0));
        assert!(h(&[0], 1.0).apply_partial(1).unwrap().is_zero());
        assert_eq!(h(&[1, 2], 1.0).apply_partial(2).unwrap(), h(&[1, 1], 4.0));
        assert!(matches!(
            h(&[1], 1.0).apply_partial(2),
            Err(Error::CoordinateOutOfRange { .. })
        ));
        assert!(h(&[1], 1.0).apply_partial(0).is_err());
    }

    #[test]
    fn partial_star_examples() {
        assert_eq!(h(&[2], 1.0).apply_partial_star(1).unwrap(), h(&[3], 1.0));
        assert_eq!(h(&[0], 1.0).apply_partial_star(1).unwrap(), h(&[1], 1.0));
        // (2x - d)(H_1) = 2x H_1 - 2 H_0 = (H_2 + 2 H_0) - 2 H_0
        let f = h(&[1], 1.0);
        let two_x = f.apply_multiplication(1).unwrap().scale(2.0);
        assert_eq!(two_x, h(&[2], 1.0).add(&h(&[0], 2.0)).unwrap());
        let via = two_x.sub(&f.apply_partial(1).unwrap()).unwrap();
        assert_eq!(via, h(&[2], 1.0));
        assert_eq!(f.apply_partial_star(1).unwrap(), via);
    }

    #[test]
    fn multiplication_examples() {
        assert_eq!(h(&[0], 1.0).apply_multiplication(1).unwrap(), h(&[1], 0.5));
        assert_eq!(
            h(&[1], 1.0).apply_multiplication(1).unwrap(),
            h(&[2], 0.5).add(&h(&[0], 1.0)).unwrap()
        );
        // pointwise check against evaluation
        let f = h(&[3, 1], 1.5).add(&h(&[0, 2], -2.0)).unwrap();
        let g = f.apply_multiplication(2).unwrap();
        let p = Point::from(vec![0.3, -1.1]);
        let lhs = g.eval(&p).unwrap();
        let rhs = -1.1 * f.eval(&p).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn star_is_twice_multiplication_minus_partial() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in 1..=3 {
            for _ in 0..20 {
                let f = random_expansion(&mut rng, d, 8, true);
                for i in 1..=d {
                    let lhs = f.apply_partial_star(i).unwrap();
                    let rhs = f
                        .apply_multiplication(i)
                        .unwrap()
                        .scale(2.0)
                        .sub(&f.apply_partial(i).unwrap())
                        .unwrap();
                    assert_eq!(lhs, rhs);
                }
            }
        }
    }

    #[test]
    fn ou_examples() {
        assert!(h(&[0], 1.0).apply_ou().is_zero());
        assert_eq!(h(&[3], 1.0).apply_ou(), h(&[3], 3.0));
        assert_eq!(h(&[1, 2], 1.0).apply_ou(), h(&[1, 2], 3.0));
    }

    #[test]
    fn projection_examples() {
        let f = h(&[0], 1.0).add(&h(&[2], 1.0)).unwrap();
        assert_eq!(f.project_degree(0), h(&[0], 1.0));
        assert!(h(&[2], 1.0).project_degree(5).is_zero());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_expansion(&mut rng, 2, 7, true);
        let mut total = HermiteExpansion::zero(2);
        for j in 0..=7 {
            total = total.add(&g.project_degree(j)).unwrap();
        }
        assert_eq!(total, g);
    }

    #[test]
    fn adjoint_and_factorisation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in 1..=3 {
            for _ in 0..30 {
                let f = random_expansion(&mut rng, d, 10, false);
                let g = random_expansion(&mut rng, d, 10, false);
                for i in 1..=d {
                    let lhs = f.apply_partial(i).unwrap().inner_product_gamma(&g).unwrap();
                    let rhs = f.inner_product_gamma(&g.apply_partial_star(i).unwrap()).unwrap();
                    let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
                    assert!((lhs - rhs).abs() <= 1e-12 * scale);
                }
                let fi = random_expansion(&mut rng, d, 10, true);
                let mut sum = HermiteExpansion::zero(d);
                for i in 1..=d {
                    sum = sum
                        .add(&fi.apply_partial(i).unwrap().apply_partial_star(i).unwrap())
                        .unwrap();
                }
                assert_eq!(sum, fi.apply_ou().scale(2.0));
            }
        }
    }
}
