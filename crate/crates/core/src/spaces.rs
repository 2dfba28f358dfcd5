//! Admissible balls and cubes, Gaussian measures of regions, Gaussian atoms,
//! and the computable sides of the H^1 and BMO norms.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::Point;
use crate::kernel::SampledFunction;
use crate::quadrature::{composite_rule, GaussLegendre, TensorGrid};
use crate::special::{gauss_interval_scaled, log_gauss_box, nearest_square, FRAC_1_SQRT_PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    Ball,
    /// Axis-aligned cube; the size is the half-side.
    Cube,
}

/// `min(1, 1/|c|)`, the largest admissible radius (or half-side) at `c`.
pub fn admissible_bound(center: &Point) -> f64 {
    let n = center.norm();
    if n <= 1.0 {
        1.0
    } else {
        1.0 / n
    }
}

/// A ball or cube from the admissible family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleRegion {
    shape: Shape,
    center: Point,
    size: f64,
}

impl AdmissibleRegion {
    pub fn new(shape: Shape, center: Point, size: f64) -> Result<Self> {
        if center.dim() == 0 {
            return Err(Error::InvalidArgument("center must have dimension >= 1".into()));
        }
        let bound = admissible_bound(&center);
        if !(size > 0.0) || size > bound {
            return Err(Error::NotAdmissible(format!(
                "size {size} exceeds min(1, 1/|c|) = {bound} at |c| = {}",
                center.norm()
            )));
        }
        Ok(Self { shape, center, size })
    }

    pub fn ball(center: Point, radius: f64) -> Result<Self> {
        Self::new(Shape::Ball, center, radius)
    }

    /// Cube with the given half-side.
    pub fn cube(center: Point, half_side: f64) -> Result<Self> {
        Self::new(Shape::Cube, center, half_side)
    }

    pub fn maximal_ball(center: Point) -> Self {
        let size = admissible_bound(&center);
        Self {
            shape: Shape::Ball,
            center,
            size,
        }
    }

    pub fn maximal_cube(center: Point) -> Self {
        let size = admissible_bound(&center);
        Self {
            shape: Shape::Cube,
            center,
            size,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn center(&self) -> &Point {
        &self.center
    }

    /// Radius of a ball, half-side of a cube.
    pub fn size(&self) -> f64 {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn is_maximal(&self) -> bool {
        self.size == admissible_bound(&self.center)
    }

    /// Closed membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        let c = self.center.coords();
        match self.shape {
            Shape::Ball => {
                let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                d2 <= self.size * self.size
            }
            Shape::Cube => x.iter().zip(c).all(|(a, b)| (a - b).abs() <= self.size),
        }
    }

    /// Smallest axis-aligned box containing the region.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let c = self.center.coords();
        (
            c.iter().map(|t| t - self.size).collect(),
            c.iter().map(|t| t + self.size).collect(),
        )
    }
}

/// Natural log of `gamma(region)`; finite even where the measure underflows.
pub fn log_gamma_measure(region: &AdmissibleRegion) -> f64 {
    let (lo, hi) = region.bounding_box();
    match region.shape {
        Shape::Cube => log_gauss_box(&lo, &hi),
        Shape::Ball => {
            let c = region.center.coords();
            let dist = (region.center.norm() - region.size).max(0.0);
            let shift = dist * dist;
            let v = scaled_ball(c, region.size, shift, 48);
            v.ln() - shift
        }
    }
}

/// `gamma(region)`: an exact product of error functions for cubes, a nested
/// Gauss–Legendre rule in `theta` for balls.
pub fn gamma_measure(region: &AdmissibleRegion) -> f64 {
    log_gamma_measure(region).exp()
}

/// `exp(shift) * gamma(B(c, r))` by recursion on the first coordinate, with
/// `t = c_1 - r cos(theta)` so that the chord half-width is `r sin(theta)`.
fn scaled_ball(c: &[f64], r: f64, shift: f64, nodes: usize) -> f64 {
    if c.len() == 1 {
        return gauss_interval_scaled(c[0] - r, c[0] + r, shift);
    }
    let rule = GaussLegendre::new(nodes);
    let mut acc = 0.0;
    for (theta, w) in composite_rule(0.0, PI, &[0.5 * PI], 2, &rule) {
        let (sin, cos) = theta.sin_cos();
        let t = c[0] - r * cos;
        let h = r * sin;
        if h <= 0.0 {
            continue;
        }
        let inner = scaled_ball(&c[1..], h, shift - t * t, nodes.min(24));
        acc += w * r * sin * FRAC_1_SQRT_PI * inner;
    }
    acc
}

/// One piece of a piecewise-constant atom: value `coeff / gamma(support)` on a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomPiece {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub coeff: f64,
}

/// A Gaussian atom: the constant 1, or a bounded mean-zero function on an
/// admissible region with `|a| <= 1/gamma(region)`.
#[derive(Debug, Clone)]
pub enum GaussianAtom {
    Exceptional,
    /// Indicator-type atom: exact membership, values relative to `1/gamma(support)`.
    Pieces {
        support: AdmissibleRegion,
        pieces: Vec<AtomPiece>,
    },
    /// Atom sampled on a tensor grid over the support's bounding box.
    Sampled {
        support: AdmissibleRegion,
        values: SampledFunction,
    },
}

impl GaussianAtom {
    pub fn support(&self) -> Option<&AdmissibleRegion> {
        match self {
            GaussianAtom::Exceptional => None,
            GaussianAtom::Pieces { support, .. } | GaussianAtom::Sampled { support, .. } => Some(support),
        }
    }

    /// `log(1/gamma(support))`, the scale every value is measured against.
    pub fn log_scale(&self) -> f64 {
        self.support().map_or(0.0, |s| -log_gamma_measure(s))
    }

    /// Value at `y`; may overflow for supports far from the origin.
    pub fn eval(&self, y: &[f64]) -> f64 {
        match self {
            GaussianAtom::Exceptional => 1.0,
            GaussianAtom::Pieces { .. } => self.relative_value(y) * self.log_scale().exp(),
            GaussianAtom::Sampled { support, values } => {
                if support.contains(y) {
                    values.eval(y)
                } else {
                    0.0
                }
            }
        }
    }

    /// `a(y) gamma(support)` for piecewise atoms.
    pub fn relative_value(&self, y: &[f64]) -> f64 {
        match self {
            GaussianAtom::Exceptional => 1.0,
            GaussianAtom::Pieces { support, pieces } => {
                if !support.contains(y) {
                    return 0.0;
                }
                pieces
                    .iter()
                    .find(|p| in_box(y, &p.lo, &p.hi))
                    .map_or(0.0, |p| p.coeff)
            }
            GaussianAtom::Sampled { support, values } => {
                if support.contains(y) {
                    (values.log_scale() - self.log_scale()).exp() * values.raw(y)
                } else {
                    0.0
                }
            }
        }
    }

    /// `gamma(support) * int a d gamma` (zero for valid supported atoms).
    pub fn relative_mean(&self) -> f64 {
        match self {
            GaussianAtom::Exceptional => 1.0,
            GaussianAtom::Pieces { pieces, .. } => {
                let ls = self.log_scale();
                pieces
                    .iter()
                    .map(|p| p.coeff * (log_gauss_box(&p.lo, &p.hi) + ls).exp())
                    .sum()
            }
            GaussianAtom::Sampled { support, .. } => {
                let rule = RegionRule::default();
                let (pts, w) = region_nodes(support, &rule);
                let total: f64 = w.iter().sum();
                pts.iter().zip(&w).map(|(p, w)| w * self.relative_value(p)).sum::<f64>() / total
            }
        }
    }

    /// Checks the sup bound and the mean-zero condition.
    pub fn validate(&self) -> Result<()> {
        let support = match self {
            GaussianAtom::Exceptional => return Ok(()),
            GaussianAtom::Pieces { support, pieces } => {
                for p in pieces {
                    if p.lo.len() != support.dim() || p.hi.len() != support.dim() {
                        return Err(Error::InvalidAtom("piece dimension differs from support".into()));
                    }
                    if p.coeff.abs() > 1.0 + 1e-12 {
                        return Err(Error::InvalidAtom(format!(
                            "piece value {} exceeds 1/gamma(support)",
                            p.coeff
                        )));
                    }
                }
                support
            }
            GaussianAtom::Sampled { support, .. } => {
                let rule = RegionRule::default();
                let (pts, _) = region_nodes(support, &rule);
                if let Some(v) = pts.iter().map(|p| self.relative_value(p)).find(|v| v.abs() > 1.0 + 1e-12) {
                    return Err(Error::InvalidAtom(format!("sampled value {v} exceeds 1/gamma(support)")));
                }
                support
            }
        };
        let m = self.relative_mean();
        if m.abs() > 1e-10 {
            return Err(Error::InvalidAtom(format!(
                "mean is {m:e} relative to 1/gamma(support) on a region of dimension {}",
                support.dim()
            )));
        }
        Ok(())
    }

    /// The atom as a [`SampledFunction`] on its bounding box, for kernel-based
    /// application. Piece boundaries become quadrature breakpoints.
    pub fn to_sampled(&self) -> Result<SampledFunction> {
        match self {
            GaussianAtom::Exceptional => Err(Error::InvalidAtom(
                "the constant atom has unbounded support".into(),
            )),
            GaussianAtom::Sampled { values, .. } => Ok(values.clone()),
            GaussianAtom::Pieces { support, pieces } => {
                let (lo, hi) = support.bounding_box();
                let atom = self.clone();
                let mut f = SampledFunction::new(lo, hi, move |y| atom.relative_value(y))?
                    .with_log_scale(self.log_scale());
                for axis in 0..support.dim() {
                    let mut b: Vec<f64> = pieces.iter().flat_map(|p| [p.lo[axis], p.hi[axis]]).collect();
                    b.sort_by(f64::total_cmp);
                    b.dedup();
                    f = f.with_breaks(axis + 1, b)?;
                }
                Ok(f)
            }
        }
    }
}

fn in_box(y: &[f64], lo: &[f64], hi: &[f64]) -> bool {
    y.iter().zip(lo.iter().zip(hi)).all(|(t, (a, b))| *a <= *t && *t <= *b)
}

/// The cube `Q` centred at `(xi, 0, ..., 0)` with half-side `1/xi`.
pub fn halves_cube(xi: f64, d: usize) -> Result<AdmissibleRegion> {
    if !(xi >= 2.0) || !xi.is_finite() {
        return Err(Error::InvalidArgument(format!("xi = {xi} must be at least 2")));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    let mut c = vec![0.0; d];
    c[0] = xi;
    AdmissibleRegion::cube(Point(c), 1.0 / xi)
}

/// `b = gamma(Q)^{-1} (1_{Q+} - 1_{Q-})` with `Q+ = Q ∩ {y_2 > 0}`.
pub fn make_halves_atom(xi: f64, d: usize) -> Result<GaussianAtom> {
    if d < 2 {
        return Err(Error::InvalidArgument(
            "the halves atom splits along y_2 and needs d >= 2".into(),
        ));
    }
    let q = halves_cube(xi, d)?;
    let (lo, hi) = q.bounding_box();
    let mut upper_lo = lo.clone();
    upper_lo[1] = 0.0;
    let mut lower_hi = hi.clone();
    lower_hi[1] = 0.0;
    let atom = GaussianAtom::Pieces {
        support: q,
        pieces: vec![
            AtomPiece {
                lo: upper_lo,
                hi,
                coeff: 1.0,
            },
            AtomPiece {
                lo,
                hi: lower_hi,
                coeff: -1.0,
            },
        ],
    };
    Ok(atom)
}

/// One-dimensional analogue: `I = [xi - 1/xi, xi + 1/xi]` split at `xi`,
/// value `1/gamma(I)` on the upper half and `-(gamma(I+)/gamma(I-))/gamma(I)`
/// on the lower one, so that the mean vanishes exactly.
pub fn make_interval_halves_atom(xi: f64) -> Result<GaussianAtom> {
    let q = halves_cube(xi, 1)?;
    let (a, b) = (xi - 1.0 / xi, xi + 1.0 / xi);
    let upper = log_gauss_box(&[xi], &[b]);
    let lower = log_gauss_box(&[a], &[xi]);
    let atom = GaussianAtom::Pieces {
        support: q,
        pieces: vec![
            AtomPiece {
                lo: vec![xi],
                hi: vec![b],
                coeff: 1.0,
            },
            AtomPiece {
                lo: vec![a],
                hi: vec![xi],
                coeff: -(upper - lower).exp(),
            },
        ],
    };
    Ok(atom)
}

/// A finite linear combination of atoms.
#[derive(Debug, Clone, Default)]
pub struct AtomCombination {
    pub terms: Vec<(f64, GaussianAtom)>,
}

impl AtomCombination {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(atom: GaussianAtom) -> Self {
        Self {
            terms: vec![(1.0, atom)],
        }
    }

    pub fn push(&mut self, coeff: f64, atom: GaussianAtom) {
        self.terms.push((coeff, atom));
    }
}

/// `sum |lambda_j|`, an upper bound for the H^1 norm of the combination.
pub fn h1_norm_upper(f: &AtomCombination) -> Result<f64> {
    let mut acc = 0.0;
    for (lambda, atom) in &f.terms {
        atom.validate()?;
        if !lambda.is_finite() {
            return Err(Error::InvalidArgument("coefficient is not finite".into()));
        }
        acc += lambda.abs();
    }
    Ok(acc)
}

/// Resolution of the product rules used over balls and cubes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionRule {
    pub panels: usize,
    pub order: usize,
}

impl Default for RegionRule {
    fn default() -> Self {
        Self { panels: 4, order: 10 }
    }
}

/// Nodes in the region with weights proportional to the Gaussian density
/// (up to a common factor). Balls use polar or spherical coordinates around
/// the centre; panel breaks sit on the coordinate axes through it.
pub fn region_nodes(region: &AdmissibleRegion, rule: &RegionRule) -> (Vec<Vec<f64>>, Vec<f64>) {
    let gl = GaussLegendre::new(rule.order);
    let c = region.center.coords();
    let d = region.dim();
    let r = region.size;
    let mut pts = Vec::new();
    let mut w = Vec::new();
    match (region.shape, d) {
        (Shape::Cube, _) | (Shape::Ball, 1) => {
            let axes: Vec<_> = c
                .iter()
                .map(|&t| composite_rule(t - r, t + r, &[t], rule.panels, &gl))
                .collect();
            let grid = TensorGrid::product(&axes);
            for (p, wt) in grid.iter() {
                pts.push(p.to_vec());
                w.push(wt);
            }
        }
        (Shape::Ball, 2) => {
            let radial = composite_rule(0.0, r, &[], rule.panels, &gl);
            let quarter = 0.5 * PI;
            let angular = composite_rule(0.0, 2.0 * PI, &[quarter, 2.0 * quarter, 3.0 * quarter], rule.panels, &gl);
            for &(rho, wr) in &radial {
                for &(th, wt) in &angular {
                    pts.push(vec![c[0] + rho * th.cos(), c[1] + rho * th.sin()]);
                    w.push(wr * wt * rho);
                }
            }
        }
        (Shape::Ball, _) => {
            // a cube grid with exact membership; coarse but dimension-free
            let axes: Vec<_> = c
                .iter()
                .map(|&t| composite_rule(t - r, t + r, &[t], 2 * rule.panels, &gl))
                .collect();
            let grid = TensorGrid::product(&axes);
            for (p, wt) in grid.iter() {
                if region.contains(p) {
                    pts.push(p.to_vec());
                    w.push(wt);
                }
            }
        }
    }
    // Gaussian weights relative to the nearest point of the region
    let shift: f64 = match region.shape {
        Shape::Ball => (region.center.norm() - r).max(0.0).powi(2),
        Shape::Cube => c.iter().map(|&t| nearest_square(t - r, t + r)).sum(),
    };
    for (p, wt) in pts.iter().zip(w.iter_mut()) {
        let n2: f64 = p.iter().map(|t| t * t).sum();
        *wt *= (shift - n2).exp();
    }
    (pts, w)
}

/// `gamma(B)^{-1} int_B |f - f_B| d gamma`.
pub fn mean_oscillation<F>(f: &F, region: &AdmissibleRegion, rule: &RegionRule) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    let (pts, w) = region_nodes(region, rule);
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("region has no quadrature mass".into()));
    }
    let vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("function is not finite on the region".into()));
    }
    // centring on one sample first makes constants give exactly zero
    let base = vals[0];
    let mean = vals.iter().zip(&w).map(|(v, w)| (v - base) * w).sum::<f64>() / total;
    Ok(vals
        .iter()
        .zip(&w)
        .map(|(v, w)| w * ((v - base) - mean).abs())
        .sum::<f64>()
        / total)
}

/// Largest mean oscillation over the supplied regions: a lower bound for the
/// BMO seminorm.
pub fn bmo_seminorm_lower<F>(f: &F, regions: &[AdmissibleRegion], rule: &RegionRule) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    let osc = regions
        .par_iter()
        .map(|b| mean_oscillation(f, b, rule))
        .collect::<Result<Vec<f64>>>()?;
    Ok(osc.into_iter().fold(0.0, f64::max))
}

/// How to pick a finite family of admissible balls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BallStrategy {
    /// Maximal balls centred at `(start * ratio^k, 0, ..., 0)`, `k = 0..count`.
    MaximalAlongAxis { start: f64, ratio: f64 },
    /// Centres uniform in `[-extent, extent]^d`, radii uniform in `(0, bound]`.
    Random { extent: f64 },
}

pub fn sample_admissible_balls(
    strategy: BallStrategy,
    dim: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<AdmissibleRegion>> {
    if count == 0 || dim == 0 {
        return Err(Error::InvalidArgument("count and dimension must be >= 1".into()));
    }
    let out = match strategy {
        BallStrategy::MaximalAlongAxis { start, ratio } => (0..count)
            .map(|k| {
                let mut c = vec![0.0; dim];
                c[0] = start * ratio.powi(k as i32);
                AdmissibleRegion::maximal_ball(Point(c))
            })
            .collect(),
        BallStrategy::Random { extent } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    let c: Vec<f64> = (0..dim).map(|_| rng.gen_range(-extent..=extent)).collect();
                    let p = Point(c);
                    let bound = admissible_bound(&p);
                    // (0, 1] scaled by the bound keeps the inequality exact
                    let u: f64 = 1.0 - rng.gen::<f64>();
                    let radius = (u * bound).min(bound);
                    AdmissibleRegion {
                        shape: Shape::Ball,
                        center: p,
                        size: radius,
                    }
                })
                .collect()
        }
    };
    Ok(out)
}
