//! Endpoint experiments: the off-diagonal counterexamples for `R_1` and
//! `S_1^*` in dimension `d >= 2`, the one-dimensional boundedness scans, and
//! the bookkeeping that turns ladders in `xi` into bounded / unbounded
//! verdicts.
//!
//! Throughout, `Q` is the cube centred at `(xi, 0, ..., 0)` with half-side
//! `1/xi`, `Q_+` its half with `y_2 > 0`, and
//!
//! ```text
//! A_Q = { x : xi - 1 < x_1 < xi - 4/xi,  eta/2 <= x_2 <= eta,  |x_k| <= eta (k >= 3) },
//! eta = eta(x_1) = sqrt((xi - x_1) / xi),
//! I(x_1) = { r : |r - x_1/xi| < eta / (2 xi) },
//! tau(r, x_2, y_2) = 4 r x_2 y_2 / (1 - r^2).
//! ```
//!
//! Absolute constants are immaterial here; what matters is whether a
//! functional grows like `log xi` or stays put.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{random_expansion, Point};
use crate::hormander::{annulus_nodes, hormander_bmo, hormander_h1, probe_points, HormanderSampling};
use crate::kernel::{apply_via_kernel_weighted, kernel_weighted, KernelKind, KernelWeight, SampledFunction};
use crate::quadrature::{composite_rule, rho_integrate_vec_with_cuts, GaussLegendre, QuadratureSpec, RhoPoint};
use crate::spaces::{halves_cube, log_gamma_measure, make_interval_halves_atom, AdmissibleRegion, GaussianAtom};
use crate::spectral::{duality_residual, RieszFamily, RieszKind};

/// The cube, its halves and the far region `A_Q` for one value of `xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleGeometry {
    xi: f64,
    dim: usize,
    cube: AdmissibleRegion,
    log_gamma_cube: f64,
}

impl CounterexampleGeometry {
    pub fn new(xi: f64, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "the counterexample needs d >= 2, got d = {dim}"
            )));
        }
        let cube = halves_cube(xi, dim)?;
        let log_gamma_cube = log_gamma_measure(&cube);
        Ok(Self {
            xi,
            dim,
            cube,
            log_gamma_cube,
        })
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The maximal admissible cube `Q`.
    pub fn cube(&self) -> &AdmissibleRegion {
        &self.cube
    }

    pub fn log_gamma_cube(&self) -> f64 {
        self.log_gamma_cube
    }

    /// `eta(x_1) = sqrt((xi - x_1)/xi)`, zero for `x_1 >= xi`.
    pub fn eta(&self, x1: f64) -> f64 {
        ((self.xi - x1).max(0.0) / self.xi).sqrt()
    }

    /// Range of `x_1` in `A_Q`.
    pub fn x1_range(&self) -> (f64, f64) {
        (self.xi - 1.0, self.xi - 4.0 / self.xi)
    }

    /// The interval `I(x_1)` as `(lo, hi)`; empty when `eta = 0`.
    pub fn r_interval(&self, x1: f64) -> (f64, f64) {
        let m = x1 / self.xi;
        let h = self.eta(x1) / (2.0 * self.xi);
        (m - h, m + h)
    }

    pub fn tau(r: f64, x2: f64, y2: f64) -> f64 {
        4.0 * r * x2 * y2 / ((1.0 - r) * (1.0 + r))
    }

    pub fn in_a_q(&self, x: &[f64]) -> bool {
        let (lo, hi) = self.x1_range();
        if x.len() != self.dim || !(x[0] > lo && x[0] < hi) {
            return false;
        }
        let eta = self.eta(x[0]);
        x[1] >= 0.5 * eta && x[1] <= eta && x[2..].iter().all(|t| t.abs() <= eta)
    }

    pub fn in_q_plus(&self, y: &[f64]) -> bool {
        self.cube.contains(y) && y[1] > 0.0
    }

    /// `x~ = (x_1, -x_2, x_3, ...)`.
    pub fn reflect(x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        v[1] = -v[1];
        v
    }

    /// Lebesgue-weighted nodes on `A_Q`; `x_1` is integrated in
    /// `u = log(xi - x_1)` and the cross-section is re-fitted per `x_1`.
    pub fn a_q_nodes(&self, rule: &CounterexampleRule) -> Vec<(Vec<f64>, f64)> {
        let gl = GaussLegendre::new(rule.order);
        let (u_lo, u_hi) = ((4.0 / self.xi).ln(), 0.0);
        let u_rule = composite_rule(u_lo, u_hi, &[], rule.x1_panels, &gl);
        let mut out = Vec::new();
        for &(u, wu) in &u_rule {
            let x1 = self.xi - u.exp();
            let eta = self.eta(x1);
            let mut axes = vec![composite_rule(0.5 * eta, eta, &[], 1, &gl)];
            for _ in 2..self.dim {
                axes.push(composite_rule(-eta, eta, &[0.0], 1, &gl));
            }
            let grid = crate::quadrature::TensorGrid::product(&axes);
            for (p, w) in grid.iter() {
                let mut x = Vec::with_capacity(self.dim);
                x.push(x1);
                x.extend_from_slice(p);
                out.push((x, w * wu * u.exp()));
            }
        }
        out
    }

    /// Nodes on `Q_+` with weights for `gamma(Q)^{-1} d gamma`.
    pub fn q_plus_nodes(&self, rule: &CounterexampleRule) -> Vec<(Vec<f64>, f64)> {
        let gl = GaussLegendre::new(rule.order);
        let h = 1.0 / self.xi;
        let mut axes = vec![composite_rule(self.xi - h, self.xi + h, &[self.xi], 1, &gl)];
        axes.push(composite_rule(0.0, h, &[], 1, &gl));
        for _ in 2..self.dim {
            axes.push(composite_rule(-h, h, &[0.0], 1, &gl));
        }
        let norm = -self.log_gamma_cube - 0.5 * self.dim as f64 * PI.ln();
        let grid = crate::quadrature::TensorGrid::product(&axes);
        grid.iter()
            .map(|(p, w)| {
                let n2: f64 = p.iter().map(|t| t * t).sum();
                (p.to_vec(), w * (norm - n2).exp())
            })
            .collect()
    }
}

/// Resolution of the counterexample quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleRule {
    /// Panels in `log(xi - x_1)` across `A_Q`.
    pub x1_panels: usize,
    /// Gauss–Legendre nodes per panel and per cross-section axis.
    pub order: usize,
    /// Nodes on `I(x_1)`.
    pub r_order: usize,
}

impl Default for CounterexampleRule {
    fn default() -> Self {
        Self {
            x1_panels: 6,
            order: 6,
            r_order: 12,
        }
    }
}

impl CounterexampleRule {
    pub fn doubled(self) -> Self {
        Self {
            order: 2 * self.order,
            r_order: 2 * self.r_order,
            ..self
        }
    }
}

/// A functional value together with the smallest integrand seen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub value: f64,
    pub min_integrand: f64,
    pub nodes: usize,
}

/// `int_{I(x_1)} (y_1 - r x_1) (1 - r^2)^{-(d+3)/2} e^{-|phi|^2} (1 - e^{-tau}) dr`
/// by Gauss–Legendre on `I(x_1)`; returns the value and the smallest
/// integrand. An empty interval contributes zero.
pub fn r1_inner_integral(geom: &CounterexampleGeometry, x: &[f64], y: &[f64], r_order: usize) -> (f64, f64) {
    let (lo, hi) = geom.r_interval(x[0]);
    if !(hi > lo) {
        return (0.0, f64::INFINITY);
    }
    let d = geom.dim as f64;
    let mut acc = 0.0;
    let mut min = f64::INFINITY;
    for (r, w) in GaussLegendre::new(r_order).on(lo, hi) {
        let c = (1.0 - r) * (1.0 + r);
        let phi2: f64 = x.iter().zip(y).map(|(a, b)| (r * b - a).powi(2)).sum::<f64>() / c;
        let tau = CounterexampleGeometry::tau(r, x[1], y[1]);
        let v = (y[0] - r * x[0]) * (-phi2 - 0.5 * (d + 3.0) * c.ln()).exp() * (-(-tau).exp_m1());
        min = min.min(v);
        acc += w * v;
    }
    (acc, min)
}

/// Lower-bound functional for `||R_1 a||_1` on the halves atom:
///
/// ```text
/// gamma(Q)^{-1} int_{A_Q} int_{Q_+} int_{I(x_1)}
///     (y_1 - r x_1) (1-r^2)^{-(d+3)/2} e^{-|phi|^2} (1 - e^{-tau}) dr d gamma(y) d lambda(x).
/// ```
///
/// Grows like `log xi`.
pub fn lower_bound_functional_r1(geom: &CounterexampleGeometry, rule: &CounterexampleRule) -> Result<FunctionalReport> {
    if geom.xi < 8.0 {
        return Err(Error::InvalidArgument(format!("need xi >= 8, got {}", geom.xi)));
    }
    let xs = geom.a_q_nodes(rule);
    let ys = geom.q_plus_nodes(rule);
    let parts: Vec<(f64, f64)> = xs
        .par_iter()
        .map(|(x, wx)| {
            let mut acc = 0.0;
            let mut min = f64::INFINITY;
            for (y, wy) in &ys {
                let (v, m) = r1_inner_integral(geom, x, y, rule.r_order);
                acc += wy * v;
                min = min.min(m);
            }
            (wx * acc, min)
        })
        .collect();
    Ok(FunctionalReport {
        value: parts.iter().map(|p| p.0).sum(),
        min_integrand: parts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        nodes: xs.len() * ys.len() * rule.r_order,
    })
}

fn s_of(r: f64) -> Option<f64> {
    (r > 0.0 && r < 1.0).then(|| (-r.ln()).sqrt())
}

/// `int_0^1 (x_1 - r y_1) (1-r^2)^{-(d+2)/2} e^{-|psi|^2} (1 - e^{-tau}) d rho(r)`,
/// the reflected kernel difference for `x` in `Q_+` and `y` in `A_Q`.
pub fn s_star_reflected_inner(
    x: &[f64],
    y: &[f64],
    spec: &QuadratureSpec,
) -> Result<(f64, f64)> {
    let d = x.len() as f64;
    let x2: f64 = x.iter().map(|t| t * t).sum();
    let xy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let rstar = (xy / x2).clamp(0.0, 1.0);
    let width = (1.0 - rstar * rstar).max(1e-12).sqrt() / x2.sqrt();
    let mut cuts = Vec::new();
    for k in [0.0, 0.5, -0.5, 2.0, -2.0, 8.0, -8.0] {
        if let Some(s) = s_of(rstar + k * width) {
            cuts.push(s);
        }
    }
    let mut min = f64::INFINITY;
    let (v, _) = rho_integrate_vec_with_cuts(
        1,
        |p: RhoPoint, out: &mut [f64]| {
            let c = p.one_minus_r2;
            let psi2: f64 = x.iter().zip(y).map(|(a, b)| (p.r * a - b).powi(2)).sum::<f64>() / c;
            let tau = 4.0 * p.r * x[1] * y[1] / c;
            let v = (x[0] - p.r * y[0]) * (-psi2 - 0.5 * (d + 2.0) * c.ln()).exp() * (-(-tau).exp_m1());
            min = min.min(v);
            out[0] = v;
        },
        &cuts,
        spec,
    )?;
    Ok((v[0], min))
}

/// `gamma(Q)^{-1} int_{Q_+} (S_1^* f(x) - S_1^* f(x~)) d gamma(x)` with
/// `f = 1_{A_Q}`, evaluated through the reflected kernel difference. Grows
/// like `log xi`.
pub fn bmo_divergence_s_star(
    geom: &CounterexampleGeometry,
    rule: &CounterexampleRule,
    spec: &QuadratureSpec,
) -> Result<FunctionalReport> {
    if geom.xi < 8.0 {
        return Err(Error::InvalidArgument(format!("need xi >= 8, got {}", geom.xi)));
    }
    let xs = geom.q_plus_nodes(rule);
    let ys = geom.a_q_nodes(rule);
    let constant = 2.0 / PI.sqrt() * PI.powf(-0.5 * geom.dim as f64);
    let parts = xs
        .par_iter()
        .map(|(x, wx)| {
            let mut acc = 0.0;
            let mut min = f64::INFINITY;
            for (y, wy) in &ys {
                let (v, m) = s_star_reflected_inner(x, y, spec)?;
                acc += wy * v;
                min = min.min(m);
            }
            Ok((wx * acc, min))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    Ok(FunctionalReport {
        value: constant * parts.iter().map(|p| p.0).sum::<f64>(),
        min_integrand: parts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        nodes: xs.len() * ys.len(),
    })
}

/// `S_1^* 1_{A_Q}(x)` straight from the kernel, for `x` away from `A_Q`.
pub fn s_star_indicator_image(
    geom: &CounterexampleGeometry,
    x: &[f64],
    rule: &CounterexampleRule,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let px = Point(x.to_vec());
    let norm = PI.powf(-0.5 * geom.dim as f64);
    let mut acc = 0.0;
    for (y, w) in geom.a_q_nodes(rule) {
        let k = kernel_weighted(KernelKind::SStar, 1, &px, &Point(y), KernelWeight::y(), spec)?;
        acc += w * k.value;
    }
    Ok(norm * acc)
}

/// Where `l1_norm_riesz_on_atom` evaluates.
#[derive(Debug, Clone, PartialEq)]
pub enum AtomSetting {
    /// The halves atom on `Q`, integrated over `A_Q` (d >= 2).
    Halves(CounterexampleGeometry),
    /// The interval halves atom at `xi` (d = 1), integrated over the
    /// complement of the doubled interval.
    Interval { xi: f64 },
}

/// `int_E |T f| d gamma` over Lebesgue-weighted nodes `E`, with `T f`
/// computed from the kernel. Nodes inside the doubled support box are
/// refused.
pub fn l1_norm_on_region(
    kind: KernelKind,
    i: usize,
    f: &SampledFunction,
    nodes: &[(Vec<f64>, f64)],
    spec: &QuadratureSpec,
) -> Result<f64> {
    let doubled = |x: &[f64]| {
        x.iter().enumerate().all(|(k, &t)| {
            let (lo, hi) = (f.lo()[k], f.hi()[k]);
            let (m, h) = (0.5 * (lo + hi), hi - lo);
            (t - m).abs() < h
        })
    };
    if f.lo().len() == f.dim() && nodes.iter().any(|(x, _)| doubled(x)) {
        return Err(Error::InsideSupport);
    }
    let norm = PI.powf(-0.5 * f.dim() as f64);
    let parts = nodes
        .par_iter()
        .map(|(x, w)| apply_via_kernel_weighted(kind, i, f, &Point(x.clone()), spec).map(|v| w * v.abs()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(norm * parts.iter().sum::<f64>())
}

/// Lebesgue nodes on `{ |x - xi| >= 2/xi } ∩ [-12, xi + 12]`, graded
/// geometrically away from the interval.
pub fn interval_complement_nodes(xi: f64, order: usize) -> Vec<(Vec<f64>, f64)> {
    let gl = GaussLegendre::new(order);
    let t0 = 2.0 / xi;
    let mut out = Vec::new();
    for (side, t1) in [(1.0, 12.0), (-1.0, xi + 12.0)] {
        let mut breaks = Vec::new();
        let mut t = 2.0 * t0;
        while t < t1 {
            breaks.push(t);
            t *= 2.0;
        }
        for (t, w) in composite_rule(t0, t1, &breaks, 1, &gl) {
            out.push((vec![xi + side * t], w));
        }
    }
    out
}

/// `int_E |R_1 a| d gamma` away from the support of the atom `a`.
pub fn l1_norm_riesz_on_atom(
    kind: KernelKind,
    setting: &AtomSetting,
    rule: &CounterexampleRule,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if kind != KernelKind::R {
        return Err(Error::InvalidArgument("only R_1 is scanned".into()));
    }
    match setting {
        AtomSetting::Halves(geom) => {
            let atom = crate::spaces::make_halves_atom(geom.xi, geom.dim)?;
            let f = atom.to_sampled()?.with_resolution(1, rule.order);
            l1_norm_on_region(kind, 1, &f, &geom.a_q_nodes(rule), spec)
        }
        AtomSetting::Interval { xi } => {
            let atom = make_interval_halves_atom(*xi)?;
            let f = sampled_atom(&atom, rule)?;
            l1_norm_on_region(kind, 1, &f, &interval_complement_nodes(*xi, rule.order), spec)
        }
    }
}

fn sampled_atom(atom: &GaussianAtom, rule: &CounterexampleRule) -> Result<SampledFunction> {
    Ok(atom.to_sampled()?.with_resolution(2, rule.order))
}

/// Smallest and largest value of a sampled ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioRange {
    pub min: f64,
    pub max: f64,
}

impl RatioRange {
    fn empty() -> Self {
        Self {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    fn push(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.min >= lo && self.max <= hi
    }
}

/// Constants for the four pointwise estimates on `A_Q x Q_+ x I(x_1)`,
/// obtained from `|r - x_1/xi| < eta^2/4` (which follows from
/// `xi - x_1 > 4/xi`) and `r > 1/2`:
///
/// * `1 - r^2 ∈ (9/8, 5/2) eta^2`;
/// * `|r y_1 - x_1|, |r y_2 - x_2| <= eta` and `|r y_k - x_k| <= 3 eta / 2`,
///   so `e^{-|phi|^2} >= exp(-(8/9)(2 + 9(d-2)/4))`;
/// * `tau / (y_2/eta) ∈ (2/5, 32/9)` and `tau < 16/9`, hence
///   `(1 - e^{-tau}) / (y_2/eta) ∈ ((2/5)(9/16)(1 - e^{-16/9}), 32/9)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordedRanges {
    pub dis1: (f64, f64),
    pub dis2_min: f64,
    pub dis3_min: f64,
    pub dis4: (f64, f64),
    pub tau_max: f64,
}

impl RecordedRanges {
    pub fn for_dim(d: usize) -> Self {
        let tau_max: f64 = 16.0 / 9.0;
        Self {
            dis1: (9.0 / 8.0, 2.5),
            dis2_min: 0.5,
            dis3_min: (-(8.0 / 9.0) * (2.0 + 2.25 * (d as f64 - 2.0))).exp(),
            dis4: (0.4 * (-(-tau_max).exp_m1()) / tau_max, 32.0 / 9.0),
            tau_max,
        }
    }
}

/// Sampled check of the pointwise estimates behind the lower bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseReport {
    pub xi: f64,
    pub dim: usize,
    pub samples: usize,
    pub seed: u64,
    /// `(1 - r^2) / eta^2`.
    pub dis1: RatioRange,
    /// `(y_1 - r x_1) / (xi - x_1)`.
    pub dis2: RatioRange,
    /// `e^{-|phi|^2}`.
    pub dis3: RatioRange,
    /// `(1 - e^{-tau}) / (y_2 / eta)`.
    pub dis4: RatioRange,
    pub tau: RatioRange,
    /// Samples with `(y_1 - r x_1)/(xi - x_1) < 1/2`.
    pub dis2_violations: usize,
    /// Samples with `tau >= 1`.
    pub tau_violations: usize,
    pub recorded: RecordedRanges,
}

impl PointwiseReport {
    /// Every ratio positive and finite.
    pub fn positive_and_finite(&self) -> bool {
        [self.dis1, self.dis2, self.dis3, self.dis4, self.tau]
            .iter()
            .all(|r| r.min > 0.0 && r.max.is_finite())
    }

    /// Ratios inside the analytic constants of [`RecordedRanges`].
    pub fn within_recorded(&self) -> bool {
        let c = &self.recorded;
        self.dis1.within(c.dis1.0, c.dis1.1)
            && self.dis2.min >= c.dis2_min
            && self.dis3.min >= c.dis3_min
            && self.dis4.within(c.dis4.0, c.dis4.1)
            && self.tau.max < c.tau_max
    }
}

/// Draws `x ∈ A_Q`, `y ∈ Q_+`, `r ∈ I(x_1)` uniformly (coordinate by
/// coordinate) and records the four ratios and `tau`.
pub fn verify_pointwise_bounds(geom: &CounterexampleGeometry, samples: usize, seed: u64) -> PointwiseReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = geom.x1_range();
    let h = 1.0 / geom.xi;
    let mut rep = PointwiseReport {
        xi: geom.xi,
        dim: geom.dim,
        samples,
        seed,
        dis1: RatioRange::empty(),
        dis2: RatioRange::empty(),
        dis3: RatioRange::empty(),
        dis4: RatioRange::empty(),
        tau: RatioRange::empty(),
        dis2_violations: 0,
        tau_violations: 0,
        recorded: RecordedRanges::for_dim(geom.dim),
    };
    for _ in 0..samples {
        let x1 = rng.gen_range(lo..hi);
        let eta = geom.eta(x1);
        let mut x = vec![x1, rng.gen_range(0.5 * eta..=eta)];
        let mut y = vec![rng.gen_range(geom.xi - h..=geom.xi + h), rng.gen_range(0.0..=h)];
        for _ in 2..geom.dim {
            x.push(rng.gen_range(-eta..=eta));
            y.push(rng.gen_range(-h..=h));
        }
        let (r_lo, r_hi) = geom.r_interval(x1);
        let r = rng.gen_range(r_lo..r_hi);
        let c = (1.0 - r) * (1.0 + r);
        let phi2: f64 = x.iter().zip(&y).map(|(a, b)| (r * b - a).powi(2)).sum::<f64>() / c;
        let tau = CounterexampleGeometry::tau(r, x[1], y[1]);
        let d2 = (y[0] - r * x1) / (geom.xi - x1);
        rep.dis1.push(c / (eta * eta));
        rep.dis2.push(d2);
        rep.dis3.push((-phi2).exp());
        rep.dis4.push(-(-tau).exp_m1() / (y[1] / eta));
        rep.tau.push(tau);
        if d2 < 0.5 {
            rep.dis2_violations += 1;
        }
        if tau >= 1.0 {
            rep.tau_violations += 1;
        }
    }
    rep
}

/// Explicit constant in `|grad_y (phi_i e^{-|phi|^2})| <= C r (1-r^2)^{-1/2} e^{-|phi|^2/2}`:
/// `max_u (1 + 2u) e^{-u/2} = 4 e^{-3/4}`.
pub const S_STAR_MAJORANT_CONSTANT: f64 = 1.889_466_210_964_058_8;

/// The H^1 Hörmander functional for `S_1^*` in Lebesgue form, and its
/// majorant split at `r_0 = 1 - r_B^2/4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SStarH1Report {
    /// `r_B sup_y int_{(2B)^c} |grad_y int [...] d rho| d lambda(x)`.
    pub functional: f64,
    /// `C r_B sup_y int_{(2B)^c} int_0^1 r e^{-|phi|^2/2} (1-r^2)^{-(d+2)/2} d rho d lambda(x)`.
    pub majorant: f64,
    /// Part of the majorant from `r_0 < r < 1` (at the maximising `y`).
    pub majorant_near: f64,
    /// Part of the majorant from `0 < r < r_0` (at the maximising `y`).
    pub majorant_far: f64,
    pub r0: f64,
}

/// Evaluates the H^1 condition for `S_1^*` and its majorant on one ball.
pub fn s_star_h1_functional(
    ball: &AdmissibleRegion,
    sampling: &HormanderSampling,
    spec: &QuadratureSpec,
) -> Result<SStarH1Report> {
    let h1 = hormander_h1(KernelKind::SStar, 1, ball, sampling, spec)?;
    // hormander_h1 integrates against d gamma(x) the gradient of
    // -(2/sqrt(pi)) int [...] d rho; undo both factors
    let d = ball.dim() as f64;
    let functional = h1 * PI.powf(0.5 * d) * 0.5 * PI.sqrt();
    let r_b = ball.size();
    let r0 = 1.0 - r_b * r_b / 4.0;
    let s0 = (-r0.ln()).sqrt();
    let nodes = annulus_nodes(ball, sampling)?;
    let mut best = (0.0, 0.0, 0.0);
    for y in probe_points(ball) {
        let y = y.coords().to_vec();
        let y2: f64 = y.iter().map(|t| t * t).sum();
        let parts = nodes
            .par_iter()
            .map(|(x, w)| {
                let mut cuts = vec![s0];
                if y2 > 0.0 {
                    let rs = x.coords().iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / y2;
                    let width = 1.0 / (1.0 + y2.sqrt());
                    for k in [0.0, 1.0, -1.0, 4.0, -4.0] {
                        if let Some(s) = s_of(rs + k * width * 0.25) {
                            cuts.push(s);
                        }
                    }
                }
                let (v, _) = rho_integrate_vec_with_cuts(
                    2,
                    |p: RhoPoint, out: &mut [f64]| {
                        let c = p.one_minus_r2;
                        let phi2: f64 =
                            x.coords().iter().zip(&y).map(|(a, b)| (p.r * b - a).powi(2)).sum::<f64>() / c;
                        let v = p.r * (-0.5 * phi2 - 0.5 * (d + 2.0) * c.ln()).exp();
                        let near = p.r > r0;
                        out[0] = if near { v } else { 0.0 };
                        out[1] = if near { 0.0 } else { v };
                    },
                    &cuts,
                    spec,
                )?;
                Ok((w * v[0], w * v[1]))
            })
            .collect::<Result<Vec<(f64, f64)>>>()?;
        let near: f64 = parts.iter().map(|p| p.0).sum();
        let far: f64 = parts.iter().map(|p| p.1).sum();
        if near + far > best.0 + best.1 {
            best = (near, far, 0.0);
        }
    }
    let c = S_STAR_MAJORANT_CONSTANT * r_b;
    Ok(SStarH1Report {
        functional,
        majorant: c * (best.0 + best.1),
        majorant_near: c * best.0,
        majorant_far: c * best.1,
        r0,
    })
}

/// Which endpoint a verdict is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "H1->L1")]
    H1ToL1,
    #[serde(rename = "Linf->BMO")]
    LinfToBmo,
}

impl Direction {
    /// The direction the adjoint inherits.
    pub fn dual(self) -> Self {
        match self {
            Direction::H1ToL1 => Direction::LinfToBmo,
            Direction::LinfToBmo => Direction::H1ToL1,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::H1ToL1 => "H1->L1",
            Direction::LinfToBmo => "Linf->BMO",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Class {
    #[serde(rename = "B")]
    Bounded,
    #[serde(rename = "U")]
    LogGrowth,
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Class::Bounded => "B",
            Class::LogGrowth => "U",
        })
    }
}

/// Functional values along a ladder in `xi`, with the least-squares fit of
/// value against `log xi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthSeries {
    pub op: RieszFamily,
    pub dim: usize,
    pub direction: Direction,
    pub xi: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; zero for a constant series.
    pub r2: f64,
}

impl GrowthSeries {
    pub fn new(op: RieszFamily, dim: usize, direction: Direction, xi: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xi.len() != values.len() {
            return Err(Error::DegenerateLadder(format!(
                "{} ladder points but {} values",
                xi.len(),
                values.len()
            )));
        }
        if xi.len() < 3 {
            return Err(Error::DegenerateLadder(format!("need at least 3 points, got {}", xi.len())));
        }
        if xi.windows(2).any(|w| !(w[1] > w[0])) || xi[0] <= 0.0 {
            return Err(Error::DegenerateLadder("ladder must be positive and increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateLadder("non-finite functional value".into()));
        }
        let t: Vec<f64> = xi.iter().map(|x| x.ln()).collect();
        let n = t.len() as f64;
        let tm = t.iter().sum::<f64>() / n;
        let vm = values.iter().sum::<f64>() / n;
        let stt: f64 = t.iter().map(|a| (a - tm).powi(2)).sum();
        let stv: f64 = t.iter().zip(&values).map(|(a, b)| (a - tm) * (b - vm)).sum();
        let svv: f64 = values.iter().map(|b| (b - vm).powi(2)).sum();
        let slope = stv / stt;
        let r2 = if svv > 0.0 { (stv * stv / (stt * svv)).min(1.0) } else { 0.0 };
        Ok(Self {
            op,
            dim,
            direction,
            xi,
            values,
            slope,
            intercept: vm - slope * tm,
            r2,
        })
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `0.1 * mean / log 2`: a tenth of the mean per doubling of `xi`.
    pub fn default_threshold(&self) -> f64 {
        0.1 * self.mean().abs() / std::f64::consts::LN_2
    }

    pub fn strictly_increasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] > w[0])
    }
}

/// One cell of the endpoint table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub op: RieszFamily,
    pub dim: usize,
    pub direction: Direction,
    pub class: Class,
    pub slope: f64,
    pub r2: f64,
}

/// Log growth when the slope exceeds `threshold` and `r^2 > 0.9`.
pub fn classify_growth(series: &GrowthSeries, slope_threshold: f64) -> Verdict {
    let class = if series.slope > slope_threshold && series.r2 > 0.9 {
        Class::LogGrowth
    } else {
        Class::Bounded
    };
    Verdict {
        op: series.op,
        dim: series.dim,
        direction: series.direction,
        class,
        slope: series.slope,
        r2: series.r2,
    }
}

/// The 2 x 4 table for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictTable {
    pub dim: usize,
    /// Order: R, S, R*, S* for H1->L1, then the same for Linf->BMO.
    pub cells: Vec<Verdict>,
    /// Largest `|<T f, g> - <f, T^* g>|` over the random unit pairs used as
    /// evidence for the adjoint pairings.
    pub duality_residual: f64,
}

pub const TABLE_ORDER: [RieszFamily; 4] = [RieszFamily::R, RieszFamily::S, RieszFamily::RStar, RieszFamily::SStar];

impl VerdictTable {
    pub fn cell(&self, op: RieszFamily, direction: Direction) -> Option<&Verdict> {
        self.cells.iter().find(|v| v.op == op && v.direction == direction)
    }

    pub fn row(&self, direction: Direction) -> Vec<Class> {
        TABLE_ORDER
            .iter()
            .filter_map(|&op| self.cell(op, direction).map(|v| v.class))
            .collect()
    }

    /// Rows as `"U U B B"`.
    pub fn row_string(&self, direction: Direction) -> String {
        self.row(direction).iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
    }
}

/// Completes the table from the computed `R` and `S^*` verdicts: the
/// H^1 -> L^1 verdict of `T` is the L^inf -> BMO verdict of `T^*` and vice
/// versa. Transferred cells carry the slope and `r^2` of their source.
pub fn duality_transfer_table(d: usize, computed: &[Verdict]) -> Result<VerdictTable> {
    let mut cells = Vec::new();
    for direction in [Direction::H1ToL1, Direction::LinfToBmo] {
        for op in TABLE_ORDER {
            let source = if matches!(op, RieszFamily::R | RieszFamily::SStar) {
                (op, direction)
            } else {
                (op.adjoint(), direction.dual())
            };
            let v = computed
                .iter()
                .find(|v| v.dim == d && v.op == source.0 && v.direction == source.1)
                .ok_or_else(|| {
                    Error::MissingVerdict(format!("{} {} in d = {d}", source.0, source.1))
                })?;
            cells.push(Verdict {
                op,
                direction,
                ..*v
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
    let mut worst = 0.0f64;
    for fam in [RieszFamily::R, RieszFamily::SStar] {
        for _ in 0..10 {
            let f = random_expansion(&mut rng, d, 8, false);
            let g = random_expansion(&mut rng, d, 8, false);
            let (nf, ng) = (f.norm_gamma(), g.norm_gamma());
            let (f, g) = (f.scale(1.0 / nf), g.scale(1.0 / ng));
            worst = worst.max(duality_residual(RieszKind::new(fam, 1), &f, &g)?);
        }
    }
    Ok(VerdictTable {
        dim: d,
        cells,
        duality_residual: worst,
    })
}

/// Ladders for the four computed cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderSettings {
    /// `xi` values for the `R` H^1 and `S^*` BMO ladders.
    pub xi: Vec<f64>,
    /// `xi` values (maximal balls) for the Hörmander ladders.
    pub hormander_xi: Vec<f64>,
    pub rule: CounterexampleRule,
    pub sampling: HormanderSampling,
    pub spec: QuadratureSpec,
}

impl LadderSettings {
    /// The default ladder `xi ∈ {8, 16, 32, 64}` for every cell.
    pub fn for_dim(_d: usize) -> Self {
        let xi = vec![8.0, 16.0, 32.0, 64.0];
        Self {
            hormander_xi: xi.clone(),
            xi,
            rule: CounterexampleRule::default(),
            sampling: HormanderSampling::default(),
            spec: QuadratureSpec::with_tolerances(1e-13, 1e-8),
        }
    }
}

fn maximal_ball(xi: f64, d: usize) -> AdmissibleRegion {
    let mut c = vec![0.0; d];
    c[0] = xi;
    AdmissibleRegion::maximal_ball(Point(c))
}

/// Functional value behind one computed cell at one ladder point.
pub fn ladder_value(op: RieszFamily, direction: Direction, d: usize, xi: f64, s: &LadderSettings) -> Result<f64> {
    use Direction::*;
    use RieszFamily::*;
    match (op, direction) {
        (R, H1ToL1) if d == 1 => l1_norm_riesz_on_atom(KernelKind::R, &AtomSetting::Interval { xi }, &s.rule, &s.spec),
        (R, H1ToL1) => Ok(lower_bound_functional_r1(&CounterexampleGeometry::new(xi, d)?, &s.rule)?.value),
        (SStar, LinfToBmo) if d == 1 => hormander_bmo(KernelKind::SStar, 1, &maximal_ball(xi, 1), &s.sampling, &s.spec),
        (SStar, LinfToBmo) => Ok(bmo_divergence_s_star(&CounterexampleGeometry::new(xi, d)?, &s.rule, &s.spec)?.value),
        (R, LinfToBmo) => hormander_bmo(KernelKind::R, 1, &maximal_ball(xi, d), &s.sampling, &s.spec),
        (SStar, H1ToL1) => hormander_h1(KernelKind::SStar, 1, &maximal_ball(xi, d), &s.sampling, &s.spec),
        _ => Err(Error::InvalidArgument(format!("{op} is filled in by duality"))),
    }
}

/// Runs the ladder for one computed cell.
pub fn run_ladder(op: RieszFamily, direction: Direction, d: usize, s: &LadderSettings) -> Result<GrowthSeries> {
    let counterexample = matches!(
        (op, direction),
        (RieszFamily::R, Direction::H1ToL1) | (RieszFamily::SStar, Direction::LinfToBmo)
    );
    let xi = if counterexample { &s.xi } else { &s.hormander_xi };
    let values = xi
        .iter()
        .map(|&x| ladder_value(op, direction, d, x, s))
        .collect::<Result<Vec<f64>>>()?;
    GrowthSeries::new(op, d, direction, xi.clone(), values)
}

/// The cells computed directly; the other four follow by duality.
pub const COMPUTED_CELLS: [(RieszFamily, Direction); 4] = [
    (RieszFamily::R, Direction::H1ToL1),
    (RieszFamily::SStar, Direction::LinfToBmo),
    (RieszFamily::R, Direction::LinfToBmo),
    (RieszFamily::SStar, Direction::H1ToL1),
];
