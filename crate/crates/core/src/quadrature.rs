//! Quadrature primitives: Gauss–Legendre rules, a globally adaptive
//! Gauss–Kronrod integrator for vector-valued integrands, integration against
//! the measure `dr / (r sqrt(-log r))` on (0, 1), and tensor grids.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the `n`-point rule by Newton iteration on the Legendre
    /// three-term recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..(n + 1) / 2 {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, z);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Shared 20-point rule.
    pub fn twenty() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(20))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(t, w)| (mid + half * t, w * half))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// One-dimensional composite rule on `[a, b]`: the interval is cut at the
/// given interior breakpoints, every piece is split into `panels` equal
/// panels, and `rule` is applied on each.
pub fn composite_rule(
    a: f64,
    b: f64,
    breaks: &[f64],
    panels: usize,
    rule: &GaussLegendre,
) -> Vec<(f64, f64)> {
    let mut cuts = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&t| t > a && t < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    cuts.extend(inner);
    cuts.push(b);
    let panels = panels.max(1);
    let mut out = Vec::with_capacity((cuts.len() - 1) * panels * rule.len());
    for w in cuts.windows(2) {
        let h = (w[1] - w[0]) / panels as f64;
        for p in 0..panels {
            let lo = w[0] + p as f64 * h;
            let hi = if p + 1 == panels { w[1] } else { lo + h };
            out.extend(rule.on(lo, hi));
        }
    }
    out
}

/// Composite rule on `[a, b]` with panels refined geometrically (ratio 1/2)
/// toward the endpoint `toward`, down to a smallest panel of width
/// `min_width`.
pub fn graded_rule(
    a: f64,
    b: f64,
    toward_left: bool,
    min_width: f64,
    rule: &GaussLegendre,
) -> Vec<(f64, f64)> {
    let len = b - a;
    if len <= 0.0 {
        return Vec::new();
    }
    let mut widths = Vec::new();
    let mut w = len;
    while w > min_width.max(len * 1e-14) {
        w *= 0.5;
        widths.push(w);
    }
    // distances from the graded endpoint: 0, w_k, ..., len/2, len
    let mut dist: Vec<f64> = widths.iter().rev().copied().collect();
    dist.insert(0, 0.0);
    dist.push(len);
    let mut out = Vec::with_capacity(dist.len() * rule.len());
    for pair in dist.windows(2) {
        let (lo, hi) = if toward_left {
            (a + pair[0], a + pair[1])
        } else {
            (b - pair[1], b - pair[0])
        };
        out.extend(rule.on(lo, hi));
    }
    out
}

/// Tensor product of one-dimensional rules, flattened row-major.
#[derive(Debug, Clone, Default)]
pub struct TensorGrid {
    pub dim: usize,
    /// `points.len() == dim * weights.len()`
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TensorGrid {
    pub fn product(axes: &[Vec<(f64, f64)>]) -> Self {
        let dim = axes.len();
        let total: usize = axes.iter().map(Vec::len).product();
        let mut points = Vec::with_capacity(total * dim);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        if total == 0 {
            return Self {
                dim,
                points,
                weights,
            };
        }
        loop {
            let mut w = 1.0;
            for (k, &i) in idx.iter().enumerate() {
                points.push(axes[k][i].0);
                w *= axes[k][i].1;
            }
            weights.push(w);
            // odometer
            let mut k = dim;
            loop {
                if k == 0 {
                    return Self {
                        dim,
                        points,
                        weights,
                    };
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points
            .chunks_exact(self.dim.max(1))
            .zip(self.weights.iter().copied())
    }
}

/// Change of variables used for integrals against the measure rho.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Substitution {
    /// `s = sqrt(-log r)`, which turns `d rho` into `2 ds` on (0, inf).
    SqrtNegLog,
}

/// Tolerances for adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    pub substitution: Substitution,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-14,
            rel_tol: 1e-10,
            max_subdivisions: 4000,
            substitution: Substitution::SqrtNegLog,
        }
    }
}

impl QuadratureSpec {
    pub fn with_tolerances(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "quadrature tolerances must be positive".into(),
            ));
        }
        if self.max_subdivisions < 1 {
            return Err(Error::InvalidArgument(
                "max_subdivisions must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A quadrature result with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub value: f64,
    pub error: f64,
}

impl KernelValue {
    pub fn scaled(self, c: f64) -> Self {
        Self {
            value: self.value * c,
            error: self.error * c.abs(),
        }
    }
}

// 15-point Kronrod rule with embedded 7-point Gauss rule (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn rescale_error(err: f64, resabs: f64, resasc: f64) -> f64 {
    let mut e = err.abs();
    if resasc != 0.0 && e != 0.0 {
        let scale = (200.0 * e / resasc).powf(1.5);
        e = if scale < 1.0 { resasc * scale } else { resasc };
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        e = e.max(50.0 * f64::EPSILON * resabs);
    }
    e
}

fn gk15<F: FnMut(f64, &mut [f64])>(f: &mut F, a: f64, b: f64, m: usize, buf: &mut [f64]) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    // buf holds 15 * m values: node j at buf[j*m..]
    for j in 0..15 {
        let x = if j < 7 {
            center - half * XGK[j]
        } else if j == 7 {
            center
        } else {
            center + half * XGK[14 - j]
        };
        f(x, &mut buf[j * m..(j + 1) * m]);
    }
    let mut value = vec![0.0; m];
    let mut error = 0.0f64;
    for c in 0..m {
        let fv = |j: usize| buf[j * m + c];
        let mut kron = WGK[7] * fv(7);
        let mut gauss = WG[3] * fv(7);
        let mut resabs = WGK[7] * fv(7).abs();
        for k in 0..7 {
            let s = fv(k) + fv(14 - k);
            kron += WGK[k] * s;
            resabs += WGK[k] * (fv(k).abs() + fv(14 - k).abs());
            if k % 2 == 1 {
                gauss += WG[k / 2] * s;
            }
        }
        let mean = 0.5 * kron;
        let mut resasc = WGK[7] * (fv(7) - mean).abs();
        for k in 0..7 {
            resasc += WGK[k] * ((fv(k) - mean).abs() + (fv(14 - k) - mean).abs());
        }
        let hl = half.abs();
        let e = rescale_error((kron - gauss) * half, resabs * hl, resasc * hl);
        value[c] = kron * half;
        error = error.max(e);
    }
    if !error.is_finite() || value.iter().any(|v| !v.is_finite()) {
        error = f64::INFINITY;
    }
    Panel { a, b, value, error }
}

/// Globally adaptive Gauss–Kronrod integration of an `m`-component
/// integrand over the partition given by `cuts` (strictly increasing).
///
/// The error estimate is the max-norm over components of the rescaled
/// Kronrod–Gauss differences summed over panels. The reduction is an
/// ordered sum over panels sorted by position, so results are reproducible.
pub fn integrate_adaptive<F>(
    mut f: F,
    cuts: &[f64],
    m: usize,
    spec: &QuadratureSpec,
) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(f64, &mut [f64]),
{
    let mut buf = vec![0.0; 15 * m];
    let mut heap = BinaryHeap::new();
    let mut finished: Vec<Panel> = Vec::new();
    let mut total = vec![0.0; m];
    let mut total_err = 0.0;
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            let p = gk15(&mut f, w[0], w[1], m, &mut buf);
            for (t, v) in total.iter_mut().zip(&p.value) {
                *t += v;
            }
            total_err += p.error;
            heap.push(p);
        }
    }
    let mut subdivisions = 0usize;
    loop {
        let scale = total.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let tol = spec.abs_tol.max(spec.rel_tol * scale);
        if total_err <= tol {
            break;
        }
        let worst = match heap.pop() {
            Some(p) => p,
            None => break,
        };
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) || (worst.b - worst.a) < 1e-15 * worst.a.abs().max(1e-300)
        {
            // cannot split further; its error stays in the budget
            finished.push(worst);
            if heap.is_empty() {
                break;
            }
            continue;
        }
        if subdivisions >= spec.max_subdivisions {
            heap.push(worst);
            let (value, _) = collect(heap, finished);
            return Err(Error::NonConvergence {
                partial: value.first().copied().unwrap_or(0.0),
                error: total_err,
                subdivisions,
            });
        }
        subdivisions += 1;
        let left = gk15(&mut f, worst.a, mid, m, &mut buf);
        let right = gk15(&mut f, mid, worst.b, m, &mut buf);
        for c in 0..m {
            total[c] += left.value[c] + right.value[c] - worst.value[c];
        }
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        // periodic resync keeps the running sums honest
        if subdivisions % 64 == 0 {
            total_err = heap.iter().chain(finished.iter()).map(|p| p.error).sum();
        }
    }
    Ok(collect(heap, finished))
}

fn collect(heap: BinaryHeap<Panel>, finished: Vec<Panel>) -> (Vec<f64>, f64) {
    let mut panels: Vec<Panel> = heap.into_vec();
    panels.extend(finished);
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let m = panels.first().map_or(0, |p| p.value.len());
    let mut value = vec![0.0; m];
    let mut err = 0.0;
    for p in &panels {
        for (v, pv) in value.iter_mut().zip(&p.value) {
            *v += pv;
        }
        err += p.error;
    }
    (value, err)
}

/// Scalar convenience wrapper over [`integrate_adaptive`].
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
) -> Result<KernelValue> {
    let (v, e) = integrate_adaptive(|x, out| out[0] = f(x), &[a, b], 1, spec)?;
    Ok(KernelValue {
        value: v[0],
        error: e,
    })
}

/// A point of (0, 1) together with accurately computed complements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoPoint {
    pub r: f64,
    /// `1 - r^2`, computed without cancellation near r = 1.
    pub one_minus_r2: f64,
    /// `s = sqrt(-log r)`.
    pub s: f64,
}

impl RhoPoint {
    pub fn from_s(s: f64) -> Self {
        let s2 = s * s;
        Self {
            r: (-s2).exp(),
            one_minus_r2: -(-2.0 * s2).exp_m1(),
            s,
        }
    }

    pub fn from_r(r: f64) -> Self {
        let s = (-r.ln()).max(0.0).sqrt();
        Self::from_s(s)
    }
}

/// Beyond this `s`, `r = exp(-s^2)` is below 1e-300.
pub const S_MAX: f64 = 26.28;

fn s_of_r(r: f64) -> f64 {
    if r <= 0.0 {
        S_MAX
    } else if r >= 1.0 {
        0.0
    } else {
        (-r.ln()).sqrt().min(S_MAX)
    }
}

/// Cut points in `s` for `[s_lo, s_hi]`: dyadic grading toward `s = 0`.
fn graded_cuts(s_lo: f64, s_hi: f64) -> Vec<f64> {
    let mut cuts = vec![s_lo];
    for k in -30..=4 {
        let t = 2f64.powi(k);
        if t > s_lo && t < s_hi {
            cuts.push(t);
        }
    }
    cuts.push(s_hi);
    cuts
}

/// `int_{r_lo}^{r_hi} g(r) d rho(r)` for an `m`-component integrand, where
/// `d rho(r) = dr / (r sqrt(-log r))`.
pub fn rho_integrate_range_vec<G>(
    m: usize,
    mut g: G,
    r_lo: f64,
    r_hi: f64,
    spec: &QuadratureSpec,
) -> Result<(Vec<f64>, f64)>
where
    G: FnMut(RhoPoint, &mut [f64]),
{
    spec.validate()?;
    let s_lo = s_of_r(r_hi);
    let s_hi = s_of_r(r_lo);
    if !(s_hi > s_lo) {
        return Ok((vec![0.0; m], 0.0));
    }
    let cuts = graded_cuts(s_lo, s_hi);
    let (mut v, e) = integrate_adaptive(
        |s, out| {
            g(RhoPoint::from_s(s), out);
        },
        &cuts,
        m,
        spec,
    )?;
    for x in v.iter_mut() {
        *x *= 2.0;
    }
    Ok((v, 2.0 * e))
}

/// Like [`rho_integrate_range_vec`] over `(0, 1)`, with extra cut points in
/// the `s` variable (used to pin down narrow interior peaks).
pub fn rho_integrate_vec_with_cuts<G>(
    m: usize,
    mut g: G,
    extra_s: &[f64],
    spec: &QuadratureSpec,
) -> Result<(Vec<f64>, f64)>
where
    G: FnMut(RhoPoint, &mut [f64]),
{
    spec.validate()?;
    let mut cuts = graded_cuts(0.0, S_MAX);
    cuts.extend(extra_s.iter().copied().filter(|&t| t > 0.0 && t < S_MAX));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let (mut v, e) = integrate_adaptive(|s, out| g(RhoPoint::from_s(s), out), &cuts, m, spec)?;
    for x in v.iter_mut() {
        *x *= 2.0;
    }
    Ok((v, 2.0 * e))
}

/// `int_0^1 g(r) d rho(r)` for an `m`-component integrand.
pub fn rho_integrate_vec<G>(m: usize, g: G, spec: &QuadratureSpec) -> Result<(Vec<f64>, f64)>
where
    G: FnMut(RhoPoint, &mut [f64]),
{
    rho_integrate_range_vec(m, g, 0.0, 1.0, spec)
}

/// `int_0^1 g d rho` for a scalar integrand.
///
/// Uses `s = sqrt(-log r)`, so the integral becomes `2 int_0^inf g(exp(-s^2)) ds`,
/// with panels graded geometrically toward `s = 0` (that is, `r -> 1`) and
/// the tail cut where `exp(-s^2) < 1e-300`.
pub fn rho_integrate<G: FnMut(RhoPoint) -> f64>(mut g: G, spec: &QuadratureSpec) -> Result<KernelValue> {
    let (v, e) = rho_integrate_vec(1, |p, out| out[0] = g(p), spec)?;
    Ok(KernelValue {
        value: v[0],
        error: e,
    })
}
