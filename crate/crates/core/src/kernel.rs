//! Integral kernels of `M(L)`, `R_i` and `S_i^*` with respect to the
//! Gaussian measure, their gradients, and kernel-based operator application.
//!
//! Every kernel is an integral over `r in (0, 1)` against
//! `d rho = dr / (r sqrt(-log r))`. Writing `c = 1 - r^2`, `q = sqrt(c)`,
//!
//! ```text
//! phi = (r y - x) / q,   psi = (r x - y) / q,
//! E0  = |x|^2 - |phi|^2 = |y|^2 - |psi|^2 = r ((1 - r)(|x|^2 + |y|^2) - |x - y|^2) / c,
//!
//! k_M(x, y)    = pi^{-1/2}  int [c^{-d/2} e^{E0} - 1] d rho
//! k_R_i(x, y)  = -2 pi^{-1/2} int r psi_i c^{-(d+1)/2} e^{E0} d rho
//! k_S*_i(x, y) = -2 pi^{-1/2} int [phi_i c^{-(d+1)/2} e^{E0} + x_i] d rho
//! ```
//!
//! Far from the origin `e^{E0}` is astronomically large or small, so all
//! evaluations go through a [`KernelWeight`]: the returned quantity is
//! `k(x, y) exp(-a|x|^2 - b|y|^2 + shift)` with the exponent assembled before
//! exponentiation.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::Point;
use crate::quadrature::{
    composite_rule, rho_integrate, rho_integrate_vec_with_cuts, GaussLegendre, KernelValue,
    QuadratureSpec, RhoPoint, TensorGrid,
};
use crate::special::{gauss_box, gauss_interval, FRAC_1_SQRT_PI};

/// Relative size of the near-diagonal guard for `R` and `S*` kernels.
pub const NEAR_DIAGONAL_GUARD: f64 = 1e-6;

/// Above this the fused bracket `e^{-w} expm1(D)` is evaluated as a plain difference.
const FUSED_SWITCH: f64 = 30.0;

/// Which kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    /// `M(L)`; the coordinate argument is ignored.
    M,
    R,
    SStar,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::M => "M(L)",
            KernelKind::R => "R",
            KernelKind::SStar => "S*",
        })
    }
}

/// Variable a gradient is taken in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variable {
    X,
    Y,
}

/// Multiplies a kernel by `exp(-[x]|x|^2 - [y]|y|^2 + shift)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KernelWeight {
    pub x: bool,
    pub y: bool,
    pub shift: f64,
}

impl KernelWeight {
    pub const NONE: KernelWeight = KernelWeight {
        x: false,
        y: false,
        shift: 0.0,
    };

    /// `e^{-|x|^2}`: the natural weight when integrating in `x` against `gamma`.
    pub fn x() -> Self {
        Self { x: true, ..Self::NONE }
    }

    /// `e^{-|y|^2}`: the natural weight when integrating in `y` against `gamma`.
    pub fn y() -> Self {
        Self { y: true, ..Self::NONE }
    }

    pub fn both() -> Self {
        Self {
            x: true,
            y: true,
            shift: 0.0,
        }
    }

    pub fn with_shift(self, shift: f64) -> Self {
        Self { shift, ..self }
    }

    /// `exp(-[x]|x|^2 - [y]|y|^2 + shift)`, possibly under/overflowing.
    pub fn factor(&self, x: &[f64], y: &[f64]) -> f64 {
        (-self.exponent(x, y)).exp()
    }

    fn exponent(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut w = -self.shift;
        if self.x {
            w += norm_sq(x);
        }
        if self.y {
            w += norm_sq(y);
        }
        w
    }
}

/// The kernel variables at a fixed `(r, x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiPsi {
    pub r: f64,
    pub x: Point,
    pub y: Point,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl PhiPsi {
    pub fn new(r: f64, x: &Point, y: &Point) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::InvalidArgument(format!("r = {r} is not in (0, 1)")));
        }
        check_same_dim(x, y)?;
        Ok(Self::from_rho(RhoPoint::from_r(r), x, y))
    }

    fn from_rho(p: RhoPoint, x: &Point, y: &Point) -> Self {
        let q = p.one_minus_r2.sqrt();
        let phi = x.coords().iter().zip(y.coords()).map(|(a, b)| (p.r * b - a) / q).collect();
        let psi = x.coords().iter().zip(y.coords()).map(|(a, b)| (p.r * a - b) / q).collect();
        Self {
            r: p.r,
            x: x.clone(),
            y: y.clone(),
            phi,
            psi,
        }
    }

    pub fn phi_norm_sq(&self) -> f64 {
        norm_sq(&self.phi)
    }

    pub fn psi_norm_sq(&self) -> f64 {
        norm_sq(&self.psi)
    }

    /// `|x|^2 - |phi|^2`, without cancellation.
    pub fn exponent(&self) -> f64 {
        let p = RhoPoint::from_r(self.r);
        let g = Geometry::new(self.x.coords(), self.y.coords());
        g.e0(p.r, one_minus_r(p.s), p.one_minus_r2)
    }
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|t| t * t).sum()
}

fn one_minus_r(s: f64) -> f64 {
    -(-s * s).exp_m1()
}

fn check_same_dim(x: &Point, y: &Point) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    if x.dim() == 0 {
        return Err(Error::InvalidArgument("points must have dimension >= 1".into()));
    }
    Ok(())
}

fn check_coordinate(kind: KernelKind, i: usize, d: usize) -> Result<()> {
    if kind != KernelKind::M && (i == 0 || i > d) {
        return Err(Error::CoordinateOutOfRange { index: i, dim: d });
    }
    Ok(())
}

fn check_off_diagonal(kind: KernelKind, x: &Point, y: &Point) -> Result<()> {
    let dist = x
        .coords()
        .iter()
        .zip(y.coords())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if dist == 0.0 {
        return Err(Error::SingularInput);
    }
    if kind != KernelKind::M {
        let threshold = NEAR_DIAGONAL_GUARD * (1.0 + x.norm());
        if dist < threshold {
            return Err(Error::NearDiagonal {
                distance: dist,
                threshold,
            });
        }
    }
    Ok(())
}

/// Which algebraic route computes `E0`. Only the dual-form check uses the
/// naive ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ExponentForm {
    Stable,
    /// `|y|^2 - |psi|^2`
    YPsi,
    /// `|x|^2 - |phi|^2`
    XPhi,
}

struct Geometry<'a> {
    x: &'a [f64],
    y: &'a [f64],
    x2: f64,
    y2: f64,
    dist2: f64,
}

impl<'a> Geometry<'a> {
    fn new(x: &'a [f64], y: &'a [f64]) -> Self {
        Self {
            x,
            y,
            x2: norm_sq(x),
            y2: norm_sq(y),
            dist2: x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
        }
    }

    fn d(&self) -> usize {
        self.x.len()
    }

    fn e0(&self, r: f64, omr: f64, c: f64) -> f64 {
        r * (omr * (self.x2 + self.y2) - self.dist2) / c
    }

    /// `s` values where `|phi|` or `|psi|` is smallest, with a few
    /// neighbours at the expected peak width.
    fn peak_cuts(&self) -> Vec<f64> {
        let xy: f64 = self.x.iter().zip(self.y).map(|(a, b)| a * b).sum();
        let width = 1.0 / (1.0 + self.x2.max(self.y2).sqrt());
        let mut cuts = Vec::new();
        for denom in [self.y2, self.x2] {
            if denom > 0.0 {
                let r = xy / denom;
                if r > 0.0 && r < 1.0 {
                    let s = (-r.ln()).sqrt();
                    for k in [-4.0, -1.0, 0.0, 1.0, 4.0] {
                        cuts.push(s + k * width);
                    }
                }
            }
        }
        cuts
    }
}

/// Everything the integrands need at one quadrature node.
struct Node {
    r: f64,
    q: f64,
    ln_c: f64,
    phi: Vec<f64>,
    psi: Vec<f64>,
    e0: f64,
    /// weighted exponent `E0 - w`
    g: f64,
    /// `w = a|x|^2 + b|y|^2 - shift`
    w: f64,
}

impl Node {
    fn new(p: RhoPoint, geo: &Geometry<'_>, wt: &KernelWeight, form: ExponentForm) -> Self {
        let c = p.one_minus_r2;
        let q = c.sqrt();
        let r = p.r;
        let phi: Vec<f64> = geo.x.iter().zip(geo.y).map(|(a, b)| (r * b - a) / q).collect();
        let psi: Vec<f64> = geo.x.iter().zip(geo.y).map(|(a, b)| (r * a - b) / q).collect();
        let w = wt.exponent(geo.x, geo.y);
        let (e0, g) = match form {
            ExponentForm::Stable => {
                let e0 = geo.e0(r, one_minus_r(p.s), c);
                let g = if wt.x {
                    -norm_sq(&phi) - if wt.y { geo.y2 } else { 0.0 } + wt.shift
                } else if wt.y {
                    -norm_sq(&psi) + wt.shift
                } else {
                    e0 + wt.shift
                };
                (e0, g)
            }
            ExponentForm::YPsi => {
                let e0 = geo.y2 - norm_sq(&psi);
                (e0, e0 - w)
            }
            ExponentForm::XPhi => {
                let e0 = geo.x2 - norm_sq(&phi);
                (e0, e0 - w)
            }
        };
        Self {
            r,
            q,
            ln_c: c.ln(),
            phi,
            psi,
            e0,
            g,
            w,
        }
    }

    /// `e^{G} c^{-p}`
    fn amplitude(&self, p: f64) -> f64 {
        (self.g - p * self.ln_c).exp()
    }

    /// `e^{G} c^{-p} - e^{-w}` without cancellation for small `r`.
    fn fused(&self, p: f64) -> f64 {
        let d = self.e0 - p * self.ln_c;
        if d > FUSED_SWITCH {
            self.amplitude(p) - (-self.w).exp()
        } else {
            (-self.w).exp() * d.exp_m1()
        }
    }

    fn d_e0(&self, v: Variable, k: usize) -> f64 {
        match v {
            Variable::X => -2.0 * self.r * self.psi[k] / self.q,
            Variable::Y => -2.0 * self.r * self.phi[k] / self.q,
        }
    }

    fn d_g(&self, v: Variable, k: usize, wt: &KernelWeight) -> f64 {
        match v {
            Variable::X if wt.x => 2.0 * self.phi[k] / self.q,
            Variable::Y if wt.y => 2.0 * self.psi[k] / self.q,
            _ => self.d_e0(v, k),
        }
    }
}

fn weighted_in(v: Variable, wt: &KernelWeight) -> bool {
    match v {
        Variable::X => wt.x,
        Variable::Y => wt.y,
    }
}

/// Integrand of the kernel value (without the outer constant).
fn value_integrand(kind: KernelKind, i: usize, geo: &Geometry<'_>, n: &Node) -> f64 {
    let d = geo.d() as f64;
    match kind {
        KernelKind::M => n.fused(0.5 * d),
        KernelKind::R => n.r * n.psi[i] * n.amplitude(0.5 * (d + 1.0)),
        KernelKind::SStar => {
            let p = 0.5 * (d + 2.0);
            n.r * geo.y[i] * n.amplitude(p) - geo.x[i] * n.fused(p)
        }
    }
}

fn kernel_constant(kind: KernelKind) -> f64 {
    match kind {
        KernelKind::M => FRAC_1_SQRT_PI,
        KernelKind::R | KernelKind::SStar => -2.0 * FRAC_1_SQRT_PI,
    }
}

/// Gradient integrand in variable `v`, written into `out`.
fn gradient_integrand(
    kind: KernelKind,
    i: usize,
    v: Variable,
    geo: &Geometry<'_>,
    n: &Node,
    wt: &KernelWeight,
    out: &mut [f64],
) {
    let d = geo.d() as f64;
    let var = match v {
        Variable::X => geo.x,
        Variable::Y => geo.y,
    };
    let two_wt = if weighted_in(v, wt) { 2.0 } else { 0.0 };
    match kind {
        KernelKind::M => {
            let p = 0.5 * d;
            let a = n.amplitude(p);
            let f = n.fused(p);
            for (k, o) in out.iter_mut().enumerate() {
                *o = a * n.d_e0(v, k) - two_wt * var[k] * f;
            }
        }
        KernelKind::R => {
            let a = n.r * n.amplitude(0.5 * (d + 1.0));
            for (k, o) in out.iter_mut().enumerate() {
                let dpsi = if k == i {
                    match v {
                        Variable::X => n.r / n.q,
                        Variable::Y => -1.0 / n.q,
                    }
                } else {
                    0.0
                };
                *o = a * (dpsi + n.psi[i] * n.d_g(v, k, wt));
            }
        }
        KernelKind::SStar => {
            let p = 0.5 * (d + 2.0);
            let a = n.amplitude(p);
            let f = n.fused(p);
            for (k, o) in out.iter_mut().enumerate() {
                let mut val = n.r * geo.y[i] * a * n.d_g(v, k, wt)
                    - geo.x[i] * (a * n.d_e0(v, k) - two_wt * var[k] * f);
                if k == i {
                    val += match v {
                        Variable::X => -f,
                        Variable::Y => n.r * a,
                    };
                }
                *o = val;
            }
        }
    }
}

fn evaluate(
    kind: KernelKind,
    i: usize,
    x: &Point,
    y: &Point,
    wt: KernelWeight,
    form: ExponentForm,
    spec: &QuadratureSpec,
) -> Result<KernelValue> {
    check_same_dim(x, y)?;
    check_coordinate(kind, i, x.dim())?;
    check_off_diagonal(kind, x, y)?;
    let geo = Geometry::new(x.coords(), y.coords());
    let ii = i.saturating_sub(1);
    let cuts = geo.peak_cuts();
    let (v, e) = rho_integrate_vec_with_cuts(
        1,
        |p, out| {
            let n = Node::new(p, &geo, &wt, form);
            out[0] = value_integrand(kind, ii, &geo, &n);
        },
        &cuts,
        spec,
    )?;
    Ok(KernelValue { value: v[0], error: e }.scaled(kernel_constant(kind)))
}

/// `k(x, y)` multiplied by the weight factor; see [`KernelWeight`].
pub fn kernel_weighted(
    kind: KernelKind,
    i: usize,
    x: &Point,
    y: &Point,
    weight: KernelWeight,
    spec: &QuadratureSpec,
) -> Result<KernelValue> {
    evaluate(kind, i, x, y, weight, ExponentForm::Stable, spec)
}

/// `k(x, y)` for any of the three kinds.
pub fn kernel(kind: KernelKind, i: usize, x: &Point, y: &Point, spec: &QuadratureSpec) -> Result<KernelValue> {
    kernel_weighted(kind, i, x, y, KernelWeight::NONE, spec)
}

/// Kernel of `M(L)` with respect to `gamma`.
pub fn kernel_m(x: &Point, y: &Point, spec: &QuadratureSpec) -> Result<KernelValue> {
    kernel(KernelKind::M, 0, x, y, spec)
}

/// Kernel of `R_i` with respect to `gamma` (`i` 1-based).
pub fn kernel_r(i: usize, x: &Point, y: &Point, spec: &QuadratureSpec) -> Result<KernelValue> {
    kernel(KernelKind::R, i, x, y, spec)
}

/// Kernel of `S_i^*` with respect to `gamma` (`i` 1-based).
pub fn kernel_s_star(i: usize, x: &Point, y: &Point, spec: &QuadratureSpec) -> Result<KernelValue> {
    kernel(KernelKind::SStar, i, x, y, spec)
}

/// The `S_i^*` kernel evaluated twice: once with the exponent formed as
/// `|y|^2 - |psi|^2`, once as `|x|^2 - |phi|^2`.
pub fn kernel_s_star_dual(
    i: usize,
    x: &Point,
    y: &Point,
    spec: &QuadratureSpec,
) -> Result<(KernelValue, KernelValue)> {
    let a = evaluate(KernelKind::SStar, i, x, y, KernelWeight::NONE, ExponentForm::YPsi, spec)?;
    let b = evaluate(KernelKind::SStar, i, x, y, KernelWeight::NONE, ExponentForm::XPhi, spec)?;
    Ok((a, b))
}

/// Weighted gradient of a kernel in `x` or `y`, differentiated analytically
/// under the `rho` integral.
pub fn grad_kernel_weighted(
    kind: KernelKind,
    i: usize,
    which: Variable,
    x: &Point,
    y: &Point,
    weight: KernelWeight,
    spec: &QuadratureSpec,
) -> Result<Vec<KernelValue>> {
    check_same_dim(x, y)?;
    let d = x.dim();
    check_coordinate(kind, i, d)?;
    check_off_diagonal(kind, x, y)?;
    let geo = Geometry::new(x.coords(), y.coords());
    let ii = i.saturating_sub(1);
    let cuts = geo.peak_cuts();
    let (v, e) = rho_integrate_vec_with_cuts(
        d,
        |p, out| {
            let n = Node::new(p, &geo, &weight, ExponentForm::Stable);
            gradient_integrand(kind, ii, which, &geo, &n, &weight, out);
        },
        &cuts,
        spec,
    )?;
    let c = kernel_constant(kind);
    Ok(v
        .into_iter()
        .map(|value| KernelValue { value, error: e }.scaled(c))
        .collect())
}

/// Gradient of `k(x, y)` in `x` or `y`.
pub fn grad_kernel(
    kind: KernelKind,
    i: usize,
    which: Variable,
    x: &Point,
    y: &Point,
    spec: &QuadratureSpec,
) -> Result<Vec<KernelValue>> {
    grad_kernel_weighted(kind, i, which, x, y, KernelWeight::NONE, spec)
}

/// A function given by a closure on an axis-aligned box, zero outside it,
/// scaled by `exp(log_scale)`.
#[derive(Clone)]
pub struct SampledFunction {
    lo: Vec<f64>,
    hi: Vec<f64>,
    breaks: Vec<Vec<f64>>,
    log_scale: f64,
    values: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    panels: usize,
    order: usize,
}

impl fmt::Debug for SampledFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampledFunction")
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("breaks", &self.breaks)
            .field("log_scale", &self.log_scale)
            .field("panels", &self.panels)
            .field("order", &self.order)
            .finish_non_exhaustive()
    }
}

impl SampledFunction {
    pub fn new<F>(lo: Vec<f64>, hi: Vec<f64>, values: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.is_empty() || lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidArgument("support box must be non-empty and finite".into()));
        }
        let d = lo.len();
        Ok(Self {
            lo,
            hi,
            breaks: vec![Vec::new(); d],
            log_scale: 0.0,
            values: Arc::new(values),
            panels: 8,
            order: 8,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(vec![-1.0; dim], vec![1.0; dim], |_| 0.0).expect("unit box is valid")
    }

    /// Interior discontinuities along axis `axis` (1-based).
    pub fn with_breaks(mut self, axis: usize, breaks: Vec<f64>) -> Result<Self> {
        if axis == 0 || axis > self.dim() {
            return Err(Error::CoordinateOutOfRange {
                index: axis,
                dim: self.dim(),
            });
        }
        self.breaks[axis - 1] = breaks;
        Ok(self)
    }

    pub fn with_log_scale(mut self, log_scale: f64) -> Self {
        self.log_scale = log_scale;
        self
    }

    /// Panels per break-free piece of each axis, and Gauss–Legendre order per panel.
    pub fn with_resolution(mut self, panels: usize, order: usize) -> Self {
        self.panels = panels.max(1);
        self.order = order.max(1);
        self
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// Unscaled value at `y` (zero outside the box).
    pub fn raw(&self, y: &[f64]) -> f64 {
        if self.contains(y) {
            (self.values)(y)
        } else {
            0.0
        }
    }

    /// `exp(log_scale) * raw(y)`.
    pub fn eval(&self, y: &[f64]) -> f64 {
        self.log_scale.exp() * self.raw(y)
    }

    /// Whether `y` lies in the closed support box.
    pub fn contains(&self, y: &[f64]) -> bool {
        y.len() == self.dim() && y.iter().zip(self.lo.iter().zip(&self.hi)).all(|(t, (a, b))| *a <= *t && *t <= *b)
    }

    fn grid(&self, extra: Option<&[f64]>) -> TensorGrid {
        let rule = GaussLegendre::new(self.order);
        let axes: Vec<Vec<(f64, f64)>> = (0..self.dim())
            .map(|j| {
                let (lo, hi) = (self.lo[j], self.hi[j]);
                // equal panels on the break-free pieces ...
                let mut cuts: Vec<f64> = vec![lo];
                cuts.extend(self.breaks[j].iter().copied().filter(|&t| t > lo && t < hi));
                cuts.push(hi);
                cuts.sort_by(f64::total_cmp);
                let mut b = Vec::new();
                for w in cuts.windows(2) {
                    let h = (w[1] - w[0]) / self.panels as f64;
                    b.extend((0..=self.panels).map(|k| w[0] + k as f64 * h));
                }
                // ... and single panels graded geometrically toward x
                if let Some(x) = extra {
                    let t = x[j];
                    let h = (hi - lo) / self.panels as f64;
                    b.push(t);
                    for k in 0..12 {
                        let off = h * 0.5f64.powi(k);
                        b.push(t - off);
                        b.push(t + off);
                    }
                }
                composite_rule(lo, hi, &b, 1, &rule)
            })
            .collect();
        TensorGrid::product(&axes)
    }
}

/// `int_box Mehler(x, y) d gamma(y) - gamma(box)`, integrated against rho:
/// the `M(L)` kernel integrated over a box, times `sqrt(pi)`.
fn m_kernel_box_mass(lo: &[f64], hi: &[f64], x: &[f64], spec: &QuadratureSpec) -> Result<f64> {
    let total = gauss_box(lo, hi);
    let v = rho_integrate(
        |p| {
            let q = p.one_minus_r2.sqrt();
            let mut prod = 1.0;
            for j in 0..x.len() {
                let m = p.r * x[j];
                prod *= gauss_interval((lo[j] - m) / q, (hi[j] - m) / q);
            }
            prod - total
        },
        spec,
    )?;
    Ok(FRAC_1_SQRT_PI * v.value)
}

fn apply_impl(
    kind: KernelKind,
    i: usize,
    f: &SampledFunction,
    x: &Point,
    weight_x: bool,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if x.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: x.dim(),
        });
    }
    check_coordinate(kind, i, f.dim())?;
    let inside = f.contains(x.coords());
    if inside && kind != KernelKind::M {
        return Err(Error::InsideSupport);
    }
    let d = f.dim();
    let wt = KernelWeight {
        x: weight_x,
        y: true,
        shift: f.log_scale,
    };
    let fx = if inside { f.raw(x.coords()) } else { 0.0 };
    let grid = f.grid(if inside { Some(x.coords()) } else { None });
    let norm = PI.powf(-0.5 * d as f64);
    let terms: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|n| {
            let yc = grid.point(n);
            let v = f.raw(yc) - fx;
            if v == 0.0 {
                return Ok(0.0);
            }
            let y = Point(yc.to_vec());
            let k = kernel_weighted(kind, i, x, &y, wt, spec)?;
            Ok(grid.weights[n] * norm * k.value * v)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut acc: f64 = terms.iter().sum();
    if inside && fx != 0.0 {
        let mass = m_kernel_box_mass(&f.lo, &f.hi, x.coords(), spec)?;
        let scale = (f.log_scale - if weight_x { x.norm_sq() } else { 0.0 }).exp();
        acc += fx * scale * mass;
    }
    Ok(acc)
}

/// `T f(x) = int k_T(x, y) f(y) d gamma(y)` by tensor quadrature over the
/// support box of `f`.
///
/// `R` and `S*` refuse points in the closed support. For `M(L)` inside the
/// support the singular part is subtracted: `int k (f(y) - f(x)) d gamma`
/// plus `f(x)` times the box integral of the kernel, which is done in closed
/// form in `y`.
pub fn apply_via_kernel(
    kind: KernelKind,
    i: usize,
    f: &SampledFunction,
    x: &Point,
    spec: &QuadratureSpec,
) -> Result<f64> {
    apply_impl(kind, i, f, x, false, spec)
}

/// `exp(-|x|^2) T f(x)`; stays finite where `T f(x)` itself overflows.
pub fn apply_via_kernel_weighted(
    kind: KernelKind,
    i: usize,
    f: &SampledFunction,
    x: &Point,
    spec: &QuadratureSpec,
) -> Result<f64> {
    apply_impl(kind, i, f, x, true, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::HermiteExpansion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(v: &[f64]) -> Point {
        Point(v.to_vec())
    }

    fn spec() -> QuadratureSpec {
        QuadratureSpec::with_tolerances(1e-15, 1e-11)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    /// Brute-force reference: composite midpoint-free GL on s in [0, 8]
    /// with `n` equal panels of a 10-point rule, straight from the textbook
    /// formulas (no fused differences, no weights).
    fn reference(kind: KernelKind, i: usize, x: &[f64], y: &[f64], panels: usize) -> f64 {
        let d = x.len() as f64;
        let rule = GaussLegendre::new(10);
        let h = 8.0 / panels as f64;
        let mut acc = 0.0;
        for p in 0..panels {
            for (s, w) in rule.on(p as f64 * h, (p + 1) as f64 * h) {
                let r = (-s * s).exp();
                let c = -(-2.0 * s * s).exp_m1();
                let q = c.sqrt();
                let x2: f64 = x.iter().map(|t| t * t).sum();
                let phi2: f64 = x.iter().zip(y).map(|(a, b)| ((r * b - a) / q).powi(2)).sum();
                let mehler = (x2 - phi2).exp();
                let g = match kind {
                    KernelKind::M => mehler * c.powf(-0.5 * d) - 1.0,
                    KernelKind::R => {
                        let psi = (r * x[i - 1] - y[i - 1]) / q;
                        r * psi * mehler * c.powf(-0.5 * (d + 1.0))
                    }
                    KernelKind::SStar => {
                        let phi = (r * y[i - 1] - x[i - 1]) / q;
                        phi * mehler * c.powf(-0.5 * (d + 1.0)) + x[i - 1]
                    }
                };
                acc += 2.0 * w * g;
            }
        }
        acc * kernel_constant(kind)
    }

    #[test]
    fn phi_psi_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let d = rng.gen_range(1..=3);
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let r = rng.gen_range(0.01..0.99);
            let a = PhiPsi::new(r, &pt(&x), &pt(&y)).unwrap();
            let b = PhiPsi::new(r, &pt(&y), &pt(&x)).unwrap();
            for k in 0..d {
                assert_eq!(a.phi[k], b.psi[k]);
            }
            let lhs = a.phi_norm_sq() - a.psi_norm_sq();
            let rhs = norm_sq(&x) - norm_sq(&y);
            assert!((lhs - rhs).abs() <= 1e-12 * (a.phi_norm_sq() + a.psi_norm_sq()).max(1.0));
            // |phi| <= |psi| + |x|
            assert!(a.phi_norm_sq().sqrt() <= a.psi_norm_sq().sqrt() + pt(&x).norm() + 1e-12);
            // the stable exponent agrees with the naive one
            let naive = norm_sq(&x) - a.phi_norm_sq();
            assert!((a.exponent() - naive).abs() <= 1e-10 * a.phi_norm_sq().max(1.0));
        }
    }

    #[test]
    fn input_checks() {
        let s = spec();
        assert_eq!(kernel_m(&pt(&[1.0]), &pt(&[1.0]), &s), Err(Error::SingularInput));
        assert!(matches!(
            kernel_r(1, &pt(&[1.0]), &pt(&[1.0 + 1e-9]), &s),
            Err(Error::NearDiagonal { .. })
        ));
        assert!(matches!(
            kernel_r(2, &pt(&[1.0]), &pt(&[2.0]), &s),
            Err(Error::CoordinateOutOfRange { .. })
        ));
        assert!(matches!(
            kernel_r(1, &pt(&[1.0]), &pt(&[2.0, 0.0]), &s),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn brute_force_references() {
        let s = spec();
        let m = kernel_m(&pt(&[0.0]), &pt(&[2.0]), &s).unwrap();
        let m_ref = reference(KernelKind::M, 1, &[0.0], &[2.0], 5000);
        assert!(rel(m.value, m_ref) < 1e-6, "{} vs {}", m.value, m_ref);
        let k = kernel_s_star(1, &pt(&[0.5]), &pt(&[2.5]), &s).unwrap();
        let k_ref = reference(KernelKind::SStar, 1, &[0.5], &[2.5], 5000);
        assert!(rel(k.value, k_ref) < 1e-6, "{} vs {}", k.value, k_ref);
        let r = kernel_r(1, &pt(&[0.5]), &pt(&[2.5]), &s).unwrap();
        let r_ref = reference(KernelKind::R, 1, &[0.5], &[2.5], 5000);
        assert!(rel(r.value, r_ref) < 1e-6);
    }

    #[test]
    fn r_and_s_star_are_derivatives_of_m() {
        // k_R = d/dx_i k_M and k_S* = (2 x_i - d/dx_i) k_M
        let s = QuadratureSpec::with_tolerances(1e-16, 1e-13);
        let h = 1e-5;
        for (x, y) in [(vec![0.5], vec![2.5]), (vec![0.3, -0.4], vec![1.1, 0.7])] {
            for i in 1..=x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i - 1] += h;
                xm[i - 1] -= h;
                let dm = (kernel_m(&pt(&xp), &pt(&y), &s).unwrap().value
                    - kernel_m(&pt(&xm), &pt(&y), &s).unwrap().value)
                    / (2.0 * h);
                let km = kernel_m(&pt(&x), &pt(&y), &s).unwrap().value;
                let kr = kernel_r(i, &pt(&x), &pt(&y), &s).unwrap().value;
                let ks = kernel_s_star(i, &pt(&x), &pt(&y), &s).unwrap().value;
                assert!(rel(kr, dm) < 1e-6, "{kr} vs {dm}");
                assert!(rel(ks, 2.0 * x[i - 1] * km - dm) < 1e-6);
            }
        }
    }

    #[test]
    fn m_bracket_vanishes_at_small_r() {
        let x = [0.7, -0.2];
        let y = [1.5, 0.4];
        let geo = Geometry::new(&x, &y);
        let p = RhoPoint::from_r(1e-9);
        let n = Node::new(p, &geo, &KernelWeight::NONE, ExponentForm::Stable);
        assert!(value_integrand(KernelKind::M, 0, &geo, &n).abs() < 1e-7);
        assert!(value_integrand(KernelKind::SStar, 0, &geo, &n).abs() < 1e-7);
    }

    #[test]
    fn dual_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = spec();
        for _ in 0..20 {
            let d = rng.gen_range(1..=2);
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (a, b) = kernel_s_star_dual(1, &pt(&x), &pt(&y), &s).unwrap();
            assert!(rel(a.value, b.value) < 1e-8);
            let c = kernel_s_star(1, &pt(&x), &pt(&y), &s).unwrap();
            assert!(rel(a.value, c.value) < 1e-8);
        }
    }

    #[test]
    fn weights_are_consistent() {
        let s = spec();
        let x = pt(&[1.2, 0.3]);
        let y = pt(&[0.4, 1.0]);
        for kind in [KernelKind::M, KernelKind::R, KernelKind::SStar] {
            let plain = kernel(kind, 1, &x, &y, &s).unwrap().value;
            for wt in [KernelWeight::x(), KernelWeight::y(), KernelWeight::both().with_shift(0.7)] {
                let v = kernel_weighted(kind, 1, &x, &y, wt, &s).unwrap().value;
                let expect = plain * wt.factor(x.coords(), y.coords());
                assert!(rel(v, expect) < 1e-9, "{kind} {wt:?}: {v} vs {expect}");
            }
        }
    }

    #[test]
    fn r_sign_probe() {
        // d = 2, x = (2, 0), y = (2.5, 0): psi_1 = (2r - 2.5)/q < 0 for all r
        let x = [2.0, 0.0];
        let y = [2.5, 0.0];
        let geo = Geometry::new(&x, &y);
        let n = Node::new(RhoPoint::from_r(0.5), &geo, &KernelWeight::NONE, ExponentForm::Stable);
        let mid = value_integrand(KernelKind::R, 0, &geo, &n) * kernel_constant(KernelKind::R);
        let k = kernel_r(1, &pt(&x), &pt(&y), &spec()).unwrap().value;
        assert!(k * mid > 0.0);
    }

    fn fd_check(kind: KernelKind, d: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = QuadratureSpec::with_tolerances(1e-16, 1e-11);
        let h = 1e-5;
        for _ in 0..10 {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let mut y: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
            y[0] = x[0] + rng.gen_range(0.3..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            for which in [Variable::X, Variable::Y] {
                let g = grad_kernel(kind, 1, which, &pt(&x), &pt(&y), &s).unwrap();
                for k in 0..d {
                    let shifted = |delta: f64| {
                        let (mut xa, mut ya) = (x.clone(), y.clone());
                        match which {
                            Variable::X => xa[k] += delta,
                            Variable::Y => ya[k] += delta,
                        }
                        kernel(kind, 1, &pt(&xa), &pt(&ya), &s).unwrap().value
                    };
                    let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                    let scale = g.iter().map(|v| v.value.abs()).fold(fd.abs(), f64::max);
                    assert!(
                        (g[k].value - fd).abs() <= 1e-4 * scale,
                        "{kind} {which:?} k={k}: {} vs {fd}",
                        g[k].value
                    );
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for d in 1..=2 {
            fd_check(KernelKind::R, d, 40 + d as u64);
            fd_check(KernelKind::SStar, d, 50 + d as u64);
            fd_check(KernelKind::M, d, 60 + d as u64);
        }
    }

    #[test]
    fn weighted_gradients_match_plain_ones() {
        let s = spec();
        let x = pt(&[0.8, -0.5]);
        let y = pt(&[-0.3, 0.9]);
        for kind in [KernelKind::M, KernelKind::R, KernelKind::SStar] {
            for which in [Variable::X, Variable::Y] {
                let plain = grad_kernel(kind, 2, which, &x, &y, &s).unwrap();
                let k = kernel(kind, 2, &x, &y, &s).unwrap().value;
                for wt in [KernelWeight::x(), KernelWeight::y()] {
                    let g = grad_kernel_weighted(kind, 2, which, &x, &y, wt, &s).unwrap();
                    let f = wt.factor(x.coords(), y.coords());
                    let v = match which {
                        Variable::X => x.coords(),
                        Variable::Y => y.coords(),
                    };
                    for j in 0..2 {
                        // product rule for the weight factor
                        let dw = if weighted_in(which, &wt) { -2.0 * v[j] * f } else { 0.0 };
                        let expect = plain[j].value * f + k * dw;
                        assert!((g[j].value - expect).abs() < 1e-8 * (expect.abs() + f), "{kind}");
                    }
                }
            }
        }
    }

    #[test]
    fn one_dimensional_f1_f2_decomposition() {
        // d/dy (psi e^{-phi^2}) = F1 + F2 with F1 = -e^{-phi^2}/q,
        // F2 = -2 phi psi (r/q) e^{-phi^2} = -r q d/dr e^{-phi^2}
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..200 {
            let x: f64 = rng.gen_range(-3.0..3.0);
            let y: f64 = rng.gen_range(-3.0..3.0);
            let r: f64 = rng.gen_range(0.05..0.95);
            let q = (1.0 - r * r).sqrt();
            let phi = |r: f64, y: f64| (r * y - x) / (1.0 - r * r).sqrt();
            let psi = |r: f64, y: f64| (r * x - y) / (1.0 - r * r).sqrt();
            let e = |r: f64, y: f64| (-phi(r, y).powi(2)).exp();
            let prod = |y: f64| psi(r, y) * e(r, y);
            let lhs = (prod(y + h) - prod(y - h)) / (2.0 * h);
            let f1 = -e(r, y) / q;
            let f2 = -2.0 * phi(r, y) * psi(r, y) * r / q * e(r, y);
            assert!((lhs - (f1 + f2)).abs() < 1e-7 * (1.0 + lhs.abs()));
            let de_dr = (e(r + h, y) - e(r - h, y)) / (2.0 * h);
            assert!((f2 - (-r * q * de_dr)).abs() < 1e-6 * (1.0 + f2.abs()));
            let dphi_dr = (phi(r + h, y) - phi(r - h, y)) / (2.0 * h);
            assert!((dphi_dr + psi(r, y) / (q * q)).abs() < 1e-6 * (1.0 + dphi_dr.abs()));
        }
    }

    #[test]
    fn apply_zero_function() {
        let f = SampledFunction::zero(2);
        for kind in [KernelKind::M, KernelKind::R] {
            let v = apply_via_kernel(kind, 1, &f, &pt(&[3.0, 0.0]), &spec()).unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn apply_refuses_inside_support() {
        let f = SampledFunction::new(vec![0.0], vec![1.0], |_| 1.0).unwrap();
        assert_eq!(
            apply_via_kernel(KernelKind::R, 1, &f, &pt(&[1.0]), &spec()),
            Err(Error::InsideSupport)
        );
    }

    #[test]
    fn m_of_l_reproduces_spectral_value() {
        let s = QuadratureSpec::with_tolerances(1e-13, 1e-9);
        let h2 = HermiteExpansion::monomial(vec![2], 1.0);
        let g = h2.clone();
        let f = SampledFunction::new(vec![-8.0], vec![8.0], move |y| g.eval_slice(y))
            .unwrap()
            .with_resolution(16, 10);
        let x = 0.4;
        let v = apply_via_kernel(KernelKind::M, 0, &f, &pt(&[x]), &s).unwrap();
        let expect = h2.eval(&pt(&[x])).unwrap() / 2f64.sqrt();
        assert!(rel(v, expect) < 1e-3, "{v} vs {expect}");
    }

    #[test]
    fn r_derivative_of_m_image() {
        // d/dx of M(L) H_1 = d/dx H_1 = 2 = R_1 H_1
        let s = QuadratureSpec::with_tolerances(1e-13, 1e-10);
        let f = SampledFunction::new(vec![-8.0], vec![8.0], |y| 2.0 * y[0])
            .unwrap()
            .with_resolution(16, 10);
        let h = 1e-3;
        let a = apply_via_kernel(KernelKind::M, 0, &f, &pt(&[0.3 + h]), &s).unwrap();
        let b = apply_via_kernel(KernelKind::M, 0, &f, &pt(&[0.3 - h]), &s).unwrap();
        assert!(((a - b) / (2.0 * h) - 2.0).abs() < 1e-3);
    }

    #[test]
    fn rho_is_linear() {
        let s = spec();
        let f = |p: RhoPoint| p.r * p.one_minus_r2;
        let g = |p: RhoPoint| p.r.powi(2);
        let a = rho_integrate(f, &s).unwrap();
        let b = rho_integrate(g, &s).unwrap();
        let ab = rho_integrate(|p| 2.0 * f(p) - 3.0 * g(p), &s).unwrap();
        let err = 2.0 * a.error + 3.0 * b.error + ab.error;
        assert!((ab.value - (2.0 * a.value - 3.0 * b.value)).abs() <= err.max(1e-13));
    }
}
