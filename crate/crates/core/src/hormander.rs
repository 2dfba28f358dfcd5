//! Local Hörmander integral conditions over admissible balls.
//!
//! For a ball `B` with centre `c` and radius `r_B`,
//!
//! ```text
//! H1:  r_B sup_{y in B} int_{(2B)^c} |grad_y k(x, y)| d gamma(x)
//! BMO: r_B sup_{x in B} int_{(2B)^c} |grad_x k(x, y)| d gamma(y)
//! ```
//!
//! The supremum is taken over the centre and the points `c ± t r_B e_k`,
//! `t ∈ {0.5, 0.9, 1}`; in practice it sits on the boundary, on the side
//! facing the origin. The outer integral runs in polar coordinates about
//! `c` over `2 r_B <= |x - c| <= 12 + |c|`, with radial panels growing
//! geometrically and angular panels graded toward the direction of the
//! origin, where the kernels concentrate.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::Point;
use crate::kernel::{grad_kernel_weighted, KernelKind, KernelWeight, Variable};
use crate::quadrature::{composite_rule, GaussLegendre, QuadratureSpec};
use crate::spaces::{AdmissibleRegion, Shape};

/// Outer quadrature resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HormanderSampling {
    /// Radial panels per doubling of `|x - c|`.
    pub radial_per_octave: usize,
    pub radial_order: usize,
    /// Uniform angular panels (d = 2), before grading.
    pub angular_panels: usize,
    pub angular_order: usize,
    /// Dyadic refinement levels of the angular grid toward the origin.
    pub graded_levels: usize,
}

impl Default for HormanderSampling {
    fn default() -> Self {
        Self {
            radial_per_octave: 2,
            radial_order: 4,
            angular_panels: 12,
            angular_order: 4,
            graded_levels: 5,
        }
    }
}

impl HormanderSampling {
    /// Same panels, twice the nodes per panel.
    pub fn doubled(self) -> Self {
        Self {
            radial_order: 2 * self.radial_order,
            angular_order: 2 * self.angular_order,
            ..self
        }
    }
}

/// Outer bound on `|x - c|`: `exp(-144)` is below every tolerance in use.
pub fn outer_radius(center: &Point) -> f64 {
    12.0 + center.norm()
}

/// Points of `B` over which the supremum is sampled.
pub fn probe_points(ball: &AdmissibleRegion) -> Vec<Point> {
    let c = ball.center().coords();
    let mut out = vec![Point(c.to_vec())];
    for k in 0..c.len() {
        for f in [0.5, 0.9, 1.0] {
            for s in [1.0, -1.0] {
                let mut p = c.to_vec();
                p[k] += s * f * ball.size();
                out.push(Point(p));
            }
        }
    }
    out
}

/// Nodes and Lebesgue weights for `{2 r_B <= |x - c| <= R}`.
pub fn annulus_nodes(ball: &AdmissibleRegion, sampling: &HormanderSampling) -> Result<Vec<(Point, f64)>> {
    let c = ball.center().coords();
    let d = c.len();
    let inner = 2.0 * ball.size();
    let outer = outer_radius(ball.center());
    let mut breaks = Vec::new();
    let step = 2f64.powf(1.0 / sampling.radial_per_octave.max(1) as f64);
    let mut t = inner * step;
    while t < outer {
        breaks.push(t);
        t *= step;
    }
    let radial = composite_rule(inner, outer, &breaks, 1, &GaussLegendre::new(sampling.radial_order));
    let mut out = Vec::new();
    match d {
        1 => {
            for &(rho, w) in &radial {
                out.push((Point(vec![c[0] + rho]), w));
                out.push((Point(vec![c[0] - rho]), w));
            }
        }
        2 => {
            let theta0 = if c[0] == 0.0 && c[1] == 0.0 {
                0.0
            } else {
                (-c[1]).atan2(-c[0])
            };
            let mut breaks = vec![theta0];
            for k in 1..=sampling.graded_levels {
                let h = PI * 0.5f64.powi(k as i32 + 2);
                breaks.push(theta0 - h);
                breaks.push(theta0 + h);
            }
            breaks.extend(
                (1..sampling.angular_panels).map(|k| theta0 - PI + 2.0 * PI * k as f64 / sampling.angular_panels as f64),
            );
            let angular = composite_rule(
                theta0 - PI,
                theta0 + PI,
                &breaks,
                1,
                &GaussLegendre::new(sampling.angular_order),
            );
            for &(rho, wr) in &radial {
                for &(th, wt) in &angular {
                    let (s, co) = th.sin_cos();
                    out.push((Point(vec![c[0] + rho * co, c[1] + rho * s]), wr * wt * rho));
                }
            }
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "the outer Hörmander quadrature is implemented for d <= 2, got d = {d}"
            )))
        }
    }
    Ok(out)
}

fn check_ball(ball: &AdmissibleRegion) -> Result<()> {
    if ball.shape() != Shape::Ball {
        return Err(Error::InvalidArgument("Hörmander functionals take balls".into()));
    }
    Ok(())
}

/// `sup_p int |F(p, z)| dz` over the annulus, with `F` evaluated in parallel
/// and summed in node order.
pub(crate) fn sup_over_probes<F>(
    ball: &AdmissibleRegion,
    sampling: &HormanderSampling,
    f: F,
) -> Result<f64>
where
    F: Fn(&Point, &Point) -> Result<f64> + Sync,
{
    check_ball(ball)?;
    let nodes = annulus_nodes(ball, sampling)?;
    let mut best = 0.0f64;
    for p in probe_points(ball) {
        let terms = nodes
            .par_iter()
            .map(|(z, w)| f(&p, z).map(|v| w * v))
            .collect::<Result<Vec<f64>>>()?;
        best = best.max(terms.iter().sum());
    }
    Ok(best)
}

fn euclid(v: &[crate::quadrature::KernelValue]) -> f64 {
    v.iter().map(|k| k.value * k.value).sum::<f64>().sqrt()
}

/// `r_B sup_{y in B} int_{(2B)^c} |grad_y k(x, y)| d gamma(x)`.
pub fn hormander_h1(
    kind: KernelKind,
    i: usize,
    ball: &AdmissibleRegion,
    sampling: &HormanderSampling,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let d = ball.dim();
    let norm = PI.powf(-0.5 * d as f64);
    let v = sup_over_probes(ball, sampling, |y, x| {
        let g = grad_kernel_weighted(kind, i, Variable::Y, x, y, KernelWeight::x(), spec)?;
        Ok(norm * euclid(&g))
    })?;
    Ok(ball.size() * v)
}

/// `r_B sup_{x in B} int_{(2B)^c} |grad_x k(x, y)| d gamma(y)`.
pub fn hormander_bmo(
    kind: KernelKind,
    i: usize,
    ball: &AdmissibleRegion,
    sampling: &HormanderSampling,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let d = ball.dim();
    let norm = PI.powf(-0.5 * d as f64);
    let v = sup_over_probes(ball, sampling, |x, y| {
        let g = grad_kernel_weighted(kind, i, Variable::X, x, y, KernelWeight::y(), spec)?;
        Ok(norm * euclid(&g))
    })?;
    Ok(ball.size() * v)
}
