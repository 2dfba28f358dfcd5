//! Spectral multipliers of the Ornstein–Uhlenbeck operator and the
//! first-order Riesz transforms, acting exactly on Hermite expansions.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::HermiteExpansion;

/// A real sequence `m : N -> R`, applied as `m(L)`.
#[derive(Clone)]
pub struct SpectralMultiplier {
    rule: Arc<dyn Fn(u32) -> f64 + Send + Sync>,
}

impl fmt::Debug for SpectralMultiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralMultiplier").finish_non_exhaustive()
    }
}

impl SpectralMultiplier {
    pub fn new<F: Fn(u32) -> f64 + Send + Sync + 'static>(rule: F) -> Self {
        Self { rule: Arc::new(rule) }
    }

    /// `M(0) = 0`, `M(j) = j^{-1/2}`.
    pub fn inverse_sqrt() -> Self {
        Self::new(inverse_sqrt_rule)
    }

    pub fn identity() -> Self {
        Self::new(|_| 1.0)
    }

    /// `m(j) = j`, i.e. `L` itself.
    pub fn ou() -> Self {
        Self::new(|j| j as f64)
    }

    pub fn at(&self, j: u32) -> f64 {
        (self.rule)(j)
    }

    /// Scales every degree-`j` coefficient by `m(j)`.
    pub fn apply(&self, f: &HermiteExpansion) -> Result<HermiteExpansion> {
        let mut bad = None;
        let out = f.map_coeffs(|a, c| {
            let m = self.at(a.degree());
            if !m.is_finite() {
                bad = Some(a.degree());
            }
            c * m
        });
        match bad {
            Some(j) => Err(Error::InvalidArgument(format!("multiplier is not finite at j = {j}"))),
            None => Ok(out),
        }
    }
}

fn inverse_sqrt_rule(j: u32) -> f64 {
    if j == 0 {
        0.0
    } else {
        1.0 / (j as f64).sqrt()
    }
}

/// `apply_multiplier(m, f) = m(L) f`.
pub fn apply_multiplier(m: &SpectralMultiplier, f: &HermiteExpansion) -> Result<HermiteExpansion> {
    m.apply(f)
}

/// `M(L) f` with `M(0) = 0`, `M(j) = j^{-1/2}`.
pub fn apply_m_of_l(f: &HermiteExpansion) -> HermiteExpansion {
    f.map_coeffs(|a, c| c * inverse_sqrt_rule(a.degree()))
}

/// Operator families built from `d/dx_i`, its adjoint, `x_i` and `M(L)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RieszFamily {
    /// `R_i = d_i M(L)`
    R,
    /// `S_i = M(L) d_i`
    S,
    /// `R_i^* = M(L) d_i^*`
    RStar,
    /// `S_i^* = d_i^* M(L)`
    SStar,
    /// `M_i = x_i M(L)`
    M,
    /// `M_i^* = M(L) x_i`
    MStar,
}

impl RieszFamily {
    pub const ALL: [RieszFamily; 6] = [
        RieszFamily::R,
        RieszFamily::S,
        RieszFamily::RStar,
        RieszFamily::SStar,
        RieszFamily::M,
        RieszFamily::MStar,
    ];

    /// Family of the L^2(gamma) adjoint.
    pub fn adjoint(self) -> Self {
        use RieszFamily::*;
        match self {
            R => RStar,
            RStar => R,
            S => SStar,
            SStar => S,
            M => MStar,
            MStar => M,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RieszFamily::R => "R",
            RieszFamily::S => "S",
            RieszFamily::RStar => "R*",
            RieszFamily::SStar => "S*",
            RieszFamily::M => "M",
            RieszFamily::MStar => "M*",
        }
    }
}

impl fmt::Display for RieszFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A Riesz-type operator together with its 1-based coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RieszKind {
    pub family: RieszFamily,
    pub coordinate: usize,
}

impl RieszKind {
    pub fn new(family: RieszFamily, coordinate: usize) -> Self {
        Self { family, coordinate }
    }

    pub fn adjoint(self) -> Self {
        Self::new(self.family.adjoint(), self.coordinate)
    }
}

impl fmt::Display for RieszKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.family, self.coordinate)
    }
}

/// Applies the operator `kind` to `f`, composing the exact coefficient rules.
pub fn apply_riesz(kind: RieszKind, f: &HermiteExpansion) -> Result<HermiteExpansion> {
    let i = kind.coordinate;
    if i == 0 || i > f.dim() {
        return Err(Error::CoordinateOutOfRange { index: i, dim: f.dim() });
    }
    match kind.family {
        RieszFamily::R => apply_m_of_l(f).apply_partial(i),
        RieszFamily::S => Ok(apply_m_of_l(&f.apply_partial(i)?)),
        RieszFamily::RStar => Ok(apply_m_of_l(&f.apply_partial_star(i)?)),
        RieszFamily::SStar => apply_m_of_l(f).apply_partial_star(i),
        RieszFamily::M => apply_m_of_l(f).apply_multiplication(i),
        RieszFamily::MStar => Ok(apply_m_of_l(&f.apply_multiplication(i)?)),
    }
}

/// `|<T f, g> - <f, T^* g>|` in L^2(gamma), where `T^*` is the adjoint family.
pub fn duality_residual(kind: RieszKind, f: &HermiteExpansion, g: &HermiteExpansion) -> Result<f64> {
    if f.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: g.dim(),
        });
    }
    let lhs = apply_riesz(kind, f)?.inner_product_gamma(g)?;
    let rhs = f.inner_product_gamma(&apply_riesz(kind.adjoint(), g)?)?;
    Ok((lhs - rhs).abs())
}
