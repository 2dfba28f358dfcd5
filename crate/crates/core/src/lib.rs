//! Gaussian harmonic analysis for the Ornstein–Uhlenbeck semigroup: exact
//! Hermite calculus, first-order Riesz transforms, their kernels, and the
//! numerical experiments around H^1 / BMO endpoint behaviour.

pub mod error;
pub mod experiments;
pub mod hermite;
pub mod hormander;
pub mod kernel;
pub mod quadrature;
pub mod special;
pub mod spaces;
pub mod spectral;

#[cfg(test)]
mod testing;

pub use error::{Error, Result};
pub use hermite::{HermiteExpansion, MultiIndex, Point};
pub use spectral::{
    apply_m_of_l, apply_multiplier, apply_riesz, duality_residual, RieszFamily, RieszKind,
    SpectralMultiplier,
};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/hermite.md")]
    mod hermite {}
    #[doc = include_str!("../../../book/src/riesz.md")]
    mod riesz {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/spaces.md")]
    mod spaces {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
