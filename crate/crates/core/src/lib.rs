//! Grazing-collision lab: Boltzmann-to-Landau limits of dissipations, actions
//! and weak collision operators, with DSMC and Monte Carlo quadrature.

pub mod densities;
pub mod dsmc;
pub mod dualpairs;
pub mod error;
pub mod estimate;
pub mod functionals;
pub mod geometry;
pub mod grazing;
pub mod kernels;
pub mod knn;
pub mod numerics;
pub mod quadrature;

pub use error::{LabError, Result};
pub use estimate::{Estimate, Method};

/// The guide's code blocks, compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/dual-pairs.md")]
    mod dual_pairs {}
    #[doc = include_str!("../../../book/src/functionals.md")]
    mod functionals {}
    #[doc = include_str!("../../../book/src/grazing.md")]
    mod grazing {}
    #[doc = include_str!("../../../book/src/particles.md")]
    mod particles {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
