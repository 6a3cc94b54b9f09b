//! Complete dictionary learning by l1 minimization.
//!
//! * [`coeff_models`]: sparse coefficient distributions and signal generation.
//! * [`dictionary`]: unit-norm complete dictionaries and the NMSE metric.
//! * [`identifiability`]: closed-form sharpness conditions for constant-collinearity references.
//! * [`sharpness`]: a finite-sample test for sharp local minima.
//! * [`bcd`]: DL-BCD, block coordinate descent over the rows of `D⁻¹`.
//! * [`experiments`]: simulation drivers used by the `l1dict` binary.
//!
//! The guide under `book/` walks through each part; its snippets run as doc-tests.

pub mod assignment;
pub mod bcd;
pub mod coeff_models;
pub mod dictionary;
pub mod error;
pub mod experiments;
pub mod identifiability;
pub mod io;
pub mod quadrature;
pub mod rng;
pub mod sharpness;
pub mod subproblem;

pub use error::{DlError, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/coefficient-models.md")]
    mod coefficient_models {}
    #[doc = include_str!("../../../book/src/dictionaries.md")]
    mod dictionaries {}
    #[doc = include_str!("../../../book/src/identifiability.md")]
    mod identifiability {}
    #[doc = include_str!("../../../book/src/sharpness-test.md")]
    mod sharpness_test {}
    #[doc = include_str!("../../../book/src/dl-bcd.md")]
    mod dl_bcd {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
