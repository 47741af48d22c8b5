//! Numerical laboratory for translation flows: interval exchanges and their
//! renormalization, zippered-rectangle surfaces, twisted ergodic integrals,
//! the twisted Rauzy-Veech cocycle and spectral-measure estimators.

pub mod cocycles;
pub mod error;
pub mod fit;
pub mod iet;
pub mod matrix;
pub mod observables;
pub mod rng;
pub mod spectral;
pub mod surface;
pub mod twisted;

pub use error::{Error, Result};
