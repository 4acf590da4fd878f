//! Berry-Esseen bounds in Kolmogorov distance for functionals of Poisson
//! random measures, and the machinery to check them numerically.
//!
//! The crate covers sampling Poisson random measures with finite control,
//! pathwise multiple Wiener-Ito integrals and U-statistics, contraction
//! kernels and their norms, the Malliavin-Stein bound terms estimated by
//! Monte Carlo, closed-form contraction bounds, the Stein solution for the
//! normal target, Kolmogorov-distance diagnostics, and ready-made scenarios
//! (degenerate U-statistics, pair counts, Ornstein-Uhlenbeck-Levy functionals).

pub mod bounds;
pub mod chaos;
pub mod cli;
pub mod contraction;
pub mod diagnostics;
pub mod error;
pub mod measure_space;
pub mod point_process;
pub mod rng;
pub mod scenarios;
pub mod stein;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
