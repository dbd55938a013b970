//! Marchenko–Pastur analytics, resolvent identities and local-law
//! experiments for square sample covariance matrices `X_N* X_N`.
//!
//! The crate is organized bottom-up:
//!
//! - [`analytics`]: closed-form density, Stieltjes transform, distribution
//!   function and classical locations.
//! - [`ensemble`]: reproducible truncated random matrices.
//! - [`resolvent`]: spectra, resolvents with removed rows and columns, and
//!   exact checks of the deterministic resolvent identities.
//! - [`local_law`]: the fluctuation `Λ = Δ_N − Δ`, its quadratic relation,
//!   the `Q_ν` recursion and Monte-Carlo scans.
//! - [`counting`]: Pleijel contour reconstruction, counting-function and
//!   rigidity statistics.
//! - [`moments`]: Rosenthal and Burkholder Monte-Carlo harness.
//! - [`experiment`]: configuration, scheduling and CSV/JSON output.

pub mod analytics;
pub mod counting;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod local_law;
pub mod moments;
pub mod quadrature;
pub mod resolvent;
pub mod stats;

pub use error::{Error, Result};
