//! Numerical laboratory for the exponential family `f_lambda(z) = exp(lambda * z)`.
//!
//! The crate is organized around the quantities that drive the dynamics of
//! this family:
//!
//! - [`logcplx`] — log-polar complex arithmetic, so orbit points and
//!   derivative products whose moduli dwarf the native `f64` range stay
//!   representable.
//! - [`orbit`] — iteration of `f_lambda`, the derivative cocycle
//!   `(f^n)'(a) = lambda^n * prod f^k(a)`, escape/cycle detection, and the
//!   postsingular-set approximation (forward orbit of 0).
//! - [`series`] — the Poincare series `S_n`, the summability series
//!   `sum 1/(f^i)'(a)`, and the auxiliary series `B(a)`, each with
//!   ratio-test convergence verdicts and tail bounds.
//! - [`ruelle`] — the push-forward (Ruelle) operator: numerically as an
//!   inverse-branch sum, and exactly on the rational basis
//!   `gamma_a(z) = a(a-1)/(z(z-1)(z-a))`, including the iterated action,
//!   the `phi` series, its fixed-point residual, and the Moebius
//!   conjugation identity.
//! - [`classify`] — per-parameter classification of the derivative trend,
//!   hypothesis-pattern flags, summable-point evidence, and grid scans.
//!
//! All computations are plain `f64`; anything that can exceed native range
//! is carried as a [`logcplx::LogComplex`] and only converted when it fits.

pub mod classify;
pub mod logcplx;
pub mod orbit;
pub mod ruelle;
pub mod series;

pub use num_complex::Complex64;

pub use classify::{ClassReport, Thresholds, TrichotomyCase};
pub use logcplx::{LogCplxError, LogComplex};
pub use orbit::{OrbitError, OrbitParams, OrbitRecord, OrbitStatus, PostsingularApprox};
pub use ruelle::{BranchSet, GammaCombo, GammaTerm, RuelleError};
pub use series::{SeriesError, SeriesKind, SeriesParams, SeriesReport, Verdict};
