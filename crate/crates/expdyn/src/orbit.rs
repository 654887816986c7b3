//! Orbits of `f_lambda(z) = exp(lambda * z)` with the derivative cocycle.
//!
//! The chain rule for this family collapses to a product over the orbit:
//! `(f^n)'(a) = lambda^n * prod_{k=1..n} f^k(a)`, which is accumulated here
//! in log-polar form (one log-polar multiply per step, exact in the
//! log-modulus). Escape is operational, not certified: a step whose input
//! `lambda * z` exceeds a configurable log-modulus threshold is declared
//! escaped, since the next modulus would be at least `e^(e^threshold * cos)`.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::logcplx::LogComplex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    /// The requested cocycle length runs past the point where the orbit
    /// stopped (escape truncates the product with it).
    #[error("cocycle truncated at escape: have {available} entries, requested {requested}")]
    TruncatedAtEscape { available: usize, requested: usize },
    #[error("fixed-point iteration did not converge within {0} steps")]
    NoConvergence(usize),
    #[error("tolerance must be positive")]
    NonPositiveTolerance,
}

/// Knobs shared by orbit computations.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OrbitParams {
    /// Escape declared when `ln|lambda * z_n|` exceeds this (natural-log
    /// units). Default 50: one further step then has modulus at least
    /// `e^(e^50 cos theta)` for small argument.
    pub escape_log_threshold: f64,
    /// Cartesian distance for cycle detection.
    pub cycle_tol: f64,
    /// Largest cycle period searched.
    pub max_period: usize,
}

impl Default for OrbitParams {
    fn default() -> Self {
        Self {
            escape_log_threshold: 50.0,
            cycle_tol: 1e-9,
            max_period: 64,
        }
    }
}

/// Terminal state of a finite orbit computation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum OrbitStatus {
    /// `ln|lambda * z_m|` exceeded the threshold while computing `z_{m}`;
    /// points beyond index `step - 1` are absent.
    Escaped { step: usize },
    /// A period-`period` cycle was confirmed three consecutive times.
    Converged {
        period: usize,
        cycle: Vec<Complex64>,
    },
    /// Budget exhausted with no verdict; an honest first-class outcome.
    Horizon,
}

/// One computed orbit with its derivative cocycle.
///
/// `points[0]` is the seed; `points[n+1] = exp(lambda * points[n])`.
/// `dlog[n]` is `(f^n)'(seed)` in log-polar form; `dlog[0] = 1`.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitRecord {
    pub lambda: Complex64,
    pub seed: Complex64,
    pub params: OrbitParams,
    pub requested_steps: usize,
    pub points: Vec<LogComplex>,
    pub dlog: Vec<LogComplex>,
    pub status: OrbitStatus,
}

/// Outcome of a single iteration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Next(LogComplex),
    /// `ln|lambda * z|` exceeded the threshold (or left the native range);
    /// a status, not a failure.
    Escaped,
}

/// One application of `f_lambda` in log-polar form.
pub fn step(lambda: Complex64, z: &LogComplex, escape_log_threshold: f64) -> StepOutcome {
    let lz = LogComplex::from_cartesian(lambda).mul(z);
    if lz.logmod() > escape_log_threshold || !lz.is_native_representable() {
        return StepOutcome::Escaped;
    }
    // in range by the check above
    let w = lz.to_cartesian().expect("checked against native range");
    StepOutcome::Next(LogComplex::exp_of(w))
}

/// Iterate the orbit of `seed` for up to `n` steps, accumulating the
/// derivative cocycle and watching for escape and attracting cycles.
pub fn orbit(lambda: Complex64, seed: Complex64, n: usize, params: &OrbitParams) -> OrbitRecord {
    assert!(n >= 1, "orbit needs at least one step");
    let lambda_lc = LogComplex::from_cartesian(lambda);

    let mut points = vec![LogComplex::from_cartesian(seed)];
    let mut dlog = vec![LogComplex::one()];
    // native window of the points for cycle detection; the seed is given
    // in native form, later points may be log-only
    let mut native: Vec<Option<Complex64>> = vec![Some(seed)];
    let mut status = OrbitStatus::Horizon;
    let mut candidate: Option<(usize, usize)> = None; // (period, confirmations)

    for m in 1..=n {
        let znext = match step(lambda, &points[m - 1], params.escape_log_threshold) {
            StepOutcome::Next(z) => z,
            StepOutcome::Escaped => {
                status = OrbitStatus::Escaped { step: m };
                break;
            }
        };
        dlog.push(dlog[m - 1].mul(&lambda_lc.mul(&znext)));
        points.push(znext);
        native.push(znext.to_cartesian().ok());

        if let Some((p, confirmed)) =
            confirm_cycle(&native, m, candidate, params.cycle_tol, params.max_period)
        {
            if confirmed >= 3 {
                let cycle = native[m + 1 - p..=m]
                    .iter()
                    .map(|c| c.expect("cycle points are within native range"))
                    .collect();
                status = OrbitStatus::Converged { period: p, cycle };
                break;
            }
            candidate = Some((p, confirmed));
        } else {
            candidate = None;
        }
    }

    OrbitRecord {
        lambda,
        seed,
        params: *params,
        requested_steps: n,
        points,
        dlog,
        status,
    }
}

/// Extend or restart the cycle candidate at index `m`. Three consecutive
/// confirmations are required before declaring convergence, which filters
/// transient near-returns.
fn confirm_cycle(
    native: &[Option<Complex64>],
    m: usize,
    candidate: Option<(usize, usize)>,
    tol: f64,
    max_period: usize,
) -> Option<(usize, usize)> {
    let zm = native[m]?;
    let matches = |p: usize| -> bool {
        native[m - p]
            .map(|prev| (zm - prev).norm() < tol)
            .unwrap_or(false)
    };
    if let Some((p, confirmed)) = candidate {
        if m >= p && matches(p) {
            return Some((p, confirmed + 1));
        }
    }
    for p in 1..=max_period.min(m) {
        if matches(p) {
            return Some((p, 1));
        }
    }
    None
}

impl OrbitRecord {
    /// The derivative cocycle `(f^k)'(seed)` for `k = 0..=n`.
    pub fn derivative_cocycle(&self, n: usize) -> Result<&[LogComplex], OrbitError> {
        if n >= self.dlog.len() {
            return Err(OrbitError::TruncatedAtEscape {
                available: self.dlog.len(),
                requested: n,
            });
        }
        Ok(&self.dlog[..=n])
    }

    /// `|(f^{n+1})'| / |(f^n)'|` as a plain ratio, computed from log-moduli.
    pub fn dlog_ratio(&self, n: usize) -> Option<f64> {
        if n + 1 >= self.dlog.len() {
            return None;
        }
        Some((self.dlog[n + 1].logmod() - self.dlog[n].logmod()).exp())
    }

    /// CSV rows `(n, logmod z, arg z, logmod dlog, arg dlog)` with a
    /// reproducibility stamp comment.
    pub fn to_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(
            w,
            "# lambda={},{} seed={},{} steps={} escape_log_threshold={} cycle_tol={} max_period={} status={}",
            self.lambda.re,
            self.lambda.im,
            self.seed.re,
            self.seed.im,
            self.requested_steps,
            self.params.escape_log_threshold,
            self.params.cycle_tol,
            self.params.max_period,
            self.status_code(),
        )?;
        writeln!(w, "n,logmod_z,arg_z,logmod_dlog,arg_dlog")?;
        for (i, (p, d)) in self.points.iter().zip(self.dlog.iter()).enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                i,
                p.logmod(),
                p.arg(),
                d.logmod(),
                d.arg()
            )?;
        }
        Ok(())
    }

    pub fn status_code(&self) -> String {
        match &self.status {
            OrbitStatus::Escaped { step } => format!("escaped@{step}"),
            OrbitStatus::Converged { period, .. } => format!("converged_p{period}"),
            OrbitStatus::Horizon => "horizon".to_string(),
        }
    }
}

/// First `m` points of the orbit of 0 (starting at `f(0) = 1`), the
/// numerical stand-in for the postsingular set.
#[derive(Debug, Clone, Serialize)]
pub struct PostsingularApprox {
    /// Orbit points of 0 that fit in native range, in orbit order.
    pub points: Vec<Complex64>,
    /// `min |f^k(0)|` over all computed points (including log-only ones).
    pub min_dist_to_zero: f64,
    /// Largest log-modulus seen along the orbit.
    pub max_logmod: f64,
    pub bounded_verdict: BoundedVerdict,
    pub horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundedVerdict {
    BoundedSoFar,
    Escaped,
    Indeterminate,
}

/// Approximate the postsingular set by the first `m` orbit points of 0.
pub fn postsingular(lambda: Complex64, m: usize, escape_log_threshold: f64) -> PostsingularApprox {
    assert!(m >= 1, "need at least one orbit point");
    let params = OrbitParams {
        escape_log_threshold,
        ..OrbitParams::default()
    };
    let rec = orbit(lambda, Complex64::new(0.0, 0.0), m, &params);
    // skip the seed 0 itself; the postsingular set starts at f(0) = 1
    let tail = &rec.points[1..];
    let points: Vec<Complex64> = tail.iter().filter_map(|p| p.to_cartesian().ok()).collect();
    let min_dist_to_zero = tail
        .iter()
        .map(|p| p.logmod())
        .fold(f64::INFINITY, f64::min)
        .exp();
    let max_logmod = tail
        .iter()
        .map(|p| p.logmod())
        .fold(f64::NEG_INFINITY, f64::max);
    let bounded_verdict = match rec.status {
        OrbitStatus::Escaped { .. } => BoundedVerdict::Escaped,
        OrbitStatus::Converged { .. } => BoundedVerdict::BoundedSoFar,
        OrbitStatus::Horizon => {
            if max_logmod < escape_log_threshold / 2.0 {
                BoundedVerdict::BoundedSoFar
            } else {
                BoundedVerdict::Indeterminate
            }
        }
    };
    PostsingularApprox {
        points,
        min_dist_to_zero,
        max_logmod,
        bounded_verdict,
        horizon: m,
    }
}

/// A solved fixed point `exp(lambda z) = z` with its multiplier
/// `lambda * f(z)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FixedPoint {
    pub point: Complex64,
    pub multiplier: Complex64,
    pub residual: f64,
    pub iterations: usize,
}

/// Damped Newton iteration on `F(z) = exp(lambda z) - z`.
pub fn solve_fixed_point(
    lambda: Complex64,
    guess: Complex64,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPoint, OrbitError> {
    if tol <= 0.0 {
        return Err(OrbitError::NonPositiveTolerance);
    }
    let f = |z: Complex64| (lambda * z).exp();
    let residual = |z: Complex64| (f(z) - z).norm();

    let mut z = guess;
    for it in 0..max_iter {
        let fz = f(z);
        let r = fz - z;
        if r.norm() < tol {
            return Ok(FixedPoint {
                point: z,
                multiplier: lambda * fz,
                residual: r.norm(),
                iterations: it,
            });
        }
        let deriv = lambda * fz - Complex64::new(1.0, 0.0);
        if deriv.norm() == 0.0 || !deriv.norm().is_finite() {
            return Err(OrbitError::NoConvergence(max_iter));
        }
        let mut stride = r / deriv;
        // halve the step while it does not reduce the residual
        let mut next = z - stride;
        let mut halvings = 0;
        while halvings < 12 && (!next.norm().is_finite() || residual(next) > r.norm()) {
            stride *= 0.5;
            next = z - stride;
            halvings += 1;
        }
        z = next;
    }
    if residual(z) < tol {
        let fz = f(z);
        return Ok(FixedPoint {
            point: z,
            multiplier: lambda * fz,
            residual: residual(z),
            iterations: max_iter,
        });
    }
    Err(OrbitError::NoConvergence(max_iter))
}
