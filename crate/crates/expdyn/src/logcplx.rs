//! Log-polar complex numbers: `(log-modulus, argument)` pairs.
//!
//! Orbits of `exp(lambda * z)` and the derivative products along them reach
//! moduli like `e^(e^15)` within a handful of steps, far beyond `f64`.
//! Storing `ln|w|` and `arg w` keeps every multiplicative operation exact in
//! the log-modulus (a plain `f64` addition) and pushes the representable
//! ceiling out to moduli around `e^(1.8e308)`.
//!
//! Zero is representable (`logmod = -inf`, `arg = 0`) so pole bookkeeping
//! never needs an `Option` in hot loops. The argument is always kept wrapped
//! to `(-pi, pi]`; no formula in this crate needs total winding.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest log-modulus that still converts to a finite `Complex64` with a
/// unit of headroom: `ln(f64::MAX) - 1`.
pub const NATIVE_LOG_LIMIT: f64 = 708.782_712_893_384;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LogCplxError {
    /// Conversion to Cartesian would overflow the native range.
    #[error("log-modulus {logmod} exceeds the native range limit {NATIVE_LOG_LIMIT}")]
    RangeExceeded { logmod: f64 },
    #[error("division by zero (logmod = -inf)")]
    DivisionByZero,
}

/// Wrap an angle to `(-pi, pi]`. `-pi` normalizes to `+pi`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// A complex number stored as `(ln|w|, arg w)`.
///
/// Invariants (enforced by every constructor and operation):
/// - `arg` lies in `(-pi, pi]`;
/// - `logmod == -inf` iff the value is exactly zero, and then `arg == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LogComplexRepr", into = "LogComplexRepr")]
pub struct LogComplex {
    logmod: f64,
    arg: f64,
}

impl LogComplex {
    /// Build from raw parts; the argument is wrapped unconditionally.
    pub fn new(logmod: f64, arg: f64) -> Self {
        if logmod == f64::NEG_INFINITY {
            return Self::zero();
        }
        Self {
            logmod,
            arg: wrap_angle(arg),
        }
    }

    pub fn zero() -> Self {
        Self {
            logmod: f64::NEG_INFINITY,
            arg: 0.0,
        }
    }

    pub fn one() -> Self {
        Self {
            logmod: 0.0,
            arg: 0.0,
        }
    }

    pub fn logmod(&self) -> f64 {
        self.logmod
    }

    pub fn arg(&self) -> f64 {
        self.arg
    }

    pub fn is_zero(&self) -> bool {
        self.logmod == f64::NEG_INFINITY
    }

    /// `ln|w|` and `atan2(im, re)` of a native complex number.
    pub fn from_cartesian(w: Complex64) -> Self {
        if w.re == 0.0 && w.im == 0.0 {
            return Self::zero();
        }
        Self {
            logmod: w.norm().ln(),
            arg: w.im.atan2(w.re),
        }
    }

    /// Back to native form. Fails once the modulus leaves the native range;
    /// callers that may be out of range must stay in log form.
    pub fn to_cartesian(&self) -> Result<Complex64, LogCplxError> {
        if self.is_zero() {
            return Ok(Complex64::new(0.0, 0.0));
        }
        if self.logmod >= NATIVE_LOG_LIMIT {
            return Err(LogCplxError::RangeExceeded {
                logmod: self.logmod,
            });
        }
        let m = self.logmod.exp();
        Ok(Complex64::new(m * self.arg.cos(), m * self.arg.sin()))
    }

    /// True when `to_cartesian` will succeed.
    pub fn is_native_representable(&self) -> bool {
        self.logmod < NATIVE_LOG_LIMIT
    }

    /// `exp(w)` for native `w`: exact in the log-modulus by construction
    /// (`ln|exp(w)| = Re w`).
    pub fn exp_of(w: Complex64) -> Self {
        Self {
            logmod: w.re,
            arg: wrap_angle(w.im),
        }
    }

    /// Product; log-moduli add exactly, arguments add and wrap.
    pub fn mul(&self, rhs: &Self) -> Self {
        if self.is_zero() || rhs.is_zero() {
            return Self::zero();
        }
        Self {
            logmod: self.logmod + rhs.logmod,
            arg: wrap_angle(self.arg + rhs.arg),
        }
    }

    /// Quotient; fails when the divisor is zero.
    pub fn div(&self, rhs: &Self) -> Result<Self, LogCplxError> {
        if rhs.is_zero() {
            return Err(LogCplxError::DivisionByZero);
        }
        if self.is_zero() {
            return Ok(Self::zero());
        }
        Ok(Self {
            logmod: self.logmod - rhs.logmod,
            arg: wrap_angle(self.arg - rhs.arg),
        })
    }

    /// Multiplicative inverse.
    pub fn recip(&self) -> Result<Self, LogCplxError> {
        Self::one().div(self)
    }

    pub fn neg(&self) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        Self {
            logmod: self.logmod,
            arg: wrap_angle(self.arg + PI),
        }
    }

    /// Compare with caller-supplied tolerances on each component. The
    /// argument difference is taken circularly.
    pub fn close_to(&self, rhs: &Self, logmod_tol: f64, arg_tol: f64) -> bool {
        if self.is_zero() || rhs.is_zero() {
            return self.is_zero() == rhs.is_zero();
        }
        (self.logmod - rhs.logmod).abs() <= logmod_tol
            && wrap_angle(self.arg - rhs.arg).abs() <= arg_tol
    }
}

impl From<Complex64> for LogComplex {
    fn from(w: Complex64) -> Self {
        Self::from_cartesian(w)
    }
}

/// JSON shape: `{"logmod": <number or "-inf">, "arg": <number>}`.
#[derive(Serialize, Deserialize)]
struct LogComplexRepr {
    logmod: LogmodField,
    arg: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LogmodField {
    Num(f64),
    Tag(String),
}

impl From<LogComplex> for LogComplexRepr {
    fn from(x: LogComplex) -> Self {
        let logmod = if x.logmod == f64::NEG_INFINITY {
            LogmodField::Tag("-inf".to_string())
        } else {
            LogmodField::Num(x.logmod)
        };
        LogComplexRepr { logmod, arg: x.arg }
    }
}

impl TryFrom<LogComplexRepr> for LogComplex {
    type Error = String;

    fn try_from(r: LogComplexRepr) -> Result<Self, Self::Error> {
        let logmod = match r.logmod {
            LogmodField::Num(v) => v,
            LogmodField::Tag(s) if s == "-inf" => f64::NEG_INFINITY,
            LogmodField::Tag(s) => return Err(format!("unrecognized logmod tag {s:?}")),
        };
        Ok(LogComplex::new(logmod, r.arg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn native_log_limit_matches_f64_max() {
        assert!((NATIVE_LOG_LIMIT - (f64::MAX.ln() - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn from_cartesian_basics() {
        let x = LogComplex::from_cartesian(Complex64::new(1.0, 0.0));
        assert_eq!(x.logmod(), 0.0);
        assert_eq!(x.arg(), 0.0);

        let z = LogComplex::from_cartesian(Complex64::new(0.0, 0.0));
        assert!(z.is_zero());
        assert_eq!(z.arg(), 0.0);

        let d = LogComplex::from_cartesian(Complex64::new(0.0, -1.0));
        assert!(close(d.logmod(), 0.0, 1e-15));
        assert!(close(d.arg(), -PI / 2.0, 1e-15));
    }

    #[test]
    fn to_cartesian_basics() {
        let one = LogComplex::new(0.0, 0.0).to_cartesian().unwrap();
        assert_eq!(one, Complex64::new(1.0, 0.0));

        let m2 = LogComplex::new(2.0_f64.ln(), PI).to_cartesian().unwrap();
        assert!(close(m2.re, -2.0, 1e-15));
        assert!(close(m2.im, 0.0, 1e-15));

        let err = LogComplex::new(1e6, 0.0).to_cartesian();
        assert!(matches!(err, Err(LogCplxError::RangeExceeded { .. })));
    }

    #[test]
    fn mul_and_wrap() {
        let x = LogComplex::new(1.5, 0.4);
        assert_eq!(x.mul(&LogComplex::one()), x);

        let a = LogComplex::new(3.0, PI / 2.0);
        let b = LogComplex::new(4.0, PI);
        let p = a.mul(&b);
        assert_eq!(p.logmod(), 7.0);
        assert!(close(p.arg(), -PI / 2.0, 1e-15));

        assert!(x.mul(&LogComplex::zero()).is_zero());
    }

    #[test]
    fn div_errors_on_zero() {
        let x = LogComplex::new(1.0, 0.2);
        assert_eq!(
            x.div(&LogComplex::zero()),
            Err(LogCplxError::DivisionByZero)
        );
        assert!(LogComplex::zero().div(&x).unwrap().is_zero());
    }

    #[test]
    fn exp_of_basics() {
        let e0 = LogComplex::exp_of(Complex64::new(0.0, 0.0));
        assert_eq!(e0, LogComplex::one());

        let big = LogComplex::exp_of(Complex64::new(700.0, 0.0));
        assert_eq!(big.logmod(), 700.0);
        assert_eq!(big.arg(), 0.0);

        let p = LogComplex::exp_of(Complex64::new(1.0, PI));
        assert_eq!(p.logmod(), 1.0);
        assert_eq!(p.arg(), PI);
    }

    #[test]
    fn minus_pi_wraps_to_pi() {
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(3.0 * PI), PI);
    }

    #[test]
    fn roundtrip_within_tolerance() {
        let w = Complex64::new(-3.25, 1.75);
        let back = LogComplex::from_cartesian(w).to_cartesian().unwrap();
        assert!((back - w).norm() <= 1e-12 * w.norm());
    }

    #[test]
    fn json_shape_and_roundtrip() {
        let x = LogComplex::new(2.5, -0.75);
        let s = serde_json::to_string(&x).unwrap();
        assert_eq!(s, r#"{"logmod":2.5,"arg":-0.75}"#);
        let y: LogComplex = serde_json::from_str(&s).unwrap();
        assert_eq!(x, y);

        let z = serde_json::to_string(&LogComplex::zero()).unwrap();
        assert_eq!(z, r#"{"logmod":"-inf","arg":0.0}"#);
        let back: LogComplex = serde_json::from_str(&z).unwrap();
        assert!(back.is_zero());
    }
}
