//! The push-forward (Ruelle) operator of the exponential family.
//!
//! Numerically the operator is an inverse-branch sum,
//! `R*(phi)(z) = (1/(lambda z)^2) sum_k phi(xi_k)` with
//! `xi_k = (Log z + 2 pi i k)/lambda`, and exactly it acts on the rational
//! basis `gamma_a(z) = a(a-1)/(z(z-1)(z-a))` by
//!
//! ```text
//! R*(gamma_a) = (1/f'(a)) gamma_{f(a)} - (a/f'(1)) gamma_{f(1)}
//! ```
//!
//! so finite combinations of `gamma_a` are closed under the operator. One
//! extension keeps that closure honest in floating point: when an image pole
//! `f(a)` leaves the native range, the term `c * gamma_{f(a)}` collapses (to
//! f64 precision, the corrections are below `e^-700`) onto the pole-at-
//! infinity basis function `eta(z) = 1/(z(z-1))`, the limit of
//! `-gamma_a/(a-1)` as `a -> inf`, with weight `w = -c * (f(a)-1)` carried in
//! log-polar form. The same distributional computation that proves the
//! closed form gives `R*(eta) = (1/f'(1)) gamma_{f(1)}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logcplx::{LogComplex, NATIVE_LOG_LIMIT};
use crate::orbit::{self, OrbitParams};
use crate::series::{self, SeriesParams};

/// Default merge/guard radius for poles. Below this, coefficient blowup
/// dominates double precision.
pub const DEFAULT_POLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PoleFactor {
    /// The `z` factor vanished.
    Zero,
    /// The `z - 1` factor vanished.
    One,
    /// A `z - a` factor vanished; carries the pole.
    Pole(Complex64),
}

impl std::fmt::Display for PoleFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PoleFactor::Zero => write!(f, "z = 0"),
            PoleFactor::One => write!(f, "z = 1"),
            PoleFactor::Pole(a) => write!(f, "z = {} + {}i", a.re, a.im),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuelleError {
    #[error("evaluation hit the pole {factor}{}", branch.map(|k| format!(" (branch k = {k})")).unwrap_or_default())]
    PoleHit {
        factor: PoleFactor,
        branch: Option<i64>,
    },
    #[error("a gamma term may not have its pole at 0 or 1 (pole = {re} + {im}i)")]
    ForbiddenPole { re: f64, im: f64 },
    #[error("the image f({re} + {im}i) of a pole lands on 0 or 1")]
    ImageAtForbiddenPole { re: f64, im: f64 },
    #[error("branch ladder needs z != 0")]
    ZeroArgument,
    #[error("lambda must be nonzero")]
    LambdaZero,
    #[error("value left the native floating-point range (logmod {logmod})")]
    RangeExceeded { logmod: f64 },
    #[error("Moebius conjugation degenerate: {reason} (y = {re} + {im}i)")]
    MoebiusDegenerate { re: f64, im: f64, reason: &'static str },
    #[error("no grid points remain outside the exclusion radius")]
    EmptyGridAfterExclusion,
    #[error(transparent)]
    Series(#[from] series::SeriesError),
}

/// One basis term `coef * gamma_pole`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaTerm {
    pub coef: Complex64,
    pub pole: Complex64,
}

/// A finite combination `sum_i c_i gamma_{a_i} + w * eta`, the representation
/// closed under the push-forward operator.
///
/// Poles within `pole_tol` of each other are merged on construction
/// (coefficients add); poles within `pole_tol` of 0 or 1 are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TermRepr>", into = "Vec<TermRepr>")]
pub struct GammaCombo {
    terms: Vec<GammaTerm>,
    far_coef: Complex64,
    pole_tol: f64,
}

impl GammaCombo {
    pub fn empty() -> Self {
        Self {
            terms: Vec::new(),
            far_coef: Complex64::new(0.0, 0.0),
            pole_tol: DEFAULT_POLE_TOL,
        }
    }

    pub fn with_pole_tol(pole_tol: f64) -> Self {
        Self {
            terms: Vec::new(),
            far_coef: Complex64::new(0.0, 0.0),
            pole_tol,
        }
    }

    pub fn new(
        terms: impl IntoIterator<Item = (Complex64, Complex64)>,
        pole_tol: f64,
    ) -> Result<Self, RuelleError> {
        let mut combo = Self::with_pole_tol(pole_tol);
        for (coef, pole) in terms {
            combo.add_term(coef, pole)?;
        }
        Ok(combo)
    }

    pub fn from_terms(
        terms: impl IntoIterator<Item = (Complex64, Complex64)>,
    ) -> Result<Self, RuelleError> {
        Self::new(terms, DEFAULT_POLE_TOL)
    }

    /// `gamma_a` with unit coefficient.
    pub fn gamma(pole: Complex64) -> Result<Self, RuelleError> {
        Self::from_terms([(Complex64::new(1.0, 0.0), pole)])
    }

    pub fn terms(&self) -> &[GammaTerm] {
        &self.terms
    }

    pub fn far_coef(&self) -> Complex64 {
        self.far_coef
    }

    pub fn pole_tol(&self) -> f64 {
        self.pole_tol
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty() && self.far_coef == Complex64::new(0.0, 0.0)
    }

    pub fn poles(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.terms.iter().map(|t| t.pole)
    }

    /// Insert a term, merging with an existing pole within `pole_tol`.
    /// Terms whose coefficient cancels to exactly zero are dropped.
    pub fn add_term(&mut self, coef: Complex64, pole: Complex64) -> Result<(), RuelleError> {
        if pole.norm() < self.pole_tol || (pole - Complex64::new(1.0, 0.0)).norm() < self.pole_tol
        {
            return Err(RuelleError::ForbiddenPole {
                re: pole.re,
                im: pole.im,
            });
        }
        if coef == Complex64::new(0.0, 0.0) {
            return Ok(());
        }
        if let Some(t) = self
            .terms
            .iter_mut()
            .find(|t| (t.pole - pole).norm() < self.pole_tol)
        {
            t.coef += coef;
        } else {
            self.terms.push(GammaTerm { coef, pole });
        }
        self.terms.retain(|t| t.coef != Complex64::new(0.0, 0.0));
        Ok(())
    }

    /// Add to the pole-at-infinity coefficient.
    pub fn add_far(&mut self, coef: Complex64) {
        self.far_coef += coef;
    }

    /// Evaluate at `z`; errors when `z` is within `pole_tol` of 0, 1, or a
    /// pole, identifying which factor vanished.
    pub fn eval(&self, z: Complex64) -> Result<Complex64, RuelleError> {
        self.guard(z, None)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            acc += t.coef * t.pole * (t.pole - 1.0) / (z * (z - 1.0) * (z - t.pole));
        }
        if self.far_coef != Complex64::new(0.0, 0.0) {
            acc += self.far_coef / (z * (z - 1.0));
        }
        Ok(acc)
    }

    fn guard(&self, z: Complex64, branch: Option<i64>) -> Result<(), RuelleError> {
        if z.norm() < self.pole_tol {
            return Err(RuelleError::PoleHit {
                factor: PoleFactor::Zero,
                branch,
            });
        }
        if (z - Complex64::new(1.0, 0.0)).norm() < self.pole_tol {
            return Err(RuelleError::PoleHit {
                factor: PoleFactor::One,
                branch,
            });
        }
        for t in &self.terms {
            if (z - t.pole).norm() < self.pole_tol {
                return Err(RuelleError::PoleHit {
                    factor: PoleFactor::Pole(t.pole),
                    branch,
                });
            }
        }
        Ok(())
    }

    /// Coefficient at `pole` (within `pole_tol`), if present.
    pub fn coef_at(&self, pole: Complex64) -> Option<Complex64> {
        self.terms
            .iter()
            .find(|t| (t.pole - pole).norm() < self.pole_tol)
            .map(|t| t.coef)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.coef *= c;
        }
        out.far_coef *= c;
        out.terms.retain(|t| t.coef != Complex64::new(0.0, 0.0));
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self, RuelleError> {
        let mut out = self.clone();
        for t in &other.terms {
            out.add_term(t.coef, t.pole)?;
        }
        out.add_far(other.far_coef);
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, RuelleError> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Drop terms whose coefficient is below `rel_tol` times the largest
    /// coefficient magnitude; used to inspect the support of differences
    /// that cancel up to floating-point noise.
    pub fn pruned(&self, rel_tol: f64) -> Self {
        let scale = self
            .terms
            .iter()
            .map(|t| t.coef.norm())
            .chain(std::iter::once(self.far_coef.norm()))
            .fold(0.0_f64, f64::max);
        let mut out = self.clone();
        out.terms.retain(|t| t.coef.norm() > rel_tol * scale);
        if out.far_coef.norm() <= rel_tol * scale {
            out.far_coef = Complex64::new(0.0, 0.0);
        }
        out
    }
}

/// JSON shape: `[{"coef": [re, im], "pole": [re, im] | null}, ...]`; a null
/// pole is the pole-at-infinity term.
#[derive(Serialize, Deserialize)]
struct TermRepr {
    coef: [f64; 2],
    pole: Option<[f64; 2]>,
}

impl From<GammaCombo> for Vec<TermRepr> {
    fn from(c: GammaCombo) -> Self {
        let mut v: Vec<TermRepr> = c
            .terms
            .iter()
            .map(|t| TermRepr {
                coef: [t.coef.re, t.coef.im],
                pole: Some([t.pole.re, t.pole.im]),
            })
            .collect();
        if c.far_coef != Complex64::new(0.0, 0.0) {
            v.push(TermRepr {
                coef: [c.far_coef.re, c.far_coef.im],
                pole: None,
            });
        }
        v
    }
}

impl TryFrom<Vec<TermRepr>> for GammaCombo {
    type Error = String;

    fn try_from(v: Vec<TermRepr>) -> Result<Self, Self::Error> {
        let mut combo = GammaCombo::empty();
        for t in v {
            let coef = Complex64::new(t.coef[0], t.coef[1]);
            match t.pole {
                Some(p) => combo
                    .add_term(coef, Complex64::new(p[0], p[1]))
                    .map_err(|e| e.to_string())?,
                None => combo.add_far(coef),
            }
        }
        Ok(combo)
    }
}

/// `gamma_a(z) = a(a-1)/(z(z-1)(z-a))` with pole diagnostics.
pub fn gamma_eval(a: Complex64, z: Complex64) -> Result<Complex64, RuelleError> {
    gamma_eval_tol(a, z, DEFAULT_POLE_TOL)
}

pub fn gamma_eval_tol(a: Complex64, z: Complex64, tol: f64) -> Result<Complex64, RuelleError> {
    if a.norm() < tol || (a - Complex64::new(1.0, 0.0)).norm() < tol {
        return Err(RuelleError::ForbiddenPole { re: a.re, im: a.im });
    }
    if z.norm() < tol {
        return Err(RuelleError::PoleHit {
            factor: PoleFactor::Zero,
            branch: None,
        });
    }
    if (z - Complex64::new(1.0, 0.0)).norm() < tol {
        return Err(RuelleError::PoleHit {
            factor: PoleFactor::One,
            branch: None,
        });
    }
    if (z - a).norm() < tol {
        return Err(RuelleError::PoleHit {
            factor: PoleFactor::Pole(a),
            branch: None,
        });
    }
    Ok(a * (a - 1.0) / (z * (z - 1.0) * (z - a)))
}

/// The inverse branches `xi_k = (Log z + 2 pi i k)/lambda`, `k = -K..=K`.
#[derive(Debug, Clone, Serialize)]
pub struct BranchSet {
    pub lambda: Complex64,
    pub z: Complex64,
    pub k_max: i64,
    pub values: Vec<Complex64>,
}

impl BranchSet {
    pub fn new(lambda: Complex64, z: Complex64, k_max: i64) -> Result<Self, RuelleError> {
        if lambda.norm() == 0.0 {
            return Err(RuelleError::LambdaZero);
        }
        if z.norm() == 0.0 {
            return Err(RuelleError::ZeroArgument);
        }
        let log_z = z.ln();
        let values = (-k_max..=k_max)
            .map(|k| {
                (log_z + Complex64::new(0.0, 2.0 * std::f64::consts::PI * k as f64)) / lambda
            })
            .collect();
        Ok(Self {
            lambda,
            z,
            k_max,
            values,
        })
    }

    /// Largest relative defect `|exp(lambda xi_k) - z| / |z|` over branches
    /// whose exponent stays in native range.
    pub fn max_branch_defect(&self) -> f64 {
        self.values
            .iter()
            .filter(|xi| (self.lambda * *xi).re.abs() < NATIVE_LOG_LIMIT)
            .map(|xi| ((self.lambda * xi).exp() - self.z).norm() / self.z.norm())
            .fold(0.0, f64::max)
    }
}

/// Deterministic pairwise reduction in fixed index order.
fn pairwise_sum_c(vals: &[Complex64]) -> Complex64 {
    if vals.len() <= 8 {
        let mut s = Complex64::new(0.0, 0.0);
        for v in vals {
            s += v;
        }
        return s;
    }
    let mid = vals.len() / 2;
    pairwise_sum_c(&vals[..mid]) + pairwise_sum_c(&vals[mid..])
}

fn pairwise_sum_f(vals: &[f64]) -> f64 {
    if vals.len() <= 8 {
        return vals.iter().sum();
    }
    let mid = vals.len() / 2;
    pairwise_sum_f(&vals[..mid]) + pairwise_sum_f(&vals[mid..])
}

/// `R*(combo)(z)` as a truncated branch sum:
/// `(1/(lambda z)^2) sum_{k=-K}^{K} combo(xi_k)`.
pub fn branch_sum(
    lambda: Complex64,
    combo: &GammaCombo,
    z: Complex64,
    k_max: i64,
) -> Result<Complex64, RuelleError> {
    assert!(k_max >= 1, "need at least one branch pair");
    let branches = BranchSet::new(lambda, z, k_max)?;
    let mut vals = Vec::with_capacity(branches.values.len());
    for (idx, xi) in branches.values.iter().enumerate() {
        let k = idx as i64 - k_max;
        let v = combo.eval(*xi).map_err(|e| match e {
            RuelleError::PoleHit { factor, .. } => RuelleError::PoleHit {
                factor,
                branch: Some(k),
            },
            other => other,
        })?;
        vals.push(v);
    }
    let s = pairwise_sum_c(&vals);
    let lz = lambda * z;
    Ok(s / (lz * lz))
}

/// `(R*)^2(combo)(z)` evaluated purely through branch ladders: the outer
/// ladder feeds every branch value through a full inner branch sum. The
/// numeric cross-check for the iterated closed form.
pub fn nested_branch_sum(
    lambda: Complex64,
    combo: &GammaCombo,
    z: Complex64,
    k_outer: i64,
    k_inner: i64,
) -> Result<Complex64, RuelleError> {
    assert!(k_outer >= 1 && k_inner >= 1);
    let outer = BranchSet::new(lambda, z, k_outer)?;
    let mut vals = Vec::with_capacity(outer.values.len());
    for xi in &outer.values {
        vals.push(branch_sum(lambda, combo, *xi, k_inner)?);
    }
    let s = pairwise_sum_c(&vals);
    let lz = lambda * z;
    Ok(s / (lz * lz))
}

/// `|R*|(|combo|)(z) = (1/|lambda z|^2) sum_k |combo(xi_k)|`; always at
/// least `|branch_sum|` by the triangle inequality.
pub fn modulus_branch_sum(
    lambda: Complex64,
    combo: &GammaCombo,
    z: Complex64,
    k_max: i64,
) -> Result<f64, RuelleError> {
    assert!(k_max >= 1, "need at least one branch pair");
    let branches = BranchSet::new(lambda, z, k_max)?;
    let mut vals = Vec::with_capacity(branches.values.len());
    for (idx, xi) in branches.values.iter().enumerate() {
        let k = idx as i64 - k_max;
        let v = combo.eval(*xi).map_err(|e| match e {
            RuelleError::PoleHit { factor, .. } => RuelleError::PoleHit {
                factor,
                branch: Some(k),
            },
            other => other,
        })?;
        vals.push(v.norm());
    }
    let s = pairwise_sum_f(&vals);
    Ok(s / (lambda * z).norm_sqr())
}

/// Route a term `coef * gamma_pole` (both in log-polar form) into a combo:
/// native poles become ordinary terms, poles beyond native range fold onto
/// the pole-at-infinity function with weight `-coef * (pole - 1)`.
fn add_gamma_term_lc(
    combo: &mut GammaCombo,
    coef: LogComplex,
    pole: LogComplex,
) -> Result<(), RuelleError> {
    if coef.is_zero() {
        return Ok(());
    }
    if pole.is_native_representable() {
        let p = pole.to_cartesian().expect("checked representable");
        let c = match coef.to_cartesian() {
            Ok(c) => c,
            Err(_) => {
                return Err(RuelleError::RangeExceeded {
                    logmod: coef.logmod(),
                })
            }
        };
        if c == Complex64::new(0.0, 0.0) {
            return Ok(()); // underflowed to an exact zero
        }
        combo.add_term(c, p)
    } else {
        // |pole| >= e^708, so pole - 1 == pole to f64 precision
        let w = coef.mul(&pole).neg();
        match w.to_cartesian() {
            Ok(w) => {
                combo.add_far(w);
                Ok(())
            }
            Err(_) => Err(RuelleError::RangeExceeded { logmod: w.logmod() }),
        }
    }
}

/// Closed-form action on the basis:
/// `R*(gamma_a) = (1/f'(a)) gamma_{f(a)} - (a/f'(1)) gamma_{f(1)}` applied
/// term by term, plus `R*(eta) = (1/f'(1)) gamma_{f(1)}` for the
/// pole-at-infinity part. Image poles are merged per the combo invariant.
pub fn push_forward(lambda: Complex64, combo: &GammaCombo) -> Result<GammaCombo, RuelleError> {
    if lambda.norm() == 0.0 {
        return Err(RuelleError::LambdaZero);
    }
    let lambda_lc = LogComplex::from_cartesian(lambda);
    let d_lc = LogComplex::exp_of(lambda); // f(1)
    let fp1_lc = lambda_lc.mul(&d_lc); // f'(1)
    let tol = combo.pole_tol();

    // f(1) within tol of 1 means lambda is (numerically) in 2 pi i Z
    if d_lc.is_native_representable() {
        let d = d_lc.to_cartesian().expect("checked");
        if d.norm() < tol || (d - Complex64::new(1.0, 0.0)).norm() < tol {
            return Err(RuelleError::ImageAtForbiddenPole { re: 1.0, im: 0.0 });
        }
    }

    let mut out = GammaCombo::with_pole_tol(tol);
    for t in &combo.terms {
        let la = lambda * t.pole;
        if !la.re.is_finite() || !la.im.is_finite() {
            return Err(RuelleError::RangeExceeded {
                logmod: f64::INFINITY,
            });
        }
        let fa_lc = LogComplex::exp_of(la);
        // image collapsing onto 0 or 1 is a genuine obstruction, not a
        // representation problem
        if fa_lc.logmod() < tol.ln() {
            return Err(RuelleError::ImageAtForbiddenPole {
                re: t.pole.re,
                im: t.pole.im,
            });
        }
        if fa_lc.is_native_representable() {
            let fa = fa_lc.to_cartesian().expect("checked");
            if (fa - Complex64::new(1.0, 0.0)).norm() < tol {
                return Err(RuelleError::ImageAtForbiddenPole {
                    re: t.pole.re,
                    im: t.pole.im,
                });
            }
        }
        let fpa_lc = lambda_lc.mul(&fa_lc); // f'(a) = lambda f(a)
        let coef_img = LogComplex::from_cartesian(t.coef)
            .div(&fpa_lc)
            .expect("f'(a) never vanishes");
        add_gamma_term_lc(&mut out, coef_img, fa_lc)?;

        // -(coef * a / f'(1)) gamma_{f(1)}
        let coef_d = LogComplex::from_cartesian(t.coef)
            .mul(&LogComplex::from_cartesian(t.pole))
            .div(&fp1_lc)
            .expect("f'(1) never vanishes")
            .neg();
        add_gamma_term_lc(&mut out, coef_d, d_lc)?;
    }
    if combo.far_coef != Complex64::new(0.0, 0.0) {
        let coef_d = LogComplex::from_cartesian(combo.far_coef)
            .div(&fp1_lc)
            .expect("f'(1) never vanishes");
        add_gamma_term_lc(&mut out, coef_d, d_lc)?;
    }
    Ok(out)
}

/// `(R*)^n` by repeated application; `n = 0` is the identity.
pub fn push_forward_iter(
    lambda: Complex64,
    combo: &GammaCombo,
    n: usize,
) -> Result<GammaCombo, RuelleError> {
    let mut acc = combo.clone();
    for _ in 0..n {
        acc = push_forward(lambda, &acc)?;
    }
    Ok(acc)
}

/// The cascade weights of the iterated closed form:
/// `w_j = -f^j(a) / ((f^j)'(a) f'(1))` for `j = 0..n`, the coefficients that
/// multiply `(R*)^{n-1-j}(gamma_{f(1)})` in the expansion of `(R*)^n(gamma_a)`.
pub fn star_weights(
    lambda: Complex64,
    a: Complex64,
    n: usize,
) -> Result<Vec<Complex64>, RuelleError> {
    if lambda.norm() == 0.0 {
        return Err(RuelleError::LambdaZero);
    }
    let params = OrbitParams {
        escape_log_threshold: NATIVE_LOG_LIMIT,
        cycle_tol: 0.0,
        ..OrbitParams::default()
    };
    let rec = orbit::orbit(lambda, a, n.max(1), &params);
    let fp1 = LogComplex::from_cartesian(lambda).mul(&LogComplex::exp_of(lambda));
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        if j >= rec.points.len() {
            out.push(Complex64::new(0.0, 0.0)); // beyond escape: below 1e-300
            continue;
        }
        let w = rec.points[j]
            .div(&rec.dlog[j])
            .expect("cocycle nonzero")
            .div(&fp1)
            .expect("f'(1) nonzero")
            .neg();
        match w.to_cartesian() {
            Ok(v) => out.push(v),
            Err(_) => return Err(RuelleError::RangeExceeded { logmod: w.logmod() }),
        }
    }
    Ok(out)
}

/// The `N`-term truncation of
/// `phi(z) = sum_{n>=0} (1/(f^n)'(d)) gamma_{f^n(d)}(z)`, `d = f(1)`.
///
/// Orbit poles that leave the native range fold onto the pole-at-infinity
/// term; once the orbit itself escapes representability, the remaining
/// coefficients are below `1e-300` and are dropped.
pub fn phi_truncation(lambda: Complex64, n: usize) -> Result<GammaCombo, RuelleError> {
    phi_truncation_tol(lambda, n, DEFAULT_POLE_TOL)
}

pub fn phi_truncation_tol(
    lambda: Complex64,
    n: usize,
    pole_tol: f64,
) -> Result<GammaCombo, RuelleError> {
    if lambda.norm() == 0.0 {
        return Err(RuelleError::LambdaZero);
    }
    let d_lc = LogComplex::exp_of(lambda);
    let d = d_lc
        .to_cartesian()
        .map_err(|_| RuelleError::RangeExceeded {
            logmod: d_lc.logmod(),
        })?;
    let params = OrbitParams {
        escape_log_threshold: NATIVE_LOG_LIMIT,
        cycle_tol: 0.0,
        ..OrbitParams::default()
    };
    let rec = orbit::orbit(lambda, d, n.max(1), &params);
    let mut combo = GammaCombo::with_pole_tol(pole_tol);
    for j in 0..n.min(rec.points.len()) {
        let coef = rec.dlog[j].recip().expect("cocycle nonzero");
        add_gamma_term_lc(&mut combo, coef, rec.points[j])?;
    }
    Ok(combo)
}

/// Residual of the fixed-point identity `R*(phi) = phi` at truncation `N`.
///
/// The truncated difference telescopes onto a single pole:
/// `R*(phi_N) - phi_N = -gamma_{f(1)} (1 + B_N(f(1)))` up to terms below
/// double precision, so the residual is reported next to `|1 + B_N|`.
#[derive(Debug, Clone, Serialize)]
pub struct FixedPointResidual {
    pub samples: Vec<Complex64>,
    /// `|R*(phi_N)(z) - phi_N(z)|` per sample.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// `|gamma_{f(1)}(z)|` per sample, the predicted residual shape.
    pub gamma_abs: Vec<f64>,
    /// `|1 + B_N(f(1))|`.
    pub b_plus_one_abs: f64,
    /// Worst relative disagreement between `residuals` and
    /// `gamma_abs * b_plus_one_abs`.
    pub max_shape_mismatch: f64,
}

pub fn fixed_point_residual(
    lambda: Complex64,
    n: usize,
    sample_points: &[Complex64],
) -> Result<FixedPointResidual, RuelleError> {
    let phi = phi_truncation(lambda, n)?;
    let pf = push_forward(lambda, &phi)?;
    let d = lambda.exp();
    let sparams = SeriesParams {
        escape_log_threshold: NATIVE_LOG_LIMIT,
        ..SeriesParams::default()
    };
    let b = series::b_series(lambda, d, n, &sparams)?;
    let b_plus_one_abs = (b.sum() + Complex64::new(1.0, 0.0)).norm();

    let mut residuals = Vec::with_capacity(sample_points.len());
    let mut gamma_abs = Vec::with_capacity(sample_points.len());
    let mut max_residual = 0.0_f64;
    let mut max_shape_mismatch = 0.0_f64;
    for &z in sample_points {
        let r = (pf.eval(z)? - phi.eval(z)?).norm();
        let g = gamma_eval_tol(d, z, phi.pole_tol())?.norm();
        let predicted = g * b_plus_one_abs;
        if predicted > 0.0 {
            max_shape_mismatch = max_shape_mismatch.max((r - predicted).abs() / predicted);
        }
        max_residual = max_residual.max(r);
        residuals.push(r);
        gamma_abs.push(g);
    }
    Ok(FixedPointResidual {
        samples: sample_points.to_vec(),
        residuals,
        max_residual,
        gamma_abs,
        b_plus_one_abs,
        max_shape_mismatch,
    })
}

/// Residual of the Moebius conjugation identity `G(g(z)) g'(z) = phi(z)`
/// with `g(z) = y z / (z + y - 1)` and `G` built from the three truncated
/// sums (`C1/z`, `-C2/(z-1)`, and the shifted-pole sum over `g(f^i(d))`).
#[derive(Debug, Clone, Serialize)]
pub struct MobiusResidual {
    pub samples: Vec<Complex64>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub c1: Complex64,
    pub c2: Complex64,
}

pub fn mobius_identity_residual(
    lambda: Complex64,
    y: Complex64,
    n: usize,
    sample_points: &[Complex64],
) -> Result<MobiusResidual, RuelleError> {
    let tol = DEFAULT_POLE_TOL;
    if y.norm() < tol || (y - Complex64::new(1.0, 0.0)).norm() < tol {
        return Err(RuelleError::MoebiusDegenerate {
            re: y.re,
            im: y.im,
            reason: "y in {0, 1} makes g constant or undefined",
        });
    }
    if lambda.norm() == 0.0 {
        return Err(RuelleError::LambdaZero);
    }
    let phi = phi_truncation(lambda, n)?;
    // the conjugation moves 1 - y to infinity; it must not sit on a pole
    let one_minus_y = Complex64::new(1.0, 0.0) - y;
    for p in phi.poles() {
        if (p - one_minus_y).norm() < tol {
            return Err(RuelleError::MoebiusDegenerate {
                re: y.re,
                im: y.im,
                reason: "1 - y coincides with a pole of phi_N",
            });
        }
    }

    let d_lc = LogComplex::exp_of(lambda);
    let d = d_lc
        .to_cartesian()
        .map_err(|_| RuelleError::RangeExceeded {
            logmod: d_lc.logmod(),
        })?;
    let params = OrbitParams {
        escape_log_threshold: NATIVE_LOG_LIMIT,
        cycle_tol: 0.0,
        ..OrbitParams::default()
    };
    let rec = orbit::orbit(lambda, d, n.max(1), &params);

    let g = |z: Complex64| y * z / (z + y - 1.0);
    let gp = |z: Complex64| {
        let den = z + y - 1.0;
        y * (y - 1.0) / (den * den)
    };

    // C1 = sum (f^i(d) - 1)/(f^i)'(d), C2 = sum f^i(d)/(f^i)'(d), both with
    // terms formed in log-polar; for far orbit points f^i(d) - 1 == f^i(d).
    let mut c1 = Complex64::new(0.0, 0.0);
    let mut c2 = Complex64::new(0.0, 0.0);
    let mut shifted: Vec<(Complex64, Complex64)> = Vec::new(); // (c_i, g(a_i))
    let native_or_zero = |x: LogComplex| x.to_cartesian().unwrap_or(Complex64::new(0.0, 0.0));
    for i in 0..n.min(rec.points.len()) {
        let inv_d = rec.dlog[i].recip().expect("cocycle nonzero");
        let a_lc = rec.points[i];
        let t2 = native_or_zero(a_lc.mul(&inv_d));
        c2 += t2;
        if a_lc.is_native_representable() {
            let a = a_lc.to_cartesian().expect("checked");
            c1 += native_or_zero(LogComplex::from_cartesian(a - 1.0).mul(&inv_d));
            if (a + y - 1.0).norm() < tol {
                return Err(RuelleError::MoebiusDegenerate {
                    re: y.re,
                    im: y.im,
                    reason: "an orbit pole sits on the pole of g",
                });
            }
            shifted.push((native_or_zero(inv_d), g(a)));
        } else {
            // (a - 1)/(f^i)'(d) == a/(f^i)'(d) at this magnitude, and
            // g(a) == y with the coefficient underflowing to zero
            c1 += t2;
            shifted.push((Complex64::new(0.0, 0.0), y));
        }
    }

    let eval_g_series = |u: Complex64| -> Result<Complex64, RuelleError> {
        if u.norm() < tol {
            return Err(RuelleError::PoleHit {
                factor: PoleFactor::Zero,
                branch: None,
            });
        }
        if (u - Complex64::new(1.0, 0.0)).norm() < tol {
            return Err(RuelleError::PoleHit {
                factor: PoleFactor::One,
                branch: None,
            });
        }
        let mut s = c1 / u - c2 / (u - 1.0);
        for (c, pole) in &shifted {
            if *c == Complex64::new(0.0, 0.0) {
                continue;
            }
            if (u - pole).norm() < tol {
                return Err(RuelleError::PoleHit {
                    factor: PoleFactor::Pole(*pole),
                    branch: None,
                });
            }
            s += c / (u - pole);
        }
        Ok(s)
    };

    let mut residuals = Vec::with_capacity(sample_points.len());
    let mut max_residual = 0.0_f64;
    for &z in sample_points {
        if (z + y - 1.0).norm() < tol {
            return Err(RuelleError::MoebiusDegenerate {
                re: y.re,
                im: y.im,
                reason: "sample point sits on the pole of g",
            });
        }
        let lhs = eval_g_series(g(z))? * gp(z);
        let rhs = phi.eval(z)?;
        let r = (lhs - rhs).norm();
        max_residual = max_residual.max(r);
        residuals.push(r);
    }
    Ok(MobiusResidual {
        samples: sample_points.to_vec(),
        residuals,
        max_residual,
        c1,
        c2,
    })
}

/// Minimum modulus of a combo over a grid, skipping points within
/// `exclusion_radius` of any pole (and of 0 and 1). Numeric evidence of
/// nonvanishing, never a proof.
#[derive(Debug, Clone, Serialize)]
pub struct NonvanishingScan {
    pub min_abs: f64,
    pub argmin: Complex64,
    pub evaluated: usize,
    pub excluded: usize,
}

pub fn nonvanishing_scan(
    combo: &GammaCombo,
    grid: &[Complex64],
    exclusion_radius: f64,
) -> Result<NonvanishingScan, RuelleError> {
    let mut best: Option<(f64, Complex64)> = None;
    let mut evaluated = 0usize;
    let mut excluded = 0usize;
    for &z in grid {
        let near_special = z.norm() < exclusion_radius
            || (z - Complex64::new(1.0, 0.0)).norm() < exclusion_radius
            || combo
                .poles()
                .any(|p| (z - p).norm() < exclusion_radius);
        if near_special {
            excluded += 1;
            continue;
        }
        let v = combo.eval(z)?.norm();
        evaluated += 1;
        if best.map(|(m, _)| v < m).unwrap_or(true) {
            best = Some((v, z));
        }
    }
    match best {
        Some((min_abs, argmin)) => Ok(NonvanishingScan {
            min_abs,
            argmin,
            evaluated,
            excluded,
        }),
        None => Err(RuelleError::EmptyGridAfterExclusion),
    }
}

/// Rectangular grid helper for scans: row-major points spaced `step` apart.
pub fn rect_grid(re_min: f64, re_max: f64, im_min: f64, im_max: f64, step: f64) -> Vec<Complex64> {
    assert!(step > 0.0);
    let mut pts = Vec::new();
    let mut im = im_min;
    while im <= im_max + step * 0.5 {
        let mut re = re_min;
        while re <= re_max + step * 0.5 {
            pts.push(Complex64::new(re, im));
            re += step;
        }
        im += step;
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    const E: f64 = std::f64::consts::E;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn gamma_eval_small_integers() {
        let v = gamma_eval(c(2.0, 0.0), c(3.0, 0.0)).unwrap();
        assert!(close(v, c(1.0 / 3.0, 0.0), 1e-15));
    }

    #[test]
    fn gamma_eval_at_e_squared() {
        let v = gamma_eval(c(E * E, 0.0), c(3.0, 0.0)).unwrap();
        assert!((v.re - (-1.792_682_104_082_911)).abs() < 1e-12);
    }

    #[test]
    fn gamma_eval_pole_hits() {
        let err = gamma_eval(c(2.0, 0.0), c(2.0, 0.0)).unwrap_err();
        assert!(matches!(
            err,
            RuelleError::PoleHit {
                factor: PoleFactor::Pole(_),
                ..
            }
        ));
        assert!(matches!(
            gamma_eval(c(2.0, 0.0), c(0.0, 0.0)).unwrap_err(),
            RuelleError::PoleHit {
                factor: PoleFactor::Zero,
                ..
            }
        ));
        assert!(matches!(
            gamma_eval(c(0.0, 0.0), c(3.0, 0.0)).unwrap_err(),
            RuelleError::ForbiddenPole { .. }
        ));
    }

    #[test]
    fn combo_merges_nearby_poles() {
        let combo = GammaCombo::from_terms([
            (c(1.0, 0.0), c(2.0, 0.0)),
            (c(0.5, 0.0), c(2.0, 1e-12)),
        ])
        .unwrap();
        assert_eq!(combo.terms().len(), 1);
        assert!(close(combo.terms()[0].coef, c(1.5, 0.0), 1e-15));
    }

    #[test]
    fn combo_cancellation_yields_empty() {
        let combo = GammaCombo::from_terms([
            (c(0.7, -0.2), c(2.0, 1.0)),
            (c(-0.7, 0.2), c(2.0, 1.0)),
        ])
        .unwrap();
        assert!(combo.is_empty());
    }

    #[test]
    fn combo_rejects_poles_at_zero_and_one() {
        assert!(GammaCombo::gamma(c(0.0, 0.0)).is_err());
        assert!(GammaCombo::gamma(c(1.0, 1e-12)).is_err());
    }

    #[test]
    fn branch_set_inverts_the_map() {
        let bs = BranchSet::new(c(0.8, 0.4), c(2.0, -1.0), 50).unwrap();
        assert!(bs.max_branch_defect() < 1e-10);
        assert_eq!(bs.values.len(), 101);
    }

    #[test]
    fn branch_set_rejects_zero() {
        assert!(matches!(
            BranchSet::new(c(1.0, 0.0), c(0.0, 0.0), 5),
            Err(RuelleError::ZeroArgument)
        ));
    }

    #[test]
    fn push_forward_of_gamma_two_lambda_one() {
        let combo = GammaCombo::gamma(c(2.0, 0.0)).unwrap();
        let pf = push_forward(c(1.0, 0.0), &combo).unwrap();
        // (1/e^2) gamma_{e^2} - (2/e) gamma_e
        assert_eq!(pf.terms().len(), 2);
        let ce2 = pf.coef_at(c(E * E, 0.0)).unwrap();
        let ce = pf.coef_at(c(E, 0.0)).unwrap();
        assert!(close(ce2, c((-2.0_f64).exp(), 0.0), 1e-15));
        assert!(close(ce, c(-2.0 / E, 0.0), 1e-15));

        let v = pf.eval(c(3.0, 0.0)).unwrap();
        assert!((v.re - (-2.275_710_992_511_830_8)).abs() < 1e-12);
        assert!(v.im.abs() < 1e-15);
    }

    #[test]
    fn branch_sum_matches_closed_form() {
        let combo = GammaCombo::gamma(c(2.0, 0.0)).unwrap();
        let bs = branch_sum(c(1.0, 0.0), &combo, c(3.0, 0.0), 10_000).unwrap();
        let pf = push_forward(c(1.0, 0.0), &combo).unwrap();
        let cf = pf.eval(c(3.0, 0.0)).unwrap();
        assert!((bs - cf).norm() < 1e-6);
        assert!((bs.re - (-2.2757)).abs() < 1e-3);
    }

    #[test]
    fn branch_sum_of_empty_combo_is_zero() {
        let combo = GammaCombo::empty();
        let bs = branch_sum(c(1.0, 0.0), &combo, c(3.0, 0.0), 100).unwrap();
        assert_eq!(bs, c(0.0, 0.0));
    }

    #[test]
    fn push_forward_is_linear() {
        let lambda = c(0.9, 0.2);
        let t1 = GammaCombo::gamma(c(2.0, 0.5)).unwrap();
        let t2 = GammaCombo::gamma(c(-1.5, 0.8)).unwrap();
        let c1 = c(0.3, -1.1);
        let c2 = c(-2.0, 0.4);
        let combined = t1.scale(c1).add(&t2.scale(c2)).unwrap();
        let lhs = push_forward(lambda, &combined).unwrap();
        let rhs = push_forward(lambda, &t1)
            .unwrap()
            .scale(c1)
            .add(&push_forward(lambda, &t2).unwrap().scale(c2))
            .unwrap();
        // compare term sets exactly at the coefficient level
        assert_eq!(lhs.terms().len(), rhs.terms().len());
        for t in lhs.terms() {
            let r = rhs.coef_at(t.pole).unwrap();
            assert!((t.coef - r).norm() <= 1e-14 * t.coef.norm().max(1e-300));
        }
    }

    #[test]
    fn push_forward_merges_shared_images() {
        // poles a and a + 2 pi i / lambda share the same image
        let lambda = c(1.0, 0.0);
        let a = c(2.0, 0.0);
        let b = a + c(0.0, 2.0 * std::f64::consts::PI);
        let combo = GammaCombo::from_terms([(c(1.0, 0.0), a), (c(1.0, 0.0), b)]).unwrap();
        let pf = push_forward(lambda, &combo).unwrap();
        // images: gamma_{e^2} (merged from both) and gamma_e
        assert_eq!(pf.terms().len(), 2);
    }

    #[test]
    fn iterated_push_forward_identity_at_zero() {
        let combo = GammaCombo::gamma(c(2.0, 0.0)).unwrap();
        let same = push_forward_iter(c(1.0, 0.0), &combo, 0).unwrap();
        assert_eq!(same, combo);
    }

    #[test]
    fn star_weights_match_manual_expansion() {
        // n = 2 coefficient of gamma_{f(1)}: w_1 + w_0 * (-d/f'(1)) route
        let lambda = c(1.0, 0.0);
        let a = c(2.0, 0.0);
        let d = lambda.exp();
        let fp1 = lambda * d;
        let w = star_weights(lambda, a, 2).unwrap();
        assert!(close(w[0], -a / fp1, 1e-14));
        let fa = (lambda * a).exp();
        let fpa = lambda * fa;
        assert!(close(w[1], -fa / (fpa * fp1), 1e-14));

        let pf2 = push_forward_iter(lambda, &GammaCombo::gamma(a).unwrap(), 2).unwrap();
        let coef_d = pf2.coef_at(d).unwrap();
        // (R*)^2 gamma_a coefficient at gamma_d: w_1 + w_0 * (-d/f'(1))
        let expect = w[1] + w[0] * (-d / fp1);
        assert!((coef_d - expect).norm() < 1e-14 * expect.norm());
    }

    #[test]
    fn nested_branch_sum_matches_iterated_closed_form() {
        let lambda = c(1.0, 0.0);
        let combo = GammaCombo::gamma(c(2.0, 0.0)).unwrap();
        let z = c(3.0, 0.0);
        let closed = push_forward_iter(lambda, &combo, 2)
            .unwrap()
            .eval(z)
            .unwrap();
        let nested = nested_branch_sum(lambda, &combo, z, 800, 800).unwrap();
        assert!(
            (nested - closed).norm() < 1e-5,
            "nested {nested} vs closed {closed}"
        );
    }

    #[test]
    fn phi_single_term_for_n_one() {
        let phi = phi_truncation(c(1.0, 0.0), 1).unwrap();
        assert_eq!(phi.terms().len(), 1);
        assert!(close(phi.terms()[0].coef, c(1.0, 0.0), 1e-15));
        assert!(close(phi.terms()[0].pole, c(E, 0.0), 1e-12));
    }

    #[test]
    fn phi_lambda_one_keeps_far_term() {
        let phi = phi_truncation(c(1.0, 0.0), 12).unwrap();
        // native poles e, e^e, e^{e^e}; the next pole folds to infinity
        assert_eq!(phi.terms().len(), 3);
        let c1 = phi.coef_at(c(15.154_262_241_479_264, 0.0)).unwrap();
        assert!((c1.re - (-E).exp()).abs() < 1e-12);
        // far weight = -e^{-(e + e^e)}; the log-polar route rounds the
        // exponent at the 3.8e6 scale, so ~9 significant digits survive
        assert!((phi.far_coef().re - (-1.730_026_409_524_134e-8)).abs() < 1e-16);
        assert!(phi.far_coef().im.abs() < 1e-20);
    }

    #[test]
    fn fixed_point_residual_shape() {
        let samples = [
            c(2.0, 2.0),
            c(-1.5, 0.7),
            c(0.5, -2.0),
            c(3.3, 0.1),
            c(-2.0, -2.0),
        ];
        let r = fixed_point_residual(c(1.0, 0.0), 12, &samples).unwrap();
        // |1 + B_12(e)| = 1 + (e + 1 + e^-e + e^{-e - e^e})/e
        assert!((r.b_plus_one_abs - 2.392_155_089_286_628_5).abs() < 1e-12);
        assert!(r.max_shape_mismatch < 1e-9);
    }

    #[test]
    fn fixed_point_difference_supported_at_f_one() {
        let lambda = c(1.0, 0.0);
        let phi = phi_truncation(lambda, 12).unwrap();
        let pf = push_forward(lambda, &phi).unwrap();
        let diff = pf.sub(&phi).unwrap().pruned(1e-10);
        assert_eq!(diff.terms().len(), 1);
        assert!(close(diff.terms()[0].pole, c(E, 0.0), 1e-9));
    }

    #[test]
    fn zero_phi_residual_is_zero() {
        let samples = [c(2.0, 2.0)];
        let phi = GammaCombo::empty();
        let pf = push_forward(c(1.0, 0.0), &phi).unwrap();
        let r = (pf.eval(samples[0]).unwrap() - phi.eval(samples[0]).unwrap()).norm();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn modulus_sum_dominates_branch_sum() {
        let combo = GammaCombo::gamma(c(2.0, 0.0)).unwrap();
        let m = modulus_branch_sum(c(1.0, 0.0), &combo, c(3.0, 0.0), 10_000).unwrap();
        let b = branch_sum(c(1.0, 0.0), &combo, c(3.0, 0.0), 10_000).unwrap();
        assert!(m >= b.norm());
        assert!((m - 2.277_730_468_740_53).abs() < 1e-6);
        assert!(m >= 2.2757);
    }

    #[test]
    fn modulus_sum_of_zero_combo() {
        let m = modulus_branch_sum(c(1.0, 0.0), &GammaCombo::empty(), c(3.0, 0.0), 100).unwrap();
        assert_eq!(m, 0.0);
    }

    #[test]
    fn mobius_identity_holds_at_truncation() {
        let samples = [c(2.0, 2.0), c(-1.5, 0.7), c(0.5, -2.0), c(1.7, 1.7)];
        let r = mobius_identity_residual(c(1.0, 0.0), c(3.0, 1.0), 12, &samples).unwrap();
        assert!(r.max_residual < 1e-8);
    }

    #[test]
    fn mobius_residual_shrinks_with_n() {
        let samples = [c(2.0, 2.0), c(-1.5, 0.7)];
        let r1 = mobius_identity_residual(c(0.4, 0.3), c(3.0, 1.0), 2, &samples).unwrap();
        let r2 = mobius_identity_residual(c(0.4, 0.3), c(3.0, 1.0), 16, &samples).unwrap();
        assert!(r2.max_residual <= r1.max_residual + 1e-12);
    }

    #[test]
    fn mobius_rejects_degenerate_y() {
        let samples = [c(2.0, 2.0)];
        assert!(matches!(
            mobius_identity_residual(c(1.0, 0.0), c(1.0, 0.0), 4, &samples),
            Err(RuelleError::MoebiusDegenerate { .. })
        ));
        assert!(matches!(
            mobius_identity_residual(c(1.0, 0.0), c(0.0, 0.0), 4, &samples),
            Err(RuelleError::MoebiusDegenerate { .. })
        ));
    }

    #[test]
    fn nonvanishing_single_gamma_is_positive() {
        let combo = GammaCombo::gamma(c(2.0, 0.5)).unwrap();
        let grid = rect_grid(-3.0, 3.0, -3.0, 3.0, 0.25);
        let scan = nonvanishing_scan(&combo, &grid, 0.2).unwrap();
        assert!(scan.min_abs > 0.0);
        assert!(scan.evaluated > 0 && scan.excluded > 0);
    }

    #[test]
    fn nonvanishing_empty_grid_is_an_error() {
        let combo = GammaCombo::gamma(c(2.0, 0.0)).unwrap();
        let grid = [c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)];
        assert!(matches!(
            nonvanishing_scan(&combo, &grid, 0.5),
            Err(RuelleError::EmptyGridAfterExclusion)
        ));
    }

    #[test]
    fn cancelled_combo_scans_to_zero() {
        let a = c(2.0, 1.0);
        let combo = GammaCombo::from_terms([(c(1.0, 0.0), a), (c(-1.0, 0.0), a)]).unwrap();
        let grid = rect_grid(-2.0, 2.0, -2.0, 2.0, 0.5);
        let scan = nonvanishing_scan(&combo, &grid, 0.1).unwrap();
        assert_eq!(scan.min_abs, 0.0);
    }

    #[test]
    fn combo_json_roundtrip() {
        let mut combo = GammaCombo::from_terms([(c(0.5, -0.25), c(2.0, 1.0))]).unwrap();
        combo.add_far(c(1e-8, 0.0));
        let s = serde_json::to_string(&combo).unwrap();
        assert!(s.contains("\"pole\":null"));
        let back: GammaCombo = serde_json::from_str(&s).unwrap();
        assert_eq!(back.terms().len(), 1);
        assert!(close(back.far_coef(), c(1e-8, 0.0), 1e-20));
    }
}
