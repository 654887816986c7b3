//! Poincare, summability, and B-series evaluation with convergence verdicts.
//!
//! Terms are formed in log-polar arithmetic and only converted to native
//! complex for accumulation once they fit; a term whose denominator has
//! escaped contributes a flagged zero (its true magnitude is far below
//! `1e-300`), which preserves the partial sums without overflow artifacts.
//! Verdicts are ratio-test based over a tail window and never claim more
//! than the computed horizon supports.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::logcplx::LogComplex;
use crate::orbit::{self, OrbitParams, OrbitStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("lambda must be nonzero")]
    LambdaZero,
    #[error("need at least {0} terms")]
    TooShort(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesKind {
    /// `S_n = 1 + (1/lambda) sum_{i=2}^{n} 1/(f^{i-2})'(1)`
    Poincare,
    /// `sum_{i>=0} 1/(f^i)'(a)`
    Summability { a: Complex64 },
    /// `B(a) = (1/f'(1)) sum_{j>=1} f^{j-1}(a)/(f^{j-1})'(a)`
    BSeries { a: Complex64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    AbsolutelyConvergent,
    Diverging,
    Indeterminate,
}

/// Verdict machinery knobs.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeriesParams {
    /// Fraction of the computed ratios inspected as the tail window.
    pub tail_window_fraction: f64,
    /// Margin `delta`: convergent needs ratios < 1 - delta, diverging > 1 + delta.
    pub ratio_delta: f64,
    /// Escape threshold handed to the underlying orbit.
    pub escape_log_threshold: f64,
}

impl Default for SeriesParams {
    fn default() -> Self {
        Self {
            tail_window_fraction: 0.25,
            ratio_delta: 0.05,
            escape_log_threshold: 50.0,
        }
    }
}

/// Fewest computed terms before any verdict other than indeterminate.
const MIN_TERMS_FOR_VERDICT: usize = 3;

/// Partial sums, term magnitudes, and a convergence verdict for one series.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesReport {
    pub kind: SeriesKind,
    pub lambda: Complex64,
    /// `partial_sums[k]` includes terms up to index `k` (plus the leading
    /// constant for the Poincare series).
    pub partial_sums: Vec<Complex64>,
    /// `ln|t_k|` for every term, computable even when the term itself is not
    /// representable.
    pub term_logmods: Vec<f64>,
    /// `|t_{k+1}| / |t_k|`.
    pub ratios: Vec<f64>,
    pub verdict: Verdict,
    /// Geometric tail estimate `|t_last| * r / (1 - r)` when the tail ratios
    /// stay below `r < 1`.
    pub tail_bound: Option<f64>,
    pub truncation_n: usize,
    /// Terms whose magnitude had left the native range and were accumulated
    /// as zero.
    pub skipped_terms: usize,
    /// Set when a term overflowed the native range going *up* (diverging
    /// series run past its representable horizon); accumulation stops there.
    pub overflowed: bool,
    /// `|B_N(a) - (-1)|` when this is a B-series evaluated at `a = f(1)`,
    /// the dichotomy value of the fixed-point identity.
    pub b_dichotomy_distance: Option<f64>,
    pub params: SeriesParams,
}

impl SeriesReport {
    pub fn sum(&self) -> Complex64 {
        *self.partial_sums.last().expect("at least one partial sum")
    }

    /// CSV rows `(i, re_term, im_term, abs_term, ratio, re_S, im_S)` with a
    /// reproducibility stamp.
    pub fn to_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(
            w,
            "# kind={} lambda={},{} n={} tail_window={} ratio_delta={} escape_log_threshold={} verdict={}",
            kind_code(&self.kind),
            self.lambda.re,
            self.lambda.im,
            self.truncation_n,
            self.params.tail_window_fraction,
            self.params.ratio_delta,
            self.params.escape_log_threshold,
            verdict_code(self.verdict),
        )?;
        writeln!(w, "i,re_term,im_term,abs_term,ratio,re_sum,im_sum")?;
        let mut prev = match self.kind {
            SeriesKind::Poincare => Complex64::new(1.0, 0.0),
            _ => Complex64::new(0.0, 0.0),
        };
        for (k, s) in self.partial_sums.iter().enumerate() {
            let term = s - prev;
            prev = *s;
            let ratio = if k > 0 {
                self.ratios.get(k - 1).copied().unwrap_or(f64::NAN)
            } else {
                f64::NAN
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                k,
                term.re,
                term.im,
                self.term_logmods.get(k).map(|l| l.exp()).unwrap_or(0.0),
                ratio,
                s.re,
                s.im
            )?;
        }
        Ok(())
    }
}

pub fn kind_code(kind: &SeriesKind) -> String {
    match kind {
        SeriesKind::Poincare => "poincare".into(),
        SeriesKind::Summability { a } => format!("summability@{},{}", a.re, a.im),
        SeriesKind::BSeries { a } => format!("bseries@{},{}", a.re, a.im),
    }
}

pub fn verdict_code(v: Verdict) -> &'static str {
    match v {
        Verdict::AbsolutelyConvergent => "absolutely-convergent",
        Verdict::Diverging => "diverging",
        Verdict::Indeterminate => "indeterminate",
    }
}

/// Accumulate log-polar terms natively, treating vanished terms as flagged
/// zeros and freezing the sum once a term overflows upward.
struct Accumulator {
    sums: Vec<Complex64>,
    acc: Complex64,
    skipped: usize,
    overflowed: bool,
}

impl Accumulator {
    fn new() -> Self {
        Self {
            sums: Vec::new(),
            acc: Complex64::new(0.0, 0.0),
            skipped: 0,
            overflowed: false,
        }
    }

    fn with_lead(lead: Complex64) -> Self {
        Self {
            sums: Vec::new(),
            acc: lead,
            skipped: 0,
            overflowed: false,
        }
    }

    fn push(&mut self, term: &LogComplex) {
        if !self.overflowed {
            match term.to_cartesian() {
                Ok(t) => self.acc += t,
                Err(_) => {
                    // diverging term left the native range going up
                    self.overflowed = true;
                }
            }
        }
        if term.is_zero() || term.logmod() < -745.0 {
            // true magnitude below the smallest positive double
            self.skipped += 1;
        }
        self.sums.push(self.acc);
    }
}

fn verdict_from(
    term_logmods: &[f64],
    ratios: &[f64],
    escaped: bool,
    params: &SeriesParams,
) -> (Verdict, Option<f64>) {
    let n = term_logmods.len();
    if n < MIN_TERMS_FOR_VERDICT {
        return (Verdict::Indeterminate, None);
    }
    if escaped {
        // Once the orbit escapes, later derivative reciprocals shrink
        // superexponentially; the series converges absolutely.
        let bound = tail_bound(term_logmods, ratios);
        return (Verdict::AbsolutelyConvergent, bound);
    }
    if ratios.is_empty() {
        return (Verdict::Indeterminate, None);
    }
    let window = tail_window(ratios, params.tail_window_fraction);
    if window.len() < 2 {
        return (Verdict::Indeterminate, None);
    }
    if window.iter().all(|r| *r < 1.0 - params.ratio_delta) {
        return (Verdict::AbsolutelyConvergent, tail_bound(term_logmods, ratios));
    }
    if window.iter().all(|r| *r > 1.0 + params.ratio_delta) {
        return (Verdict::Diverging, None);
    }
    (Verdict::Indeterminate, None)
}

fn tail_window(ratios: &[f64], fraction: f64) -> &[f64] {
    let start = ((ratios.len() as f64) * (1.0 - fraction)).floor() as usize;
    &ratios[start.min(ratios.len().saturating_sub(1))..]
}

fn tail_bound(term_logmods: &[f64], ratios: &[f64]) -> Option<f64> {
    let last = term_logmods.last()?;
    let r = ratios.iter().rev().take(3).cloned().fold(0.0_f64, f64::max);
    if r >= 1.0 || !r.is_finite() {
        return None;
    }
    Some(last.exp() * r / (1.0 - r))
}

/// Reciprocal-derivative term logmods/values along the orbit of `a`:
/// `t_i = 1/(f^i)'(a)` for `i = 0..count`, capped by where the orbit stopped.
fn reciprocal_terms(
    lambda: Complex64,
    a: Complex64,
    count: usize,
    params: &SeriesParams,
) -> (Vec<LogComplex>, bool) {
    let oparams = OrbitParams {
        escape_log_threshold: params.escape_log_threshold,
        cycle_tol: 0.0, // run to the horizon; series need the full cocycle
        ..OrbitParams::default()
    };
    let rec = orbit::orbit(lambda, a, count.max(1), &oparams);
    let escaped = matches!(rec.status, OrbitStatus::Escaped { .. });
    let terms = rec
        .dlog
        .iter()
        .take(count)
        .map(|d| {
            d.recip().unwrap_or_else(|_| {
                // zero derivative only happens for lambda = 0; treat the
                // term as off-scale so the verdict reads diverging
                LogComplex::new(f64::INFINITY, 0.0)
            })
        })
        .collect();
    (terms, escaped)
}

/// `S_n` as a single value (default parameters).
pub fn poincare_partial(lambda: Complex64, n: usize) -> Result<Complex64, SeriesError> {
    Ok(poincare_report(lambda, n, &SeriesParams::default())?.sum())
}

/// Partial sums `S_1..S_n` of the Poincare series with diagnostics.
///
/// Indexing follows the definition: the term at series index `i` (from 2) is
/// `(1/lambda) / (f^{i-2})'(1)`, so `partial_sums[k]` is `S_{k+1}`.
pub fn poincare_report(
    lambda: Complex64,
    n: usize,
    params: &SeriesParams,
) -> Result<SeriesReport, SeriesError> {
    if lambda.norm() == 0.0 {
        return Err(SeriesError::LambdaZero);
    }
    if n < 1 {
        return Err(SeriesError::TooShort(1));
    }
    let inv_lambda = LogComplex::from_cartesian(lambda)
        .recip()
        .expect("lambda is nonzero");
    let (recips, escaped) = if n >= 2 {
        reciprocal_terms(lambda, Complex64::new(1.0, 0.0), n - 1, params)
    } else {
        (Vec::new(), false)
    };
    let terms: Vec<LogComplex> = recips.iter().map(|t| t.mul(&inv_lambda)).collect();

    let mut acc = Accumulator::with_lead(Complex64::new(1.0, 0.0));
    let mut term_logmods = Vec::with_capacity(terms.len());
    for t in &terms {
        acc.push(t);
        term_logmods.push(t.logmod());
    }
    let ratios = ratios_from_logmods(&term_logmods);
    let (verdict, tail) = verdict_from(&term_logmods, &ratios, escaped, params);

    let mut partial_sums = vec![Complex64::new(1.0, 0.0)]; // S_1
    partial_sums.extend(acc.sums);

    Ok(SeriesReport {
        kind: SeriesKind::Poincare,
        lambda,
        partial_sums,
        term_logmods,
        ratios,
        verdict,
        tail_bound: tail,
        truncation_n: n,
        skipped_terms: acc.skipped,
        overflowed: acc.overflowed,
        b_dichotomy_distance: None,
        params: *params,
    })
}

/// The summability series `sum_{i=0}^{n-1} 1/(f^i)'(a)` with ratio
/// diagnostics `|t_{i+1}/t_i| = 1/|lambda f^{i+1}(a)|`.
pub fn summability_report(
    lambda: Complex64,
    a: Complex64,
    n: usize,
    params: &SeriesParams,
) -> SeriesReport {
    assert!(n >= 2, "summability report needs n >= 2");
    let (terms, escaped) = reciprocal_terms(lambda, a, n, params);
    let mut acc = Accumulator::new();
    let mut term_logmods = Vec::with_capacity(terms.len());
    for t in &terms {
        acc.push(t);
        term_logmods.push(t.logmod());
    }
    let ratios = ratios_from_logmods(&term_logmods);
    let (verdict, tail) = verdict_from(&term_logmods, &ratios, escaped, params);
    SeriesReport {
        kind: SeriesKind::Summability { a },
        lambda,
        partial_sums: acc.sums,
        term_logmods,
        ratios,
        verdict,
        tail_bound: tail,
        truncation_n: n,
        skipped_terms: acc.skipped,
        overflowed: acc.overflowed,
        b_dichotomy_distance: None,
        params: *params,
    }
}

/// Partial sums of `B(a) = (1/f'(1)) sum_{j=1}^{n} f^{j-1}(a)/(f^{j-1})'(a)`.
///
/// When `a = f(1)` the report also carries `|B_n(a) + 1|`, the distance to
/// the dichotomy value of the fixed-point identity.
pub fn b_series(
    lambda: Complex64,
    a: Complex64,
    n: usize,
    params: &SeriesParams,
) -> Result<SeriesReport, SeriesError> {
    if lambda.norm() == 0.0 {
        return Err(SeriesError::LambdaZero);
    }
    if n < 1 {
        return Err(SeriesError::TooShort(1));
    }
    let oparams = OrbitParams {
        escape_log_threshold: params.escape_log_threshold,
        cycle_tol: 0.0,
        ..OrbitParams::default()
    };
    let rec = orbit::orbit(lambda, a, n, &oparams);
    let escaped = matches!(rec.status, OrbitStatus::Escaped { .. });

    // f'(1) = lambda * e^lambda in log-polar form
    let fp1 = LogComplex::from_cartesian(lambda).mul(&LogComplex::exp_of(lambda));

    let available = rec.points.len().min(rec.dlog.len()).min(n);
    let mut acc = Accumulator::new();
    let mut term_logmods = Vec::with_capacity(available);
    for j in 0..available {
        // f^j(a) / ((f^j)'(a) * f'(1))
        let t = rec.points[j]
            .div(&rec.dlog[j])
            .expect("cocycle entries are nonzero for lambda != 0")
            .div(&fp1)
            .expect("f'(1) is nonzero for lambda != 0");
        acc.push(&t);
        term_logmods.push(t.logmod());
    }
    let ratios = ratios_from_logmods(&term_logmods);
    let (verdict, tail) = verdict_from(&term_logmods, &ratios, escaped, params);

    let d = lambda.exp(); // f(1)
    let b_dichotomy_distance = if (a - d).norm() <= 1e-12 * d.norm().max(1.0) {
        acc.sums.last().map(|s| (s + Complex64::new(1.0, 0.0)).norm())
    } else {
        None
    };

    Ok(SeriesReport {
        kind: SeriesKind::BSeries { a },
        lambda,
        partial_sums: acc.sums,
        term_logmods,
        ratios,
        verdict,
        tail_bound: tail,
        truncation_n: n,
        skipped_terms: acc.skipped,
        overflowed: acc.overflowed,
        b_dichotomy_distance,
        params: *params,
    })
}

fn ratios_from_logmods(term_logmods: &[f64]) -> Vec<f64> {
    term_logmods
        .windows(2)
        .map(|w| (w[1] - w[0]).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const E: f64 = std::f64::consts::E;
    const OMEGA: f64 = 0.567_143_290_409_783_8;
    const S6: f64 = 2.392_155_089_286_628_5;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn p() -> SeriesParams {
        SeriesParams::default()
    }

    #[test]
    fn poincare_s2_is_two_for_lambda_one() {
        let s2 = poincare_partial(c(1.0, 0.0), 2).unwrap();
        assert!((s2 - c(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn poincare_s6_matches_direct_summation() {
        // direct double-precision oracle: the terms are plain exponentials
        let oracle = 1.0
            + 1.0
            + (-1.0_f64).exp()
            + (-(1.0 + E)).exp()
            + (-(1.0 + E + E.exp())).exp()
            + 0.0; // 1/(f^4)'(1) ~ e^{-3.8e6}
        let s6 = poincare_partial(c(1.0, 0.0), 6).unwrap();
        assert!((s6.re - oracle).abs() < 1e-14);
        assert!((s6.re - S6).abs() < 1e-12);
        assert!(s6.im.abs() < 1e-15);
    }

    #[test]
    fn poincare_tail_is_flat_after_s6() {
        let s6 = poincare_partial(c(1.0, 0.0), 6).unwrap();
        for n in 7..=50 {
            let sn = poincare_partial(c(1.0, 0.0), n).unwrap();
            assert!((sn - s6).norm() < 1e-8, "S_{n} drifted");
        }
    }

    #[test]
    fn poincare_lambda_zero_is_an_error() {
        assert_eq!(
            poincare_partial(c(0.0, 0.0), 5),
            Err(SeriesError::LambdaZero)
        );
    }

    #[test]
    fn poincare_partial_sums_telescope() {
        let rep = poincare_report(c(0.4, 0.3), 12, &p()).unwrap();
        for k in 1..rep.partial_sums.len() {
            let term = rep.partial_sums[k] - rep.partial_sums[k - 1];
            let expect = rep.term_logmods[k - 1].exp();
            if expect > 1e-300 {
                assert!((term.norm() - expect).abs() <= 1e-12 * expect);
            }
        }
    }

    #[test]
    fn summability_lambda_one_converges_by_escape() {
        let rep = summability_report(c(1.0, 0.0), c(1.0, 0.0), 40, &p());
        assert_eq!(rep.verdict, Verdict::AbsolutelyConvergent);
        // sum_{i>=0} 1/(f^i)'(1) = S_inf - 1 for lambda = 1
        assert!((rep.sum().re - 1.392_155_089_286_628_5).abs() < 1e-12);
        assert!(rep.skipped_terms > 0 || rep.truncation_n < 40);
    }

    #[test]
    fn summability_lambda_minus_one_diverges() {
        let rep = summability_report(c(-1.0, 0.0), c(1.0, 0.0), 120, &p());
        assert_eq!(rep.verdict, Verdict::Diverging);
        // ratio tends to 1/Omega
        let last = *rep.ratios.last().unwrap();
        assert!((last - 1.0 / OMEGA).abs() < 1e-6);
    }

    #[test]
    fn summability_short_window_is_indeterminate() {
        let rep = summability_report(c(40.0, 0.0), c(1.0, 0.0), 2, &p());
        assert_eq!(rep.verdict, Verdict::Indeterminate);
    }

    #[test]
    fn monotone_term_decay_after_escape() {
        let rep = summability_report(c(1.0, 0.0), c(1.0, 0.0), 40, &p());
        let finite: Vec<f64> = rep
            .term_logmods
            .iter()
            .cloned()
            .filter(|l| l.is_finite())
            .collect();
        // strictly decreasing after the first term (|t_0| = 1, |t_1| = 1/e, ...)
        for w in finite.windows(2).skip(1) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn b_series_first_term_is_a_over_fprime_one() {
        let lambda = c(0.8, -0.6);
        let a = c(2.5, 1.5);
        let rep = b_series(lambda, a, 1, &p()).unwrap();
        let fp1 = lambda * lambda.exp();
        assert!((rep.sum() - a / fp1).norm() < 1e-14 * (a / fp1).norm());
    }

    #[test]
    fn b_series_at_f_of_one_lambda_one() {
        // B_6(e) = (e + 1 + e^{-e} + e^{-e-e^e})/e plus sub-1e-300 terms
        let b6 = b_series(c(1.0, 0.0), c(E, 0.0), 6, &p()).unwrap();
        let oracle = (E + 1.0 + (-E).exp() + (-E - E.exp()).exp()) / E;
        assert!((b6.sum().re - oracle).abs() < 1e-13);
        assert!((b6.sum().re - 1.392_155_089_286_628_5).abs() < 1e-12);
        assert!(b6.b_dichotomy_distance.is_some());
        let dist = b6.b_dichotomy_distance.unwrap();
        assert!((dist - (1.0 + oracle)).abs() < 1e-12);
    }

    #[test]
    fn b_series_escaping_terms_shrink() {
        let rep = b_series(c(1.0, 0.0), c(2.0, 0.0), 12, &p()).unwrap();
        assert_eq!(rep.verdict, Verdict::AbsolutelyConvergent);
        let finite: Vec<f64> = rep
            .term_logmods
            .iter()
            .cloned()
            .filter(|l| l.is_finite())
            .collect();
        for w in finite.windows(2).skip(1) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn def1_def2_consistency_at_lambda_one() {
        // sum_{i>=0} 1/(f^i)'(0) = 1 + (1/lambda) sum_{i>=0} 1/(f^i)'(1),
        // matched against the Poincare partial sums term by term.
        let lambda = c(1.0, 0.0);
        let at_zero = summability_report(lambda, c(0.0, 0.0), 6, &p());
        let at_one = summability_report(lambda, c(1.0, 0.0), 6, &p());
        // (f^i)'(0) = lambda * (f^{i-1})'(1)
        for i in 1..at_zero.term_logmods.len() {
            let lhs = at_zero.term_logmods[i];
            let rhs = at_one.term_logmods[i - 1] - lambda.norm().ln();
            if lhs.is_finite() && rhs.is_finite() {
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
        let total_zero = at_zero.sum();
        let total_one = at_one.sum();
        assert!((total_zero - (Complex64::new(1.0, 0.0) + total_one / lambda)).norm() < 1e-12);
        // and S_{n} from the Poincare report agrees with the a=0 summability sum
        let sn = poincare_partial(lambda, 8).unwrap();
        assert!((sn - total_zero).norm() < 1e-12);
    }

    #[test]
    fn csv_contains_stamp_and_verdict() {
        let rep = summability_report(c(1.0, 0.0), c(1.0, 0.0), 10, &p());
        let mut buf = Vec::new();
        rep.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# kind=summability@1,0"));
        assert!(text.contains("verdict=absolutely-convergent"));
        assert!(text.contains("i,re_term,im_term,abs_term,ratio,re_sum,im_sum"));
    }
}
