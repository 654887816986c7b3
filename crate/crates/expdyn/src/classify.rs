//! Per-parameter classification: derivative-trend trichotomy, hypothesis-
//! pattern flags for the partial-sum criteria, summable-point evidence, the
//! constant-derivative non-existence scan, and the expansion diagnostic on
//! the postsingular approximation.
//!
//! Every verdict here is evidence at a finite horizon, never a theorem:
//! flags carry the horizon they were measured at, and `Indeterminate` is a
//! first-class outcome that downstream consumers must propagate.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::orbit::{self, BoundedVerdict, OrbitParams, OrbitStatus};
use crate::series::{self, SeriesParams, Verdict};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("postsingular approximation has {available} usable points, need {requested}")]
    InsufficientSamples { available: usize, requested: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrichotomyCase {
    /// `|(f^n)'(1)|` strictly decreasing over the final window.
    DerivativeToZero,
    /// Escape, or `|(f^n)'(1)|` strictly increasing over the final window.
    SubseqToInfinity,
    /// `|(f^n)'(1)|` stays in a narrow multiplicative band.
    BoundedAwayCandidate,
    Indeterminate,
}

impl TrichotomyCase {
    pub fn code(self) -> u8 {
        match self {
            TrichotomyCase::DerivativeToZero => 0,
            TrichotomyCase::SubseqToInfinity => 1,
            TrichotomyCase::BoundedAwayCandidate => 2,
            TrichotomyCase::Indeterminate => 3,
        }
    }
}

/// Trend and verdict knobs. The trend window is the final
/// `window_fraction` of the computed horizon; "strictly decreasing"
/// tolerates one inversion per 50 samples (floating-point jitter near
/// cycles).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Thresholds {
    pub window_fraction: f64,
    /// Multiplicative band half-width for "constant modulus" detection.
    pub c_band_delta: f64,
    /// `limsup |S_{n_i}| > 0` evidence needs the max above this.
    pub sn_positive_tol: f64,
    /// `|S_{n_i}| -> inf` evidence needs growth by this factor across the
    /// banded subsequence.
    pub sn_blowup_factor: f64,
    /// Derivative ratios within `[ratio_floor, ratio_cap]` over the window
    /// count as "bounded away from 0 and infinity".
    pub ratio_floor: f64,
    pub ratio_cap: f64,
    /// Running-max growth (in log units) that counts as divergence evidence
    /// when the orbit does not outright escape.
    pub divergence_log_growth: f64,
    pub orbit: OrbitParams,
    pub series: SeriesParams,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            window_fraction: 0.25,
            c_band_delta: 0.02,
            sn_positive_tol: 1e-9,
            sn_blowup_factor: 10.0,
            ratio_floor: 1e-3,
            ratio_cap: 1e3,
            divergence_log_growth: (1e6_f64).ln(),
            orbit: OrbitParams::default(),
            series: SeriesParams::default(),
        }
    }
}

/// A boolean observation pinned to the horizon it was measured at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HorizonFlag {
    pub holds: bool,
    pub horizon: usize,
}

/// Hypothesis-pattern evidence for the three partial-sum criteria. These
/// mark that the numerical trends match a hypothesis shape; they never
/// assert the conclusion (instability is not computable here).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Thm1Flags {
    /// Growing-derivative subsequence exists and `sup |S_n|` along it is
    /// positive.
    pub h1_limsup_sn_positive: HorizonFlag,
    /// Derivative stays in a band along a subsequence while `|S_n|` blows up.
    pub h2_sn_unbounded_on_band: HorizonFlag,
    /// Derivative ratios bounded away from 0 and infinity over the window.
    pub h3_ratio_bounded: HorizonFlag,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MinDistEvidence {
    pub min_dist: f64,
    pub horizon: usize,
}

/// Numeric evidence for membership in the summable class: condition 1 is
/// measured, conditions 2 and 3 (plane separation, Lebesgue measure) are
/// not numerically decidable and are reported as such.
#[derive(Debug, Clone, Serialize)]
pub struct WEvidence {
    pub summable: Verdict,
    pub summable_horizon: usize,
    /// Minimum distance of the forward orbit of 0 to the origin.
    pub zero_not_in_x: MinDistEvidence,
    pub bounded_x: BoundedVerdict,
    pub conditions_2_3: &'static str,
}

pub const CONDITIONS_2_3_NOTE: &str = "not numerically decidable";

/// Everything measured for one parameter value.
#[derive(Debug, Clone, Serialize)]
pub struct ClassReport {
    pub lambda: Complex64,
    pub horizon: usize,
    pub case: TrichotomyCase,
    /// `ln |(f^n)'(1)|`; the 0-normalization is the same trend shifted by
    /// one index and `ln |lambda|` (`(f^i)'(0) = lambda (f^{i-1})'(1)`).
    pub derivative_trend: Vec<f64>,
    pub derivative_normalization: &'static str,
    pub orbit_status: String,
    /// Partial sums `S_1..S_horizon`.
    pub sn_trend: Vec<Complex64>,
    pub thm1: Thm1Flags,
    pub w: WEvidence,
    pub thresholds: Thresholds,
}

/// The final `fraction` of a slice, never shorter than 2 when possible.
fn tail_window(xs: &[f64], fraction: f64) -> &[f64] {
    if xs.is_empty() {
        return xs;
    }
    let start = ((xs.len() as f64) * (1.0 - fraction)).floor() as usize;
    &xs[start.min(xs.len().saturating_sub(2))..]
}

fn trend_case(
    status: &OrbitStatus,
    dlog_logmods: &[f64],
    t: &Thresholds,
) -> TrichotomyCase {
    if matches!(status, OrbitStatus::Escaped { .. }) {
        return TrichotomyCase::SubseqToInfinity;
    }
    let win = tail_window(dlog_logmods, t.window_fraction);
    if win.len() < 2 {
        return TrichotomyCase::Indeterminate;
    }
    let allowed = 1 + win.len() / 50;
    let rises = win.windows(2).filter(|w| w[1] >= w[0]).count();
    let falls = win.windows(2).filter(|w| w[1] <= w[0]).count();
    if rises <= allowed {
        return TrichotomyCase::DerivativeToZero;
    }
    if falls <= allowed {
        return TrichotomyCase::SubseqToInfinity;
    }
    let mean = win.iter().sum::<f64>() / win.len() as f64;
    let band = (1.0 + t.c_band_delta).ln();
    if win.iter().all(|x| (x - mean).abs() <= band) {
        return TrichotomyCase::BoundedAwayCandidate;
    }
    TrichotomyCase::Indeterminate
}

/// Case only, skipping the series work; used by pixel scans.
pub fn classify_case(lambda: Complex64, horizon: usize, t: &Thresholds) -> TrichotomyCase {
    if lambda.norm() == 0.0 {
        return TrichotomyCase::Indeterminate;
    }
    let rec = orbit::orbit(lambda, Complex64::new(1.0, 0.0), horizon, &t.orbit);
    let logmods: Vec<f64> = rec.dlog.iter().map(|d| d.logmod()).collect();
    trend_case(&rec.status, &logmods, t)
}

/// Full per-parameter report.
pub fn classify_lambda(lambda: Complex64, horizon: usize, t: &Thresholds) -> ClassReport {
    assert!(horizon >= 20, "horizon too short for trend windows");
    let w = w_evidence(lambda, horizon, t);
    if lambda.norm() == 0.0 {
        // outside the family; report honestly rather than erroring
        return ClassReport {
            lambda,
            horizon,
            case: TrichotomyCase::Indeterminate,
            derivative_trend: Vec::new(),
            derivative_normalization: NORMALIZATION_NOTE,
            orbit_status: "degenerate".into(),
            sn_trend: Vec::new(),
            thm1: Thm1Flags {
                h1_limsup_sn_positive: HorizonFlag {
                    holds: false,
                    horizon,
                },
                h2_sn_unbounded_on_band: HorizonFlag {
                    holds: false,
                    horizon,
                },
                h3_ratio_bounded: HorizonFlag {
                    holds: false,
                    horizon,
                },
            },
            w,
            thresholds: *t,
        };
    }
    let rec = orbit::orbit(lambda, Complex64::new(1.0, 0.0), horizon, &t.orbit);
    let logmods: Vec<f64> = rec.dlog.iter().map(|d| d.logmod()).collect();
    let case = trend_case(&rec.status, &logmods, t);

    let sn = series::poincare_report(lambda, horizon, &t.series)
        .expect("lambda nonzero, horizon >= 1");
    let sn_trend = sn.partial_sums.clone();

    let escaped = matches!(rec.status, OrbitStatus::Escaped { .. });
    let thm1 = thm1_flags(&logmods, &sn_trend, escaped, horizon, t);

    ClassReport {
        lambda,
        horizon,
        case,
        derivative_trend: logmods,
        derivative_normalization: NORMALIZATION_NOTE,
        orbit_status: rec.status_code(),
        sn_trend,
        thm1,
        w,
        thresholds: *t,
    }
}

pub const NORMALIZATION_NOTE: &str =
    "derivative trend at seed 1; (f^i)'(0) = lambda * (f^{i-1})'(1)";

fn thm1_flags(
    logmods: &[f64],
    sn_trend: &[Complex64],
    escaped: bool,
    horizon: usize,
    t: &Thresholds,
) -> Thm1Flags {
    // growing-derivative subsequence: indices setting a new running max
    let mut growing = Vec::new();
    let mut running = f64::NEG_INFINITY;
    for (i, &l) in logmods.iter().enumerate() {
        if l > running {
            running = l;
            growing.push(i);
        }
    }
    let divergence_evidence = escaped
        || growing
            .last()
            .map(|&i| logmods[i] - logmods[0] >= t.divergence_log_growth)
            .unwrap_or(false);
    let sup_sn_on_growing = growing
        .iter()
        .filter_map(|&i| sn_trend.get(i.min(sn_trend.len().saturating_sub(1))))
        .map(|s| s.norm())
        .fold(0.0_f64, f64::max);
    let h1 = divergence_evidence && sup_sn_on_growing > t.sn_positive_tol;

    // banded subsequence: indices within the multiplicative band of the
    // window median
    let h2 = banded_blowup(logmods, sn_trend, t);

    // ratio window bounded away from 0 and infinity
    let ratios: Vec<f64> = logmods.windows(2).map(|w| (w[1] - w[0]).exp()).collect();
    let rwin = tail_window(&ratios, t.window_fraction);
    let h3 = !escaped
        && rwin.len() >= 2
        && rwin
            .iter()
            .all(|r| *r >= t.ratio_floor && *r <= t.ratio_cap);

    Thm1Flags {
        h1_limsup_sn_positive: HorizonFlag {
            holds: h1,
            horizon,
        },
        h2_sn_unbounded_on_band: HorizonFlag {
            holds: h2,
            horizon,
        },
        h3_ratio_bounded: HorizonFlag {
            holds: h3,
            horizon,
        },
    }
}

fn banded_blowup(logmods: &[f64], sn_trend: &[Complex64], t: &Thresholds) -> bool {
    if logmods.len() < 8 {
        return false;
    }
    let mut sorted: Vec<f64> = logmods.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let median = sorted[sorted.len() / 2];
    let band = (1.0 + t.c_band_delta).ln();
    let banded: Vec<usize> = (0..logmods.len())
        .filter(|&i| (logmods[i] - median).abs() <= band)
        .collect();
    if banded.len() < logmods.len() / 2 {
        return false;
    }
    let sn_at = |i: usize| {
        sn_trend
            .get(i.min(sn_trend.len().saturating_sub(1)))
            .map(|s| s.norm())
            .unwrap_or(0.0)
    };
    let first = sn_at(banded[0]).max(1e-300);
    let last = sn_at(*banded.last().expect("nonempty"));
    last / first >= t.sn_blowup_factor
}

/// Evidence record for the summable class.
pub fn w_evidence(lambda: Complex64, horizon: usize, t: &Thresholds) -> WEvidence {
    assert!(horizon >= 20, "horizon too short");
    let summable = if lambda.norm() == 0.0 {
        Verdict::Indeterminate
    } else {
        // verdict at a = 1; absolute convergence at 0 and 1 coincide since
        // (f^i)'(0) = lambda (f^{i-1})'(1)
        series::summability_report(lambda, Complex64::new(1.0, 0.0), horizon, &t.series).verdict
    };
    let ps = orbit::postsingular(lambda, horizon, t.orbit.escape_log_threshold);
    WEvidence {
        summable,
        summable_horizon: horizon,
        zero_not_in_x: MinDistEvidence {
            min_dist: ps.min_dist_to_zero,
            horizon,
        },
        bounded_x: ps.bounded_verdict,
        conditions_2_3: CONDITIONS_2_3_NOTE,
    }
}

/// One flagged parameter from [`prop1_scan`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Prop1Flag {
    pub lambda: Complex64,
    /// Band center `C` (modulus scale the derivative hovered at).
    pub c_estimate: f64,
    /// Mean log-drift per step over the window; near-misses drift slowly.
    pub drift_per_step: f64,
    pub window_len: usize,
}

/// Scan for parameters whose `|(f^n)'(1)|` hovers at a nonzero constant
/// over the final window. The expected outcome on any grid is an empty
/// list; anything returned is a near-miss with its drift rate.
pub fn prop1_scan(grid: &[Complex64], horizon: usize, t: &Thresholds) -> Vec<Prop1Flag> {
    assert!(!grid.is_empty(), "grid must be non-empty");
    let mut flags = Vec::new();
    for &lambda in grid {
        if lambda.norm() == 0.0 {
            continue; // outside the family
        }
        let rec = orbit::orbit(lambda, Complex64::new(1.0, 0.0), horizon, &t.orbit);
        if matches!(rec.status, OrbitStatus::Escaped { .. }) {
            continue; // trend leaves every band upward
        }
        let logmods: Vec<f64> = rec.dlog.iter().map(|d| d.logmod()).collect();
        let win = tail_window(&logmods, t.window_fraction);
        if win.len() < 10 {
            continue;
        }
        let mean = win.iter().sum::<f64>() / win.len() as f64;
        let band = (1.0 + t.c_band_delta).ln();
        if win.iter().all(|x| (x - mean).abs() <= band) {
            let drift = (win[win.len() - 1] - win[0]) / (win.len() - 1) as f64;
            flags.push(Prop1Flag {
                lambda,
                c_estimate: mean.exp(),
                drift_per_step: drift,
                window_len: win.len(),
            });
        }
    }
    flags
}

/// Growth trend of `|(f^n)'(x)|` over sampled postsingular points: the
/// minimum over samples at each step, in log units. Growth without bound is
/// expansion evidence on the postsingular approximation.
#[derive(Debug, Clone, Serialize)]
pub struct ExpansionDiagnostic {
    pub lambda: Complex64,
    pub n_steps: usize,
    pub samples_used: usize,
    /// `min_x ln |(f^n)'(x)|` over samples still computable at step `n`.
    pub min_logmod_at: Vec<f64>,
    pub per_sample_steps: Vec<usize>,
}

pub fn expansion_diagnostic(
    lambda: Complex64,
    n_steps: usize,
    sample_count: usize,
    t: &Thresholds,
) -> Result<ExpansionDiagnostic, ClassifyError> {
    let ps = orbit::postsingular(
        lambda,
        sample_count.max(2),
        t.orbit.escape_log_threshold,
    );
    if ps.points.len() < sample_count {
        return Err(ClassifyError::InsufficientSamples {
            available: ps.points.len(),
            requested: sample_count,
        });
    }
    let samples = &ps.points[..sample_count];
    let mut cocycles: Vec<Vec<f64>> = Vec::with_capacity(samples.len());
    for &x in samples {
        let rec = orbit::orbit(lambda, x, n_steps.max(1), &t.orbit);
        cocycles.push(rec.dlog.iter().map(|d| d.logmod()).collect());
    }
    let mut min_logmod_at = Vec::with_capacity(n_steps + 1);
    for n in 0..=n_steps {
        let m = cocycles
            .iter()
            .filter_map(|c| c.get(n))
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if m == f64::INFINITY {
            break; // every sample escaped before this step
        }
        min_logmod_at.push(m);
    }
    Ok(ExpansionDiagnostic {
        lambda,
        n_steps,
        samples_used: samples.len(),
        min_logmod_at,
        per_sample_steps: cocycles.iter().map(|c| c.len()).collect(),
    })
}
