//! Deterministic grid scans over the parameter plane or a dynamical plane.
//!
//! Rows are handed to a small worker pool through an atomic cursor; every
//! pixel is a pure function of the job, and rows are reassembled in index
//! order, so output bytes are identical for any worker count.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use expdyn::classify::{self, TrichotomyCase};
use expdyn::orbit::{self, OrbitStatus};
use expdyn::{Complex64, Thresholds};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("scan region is degenerate (zero area)")]
    ZeroArea,
    #[error("resolution {requested} exceeds the configured cap {cap}")]
    ResolutionCap { requested: usize, cap: usize },
    #[error("dynamical-escape scans need a nonzero lambda")]
    LambdaZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    /// Pixels are lambda values, colored by trichotomy case.
    ParamClassify,
    /// Pixels are seeds in the z-plane of a fixed lambda, colored by escape
    /// step.
    DynamicalEscape,
}

impl ScanMode {
    pub fn name(self) -> &'static str {
        match self {
            ScanMode::ParamClassify => "param-classify",
            ScanMode::DynamicalEscape => "dynamical-escape",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Region {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

#[derive(Debug, Clone)]
pub struct ScanJob {
    pub region: Region,
    pub width: usize,
    pub height: usize,
    pub mode: ScanMode,
    /// The fixed parameter for dynamical scans; ignored by param scans.
    pub lambda: Complex64,
    pub horizon: usize,
    pub thresholds: Thresholds,
    pub resolution_cap: usize,
}

/// Per-pixel class codes, row-major, top row at `im_max`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanGrid {
    pub width: usize,
    pub height: usize,
    pub codes: Vec<u8>,
}

impl ScanJob {
    pub fn validate(&self) -> Result<(), ScanError> {
        let pixels = self.width.saturating_mul(self.height);
        let r = &self.region;
        let ordered = r.re_min < r.re_max && r.im_min < r.im_max; // also rejects NaN
        if self.width == 0 || self.height == 0 || !ordered {
            return Err(ScanError::ZeroArea);
        }
        if pixels > self.resolution_cap {
            return Err(ScanError::ResolutionCap {
                requested: pixels,
                cap: self.resolution_cap,
            });
        }
        if self.mode == ScanMode::DynamicalEscape && self.lambda.norm() == 0.0 {
            return Err(ScanError::LambdaZero);
        }
        Ok(())
    }

    /// Affine pixel-center map; `j = 0` is the top row (largest imaginary
    /// part).
    pub fn pixel_point(&self, i: usize, j: usize) -> Complex64 {
        let re = self.region.re_min
            + (i as f64 + 0.5) * (self.region.re_max - self.region.re_min) / self.width as f64;
        let im = self.region.im_max
            - (j as f64 + 0.5) * (self.region.im_max - self.region.im_min) / self.height as f64;
        Complex64::new(re, im)
    }

    fn pixel_code(&self, p: Complex64) -> u8 {
        match self.mode {
            ScanMode::ParamClassify => {
                classify::classify_case(p, self.horizon, &self.thresholds).code()
            }
            ScanMode::DynamicalEscape => {
                let rec = orbit::orbit(self.lambda, p, self.horizon, &self.thresholds.orbit);
                match rec.status {
                    OrbitStatus::Escaped { step } => step.min(254) as u8,
                    _ => 255,
                }
            }
        }
    }
}

/// Number of workers actually used: the request (0 = all cores), capped by
/// `EXPDYN_THREADS` when set.
pub fn effective_workers(requested: usize) -> usize {
    let auto = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let mut n = if requested == 0 { auto } else { requested };
    if let Ok(cap) = std::env::var("EXPDYN_THREADS") {
        if let Ok(cap) = cap.trim().parse::<usize>() {
            if cap >= 1 {
                n = n.min(cap);
            }
        }
    }
    n.max(1)
}

/// Run the scan on `workers` threads. The result is byte-identical for any
/// worker count.
pub fn run_scan(job: &ScanJob, workers: usize) -> Result<ScanGrid, ScanError> {
    job.validate()?;
    let workers = workers.max(1).min(job.height.max(1));
    let cursor = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<Vec<u8>>>> = Mutex::new(vec![None; job.height]);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let j = cursor.fetch_add(1, Ordering::Relaxed);
                if j >= job.height {
                    break;
                }
                let mut row = Vec::with_capacity(job.width);
                for i in 0..job.width {
                    row.push(job.pixel_code(job.pixel_point(i, j)));
                }
                rows.lock().expect("row store poisoned")[j] = Some(row);
            });
        }
    });

    let mut codes = Vec::with_capacity(job.width * job.height);
    for row in rows.into_inner().expect("row store poisoned") {
        codes.extend(row.expect("every row computed"));
    }
    Ok(ScanGrid {
        width: job.width,
        height: job.height,
        codes,
    })
}

/// CSV sidecar: per-pixel codes with a reproducibility stamp.
pub fn write_csv<W: std::io::Write>(
    job: &ScanJob,
    grid: &ScanGrid,
    w: &mut W,
) -> std::io::Result<()> {
    writeln!(
        w,
        "# mode={} region=[{},{}]x[{},{}] resolution={}x{} horizon={} lambda={},{} escape_log_threshold={} cycle_tol={} max_period={} window_fraction={} c_band_delta={}",
        job.mode.name(),
        job.region.re_min,
        job.region.re_max,
        job.region.im_min,
        job.region.im_max,
        job.width,
        job.height,
        job.horizon,
        job.lambda.re,
        job.lambda.im,
        job.thresholds.orbit.escape_log_threshold,
        job.thresholds.orbit.cycle_tol,
        job.thresholds.orbit.max_period,
        job.thresholds.window_fraction,
        job.thresholds.c_band_delta,
    )?;
    writeln!(w, "i,j,re,im,code")?;
    for j in 0..grid.height {
        for i in 0..grid.width {
            let p = job.pixel_point(i, j);
            writeln!(
                w,
                "{},{},{},{},{}",
                i,
                j,
                p.re,
                p.im,
                grid.codes[j * grid.width + i]
            )?;
        }
    }
    Ok(())
}

/// Case codes used by `param-classify` scans, in CSV and palette order.
pub fn case_label(code: u8) -> &'static str {
    match code {
        0 => "derivative-to-zero",
        1 => "subseq-to-infinity",
        2 => "bounded-away-candidate",
        _ => "indeterminate",
    }
}

pub fn case_code(case: TrichotomyCase) -> u8 {
    case.code()
}
