//! `expdyn` — command-line laboratory for the family `exp(lambda z)`.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error,
//! 3 I/O failure, 4 limits exceeded (resolution cap, degenerate region).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use expdyn::classify;
use expdyn::orbit;
use expdyn::ruelle::{self, GammaCombo};
use expdyn::series;
use expdyn::Complex64;

use expdyn_cli::config::Settings;
use expdyn_cli::cparse::parse_complex;
use expdyn_cli::render;
use expdyn_cli::scan::{self, Region, ScanJob, ScanMode};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Limits(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Limits(_) => 4,
        }
    }
}

impl From<expdyn::RuelleError> for CliError {
    fn from(e: expdyn::RuelleError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<expdyn::SeriesError> for CliError {
    fn from(e: expdyn::SeriesError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<expdyn::OrbitError> for CliError {
    fn from(e: expdyn::OrbitError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn cx(s: &str) -> Result<Complex64, String> {
    parse_complex(s)
}

#[derive(Parser)]
#[command(
    name = "expdyn",
    version,
    about = "Numerical laboratory for the exponential family exp(lambda*z)"
)]
struct Cli {
    /// Flat key=value config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// Settings that may come from the config file or be overridden per call.
#[derive(Args, Debug, Default, Clone)]
struct SettingsArgs {
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    escape_log_threshold: Option<f64>,
    #[arg(long)]
    cycle_tol: Option<f64>,
    #[arg(long)]
    max_period: Option<usize>,
    #[arg(long)]
    window_fraction: Option<f64>,
    #[arg(long)]
    ratio_delta: Option<f64>,
    #[arg(long)]
    c_band_delta: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    resolution_cap: Option<usize>,
}

impl SettingsArgs {
    fn apply(&self, s: &mut Settings) {
        if let Some(v) = self.horizon {
            s.horizon = v;
        }
        if let Some(v) = self.escape_log_threshold {
            s.escape_log_threshold = v;
        }
        if let Some(v) = self.cycle_tol {
            s.cycle_tol = v;
        }
        if let Some(v) = self.max_period {
            s.max_period = v;
        }
        if let Some(v) = self.window_fraction {
            s.window_fraction = v;
        }
        if let Some(v) = self.ratio_delta {
            s.ratio_delta = v;
        }
        if let Some(v) = self.c_band_delta {
            s.c_band_delta = v;
        }
        if let Some(v) = self.workers {
            s.workers = v;
        }
        if let Some(v) = self.resolution_cap {
            s.resolution_cap = v;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Iterate an orbit with its derivative cocycle; write CSV/JSON.
    Orbit {
        #[arg(long, value_parser = cx, allow_hyphen_values = true)]
        lambda: Complex64,
        #[arg(long, value_parser = cx, allow_hyphen_values = true)]
        seed: Complex64,
        #[arg(short = 'n', long = "steps")]
        steps: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        settings: SettingsArgs,
    },
    /// Poincare partial sums (default) or the summability series at a point.
    Series {
        #[arg(long, value_parser = cx, allow_hyphen_values = true)]
        lambda: Complex64,
        #[arg(short = 'n', long = "terms")]
        terms: usize,
        /// Evaluate the summability series at this point instead.
        #[arg(long, value_parser = cx, allow_hyphen_values = true)]
        at: Option<Complex64>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        settings: SettingsArgs,
    },
    /// The auxiliary series B(a) with the dichotomy distance at a = f(1).
    Bseries {
        #[arg(long, value_parser = cx, allow_hyphen_values = true)]
        lambda: Complex64,
        #[arg(long, value_parser = cx, allow_hyphen_values = true)]
        a: Complex64,
        #[arg(short = 'n', long = "terms")]
        terms: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        settings: SettingsArgs,
    },
    /// Evaluate the push-forward of a gamma combination at a point, both as
    /// a truncated branch sum and in closed form.
    RuelleEval {
        #[arg(long, value_parser = cx, allow_hyphen_values = true)]
        lambda: Complex64,
        #[arg(long, value_parser = cx, allow_hyphen_values = true)]
        z: Complex64,
        /// Poles of the combination (unit coefficients); repeatable.
        #[arg(long = "pole", value_parser = cx, allow_hyphen_values = true)]
        poles: Vec<Complex64>,
        /// Load the combination from a JSON file instead.
        #[arg(long, conflicts_with = "poles")]
        combo_json: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        k: i64,
        /// Apply the operator this many times (closed form only).
        #[arg(long, default_value_t = 1)]
        iterate: usize,
        /// Also evaluate the modulus operator.
        #[arg(long)]
        modulus: bool,
    },
    /// Run a verification suite; exit 1 when a residual exceeds tolerance.
    Verify {
        suite: VerifySuite,
        #[arg(long, value_parser = cx, allow_hyphen_values = true)]
        lambda: Option<Complex64>,
        #[arg(long, value_parser = cx, allow_hyphen_values = true)]
        a: Option<Complex64>,
        #[arg(long, value_parser = cx, allow_hyphen_values = true)]
        z: Option<Complex64>,
        #[arg(long, value_parser = cx, allow_hyphen_values = true)]
        y: Option<Complex64>,
        #[arg(long)]
        k: Option<i64>,
        #[arg(short = 'n', long)]
        n: Option<usize>,
    },
    /// Full classification report for one parameter (JSON).
    Classify {
        #[arg(long, value_parser = cx, allow_hyphen_values = true)]
        lambda: Complex64,
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        settings: SettingsArgs,
    },
    /// Render a parameter or dynamical plane scan (P6 pixmap + CSV).
    Scan {
        #[arg(long, value_enum)]
        mode: ScanModeArg,
        #[arg(long, allow_negative_numbers = true)]
        re_min: f64,
        #[arg(long, allow_negative_numbers = true)]
        re_max: f64,
        #[arg(long, allow_negative_numbers = true)]
        im_min: f64,
        #[arg(long, allow_negative_numbers = true)]
        im_max: f64,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        /// Fixed lambda for dynamical-escape scans.
        #[arg(long, value_parser = cx, allow_hyphen_values = true)]
        lambda: Option<Complex64>,
        #[arg(long)]
        ppm: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        settings: SettingsArgs,
    },
    /// Summable-class evidence over a parameter grid (CSV).
    Wscan {
        #[arg(long, allow_negative_numbers = true)]
        re_min: f64,
        #[arg(long, allow_negative_numbers = true)]
        re_max: f64,
        #[arg(long, allow_negative_numbers = true)]
        im_min: f64,
        #[arg(long, allow_negative_numbers = true)]
        im_max: f64,
        #[arg(long)]
        step: f64,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        settings: SettingsArgs,
    },
    /// Scan for constant-modulus derivative trends (expected: none).
    Prop1scan {
        #[arg(long, allow_negative_numbers = true)]
        re_min: f64,
        #[arg(long, allow_negative_numbers = true)]
        re_max: f64,
        #[arg(long)]
        step: f64,
        /// Imaginary part of the scanned line.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        im: f64,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        settings: SettingsArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScanModeArg {
    ParamClassify,
    DynamicalEscape,
}

impl From<ScanModeArg> for ScanMode {
    fn from(m: ScanModeArg) -> Self {
        match m {
            ScanModeArg::ParamClassify => ScanMode::ParamClassify,
            ScanModeArg::DynamicalEscape => ScanMode::DynamicalEscape,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VerifySuite {
    /// Branch sum vs closed form for one gamma term.
    Prop2,
    /// Twice-iterated closed form vs nested branch sums.
    Iterate,
    /// Fixed-point residual structure of the phi series.
    Lemma5,
    /// Moebius conjugation identity for the shifted series.
    Mobius,
}

/// Pole-free sample points used by the lemma5/mobius suites at the default
/// parameters.
const SAMPLES: [(f64, f64); 10] = [
    (2.0, 2.0),
    (-1.5, 0.7),
    (0.5, -2.0),
    (3.3, 0.1),
    (-2.0, -2.0),
    (1.7, 1.7),
    (-0.8, -0.3),
    (2.5, -1.1),
    (0.3, 1.9),
    (-3.0, 1.0),
];

fn sample_points() -> Vec<Complex64> {
    SAMPLES.iter().map(|&(r, i)| Complex64::new(r, i)).collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn load_settings(config: &Option<PathBuf>, args: &SettingsArgs) -> Result<Settings, CliError> {
    let mut s = Settings::default();
    if let Some(path) = config {
        s.load(path).map_err(|e| match e {
            expdyn_cli::config::ConfigError::Io(io) => CliError::Io(io),
            other => CliError::Usage(other.to_string()),
        })?;
    }
    args.apply(&mut s);
    Ok(s)
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Orbit {
            lambda,
            seed,
            steps,
            csv,
            json,
            settings,
        } => {
            if steps < 1 {
                return Err(CliError::Usage("need at least one step".into()));
            }
            let s = load_settings(&cli.config, &settings)?;
            let rec = orbit::orbit(lambda, seed, steps, &s.orbit_params());
            println!(
                "orbit lambda={lambda} seed={seed} points={} status={}",
                rec.points.len(),
                rec.status_code()
            );
            if let Some(path) = &csv {
                let mut buf = Vec::new();
                rec.to_csv(&mut buf)?;
                write_out(path, &buf)?;
            }
            if let Some(path) = &json {
                write_out(path, serde_json::to_string_pretty(&rec).unwrap().as_bytes())?;
            }
            if csv.is_none() && json.is_none() {
                let mut out = Vec::new();
                rec.to_csv(&mut out)?;
                std::io::stdout().write_all(&out)?;
            }
            Ok(())
        }
        Command::Series {
            lambda,
            terms,
            at,
            csv,
            json,
            settings,
        } => {
            let s = load_settings(&cli.config, &settings)?;
            let report = match at {
                Some(a) => {
                    if terms < 2 {
                        return Err(CliError::Usage("summability needs at least 2 terms".into()));
                    }
                    series::summability_report(lambda, a, terms, &s.series_params())
                }
                None => series::poincare_report(lambda, terms, &s.series_params())?,
            };
            emit_series(&report, csv, json)
        }
        Command::Bseries {
            lambda,
            a,
            terms,
            csv,
            json,
            settings,
        } => {
            let s = load_settings(&cli.config, &settings)?;
            let report = series::b_series(lambda, a, terms, &s.series_params())?;
            if let Some(d) = report.b_dichotomy_distance {
                println!("|B_n(f(1)) - (-1)| = {d:.6e}");
            }
            emit_series(&report, csv, json)
        }
        Command::RuelleEval {
            lambda,
            z,
            poles,
            combo_json,
            k,
            iterate,
            modulus,
        } => {
            let combo = match combo_json {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)?;
                    serde_json::from_str::<GammaCombo>(&text)
                        .map_err(|e| CliError::Usage(format!("bad combo JSON: {e}")))?
                }
                None => {
                    if poles.is_empty() {
                        return Err(CliError::Usage(
                            "need at least one --pole or --combo-json".into(),
                        ));
                    }
                    GammaCombo::from_terms(
                        poles.iter().map(|&p| (Complex64::new(1.0, 0.0), p)),
                    )?
                }
            };
            let closed = ruelle::push_forward_iter(lambda, &combo, iterate)?;
            let closed_val = closed.eval(z)?;
            println!("closed_form = {closed_val}");
            if iterate == 1 {
                let bs = ruelle::branch_sum(lambda, &combo, z, k)?;
                println!("branch_sum  = {bs}   (K = {k})");
                println!("difference  = {:.3e}", (bs - closed_val).norm());
            } else if iterate == 2 {
                let nested = ruelle::nested_branch_sum(lambda, &combo, z, k.min(1200), k.min(1200))?;
                println!("nested_sum  = {nested}");
                println!("difference  = {:.3e}", (nested - closed_val).norm());
            }
            if modulus {
                let m = ruelle::modulus_branch_sum(lambda, &combo, z, k)?;
                println!("modulus_sum = {m}");
            }
            println!(
                "result_combo = {}",
                serde_json::to_string(&closed).unwrap()
            );
            Ok(())
        }
        Command::Verify {
            suite,
            lambda,
            a,
            z,
            y,
            k,
            n,
        } => run_verify(suite, lambda, a, z, y, k, n),
        Command::Classify {
            lambda,
            json,
            settings,
        } => {
            let s = load_settings(&cli.config, &settings)?;
            if s.horizon < 20 {
                return Err(CliError::Usage("classification horizon must be >= 20".into()));
            }
            let report = classify::classify_lambda(lambda, s.horizon, &s.thresholds());
            let text = serde_json::to_string_pretty(&report).unwrap();
            match json {
                Some(path) => write_out(&path, text.as_bytes())?,
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::Scan {
            mode,
            re_min,
            re_max,
            im_min,
            im_max,
            width,
            height,
            lambda,
            ppm,
            csv,
            settings,
        } => {
            let s = load_settings(&cli.config, &settings)?;
            let mode: ScanMode = mode.into();
            if mode == ScanMode::DynamicalEscape && lambda.is_none() {
                return Err(CliError::Usage(
                    "dynamical-escape scans need --lambda".into(),
                ));
            }
            let job = ScanJob {
                region: Region {
                    re_min,
                    re_max,
                    im_min,
                    im_max,
                },
                width,
                height,
                mode,
                lambda: lambda.unwrap_or(Complex64::new(1.0, 0.0)),
                horizon: s.horizon,
                thresholds: s.thresholds(),
                resolution_cap: s.resolution_cap,
            };
            let workers = scan::effective_workers(s.workers);
            let grid = scan::run_scan(&job, workers).map_err(|e| CliError::Limits(e.to_string()))?;
            println!(
                "scan {}x{} mode={} workers={} done",
                width,
                height,
                job.mode.name(),
                workers
            );
            if let Some(path) = &ppm {
                write_out(path, &render::render_ppm(&grid, job.mode))?;
            }
            if let Some(path) = &csv {
                let mut buf = Vec::new();
                scan::write_csv(&job, &grid, &mut buf)?;
                write_out(path, &buf)?;
            }
            Ok(())
        }
        Command::Wscan {
            re_min,
            re_max,
            im_min,
            im_max,
            step,
            csv,
            settings,
        } => {
            let s = load_settings(&cli.config, &settings)?;
            if step <= 0.0 || re_min > re_max || im_min > im_max {
                return Err(CliError::Limits("degenerate wscan grid".into()));
            }
            let grid = ruelle::rect_grid(re_min, re_max, im_min, im_max, step);
            let mut buf = Vec::new();
            writeln!(
                buf,
                "# wscan region=[{re_min},{re_max}]x[{im_min},{im_max}] step={step} horizon={} escape_log_threshold={} ratio_delta={}",
                s.horizon, s.escape_log_threshold, s.ratio_delta
            )?;
            writeln!(
                buf,
                "re_lambda,im_lambda,case_code,summable,min_dist,re_sn_tail,im_sn_tail"
            )?;
            let thresholds = s.thresholds();
            for lambda in grid {
                let rep = classify::classify_lambda(lambda, s.horizon.max(20), &thresholds);
                let tail = rep
                    .sn_trend
                    .last()
                    .copied()
                    .unwrap_or(Complex64::new(f64::NAN, f64::NAN));
                writeln!(
                    buf,
                    "{},{},{},{},{},{},{}",
                    lambda.re,
                    lambda.im,
                    rep.case.code(),
                    series::verdict_code(rep.w.summable),
                    rep.w.zero_not_in_x.min_dist,
                    tail.re,
                    tail.im
                )?;
            }
            match csv {
                Some(path) => write_out(&path, &buf)?,
                None => std::io::stdout().write_all(&buf)?,
            }
            Ok(())
        }
        Command::Prop1scan {
            re_min,
            re_max,
            step,
            im,
            csv,
            settings,
        } => {
            let s = load_settings(&cli.config, &settings)?;
            if step <= 0.0 || re_min > re_max {
                return Err(CliError::Limits("degenerate prop1scan grid".into()));
            }
            let mut grid = Vec::new();
            let mut re = re_min;
            while re <= re_max + step * 0.5 {
                grid.push(Complex64::new(re, im));
                re += step;
            }
            let flags = classify::prop1_scan(&grid, s.horizon, &s.thresholds());
            println!(
                "prop1scan: {} parameters, {} flagged",
                grid.len(),
                flags.len()
            );
            let mut buf = Vec::new();
            writeln!(
                buf,
                "# prop1scan region=[{re_min},{re_max}] im={im} step={step} horizon={} c_band_delta={}",
                s.horizon, s.c_band_delta
            )?;
            writeln!(buf, "re_lambda,im_lambda,c_estimate,drift_per_step,window_len")?;
            for f in &flags {
                writeln!(
                    buf,
                    "{},{},{},{},{}",
                    f.lambda.re, f.lambda.im, f.c_estimate, f.drift_per_step, f.window_len
                )?;
            }
            match csv {
                Some(path) => write_out(&path, &buf)?,
                None => std::io::stdout().write_all(&buf)?,
            }
            Ok(())
        }
    }
}

fn emit_series(
    report: &series::SeriesReport,
    csv: Option<PathBuf>,
    json: Option<PathBuf>,
) -> Result<(), CliError> {
    let sum = report.sum();
    println!(
        "sum = {} + {}i   verdict = {}   terms = {}",
        sum.re,
        sum.im,
        series::verdict_code(report.verdict),
        report.truncation_n
    );
    if let Some(path) = &csv {
        let mut buf = Vec::new();
        report.to_csv(&mut buf)?;
        write_out(path, &buf)?;
    }
    if let Some(path) = &json {
        write_out(
            path,
            serde_json::to_string_pretty(report).unwrap().as_bytes(),
        )?;
    }
    if csv.is_none() && json.is_none() {
        let mut out = Vec::new();
        report.to_csv(&mut out)?;
        std::io::stdout().write_all(&out)?;
    }
    Ok(())
}

fn run_verify(
    suite: VerifySuite,
    lambda: Option<Complex64>,
    a: Option<Complex64>,
    z: Option<Complex64>,
    y: Option<Complex64>,
    k: Option<i64>,
    n: Option<usize>,
) -> Result<(), CliError> {
    let one = |v: Option<Complex64>, d: (f64, f64)| v.unwrap_or(Complex64::new(d.0, d.1));
    match suite {
        VerifySuite::Prop2 => {
            let lambda = one(lambda, (1.0, 0.0));
            let a = one(a, (2.0, 0.0));
            let z = one(z, (3.0, 0.0));
            let k = k.unwrap_or(10_000).max(1);
            let combo = GammaCombo::gamma(a)?;
            let bs = ruelle::branch_sum(lambda, &combo, z, k)?;
            let cf = ruelle::push_forward(lambda, &combo)?.eval(z)?;
            let residual = (bs - cf).norm();
            // empirical truncation envelope: C/K^2 with C = 100
            let tol = 100.0 / (k as f64 * k as f64);
            println!(
                "prop2: lambda={lambda} a={a} z={z} K={k}\n  branch_sum  = {bs}\n  closed_form = {cf}\n  max residual {residual:.3e} (tolerance {tol:.3e})"
            );
            if residual <= tol {
                Ok(())
            } else {
                Err(CliError::Verification(format!(
                    "prop2 residual {residual:.3e} > {tol:.3e}"
                )))
            }
        }
        VerifySuite::Iterate => {
            let lambda = one(lambda, (1.0, 0.0));
            let a = one(a, (2.0, 0.0));
            let z = one(z, (3.0, 0.0));
            let k = k.unwrap_or(800).max(1);
            let combo = GammaCombo::gamma(a)?;
            let closed = ruelle::push_forward_iter(lambda, &combo, 2)?.eval(z)?;
            let nested = ruelle::nested_branch_sum(lambda, &combo, z, k, k)?;
            let residual = (nested - closed).norm();
            let tol = 1e-5;
            println!(
                "iterate: lambda={lambda} a={a} z={z} K={k}\n  nested      = {nested}\n  closed_form = {closed}\n  max residual {residual:.3e} (tolerance {tol:.1e})"
            );
            if residual <= tol {
                Ok(())
            } else {
                Err(CliError::Verification(format!(
                    "iterate residual {residual:.3e} > {tol:.1e}"
                )))
            }
        }
        VerifySuite::Lemma5 => {
            let lambda = one(lambda, (1.0, 0.0));
            let n = n.unwrap_or(12).max(1);
            let r = ruelle::fixed_point_residual(lambda, n, &sample_points())?;
            let tol = 1e-9;
            println!(
                "lemma5: lambda={lambda} N={n}\n  |1 + B_N(f(1))| = {:.12}\n  max |R*(phi)-phi| = {:.6e}\n  max residual (shape mismatch) {:.3e} (tolerance {tol:.1e})",
                r.b_plus_one_abs, r.max_residual, r.max_shape_mismatch
            );
            if r.max_shape_mismatch <= tol {
                Ok(())
            } else {
                Err(CliError::Verification(format!(
                    "lemma5 shape mismatch {:.3e} > {tol:.1e}",
                    r.max_shape_mismatch
                )))
            }
        }
        VerifySuite::Mobius => {
            let lambda = one(lambda, (1.0, 0.0));
            let y = one(y, (3.0, 1.0));
            let n = n.unwrap_or(12).max(1);
            let r = ruelle::mobius_identity_residual(lambda, y, n, &sample_points())?;
            let tol = 1e-8;
            println!(
                "mobius: lambda={lambda} y={y} N={n}\n  C1 = {}  C2 = {}\n  max residual {:.3e} (tolerance {tol:.1e})",
                r.c1, r.c2, r.max_residual
            );
            if r.max_residual <= tol {
                Ok(())
            } else {
                Err(CliError::Verification(format!(
                    "mobius residual {:.3e} > {tol:.1e}",
                    r.max_residual
                )))
            }
        }
    }
}
