//! Flat `key=value` configuration, overridden by command-line flags.

use std::path::Path;

use expdyn::orbit::OrbitParams;
use expdyn::series::SeriesParams;
use expdyn::Thresholds;

/// Every tunable shared across subcommands, with the shipped defaults.
#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub escape_log_threshold: f64,
    pub cycle_tol: f64,
    pub max_period: usize,
    pub horizon: usize,
    pub window_fraction: f64,
    pub tail_window_fraction: f64,
    pub ratio_delta: f64,
    pub c_band_delta: f64,
    pub pole_tol: f64,
    /// 0 means "use available parallelism".
    pub workers: usize,
    pub resolution_cap: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            escape_log_threshold: 50.0,
            cycle_tol: 1e-9,
            max_period: 64,
            horizon: 200,
            window_fraction: 0.25,
            tail_window_fraction: 0.25,
            ratio_delta: 0.05,
            c_band_delta: 0.02,
            pole_tol: 1e-9,
            workers: 0,
            resolution_cap: 16_000_000,
        }
    }
}

impl Settings {
    pub fn orbit_params(&self) -> OrbitParams {
        OrbitParams {
            escape_log_threshold: self.escape_log_threshold,
            cycle_tol: self.cycle_tol,
            max_period: self.max_period,
        }
    }

    pub fn series_params(&self) -> SeriesParams {
        SeriesParams {
            tail_window_fraction: self.tail_window_fraction,
            ratio_delta: self.ratio_delta,
            escape_log_threshold: self.escape_log_threshold,
        }
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            window_fraction: self.window_fraction,
            c_band_delta: self.c_band_delta,
            orbit: self.orbit_params(),
            series: self.series_params(),
            ..Thresholds::default()
        }
    }

    /// Apply one `key=value` pair; unknown keys and bad values are errors.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn f(v: &str, key: &str) -> Result<f64, String> {
            v.parse()
                .map_err(|_| format!("config key {key}: expected a number, got {v:?}"))
        }
        fn u(v: &str, key: &str) -> Result<usize, String> {
            v.parse()
                .map_err(|_| format!("config key {key}: expected an integer, got {v:?}"))
        }
        match key {
            "escape_log_threshold" => self.escape_log_threshold = f(value, key)?,
            "cycle_tol" => self.cycle_tol = f(value, key)?,
            "max_period" => self.max_period = u(value, key)?,
            "horizon" => self.horizon = u(value, key)?,
            "window_fraction" => self.window_fraction = f(value, key)?,
            "tail_window_fraction" => self.tail_window_fraction = f(value, key)?,
            "ratio_delta" => self.ratio_delta = f(value, key)?,
            "c_band_delta" => self.c_band_delta = f(value, key)?,
            "pole_tol" => self.pole_tol = f(value, key)?,
            "workers" => self.workers = u(value, key)?,
            "resolution_cap" => self.resolution_cap = u(value, key)?,
            other => return Err(format!("unknown config key {other:?}")),
        }
        Ok(())
    }

    /// Read a config file (lines of `key=value`, `#` comments).
    pub fn load(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError::Syntax(format!(
                    "{}:{}: expected key=value, got {line:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.apply(key.trim(), value.trim())
                .map_err(|e| ConfigError::Syntax(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(std::io::Error),
    #[error("{0}")]
    Syntax(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn parses_and_overrides() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "# comment\nhorizon = 333\nescape_log_threshold=40  # inline").unwrap();
        let mut s = Settings::default();
        s.load(file.path()).unwrap();
        assert_eq!(s.horizon, 333);
        assert_eq!(s.escape_log_threshold, 40.0);
        assert_eq!(s.max_period, 64); // untouched default
    }

    #[test]
    fn unknown_key_is_an_error() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "horizont=5").unwrap();
        let mut s = Settings::default();
        assert!(matches!(
            s.load(file.path()),
            Err(ConfigError::Syntax(_))
        ));
    }
}
