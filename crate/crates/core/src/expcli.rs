//! Experiment driver: configuration, figure presets, sweeps and CSV output.
//!
//! A configuration is a flat JSON object. Every key is optional when a preset
//! supplies the base values; otherwise `m`, `n_main`, `n_eave`, `sweep` and
//! `sweep_grid` are required.
//!
//! ```json
//! {
//!   "m": 4, "n_main": 4, "n_eave": 2,
//!   "snr_main_db": 0.0, "snr_eave_db": 0.0,
//!   "spacing_wavelengths": 1.0,
//!   "theta_main_deg": 40.0, "theta_eave_deg": -10.0,
//!   "spread_main_deg": 5.0, "spread_eave_deg": 5.0,
//!   "strategies": ["iso", "wf", "gsvd"],
//!   "mc_realizations": 10000, "seed": 0,
//!   "sweep": "spacing", "sweep_grid": [0.2, 0.3, 0.4],
//!   "output_path": "fig5.csv"
//! }
//! ```

use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ArraySpec, ChannelStatistics};
use crate::montecarlo::{mc_secrecy_rate, McEstimate, DEFAULT_REALIZATIONS};
use crate::precoders::{optimize, Strategy};
use crate::{db_to_linear, nats_to_bits, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    /// Common SNR of both links, in dB.
    Snr,
    /// Number of eavesdropper antennas.
    Ne,
    /// Antenna spacing in wavelengths.
    Spacing,
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sweep::Snr => "snr_db",
            Sweep::Ne => "n_eave",
            Sweep::Spacing => "spacing_wavelengths",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n_main: usize,
    pub n_eave: usize,
    pub snr_main_db: f64,
    pub snr_eave_db: f64,
    pub spacing_wavelengths: f64,
    pub theta_main_deg: f64,
    pub theta_eave_deg: f64,
    pub spread_main_deg: f64,
    pub spread_eave_deg: f64,
    pub strategies: Vec<Strategy>,
    pub mc_realizations: usize,
    pub seed: u64,
    pub sweep: Sweep,
    pub sweep_grid: Vec<f64>,
    pub output_path: Option<String>,
}

/// Keys accepted in a configuration file; absent keys fall back to the base.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    m: Option<usize>,
    n_main: Option<usize>,
    n_eave: Option<usize>,
    snr_main_db: Option<f64>,
    snr_eave_db: Option<f64>,
    spacing_wavelengths: Option<f64>,
    theta_main_deg: Option<f64>,
    theta_eave_deg: Option<f64>,
    spread_main_deg: Option<f64>,
    spread_eave_deg: Option<f64>,
    strategies: Option<Vec<Strategy>>,
    mc_realizations: Option<usize>,
    seed: Option<u64>,
    sweep: Option<Sweep>,
    sweep_grid: Option<Vec<f64>>,
    output_path: Option<String>,
}

fn validation(field: &str, message: impl Into<String>) -> Error {
    Error::Validation {
        field: field.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn array_main(&self) -> ArraySpec {
        ArraySpec {
            num_antennas: self.m,
            spacing_wavelengths: self.spacing_wavelengths,
            mean_angle_deg: self.theta_main_deg,
            angle_spread_deg: self.spread_main_deg,
        }
    }

    pub fn array_eave(&self) -> ArraySpec {
        ArraySpec {
            num_antennas: self.m,
            spacing_wavelengths: self.spacing_wavelengths,
            mean_angle_deg: self.theta_eave_deg,
            angle_spread_deg: self.spread_eave_deg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("m", self.m),
            ("n_main", self.n_main),
            ("n_eave", self.n_eave),
        ] {
            if value == 0 {
                return Err(validation(field, "must be at least 1"));
            }
        }
        if self.mc_realizations == 0 {
            return Err(validation("mc_realizations", "must be at least 1"));
        }
        for (field, value) in [
            ("snr_main_db", self.snr_main_db),
            ("snr_eave_db", self.snr_eave_db),
        ] {
            if !value.is_finite() {
                return Err(validation(field, "must be finite"));
            }
        }
        if !(self.spacing_wavelengths >= 0.0) || !self.spacing_wavelengths.is_finite() {
            return Err(validation("spacing_wavelengths", "must be finite and >= 0"));
        }
        for (field, value) in [
            ("theta_main_deg", self.theta_main_deg),
            ("theta_eave_deg", self.theta_eave_deg),
        ] {
            if !value.is_finite() {
                return Err(validation(field, "must be finite"));
            }
        }
        for (field, value) in [
            ("spread_main_deg", self.spread_main_deg),
            ("spread_eave_deg", self.spread_eave_deg),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(validation(field, "must be finite and > 0"));
            }
        }
        if self.strategies.is_empty() {
            return Err(validation(
                "strategies",
                "must list at least one of iso, wf, gsvd",
            ));
        }
        for (i, s) in self.strategies.iter().enumerate() {
            if self.strategies[..i].contains(s) {
                return Err(validation("strategies", format!("`{s}` listed twice")));
            }
        }
        if self.sweep_grid.is_empty() {
            return Err(validation("sweep_grid", "must not be empty"));
        }
        if self.sweep_grid.iter().any(|v| !v.is_finite()) {
            return Err(validation("sweep_grid", "values must be finite"));
        }
        if self.sweep_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(validation(
                "sweep_grid",
                "values must be strictly ascending",
            ));
        }
        match self.sweep {
            Sweep::Snr => {}
            Sweep::Ne => {
                if self.sweep_grid.iter().any(|&v| v < 1.0 || v.fract() != 0.0) {
                    return Err(validation(
                        "sweep_grid",
                        "antenna counts must be integers >= 1",
                    ));
                }
            }
            Sweep::Spacing => {
                if self.sweep_grid.iter().any(|&v| v < 0.0) {
                    return Err(validation("sweep_grid", "spacings must be >= 0"));
                }
            }
        }
        Ok(())
    }

    /// Copy of the configuration with the swept variable set to `value`.
    pub fn at_sweep_value(&self, value: f64) -> ExperimentConfig {
        let mut c = self.clone();
        match self.sweep {
            Sweep::Snr => {
                c.snr_main_db = value;
                c.snr_eave_db = value;
            }
            Sweep::Ne => c.n_eave = value as usize,
            Sweep::Spacing => c.spacing_wavelengths = value,
        }
        c
    }

    /// Main and eavesdropper statistics at the configured SNRs.
    pub fn links(&self) -> Result<(ChannelStatistics, ChannelStatistics)> {
        Ok((
            ChannelStatistics::from_array(
                db_to_linear(self.snr_main_db),
                self.n_main,
                &self.array_main(),
            )?,
            ChannelStatistics::from_array(
                db_to_linear(self.snr_eave_db),
                self.n_eave,
                &self.array_eave(),
            )?,
        ))
    }

    /// Both links at a common SNR.
    pub fn links_at_snr_db(&self, snr_db: f64) -> Result<(ChannelStatistics, ChannelStatistics)> {
        let mut c = self.clone();
        c.snr_main_db = snr_db;
        c.snr_eave_db = snr_db;
        c.links()
    }
}

fn base_defaults() -> RawConfig {
    RawConfig {
        snr_main_db: Some(0.0),
        snr_eave_db: Some(0.0),
        spacing_wavelengths: Some(1.0),
        theta_main_deg: Some(40.0),
        theta_eave_deg: Some(-10.0),
        spread_main_deg: Some(5.0),
        spread_eave_deg: Some(5.0),
        strategies: Some(Strategy::ALL.to_vec()),
        mc_realizations: Some(DEFAULT_REALIZATIONS),
        seed: Some(0),
        ..RawConfig::default()
    }
}

fn merge(raw: RawConfig, base: RawConfig) -> Result<ExperimentConfig> {
    fn need<T>(field: &str, v: Option<T>) -> Result<T> {
        v.ok_or_else(|| validation(field, "is required"))
    }
    let config = ExperimentConfig {
        m: need("m", raw.m.or(base.m))?,
        n_main: need("n_main", raw.n_main.or(base.n_main))?,
        n_eave: need("n_eave", raw.n_eave.or(base.n_eave))?,
        snr_main_db: need("snr_main_db", raw.snr_main_db.or(base.snr_main_db))?,
        snr_eave_db: need("snr_eave_db", raw.snr_eave_db.or(base.snr_eave_db))?,
        spacing_wavelengths: need(
            "spacing_wavelengths",
            raw.spacing_wavelengths.or(base.spacing_wavelengths),
        )?,
        theta_main_deg: need("theta_main_deg", raw.theta_main_deg.or(base.theta_main_deg))?,
        theta_eave_deg: need("theta_eave_deg", raw.theta_eave_deg.or(base.theta_eave_deg))?,
        spread_main_deg: need(
            "spread_main_deg",
            raw.spread_main_deg.or(base.spread_main_deg),
        )?,
        spread_eave_deg: need(
            "spread_eave_deg",
            raw.spread_eave_deg.or(base.spread_eave_deg),
        )?,
        strategies: need("strategies", raw.strategies.or(base.strategies))?,
        mc_realizations: need(
            "mc_realizations",
            raw.mc_realizations.or(base.mc_realizations),
        )?,
        seed: need("seed", raw.seed.or(base.seed))?,
        sweep: need("sweep", raw.sweep.or(base.sweep))?,
        sweep_grid: need("sweep_grid", raw.sweep_grid.or(base.sweep_grid))?,
        output_path: raw.output_path.or(base.output_path),
    };
    config.validate()?;
    Ok(config)
}

fn to_raw(c: &ExperimentConfig) -> RawConfig {
    RawConfig {
        m: Some(c.m),
        n_main: Some(c.n_main),
        n_eave: Some(c.n_eave),
        snr_main_db: Some(c.snr_main_db),
        snr_eave_db: Some(c.snr_eave_db),
        spacing_wavelengths: Some(c.spacing_wavelengths),
        theta_main_deg: Some(c.theta_main_deg),
        theta_eave_deg: Some(c.theta_eave_deg),
        spread_main_deg: Some(c.spread_main_deg),
        spread_eave_deg: Some(c.spread_eave_deg),
        strategies: Some(c.strategies.clone()),
        mc_realizations: Some(c.mc_realizations),
        seed: Some(c.seed),
        sweep: Some(c.sweep),
        sweep_grid: Some(c.sweep_grid.clone()),
        output_path: c.output_path.clone(),
    }
}

/// Parses configuration text on top of `base` (or the built-in defaults).
pub fn parse_config_str(text: &str, base: Option<&ExperimentConfig>) -> Result<ExperimentConfig> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let base = base.map(to_raw).unwrap_or_else(base_defaults);
    merge(raw, base)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    parse_config_with_base(path, None)
}

pub fn parse_config_with_base(
    path: impl AsRef<Path>,
    base: Option<&ExperimentConfig>,
) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config_str(&text, base)
}

/// `start, start + step, …` up to and including `end`, built from integer
/// multiples to avoid accumulated rounding.
fn grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let count = ((end - start) / step).round() as usize;
    (0..=count).map(|k| start + k as f64 * step).collect()
}

/// Configurations behind the four published figures.
pub fn figure_preset(name: &str) -> Result<ExperimentConfig> {
    let snr_grid = grid(-5.0, 20.0, 2.5);
    let (m, n_main, n_eave, sweep, sweep_grid) = match name {
        "fig2" => (6, 6, 2, Sweep::Snr, snr_grid),
        "fig3" => (2, 3, 4, Sweep::Snr, snr_grid),
        "fig4" => (4, 4, 1, Sweep::Ne, grid(1.0, 12.0, 1.0)),
        "fig5" => (
            4,
            4,
            2,
            Sweep::Spacing,
            (2..=30).map(|k| k as f64 / 10.0).collect(),
        ),
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    merge(
        RawConfig {
            m: Some(m),
            n_main: Some(n_main),
            n_eave: Some(n_eave),
            sweep: Some(sweep),
            sweep_grid: Some(sweep_grid),
            ..RawConfig::default()
        },
        base_defaults(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub strategy: Strategy,
    /// Nats per transmit antenna.
    pub rs_lsl: Option<f64>,
    /// Nats per transmit antenna.
    pub rs_mc: Option<McEstimate>,
    pub outer_iterations: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub sweep: Sweep,
    /// Transmit antennas, for the total-rate column.
    pub m: usize,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub skip_mc: bool,
}

fn run_point(config: &ExperimentConfig, value: f64, options: RunOptions) -> Vec<SweepRow> {
    let point = config.at_sweep_value(value);
    let failed = |strategy, err: Error| SweepRow {
        sweep_value: value,
        strategy,
        rs_lsl: None,
        rs_mc: None,
        outer_iterations: None,
        error: Some(err.to_string()),
    };
    let links = match point.links() {
        Ok(links) => links,
        Err(err) => {
            return config
                .strategies
                .iter()
                .map(|&s| failed(s, err.clone()))
                .collect()
        }
    };
    let (stats_m, stats_e) = &links;
    config
        .strategies
        .iter()
        .map(|&strategy| {
            let opt = match optimize(strategy, stats_m, stats_e) {
                Ok(opt) => opt,
                Err(err) => return failed(strategy, err),
            };
            let mut row = SweepRow {
                sweep_value: value,
                strategy,
                rs_lsl: Some(opt.rate.rs),
                rs_mc: None,
                outer_iterations: Some(opt.outer_iterations),
                error: (!opt.converged)
                    .then(|| "outer loop did not converge; last iterate reported".to_string()),
            };
            if !options.skip_mc {
                match mc_secrecy_rate(
                    stats_m,
                    stats_e,
                    &opt.precoder,
                    config.mc_realizations,
                    config.seed,
                ) {
                    Ok(est) => row.rs_mc = Some(est),
                    Err(err) => row.error = Some(err.to_string()),
                }
            }
            row
        })
        .collect()
}

/// Runs every strategy at every grid point. Failures are recorded per row.
pub fn run_sweep(config: &ExperimentConfig, options: RunOptions) -> SweepResult {
    let rows = config
        .sweep_grid
        .par_iter()
        .map(|&value| run_point(config, value, options))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    SweepResult {
        sweep: config.sweep,
        m: config.m,
        rows,
    }
}

pub const CSV_COLUMNS: [&str; 9] = [
    "sweep_var",
    "sweep_value",
    "strategy",
    "rs_lsl_per_antenna_bits",
    "rs_lsl_total_bits",
    "rs_mc_per_antenna_bits",
    "rs_mc_std_error",
    "outer_iterations",
    "error",
];

impl SweepResult {
    /// True when every row failed.
    pub fn all_failed(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.rs_lsl.is_none())
    }

    /// Writes the CSV table. `timestamp` adds a leading `#` comment line.
    pub fn write_csv<W: Write>(&self, out: W, timestamp: Option<u64>) -> Result<()> {
        let mut out = out;
        if let Some(ts) = timestamp {
            writeln!(out, "# generated unix_time={ts}")?;
        }
        let mut writer = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Io(e.to_string());
        writer.write_record(CSV_COLUMNS).map_err(csv_err)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            let lsl_bits = row.rs_lsl.map(nats_to_bits);
            writer
                .write_record([
                    self.sweep.to_string(),
                    row.sweep_value.to_string(),
                    row.strategy.to_string(),
                    opt(lsl_bits),
                    opt(lsl_bits.map(|b| b * self.m as f64)),
                    opt(row.rs_mc.map(|e| nats_to_bits(e.mean))),
                    opt(row.rs_mc.map(|e| nats_to_bits(e.std_error))),
                    row.outer_iterations
                        .map(|n| n.to_string())
                        .unwrap_or_default(),
                    row.error.clone().unwrap_or_default(),
                ])
                .map_err(csv_err)?;
        }
        writer.flush()?;
        Ok(())
    }
}
