use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::rabi_period;
use crate::hds::SamplingSpec;
use crate::model::{DriveSpec, HdsState};
use crate::ode::{Method, SolverOptions, Tolerances};

/// Span used for undriven and constant-drive runs when none is given.
pub const DEFAULT_CONSERVATIVE_SPAN: f64 = 2000.0;
pub const DEFAULT_AMPLITUDE: f64 = 8e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DriveKind {
    Zero,
    Const,
    #[default]
    Sin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Every setting optional; the same shape is read from a config file and
/// from command-line flags, and the flags win.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub drive: Option<DriveKind>,
    pub amplitude: Option<f64>,
    pub alpha0: Option<f64>,
    pub delta0: Option<f64>,
    pub theta0: Option<f64>,
    pub tau_span: Option<(f64, f64)>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub method: Option<Method>,
    pub samples_per_cycle: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    pub overlay: Option<PathBuf>,
    pub t_rabi_us: Option<f64>,
    pub threads: Option<usize>,
    pub amplitudes: Option<Vec<f64>>,
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f; } )*
    };
}

impl ConfigOverrides {
    /// Parses the TOML key-value file format.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0);
            Error::Parse { line, msg: e.message().to_string() }
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Fields set in `other` replace those in `self`.
    pub fn merged(mut self, other: ConfigOverrides) -> Self {
        merge_fields!(
            self, other, drive, amplitude, alpha0, delta0, theta0, tau_span, rtol, atol, method,
            samples_per_cycle, out, format, seed, overlay, t_rabi_us, threads, amplitudes
        );
        self
    }
}

/// A validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub drive: DriveKind,
    /// Sinusoid amplitude, or the constant value for `const`.
    pub amplitude: f64,
    pub initial: HdsState,
    pub tau_span: (f64, f64),
    pub tolerances: Tolerances,
    pub method: Method,
    pub samples_per_cycle: usize,
    pub out_dir: PathBuf,
    pub format: Format,
    pub seed: u64,
    pub overlay: Option<PathBuf>,
    pub t_rabi_us: Option<f64>,
    pub threads: Option<usize>,
    pub amplitudes: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::resolve(ConfigOverrides::default()).expect("defaults are valid")
    }
}

fn check(cond: bool, field: &'static str, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config { field, msg: msg() })
    }
}

impl RunConfig {
    /// Fills defaults and validates every field before anything runs.
    pub fn resolve(o: ConfigOverrides) -> Result<Self> {
        let drive = o.drive.unwrap_or_default();
        let amplitude = o.amplitude.unwrap_or(match drive {
            DriveKind::Zero => 0.0,
            _ => DEFAULT_AMPLITUDE,
        });
        check(amplitude.is_finite(), "amplitude", || format!("{amplitude} is not finite"))?;
        if drive == DriveKind::Sin {
            check(amplitude >= 0.0, "amplitude", || format!("A = {amplitude} must be nonnegative"))?;
        }

        let initial = HdsState::new(o.alpha0.unwrap_or(0.0), o.delta0.unwrap_or(0.0), o.theta0.unwrap_or(0.0));
        check(initial.alpha.abs() <= 1.0, "alpha0", || format!("|alpha0| = {} exceeds 1", initial.alpha.abs()))?;
        check(initial.delta.is_finite(), "delta0", || "must be finite".into())?;
        check(initial.theta_overall.is_finite(), "theta0", || "must be finite".into())?;

        let tau_span = o.tau_span.unwrap_or_else(|| {
            let end = if drive == DriveKind::Sin && amplitude > 0.0 {
                rabi_period(amplitude)
            } else {
                DEFAULT_CONSERVATIVE_SPAN
            };
            (0.0, end)
        });
        check(tau_span.0.is_finite() && tau_span.1.is_finite(), "tau_span", || "bounds must be finite".into())?;
        check(tau_span.1 != tau_span.0, "tau_span", || format!("span [{}, {}] has zero length", tau_span.0, tau_span.1))?;
        check(tau_span.1 > tau_span.0, "tau_span", || format!("end {} precedes start {}", tau_span.1, tau_span.0))?;

        let defaults = Tolerances::default();
        let tolerances = Tolerances::new(o.rtol.unwrap_or(defaults.rtol), o.atol.unwrap_or(defaults.atol));
        check(tolerances.rtol > 0.0 && tolerances.rtol.is_finite(), "rtol", || {
            format!("relative tolerance {} must be positive", tolerances.rtol)
        })?;
        check(tolerances.atol > 0.0 && tolerances.atol.is_finite(), "atol", || {
            format!("absolute tolerance {} must be positive", tolerances.atol)
        })?;

        let samples_per_cycle = o.samples_per_cycle.unwrap_or(64);
        check(samples_per_cycle >= 2, "samples_per_cycle", || format!("{samples_per_cycle} is below 2"))?;

        if let Some(t) = o.t_rabi_us {
            check(t > 0.0 && t.is_finite(), "t_rabi_us", || format!("T_Rabi = {t} us must be positive"))?;
        }
        if let Some(n) = o.threads {
            check(n >= 1, "threads", || "need at least one worker".into())?;
        }
        let amplitudes = o.amplitudes.unwrap_or_else(|| vec![4e-3, 8e-3, 1.6e-2]);
        check(!amplitudes.is_empty(), "amplitudes", || "sweep list is empty".into())?;
        for &a in &amplitudes {
            check(a > 0.0 && a.is_finite(), "amplitudes", || format!("sweep amplitude {a} must be positive"))?;
        }

        Ok(RunConfig {
            drive,
            amplitude,
            initial,
            tau_span,
            tolerances,
            method: o.method.unwrap_or_default(),
            samples_per_cycle,
            out_dir: o.out.unwrap_or_else(|| PathBuf::from("out")),
            format: o.format.unwrap_or_default(),
            seed: o.seed.unwrap_or(0),
            overlay: o.overlay,
            t_rabi_us: o.t_rabi_us,
            threads: o.threads,
            amplitudes,
        })
    }

    pub fn drive_spec(&self) -> DriveSpec {
        match self.drive {
            DriveKind::Zero => DriveSpec::Zero,
            DriveKind::Const => DriveSpec::Constant { value: self.amplitude },
            DriveKind::Sin => DriveSpec::Sinusoidal { amplitude: self.amplitude },
        }
    }

    /// Resonant amplitude used by the Rabi and Zeno experiments.
    pub fn rabi_amplitude(&self) -> f64 {
        match self.drive {
            DriveKind::Sin if self.amplitude > 0.0 => self.amplitude,
            _ => DEFAULT_AMPLITUDE,
        }
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions { method: self.method, ..SolverOptions::with_tol(self.tolerances) }
    }

    pub fn sampling(&self) -> SamplingSpec {
        SamplingSpec::PerCycle(self.samples_per_cycle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(o: ConfigOverrides) -> &'static str {
        match RunConfig::resolve(o) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.drive, DriveKind::Sin);
        assert_eq!(c.amplitude, 8e-3);
        assert!((c.tau_span.1 - 1570.796).abs() < 1e-3);
        assert_eq!(c.tolerances, Tolerances::default());
    }

    #[test]
    fn invalid_fields_are_named() {
        assert_eq!(field_of(ConfigOverrides { amplitude: Some(-1e-3), ..Default::default() }), "amplitude");
        assert_eq!(field_of(ConfigOverrides { tau_span: Some((5.0, 5.0)), ..Default::default() }), "tau_span");
        assert_eq!(field_of(ConfigOverrides { alpha0: Some(1.5), ..Default::default() }), "alpha0");
        assert_eq!(field_of(ConfigOverrides { rtol: Some(0.0), ..Default::default() }), "rtol");
        assert_eq!(field_of(ConfigOverrides { atol: Some(-1.0), ..Default::default() }), "atol");
        assert_eq!(field_of(ConfigOverrides { t_rabi_us: Some(0.0), ..Default::default() }), "t_rabi_us");
        // a negative constant drive is fine
        let c = RunConfig::resolve(ConfigOverrides {
            drive: Some(DriveKind::Const),
            amplitude: Some(-0.5),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(c.drive_spec(), DriveSpec::Constant { value: -0.5 });
    }

    #[test]
    fn file_then_flags() {
        let file = ConfigOverrides::from_toml("# weak drive\namplitude = 4e-3\nseed = 9\ntau_span = [0.0, 100.0]\ndrive = \"sin\"\n").unwrap();
        let flags = ConfigOverrides { seed: Some(3), ..Default::default() };
        let c = RunConfig::resolve(file.merged(flags)).unwrap();
        assert_eq!((c.amplitude, c.seed, c.tau_span), (4e-3, 3, (0.0, 100.0)));
    }

    #[test]
    fn file_errors_carry_lines() {
        match ConfigOverrides::from_toml("seed = 1\nbogus = 2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(ConfigOverrides::from_toml("amplitude = \"high\"\n").is_err());
    }
}
