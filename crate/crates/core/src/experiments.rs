//! Weak resonant drive runs, the sigma band, windowed envelope statistics,
//! the Zeno jump schedule, the Heisenberg window and experiment overlays.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::{energy_sample_series, EnergySample};
use crate::error::{Error, Result};
use crate::hds::{integrate_hds, SamplingSpec, Trajectory};
use crate::model::{DriveSpec, HdsState};
use crate::ode::SolverOptions;
use crate::par::{self, Execution};

/// Amplitudes above this are outside the weak-drive regime.
pub const WEAK_DRIVE_LIMIT: f64 = 0.05;
/// Default overlay normalization period in microseconds.
pub const DEFAULT_T_RABI_US: f64 = 50.0;

const JUMP_TOL: f64 = 1e-6;
const EXIT_EPS: f64 = 1e-12;
const SCAN_STEP: f64 = 0.5;

/// `4 pi / A`; infinite without drive.
pub fn rabi_period(amplitude: f64) -> f64 {
    if amplitude > 0.0 {
        2.0 * TAU / amplitude
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RabiRun {
    pub amplitude: f64,
    pub rabi_period: f64,
    pub trajectory: Trajectory,
    pub energy_series: Vec<EnergySample>,
    pub warnings: Vec<String>,
}

impl RabiRun {
    pub fn span(&self) -> (f64, f64) {
        match (self.trajectory.taus.first(), self.trajectory.taus.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => (0.0, 0.0),
        }
    }

    /// `max |H(tau) - cos(A tau / 2)|` over the run.
    pub fn envelope_residual(&self) -> f64 {
        self.energy_series
            .iter()
            .map(|s| (s.h_mean - (self.amplitude * s.tau / 2.0).cos()).abs())
            .fold(0.0, f64::max)
    }

    /// Linear interpolation of the sampled mean energy.
    pub fn h_at(&self, tau: f64) -> Option<f64> {
        let s = &self.energy_series;
        let i = s.partition_point(|x| x.tau < tau);
        if i == 0 {
            return s.first().filter(|x| x.tau == tau).map(|x| x.h_mean);
        }
        let hi = s.get(i)?;
        let lo = &s[i - 1];
        let w = (tau - lo.tau) / (hi.tau - lo.tau);
        Some(lo.h_mean + w * (hi.h_mean - lo.h_mean))
    }
}

/// Drive `A sin(tau)` over an explicit span.
pub fn run_rabi_span(
    amplitude: f64,
    tau_span: (f64, f64),
    start: &HdsState,
    opts: &SolverOptions,
    sampling: &SamplingSpec,
) -> Result<RabiRun> {
    let drive = DriveSpec::sinusoidal(amplitude)?;
    let mut warnings = Vec::new();
    if amplitude > WEAK_DRIVE_LIMIT {
        warnings.push(format!(
            "amplitude {amplitude} exceeds the weak-drive limit {WEAK_DRIVE_LIMIT}; the cos(A tau/2) envelope may not hold"
        ));
    }
    let trajectory = integrate_hds(start, &drive, tau_span, opts, sampling)?;
    let energy_series = energy_sample_series(&trajectory)?;
    Ok(RabiRun { amplitude, rabi_period: rabi_period(amplitude), trajectory, energy_series, warnings })
}

/// `n_periods` Rabi periods from `tau = 0`.
pub fn run_weak_rabi(
    amplitude: f64,
    n_periods: f64,
    start: &HdsState,
    opts: &SolverOptions,
    sampling: &SamplingSpec,
) -> Result<RabiRun> {
    if !(amplitude > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "a Rabi run needs a positive amplitude, got {amplitude}; use run_rabi_span for an undriven span"
        )));
    }
    if !(n_periods > 0.0) || !n_periods.is_finite() {
        return Err(Error::InvalidArgument(format!("n_periods must be positive, got {n_periods}")));
    }
    run_rabi_span(amplitude, (0.0, n_periods * rabi_period(amplitude)), start, opts, sampling)
}

/// Weak-drive analytic band centre and half-width: `(cos(A tau/2), |sin(A tau/2)|)`.
pub fn analytic_band(amplitude: f64, tau: f64) -> (f64, f64) {
    let (s, c) = (amplitude * tau / 2.0).sin_cos();
    (c, s.abs())
}

/// Centered sliding mean over a window of width `width` in tau, truncated at
/// the ends of the series.
pub fn sliding_mean(taus: &[f64], values: &[f64], width: f64) -> Vec<f64> {
    let n = taus.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    let half = width / 2.0;
    let (mut lo, mut hi) = (0, 0);
    let mut out = Vec::with_capacity(n);
    for &t in taus {
        while lo < n && taus[lo] < t - half {
            lo += 1;
        }
        while hi < n && taus[hi] <= t + half {
            hi += 1;
        }
        out.push((prefix[hi] - prefix[lo]) / (hi - lo) as f64);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaBand {
    pub taus: Vec<f64>,
    /// Smoothed mean energy.
    pub h_env: Vec<f64>,
    pub sigma_q: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SigmaBand {
    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }
}

pub fn sigma_band(run: &RabiRun, smoothing_window: f64) -> SigmaBand {
    let taus: Vec<f64> = run.energy_series.iter().map(|s| s.tau).collect();
    let h: Vec<f64> = run.energy_series.iter().map(|s| s.h_mean).collect();
    let h_env = sliding_mean(&taus, &h, smoothing_window);
    let sigma_q: Vec<f64> = run.energy_series.iter().map(|s| s.sigma_q).collect();
    let lower = h_env.iter().zip(&sigma_q).map(|(h, s)| h - s).collect();
    let upper = h_env.iter().zip(&sigma_q).map(|(h, s)| h + s).collect();
    SigmaBand { taus, h_env, sigma_q, lower, upper }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeWindow {
    pub tau_start: f64,
    pub max_sigma_a: f64,
    pub max_sigma_b: f64,
    pub max_sigma_q: f64,
    pub max_abs_delta_h: f64,
    pub exceeds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub window: f64,
    pub tol: f64,
    pub windows: Vec<EnvelopeWindow>,
    pub exceedance_fraction: f64,
    /// Largest `|alpha E|` over the second half Rabi period.
    pub delta_h_max: f64,
    pub delta_h_argmax: f64,
    /// `delta_h_argmax` measured from the start of the half period.
    pub delta_h_argmax_local: f64,
    pub delta_h_range: (f64, f64),
}

/// Non-overlapping windows of length `window` from the start of the run; a
/// trailing partial window is dropped.
pub fn envelope_report(run: &RabiRun, window: f64, tol: f64) -> Result<EnvelopeReport> {
    let (t0, t1) = run.span();
    if !(window > 0.0) || window > t1 - t0 {
        return Err(Error::InvalidArgument(format!(
            "window {window} does not fit in the run span [{t0}, {t1}]"
        )));
    }
    let n_windows = ((t1 - t0) / window * (1.0 + 1e-12)).floor() as usize;
    let mut windows: Vec<EnvelopeWindow> = (0..n_windows)
        .map(|k| EnvelopeWindow {
            tau_start: t0 + k as f64 * window,
            max_sigma_a: 0.0,
            max_sigma_b: 0.0,
            max_sigma_q: 0.0,
            max_abs_delta_h: 0.0,
            exceeds: false,
        })
        .collect();
    for s in &run.energy_series {
        let k = ((s.tau - t0) / window).floor() as usize;
        // the closing sample of a full window belongs to it
        let k = if k == n_windows && s.tau - (t0 + k as f64 * window) < 1e-9 * window { k - 1 } else { k };
        let Some(w) = windows.get_mut(k) else { continue };
        // non-finite deviations at a pole are skipped by f64::max
        w.max_sigma_a = w.max_sigma_a.max(s.sigma_a);
        w.max_sigma_b = w.max_sigma_b.max(s.sigma_b);
        w.max_sigma_q = w.max_sigma_q.max(s.sigma_q);
        w.max_abs_delta_h = w.max_abs_delta_h.max((s.alpha * s.drive_value).abs());
    }
    let mut exceeded = 0;
    for w in &mut windows {
        w.exceeds = w.max_sigma_a.max(w.max_sigma_b) > (1.0 + tol) * w.max_sigma_q;
        exceeded += w.exceeds as usize;
    }

    let range = if run.amplitude > 0.0 {
        let half = run.rabi_period / 2.0;
        let (lo, hi) = (half.max(t0), run.rabi_period.min(t1));
        if lo < hi { (lo, hi) } else { (t0, t1) }
    } else {
        (t0, t1)
    };
    let (mut delta_h_max, mut argmax) = (0.0, range.0);
    for s in run.energy_series.iter().filter(|s| s.tau >= range.0 && s.tau <= range.1) {
        let d = (s.alpha * s.drive_value).abs();
        if d > delta_h_max {
            delta_h_max = d;
            argmax = s.tau;
        }
    }
    Ok(EnvelopeReport {
        window,
        tol,
        exceedance_fraction: exceeded as f64 / n_windows as f64,
        windows,
        delta_h_max,
        delta_h_argmax: argmax,
        delta_h_argmax_local: argmax - range.0,
        delta_h_range: range,
    })
}

/// `Delta tau_min = 1 / Delta H_max` in reduced units, falling back to `A/2`.
pub fn heisenberg_jump_window(amplitude: f64, measured_delta_h_max: Option<f64>) -> Result<f64> {
    let dh = measured_delta_h_max.unwrap_or(amplitude / 2.0);
    if !(dh > 0.0) || !dh.is_finite() {
        return Err(Error::InvalidArgument(format!("Delta H_max must be positive, got {dh}")));
    }
    Ok(1.0 / dh)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZenoSegment {
    pub freeze_level: i8,
    pub tau_start: f64,
    /// `None` if the segment outlives the horizon.
    pub tau_jump: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpWindow {
    pub tau_jump: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZenoSchedule {
    pub amplitude: f64,
    pub segments: Vec<ZenoSegment>,
    pub jump_windows: Vec<JumpWindow>,
    /// Absent without drive.
    pub delta_tau_min: Option<f64>,
}

impl ZenoSchedule {
    pub fn jump_times(&self) -> Vec<f64> {
        self.segments.iter().filter_map(|s| s.tau_jump).collect()
    }
}

/// Positive once `level` lies strictly outside the analytic band.
fn band_exit(amplitude: f64, level: f64, tau: f64) -> f64 {
    let (h, sigma) = analytic_band(amplitude, tau);
    (level - h).abs() - sigma
}

/// Frozen-level schedule: the level `L` holds until it leaves the closed band
/// `[h - sigma, h + sigma]`, then flips to `-L`.
pub fn zeno_jump_schedule(
    amplitude: f64,
    start_level: i8,
    tau_start: f64,
    horizon: f64,
    measured_delta_h_max: Option<f64>,
) -> Result<ZenoSchedule> {
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::InvalidArgument(format!("amplitude must be nonnegative, got {amplitude}")));
    }
    if start_level != 1 && start_level != -1 {
        return Err(Error::InvalidArgument(format!("freeze level must be +1 or -1, got {start_level}")));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() || !tau_start.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be finite and nonnegative, got {horizon}")));
    }
    if amplitude == 0.0 {
        return Ok(ZenoSchedule {
            amplitude,
            segments: vec![ZenoSegment { freeze_level: start_level, tau_start, tau_jump: None }],
            jump_windows: vec![],
            delta_tau_min: None,
        });
    }
    let delta_tau_min = heisenberg_jump_window(amplitude, measured_delta_h_max)?;
    let end = tau_start + horizon;
    let mut segments = Vec::new();
    let mut level = start_level;
    let mut seg_start = tau_start;
    loop {
        let l = level as f64;
        let mut a = seg_start;
        let mut jump = None;
        // a tie on the band edge at the segment start does not count as an exit
        while a < end {
            let b = (a + SCAN_STEP).min(end);
            if band_exit(amplitude, l, b) > EXIT_EPS {
                let (mut lo, mut hi) = (a, b);
                while hi - lo > JUMP_TOL {
                    let mid = 0.5 * (lo + hi);
                    if band_exit(amplitude, l, mid) > EXIT_EPS {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                jump = Some(hi);
                break;
            }
            a = b;
        }
        segments.push(ZenoSegment { freeze_level: level, tau_start: seg_start, tau_jump: jump });
        match jump {
            Some(t) if t < end => {
                level = -level;
                seg_start = t;
            }
            _ => break,
        }
    }
    let jump_windows = segments
        .iter()
        .filter_map(|s| s.tau_jump)
        .map(|t| JumpWindow { tau_jump: t, lower: t - delta_tau_min / 2.0, upper: t + delta_tau_min / 2.0 })
        .collect();
    Ok(ZenoSchedule { amplitude, segments, jump_windows, delta_tau_min: Some(delta_tau_min) })
}

/// Default schedule start: the ground level at half a Rabi period, where the
/// band touches `H = -1`.
pub fn figure_level_default(amplitude: f64) -> (i8, f64) {
    let half = rabi_period(amplitude) / 2.0;
    (-1, if half.is_finite() { half } else { 0.0 })
}

/// Physical duration in microseconds of a reduced-time interval.
pub fn reduced_to_us(delta_tau: f64, t_rabi_us: f64, amplitude: f64) -> f64 {
    delta_tau * t_rabi_us / rabi_period(amplitude)
}

pub fn us_to_reduced(t_us: f64, t_rabi_us: f64, amplitude: f64) -> f64 {
    t_us / t_rabi_us * rabi_period(amplitude)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OverlayFile {
    pub points: Vec<(f64, f64)>,
    pub t_rabi_us: Option<f64>,
    pub delta_mid_us: Option<f64>,
}

fn parse_number(field: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Parse { line, msg: format!("{what} {:?} is not a number", field.trim()) })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, msg: format!("{what} must be finite") });
    }
    Ok(v)
}

/// Rows of `time_us,population`, an optional header before the first row,
/// `#` comments and `key=value` metadata (`T_Rabi_us`, `Delta_mid_us`).
pub fn parse_overlay(text: &str) -> Result<OverlayFile> {
    let mut out = OverlayFile::default();
    let mut seen_header = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((key, value)) = line.split_once('=') {
            let v = parse_number(value, line_no, key.trim())?;
            match key.trim() {
                "T_Rabi_us" => out.t_rabi_us = Some(v),
                "Delta_mid_us" => out.delta_mid_us = Some(v),
                other => {
                    return Err(Error::Parse { line: line_no, msg: format!("unknown metadata key {other:?}") })
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(Error::Parse { line: line_no, msg: format!("expected 2 fields, found {}", fields.len()) });
        }
        let numeric = fields.iter().all(|f| f.trim().parse::<f64>().is_ok());
        if !numeric && !seen_header && out.points.is_empty() {
            seen_header = true;
            continue;
        }
        let t = parse_number(fields[0], line_no, "time")?;
        let p = parse_number(fields[1], line_no, "population")?;
        out.points.push((t, p));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOverlay {
    pub amplitude: f64,
    pub t_rabi_us: f64,
    pub source_points: Vec<(f64, f64)>,
    pub normalized_points: Vec<(f64, f64)>,
    pub delta_mid_us: Option<f64>,
}

impl ExperimentOverlay {
    /// `2 Delta_mid` in microseconds and in reduced time, when known.
    pub fn two_delta_mid(&self) -> Option<(f64, f64)> {
        self.delta_mid_us.map(|d| (2.0 * d, us_to_reduced(2.0 * d, self.t_rabi_us, self.amplitude)))
    }
}

/// Normalizes parsed overlay points; `t_rabi_us` overrides the file's metadata.
pub fn normalize_overlay(file: OverlayFile, t_rabi_us: Option<f64>, amplitude: f64) -> Result<ExperimentOverlay> {
    if !(amplitude > 0.0) {
        return Err(Error::InvalidArgument(format!("overlay needs a positive amplitude, got {amplitude}")));
    }
    let t_rabi = t_rabi_us.or(file.t_rabi_us).unwrap_or(DEFAULT_T_RABI_US);
    if !(t_rabi > 0.0) || !t_rabi.is_finite() {
        return Err(Error::InvalidArgument(format!("T_Rabi_us must be positive, got {t_rabi}")));
    }
    let normalized = file.points.iter().map(|&(t, p)| (us_to_reduced(t, t_rabi, amplitude), p)).collect();
    Ok(ExperimentOverlay {
        amplitude,
        t_rabi_us: t_rabi,
        source_points: file.points,
        normalized_points: normalized,
        delta_mid_us: file.delta_mid_us,
    })
}

pub fn ingest_experiment_overlay(path: &Path, t_rabi_us: Option<f64>, amplitude: f64) -> Result<ExperimentOverlay> {
    let text = std::fs::read_to_string(path)?;
    normalize_overlay(parse_overlay(&text)?, t_rabi_us, amplitude)
}

/// Summary of one amplitude in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub amplitude: f64,
    pub envelope_residual: f64,
    pub delta_h_max: f64,
    pub delta_h_max_over_amplitude: f64,
    pub delta_tau_min: f64,
    pub exceedance_fraction: f64,
}

/// One Rabi period from the equatorial eigenstate at amplitude `a`.
pub fn sweep_point(amplitude: f64, opts: &SolverOptions, sampling: &SamplingSpec) -> Result<SweepPoint> {
    let run = run_weak_rabi(amplitude, 1.0, &HdsState::new(0.0, 0.0, 0.0), opts, sampling)?;
    let env = envelope_report(&run, TAU, 0.05)?;
    Ok(SweepPoint {
        amplitude,
        envelope_residual: run.envelope_residual(),
        delta_h_max: env.delta_h_max,
        delta_h_max_over_amplitude: env.delta_h_max / amplitude,
        delta_tau_min: heisenberg_jump_window(amplitude, Some(env.delta_h_max))?,
        exceedance_fraction: env.exceedance_fraction,
    })
}

/// `sweep_point` over many amplitudes, in input order.
pub fn amplitude_sweep(
    amplitudes: &[f64],
    opts: &SolverOptions,
    sampling: &SamplingSpec,
    exec: Execution,
) -> Vec<Result<SweepPoint>> {
    par::map(amplitudes, exec, |&a| sweep_point(a, opts, sampling))
}

/// Reduced time at which the analytic band centre first crosses zero after `tau`.
pub fn next_gap_center(amplitude: f64, tau: f64) -> f64 {
    let x = amplitude * tau / 2.0;
    let k = ((x - PI / 2.0) / PI).floor() + 1.0;
    (PI / 2.0 + k * PI) * 2.0 / amplitude
}
