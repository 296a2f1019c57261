use std::f64::consts::TAU;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::config::{DriveKind, RunConfig};
use super::table::{write_table, DataTable};
use crate::error::{Error, Result};
use crate::experiments::{
    analytic_band, envelope_report, heisenberg_jump_window, ingest_experiment_overlay, reduced_to_us,
    run_rabi_span, sigma_band, zeno_jump_schedule, EnvelopeReport, RabiRun, ZenoSchedule, DEFAULT_T_RABI_US,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FigureId {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
}

impl FigureId {
    pub const ALL: [FigureId; 4] = [FigureId::Fig1, FigureId::Fig2, FigureId::Fig3, FigureId::Fig4];

    pub fn stem(self) -> &'static str {
        match self {
            FigureId::Fig1 => "fig1",
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
        }
    }
}

impl std::str::FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureId::ALL
            .into_iter()
            .find(|f| f.stem() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown figure id {s:?} (expected fig1..fig4)")))
    }
}

/// The run behind every figure: the configured span under `A sin(tau)`, or
/// without drive.
pub fn figure_run(cfg: &RunConfig) -> Result<RabiRun> {
    let amplitude = match cfg.drive {
        DriveKind::Sin => cfg.amplitude,
        DriveKind::Zero => 0.0,
        DriveKind::Const => {
            return Err(Error::InvalidArgument("figures need a sinusoidal or zero drive".into()));
        }
    };
    run_rabi_span(amplitude, cfg.tau_span, &cfg.initial, &cfg.solver(), &cfg.sampling())
}

fn band_table(run: &RabiRun) -> DataTable {
    let band = sigma_band(run, TAU);
    let mut t = DataTable::new(
        "fig1",
        &[
            "tau", "h", "h_env", "sigma_q", "band_lower", "band_upper", "sigma_a", "sigma_b",
            "sigma_a_lower", "sigma_a_upper", "sigma_b_lower", "sigma_b_upper",
        ],
    )
    .with_meta("amplitude", run.amplitude);
    for (i, s) in run.energy_series.iter().enumerate() {
        let env = band.h_env[i];
        t.push(vec![
            s.tau,
            s.h_mean,
            env,
            s.sigma_q,
            band.lower[i],
            band.upper[i],
            s.sigma_a,
            s.sigma_b,
            env - s.sigma_a,
            env + s.sigma_a,
            env - s.sigma_b,
            env + s.sigma_b,
        ]);
    }
    t
}

/// The two schedules drawn in the jump figure: frozen in the ground level
/// from half a Rabi period, and in the excited level from the start.
pub fn figure_schedules(run: &RabiRun, env: Option<&EnvelopeReport>) -> Result<[ZenoSchedule; 2]> {
    let (t0, t1) = run.span();
    let a = run.amplitude;
    let measured = env.map(|e| e.delta_h_max).filter(|&d| d > 0.0);
    let half = if a > 0.0 { run.rabi_period / 2.0 } else { t0 };
    let ground_start = half.clamp(t0, t1);
    Ok([
        zeno_jump_schedule(a, -1, ground_start, t1 - ground_start, measured)?,
        zeno_jump_schedule(a, 1, t0, t1 - t0, measured)?,
    ])
}

fn level_at(s: &ZenoSchedule, tau: f64) -> f64 {
    s.segments
        .iter()
        .rev()
        .find(|seg| seg.tau_start <= tau)
        .map(|seg| seg.freeze_level as f64)
        .unwrap_or(f64::NAN)
}

fn envelope_if_fits(run: &RabiRun) -> Option<EnvelopeReport> {
    envelope_report(run, TAU, 0.05).ok()
}

/// Writes the data files for one figure and returns their paths.
pub fn emit_figure_data(fig: FigureId, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let run = figure_run(cfg)?;
    let dir = &cfg.out_dir;
    let write = |stem: &str, t: &DataTable| write_table(dir, stem, t, cfg.format, Some(cfg));
    let a = run.amplitude;
    let mut paths = Vec::new();
    match fig {
        FigureId::Fig1 => paths.push(write("fig1", &band_table(&run))?),
        FigureId::Fig2 => {
            let env = envelope_if_fits(&run);
            let schedules = figure_schedules(&run, env.as_ref())?;
            let mut t = band_table(&run);
            t.kind = "fig2".into();
            t.columns.push("level_from_ground".into());
            t.columns.push("level_from_excited".into());
            for row in &mut t.rows {
                row.push(level_at(&schedules[0], row[0]));
                row.push(level_at(&schedules[1], row[0]));
            }
            paths.push(write("fig2", &t)?);

            let mut jumps = DataTable::new(
                "fig2_jumps",
                &[
                    "schedule", "segment", "freeze_level", "tau_start", "tau_jump", "window_lower", "window_upper",
                    "h_band_at_jump", "h_sim_at_jump",
                ],
            );
            for (k, s) in schedules.iter().enumerate() {
                let half = s.delta_tau_min.unwrap_or(f64::NAN) / 2.0;
                for (i, seg) in s.segments.iter().enumerate() {
                    let j = seg.tau_jump.unwrap_or(f64::NAN);
                    let h_band = if j.is_finite() { analytic_band(a, j).0 } else { f64::NAN };
                    let h_sim = if j.is_finite() { run.h_at(j).unwrap_or(f64::NAN) } else { f64::NAN };
                    jumps.push(vec![
                        k as f64,
                        i as f64,
                        seg.freeze_level as f64,
                        seg.tau_start,
                        j,
                        j - half,
                        j + half,
                        h_band,
                        h_sim,
                    ]);
                }
            }
            let dtm = schedules[0].delta_tau_min.unwrap_or(f64::INFINITY);
            paths.push(write("fig2_jumps", &jumps.with_meta("delta_tau_min", dtm))?);
        }
        FigureId::Fig3 => {
            let env = envelope_report(&run, TAU, 0.05)?;
            let (lo, hi) = env.delta_h_range;
            let mut t = DataTable::new("fig3", &["tau_local", "tau", "delta_h", "abs_delta_h", "star"])
                .with_meta("delta_h_max", env.delta_h_max)
                .with_meta("delta_h_argmax", env.delta_h_argmax)
                .with_meta("delta_h_argmax_local", env.delta_h_argmax_local)
                .with_meta("amplitude", a);
            for s in run.energy_series.iter().filter(|s| s.tau >= lo && s.tau <= hi) {
                let d = s.alpha * s.drive_value;
                let star = if s.tau == env.delta_h_argmax { 1.0 } else { 0.0 };
                t.push(vec![s.tau - lo, s.tau, d, d.abs(), star]);
            }
            paths.push(write("fig3", &t)?);
        }
        FigureId::Fig4 => {
            if !(a > 0.0) {
                return Err(Error::InvalidArgument("the overlay figure needs a positive drive amplitude".into()));
            }
            let overlay = match &cfg.overlay {
                Some(p) => Some(ingest_experiment_overlay(p, cfg.t_rabi_us, a)?),
                None => None,
            };
            let t_rabi = overlay.as_ref().map(|o| o.t_rabi_us).or(cfg.t_rabi_us).unwrap_or(DEFAULT_T_RABI_US);
            let env = envelope_if_fits(&run);
            let schedules = figure_schedules(&run, env.as_ref())?;
            let half_period = run.rabi_period / 2.0;

            let mut theory = DataTable::new("fig4", &["tau", "h_analytic", "h"]).with_meta("amplitude", a);
            for s in run.energy_series.iter().filter(|s| s.tau >= half_period) {
                theory.push(vec![s.tau, analytic_band(a, s.tau).0, s.h_mean]);
            }
            paths.push(write("fig4", &theory)?);

            let dtm = match schedules[0].delta_tau_min {
                Some(d) => d,
                None => heisenberg_jump_window(a, None)?,
            };
            let two_mid = overlay.as_ref().and_then(|o| o.two_delta_mid());
            let mut markers = DataTable::new(
                "fig4_markers",
                &[
                    "tau_jump", "bar_lower", "bar_upper", "delta_tau_min", "delta_t_us", "t_rabi_us",
                    "two_delta_mid_us", "two_delta_mid_tau",
                ],
            );
            for w in &schedules[0].jump_windows {
                markers.push(vec![
                    w.tau_jump,
                    w.lower,
                    w.upper,
                    dtm,
                    reduced_to_us(dtm, t_rabi, a),
                    t_rabi,
                    two_mid.map_or(f64::NAN, |m| m.0),
                    two_mid.map_or(f64::NAN, |m| m.1),
                ]);
            }
            paths.push(write("fig4_markers", &markers)?);

            if let Some(o) = &overlay {
                let mut pts = DataTable::new("fig4_overlay", &["tau", "time_us", "population"])
                    .with_meta("t_rabi_us", o.t_rabi_us);
                for (&(tau, p), &(t_us, _)) in o.normalized_points.iter().zip(&o.source_points) {
                    pts.push(vec![tau, t_us, p]);
                }
                paths.push(write("fig4_overlay", &pts)?);
            }
        }
    }
    Ok(paths)
}
