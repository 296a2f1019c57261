//! The invariant suite behind `check`: every invariant of the model, the two
//! integrators, the energy observables, the experiments and the I/O layer,
//! evaluated at desk scale and reported in a fixed order.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ConfigOverrides, RunConfig};
use super::table::{from_csv_str, from_json_str, to_csv_string, to_json_string, trajectory_table};
use crate::energy::{
    mean_energy, state_energies, state_energies_from_phases, variance_expectation_closed_form,
    variance_expectation_matrix_route, variance_matrix, EnergySample,
};
use crate::error::{Error, Result};
use crate::experiments::{
    amplitude_sweep, envelope_report, reduced_to_us, run_rabi_span, run_weak_rabi, us_to_reduced, zeno_jump_schedule,
    RabiRun, ZenoSchedule,
};
use crate::hds::{
    hamiltonian_value, hds_rhs, integrate_hds, measure_period, orbit_theta_advance, propagate_hds,
    theta_advance_check, PeriodObservable, SamplingSpec, Trajectory,
};
use crate::model::{
    bloch_coords, hds_from_spinor, spinor_from_hds, wrap_pi, DriveSpec, HdsState, ModelParams, SpinorState,
};
use crate::ode::SolverOptions;
use crate::par::{self, Execution};
use crate::schrodinger::{compare_trajectories, integrate_schrodinger};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Non-finite when the check could not be evaluated.
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
    /// Wall time in seconds; left out of serialized reports so they stay reproducible.
    #[serde(skip)]
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn total_runtime_s(&self) -> f64 {
        self.checks.iter().map(|c| c.runtime_s).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Everything a check may read from the run configuration.
#[derive(Debug, Clone)]
pub struct SuiteContext {
    pub opts: SolverOptions,
    pub seed: u64,
    pub amplitude: f64,
    pub amplitudes: Vec<f64>,
    pub sampling: SamplingSpec,
}

impl SuiteContext {
    pub fn from_config(cfg: &RunConfig) -> Self {
        SuiteContext {
            opts: cfg.solver(),
            seed: cfg.seed,
            amplitude: cfg.rabi_amplitude(),
            amplitudes: cfg.amplitudes.clone(),
            sampling: cfg.sampling(),
        }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    fn rabi(&self) -> Result<RabiRun> {
        run_weak_rabi(self.amplitude, 1.0, &HdsState::new(0.0, 0.0, 0.0), &self.opts, &self.sampling)
    }
}

struct Outcome {
    passed: bool,
    measured: f64,
    threshold: f64,
    detail: String,
}

/// `measured <= threshold`; NaN fails.
fn at_most(measured: f64, threshold: f64, detail: impl Into<String>) -> Outcome {
    Outcome { passed: measured <= threshold, measured, threshold, detail: detail.into() }
}

type Check = fn(&SuiteContext) -> Result<Outcome>;

/// Name and body of every check, in report order.
pub const CHECK_NAMES: &[&str] = &[
    "model.spinor_normalization",
    "model.round_trip",
    "model.bloch_polar_angle",
    "hds.rhs_consistency",
    "hds.hamiltonian_conservation",
    "hds.frequency_law",
    "hds.theta_advance",
    "hds.time_reversibility",
    "schrodinger.oracle_rabi_period",
    "schrodinger.oracle_random_states",
    "schrodinger.mean_energy_link",
    "schrodinger.unitarity",
    "schrodinger.four_pi_symmetry",
    "energy.mixture_identity",
    "energy.phase_identity",
    "energy.dual_route_variance",
    "energy.weak_drive_variance",
    "energy.eigenstate_nullity",
    "energy.nonnegativity",
    "experiments.rabi_period",
    "experiments.rabi_envelope",
    "experiments.envelope_bounding",
    "experiments.heisenberg_window",
    "experiments.jump_at_gap_center",
    "experiments.band_symmetry",
    "experiments.schedule_periodicity",
    "experiments.schedule_alternation",
    "experiments.window_scaling",
    "experiments.overlay_units",
    "io.serialization_round_trip",
    "io.config_validation",
];

const CHECKS: &[Check] = &[
    spinor_normalization,
    hds_round_trip,
    bloch_polar_angle,
    rhs_consistency,
    hamiltonian_conservation,
    frequency_law,
    theta_advance,
    time_reversibility,
    oracle_rabi_period,
    oracle_random_states,
    mean_energy_link,
    unitarity,
    four_pi_symmetry,
    mixture_identity,
    phase_identity,
    dual_route_variance,
    weak_drive_variance,
    eigenstate_nullity,
    nonnegativity,
    rabi_period_value,
    rabi_envelope,
    envelope_bounding,
    heisenberg_window,
    jump_at_gap_center,
    band_symmetry,
    schedule_periodicity,
    schedule_alternation,
    window_scaling,
    overlay_units,
    serialization_round_trip,
    config_validation,
];

pub fn run_invariant_suite(cfg: &RunConfig) -> SuiteReport {
    run_invariant_suite_with(cfg, Execution::default())
}

pub fn run_invariant_suite_with(cfg: &RunConfig, exec: Execution) -> SuiteReport {
    let ctx = SuiteContext::from_config(cfg);
    let jobs: Vec<(&str, Check)> = CHECK_NAMES.iter().copied().zip(CHECKS.iter().copied()).collect();
    let checks = par::with_threads(cfg.threads, || {
        par::map(&jobs, exec, |&(name, check)| {
            let start = Instant::now();
            let outcome = check(&ctx);
            let runtime_s = start.elapsed().as_secs_f64();
            match outcome {
                Ok(o) => CheckResult {
                    name: name.into(),
                    passed: o.passed,
                    measured: o.measured,
                    threshold: o.threshold,
                    detail: o.detail,
                    runtime_s,
                },
                Err(e) => CheckResult {
                    name: name.into(),
                    passed: false,
                    measured: f64::NAN,
                    threshold: f64::NAN,
                    detail: format!("error: {e}"),
                    runtime_s,
                },
            }
        })
    });
    SuiteReport { schema_version: super::table::SCHEMA_VERSION, seed: cfg.seed, checks }
}

fn random_states(ctx: &SuiteContext, stream: u64, n: usize) -> Vec<HdsState> {
    let mut rng = ctx.rng(stream);
    (0..n).map(|_| HdsState::random(&mut rng)).collect()
}

fn spinor_norm_err(p: &SpinorState) -> f64 {
    (p.norm_sqr() - 1.0).abs()
}

fn spinor_norm_drift(traj: &[SpinorState]) -> f64 {
    traj.iter().map(spinor_norm_err).fold(0.0, f64::max)
}

fn spinor_normalization(ctx: &SuiteContext) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for s in random_states(ctx, 1, 1000) {
        worst = worst.max(spinor_norm_err(&spinor_from_hds(&s)?));
    }
    Ok(at_most(worst, 1e-14, "max |norm^2 - 1| over 1000 random states"))
}

fn hds_round_trip(ctx: &SuiteContext) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for s in random_states(ctx, 2, 1000) {
        if s.alpha.abs() > 1.0 - 1e-6 {
            continue;
        }
        let back = hds_from_spinor(&spinor_from_hds(&s)?, None)?.state;
        worst = worst
            .max((back.alpha - s.alpha).abs())
            .max(wrap_pi(back.delta - s.delta).abs())
            .max(wrap_pi(back.theta_overall - s.theta_overall).abs());
    }
    Ok(at_most(worst, 1e-12, "max component error modulo 2 pi over 1000 random states"))
}

fn bloch_polar_angle(ctx: &SuiteContext) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for s in random_states(ctx, 3, 1000) {
        worst = worst.max((bloch_coords(&s)?.theta.cos() - s.alpha).abs());
    }
    Ok(at_most(worst, 1e-14, "max |cos(theta) - alpha| over 1000 random states"))
}

/// Central differences on the sampling grid against the closed-form rhs,
/// scaled by the squared stride.
fn rhs_consistency(ctx: &SuiteContext) -> Result<Outcome> {
    let drive = DriveSpec::sinusoidal(ctx.amplitude)?;
    let traj = integrate_hds(&HdsState::new(0.3, 0.4, 0.0), &drive, (0.0, 100.0), &ctx.opts, &ctx.sampling)?;
    let mut worst: f64 = 0.0;
    let mut h2: f64 = 0.0;
    for i in 1..traj.len() - 1 {
        let h = traj.taus[i + 1] - traj.taus[i - 1];
        let (a, b) = (&traj.states[i - 1], &traj.states[i + 1]);
        let d = hds_rhs(&traj.states[i], &drive, traj.taus[i])?;
        let fd = [(b.alpha - a.alpha) / h, (b.delta - a.delta) / h, (b.theta_overall - a.theta_overall) / h];
        let err = (fd[0] - d.d_alpha).abs().max((fd[1] - d.d_delta).abs()).max((fd[2] - d.d_theta).abs());
        worst = worst.max(err);
        h2 = h2.max(0.25 * h * h);
    }
    Ok(at_most(worst / h2, 1.0, format!("max finite-difference error / h^2 (h^2 = {h2:.3e})")))
}

fn hamiltonian_conservation(ctx: &SuiteContext) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for e in [0.0, 0.5, 1.0] {
        let traj = integrate_hds(
            &HdsState::new(0.3, 0.5, 0.0),
            &DriveSpec::Constant { value: e },
            (0.0, 2000.0),
            &ctx.opts,
            &ctx.sampling,
        )?;
        worst = worst.max(traj.hamiltonian_drift());
    }
    Ok(at_most(worst, 1e-9, "max H drift over tau in [0, 2000] for E in {0, 0.5, 1}"))
}

/// Librating starts on both sides of the energy surface.
pub fn frequency_law_error(opts: &SolverOptions, fields: &[f64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &e in fields {
        let drive = DriveSpec::Constant { value: e };
        let omega = (1.0 + e * e).sqrt();
        for start in [HdsState::new(0.1, 0.0, 0.0), HdsState::new(-0.5, PI, 0.0)] {
            let span = 20.0 * TAU / omega;
            let traj = integrate_hds(&start, &drive, (0.0, span), opts, &SamplingSpec::PerCycle(64))?;
            let m = measure_period(&traj, PeriodObservable::Alpha)?;
            let h = hamiltonian_value(start.alpha, start.delta, e);
            worst = worst.max((m.signed_frequency - h.signum() * omega).abs());
        }
    }
    Ok(worst)
}

fn frequency_law(ctx: &SuiteContext) -> Result<Outcome> {
    let err = frequency_law_error(&ctx.opts, &[0.0, 0.25, 0.5, 1.0])?;
    Ok(at_most(err, 1e-6, "max |signed frequency - sign(H) sqrt(1 + E^2)| for E in {0, 0.25, 0.5, 1}"))
}

fn theta_advance(ctx: &SuiteContext) -> Result<Outcome> {
    let fixed = HdsState::new(0.0, 0.0, 0.0);
    let mut worst: f64 = 0.0;
    for (span, expected) in [(TAU, -PI), (2.0 * TAU, -TAU)] {
        let traj = integrate_hds(&fixed, &DriveSpec::Zero, (0.0, span), &ctx.opts, &ctx.sampling)?;
        worst = worst.max((theta_advance_check(&traj) - expected).abs());
    }
    let orbit = orbit_theta_advance(&HdsState::new(0.1, 0.0, 0.0), &DriveSpec::Zero, &ctx.opts)?;
    worst = worst.max(orbit.end.max_abs_diff(&orbit.start.scale(Complex64::new(-1.0, 0.0))));
    Ok(at_most(worst, 1e-8, "fixed-point advance over 2 pi and 4 pi, spinor sign flip after one orbit"))
}

fn time_reversibility(ctx: &SuiteContext) -> Result<Outcome> {
    let drive = DriveSpec::sinusoidal(ctx.amplitude)?;
    let mut worst: f64 = 0.0;
    for s in random_states(ctx, 4, 20) {
        let there = propagate_hds(&s, &drive, 0.0, 100.0, &ctx.opts)?;
        let back = propagate_hds(&there, &drive, 100.0, 0.0, &ctx.opts)?;
        worst = worst
            .max((back.alpha - s.alpha).abs())
            .max(wrap_pi(back.delta - s.delta).abs())
            .max((back.theta_overall - s.theta_overall).abs());
    }
    Ok(at_most(worst, 1e-8, "forward then backward over tau in [0, 100], 20 random states"))
}

/// Canonical and Schrödinger runs on the same grid plus their divergence.
fn oracle_pair(
    start: &HdsState,
    drive: &DriveSpec,
    span: (f64, f64),
    ctx: &SuiteContext,
) -> Result<(Trajectory, crate::schrodinger::DivergenceReport)> {
    let traj = integrate_hds(start, drive, span, &ctx.opts, &ctx.sampling)?;
    let spinor = integrate_schrodinger(
        &spinor_from_hds(start)?,
        drive,
        span,
        &ModelParams::default(),
        &ctx.opts,
        &ctx.sampling,
    )?;
    let report = compare_trajectories(&traj, &spinor)?;
    Ok((traj, report))
}

fn oracle_rabi_period(ctx: &SuiteContext) -> Result<Outcome> {
    let drive = DriveSpec::sinusoidal(ctx.amplitude)?;
    let span = (0.0, crate::experiments::rabi_period(ctx.amplitude));
    let (_, r) = oracle_pair(&HdsState::new(0.0, 0.0, 0.0), &drive, span, ctx)?;
    let detail = format!(
        "alpha diff {:.3e} (limit 1e-6), energy diff {:.3e} (limit 1e-9) over one Rabi period",
        r.max_abs_alpha_diff, r.max_energy_diff
    );
    let passed = r.max_abs_alpha_diff <= 1e-6 && r.max_energy_diff <= 1e-9;
    Ok(Outcome { passed, measured: r.max_energy_diff, threshold: 1e-9, detail })
}

fn random_oracle_reports(ctx: &SuiteContext) -> Result<Vec<crate::schrodinger::DivergenceReport>> {
    let drives = [DriveSpec::Zero, DriveSpec::Constant { value: 0.5 }, DriveSpec::Sinusoidal { amplitude: 8e-3 }];
    let states = random_states(ctx, 5, 100);
    let jobs: Vec<(HdsState, DriveSpec)> = states.iter().flat_map(|s| drives.iter().map(move |d| (*s, *d))).collect();
    par::map(&jobs, Execution::default(), |(s, d)| oracle_pair(s, d, (0.0, 200.0), ctx).map(|(_, r)| r))
        .into_iter()
        .collect()
}

fn oracle_random_states(ctx: &SuiteContext) -> Result<Outcome> {
    let worst = random_oracle_reports(ctx)?.iter().map(|r| r.max_field()).fold(0.0, f64::max);
    Ok(at_most(worst, 1e-6, "max divergence field, 100 random states x 3 drives, tau in [0, 200]"))
}

fn mean_energy_link(ctx: &SuiteContext) -> Result<Outcome> {
    let worst = random_oracle_reports(ctx)?.iter().map(|r| r.max_energy_diff).fold(0.0, f64::max);
    Ok(at_most(worst, 1e-9, "max |<H> spinor - H canonical| at every sample of the random oracle runs"))
}

fn unitarity(ctx: &SuiteContext) -> Result<Outcome> {
    let drives = [
        DriveSpec::Zero,
        DriveSpec::Constant { value: 0.5 },
        DriveSpec::Constant { value: 1.0 },
        DriveSpec::Sinusoidal { amplitude: ctx.amplitude },
    ];
    let start = spinor_from_hds(&HdsState::new(0.3, 0.5, 0.0))?;
    let mut worst: f64 = 0.0;
    for d in &drives {
        let t = integrate_schrodinger(&start, d, (0.0, 2000.0), &ModelParams::default(), &ctx.opts, &ctx.sampling)?;
        worst = worst.max(spinor_norm_drift(&t.states));
    }
    Ok(at_most(worst, 1e-9, "max norm drift over tau in [0, 2000], four drives"))
}

pub fn four_pi_error(opts: &SolverOptions) -> Result<f64> {
    let up = SpinorState::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
    let t = integrate_schrodinger(
        &up,
        &DriveSpec::Zero,
        (0.0, 2.0 * TAU),
        &ModelParams::default(),
        opts,
        &SamplingSpec::Times(vec![0.0, TAU, 2.0 * TAU]),
    )?;
    let flipped = up.scale(Complex64::new(-1.0, 0.0));
    Ok(t.states[1].max_abs_diff(&flipped).max(t.states[2].max_abs_diff(&up)))
}

fn four_pi_symmetry(ctx: &SuiteContext) -> Result<Outcome> {
    Ok(at_most(four_pi_error(&ctx.opts)?, 1e-8, "Psi(2 pi) = -Psi(0) and Psi(4 pi) = Psi(0) from (1, 0)"))
}

fn mixture_identity(ctx: &SuiteContext) -> Result<Outcome> {
    let mut worst = ctx.rabi()?.energy_series.iter().map(|s| s.mixture_residual().abs()).fold(0.0, f64::max);
    let mut rng = ctx.rng(6);
    for s in random_states(ctx, 7, 1000) {
        let e: f64 = rng.random_range(-1.0..1.0);
        let sample = EnergySample::from_state(0.0, &s, e, 1.0)?;
        worst = worst.max(sample.mixture_residual().abs());
    }
    Ok(at_most(worst, 1e-12, "max mixture residual along a Rabi run and on 1000 random states"))
}

pub fn phase_identity_error(traj: &Trajectory) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 1..traj.len().saturating_sub(1) {
        let s = &traj.states[i];
        let e = traj.drive.eval(traj.taus[i]);
        let closed = state_energies(s.alpha, hamiltonian_value(s.alpha, s.delta, e), e)?;
        let (pa, pb) = state_energies_from_phases(traj, i)?;
        for (x, y) in [(closed.e_a, pa), (closed.e_b, pb)] {
            if x.is_finite() {
                worst = worst.max((x - y).abs());
            }
        }
    }
    Ok(worst)
}

fn phase_identity(ctx: &SuiteContext) -> Result<Outcome> {
    let run = ctx.rabi()?;
    Ok(at_most(phase_identity_error(&run.trajectory)?, 1e-10, "closed-form vs phase-derivative state energies"))
}

pub fn dual_route_error(seed: u64, ks: &[f64], n: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for &k in ks {
        for _ in 0..n {
            let s = HdsState::random(&mut rng);
            let e: f64 = rng.random_range(-1.0..1.0);
            let h = hamiltonian_value(s.alpha, s.delta, e);
            let matrix = variance_expectation_matrix_route(&spinor_from_hds(&s)?, &variance_matrix(h, e, k))?;
            worst = worst.max((matrix - variance_expectation_closed_form(h, e, s.alpha, k)).abs());
        }
    }
    Ok(worst)
}

fn dual_route_variance(ctx: &SuiteContext) -> Result<Outcome> {
    let err = dual_route_error(ctx.seed ^ 0x5eed, &[0.5, 1.0, 2.0], 1000)?;
    Ok(at_most(err, 1e-12, "matrix vs closed-form <V>, 1000 random states for K in {0.5, 1, 2}"))
}

pub fn weak_drive_variance_error(run: &RabiRun) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (s, st) in run.energy_series.iter().zip(&run.trajectory.states) {
        let v = variance_matrix(s.h_mean, s.drive_value, 1.0);
        let matrix = variance_expectation_matrix_route(&spinor_from_hds(st)?, &v)?;
        let closed = s.drive_value * s.drive_value - s.h_mean * s.h_mean + 1.0;
        worst = worst.max((matrix - closed).abs()).max((s.v_expect - closed).abs());
    }
    Ok(worst)
}

fn weak_drive_variance(ctx: &SuiteContext) -> Result<Outcome> {
    let err = weak_drive_variance_error(&ctx.rabi()?)?;
    Ok(at_most(err, 1e-12, "<V> = E^2 - H^2 + 1 along a Rabi run"))
}

fn eigenstate_nullity(_: &SuiteContext) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for s in [HdsState::new(0.0, 0.0, 0.0), HdsState::new(0.0, PI, 1.0)] {
        let e = EnergySample::from_state(0.0, &s, 0.0, 1.0)?;
        worst = worst.max(e.sigma_q).max(e.sigma_a).max(e.sigma_b);
    }
    Ok(at_most(worst, 1e-12, "sigma_q, sigma_a, sigma_b at the H = +-1 eigenstates without drive"))
}

fn nonnegativity(ctx: &SuiteContext) -> Result<Outcome> {
    let mut rng = ctx.rng(8);
    let mut lowest = f64::INFINITY;
    for s in random_states(ctx, 9, 1000) {
        let e: f64 = rng.random_range(-1.0..1.0);
        let p = spinor_from_hds(&s)?;
        let h = mean_energy(&p, e, &ModelParams::default());
        let v = variance_matrix(h, e, 1.0);
        lowest = lowest.min(variance_expectation_matrix_route(&p, &v)?).min(v.eigenvalues().0);
    }
    for sample in ctx.rabi()?.energy_series {
        lowest = lowest.min(sample.v_expect);
    }
    Ok(Outcome {
        passed: lowest >= -1e-12,
        measured: lowest,
        threshold: -1e-12,
        detail: "smallest <V> and V eigenvalue (must be >= threshold)".into(),
    })
}

fn rabi_period_value(ctx: &SuiteContext) -> Result<Outcome> {
    let t = crate::experiments::rabi_period(8e-3);
    let _ = ctx;
    Ok(at_most((t - 1571.0).abs(), 0.5, format!("4 pi / A at A = 8e-3 is {t:.6}")))
}

fn rabi_envelope(ctx: &SuiteContext) -> Result<Outcome> {
    let runs = par::map(&ctx.amplitudes, Execution::default(), |&a| {
        run_weak_rabi(a, 1.0, &HdsState::new(0.0, 0.0, 0.0), &ctx.opts, &ctx.sampling).map(|r| (a, r.envelope_residual()))
    });
    let mut worst_ratio: f64 = 0.0;
    let mut parts = Vec::new();
    for r in runs {
        let (a, res) = r?;
        worst_ratio = worst_ratio.max(res / (2.0 * a));
        parts.push(format!("A={a:e}: {res:.3e}"));
    }
    Ok(at_most(worst_ratio, 1.0, format!("max |H - cos(A tau/2)| / 2A; {}", parts.join(", "))))
}

fn envelope_bounding(ctx: &SuiteContext) -> Result<Outcome> {
    let env = envelope_report(&ctx.rabi()?, TAU, 0.05)?;
    Ok(at_most(
        env.exceedance_fraction,
        0.05,
        format!("fraction of {} windows with max(sigma_a, sigma_b) > 1.05 sigma_q", env.windows.len()),
    ))
}

fn heisenberg_window(ctx: &SuiteContext) -> Result<Outcome> {
    let a = ctx.amplitude;
    let env = envelope_report(&ctx.rabi()?, TAU, 0.05)?;
    let dtm = 1.0 / env.delta_h_max;
    let dh_err = (env.delta_h_max / (a / 2.0) - 1.0).abs();
    let dt_err = (dtm / (2.0 / a) - 1.0).abs();
    Ok(Outcome {
        passed: dh_err <= 0.10 && dt_err <= 0.15,
        measured: dh_err,
        threshold: 0.10,
        detail: format!(
            "Delta H_max = {:.5e} (rel. err {dh_err:.2e}), Delta tau_min = {dtm:.2} (rel. err {dt_err:.2e}, limit 0.15), {:.3} us at T_Rabi = 50 us",
            env.delta_h_max,
            reduced_to_us(dtm, 50.0, a)
        ),
    })
}

/// Ground schedule from half a Rabi period and excited schedule from 0.
fn standard_schedules(a: f64, horizon: f64) -> Result<[ZenoSchedule; 2]> {
    let half = crate::experiments::rabi_period(a) / 2.0;
    Ok([zeno_jump_schedule(a, -1, half, horizon, None)?, zeno_jump_schedule(a, 1, 0.0, horizon, None)?])
}

fn jump_at_gap_center(ctx: &SuiteContext) -> Result<Outcome> {
    let a = ctx.amplitude;
    let run = ctx.rabi()?;
    let (_, end) = run.span();
    let schedules = [zeno_jump_schedule(a, -1, run.rabi_period / 2.0, end - run.rabi_period / 2.0, None)?,
        zeno_jump_schedule(a, 1, 0.0, end, None)?];
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for j in schedules.iter().flat_map(|s| s.jump_times()) {
        let h = run.h_at(j).ok_or_else(|| Error::InvalidArgument(format!("jump {j} outside the run")))?;
        worst = worst.max(h.abs());
        n += 1;
    }
    if n == 0 {
        return Ok(Outcome { passed: false, measured: f64::NAN, threshold: 0.02, detail: "no jumps found".into() });
    }
    Ok(at_most(worst, 0.02, format!("max |H| of the simulated run at {n} jump times")))
}

fn band_symmetry(ctx: &SuiteContext) -> Result<Outcome> {
    let a = ctx.amplitude;
    let [ground, excited] = standard_schedules(a, crate::experiments::rabi_period(a))?;
    let (Some(g), Some(e)) = (ground.jump_times().first().copied(), excited.jump_times().first().copied()) else {
        return Ok(Outcome { passed: false, measured: f64::NAN, threshold: f64::NAN, detail: "missing jump".into() });
    };
    let shift = (g - crate::experiments::rabi_period(a) / 2.0 - e).abs();
    let dtm = ground.delta_tau_min.unwrap_or(f64::INFINITY);
    let band_h = crate::experiments::analytic_band(a, g).0.abs().max(crate::experiments::analytic_band(a, e).0.abs());
    Ok(Outcome {
        passed: shift <= dtm && band_h <= 2.0 * a,
        measured: shift,
        threshold: dtm,
        detail: format!("first jumps {e:.3} (excited) and {g:.3} (ground); |half-period shift| vs Delta tau_min; |H band| {band_h:.2e}"),
    })
}

fn schedule_periodicity(ctx: &SuiteContext) -> Result<Outcome> {
    let a = ctx.amplitude;
    let half = crate::experiments::rabi_period(a) / 2.0;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for s in standard_schedules(a, 3.0 * crate::experiments::rabi_period(a))? {
        for w in s.jump_times().windows(2) {
            worst = worst.max(((w[1] - w[0]) / half - 1.0).abs());
            count += 1;
        }
    }
    if count == 0 {
        return Ok(Outcome { passed: false, measured: f64::NAN, threshold: 0.01, detail: "fewer than two jumps".into() });
    }
    Ok(at_most(worst, 0.01, format!("relative deviation of {count} jump spacings from 2 pi / A")))
}

fn schedule_alternation(ctx: &SuiteContext) -> Result<Outcome> {
    let a = ctx.amplitude;
    let mut bad = 0usize;
    for s in standard_schedules(a, 3.0 * crate::experiments::rabi_period(a))? {
        for w in s.segments.windows(2) {
            let alternates = w[1].freeze_level == -w[0].freeze_level;
            let increasing = w[1].tau_start > w[0].tau_start && w[0].tau_jump == Some(w[1].tau_start);
            bad += (!alternates || !increasing) as usize;
        }
    }
    Ok(at_most(bad as f64, 0.0, "segment pairs that fail to alternate or to increase"))
}

fn window_scaling(ctx: &SuiteContext) -> Result<Outcome> {
    let points: Vec<_> = amplitude_sweep(&ctx.amplitudes, &ctx.opts, &ctx.sampling, Execution::default())
        .into_iter()
        .collect::<Result<_>>()?;
    let mut product_err: f64 = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for p in &points {
        product_err = product_err.max((p.delta_tau_min * p.delta_h_max - 1.0).abs());
        lo = lo.min(p.delta_h_max_over_amplitude);
        hi = hi.max(p.delta_h_max_over_amplitude);
    }
    let spread = hi / lo - 1.0;
    Ok(Outcome {
        passed: product_err <= 1e-12 && spread <= 0.2,
        measured: spread,
        threshold: 0.2,
        detail: format!("Delta H_max / A in [{lo:.4}, {hi:.4}]; max |Delta tau_min Delta H_max - 1| = {product_err:.1e}"),
    })
}

fn overlay_units(ctx: &SuiteContext) -> Result<Outcome> {
    let a = ctx.amplitude;
    let t = crate::experiments::rabi_period(a);
    let err = us_to_reduced(0.0, 50.0, a)
        .abs()
        .max((us_to_reduced(50.0, 50.0, a) - t).abs() / t)
        .max((reduced_to_us(us_to_reduced(7.3, 42.0, a), 42.0, a) - 7.3).abs());
    Ok(at_most(err, 1e-12, "time-unit conversion end points and round trip"))
}

fn serialization_round_trip(ctx: &SuiteContext) -> Result<Outcome> {
    let run = run_rabi_span(ctx.amplitude, (0.0, 50.0), &HdsState::new(0.2, 0.1, 0.0), &ctx.opts, &ctx.sampling)?;
    let table = trajectory_table(&run.trajectory);
    let cfg = RunConfig::default();
    let csv = from_csv_str(&to_csv_string(&table, Some(&cfg))?)?;
    let json = from_json_str(&to_json_string(&table, Some(&cfg))?)?;
    let mismatches = (!csv.same_bits(&table)) as usize + (!json.same_bits(&table)) as usize;
    Ok(at_most(mismatches as f64, 0.0, format!("CSV and JSON round trips of {} samples", table.rows.len())))
}

fn config_validation(_: &SuiteContext) -> Result<Outcome> {
    let bad = [
        ConfigOverrides { amplitude: Some(-1e-3), ..Default::default() },
        ConfigOverrides { tau_span: Some((3.0, 3.0)), ..Default::default() },
        ConfigOverrides { alpha0: Some(1.2), ..Default::default() },
        ConfigOverrides { rtol: Some(0.0), ..Default::default() },
        ConfigOverrides { atol: Some(-1e-12), ..Default::default() },
    ];
    let expected = ["amplitude", "tau_span", "alpha0", "rtol", "atol"];
    let mut misses = 0usize;
    for (o, want) in bad.into_iter().zip(expected) {
        match RunConfig::resolve(o) {
            Err(Error::Config { field, .. }) if field == want => {}
            _ => misses += 1,
        }
    }
    Ok(at_most(misses as f64, 0.0, "invalid configurations not rejected with the right field"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_bodies_line_up() {
        assert_eq!(CHECK_NAMES.len(), CHECKS.len());
        let mut sorted = CHECK_NAMES.to_vec();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), CHECK_NAMES.len());
    }

    #[test]
    fn at_most_fails_on_nan() {
        assert!(!at_most(f64::NAN, 1.0, "").passed);
        assert!(at_most(1.0, 1.0, "").passed);
    }
}
