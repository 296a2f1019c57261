//! Direct integration of the two-level Schrödinger equation, used as an
//! independent check on the canonical dynamics.
//!
//! In reduced time the equation reads `dPsi/dtau = -(i / (hbar Omega)) H Psi`
//! with `H = [[E, K], [K, -E]]`; the default units give the factor `-i/2`.

use num_complex::Complex64;

use crate::energy::mean_energy;
use crate::error::{Error, IntegrationFailure, Result};
use crate::hds::{hamiltonian_value, SamplingSpec, Trajectory, TrajectoryStats};
use crate::model::{hds_from_spinor, wrap_pi, DriveSpec, HdsState, ModelParams, SpinorState};
use crate::ode::{self, IntegStats, OdeSystem, SolverOptions};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn schrodinger_rhs(
    p: &SpinorState,
    drive: &DriveSpec,
    tau: f64,
    params: &ModelParams,
) -> (Complex64, Complex64) {
    let e = drive.eval(tau);
    let k = params.k;
    let factor = -I / (params.hbar * params.omega);
    (
        factor * (e * p.psi_a + k * p.psi_b),
        factor * (k * p.psi_a - e * p.psi_b),
    )
}

struct SchrodingerSystem {
    drive: DriveSpec,
    params: ModelParams,
}

impl OdeSystem<4> for SchrodingerSystem {
    fn rhs(&self, t: f64, y: &[f64; 4]) -> Option<[f64; 4]> {
        let (da, db) = schrodinger_rhs(&SpinorState::from_real(y), &self.drive, t, &self.params);
        Some([da.re, da.im, db.re, db.im])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinorTrajectory {
    pub taus: Vec<f64>,
    pub states: Vec<SpinorState>,
    pub drive: DriveSpec,
    pub params: ModelParams,
    pub stats: TrajectoryStats,
}

impl SpinorTrajectory {
    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    /// Largest `|norm^2 - 1|` over the samples.
    pub fn norm_drift(&self) -> f64 {
        self.states.iter().map(|p| (p.norm_sqr() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `<Psi|H|Psi>` at every sample.
    pub fn mean_energies(&self) -> Vec<f64> {
        self.states
            .iter()
            .zip(&self.taus)
            .map(|(p, &t)| mean_energy(p, self.drive.eval(t), &self.params))
            .collect()
    }
}

fn to_spinor_trajectory(drive: &DriveSpec, params: &ModelParams, sol: ode::Solution<4>) -> SpinorTrajectory {
    let states: Vec<SpinorState> = sol.ys.iter().map(SpinorState::from_real).collect();
    let mut stats: TrajectoryStats = sol.stats.into();
    stats.max_norm_drift = states.iter().map(|p| (p.norm_sqr() - 1.0).abs()).fold(0.0, f64::max);
    SpinorTrajectory { taus: sol.ts, states, drive: *drive, params: *params, stats }
}

/// Integrates the spinor without renormalization; norm drift is reported in
/// the trajectory statistics.
pub fn integrate_schrodinger(
    initial: &SpinorState,
    drive: &DriveSpec,
    tau_span: (f64, f64),
    params: &ModelParams,
    opts: &SolverOptions,
    sampling: &SamplingSpec,
) -> std::result::Result<SpinorTrajectory, IntegrationFailure<SpinorTrajectory>> {
    let grid = sampling.grid(drive, tau_span.0, tau_span.1).map_err(|_| IntegrationFailure {
        diagnostic: ode::OdeError::BadGrid,
        partial: to_spinor_trajectory(
            drive,
            params,
            ode::Solution { ts: vec![], ys: vec![], stats: IntegStats::default() },
        ),
    })?;
    let sys = SchrodingerSystem { drive: *drive, params: *params };
    match ode::solve(&sys, tau_span.0, initial.to_real(), &grid, opts) {
        Ok(sol) => Ok(to_spinor_trajectory(drive, params, sol)),
        Err(f) => Err(IntegrationFailure {
            diagnostic: f.diagnostic,
            partial: to_spinor_trajectory(drive, params, f.partial),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DivergenceReport {
    pub max_abs_alpha_diff: f64,
    /// Wrapped into `[0, pi]`.
    pub max_abs_delta_diff: f64,
    pub max_abs_theta_diff: f64,
    /// Largest `|<H>_spinor - H_canonical|`.
    pub max_energy_diff: f64,
    /// Sample time of the largest alpha deviation.
    pub tau_of_max: f64,
}

impl DivergenceReport {
    pub fn max_field(&self) -> f64 {
        self.max_abs_alpha_diff
            .max(self.max_abs_delta_diff)
            .max(self.max_abs_theta_diff)
            .max(self.max_energy_diff)
    }
}

/// Maps each spinor sample to canonical coordinates (carrying phase continuity
/// from sample to sample) and reports the largest deviations from `hds`.
pub fn compare_trajectories(hds: &Trajectory, spinor: &SpinorTrajectory) -> Result<DivergenceReport> {
    if hds.len() != spinor.len() {
        return Err(Error::GridMismatch(format!("{} vs {} samples", hds.len(), spinor.len())));
    }
    if hds.drive != spinor.drive {
        return Err(Error::GridMismatch("trajectories use different drives".into()));
    }
    let mut report = DivergenceReport::default();
    let mut hint: Option<HdsState> = hds.states.first().copied();
    for (i, (&t, &t2)) in hds.taus.iter().zip(&spinor.taus).enumerate() {
        if (t - t2).abs() > 1e-12 * t.abs().max(1.0) {
            return Err(Error::GridMismatch(format!("sample {i}: tau {t} vs {t2}")));
        }
        let reference = &hds.states[i];
        let mapped = hds_from_spinor(&spinor.states[i], hint.as_ref())?;
        let m = mapped.state;

        let da = (m.alpha - reference.alpha).abs();
        if da > report.max_abs_alpha_diff {
            report.max_abs_alpha_diff = da;
            report.tau_of_max = t;
        }
        if !mapped.degenerate {
            report.max_abs_delta_diff = report.max_abs_delta_diff.max(wrap_pi(m.delta - reference.delta).abs());
        }
        report.max_abs_theta_diff =
            report.max_abs_theta_diff.max(wrap_pi(m.theta_overall - reference.theta_overall).abs());

        let e = hds.drive.eval(t);
        let h_spinor = mean_energy(&spinor.states[i], e, &spinor.params);
        let h_hds = hamiltonian_value(reference.alpha, reference.delta, e);
        report.max_energy_diff = report.max_energy_diff.max((h_spinor - h_hds).abs());
        hint = Some(m);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hds::integrate_hds;
    use crate::model::spinor_from_hds;
    use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rhs_examples() {
        let params = ModelParams::default();
        let (da, db) = schrodinger_rhs(&SpinorState::new(c(1.0, 0.0), c(0.0, 0.0)), &DriveSpec::Zero, 0.0, &params);
        assert_eq!(da, c(0.0, 0.0));
        assert!((db - c(0.0, -0.5)).norm() < 1e-16);

        let r = FRAC_1_SQRT_2;
        let p = SpinorState::new(c(r, 0.0), c(r, 0.0));
        let (da, db) = schrodinger_rhs(&p, &DriveSpec::Zero, 0.0, &params);
        assert!((da - (-I / 2.0) * p.psi_a).norm() < 1e-16 && (db - (-I / 2.0) * p.psi_b).norm() < 1e-16);

        let p = SpinorState::new(c(r, 0.0), c(-r, 0.0));
        let (da, db) = schrodinger_rhs(&p, &DriveSpec::Zero, 0.0, &params);
        assert!((da - (I / 2.0) * p.psi_a).norm() < 1e-16 && (db - (I / 2.0) * p.psi_b).norm() < 1e-16);
    }

    fn run(initial: SpinorState, span: f64) -> SpinorTrajectory {
        integrate_schrodinger(
            &initial,
            &DriveSpec::Zero,
            (0.0, span),
            &ModelParams::default(),
            &SolverOptions::default(),
            &SamplingSpec::default(),
        )
        .unwrap()
    }

    #[test]
    fn eigenstate_returns_after_4pi() {
        let r = FRAC_1_SQRT_2;
        let p0 = SpinorState::new(c(r, 0.0), c(r, 0.0));
        let traj = run(p0, 4.0 * PI);
        assert!(traj.states.last().unwrap().max_abs_diff(&p0) < 1e-8);
    }

    #[test]
    fn larmor_closed_form_and_sign_flip() {
        let p0 = SpinorState::new(c(1.0, 0.0), c(0.0, 0.0));
        let traj = run(p0, 4.0 * PI);
        for (t, p) in traj.taus.iter().zip(&traj.states) {
            let exact = SpinorState::new(c((t / 2.0).cos(), 0.0), c(0.0, -(t / 2.0).sin()));
            assert!(p.max_abs_diff(&exact) < 1e-8, "tau = {t}");
        }
        let half = run(p0, TAU);
        assert!(half.states.last().unwrap().max_abs_diff(&p0.scale(c(-1.0, 0.0))) < 1e-8);
        assert!(traj.states.last().unwrap().max_abs_diff(&p0) < 1e-8);
    }

    #[test]
    fn zero_length_span_compares_clean() {
        let s = HdsState::new(0.2, 0.3, 0.1);
        let drive = DriveSpec::Zero;
        let opts = SolverOptions::default();
        let h = integrate_hds(&s, &drive, (0.0, 0.0), &opts, &SamplingSpec::default()).unwrap();
        let p = integrate_schrodinger(
            &spinor_from_hds(&s).unwrap(),
            &drive,
            (0.0, 0.0),
            &ModelParams::default(),
            &opts,
            &SamplingSpec::default(),
        )
        .unwrap();
        let r = compare_trajectories(&h, &p).unwrap();
        assert!(r.max_field() <= 1e-15, "{r:?}");
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let s = HdsState::new(0.2, 0.3, 0.1);
        let opts = SolverOptions::default();
        let h = integrate_hds(&s, &DriveSpec::Zero, (0.0, 1.0), &opts, &SamplingSpec::default()).unwrap();
        let p = integrate_schrodinger(
            &spinor_from_hds(&s).unwrap(),
            &DriveSpec::Zero,
            (0.0, 2.0),
            &ModelParams::default(),
            &opts,
            &SamplingSpec::default(),
        )
        .unwrap();
        assert!(matches!(compare_trajectories(&h, &p), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn eigen_orbit_energy_agrees() {
        let s = HdsState::new(0.0, PI, 0.0);
        let opts = SolverOptions::default();
        let h = integrate_hds(&s, &DriveSpec::Zero, (0.0, 50.0), &opts, &SamplingSpec::default()).unwrap();
        let p = integrate_schrodinger(
            &spinor_from_hds(&s).unwrap(),
            &DriveSpec::Zero,
            (0.0, 50.0),
            &ModelParams::default(),
            &opts,
            &SamplingSpec::default(),
        )
        .unwrap();
        let r = compare_trajectories(&h, &p).unwrap();
        assert!(r.max_energy_diff <= 1e-9, "{r:?}");
    }
}
