//! Classical-like Hamiltonian dynamics of the qubit in canonical coordinates.
//!
//! ```text
//! alpha' =  sqrt(1 - alpha^2) sin(delta)
//! delta' = -alpha cos(delta) / sqrt(1 - alpha^2) + E(tau)
//! theta' = -1/2 [ sqrt((1 - alpha) / (1 + alpha)) cos(delta) + E(tau) ]
//! H      =  sqrt(1 - alpha^2) cos(delta) + alpha E(tau)
//! ```
//!
//! The overall phase `theta` is slaved to `(alpha, delta)` but integrated as a
//! third component so all three share one error control.
//!
//! The integrator carries the polar angle `acos(alpha)` in place of `alpha`:
//! its equation `-sin(delta)` is regular, and it keeps full relative precision
//! when an orbit grazes a pole, where `1 - |alpha|` would lose most digits.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, IntegrationFailure, Result};
use crate::model::{spinor_from_hds, DriveSpec, HdsState, ModelParams, SpinorState};
use crate::ode::{self, IntegStats, OdeSystem, SolverOptions};

/// The right-hand side refuses states with `|alpha|` above this.
pub const RHS_POLE_LIMIT: f64 = 1.0 - 1e-15;
/// Accepted steps keep the polar angle this far from either pole, i.e.
/// `1 - |alpha| >= 5e-15`. Resonant runs whose half Rabi period is a multiple
/// of pi graze a pole at about `1 - 5e-11`.
pub const POLAR_MARGIN: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HdsDerivative {
    pub d_alpha: f64,
    pub d_delta: f64,
    pub d_theta: f64,
}

#[inline]
pub fn hamiltonian_value(alpha: f64, delta: f64, drive_value: f64) -> f64 {
    ((1.0 - alpha) * (1.0 + alpha)).max(0.0).sqrt() * delta.cos() + alpha * drive_value
}

#[inline]
fn rhs_unchecked(alpha: f64, delta: f64, e: f64) -> HdsDerivative {
    let root = ((1.0 - alpha) * (1.0 + alpha)).sqrt();
    let (sin_d, cos_d) = delta.sin_cos();
    HdsDerivative {
        d_alpha: root * sin_d,
        d_delta: -alpha * cos_d / root + e,
        d_theta: -0.5 * (((1.0 - alpha) / (1.0 + alpha)).sqrt() * cos_d + e),
    }
}

pub fn hds_rhs(s: &HdsState, drive: &DriveSpec, tau: f64) -> Result<HdsDerivative> {
    if !(s.alpha.abs() < RHS_POLE_LIMIT) {
        return Err(Error::PoleProximity { alpha: s.alpha });
    }
    Ok(rhs_unchecked(s.alpha, s.delta, drive.eval(tau)))
}

struct HdsSystem {
    drive: DriveSpec,
}

/// State vector `[acos(alpha), delta, theta]`.
impl OdeSystem<3> for HdsSystem {
    fn rhs(&self, t: f64, y: &[f64; 3]) -> Option<[f64; 3]> {
        let polar = y[0];
        if !(polar > 0.0 && polar < PI) {
            return None;
        }
        let (sin_p, cos_p) = polar.sin_cos();
        let (sin_d, cos_d) = y[1].sin_cos();
        let e = self.drive.eval(t);
        Some([-sin_d, -cos_p * cos_d / sin_p + e, -0.5 * ((0.5 * polar).tan() * cos_d + e)])
    }

    fn admissible(&self, y: &[f64; 3]) -> bool {
        y[0] >= POLAR_MARGIN && y[0] <= PI - POLAR_MARGIN
    }
}

fn to_chart(s: &HdsState) -> [f64; 3] {
    [s.alpha.clamp(-1.0, 1.0).acos(), s.delta, s.theta_overall]
}

fn from_chart(y: &[f64; 3]) -> HdsState {
    HdsState::new(y[0].cos(), y[1], y[2])
}

/// Where samples are recorded along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingSpec {
    /// Fixed count per fast cycle of the largest eigenfrequency `sqrt(1 + E_max^2)`.
    PerCycle(usize),
    Stride(f64),
    /// Explicit increasing sample times inside the span.
    Times(Vec<f64>),
}

impl Default for SamplingSpec {
    fn default() -> Self {
        SamplingSpec::PerCycle(64)
    }
}

impl SamplingSpec {
    pub fn stride(&self, drive: &DriveSpec) -> Option<f64> {
        match self {
            SamplingSpec::PerCycle(n) => Some(TAU / (drive.max_eigenfrequency() * *n as f64)),
            SamplingSpec::Stride(s) => Some(*s),
            SamplingSpec::Times(_) => None,
        }
    }

    /// Sample times over `[t0, t1]`, always including both ends.
    pub fn grid(&self, drive: &DriveSpec, t0: f64, t1: f64) -> Result<Vec<f64>> {
        if !(t1 >= t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::InvalidArgument(format!("tau span ({t0}, {t1}) must be increasing")));
        }
        if let SamplingSpec::Times(times) = self {
            let ok = times.windows(2).all(|w| w[1] > w[0])
                && times.first().is_none_or(|&t| t >= t0)
                && times.last().is_none_or(|&t| t <= t1);
            if !ok {
                return Err(Error::InvalidArgument("sample times must increase inside the span".into()));
            }
            return Ok(times.clone());
        }
        let stride = self.stride(drive).unwrap_or(0.0);
        if !(stride > 0.0) || !stride.is_finite() {
            return Err(Error::InvalidArgument(format!("sampling stride must be positive, got {stride}")));
        }
        if t1 == t0 {
            return Ok(vec![t0]);
        }
        let n = ((t1 - t0) / stride).floor() as usize;
        let mut grid: Vec<f64> = (0..=n).map(|i| t0 + i as f64 * stride).collect();
        let last = *grid.last().unwrap();
        if t1 - last > 1e-9 * stride {
            grid.push(t1);
        } else {
            *grid.last_mut().unwrap() = t1;
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evals: usize,
    /// Largest `|norm^2 - 1|` seen along the run (identically 0 for the canonical picture).
    pub max_norm_drift: f64,
}

impl From<IntegStats> for TrajectoryStats {
    fn from(s: IntegStats) -> Self {
        Self { accepted: s.accepted, rejected: s.rejected, evals: s.evals, max_norm_drift: 0.0 }
    }
}

/// Sampled solution of the canonical equations.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: ModelParams,
    pub drive: DriveSpec,
    pub taus: Vec<f64>,
    pub states: Vec<HdsState>,
    pub stats: TrajectoryStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn hamiltonian(&self, i: usize) -> f64 {
        let s = &self.states[i];
        hamiltonian_value(s.alpha, s.delta, self.drive.eval(self.taus[i]))
    }

    pub fn hamiltonian_series(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.hamiltonian(i)).collect()
    }

    /// Largest `|H(tau) - H(tau_0)|`.
    pub fn hamiltonian_drift(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let h0 = self.hamiltonian(0);
        (0..self.len()).map(|i| (self.hamiltonian(i) - h0).abs()).fold(0.0, f64::max)
    }

    pub fn spinors(&self) -> Result<Vec<SpinorState>> {
        self.states.iter().map(spinor_from_hds).collect()
    }

    pub fn last(&self) -> Option<&HdsState> {
        self.states.last()
    }
}

fn to_trajectory(drive: &DriveSpec, sol: ode::Solution<3>) -> Trajectory {
    Trajectory {
        params: ModelParams::default(),
        drive: *drive,
        states: sol.ys.iter().map(from_chart).collect(),
        taus: sol.ts,
        stats: sol.stats.into(),
    }
}

pub fn integrate_hds(
    initial: &HdsState,
    drive: &DriveSpec,
    tau_span: (f64, f64),
    opts: &SolverOptions,
    sampling: &SamplingSpec,
) -> std::result::Result<Trajectory, IntegrationFailure<Trajectory>> {
    let empty = |diagnostic| IntegrationFailure {
        diagnostic,
        partial: to_trajectory(drive, ode::Solution { ts: vec![], ys: vec![], stats: IntegStats::default() }),
    };
    let y0 = to_chart(initial);
    if !(y0[0] >= POLAR_MARGIN && y0[0] <= PI - POLAR_MARGIN) {
        return Err(empty(ode::OdeError::DomainEscape {
            t: tau_span.0,
            detail: format!("initial |alpha| = {} at a pole", initial.alpha.abs()),
        }));
    }
    let grid = sampling
        .grid(drive, tau_span.0, tau_span.1)
        .map_err(|_| empty(ode::OdeError::BadGrid))?;
    let sys = HdsSystem { drive: *drive };
    // the chart round trip is not exact, so the opening sample is the input itself
    let finish = |sol: ode::Solution<3>| {
        let mut traj = to_trajectory(drive, sol);
        if traj.taus.first() == Some(&tau_span.0) {
            traj.states[0] = *initial;
        }
        traj
    };
    match ode::solve(&sys, tau_span.0, y0, &grid, opts) {
        Ok(sol) => Ok(finish(sol)),
        Err(f) => Err(IntegrationFailure { diagnostic: f.diagnostic, partial: finish(f.partial) }),
    }
}

/// Propagates a state from `from` to `to` (either direction) and returns the endpoint.
pub fn propagate_hds(
    initial: &HdsState,
    drive: &DriveSpec,
    from: f64,
    to: f64,
    opts: &SolverOptions,
) -> Result<HdsState> {
    let sys = HdsSystem { drive: *drive };
    let sol = ode::solve(&sys, from, to_chart(initial), &[to], opts)?;
    Ok(from_chart(sol.ys.last().expect("endpoint sampled")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodObservable {
    Alpha,
    /// The internal phase taken modulo `2 pi`.
    DeltaMod2Pi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodMeasurement {
    pub period: f64,
    /// `2 pi / period` carrying the circulation sign.
    pub signed_frequency: f64,
    /// `+1` or `-1`: circulation in the `(delta, alpha)` plane.
    pub sense: i8,
    pub crossings: usize,
}

/// Root of the cubic Hermite interpolant of `v - level` on `[t0, t1]`.
fn hermite_crossing(t0: f64, t1: f64, v0: f64, v1: f64, d0: f64, d1: f64) -> f64 {
    let h = t1 - t0;
    let p = |s: f64| {
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * v0
            + (s3 - 2.0 * s2 + s) * h * d0
            + (-2.0 * s3 + 3.0 * s2) * v1
            + (s3 - s2) * h * d1
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut plo = p(lo);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let pm = p(mid);
        if (pm > 0.0) == (plo > 0.0) {
            lo = mid;
            plo = pm;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    t0 + 0.5 * (lo + hi) * h
}

/// Times at which `values - levels(k)` changes sign upward, refined with the
/// closed-form derivative.
fn crossing_times(taus: &[f64], values: &[f64], derivs: &[f64], level: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..taus.len().saturating_sub(1) {
        let (a, b) = (values[i] - level, values[i + 1] - level);
        if a < 0.0 && b >= 0.0 {
            out.push(hermite_crossing(taus[i], taus[i + 1], a, b, derivs[i], derivs[i + 1]));
        }
    }
    out
}

/// Oscillations smaller than this are treated as integration noise.
const AMPLITUDE_FLOOR: f64 = 1e-10;

pub fn measure_period(traj: &Trajectory, observable: PeriodObservable) -> Result<PeriodMeasurement> {
    if traj.len() < 8 {
        return Err(Error::NoOscillation("trajectory too short".into()));
    }
    let derivs: Vec<HdsDerivative> = traj
        .states
        .iter()
        .zip(&traj.taus)
        .map(|(s, &t)| hds_rhs(s, &traj.drive, t))
        .collect::<Result<_>>()?;
    let alphas: Vec<f64> = traj.states.iter().map(|s| s.alpha).collect();
    let deltas: Vec<f64> = traj.states.iter().map(|s| s.delta).collect();
    let d_alpha: Vec<f64> = derivs.iter().map(|d| d.d_alpha).collect();
    let d_delta: Vec<f64> = derivs.iter().map(|d| d.d_delta).collect();

    let net_delta = deltas[deltas.len() - 1] - deltas[0];
    let n = traj.len() as f64;
    let rotational = net_delta.abs() >= 2.0 * TAU;

    let spread = |v: &[f64]| v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x)) - v.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    let amplitude = match (observable, rotational) {
        (PeriodObservable::DeltaMod2Pi, true) => f64::INFINITY,
        (PeriodObservable::DeltaMod2Pi, false) => spread(&deltas),
        (PeriodObservable::Alpha, _) => spread(&alphas),
    };
    if amplitude < AMPLITUDE_FLOOR {
        return Err(Error::NoOscillation(format!("peak-to-peak amplitude {amplitude:e} is round-off")));
    }

    let crossings = match (observable, rotational) {
        (PeriodObservable::DeltaMod2Pi, true) => {
            // successive passages of delta through delta_0 + 2 pi k
            let sign = net_delta.signum();
            let base = deltas[0] + 0.5 * TAU * sign;
            let mut times = Vec::new();
            for i in 0..deltas.len() - 1 {
                let (k0, k1) = (((deltas[i] - base) / TAU).floor(), ((deltas[i + 1] - base) / TAU).floor());
                if k0 != k1 {
                    let level = base + TAU * k0.max(k1);
                    times.push(hermite_crossing(
                        traj.taus[i],
                        traj.taus[i + 1],
                        sign * (deltas[i] - level),
                        sign * (deltas[i + 1] - level),
                        sign * d_delta[i],
                        sign * d_delta[i + 1],
                    ));
                }
            }
            times
        }
        (PeriodObservable::DeltaMod2Pi, false) => {
            let level = deltas.iter().sum::<f64>() / n;
            crossing_times(&traj.taus, &deltas, &d_delta, level)
        }
        (PeriodObservable::Alpha, _) => {
            let level = alphas.iter().sum::<f64>() / n;
            crossing_times(&traj.taus, &alphas, &d_alpha, level)
        }
    };

    if crossings.len() < 3 {
        return Err(Error::NoOscillation(format!(
            "{} crossing(s) found, at least 3 needed",
            crossings.len()
        )));
    }
    let period = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;

    let sense = if rotational {
        net_delta.signum()
    } else {
        let (am, dm) = (alphas.iter().sum::<f64>() / n, deltas.iter().sum::<f64>() / n);
        let l: f64 = (0..traj.len())
            .map(|i| (deltas[i] - dm) * d_alpha[i] - (alphas[i] - am) * d_delta[i])
            .sum();
        if l == 0.0 {
            return Err(Error::NoOscillation("zero circulation".into()));
        }
        l.signum()
    } as i8;

    Ok(PeriodMeasurement {
        period,
        signed_frequency: sense as f64 * TAU / period,
        sense,
        crossings: crossings.len(),
    })
}

/// Overall-phase advance `theta(end) - theta(start)` of a trajectory.
pub fn theta_advance_check(traj: &Trajectory) -> f64 {
    match (traj.states.first(), traj.states.last()) {
        (Some(a), Some(b)) => b.theta_overall - a.theta_overall,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitAdvance {
    pub period: f64,
    pub delta_theta: f64,
    pub start: SpinorState,
    pub end: SpinorState,
}

/// Measures the orbit period of a conservative drive, then integrates exactly
/// one period and reports the overall-phase advance and the spinor endpoints.
pub fn orbit_theta_advance(initial: &HdsState, drive: &DriveSpec, opts: &SolverOptions) -> Result<OrbitAdvance> {
    if !drive.is_conservative() {
        return Err(Error::InvalidArgument("overall-phase advance needs a conservative drive".into()));
    }
    let nominal = TAU / drive.max_eigenfrequency();
    // the fixed point has no orbit to measure: every period is nominal
    let period = match integrate_hds(initial, drive, (0.0, 6.0 * nominal), opts, &SamplingSpec::PerCycle(128)) {
        Ok(traj) => match measure_period(&traj, PeriodObservable::Alpha) {
            Ok(m) => m.period,
            Err(Error::NoOscillation(_)) => nominal,
            Err(e) => return Err(e),
        },
        Err(f) => return Err(f.into()),
    };
    let end_state = propagate_hds(initial, drive, 0.0, period, opts)?;
    Ok(OrbitAdvance {
        period,
        delta_theta: end_state.theta_overall - initial.theta_overall,
        start: spinor_from_hds(initial)?,
        end: spinor_from_hds(&end_state)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn hamiltonian_examples() {
        assert_eq!(hamiltonian_value(0.0, 0.0, 0.0), 1.0);
        assert_eq!(hamiltonian_value(0.0, PI, 0.0), -1.0);
        assert!((hamiltonian_value(0.6, 0.0, 0.5) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn rhs_examples() {
        let d = hds_rhs(&HdsState::new(0.0, 0.0, 3.0), &DriveSpec::Zero, 0.0).unwrap();
        assert_eq!((d.d_alpha, d.d_delta, d.d_theta), (0.0, 0.0, -0.5));

        let d = hds_rhs(&HdsState::new(0.0, FRAC_PI_2, 0.0), &DriveSpec::Zero, 0.0).unwrap();
        assert!((d.d_alpha - 1.0).abs() < 1e-15 && d.d_delta.abs() < 1e-15 && d.d_theta.abs() < 1e-15);

        let d = hds_rhs(&HdsState::new(0.0, 0.0, 0.0), &DriveSpec::Constant { value: 0.5 }, 0.0).unwrap();
        assert_eq!((d.d_alpha, d.d_delta, d.d_theta), (0.0, 0.5, -0.75));
    }

    #[test]
    fn rhs_pole_guard() {
        let r = hds_rhs(&HdsState::new(1.0, 0.0, 0.0), &DriveSpec::Zero, 0.0);
        assert!(matches!(r, Err(Error::PoleProximity { .. })));
    }

    #[test]
    fn grid_includes_both_ends() {
        let g = SamplingSpec::PerCycle(64).grid(&DriveSpec::Zero, 0.0, 10.0).unwrap();
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 10.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let stride = TAU / 64.0;
        assert!((g[1] - stride).abs() < 1e-15);
        assert!(SamplingSpec::Stride(0.0).grid(&DriveSpec::Zero, 0.0, 1.0).is_err());
        assert_eq!(SamplingSpec::default().grid(&DriveSpec::Zero, 2.0, 2.0).unwrap(), vec![2.0]);
    }

    #[test]
    fn unperturbed_period_and_sense() {
        let opts = SolverOptions::default();
        let traj = integrate_hds(
            &HdsState::new(0.1, 0.0, 0.0),
            &DriveSpec::Zero,
            (0.0, 20.0 * PI),
            &opts,
            &SamplingSpec::default(),
        )
        .unwrap();
        let m = measure_period(&traj, PeriodObservable::Alpha).unwrap();
        assert!((m.period - TAU).abs() < 1e-6, "{}", m.period);
        assert_eq!(m.sense, 1);

        let traj = integrate_hds(
            &HdsState::new(0.1, PI, 0.0),
            &DriveSpec::Zero,
            (0.0, 20.0 * PI),
            &opts,
            &SamplingSpec::default(),
        )
        .unwrap();
        let m = measure_period(&traj, PeriodObservable::Alpha).unwrap();
        assert!((m.period - TAU).abs() < 1e-6);
        assert_eq!(m.sense, -1);
    }

    #[test]
    fn delta_observable_on_rotating_orbit() {
        // E = 1 orbit through (0.1, pi) encircles the pole: delta runs monotonically
        let drive = DriveSpec::Constant { value: 1.0 };
        let traj = integrate_hds(
            &HdsState::new(0.1, PI, 0.0),
            &drive,
            (0.0, 40.0),
            &SolverOptions::default(),
            &SamplingSpec::default(),
        )
        .unwrap();
        let m = measure_period(&traj, PeriodObservable::DeltaMod2Pi).unwrap();
        assert!((m.period - TAU / 2f64.sqrt()).abs() < 1e-6, "{}", m.period);
        let ma = measure_period(&traj, PeriodObservable::Alpha).unwrap();
        assert!((ma.period - m.period).abs() < 1e-6);
    }

    #[test]
    fn fixed_point_has_no_oscillation() {
        let traj = integrate_hds(
            &HdsState::new(0.0, 0.0, 0.0),
            &DriveSpec::Zero,
            (0.0, 30.0),
            &SolverOptions::default(),
            &SamplingSpec::default(),
        )
        .unwrap();
        assert!(matches!(measure_period(&traj, PeriodObservable::Alpha), Err(Error::NoOscillation(_))));
    }

    #[test]
    fn theta_advance_fixed_point() {
        for (span, expected) in [(TAU, -PI), (2.0 * TAU, -TAU)] {
            let traj = integrate_hds(
                &HdsState::new(0.0, 0.0, 0.0),
                &DriveSpec::Zero,
                (0.0, span),
                &SolverOptions::default(),
                &SamplingSpec::default(),
            )
            .unwrap();
            assert!((theta_advance_check(&traj) - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn pole_escape_keeps_partial() {
        // the H = 0 orbit is a great circle running through alpha = 1
        let err = integrate_hds(
            &HdsState::new(0.9999, FRAC_PI_2, 0.0),
            &DriveSpec::Zero,
            (0.0, 10.0),
            &SolverOptions::default(),
            &SamplingSpec::default(),
        )
        .unwrap_err();
        assert!(matches!(err.diagnostic, ode::OdeError::DomainEscape { .. }));
        assert!(!err.partial.is_empty());
    }
}
