//! Adaptive embedded Runge-Kutta integration with dense output onto a sample grid.
//!
//! Two Dormand-Prince pairs are available: the classic 5(4) pair with its
//! fourth-order continuous extension and the 8(5,3) pair with a seventh-order
//! interpolant. Both share the driver in this module: step-size control on a
//! scaled RMS error norm, domain guards supplied by the system, and output at
//! arbitrary grid times inside each accepted step.

mod dop853;
mod dopri5;

use serde::{Deserialize, Serialize};

use crate::error::IntegrationFailure;

pub use dop853::Dop853;
pub use dopri5::Dopri5;

/// A first-order system `y' = f(t, y)` on `R^N`.
pub trait OdeSystem<const N: usize> {
    /// Returns `None` when `y` lies outside the domain where `f` is defined.
    fn rhs(&self, t: f64, y: &[f64; N]) -> Option<[f64; N]>;

    /// Accepted steps must land on admissible states; a step ending outside is
    /// retried with a smaller step.
    fn admissible(&self, _y: &[f64; N]) -> bool {
        true
    }
}

impl<F, const N: usize> OdeSystem<N> for F
where
    F: Fn(f64, &[f64; N]) -> Option<[f64; N]>,
{
    fn rhs(&self, t: f64, y: &[f64; N]) -> Option<[f64; N]> {
        self(t, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Dormand-Prince 5(4).
    Dopri5,
    /// Dormand-Prince 8(5,3).
    #[default]
    Dop853,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dopri5" | "rk45" => Ok(Method::Dopri5),
            "dop853" => Ok(Method::Dop853),
            other => Err(format!("unknown method '{other}' (expected dopri5 or dop853)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

/// Tight enough to hold the mean energy to about 1e-10 over a few hundred
/// fast cycles of a weak-drive run.
impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-14 }
    }
}

impl Tolerances {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol }
    }

    pub fn is_valid(&self) -> bool {
        self.rtol > 0.0 && self.atol > 0.0 && self.rtol.is_finite() && self.atol.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub method: Method,
    pub tol: Tolerances,
    /// Budget of attempted steps (accepted plus rejected).
    pub max_steps: usize,
    pub h_max: Option<f64>,
    pub h_init: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: Method::default(),
            tol: Tolerances::default(),
            max_steps: 20_000_000,
            h_max: None,
            h_init: None,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: Tolerances) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evals: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OdeError {
    #[error("state left the admissible domain near t = {t} ({detail})")]
    DomainEscape { t: f64, detail: String },
    #[error("step budget of {steps} exhausted at t = {t}")]
    StepBudget { steps: usize, t: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("output grid is not monotone in the integration direction")]
    BadGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<const N: usize> {
    pub ts: Vec<f64>,
    pub ys: Vec<[f64; N]>,
    pub stats: IntegStats,
}

impl<const N: usize> Solution<N> {
    fn with_capacity(n: usize) -> Self {
        Self { ts: Vec::with_capacity(n), ys: Vec::with_capacity(n), stats: IntegStats::default() }
    }
}

/// Outcome of one trial step of an embedded pair.
pub(crate) enum Trial<const N: usize> {
    /// Proposed state and its error measured in tolerance units (accept if <= 1).
    Done { y_new: [f64; N], err: f64 },
    /// A stage evaluation left the domain.
    Domain,
}

/// One embedded Runge-Kutta pair with a continuous extension.
pub(crate) trait EmbeddedPair<const N: usize> {
    /// Order used in the step-size exponent.
    const ERROR_ORDER: f64;
    /// Lund stabilization coefficient.
    const BETA: f64;
    const FAC_MIN: f64;
    const FAC_MAX: f64;

    fn trial<S: OdeSystem<N>>(
        &mut self,
        sys: &S,
        t: f64,
        y: &[f64; N],
        f0: &[f64; N],
        h: f64,
        tol: &Tolerances,
    ) -> Trial<N>;

    /// Finalizes an accepted step: returns `f(t + h, y_new)` and prepares the
    /// interpolant. `None` if an extra stage left the domain.
    fn accept<S: OdeSystem<N>>(
        &mut self,
        sys: &S,
        t: f64,
        y: &[f64; N],
        y_new: &[f64; N],
        h: f64,
    ) -> Option<[f64; N]>;

    /// Dense output at `t + s h`, `s` in `[0, 1]`, for the last accepted step.
    fn interpolate(&self, s: f64) -> [f64; N];

    /// Right-hand-side evaluations per trial and per accept.
    fn evals_per_trial() -> usize;
    fn evals_per_accept() -> usize;
}

#[inline]
pub(crate) fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

#[inline]
pub(crate) fn scale<const N: usize>(y: &[f64; N], y_new: &[f64; N], tol: &Tolerances, i: usize) -> f64 {
    tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs())
}

fn rms_scaled<const N: usize>(v: &[f64; N], y: &[f64; N], tol: &Tolerances) -> f64 {
    let s: f64 = (0..N).map(|i| (v[i] / (tol.atol + tol.rtol * y[i].abs())).powi(2)).sum();
    (s / N as f64).sqrt()
}

/// Starting step from the first and a rough second derivative estimate.
fn initial_step<S: OdeSystem<N>, const N: usize>(
    sys: &S,
    t0: f64,
    y0: &[f64; N],
    f0: &[f64; N],
    dir: f64,
    order: f64,
    tol: &Tolerances,
    h_max: f64,
) -> (f64, usize) {
    let d0 = rms_scaled(y0, y0, tol);
    let d1 = rms_scaled(f0, y0, tol);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(h_max);
    let y1 = axpy(y0, dir * h, &[(1.0, f0)]);
    let Some(f1) = sys.rhs(t0 + dir * h, &y1) else {
        return ((h * 1e-3).max(1e-10), 1);
    };
    let mut diff = [0.0; N];
    for i in 0..N {
        diff[i] = f1[i] - f0[i];
    }
    let d2 = rms_scaled(&diff, y0, tol) / h;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / dm).powf(1.0 / order)
    };
    ((100.0 * h).min(h1).min(h_max), 1)
}

/// Integrates from `(t0, y0)` to the last grid time, recording the solution at
/// every grid time. Grid times must be monotone in the direction of
/// integration and must not precede `t0`.
pub fn solve<S: OdeSystem<N>, const N: usize>(
    sys: &S,
    t0: f64,
    y0: [f64; N],
    grid: &[f64],
    opts: &SolverOptions,
) -> Result<Solution<N>, IntegrationFailure<Solution<N>>> {
    match opts.method {
        Method::Dopri5 => drive(Dopri5::<N>::new(), sys, t0, y0, grid, opts),
        Method::Dop853 => drive(Dop853::<N>::new(), sys, t0, y0, grid, opts),
    }
}

fn drive<P: EmbeddedPair<N>, S: OdeSystem<N>, const N: usize>(
    mut pair: P,
    sys: &S,
    t0: f64,
    y0: [f64; N],
    grid: &[f64],
    opts: &SolverOptions,
) -> Result<Solution<N>, IntegrationFailure<Solution<N>>> {
    let mut sol = Solution::with_capacity(grid.len());
    let fail = |diagnostic: OdeError, sol: Solution<N>| Err(IntegrationFailure { diagnostic, partial: sol });

    let Some(&t_end) = grid.last() else {
        return Ok(sol);
    };
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let monotone = grid.windows(2).all(|w| dir * (w[1] - w[0]) >= 0.0);
    if !monotone || dir * (grid[0] - t0) < 0.0 {
        return fail(OdeError::BadGrid, sol);
    }

    let mut next = 0;
    while next < grid.len() && grid[next] == t0 {
        sol.ts.push(t0);
        sol.ys.push(y0);
        next += 1;
    }
    if next == grid.len() {
        return Ok(sol);
    }

    let tol = opts.tol;
    let span = (t_end - t0).abs();
    let h_max = opts.h_max.unwrap_or(span).min(span);
    let Some(mut f) = sys.rhs(t0, &y0) else {
        return fail(OdeError::DomainEscape { t: t0, detail: "initial state".into() }, sol);
    };
    sol.stats.evals += 1;

    let mut h = match opts.h_init {
        Some(h) => h.abs().min(h_max),
        None => {
            let (h, evals) = initial_step(sys, t0, &y0, &f, dir, P::ERROR_ORDER + 1.0, &tol, h_max);
            sol.stats.evals += evals;
            h
        }
    };

    let expo = 1.0 / (P::ERROR_ORDER + 1.0) - 0.75 * P::BETA;
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;
    let mut t = t0;
    let mut y = y0;
    let mut attempts = 0usize;

    loop {
        if attempts >= opts.max_steps {
            return fail(OdeError::StepBudget { steps: attempts, t }, sol);
        }
        attempts += 1;

        let remaining = (t_end - t).abs();
        let mut last = false;
        if h >= remaining * (1.0 - 1e-12) {
            h = remaining;
            last = true;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return fail(OdeError::StepUnderflow { t }, sol);
        }

        let trial = pair.trial(sys, t, &y, &f, dir * h, &tol);
        sol.stats.evals += P::evals_per_trial();

        let (y_new, err) = match trial {
            Trial::Done { y_new, err } if sys.admissible(&y_new) && err.is_finite() => (y_new, err),
            Trial::Done { y_new, err } if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) => {
                sol.stats.rejected += 1;
                last_rejected = true;
                h *= 0.25;
                if h <= 1e-14 * t.abs().max(1.0) {
                    return fail(OdeError::NonFinite { t }, sol);
                }
                continue;
            }
            _ => {
                // stage or endpoint outside the domain: shrink and retry
                sol.stats.rejected += 1;
                last_rejected = true;
                h *= 0.5;
                if h <= 1e-12 * t.abs().max(1.0) {
                    return fail(
                        OdeError::DomainEscape { t, detail: "persistent after step reduction".into() },
                        sol,
                    );
                }
                continue;
            }
        };

        let fac11 = err.max(1e-300).powf(expo);
        let fac = (fac11 / fac_old.powf(P::BETA) / 0.9).clamp(1.0 / P::FAC_MAX, 1.0 / P::FAC_MIN);

        if err <= 1.0 {
            let Some(f_new) = pair.accept(sys, t, &y, &y_new, dir * h) else {
                sol.stats.rejected += 1;
                last_rejected = true;
                h *= 0.5;
                continue;
            };
            sol.stats.evals += P::evals_per_accept();
            sol.stats.accepted += 1;
            fac_old = err.max(1e-4);

            let t_new = if last { t_end } else { t + dir * h };
            while next < grid.len() && dir * (grid[next] - t_new) <= 0.0 {
                let g = grid[next];
                let yg = if g == t_new { y_new } else { pair.interpolate((g - t) / (dir * h)) };
                sol.ts.push(g);
                sol.ys.push(yg);
                next += 1;
            }

            t = t_new;
            y = y_new;
            f = f_new;
            if last || next == grid.len() {
                return Ok(sol);
            }

            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            h = h_new.min(h_max);
        } else {
            sol.stats.rejected += 1;
            last_rejected = true;
            h /= (1.0 / P::FAC_MIN).min(fac11 / 0.9);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn harmonic(_t: f64, y: &[f64; 2]) -> Option<[f64; 2]> {
        Some([y[1], -y[0]])
    }

    fn grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| t0 + (t1 - t0) * i as f64 / n as f64).collect()
    }

    #[test]
    fn harmonic_oscillator_both_methods() {
        for method in [Method::Dopri5, Method::Dop853] {
            let opts = SolverOptions { method, ..SolverOptions::default() };
            let g = grid(0.0, 20.0 * PI, 2000);
            let sol = solve(&harmonic, 0.0, [1.0, 0.0], &g, &opts).unwrap();
            assert_eq!(sol.ts.len(), g.len());
            let mut worst = 0.0f64;
            for (t, y) in sol.ts.iter().zip(&sol.ys) {
                worst = worst.max((y[0] - t.cos()).abs()).max((y[1] + t.sin()).abs());
            }
            // dense output included: interpolated samples are as good as step ends
            assert!(worst < 1e-8, "{method:?}: {worst:e}");
        }
    }

    #[test]
    fn backward_integration() {
        let g = grid(10.0, 0.0, 100);
        let sol = solve(&harmonic, 10.0, [10f64.cos(), -10f64.sin()], &g, &SolverOptions::default()).unwrap();
        let y = sol.ys.last().unwrap();
        assert!((y[0] - 1.0).abs() < 1e-9 && y[1].abs() < 1e-9);
    }

    #[test]
    fn exponential_growth_order() {
        // y' = y: the 8th order pair must need far fewer steps than the 5th
        let exp = |_t: f64, y: &[f64; 1]| Some([y[0]]);
        let g = [5.0];
        let mut steps = Vec::new();
        for method in [Method::Dopri5, Method::Dop853] {
            let opts = SolverOptions { method, ..SolverOptions::default() };
            let sol = solve(&exp, 0.0, [1.0], &g, &opts).unwrap();
            let rel = (sol.ys[0][0] / 5f64.exp() - 1.0).abs();
            assert!(rel < 1e-8, "{method:?} rel err {rel:e}");
            steps.push(sol.stats.accepted);
        }
        assert!(steps[1] < steps[0]);
    }

    #[test]
    fn domain_escape_reported_with_partial() {
        // y' = 1 on y < 1 only: must hit the wall near t = 1
        let sys = |_t: f64, y: &[f64; 1]| if y[0] < 1.0 { Some([1.0]) } else { None };
        let g = grid(0.0, 2.0, 20);
        let err = solve(&sys, 0.0, [0.0], &g, &SolverOptions::default()).unwrap_err();
        assert!(matches!(err.diagnostic, OdeError::DomainEscape { .. }));
        assert!(!err.partial.ts.is_empty());
        assert!(*err.partial.ts.last().unwrap() <= 1.0);
    }

    #[test]
    fn step_budget() {
        let opts = SolverOptions { max_steps: 5, ..SolverOptions::default() };
        let err = solve(&harmonic, 0.0, [1.0, 0.0], &[100.0], &opts).unwrap_err();
        assert!(matches!(err.diagnostic, OdeError::StepBudget { .. }));
    }

    #[test]
    fn bad_grid_rejected() {
        let err = solve(&harmonic, 0.0, [1.0, 0.0], &[1.0, 0.5], &SolverOptions::default()).unwrap_err();
        assert_eq!(err.diagnostic, OdeError::BadGrid);
    }

    #[test]
    fn trivial_grid() {
        let sol = solve(&harmonic, 0.0, [1.0, 0.0], &[0.0], &SolverOptions::default()).unwrap();
        assert_eq!(sol.ys, vec![[1.0, 0.0]]);
        let sol = solve(&harmonic, 0.0, [1.0, 0.0], &[], &SolverOptions::default()).unwrap();
        assert!(sol.ts.is_empty());
    }
}
