//! Energy observables: mean energy, state energies (closed form and phase
//! derivatives), their standard deviations, the variance operator
//! `V = (H - <H> I)^2` and its expectation by matrix element and closed form.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hds::{hamiltonian_value, hds_rhs, Trajectory};
use crate::model::{HdsState, ModelParams, SpinorState, ALPHA_SLACK};

/// Round-off slack below zero tolerated on variance expectations.
pub const VARIANCE_SLACK: f64 = 1e-12;
/// States with `1 - |alpha|` below this are treated as sitting on a pole.
const POLE_GAP: f64 = 1e-14;

/// `<Psi|H|Psi>` with `H = [[E, K], [K, -E]]`.
pub fn mean_energy(p: &SpinorState, drive_value: f64, params: &ModelParams) -> f64 {
    drive_value * (p.psi_a.norm_sqr() - p.psi_b.norm_sqr()) + 2.0 * params.k * (p.psi_a.conj() * p.psi_b).re
}

/// Which spinor component has vanishing weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoleComponent {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateEnergies {
    pub e_a: f64,
    pub e_b: f64,
    /// At a pole the energy of the empty component is non-finite.
    pub degenerate: Option<PoleComponent>,
}

impl StateEnergies {
    /// `|psi_a|^2 E_a + |psi_b|^2 E_b`, with the empty component's finite limit
    /// `(H -+ E) / 2` used at a pole.
    pub fn mixture(&self, alpha: f64, h_mean: f64, drive_value: f64) -> f64 {
        let a = match self.degenerate {
            Some(PoleComponent::A) => (h_mean + drive_value) / 2.0,
            _ => (1.0 + alpha) / 2.0 * self.e_a,
        };
        let b = match self.degenerate {
            Some(PoleComponent::B) => (h_mean - drive_value) / 2.0,
            _ => (1.0 - alpha) / 2.0 * self.e_b,
        };
        a + b
    }
}

fn pole_of(alpha: f64) -> Result<Option<PoleComponent>> {
    if !(alpha.abs() <= 1.0 + ALPHA_SLACK) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    Ok(if 1.0 + alpha <= POLE_GAP {
        Some(PoleComponent::A)
    } else if 1.0 - alpha <= POLE_GAP {
        Some(PoleComponent::B)
    } else {
        None
    })
}

/// `E_a = (H + E) / (1 + alpha)`, `E_b = (H - E) / (1 - alpha)`.
pub fn state_energies(alpha: f64, h_mean: f64, drive_value: f64) -> Result<StateEnergies> {
    let degenerate = pole_of(alpha)?;
    let e_a = match degenerate {
        Some(PoleComponent::A) => f64::NAN,
        _ => (h_mean + drive_value) / (1.0 + alpha),
    };
    let e_b = match degenerate {
        Some(PoleComponent::B) => f64::NAN,
        _ => (h_mean - drive_value) / (1.0 - alpha),
    };
    Ok(StateEnergies { e_a, e_b, degenerate })
}

/// `E_a = -2 theta'`, `E_b = -2 (theta' + delta')` from the closed-form
/// equations of motion at an interior sample.
pub fn state_energies_from_phases(traj: &Trajectory, index: usize) -> Result<(f64, f64)> {
    if index == 0 || index + 1 >= traj.len() {
        return Err(Error::InvalidArgument(format!(
            "index {index} is not interior to a trajectory of {} samples",
            traj.len()
        )));
    }
    let d = hds_rhs(&traj.states[index], &traj.drive, traj.taus[index])?;
    Ok((-2.0 * d.d_theta, -2.0 * (d.d_theta + d.d_delta)))
}

/// `sigma_{a,b} = |psi_{a,b}| |E_{a,b} - H|`, as nonnegative magnitudes.
/// A non-finite state energy (pole) yields a non-finite deviation.
pub fn state_sigmas(alpha: f64, e_a: f64, e_b: f64, h_mean: f64) -> (f64, f64) {
    let alpha = alpha.clamp(-1.0, 1.0);
    (
        ((1.0 + alpha) / 2.0).sqrt() * (e_a - h_mean).abs(),
        ((1.0 - alpha) / 2.0).sqrt() * (e_b - h_mean).abs(),
    )
}

/// Real symmetric 2x2 matrix `[[v11, v12], [v12, v22]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceMatrix {
    pub v11: f64,
    pub v12: f64,
    pub v22: f64,
}

impl VarianceMatrix {
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.v11 + self.v22);
        let r = (0.25 * (self.v11 - self.v22).powi(2) + self.v12 * self.v12).sqrt();
        (mean - r, mean + r)
    }

    pub fn as_rows(&self) -> [[f64; 2]; 2] {
        [[self.v11, self.v12], [self.v12, self.v22]]
    }
}

/// `(H - h I)^2` written out for `H = [[E, K], [K, -E]]`.
pub fn variance_matrix(h_mean: f64, drive_value: f64, k: f64) -> VarianceMatrix {
    VarianceMatrix {
        v11: (h_mean - drive_value).powi(2) + k * k,
        v12: -2.0 * k * h_mean,
        v22: (h_mean + drive_value).powi(2) + k * k,
    }
}

/// `<Psi|V|Psi>` by direct matrix element.
pub fn variance_expectation_matrix_route(p: &SpinorState, v: &VarianceMatrix) -> Result<f64> {
    let value = v.v11 * p.psi_a.norm_sqr() + v.v22 * p.psi_b.norm_sqr() + 2.0 * v.v12 * (p.psi_a.conj() * p.psi_b).re;
    if value < -VARIANCE_SLACK {
        return Err(Error::NegativeVariance(value));
    }
    Ok(value)
}

/// `(1 - 2K) H^2 + 2 (K - 1) alpha E H + E^2 + K^2`, where `H` is the
/// canonical Hamiltonian `sqrt(1 - alpha^2) cos(delta) + alpha E`.
/// With `K = 1` this is `E^2 - H^2 + 1`.
pub fn variance_expectation_closed_form(h_mean: f64, drive_value: f64, alpha: f64, k: f64) -> f64 {
    (1.0 - 2.0 * k) * h_mean * h_mean + 2.0 * (k - 1.0) * alpha * drive_value * h_mean + drive_value * drive_value + k * k
}

pub fn sigma_q(v_expect: f64) -> Result<f64> {
    if v_expect < -VARIANCE_SLACK || v_expect.is_nan() {
        return Err(Error::NegativeVariance(v_expect));
    }
    Ok(v_expect.max(0.0).sqrt())
}

/// Complex 2x2 matrix, row major.
pub type Matrix2 = [[Complex64; 2]; 2];

fn matmul(a: &Matrix2, b: &Matrix2) -> Matrix2 {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn expectation(m: &Matrix2, p: &SpinorState) -> Complex64 {
    let v = [p.psi_a, p.psi_b];
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            acc += v[i].conj() * m[i][j] * v[j];
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableStats {
    pub expectation: f64,
    pub variance: f64,
    pub sigma: f64,
}

/// Mean, variance `<(O - <O> I)^2>` and standard deviation of a Hermitian
/// observable in state `p`.
pub fn generalized_variance(observable: &Matrix2, p: &SpinorState) -> Result<ObservableStats> {
    let o = observable;
    let dev = (o[0][0].im.abs())
        .max(o[1][1].im.abs())
        .max((o[0][1] - o[1][0].conj()).norm());
    if dev > 1e-12 {
        return Err(Error::NonHermitian(dev));
    }
    let mean = expectation(o, p).re;
    let mut shifted = *o;
    shifted[0][0] -= mean;
    shifted[1][1] -= mean;
    let variance = expectation(&matmul(&shifted, &shifted), p).re;
    Ok(ObservableStats { expectation: mean, variance, sigma: sigma_q(variance)? })
}

/// The qubit Hamiltonian matrix at drive value `e`.
pub fn hamiltonian_matrix(drive_value: f64, params: &ModelParams) -> Matrix2 {
    let c = |x: f64| Complex64::new(x, 0.0);
    [[c(drive_value), c(params.k)], [c(params.k), c(-drive_value)]]
}

/// All energy observables at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub tau: f64,
    pub h_mean: f64,
    pub e_a: f64,
    pub e_b: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub v_expect: f64,
    pub sigma_q: f64,
    pub drive_value: f64,
    pub alpha: f64,
    pub pole: Option<PoleComponent>,
}

impl EnergySample {
    pub fn from_state(tau: f64, s: &HdsState, drive_value: f64, k: f64) -> Result<Self> {
        let h = hamiltonian_value(s.alpha, s.delta, drive_value);
        let energies = state_energies(s.alpha, h, drive_value)?;
        let (sigma_a, sigma_b) = state_sigmas(s.alpha, energies.e_a, energies.e_b, h);
        let v = variance_expectation_closed_form(h, drive_value, s.alpha, k);
        Ok(Self {
            tau,
            h_mean: h,
            e_a: energies.e_a,
            e_b: energies.e_b,
            sigma_a,
            sigma_b,
            v_expect: v,
            sigma_q: sigma_q(v)?,
            drive_value,
            alpha: s.alpha,
            pole: energies.degenerate,
        })
    }

    /// `|psi_a|^2 E_a + |psi_b|^2 E_b - H`, pole-safe.
    pub fn mixture_residual(&self) -> f64 {
        let se = StateEnergies { e_a: self.e_a, e_b: self.e_b, degenerate: self.pole };
        se.mixture(self.alpha, self.h_mean, self.drive_value) - self.h_mean
    }
}

pub fn energy_sample_series(traj: &Trajectory) -> Result<Vec<EnergySample>> {
    traj.taus
        .iter()
        .zip(&traj.states)
        .map(|(&t, s)| EnergySample::from_state(t, s, traj.drive.eval(t), traj.params.k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{spinor_from_hds, DriveSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn equator() -> SpinorState {
        SpinorState::new(c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0))
    }

    #[test]
    fn mean_energy_examples() {
        let params = ModelParams::default();
        assert!((mean_energy(&equator(), 0.0, &params) - 1.0).abs() < 1e-15);
        let up = SpinorState::new(c(1.0, 0.0), c(0.0, 0.0));
        assert_eq!(mean_energy(&up, 0.7, &params), 0.7);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let s = HdsState::random(&mut rng);
            let e: f64 = rng.random_range(-1.0..1.0);
            let p = spinor_from_hds(&s).unwrap();
            assert!((mean_energy(&p, e, &params) - hamiltonian_value(s.alpha, s.delta, e)).abs() < 1e-12);
        }
    }

    #[test]
    fn state_energy_examples() {
        let se = state_energies(0.0, 1.0, 0.0).unwrap();
        assert_eq!((se.e_a, se.e_b), (1.0, 1.0));
        let se = state_energies(0.0, 1.0, 0.5).unwrap();
        assert_eq!((se.e_a, se.e_b), (1.5, 0.5));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let alpha: f64 = rng.random_range(-0.999..0.999);
            let h: f64 = rng.random_range(-1.5..1.5);
            let e: f64 = rng.random_range(-1.0..1.0);
            let se = state_energies(alpha, h, e).unwrap();
            assert!((se.mixture(alpha, h, e) - h).abs() <= 1e-12);
        }
    }

    #[test]
    fn pole_energy_is_flagged_and_mixture_stays_finite() {
        // alpha = -1 forces H = -E
        let se = state_energies(-1.0, -0.3, 0.3).unwrap();
        assert_eq!(se.degenerate, Some(PoleComponent::A));
        assert!(se.e_a.is_nan());
        assert!((se.mixture(-1.0, -0.3, 0.3) + 0.3).abs() < 1e-15);
        assert!(state_energies(1.5, 0.0, 0.0).is_err());
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(state_sigmas(0.0, 1.0, 1.0, 1.0), (0.0, 0.0));
        let (sa, sb) = state_sigmas(0.0, 1.5, 0.5, 1.0);
        assert!((sa - FRAC_1_SQRT_2 * 0.5).abs() < 1e-15 && (sb - FRAC_1_SQRT_2 * 0.5).abs() < 1e-15);

        // delta = pi/2 on the equator: H = 0 and the state energies vanish
        let s = HdsState::new(0.0, FRAC_PI_2, 0.0);
        let sample = EnergySample::from_state(0.0, &s, 0.0, 1.0).unwrap();
        assert!(sample.sigma_a.abs() < 1e-15 && sample.sigma_b.abs() < 1e-15);
        assert!((sample.sigma_q - 1.0).abs() < 1e-15);
    }

    #[test]
    fn variance_matrix_examples() {
        let v = variance_matrix(1.0, 0.0, 1.0);
        assert_eq!(v.as_rows(), [[2.0, -2.0], [-2.0, 2.0]]);
        let v = variance_matrix(0.0, 0.0, 1.0);
        assert_eq!(v.as_rows(), [[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn variance_matrix_is_explicit_square() {
        // brute force: (H - h I)^2 by 2x2 multiplication
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (h, e, k): (f64, f64, f64) =
                (rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0), rng.random_range(0.1..3.0));
            let m = [[e - h, k], [k, -e - h]];
            let mut sq = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    sq[i][j] = m[i][0] * m[0][j] + m[i][1] * m[1][j];
                }
            }
            let v = variance_matrix(h, e, k);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((v.as_rows()[i][j] - sq[i][j]).abs() < 1e-12);
                }
            }
            let (l0, l1) = v.eigenvalues();
            assert!(l0 >= -1e-12 && l1 >= l0);
        }
    }

    #[test]
    fn variance_expectation_examples() {
        let v = variance_matrix(1.0, 0.0, 1.0);
        assert!(variance_expectation_matrix_route(&equator(), &v).unwrap().abs() < 1e-15);

        let s = HdsState::new(0.0, FRAC_PI_2, 0.0);
        let p = spinor_from_hds(&s).unwrap();
        let h = hamiltonian_value(s.alpha, s.delta, 0.0);
        let v = variance_matrix(h, 0.0, 1.0);
        assert!((variance_expectation_matrix_route(&p, &v).unwrap() - 1.0).abs() < 1e-15);

        assert_eq!(variance_expectation_closed_form(1.0, 0.0, 0.3, 1.0), 0.0);
        assert_eq!(variance_expectation_closed_form(0.0, 0.0, -0.7, 1.0), 1.0);
        let e = 8e-3 * 1.234f64.sin();
        assert!((variance_expectation_closed_form(0.5, e, 0.1, 1.0) - (e * e + 0.75)).abs() < 1e-15);
    }

    #[test]
    fn inconsistent_variance_inputs_rejected() {
        // a V built for the wrong state can go negative
        let v = VarianceMatrix { v11: -1.0, v12: 0.0, v22: -1.0 };
        assert!(matches!(variance_expectation_matrix_route(&equator(), &v), Err(Error::NegativeVariance(_))));
    }

    #[test]
    fn sigma_q_examples() {
        assert_eq!(sigma_q(0.0).unwrap(), 0.0);
        assert_eq!(sigma_q(1.0).unwrap(), 1.0);
        assert_eq!(sigma_q(0.25).unwrap(), 0.5);
        assert_eq!(sigma_q(-1e-13).unwrap(), 0.0);
        assert!(sigma_q(-1e-3).is_err());
    }

    #[test]
    fn generalized_variance_examples() {
        let params = ModelParams::default();
        let h = hamiltonian_matrix(0.0, &params);
        let stats = generalized_variance(&h, &equator()).unwrap();
        assert!(stats.variance.abs() < 1e-15 && (stats.expectation - 1.0).abs() < 1e-15);

        let id = [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
        let p = spinor_from_hds(&HdsState::new(0.3, 1.0, 2.0)).unwrap();
        assert!(generalized_variance(&id, &p).unwrap().variance.abs() < 1e-15);

        let z = [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]];
        let stats = generalized_variance(&z, &equator()).unwrap();
        assert!(stats.expectation.abs() < 1e-15 && (stats.variance - 1.0).abs() < 1e-15);

        let bad = [[c(1.0, 0.0), c(0.0, 1.0)], [c(0.0, 1.0), c(-1.0, 0.0)]];
        assert!(matches!(generalized_variance(&bad, &equator()), Err(Error::NonHermitian(_))));
    }

    #[test]
    fn generalized_variance_reproduces_energy_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = ModelParams::default();
        for _ in 0..200 {
            let s = HdsState::random(&mut rng);
            let e: f64 = rng.random_range(-0.5..0.5);
            let p = spinor_from_hds(&s).unwrap();
            let stats = generalized_variance(&hamiltonian_matrix(e, &params), &p).unwrap();
            let h = hamiltonian_value(s.alpha, s.delta, e);
            assert!((stats.expectation - h).abs() < 1e-12);
            assert!((stats.variance - variance_expectation_closed_form(h, e, s.alpha, 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_trajectory_series() {
        let traj = Trajectory {
            params: ModelParams::default(),
            drive: DriveSpec::Zero,
            taus: vec![],
            states: vec![],
            stats: Default::default(),
        };
        assert!(energy_sample_series(&traj).unwrap().is_empty());
    }
}
