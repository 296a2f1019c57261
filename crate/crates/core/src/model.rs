//! Model types and the exact maps between the spinor, canonical and Bloch pictures.
//!
//! A pure qubit state is carried either as a spinor `(psi_a, psi_b)` or as the
//! canonical pair `(alpha, delta)` plus the overall phase `theta_overall`:
//!
//! ```text
//! psi_a = sqrt((1 + alpha) / 2) * exp(i theta)
//! psi_b = sqrt((1 - alpha) / 2) * exp(i (theta + delta))
//! ```
//!
//! Reduced units are `K = 1`, `hbar = 2`, `Omega = 1` unless a [`ModelParams`]
//! says otherwise; time is the dimensionless `tau = Omega t`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on `|alpha| <= 1` before a state is rejected.
pub const ALPHA_SLACK: f64 = 1e-12;
/// Normalization slack accepted on incoming spinors.
pub const NORM_SLACK: f64 = 1e-9;
/// Below this modulus a spinor component is treated as vanishing (pole).
const POLE_MODULUS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Off-diagonal coupling of the Hamiltonian matrix.
    pub k: f64,
    pub hbar: f64,
    /// Reference frequency; `tau = omega * t`.
    pub omega: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { k: 1.0, hbar: 2.0, omega: 1.0 }
    }
}

impl ModelParams {
    pub fn new(k: f64, hbar: f64, omega: f64) -> Result<Self> {
        if !(k > 0.0 && hbar > 0.0 && omega > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "model parameters must be positive (K = {k}, hbar = {hbar}, Omega = {omega})"
            )));
        }
        Ok(Self { k, hbar, omega })
    }

    /// Default reduced units with a different coupling.
    pub fn with_k(k: f64) -> Result<Self> {
        Self::new(k, 2.0, 1.0)
    }
}

/// External energy drive `E(tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriveSpec {
    Zero,
    Constant { value: f64 },
    /// `A sin(tau)`, resonant with the undriven level splitting.
    Sinusoidal { amplitude: f64 },
}

impl DriveSpec {
    pub fn sinusoidal(amplitude: f64) -> Result<Self> {
        if !(amplitude >= 0.0) || !amplitude.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "drive amplitude must be finite and >= 0, got {amplitude}"
            )));
        }
        Ok(DriveSpec::Sinusoidal { amplitude })
    }

    #[inline]
    pub fn eval(&self, tau: f64) -> f64 {
        match *self {
            DriveSpec::Zero => 0.0,
            DriveSpec::Constant { value } => value,
            DriveSpec::Sinusoidal { amplitude } => amplitude * tau.sin(),
        }
    }

    /// Upper bound of `|E(tau)|` over all times.
    pub fn max_abs(&self) -> f64 {
        match *self {
            DriveSpec::Zero => 0.0,
            DriveSpec::Constant { value } => value.abs(),
            DriveSpec::Sinusoidal { amplitude } => amplitude.abs(),
        }
    }

    /// True when the drive is time independent, so the HDS energy is conserved.
    pub fn is_conservative(&self) -> bool {
        !matches!(self, DriveSpec::Sinusoidal { amplitude } if *amplitude != 0.0)
    }

    /// Largest eigenfrequency `sqrt(1 + E^2)` reached by the drive.
    pub fn max_eigenfrequency(&self) -> f64 {
        let e = self.max_abs();
        (1.0 + e * e).sqrt()
    }
}

/// Free function form of [`DriveSpec::eval`].
pub fn drive_eval(drive: &DriveSpec, tau: f64) -> f64 {
    drive.eval(tau)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinorState {
    pub psi_a: Complex64,
    pub psi_b: Complex64,
}

impl SpinorState {
    pub fn new(psi_a: Complex64, psi_b: Complex64) -> Self {
        Self { psi_a, psi_b }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.psi_a.norm_sqr() + self.psi_b.norm_sqr()
    }

    pub fn check_normalized(&self) -> Result<()> {
        let dev = (self.norm_sqr() - 1.0).abs();
        if dev > NORM_SLACK || !dev.is_finite() {
            return Err(Error::NotNormalized(dev));
        }
        Ok(())
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self::new(self.psi_a * factor, self.psi_b * factor)
    }

    /// Largest componentwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &SpinorState) -> f64 {
        (self.psi_a - other.psi_a)
            .norm()
            .max((self.psi_b - other.psi_b).norm())
    }

    /// Packs the spinor as `[Re a, Im a, Re b, Im b]`.
    pub fn to_real(&self) -> [f64; 4] {
        [self.psi_a.re, self.psi_a.im, self.psi_b.re, self.psi_b.im]
    }

    pub fn from_real(y: &[f64; 4]) -> Self {
        Self::new(Complex64::new(y[0], y[1]), Complex64::new(y[2], y[3]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HdsState {
    /// Population imbalance `|psi_a|^2 - |psi_b|^2`.
    pub alpha: f64,
    /// Internal phase, unwrapped along a trajectory.
    pub delta: f64,
    /// Overall phase, unwrapped along a trajectory.
    pub theta_overall: f64,
}

impl HdsState {
    pub fn new(alpha: f64, delta: f64, theta_overall: f64) -> Self {
        Self { alpha, delta, theta_overall }
    }

    pub fn check_alpha(&self) -> Result<()> {
        if !(self.alpha.abs() <= 1.0 + ALPHA_SLACK) {
            return Err(Error::AlphaOutOfRange(self.alpha));
        }
        Ok(())
    }

    /// Uniform `alpha` in `[-1, 1]`, `delta` and `theta` uniform in `[0, 2 pi)`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(0.0..TAU),
            rng.random_range(0.0..TAU),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochCoords {
    /// Polar angle in `[0, pi]`.
    pub theta: f64,
    pub phi: f64,
}

/// Result of mapping a spinor back to canonical coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HdsMapping {
    pub state: HdsState,
    /// Set at the poles, where `delta` carries no information and was copied
    /// from the continuity hint (or zeroed).
    pub degenerate: bool,
}

pub fn spinor_from_hds(s: &HdsState) -> Result<SpinorState> {
    s.check_alpha()?;
    let alpha = s.alpha.clamp(-1.0, 1.0);
    let ma = ((1.0 + alpha) / 2.0).sqrt();
    let mb = ((1.0 - alpha) / 2.0).sqrt();
    Ok(SpinorState::new(
        Complex64::from_polar(ma, s.theta_overall),
        Complex64::from_polar(mb, s.theta_overall + s.delta),
    ))
}

/// Nearest representative of `angle` modulo `2 pi` to `reference`.
#[inline]
pub fn unwrap_near(angle: f64, reference: f64) -> f64 {
    angle + TAU * ((reference - angle) / TAU).round()
}

/// Wraps an angle difference into `(-pi, pi]`.
#[inline]
pub fn wrap_pi(angle: f64) -> f64 {
    let w = angle.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

pub fn hds_from_spinor(p: &SpinorState, hint: Option<&HdsState>) -> Result<HdsMapping> {
    p.check_normalized()?;
    let na = p.psi_a.norm_sqr();
    let nb = p.psi_b.norm_sqr();
    let alpha = ((na - nb) / (na + nb)).clamp(-1.0, 1.0);

    let a_vanishes = p.psi_a.norm() <= POLE_MODULUS;
    let b_vanishes = p.psi_b.norm() <= POLE_MODULUS;
    let hint_delta = hint.map_or(0.0, |h| h.delta);

    let (mut delta, mut theta, degenerate) = if b_vanishes {
        (hint_delta, p.psi_a.arg(), true)
    } else if a_vanishes {
        (hint_delta, p.psi_b.arg() - hint_delta, true)
    } else {
        let theta = p.psi_a.arg();
        (p.psi_b.arg() - theta, theta, false)
    };

    match hint {
        Some(h) => {
            if !degenerate {
                delta = unwrap_near(delta, h.delta);
            }
            theta = unwrap_near(theta, h.theta_overall);
        }
        None => {
            // principal range for delta: (-pi, pi]
            if !degenerate {
                delta = wrap_pi(delta);
            }
        }
    }

    Ok(HdsMapping { state: HdsState::new(alpha, delta, theta), degenerate })
}

pub fn bloch_coords(s: &HdsState) -> Result<BlochCoords> {
    s.check_alpha()?;
    Ok(BlochCoords {
        theta: s.alpha.clamp(-1.0, 1.0).acos(),
        phi: s.theta_overall + s.delta / 2.0,
    })
}
