//! Closed-form noise-averaged signals under Gaussian (OU) dephasing.
//!
//! All signals are `⟨σz⟩ ∈ [−1, 1]` at readout. The Hahn-Ramsey expressions
//! are the spin-½ forms (which peak at ½) multiplied by two. For Hahn-type
//! sequences `tau` is the length of each of the two delays.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{ensure_finite, Result};
use crate::noise::{dephasing_constants, f1, FilterKind, NoiseParams};
use crate::spin::Propagate;
use crate::spin::{propagate, PulseSequence, SequenceKind, SpinState};

/// Additional detuning `ε` produced by a static field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasParams {
    pub epsilon: f64,
}

impl BiasParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        ensure_finite("epsilon", epsilon)?;
        Ok(BiasParams { epsilon })
    }

    pub fn zero() -> Self {
        BiasParams { epsilon: 0.0 }
    }

    /// `ε = 2π γₑ B` with `γₑ` in cycles per time unit per field unit.
    pub fn from_field(field: f64, gamma_e: f64) -> Result<Self> {
        Self::new(2.0 * PI * gamma_e * field)
    }
}

/// The four weights of the Hahn-Ramsey signal in `⟨σz⟩` normalisation:
/// constant, Ramsey-like, `cos(Δτ)` and `cos(2Δτ)`.
pub fn component_weights(theta: f64) -> [f64; 4] {
    let (b, a) = theta.sin_cos();
    let (a2, b2) = (a * a, b * b);
    [
        a2 * a2 * (1.0 - 2.0 * b2),
        a2 * b2 * b2,
        -4.0 * a2 * a2 * b2,
        b2 * b2 * (a2 + 1.0),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterExponents {
    pub ramsey_like: f64,
    pub half_period: f64,
    pub hahn_like: f64,
}

impl FilterExponents {
    pub fn closed_form(noise: &NoiseParams, tau: f64) -> Self {
        FilterExponents {
            ramsey_like: FilterKind::RamseyLike.closed_form(noise, tau),
            half_period: FilterKind::HalfPeriod.closed_form(noise, tau),
            hahn_like: FilterKind::HahnLike.closed_form(noise, tau),
        }
    }
}

/// Hahn-Ramsey signal split into its components at one `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalComponents {
    pub constant_term: f64,
    pub ramsey_like_term: f64,
    pub cos_delta_term: f64,
    pub cos_2delta_term: f64,
    pub weights: [f64; 4],
    pub exponents: FilterExponents,
}

impl SignalComponents {
    pub fn total(&self) -> f64 {
        self.constant_term + self.ramsey_like_term + self.cos_delta_term + self.cos_2delta_term
    }
}

pub fn signal_components(theta: f64, detuning: f64, noise: &NoiseParams, tau: f64) -> SignalComponents {
    let weights = component_weights(theta);
    let exponents = FilterExponents::closed_form(noise, tau);
    SignalComponents {
        constant_term: weights[0],
        ramsey_like_term: weights[1] * (-exponents.ramsey_like).exp(),
        cos_delta_term: weights[2] * (detuning * tau).cos() * (-exponents.half_period).exp(),
        cos_2delta_term: weights[3] * (2.0 * detuning * tau).cos() * (-exponents.hahn_like).exp(),
        weights,
        exponents,
    }
}

/// Hahn-Ramsey signal after a total evolution time `2τ`.
pub fn hahn_ramsey_signal(theta: f64, detuning: f64, noise: &NoiseParams, tau: f64) -> f64 {
    let (b, a) = theta.sin_cos();
    let (a2, b2) = (a * a, b * b);
    let c = dephasing_constants(noise, tau);
    let spin_half = 0.5 * a2 * a2 * (1.0 - 2.0 * b2) + 0.5 * a2 * b2 * b2 * (-2.0 * (c.f1 + c.delta_f)).exp()
        - 2.0 * a2 * a2 * b2 * (detuning * tau).cos() * (-c.f1).exp()
        + 0.5 * b2 * b2 * (a2 + 1.0) * (2.0 * detuning * tau).cos() * (-2.0 * (c.f1 - c.delta_f)).exp();
    2.0 * spin_half
}

/// Resonant Hahn echo: `exp(−2(F₁ − δF))`.
pub fn hahn_echo_signal(noise: &NoiseParams, tau: f64) -> f64 {
    (-FilterKind::HahnLike.closed_form(noise, tau)).exp()
}

/// Ramsey fringe with ideal π/2 pulses: `−cos(Δτ) e^{−F₁(τ)}`.
///
/// Both pulses are identical, so at zero delay they add up to a π pulse and
/// the spin reads out in `|↓⟩`.
pub fn ramsey_signal(detuning: f64, noise: &NoiseParams, tau: f64) -> f64 {
    -(detuning * tau).cos() * (-f1(noise, tau)).exp()
}

/// Ramsey signal for an arbitrary tilt, averaging the single delay phase.
///
/// The readout is `A + B cos φ + C sin φ` in the delay phase `φ`; Gaussian
/// averaging with variance `2F₁` multiplies the oscillating part by `e^{−F₁}`.
pub fn ramsey_signal_tilted(theta: f64, detuning: f64, noise: &NoiseParams, tau: f64) -> Result<f64> {
    let seq = PulseSequence::ramsey(theta, tau)?;
    let z = |phi: f64| -> Result<f64> { Ok(propagate(&SpinState::up(), &seq, &[phi])?.sigma_z()) };
    let (z0, z1, z2) = (z(0.0)?, z(FRAC_PI_2)?, z(PI)?);
    let offset = 0.5 * (z0 + z2);
    let cos_part = 0.5 * (z0 - z2);
    let sin_part = z1 - offset;
    let phase = detuning * tau;
    Ok(offset + (-f1(noise, tau)).exp() * (cos_part * phase.cos() + sin_part * phase.sin()))
}

/// Hahn-Ramsey signal when a bias `ε` shifts both free-evolution frequencies.
///
/// The delay phases become `(Δ + ε)τ` and `(−Δ + ε)τ`; pulse tilts are unchanged.
pub fn hr_signal_biased(theta: f64, detuning: f64, bias: &BiasParams, noise: &NoiseParams, tau: f64) -> f64 {
    let (b, a) = theta.sin_cos();
    let (a2, b2) = (a * a, b * b);
    let c = dephasing_constants(noise, tau);
    let et = bias.epsilon * tau;
    let dt = detuning * tau;
    let spin_half = 0.5 * a2 * a2 * (1.0 - 2.0 * b2)
        + 0.5 * a2 * b2 * (-2.0 * (c.f1 + c.delta_f)).exp() * (b2 * (2.0 * et).cos() - 2.0 * a * (2.0 * et).sin())
        - 2.0 * a2 * a * b2 * (-c.f1).exp() * (dt.cos() * (a * et.cos() + et.sin()))
        + 0.5 * b2 * b2 * (a2 + 1.0) * (2.0 * dt).cos() * (-2.0 * (c.f1 - c.delta_f)).exp();
    2.0 * spin_half
}

/// `∂/∂ε` of [`hr_signal_biased`].
pub fn hr_signal_derivative(theta: f64, detuning: f64, bias: &BiasParams, noise: &NoiseParams, tau: f64) -> f64 {
    let (b, a) = theta.sin_cos();
    let (a2, b2) = (a * a, b * b);
    let c = dephasing_constants(noise, tau);
    let et = bias.epsilon * tau;
    let spin_half = -2.0 * a2 * a * b2 * (-c.f1).exp() * tau * (detuning * tau).cos() * (et.cos() - a * et.sin())
        - a2 * b2 * (-2.0 * (c.f1 + c.delta_f)).exp() * tau * (2.0 * a * (2.0 * et).cos() + b2 * (2.0 * et).sin());
    2.0 * spin_half
}

/// Closed-form signal of a standard sequence; `theta` and `detuning` are ignored for the echo.
pub fn sequence_signal(kind: SequenceKind, theta: f64, detuning: f64, noise: &NoiseParams, tau: f64) -> Result<f64> {
    match kind {
        SequenceKind::Ramsey => {
            if (theta - FRAC_PI_2).abs() < 1e-15 {
                Ok(ramsey_signal(detuning, noise, tau))
            } else {
                ramsey_signal_tilted(theta, detuning, noise, tau)
            }
        }
        SequenceKind::HahnEcho => Ok(hahn_echo_signal(noise, tau)),
        SequenceKind::HahnRamsey => Ok(hahn_ramsey_signal(theta, detuning, noise, tau)),
        SequenceKind::Custom => Err(crate::error::invalid("sequence", "no closed form for custom sequences")),
    }
}
