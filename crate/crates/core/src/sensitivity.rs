//! DC field sensitivity of the Hahn-Ramsey readout under photon shot noise.
//!
//! Fluorescence per shot is `β(1 + α⟨σz⟩)` photons with shot noise `√β`, so a
//! slope `∂⟨σz⟩/∂ε` gives a minimum field `1/(α√β · 2πγₑ · |slope|)`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use crate::analytic::{hahn_echo_signal, hahn_ramsey_signal, hr_signal_derivative, ramsey_signal_tilted, BiasParams};
use crate::error::{ensure_finite, invalid, Error, Result};
use crate::fit::{fit_series, FitModel, FitOptions};
use crate::noise::{f1, NoiseParams};

/// NV electron gyromagnetic ratio, 2.8025 MHz/G, i.e. cycles per µs per gauss.
pub const GAMMA_E_DEFAULT: f64 = 2.8025;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReadoutModel {
    /// Mean photons per shot for `|↑⟩`.
    pub u: f64,
    /// Mean photons per shot for `|↓⟩`.
    pub v: f64,
}

impl ReadoutModel {
    pub fn new(u: f64, v: f64) -> Result<Self> {
        ensure_finite("u", u)?;
        ensure_finite("v", v)?;
        if v < 0.0 || u <= v {
            return Err(invalid("readout", format!("need u > v ≥ 0, got u={u}, v={v}")));
        }
        Ok(ReadoutModel { u, v })
    }

    /// Readout with the given contrast and mean count.
    pub fn from_contrast(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) || !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid(
                "readout",
                format!("need 0 < α ≤ 1 and β > 0, got α={alpha}, β={beta}"),
            ));
        }
        Self::new(beta * (1.0 + alpha), beta * (1.0 - alpha))
    }

    pub fn alpha(&self) -> f64 {
        (self.u - self.v) / (self.u + self.v)
    }

    pub fn beta(&self) -> f64 {
        0.5 * (self.u + self.v)
    }
}

/// `1/(3π γₑ τ α √β)`.
pub fn min_detectable_field(readout: &ReadoutModel, tau: f64, gamma_e: f64) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) || !(gamma_e > 0.0 && gamma_e.is_finite()) {
        return Err(invalid("tau/gamma_e", "must be positive"));
    }
    Ok(1.0 / (3.0 * PI * gamma_e * tau * readout.alpha() * readout.beta().sqrt()))
}

/// Shot-noise limited field from a slope `∂⟨σz⟩/∂ε`.
pub fn field_from_slope(readout: &ReadoutModel, slope: f64, gamma_e: f64) -> f64 {
    1.0 / (readout.alpha() * readout.beta().sqrt() * 2.0 * PI * gamma_e * slope.abs())
}

/// Golden-section maximisation on `[a, b]`.
fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Grid search over `grid` followed by golden refinement around the best node.
/// Ties go to the earlier node; the refined point is kept only if it is better.
fn grid_then_refine<F: Fn(f64) -> f64>(f: F, grid: &[f64]) -> (f64, f64) {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (k, &x) in grid.iter().enumerate() {
        let v = f(x);
        if v > best_val {
            best = k;
            best_val = v;
        }
    }
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    if hi > lo {
        let (x, v) = golden_max(&f, lo, hi, 80);
        if v > best_val {
            return (x, v);
        }
    }
    (grid[best], best_val)
}

/// Largest `|∂⟨σz⟩/∂ε|` over one period of the bias; returns `(ε, slope)`.
pub fn max_bias_slope(theta: f64, detuning: f64, noise: &NoiseParams, tau: f64) -> (f64, f64) {
    let period = 2.0 * PI / tau;
    let grid: Vec<f64> = (0..=720).map(|k| -0.5 * period + period * k as f64 / 720.0).collect();
    grid_then_refine(
        |e| hr_signal_derivative(theta, detuning, &BiasParams { epsilon: e }, noise, tau).abs(),
        &grid,
    )
}

/// Tilt maximising `max_τ |∂⟨σz⟩/∂ε|` at `ε = 0` over `θ ∈ (0, π/2]`.
pub fn optimal_theta(noise: &NoiseParams, detuning: f64, tau_grid: &[f64]) -> Result<f64> {
    if tau_grid.is_empty() || tau_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(invalid("tau_grid", "needs positive delays"));
    }
    let objective = |theta: f64| {
        tau_grid
            .iter()
            .map(|&tau| hr_signal_derivative(theta, detuning, &BiasParams::zero(), noise, tau).abs())
            .fold(0.0, f64::max)
    };
    let grid: Vec<f64> = (1..=400).map(|k| FRAC_PI_2 * k as f64 / 400.0).collect();
    Ok(grid_then_refine(objective, &grid).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityResult {
    /// Per-shot minimum field at the optimal delay.
    pub delta_b_min: f64,
    pub optimal_tau: f64,
    pub optimal_theta: f64,
    /// `δB_min·√(2τ)`: field per √bandwidth at the optimal delay.
    pub eta: f64,
    /// Hahn-Ramsey decay constant (total sequence time) from a Gaussian-envelope fit.
    pub t2_hr: f64,
    /// `1/(3π γₑ α √β √T₂,HR)`, the decay-limited scaling form.
    pub eta_scaling: f64,
    pub bias: f64,
    /// Best `δB_min·√τ` of a Ramsey sequence with the same tilted pulses.
    pub eta_ramsey: f64,
    pub optimal_tau_ramsey: f64,
    /// `eta_ramsey / eta`; above 1 when the Hahn-Ramsey readout is the better one.
    pub hr_advantage: f64,
}

/// Largest `|∂⟨σz⟩/∂ε|` of a tilted Ramsey, where a bias simply adds to `Δ`.
///
/// The fringe is `A + e^{−F₁}(B cos φ + C sin φ)` in `φ = (Δ+ε)τ`, so the
/// steepest slope is `τ e^{−F₁} √(B² + C²)` whatever `Δ` is.
pub fn ramsey_max_bias_slope(theta: f64, noise: &NoiseParams, tau: f64) -> Result<f64> {
    let silent = NoiseParams::none();
    let z = |phase: f64| ramsey_signal_tilted(theta, phase / tau, &silent, tau);
    let (z0, z1, z2) = (z(0.0)?, z(FRAC_PI_2)?, z(PI)?);
    let (b, c) = (0.5 * (z0 - z2), z1 - 0.5 * (z0 + z2));
    Ok(tau * (-f1(noise, tau)).exp() * b.hypot(c))
}

/// Delay at which the echo envelope has fallen to about 2%.
fn decay_horizon(noise: &NoiseParams) -> f64 {
    let mut tau = 0.1 / noise.lambda();
    while hahn_echo_signal(noise, tau) > 0.02 && tau < 1e6 / noise.lambda() {
        tau *= 1.25;
    }
    tau
}

/// Hahn-Ramsey decay constant against total sequence time `2τ`.
pub fn hahn_ramsey_decay_time(theta: f64, detuning: f64, noise: &NoiseParams) -> Result<f64> {
    if noise.is_silent() || noise.gamma() == 0.0 {
        return Err(Error::Fit("no dephasing: decay time is infinite".into()));
    }
    let horizon = decay_horizon(noise);
    let n = 160;
    let taus: Vec<f64> = (0..n).map(|k| horizon * k as f64 / (n - 1) as f64).collect();
    let t: Vec<f64> = taus.iter().map(|x| 2.0 * x).collect();
    let y: Vec<f64> = taus
        .iter()
        .map(|&x| hahn_ramsey_signal(theta, detuning, noise, x))
        .collect();
    let model = if detuning == 0.0 {
        FitModel::GAUSSIAN_DECAY
    } else {
        FitModel::GAUSSIAN_ENVELOPE
    };
    Ok(fit_series(&t, &y, None, model, FitOptions::default())?.tau_c)
}

pub fn sensitivity(
    noise: &NoiseParams,
    readout: &ReadoutModel,
    theta: f64,
    detuning: f64,
    gamma_e: f64,
) -> Result<SensitivityResult> {
    ensure_finite("theta", theta)?;
    ensure_finite("detuning", detuning)?;
    if !(gamma_e > 0.0 && gamma_e.is_finite()) {
        return Err(invalid("gamma_e", "must be positive"));
    }
    let t2_hr = hahn_ramsey_decay_time(theta, detuning, noise)?;
    let horizon = decay_horizon(noise);
    let taus: Vec<f64> = (0..=240)
        .map(|k| horizon * 1e-3 * 1000f64.powf(k as f64 / 240.0))
        .collect();
    let per_root_time = |tau: f64| max_bias_slope(theta, detuning, noise, tau).1 / (2.0 * tau).sqrt();
    let (tau_opt, _) = grid_then_refine(per_root_time, &taus);
    let (bias, slope) = max_bias_slope(theta, detuning, noise, tau_opt);
    let delta_b_min = field_from_slope(readout, slope, gamma_e);
    let eta = delta_b_min * (2.0 * tau_opt).sqrt();

    let ramsey_taus: Vec<f64> = taus.iter().map(|t| 2.0 * t).collect();
    let ramsey_per_root_time = |tau: f64| ramsey_max_bias_slope(theta, noise, tau).map_or(0.0, |s| s / tau.sqrt());
    let (tau_ramsey, best) = grid_then_refine(ramsey_per_root_time, &ramsey_taus);
    let eta_ramsey = field_from_slope(readout, best, gamma_e);
    Ok(SensitivityResult {
        delta_b_min,
        optimal_tau: tau_opt,
        optimal_theta: optimal_theta(noise, detuning, &[tau_opt])?,
        eta,
        t2_hr,
        eta_scaling: 1.0 / (3.0 * PI * gamma_e * readout.alpha() * readout.beta().sqrt() * t2_hr.sqrt()),
        bias,
        eta_ramsey,
        optimal_tau_ramsey: tau_ramsey,
        hr_advantage: eta_ramsey / eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn fig4() -> NoiseParams {
        NoiseParams::ou(2.5, 2.0 * PI * 0.1).unwrap()
    }

    #[test]
    fn unit_inputs() {
        let r = ReadoutModel::from_contrast(1.0, 1.0).unwrap();
        assert_relative_eq!(
            min_detectable_field(&r, 1.0, 1.0).unwrap(),
            1.0 / (3.0 * PI),
            max_relative = 1e-12
        );
        let r2 = ReadoutModel::from_contrast(1.0, 2.0).unwrap();
        let ratio = min_detectable_field(&r, 1.0, 1.0).unwrap() / min_detectable_field(&r2, 1.0, 1.0).unwrap();
        assert_relative_eq!(ratio, 2f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn readout_validation() {
        assert!(ReadoutModel::new(1.0, 1.0).is_err());
        assert!(ReadoutModel::new(1.0, -0.1).is_err());
        assert!(ReadoutModel::from_contrast(0.0, 1.0).is_err());
        let r = ReadoutModel::new(0.03, 0.02).unwrap();
        assert_relative_eq!(r.alpha(), 0.2, max_relative = 1e-12);
        assert_relative_eq!(r.beta(), 0.025, max_relative = 1e-12);
        assert!(min_detectable_field(&r, 0.0, 1.0).is_err());
    }

    #[test]
    fn monotone_in_tau_alpha_beta() {
        let base = ReadoutModel::from_contrast(0.3, 0.05).unwrap();
        let f = |r: &ReadoutModel, t: f64| min_detectable_field(r, t, GAMMA_E_DEFAULT).unwrap();
        assert!(f(&base, 2.0) < f(&base, 1.0));
        assert!(f(&ReadoutModel::from_contrast(0.4, 0.05).unwrap(), 1.0) < f(&base, 1.0));
        assert!(f(&ReadoutModel::from_contrast(0.3, 0.06).unwrap(), 1.0) < f(&base, 1.0));
    }

    #[test]
    fn optimal_theta_noiseless_is_interior() {
        let theta = optimal_theta(&NoiseParams::none(), 1.0, &[0.1]).unwrap();
        assert!(theta > 0.05 && theta < FRAC_PI_2 - 0.05);
        // cos³θ sin²θ peaks at arctan √(2/3)
        assert_abs_diff_eq!(theta, (2.0f64 / 3.0).sqrt().atan(), epsilon = 1e-6);
    }

    #[test]
    fn optimal_theta_beats_grid() {
        let p = fig4();
        let taus = [0.2, 0.4, 0.8];
        let theta = optimal_theta(&p, 2.0 * PI, &taus).unwrap();
        let obj = |th: f64| {
            taus.iter()
                .map(|&t| hr_signal_derivative(th, 2.0 * PI, &BiasParams::zero(), &p, t).abs())
                .fold(0.0, f64::max)
        };
        for k in 1..=50 {
            assert!(obj(theta) >= obj(FRAC_PI_2 * k as f64 / 50.0));
        }
        assert!((theta - 0.2 * PI).abs() <= 0.05 * PI);
    }

    #[test]
    fn sensitivity_scaling_with_gamma() {
        let readout = ReadoutModel::from_contrast(0.3, 0.05).unwrap();
        let slow = NoiseParams::ou(10.0, 0.5).unwrap();
        let fast = slow.with_gamma(1.0).unwrap();
        let a = sensitivity(&slow, &readout, 0.2 * PI, 2.0, GAMMA_E_DEFAULT).unwrap();
        let b = sensitivity(&fast, &readout, 0.2 * PI, 2.0, GAMMA_E_DEFAULT).unwrap();
        let ratio = (a.t2_hr / b.t2_hr).sqrt();
        assert!((ratio - 2.0).abs() < 0.3, "ratio {ratio}");
        assert!(a.delta_b_min > 0.0 && a.eta > 0.0 && a.optimal_tau > 0.0 && a.optimal_theta > 0.0);
    }

    #[test]
    fn ramsey_slope_at_right_angle() {
        let p = fig4();
        let tau = 0.7;
        let want = tau * (-f1(&p, tau)).exp();
        assert_relative_eq!(
            ramsey_max_bias_slope(FRAC_PI_2, &p, tau).unwrap(),
            want,
            max_relative = 1e-12
        );
        // brute force over the bias with a central difference
        let theta = 0.3 * PI;
        let h = 1e-6;
        let numeric = (0..2000)
            .map(|k| {
                let d = 2.0 * PI / tau * k as f64 / 2000.0;
                let up = ramsey_signal_tilted(theta, d + h, &p, tau).unwrap();
                let dn = ramsey_signal_tilted(theta, d - h, &p, tau).unwrap();
                ((up - dn) / (2.0 * h)).abs()
            })
            .fold(0.0, f64::max);
        assert_relative_eq!(
            ramsey_max_bias_slope(theta, &p, tau).unwrap(),
            numeric,
            max_relative = 1e-5
        );
    }

    #[test]
    fn eta_depends_on_counts_only_through_alpha_beta() {
        let p = fig4();
        let r1 = ReadoutModel::new(0.03, 0.02).unwrap();
        let r2 = ReadoutModel::from_contrast(r1.alpha(), r1.beta()).unwrap();
        let a = sensitivity(&p, &r1, 0.2 * PI, 2.0 * PI, GAMMA_E_DEFAULT).unwrap();
        let b = sensitivity(&p, &r2, 0.2 * PI, 2.0 * PI, GAMMA_E_DEFAULT).unwrap();
        assert_relative_eq!(a.eta, b.eta, max_relative = 1e-9);
    }
}
