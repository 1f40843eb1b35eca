//! Decay-envelope fits by Levenberg-Marquardt.
//!
//! Models are `A·cos(ωt + φ)·E(t/τc) + c` (oscillating) or `A·E(t/τc) + c`
//! with `E(x) = exp(−x²)` or `exp(−x)`. `τc` is fitted as `ln τc`.
//!
//! Initialisation: offset from the mean of the last quarter of the data,
//! frequency and phase from the peak of the periodogram of the detrended data,
//! `τc` from the first time the upper envelope `max_{j≥i} |y_j − c|` drops
//! below `1/e` of its starting value, amplitude from the data range. A fixed
//! list of perturbed starts is then tried and the lowest residual kept.

use std::f64::consts::{PI, TAU};

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::storage::Owned;
use nalgebra::{DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::montecarlo::SignalCurve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Envelope {
    Gaussian,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FitModel {
    pub envelope: Envelope,
    pub oscillating: bool,
}

impl FitModel {
    /// `A·cos(ωt + φ)·exp(−(t/τc)²) + c`.
    pub const GAUSSIAN_ENVELOPE: FitModel = FitModel {
        envelope: Envelope::Gaussian,
        oscillating: true,
    };
    /// `A·exp(−(t/τc)²) + c`, for echo-type decays without fringes.
    pub const GAUSSIAN_DECAY: FitModel = FitModel {
        envelope: Envelope::Gaussian,
        oscillating: false,
    };
    /// `A·exp(−t/τc) + c`.
    pub const PLAIN_EXPONENTIAL: FitModel = FitModel {
        envelope: Envelope::Exponential,
        oscillating: false,
    };

    fn n_params(self) -> usize {
        if self.oscillating {
            5
        } else {
            3
        }
    }

    fn envelope(self, x: f64) -> (f64, f64) {
        // value and d/du where x = t/τc, u = ln τc
        match self.envelope {
            Envelope::Gaussian => {
                let e = (-x * x).exp();
                (e, 2.0 * x * x * e)
            }
            Envelope::Exponential => {
                let e = (-x).exp();
                (e, x * e)
            }
        }
    }

    /// Model value and gradient. Parameter order: `[A, u, c]` or `[A, u, c, ω, φ]`.
    fn eval(self, p: &[f64], t: f64, grad: &mut [f64]) -> f64 {
        let tau_c = p[1].exp();
        let (e, de_du) = self.envelope(t / tau_c);
        if self.oscillating {
            let arg = p[3] * t + p[4];
            let (s, c) = arg.sin_cos();
            grad[0] = c * e;
            grad[1] = p[0] * c * de_du;
            grad[2] = 1.0;
            grad[3] = -p[0] * s * e * t;
            grad[4] = -p[0] * s * e;
            p[0] * c * e + p[2]
        } else {
            grad[0] = e;
            grad[1] = p[0] * de_du;
            grad[2] = 1.0;
            p[0] * e + p[2]
        }
    }

    /// Model curve for given fit parameters.
    pub fn evaluate(self, fit: &DecayFit, t: f64) -> f64 {
        let x = t / fit.tau_c;
        let e = self.envelope(x).0;
        if self.oscillating {
            fit.amplitude * (fit.frequency * t + fit.phase).cos() * e + fit.offset
        } else {
            fit.amplitude * e + fit.offset
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub tau_c: f64,
    pub tau_c_err: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// Angular frequency; zero for non-oscillating models.
    pub frequency: f64,
    pub phase: f64,
    /// SSR / SST.
    pub residual_norm: f64,
    pub evaluations: usize,
}

impl DecayFit {
    /// `[τc − σ, τc + σ]`.
    pub fn interval(&self) -> (f64, f64) {
        (self.tau_c - self.tau_c_err, self.tau_c + self.tau_c_err)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Solver patience, in multiples of the parameter count.
    pub max_iterations: usize,
    pub restarts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            restarts: 12,
        }
    }
}

#[derive(Clone)]
struct Problem<'a> {
    model: FitModel,
    t: &'a [f64],
    y: &'a [f64],
    w: &'a [f64],
    p: DVector<f64>,
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.p.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let mut g = [0.0; 5];
        let r = DVector::from_iterator(
            self.t.len(),
            (0..self.t.len()).map(|i| (self.y[i] - self.model.eval(self.p.as_slice(), self.t[i], &mut g)) * self.w[i]),
        );
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let k = self.model.n_params();
        let mut jac = DMatrix::zeros(self.t.len(), k);
        let mut g = [0.0; 5];
        for i in 0..self.t.len() {
            self.model.eval(self.p.as_slice(), self.t[i], &mut g);
            for a in 0..k {
                jac[(i, a)] = -g[a] * self.w[i];
            }
        }
        jac.iter().all(|v| v.is_finite()).then_some(jac)
    }
}

fn periodogram_peak(t: &[f64], y: &[f64], offset: f64) -> (f64, f64, f64) {
    let span = t[t.len() - 1] - t[0];
    let n = t.len();
    let dt_min = t.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let omega_max = PI / dt_min;
    let d_omega = TAU / span / 8.0;
    let count = ((omega_max / d_omega) as usize).clamp(n, 20 * n);
    let mut best = (0.0, 0.0, 0.0);
    for j in 1..=count {
        let omega = d_omega * j as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (&ti, &yi) in t.iter().zip(y) {
            let (s, c) = (omega * ti).sin_cos();
            re += (yi - offset) * c;
            im -= (yi - offset) * s;
        }
        let power = re * re + im * im;
        if power > best.0 {
            best = (power, omega, im.atan2(re));
        }
    }
    (best.1, best.2, best.0.sqrt())
}

fn initial_guess(model: FitModel, t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let tail = &y[n - (n / 4).max(1)..];
    let offset = tail.iter().sum::<f64>() / tail.len() as f64;
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));

    let mut env = vec![0.0; n];
    let mut running: f64 = 0.0;
    for i in (0..n).rev() {
        running = running.max((y[i] - offset).abs());
        env[i] = running;
    }
    let span = t[n - 1] - t[0];
    let threshold = env[0] / std::f64::consts::E;
    let tau_c = env
        .iter()
        .position(|&e| e < threshold)
        .map(|i| (t[i] - t[0]).max(t[i]))
        .filter(|&x| x > 0.0)
        .unwrap_or(2.0 * span.max(1e-12));

    if model.oscillating {
        let (omega, phase, _) = periodogram_peak(t, y, offset);
        let amp = 0.5 * (hi - lo);
        vec![amp, tau_c.ln(), offset, omega, phase]
    } else {
        vec![y[0] - offset, tau_c.ln(), offset]
    }
}

fn starts(model: FitModel, base: &[f64], count: usize) -> Vec<Vec<f64>> {
    let mut out = vec![base.to_vec()];
    let tau_scales = [0.5, 2.0, 0.25, 4.0];
    let freq_scales = [1.0, 0.5, 2.0];
    'outer: for &fs in &freq_scales {
        for &ts in &tau_scales {
            for flip in [false, true] {
                if out.len() > count {
                    break 'outer;
                }
                let mut p = base.to_vec();
                p[1] += f64::ln(ts);
                if model.oscillating {
                    p[3] *= fs;
                    if flip {
                        p[4] += PI;
                    }
                } else if flip {
                    continue;
                }
                out.push(p);
            }
        }
    }
    out
}

/// Fits `model` to `(t, y)`, optionally weighted by `1/σ`.
pub fn fit_series(t: &[f64], y: &[f64], sigma: Option<&[f64]>, model: FitModel, opts: FitOptions) -> Result<DecayFit> {
    if t.len() != y.len() {
        return Err(Error::Fit(format!("{} times but {} values", t.len(), y.len())));
    }
    if t.len() < 6 {
        return Err(Error::Fit(format!("need at least 6 points, got {}", t.len())));
    }
    if t.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite data".into()));
    }
    if t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Fit("times must be strictly increasing".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if sst <= 1e-24 * y.len() as f64 * (1.0 + mean * mean) {
        return Err(Error::Fit("data are flat; no decay to fit".into()));
    }
    let w: Vec<f64> = match sigma {
        Some(s) if s.len() == y.len() && s.iter().all(|&v| v > 0.0 && v.is_finite()) => {
            s.iter().map(|v| 1.0 / v).collect()
        }
        Some(s) if s.len() != y.len() => return Err(Error::Fit("stderr column length mismatch".into())),
        _ => vec![1.0; y.len()],
    };
    let base = initial_guess(model, t, y);
    let solver = LevenbergMarquardt::new().with_patience(opts.max_iterations);

    let mut best: Option<(Problem, f64)> = None;
    let mut evaluations = 0;
    for start in starts(model, &base, opts.restarts) {
        let problem = Problem {
            model,
            t,
            y,
            w: &w,
            p: DVector::from_vec(start),
        };
        let (solved, report) = solver.minimize(problem);
        evaluations += report.number_of_evaluations;
        let ssr = 2.0 * report.objective_function;
        let usable = ssr.is_finite() && solved.p.iter().all(|v| v.is_finite());
        if usable && best.as_ref().is_none_or(|b| ssr < b.1) {
            best = Some((solved, ssr));
        }
    }
    let Some((solved, ssr)) = best else {
        return Err(Error::Fit(format!(
            "no start converged after {} restarts",
            opts.restarts
        )));
    };

    let k = model.n_params();
    let dof = (t.len() - k).max(1) as f64;
    let jac = solved
        .jacobian()
        .ok_or_else(|| Error::Fit("non-finite Jacobian at the optimum".into()))?;
    let var_u = (jac.transpose() * &jac)
        .try_inverse()
        .map(|inv| inv[(1, 1)] * ssr / dof)
        .filter(|v| v.is_finite() && *v >= 0.0)
        .ok_or_else(|| Error::Fit("singular normal matrix at the optimum".into()))?;
    let mut p = solved.p.as_slice().to_vec();
    let tau_c = p[1].exp();

    let (frequency, phase) = if model.oscillating {
        if p[3] < 0.0 {
            p[3] = -p[3];
            p[4] = -p[4];
        }
        if p[0] < 0.0 {
            p[0] = -p[0];
            p[4] += PI;
        }
        (p[3], (p[4] + PI).rem_euclid(TAU) - PI)
    } else {
        (0.0, 0.0)
    };

    Ok(DecayFit {
        tau_c,
        tau_c_err: tau_c * var_u.sqrt(),
        amplitude: p[0],
        offset: p[2],
        frequency,
        phase,
        residual_norm: ssr_unweighted(model, &p, t, y) / sst,
        evaluations,
    })
}

fn ssr_unweighted(model: FitModel, p: &[f64], t: &[f64], y: &[f64]) -> f64 {
    let mut g = [0.0; 5];
    t.iter()
        .zip(y)
        .map(|(&ti, &yi)| (yi - model.eval(p, ti, &mut g)).powi(2))
        .sum()
}

/// Fits a signal curve against its delays, weighting by the standard errors
/// when all of them are positive.
pub fn fit_decay(curve: &SignalCurve, model: FitModel) -> Result<DecayFit> {
    let sigma = curve
        .stderrs
        .iter()
        .all(|&s| s > 0.0)
        .then_some(curve.stderrs.as_slice());
    fit_series(&curve.taus, &curve.means, sigma, model, FitOptions::default())
}
