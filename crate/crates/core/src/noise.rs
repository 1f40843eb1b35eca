//! Classical dephasing noise with exponential correlation `Γ² e^{−λ|t|}`.
//!
//! Two generators share that correlation: the Ornstein-Uhlenbeck process
//! (Gaussian, sampled with its exact transition kernel) and a compound-Poisson
//! renewal process (piecewise constant, Normal(0, Γ²) levels redrawn at rate λ).

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::io::Num;
use crate::quadrature::{self, QuadratureResult, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum NoiseKind {
    #[default]
    OrnsteinUhlenbeck,
    CompoundPoissonRenewal,
    None,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "ou" | "ornstein-uhlenbeck" => Ok(NoiseKind::OrnsteinUhlenbeck),
            "renewal" | "poisson" | "compound-poisson" => Ok(NoiseKind::CompoundPoissonRenewal),
            "none" => Ok(NoiseKind::None),
            other => Err(invalid("noise kind", format!("unknown noise kind `{other}`"))),
        }
    }
}

/// Correlation rate `λ` (1/time) and strength `Γ` (rad/time).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    lambda: f64,
    gamma: f64,
    kind: NoiseKind,
}

impl NoiseParams {
    pub fn new(lambda: f64, gamma: f64, kind: NoiseKind) -> Result<Self> {
        ensure_finite("lambda", lambda)?;
        ensure_finite("gamma", gamma)?;
        if lambda <= 0.0 {
            return Err(invalid("lambda", format!("must be positive, got {lambda}")));
        }
        if gamma < 0.0 {
            return Err(invalid("gamma", format!("must be non-negative, got {gamma}")));
        }
        Ok(NoiseParams { lambda, gamma, kind })
    }

    pub fn ou(lambda: f64, gamma: f64) -> Result<Self> {
        Self::new(lambda, gamma, NoiseKind::OrnsteinUhlenbeck)
    }

    pub fn renewal(lambda: f64, gamma: f64) -> Result<Self> {
        Self::new(lambda, gamma, NoiseKind::CompoundPoissonRenewal)
    }

    /// Noiseless parameters (`λ = 1`, `Γ = 0`).
    pub fn none() -> Self {
        NoiseParams {
            lambda: 1.0,
            gamma: 0.0,
            kind: NoiseKind::None,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Effective strength; `NoiseKind::None` always reports zero.
    pub fn gamma(&self) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            _ => self.gamma,
        }
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.lambda, gamma, self.kind)
    }

    pub fn is_silent(&self) -> bool {
        self.gamma() == 0.0
    }
}

/// `⟨F(t)F(t+dt)⟩ = Γ² e^{−λ|dt|}`.
pub fn correlation(p: &NoiseParams, dt: f64) -> f64 {
    let g = p.gamma();
    g * g * (-p.lambda * dt.abs()).exp()
}

/// `x + e^{−x} − 1`, accurate for small `x`.
fn ramp(x: f64) -> f64 {
    if x < 1e-2 {
        let mut term = x * x / 2.0;
        let mut sum = term;
        for k in 3..=8 {
            term *= -x / k as f64;
            sum += term;
        }
        sum
    } else {
        x + (-x).exp_m1()
    }
}

/// Same-interval dephasing constant `F₁(τ) = ½∬₀^τ C = (Γ²/λ²)(λτ + e^{−λτ} − 1)`.
pub fn f1(p: &NoiseParams, tau: f64) -> f64 {
    let g = p.gamma();
    let l = p.lambda;
    g * g / (l * l) * ramp(l * tau)
}

/// Cross-interval constant `δF(τ) = ½∫₀^τ∫_τ^{2τ} C = ½(Γ²/λ²)(1 − e^{−λτ})²`.
pub fn delta_f(p: &NoiseParams, tau: f64) -> f64 {
    let g = p.gamma();
    let l = p.lambda;
    let s = (-l * tau).exp_m1();
    0.5 * g * g / (l * l) * s * s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DephasingConstants {
    pub f1: f64,
    pub delta_f: f64,
}

pub fn dephasing_constants(p: &NoiseParams, tau: f64) -> DephasingConstants {
    DephasingConstants {
        f1: f1(p, tau),
        delta_f: delta_f(p, tau),
    }
}

/// The three frequency-domain filters of the Hahn-Ramsey signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterKind {
    /// `sin²(ωτ)`: the non-oscillating component, decays like a Ramsey of length 2τ.
    RamseyLike,
    /// `sin²(ωτ/2)`: the `cos(Δτ)` component.
    HalfPeriod,
    /// `sin⁴(ωτ/2)`: the `cos(2Δτ)` component, an echo filter.
    HahnLike,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [FilterKind::RamseyLike, FilterKind::HalfPeriod, FilterKind::HahnLike];

    /// Multiplier of `λΓ²/π` in front of the frequency integral.
    fn prefactor(self) -> f64 {
        match self {
            FilterKind::RamseyLike | FilterKind::HalfPeriod => 4.0,
            FilterKind::HahnLike => 16.0,
        }
    }

    /// Average of the filter numerator over a period, used for the tail.
    fn mean_numerator(self) -> f64 {
        match self {
            FilterKind::RamseyLike | FilterKind::HalfPeriod => 0.5,
            FilterKind::HahnLike => 0.375,
        }
    }

    /// Time-domain value of the exponent: `2(F₁+δF)`, `F₁` or `2(F₁−δF)`.
    pub fn closed_form(self, p: &NoiseParams, tau: f64) -> f64 {
        let c = dephasing_constants(p, tau);
        match self {
            FilterKind::RamseyLike => 2.0 * (c.f1 + c.delta_f),
            FilterKind::HalfPeriod => c.f1,
            FilterKind::HahnLike => 2.0 * (c.f1 - c.delta_f),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::RamseyLike => "ramsey_like",
            FilterKind::HalfPeriod => "half_period",
            FilterKind::HahnLike => "hahn_like",
        }
    }
}

/// `sin(ωτ)/ω`, finite at ω = 0.
fn sin_over(omega: f64, tau: f64) -> f64 {
    let x = omega * tau;
    if x.abs() < 1e-8 {
        tau * (1.0 - x * x / 6.0)
    } else {
        x.sin() / omega
    }
}

/// `∫_W^∞ dω / (ω²(ω² + λ²))` for `W > λ`.
fn lorentzian_tail(lambda: f64, w: f64) -> f64 {
    let r = (lambda / w).powi(2);
    let mut sum = 0.0;
    let mut rk = 1.0;
    for k in 0..12 {
        sum += rk / (2 * k + 3) as f64;
        rk *= -r;
    }
    sum / w.powi(3)
}

/// Truncation frequency of the filter integrals.
pub fn cutoff_frequency(lambda: f64, tau: f64) -> f64 {
    (50.0 * lambda).max(50.0 / tau)
}

/// `∫₀^∞ N(ωτ) / (ω²(ω² + λ²)) dω` for the filter numerator `N` of `kind`.
///
/// Integrates adaptively up to [`cutoff_frequency`] and adds the tail with
/// the numerator replaced by its period average.
pub fn filter_integral(kind: FilterKind, lambda: f64, tau: f64, abs_tol: f64) -> Result<QuadratureResult> {
    ensure_finite("tau", tau)?;
    if tau < 0.0 {
        return Err(invalid("tau", format!("must be non-negative, got {tau}")));
    }
    if tau == 0.0 {
        return Ok(QuadratureResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let l2 = lambda * lambda;
    let integrand = move |w: f64| -> f64 {
        let denom = w * w + l2;
        match kind {
            FilterKind::RamseyLike => sin_over(w, tau).powi(2) / denom,
            FilterKind::HalfPeriod => sin_over(w, 0.5 * tau).powi(2) / denom,
            FilterKind::HahnLike => {
                let s = (0.5 * w * tau).sin();
                sin_over(w, 0.5 * tau).powi(2) * s * s / denom
            }
        }
    };

    let w_max = cutoff_frequency(lambda, tau);
    let period = PI / tau;
    let pieces = ((w_max / period).ceil() as usize).min(20_000);
    let breaks: Vec<f64> = (1..pieces).map(|k| k as f64 * w_max / pieces as f64).collect();

    let tol = Tolerance {
        abs: abs_tol,
        rel: 1e-10,
        max_intervals: 200_000,
    };
    let body = quadrature::integrate_with_breaks(integrand, 0.0, w_max, &breaks, tol)?;
    let tail = kind.mean_numerator() * lorentzian_tail(lambda, w_max);
    Ok(QuadratureResult {
        value: body.value + tail,
        error: body.error,
        evaluations: body.evaluations,
    })
}

/// Decay exponent of one filter, from the frequency-domain integral.
///
/// Equals `FilterKind::closed_form` up to quadrature error: about 1e-10
/// relative, with an absolute floor of 1e-16 on the exponent.
pub fn chi_filter(kind: FilterKind, p: &NoiseParams, tau: f64) -> Result<f64> {
    let g = p.gamma();
    if g == 0.0 {
        return Ok(0.0);
    }
    let scale = kind.prefactor() * p.lambda * g * g / PI;
    let r = filter_integral(kind, p.lambda, tau, 1e-16 / scale)?;
    Ok(scale * r.value)
}

#[derive(Debug, Clone, PartialEq)]
enum Profile {
    /// Linear interpolation between samples (trapezoidal integral).
    Sampled { prefix: Vec<f64> },
    /// Exact piecewise-constant path: `levels[k]` holds from `starts[k]` on.
    PiecewiseConstant {
        starts: Vec<f64>,
        levels: Vec<f64>,
        prefix: Vec<f64>,
    },
}

/// Sampled noise path `f(t)` on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrajectory {
    grid: Vec<f64>,
    values: Vec<f64>,
    seed: u64,
    stream: u64,
    profile: Profile,
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("grid", "must contain at least one time"));
    }
    for (i, t) in grid.iter().enumerate() {
        if !t.is_finite() {
            return Err(invalid("grid", format!("non-finite time at index {i}")));
        }
        if i > 0 && *t <= grid[i - 1] {
            return Err(Error::NonMonotoneGrid { index: i });
        }
    }
    Ok(())
}

fn trapezoid_prefix(grid: &[f64], values: &[f64]) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    prefix.push(0.0);
    for k in 1..grid.len() {
        acc += 0.5 * (values[k] + values[k - 1]) * (grid[k] - grid[k - 1]);
        prefix.push(acc);
    }
    prefix
}

impl NoiseTrajectory {
    /// A sampled trajectory integrated with the trapezoidal rule.
    pub fn from_samples(grid: Vec<f64>, values: Vec<f64>, seed: u64) -> Result<Self> {
        validate_grid(&grid)?;
        if grid.len() != values.len() {
            return Err(Error::Contract(format!(
                "grid has {} points but {} values were supplied",
                grid.len(),
                values.len()
            )));
        }
        let prefix = trapezoid_prefix(&grid, &values);
        Ok(NoiseTrajectory {
            grid,
            values,
            seed,
            stream: 0,
            profile: Profile::Sampled { prefix },
        })
    }

    fn piecewise(grid: Vec<f64>, starts: Vec<f64>, levels: Vec<f64>, seed: u64, stream: u64) -> Self {
        let mut prefix = Vec::with_capacity(starts.len());
        let mut acc = 0.0;
        prefix.push(0.0);
        for k in 1..starts.len() {
            acc += levels[k - 1] * (starts[k] - starts[k - 1]);
            prefix.push(acc);
        }
        let values = grid
            .iter()
            .map(|&t| levels[starts.partition_point(|&s| s <= t).saturating_sub(1)])
            .collect();
        NoiseTrajectory {
            grid,
            values,
            seed,
            stream,
            profile: Profile::PiecewiseConstant { starts, levels, prefix },
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn start(&self) -> f64 {
        self.grid[0]
    }

    pub fn end(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    /// `∫_{start}^{t} f`, for `t` inside the span.
    fn cumulative(&self, t: f64) -> f64 {
        match &self.profile {
            Profile::Sampled { prefix } => {
                let k = self.grid.partition_point(|&s| s <= t).saturating_sub(1);
                if k + 1 >= self.grid.len() {
                    return prefix[k];
                }
                let (t0, t1) = (self.grid[k], self.grid[k + 1]);
                let (v0, v1) = (self.values[k], self.values[k + 1]);
                let dt = t - t0;
                let vt = v0 + (v1 - v0) * dt / (t1 - t0);
                prefix[k] + 0.5 * (v0 + vt) * dt
            }
            Profile::PiecewiseConstant { starts, levels, prefix } => {
                let k = starts.partition_point(|&s| s <= t).saturating_sub(1);
                prefix[k] + levels[k] * (t - starts[k])
            }
        }
    }

    /// `∫_{t0}^{t1} f(t) dt`: exact for renewal paths, trapezoidal for sampled ones.
    pub fn integrate(&self, t0: f64, t1: f64) -> Result<f64> {
        let (start, end) = (self.start(), self.end());
        let slack = 1e-12 * (1.0 + end.abs().max(start.abs()));
        if !(t0.is_finite() && t1.is_finite()) || t0 < start - slack || t1 > end + slack || t0 > t1 {
            return Err(Error::OutOfSpan { t0, t1, start, end });
        }
        let t0 = t0.clamp(start, end);
        let t1 = t1.clamp(start, end);
        Ok(self.cumulative(t1) - self.cumulative(t0))
    }

    /// Two-column CSV with header `t,f`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,f\n");
        for (t, v) in self.grid.iter().zip(&self.values) {
            let _ = writeln!(out, "{},{}", Num(*t), Num(*v));
        }
        out
    }
}

/// Free-function form of [`NoiseTrajectory::integrate`].
pub fn integrate_trajectory(traj: &NoiseTrajectory, t0: f64, t1: f64) -> Result<f64> {
    traj.integrate(t0, t1)
}

/// RNG for `(seed, stream)`: ChaCha8 keyed by the seed, one stream per trajectory.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// OU path values on `grid` using the exact transition kernel, stationary start.
pub fn sample_ou_values<R: Rng + ?Sized>(p: &NoiseParams, grid: &[f64], rng: &mut R) -> Vec<f64> {
    let g = p.gamma();
    let mut values = Vec::with_capacity(grid.len());
    let z: f64 = StandardNormal.sample(rng);
    let mut current = g * z;
    values.push(current);
    for w in grid.windows(2) {
        let decay = (-p.lambda * (w[1] - w[0])).exp();
        let spread = g * (-(-2.0 * p.lambda * (w[1] - w[0])).exp_m1()).sqrt();
        let z: f64 = StandardNormal.sample(rng);
        current = current * decay + spread * z;
        values.push(current);
    }
    values
}

pub fn sample_ou_stream(p: &NoiseParams, grid: &[f64], seed: u64, stream: u64) -> Result<NoiseTrajectory> {
    validate_grid(grid)?;
    if p.kind != NoiseKind::OrnsteinUhlenbeck {
        return Err(invalid("kind", "sample_ou requires Ornstein-Uhlenbeck noise"));
    }
    let values = sample_ou_values(p, grid, &mut stream_rng(seed, stream));
    let mut traj = NoiseTrajectory::from_samples(grid.to_vec(), values, seed)?;
    traj.stream = stream;
    Ok(traj)
}

/// Ornstein-Uhlenbeck trajectory, deterministic in `seed`.
pub fn sample_ou(p: &NoiseParams, grid: &[f64], seed: u64) -> Result<NoiseTrajectory> {
    sample_ou_stream(p, grid, seed, 0)
}

/// Jump times and levels of a renewal path over `[start, end]`.
fn renewal_path<R: Rng + ?Sized>(p: &NoiseParams, start: f64, end: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let g = p.gamma();
    let mut starts = vec![start];
    let z: f64 = StandardNormal.sample(rng);
    let mut levels = vec![g * z];
    let mut t = start;
    loop {
        let wait: f64 = Exp1.sample(rng);
        t += wait / p.lambda;
        if t >= end {
            break;
        }
        let z: f64 = StandardNormal.sample(rng);
        starts.push(t);
        levels.push(g * z);
    }
    (starts, levels)
}

pub fn sample_renewal_stream(p: &NoiseParams, grid: &[f64], seed: u64, stream: u64) -> Result<NoiseTrajectory> {
    validate_grid(grid)?;
    if p.kind != NoiseKind::CompoundPoissonRenewal {
        return Err(invalid(
            "kind",
            "sample_renewal requires compound-Poisson renewal noise",
        ));
    }
    let mut rng = stream_rng(seed, stream);
    let (starts, levels) = renewal_path(p, grid[0], grid[grid.len() - 1], &mut rng);
    Ok(NoiseTrajectory::piecewise(grid.to_vec(), starts, levels, seed, stream))
}

/// Compound-Poisson renewal trajectory, deterministic in `seed`.
pub fn sample_renewal(p: &NoiseParams, grid: &[f64], seed: u64) -> Result<NoiseTrajectory> {
    sample_renewal_stream(p, grid, seed, 0)
}

/// Samples with whichever generator `p.kind()` names; `None` yields a zero path.
pub fn sample_stream(p: &NoiseParams, grid: &[f64], seed: u64, stream: u64) -> Result<NoiseTrajectory> {
    match p.kind {
        NoiseKind::OrnsteinUhlenbeck => sample_ou_stream(p, grid, seed, stream),
        NoiseKind::CompoundPoissonRenewal => sample_renewal_stream(p, grid, seed, stream),
        NoiseKind::None => {
            validate_grid(grid)?;
            let mut traj = NoiseTrajectory::from_samples(grid.to_vec(), vec![0.0; grid.len()], seed)?;
            traj.stream = stream;
            Ok(traj)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fig4() -> NoiseParams {
        NoiseParams::ou(2.5, 2.0 * PI * 0.1).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(NoiseParams::ou(0.0, 1.0).is_err());
        assert!(NoiseParams::ou(1.0, -1.0).is_err());
        assert!(NoiseParams::ou(f64::INFINITY, 1.0).is_err());
        let silent = NoiseParams::new(1.0, 3.0, NoiseKind::None).unwrap();
        assert_eq!(silent.gamma(), 0.0);
        assert_eq!(f1(&silent, 5.0), 0.0);
    }

    #[test]
    fn correlation_examples() {
        let p = fig4();
        assert_eq!(correlation(&p, 0.0), p.gamma().powi(2));
        assert_eq!(correlation(&p, 1e6), 0.0);
        assert_relative_eq!(correlation(&p, 1.0), 0.032_405_858_547, max_relative = 1e-10);
        assert_eq!(correlation(&p, -1.0), correlation(&p, 1.0));
    }

    #[test]
    fn f1_examples() {
        let p = fig4();
        assert_eq!(f1(&p, 0.0), 0.0);
        let tau = 1e-4;
        assert_relative_eq!(f1(&p, tau), p.gamma().powi(2) * tau * tau / 2.0, max_relative = 1e-3);
        // (Γ²/λ²)(1.5 + e^{-2.5})
        assert_relative_eq!(f1(&p, 1.0), 0.099_933_139_618, max_relative = 1e-10);
    }

    #[test]
    fn ramp_branches_meet() {
        let x = 1e-2;
        let series = ramp(x * (1.0 - 1e-12));
        let direct = x + (-x).exp_m1();
        assert_relative_eq!(series, direct, max_relative = 1e-9);
    }

    #[test]
    fn delta_f_limits() {
        let p = fig4();
        assert_eq!(delta_f(&p, 0.0), 0.0);
        let limit = p.gamma().powi(2) / (2.0 * p.lambda().powi(2));
        assert_relative_eq!(delta_f(&p, 100.0), limit, max_relative = 1e-12);
    }

    #[test]
    fn chi_filter_zero_tau() {
        let p = fig4();
        for kind in FilterKind::ALL {
            assert_eq!(chi_filter(kind, &p, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn chi_half_period_matches_f1() {
        let p = fig4();
        let chi = chi_filter(FilterKind::HalfPeriod, &p, 1.0).unwrap();
        assert_relative_eq!(chi, f1(&p, 1.0), max_relative = 1e-4);
    }

    #[test]
    fn chi_hahn_like_is_ou_echo_exponent() {
        let p = fig4();
        let (l, g) = (p.lambda(), p.gamma());
        for tau in [0.05, 0.4, 2.0] {
            let x = l * tau;
            let echo = g * g / (l * l) * (2.0 * x - 3.0 + 4.0 * (-x).exp() - (-2.0 * x).exp());
            let chi = chi_filter(FilterKind::HahnLike, &p, tau).unwrap();
            assert_relative_eq!(chi, echo, max_relative = 1e-4);
        }
    }

    #[test]
    fn lorentzian_tail_matches_closed_form() {
        let (l, w) = (2.0_f64, 30.0_f64);
        let exact = (1.0 / w - (l / w).atan() / l) / (l * l);
        assert_relative_eq!(lorentzian_tail(l, w), exact, max_relative = 1e-8);
    }

    #[test]
    fn zero_gamma_gives_zero_path() {
        let p = NoiseParams::ou(1.0, 0.0).unwrap();
        let grid: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let t = sample_ou(&p, &grid, 7).unwrap();
        assert!(t.values().iter().all(|&v| v == 0.0));
        assert_eq!(t.integrate(0.0, 4.9).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_grids() {
        let p = fig4();
        assert!(matches!(
            sample_ou(&p, &[0.0, 1.0, 1.0], 1),
            Err(Error::NonMonotoneGrid { index: 2 })
        ));
        assert!(sample_ou(&p, &[], 1).is_err());
        let r = NoiseParams::renewal(1.0, 1.0).unwrap();
        assert!(matches!(
            sample_renewal(&r, &[0.0, 2.0, 1.0], 1),
            Err(Error::NonMonotoneGrid { index: 2 })
        ));
        assert!(sample_ou(&r, &[0.0, 1.0], 1).is_err());
    }

    #[test]
    fn seed_determinism() {
        let p = fig4();
        let grid: Vec<f64> = (0..100).map(|k| k as f64 * 0.05).collect();
        assert_eq!(sample_ou(&p, &grid, 11).unwrap(), sample_ou(&p, &grid, 11).unwrap());
        assert_ne!(sample_ou(&p, &grid, 11).unwrap(), sample_ou(&p, &grid, 12).unwrap());
        let r = NoiseParams::renewal(2.5, 1.0).unwrap();
        assert_eq!(
            sample_renewal(&r, &grid, 3).unwrap(),
            sample_renewal(&r, &grid, 3).unwrap()
        );
    }

    #[test]
    fn renewal_without_jumps_is_constant() {
        let r = NoiseParams::renewal(1e-12, 1.0).unwrap();
        let grid: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let t = sample_renewal(&r, &grid, 5).unwrap();
        let first = t.values()[0];
        assert!(t.values().iter().all(|&v| v == first));
        assert_relative_eq!(t.integrate(2.0, 7.5).unwrap(), first * 5.5, max_relative = 1e-12);
    }

    #[test]
    fn integrate_constant_and_out_of_span() {
        let grid: Vec<f64> = (0..11).map(|k| k as f64 * 0.3).collect();
        let t = NoiseTrajectory::from_samples(grid, vec![2.5; 11], 0).unwrap();
        assert_relative_eq!(t.integrate(0.0, 3.0).unwrap(), 7.5, max_relative = 1e-12);
        assert_relative_eq!(t.integrate(0.45, 1.0).unwrap(), 2.5 * 0.55, max_relative = 1e-12);
        assert!(matches!(t.integrate(-1.0, 1.0), Err(Error::OutOfSpan { .. })));
        assert!(matches!(t.integrate(0.0, 3.5), Err(Error::OutOfSpan { .. })));
        assert!(matches!(t.integrate(2.0, 1.0), Err(Error::OutOfSpan { .. })));
    }

    #[test]
    fn renewal_integral_is_exact_between_grid_points() {
        let r = NoiseParams::renewal(3.0, 1.0).unwrap();
        let grid = vec![0.0, 10.0];
        let t = sample_renewal(&r, &grid, 99).unwrap();
        // Refine by brute force: midpoint sum over a very fine partition.
        let n = 200_000;
        let h = 10.0 / n as f64;
        let Profile::PiecewiseConstant { starts, levels, .. } = &t.profile else {
            panic!("renewal path must be piecewise constant");
        };
        let brute: f64 = (0..n)
            .map(|k| {
                let s = (k as f64 + 0.5) * h;
                levels[starts.partition_point(|&x| x <= s) - 1] * h
            })
            .sum();
        assert_relative_eq!(t.integrate(0.0, 10.0).unwrap(), brute, epsilon = 1e-3);
    }

    #[test]
    fn csv_header() {
        let t = NoiseTrajectory::from_samples(vec![0.0, 0.5], vec![1.0, -1.0], 0).unwrap();
        assert_eq!(t.to_csv(), "t,f\n0,1\n0.5,-1\n");
    }
}
