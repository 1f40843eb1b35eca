//! Exact two-level dynamics.
//!
//! The basis is `{|↑⟩, |↓⟩}` with `|↑⟩` the optically initialised level.
//! Pulses are instantaneous rotations `R(θ, β) = R_y(θ) R_z(β) R_y(-θ)`,
//! i.e. a rotation by `β` about the axis `(sin θ, 0, cos θ)`, and free
//! evolution is a z-rotation by the accumulated phase.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;

use crate::error::{ensure_finite, invalid, Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A 2×2 complex matrix acting on the spin.
#[derive(Clone, Copy, PartialEq)]
pub struct Operator(pub [[Complex64; 2]; 2]);

impl Operator {
    pub const fn identity() -> Self {
        Operator([[ONE, ZERO], [ZERO, ONE]])
    }

    pub fn from_real(m: [[f64; 2]; 2]) -> Self {
        Operator([[m[0][0].into(), m[0][1].into()], [m[1][0].into(), m[1][1].into()]])
    }

    pub fn sigma_x() -> Self {
        Operator([[ZERO, ONE], [ONE, ZERO]])
    }

    pub fn sigma_y() -> Self {
        Operator([[ZERO, -I], [I, ZERO]])
    }

    pub fn sigma_z() -> Self {
        Operator([[ONE, ZERO], [ZERO, -ONE]])
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.0[row][col]
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Operator([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn scale(&self, k: Complex64) -> Self {
        let m = &self.0;
        Operator([[m[0][0] * k, m[0][1] * k], [m[1][0] * k, m[1][1] * k]])
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn determinant(&self) -> Complex64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                worst = worst.max((self.0[r][c] - other.0[r][c]).norm());
            }
        }
        worst
    }

    /// `‖U U† − I‖_max`.
    pub fn unitarity_defect(&self) -> f64 {
        (*self * self.adjoint()).max_abs_diff(&Operator::identity())
    }

    pub fn apply(&self, state: &SpinState) -> SpinState {
        let m = &self.0;
        SpinState {
            up: m[0][0] * state.up + m[0][1] * state.down,
            down: m[1][0] * state.up + m[1][1] * state.down,
        }
    }
}

impl Mul for Operator {
    type Output = Operator;

    fn mul(self, rhs: Operator) -> Operator {
        let a = &self.0;
        let b = &rhs.0;
        let mut out = [[ZERO; 2]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        Operator(out)
    }
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.0;
        write!(f, "[[{}, {}], [{}, {}]]", m[0][0], m[0][1], m[1][0], m[1][1])
    }
}

/// Pure spin state `c↑|↑⟩ + c↓|↓⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinState {
    up: Complex64,
    down: Complex64,
}

impl SpinState {
    /// Builds a normalised state. The amplitudes are rescaled to unit norm.
    pub fn new(up: Complex64, down: Complex64) -> Result<Self> {
        let norm = (up.norm_sqr() + down.norm_sqr()).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(invalid("amplitudes", "state must have a finite, non-zero norm"));
        }
        Ok(SpinState {
            up: up / norm,
            down: down / norm,
        })
    }

    pub fn up() -> Self {
        SpinState { up: ONE, down: ZERO }
    }

    pub fn down() -> Self {
        SpinState { up: ZERO, down: ONE }
    }

    /// `(|↑⟩ + |↓⟩)/√2`.
    pub fn plus_x() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        SpinState {
            up: h.into(),
            down: h.into(),
        }
    }

    pub fn amplitudes(&self) -> (Complex64, Complex64) {
        (self.up, self.down)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.up.norm_sqr() + self.down.norm_sqr()
    }

    pub fn with_global_phase(&self, phi: f64) -> Self {
        let p = Complex64::from_polar(1.0, phi);
        SpinState {
            up: self.up * p,
            down: self.down * p,
        }
    }

    /// Bloch vector `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)`.
    pub fn bloch_vector(&self) -> [f64; 3] {
        let coherence = self.up.conj() * self.down;
        [
            2.0 * coherence.re,
            2.0 * coherence.im,
            self.up.norm_sqr() - self.down.norm_sqr(),
        ]
    }

    pub fn to_density(&self) -> DensityMatrix {
        let (u, d) = (self.up, self.down);
        DensityMatrix(Operator([[u * u.conj(), u * d.conj()], [d * u.conj(), d * d.conj()]]))
    }
}

/// 2×2 density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Operator);

impl DensityMatrix {
    /// Wraps a matrix, checking hermiticity, unit trace and positivity to `tol`.
    pub fn new(entries: Operator, tol: f64) -> Result<Self> {
        let rho = DensityMatrix(entries);
        rho.check(tol)?;
        Ok(rho)
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(Operator::from_real([[0.5, 0.0], [0.0, 0.5]]))
    }

    pub fn diagonal(p_up: f64, p_down: f64) -> Self {
        DensityMatrix(Operator::from_real([[p_up, 0.0], [0.0, p_down]]))
    }

    pub fn entries(&self) -> &Operator {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.0.max_abs_diff(&self.0.adjoint())
    }

    /// Eigenvalues in ascending order (Hermitian part only).
    pub fn eigenvalues(&self) -> [f64; 2] {
        let a = self.0.get(0, 0).re;
        let d = self.0.get(1, 1).re;
        let b = 0.5 * (self.0.get(0, 1) + self.0.get(1, 0).conj());
        let mean = 0.5 * (a + d);
        let radius = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        [mean - radius, mean + radius]
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        let herm = self.hermiticity_defect();
        if herm > tol {
            return Err(Error::Contract(format!(
                "density matrix not Hermitian (defect {herm:e})"
            )));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > tol {
            return Err(Error::Contract(format!("density matrix trace {tr} != 1")));
        }
        let [lo, _] = self.eigenvalues();
        if lo < -tol {
            return Err(Error::Contract(format!(
                "density matrix has negative eigenvalue {lo:e}"
            )));
        }
        Ok(())
    }

    /// `U ρ U†`.
    pub fn conjugate_by(&self, u: &Operator) -> Self {
        DensityMatrix(*u * self.0 * u.adjoint())
    }

    pub fn bloch_vector(&self) -> [f64; 3] {
        let rho01 = self.0.get(0, 1);
        [
            2.0 * rho01.re,
            -2.0 * rho01.im,
            (self.0.get(0, 0) - self.0.get(1, 1)).re,
        ]
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        self.0.max_abs_diff(&other.0)
    }
}

/// Sign of the pulse detuning relative to the π/2 pulses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetuningSign {
    Plus,
    Minus,
}

impl DetuningSign {
    pub fn value(self) -> f64 {
        match self {
            DetuningSign::Plus => 1.0,
            DetuningSign::Minus => -1.0,
        }
    }
}

/// An instantaneous off-resonant pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseParams {
    theta: f64,
    beta: f64,
    sign: DetuningSign,
}

impl PulseParams {
    /// `theta` is the axis tilt from z, in `(0, π/2]`; `beta` is the pulse area `ω₁ t_p`.
    pub fn new(theta: f64, beta: f64, sign: DetuningSign) -> Result<Self> {
        ensure_finite("theta", theta)?;
        ensure_finite("beta", beta)?;
        if !(theta > 0.0 && theta <= FRAC_PI_2 + 1e-15) {
            return Err(invalid("theta", format!("must lie in (0, π/2], got {theta}")));
        }
        if beta < 0.0 {
            return Err(invalid("beta", format!("must be non-negative, got {beta}")));
        }
        Ok(PulseParams { theta, beta, sign })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sign(&self) -> DetuningSign {
        self.sign
    }

    /// Signed tilt used by the rotation: `-θ` for pulses driven at `-Δ`.
    pub fn signed_theta(&self) -> f64 {
        self.sign.value() * self.theta
    }
}

/// Resonant Rabi frequency and detuning, both in rad per time unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivingParams {
    rabi: f64,
    detuning: f64,
}

/// Mapping from `(ω₀, Δ)` to a tilt angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TiltConvention {
    /// `arctan(ω₀/Δ)`: the angle between the effective field and z.
    #[default]
    Geometric,
    /// `arctan(ω₁/Δ)` with the effective Rabi frequency `ω₁ = √(ω₀² + Δ²)`.
    EffectiveRabi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltAngle {
    pub theta: f64,
    pub sign: DetuningSign,
}

impl DrivingParams {
    pub fn new(rabi: f64, detuning: f64) -> Result<Self> {
        ensure_finite("rabi", rabi)?;
        ensure_finite("detuning", detuning)?;
        if rabi <= 0.0 {
            return Err(invalid("rabi", format!("must be positive, got {rabi}")));
        }
        Ok(DrivingParams { rabi, detuning })
    }

    pub fn rabi(&self) -> f64 {
        self.rabi
    }

    pub fn detuning(&self) -> f64 {
        self.detuning
    }

    /// `ω₁ = √(ω₀² + Δ²)`.
    pub fn effective_rabi(&self) -> f64 {
        self.rabi.hypot(self.detuning)
    }

    /// Tilt angle folded into `(0, π/2]`; a negative detuning is reported via the sign.
    pub fn tilt_angle(&self, convention: TiltConvention) -> TiltAngle {
        let numerator = match convention {
            TiltConvention::Geometric => self.rabi,
            TiltConvention::EffectiveRabi => self.effective_rabi(),
        };
        let sign = if self.detuning < 0.0 {
            DetuningSign::Minus
        } else {
            DetuningSign::Plus
        };
        // atan2 handles Δ = 0 (π/2) and Δ → ∞ (→ 0) without a division.
        let theta = numerator.atan2(self.detuning.abs());
        TiltAngle { theta, sign }
    }
}

/// Free-function form of [`DrivingParams::tilt_angle`].
pub fn tilt_angle(driving: &DrivingParams, convention: TiltConvention) -> TiltAngle {
    driving.tilt_angle(convention)
}

/// Rotation by `beta` about the axis `(sin θ, 0, cos θ)` for any real `theta`.
pub fn tilted_rotation(theta: f64, beta: f64) -> Operator {
    let (s, c) = (0.5 * beta).sin_cos();
    let (st, ct) = theta.sin_cos();
    Operator([
        [Complex64::new(c, -s * ct), Complex64::new(0.0, -s * st)],
        [Complex64::new(0.0, -s * st), Complex64::new(c, s * ct)],
    ])
}

/// Pulse operator `R(±θ, β)`.
pub fn rotation_matrix(pulse: &PulseParams) -> Operator {
    tilted_rotation(pulse.signed_theta(), pulse.beta)
}

/// `exp(−i σz φ / 2)`.
pub fn free_phase_unitary(total_phase: f64) -> Operator {
    let half = 0.5 * total_phase;
    Operator([
        [Complex64::from_polar(1.0, -half), ZERO],
        [ZERO, Complex64::from_polar(1.0, half)],
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SequenceKind {
    Ramsey,
    HahnEcho,
    HahnRamsey,
    Custom,
}

impl SequenceKind {
    pub fn name(self) -> &'static str {
        match self {
            SequenceKind::Ramsey => "ramsey",
            SequenceKind::HahnEcho => "hahn-echo",
            SequenceKind::HahnRamsey => "hahn-ramsey",
            SequenceKind::Custom => "custom",
        }
    }

    /// Total free-evolution time of a sequence parameterised by `tau`.
    pub fn total_time(self, tau: f64) -> f64 {
        match self {
            SequenceKind::Ramsey | SequenceKind::Custom => tau,
            SequenceKind::HahnEcho | SequenceKind::HahnRamsey => 2.0 * tau,
        }
    }
}

impl std::str::FromStr for SequenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "ramsey" => Ok(SequenceKind::Ramsey),
            "hahn-echo" | "hahnecho" | "echo" => Ok(SequenceKind::HahnEcho),
            "hahn-ramsey" | "hahnramsey" | "hr" => Ok(SequenceKind::HahnRamsey),
            "custom" => Ok(SequenceKind::Custom),
            other => Err(invalid("sequence", format!("unknown sequence kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Element {
    Pulse(PulseParams),
    Delay(f64),
}

/// Ordered pulse/delay program.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    kind: SequenceKind,
    elements: Vec<Element>,
}

impl PulseSequence {
    pub fn custom(elements: Vec<Element>) -> Result<Self> {
        for e in &elements {
            if let Element::Delay(d) = e {
                if !(d.is_finite() && *d >= 0.0) {
                    return Err(invalid("delay", format!("must be finite and non-negative, got {d}")));
                }
            }
        }
        Ok(PulseSequence {
            kind: SequenceKind::Custom,
            elements,
        })
    }

    /// `[π/2, τ, π/2]`, both pulses at `+Δ`.
    pub fn ramsey(theta: f64, tau: f64) -> Result<Self> {
        let half = PulseParams::new(theta, FRAC_PI_2, DetuningSign::Plus)?;
        Self::with_kind(
            SequenceKind::Ramsey,
            vec![Element::Pulse(half), Element::Delay(tau), Element::Pulse(half)],
        )
    }

    /// `[π/2 at +Δ, τ, π at −Δ, τ, π/2 at +Δ]`.
    pub fn hahn_ramsey(theta: f64, tau: f64) -> Result<Self> {
        let half = PulseParams::new(theta, FRAC_PI_2, DetuningSign::Plus)?;
        let refocus = PulseParams::new(theta, PI, DetuningSign::Minus)?;
        Self::with_kind(
            SequenceKind::HahnRamsey,
            vec![
                Element::Pulse(half),
                Element::Delay(tau),
                Element::Pulse(refocus),
                Element::Delay(tau),
                Element::Pulse(half),
            ],
        )
    }

    /// Resonant Hahn echo: `[π/2, τ, π, τ, π/2]` about x.
    pub fn hahn_echo(tau: f64) -> Result<Self> {
        let half = PulseParams::new(FRAC_PI_2, FRAC_PI_2, DetuningSign::Plus)?;
        let refocus = PulseParams::new(FRAC_PI_2, PI, DetuningSign::Plus)?;
        Self::with_kind(
            SequenceKind::HahnEcho,
            vec![
                Element::Pulse(half),
                Element::Delay(tau),
                Element::Pulse(refocus),
                Element::Delay(tau),
                Element::Pulse(half),
            ],
        )
    }

    /// Builds the standard sequence of `kind`. `theta` is ignored for the resonant echo.
    pub fn standard(kind: SequenceKind, theta: f64, tau: f64) -> Result<Self> {
        match kind {
            SequenceKind::Ramsey => Self::ramsey(theta, tau),
            SequenceKind::HahnEcho => Self::hahn_echo(tau),
            SequenceKind::HahnRamsey => Self::hahn_ramsey(theta, tau),
            SequenceKind::Custom => Err(invalid("sequence", "custom sequences have no standard form")),
        }
    }

    fn with_kind(kind: SequenceKind, elements: Vec<Element>) -> Result<Self> {
        let mut seq = Self::custom(elements)?;
        seq.kind = kind;
        Ok(seq)
    }

    pub fn kind(&self) -> SequenceKind {
        self.kind
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn delay_count(&self) -> usize {
        self.elements.iter().filter(|e| matches!(e, Element::Delay(_))).count()
    }

    /// Delay durations in program order.
    pub fn delays(&self) -> Vec<f64> {
        self.elements
            .iter()
            .filter_map(|e| match e {
                Element::Delay(d) => Some(*d),
                _ => None,
            })
            .collect()
    }

    /// Rotating-frame sign for each delay: the detuning sign of the most recent pulse.
    pub fn frame_signs(&self) -> Vec<DetuningSign> {
        let mut current = DetuningSign::Plus;
        let mut out = Vec::new();
        for e in &self.elements {
            match e {
                Element::Pulse(p) => current = p.sign,
                Element::Delay(_) => out.push(current),
            }
        }
        out
    }

    /// Deterministic phase of every delay: `s·Δ·τ + ε·τ` where `s` is the frame sign.
    pub fn coherent_phases(&self, detuning: f64, bias: f64) -> Vec<f64> {
        self.delays()
            .into_iter()
            .zip(self.frame_signs())
            .map(|(d, s)| (s.value() * detuning + bias) * d)
            .collect()
    }

    /// Product of all element unitaries for the given per-delay phases.
    pub fn unitary(&self, phase_per_delay: &[f64]) -> Result<Operator> {
        let n = self.delay_count();
        if phase_per_delay.len() != n {
            return Err(Error::Contract(format!(
                "sequence has {n} delays but {} phases were supplied",
                phase_per_delay.len()
            )));
        }
        let mut phases = phase_per_delay.iter();
        let mut total = Operator::identity();
        for e in &self.elements {
            let step = match e {
                Element::Pulse(p) => rotation_matrix(p),
                // length checked above
                Element::Delay(_) => free_phase_unitary(*phases.next().unwrap()),
            };
            total = step * total;
        }
        Ok(total)
    }
}

/// States that can be pushed through a pulse sequence.
pub trait Propagate: Sized {
    fn evolve(&self, u: &Operator) -> Self;
    fn sigma_z(&self) -> f64;
}

impl Propagate for SpinState {
    fn evolve(&self, u: &Operator) -> Self {
        u.apply(self)
    }

    fn sigma_z(&self) -> f64 {
        self.up.norm_sqr() - self.down.norm_sqr()
    }
}

impl Propagate for DensityMatrix {
    fn evolve(&self, u: &Operator) -> Self {
        self.conjugate_by(u)
    }

    fn sigma_z(&self) -> f64 {
        (self.0.get(0, 0) - self.0.get(1, 1)).re
    }
}

/// Applies the sequence left to right; `phase_per_delay[k]` is the total phase of the k-th delay.
pub fn propagate<S: Propagate>(state: &S, seq: &PulseSequence, phase_per_delay: &[f64]) -> Result<S> {
    Ok(state.evolve(&seq.unitary(phase_per_delay)?))
}

/// `Tr[ρ σz]` or `⟨ψ|σz|ψ⟩`.
pub fn expectation_sigma_z<S: Propagate>(state: &S) -> f64 {
    state.sigma_z()
}

/// State just before the final π/2 pulse of the Hahn-Ramsey sequence, in closed form.
///
/// `f` and `g` are the half-phases of the two delays, so the free-evolution
/// operators are `exp(−2if S_z)` and `exp(−2ig S_z)`.
pub fn analytic_density_matrix_hr(theta: f64, f: f64, g: f64) -> DensityMatrix {
    let (b, a) = theta.sin_cos();
    let (a2, b2) = (a * a, b * b);
    let cis = |x: f64| Complex64::from_polar(1.0, x);
    let diag_mix = 2.0 * a * b2 * (a * (2.0 * f).cos() + (2.0 * f).sin());

    let r00 = a2 + a2 * a2 + b2 * b2 - diag_mix;
    let r11 = b2 + 2.0 * a2 * b2 + diag_mix;
    let r01 = -a2 * b * (I + a) * cis(-2.0 * (f + g)) - 2.0 * a2 * a * b * cis(-2.0 * g)
        + b2 * b * (a - I) * cis(2.0 * (f - g));
    DensityMatrix(Operator([
        [Complex64::new(0.5 * r00, 0.0), 0.5 * r01],
        [0.5 * r01.conj(), Complex64::new(0.5 * r11, 0.0)],
    ]))
}

/// Noise-averaged limit of [`analytic_density_matrix_hr`] once every coherence has decayed.
pub fn long_time_density_matrix(theta: f64) -> DensityMatrix {
    let (b, a) = theta.sin_cos();
    let (a2, b2) = (a * a, b * b);
    DensityMatrix::diagonal(0.5 * (a2 + a2 * a2 + b2 * b2), 0.5 * (b2 + 2.0 * a2 * b2))
}
