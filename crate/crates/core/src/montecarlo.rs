//! Stochastic signal estimation by explicit spin propagation.
//!
//! Every trajectory samples its own noise path, turns it into per-delay phases
//! and pushes `|↑⟩` through the pulse sequence with the matrices of
//! [`crate::spin`]. No closed form is used.
//!
//! Seeding: trajectory `i` draws from ChaCha8 keyed by `master_seed` on
//! stream `i`. Trajectories are grouped into fixed-size batches whose partial
//! sums are combined by a pairwise reduction in batch order, so the result is
//! bitwise identical for any number of worker threads.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use crate::analytic::BiasParams;
use crate::error::{ensure_finite, invalid, Error, Result};
use crate::exec::{pairwise_sum, ExecConfig};
use crate::io::Num;
use crate::noise::{sample_stream, NoiseParams, NoiseTrajectory};
use crate::spin::{
    free_phase_unitary, rotation_matrix, tilted_rotation, DetuningSign, DrivingParams, Element, Operator, Propagate,
    PulseSequence, SequenceKind, SpinState, TiltConvention,
};

const BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum PulseModel {
    #[default]
    Instantaneous,
    /// Pulses of duration `β/ω₁` driven with resonant Rabi frequency `rabi`.
    FiniteDuration { rabi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_trajectories: usize,
    pub master_seed: u64,
    pub time_step: f64,
    pub pulse_model: PulseModel,
    pub exec: ExecConfig,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_trajectories: 10_000,
            master_seed: 0,
            time_step: 0.01,
            pulse_model: PulseModel::Instantaneous,
            exec: ExecConfig::default(),
        }
    }
}

impl McConfig {
    pub fn new(n_trajectories: usize, master_seed: u64) -> Self {
        McConfig {
            n_trajectories,
            master_seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trajectories == 0 {
            return Err(invalid("n_trajectories", "must be at least 1"));
        }
        if !(self.time_step.is_finite() && self.time_step > 0.0) {
            return Err(invalid(
                "time_step",
                format!("must be positive, got {}", self.time_step),
            ));
        }
        if let PulseModel::FiniteDuration { rabi } = self.pulse_model {
            if !(rabi.is_finite() && rabi > 0.0) {
                return Err(invalid("rabi", format!("must be positive, got {rabi}")));
            }
        }
        Ok(())
    }

    /// Step of the noise grid: `min(time_step, 0.05/λ)`.
    pub fn noise_step(&self, noise: &NoiseParams) -> f64 {
        self.time_step.min(0.05 / noise.lambda())
    }
}

/// Estimated `⟨σz⟩` with standard errors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SignalCurve {
    pub taus: Vec<f64>,
    pub means: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub n: usize,
    pub warnings: Vec<String>,
}

impl SignalCurve {
    /// Exact curve (zero standard error).
    pub fn exact(taus: Vec<f64>, means: Vec<f64>) -> Self {
        let stderrs = vec![0.0; taus.len()];
        SignalCurve {
            taus,
            means,
            stderrs,
            n: 1,
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    /// CSV with header `tau,mean,stderr,n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,mean,stderr,n\n");
        for k in 0..self.taus.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                Num(self.taus[k]),
                Num(self.means[k]),
                Num(self.stderrs[k]),
                self.n
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochPoint {
    fn from_state(t: f64, s: &SpinState) -> Self {
        let [x, y, z] = s.bloch_vector();
        BlochPoint { t, x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// CSV with header `t,x,y,z`.
pub fn bloch_to_csv(points: &[BlochPoint]) -> String {
    let mut out = String::from("t,x,y,z\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", Num(p.t), Num(p.x), Num(p.y), Num(p.z));
    }
    out
}

/// What is being simulated, independent of the estimator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Experiment {
    pub kind: SequenceKind,
    pub theta: f64,
    pub detuning: f64,
    pub bias: BiasParams,
}

impl Experiment {
    pub fn new(kind: SequenceKind, theta: f64, detuning: f64) -> Self {
        Experiment {
            kind,
            theta,
            detuning,
            bias: BiasParams::zero(),
        }
    }

    pub fn with_bias(mut self, bias: BiasParams) -> Self {
        self.bias = bias;
        self
    }

    /// The resonant echo always runs at `θ = π/2`, `Δ = 0`.
    fn normalised(mut self) -> Self {
        if self.kind == SequenceKind::HahnEcho {
            self.theta = FRAC_PI_2;
            self.detuning = 0.0;
        }
        self
    }

    fn validate(&self) -> Result<()> {
        ensure_finite("theta", self.theta)?;
        ensure_finite("detuning", self.detuning)?;
        ensure_finite("epsilon", self.bias.epsilon)?;
        if self.kind == SequenceKind::Custom {
            return Err(invalid("sequence", "Monte Carlo runs need a standard sequence kind"));
        }
        Ok(())
    }
}

fn validate_taus(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(invalid("taus", "at least one delay is required"));
    }
    for &t in taus {
        if !(t.is_finite() && t >= 0.0) {
            return Err(invalid(
                "taus",
                format!("delays must be finite and non-negative, got {t}"),
            ));
        }
    }
    Ok(())
}

/// Per-τ prepared program: the sequence plus its delay windows on the time axis.
struct Prepared {
    seq: PulseSequence,
    coherent: Vec<f64>,
    windows: Vec<(f64, f64)>,
    reference: f64,
}

fn prepare_instantaneous(exp: &Experiment, tau: f64) -> Result<Prepared> {
    let seq = PulseSequence::standard(exp.kind, exp.theta, tau)?;
    let coherent = seq.coherent_phases(exp.detuning, exp.bias.epsilon);
    let mut windows = Vec::new();
    let mut t = 0.0;
    for d in seq.delays() {
        windows.push((t, t + d));
        t += d;
    }
    let reference = SpinState::up().evolve(&seq.unitary(&coherent)?).sigma_z();
    Ok(Prepared {
        seq,
        coherent,
        windows,
        reference,
    })
}

/// Shifted first and second moments of one batch.
fn batch_moments<F>(
    start: usize,
    end: usize,
    n_taus: usize,
    reference: &[f64],
    mut sample: F,
) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: FnMut(usize, &mut [f64]) -> Result<()>,
{
    let mut s1 = vec![0.0; n_taus];
    let mut s2 = vec![0.0; n_taus];
    let mut z = vec![0.0; n_taus];
    for i in start..end {
        sample(i, &mut z)?;
        for k in 0..n_taus {
            let d = z[k] - reference[k];
            s1[k] += d;
            s2[k] += d * d;
        }
    }
    Ok((s1, s2))
}

fn reduce(
    taus: &[f64],
    reference: &[f64],
    n: usize,
    batches: Vec<Result<(Vec<f64>, Vec<f64>)>>,
    warnings: Vec<String>,
) -> Result<SignalCurve> {
    let batches: Vec<(Vec<f64>, Vec<f64>)> = batches.into_iter().collect::<Result<_>>()?;
    let nf = n as f64;
    let mut means = Vec::with_capacity(taus.len());
    let mut stderrs = Vec::with_capacity(taus.len());
    for (k, &base) in reference.iter().enumerate().take(taus.len()) {
        let s1: Vec<f64> = batches.iter().map(|b| b.0[k]).collect();
        let s2: Vec<f64> = batches.iter().map(|b| b.1[k]).collect();
        let m1 = pairwise_sum(&s1) / nf;
        let m2 = pairwise_sum(&s2) / nf;
        means.push(base + m1);
        let stderr = if n > 1 {
            let var = ((m2 - m1 * m1) * nf / (nf - 1.0)).max(0.0);
            (var / nf).sqrt()
        } else {
            0.0
        };
        stderrs.push(stderr);
    }
    Ok(SignalCurve {
        taus: taus.to_vec(),
        means,
        stderrs,
        n,
        warnings,
    })
}

fn uniform_grid(end: f64, step: f64) -> Vec<f64> {
    let cells = ((end / step).ceil() as usize).max(1);
    let h = end.max(step) / cells as f64;
    (0..=cells).map(|k| k as f64 * h).collect()
}

/// Monte Carlo estimate of a standard sequence's signal on a grid of delays.
pub fn run_mc(
    kind: SequenceKind,
    theta: f64,
    detuning: f64,
    noise: &NoiseParams,
    taus: &[f64],
    cfg: &McConfig,
) -> Result<SignalCurve> {
    run_experiment(&Experiment::new(kind, theta, detuning), noise, taus, cfg)
}

/// As [`run_mc`], with a full [`Experiment`] (including a bias detuning).
pub fn run_experiment(exp: &Experiment, noise: &NoiseParams, taus: &[f64], cfg: &McConfig) -> Result<SignalCurve> {
    match cfg.pulse_model {
        PulseModel::Instantaneous => run_instantaneous(exp, noise, taus, cfg),
        PulseModel::FiniteDuration { rabi } => {
            let exp = exp.normalised();
            if exp.kind != SequenceKind::HahnEcho {
                let implied = DrivingParams::new(rabi, exp.detuning)?.tilt_angle(TiltConvention::Geometric);
                if (implied.theta - exp.theta).abs() > 1e-9 {
                    return Err(invalid(
                        "theta",
                        format!(
                            "finite pulses fix θ = arctan(ω₀/|Δ|) = {}, but θ = {} was requested",
                            implied.theta, exp.theta
                        ),
                    ));
                }
            }
            run_finite(&exp, noise, taus, cfg, rabi)
        }
    }
}

fn run_instantaneous(exp: &Experiment, noise: &NoiseParams, taus: &[f64], cfg: &McConfig) -> Result<SignalCurve> {
    cfg.validate()?;
    validate_taus(taus)?;
    let exp = exp.normalised();
    exp.validate()?;

    let prepared: Vec<Prepared> = taus
        .iter()
        .map(|&t| prepare_instantaneous(&exp, t))
        .collect::<Result<_>>()?;
    let reference: Vec<f64> = prepared.iter().map(|p| p.reference).collect();
    let n = cfg.n_trajectories;

    if noise.is_silent() {
        return Ok(SignalCurve {
            taus: taus.to_vec(),
            means: reference,
            stderrs: vec![0.0; taus.len()],
            n,
            warnings: Vec::new(),
        });
    }

    let span = prepared
        .iter()
        .filter_map(|p| p.windows.last().map(|w| w.1))
        .fold(0.0, f64::max);
    let grid = uniform_grid(span, cfg.noise_step(noise));
    let n_batches = n.div_ceil(BATCH);

    let batches = cfg.exec.map_indexed(n_batches, |b| {
        let start = b * BATCH;
        let end = (start + BATCH).min(n);
        batch_moments(start, end, taus.len(), &reference, |i, z| {
            let path = sample_stream(noise, &grid, cfg.master_seed, i as u64)?;
            for (k, p) in prepared.iter().enumerate() {
                let phases = noisy_phases(&path, &p.coherent, &p.windows)?;
                z[k] = SpinState::up().evolve(&p.seq.unitary(&phases)?).sigma_z();
            }
            Ok(())
        })
    });
    reduce(taus, &reference, n, batches, Vec::new())
}

fn noisy_phases(path: &NoiseTrajectory, coherent: &[f64], windows: &[(f64, f64)]) -> Result<Vec<f64>> {
    coherent
        .iter()
        .zip(windows)
        .map(|(c, &(t0, t1))| Ok(c + path.integrate(t0, t1)?))
        .collect()
}

/// One step of a finite-duration program.
#[derive(Debug, Clone, Copy)]
enum Segment {
    Pulse { start: f64, duration: f64, frame: f64 },
    Delay { start: f64, duration: f64, frame: f64 },
}

struct FiniteProgram {
    segments: Vec<Segment>,
    end: f64,
}

fn finite_program(seq: &PulseSequence, rabi: f64, detuning: f64) -> FiniteProgram {
    let omega1 = rabi.hypot(detuning);
    let mut t = 0.0;
    let mut frame = DetuningSign::Plus;
    let mut segments = Vec::new();
    for e in seq.elements() {
        match e {
            Element::Pulse(p) => {
                frame = p.sign();
                let duration = p.beta() / omega1;
                segments.push(Segment::Pulse {
                    start: t,
                    duration,
                    frame: frame.value(),
                });
                t += duration;
            }
            Element::Delay(d) => {
                segments.push(Segment::Delay {
                    start: t,
                    duration: *d,
                    frame: frame.value(),
                });
                t += d;
            }
        }
    }
    FiniteProgram { segments, end: t }
}

/// Noise value at `t` by linear interpolation of the path samples.
fn path_value(path: &NoiseTrajectory, t: f64) -> f64 {
    let grid = path.grid();
    let values = path.values();
    let k = grid.partition_point(|&s| s <= t).saturating_sub(1);
    if k + 1 >= grid.len() {
        return values[grid.len() - 1];
    }
    let w = (t - grid[k]) / (grid[k + 1] - grid[k]);
    values[k] + w * (values[k + 1] - values[k])
}

fn evolve_finite(
    program: &FiniteProgram,
    exp: &Experiment,
    rabi: f64,
    step: f64,
    path: Option<&NoiseTrajectory>,
) -> Result<f64> {
    let mut state = SpinState::up();
    for seg in &program.segments {
        match *seg {
            Segment::Pulse { start, duration, frame } => {
                let m = ((duration / step).ceil() as usize).max(1);
                let h = duration / m as f64;
                for j in 0..m {
                    let mid = start + (j as f64 + 0.5) * h;
                    let f = path.map_or(0.0, |p| path_value(p, mid));
                    let gz = frame * exp.detuning + exp.bias.epsilon + f;
                    let strength = rabi.hypot(gz);
                    state = tilted_rotation(rabi.atan2(gz), strength * h).apply(&state);
                }
            }
            Segment::Delay { start, duration, frame } => {
                let noise = match path {
                    Some(p) => p.integrate(start, start + duration)?,
                    None => 0.0,
                };
                let phase = (frame * exp.detuning + exp.bias.epsilon) * duration + noise;
                state = free_phase_unitary(phase).apply(&state);
            }
        }
    }
    Ok(state.sigma_z())
}

/// Monte Carlo with pulses of finite duration; `cfg.pulse_model` must be
/// [`PulseModel::FiniteDuration`]. The tilt follows from `(ω₀, Δ)`.
///
/// Pulses at `−Δ` rotate about `(sin θ, 0, −cos θ)`, which equals `R(−θ, β)`
/// up to a global phase for `β = π`.
pub fn run_mc_finite_pulses(
    kind: SequenceKind,
    detuning: f64,
    noise: &NoiseParams,
    taus: &[f64],
    cfg: &McConfig,
) -> Result<SignalCurve> {
    let PulseModel::FiniteDuration { rabi } = cfg.pulse_model else {
        return Err(invalid(
            "pulse_model",
            "finite-pulse runs need PulseModel::FiniteDuration",
        ));
    };
    let theta = DrivingParams::new(rabi, detuning)?
        .tilt_angle(TiltConvention::Geometric)
        .theta;
    run_finite(
        &Experiment::new(kind, theta, detuning).normalised(),
        noise,
        taus,
        cfg,
        rabi,
    )
}

fn run_finite(exp: &Experiment, noise: &NoiseParams, taus: &[f64], cfg: &McConfig, rabi: f64) -> Result<SignalCurve> {
    cfg.validate()?;
    validate_taus(taus)?;
    exp.validate()?;
    if exp.detuning < 0.0 {
        return Err(invalid(
            "detuning",
            "finite pulses take |Δ|; pass a non-negative detuning",
        ));
    }

    let programs: Vec<FiniteProgram> = taus
        .iter()
        .map(|&t| {
            Ok(finite_program(
                &PulseSequence::standard(exp.kind, exp.theta, t)?,
                rabi,
                exp.detuning,
            ))
        })
        .collect::<Result<_>>()?;

    let step = if noise.is_silent() {
        cfg.time_step
    } else {
        cfg.noise_step(noise)
    };
    let mut warnings = Vec::new();
    let shortest = programs[0]
        .segments
        .iter()
        .filter_map(|s| match s {
            Segment::Pulse { duration, .. } => Some(*duration),
            _ => None,
        })
        .fold(f64::INFINITY, f64::min);
    if shortest / step < 10.0 {
        warnings.push(format!(
            "pulse of duration {shortest} is resolved by only {:.1} steps of {step}",
            shortest / step
        ));
    }

    let reference: Vec<f64> = programs
        .iter()
        .map(|p| evolve_finite(p, exp, rabi, step, None))
        .collect::<Result<_>>()?;
    let n = cfg.n_trajectories;
    if noise.is_silent() {
        return Ok(SignalCurve {
            taus: taus.to_vec(),
            means: reference,
            stderrs: vec![0.0; taus.len()],
            n,
            warnings,
        });
    }

    let span = programs.iter().map(|p| p.end).fold(0.0, f64::max);
    let grid = uniform_grid(span, step);
    let n_batches = n.div_ceil(BATCH);
    let batches = cfg.exec.map_indexed(n_batches, |b| {
        let start = b * BATCH;
        let end = (start + BATCH).min(n);
        batch_moments(start, end, taus.len(), &reference, |i, z| {
            let path = sample_stream(noise, &grid, cfg.master_seed, i as u64)?;
            for (k, p) in programs.iter().enumerate() {
                z[k] = evolve_finite(p, exp, rabi, step, Some(&path))?;
            }
            Ok(())
        })
    });
    reduce(taus, &reference, n, batches, warnings)
}

/// Noiseless Bloch-sphere path through a standard sequence.
///
/// Pulses are instantaneous in time but sampled as continuous rotations about
/// their tilted axes; delays advance `t` and precess about z.
pub fn bloch_trajectory(
    kind: SequenceKind,
    theta: f64,
    detuning: f64,
    tau: f64,
    samples_per_segment: usize,
) -> Result<Vec<BlochPoint>> {
    let exp = Experiment::new(kind, theta, detuning).normalised();
    exp.validate()?;
    ensure_finite("tau", tau)?;
    if samples_per_segment == 0 {
        return Err(invalid("samples_per_segment", "must be at least 1"));
    }
    let seq = PulseSequence::standard(exp.kind, exp.theta, tau)?;
    let phases = seq.coherent_phases(exp.detuning, 0.0);
    let mut phase_iter = phases.iter();

    let mut state = SpinState::up();
    let mut t = 0.0;
    let mut points = vec![BlochPoint::from_state(t, &state)];
    let m = samples_per_segment;
    for e in seq.elements() {
        let entry = state;
        match e {
            Element::Pulse(p) => {
                for j in 1..=m {
                    let frac = j as f64 / m as f64;
                    let u = tilted_rotation(p.signed_theta(), p.beta() * frac);
                    state = u.apply(&entry);
                    points.push(BlochPoint::from_state(t, &state));
                }
                state = rotation_matrix(p).apply(&entry);
            }
            Element::Delay(d) => {
                let phase = *phase_iter.next().ok_or_else(|| Error::Contract("phase count".into()))?;
                for j in 1..=m {
                    let frac = j as f64 / m as f64;
                    state = free_phase_unitary(phase * frac).apply(&entry);
                    points.push(BlochPoint::from_state(t + d * frac, &state));
                }
                state = free_phase_unitary(phase).apply(&entry);
                t += d;
            }
        }
    }
    Ok(points)
}

/// Unitary of a single pulse of duration `t_p` under a constant field, stepped `m` times.
pub fn stepped_pulse(rabi: f64, field_z: f64, duration: f64, m: usize) -> Operator {
    let h = duration / m as f64;
    let strength = rabi.hypot(field_z);
    let step = tilted_rotation(rabi.atan2(field_z), strength * h);
    (0..m).fold(Operator::identity(), |acc, _| step * acc)
}

#[allow(dead_code)]
fn _assert_send_sync() {
    fn check<T: Send + Sync>() {}
    check::<McConfig>();
    check::<SignalCurve>();
    let _ = PI;
}
