//! Command-line front end.
//!
//! Times are in µs. Angular quantities (detuning, Rabi frequency, Γ, ε) are
//! read in rad/µs, or in MHz with `--freq-unit cycles`; the correlation rate
//! λ is always 1/µs. Values from `--config` are overridden by flags.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytic::{component_weights, hr_signal_biased, sequence_signal, signal_components, BiasParams};
use crate::error::Error;
use crate::exec::ExecConfig;
use crate::fit::{fit_decay, FitModel};
use crate::io::{read_data_csv, with_hash_header, Num};
use crate::montecarlo::{
    bloch_to_csv, bloch_trajectory, run_experiment, Experiment, McConfig, PulseModel, SignalCurve,
};
use crate::noise::{chi_filter, FilterKind, NoiseKind, NoiseParams};
use crate::scan::{scan_noise_params, ResidualMap};
use crate::sensitivity::{sensitivity, ReadoutModel, GAMMA_E_DEFAULT};
use crate::spin::{DrivingParams, SequenceKind, TiltConvention};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreqUnit {
    /// rad/µs
    Rad,
    /// MHz (multiplied by 2π internally)
    Cycles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Analytic,
    Montecarlo,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    GaussianEnvelope,
    GaussianDecay,
    Exponential,
}

impl ModelArg {
    fn model(self) -> FitModel {
        match self {
            ModelArg::GaussianEnvelope => FitModel::GAUSSIAN_ENVELOPE,
            ModelArg::GaussianDecay => FitModel::GAUSSIAN_DECAY,
            ModelArg::Exponential => FitModel::PLAIN_EXPONENTIAL,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hrsim", version, about = "Tilted-pulse Hahn-Ramsey spin simulator")]
pub struct Cli {
    /// JSON file with default values for any flag (keys use snake_case).
    #[arg(long, global = true, env = "HRSIM_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "HRSIM_SEED")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "HRSIM_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, env = "HRSIM_FREQ_UNIT")]
    pub freq_unit: Option<FreqUnit>,
    /// Worker threads for Monte Carlo and scans (results do not depend on it).
    #[arg(long, global = true, env = "HRSIM_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Signal curves from the closed forms and/or Monte Carlo.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_enum)]
        engine: Option<Engine>,
        #[arg(long)]
        trajectories: Option<usize>,
        #[arg(long)]
        time_step: Option<f64>,
        /// Resolve pulse durations (needs --rabi).
        #[arg(long)]
        finite_pulses: bool,
    },
    /// Filter exponents against τ and component weights against θ.
    Components {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        theta_count: Option<usize>,
    },
    /// Decay-envelope fit of a `tau,signal[,stderr]` file.
    Fit {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
        /// Multiplies the file's delays to give µs.
        #[arg(long)]
        time_scale: Option<f64>,
    },
    /// (λ, Γ) residual maps, one per data file.
    Scan {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',')]
        data: Vec<PathBuf>,
        #[arg(long)]
        time_scale: Option<f64>,
        #[arg(long)]
        lambda_min: Option<f64>,
        #[arg(long)]
        lambda_max: Option<f64>,
        #[arg(long)]
        lambda_count: Option<usize>,
        #[arg(long)]
        gamma_min: Option<f64>,
        #[arg(long)]
        gamma_max: Option<f64>,
        #[arg(long)]
        gamma_count: Option<usize>,
    },
    /// Minimum detectable field and optimal operating point.
    Sensitivity {
        #[command(flatten)]
        model: ModelArgs,
        /// Bright-state photons per shot.
        #[arg(long)]
        u: Option<f64>,
        /// Dark-state photons per shot.
        #[arg(long)]
        v: Option<f64>,
        /// Gyromagnetic ratio in MHz/G.
        #[arg(long)]
        gamma_e: Option<f64>,
    },
    /// Noiseless Bloch-sphere path.
    Bloch {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// ramsey, hahn-echo, hahn-ramsey (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub sequence: Vec<String>,
    /// Tilt angle in radians.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Tilt angle in units of π.
    #[arg(long)]
    pub theta_pi: Option<f64>,
    #[arg(long)]
    pub rabi: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub detuning: Option<f64>,
    /// geometric or effective-rabi.
    #[arg(long)]
    pub convention: Option<String>,
    /// ou, renewal or none.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GridArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub tau_start: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau_stop: Option<f64>,
    #[arg(long)]
    pub tau_count: Option<usize>,
}

/// Every key accepted in a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub freq_unit: Option<FreqUnit>,
    pub threads: Option<usize>,
    pub sequence: Option<Vec<String>>,
    pub theta: Option<f64>,
    pub theta_pi: Option<f64>,
    pub rabi: Option<f64>,
    pub detuning: Option<f64>,
    pub convention: Option<String>,
    pub noise: Option<String>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub tau_start: Option<f64>,
    pub tau_stop: Option<f64>,
    pub tau_count: Option<usize>,
    pub engine: Option<Engine>,
    pub trajectories: Option<usize>,
    pub time_step: Option<f64>,
    pub finite_pulses: Option<bool>,
    pub theta_count: Option<usize>,
    pub data: Option<Vec<PathBuf>>,
    pub model: Option<ModelArg>,
    pub time_scale: Option<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub lambda_count: Option<usize>,
    pub gamma_min: Option<f64>,
    pub gamma_max: Option<f64>,
    pub gamma_count: Option<usize>,
    pub u: Option<f64>,
    pub v: Option<f64>,
    pub gamma_e: Option<f64>,
    pub tau: Option<f64>,
    pub samples: Option<usize>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter { .. } | Error::NonMonotoneGrid { .. } | Error::Io(_) => EXIT_VALIDATION,
            _ => EXIT_RUNTIME,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Physics settings after merging the file, flags and defaults, in internal units.
#[derive(Debug, Clone, Serialize)]
struct ModelResolved {
    sequences: Vec<String>,
    theta: f64,
    detuning: f64,
    rabi: Option<f64>,
    noise: String,
    lambda: f64,
    gamma: f64,
    epsilon: f64,
}

impl ModelResolved {
    fn kinds(&self) -> Vec<SequenceKind> {
        self.sequences.iter().map(|s| s.parse().expect("validated")).collect()
    }

    fn noise_params(&self) -> CliResult<NoiseParams> {
        let kind: NoiseKind = self.noise.parse()?;
        Ok(NoiseParams::new(self.lambda, self.gamma, kind)?)
    }
}

struct Context {
    file: FileConfig,
    seed: u64,
    out: PathBuf,
    scale: f64,
    exec: ExecConfig,
}

fn check_positive(name: &str, v: f64) -> CliResult<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::validation(format!(
            "field `{name}`: must be positive, got {v}"
        )))
    }
}

impl Context {
    fn model(&self, m: &ModelArgs, default_sequences: &[&str]) -> CliResult<ModelResolved> {
        let f = &self.file;
        let mut sequences = if m.sequence.is_empty() {
            f.sequence
                .clone()
                .unwrap_or_else(|| default_sequences.iter().map(|s| s.to_string()).collect())
        } else {
            m.sequence.clone()
        };
        for s in &mut sequences {
            let kind: SequenceKind = s
                .parse()
                .map_err(|e: Error| CliError::validation(format!("field `sequence`: {e}")))?;
            if kind == SequenceKind::Custom {
                return Err(CliError::validation(
                    "field `sequence`: custom sequences are library-only",
                ));
            }
            *s = kind.name().to_string();
        }
        let detuning = m.detuning.or(f.detuning).unwrap_or(2.0 * PI * 0.5 / self.scale) * self.scale;
        let rabi = m.rabi.or(f.rabi).map(|r| r * self.scale);
        let convention = match m.convention.clone().or(f.convention.clone()).as_deref() {
            None | Some("geometric") => TiltConvention::Geometric,
            Some("effective-rabi") => TiltConvention::EffectiveRabi,
            Some(other) => {
                return Err(CliError::validation(format!(
                    "field `convention`: unknown value `{other}`"
                )))
            }
        };
        let theta = match (m.theta.or(f.theta), m.theta_pi.or(f.theta_pi), rabi) {
            (Some(t), _, _) => t,
            (None, Some(tp), _) => tp * PI,
            (None, None, Some(r)) => DrivingParams::new(r, detuning)?.tilt_angle(convention).theta,
            (None, None, None) => 0.2 * PI,
        };
        if !(theta > 0.0 && theta <= PI / 2.0 + 1e-12) {
            return Err(CliError::validation(format!(
                "field `theta`: must lie in (0, π/2], got {theta}"
            )));
        }
        let gamma = m.gamma.or(f.gamma).unwrap_or(2.0 * PI * 0.1 / self.scale) * self.scale;
        let resolved = ModelResolved {
            sequences,
            theta,
            detuning,
            rabi,
            noise: m.noise.clone().or(f.noise.clone()).unwrap_or_else(|| "ou".into()),
            lambda: m.lambda.or(f.lambda).unwrap_or(2.5),
            gamma,
            epsilon: m.epsilon.or(f.epsilon).unwrap_or(0.0) * self.scale,
        };
        resolved
            .noise_params()
            .map_err(|e| CliError::validation(format!("noise settings: {}", e.message)))?;
        if !resolved.detuning.is_finite() || !resolved.epsilon.is_finite() {
            return Err(CliError::validation("fields `detuning`/`epsilon` must be finite"));
        }
        Ok(resolved)
    }

    fn tau_grid(&self, g: &GridArgs) -> CliResult<(f64, f64, usize)> {
        let f = &self.file;
        let start = g.tau_start.or(f.tau_start).unwrap_or(0.0);
        let stop = g.tau_stop.or(f.tau_stop).unwrap_or(4.0);
        let count = g.tau_count.or(f.tau_count).unwrap_or(40);
        if count < 2 {
            return Err(CliError::validation(format!(
                "field `tau_count`: need at least 2 points, got {count}"
            )));
        }
        if !(start.is_finite() && stop.is_finite() && start >= 0.0 && stop > start) {
            return Err(CliError::validation(format!(
                "fields `tau_start`/`tau_stop`: need stop > start ≥ 0, got start={start}, stop={stop}"
            )));
        }
        Ok((start, stop, count))
    }
}

fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| start + (stop - start) * k as f64 / (count - 1) as f64)
        .collect()
}

fn config_hash<T: Serialize>(resolved: &T) -> String {
    let bytes = serde_json::to_vec(resolved).expect("plain data serialises");
    Sha256::digest(&bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Files are only written once every output has been computed.
fn write_outputs(dir: &Path, files: &[(String, String)]) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}

fn analytic_curve(kind: SequenceKind, m: &ModelResolved, noise: &NoiseParams, taus: &[f64]) -> CliResult<String> {
    let mut out = String::from("tau,signal");
    let hr = kind == SequenceKind::HahnRamsey;
    if hr {
        out.push_str(",component_constant,component_ramsey_like,component_cos_delta,component_cos_2delta");
    }
    out.push('\n');
    for &tau in taus {
        let signal = match kind {
            SequenceKind::HahnRamsey => {
                hr_signal_biased(m.theta, m.detuning, &BiasParams { epsilon: m.epsilon }, noise, tau)
            }
            SequenceKind::Ramsey => sequence_signal(kind, m.theta, m.detuning + m.epsilon, noise, tau)?,
            _ => sequence_signal(kind, m.theta, m.detuning, noise, tau)?,
        };
        let _ = write!(out, "{},{}", Num(tau), Num(signal));
        if hr {
            let c = signal_components(m.theta, m.detuning, noise, tau);
            let _ = write!(
                out,
                ",{},{},{},{}",
                Num(c.constant_term),
                Num(c.ramsey_like_term),
                Num(c.cos_delta_term),
                Num(c.cos_2delta_term)
            );
        }
        out.push('\n');
    }
    Ok(out)
}

fn analytic_values(kind: SequenceKind, m: &ModelResolved, noise: &NoiseParams, taus: &[f64]) -> CliResult<Vec<f64>> {
    taus.iter()
        .map(|&tau| {
            Ok(match kind {
                SequenceKind::HahnRamsey => {
                    hr_signal_biased(m.theta, m.detuning, &BiasParams { epsilon: m.epsilon }, noise, tau)
                }
                SequenceKind::Ramsey => sequence_signal(kind, m.theta, m.detuning + m.epsilon, noise, tau)?,
                _ => sequence_signal(kind, m.theta, m.detuning, noise, tau)?,
            })
        })
        .collect()
}

fn compare_csv(taus: &[f64], analytic: &[f64], mc: &SignalCurve) -> String {
    let mut out = String::from("tau,analytic,mc_mean,mc_stderr,z\n");
    for k in 0..taus.len() {
        let diff = mc.means[k] - analytic[k];
        let z = if mc.stderrs[k] > 0.0 {
            diff / mc.stderrs[k]
        } else if diff.abs() <= 1e-12 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            Num(taus[k]),
            Num(analytic[k]),
            Num(mc.means[k]),
            Num(mc.stderrs[k]),
            Num(z)
        );
    }
    out
}

#[derive(Serialize)]
struct SimulateResolved<'a> {
    command: &'static str,
    model: &'a ModelResolved,
    tau_grid: (f64, f64, usize),
    engine: Engine,
    trajectories: usize,
    time_step: f64,
    finite_pulses: bool,
    seed: u64,
}

fn simulate(
    ctx: &Context,
    model: &ModelArgs,
    grid: &GridArgs,
    engine: Option<Engine>,
    trajectories: Option<usize>,
    time_step: Option<f64>,
    finite_pulses: bool,
) -> CliResult<Vec<PathBuf>> {
    let f = &ctx.file;
    let m = ctx.model(model, &["hahn-ramsey"])?;
    let tau_grid = ctx.tau_grid(grid)?;
    let engine = engine.or(f.engine).unwrap_or(Engine::Analytic);
    let trajectories = trajectories.or(f.trajectories).unwrap_or(10_000);
    if trajectories == 0 {
        return Err(CliError::validation("field `trajectories`: must be at least 1"));
    }
    let time_step = check_positive("time_step", time_step.or(f.time_step).unwrap_or(0.01))?;
    let finite = finite_pulses || f.finite_pulses.unwrap_or(false);
    if finite && m.rabi.is_none() {
        return Err(CliError::validation("field `rabi`: required with finite pulses"));
    }
    let noise = m.noise_params()?;
    let taus = linspace(tau_grid.0, tau_grid.1, tau_grid.2);
    let resolved = SimulateResolved {
        command: "simulate",
        model: &m,
        tau_grid,
        engine,
        trajectories,
        time_step,
        finite_pulses: finite,
        seed: ctx.seed,
    };
    let hash = config_hash(&resolved);

    let mc_cfg = McConfig {
        n_trajectories: trajectories,
        master_seed: ctx.seed,
        time_step,
        pulse_model: match (finite, m.rabi) {
            (true, Some(rabi)) => PulseModel::FiniteDuration { rabi },
            _ => PulseModel::Instantaneous,
        },
        exec: ctx.exec,
    };
    let mut files = Vec::new();
    for kind in m.kinds() {
        let name = kind.name();
        let analytic = if engine != Engine::Montecarlo {
            let body = analytic_curve(kind, &m, &noise, &taus)?;
            files.push((format!("{name}_analytic.csv"), with_hash_header(&hash, &body)));
            Some(analytic_values(kind, &m, &noise, &taus)?)
        } else {
            None
        };
        if engine != Engine::Analytic {
            let exp = Experiment::new(kind, m.theta, m.detuning).with_bias(BiasParams { epsilon: m.epsilon });
            let curve = run_experiment(&exp, &noise, &taus, &mc_cfg)?;
            for w in &curve.warnings {
                eprintln!("warning: {name}: {w}");
            }
            files.push((
                format!("{name}_montecarlo.csv"),
                with_hash_header(&hash, &curve.to_csv()),
            ));
            if let Some(a) = &analytic {
                files.push((
                    format!("{name}_compare.csv"),
                    with_hash_header(&hash, &compare_csv(&taus, a, &curve)),
                ));
            }
        }
    }
    write_outputs(&ctx.out, &files)
}

#[derive(Serialize)]
struct ComponentsResolved<'a> {
    command: &'static str,
    model: &'a ModelResolved,
    tau_grid: (f64, f64, usize),
    theta_count: usize,
}

fn components(
    ctx: &Context,
    model: &ModelArgs,
    grid: &GridArgs,
    theta_count: Option<usize>,
) -> CliResult<Vec<PathBuf>> {
    let m = ctx.model(model, &["hahn-ramsey"])?;
    let tau_grid = ctx.tau_grid(grid)?;
    let theta_count = theta_count.or(ctx.file.theta_count).unwrap_or(91);
    if theta_count < 2 {
        return Err(CliError::validation("field `theta_count`: need at least 2 points"));
    }
    let noise = m.noise_params()?;
    let hash = config_hash(&ComponentsResolved {
        command: "components",
        model: &m,
        tau_grid,
        theta_count,
    });

    let mut exps =
        String::from("tau,ramsey_like,half_period,hahn_like,closed_ramsey_like,closed_half_period,closed_hahn_like\n");
    for tau in linspace(tau_grid.0, tau_grid.1, tau_grid.2) {
        let _ = write!(exps, "{}", Num(tau));
        for kind in FilterKind::ALL {
            let _ = write!(exps, ",{}", Num(chi_filter(kind, &noise, tau)?));
        }
        for kind in FilterKind::ALL {
            let _ = write!(exps, ",{}", Num(kind.closed_form(&noise, tau)));
        }
        exps.push('\n');
    }
    let mut weights = String::from("theta,theta_over_pi,constant,ramsey_like,cos_delta,cos_2delta\n");
    for theta in linspace(0.0, PI / 2.0, theta_count) {
        let w = component_weights(theta);
        let _ = writeln!(
            weights,
            "{},{},{},{},{},{}",
            Num(theta),
            Num(theta / PI),
            Num(w[0]),
            Num(w[1]),
            Num(w[2]),
            Num(w[3])
        );
    }
    write_outputs(
        &ctx.out,
        &[
            ("exponents.csv".into(), with_hash_header(&hash, &exps)),
            ("weights.csv".into(), with_hash_header(&hash, &weights)),
        ],
    )
}

#[derive(Serialize)]
struct FitReport<'a> {
    config_hash: String,
    data: &'a Path,
    model: ModelArg,
    fit: crate::fit::DecayFit,
}

fn fit(
    ctx: &Context,
    data: Option<PathBuf>,
    model: Option<ModelArg>,
    time_scale: Option<f64>,
) -> CliResult<Vec<PathBuf>> {
    let f = &ctx.file;
    let data = data
        .or_else(|| f.data.as_ref().and_then(|d| d.first().cloned()))
        .ok_or_else(|| CliError::validation("field `data`: a data file is required"))?;
    let model = model.or(f.model).unwrap_or(ModelArg::GaussianEnvelope);
    let scale = check_positive("time_scale", time_scale.or(f.time_scale).unwrap_or(1.0))?;
    let curve = read_data_csv(&data, scale)?;
    let result = fit_decay(&curve, model.model())?;
    let hash = config_hash(&("fit", &data, model, scale, &curve.taus, &curve.means, &curve.stderrs));
    let report = FitReport {
        config_hash: hash,
        data: &data,
        model,
        fit: result,
    };
    let json = serde_json::to_string_pretty(&report).expect("plain data serialises") + "\n";
    print!("{json}");
    write_outputs(&ctx.out, &[("fit.json".into(), json)])
}

#[derive(Serialize)]
struct ScanSummary {
    file: PathBuf,
    sequence: String,
    best_lambda: Option<f64>,
    best_gamma: Option<f64>,
    residual: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn scan(
    ctx: &Context,
    model: &ModelArgs,
    data: Vec<PathBuf>,
    time_scale: Option<f64>,
    lambda_axis: (Option<f64>, Option<f64>, Option<usize>),
    gamma_axis: (Option<f64>, Option<f64>, Option<usize>),
) -> CliResult<Vec<PathBuf>> {
    let f = &ctx.file;
    let m = ctx.model(model, &["hahn-ramsey"])?;
    let data = if data.is_empty() {
        f.data.clone().unwrap_or_default()
    } else {
        data
    };
    if data.is_empty() {
        return Err(CliError::validation("field `data`: at least one data file is required"));
    }
    let kinds = m.kinds();
    if kinds.len() != 1 && kinds.len() != data.len() {
        return Err(CliError::validation(format!(
            "field `sequence`: give one sequence or one per data file ({} files, {} sequences)",
            data.len(),
            kinds.len()
        )));
    }
    let scale = check_positive("time_scale", time_scale.or(f.time_scale).unwrap_or(1.0))?;
    let axis = |name: &str,
                (lo, hi, n): (Option<f64>, Option<f64>, Option<usize>),
                d: (f64, f64),
                conv: f64|
     -> CliResult<Vec<f64>> {
        let lo = lo.unwrap_or(d.0) * conv;
        let hi = hi.unwrap_or(d.1) * conv;
        let n = n.unwrap_or(21);
        if n < 1 || !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi < lo || (n > 1 && hi == lo) {
            return Err(CliError::validation(format!(
                "field `{name}`: bad axis [{lo}, {hi}] with {n} points"
            )));
        }
        Ok(if n == 1 { vec![lo] } else { linspace(lo, hi, n) })
    };
    let lambda_grid = axis(
        "lambda",
        (
            lambda_axis.0.or(f.lambda_min),
            lambda_axis.1.or(f.lambda_max),
            lambda_axis.2.or(f.lambda_count),
        ),
        (0.5, 5.0),
        1.0,
    )?;
    let gamma_grid = axis(
        "gamma",
        (
            gamma_axis.0.or(f.gamma_min),
            gamma_axis.1.or(f.gamma_max),
            gamma_axis.2.or(f.gamma_count),
        ),
        (0.0, 2.0 * PI * 0.3 / ctx.scale),
        ctx.scale,
    )?;
    if lambda_grid[0] <= 0.0 {
        return Err(CliError::validation("field `lambda_min`: must be positive"));
    }

    let curves = data
        .iter()
        .map(|p| read_data_csv(p, scale))
        .collect::<Result<Vec<_>, _>>()?;
    let hash = config_hash(&("scan", &m, &data, scale, &lambda_grid, &gamma_grid));
    let mut maps = Vec::new();
    let mut summary = Vec::new();
    let mut files = Vec::new();
    for (k, curve) in curves.iter().enumerate() {
        let kind = kinds[if kinds.len() == 1 { 0 } else { k }];
        let map = scan_noise_params(curve, kind, m.theta, m.detuning, &lambda_grid, &gamma_grid, &ctx.exec)?;
        let best = map.best();
        summary.push(ScanSummary {
            file: data[k].clone(),
            sequence: kind.name().into(),
            best_lambda: best.map(|b| b.0),
            best_gamma: best.map(|b| b.1),
            residual: map.min_residual(),
        });
        files.push((format!("scan_{k}.csv"), with_hash_header(&hash, &map.to_csv())));
        maps.push(map);
    }
    if maps.len() > 1 {
        let joint = ResidualMap::combine(&maps)?;
        files.push(("scan_joint.csv".into(), with_hash_header(&hash, &joint.to_csv())));
    }
    let json = serde_json::to_string_pretty(&summary).expect("plain data serialises") + "\n";
    print!("{json}");
    files.push(("scan_summary.json".into(), json));
    write_outputs(&ctx.out, &files)
}

fn sensitivity_cmd(
    ctx: &Context,
    model: &ModelArgs,
    u: Option<f64>,
    v: Option<f64>,
    gamma_e: Option<f64>,
) -> CliResult<Vec<PathBuf>> {
    let f = &ctx.file;
    let m = ctx.model(model, &["hahn-ramsey"])?;
    let readout = ReadoutModel::new(u.or(f.u).unwrap_or(0.03), v.or(f.v).unwrap_or(0.02))?;
    let gamma_e = check_positive("gamma_e", gamma_e.or(f.gamma_e).unwrap_or(GAMMA_E_DEFAULT))?;
    let noise = m.noise_params()?;
    let result = sensitivity(&noise, &readout, m.theta, m.detuning, gamma_e)?;
    #[derive(Serialize)]
    struct Report<'a> {
        config_hash: String,
        alpha: f64,
        beta: f64,
        gamma_e: f64,
        result: &'a crate::sensitivity::SensitivityResult,
    }
    let report = Report {
        config_hash: config_hash(&("sensitivity", &m, readout, gamma_e)),
        alpha: readout.alpha(),
        beta: readout.beta(),
        gamma_e,
        result: &result,
    };
    let json = serde_json::to_string_pretty(&report).expect("plain data serialises") + "\n";
    print!("{json}");
    write_outputs(&ctx.out, &[("sensitivity.json".into(), json)])
}

fn bloch(ctx: &Context, model: &ModelArgs, tau: Option<f64>, samples: Option<usize>) -> CliResult<Vec<PathBuf>> {
    let m = ctx.model(model, &["hahn-ramsey"])?;
    let tau = check_positive("tau", tau.or(ctx.file.tau).unwrap_or(0.5))?;
    let samples = samples.or(ctx.file.samples).unwrap_or(50);
    if samples == 0 {
        return Err(CliError::validation("field `samples`: must be at least 1"));
    }
    let hash = config_hash(&("bloch", &m, tau, samples));
    let mut files = Vec::new();
    for kind in m.kinds() {
        let pts = bloch_trajectory(kind, m.theta, m.detuning, tau, samples)?;
        files.push((
            format!("{}_bloch.csv", kind.name()),
            with_hash_header(&hash, &bloch_to_csv(&pts)),
        ));
    }
    write_outputs(&ctx.out, &files)
}

fn load_file(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> u8 {
    match execute(cli) {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn execute(cli: Cli) -> CliResult<Vec<PathBuf>> {
    let file = load_file(cli.config.as_deref())?;
    let unit = cli.freq_unit.or(file.freq_unit).unwrap_or(FreqUnit::Rad);
    let threads = cli.threads.or(file.threads);
    if threads == Some(0) {
        return Err(CliError::validation("field `threads`: must be at least 1"));
    }
    let ctx = Context {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        out: cli
            .out
            .clone()
            .or(file.out.clone())
            .unwrap_or_else(|| PathBuf::from("out")),
        scale: match unit {
            FreqUnit::Rad => 1.0,
            FreqUnit::Cycles => 2.0 * PI,
        },
        exec: ExecConfig::parallel(threads),
        file,
    };
    match cli.command {
        Command::Simulate {
            model,
            grid,
            engine,
            trajectories,
            time_step,
            finite_pulses,
        } => simulate(&ctx, &model, &grid, engine, trajectories, time_step, finite_pulses),
        Command::Components {
            model,
            grid,
            theta_count,
        } => components(&ctx, &model, &grid, theta_count),
        Command::Fit {
            data,
            model,
            time_scale,
        } => fit(&ctx, data, model, time_scale),
        Command::Scan {
            model,
            data,
            time_scale,
            lambda_min,
            lambda_max,
            lambda_count,
            gamma_min,
            gamma_max,
            gamma_count,
        } => scan(
            &ctx,
            &model,
            data,
            time_scale,
            (lambda_min, lambda_max, lambda_count),
            (gamma_min, gamma_max, gamma_count),
        ),
        Command::Sensitivity { model, u, v, gamma_e } => sensitivity_cmd(&ctx, &model, u, v, gamma_e),
        Command::Bloch { model, tau, samples } => bloch(&ctx, &model, tau, samples),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("hrsim").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn bad_grid_is_a_validation_error_and_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o");
        let cli = parse(&[
            "simulate",
            "--tau-start",
            "2",
            "--tau-stop",
            "1",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(run(cli), EXIT_VALIDATION);
        assert!(!out.exists());
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, r#"{"lamda": 2.0}"#).unwrap();
        let cli = parse(&["simulate", "--config", cfg.to_str().unwrap()]);
        let err = execute(cli).unwrap_err();
        assert_eq!(err.code, EXIT_VALIDATION);
        assert!(err.message.contains("lamda"), "{}", err.message);
    }

    #[test]
    fn flags_override_file_and_cycles_scale() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, r#"{"detuning": 1.0, "gamma": 0.1, "freq_unit": "cycles"}"#).unwrap();
        let file = load_file(Some(&cfg)).unwrap();
        let ctx = Context {
            file,
            seed: 0,
            out: dir.path().into(),
            scale: 2.0 * PI,
            exec: ExecConfig::sequential(),
        };
        let m = ctx
            .model(
                &ModelArgs {
                    detuning: Some(0.5),
                    ..Default::default()
                },
                &["ramsey"],
            )
            .unwrap();
        assert_eq!(m.detuning, PI);
        assert_eq!(m.gamma, 0.2 * PI);
        assert_eq!(m.sequences, vec!["ramsey".to_string()]);
    }

    #[test]
    fn missing_data_file_is_validation_error() {
        let cli = parse(&["fit", "--data", "/nonexistent/file.csv"]);
        assert_eq!(execute(cli).unwrap_err().code, EXIT_VALIDATION);
    }

    #[test]
    fn hash_ignores_nothing_in_resolved_config() {
        assert_ne!(config_hash(&("a", 1.0)), config_hash(&("a", 1.5)));
        assert_eq!(config_hash(&("a", 1.0)).len(), 64);
    }
}
