//! Sequential vs rayon execution of the two hot loops: Monte Carlo trajectories
//! and (λ, Γ) grid scans. Without the `parallel` feature both arms run sequentially.

use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hrsim::analytic::hahn_ramsey_signal;
use hrsim::exec::ExecConfig;
use hrsim::montecarlo::{run_mc, McConfig, SignalCurve};
use hrsim::noise::NoiseParams;
use hrsim::scan::scan_noise_params;
use hrsim::spin::SequenceKind;

const THETA: f64 = 0.2 * PI;
const DETUNING: f64 = PI;

fn engines() -> [(&'static str, ExecConfig); 2] {
    [
        ("sequential", ExecConfig::sequential()),
        ("parallel", ExecConfig::parallel(None)),
    ]
}

fn monte_carlo(c: &mut Criterion) {
    let noise = NoiseParams::ou(2.5, 2.0 * PI * 0.1).unwrap();
    let taus: Vec<f64> = (1..=20).map(|k| 0.1 * k as f64).collect();
    let mut group = c.benchmark_group("monte_carlo_4096");
    group.sample_size(10);
    for (name, exec) in engines() {
        let cfg = McConfig {
            exec,
            ..McConfig::new(4096, 7)
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                run_mc(
                    SequenceKind::HahnRamsey,
                    THETA,
                    DETUNING,
                    &noise,
                    black_box(&taus),
                    &cfg,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn scan(c: &mut Criterion) {
    let truth = NoiseParams::ou(2.0, 0.6).unwrap();
    let taus: Vec<f64> = (0..120).map(|k| 0.05 * k as f64).collect();
    let means = taus
        .iter()
        .map(|&t| hahn_ramsey_signal(THETA, DETUNING, &truth, t))
        .collect();
    let data = SignalCurve::exact(taus, means);
    let lambdas: Vec<f64> = (0..40).map(|k| 0.5 + 0.1 * k as f64).collect();
    let gammas: Vec<f64> = (0..40).map(|k| 0.05 * k as f64).collect();
    let mut group = c.benchmark_group("scan_40x40");
    for (name, exec) in engines() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                scan_noise_params(
                    black_box(&data),
                    SequenceKind::HahnRamsey,
                    THETA,
                    DETUNING,
                    &lambdas,
                    &gammas,
                    &exec,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, scan);
criterion_main!(benches);
