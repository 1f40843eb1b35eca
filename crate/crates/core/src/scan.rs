//! Residual maps over the noise parameters `(λ, Γ)`.
//!
//! The normalised residual of a cell is `Σ(y − model)² / Σ(y − ȳ)²`, with the
//! model taken from the closed forms. Cells whose model cannot be evaluated
//! are kept as missing.

use std::fmt::Write as _;

use serde::Serialize;

use crate::analytic::sequence_signal;
use crate::error::{invalid, Result};
use crate::exec::ExecConfig;
use crate::io::Num;
use crate::montecarlo::SignalCurve;
use crate::noise::{NoiseKind, NoiseParams};
use crate::spin::SequenceKind;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualMap {
    pub lambda_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    /// `residuals[i][j]` belongs to `(lambda_grid[i], gamma_grid[j])`.
    pub residuals: Vec<Vec<Option<f64>>>,
    /// Grid indices of the smallest residual; the first in row-major order wins ties.
    pub argmin: Option<(usize, usize)>,
}

impl ResidualMap {
    pub fn best(&self) -> Option<(f64, f64)> {
        self.argmin.map(|(i, j)| (self.lambda_grid[i], self.gamma_grid[j]))
    }

    pub fn min_residual(&self) -> Option<f64> {
        self.argmin.and_then(|(i, j)| self.residuals[i][j])
    }

    /// CSV with header `lambda,gamma,residual`; missing cells are `NaN`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,gamma,residual\n");
        for (i, l) in self.lambda_grid.iter().enumerate() {
            for (j, g) in self.gamma_grid.iter().enumerate() {
                let r = self.residuals[i][j].unwrap_or(f64::NAN);
                let _ = writeln!(out, "{},{},{}", Num(*l), Num(*g), Num(r));
            }
        }
        out
    }

    /// Cell-wise sum of maps on the same grid (joint fit of several data sets).
    pub fn combine(maps: &[ResidualMap]) -> Result<ResidualMap> {
        let Some(first) = maps.first() else {
            return Err(invalid("maps", "nothing to combine"));
        };
        if maps
            .iter()
            .any(|m| m.lambda_grid != first.lambda_grid || m.gamma_grid != first.gamma_grid)
        {
            return Err(invalid("maps", "grids differ"));
        }
        let residuals: Vec<Vec<Option<f64>>> = (0..first.lambda_grid.len())
            .map(|i| {
                (0..first.gamma_grid.len())
                    .map(|j| maps.iter().map(|m| m.residuals[i][j]).sum::<Option<f64>>())
                    .collect()
            })
            .collect();
        Ok(ResidualMap {
            argmin: argmin(&residuals),
            lambda_grid: first.lambda_grid.clone(),
            gamma_grid: first.gamma_grid.clone(),
            residuals,
        })
    }
}

fn argmin(residuals: &[Vec<Option<f64>>]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for (i, row) in residuals.iter().enumerate() {
        for (j, r) in row.iter().enumerate() {
            if let Some(r) = *r {
                if best.is_none_or(|b| r < b.2) {
                    best = Some((i, j, r));
                }
            }
        }
    }
    best.map(|(i, j, _)| (i, j))
}

fn validate_grid(name: &'static str, grid: &[f64], strictly_positive: bool) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid(name, "grid is empty"));
    }
    for &v in grid {
        if !v.is_finite() || v < 0.0 || (strictly_positive && v == 0.0) {
            return Err(invalid(name, format!("bad grid value {v}")));
        }
    }
    Ok(())
}

pub fn scan_noise_params(
    data: &SignalCurve,
    kind: SequenceKind,
    theta: f64,
    detuning: f64,
    lambda_grid: &[f64],
    gamma_grid: &[f64],
    exec: &ExecConfig,
) -> Result<ResidualMap> {
    validate_grid("lambda_grid", lambda_grid, true)?;
    validate_grid("gamma_grid", gamma_grid, false)?;
    if data.is_empty() {
        return Err(invalid("data", "no samples"));
    }
    let y = &data.means;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if sst <= 0.0 {
        return Err(invalid("data", "constant signal gives no normalisation"));
    }

    let n_gamma = gamma_grid.len();
    let cells = exec.map_indexed(lambda_grid.len() * n_gamma, |idx| {
        let noise = NoiseParams::new(
            lambda_grid[idx / n_gamma],
            gamma_grid[idx % n_gamma],
            NoiseKind::OrnsteinUhlenbeck,
        )
        .ok()?;
        let mut ssr = 0.0;
        for (&tau, &v) in data.taus.iter().zip(y) {
            let m = sequence_signal(kind, theta, detuning, &noise, tau).ok()?;
            ssr += (v - m).powi(2);
        }
        ssr.is_finite().then_some(ssr / sst)
    });
    let residuals: Vec<Vec<Option<f64>>> = cells.chunks(n_gamma).map(<[Option<f64>]>::to_vec).collect();
    Ok(ResidualMap {
        argmin: argmin(&residuals),
        lambda_grid: lambda_grid.to_vec(),
        gamma_grid: gamma_grid.to_vec(),
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::hahn_ramsey_signal;
    use std::f64::consts::PI;

    fn synthetic(noise: &NoiseParams) -> SignalCurve {
        let taus: Vec<f64> = (0..40).map(|k| 0.1 * k as f64).collect();
        let means = taus
            .iter()
            .map(|&t| hahn_ramsey_signal(0.2 * PI, 3.0, noise, t))
            .collect();
        SignalCurve::exact(taus, means)
    }

    #[test]
    fn truth_is_exact_argmin() {
        let truth = NoiseParams::ou(2.5, 0.6).unwrap();
        let data = synthetic(&truth);
        let lg = [1.5, 2.0, 2.5, 3.0];
        let gg = [0.4, 0.5, 0.6, 0.7];
        let map = scan_noise_params(
            &data,
            SequenceKind::HahnRamsey,
            0.2 * PI,
            3.0,
            &lg,
            &gg,
            &ExecConfig::default(),
        )
        .unwrap();
        assert_eq!(map.argmin, Some((2, 2)));
        assert_eq!(map.min_residual(), Some(0.0));
        assert!(map.residuals.iter().flatten().all(|r| r.unwrap() >= 0.0));
    }

    #[test]
    fn zero_gamma_is_flat_in_lambda() {
        let data = synthetic(&NoiseParams::ou(1.0, 0.0).unwrap());
        let lg = [0.5, 1.0, 2.0];
        let gg = [0.0, 0.3];
        let map = scan_noise_params(
            &data,
            SequenceKind::HahnRamsey,
            0.2 * PI,
            3.0,
            &lg,
            &gg,
            &ExecConfig::sequential(),
        )
        .unwrap();
        assert_eq!(map.argmin, Some((0, 0)));
        for row in &map.residuals {
            assert_eq!(row[0], map.residuals[0][0]);
        }
    }

    #[test]
    fn rejects_empty_grids() {
        let data = synthetic(&NoiseParams::ou(1.0, 0.2).unwrap());
        assert!(scan_noise_params(
            &data,
            SequenceKind::HahnRamsey,
            0.3,
            1.0,
            &[],
            &[0.1],
            &ExecConfig::default()
        )
        .is_err());
        assert!(scan_noise_params(
            &data,
            SequenceKind::HahnRamsey,
            0.3,
            1.0,
            &[0.0],
            &[0.1],
            &ExecConfig::default()
        )
        .is_err());
    }

    #[test]
    fn combine_and_csv() {
        let data = synthetic(&NoiseParams::ou(2.0, 0.5).unwrap());
        let m = scan_noise_params(
            &data,
            SequenceKind::HahnRamsey,
            0.2 * PI,
            3.0,
            &[2.0],
            &[0.5, 0.6],
            &ExecConfig::default(),
        )
        .unwrap();
        let joint = ResidualMap::combine(&[m.clone(), m.clone()]).unwrap();
        assert_eq!(joint.argmin, Some((0, 0)));
        assert!(m.to_csv().starts_with("lambda,gamma,residual\n2,0.5,0\n"));
    }
}
