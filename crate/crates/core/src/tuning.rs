//! Data-driven choice of α by minimizing an estimated mean squared error
//! `‖β̂_α − β̂_pilot‖² + trace(V_{n,α}(β̂_α)) / n` (Warwick–Jones criterion).

use crate::error::{Error, Result};
use crate::estimation::{fit, fit_path, FitOptions, FitResult, Initializer};
use crate::model::{Coefficients, DesignMatrix, ResponseMatrix, TuningAlpha};

pub const MAX_PILOT_ITERATIONS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct TuningGrid {
    alphas: Vec<f64>,
    pub pilot_alpha: f64,
    /// Re-run with the selected α as pilot until a fixed point (at most five rounds).
    pub iterate: bool,
}

impl Default for TuningGrid {
    fn default() -> Self {
        Self::regular(0.7, 0.01, 0.5).expect("valid default grid")
    }
}

impl TuningGrid {
    /// `{0, step, 2·step, …}` up to `max` inclusive.
    pub fn regular(max: f64, step: f64, pilot_alpha: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) || !(max >= 0.0 && max.is_finite()) {
            return Err(Error::invalid("grid step must be positive and the maximum nonnegative"));
        }
        let count = (max / step + 1e-9).floor() as usize;
        // Round to suppress accumulated binary error such as 0.1 + 0.2.
        let alphas = (0..=count).map(|i| (i as f64 * step * 1e10).round() / 1e10).collect();
        Self::from_alphas(alphas, pilot_alpha)
    }

    pub fn from_alphas(alphas: Vec<f64>, pilot_alpha: f64) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::invalid("tuning grid is empty"));
        }
        if alphas.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::invalid("tuning grid values must be finite and nonnegative"));
        }
        if alphas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("tuning grid must be strictly ascending"));
        }
        TuningAlpha::new(pilot_alpha)?;
        Ok(Self {
            alphas,
            pilot_alpha,
            iterate: false,
        })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningRow {
    pub alpha: f64,
    /// `‖β̂_α − β̂_pilot‖²`.
    pub bias_sq: f64,
    /// `trace(V) / n`.
    pub variance: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult {
    pub alpha_star: f64,
    /// Converged grid points in ascending α.
    pub table: Vec<TuningRow>,
    /// Grid points without a usable fit, with the reason.
    pub skipped: Vec<(f64, String)>,
    /// Pilot α of the final round.
    pub pilot_alpha: f64,
    pub rounds: usize,
}

struct GridFits {
    fits: Vec<(f64, FitResult)>,
    skipped: Vec<(f64, String)>,
}

fn fit_grid(design: &DesignMatrix, response: &ResponseMatrix, grid: &TuningGrid, options: &FitOptions) -> Result<GridFits> {
    let opts = FitOptions {
        compute_covariance: true,
        ..options.clone()
    };
    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    for (&a, res) in grid.alphas.iter().zip(fit_path(design, response, &grid.alphas, &opts)?) {
        match res {
            Ok(r) if !r.converged => skipped.push((a, "not converged".to_string())),
            Ok(r) if r.covariance_v.is_none() => skipped.push((a, "covariance unavailable".to_string())),
            Ok(r) => fits.push((a, r)),
            Err(e) => skipped.push((a, e.to_string())),
        }
    }
    Ok(GridFits { fits, skipped })
}

fn pilot_fit(
    design: &DesignMatrix,
    response: &ResponseMatrix,
    pilot: f64,
    grid_fits: &GridFits,
    options: &FitOptions,
) -> Result<Coefficients> {
    if let Some((_, r)) = grid_fits.fits.iter().find(|(a, _)| *a == pilot) {
        return Ok(r.beta_hat.clone());
    }
    let opts = FitOptions {
        compute_covariance: false,
        initializer: Initializer::MleWarmStart,
        ..options.clone()
    };
    let r = fit(design, response, TuningAlpha::new(pilot)?, &opts)?;
    if !r.converged {
        return Err(Error::NotConverged(format!("pilot fit at alpha = {pilot}")));
    }
    Ok(r.beta_hat)
}

fn mse_table(fits: &[(f64, FitResult)], pilot: &Coefficients) -> Vec<TuningRow> {
    fits.iter()
        .map(|(a, r)| {
            let bias_sq: f64 = r
                .beta_hat
                .as_slice()
                .iter()
                .zip(pilot.as_slice())
                .map(|(b, p)| (b - p) * (b - p))
                .sum();
            let v = r.covariance_v.as_ref().expect("filtered on covariance");
            let variance = v.trace() / r.n_obs as f64;
            TuningRow {
                alpha: *a,
                bias_sq,
                variance,
                mse: bias_sq + variance,
            }
        })
        .collect()
}

/// First row attaining the minimum, so ties go to the smallest α.
fn argmin(table: &[TuningRow]) -> Option<f64> {
    table
        .iter()
        .filter(|r| r.mse.is_finite())
        .fold(None::<&TuningRow>, |best, r| match best {
            Some(b) if b.mse <= r.mse => Some(b),
            _ => Some(r),
        })
        .map(|r| r.alpha)
}

pub fn select_alpha_wj(
    design: &DesignMatrix,
    response: &ResponseMatrix,
    grid: &TuningGrid,
    options: &FitOptions,
) -> Result<TuningResult> {
    let grid_fits = fit_grid(design, response, grid, options)?;
    if grid_fits.fits.is_empty() {
        return Err(Error::NotConverged("no grid point produced a usable fit".into()));
    }
    let mut pilot_alpha = grid.pilot_alpha;
    let mut rounds = 0;
    loop {
        rounds += 1;
        let pilot = pilot_fit(design, response, pilot_alpha, &grid_fits, options)?;
        let table = mse_table(&grid_fits.fits, &pilot);
        let alpha_star = argmin(&table).ok_or_else(|| Error::NotConverged("no finite MSE on the grid".into()))?;
        if !grid.iterate || alpha_star == pilot_alpha || rounds >= MAX_PILOT_ITERATIONS {
            return Ok(TuningResult {
                alpha_star,
                table,
                skipped: grid_fits.skipped,
                pilot_alpha,
                rounds,
            });
        }
        pilot_alpha = alpha_star;
    }
}
