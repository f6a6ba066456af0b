//! Minimum RP estimation by quasi-Newton ascent on `H_n^{(α)}`.
//!
//! For `α > 0` the optimizer works on `H/α`, whose gradient is exactly the mean
//! estimating function `(1/n) Σ Ψ_{i,α}`; at `α = 0` it works on the mean
//! log-likelihood. The initial inverse Hessian is `Φ_{n,α}⁻¹` at the start point,
//! which makes the iteration insensitive to covariate scaling.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::asymptotics::{phi_matrix, sandwich_v};
use crate::error::{Error, Result};
use crate::model::{
    check_data, mean_score_unchecked, objective_unchecked, probs_unchecked, Coefficients, DesignMatrix,
    ResponseMatrix, TuningAlpha,
};

/// Coefficient 2-norm beyond which the data are declared separated.
pub const SEPARATION_THRESHOLD: f64 = 1e4;

const SEPARATION_PROB_GAP: f64 = 1e-6;
const ARMIJO_C1: f64 = 1e-4;
const RESTART_SCALE: f64 = 0.5;
/// Longest trial step relative to `max(1, ‖β‖)`; keeps the line search out of the
/// flat far region where the bounded RP objective can exceed its value near β̂.
const MAX_RELATIVE_STEP: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Initializer {
    Zeros,
    /// Fit `α = 0` first and start from it (identical to `Zeros` for the MLE itself).
    MleWarmStart,
    UserSupplied(Coefficients),
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Bound on the ∞-norm of the mean estimating function.
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    pub initializer: Initializer,
    /// Perturbed restarts tried when the first run does not converge.
    pub restarts: usize,
    pub seed: u64,
    /// Skip the sandwich covariance (simulation loops that only need `β̂`).
    pub compute_covariance: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-8,
            step_tolerance: 1e-10,
            initializer: Initializer::MleWarmStart,
            restarts: 3,
            seed: 0,
            compute_covariance: true,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be ≥ 1"));
        }
        if !(self.gradient_tolerance > 0.0 && self.step_tolerance > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        Ok(())
    }

    fn with_initializer(&self, init: Initializer) -> Self {
        Self {
            initializer: init,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta_hat: Coefficients,
    pub alpha: TuningAlpha,
    /// `H_n^{(α)}(β̂)`.
    pub objective: f64,
    /// ∞-norm of the mean estimating function at `β̂`.
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_obs: usize,
    /// `V_{n,α}(β̂)`; `None` when not requested or when `Φ` is singular.
    pub covariance_v: Option<DMatrix<f64>>,
    pub warnings: Vec<String>,
}

impl FitResult {
    /// `√(diag V / n)`.
    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        let v = self.covariance_v.as_ref()?;
        let n = self.n_obs as f64;
        Some((0..v.nrows()).map(|j| (v[(j, j)] / n).max(0.0).sqrt()).collect())
    }
}

struct RunOutcome {
    beta: Vec<f64>,
    objective: f64,
    gradient_norm: f64,
    iterations: usize,
    converged: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

struct Problem<'a> {
    design: &'a DesignMatrix,
    response: &'a ResponseMatrix,
    template: Coefficients,
    alpha: f64,
}

impl Problem<'_> {
    fn coefs(&self, v: &[f64]) -> Coefficients {
        self.template.with_values(v.to_vec()).expect("finite coefficients")
    }

    /// Quantity minimized: `−H` at `α = 0`, `−H/α` otherwise.
    fn loss(&self, v: &[f64]) -> f64 {
        let h = objective_unchecked(self.design, self.response, &self.coefs(v), self.alpha);
        if self.alpha == 0.0 {
            -h
        } else {
            -h / self.alpha
        }
    }

    fn mean_score(&self, v: &[f64]) -> Vec<f64> {
        mean_score_unchecked(self.design, self.response, &self.coefs(v), self.alpha)
    }

    fn initial_inverse_hessian(&self, v: &[f64]) -> DMatrix<f64> {
        let p = v.len();
        let alpha = TuningAlpha::new(self.alpha).expect("validated alpha");
        phi_matrix(self.design, &self.coefs(v), alpha)
            .ok()
            .and_then(|phi| {
                let phi = crate::linalg::symmetrize(&phi);
                phi.cholesky().map(|c| c.inverse())
            })
            .filter(|m| m.iter().all(|x| x.is_finite()))
            .unwrap_or_else(|| DMatrix::identity(p, p))
    }

    fn bfgs(&self, start: &[f64], opts: &FitOptions) -> Result<RunOutcome> {
        let p = start.len();
        let mut x = DVector::from_column_slice(start);
        let mut f = self.loss(x.as_slice());
        let mut score = self.mean_score(x.as_slice());
        let mut g = -DVector::from_column_slice(&score);
        let mut h_inv = self.initial_inverse_hessian(x.as_slice());
        let mut iterations = 0;
        let mut converged = inf_norm(&score) <= opts.gradient_tolerance;

        while !converged && iterations < opts.max_iterations {
            let mut dir = -(&h_inv * &g);
            let mut slope = g.dot(&dir);
            if !(slope < 0.0) {
                h_inv = self.initial_inverse_hessian(x.as_slice());
                dir = -(&h_inv * &g);
                slope = g.dot(&dir);
                if !(slope < 0.0) {
                    dir = -g.clone();
                    slope = g.dot(&dir);
                }
            }

            let cap = MAX_RELATIVE_STEP * x.norm().max(1.0);
            let dir_norm = dir.norm();
            if dir_norm > cap {
                dir *= cap / dir_norm;
                slope *= cap / dir_norm;
            }

            let mut t = 1.0;
            let accepted = loop {
                let cand = &x + &dir * t;
                let f_new = self.loss(cand.as_slice());
                if f_new.is_finite() && f_new <= f + ARMIJO_C1 * t * slope {
                    break Some((cand, f_new));
                }
                // Directional derivative below the rounding level of the loss: accept a
                // full step that does not increase the loss beyond rounding and reduces
                // the score.
                if t == 1.0 && (-slope) < 1e3 * f64::EPSILON * f.abs().max(1.0) {
                    let s_new = self.mean_score(cand.as_slice());
                    if f_new <= f + 4.0 * f64::EPSILON * f.abs() && inf_norm(&s_new) < inf_norm(&score) {
                        break Some((cand, f_new));
                    }
                }
                t *= 0.5;
                if t * inf_norm(dir.as_slice()) < opts.step_tolerance {
                    break None;
                }
            };
            let Some((x_new, f_new)) = accepted else {
                break;
            };
            iterations += 1;

            let norm = x_new.norm();
            if norm > SEPARATION_THRESHOLD {
                return Err(Error::Separation { norm });
            }

            let score_new = self.mean_score(x_new.as_slice());
            let g_new = -DVector::from_column_slice(&score_new);
            let s = &x_new - &x;
            let y = &g_new - &g;
            let sy = s.dot(&y);
            if sy > 1e-12 * s.norm() * y.norm() {
                let hy = &h_inv * &y;
                let yhy = y.dot(&hy);
                h_inv += (&s * s.transpose()) * ((sy + yhy) / (sy * sy))
                    - (&hy * s.transpose() + &s * hy.transpose()) / sy;
            }
            let step = inf_norm(s.as_slice());
            x = x_new;
            f = f_new;
            g = g_new;
            score = score_new;
            converged = inf_norm(&score) <= opts.gradient_tolerance;
            if !converged && step < opts.step_tolerance {
                break;
            }
        }
        if p == 0 {
            converged = true;
        }
        let objective = if self.alpha == 0.0 { -f } else { -f * self.alpha };
        Ok(RunOutcome {
            gradient_norm: inf_norm(&score),
            beta: x.as_slice().to_vec(),
            objective,
            iterations,
            converged,
        })
    }
}

/// Minimum RP estimate of β at tuning parameter `alpha` (the MLE at `α = 0`).
pub fn fit(
    design: &DesignMatrix,
    response: &ResponseMatrix,
    alpha: TuningAlpha,
    options: &FitOptions,
) -> Result<FitResult> {
    options.validate()?;
    let template = Coefficients::zeros(response.n_categories() - 1, design.n_cols());
    check_data(design, response, &template)?;

    let start = match &options.initializer {
        Initializer::Zeros => template.clone(),
        Initializer::UserSupplied(b) => {
            if b.n_blocks() != template.n_blocks() || b.block_len() != template.block_len() {
                return Err(Error::dims("initial coefficients", template.len(), b.len()));
            }
            b.clone()
        }
        Initializer::MleWarmStart if !alpha.is_mle() => {
            let mle_opts = FitOptions {
                initializer: Initializer::Zeros,
                compute_covariance: false,
                ..options.clone()
            };
            let mle = fit(design, response, TuningAlpha::MLE, &mle_opts)?;
            mle.beta_hat
        }
        Initializer::MleWarmStart => template.clone(),
    };
    optimize_from(design, response, alpha, &start, options)
}

fn optimize_from(
    design: &DesignMatrix,
    response: &ResponseMatrix,
    alpha: TuningAlpha,
    start: &Coefficients,
    options: &FitOptions,
) -> Result<FitResult> {
    let problem = Problem {
        design,
        response,
        template: start.clone(),
        alpha: alpha.value(),
    };
    let mut warnings = Vec::new();
    if design.n_rows() <= start.len() {
        warnings.push(format!(
            "n = {} is not larger than the number of parameters p = {}",
            design.n_rows(),
            start.len()
        ));
    }

    let mut best = problem.bfgs(start.as_slice(), options)?;
    let mut total_iterations = best.iterations;
    if !best.converged && options.restarts > 0 {
        let mut rng = ChaCha20Rng::seed_from_u64(options.seed);
        let noise = Normal::new(0.0, RESTART_SCALE).expect("valid normal");
        for _ in 0..options.restarts {
            let perturbed: Vec<f64> = start.as_slice().iter().map(|b| b + noise.sample(&mut rng)).collect();
            let run = problem.bfgs(&perturbed, options)?;
            total_iterations += run.iterations;
            let better = match (run.converged, best.converged) {
                (true, false) => true,
                (false, true) => false,
                _ => run.objective > best.objective,
            };
            if better {
                best = run;
            }
        }
    }
    if !best.converged {
        warnings.push(format!(
            "not converged at alpha = {alpha}: mean score norm {:.3e} after {} iterations",
            best.gradient_norm, total_iterations
        ));
    }

    let beta_hat = start.with_values(best.beta)?;
    if perfectly_fitted(design, response, &beta_hat) {
        return Err(Error::Separation { norm: beta_hat.norm() });
    }
    let covariance_v = if options.compute_covariance {
        match sandwich_v(design, &beta_hat, alpha) {
            Ok(s) => Some(s.v),
            Err(e) => {
                warnings.push(format!("covariance unavailable: {e}"));
                None
            }
        }
    } else {
        None
    };
    Ok(FitResult {
        beta_hat,
        alpha,
        objective: best.objective,
        gradient_norm: best.gradient_norm,
        iterations: best.iterations,
        converged: best.converged,
        n_obs: design.n_rows(),
        covariance_v,
        warnings,
    })
}

/// Every observed category fitted with probability one: the optimum lies at infinity.
fn perfectly_fitted(design: &DesignMatrix, response: &ResponseMatrix, beta: &Coefficients) -> bool {
    design
        .rows()
        .zip(response.categories())
        .all(|(x, &c)| 1.0 - probs_unchecked(x, beta).as_slice()[c] < SEPARATION_PROB_GAP)
}

/// Fits an ascending grid of tuning parameters, each warm-started from the previous fit.
///
/// The chain starts at the MLE unless the grid already begins at zero. A failed grid
/// point does not break the chain; the next point restarts from the last success.
pub fn fit_path(
    design: &DesignMatrix,
    response: &ResponseMatrix,
    alphas: &[f64],
    options: &FitOptions,
) -> Result<Vec<Result<FitResult>>> {
    if alphas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("tuning grid must be ascending"));
    }
    let alphas: Vec<TuningAlpha> = alphas.iter().map(|&a| TuningAlpha::new(a)).collect::<Result<_>>()?;
    let mut previous: Option<Coefficients> = match &options.initializer {
        Initializer::UserSupplied(b) => Some(b.clone()),
        _ => None,
    };
    let mut out = Vec::with_capacity(alphas.len());
    for &a in &alphas {
        let opts = match &previous {
            Some(b) => options.with_initializer(Initializer::UserSupplied(b.clone())),
            None if a.is_mle() => options.with_initializer(Initializer::Zeros),
            None => options.with_initializer(Initializer::MleWarmStart),
        };
        let res = fit(design, response, a, &opts);
        if let Ok(r) = &res {
            if r.converged {
                previous = Some(r.beta_hat.clone());
            }
        }
        out.push(res);
    }
    Ok(out)
}

/// Most probable category per row; ties go to the lowest index.
pub fn classify(design: &DesignMatrix, beta: &Coefficients) -> Result<Vec<usize>> {
    beta.check_design(design)?;
    Ok(design
        .rows()
        .map(|x| {
            let p = probs_unchecked(x, beta);
            argmax_first(p.as_slice())
        })
        .collect())
}

pub(crate) fn argmax_first(p: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in p.iter().enumerate().skip(1) {
        if *v > p[best] {
            best = j;
        }
    }
    best
}
