//! Wald-type tests of linear hypotheses `H₀: Lβ = l`, their normal power
//! approximation and the implied sample size.

use nalgebra::{DMatrix, DVector};

use crate::asymptotics::sandwich_v;
use crate::distributions::{chi_square_quantile, chi_square_sf, normal_cdf, normal_quantile};
use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::linalg::{rank, solve_symmetric_vec};
use crate::model::{Coefficients, DesignMatrix, TuningAlpha};

/// Relative singular-value tolerance for the full-rank check on `L`.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Levels reported in every [`WaldResult`].
pub const DEFAULT_LEVELS: [f64; 3] = [0.01, 0.05, 0.10];

#[derive(Debug, Clone, PartialEq)]
pub struct LinearHypothesis {
    matrix: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl LinearHypothesis {
    pub fn new(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        let (r, p) = matrix.shape();
        if r == 0 || p == 0 {
            return Err(Error::invalid("hypothesis matrix must be non-empty"));
        }
        if rhs.len() != r {
            return Err(Error::dims("hypothesis right-hand side", r, rhs.len()));
        }
        if matrix.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("hypothesis entries must be finite"));
        }
        if r > p || rank(&matrix, RANK_TOLERANCE) < r {
            return Err(Error::invalid(format!("hypothesis matrix ({r}×{p}) is not of full row rank")));
        }
        Ok(Self { matrix, rhs })
    }

    /// `H₀: β[index] = value` in a parameter space of dimension `p`.
    pub fn single_coefficient(p: usize, index: usize, value: f64) -> Result<Self> {
        if index >= p {
            return Err(Error::invalid(format!("coefficient index {index} out of range for p = {p}")));
        }
        let mut m = DMatrix::zeros(1, p);
        m[(0, index)] = 1.0;
        Self::new(m, DVector::from_element(1, value))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    /// Number of restrictions `r`.
    pub fn n_restrictions(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.matrix.ncols()
    }

    /// `Lβ − l`.
    pub fn residual(&self, beta: &Coefficients) -> Result<DVector<f64>> {
        if beta.len() != self.n_params() {
            return Err(Error::dims("hypothesis columns", self.n_params(), beta.len()));
        }
        Ok(&self.matrix * DVector::from_column_slice(beta.as_slice()) - &self.rhs)
    }

    /// `L V Lᵀ`.
    fn middle(&self, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if v.shape() != (self.n_params(), self.n_params()) {
            return Err(Error::dims("covariance matrix", self.n_params(), v.nrows()));
        }
        Ok(&self.matrix * v * self.matrix.transpose())
    }

    /// `(Lβ − l)ᵀ (L V Lᵀ)⁻¹ (Lβ − l)` together with `(L V Lᵀ)⁻¹ (Lβ − l)`.
    fn quadratic_form(&self, beta: &Coefficients, v: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
        let resid = self.residual(beta)?;
        let m = self.middle(v)?;
        let w = solve_symmetric_vec(&m, &resid, "L V Lᵀ")?;
        Ok((resid.dot(&w).max(0.0), w))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaldResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// `(τ, reject)` for each level in [`DEFAULT_LEVELS`].
    pub decisions: Vec<(f64, bool)>,
}

impl WaldResult {
    /// Rejection when the statistic exceeds the upper `tau` chi-square quantile.
    pub fn rejects(&self, tau: f64) -> Result<bool> {
        Ok(self.statistic > chi_square_quantile(self.df, tau)?)
    }
}

/// `W = n (Lβ̂ − l)ᵀ (L V Lᵀ)⁻¹ (Lβ̂ − l)` from an estimate and its covariance.
pub fn wald_from_parts(
    beta: &Coefficients,
    v: &DMatrix<f64>,
    n_obs: usize,
    hyp: &LinearHypothesis,
) -> Result<WaldResult> {
    if n_obs == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let (q, _) = hyp.quadratic_form(beta, v)?;
    let statistic = n_obs as f64 * q;
    let df = hyp.n_restrictions();
    let decisions = DEFAULT_LEVELS
        .iter()
        .map(|&tau| Ok((tau, statistic > chi_square_quantile(df, tau)?)))
        .collect::<Result<_>>()?;
    Ok(WaldResult {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df)?,
        decisions,
    })
}

pub fn wald_statistic(fit: &FitResult, hyp: &LinearHypothesis) -> Result<WaldResult> {
    let v = fit
        .covariance_v
        .as_ref()
        .ok_or_else(|| Error::invalid("fit carries no sandwich covariance"))?;
    wald_from_parts(&fit.beta_hat, v, fit.n_obs, hyp)
}

/// Source of `V_α(β)` for power and sample-size calculations.
pub trait CovarianceProvider {
    fn covariance(&self, beta: &Coefficients, alpha: TuningAlpha) -> Result<DMatrix<f64>>;
}

/// Sandwich covariance averaged over a fixed design.
#[derive(Debug, Clone, Copy)]
pub struct DesignCovariance<'a> {
    pub design: &'a DesignMatrix,
}

impl CovarianceProvider for DesignCovariance<'_> {
    fn covariance(&self, beta: &Coefficients, alpha: TuningAlpha) -> Result<DMatrix<f64>> {
        Ok(sandwich_v(self.design, beta, alpha)?.v)
    }
}

/// Ingredients of the normal power approximation at an alternative `β¹`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerComponents {
    /// `l(β¹) = (Lβ¹ − l)ᵀ (L V Lᵀ)⁻¹ (Lβ¹ − l)`.
    pub distance: f64,
    /// `σ(β¹)`, with `σ² = ∇ᵀ V ∇` and `∇ = 2Lᵀ(L V Lᵀ)⁻¹(Lβ¹ − l)`.
    pub sigma: f64,
    /// `χ²_{r,τ}`.
    pub critical: f64,
}

pub fn power_components(
    beta1: &Coefficients,
    hyp: &LinearHypothesis,
    alpha: TuningAlpha,
    tau: f64,
    provider: &dyn CovarianceProvider,
) -> Result<PowerComponents> {
    let v = provider.covariance(beta1, alpha)?;
    let (distance, w) = hyp.quadratic_form(beta1, &v)?;
    let grad = hyp.matrix.transpose() * w * 2.0;
    let sigma2 = grad.dot(&(&v * &grad));
    Ok(PowerComponents {
        distance,
        sigma: sigma2.max(0.0).sqrt(),
        critical: chi_square_quantile(hyp.n_restrictions(), tau)?,
    })
}

/// `1 − Φ((χ²/√n − √n·l) / σ)`.
pub fn normal_power_approximation(distance: f64, sigma: f64, critical: f64, n: usize) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!(
            "σ(β¹) = {sigma} is not positive; the alternative lies on the null boundary"
        )));
    }
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let rn = (n as f64).sqrt();
    Ok(1.0 - normal_cdf((critical / rn - rn * distance) / sigma))
}

pub fn approximate_power(
    beta1: &Coefficients,
    hyp: &LinearHypothesis,
    alpha: TuningAlpha,
    n: usize,
    tau: f64,
    provider: &dyn CovarianceProvider,
) -> Result<f64> {
    let c = power_components(beta1, hyp, alpha, tau, provider)?;
    normal_power_approximation(c.distance, c.sigma, c.critical, n)
}

/// Smallest-integer sample size reaching power `pi0` under the normal approximation.
///
/// With `z = Φ⁻¹(1 − Π₀)`, `A₁ = σ²z²` and `A₂ = 2lχ²`, the exact root of the power
/// equation is `(A₁ + A₂ − sign(z)√(A₁(A₁ + 2A₂))) / (2l²)`; for `Π₀ ≥ 1/2` the sign
/// is non-positive and this is the familiar `+√` form.
pub fn sample_size_from_components(c: &PowerComponents, pi0: f64) -> Result<u64> {
    if !(pi0 > 0.0 && pi0 < 1.0) {
        return Err(Error::invalid(format!("target power must lie in (0, 1), got {pi0}")));
    }
    if !(c.distance > 0.0) {
        return Err(Error::invalid(
            "the alternative satisfies the null hypothesis; no sample size reaches the target power",
        ));
    }
    let z = normal_quantile(1.0 - pi0)?;
    let a1 = c.sigma * c.sigma * z * z;
    let a2 = 2.0 * c.distance * c.critical;
    let root = (a1 * (a1 + 2.0 * a2)).sqrt();
    let n = (a1 + a2 - z.signum() * root) / (2.0 * c.distance * c.distance);
    if !n.is_finite() || n > u64::MAX as f64 / 2.0 {
        return Err(Error::invalid("required sample size overflows"));
    }
    Ok(1 + n.max(0.0).floor() as u64)
}

pub fn required_sample_size(
    beta1: &Coefficients,
    hyp: &LinearHypothesis,
    alpha: TuningAlpha,
    pi0: f64,
    tau: f64,
    provider: &dyn CovarianceProvider,
) -> Result<u64> {
    let c = power_components(beta1, hyp, alpha, tau, provider)?;
    sample_size_from_components(&c, pi0)
}
