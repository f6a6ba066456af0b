//! Sandwich covariance `V = Φ⁻¹ Ω Φ⁻¹` of the minimum RP estimator and the
//! asymptotic relative efficiency against the MLE.
//!
//! All matrices are the finite-sample averages over the rows of a design, evaluated
//! at a supplied coefficient vector.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, solve_symmetric};
use crate::model::{
    delta_star_weighted, gamma_sum, pow_floor, probs_unchecked, Coefficients, DesignMatrix, TuningAlpha,
};

/// Bread, meat and sandwich of the asymptotic covariance.
#[derive(Debug, Clone)]
pub struct SandwichMatrices {
    pub phi: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

/// Category part of `ξ(a)`: `Δ*(π) diag^{a−1}(π) π`.
pub(crate) fn xi_core(p: &[f64], a: f64) -> Vec<f64> {
    delta_star_weighted(p, a, p)
}

/// Category part of `J(a)`: `Δ*(π) diag^{a−1}(π) Δ*ᵀ(π)`, a d × d matrix.
pub(crate) fn j_core(p: &[f64], a: f64) -> DMatrix<f64> {
    let d = p.len() - 1;
    let w: Vec<f64> = p.iter().map(|&ps| pow_floor(ps, a - 1.0)).collect();
    let delta = |j: usize, s: usize| if j == s { p[j] - p[j] * p[s] } else { -p[j] * p[s] };
    DMatrix::from_fn(d, d, |j, l| (0..=d).map(|s| delta(j, s) * w[s] * delta(l, s)).sum())
}

fn outer(u: &[f64], v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
}

/// `ξ_i(α, β) = Δ*(π) diag^{α−1}(π) π ⊗ x`.
pub fn xi_vector(x: &[f64], beta: &Coefficients, alpha: TuningAlpha) -> Result<DVector<f64>> {
    check_row(x, beta)?;
    let p = probs_unchecked(x, beta);
    let core = xi_core(p.as_slice(), alpha.value());
    Ok(DVector::from_vec(crate::model::kron_vec(&core, x)))
}

/// `J_i(α, β) = Δ*(π) diag^{α−1}(π) Δ*ᵀ(π) ⊗ x xᵀ`.
pub fn j_matrix(x: &[f64], beta: &Coefficients, alpha: TuningAlpha) -> Result<DMatrix<f64>> {
    check_row(x, beta)?;
    let p = probs_unchecked(x, beta);
    Ok(kron_outer(&j_core(p.as_slice(), alpha.value()), x))
}

fn check_row(x: &[f64], beta: &Coefficients) -> Result<()> {
    if x.len() != beta.block_len() {
        return Err(Error::dims("covariate row", beta.block_len(), x.len()));
    }
    Ok(())
}

/// `C ⊗ x xᵀ` in category-major layout.
fn kron_outer(c: &DMatrix<f64>, x: &[f64]) -> DMatrix<f64> {
    let k1 = x.len();
    let mut out = DMatrix::zeros(c.nrows() * k1, c.ncols() * k1);
    add_kron_outer(&mut out, c, x);
    out
}

fn add_kron_outer(out: &mut DMatrix<f64>, c: &DMatrix<f64>, x: &[f64]) {
    let k1 = x.len();
    for j in 0..c.nrows() {
        for l in 0..c.ncols() {
            let cjl = c[(j, l)];
            if cjl == 0.0 {
                continue;
            }
            for m in 0..k1 {
                let v = cjl * x[m];
                for r in 0..k1 {
                    out[(j * k1 + m, l * k1 + r)] += v * x[r];
                }
            }
        }
    }
}

/// Per-row category matrix of `Φ`.
pub(crate) fn phi_core(p: &[f64], a: f64) -> DMatrix<f64> {
    let mut j = j_core(p, a);
    if a == 0.0 {
        return j;
    }
    let gamma = gamma_sum(p, a);
    let xi = xi_core(p, a);
    j -= outer(&xi, &xi) / gamma;
    j * gamma.powf(-a / (1.0 + a))
}

/// Per-row category matrix of `Ω`.
pub(crate) fn omega_core(p: &[f64], a: f64) -> DMatrix<f64> {
    if a == 0.0 {
        return j_core(p, 0.0);
    }
    let c = a / (1.0 + a);
    let gamma = gamma_sum(p, a);
    let gamma2 = gamma_sum(p, 2.0 * a);
    let xi = xi_core(p, a);
    let xi2 = xi_core(p, 2.0 * a);
    let bracket = outer(&xi, &xi) * (gamma2 / gamma) - outer(&xi2, &xi) - outer(&xi, &xi2);
    j_core(p, 2.0 * a) * gamma.powf(-2.0 * c) + bracket * gamma.powf(-1.0 - 2.0 * c)
}

fn averaged(
    design: &DesignMatrix,
    beta: &Coefficients,
    alpha: TuningAlpha,
    core: impl Fn(&[f64], f64) -> DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    beta.check_design(design)?;
    let p_len = beta.len();
    let mut out = DMatrix::zeros(p_len, p_len);
    for x in design.rows() {
        let p = probs_unchecked(x, beta);
        add_kron_outer(&mut out, &core(p.as_slice(), alpha.value()), x);
    }
    Ok(out / design.n_rows() as f64)
}

/// `Φ_{n,α}(β) = (1/n) Σ Γ_i^{−α/(1+α)} [J_i(α) − ξ_i ξ_iᵀ / Γ_i]`.
pub fn phi_matrix(design: &DesignMatrix, beta: &Coefficients, alpha: TuningAlpha) -> Result<DMatrix<f64>> {
    averaged(design, beta, alpha, phi_core)
}

/// `Ω_{n,α}(β)`, the averaged variance of the estimating function under the model.
pub fn omega_matrix(design: &DesignMatrix, beta: &Coefficients, alpha: TuningAlpha) -> Result<DMatrix<f64>> {
    averaged(design, beta, alpha, omega_core)
}

/// `Φ`, `Ω` and `V = Φ⁻¹ Ω Φ⁻¹` (two symmetric solves, no explicit inverse).
pub fn sandwich_v(design: &DesignMatrix, beta: &Coefficients, alpha: TuningAlpha) -> Result<SandwichMatrices> {
    let phi = phi_matrix(design, beta, alpha)?;
    let omega = omega_matrix(design, beta, alpha)?;
    let v = sandwich_from(&phi, &omega)?;
    Ok(SandwichMatrices { phi, omega, v })
}

pub(crate) fn sandwich_from(phi: &DMatrix<f64>, omega: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let left = solve_symmetric(phi, omega, "Φ")?;
    let v = solve_symmetric(phi, &left.transpose(), "Φ")?;
    Ok(linalg::symmetrize(&v))
}

/// Per-coordinate asymptotic relative efficiency `V_{n,0}[j,j] / V_{n,α}[j,j]`.
pub fn are(design: &DesignMatrix, beta: &Coefficients, alpha: TuningAlpha) -> Result<Vec<f64>> {
    let v0 = sandwich_v(design, beta, TuningAlpha::MLE)?.v;
    if alpha.is_mle() {
        return Ok(vec![1.0; beta.len()]);
    }
    let va = sandwich_v(design, beta, alpha)?.v;
    Ok((0..beta.len()).map(|j| v0[(j, j)] / va[(j, j)]).collect())
}
