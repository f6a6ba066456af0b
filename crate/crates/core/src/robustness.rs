//! Influence functions of the minimum RP estimator and of its Wald-type tests, and a
//! diagnostic showing that the score grows without bound along outlying predictors.

use nalgebra::{DMatrix, DVector};

use crate::asymptotics::{phi_matrix, sandwich_v};
use crate::error::{Error, Result};
use crate::inference::LinearHypothesis;
use crate::linalg::{solve_symmetric_vec, symmetrize};
use crate::model::{kron_vec, probs_unchecked, score_core, Coefficients, DesignMatrix, TuningAlpha};

/// Point mass added to the model distributions.
#[derive(Debug, Clone, PartialEq)]
pub enum Contamination {
    /// Only the distribution of row `index` is contaminated, at response point `t`.
    Single { index: usize, t: Vec<f64> },
    /// Every row `i` is contaminated at its own point `t[i]`.
    All(Vec<Vec<f64>>),
}

fn check_point(t: &[f64], n_cat: usize) -> Result<()> {
    if t.len() != n_cat {
        return Err(Error::dims("contamination point", n_cat, t.len()));
    }
    if t.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("contamination point entries must be finite and nonnegative"));
    }
    Ok(())
}

/// `Ψ_α(x, t)` with `t` any nonnegative vector of length `d + 1`.
fn psi_at(x: &[f64], t: &[f64], beta: &Coefficients, a: f64) -> Vec<f64> {
    let p = probs_unchecked(x, beta);
    kron_vec(&score_core(p.as_slice(), t, a), x)
}

fn apply_phi_inverse(design: &DesignMatrix, beta: &Coefficients, alpha: TuningAlpha, rhs: Vec<f64>) -> Result<DVector<f64>> {
    let phi = phi_matrix(design, beta, alpha)?;
    solve_symmetric_vec(&phi, &DVector::from_vec(rhs), "Φ")
}

/// Influence function under contamination of row `i0` at the point `t`:
/// `Φ_{n,α}⁻¹(β⁰) Ψ_α(x_{i0}, t)`.
pub fn if_single(
    i0: usize,
    t: &[f64],
    beta0: &Coefficients,
    design: &DesignMatrix,
    alpha: TuningAlpha,
) -> Result<DVector<f64>> {
    beta0.check_design(design)?;
    if i0 >= design.n_rows() {
        return Err(Error::invalid(format!("row index {i0} out of range for n = {}", design.n_rows())));
    }
    check_point(t, beta0.n_categories())?;
    let rhs = psi_at(design.row(i0), t, beta0, alpha.value());
    apply_phi_inverse(design, beta0, alpha, rhs)
}

/// Influence function when every row `i` is contaminated at `t[i]`:
/// `Φ_{n,α}⁻¹(β⁰) Σ_i Ψ_α(x_i, t_i)`.
pub fn if_all(
    t: &[Vec<f64>],
    beta0: &Coefficients,
    design: &DesignMatrix,
    alpha: TuningAlpha,
) -> Result<DVector<f64>> {
    beta0.check_design(design)?;
    if t.len() != design.n_rows() {
        return Err(Error::dims("contamination points", design.n_rows(), t.len()));
    }
    let mut rhs = vec![0.0; beta0.len()];
    for (x, ti) in design.rows().zip(t) {
        check_point(ti, beta0.n_categories())?;
        for (acc, v) in rhs.iter_mut().zip(psi_at(x, ti, beta0, alpha.value())) {
            *acc += v;
        }
    }
    apply_phi_inverse(design, beta0, alpha, rhs)
}

pub fn estimator_if(
    contamination: &Contamination,
    beta0: &Coefficients,
    design: &DesignMatrix,
    alpha: TuningAlpha,
) -> Result<DVector<f64>> {
    match contamination {
        Contamination::Single { index, t } => if_single(*index, t, beta0, design, alpha),
        Contamination::All(t) => if_all(t, beta0, design, alpha),
    }
}

/// Second-order influence of the Wald-type statistic for a given estimator IF:
/// `2 IFᵀ Lᵀ (L V Lᵀ)⁻¹ L IF`.
pub fn wald_if_from_estimator_if(influence: &DVector<f64>, v: &DMatrix<f64>, hyp: &LinearHypothesis) -> Result<f64> {
    let l = hyp.matrix();
    if influence.len() != l.ncols() || v.shape() != (l.ncols(), l.ncols()) {
        return Err(Error::dims("influence function", l.ncols(), influence.len()));
    }
    let lif = l * influence;
    let m = symmetrize(&(l * v * l.transpose()));
    let w = solve_symmetric_vec(&m, &lif, "L V Lᵀ")?;
    Ok((2.0 * lif.dot(&w)).max(0.0))
}

pub fn if_wald(
    contamination: &Contamination,
    beta0: &Coefficients,
    design: &DesignMatrix,
    alpha: TuningAlpha,
    hyp: &LinearHypothesis,
) -> Result<f64> {
    let influence = estimator_if(contamination, beta0, design, alpha)?;
    let v = sandwich_v(design, beta0, alpha)?.v;
    wald_if_from_estimator_if(&influence, &v, hyp)
}

/// Largest score norm `‖Ψ_α(x, e_j)‖₂` over the `d + 1` one-hot responses at fixed `x`.
pub fn response_bound(x: &[f64], beta: &Coefficients, alpha: TuningAlpha) -> Result<f64> {
    if x.len() != beta.block_len() {
        return Err(Error::dims("covariate row", beta.block_len(), x.len()));
    }
    let n_cat = beta.n_categories();
    let mut e = vec![0.0; n_cat];
    let mut best = 0.0_f64;
    for c in 0..n_cat {
        e[c] = 1.0;
        best = best.max(norm(&psi_at(x, &e, beta, alpha.value())));
        e[c] = 0.0;
    }
    Ok(best)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One point of the outlying-predictor scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub t: f64,
    pub x_norm: f64,
    pub psi_norm: f64,
    pub ratio: f64,
}

fn slopes(beta: &Coefficients, j: usize) -> &[f64] {
    &beta.block(j)[1..]
}

fn require_two_predictors(beta: &Coefficients) -> Result<()> {
    if beta.block_len() < 3 {
        return Err(Error::invalid("the outlying-predictor scan needs at least two predictors"));
    }
    Ok(())
}

/// A covariate direction `v` (zero intercept component) with `β₁ᵀv = 0` and
/// `β_jᵀv < 0` for every `j ≥ 2`, built by projecting the other slope vectors onto
/// the orthogonal complement of the first.
pub fn scan_direction(beta: &Coefficients) -> Result<Vec<f64>> {
    require_two_predictors(beta)?;
    let b1 = slopes(beta, 0);
    let b1_sq = dot(b1, b1);
    let k = b1.len();
    let project = |b: &[f64]| -> Vec<f64> {
        let c = if b1_sq > 0.0 { dot(b, b1) / b1_sq } else { 0.0 };
        b.iter().zip(b1).map(|(bi, b1i)| bi - c * b1i).collect()
    };
    let mut dir = vec![0.0; k];
    for j in 1..beta.n_blocks() {
        let pb = project(slopes(beta, j));
        let nb = norm(&pb);
        if nb > 0.0 {
            dir.iter_mut().zip(&pb).for_each(|(d, v)| *d -= v / nb);
        }
    }
    let scale = norm(&dir);
    let ok = scale > 1e-12
        && (1..beta.n_blocks()).all(|j| dot(slopes(beta, j), &dir) < -1e-12 * scale * norm(slopes(beta, j)).max(1.0));
    if !ok {
        return Err(Error::invalid(
            "no covariate direction is orthogonal to the first slope vector and decreasing for all others",
        ));
    }
    let mut v = Vec::with_capacity(k + 1);
    v.push(0.0);
    v.extend(dir.iter().map(|d| d / scale));
    Ok(v)
}

/// A starting row `x₀ = (1, s·b₁)` with `β₁ᵀx₀ = 0`, so that `π₁ → 1/2` along the scan.
pub fn scan_origin(beta: &Coefficients) -> Result<Vec<f64>> {
    require_two_predictors(beta)?;
    let b1 = slopes(beta, 0);
    let b1_sq = dot(b1, b1);
    let intercept = beta.block(0)[0];
    let mut x0 = vec![1.0];
    if b1_sq == 0.0 {
        if intercept != 0.0 {
            return Err(Error::invalid("first linear predictor is constant and nonzero"));
        }
        x0.extend(std::iter::repeat_n(0.0, b1.len()));
    } else {
        let s = -intercept / b1_sq;
        x0.extend(b1.iter().map(|b| s * b));
    }
    Ok(x0)
}

/// Evaluates `‖Ψ_α(β, x_t, e₁)‖₂` along `x_t = x₀ + t·v`.
pub fn b_robustness_scan(
    beta: &Coefficients,
    alpha: TuningAlpha,
    x0: &[f64],
    v: &[f64],
    t_values: &[f64],
) -> Result<Vec<ScanPoint>> {
    require_two_predictors(beta)?;
    let k1 = beta.block_len();
    if x0.len() != k1 || v.len() != k1 {
        return Err(Error::dims("scan point", k1, if x0.len() != k1 { x0.len() } else { v.len() }));
    }
    if x0[0] != 1.0 || v[0] != 0.0 {
        return Err(Error::invalid("scan must keep the intercept component at one"));
    }
    let s = norm(&v[1..]);
    let tol = 1e-9 * s.max(1.0);
    if s == 0.0
        || dot(slopes(beta, 0), &v[1..]).abs() > tol * norm(slopes(beta, 0)).max(1.0)
        || (1..beta.n_blocks()).any(|j| dot(slopes(beta, j), &v[1..]) >= 0.0)
    {
        return Err(Error::invalid(
            "scan direction must be orthogonal to the first slope vector and decreasing for all others",
        ));
    }
    let mut e1 = vec![0.0; beta.n_categories()];
    e1[0] = 1.0;
    Ok(t_values
        .iter()
        .map(|&t| {
            let x: Vec<f64> = x0.iter().zip(v).map(|(a, b)| a + t * b).collect();
            let x_norm = norm(&x);
            let psi_norm = norm(&psi_at(&x, &e1, beta, alpha.value()));
            ScanPoint {
                t,
                x_norm,
                psi_norm,
                ratio: psi_norm / x_norm,
            }
        })
        .collect())
}

/// Empirical lower constant `K_α`: the minimum ratio over the last `tail` scan points.
pub fn tail_constant(scan: &[ScanPoint], tail: usize) -> Option<f64> {
    if scan.is_empty() || tail == 0 {
        return None;
    }
    let start = scan.len().saturating_sub(tail);
    scan[start..].iter().map(|p| p.ratio).reduce(f64::min)
}
