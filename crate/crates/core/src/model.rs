//! Polytomous logistic regression model and the Rényi-pseudodistance formula layer.
//!
//! Conventions used throughout the crate:
//!
//! * categories are indexed `0..=d`; the last one (`d`) is the reference category
//!   whose linear predictor is fixed at zero;
//! * coefficients are flattened category-major: block `j` (`j < d`) holds
//!   `(β_0j, …, β_kj)` contiguously, and every Kronecker product `v ⊗ x` is laid
//!   out the same way (`index = j * (k + 1) + m`);
//! * probabilities are kept unclamped; any power or logarithm of a probability
//!   goes through [`pow_floor`] / [`ln_floor`], which clamp at [`PROB_FLOOR`].

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Lower clamp applied to probabilities before powers and logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[inline]
pub fn ln_floor(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// `p^a` computed as `exp(a ln p)` after clamping `p` at [`PROB_FLOOR`].
#[inline]
pub fn pow_floor(p: f64, a: f64) -> f64 {
    if a == 0.0 {
        return 1.0;
    }
    (a * ln_floor(p)).exp()
}

/// Covariate matrix with a leading intercept column, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    /// Builds a design from row-major data that already contains the intercept column.
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if n_rows == 0 {
            return Err(Error::invalid("design matrix needs at least one row"));
        }
        if n_cols == 0 {
            return Err(Error::invalid("design matrix needs an intercept column"));
        }
        if data.len() != n_rows * n_cols {
            return Err(Error::dims("design data", n_rows * n_cols, data.len()));
        }
        for (i, row) in data.chunks_exact(n_cols).enumerate() {
            if row[0] != 1.0 {
                return Err(Error::invalid(format!(
                    "design row {i}: intercept entry is {} (expected 1)",
                    row[0]
                )));
            }
            if let Some(m) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("design row {i}, column {m}: non-finite entry")));
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
        })
    }

    /// Builds a design from rows of `k` covariates, prepending the intercept.
    pub fn from_covariates(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * (k + 1));
        for (i, r) in rows.iter().enumerate() {
            if r.len() != k {
                return Err(Error::invalid(format!(
                    "covariate row {i} has {} entries, expected {k}",
                    r.len()
                )));
            }
            data.push(1.0);
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), k + 1, data)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Number of columns, `k + 1`.
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Number of predictors `k` (columns excluding the intercept).
    pub fn n_predictors(&self) -> usize {
        self.n_cols - 1
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.n_cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// New design made of the given rows, in the given order (repeats allowed).
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            if i >= self.n_rows {
                return Err(Error::invalid(format!("row index {i} out of range")));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(idx.len(), self.n_cols, data)
    }
}

/// One-hot responses, stored as category indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseMatrix {
    categories: Vec<usize>,
    n_categories: usize,
}

impl ResponseMatrix {
    /// `n_categories` is `d + 1`; every index must be below it.
    pub fn new(categories: Vec<usize>, n_categories: usize) -> Result<Self> {
        if n_categories < 2 {
            return Err(Error::invalid("a response needs at least two categories"));
        }
        if categories.is_empty() {
            return Err(Error::invalid("response has no rows"));
        }
        if let Some(i) = categories.iter().position(|&c| c >= n_categories) {
            return Err(Error::invalid(format!(
                "response row {i}: category {} out of range (d + 1 = {n_categories})",
                categories[i]
            )));
        }
        Ok(Self {
            categories,
            n_categories,
        })
    }

    /// Parses explicit one-hot rows; each row must contain a single 1 and zeros elsewhere.
    pub fn from_one_hot(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map(Vec::len).unwrap_or(0);
        let mut cats = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            if r.len() != width {
                return Err(Error::dims("one-hot row", width, r.len()));
            }
            let ones: Vec<usize> = r
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 1.0)
                .map(|(j, _)| j)
                .collect();
            let zeros = r.iter().filter(|&&v| v == 0.0).count();
            if ones.len() != 1 || zeros != width - 1 {
                return Err(Error::invalid(format!("response row {i} is not one-hot")));
            }
            cats.push(ones[0]);
        }
        Self::new(cats, width)
    }

    pub fn n_rows(&self) -> usize {
        self.categories.len()
    }

    /// `d + 1`.
    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    #[inline]
    pub fn category(&self, i: usize) -> usize {
        self.categories[i]
    }

    pub fn categories(&self) -> &[usize] {
        &self.categories
    }

    pub fn one_hot(&self, i: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.n_categories];
        y[self.categories[i]] = 1.0;
        y
    }

    /// Frequency of each category.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_categories];
        for &k in &self.categories {
            c[k] += 1;
        }
        c
    }
}

/// Flattened coefficient vector `β = (β_1ᵀ, …, β_dᵀ)ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    n_blocks: usize,
    block_len: usize,
    values: Vec<f64>,
}

impl Coefficients {
    /// `n_blocks` is `d`, `block_len` is `k + 1`.
    pub fn new(n_blocks: usize, block_len: usize, values: Vec<f64>) -> Result<Self> {
        if n_blocks == 0 || block_len == 0 {
            return Err(Error::invalid("coefficients need d ≥ 1 and k + 1 ≥ 1"));
        }
        if values.len() != n_blocks * block_len {
            return Err(Error::dims("coefficients", n_blocks * block_len, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("coefficients must be finite"));
        }
        Ok(Self {
            n_blocks,
            block_len,
            values,
        })
    }

    pub fn zeros(n_blocks: usize, block_len: usize) -> Self {
        Self {
            n_blocks,
            block_len,
            values: vec![0.0; n_blocks * block_len],
        }
    }

    /// `d`.
    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    /// `k + 1`.
    pub fn block_len(&self) -> usize {
        self.block_len
    }

    /// `d + 1`.
    pub fn n_categories(&self) -> usize {
        self.n_blocks + 1
    }

    /// `p = d (k + 1)`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn block(&self, j: usize) -> &[f64] {
        &self.values[j * self.block_len..(j + 1) * self.block_len]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Same layout, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.n_blocks, self.block_len, values)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub(crate) fn check_design(&self, design: &DesignMatrix) -> Result<()> {
        if design.n_cols() != self.block_len {
            return Err(Error::dims("design columns vs coefficient block", self.block_len, design.n_cols()));
        }
        Ok(())
    }

    pub(crate) fn check_response(&self, response: &ResponseMatrix) -> Result<()> {
        if response.n_categories() != self.n_categories() {
            return Err(Error::dims("response categories", self.n_categories(), response.n_categories()));
        }
        Ok(())
    }
}

/// Category probabilities `π(x, β)` for one covariate row.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Wraps a probability vector; entries must be non-negative and sum to one within 1e-10.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::invalid("probability vector needs at least two entries"));
        }
        if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!("probabilities sum to {s}")));
        }
        Ok(Self(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `π*`, the vector without its reference entry.
    pub fn truncated(&self) -> &[f64] {
        &self.0[..self.0.len() - 1]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Non-negative tuning parameter; zero selects the maximum-likelihood case.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TuningAlpha(f64);

impl TuningAlpha {
    pub const MLE: TuningAlpha = TuningAlpha(0.0);

    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::invalid(format!("tuning parameter must be ≥ 0, got {alpha}")));
        }
        Ok(Self(alpha))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_mle(self) -> bool {
        self.0 == 0.0
    }
}

impl std::fmt::Display for TuningAlpha {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `η_j = xᵀβ_j` for `j = 1..d`.
pub fn linear_predictors(x: &[f64], beta: &Coefficients) -> Result<Vec<f64>> {
    if x.len() != beta.block_len() {
        return Err(Error::dims("covariate row", beta.block_len(), x.len()));
    }
    Ok(eta_unchecked(x, beta))
}

#[inline]
pub(crate) fn eta_unchecked(x: &[f64], beta: &Coefficients) -> Vec<f64> {
    (0..beta.n_blocks())
        .map(|j| beta.block(j).iter().zip(x).map(|(b, v)| b * v).sum())
        .collect()
}

/// Softmax with the reference predictor fixed at zero, shifted by the maximum.
pub fn probabilities_from_predictors(eta: &[f64]) -> ProbVector {
    let shift = eta.iter().copied().fold(0.0_f64, f64::max);
    let mut p: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();
    p.push((-shift).exp());
    let total: f64 = p.iter().sum();
    for v in &mut p {
        *v /= total;
    }
    ProbVector(p)
}

pub fn category_probabilities(x: &[f64], beta: &Coefficients) -> Result<ProbVector> {
    Ok(probabilities_from_predictors(&linear_predictors(x, beta)?))
}

#[inline]
pub(crate) fn probs_unchecked(x: &[f64], beta: &Coefficients) -> ProbVector {
    probabilities_from_predictors(&eta_unchecked(x, beta))
}

/// `Δ(p) = diag(p) − ppᵀ`; with `truncated` the last row is dropped (`Δ*`, d × (d+1)).
pub fn delta_matrix(p: &[f64], truncated: bool) -> DMatrix<f64> {
    let m = p.len();
    let rows = if truncated { m - 1 } else { m };
    DMatrix::from_fn(rows, m, |i, j| {
        let diag = if i == j { p[i] } else { 0.0 };
        diag - p[i] * p[j]
    })
}

/// `(Γ, Υ)` with `Γ = Σ π_j^{α+1}` and `Υ = Σ π_j^α y_j`.
pub fn gamma_upsilon(pi: &ProbVector, y: &[f64], alpha: TuningAlpha) -> (f64, f64) {
    let a = alpha.value();
    if a == 0.0 {
        return (1.0, y.iter().sum());
    }
    gamma_upsilon_raw(pi.as_slice(), y, a)
}

#[inline]
fn gamma_upsilon_raw(p: &[f64], y: &[f64], a: f64) -> (f64, f64) {
    let mut gamma = 0.0;
    let mut upsilon = 0.0;
    for (&pj, &yj) in p.iter().zip(y) {
        let pa = pow_floor(pj, a);
        gamma += pa * pj.max(PROB_FLOOR);
        upsilon += pa * yj;
    }
    (gamma, upsilon)
}

/// `Γ(a) = Σ π_j^{a+1}` for a raw exponent.
#[inline]
pub(crate) fn gamma_sum(p: &[f64], a: f64) -> f64 {
    if a == 0.0 {
        return 1.0;
    }
    p.iter().map(|&pj| pow_floor(pj, a + 1.0)).sum()
}

/// Rényi pseudodistance between the model probabilities and an observed one-hot row.
///
/// At `α = 0` this is the Kullback–Leibler divergence `Σ y_j log(y_j / π_j)` with
/// `0 · log 0 = 0`.
pub fn rp_divergence(pi: &ProbVector, y: &[f64], alpha: TuningAlpha) -> f64 {
    let a = alpha.value();
    if a == 0.0 {
        return pi
            .as_slice()
            .iter()
            .zip(y)
            .filter(|(_, &yj)| yj > 0.0)
            .map(|(&pj, &yj)| yj * (yj.ln() - ln_floor(pj)))
            .sum();
    }
    let (gamma, upsilon) = gamma_upsilon_raw(pi.as_slice(), y, a);
    gamma.ln() / (1.0 + a) - upsilon.max(f64::MIN_POSITIVE).ln() / a
}

/// Per-observation objective `s`: `Υ / Γ^{α/(1+α)}` for `α > 0`, and the
/// log-likelihood contribution `Σ y_j log π_j` at `α = 0`.
pub fn rp_score_s(pi: &ProbVector, y: &[f64], alpha: TuningAlpha) -> f64 {
    let a = alpha.value();
    if a == 0.0 {
        return pi
            .as_slice()
            .iter()
            .zip(y)
            .filter(|(_, &yj)| yj != 0.0)
            .map(|(&pj, &yj)| yj * ln_floor(pj))
            .sum();
    }
    let (gamma, upsilon) = gamma_upsilon_raw(pi.as_slice(), y, a);
    upsilon / gamma.powf(a / (1.0 + a))
}

/// Same as [`rp_score_s`] for a categorical observation, without allocating.
#[inline]
pub(crate) fn s_categorical(p: &[f64], c: usize, a: f64) -> f64 {
    if a == 0.0 {
        return ln_floor(p[c]);
    }
    let gamma = gamma_sum(p, a);
    pow_floor(p[c], a) / gamma.powf(a / (1.0 + a))
}

/// `H_n^{(α)}(β)`, the mean of the per-row objective.
pub fn objective_h(
    design: &DesignMatrix,
    response: &ResponseMatrix,
    beta: &Coefficients,
    alpha: TuningAlpha,
) -> Result<f64> {
    check_data(design, response, beta)?;
    Ok(objective_unchecked(design, response, beta, alpha.value()))
}

pub(crate) fn objective_unchecked(
    design: &DesignMatrix,
    response: &ResponseMatrix,
    beta: &Coefficients,
    a: f64,
) -> f64 {
    let total: f64 = design
        .rows()
        .zip(response.categories())
        .map(|(x, &c)| s_categorical(probs_unchecked(x, beta).as_slice(), c, a))
        .sum();
    total / design.n_rows() as f64
}

pub(crate) fn check_data(design: &DesignMatrix, response: &ResponseMatrix, beta: &Coefficients) -> Result<()> {
    beta.check_design(design)?;
    beta.check_response(response)?;
    if design.n_rows() != response.n_rows() {
        return Err(Error::dims("response rows", design.n_rows(), response.n_rows()));
    }
    Ok(())
}

/// `Δ*(π) diag^{α−1}(π) v` for a vector `v` of length `d + 1`; returns `d` entries.
#[inline]
pub(crate) fn delta_star_weighted(p: &[f64], a: f64, v: &[f64]) -> Vec<f64> {
    let d = p.len() - 1;
    let u: Vec<f64> = p.iter().zip(v).map(|(&pj, &vj)| pow_floor(pj, a - 1.0) * vj).collect();
    let pu: f64 = p.iter().zip(&u).map(|(pj, uj)| pj * uj).sum();
    (0..d).map(|j| p[j] * (u[j] - pu)).collect()
}

/// `v ⊗ x` in category-major layout.
#[inline]
pub(crate) fn kron_vec(v: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() * x.len());
    for &vj in v {
        out.extend(x.iter().map(|xm| vj * xm));
    }
    out
}

/// The category part of the score (before `⊗ x`), given precomputed probabilities.
///
/// `Γ^{−α/(1+α)} Δ*(π) diag^{α−1}(π) [y − (Υ/Γ) π]`; at `α = 0` this is `y* − π*`.
pub fn score_core(p: &[f64], y: &[f64], a: f64) -> Vec<f64> {
    let d = p.len() - 1;
    if a == 0.0 {
        return (0..d).map(|j| y[j] - p[j]).collect();
    }
    let (gamma, upsilon) = gamma_upsilon_raw(p, y, a);
    let ratio = upsilon / gamma;
    let bracket: Vec<f64> = y.iter().zip(p).map(|(yj, pj)| yj - ratio * pj).collect();
    let scale = gamma.powf(-a / (1.0 + a));
    delta_star_weighted(p, a, &bracket)
        .into_iter()
        .map(|v| v * scale)
        .collect()
}

/// Estimating function `Ψ_{i,α}(β)` for one observation; `y` may be any vector of length `d + 1`.
pub fn score_psi(x: &[f64], y: &[f64], beta: &Coefficients, alpha: TuningAlpha) -> Result<Vec<f64>> {
    let pi = category_probabilities(x, beta)?;
    if y.len() != pi.len() {
        return Err(Error::dims("response vector", pi.len(), y.len()));
    }
    Ok(kron_vec(&score_core(pi.as_slice(), y, alpha.value()), x))
}

/// `(1/n) Σ Ψ_{i,α}(β)`.
pub fn mean_score(
    design: &DesignMatrix,
    response: &ResponseMatrix,
    beta: &Coefficients,
    alpha: TuningAlpha,
) -> Result<Vec<f64>> {
    check_data(design, response, beta)?;
    Ok(mean_score_unchecked(design, response, beta, alpha.value()))
}

pub(crate) fn mean_score_unchecked(
    design: &DesignMatrix,
    response: &ResponseMatrix,
    beta: &Coefficients,
    a: f64,
) -> Vec<f64> {
    let k1 = beta.block_len();
    let mut acc = vec![0.0; beta.len()];
    let mut y = vec![0.0; beta.n_categories()];
    for (x, &c) in design.rows().zip(response.categories()) {
        let pi = probs_unchecked(x, beta);
        y[c] = 1.0;
        let core = score_core(pi.as_slice(), &y, a);
        y[c] = 0.0;
        for (j, cj) in core.iter().enumerate() {
            for (m, xm) in x.iter().enumerate() {
                acc[j * k1 + m] += cj * xm;
            }
        }
    }
    let n = design.n_rows() as f64;
    acc.iter_mut().for_each(|v| *v /= n);
    acc
}

/// Gradient of [`objective_h`] with respect to β: `α · mean Ψ` for `α > 0`, `mean Ψ` at `α = 0`.
pub fn objective_gradient(
    design: &DesignMatrix,
    response: &ResponseMatrix,
    beta: &Coefficients,
    alpha: TuningAlpha,
) -> Result<Vec<f64>> {
    let mut g = mean_score(design, response, beta, alpha)?;
    if !alpha.is_mle() {
        g.iter_mut().for_each(|v| *v *= alpha.value());
    }
    Ok(g)
}
