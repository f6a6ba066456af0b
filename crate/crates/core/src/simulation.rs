//! Data generation, response contamination, relabeling and Monte Carlo studies.
//!
//! Every replication draws from its own ChaCha20 stream derived from
//! `(seed, purpose, replication)`, so results do not depend on the thread count.
//! Replications run on a rayon pool sized by `RP_PLRM_THREADS` when it is set;
//! aggregation always happens in replication order.

use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::asymptotics::are;
use crate::distributions::chi_square_quantile;
use crate::error::{Error, Result};
use crate::estimation::{classify, fit_path, FitOptions};
use crate::inference::{wald_statistic, LinearHypothesis};
use crate::model::{probs_unchecked, Coefficients, DesignMatrix, ResponseMatrix, TuningAlpha};

pub const THREADS_ENV: &str = "RP_PLRM_THREADS";

/// Default true coefficients with `k = 2` predictors and `d + 1 = 3` categories.
pub const DEFAULT_BETA0: [f64; 6] = [0.0, -0.9, 0.1, 0.6, -1.2, 0.8];

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub beta0: Coefficients,
    /// Fraction of rows whose first and third probabilities are swapped.
    pub q: f64,
    pub replications: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 300,
            k: 2,
            d: 2,
            beta0: Coefficients::new(2, 3, DEFAULT_BETA0.to_vec()).expect("valid default"),
            q: 0.0,
            replications: 1000,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be ≥ 1".into()));
        }
        if self.d == 0 {
            return Err(Error::Config("d must be ≥ 1".into()));
        }
        if self.beta0.n_blocks() != self.d || self.beta0.block_len() != self.k + 1 {
            return Err(Error::Config(format!(
                "beta0 has {} entries; d(k+1) = {}",
                self.beta0.len(),
                self.d * (self.k + 1)
            )));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::Config(format!("q must lie in [0, 1], got {}", self.q)));
        }
        Ok(())
    }

    /// `⌈qn⌉`, robust to products such as `0.1 · 300` landing just above an integer.
    pub fn n_contaminated(&self) -> usize {
        if self.q == 0.0 {
            0
        } else {
            ((self.q * self.n as f64 - 1e-9).ceil().max(0.0) as usize).min(self.n)
        }
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub fn with_q(&self, q: f64) -> Self {
        Self { q, ..self.clone() }
    }
}

/// What a random stream is used for; part of the stream identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Data = 1,
    Alternative = 2,
    Relabel = 3,
    Design = 4,
}

/// Independent generator for one replication of one purpose.
pub fn stream_rng(seed: u64, purpose: Purpose, replication: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | (replication & ((1 << 48) - 1)));
    rng
}

/// Runs `f` on a pool honouring `RP_PLRM_THREADS` (global pool when unset).
pub fn with_thread_pool<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let threads: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub design: DesignMatrix,
    pub response: ResponseMatrix,
    /// Sorted indices of rows sampled from the swapped probabilities.
    pub contaminated: Vec<usize>,
}

pub fn draw_design<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> DesignMatrix {
    let mut data = Vec::with_capacity(n * (k + 1));
    for _ in 0..n {
        data.push(1.0);
        data.extend((0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
    }
    DesignMatrix::new(n, k + 1, data).expect("finite normal draws")
}

fn draw_category<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, pj) in p.iter().enumerate() {
        acc += pj;
        if u < acc {
            return j;
        }
    }
    p.len() - 1
}

fn draw_responses<R: Rng + ?Sized>(
    design: &DesignMatrix,
    beta: &Coefficients,
    swapped: &[bool],
    rng: &mut R,
) -> ResponseMatrix {
    let cats = design
        .rows()
        .enumerate()
        .map(|(i, x)| {
            let mut p = probs_unchecked(x, beta).into_vec();
            if swapped.get(i).copied().unwrap_or(false) {
                p.swap(0, 2);
            }
            draw_category(&p, rng)
        })
        .collect();
    ResponseMatrix::new(cats, beta.n_categories()).expect("categories in range")
}

/// Standard-normal covariates and multinomial responses from the model at `beta0`.
pub fn generate_dataset<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<(DesignMatrix, ResponseMatrix)> {
    config.validate()?;
    let design = draw_design(config.n, config.k, rng);
    let response = draw_responses(&design, &config.beta0, &[], rng);
    Ok((design, response))
}

/// As [`generate_dataset`], but `⌈qn⌉` uniformly chosen rows draw their response with
/// the first and third category probabilities interchanged.
///
/// With `q = 0` the draws coincide with [`generate_dataset`] bit for bit.
pub fn contaminate_swap<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<SimulatedData> {
    config.validate()?;
    if config.d + 1 < 3 {
        return Err(Error::Config("probability swap needs at least three categories".into()));
    }
    let design = draw_design(config.n, config.k, rng);
    let m = config.n_contaminated();
    let mut contaminated = if m > 0 {
        sample(rng, config.n, m).into_vec()
    } else {
        Vec::new()
    };
    contaminated.sort_unstable();
    let mut flags = vec![false; config.n];
    contaminated.iter().for_each(|&i| flags[i] = true);
    let response = draw_responses(&design, &config.beta0, &flags, rng);
    Ok(SimulatedData {
        design,
        response,
        contaminated,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelMap {
    /// `perm[c]` is the new category of a row labelled `c`.
    Permutation(Vec<usize>),
    /// Every selected row is set to this category.
    Force(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Random,
    LastM,
    /// Uniformly among rows currently in the given category.
    ByCategory(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelabelScheme {
    pub map: LabelMap,
    pub m: usize,
    pub selection: Selection,
}

impl RelabelScheme {
    pub fn new(map: LabelMap, m: usize, selection: Selection) -> Result<Self> {
        if let LabelMap::Permutation(perm) = &map {
            let mut seen = vec![false; perm.len()];
            for &c in perm {
                if c >= perm.len() || std::mem::replace(&mut seen[c], true) {
                    return Err(Error::invalid("relabel mapping must be a permutation"));
                }
            }
        }
        Ok(Self { map, m, selection })
    }

    /// Cyclic relabel `0 → 1 → 2 → 0` of `m` random rows.
    pub fn cycle_forward(m: usize) -> Self {
        Self::new(LabelMap::Permutation(vec![1, 2, 0]), m, Selection::Random).expect("valid permutation")
    }

    /// Cyclic relabel `0 → 2 → 1 → 0` of `m` random rows.
    pub fn cycle_backward(m: usize) -> Self {
        Self::new(LabelMap::Permutation(vec![2, 0, 1]), m, Selection::Random).expect("valid permutation")
    }

    /// The last `m` rows forced to `category`.
    pub fn force_last(m: usize, category: usize) -> Self {
        Self {
            map: LabelMap::Force(category),
            m,
            selection: Selection::LastM,
        }
    }
}

/// Applies a relabel scheme; returns the new responses and the sorted selected rows.
pub fn relabel<R: Rng + ?Sized>(
    response: &ResponseMatrix,
    scheme: &RelabelScheme,
    rng: &mut R,
) -> Result<(ResponseMatrix, Vec<usize>)> {
    let n = response.n_rows();
    let n_cat = response.n_categories();
    match &scheme.map {
        LabelMap::Permutation(p) if p.len() != n_cat => return Err(Error::dims("relabel mapping", n_cat, p.len())),
        LabelMap::Force(c) if *c >= n_cat => return Err(Error::invalid(format!("category {c} out of range"))),
        _ => {}
    }
    let mut rows = match scheme.selection {
        Selection::Random => {
            if scheme.m > n {
                return Err(Error::invalid(format!("cannot relabel {} of {n} rows", scheme.m)));
            }
            sample(rng, n, scheme.m).into_vec()
        }
        Selection::LastM => {
            if scheme.m > n {
                return Err(Error::invalid(format!("cannot relabel {} of {n} rows", scheme.m)));
            }
            (n - scheme.m..n).collect()
        }
        Selection::ByCategory(c) => {
            let pool: Vec<usize> = (0..n).filter(|&i| response.category(i) == c).collect();
            if scheme.m > pool.len() {
                return Err(Error::invalid(format!(
                    "cannot relabel {} of {} rows in category {c}",
                    scheme.m,
                    pool.len()
                )));
            }
            sample(rng, pool.len(), scheme.m).into_iter().map(|j| pool[j]).collect()
        }
    };
    rows.sort_unstable();
    let mut cats = response.categories().to_vec();
    for &i in &rows {
        cats[i] = match &scheme.map {
            LabelMap::Permutation(p) => p[cats[i]],
            LabelMap::Force(c) => *c,
        };
    }
    Ok((ResponseMatrix::new(cats, n_cat)?, rows))
}

/// Rows whose most probable category under `beta` differs from the reference label.
pub fn misclassification_count(design: &DesignMatrix, reference: &ResponseMatrix, beta: &Coefficients) -> Result<usize> {
    if reference.n_rows() != design.n_rows() {
        return Err(Error::dims("reference responses", design.n_rows(), reference.n_rows()));
    }
    let pred = classify(design, beta)?;
    Ok(pred.iter().zip(reference.categories()).filter(|(a, b)| a != b).count())
}

fn sim_fit_options(compute_covariance: bool) -> FitOptions {
    FitOptions {
        compute_covariance,
        ..FitOptions::default()
    }
}

fn check_alphas(alphas: &[f64]) -> Result<Vec<f64>> {
    if alphas.is_empty() {
        return Err(Error::invalid("alpha grid is empty"));
    }
    for &a in alphas {
        TuningAlpha::new(a)?;
    }
    let mut sorted = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    Ok(sorted)
}

/// One cell of the estimator study.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRow {
    pub alpha: f64,
    pub q: f64,
    pub n: usize,
    /// `√(mean ‖β̂ − β⁰‖² / p)`.
    pub rmse: f64,
    /// Mean `|π̂_ij − π_ij(β⁰)|` over rows, categories and replications.
    pub mae: f64,
    pub replications: usize,
    pub failures: usize,
}

impl EstimatorRow {
    pub fn failure_rate(&self) -> f64 {
        self.failures as f64 / self.replications.max(1) as f64
    }
}

/// Per-replication outcome: `(squared error, absolute probability error)` or failure.
type Cell = Option<(f64, f64)>;

fn estimator_replication(config: &SimConfig, alphas: &[f64], rep: u64) -> Vec<Cell> {
    let mut rng = stream_rng(config.seed, Purpose::Data, rep);
    let Ok(data) = contaminate_swap(config, &mut rng) else {
        return vec![None; alphas.len()];
    };
    let truth: Vec<Vec<f64>> = data
        .design
        .rows()
        .map(|x| probs_unchecked(x, &config.beta0).into_vec())
        .collect();
    let Ok(path) = fit_path(&data.design, &data.response, alphas, &sim_fit_options(false)) else {
        return vec![None; alphas.len()];
    };
    path.into_iter()
        .map(|res| {
            let r = res.ok().filter(|r| r.converged)?;
            let sq: f64 = r
                .beta_hat
                .as_slice()
                .iter()
                .zip(config.beta0.as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let abs: f64 = data
                .design
                .rows()
                .zip(&truth)
                .map(|(x, t)| {
                    let p = probs_unchecked(x, &r.beta_hat);
                    p.as_slice().iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>()
                })
                .sum();
            Some((sq, abs))
        })
        .collect()
}

/// RMSE of `β̂` and MAE of fitted probabilities for each α at the configured `(n, q)`.
pub fn run_estimator_study(config: &SimConfig, alphas: &[f64]) -> Result<Vec<EstimatorRow>> {
    config.validate()?;
    let alphas = check_alphas(alphas)?;
    let reps: Vec<Vec<Cell>> = with_thread_pool(|| {
        (0..config.replications as u64)
            .into_par_iter()
            .map(|rep| estimator_replication(config, &alphas, rep))
            .collect()
    })?;
    let p = config.beta0.len() as f64;
    let cells = (config.n * config.beta0.n_categories()) as f64;
    Ok(alphas
        .iter()
        .enumerate()
        .map(|(a, &alpha)| {
            let (mut sq, mut abs, mut ok) = (0.0, 0.0, 0usize);
            for r in reps.iter().filter_map(|r| r[a]) {
                sq += r.0;
                abs += r.1;
                ok += 1;
            }
            let denom = ok.max(1) as f64;
            EstimatorRow {
                alpha,
                q: config.q,
                n: config.n,
                rmse: if ok > 0 { (sq / denom / p).sqrt() } else { f64::NAN },
                mae: if ok > 0 { abs / (denom * cells) } else { f64::NAN },
                replications: config.replications,
                failures: config.replications - ok,
            }
        })
        .collect())
}

/// Hypothesis `β[index] = null_value` tested at level `tau`; power is evaluated with
/// data generated at `β[index] = alt_value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestDesign {
    pub index: usize,
    pub null_value: f64,
    pub alt_value: f64,
    pub tau: f64,
}

impl Default for TestDesign {
    fn default() -> Self {
        Self {
            index: 3,
            null_value: 0.6,
            alt_value: 1.35,
            tau: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestRow {
    pub alpha: f64,
    pub q: f64,
    pub n: usize,
    pub level: f64,
    pub power: f64,
    pub replications: usize,
    pub level_failures: usize,
    pub power_failures: usize,
}

fn rejections(config: &SimConfig, alphas: &[f64], hyp: &LinearHypothesis, critical: f64, purpose: Purpose, rep: u64) -> Vec<Option<bool>> {
    let mut rng = stream_rng(config.seed, purpose, rep);
    let Ok(data) = contaminate_swap(config, &mut rng) else {
        return vec![None; alphas.len()];
    };
    let Ok(path) = fit_path(&data.design, &data.response, alphas, &sim_fit_options(true)) else {
        return vec![None; alphas.len()];
    };
    path.into_iter()
        .map(|res| {
            let r = res.ok().filter(|r| r.converged)?;
            let w = wald_statistic(&r, hyp).ok()?;
            Some(w.statistic > critical)
        })
        .collect()
}

fn rate(cells: &[Vec<Option<bool>>], a: usize) -> (f64, usize) {
    let (mut hits, mut ok) = (0usize, 0usize);
    for r in cells.iter().filter_map(|r| r[a]) {
        ok += 1;
        hits += r as usize;
    }
    let rate = if ok > 0 { hits as f64 / ok as f64 } else { f64::NAN };
    (rate, cells.len() - ok)
}

/// Empirical level (data at `β⁰`) and power (data at the alternative) of the Wald-type test.
pub fn run_test_study(config: &SimConfig, alphas: &[f64], test: &TestDesign) -> Result<Vec<TestRow>> {
    config.validate()?;
    let alphas = check_alphas(alphas)?;
    let p = config.beta0.len();
    let hyp = LinearHypothesis::single_coefficient(p, test.index, test.null_value)?;
    let critical = chi_square_quantile(1, test.tau)?;
    let mut alt_beta = config.beta0.as_slice().to_vec();
    alt_beta[test.index] = test.alt_value;
    let alt = SimConfig {
        beta0: config.beta0.with_values(alt_beta)?,
        ..config.clone()
    };
    let (level, power): (Vec<_>, Vec<_>) = with_thread_pool(|| {
        (0..config.replications as u64)
            .into_par_iter()
            .map(|rep| {
                (
                    rejections(config, &alphas, &hyp, critical, Purpose::Data, rep),
                    rejections(&alt, &alphas, &hyp, critical, Purpose::Alternative, rep),
                )
            })
            .unzip()
    })?;
    Ok(alphas
        .iter()
        .enumerate()
        .map(|(a, &alpha)| {
            let (lv, lf) = rate(&level, a);
            let (pw, pf) = rate(&power, a);
            TestRow {
                alpha,
                q: config.q,
                n: config.n,
                level: lv,
                power: pw,
                replications: config.replications,
                level_failures: lf,
                power_failures: pf,
            }
        })
        .collect())
}

/// Mean ARE per coefficient over `config.replications` freshly drawn designs.
#[derive(Debug, Clone, PartialEq)]
pub struct AreRow {
    pub alpha: f64,
    pub n: usize,
    pub are: Vec<f64>,
    pub failures: usize,
}

pub fn run_are_study(config: &SimConfig, alphas: &[f64]) -> Result<Vec<AreRow>> {
    config.validate()?;
    let alphas = check_alphas(alphas)?;
    let per_design: Vec<Vec<Option<Vec<f64>>>> = with_thread_pool(|| {
        (0..config.replications as u64)
            .into_par_iter()
            .map(|rep| {
                let mut rng = stream_rng(config.seed, Purpose::Design, rep);
                let design = draw_design(config.n, config.k, &mut rng);
                alphas
                    .iter()
                    .map(|&a| are(&design, &config.beta0, TuningAlpha::new(a).ok()?).ok())
                    .collect()
            })
            .collect()
    })?;
    let p = config.beta0.len();
    Ok(alphas
        .iter()
        .enumerate()
        .map(|(a, &alpha)| {
            let mut sum = vec![0.0; p];
            let mut ok = 0usize;
            for v in per_design.iter().filter_map(|r| r[a].as_ref()) {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                ok += 1;
            }
            AreRow {
                alpha,
                n: config.n,
                are: sum.into_iter().map(|s| s / ok.max(1) as f64).collect(),
                failures: config.replications - ok,
            }
        })
        .collect())
}

/// Mean misclassification count over relabeled copies of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct RelabelRow {
    pub alpha: f64,
    pub mean_misclassified: f64,
    pub datasets: usize,
    pub failures: usize,
}

/// Relabels `datasets` copies of the responses with `scheme`, fits each α to the
/// relabeled copy and counts rows whose predicted category differs from the unaltered
/// responses.
pub fn run_relabel_study(
    design: &DesignMatrix,
    response: &ResponseMatrix,
    scheme: &RelabelScheme,
    alphas: &[f64],
    datasets: usize,
    seed: u64,
) -> Result<Vec<RelabelRow>> {
    let alphas = check_alphas(alphas)?;
    let counts: Vec<Vec<Option<usize>>> = with_thread_pool(|| {
        (0..datasets as u64)
            .into_par_iter()
            .map(|rep| {
                let mut rng = stream_rng(seed, Purpose::Relabel, rep);
                let Ok((relabeled, _)) = relabel(response, scheme, &mut rng) else {
                    return vec![None; alphas.len()];
                };
                let Ok(path) = fit_path(design, &relabeled, &alphas, &sim_fit_options(false)) else {
                    return vec![None; alphas.len()];
                };
                path.into_iter()
                    .map(|r| {
                        let r = r.ok().filter(|r| r.converged)?;
                        misclassification_count(design, response, &r.beta_hat).ok()
                    })
                    .collect()
            })
            .collect()
    })?;
    Ok(alphas
        .iter()
        .enumerate()
        .map(|(a, &alpha)| {
            let ok: Vec<usize> = counts.iter().filter_map(|r| r[a]).collect();
            RelabelRow {
                alpha,
                mean_misclassified: if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().sum::<usize>() as f64 / ok.len() as f64
                },
                datasets,
                failures: datasets - ok.len(),
            }
        })
        .collect())
}

/// Fits `response` along the α grid (warm-started) and counts disagreements of the
/// predicted categories with `reference`.
pub fn misclassification_path(
    design: &DesignMatrix,
    response: &ResponseMatrix,
    reference: &ResponseMatrix,
    alphas: &[f64],
) -> Result<Vec<(f64, usize)>> {
    let alphas = check_alphas(alphas)?;
    let mut out = Vec::with_capacity(alphas.len());
    for (a, res) in alphas.iter().zip(fit_path(design, response, &alphas, &sim_fit_options(false))?) {
        let r = res?;
        if !r.converged {
            return Err(Error::NotConverged(format!("alpha = {a}")));
        }
        out.push((*a, misclassification_count(design, reference, &r.beta_hat)?));
    }
    Ok(out)
}

fn write_table<W: Write>(out: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_estimator_csv<W: Write>(out: W, rows: &[EstimatorRow]) -> Result<()> {
    write_table(
        out,
        &["alpha", "q", "n", "rmse", "mae", "replications", "failures"],
        rows.iter().map(|r| {
            vec![
                r.alpha.to_string(),
                r.q.to_string(),
                r.n.to_string(),
                r.rmse.to_string(),
                r.mae.to_string(),
                r.replications.to_string(),
                r.failures.to_string(),
            ]
        }),
    )
}

pub fn write_test_csv<W: Write>(out: W, rows: &[TestRow]) -> Result<()> {
    write_table(
        out,
        &["alpha", "q", "n", "level", "power", "replications", "level_failures", "power_failures"],
        rows.iter().map(|r| {
            vec![
                r.alpha.to_string(),
                r.q.to_string(),
                r.n.to_string(),
                r.level.to_string(),
                r.power.to_string(),
                r.replications.to_string(),
                r.level_failures.to_string(),
                r.power_failures.to_string(),
            ]
        }),
    )
}

pub fn write_are_csv<W: Write>(out: W, rows: &[AreRow]) -> Result<()> {
    let p = rows.first().map_or(0, |r| r.are.len());
    let mut header = vec!["alpha".to_string(), "n".to_string()];
    header.extend((0..p).map(|j| format!("are_{j}")));
    header.push("failures".into());
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(
        out,
        &header_ref,
        rows.iter().map(|r| {
            let mut v = vec![r.alpha.to_string(), r.n.to_string()];
            v.extend(r.are.iter().map(f64::to_string));
            v.push(r.failures.to_string());
            v
        }),
    )
}
