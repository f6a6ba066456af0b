//! Reference implementations used as test oracles. Nothing here calls the library's
//! formula layer; rows carry their leading intercept.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rp_plrm::{Coefficients, DesignMatrix, ResponseMatrix};

pub const BETA0: [f64; 6] = [0.0, -0.9, 0.1, 0.6, -1.2, 0.8];

#[derive(Debug, Clone)]
pub struct Data {
    pub rows: Vec<Vec<f64>>,
    pub cats: Vec<usize>,
    pub d: usize,
}

impl Data {
    pub fn design(&self) -> DesignMatrix {
        let k1 = self.rows[0].len();
        DesignMatrix::new(self.rows.len(), k1, self.rows.concat()).unwrap()
    }

    pub fn response(&self) -> ResponseMatrix {
        ResponseMatrix::new(self.cats.clone(), self.d + 1).unwrap()
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }
}

pub fn coefs(beta: &[f64], d: usize) -> Coefficients {
    Coefficients::new(d, beta.len() / d, beta.to_vec()).unwrap()
}

/// Category probabilities with the last category as reference.
pub fn probs(x: &[f64], beta: &[f64], d: usize) -> Vec<f64> {
    let k1 = x.len();
    let eta: Vec<f64> = (0..d)
        .map(|j| x.iter().zip(&beta[j * k1..(j + 1) * k1]).map(|(a, b)| a * b).sum())
        .collect();
    let m = eta.iter().copied().fold(0.0_f64, f64::max);
    let mut e: Vec<f64> = eta.iter().map(|v| (v - m).exp()).collect();
    e.push((-m).exp());
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn random_rows(n: usize, k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut r = vec![1.0];
            r.extend((0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
            r
        })
        .collect()
}

pub fn draw(p: &[f64], rng: &mut impl Rng) -> usize {
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

pub fn simulate(n: usize, k: usize, beta: &[f64], d: usize, seed: u64) -> Data {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = random_rows(n, k, &mut rng);
    let cats = rows.iter().map(|x| draw(&probs(x, beta, d), &mut rng)).collect();
    Data { rows, cats, d }
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for j in c..n {
                a[r][j] -= f * a[c][j];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|j| a[r][j] * x[j]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Maximum likelihood by Newton–Raphson on the multinomial log-likelihood
/// (equivalently IRLS with block weights `diag(π*) − π*π*ᵀ`).
pub fn irls_mle(data: &Data) -> Vec<f64> {
    let d = data.d;
    let k1 = data.rows[0].len();
    let p = d * k1;
    let mut beta = vec![0.0; p];
    for _ in 0..100 {
        let mut g = vec![0.0; p];
        let mut h = vec![vec![0.0; p]; p];
        for (x, &c) in data.rows.iter().zip(&data.cats) {
            let pi = probs(x, &beta, d);
            for j in 0..d {
                let r = (c == j) as u8 as f64 - pi[j];
                for m in 0..k1 {
                    g[j * k1 + m] += r * x[m];
                }
                for l in 0..d {
                    let w = if j == l { pi[j] * (1.0 - pi[j]) } else { -pi[j] * pi[l] };
                    for m in 0..k1 {
                        for s in 0..k1 {
                            h[j * k1 + m][l * k1 + s] += w * x[m] * x[s];
                        }
                    }
                }
            }
        }
        let step = solve(h, g);
        let size = step.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        beta.iter_mut().zip(&step).for_each(|(b, s)| *b += s);
        if size < 1e-13 {
            break;
        }
    }
    beta
}

/// Per-row objective: `Σ_j y_j π_j^α / (Σ_l π_l^{α+1})^{α/(1+α)}`, or `Σ y log π` at zero.
/// Mean Fisher information `(1/n) Σ (diag π* − π*π*ᵀ) ⊗ x xᵀ` as dense rows.
pub fn fisher_information(rows: &[Vec<f64>], beta: &[f64], d: usize) -> Vec<Vec<f64>> {
    let k1 = rows[0].len();
    let p = d * k1;
    let mut info = vec![vec![0.0; p]; p];
    for x in rows {
        let pi = probs(x, beta, d);
        for j in 0..d {
            for l in 0..d {
                let w = if j == l { pi[j] * (1.0 - pi[j]) } else { -pi[j] * pi[l] };
                for m in 0..k1 {
                    for s in 0..k1 {
                        info[j * k1 + m][l * k1 + s] += w * x[m] * x[s] / rows.len() as f64;
                    }
                }
            }
        }
    }
    info
}

pub fn inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = a.len();
    let cols: Vec<Vec<f64>> = (0..p).map(|c| solve(a.to_vec(), (0..p).map(|r| (r == c) as u8 as f64).collect())).collect();
    (0..p).map(|r| (0..p).map(|c| cols[c][r]).collect()).collect()
}

pub fn s_ref(pi: &[f64], y: &[f64], alpha: f64) -> f64 {
    if alpha == 0.0 {
        return pi.iter().zip(y).map(|(p, yy)| yy * p.ln()).sum();
    }
    let num: f64 = pi.iter().zip(y).map(|(p, yy)| yy * p.powf(alpha)).sum();
    let den: f64 = pi.iter().map(|p| p.powf(alpha + 1.0)).sum();
    num / den.powf(alpha / (1.0 + alpha))
}

pub fn one_hot(c: usize, len: usize) -> Vec<f64> {
    let mut y = vec![0.0; len];
    y[c] = 1.0;
    y
}

pub fn h_ref(data: &Data, beta: &[f64], alpha: f64) -> f64 {
    data.rows
        .iter()
        .zip(&data.cats)
        .map(|(x, &c)| s_ref(&probs(x, beta, data.d), &one_hot(c, data.d + 1), alpha))
        .sum::<f64>()
        / data.n() as f64
}

/// Estimating function from the chain rule on `s`: `(1/α) ∂s/∂β` (or `∂s/∂β` at zero),
/// for an arbitrary response vector `y`.
pub fn psi_ref(x: &[f64], y: &[f64], beta: &[f64], d: usize, alpha: f64) -> Vec<f64> {
    let pi = probs(x, beta, d);
    let k1 = x.len();
    let mut out = vec![0.0; d * k1];
    // dπ_l/dη_j = π_l (δ_lj − π_j)
    let dpi = |l: usize, j: usize| pi[l] * (((l == j) as u8 as f64) - pi[j]);
    for j in 0..d {
        let g = if alpha == 0.0 {
            (0..=d).map(|l| y[l] / pi[l] * dpi(l, j)).sum::<f64>()
        } else {
            let c = alpha / (1.0 + alpha);
            let ups: f64 = (0..=d).map(|l| y[l] * pi[l].powf(alpha)).sum();
            let gam: f64 = (0..=d).map(|l| pi[l].powf(alpha + 1.0)).sum();
            let dups: f64 = (0..=d).map(|l| alpha * y[l] * pi[l].powf(alpha - 1.0) * dpi(l, j)).sum();
            let dgam: f64 = (0..=d).map(|l| (alpha + 1.0) * pi[l].powf(alpha) * dpi(l, j)).sum();
            (dups * gam.powf(-c) - c * ups * gam.powf(-c - 1.0) * dgam) / alpha
        };
        for m in 0..k1 {
            out[j * k1 + m] = g * x[m];
        }
    }
    out
}

/// `∂ψ/∂β` by central differences, as a `p × p` row-major matrix.
pub fn jacobian(f: impl Fn(&[f64]) -> Vec<f64>, beta: &[f64], h: f64) -> Vec<Vec<f64>> {
    let p = beta.len();
    let mut jac = vec![vec![0.0; p]; p];
    for c in 0..p {
        let mut bp = beta.to_vec();
        let mut bm = beta.to_vec();
        bp[c] += h;
        bm[c] -= h;
        let fp = f(&bp);
        let fm = f(&bm);
        for r in 0..p {
            jac[r][c] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac
}

/// `Φ = −(1/n) Σ_i Σ_c π_ic ∂Ψ_i(β; e_c)/∂β` with the weights held at `β`.
pub fn phi_enumerated(rows: &[Vec<f64>], beta: &[f64], d: usize, alpha: f64) -> Vec<Vec<f64>> {
    let p = beta.len();
    let mut out = vec![vec![0.0; p]; p];
    for x in rows {
        let pi = probs(x, beta, d);
        for c in 0..=d {
            let y = one_hot(c, d + 1);
            let jac = jacobian(|b| psi_ref(x, &y, b, d, alpha), beta, 1e-5);
            for r in 0..p {
                for s in 0..p {
                    out[r][s] -= pi[c] * jac[r][s] / rows.len() as f64;
                }
            }
        }
    }
    out
}

/// `Ω = (1/n) Σ_i Var_{π_i}[Ψ_i(β; Y)]` by enumerating the `d + 1` outcomes per row.
pub fn omega_enumerated(rows: &[Vec<f64>], beta: &[f64], d: usize, alpha: f64) -> Vec<Vec<f64>> {
    let p = beta.len();
    let mut out = vec![vec![0.0; p]; p];
    for x in rows {
        let pi = probs(x, beta, d);
        let psis: Vec<Vec<f64>> = (0..=d).map(|c| psi_ref(x, &one_hot(c, d + 1), beta, d, alpha)).collect();
        let mean: Vec<f64> = (0..p).map(|r| (0..=d).map(|c| pi[c] * psis[c][r]).sum()).collect();
        for r in 0..p {
            for s in 0..p {
                let second: f64 = (0..=d).map(|c| pi[c] * psis[c][r] * psis[c][s]).sum();
                out[r][s] += (second - mean[r] * mean[s]) / rows.len() as f64;
            }
        }
    }
    out
}

/// Solution of `(1 − w_total) (1/n) Σ_i E_{π_i(β⁰)} Ψ_i(β) + ε Σ_{(i,t) ∈ points} Ψ_i(β; t) = 0`
/// by Newton with a finite-difference Jacobian, started at `β⁰`.
/// Solves the population estimating equation `(1/n) Σᵢ E_{G_{i,ε}} Ψᵢ = 0` where
/// each listed row's distribution is `(1−ε) Gᵢ + ε Δ_{tᵢ}` and the other rows keep
/// the model distribution at `beta0`.
pub fn contaminated_solution(
    rows: &[Vec<f64>],
    beta0: &[f64],
    d: usize,
    alpha: f64,
    points: &[(usize, Vec<f64>)],
    eps: f64,
) -> Vec<f64> {
    let n = rows.len() as f64;
    let weights: Vec<Vec<f64>> = rows.iter().map(|x| probs(x, beta0, d)).collect();
    let mut row_weight = vec![1.0; rows.len()];
    for (i, _) in points {
        row_weight[*i] -= eps;
    }
    let eq = |b: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; b.len()];
        for ((x, w), rw) in rows.iter().zip(&weights).zip(&row_weight) {
            for c in 0..=d {
                let psi = psi_ref(x, &one_hot(c, d + 1), b, d, alpha);
                out.iter_mut().zip(&psi).for_each(|(o, v)| *o += rw * w[c] * v / n);
            }
        }
        for (i, t) in points {
            let psi = psi_ref(&rows[*i], t, b, d, alpha);
            out.iter_mut().zip(&psi).for_each(|(o, v)| *o += eps * v / n);
        }
        out
    };
    let mut beta = beta0.to_vec();
    for _ in 0..20 {
        let f = eq(&beta);
        if f.iter().all(|v| v.abs() < 1e-15) {
            break;
        }
        let jac = jacobian(&eq, &beta, 1e-6);
        let step = solve(jac, f.iter().map(|v| -v).collect());
        beta.iter_mut().zip(&step).for_each(|(b, s)| *b += s);
        if step.iter().all(|s| s.abs() < 1e-15) {
            break;
        }
    }
    beta
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &nalgebra::DMatrix<f64>) -> f64 {
    let mut m = 0.0_f64;
    for (r, row) in a.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            m = m.max((v - b[(r, c)]).abs());
        }
    }
    m
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}
