//! Independent oracles shared by the integration and acceptance suites.
//!
//! Nothing here calls into the density code under test: determinants come from
//! nalgebra, log-Gamma from statrs, and transition matrices are assembled from
//! full-allocation densities by brute force.
#![allow(dead_code)]

use blockgibbs::{Dataset, Hyperparameters, Matrix, SpdMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn hp(k: usize, d: usize, kappa0: f64, nu0: f64, s0_diag: f64, beta: f64) -> Hyperparameters<f64> {
    Hyperparameters {
        k,
        m0: vec![0.0; d],
        kappa0,
        nu0,
        s0: SpdMatrix::new(Matrix::from_diagonal(&vec![s0_diag; d])).unwrap(),
        beta,
    }
}

pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize, spread: f64) -> Dataset<f64> {
    Dataset::new((0..n).map(|_| (0..d).map(|_| rng.random_range(-spread..spread)).collect()).collect()).unwrap()
}

/// Unnormalized log marginal allocation density, evaluated term by term from raw rows.
pub fn oracle_log_marginal(data: &[Vec<f64>], labels: &[Option<usize>], hp: &Hyperparameters<f64>) -> f64 {
    let d = hp.m0.len();
    let s0 = DMatrix::from_row_slice(d, d, hp.s0.matrix().as_slice());
    let m0 = DVector::from_column_slice(&hp.m0);
    (0..hp.k)
        .map(|k| {
            let rows: Vec<DVector<f64>> = data
                .iter()
                .zip(labels)
                .filter(|(_, l)| **l == Some(k))
                .map(|(r, _)| DVector::from_column_slice(r))
                .collect();
            let n = rows.len() as f64;
            let mut s = s0.clone();
            if !rows.is_empty() {
                let mean = rows.iter().fold(DVector::zeros(d), |a, r| a + r) / n;
                for r in &rows {
                    s += (r - &mean) * (r - &mean).transpose();
                }
                s += (&mean - &m0) * (&mean - &m0).transpose() * (hp.kappa0 * n / (hp.kappa0 + n));
            }
            let mut t = ln_gamma(hp.beta + n);
            for i in 1..=d {
                t += ln_gamma(hp.nu0 + n + 1.0 - i as f64);
            }
            t -= (hp.nu0 / 2.0 + n / 2.0) * s.determinant().ln();
            if hp.kappa0 + n > 0.0 {
                t -= d as f64 / 2.0 * (hp.kappa0 + n).ln();
            }
            t
        })
        .sum()
}

pub fn rows_of(data: &Dataset<f64>) -> Vec<Vec<f64>> {
    data.rows().map(|r| r.to_vec()).collect()
}

fn normalize(logs: &[f64]) -> Vec<f64> {
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Exact conditional over the `K^B` block cells (first block member most significant),
/// from full-allocation densities with the complement frozen.
pub fn oracle_block_distribution(
    data: &[Vec<f64>],
    complement: &[Option<usize>],
    block: &[usize],
    hp: &Hyperparameters<f64>,
) -> Vec<f64> {
    let k = hp.k;
    let cells = k.pow(block.len() as u32);
    let logs: Vec<f64> = (0..cells)
        .map(|cell| {
            let mut labels = complement.to_vec();
            let mut c = cell;
            for &i in block.iter().rev() {
                labels[i] = Some(c % k);
                c /= k;
            }
            oracle_log_marginal(data, &labels, hp)
        })
        .collect();
    normalize(&logs)
}

/// Transition matrix over block cells of one single-site Gibbs update of block position `pos`.
pub fn site_kernel(target: &[f64], k: usize, b: usize, pos: usize) -> DMatrix<f64> {
    let cells = target.len();
    let stride = k.pow((b - 1 - pos) as u32);
    let mut p = DMatrix::zeros(cells, cells);
    for from in 0..cells {
        let digit = (from / stride) % k;
        let base = from - digit * stride;
        let z: f64 = (0..k).map(|l| target[base + l * stride]).sum();
        for l in 0..k {
            p[(from, base + l * stride)] = target[base + l * stride] / z;
        }
    }
    p
}

/// Forward-then-backward scan `P_1 ⋯ P_B P_B ⋯ P_1`.
pub fn reversibilized_kernel(target: &[f64], k: usize, b: usize) -> DMatrix<f64> {
    let kernels: Vec<DMatrix<f64>> = (0..b).map(|p| site_kernel(target, k, b, p)).collect();
    let mut out = DMatrix::identity(target.len(), target.len());
    for p in kernels.iter() {
        out *= p;
    }
    for p in kernels.iter().rev() {
        out *= p;
    }
    out
}

/// Second-largest eigenvalue modulus of a kernel reversible with respect to `target`,
/// via the symmetrization `D^{1/2} P D^{-1/2}`.
pub fn second_eigenvalue_modulus(kernel: &DMatrix<f64>, target: &[f64]) -> f64 {
    let n = target.len();
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = target[i].sqrt() * kernel[(i, j)] / target[j].sqrt();
        }
    }
    let s = (&s + s.transpose()) * 0.5;
    let mut eig: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().map(|x| x.abs()).collect();
    eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
    eig[1]
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Direct transcription of the K = 2 closed forms (flat mean prior, pair centered at the origin).
pub fn closed_form_pair(
    s_rest: [&DMatrix<f64>; 2],
    n: [f64; 2],
    mean: [&DVector<f64>; 2],
    yi: &DVector<f64>,
    yj: &DVector<f64>,
    nu0: f64,
    beta: f64,
) -> [f64; 4] {
    let d = yi.len();
    let v = yi * yi.transpose() + yj * yj.transpose();
    let gamma_lm = |l: usize, mm: usize| -> f64 {
        (0..2)
            .map(|k| {
                let ns = n[k] + (k == l) as u8 as f64 + (k == mm) as u8 as f64;
                let mut t = ln_gamma(beta + ns);
                for i in 1..=d {
                    t += ln_gamma(nu0 + ns + 1.0 - i as f64);
                }
                t - d as f64 / 2.0 * ns.ln()
            })
            .sum()
    };
    let ld = |m: DMatrix<f64>| m.determinant().ln();
    let pair = |k: usize| s_rest[k] + mean[k] * mean[k].transpose() * (2.0 * n[k] / (n[k] + 2.0)) + &v;
    let one = |k: usize, y: &DVector<f64>| s_rest[k] + (mean[k] - y) * (mean[k] - y).transpose() * (n[k] / (n[k] + 1.0));
    let e = |k: usize, extra: f64| (nu0 + n[k] + extra) / 2.0;
    let p11 = gamma_lm(0, 0) - e(0, 2.0) * ld(pair(0)) - e(1, 0.0) * ld(s_rest[1].clone());
    let p12 = gamma_lm(0, 1) - e(0, 1.0) * ld(one(0, yi)) - e(1, 1.0) * ld(one(1, yj));
    let p21 = gamma_lm(1, 0) - e(0, 1.0) * ld(one(0, yj)) - e(1, 1.0) * ld(one(1, yi));
    let p22 = gamma_lm(1, 1) - e(0, 0.0) * ld(s_rest[0].clone()) - e(1, 2.0) * ld(pair(1));
    let logs = [p11, p12, p21, p22];
    let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - mx).exp()).collect();
    let z: f64 = w.iter().sum();
    [w[0] / z, w[1] / z, w[2] / z, w[3] / z]
}
