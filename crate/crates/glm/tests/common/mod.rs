#![allow(dead_code)]

use postop_glm::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense Gaussian elimination with partial pivoting; solves A x = b.
pub fn solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &bi)| {
        let mut row = r.clone();
        row.push(bi);
        row
    }).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap()).unwrap();
        m.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    (0..n).map(|i| m[i][n] / m[i][i]).collect()
}

pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let e: Vec<f64> = (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
            solve(a, &e)
        })
        .collect();
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let k = b.len();
    (0..n)
        .map(|i| (0..m).map(|j| (0..k).map(|t| a[i][t] * b[t][j]).sum()).collect())
        .collect()
}

#[derive(Clone, Copy, PartialEq)]
pub enum Lik {
    Logistic,
    GammaLog,
}

/// Direct maximum likelihood by Newton's method on the observed Hessian.
pub fn newton_mle(x: &[Vec<f64>], y: &[f64], lik: Lik) -> Vec<f64> {
    let p = x[0].len();
    let mut beta = vec![0.0; p];
    if lik == Lik::GammaLog {
        beta[0] = (y.iter().sum::<f64>() / y.len() as f64).ln();
    }
    for _ in 0..200 {
        let mut grad = vec![0.0; p];
        let mut hess = vec![vec![0.0; p]; p];
        for (xi, &yi) in x.iter().zip(y) {
            let eta: f64 = xi.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let (g, h) = match lik {
                Lik::Logistic => {
                    let mu = 1.0 / (1.0 + (-eta).exp());
                    (yi - mu, mu * (1.0 - mu))
                }
                Lik::GammaLog => {
                    let mu = eta.exp();
                    (yi / mu - 1.0, yi / mu)
                }
            };
            for a in 0..p {
                grad[a] += g * xi[a];
                for b in 0..p {
                    hess[a][b] += h * xi[a] * xi[b];
                }
            }
        }
        let step = solve(&hess, &grad);
        let mut norm = 0.0;
        for a in 0..p {
            beta[a] += step[a];
            norm += step[a].abs();
        }
        if norm < 1e-14 {
            break;
        }
    }
    beta
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Logistic toy with an intercept, one binary and one continuous covariate.
pub fn logistic_toy(n: usize, n_clusters: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut cl = Vec::with_capacity(n);
    for i in 0..n {
        let a = if r.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
        let b: f64 = r.random::<f64>() * 2.0 - 1.0;
        let eta = -0.4 + 0.8 * a - 0.6 * b;
        let mu = 1.0 / (1.0 + (-eta as f64).exp());
        y.push(if r.random::<f64>() < mu { 1.0 } else { 0.0 });
        x1.push(a);
        x2.push(b);
        cl.push(format!("c{:04}", i % n_clusters));
    }
    let mut d = Dataset::new(n);
    d.add_numeric("a", x1).unwrap();
    d.add_numeric("b", x2).unwrap();
    d.add_numeric("y", y).unwrap();
    d.add_labels("cluster", cl).unwrap();
    d
}

/// Gamma toy: log-mean 1 + 0.5 a − 0.3 b, shape 2.
pub fn gamma_toy(n: usize, seed: u64) -> Dataset {
    use rand_distr::{Distribution, Gamma};
    let mut r = rng(seed);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut cl = Vec::with_capacity(n);
    for i in 0..n {
        let ai = if r.random::<f64>() < 0.4 { 1.0 } else { 0.0 };
        let bi: f64 = r.random::<f64>();
        let mu = (1.0 + 0.5 * ai - 0.3 * bi).exp();
        let g = Gamma::new(2.0, mu / 2.0).unwrap();
        y.push(g.sample(&mut r));
        a.push(ai);
        b.push(bi);
        cl.push(format!("g{}", i % 20));
    }
    let mut d = Dataset::new(n);
    d.add_numeric("a", a).unwrap();
    d.add_numeric("b", b).unwrap();
    d.add_numeric("y", y).unwrap();
    d.add_labels("cluster", cl).unwrap();
    d
}
