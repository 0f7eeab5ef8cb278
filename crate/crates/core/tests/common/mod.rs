//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use layup::StatAccumulator;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Gauss-Jordan inverse with partial pivoting, written without nalgebra's
/// solvers so it shares no code with the factorized path.
pub fn gauss_jordan_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| a[(i, j)]).collect();
            row.extend((0..n).map(|j| f64::from(u8::from(i == j))));
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        assert!(p != 0.0, "singular matrix");
        for v in m[col].iter_mut() {
            *v /= p;
        }
        let pivot_row = m[col].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != col {
                let f = row[col];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
    }
    DMatrix::from_fn(n, n, |i, j| m[i][n + j])
}

/// Batch oracle `FᵀF` from stacked rows.
pub fn stacked_gram(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows[0].len();
    let f = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    f.transpose() * f
}

/// Accumulator over `n` Gaussian samples whose class means are offset by
/// `shift` along distinct coordinates.
pub fn random_accumulator(seed: u64, dim: usize, classes: usize, n: usize, shift: f64) -> (StatAccumulator, Vec<(Vec<f64>, usize)>) {
    let mut r = rng(seed);
    let mut acc = StatAccumulator::new(dim, classes, 1).unwrap();
    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % classes;
        let mut x = gaussian(&mut r, dim);
        x[label % dim] += shift;
        acc.update_values(&x, label).unwrap();
        data.push((x, label));
    }
    (acc, data)
}

/// Scores `(G + λI)⁻¹ c_y · x` via an explicit inverse.
pub fn oracle_scores(acc: &StatAccumulator, lambda: f64, x: &[f64]) -> Vec<f64> {
    let d = acc.dim();
    let inv = gauss_jordan_inverse(&(acc.gram() + DMatrix::identity(d, d) * lambda));
    let w = acc.proto_sums() * inv;
    (0..acc.num_classes())
        .map(|c| (0..d).map(|j| w[(c, j)] * x[j]).sum())
        .collect()
}

pub fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}
