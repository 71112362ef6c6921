#![allow(dead_code)]

pub mod kalman;

use hmmlab_core::model::{DiscreteHmm, GaussianEmission};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn test_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0fca_11ab)
}

/// Dense Gaussian elimination with partial pivoting.
pub fn dense_solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - s) / m[row][row];
    }
    x
}

/// Random `d`-state model with Dirichlet-like rows and Gaussian emissions.
pub fn random_discrete(rng: &mut impl Rng, d: usize) -> DiscreteHmm<GaussianEmission> {
    let row = |rng: &mut dyn rand::RngCore| -> Vec<f64> {
        let w: Vec<f64> = (0..d).map(|_| rng.random::<f64>() + 0.05).collect();
        let s: f64 = w.iter().sum();
        let mut p: Vec<f64> = w.iter().map(|v| v / s).collect();
        // force an exact sum of one on the last entry
        let head: f64 = p[..d - 1].iter().sum();
        p[d - 1] = 1.0 - head;
        p
    };
    let init = row(rng);
    let mut trans = Vec::with_capacity(d * d);
    for _ in 0..d {
        trans.extend(row(rng));
    }
    let means = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
    let sds = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
    DiscreteHmm::new(init, trans, GaussianEmission::new(means, sds).unwrap()).unwrap()
}
