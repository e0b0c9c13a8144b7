//! Seeded solver fuzz over instances whose score gaps sit near the 2-kappa
//! round-trip cost, where trade directions are hardest to label and
//! interior-point iterates are most likely to stall on a wrong structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spofolio_core::nalgebra::{DMatrix, DVector};
use spofolio_core::optimizer::{solve, DecisionProblem, DEFAULT_TOL};

fn random_psd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0) * scale);
    &l * l.transpose() + DMatrix::identity(n, n) * (scale * scale * 0.1)
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let mut v = DVector::from_fn(n, |_, _| -(rng.random_range(1e-9f64..1.0)).ln());
    v /= v.sum();
    v
}

#[test]
fn near_tie_instances_all_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let lambdas = [0.5, 1.0, 5.0, 20.0];
    let kappas = [0.001, 0.002, 0.01];
    let mut failures = Vec::new();
    let mut worst_res: f64 = 0.0;
    for trial in 0..2000usize {
        let n = rng.random_range(3..=8usize);
        let lambda = lambdas[trial % lambdas.len()];
        let kappa = kappas[(trial / lambdas.len()) % kappas.len()];
        let sigma_scale = rng.random_range(0.01..0.08);
        let sigma = random_psd(&mut rng, n, sigma_scale);
        let wp = random_simplex(&mut rng, n);
        // Base scores, then force several pairs to differ by almost exactly
        // the round-trip cost.
        let mut r = DVector::from_fn(n, |_, _| rng.random_range(-0.1..0.3f64));
        let pairs = rng.random_range(1..=(n / 2));
        for _ in 0..pairs {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                let eps = rng.random_range(-0.2..0.2f64) * kappa;
                r[b] = r[a] - (2.0 * kappa + eps);
            }
        }
        let p = DecisionProblem::new(r, sigma, lambda, kappa, wp).unwrap();
        match solve(&p, DEFAULT_TOL) {
            Ok(res) => worst_res = worst_res.max(res.kkt_residual),
            Err(e) => failures.push((trial, n, lambda, kappa, format!("{e}"))),
        }
    }
    println!("worst residual across passes: {worst_res:.3e}");
    for f in &failures {
        println!("FAIL {f:?}");
    }
    assert!(failures.is_empty(), "{} of 2000 failed", failures.len());
}
