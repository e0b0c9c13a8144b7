//! Shared fixtures for the criterion benches.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spofolio_core::DecisionProblem;

/// A reproducible random rebalancing instance of the given size.
pub fn random_instance(seed: u64, n: usize, lambda: f64, kappa: f64) -> DecisionProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.03..0.03));
    let sigma = &l * l.transpose() + DMatrix::identity(n, n) * 1e-4;
    let r_hat = DVector::from_fn(n, |_, _| rng.random_range(-0.1..0.1));
    let mut w_prev = DVector::from_fn(n, |_, _| -(rng.random_range(1e-9f64..1.0)).ln());
    w_prev /= w_prev.sum();
    DecisionProblem::new(r_hat, sigma, lambda, kappa, w_prev).expect("valid instance")
}
