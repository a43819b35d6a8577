//! Shared fixtures for the criterion benchmarks.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chaosrom::neural::{NeuralHyper, NeuralRom};
use chaosrom::nn::MlpParams;
use chaosrom::traj::Trajectory;

pub fn random_state(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(n, |_, _| rng.random_range(-8.0..12.0))
}

pub fn random_states(n: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    (0..count).map(|i| random_state(n, seed.wrapping_add(i as u64))).collect()
}

pub fn random_model(n: usize, hyper: &NeuralHyper, seed: u64) -> NeuralRom {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    NeuralRom {
        encoder: MlpParams::glorot_uniform(n, hyper.hidden, hyper.latent_dim, &mut rng),
        decoder: MlpParams::glorot_uniform(hyper.latent_dim, hyper.hidden, n, &mut rng),
        dynamics: MlpParams::glorot_uniform(hyper.latent_dim, hyper.hidden, hyper.latent_dim, &mut rng),
        constrained: hyper.constrained,
        latent_dim: hyper.latent_dim,
        lambda: hyper.lambda,
        omega: hyper.omega,
        upsilon: hyper.upsilon,
    }
}

pub fn two_point_trajectory(n: usize, seed: u64) -> Trajectory {
    let states = random_states(n, 2, seed);
    Trajectory::new(vec![0.0, 0.05], states).unwrap()
}
