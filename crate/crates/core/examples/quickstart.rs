//! Minimal end-to-end run: generate a small dataset, fit a DMD baseline and a
//! spherically constrained autoencoder, then compare short forecasts.
//!
//! ```sh
//! cargo run --release -p chaosrom --example quickstart
//! ```

use chaosrom::lorenz96::{generate_dataset, DatasetConfig};
use chaosrom::neural::{rom_forecast, train, NeuralHyper, TrainConfig};
use chaosrom::nn::CyclicLrSchedule;
use chaosrom::ode::SolverConfig;
use chaosrom::traj::consecutive_pairs;
use chaosrom::{dmd, neural};

fn main() {
    // 100 points as 50 two-point trajectories, six hours apart.
    let cfg = DatasetConfig { n_points: 100, rollout: 1, burn_in: 10.0, ..Default::default() };
    let data = generate_dataset(&cfg).expect("dataset");
    println!("dataset: {} trajectories of {} points", data.len(), data[0].len());

    let (pairs, dt) = consecutive_pairs(&data).expect("pairs");
    let dmd_model = dmd::fit_dmd(&pairs, 8, dt).expect("dmd fit");
    println!("dmd: rank {}, max Re(omega) = {:.4}", dmd_model.rank(), dmd_model.max_growth_rate());

    let hyper = NeuralHyper {
        latent_dim: 8,
        hidden: 32,
        constrained: true,
        lambda: 1.6852,
        omega: 100.0,
        upsilon: 1.0,
    };
    let train_cfg = TrainConfig {
        epochs: 100,
        lr: CyclicLrSchedule { base_lr: 1e-3, max_lr: 1e-2, cycle_len: 25 },
        ..TrainConfig::default()
    };
    let (syco, log) = train(&data, &train_cfg, &hyper).expect("training");
    println!(
        "syco: {} epochs, loss {:.3e} -> {:.3e}",
        log.len(),
        log.first().unwrap().loss.total,
        log.last().unwrap().loss.total
    );

    // Five-day forecasts from the last training state.
    let x0 = data.last().unwrap().states().last().unwrap();
    let solver = SolverConfig::default();
    let horizon = 1.0; // model units = 5 days
    let syco_path = rom_forecast(&syco, x0, horizon, 0.05, &solver).expect("forecast");
    let dmd_end = dmd::dmd_forecast(&dmd_model, x0, horizon);
    let syco_end = syco_path.states().last().unwrap();
    println!(
        "after 5 days: |x_dmd| = {:.3}, |x_syco| = {:.3}, latent residual g(u) = {:.2e}",
        dmd_end.norm(),
        syco_end.norm(),
        neural::sphere_constraint(&syco.encode(syco_end).expect("encode")).abs()
    );
}
