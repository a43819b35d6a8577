//! Acceptance suite: one test per acceptance criterion, each printing a
//! PASS line on success.
//!
//! Criterion 8 trains two medium-size models end to end and is marked
//! `#[ignore]`; run it with `cargo test --test acceptance -- --ignored`
//! (budget: well under 30 minutes).

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chaosrom::lorenz96::{self, DatasetConfig};
use chaosrom::neural::{
    rollout_loss, rollout_loss_grad, sphere_constraint, sphere_image_bound, train, AdvanceMode,
    NeuralHyper, NeuralRom, TrainConfig,
};
use chaosrom::nn::MlpParams;
use chaosrom::ode::{integrate_fixed, trap_step, SolverConfig};
use chaosrom::quadratic::{fit_quadratic_decoder, fit_quadratic_dynamics, SymTensor3};
use chaosrom::traj::{consecutive_pairs, write_trajectories, Trajectory};
use chaosrom::{dmd, eval};

fn pass(criterion: usize, what: &str) {
    println!("[acceptance] criterion {criterion} ({what}): PASS");
}

#[test]
fn criterion_1_lorenz96_correctness() {
    // Fixed point residual
    let fixed = lorenz96::l96_rhs(&DVector::from_element(40, 8.0), 8.0).unwrap();
    assert!(fixed.amax() <= 1e-14, "fixed-point residual {:e}", fixed.amax());

    // Quadratic-term energy conservation on 100 random states
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let x = DVector::from_fn(40, |_, _| rng.random_range(-10.0..10.0));
        let dx = lorenz96::l96_rhs(&x, 0.0).unwrap();
        let residual = x.dot(&(&dx + &x)).abs();
        assert!(residual <= 1e-12 * x.norm_squared().max(1.0), "energy residual {residual:e}");
    }

    // n = 4 hand case, exact
    let dx = lorenz96::l96_rhs(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]), 8.0).unwrap();
    assert_eq!(dx, DVector::from_vec(vec![3.0, 5.0, 11.0, 1.0]));
    pass(1, "Lorenz '96 correctness");
}

#[test]
fn criterion_2_integrator_order() {
    let mut decay = |u: &DVector<f64>| -u;
    let exact = (-1.0f64).exp();
    let hs = [0.1f64, 0.05, 0.025];

    let fixed_errs: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let n = (1.0 / h).round() as usize;
            let u0 = DVector::from_element(1, 1.0);
            (integrate_fixed(&mut decay, &u0, n, h, None).unwrap()[0] - exact).abs()
        })
        .collect();
    for w in fixed_errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((1.8..=2.2).contains(&order), "trapezoidal order {order}");
    }

    let embedded_errs: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let n = (1.0 / h).round() as usize;
            let mut u = DVector::from_element(1, 1.0);
            for _ in 0..n {
                u = trap_step(&mut decay, &u, h, None).unwrap().u_embedded;
            }
            (u[0] - exact).abs()
        })
        .collect();
    for w in embedded_errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((0.8..=1.2).contains(&order), "embedded order {order}");
    }
    pass(2, "integrator order");
}

fn random_syco(n: usize, r: usize, hidden: usize, seed: u64) -> NeuralRom {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    NeuralRom {
        encoder: MlpParams::glorot_uniform(n, hidden, r, &mut rng),
        decoder: MlpParams::glorot_uniform(r, hidden, n, &mut rng),
        dynamics: MlpParams::glorot_uniform(r, hidden, r, &mut rng),
        constrained: true,
        latent_dim: r,
        lambda: 1.6852,
        omega: 100.0,
        upsilon: 1.0,
    }
}

#[test]
fn criterion_3_weak_preservation() {
    // Random SyCo-AE, 60-day adaptive forecast: the latent state stays on the
    // sphere at all 241 observation times and every decoded value stays below
    // the precomputed sphere-image bound.
    let model = random_syco(40, 28, 50, 42);
    let bound = sphere_image_bound(&model.decoder, 100_000, 7) + 1e-9;

    let x0 = DVector::from_fn(40, |j, _| 8.0 + (j as f64 * 0.37).sin());
    let mode = AdvanceMode::Adaptive(SolverConfig::default());
    let mut u = model.encode(&x0).unwrap();
    let mut observations = 1usize;
    assert!(sphere_constraint(&u).abs() <= 1e-9);
    assert!(model.decode(&u).unwrap().amax() <= bound);
    for _ in 0..240 {
        u = model.advance(&u, 0.05, &mode).unwrap();
        observations += 1;
        assert!(sphere_constraint(&u).abs() <= 1e-9, "latent left the sphere");
        let x = model.decode(&u).unwrap();
        assert!(x.amax() <= bound, "decoded value {:e} above bound {bound:e}", x.amax());
    }
    assert_eq!(observations, 241);
    pass(3, "weak preservation over 60 days");
}

#[test]
fn criterion_4_gradient_oracle() {
    // Full rollout loss gradient vs central finite differences on an
    // n = 4, r = 2, H = 3, K = 1 constrained instance, all parameters.
    let n = 4;
    let mut model = random_syco(n, 2, 3, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let traj = Trajectory::new(
        vec![0.0, 0.05],
        vec![
            DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
            DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
        ],
    )
    .unwrap();
    let cfg = TrainConfig::default();
    let (_, grads) = rollout_loss_grad(&model, &traj, &cfg).unwrap();

    let eps = 1e-5;
    let mut checked = 0usize;
    let mut check = |get: &mut dyn FnMut(&mut NeuralRom) -> &mut f64, analytic: f64| {
        let orig = *get(&mut model);
        *get(&mut model) = orig + eps;
        let up = rollout_loss(&model, &traj, &cfg).unwrap().total;
        *get(&mut model) = orig - eps;
        let dn = rollout_loss(&model, &traj, &cfg).unwrap().total;
        *get(&mut model) = orig;
        let fd = (up - dn) / (2.0 * eps);
        let denom = fd.abs().max(analytic.abs()).max(1e-8);
        assert!(
            (fd - analytic).abs() / denom <= 1e-4,
            "gradient mismatch: analytic {analytic} vs fd {fd}"
        );
        checked += 1;
    };

    macro_rules! check_net {
        ($net:ident, $grad:expr) => {
            for idx in 0..$grad.a1.len() {
                check(&mut |m: &mut NeuralRom| &mut m.$net.a1[idx], $grad.a1[idx]);
            }
            for idx in 0..$grad.b1.len() {
                check(&mut |m: &mut NeuralRom| &mut m.$net.b1[idx], $grad.b1[idx]);
            }
            for idx in 0..$grad.a2.len() {
                check(&mut |m: &mut NeuralRom| &mut m.$net.a2[idx], $grad.a2[idx]);
            }
            for idx in 0..$grad.b2.len() {
                check(&mut |m: &mut NeuralRom| &mut m.$net.b2[idx], $grad.b2[idx]);
            }
        };
    }
    check_net!(encoder, grads.encoder);
    check_net!(decoder, grads.decoder);
    check_net!(dynamics, grads.dynamics);
    let expected = grads.encoder.param_count()
        + grads.decoder.param_count()
        + grads.dynamics.param_count();
    assert_eq!(checked, expected);
    pass(4, "rollout gradient vs finite differences");
}

#[test]
fn criterion_5_dmd_oracle() {
    // Known 6 x 6 diagonalizable system: recover the constructed spectrum.
    let n = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let p = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let mut d = DMatrix::<f64>::zeros(n, n);
    d[(0, 0)] = 0.9;
    d[(1, 1)] = -0.5;
    d[(2, 2)] = 0.3;
    d[(2, 3)] = 0.7;
    d[(3, 2)] = -0.7;
    d[(3, 3)] = 0.3;
    d[(4, 4)] = 0.1;
    d[(5, 5)] = 0.85;
    let a = &p * &d * p.try_inverse().unwrap();
    let mut pairs = Vec::new();
    let mut x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    for _ in 0..40 {
        let next = &a * &x;
        pairs.push((x.clone(), next.clone()));
        x = next;
    }
    let model = dmd::fit_dmd(&pairs, n, 1.0).unwrap();
    let mut got: Vec<Complex<f64>> = model.omega.iter().map(|w| w.exp()).collect();
    let mut want = vec![
        Complex::new(0.9, 0.0),
        Complex::new(-0.5, 0.0),
        Complex::new(0.3, 0.7),
        Complex::new(0.3, -0.7),
        Complex::new(0.1, 0.0),
        Complex::new(0.85, 0.0),
    ];
    let key = |c: &Complex<f64>| (c.re, c.im);
    got.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
    want.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).norm() < 1e-8, "eigenvalue {g} vs {w}");
    }

    // L96 data at the size behind the decaying-spectrum observation
    // (N = 5000; smaller sets leave the near-unit mean mode at the mercy of
    // sampling noise): every continuous eigenvalue decays at r = 28.
    let cfg = DatasetConfig { n_points: 5000, rollout: 9, ..DatasetConfig::default() };
    let trajectories = lorenz96::generate_dataset(&cfg).unwrap();
    let (pairs, dt) = consecutive_pairs(&trajectories).unwrap();
    let l96_model = dmd::fit_dmd(&pairs, 28, dt).unwrap();
    let max_re = l96_model.max_growth_rate();
    assert!(max_re < 0.0, "max Re(omega) = {max_re:e} should be negative");
    pass(5, "dmd spectrum recovery and decaying L96 generator");
}

#[test]
fn criterion_6_quadratic_oracle() {
    // Decoder correction: recover a known symmetric tensor to 1e-6.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = 2;
    let n = 5;
    let mut t_true = SymTensor3::zeros(n, r);
    for k in r..n {
        let d: f64 = rng.random_range(-0.1..0.1);
        t_true.set(k, 0, 0, rng.random_range(-0.1..0.1));
        t_true.set(k, 1, 1, rng.random_range(-0.1..0.1));
        t_true.set(k, 0, 1, d);
        t_true.set(k, 1, 0, d);
    }
    let phi = DMatrix::from_fn(n, r, |i, j| if i == j { 1.0 } else { 0.0 });
    let x_bar = DVector::zeros(n);
    let states: Vec<DVector<f64>> = (0..400)
        .map(|_| {
            let u =
                DVector::from_vec(vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            &phi * &u + t_true.apply_quadratic(&u)
        })
        .collect();
    let fitted = fit_quadratic_decoder(&states, &x_bar, &phi).unwrap();
    let tensor_err = fitted
        .data()
        .iter()
        .zip(t_true.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(tensor_err < 1e-6, "tensor recovery error {tensor_err:e}");

    // Latent dynamics: recover a known linear system with negligible a and C.
    let b_true = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
    let samples: Vec<_> = (0..300)
        .map(|_| {
            let u = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let du = &b_true * &u;
            (u, du)
        })
        .collect();
    let (a, b, c) = fit_quadratic_dynamics(&samples).unwrap();
    assert!((b - &b_true).norm() < 1e-6, "B recovery");
    assert!(a.norm() <= 1e-6, "a should vanish, |a| = {:e}", a.norm());
    assert!(c.frobenius_norm() <= 1e-6, "C should vanish, |C| = {:e}", c.frobenius_norm());
    pass(6, "quadratic manifold recovery");
}

#[test]
fn criterion_7_kl_estimator_calibration() {
    struct ExactGaussian {
        mean: f64,
    }
    impl eval::LogDensity for ExactGaussian {
        fn log_density(&self, x: &DVector<f64>) -> f64 {
            let z = x[0] - self.mean;
            -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln()
        }
    }
    let p = ExactGaussian { mean: 0.0 };
    let q = ExactGaussian { mean: 0.1 };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let samples: Vec<DVector<f64>> = (0..100_000)
        .map(|_| DVector::from_element(1, rng.sample::<f64, _>(rand_distr::StandardNormal)))
        .collect();
    let estimate = eval::kl_approx(&p, &q, &samples);
    assert!(
        (0.0025..=0.0100).contains(&estimate),
        "estimate {estimate} outside [0.0025, 0.0100] (analytic KL 0.005)"
    );

    // identical fitted models agree exactly
    let pts: Vec<DVector<f64>> =
        (0..50).map(|_| DVector::from_element(1, rng.random_range(-1.0..1.0))).collect();
    let kde_a = eval::KdeModel::fit(&pts).unwrap();
    let kde_b = eval::KdeModel::fit(&pts).unwrap();
    assert_eq!(eval::kl_approx(&kde_a, &kde_b, &pts), 0.0);
    pass(7, "kl estimator calibration");
}

/// End-to-end scaled reproduction; slow suite, run with `-- --ignored`.
#[test]
#[ignore = "trains two models end to end (minutes); run with -- --ignored"]
fn criterion_8_end_to_end_smoke() {
    let cfg = DatasetConfig { n_points: 1000, rollout: 1, ..DatasetConfig::default() };
    let trajectories = lorenz96::generate_dataset(&cfg).unwrap();

    let train_cfg = TrainConfig { epochs: 200, seed: 0, ..TrainConfig::default() };
    let hyper_syco = NeuralHyper {
        latent_dim: 28,
        hidden: 500,
        constrained: true,
        lambda: 1.6852,
        omega: 100.0,
        upsilon: 1.0,
    };
    let (syco, syco_log) = train(&trajectories, &train_cfg, &hyper_syco).unwrap();
    let initial = syco_log.first().unwrap().loss.total;
    let last = syco_log.last().unwrap().loss.total;
    assert!(last < initial, "syco loss should improve: {initial:e} -> {last:e}");
    println!(
        "[acceptance] criterion 8: syco loss {initial:e} -> {last:e}; right-inverse term {:e} -> {:e}",
        syco_log.first().unwrap().loss.right_inverse,
        syco_log.last().unwrap().loss.right_inverse,
    );

    // 60-day forecast stays below the sphere-image bound at every time.
    let bound = sphere_image_bound(&syco.decoder, 100_000, 7) + 1e-9;
    let x0 = trajectories.last().unwrap().states().last().unwrap().clone();
    let mode = AdvanceMode::Adaptive(SolverConfig::default());
    let mut u = syco.encode(&x0).unwrap();
    for _ in 0..240 {
        u = syco.advance(&u, 0.05, &mode).unwrap();
        assert!(sphere_constraint(&u).abs() <= 1e-9);
        let x = syco.decode(&u).unwrap();
        assert!(x.amax() <= bound, "decoded value above sphere-image bound");
    }

    // The plain AE trains identically; its long forecast is allowed (and
    // expected) to diverge, which is recorded but not asserted.
    let hyper_ae = NeuralHyper { constrained: false, ..hyper_syco };
    let (ae, ae_log) = train(&trajectories, &train_cfg, &hyper_ae).unwrap();
    println!(
        "[acceptance] criterion 8: ae loss {:e} -> {:e}",
        ae_log.first().unwrap().loss.total,
        ae_log.last().unwrap().loss.total
    );
    let mut u = ae.encode(&x0).unwrap();
    let mut diverged_at = None;
    for k in 0..240 {
        match ae.advance(&u, 0.05, &mode) {
            Ok(next) if next.iter().all(|v| v.is_finite()) => u = next,
            _ => {
                diverged_at = Some((k + 1) as f64 * 0.05 / 0.2);
                break;
            }
        }
    }
    match diverged_at {
        Some(day) => println!("[acceptance] criterion 8: plain AE diverged at day {day:.2}"),
        None => println!("[acceptance] criterion 8: plain AE finished 60 days without divergence"),
    }
    pass(8, "end-to-end smoke reproduction");
}

#[test]
fn criterion_9_data_protocol() {
    let base = DatasetConfig { burn_in: 1.0, ..DatasetConfig::default() };

    let cfg = DatasetConfig { n_points: 100, rollout: 1, ..base.clone() };
    let trajs = lorenz96::generate_dataset(&cfg).unwrap();
    assert_eq!(trajs.len(), 50);
    assert!(trajs.iter().all(|t| t.len() == 2));

    let cfg9 = DatasetConfig { n_points: 100, rollout: 9, ..base };
    let trajs9 = lorenz96::generate_dataset(&cfg9).unwrap();
    assert_eq!(trajs9.len(), 10);
    assert!(trajs9.iter().all(|t| t.len() == 10));

    // byte-level CSV assertions
    let mut buf = Vec::new();
    write_trajectories(&mut buf, &trajs9).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("time,x1,"));
    assert!(lines[0].ends_with(",x40"));
    let blocks: Vec<&str> = text.trim_end().split("\n\n").collect();
    assert_eq!(blocks.len(), 10);
    assert_eq!(blocks[0].lines().count(), 11); // header + 10 rows
    for b in &blocks[1..] {
        assert_eq!(b.lines().count(), 10);
    }
    // spacing parsed back from the bytes is exactly 0.05 to 1e-12
    for block in &blocks {
        let times: Vec<f64> = block
            .lines()
            .filter(|l| !l.starts_with("time,"))
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        for w in times.windows(2) {
            assert!((w[1] - w[0] - 0.05).abs() <= 1e-12, "spacing {:e}", w[1] - w[0]);
        }
    }
    pass(9, "data protocol shapes and spacing");
}
