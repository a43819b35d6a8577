//! The Lorenz '96 full order model and trajectory dataset generation.
//!
//! The model on `n` cyclic variables with external forcing `F`:
//!
//! ```text
//! dx_j/dt = -x_{j-1} (x_{j-2} - x_{j+1}) - x_j + F
//! ```
//!
//! Datasets are short trajectories sampled six hours apart (0.05 model units)
//! along one continuous reference solution, with each trajectory starting a
//! configurable gap after the start of the previous one.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ode::{self, OdeError, SolverConfig};
use crate::traj::Trajectory;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model dimension {n} too small: the cyclic stencil needs at least 4 variables")]
    DimensionTooSmall { n: usize },
    #[error("state contains non-finite entries")]
    NonFiniteState,
    #[error("csv error at line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("reference integration failed: {0}")]
    Solver(#[from] OdeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The Lorenz '96 vector field with fixed dimension and forcing.
#[derive(Debug, Clone)]
pub struct Lorenz96 {
    n: usize,
    forcing: f64,
}

impl Lorenz96 {
    pub fn new(n: usize, forcing: f64) -> Result<Self, DataError> {
        if n < 4 {
            return Err(DataError::DimensionTooSmall { n });
        }
        if !forcing.is_finite() {
            return Err(DataError::Config("forcing must be finite".into()));
        }
        Ok(Lorenz96 { n, forcing })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn forcing(&self) -> f64 {
        self.forcing
    }

    /// Right-hand side; `x` must have length `n`.
    pub fn rhs(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(n, |j, _| {
            let jm1 = (j + n - 1) % n;
            let jm2 = (j + n - 2) % n;
            let jp1 = (j + 1) % n;
            -x[jm1] * (x[jm2] - x[jp1]) - x[j] + self.forcing
        })
    }

    /// The homogeneous fixed point F * (1, ..., 1) perturbed on the first
    /// component, the standard spin-up initial condition.
    pub fn perturbed_equilibrium(&self) -> DVector<f64> {
        let mut x = DVector::from_element(self.n, self.forcing);
        x[0] += 0.01;
        x
    }
}

/// Validated Lorenz '96 right-hand side.
pub fn l96_rhs(x: &DVector<f64>, forcing: f64) -> Result<DVector<f64>, DataError> {
    let model = Lorenz96::new(x.len(), forcing)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(DataError::NonFiniteState);
    }
    Ok(model.rhs(x))
}

/// How a trajectory dataset is carved out of one reference solution.
#[derive(Debug, Clone)]
pub struct DatasetConfig {
    /// Total number of data points N; must divide into trajectories of
    /// `rollout + 1` points.
    pub n_points: usize,
    /// Roll out parameter K: each trajectory holds K+1 points.
    pub rollout: usize,
    /// Intra-trajectory spacing in model units (0.05 = six hours).
    pub spacing: f64,
    /// Offset between the starts of consecutive trajectories (6.0 = 30 days).
    pub trajectory_gap: f64,
    /// Spin-up time before the first sample (72.0 = one simulated year).
    pub burn_in: f64,
    pub seed: u64,
    pub forcing: f64,
    /// Full order dimension.
    pub dim: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_points: 100,
            rollout: 1,
            spacing: 0.05,
            trajectory_gap: 6.0,
            burn_in: 72.0,
            seed: 0,
            forcing: 8.0,
            dim: 40,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.dim < 4 {
            return Err(DataError::DimensionTooSmall { n: self.dim });
        }
        if self.n_points == 0 {
            return Err(DataError::Config("n_points must be positive".into()));
        }
        if !self.n_points.is_multiple_of(self.rollout + 1) {
            return Err(DataError::Config(format!(
                "n_points = {} is not divisible by rollout + 1 = {}",
                self.n_points,
                self.rollout + 1
            )));
        }
        if self.spacing <= 0.0 || self.spacing.is_nan() {
            return Err(DataError::Config("spacing must be positive".into()));
        }
        if !(self.trajectory_gap >= 0.0 && self.burn_in >= 0.0) {
            return Err(DataError::Config("trajectory_gap and burn_in must be >= 0".into()));
        }
        Ok(())
    }

    pub fn n_trajectories(&self) -> usize {
        self.n_points / (self.rollout + 1)
    }

    /// Time of the last training sample, relative to the solution start.
    fn window_end(&self) -> f64 {
        self.burn_in
            + (self.n_trajectories().saturating_sub(1)) as f64 * self.trajectory_gap
            + self.rollout as f64 * self.spacing
    }
}

/// March one continuous reference solution through a sorted list of
/// observation times, returning the states in input order. Long spans are
/// integrated in bounded segments so each solver call keeps a sane step
/// budget.
fn march_reference(
    model: &Lorenz96,
    x0: DVector<f64>,
    t0: f64,
    times: &[f64],
    solver: &SolverConfig,
) -> Result<Vec<DVector<f64>>, DataError> {
    const MAX_SEGMENT: f64 = 50.0;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap());
    let mut states: Vec<Option<DVector<f64>>> = vec![None; times.len()];
    let mut rhs = |x: &DVector<f64>| model.rhs(x);
    let mut t = t0;
    let mut x = x0;
    for idx in order {
        let target = times[idx];
        while target > t {
            let segment_end = (t + MAX_SEGMENT).min(target);
            x = ode::integrate_adaptive(&mut rhs, &x, t, segment_end, solver, None)?;
            t = segment_end;
        }
        states[idx] = Some(x.clone());
    }
    Ok(states.into_iter().map(|s| s.unwrap()).collect())
}

/// Generate the training dataset: `n_points / (rollout + 1)` trajectories of
/// `rollout + 1` points each, carved from one continuous reference solution
/// integrated at the reference tolerance.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Vec<Trajectory>, DataError> {
    cfg.validate()?;
    let model = Lorenz96::new(cfg.dim, cfg.forcing)?;
    let n_traj = cfg.n_trajectories();
    let points = cfg.rollout + 1;

    let mut times = Vec::with_capacity(cfg.n_points);
    for i in 0..n_traj {
        let start = cfg.burn_in + i as f64 * cfg.trajectory_gap;
        for k in 0..points {
            times.push(start + k as f64 * cfg.spacing);
        }
    }
    let states =
        march_reference(&model, model.perturbed_equilibrium(), 0.0, &times, &SolverConfig::reference())?;

    let mut out = Vec::with_capacity(n_traj);
    for i in 0..n_traj {
        let lo = i * points;
        let hi = lo + points;
        out.push(Trajectory::new(times[lo..hi].to_vec(), states[lo..hi].to_vec())?);
    }
    Ok(out)
}

/// Sample `m` on-attractor initial conditions along the reference solution,
/// past the training window, with seeded random spacing of at least
/// `cfg.spacing` between consecutive samples.
pub fn generate_forecast_ensemble(
    m: usize,
    cfg: &DatasetConfig,
) -> Result<Vec<DVector<f64>>, DataError> {
    cfg.validate()?;
    if m == 0 {
        return Err(DataError::Config("ensemble size must be at least 1".into()));
    }
    let model = Lorenz96::new(cfg.dim, cfg.forcing)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = cfg.window_end() + cfg.trajectory_gap.max(cfg.spacing);
    let mut times = Vec::with_capacity(m);
    let mut t = start;
    for _ in 0..m {
        t += cfg.spacing * (1.0 + rng.random_range(0.0..1.0));
        times.push(t);
    }
    march_reference(&model, model.perturbed_equilibrium(), 0.0, &times, &SolverConfig::reference())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn homogeneous_forcing_is_a_fixed_point() {
        let x = DVector::from_element(40, 8.0);
        let dx = l96_rhs(&x, 8.0).unwrap();
        assert!(dx.amax() <= 1e-14);
    }

    #[test]
    fn zero_state_feels_only_forcing() {
        let x = DVector::zeros(40);
        let dx = l96_rhs(&x, 8.0).unwrap();
        assert_eq!(dx, DVector::from_element(40, 8.0));
    }

    #[test]
    fn four_variable_hand_case() {
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let dx = l96_rhs(&x, 8.0).unwrap();
        assert_eq!(dx, DVector::from_vec(vec![3.0, 5.0, 11.0, 1.0]));
    }

    #[test]
    fn small_dimension_is_rejected() {
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(l96_rhs(&x, 8.0), Err(DataError::DimensionTooSmall { n: 3 })));
    }

    #[test]
    fn quadratic_term_conserves_energy() {
        // With F = 0 the advective term is energy neutral:
        // x . (rhs(x, 0) + x) = 0.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = DVector::from_fn(40, |_, _| rng.random_range(-10.0..10.0));
            let dx = l96_rhs(&x, 0.0).unwrap();
            let residual = x.dot(&(&dx + &x));
            let scale = x.norm_squared().max(1.0);
            assert!(residual.abs() <= 1e-12 * scale, "residual {residual}");
        }
    }

    #[test]
    fn cyclic_shift_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 12;
        let x = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
        let dx = l96_rhs(&x, 8.0).unwrap();
        for s in 1..n {
            let shifted = DVector::from_fn(n, |j, _| x[(j + s) % n]);
            let dx_shifted = l96_rhs(&shifted, 8.0).unwrap();
            let expect = DVector::from_fn(n, |j, _| dx[(j + s) % n]);
            assert_relative_eq!(dx_shifted, expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn dataset_shapes_follow_rollout() {
        let cfg = DatasetConfig { n_points: 100, rollout: 1, burn_in: 2.0, ..Default::default() };
        let trajs = generate_dataset(&cfg).unwrap();
        assert_eq!(trajs.len(), 50);
        assert!(trajs.iter().all(|t| t.len() == 2));

        let cfg = DatasetConfig { n_points: 100, rollout: 9, burn_in: 2.0, ..Default::default() };
        let trajs = generate_dataset(&cfg).unwrap();
        assert_eq!(trajs.len(), 10);
        assert!(trajs.iter().all(|t| t.len() == 10));
    }

    #[test]
    fn intra_trajectory_spacing_is_exact() {
        let cfg = DatasetConfig { n_points: 20, rollout: 4, burn_in: 1.0, ..Default::default() };
        let trajs = generate_dataset(&cfg).unwrap();
        for t in &trajs {
            for w in t.times().windows(2) {
                assert!((w[1] - w[0] - 0.05).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn indivisible_point_count_is_a_config_error() {
        // 100 points cannot form whole trajectories of rollout + 1 = 7.
        let cfg = DatasetConfig { n_points: 100, rollout: 6, ..Default::default() };
        assert!(matches!(generate_dataset(&cfg), Err(DataError::Config(_))));
    }

    #[test]
    fn overlapping_windows_share_the_continuous_solution() {
        // gap smaller than the trajectory span: the same observation time
        // appears in two trajectories and must carry the identical state.
        let cfg = DatasetConfig {
            n_points: 12,
            rollout: 3,
            trajectory_gap: 0.10,
            burn_in: 1.0,
            ..DatasetConfig::default()
        };
        let trajs = generate_dataset(&cfg).unwrap();
        assert_eq!(trajs.len(), 3);
        let first = &trajs[0];
        let second = &trajs[1];
        assert!((second.times()[0] - 1.10).abs() < 1e-12);
        let idx = first.times().iter().position(|&t| (t - 1.10).abs() < 1e-12).unwrap();
        assert_eq!(first.states()[idx], second.states()[0]);
    }

    #[test]
    fn dataset_is_bit_deterministic() {
        let cfg = DatasetConfig { n_points: 12, rollout: 2, burn_in: 1.5, ..Default::default() };
        let a = generate_dataset(&cfg).unwrap();
        let b = generate_dataset(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ensemble_shape_and_determinism() {
        let cfg = DatasetConfig { n_points: 4, rollout: 1, burn_in: 1.0, ..Default::default() };
        let one = generate_forecast_ensemble(1, &cfg).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].len(), 40);
        assert!(one[0].iter().all(|v| v.is_finite()));

        let a = generate_forecast_ensemble(3, &cfg).unwrap();
        let b = generate_forecast_ensemble(3, &cfg).unwrap();
        assert_eq!(a, b);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn state(n: usize) -> impl Strategy<Value = DVector<f64>> {
            prop::collection::vec(-12.0f64..12.0, n).prop_map(DVector::from_vec)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn advective_term_is_energy_neutral(x in state(12)) {
                let dx = l96_rhs(&x, 0.0).unwrap();
                let residual = x.dot(&(&dx + &x)).abs();
                prop_assert!(residual <= 1e-12 * x.norm_squared().max(1.0));
            }

            #[test]
            fn rhs_commutes_with_cyclic_shifts(x in state(10), s in 1usize..10) {
                let n = x.len();
                let dx = l96_rhs(&x, 8.0).unwrap();
                let shifted = DVector::from_fn(n, |j, _| x[(j + s) % n]);
                let dx_shifted = l96_rhs(&shifted, 8.0).unwrap();
                for j in 0..n {
                    prop_assert!((dx_shifted[j] - dx[(j + s) % n]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn ensemble_means_stay_in_the_attractor_bulk() {
        // Oracle: long reference run statistics put per-coordinate means
        // around 2.3 for F = 8; any |mean| < 10 is well inside the bulk.
        let cfg = DatasetConfig { n_points: 4, rollout: 1, burn_in: 20.0, ..Default::default() };
        let ens = generate_forecast_ensemble(100, &cfg).unwrap();
        let mut mean = DVector::zeros(40);
        for x in &ens {
            mean += x;
        }
        mean /= ens.len() as f64;
        assert!(mean.amax() < 10.0, "ensemble mean {:?}", mean.amax());
    }
}
