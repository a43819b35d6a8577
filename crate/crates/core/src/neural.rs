//! Autoencoder reduced order models with latent neural dynamics, in plain and
//! spherically constrained form.
//!
//! The constrained variant pins the total reduced order space to the unit
//! sphere `S^{r-1}`: the encoder output is projected onto the sphere, and the
//! latent ODE is integrated with per-step projection. Because the sphere is
//! compact and the decoder is continuous, every constrained forecast stays
//! inside a fixed bounded set no matter how long the horizon.
//!
//! Training minimizes a rollout cost with four parts per trajectory:
//! reconstruction, soft right-invertibility (weight `omega`), full-space
//! dynamics error, and reduced-space dynamics error (weight `upsilon`), the
//! dynamics terms damped by `exp(-2 lambda (t_k - t_0))` with `lambda` the
//! largest Lyapunov exponent of the modeled system. The latent rollout runs
//! through a fixed-substep projected trapezoidal scheme so the whole cost is
//! a static differentiable graph.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::nn::tape::{MlpLayout, Tape, Var};
use crate::nn::{adam_step, cyclic_lr, AdamState, CyclicLrSchedule, MlpParams, NnError};
use crate::ode::{self, OdeError, Projection, SolverConfig};
use crate::traj::Trajectory;

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("latent state is off the sphere: | |u| - 1 | = {deviation:e} exceeds 1e-9")]
    OffSphere { deviation: f64 },
    #[error("rollout diverged at t = {t}")]
    Divergence { t: f64 },
    #[error("training failed at epoch {epoch}, trajectory {trajectory}: {source}")]
    Train { epoch: usize, trajectory: usize, source: Box<NeuralError> },
    #[error("invalid input: {0}")]
    Invalid(String),
}

impl NeuralError {
    pub fn is_divergence(&self) -> bool {
        match self {
            NeuralError::Divergence { .. } => true,
            NeuralError::Ode(e) => e.is_divergence(),
            NeuralError::Nn(NnError::DegenerateProjection { .. }) => true,
            NeuralError::Train { source, .. } => source.is_divergence(),
            _ => false,
        }
    }
}

/// Norm below which the sphere projection is considered degenerate (the
/// nearest-point projection is non-unique at the origin).
pub const SPHERE_MIN_NORM: f64 = 1e-12;

/// Project onto the unit sphere, `u / |u|`.
pub fn sphere_project(u: &DVector<f64>) -> Result<DVector<f64>, NeuralError> {
    let norm = u.norm();
    if norm < SPHERE_MIN_NORM {
        return Err(NeuralError::Nn(NnError::DegenerateProjection { norm }));
    }
    Ok(u / norm)
}

/// The sphere constraint residual `g(u) = |u| - 1`.
pub fn sphere_constraint(u: &DVector<f64>) -> f64 {
    u.norm() - 1.0
}

/// [`Projection`] implementation for the solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct SphereProjection;

impl Projection for SphereProjection {
    fn project(&self, u: &DVector<f64>) -> Result<DVector<f64>, OdeError> {
        let norm = u.norm();
        if norm < SPHERE_MIN_NORM {
            return Err(OdeError::DegenerateProjection { min_norm: SPHERE_MIN_NORM });
        }
        Ok(u / norm)
    }
}

/// How to integrate the latent dynamics between observation times.
#[derive(Debug, Clone)]
pub enum AdvanceMode {
    /// Fixed substep count per interval; the differentiable training path.
    Fixed { substeps: usize },
    /// Adaptive step control; the inference path.
    Adaptive(SolverConfig),
}

/// A trained autoencoder ROM (plain when `constrained` is false, spherically
/// constrained otherwise). All three networks are one-hidden-layer MLPs.
#[derive(Debug, Clone)]
pub struct NeuralRom {
    /// Encoder, n -> r.
    pub encoder: MlpParams,
    /// Decoder, r -> n.
    pub decoder: MlpParams,
    /// Latent dynamics, r -> r.
    pub dynamics: MlpParams,
    pub constrained: bool,
    pub latent_dim: usize,
    /// Largest-Lyapunov-exponent weight in the rollout loss.
    pub lambda: f64,
    /// Right-inverse loss weight.
    pub omega: f64,
    /// Reduced-space dynamics loss weight.
    pub upsilon: f64,
}

impl NeuralRom {
    pub fn state_dim(&self) -> usize {
        self.encoder.d_in()
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        self.dynamics.validate()?;
        let (n, r) = (self.encoder.d_in(), self.encoder.d_out());
        if r != self.latent_dim {
            return Err(NeuralError::Invalid(format!(
                "encoder output {r} does not match latent_dim {}",
                self.latent_dim
            )));
        }
        if self.decoder.d_in() != r || self.decoder.d_out() != n {
            return Err(NeuralError::Invalid("decoder shape does not mirror the encoder".into()));
        }
        if self.dynamics.d_in() != r || self.dynamics.d_out() != r {
            return Err(NeuralError::Invalid("dynamics must map the latent space to itself".into()));
        }
        let weights_ok = self.lambda >= 0.0 && self.omega >= 0.0 && self.upsilon >= 0.0;
        if !weights_ok {
            return Err(NeuralError::Invalid("loss weights must be non-negative".into()));
        }
        Ok(())
    }

    /// Encoder (projected onto the sphere when constrained).
    pub fn encode(&self, x: &DVector<f64>) -> Result<DVector<f64>, NeuralError> {
        let u = crate::nn::mlp_forward(&self.encoder, x)?;
        if self.constrained {
            sphere_project(&u)
        } else {
            Ok(u)
        }
    }

    pub fn decode(&self, u: &DVector<f64>) -> Result<DVector<f64>, NeuralError> {
        Ok(crate::nn::mlp_forward(&self.decoder, u)?)
    }

    fn dynamics_rhs(&self, u: &DVector<f64>) -> DVector<f64> {
        crate::nn::mlp_forward(&self.dynamics, u).expect("dynamics shape is validated")
    }

    /// Advance the latent state by `dt`, projecting every step when
    /// constrained. Constrained inputs must already satisfy
    /// `| |u0| - 1 | <= 1e-9`.
    pub fn advance(
        &self,
        u0: &DVector<f64>,
        dt: f64,
        mode: &AdvanceMode,
    ) -> Result<DVector<f64>, NeuralError> {
        if u0.len() != self.latent_dim {
            return Err(NeuralError::Invalid(format!(
                "latent state has length {}, expected {}",
                u0.len(),
                self.latent_dim
            )));
        }
        if self.constrained {
            let deviation = sphere_constraint(u0).abs();
            if deviation > 1e-9 {
                return Err(NeuralError::OffSphere { deviation });
            }
        }
        let projection = SphereProjection;
        let proj: Option<&dyn Projection> = self.constrained.then_some(&projection as _);
        let mut rhs = |u: &DVector<f64>| self.dynamics_rhs(u);
        let out = match mode {
            AdvanceMode::Fixed { substeps } => {
                ode::integrate_fixed(&mut rhs, u0, *substeps, dt / *substeps as f64, proj)?
            }
            AdvanceMode::Adaptive(cfg) => ode::integrate_adaptive(&mut rhs, u0, 0.0, dt, cfg, proj)?,
        };
        Ok(out)
    }
}

/// Training-loop configuration. The rollout length comes from the data.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Trapezoidal substeps per data interval inside the rollout.
    pub substeps_per_interval: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub lr: CyclicLrSchedule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            substeps_per_interval: 5,
            beta1: 0.9,
            beta2: 0.95,
            lr: CyclicLrSchedule::default(),
            seed: 0,
        }
    }
}

/// Architecture and loss weights.
#[derive(Debug, Clone)]
pub struct NeuralHyper {
    pub latent_dim: usize,
    pub hidden: usize,
    pub constrained: bool,
    pub lambda: f64,
    pub omega: f64,
    pub upsilon: f64,
}

impl Default for NeuralHyper {
    fn default() -> Self {
        NeuralHyper {
            latent_dim: 28,
            hidden: 2000,
            constrained: true,
            lambda: 1.6852,
            omega: 100.0,
            upsilon: 1.0,
        }
    }
}

/// The four rollout cost terms; `total` folds in the omega/upsilon weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub autoencoder: f64,
    pub right_inverse: f64,
    pub full_space: f64,
    pub latent: f64,
}

impl LossBreakdown {
    fn zero() -> Self {
        LossBreakdown { total: 0.0, autoencoder: 0.0, right_inverse: 0.0, full_space: 0.0, latent: 0.0 }
    }

    fn add(&mut self, other: &LossBreakdown) {
        self.total += other.total;
        self.autoencoder += other.autoencoder;
        self.right_inverse += other.right_inverse;
        self.full_space += other.full_space;
        self.latent += other.latent;
    }

    fn scale(&mut self, s: f64) {
        self.total *= s;
        self.autoencoder *= s;
        self.right_inverse *= s;
        self.full_space *= s;
        self.latent *= s;
    }
}

/// One row of the training loss log.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
}

/// Flat layouts of the three networks in one parameter vector.
#[derive(Debug, Clone, Copy)]
struct NetLayouts {
    enc: MlpLayout,
    dec: MlpLayout,
    dynamics: MlpLayout,
}

impl NetLayouts {
    fn new(n: usize, r: usize, hidden: usize) -> Self {
        let enc = MlpLayout::new(n, hidden, r, 0);
        let dec = MlpLayout::new(r, hidden, n, enc.end());
        let dynamics = MlpLayout::new(r, hidden, r, dec.end());
        NetLayouts { enc, dec, dynamics }
    }

    fn for_model(model: &NeuralRom) -> Self {
        Self::new(model.state_dim(), model.latent_dim, model.encoder.hidden())
    }

    fn param_count(&self) -> usize {
        self.dynamics.end()
    }

    fn flatten(&self, model: &NeuralRom) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        MlpLayout::flatten_into(&model.encoder, &mut flat);
        MlpLayout::flatten_into(&model.decoder, &mut flat);
        MlpLayout::flatten_into(&model.dynamics, &mut flat);
        flat
    }
}

struct LossVars {
    total: Var,
    autoencoder: Var,
    right_inverse: Var,
    full_space: Var,
    latent: Var,
}

/// Loss shape shared by the forward-only and training paths.
#[derive(Debug, Clone, Copy)]
struct LossSpec {
    constrained: bool,
    lambda: f64,
    omega: f64,
    upsilon: f64,
    substeps: usize,
}

impl LossSpec {
    fn for_model(model: &NeuralRom, substeps: usize) -> Self {
        LossSpec {
            constrained: model.constrained,
            lambda: model.lambda,
            omega: model.omega,
            upsilon: model.upsilon,
            substeps,
        }
    }

    fn for_hyper(hyper: &NeuralHyper, substeps: usize) -> Self {
        LossSpec {
            constrained: hyper.constrained,
            lambda: hyper.lambda,
            omega: hyper.omega,
            upsilon: hyper.upsilon,
            substeps,
        }
    }
}

fn read_loss(tape: &Tape<'_>, vars: &LossVars) -> LossBreakdown {
    LossBreakdown {
        total: tape.scalar(vars.total),
        autoencoder: tape.scalar(vars.autoencoder),
        right_inverse: tape.scalar(vars.right_inverse),
        full_space: tape.scalar(vars.full_space),
        latent: tape.scalar(vars.latent),
    }
}

fn encode_on_tape(
    tape: &mut Tape<'_>,
    enc: &MlpLayout,
    constrained: bool,
    x: Var,
) -> Result<Var, NeuralError> {
    let u = tape.mlp(enc, x);
    if constrained {
        Ok(tape.normalize(u)?)
    } else {
        Ok(u)
    }
}

/// Build the rollout cost of one trajectory on the tape. The rollout chains
/// fixed trapezoidal substeps interval by interval, so the state compared at
/// `t_k` is the full integration from `t_0`.
fn build_loss(
    tape: &mut Tape<'_>,
    lay: &NetLayouts,
    spec: &LossSpec,
    traj: &Trajectory,
) -> Result<LossVars, NeuralError> {
    let LossSpec { constrained, lambda, omega, upsilon, substeps } = *spec;
    if traj.len() < 2 {
        return Err(NeuralError::Invalid("rollout needs trajectories of at least 2 points".into()));
    }
    if substeps == 0 {
        return Err(NeuralError::Invalid("substeps_per_interval must be at least 1".into()));
    }
    let h_data = traj
        .uniform_spacing()
        .ok_or_else(|| NeuralError::Invalid("trajectory spacing is not uniform".into()))?;
    let k_max = traj.len() - 1;
    let times = traj.times();

    let x_leaves: Vec<Var> = traj.states().iter().map(|x| tape.leaf(x.clone())).collect();
    let mut encoded = Vec::with_capacity(traj.len());
    for &x in &x_leaves {
        encoded.push(encode_on_tape(tape, &lay.enc, constrained, x)?);
    }

    let mut ae_terms = Vec::with_capacity(traj.len());
    let mut rinv_terms = Vec::with_capacity(traj.len());
    for k in 0..=k_max {
        let xhat = tape.mlp(&lay.dec, encoded[k]);
        ae_terms.push((1.0, tape.sq_diff(x_leaves[k], xhat)));
        let re_encoded = encode_on_tape(tape, &lay.enc, constrained, xhat)?;
        rinv_terms.push((1.0, tape.sq_diff(encoded[k], re_encoded)));
    }

    let mut full_terms = Vec::with_capacity(k_max);
    let mut latent_terms = Vec::with_capacity(k_max);
    let h_sub = h_data / substeps as f64;
    let mut v = encoded[0];
    for k in 1..=k_max {
        for s in 0..substeps {
            let f1 = tape.mlp(&lay.dynamics, v);
            let k1 = tape.lincomb(&[(h_sub, f1)]);
            let pred = tape.lincomb(&[(1.0, v), (1.0, k1)]);
            let f2 = tape.mlp(&lay.dynamics, pred);
            let raw = tape.lincomb(&[(1.0, v), (0.5, k1), (0.5 * h_sub, f2)]);
            v = if constrained { tape.normalize(raw)? } else { raw };
            if tape.value(v).iter().any(|x| !x.is_finite()) {
                let t = times[k - 1] + (s + 1) as f64 * h_sub - times[0];
                return Err(NeuralError::Divergence { t });
            }
        }
        let weight = (-2.0 * lambda * (times[k] - times[0])).exp();
        let xhat = tape.mlp(&lay.dec, v);
        full_terms.push((weight, tape.sq_diff(x_leaves[k], xhat)));
        latent_terms.push((weight, tape.sq_diff(encoded[k], v)));
    }

    let autoencoder = tape.lincomb(&ae_terms);
    let right_inverse = tape.lincomb(&rinv_terms);
    let full_space = tape.lincomb(&full_terms);
    let latent = tape.lincomb(&latent_terms);
    let total = tape.lincomb(&[
        (1.0, autoencoder),
        (omega, right_inverse),
        (1.0, full_space),
        (upsilon, latent),
    ]);
    Ok(LossVars { total, autoencoder, right_inverse, full_space, latent })
}

/// Rollout cost of one trajectory under the model (forward only).
pub fn rollout_loss(
    model: &NeuralRom,
    traj: &Trajectory,
    cfg: &TrainConfig,
) -> Result<LossBreakdown, NeuralError> {
    rollout_loss_grad(model, traj, cfg).map(|(loss, _)| loss)
}

/// Gradients of the total rollout cost with respect to the three networks.
#[derive(Debug, Clone)]
pub struct LossGradients {
    pub encoder: MlpParams,
    pub decoder: MlpParams,
    pub dynamics: MlpParams,
}

/// Rollout cost of one trajectory and its gradient, reverse-mode through the
/// encoder, projection, fixed-step integration, and decoder.
pub fn rollout_loss_grad(
    model: &NeuralRom,
    traj: &Trajectory,
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, LossGradients), NeuralError> {
    model.validate()?;
    let lay = NetLayouts::for_model(model);
    let flat = lay.flatten(model);
    let mut tape = Tape::new(&flat);
    let spec = LossSpec::for_model(model, cfg.substeps_per_interval);
    let vars = build_loss(&mut tape, &lay, &spec, traj)?;
    let mut grad = vec![0.0; flat.len()];
    tape.backward(vars.total, &mut grad);
    let grads = LossGradients {
        encoder: lay.enc.unflatten(&grad),
        decoder: lay.dec.unflatten(&grad),
        dynamics: lay.dynamics.unflatten(&grad),
    };
    Ok((read_loss(&tape, &vars), grads))
}

/// Loss sums with a flat gradient to match.
type LossAndGrad = (LossBreakdown, Vec<f64>);
/// Mean loss and gradient, or the failing trajectory index and its error.
type BatchOutcome = Result<LossAndGrad, (usize, NeuralError)>;

/// Mean rollout loss and its gradient over a slice of trajectories.
fn batch_loss_grad(
    flat: &[f64],
    lay: &NetLayouts,
    spec: &LossSpec,
    trajectories: &[Trajectory],
) -> BatchOutcome {
    // Fixed chunk partition keeps the floating-point reduction order
    // independent of thread scheduling.
    let chunk_count = 16.min(trajectories.len().max(1));
    let chunk_size = trajectories.len().div_ceil(chunk_count);
    let chunks: Vec<(usize, &[Trajectory])> = trajectories
        .chunks(chunk_size)
        .enumerate()
        .map(|(ci, c)| (ci * chunk_size, c))
        .collect();

    let partials: Result<Vec<LossAndGrad>, (usize, NeuralError)> = chunks
        .par_iter()
        .map(|(base, chunk)| {
            let mut grad = vec![0.0; flat.len()];
            let mut sums = LossBreakdown::zero();
            for (offset, traj) in chunk.iter().enumerate() {
                let mut tape = Tape::new(flat);
                let vars =
                    build_loss(&mut tape, lay, spec, traj).map_err(|e| (base + offset, e))?;
                sums.add(&read_loss(&tape, &vars));
                tape.backward(vars.total, &mut grad);
            }
            Ok((sums, grad))
        })
        .collect();

    let partials = partials?;
    let mut grad = vec![0.0; flat.len()];
    let mut sums = LossBreakdown::zero();
    for (s, g) in &partials {
        sums.add(s);
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
    }
    let inv = 1.0 / trajectories.len() as f64;
    sums.scale(inv);
    for g in &mut grad {
        *g *= inv;
    }
    Ok((sums, grad))
}

/// Train an autoencoder ROM by full-batch ADAM with a cyclic learning rate.
///
/// Divergence inside a rollout aborts the run with epoch and trajectory
/// context; skipping the trajectory instead would bias the expectation the
/// cost approximates.
pub fn train(
    dataset: &[Trajectory],
    cfg: &TrainConfig,
    hyper: &NeuralHyper,
) -> Result<(NeuralRom, Vec<EpochRecord>), NeuralError> {
    if dataset.is_empty() {
        return Err(NeuralError::Invalid("training dataset is empty".into()));
    }
    if cfg.epochs == 0 {
        return Err(NeuralError::Invalid("epochs must be at least 1".into()));
    }
    if hyper.latent_dim == 0 || hyper.hidden == 0 {
        return Err(NeuralError::Invalid("latent_dim and hidden must be at least 1".into()));
    }
    if cfg.lr.cycle_len == 0 || !(cfg.lr.base_lr > 0.0 && cfg.lr.base_lr <= cfg.lr.max_lr) {
        return Err(NeuralError::Invalid(
            "learning-rate schedule needs 0 < base_lr <= max_lr and cycle_len >= 1".into(),
        ));
    }
    let len = dataset[0].len();
    if len < 2 || dataset.iter().any(|t| t.len() != len) {
        return Err(NeuralError::Invalid(
            "all trajectories must share one length of at least 2 points".into(),
        ));
    }
    let n = dataset[0].dim();
    if dataset.iter().any(|t| t.dim() != n) {
        return Err(NeuralError::Invalid("all trajectories must share one state dimension".into()));
    }

    let r = hyper.latent_dim;
    let lay = NetLayouts::new(n, r, hyper.hidden);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let encoder = MlpParams::glorot_uniform(n, hyper.hidden, r, &mut rng);
    let decoder = MlpParams::glorot_uniform(r, hyper.hidden, n, &mut rng);
    let dynamics = MlpParams::glorot_uniform(r, hyper.hidden, r, &mut rng);

    let mut flat = Vec::with_capacity(lay.param_count());
    MlpLayout::flatten_into(&encoder, &mut flat);
    MlpLayout::flatten_into(&decoder, &mut flat);
    MlpLayout::flatten_into(&dynamics, &mut flat);
    let mut params = DVector::from_vec(flat);

    let mut adam = AdamState::new(params.len(), cfg.beta1, cfg.beta2);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cyclic_lr(&cfg.lr, epoch);
        let spec = LossSpec::for_hyper(hyper, cfg.substeps_per_interval);
        let (loss, grad) = batch_loss_grad(params.as_slice(), &lay, &spec, dataset).map_err(
            |(trajectory, source)| NeuralError::Train { epoch, trajectory, source: Box::new(source) },
        )?;
        log.push(EpochRecord { epoch, lr, loss });
        adam_step(&mut adam, &mut params, &DVector::from_vec(grad), lr)?;
    }

    let model = NeuralRom {
        encoder: lay.enc.unflatten(params.as_slice()),
        decoder: lay.dec.unflatten(params.as_slice()),
        dynamics: lay.dynamics.unflatten(params.as_slice()),
        constrained: hyper.constrained,
        latent_dim: r,
        lambda: hyper.lambda,
        omega: hyper.omega,
        upsilon: hyper.upsilon,
    };
    model.validate()?;
    Ok((model, log))
}

/// Forecast from `x0`: encode once, advance adaptively between observation
/// times, decode at each. Returns rows at `0, spacing, ..., horizon`.
pub fn rom_forecast(
    model: &NeuralRom,
    x0: &DVector<f64>,
    horizon: f64,
    spacing: f64,
    solver: &SolverConfig,
) -> Result<Trajectory, NeuralError> {
    if !(horizon > 0.0 && horizon.is_finite() && spacing > 0.0) {
        return Err(NeuralError::Invalid("horizon and spacing must be positive and finite".into()));
    }
    let steps = (horizon / spacing + 1e-9).floor() as usize;
    let mode = AdvanceMode::Adaptive(solver.clone());
    let mut u = model.encode(x0)?;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(model.decode(&u)?);
    for k in 1..=steps {
        u = model.advance(&u, spacing, &mode).map_err(|e| match e {
            NeuralError::Ode(OdeError::Divergence { t, .. }) => {
                NeuralError::Divergence { t: (k - 1) as f64 * spacing + t }
            }
            other => other,
        })?;
        times.push(k as f64 * spacing);
        states.push(model.decode(&u)?);
    }
    Trajectory::new(times, states).map_err(|e| NeuralError::Invalid(e.to_string()))
}

/// Empirical bound on the decoder image of the unit sphere: the max absolute
/// component over `samples` uniformly random sphere points.
pub fn sphere_image_bound(decoder: &MlpParams, samples: usize, seed: u64) -> f64 {
    use rand::Rng;
    let r = decoder.d_in();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bound: f64 = 0.0;
    for _ in 0..samples {
        let mut u = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let norm = u.norm();
        if norm < 1e-12 {
            continue;
        }
        u /= norm;
        let x = crate::nn::mlp_forward(decoder, &u).expect("decoder shape");
        bound = bound.max(x.amax());
    }
    bound
}
