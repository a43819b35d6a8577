//! One-hidden-layer perceptron with exact GELU, hand-rolled reverse-mode
//! gradients, the ADAM optimizer, and a triangular cyclic learning-rate
//! schedule.
//!
//! The architecture is deliberately fixed to a single hidden layer,
//! `y = A2 gelu(A1 x + b1) + b2`; a continuous network of this form maps
//! compact sets to compact sets, which the constrained ROM relies on.

pub mod tape;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },
    #[error("projection is degenerate: |u| = {norm:e} below 1e-12")]
    DegenerateProjection { norm: f64 },
    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),
}

/// Exact GELU, `x * Phi(x)` with the erf-based standard normal CDF.
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

/// Derivative of [`gelu`]: `Phi(x) + x phi(x)`.
pub fn gelu_prime(x: f64) -> f64 {
    x * normal_pdf(x) + normal_cdf(x)
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Parameters of a one-hidden-layer network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// Hidden weights, H x d_in.
    pub a1: DMatrix<f64>,
    /// Hidden bias, H.
    pub b1: DVector<f64>,
    /// Output weights, d_out x H.
    pub a2: DMatrix<f64>,
    /// Output bias, d_out.
    pub b2: DVector<f64>,
}

impl MlpParams {
    pub fn zeros(d_in: usize, hidden: usize, d_out: usize) -> Self {
        MlpParams {
            a1: DMatrix::zeros(hidden, d_in),
            b1: DVector::zeros(hidden),
            a2: DMatrix::zeros(d_out, hidden),
            b2: DVector::zeros(d_out),
        }
    }

    /// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
    pub fn glorot_uniform<R: Rng>(d_in: usize, hidden: usize, d_out: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(d_in, hidden, d_out);
        let lim1 = (6.0 / (d_in + hidden) as f64).sqrt();
        for v in p.a1.iter_mut() {
            *v = rng.random_range(-lim1..lim1);
        }
        let lim2 = (6.0 / (hidden + d_out) as f64).sqrt();
        for v in p.a2.iter_mut() {
            *v = rng.random_range(-lim2..lim2);
        }
        p
    }

    pub fn d_in(&self) -> usize {
        self.a1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.a1.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.a2.nrows()
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.b1.len() != self.hidden() {
            return Err(NnError::Shape { what: "b1", expected: self.hidden(), got: self.b1.len() });
        }
        if self.a2.ncols() != self.hidden() {
            return Err(NnError::Shape { what: "a2", expected: self.hidden(), got: self.a2.ncols() });
        }
        if self.b2.len() != self.d_out() {
            return Err(NnError::Shape { what: "b2", expected: self.d_out(), got: self.b2.len() });
        }
        let finite = self.a1.iter().chain(self.b1.iter()).chain(self.a2.iter()).chain(self.b2.iter());
        if finite.clone().any(|x| !x.is_finite()) {
            return Err(NnError::NonFinite("mlp parameters"));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.a1.len() + self.b1.len() + self.a2.len() + self.b2.len()
    }
}

/// Forward pass `A2 gelu(A1 x + b1) + b2`.
pub fn mlp_forward(p: &MlpParams, x: &DVector<f64>) -> Result<DVector<f64>, NnError> {
    if x.len() != p.d_in() {
        return Err(NnError::Shape { what: "input", expected: p.d_in(), got: x.len() });
    }
    let z1 = &p.a1 * x + &p.b1;
    let h = z1.map(gelu);
    Ok(&p.a2 * h + &p.b2)
}

/// Exact reverse-mode gradients of `upstream . mlp_forward(p, x)` with
/// respect to all parameters and the input.
pub fn mlp_backward(
    p: &MlpParams,
    x: &DVector<f64>,
    upstream: &DVector<f64>,
) -> Result<(MlpParams, DVector<f64>), NnError> {
    if x.len() != p.d_in() {
        return Err(NnError::Shape { what: "input", expected: p.d_in(), got: x.len() });
    }
    if upstream.len() != p.d_out() {
        return Err(NnError::Shape { what: "upstream", expected: p.d_out(), got: upstream.len() });
    }
    let z1 = &p.a1 * x + &p.b1;
    let h = z1.map(gelu);

    let grad_b2 = upstream.clone();
    let grad_a2 = upstream * h.transpose();
    let gh = p.a2.transpose() * upstream;
    let gz1 = gh.zip_map(&z1, |g, z| g * gelu_prime(z));
    let grad_b1 = gz1.clone();
    let grad_a1 = &gz1 * x.transpose();
    let grad_x = p.a1.transpose() * gz1;
    Ok((MlpParams { a1: grad_a1, b1: grad_b1, a2: grad_a2, b2: grad_b2 }, grad_x))
}

/// ADAM optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: DVector<f64>,
    pub v: DVector<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize, beta1: f64, beta2: f64) -> Self {
        AdamState {
            m: DVector::zeros(len),
            v: DVector::zeros(len),
            step_count: 0,
            beta1,
            beta2,
            epsilon: 1e-8,
        }
    }
}

/// One ADAM update with bias correction, in place.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut DVector<f64>,
    grad: &DVector<f64>,
    lr: f64,
) -> Result<(), NnError> {
    let n = params.len();
    if grad.len() != n || state.m.len() != n {
        return Err(NnError::Shape { what: "adam gradient", expected: n, got: grad.len() });
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..n {
        let g = grad[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

/// Triangular cyclic learning rate.
#[derive(Debug, Clone)]
pub struct CyclicLrSchedule {
    pub base_lr: f64,
    pub max_lr: f64,
    /// Iterations from base to max; the full period is `2 * cycle_len`.
    pub cycle_len: usize,
}

impl Default for CyclicLrSchedule {
    fn default() -> Self {
        CyclicLrSchedule { base_lr: 1e-4, max_lr: 1e-2, cycle_len: 100 }
    }
}

/// Learning rate at `iteration`: a triangle wave between `base_lr` and
/// `max_lr` with period `2 * cycle_len`. A degenerate schedule (empty cycle)
/// pins the rate at `base_lr`.
pub fn cyclic_lr(schedule: &CyclicLrSchedule, iteration: usize) -> f64 {
    if schedule.cycle_len == 0 {
        return schedule.base_lr;
    }
    let period = 2 * schedule.cycle_len;
    let pos = iteration % period;
    let frac = if pos <= schedule.cycle_len {
        pos as f64 / schedule.cycle_len as f64
    } else {
        (period - pos) as f64 / schedule.cycle_len as f64
    };
    schedule.base_lr + (schedule.max_lr - schedule.base_lr) * frac
}
