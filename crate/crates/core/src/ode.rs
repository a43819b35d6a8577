//! Explicit trapezoidal integration with an embedded first-order method for
//! step-size control, and optional per-step projection onto a constraint
//! manifold.
//!
//! One step of the projected method from state `u` with step `h`:
//!
//! ```text
//! k1 = h f(u)          k2 = h f(u + k1)
//! u_next     = P[u + (k1 + k2) / 2]      (second order)
//! u_embedded = P[u + k1]                 (first order, error estimate)
//! ```
//!
//! where `P` is the projection (identity when no constraint is active).
//! Both solutions are projected before the error estimate is formed, so the
//! controller sees only on-manifold discrepancies.

use nalgebra::DVector;

/// Projection onto a constraint manifold, applied after every accepted step.
pub trait Projection {
    fn project(&self, u: &DVector<f64>) -> Result<DVector<f64>, OdeError>;
}

#[derive(Debug, thiserror::Error)]
pub enum OdeError {
    #[error("vector field produced a non-finite value")]
    NonFinite { state: DVector<f64> },
    #[error("solution diverged at t = {t}")]
    Divergence { t: f64, state: DVector<f64> },
    #[error("step size fell below h_min = {h_min:e} at t = {t}")]
    StepUnderflow { t: f64, h_min: f64 },
    #[error("exceeded the step budget of {max_steps} at t = {t}")]
    MaxStepsExceeded { t: f64, max_steps: usize },
    #[error("projection is degenerate: |u| below {min_norm:e}")]
    DegenerateProjection { min_norm: f64 },
    #[error("invalid solver setup: {0}")]
    Invalid(String),
}

impl OdeError {
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            OdeError::NonFinite { .. }
                | OdeError::Divergence { .. }
                | OdeError::StepUnderflow { .. }
                | OdeError::MaxStepsExceeded { .. }
        )
    }

    /// Attach the time coordinate to a time-less step failure.
    fn at_time(self, t: f64) -> OdeError {
        match self {
            OdeError::NonFinite { state } => OdeError::Divergence { t, state },
            other => other,
        }
    }
}

/// Adaptive step control parameters.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            abs_tol: 1e-6,
            rel_tol: 1e-6,
            h_init: 1e-2,
            h_min: 1e-12,
            h_max: 1.0,
            max_steps: 10_000_000,
        }
    }
}

impl SolverConfig {
    /// Configuration for reference solutions. The embedded estimate measures
    /// the first-order method, so tolerances tighter than ~1e-6 shrink the
    /// accepted step quadratically and make long reference runs intractable;
    /// on a chaotic system tighter tolerances buy no usable path accuracy
    /// anyway.
    pub fn reference() -> Self {
        SolverConfig {
            abs_tol: 1e-6,
            rel_tol: 1e-6,
            h_init: 1e-3,
            ..SolverConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), OdeError> {
        let tols_ok = self.abs_tol > 0.0 && self.rel_tol > 0.0;
        if !tols_ok {
            return Err(OdeError::Invalid("tolerances must be positive".into()));
        }
        let steps_ordered = self.h_min <= self.h_init && self.h_init <= self.h_max;
        if !steps_ordered {
            return Err(OdeError::Invalid(format!(
                "step bounds must satisfy h_min <= h_init <= h_max, got {:e} / {:e} / {:e}",
                self.h_min, self.h_init, self.h_max
            )));
        }
        if self.h_min < 0.0 || self.max_steps == 0 {
            return Err(OdeError::Invalid("h_min must be >= 0, max_steps >= 1".into()));
        }
        Ok(())
    }
}

/// Result of one trapezoidal step.
#[derive(Debug, Clone)]
pub struct StepResult {
    /// Projected second-order solution.
    pub u_next: DVector<f64>,
    /// Projected first-order (explicit Euler) solution.
    pub u_embedded: DVector<f64>,
    /// 2-norm of `u_next - u_embedded`.
    pub error_estimate: f64,
}

fn apply_projection(
    u: DVector<f64>,
    proj: Option<&dyn Projection>,
) -> Result<DVector<f64>, OdeError> {
    match proj {
        Some(p) => p.project(&u),
        None => Ok(u),
    }
}

fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// One explicit trapezoidal step with embedded error estimate.
pub fn trap_step<F>(
    f: &mut F,
    u: &DVector<f64>,
    h: f64,
    proj: Option<&dyn Projection>,
) -> Result<StepResult, OdeError>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    if h <= 0.0 || h.is_nan() {
        return Err(OdeError::Invalid(format!("step size must be positive, got {h}")));
    }
    let k1 = f(u) * h;
    if !all_finite(&k1) {
        return Err(OdeError::NonFinite { state: u.clone() });
    }
    let predictor = u + &k1;
    let k2 = f(&predictor) * h;
    if !all_finite(&k2) {
        return Err(OdeError::NonFinite { state: predictor });
    }
    let u_next = apply_projection(u + (&k1 + &k2) * 0.5, proj)?;
    let u_embedded = apply_projection(predictor, proj)?;
    if !all_finite(&u_next) || !all_finite(&u_embedded) {
        return Err(OdeError::NonFinite { state: u_next });
    }
    let error_estimate = (&u_next - &u_embedded).norm();
    Ok(StepResult { u_next, u_embedded, error_estimate })
}

/// Scaled RMS norm of the embedded error, so that `<= 1` means acceptable.
fn scaled_error(step: &StepResult, u_prev: &DVector<f64>, cfg: &SolverConfig) -> f64 {
    let n = step.u_next.len();
    let mut acc = 0.0;
    for i in 0..n {
        let scale = cfg.abs_tol + cfg.rel_tol * u_prev[i].abs().max(step.u_next[i].abs());
        let e = (step.u_next[i] - step.u_embedded[i]) / scale;
        acc += e * e;
    }
    (acc / n as f64).sqrt()
}

/// Counters from one adaptive integration.
#[derive(Debug, Clone, Default)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Smallest accepted step, excluding the truncated final step.
    pub min_accepted_h: f64,
}

/// Integrate `du/dt = f(u)` from `t0` to `t1` with adaptive step control.
///
/// Accepts a step when the scaled embedded error is at most one and rescales
/// the step by `0.9 * err^(-1/2)` clamped to `[0.2, 5]`. The final step is
/// truncated to land exactly on `t1`.
pub fn integrate_adaptive<F>(
    f: &mut F,
    u0: &DVector<f64>,
    t0: f64,
    t1: f64,
    cfg: &SolverConfig,
    proj: Option<&dyn Projection>,
) -> Result<DVector<f64>, OdeError>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    integrate_adaptive_stats(f, u0, t0, t1, cfg, proj).map(|(u, _)| u)
}

/// As [`integrate_adaptive`], additionally reporting step statistics.
pub fn integrate_adaptive_stats<F>(
    f: &mut F,
    u0: &DVector<f64>,
    t0: f64,
    t1: f64,
    cfg: &SolverConfig,
    proj: Option<&dyn Projection>,
) -> Result<(DVector<f64>, SolverStats), OdeError>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    cfg.validate()?;
    if t1 < t0 {
        return Err(OdeError::Invalid(format!("time must advance, got t0 = {t0}, t1 = {t1}")));
    }
    let mut u = u0.clone();
    let mut stats = SolverStats { min_accepted_h: f64::INFINITY, ..SolverStats::default() };
    if t1 == t0 {
        stats.min_accepted_h = 0.0;
        return Ok((u, stats));
    }

    let mut t = t0;
    let mut h = cfg.h_init.clamp(cfg.h_min.max(f64::MIN_POSITIVE), cfg.h_max);
    let mut steps = 0usize;
    while t < t1 {
        steps += 1;
        if steps > cfg.max_steps {
            return Err(OdeError::MaxStepsExceeded { t, max_steps: cfg.max_steps });
        }
        let remaining = t1 - t;
        let truncated = h >= remaining;
        let h_step = if truncated { remaining } else { h };

        let step = trap_step(f, &u, h_step, proj).map_err(|e| e.at_time(t))?;
        let err = scaled_error(&step, &u, cfg);
        if err <= 1.0 {
            t = if truncated { t1 } else { t + h_step };
            u = step.u_next;
            stats.accepted += 1;
            if !truncated {
                stats.min_accepted_h = stats.min_accepted_h.min(h_step);
            }
        } else {
            stats.rejected += 1;
        }

        // Elementary controller; the embedded method is first order.
        let factor = if err > 0.0 { 0.9 * err.powf(-0.5) } else { 5.0 };
        h = (h_step * factor.clamp(0.2, 5.0)).min(cfg.h_max);
        if t < t1 && h < cfg.h_min {
            return Err(OdeError::StepUnderflow { t, h_min: cfg.h_min });
        }
    }
    if stats.min_accepted_h.is_infinite() {
        // Single truncated step covered the whole interval.
        stats.min_accepted_h = t1 - t0;
    }
    Ok((u, stats))
}

/// Integrate with `n_substeps` equal trapezoidal steps of size `h`.
///
/// The step schedule is fixed up front, so the whole map is a static
/// composition of differentiable operations; training losses integrate
/// through this path.
pub fn integrate_fixed<F>(
    f: &mut F,
    u0: &DVector<f64>,
    n_substeps: usize,
    h: f64,
    proj: Option<&dyn Projection>,
) -> Result<DVector<f64>, OdeError>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    if n_substeps == 0 {
        return Err(OdeError::Invalid("n_substeps must be at least 1".into()));
    }
    let mut u = u0.clone();
    for i in 0..n_substeps {
        let step = trap_step(f, &u, h, proj).map_err(|e| e.at_time(i as f64 * h))?;
        u = step.u_next;
    }
    Ok(u)
}
