//! Quadratic-manifold reduced order models: a POD basis with a quadratic
//! decoder correction, and quadratic latent dynamics fit by ridge least
//! squares on finite-difference derivatives.
//!
//! ```text
//! u = Phi^T (x - x_bar)
//! x ~ x_bar + Phi u + u^T PhiBar u
//! du/dt = a + B u + u^T C u
//! ```
//!
//! The quadratic features use the non-redundant symmetric basis
//! `{u_i u_j, i <= j}`; fits carry a small ridge proportional to the squared
//! spectral norm of the feature matrix so they stay solvable on degenerate
//! inputs.

use nalgebra::{DMatrix, DVector};

use crate::ode::{self, OdeError, SolverConfig};
use crate::traj::Trajectory;

#[derive(Debug, thiserror::Error)]
pub enum QuadError {
    #[error("need at least {needed} snapshots, got {got}")]
    NotEnoughData { needed: usize, got: usize },
    #[error("snapshots have rank below {rank} (sigma_{index} = {sigma:e})")]
    RankDeficient { rank: usize, index: usize, sigma: f64 },
    #[error("trajectory spacing is not uniform")]
    NonUniformSpacing,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("latent integration failed: {0}")]
    Ode(#[from] OdeError),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Symmetric 3-tensor `T[k][i][j]` stored row-major with `j` fastest,
/// symmetric in its trailing two indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor3 {
    data: Vec<f64>,
    out_dim: usize,
    in_dim: usize,
}

impl SymTensor3 {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        SymTensor3 { data: vec![0.0; out_dim * in_dim * in_dim], out_dim, in_dim }
    }

    pub fn from_data(data: Vec<f64>, out_dim: usize, in_dim: usize) -> Result<Self, QuadError> {
        if data.len() != out_dim * in_dim * in_dim {
            return Err(QuadError::Dimension { expected: out_dim * in_dim * in_dim, got: data.len() });
        }
        let mut t = SymTensor3 { data, out_dim, in_dim };
        t.symmetrize();
        Ok(t)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.out_dim, self.in_dim, self.in_dim)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.in_dim + i) * self.in_dim + j]
    }

    pub fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        self.data[(k * self.in_dim + i) * self.in_dim + j] = v;
    }

    /// Replace the trailing-index part with its symmetric average; only the
    /// symmetric part is observable through `u^T T u`.
    pub fn symmetrize(&mut self) {
        for k in 0..self.out_dim {
            for i in 0..self.in_dim {
                for j in (i + 1)..self.in_dim {
                    let avg = 0.5 * (self.get(k, i, j) + self.get(k, j, i));
                    self.set(k, i, j, avg);
                    self.set(k, j, i, avg);
                }
            }
        }
    }

    /// Evaluate `(u^T T u)_k = sum_ij T[k][i][j] u_i u_j`.
    pub fn apply_quadratic(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.out_dim);
        for k in 0..self.out_dim {
            let mut acc = 0.0;
            for i in 0..self.in_dim {
                let base = (k * self.in_dim + i) * self.in_dim;
                let ui = u[i];
                for j in 0..self.in_dim {
                    acc += self.data[base + j] * ui * u[j];
                }
            }
            out[k] = acc;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// A fitted quadratic-manifold ROM.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    /// Mean field of the snapshots.
    pub x_bar: DVector<f64>,
    /// POD basis, n x r with orthonormal columns.
    pub phi: DMatrix<f64>,
    /// Quadratic decoder correction, n x r x r.
    pub phi_bar: SymTensor3,
    /// Latent dynamics: constant, linear, quadratic.
    pub a: DVector<f64>,
    pub b: DMatrix<f64>,
    pub c: SymTensor3,
}

impl QuadraticModel {
    pub fn rank(&self) -> usize {
        self.phi.ncols()
    }

    pub fn state_dim(&self) -> usize {
        self.phi.nrows()
    }

    /// Affine encoder `Phi^T (x - x_bar)`.
    pub fn encode(&self, x: &DVector<f64>) -> DVector<f64> {
        self.phi.transpose() * (x - &self.x_bar)
    }

    /// Decoder with quadratic correction.
    pub fn decode(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.x_bar + &self.phi * u + self.phi_bar.apply_quadratic(u)
    }

    /// Latent vector field `a + B u + u^T C u`.
    pub fn latent_rhs(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.a + &self.b * u + self.c.apply_quadratic(u)
    }
}

/// Number of non-redundant symmetric quadratic features for dimension r.
pub fn quad_feature_count(r: usize) -> usize {
    r * (r + 1) / 2
}

/// Symmetric quadratic features `{u_i u_j, i <= j}` in row-major (i, j) order.
fn quad_features(u: &DVector<f64>) -> Vec<f64> {
    let r = u.len();
    let mut q = Vec::with_capacity(quad_feature_count(r));
    for i in 0..r {
        for j in i..r {
            q.push(u[i] * u[j]);
        }
    }
    q
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
fn spectral_norm_psd(g: &DMatrix<f64>) -> f64 {
    let n = g.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..100 {
        let w = g * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = w / norm;
    }
    lambda
}

/// Ridge least squares `min |F w - y|^2 + alpha |w|^2` column-by-column for a
/// matrix of targets. `alpha = 1e-8 * |F|_2^2`, floored so the normal system
/// stays positive definite even for all-zero features. One step of iterative
/// refinement knocks the ridge bias down to O(alpha^2) on well-posed systems
/// while degenerate systems still return the minimal-norm solution.
fn ridge_lsq(features: &DMatrix<f64>, targets: &DMatrix<f64>) -> DMatrix<f64> {
    let gram = features.transpose() * features;
    let alpha = (1e-8 * spectral_norm_psd(&gram)).max(1e-30);
    let mut lhs = gram.clone();
    for i in 0..lhs.nrows() {
        lhs[(i, i)] += alpha;
    }
    let rhs = features.transpose() * targets;
    let solve = |b: &DMatrix<f64>| match lhs.clone().cholesky() {
        Some(chol) => chol.solve(b),
        // extremely ill-conditioned fallback
        None => lhs.clone().lu().solve(b).unwrap_or_else(|| DMatrix::zeros(b.nrows(), b.ncols())),
    };
    let w = solve(&rhs);
    let correction = solve(&(&rhs - &gram * &w));
    w + correction
}

/// POD basis: sample mean plus the top-r left singular vectors of the
/// centered snapshot matrix.
pub fn fit_pod(
    states: &[DVector<f64>],
    r: usize,
) -> Result<(DVector<f64>, DMatrix<f64>), QuadError> {
    if r == 0 {
        return Err(QuadError::Invalid("rank must be at least 1".into()));
    }
    if states.len() < r {
        return Err(QuadError::NotEnoughData { needed: r, got: states.len() });
    }
    let n = states[0].len();
    let m = states.len();
    let mut x_bar = DVector::zeros(n);
    for s in states {
        if s.len() != n {
            return Err(QuadError::Dimension { expected: n, got: s.len() });
        }
        x_bar += s;
    }
    x_bar /= m as f64;

    let centered = DMatrix::from_fn(n, m, |i, j| states[j][i] - x_bar[i]);
    let svd = centered.svd(true, false);
    let u = svd.u.as_ref().expect("svd with u");
    let sigma = &svd.singular_values;
    if r > sigma.len() || sigma[0] == 0.0 || sigma[r - 1] <= sigma[0] * 1e-12 {
        let idx = r.min(sigma.len()).saturating_sub(1);
        return Err(QuadError::RankDeficient { rank: r, index: idx, sigma: sigma[idx.min(sigma.len() - 1)] });
    }
    Ok((x_bar, u.columns(0, r).into_owned()))
}

/// Fit the quadratic decoder correction: ridge least squares of the POD
/// residual against symmetric quadratic features of the latent coordinates.
pub fn fit_quadratic_decoder(
    states: &[DVector<f64>],
    x_bar: &DVector<f64>,
    phi: &DMatrix<f64>,
) -> Result<SymTensor3, QuadError> {
    let n = phi.nrows();
    let r = phi.ncols();
    if states.is_empty() {
        return Err(QuadError::NotEnoughData { needed: 1, got: 0 });
    }
    let m = states.len();
    let p = quad_feature_count(r);
    let mut feat = DMatrix::zeros(m, p);
    let mut resid = DMatrix::zeros(m, n);
    for (row, x) in states.iter().enumerate() {
        if x.len() != n || x_bar.len() != n {
            return Err(QuadError::Dimension { expected: n, got: x.len() });
        }
        let u = phi.transpose() * (x - x_bar);
        for (col, q) in quad_features(&u).into_iter().enumerate() {
            feat[(row, col)] = q;
        }
        let e = x - x_bar - phi * &u;
        for i in 0..n {
            resid[(row, i)] = e[i];
        }
    }
    let coeffs = ridge_lsq(&feat, &resid); // p x n
    let mut tensor = SymTensor3::zeros(n, r);
    for k in 0..n {
        let mut col = 0;
        for i in 0..r {
            for j in i..r {
                let c = coeffs[(col, k)];
                if i == j {
                    tensor.set(k, i, i, c);
                } else {
                    tensor.set(k, i, j, 0.5 * c);
                    tensor.set(k, j, i, 0.5 * c);
                }
                col += 1;
            }
        }
    }
    Ok(tensor)
}

/// A latent state paired with its estimated time derivative.
pub type LatentDerivative = (DVector<f64>, DVector<f64>);

/// Finite-difference time derivatives of a uniformly spaced latent
/// trajectory: centered in the interior, one-sided first order at the ends.
pub fn fd_derivative(traj: &Trajectory) -> Result<Vec<LatentDerivative>, QuadError> {
    if traj.len() < 2 {
        return Err(QuadError::NotEnoughData { needed: 2, got: traj.len() });
    }
    let h = traj.uniform_spacing().ok_or(QuadError::NonUniformSpacing)?;
    let u = traj.states();
    let k_max = traj.len() - 1;
    let mut out = Vec::with_capacity(traj.len());
    for k in 0..=k_max {
        let du = if k == 0 {
            (&u[1] - &u[0]) / h
        } else if k == k_max {
            (&u[k_max] - &u[k_max - 1]) / h
        } else {
            (&u[k + 1] - &u[k - 1]) / (2.0 * h)
        };
        out.push((u[k].clone(), du));
    }
    Ok(out)
}

/// Fit `du/dt = a + B u + u^T C u` by ridge least squares against the
/// features `[1, u, sym(u (x) u)]`.
pub fn fit_quadratic_dynamics(
    samples: &[LatentDerivative],
) -> Result<(DVector<f64>, DMatrix<f64>, SymTensor3), QuadError> {
    if samples.is_empty() {
        return Err(QuadError::NotEnoughData { needed: 1, got: 0 });
    }
    let r = samples[0].0.len();
    let p = quad_feature_count(r);
    let m = samples.len();
    let mut feat = DMatrix::zeros(m, 1 + r + p);
    let mut target = DMatrix::zeros(m, r);
    for (row, (u, du)) in samples.iter().enumerate() {
        if u.len() != r || du.len() != r {
            return Err(QuadError::Dimension { expected: r, got: u.len().max(du.len()) });
        }
        feat[(row, 0)] = 1.0;
        for i in 0..r {
            feat[(row, 1 + i)] = u[i];
        }
        for (col, q) in quad_features(u).into_iter().enumerate() {
            feat[(row, 1 + r + col)] = q;
        }
        for i in 0..r {
            target[(row, i)] = du[i];
        }
    }
    let coeffs = ridge_lsq(&feat, &target); // (1 + r + p) x r
    let a = DVector::from_fn(r, |i, _| coeffs[(0, i)]);
    let b = DMatrix::from_fn(r, r, |i, j| coeffs[(1 + j, i)]);
    let mut c = SymTensor3::zeros(r, r);
    for k in 0..r {
        let mut col = 1 + r;
        for i in 0..r {
            for j in i..r {
                let v = coeffs[(col, k)];
                if i == j {
                    c.set(k, i, i, v);
                } else {
                    c.set(k, i, j, 0.5 * v);
                    c.set(k, j, i, 0.5 * v);
                }
                col += 1;
            }
        }
    }
    Ok((a, b, c))
}

/// Fit the whole quadratic-manifold ROM from trajectories: POD, decoder
/// correction, then dynamics on finite-difference derivatives that never
/// cross trajectory boundaries.
pub fn fit_quadratic_rom(
    trajectories: &[Trajectory],
    r: usize,
) -> Result<QuadraticModel, QuadError> {
    let states: Vec<DVector<f64>> =
        trajectories.iter().flat_map(|t| t.states().iter().cloned()).collect();
    let (x_bar, phi) = fit_pod(&states, r)?;
    let phi_bar = fit_quadratic_decoder(&states, &x_bar, &phi)?;

    let mut samples = Vec::new();
    for traj in trajectories {
        if traj.len() < 2 {
            continue;
        }
        let latent = Trajectory::new(
            traj.times().to_vec(),
            traj.states().iter().map(|x| phi.transpose() * (x - &x_bar)).collect(),
        )
        .map_err(|e| QuadError::Invalid(e.to_string()))?;
        samples.extend(fd_derivative(&latent)?);
    }
    let (a, b, c) = fit_quadratic_dynamics(&samples)?;
    Ok(QuadraticModel { x_bar, phi, phi_bar, a, b, c })
}

/// Encode, integrate the quadratic latent ODE to time `t` (no projection),
/// and decode. Finite-time blow-up surfaces as a divergence error.
pub fn quad_forecast(
    model: &QuadraticModel,
    x0: &DVector<f64>,
    t: f64,
    solver: &SolverConfig,
) -> Result<DVector<f64>, QuadError> {
    if x0.len() != model.state_dim() {
        return Err(QuadError::Dimension { expected: model.state_dim(), got: x0.len() });
    }
    let u0 = model.encode(x0);
    let mut rhs = |u: &DVector<f64>| model.latent_rhs(u);
    let u_t = ode::integrate_adaptive(&mut rhs, &u0, 0.0, t, solver, None)?;
    Ok(model.decode(&u_t))
}
