//! Dynamic mode decomposition: the best rank-r linear flow map between
//! snapshot pairs, diagonalized into modes with analytic exponential
//! forecasts.
//!
//! Exact DMD: stack the pairs into `X` and `X'`, truncate the SVD
//! `X = U S V^T` at rank r, form `A~ = U^T X' V S^{-1}`, eigendecompose
//! `A~ W = W L`, and lift the eigenvectors into modes `Phi = X' V S^{-1} W`.
//! The continuous generator is `Omega = log(L) / dt` on the principal
//! branch, so a forecast is `Re(Phi exp(Omega t) Phi^+ x0)`.

use nalgebra::{Complex, DMatrix, DVector};

use crate::traj::SnapshotPair;

type C64 = Complex<f64>;

#[derive(Debug, thiserror::Error)]
pub enum DmdError {
    #[error("need at least {needed} snapshot pairs for rank {rank}, got {got}")]
    NotEnoughPairs { needed: usize, rank: usize, got: usize },
    #[error("snapshot matrix rank is below the requested rank {rank} (sigma_{index} = {sigma:e})")]
    RankDeficient { rank: usize, index: usize, sigma: f64 },
    #[error("eigenvalue {index} has magnitude {magnitude:e} below 1e-14; log is undefined")]
    DegenerateEigenvalue { index: usize, magnitude: f64 },
    #[error("eigendecomposition failed to converge")]
    EigFailed,
    #[error("modes are rank deficient; cannot form the pseudo-inverse encoder")]
    SingularModes,
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// A fitted DMD reduced order model.
#[derive(Debug, Clone)]
pub struct DmdModel {
    /// Modes (decoder), n x r.
    pub phi: DMatrix<C64>,
    /// Pseudo-inverse of the modes (encoder), r x n.
    pub phi_pinv: DMatrix<C64>,
    /// Continuous-time eigenvalues, `log(lambda) / dt`.
    pub omega: DVector<C64>,
    /// Snapshot spacing the discrete eigenvalues were scaled by.
    pub dt: f64,
}

/// Dense eigendecomposition of a real square matrix: complex Schur form plus
/// back-substitution for the eigenvectors.
pub(crate) fn eig_real(a: &DMatrix<f64>) -> Result<(Vec<C64>, DMatrix<C64>), DmdError> {
    let n = a.nrows();
    if n == 0 {
        return Err(DmdError::Invalid("empty matrix".into()));
    }
    let ac = a.map(|x| C64::new(x, 0.0));
    let schur =
        nalgebra::linalg::Schur::try_new(ac, f64::EPSILON, 200_000).ok_or(DmdError::EigFailed)?;
    let (q, t) = schur.unpack();
    let vals: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    // Guard for repeated eigenvalues in the back-substitution denominators.
    let smlnum = f64::EPSILON * t.norm().max(f64::MIN_POSITIVE);
    let mut vecs = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        let mut y = DVector::<C64>::zeros(n);
        y[k] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = C64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                s += t[(i, j)] * y[j];
            }
            let mut denom = t[(i, i)] - t[(k, k)];
            if denom.norm() < smlnum {
                denom = C64::new(smlnum, 0.0);
            }
            y[i] = -s / denom;
        }
        let mut v = &q * y;
        let norm = v.norm();
        v /= C64::new(norm, 0.0);
        vecs.set_column(k, &v);
    }
    Ok((vals, vecs))
}

/// Force exact conjugate symmetry on the spectrum of a real matrix: each
/// eigenvalue with positive imaginary part is paired with its closest
/// negative-imaginary partner, which is overwritten by the exact conjugate.
/// Keeps real-initial-condition forecasts real to machine precision.
fn enforce_conjugate_pairs(vals: &mut [C64], vecs: &mut DMatrix<C64>) {
    let n = vals.len();
    let tol = 1e-10 * vals.iter().map(|v| v.norm()).fold(1.0, f64::max);
    let mut used = vec![false; n];
    for i in 0..n {
        if used[i] || vals[i].im.abs() <= tol {
            continue;
        }
        if vals[i].im < 0.0 {
            continue;
        }
        // find the nearest unused conjugate partner
        let target = vals[i].conj();
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if j == i || used[j] || vals[j].im >= 0.0 {
                continue;
            }
            let d = (vals[j] - target).norm();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, _)) = best {
            vals[j] = target;
            let conj_col = vecs.column(i).map(|z| z.conj());
            vecs.set_column(j, &conj_col);
            used[i] = true;
            used[j] = true;
        }
    }
}

/// Complex pseudo-inverse of a full-column-rank matrix via thin QR.
fn pinv_qr(m: &DMatrix<C64>) -> Result<DMatrix<C64>, DmdError> {
    let qr = m.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let diag_min = (0..r.nrows().min(r.ncols())).map(|i| r[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if !diag_min.is_finite() || diag_min < 1e-12 * r.norm().max(f64::MIN_POSITIVE) {
        return Err(DmdError::SingularModes);
    }
    r.solve_upper_triangular(&q.adjoint()).ok_or(DmdError::SingularModes)
}

/// Fit an exact DMD model of rank `r` to consecutive snapshot pairs spaced
/// `dt` apart.
pub fn fit_dmd(pairs: &[SnapshotPair], r: usize, dt: f64) -> Result<DmdModel, DmdError> {
    if dt <= 0.0 || dt.is_nan() {
        return Err(DmdError::Invalid(format!("dt must be positive, got {dt}")));
    }
    if r == 0 {
        return Err(DmdError::Invalid("rank must be at least 1".into()));
    }
    if pairs.len() < r {
        return Err(DmdError::NotEnoughPairs { needed: r, rank: r, got: pairs.len() });
    }
    let n = pairs[0].0.len();
    if pairs.iter().any(|(a, b)| a.len() != n || b.len() != n) {
        return Err(DmdError::Invalid("snapshot pairs must share one dimension".into()));
    }
    let m = pairs.len();
    let x = DMatrix::from_fn(n, m, |i, j| pairs[j].0[i]);
    let xp = DMatrix::from_fn(n, m, |i, j| pairs[j].1[i]);

    let svd = x.svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let sigma = &svd.singular_values;
    if r > sigma.len() {
        return Err(DmdError::RankDeficient { rank: r, index: sigma.len(), sigma: 0.0 });
    }
    let cutoff = sigma[0] * 1e-12;
    if sigma[0] == 0.0 || sigma[r - 1] <= cutoff {
        return Err(DmdError::RankDeficient { rank: r, index: r - 1, sigma: sigma[r - 1] });
    }

    let u_r = u.columns(0, r);
    let v_r = vt.rows(0, r).transpose();
    let sinv = DMatrix::from_fn(r, r, |i, j| if i == j { 1.0 / sigma[i] } else { 0.0 });

    // xp_proj = X' V S^{-1} appears both in A~ and in the modes.
    let xp_proj = &xp * &v_r * &sinv;
    let a_tilde = u_r.transpose() * &xp_proj;

    let (mut vals, mut w) = eig_real(&a_tilde)?;
    enforce_conjugate_pairs(&mut vals, &mut w);
    for (i, lambda) in vals.iter().enumerate() {
        if lambda.norm() < 1e-14 {
            return Err(DmdError::DegenerateEigenvalue { index: i, magnitude: lambda.norm() });
        }
    }
    // Principal branch: log|l| + i arg(l), arg in (-pi, pi].
    let omega = DVector::from_fn(r, |i, _| {
        let l = vals[i];
        C64::new(l.norm().ln(), l.arg()) / C64::new(dt, 0.0)
    });

    let phi = xp_proj.map(|x| C64::new(x, 0.0)) * &w;
    let phi_pinv = pinv_qr(&phi)?;
    Ok(DmdModel { phi, phi_pinv, omega, dt })
}

impl DmdModel {
    pub fn rank(&self) -> usize {
        self.phi.ncols()
    }

    pub fn state_dim(&self) -> usize {
        self.phi.nrows()
    }

    /// Latent (modal) coordinates of a full state.
    pub fn encode(&self, x: &DVector<f64>) -> DVector<C64> {
        &self.phi_pinv * x.map(|v| C64::new(v, 0.0))
    }

    /// Real part of the reconstruction from modal coordinates.
    pub fn decode(&self, u: &DVector<C64>) -> DVector<f64> {
        (&self.phi * u).map(|z| z.re)
    }

    /// Advance modal coordinates analytically by time `t`.
    pub fn advance_latent(&self, u: &DVector<C64>, t: f64) -> DVector<C64> {
        DVector::from_fn(u.len(), |i, _| (self.omega[i] * C64::new(t, 0.0)).exp() * u[i])
    }

    /// Largest real part among the continuous eigenvalues.
    pub fn max_growth_rate(&self) -> f64 {
        self.omega.iter().map(|w| w.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Analytic forecast `Re(Phi exp(Omega t) Phi^+ x0)`.
pub fn dmd_forecast(model: &DmdModel, x0: &DVector<f64>, t: f64) -> DVector<f64> {
    let u0 = model.encode(x0);
    let ut = model.advance_latent(&u0, t);
    model.decode(&ut)
}
