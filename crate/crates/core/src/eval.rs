//! Forecast-quality evaluation: Gaussian kernel density estimates with the
//! Silverman bandwidth, a numerically stable approximate KL divergence, the
//! day-by-day KL experiment, and the flow-field export.
//!
//! The KL estimator averages `(log q(x) - log p(x))^2 / 2` over samples drawn
//! from the forecast distribution `p`, with both densities approximated by
//! product-kernel KDEs. Only log-density differences enter, which keeps the
//! estimator meaningful even in the 40-dimensional state space where absolute
//! KDE densities are relative measures at best.

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::lorenz96::Lorenz96;
use crate::ode::SolverConfig;
use crate::rom::{Forecaster, Rom};
use crate::traj::fmt_g17;
use crate::{Error, UNITS_PER_DAY};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("need at least 2 samples to fit a density, got {got}")]
    NotEnoughSamples { got: usize },
    #[error("dimension {dim} is degenerate: zero sample variance")]
    DegenerateDimension { dim: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Anything that can report a log density at a point.
pub trait LogDensity: Sync {
    fn log_density(&self, x: &DVector<f64>) -> f64;
}

/// Diagonal-bandwidth Gaussian product-kernel density estimate.
#[derive(Debug, Clone)]
pub struct KdeModel {
    samples: Vec<DVector<f64>>,
    bandwidth: DVector<f64>,
    /// `-sum_j log(h_j sqrt(2 pi)) - log m`, the per-kernel log normalizer.
    log_norm: f64,
}

impl KdeModel {
    /// Fit with the per-dimension Silverman bandwidth
    /// `h_i = sigma_i (4 / ((d + 2) m))^(1 / (d + 4))`.
    pub fn fit(samples: &[DVector<f64>]) -> Result<Self, EvalError> {
        let m = samples.len();
        if m < 2 {
            return Err(EvalError::NotEnoughSamples { got: m });
        }
        let d = samples[0].len();
        let mut mean = DVector::zeros(d);
        for s in samples {
            if s.len() != d || s.iter().any(|x| !x.is_finite()) {
                return Err(EvalError::Invalid("samples must be finite and share one dimension".into()));
            }
            mean += s;
        }
        mean /= m as f64;
        let mut var = DVector::zeros(d);
        for s in samples {
            for j in 0..d {
                let dx = s[j] - mean[j];
                var[j] += dx * dx;
            }
        }
        var /= (m - 1) as f64;
        let factor = (4.0 / ((d as f64 + 2.0) * m as f64)).powf(1.0 / (d as f64 + 4.0));
        let mut bandwidth = DVector::zeros(d);
        for j in 0..d {
            if var[j] <= 0.0 {
                return Err(EvalError::DegenerateDimension { dim: j });
            }
            bandwidth[j] = var[j].sqrt() * factor;
        }
        Self::with_bandwidth(samples.to_vec(), bandwidth)
    }

    /// Fit with an explicit bandwidth vector.
    pub fn with_bandwidth(
        samples: Vec<DVector<f64>>,
        bandwidth: DVector<f64>,
    ) -> Result<Self, EvalError> {
        if samples.len() < 2 {
            return Err(EvalError::NotEnoughSamples { got: samples.len() });
        }
        let d = samples[0].len();
        if bandwidth.len() != d {
            return Err(EvalError::Invalid("bandwidth dimension mismatch".into()));
        }
        if let Some(j) = (0..d).find(|&j| bandwidth[j] <= 0.0 || bandwidth[j].is_nan()) {
            return Err(EvalError::DegenerateDimension { dim: j });
        }
        let log_norm = -(samples.len() as f64).ln()
            - bandwidth.iter().map(|h| (h * (2.0 * std::f64::consts::PI).sqrt()).ln()).sum::<f64>();
        Ok(KdeModel { samples, bandwidth, log_norm })
    }

    pub fn bandwidth(&self) -> &DVector<f64> {
        &self.bandwidth
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }
}

impl LogDensity for KdeModel {
    /// Log of the mixture density via log-sum-exp; finite for any finite
    /// input, no matter how far from the samples.
    fn log_density(&self, x: &DVector<f64>) -> f64 {
        let mut exponents = Vec::with_capacity(self.samples.len());
        let mut max = f64::NEG_INFINITY;
        for s in &self.samples {
            let mut e = 0.0;
            for j in 0..x.len() {
                let z = (x[j] - s[j]) / self.bandwidth[j];
                e -= 0.5 * z * z;
            }
            if e > max {
                max = e;
            }
            exponents.push(e);
        }
        let sum: f64 = exponents.iter().map(|e| (e - max).exp()).sum();
        self.log_norm + max + sum.ln()
    }
}

/// Approximate KL divergence of `p` from `q`:
/// `mean over x ~ p of (log q(x) - log p(x))^2 / 2`.
pub fn kl_approx<P: LogDensity + ?Sized, Q: LogDensity + ?Sized>(
    p: &P,
    q: &Q,
    eval_samples: &[DVector<f64>],
) -> f64 {
    if eval_samples.is_empty() {
        return 0.0;
    }
    let terms: Vec<f64> = eval_samples
        .par_iter()
        .map(|x| {
            let d = q.log_density(x) - p.log_density(x);
            0.5 * d * d
        })
        .collect();
    terms.iter().sum::<f64>() / eval_samples.len() as f64
}

/// KL value of one (day, method) cell.
#[derive(Debug, Clone, PartialEq)]
pub enum KlValue {
    /// Finite non-negative estimate.
    Finite(f64),
    /// More than half the ensemble diverged; reported as the +inf sentinel.
    DivergedMajority,
    /// Density fitting or evaluation failed.
    Failed(String),
}

impl KlValue {
    pub fn render(&self) -> String {
        match self {
            KlValue::Finite(v) => fmt_g17(*v),
            KlValue::DivergedMajority => "inf".into(),
            KlValue::Failed(_) => "error".into(),
        }
    }
}

/// One row of the KL experiment report.
#[derive(Debug, Clone)]
pub struct KlReport {
    pub day: u32,
    pub method: String,
    pub value: KlValue,
    /// Ensemble members excluded because their forecast diverged.
    pub excluded: usize,
    /// Total ensemble size M.
    pub samples: usize,
}

struct Cloud<'m> {
    cursors: Vec<Result<Forecaster<'m>, ()>>,
}

impl<'m> Cloud<'m> {
    fn new(rom: &'m Rom, initial: &[DVector<f64>]) -> Self {
        let cursors = initial.iter().map(|x0| rom.forecaster(x0).map_err(|_| ())).collect();
        Cloud { cursors }
    }

    fn advance(&mut self, dt: f64, solver: &SolverConfig) {
        self.cursors.par_iter_mut().for_each(|c| {
            let diverged = match c {
                Ok(fc) => fc.advance(dt, solver).is_err(),
                Err(()) => false,
            };
            if diverged {
                *c = Err(());
            }
        });
    }

    fn live_states(&self) -> Vec<DVector<f64>> {
        self.cursors
            .iter()
            .filter_map(|c| c.as_ref().ok())
            .map(|fc| fc.state())
            .filter(|x| x.iter().all(|v| v.is_finite()))
            .collect()
    }
}

/// Propagate the ensemble through the truth and through every model for each
/// requested day, fit KDEs to the endpoint clouds, and estimate the KL
/// divergence of each model cloud from the truth cloud.
///
/// Per-sample solver failures are recorded as exclusions, never fatal; cells
/// where more than half the ensemble diverged carry the +inf sentinel.
pub fn kl_experiment(
    truth: &Lorenz96,
    models: &[(String, Rom)],
    initial: &[DVector<f64>],
    days: &[u32],
    solver: &SolverConfig,
) -> Result<Vec<KlReport>, EvalError> {
    if initial.is_empty() {
        return Err(EvalError::NotEnoughSamples { got: 0 });
    }
    if days.is_empty() || days.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EvalError::Invalid("days must be strictly increasing and non-empty".into()));
    }
    let m = initial.len();
    let truth_rom = Rom::Truth(truth.clone());
    let mut truth_cloud = Cloud::new(&truth_rom, initial);
    let mut model_clouds: Vec<Cloud<'_>> =
        models.iter().map(|(_, rom)| Cloud::new(rom, initial)).collect();

    let mut reports = Vec::with_capacity(days.len() * models.len());
    let mut reached = 0u32;
    for &day in days {
        let dt = (day - reached) as f64 * UNITS_PER_DAY;
        truth_cloud.advance(dt, solver);
        for cloud in &mut model_clouds {
            cloud.advance(dt, solver);
        }
        reached = day;

        let truth_states = truth_cloud.live_states();
        let q = KdeModel::fit(&truth_states);
        for ((name, _), cloud) in models.iter().zip(&model_clouds) {
            let states = cloud.live_states();
            let excluded = m - states.len();
            let value = if excluded * 2 > m {
                KlValue::DivergedMajority
            } else {
                match (&q, KdeModel::fit(&states)) {
                    (Ok(q), Ok(p)) => KlValue::Finite(kl_approx(&p, q, &states)),
                    (Err(e), _) => KlValue::Failed(format!("truth density: {e}")),
                    (_, Err(e)) => KlValue::Failed(e.to_string()),
                }
            };
            reports.push(KlReport { day, method: name.clone(), value, excluded, samples: m });
        }
    }
    Ok(reports)
}

/// Write the KL report CSV: `day,method,kl,excluded,M`.
pub fn write_kl_reports<W: Write>(mut w: W, reports: &[KlReport]) -> std::io::Result<()> {
    writeln!(w, "day,method,kl,excluded,M")?;
    for r in reports {
        writeln!(w, "{},{},{},{},{}", r.day, r.method, r.value.render(), r.excluded, r.samples)?;
    }
    Ok(())
}

/// Export a forecast as a Hovmoller-ready CSV on the six-hour grid: header
/// `time_days,x1,...,xn`, one row per observation time with the time in days.
/// If the forecast diverges the file is truncated with a trailing comment
/// `# diverged at t=<days>`; divergence is a result, not a failure.
pub fn flow_export<W: Write>(
    rom: &Rom,
    x0: &DVector<f64>,
    days: f64,
    solver: &SolverConfig,
    mut w: W,
) -> Result<(), Error> {
    if !(days > 0.0 && days.is_finite()) {
        return Err(Error::Eval(EvalError::Invalid("days must be positive and finite".into())));
    }
    let n = rom.state_dim();
    write!(w, "time_days")?;
    for j in 1..=n {
        write!(w, ",x{j}")?;
    }
    writeln!(w)?;

    let rows = (days / 0.25 + 1e-9).floor() as usize;
    let mut fc = rom.forecaster(x0)?;
    let write_row = |w: &mut W, t_days: f64, x: &DVector<f64>| -> std::io::Result<()> {
        write!(w, "{}", fmt_g17(t_days))?;
        for v in x.iter() {
            write!(w, ",{}", fmt_g17(*v))?;
        }
        writeln!(w)
    };
    write_row(&mut w, 0.0, &fc.state())?;
    for k in 1..=rows {
        if let Err(e) = fc.advance(0.25 * UNITS_PER_DAY, solver) {
            let t_days = match &e {
                Error::Ode(crate::OdeError::Divergence { t, .. }) => t / UNITS_PER_DAY,
                Error::Neural(crate::NeuralError::Divergence { t }) => t / UNITS_PER_DAY,
                _ => fc.time() / UNITS_PER_DAY,
            };
            if e.is_divergence() {
                writeln!(w, "# diverged at t={}", fmt_g17(t_days))?;
                return Ok(());
            }
            return Err(e);
        }
        let x = fc.state();
        if x.iter().any(|v| !v.is_finite()) {
            writeln!(w, "# diverged at t={}", fmt_g17(fc.time() / UNITS_PER_DAY))?;
            return Ok(());
        }
        write_row(&mut w, k as f64 * 0.25, &x)?;
    }
    Ok(())
}
