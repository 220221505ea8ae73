//! Exact Gaussian-process regression.
//!
//! Targets are standardized inside [`fit_gp`] (zero prior mean on the
//! standardized scale) and mapped back on prediction. Hyperparameters are
//! chosen from a fixed grid by exact log marginal likelihood.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to every predictive variance.
pub const VARIANCE_FLOOR: f64 = 1e-12;

const TARGET_SCALE_FLOOR: f64 = 1e-6;
const JITTER_SCHEDULE: [f64; 3] = [1e-10, 1e-8, 1e-6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    Rbf,
    /// Matérn ν = 1/2 (exponential kernel).
    Matern12,
    /// Matérn ν = 3/2.
    Matern32,
    /// Matérn ν = 5/2.
    Matern52,
}

impl KernelKind {
    pub fn matern(nu: f64) -> Result<Self> {
        match nu {
            0.5 => Ok(Self::Matern12),
            1.5 => Ok(Self::Matern32),
            2.5 => Ok(Self::Matern52),
            _ => Err(Error::Input(format!(
                "unsupported Matérn smoothness {nu}; expected 0.5, 1.5 or 2.5"
            ))),
        }
    }
}

/// A stationary kernel with its lengthscale and signal variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    kind: KernelKind,
    lengthscale: f64,
    signal_variance: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, lengthscale: f64, signal_variance: f64) -> Result<Self> {
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::Input(format!(
                "lengthscale must be positive, got {lengthscale}"
            )));
        }
        if !(signal_variance > 0.0 && signal_variance.is_finite()) {
            return Err(Error::Input(format!(
                "signal variance must be positive, got {signal_variance}"
            )));
        }
        Ok(Self {
            kind,
            lengthscale,
            signal_variance,
        })
    }

    pub fn rbf(lengthscale: f64, signal_variance: f64) -> Result<Self> {
        Self::new(KernelKind::Rbf, lengthscale, signal_variance)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    /// Kernel value between two covariate vectors of equal dimension.
    pub fn eval(&self, x1: &[f64], x2: &[f64]) -> Result<f64> {
        if x1.len() != x2.len() {
            return Err(Error::Input(format!(
                "dimension mismatch: {} vs {}",
                x1.len(),
                x2.len()
            )));
        }
        Ok(self.at_sq_dist(sq_dist(x1, x2)))
    }

    fn at_sq_dist(&self, d2: f64) -> f64 {
        let l = self.lengthscale;
        let s = self.signal_variance;
        match self.kind {
            KernelKind::Rbf => s * (-d2 / (2.0 * l * l)).exp(),
            KernelKind::Matern12 => s * (-d2.sqrt() / l).exp(),
            KernelKind::Matern32 => {
                let a = 3f64.sqrt() * d2.sqrt() / l;
                s * (1.0 + a) * (-a).exp()
            }
            KernelKind::Matern52 => {
                let a = 5f64.sqrt() * d2.sqrt() / l;
                s * (1.0 + a + a * a / 3.0) * (-a).exp()
            }
        }
    }
}

/// Free-function form of [`KernelSpec::eval`].
pub fn kernel_eval(spec: &KernelSpec, x1: &[f64], x2: &[f64]) -> Result<f64> {
    spec.eval(x1, x2)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// One grid candidate: kernel plus observation-noise variance (standardized scale).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub kernel: KernelSpec,
    pub noise_variance: f64,
}

impl Hyperparams {
    pub fn new(kernel: KernelSpec, noise_variance: f64) -> Result<Self> {
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(Error::Input(format!(
                "noise variance must be positive, got {noise_variance}"
            )));
        }
        Ok(Self {
            kernel,
            noise_variance,
        })
    }
}

/// {RBF, Matérn-3/2} × lengthscale {0.5, 1, 2} × signal variance {0.5, 1, 2}
/// × noise variance {0.01, 0.1, 1}: 54 candidates.
pub fn default_grid() -> Vec<Hyperparams> {
    let mut grid = Vec::with_capacity(54);
    for kind in [KernelKind::Rbf, KernelKind::Matern32] {
        for lengthscale in [0.5, 1.0, 2.0] {
            for signal_variance in [0.5, 1.0, 2.0] {
                for noise_variance in [0.01, 0.1, 1.0] {
                    grid.push(Hyperparams {
                        kernel: KernelSpec {
                            kind,
                            lengthscale,
                            signal_variance,
                        },
                        noise_variance,
                    });
                }
            }
        }
    }
    grid
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

/// A fitted exact GP. Immutable once built.
#[derive(Debug, Clone)]
pub struct GpFit {
    train_inputs: Vec<Vec<f64>>,
    train_targets: Vec<f64>,
    hyper: Hyperparams,
    target_mean: f64,
    target_scale: f64,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
    log_marginal_likelihood: f64,
}

/// Fits every grid candidate and keeps the one with the largest log marginal
/// likelihood; the first candidate wins ties.
pub fn fit_gp(inputs: &[Vec<f64>], targets: &[f64], grid: &[Hyperparams]) -> Result<GpFit> {
    if grid.is_empty() {
        return Err(Error::Input("hyperparameter grid is empty".into()));
    }
    let prepared = Prepared::new(inputs, targets)?;
    let mut best: Option<GpFit> = None;
    let mut last_err = None;
    for hyper in grid {
        match prepared.fit(hyper) {
            Ok(fit) => {
                let better = best
                    .as_ref()
                    .is_none_or(|b| fit.log_marginal_likelihood > b.log_marginal_likelihood);
                if better {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| {
        last_err.unwrap_or_else(|| Error::Numerical("no grid candidate could be fit".into()))
    })
}

/// Precomputed pieces shared by all grid candidates on one dataset.
pub(crate) struct Prepared<'a> {
    inputs: &'a [Vec<f64>],
    targets: &'a [f64],
    standardized: DVector<f64>,
    mean: f64,
    scale: f64,
    sq_dists: DMatrix<f64>,
}

impl<'a> Prepared<'a> {
    pub(crate) fn new(inputs: &'a [Vec<f64>], targets: &'a [f64]) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::Input(format!(
                "need matching, nonempty inputs and targets (got {} and {})",
                inputs.len(),
                targets.len()
            )));
        }
        let dim = inputs[0].len();
        if inputs.iter().any(|x| x.len() != dim) {
            return Err(Error::Input("training inputs differ in dimension".into()));
        }
        if targets.iter().any(|y| !y.is_finite()) {
            return Err(Error::Input("training targets must be finite".into()));
        }
        let n = targets.len() as f64;
        let mean = targets.iter().sum::<f64>() / n;
        let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let scale = var.sqrt().max(TARGET_SCALE_FLOOR);
        let standardized = DVector::from_iterator(
            targets.len(),
            targets.iter().map(|y| (y - mean) / scale),
        );
        let sq_dists = DMatrix::from_fn(inputs.len(), inputs.len(), |i, j| {
            sq_dist(&inputs[i], &inputs[j])
        });
        Ok(Self {
            inputs,
            targets,
            standardized,
            mean,
            scale,
            sq_dists,
        })
    }

    pub(crate) fn fit(&self, hyper: &Hyperparams) -> Result<GpFit> {
        let n = self.targets.len();
        let mut gram = self.sq_dists.map(|d2| hyper.kernel.at_sq_dist(d2));
        for i in 0..n {
            gram[(i, i)] += hyper.noise_variance;
        }
        let (chol, jitter) = cholesky_with_jitter(gram, true)?;
        let weights = chol.solve(&self.standardized);
        let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        let lml = -0.5 * self.standardized.dot(&weights)
            - log_det_half
            - 0.5 * n as f64 * (2.0 * PI).ln();
        Ok(GpFit {
            train_inputs: self.inputs.to_vec(),
            train_targets: self.targets.to_vec(),
            hyper: *hyper,
            target_mean: self.mean,
            target_scale: self.scale,
            jitter,
            chol,
            weights,
            log_marginal_likelihood: lml,
        })
    }
}

fn cholesky_with_jitter(
    matrix: DMatrix<f64>,
    try_plain: bool,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = matrix.nrows();
    let plain = try_plain.then_some(0.0);
    for jitter in plain.into_iter().chain(JITTER_SCHEDULE) {
        let mut m = matrix.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = m.cholesky() {
            return Ok((chol, jitter));
        }
    }
    Err(Error::Numerical(format!(
        "{n}x{n} matrix not positive definite after jitter {:e}",
        JITTER_SCHEDULE[JITTER_SCHEDULE.len() - 1]
    )))
}

impl GpFit {
    /// Fits a single hyperparameter setting (no grid search).
    pub fn with_hyperparams(
        inputs: &[Vec<f64>],
        targets: &[f64],
        hyper: &Hyperparams,
    ) -> Result<Self> {
        Prepared::new(inputs, targets)?.fit(hyper)
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.hyper.kernel
    }

    /// Noise variance on the standardized target scale.
    pub fn noise_variance(&self) -> f64 {
        self.hyper.noise_variance
    }

    /// Noise variance mapped back to the original target scale.
    pub fn outcome_noise_variance(&self) -> f64 {
        self.hyper.noise_variance * self.target_scale * self.target_scale
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn target_scale(&self) -> f64 {
        self.target_scale
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn train_inputs(&self) -> &[Vec<f64>] {
        &self.train_inputs
    }

    pub fn train_targets(&self) -> &[f64] {
        &self.train_targets
    }

    pub fn len(&self) -> usize {
        self.train_targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_targets.is_empty()
    }

    /// Lower-triangular L with L·Lᵀ = K + (σ_n² + jitter)·I on the standardized scale.
    pub fn chol_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// v solving (K + σ_n²I)·v = ỹ for the standardized targets ỹ.
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Exact log marginal likelihood of the standardized targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    fn dim(&self) -> usize {
        self.train_inputs[0].len()
    }

    fn check_dims(&self, points: &[Vec<f64>]) -> Result<()> {
        let dim = self.dim();
        match points.iter().find(|p| p.len() != dim) {
            Some(p) => Err(Error::Input(format!(
                "dimension mismatch: query has {} covariates, model expects {dim}",
                p.len()
            ))),
            None => Ok(()),
        }
    }

    fn cross_kernel(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        let kernel = &self.hyper.kernel;
        DMatrix::from_fn(self.len(), points.len(), |i, j| {
            kernel.at_sq_dist(sq_dist(&self.train_inputs[i], &points[j]))
        })
    }

    /// Predictive mean and latent-function variance at one point.
    pub fn posterior(&self, x: &[f64]) -> Result<Prediction> {
        let p = self.posterior_batch(&[x.to_vec()])?;
        Ok(p[0])
    }

    /// Predictive means and latent-function variances at many points.
    pub fn posterior_batch(&self, points: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        self.check_dims(points)?;
        if points.is_empty() {
            return Ok(Vec::new());
        }
        let cross = self.cross_kernel(points);
        let solved = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&cross)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let prior_var = self.hyper.kernel.signal_variance;
        let s2 = self.target_scale * self.target_scale;
        Ok((0..points.len())
            .map(|j| {
                let mean_std = cross.column(j).dot(&self.weights);
                let var_std = prior_var - solved.column(j).norm_squared();
                Prediction {
                    mean: self.target_mean + self.target_scale * mean_std,
                    variance: (s2 * var_std).max(VARIANCE_FLOOR),
                }
            })
            .collect())
    }

    /// Draws from the joint posterior over `points`; one row per draw.
    pub fn sample_posterior<R: Rng + ?Sized>(
        &self,
        points: &[Vec<f64>],
        n_draws: usize,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        if n_draws == 0 {
            return Err(Error::Input("n_draws must be at least 1".into()));
        }
        self.check_dims(points)?;
        let m = points.len();
        let cross = self.cross_kernel(points);
        let solved = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&cross)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let kernel = &self.hyper.kernel;
        let prior = DMatrix::from_fn(m, m, |i, j| {
            kernel.at_sq_dist(sq_dist(&points[i], &points[j]))
        });
        let mut cov = prior - solved.transpose() * &solved;
        cov = (&cov + cov.transpose()) * 0.5;
        let (chol, _) = cholesky_with_jitter(cov, false)?;
        let lower = chol.l();
        let mean_std = cross.transpose() * &self.weights;

        let mut draws = DMatrix::zeros(n_draws, m);
        let mut z = DVector::zeros(m);
        for d in 0..n_draws {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            let f = &mean_std + &lower * &z;
            for j in 0..m {
                draws[(d, j)] = self.target_mean + self.target_scale * f[j];
            }
        }
        Ok(draws)
    }
}
