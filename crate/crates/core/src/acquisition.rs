//! Uncertainty-aware patient acquisition and arm assignment.
//!
//! Every scored kind ranks the pool by a pointwise score and takes the top
//! `b` patients (ties go to the lower pool index). Entropies are in nats.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causal::{policy_from_cate, CausalPosterior};
use crate::data::PatientRecord;
use crate::dataset::Arm;
use crate::error::{Error, Result};
use crate::gp::Prediction;
use crate::sequential::normal_cdf;

pub const DEFAULT_SIGN_BALD_DRAWS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    /// Uniform patients, uniform arms.
    Uniform,
    /// Rank by outcome variance under the policy arm; assign the policy arm.
    MuPi,
    /// Rank by the larger of the two arm variances; assign that arm.
    MuMax,
    /// Rank as `MuPi`; assign the higher-variance arm.
    MuPiMax,
    /// Rank as `MuPi`; assign arms uniformly at random.
    MuPiUnf,
    /// Rank by mutual information between the sign of the effect and the
    /// model; assign the policy arm.
    SignTauPi,
}

impl AcquisitionKind {
    pub const ALL: [AcquisitionKind; 6] = [
        Self::Uniform,
        Self::MuPi,
        Self::MuMax,
        Self::MuPiMax,
        Self::MuPiUnf,
        Self::SignTauPi,
    ];

    pub fn needs_model(self) -> bool {
        self != Self::Uniform
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pick {
    /// Index into the pool slice passed to [`select_batch`].
    pub pool_index: usize,
    pub arm: Arm,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BatchSelection {
    pub picks: Vec<Pick>,
}

/// Variance of the arm-`arm` mean function at `x`.
pub fn score_mu(model: &CausalPosterior, x: &[f64], arm: Arm) -> Result<f64> {
    Ok(model.arm(arm).posterior(x)?.variance)
}

/// Binary entropy in nats, with 0·ln 0 = 0.
pub fn binary_entropy(p: f64) -> f64 {
    let h = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.ln() };
    h(p) + h(1.0 - p)
}

/// BALD for a Bernoulli label from per-draw success probabilities:
/// H(mean p) − mean H(p), clamped at zero.
pub fn bald_binary(probs: &[f64]) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let n = probs.len() as f64;
    let mean_p = probs.iter().sum::<f64>() / n;
    let mean_h = probs.iter().map(|&p| binary_entropy(p)).sum::<f64>() / n;
    (binary_entropy(mean_p) - mean_h).max(0.0)
}

/// Sign-BALD from the per-arm predictive marginals at one point.
fn sign_bald_from<R: Rng + ?Sized>(
    control: Prediction,
    treated: Prediction,
    noise_sd: f64,
    n_draws: usize,
    rng: &mut R,
) -> f64 {
    let (sd0, sd1) = (control.variance.sqrt(), treated.variance.sqrt());
    let probs: Vec<f64> = (0..n_draws)
        .map(|_| {
            let z0: f64 = rng.sample(StandardNormal);
            let z1: f64 = rng.sample(StandardNormal);
            let f0 = control.mean + sd0 * z0;
            let f1 = treated.mean + sd1 * z1;
            normal_cdf((f1 - f0) / noise_sd)
        })
        .collect();
    bald_binary(&probs)
}

fn sign_noise_sd(model: &CausalPosterior) -> f64 {
    (model.arm(Arm::Control).outcome_noise_variance()
        + model.arm(Arm::Treated).outcome_noise_variance())
    .sqrt()
}

/// Mutual information between sign(Y¹ − Y⁰) at `x` and the model, estimated
/// from `n_draws` posterior draws of the two arm means.
pub fn score_sign_tau<R: Rng + ?Sized>(
    model: &CausalPosterior,
    x: &[f64],
    n_draws: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_draws < 2 {
        return Err(Error::Input(format!("sign-BALD needs at least 2 draws, got {n_draws}")));
    }
    let control = model.arm(Arm::Control).posterior(x)?;
    let treated = model.arm(Arm::Treated).posterior(x)?;
    Ok(sign_bald_from(control, treated, sign_noise_sd(model), n_draws, rng))
}

/// Per-patient ranking score and model-preferred arm for a scored kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub score: f64,
    pub arm: Arm,
}

fn argmax_arm(var0: f64, var1: f64) -> Arm {
    Arm::from_treated(var1 > var0)
}

/// Scores every pool patient. The `arm` of each entry is the arm the kind
/// would assign (for `MuPiUnf` it is the policy arm; the final assignment is
/// random).
pub fn score_pool<R: Rng + ?Sized>(
    pool: &[PatientRecord],
    model: &CausalPosterior,
    kind: AcquisitionKind,
    sign_bald_draws: usize,
    rng: &mut R,
) -> Result<Vec<Scored>> {
    let points: Vec<Vec<f64>> = pool.iter().map(|r| r.covariates.clone()).collect();
    let [p0, p1] = model.arm_predictions(&points)?;
    let policy = |i: usize| policy_from_cate(p1[i].mean - p0[i].mean);
    let var = |i: usize, arm: Arm| match arm {
        Arm::Control => p0[i].variance,
        Arm::Treated => p1[i].variance,
    };
    let n = pool.len();
    let scored = match kind {
        AcquisitionKind::Uniform => {
            return Err(Error::Config("uniform acquisition has no scores".into()))
        }
        AcquisitionKind::MuPi | AcquisitionKind::MuPiUnf => (0..n)
            .map(|i| {
                let arm = policy(i);
                Scored { score: var(i, arm), arm }
            })
            .collect(),
        AcquisitionKind::MuMax => (0..n)
            .map(|i| {
                let arm = argmax_arm(p0[i].variance, p1[i].variance);
                Scored { score: var(i, arm), arm }
            })
            .collect(),
        AcquisitionKind::MuPiMax => (0..n)
            .map(|i| Scored {
                score: var(i, policy(i)),
                arm: argmax_arm(p0[i].variance, p1[i].variance),
            })
            .collect(),
        AcquisitionKind::SignTauPi => {
            if sign_bald_draws < 2 {
                return Err(Error::Config(format!(
                    "sign-BALD needs at least 2 draws, got {sign_bald_draws}"
                )));
            }
            let noise_sd = sign_noise_sd(model);
            let base: u64 = rng.random();
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut local = ChaCha8Rng::seed_from_u64(base);
                    local.set_stream(i as u64);
                    Scored {
                        score: sign_bald_from(p0[i], p1[i], noise_sd, sign_bald_draws, &mut local),
                        arm: policy(i),
                    }
                })
                .collect()
        }
    };
    Ok(scored)
}

/// Indices of the `b` highest scores, best first; ties favor lower indices.
pub fn top_indices(scores: &[f64], b: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    order.truncate(b);
    order
}

/// Chooses `batch_size` distinct pool patients and an arm for each.
pub fn select_batch<R: Rng + ?Sized>(
    pool: &[PatientRecord],
    model: Option<&CausalPosterior>,
    kind: AcquisitionKind,
    batch_size: usize,
    sign_bald_draws: usize,
    rng: &mut R,
) -> Result<BatchSelection> {
    if batch_size == 0 {
        return Err(Error::Acquisition("batch size must be positive".into()));
    }
    if pool.len() < batch_size {
        return Err(Error::Acquisition(format!(
            "pool has {} patients, batch needs {batch_size}",
            pool.len()
        )));
    }
    if kind == AcquisitionKind::Uniform {
        let chosen = rand::seq::index::sample(rng, pool.len(), batch_size).into_vec();
        let picks = chosen
            .into_iter()
            .map(|pool_index| Pick {
                pool_index,
                arm: Arm::from_treated(rng.random_bool(0.5)),
            })
            .collect();
        return Ok(BatchSelection { picks });
    }
    let model = model.ok_or_else(|| {
        Error::Config(format!("{kind:?} acquisition requires a fitted model"))
    })?;
    let scored = score_pool(pool, model, kind, sign_bald_draws, rng)?;
    let scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
    let picks = top_indices(&scores, batch_size)
        .into_iter()
        .map(|i| Pick {
            pool_index: i,
            arm: if kind == AcquisitionKind::MuPiUnf {
                Arm::from_treated(rng.random_bool(0.5))
            } else {
                scored[i].arm
            },
        })
        .collect();
    Ok(BatchSelection { picks })
}
