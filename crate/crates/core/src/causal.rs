//! T-learner causal posterior: one GP per arm, CATE by differencing, and the
//! sign-threshold treatment policy.

use crate::dataset::{Arm, Observation};
use crate::error::{Error, Result};
use crate::gp::{fit_gp, GpFit, Hyperparams, Prediction, Prepared};

#[derive(Debug, Clone)]
pub struct CausalPosterior {
    arms: [GpFit; 2],
}

/// Treat iff the estimated effect is strictly positive.
pub fn policy_from_cate(cate_mean: f64) -> Arm {
    Arm::from_treated(cate_mean > 0.0)
}

impl CausalPosterior {
    pub fn from_fits(control: GpFit, treated: GpFit) -> Self {
        Self {
            arms: [control, treated],
        }
    }

    pub fn arm(&self, arm: Arm) -> &GpFit {
        &self.arms[arm.index()]
    }

    /// Per-arm outcome predictions at each point, indexed by arm.
    pub fn arm_predictions(&self, points: &[Vec<f64>]) -> Result<[Vec<Prediction>; 2]> {
        Ok([
            self.arms[0].posterior_batch(points)?,
            self.arms[1].posterior_batch(points)?,
        ])
    }

    /// CATE posterior assuming independent arms: means subtract, variances add.
    pub fn cate(&self, x: &[f64]) -> Result<Prediction> {
        let p0 = self.arms[0].posterior(x)?;
        let p1 = self.arms[1].posterior(x)?;
        Ok(cate_from(p0, p1))
    }

    pub fn cate_batch(&self, points: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        let [p0, p1] = self.arm_predictions(points)?;
        Ok(p0.into_iter().zip(p1).map(|(a, b)| cate_from(a, b)).collect())
    }

    pub fn policy(&self, x: &[f64]) -> Result<Arm> {
        Ok(policy_from_cate(self.cate(x)?.mean))
    }
}

pub(crate) fn cate_from(control: Prediction, treated: Prediction) -> Prediction {
    Prediction {
        mean: treated.mean - control.mean,
        variance: treated.variance + control.variance,
    }
}

pub fn cate_posterior(model: &CausalPosterior, x: &[f64]) -> Result<Prediction> {
    model.cate(x)
}

pub fn policy_decide(model: &CausalPosterior, x: &[f64]) -> Result<Arm> {
    model.policy(x)
}

type ArmData = (Vec<Vec<f64>>, Vec<f64>);

fn partition<'a>(obs: impl IntoIterator<Item = &'a Observation>) -> [ArmData; 2] {
    let mut parts: [ArmData; 2] = Default::default();
    for o in obs {
        let part = &mut parts[o.arm.index()];
        part.0.push(o.covariates.clone());
        part.1.push(o.outcome);
    }
    parts
}

fn require_both_arms(parts: &[ArmData; 2]) -> Result<()> {
    for arm in Arm::BOTH {
        if parts[arm.index()].1.is_empty() {
            return Err(Error::Fit(format!("no training observations for {arm:?} arm")));
        }
    }
    Ok(())
}

/// Fits each arm on its own observations, selecting hyperparameters by
/// marginal likelihood.
pub fn fit_causal(train: &[&Observation], grid: &[Hyperparams]) -> Result<CausalPosterior> {
    let parts = partition(train.iter().copied());
    require_both_arms(&parts)?;
    let [(x0, y0), (x1, y1)] = parts;
    Ok(CausalPosterior::from_fits(
        fit_gp(&x0, &y0, grid)?,
        fit_gp(&x1, &y1, grid)?,
    ))
}

/// End-of-trial tuning: per arm, pick the grid candidate with the lowest
/// validation mean-squared error when trained on the training split, then
/// refit it on training and validation data together. An arm without
/// validation data falls back to marginal-likelihood selection on all of its
/// data.
pub fn fit_causal_validated(
    train: &[&Observation],
    validation: &[&Observation],
    grid: &[Hyperparams],
) -> Result<CausalPosterior> {
    if grid.is_empty() {
        return Err(Error::Input("hyperparameter grid is empty".into()));
    }
    let train_parts = partition(train.iter().copied());
    require_both_arms(&train_parts)?;
    let val_parts = partition(validation.iter().copied());

    let mut fits = Vec::with_capacity(2);
    for arm in Arm::BOTH {
        let (tx, ty) = &train_parts[arm.index()];
        let (vx, vy) = &val_parts[arm.index()];
        let mut all_x = tx.clone();
        all_x.extend(vx.iter().cloned());
        let mut all_y = ty.clone();
        all_y.extend(vy);
        if vy.is_empty() {
            fits.push(fit_gp(&all_x, &all_y, grid)?);
            continue;
        }
        let prepared = Prepared::new(tx, ty)?;
        let mut best: Option<(f64, &Hyperparams)> = None;
        for hyper in grid {
            let Ok(fit) = prepared.fit(hyper) else { continue };
            let preds = fit.posterior_batch(vx)?;
            let mse = preds
                .iter()
                .zip(vy)
                .map(|(p, y)| (p.mean - y).powi(2))
                .sum::<f64>()
                / vy.len() as f64;
            if best.is_none_or(|(b, _)| mse < b) {
                best = Some((mse, hyper));
            }
        }
        let (_, hyper) = best.ok_or_else(|| {
            Error::Numerical(format!("no grid candidate could be fit for {arm:?} arm"))
        })?;
        fits.push(GpFit::with_hyperparams(&all_x, &all_y, hyper)?);
    }
    let treated = fits.pop().unwrap();
    let control = fits.pop().unwrap();
    Ok(CausalPosterior::from_fits(control, treated))
}
