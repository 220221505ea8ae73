//! Regulatory layer: the two-sample t-test, O'Brien-Fleming alpha spending and
//! the interim switching decision.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};
use statrs::function::{beta::checked_beta_reg, erf};

use crate::dataset::{Arm, Observation};
use crate::error::{Error, Result};

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erf::erfc(-z / SQRT_2)
}

pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile needs p in (0, 1), got {p}"
        )));
    }
    Ok(-SQRT_2 * erf::erfc_inv(2.0 * p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Treated mean exceeds control mean.
    pub positive_direction: bool,
    /// `p_value < alpha` and the effect is positive.
    pub rejected: bool,
}

/// Student's pooled-variance two-sample t-test.
///
/// The p-value is two-sided; `rejected` additionally requires a positive
/// effect, since only a beneficial treatment can be approved.
pub fn t_test(treated: &[f64], control: &[f64], alpha: f64) -> Result<TestResult> {
    let (n1, n0) = (treated.len(), control.len());
    if n1 < 2 || n0 < 2 {
        return Err(Error::Test(format!(
            "need at least 2 observations per group, got {n1} treated and {n0} control"
        )));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ss = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    let (m1, m0) = (mean(treated), mean(control));
    let df = (n1 + n0 - 2) as f64;
    let pooled = (ss(treated, m1) + ss(control, m0)) / df;
    if pooled <= 0.0 || !pooled.is_finite() {
        return Err(Error::Test("pooled variance is zero or not finite".into()));
    }
    let se = (pooled * (1.0 / n1 as f64 + 1.0 / n0 as f64)).sqrt();
    let t = (m1 - m0) / se;
    let p_value = checked_beta_reg(0.5 * df, 0.5, df / (df + t * t))
        .map_err(|e| Error::Numerical(format!("incomplete beta: {e}")))?
        .clamp(0.0, 1.0);
    let positive_direction = m1 > m0;
    Ok(TestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value,
        positive_direction,
        rejected: positive_direction && p_value < alpha,
    })
}

/// O'Brien-Fleming cumulative alpha spent at information fraction `f`.
pub fn obf_alpha(epsilon: f64, f: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::Domain(format!(
            "information fraction must lie in (0, 1], got {f}"
        )));
    }
    let z = normal_quantile(1.0 - epsilon / 2.0)?;
    Ok(2.0 - 2.0 * normal_cdf(z / f.sqrt()))
}

/// Interim looks for early switching, as information fractions of the
/// total patient budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpendingSchedule {
    overall_epsilon: f64,
    information_fractions: Vec<f64>,
}

impl SpendingSchedule {
    /// Leading zero fractions carry no data and are dropped.
    pub fn new(overall_epsilon: f64, fractions: &[f64]) -> Result<Self> {
        if !(overall_epsilon > 0.0 && overall_epsilon < 1.0) {
            return Err(Error::Config(format!(
                "overall epsilon must lie in (0, 1), got {overall_epsilon}"
            )));
        }
        let fractions: Vec<f64> = fractions.iter().copied().skip_while(|&f| f == 0.0).collect();
        if fractions.is_empty() {
            return Err(Error::Config("schedule needs at least one nonzero fraction".into()));
        }
        if fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return Err(Error::Config(format!(
                "information fractions must lie in (0, 1]: {fractions:?}"
            )));
        }
        if fractions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "information fractions must be strictly increasing: {fractions:?}"
            )));
        }
        if *fractions.last().unwrap() != 1.0 {
            return Err(Error::Config(format!(
                "last information fraction must be 1, got {fractions:?}"
            )));
        }
        Ok(Self {
            overall_epsilon,
            information_fractions: fractions,
        })
    }

    /// Looks at 0.25, 0.5, 0.75 and 1.
    pub fn quarterly(overall_epsilon: f64) -> Result<Self> {
        Self::new(overall_epsilon, &[0.0, 0.25, 0.5, 0.75, 1.0])
    }

    pub fn overall_epsilon(&self) -> f64 {
        self.overall_epsilon
    }

    pub fn information_fractions(&self) -> &[f64] {
        &self.information_fractions
    }

    pub fn len(&self) -> usize {
        self.information_fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.information_fractions.is_empty()
    }

    /// Step at which each look happens: the first step whose patient count
    /// reaches the look's fraction of the budget.
    pub fn look_steps(&self, total_steps: usize) -> Vec<usize> {
        self.information_fractions
            .iter()
            .map(|f| {
                let exact = f * total_steps as f64;
                ((exact - 1e-9).ceil() as usize).clamp(1, total_steps)
            })
            .collect()
    }

    pub fn threshold(&self, look_index: usize) -> Result<f64> {
        let f = self.information_fractions.get(look_index).ok_or_else(|| {
            Error::Input(format!(
                "look index {look_index} out of range for {} looks",
                self.len()
            ))
        })?;
        obf_alpha(self.overall_epsilon, *f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterimDecision {
    ContinueRandomized,
    Reject,
}

/// Splits outcomes into (treated, control).
pub fn outcomes_by_arm<'a>(obs: impl IntoIterator<Item = &'a Observation>) -> (Vec<f64>, Vec<f64>) {
    let mut treated = Vec::new();
    let mut control = Vec::new();
    for o in obs {
        match o.arm {
            Arm::Treated => treated.push(o.outcome),
            Arm::Control => control.push(o.outcome),
        }
    }
    (treated, control)
}

/// Tests the randomized-stage data at one look against the cumulative
/// O'Brien-Fleming threshold. A test that cannot be computed counts as no
/// rejection.
pub fn interim_decision(
    randomized: &[&Observation],
    schedule: &SpendingSchedule,
    look_index: usize,
) -> Result<InterimDecision> {
    let alpha = schedule.threshold(look_index)?;
    let (treated, control) = outcomes_by_arm(randomized.iter().copied());
    Ok(match t_test(&treated, &control, alpha) {
        Ok(r) if r.rejected => InterimDecision::Reject,
        _ => InterimDecision::ContinueRandomized,
    })
}
