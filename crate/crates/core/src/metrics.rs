//! Post-trial evaluation: policy values, subgroup minima, effect-estimation
//! error, and the success-weighted benefit and fairness objectives.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{GeneratedCohort, PatientRecord};
use crate::dataset::Arm;
use crate::error::{Error, Result};
use crate::trial::TrialResult;

fn check_len(what: &str, got: usize, test: &[PatientRecord]) -> Result<()> {
    if got != test.len() {
        return Err(Error::Input(format!(
            "{what} has {got} entries for {} test patients",
            test.len()
        )));
    }
    if test.is_empty() {
        return Err(Error::Input("test set is empty".into()));
    }
    Ok(())
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Mean outcome when each test patient receives the arm the policy assigns.
/// Uses noiseless means when the cohort carries them.
pub fn policy_value(policy: &[Arm], test: &[PatientRecord]) -> Result<f64> {
    check_len("policy", policy.len(), test)?;
    Ok(mean(test.iter().zip(policy).map(|(r, &a)| r.ground_truth(a))))
}

/// Policy value of never treating.
pub fn control_value(test: &[PatientRecord]) -> Result<f64> {
    policy_value(&vec![Arm::Control; test.len()], test)
}

/// Policy value restricted to one subgroup.
pub fn subgroup_policy_value(policy: &[Arm], test: &[PatientRecord], label: &str) -> Result<f64> {
    check_len("policy", policy.len(), test)?;
    let values: Vec<f64> = test
        .iter()
        .zip(policy)
        .filter(|(r, _)| r.in_subgroup(label))
        .map(|(r, &a)| r.ground_truth(a))
        .collect();
    if values.is_empty() {
        return Err(Error::Metric(format!("subgroup `{label}` has no test patients")));
    }
    Ok(mean(values.into_iter()))
}

fn require_subgroups(subgroups: &[String]) -> Result<()> {
    if subgroups.is_empty() {
        return Err(Error::Metric("no subgroups declared".into()));
    }
    Ok(())
}

/// Smallest subgroup-conditional policy value.
pub fn worst_case_policy_value(
    policy: &[Arm],
    test: &[PatientRecord],
    subgroups: &[String],
) -> Result<f64> {
    require_subgroups(subgroups)?;
    subgroups.iter().try_fold(f64::INFINITY, |m, s| {
        Ok(m.min(subgroup_policy_value(policy, test, s)?))
    })
}

pub fn sqrt_pehe(cate: &[f64], test: &[PatientRecord]) -> Result<f64> {
    check_len("CATE estimate", cate.len(), test)?;
    Ok(mean(test.iter().zip(cate).map(|(r, c)| (c - r.true_cate()).powi(2))).sqrt())
}

/// Percentage of test patients whose assigned arm differs from the arm the
/// true effect favors.
pub fn policy_error_rate(policy: &[Arm], test: &[PatientRecord]) -> Result<f64> {
    check_len("policy", policy.len(), test)?;
    let wrong = test
        .iter()
        .zip(policy)
        .filter(|(r, &a)| a != Arm::from_treated(r.true_cate() > 0.0))
        .count();
    Ok(100.0 * wrong as f64 / test.len() as f64)
}

/// Metrics for one trial against its own cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub policy_value: f64,
    pub worst_case_policy_value: f64,
    pub control_value: f64,
    pub success: bool,
    pub realized_switch_step: usize,
    pub sqrt_pehe: f64,
    pub policy_error_rate: f64,
    /// Policy value on success, control value otherwise.
    pub ptmb_term: f64,
    /// Per subgroup, the subgroup policy value on success, the subgroup
    /// control value otherwise.
    pub ptf_terms: BTreeMap<String, f64>,
}

impl SeedMetrics {
    pub fn compute(result: &TrialResult, cohort: &GeneratedCohort, subgroups: &[String]) -> Result<Self> {
        require_subgroups(subgroups)?;
        let test = &cohort.test;
        let policy = &result.policy_on_test;
        let control = vec![Arm::Control; test.len()];
        let pv = policy_value(policy, test)?;
        let v0 = policy_value(&control, test)?;
        let mut ptf_terms = BTreeMap::new();
        for s in subgroups {
            let term = if result.eta {
                subgroup_policy_value(policy, test, s)?
            } else {
                subgroup_policy_value(&control, test, s)?
            };
            ptf_terms.insert(s.clone(), term);
        }
        Ok(Self {
            seed: result.seed,
            policy_value: pv,
            worst_case_policy_value: worst_case_policy_value(policy, test, subgroups)?,
            control_value: v0,
            success: result.eta,
            realized_switch_step: result.realized_switch_step,
            sqrt_pehe: sqrt_pehe(&result.cate_on_test, test)?,
            policy_error_rate: policy_error_rate(policy, test)?,
            ptmb_term: if result.eta { pv } else { v0 },
            ptf_terms,
        })
    }
}

/// Mean and standard error of the mean; the latter is undefined for one value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sem: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let m = values.iter().sum::<f64>() / n as f64;
        let sem = (n > 1).then(|| {
            let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        Self { mean: m, sem }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub policy_value: Summary,
    pub worst_case_policy_value: Summary,
    pub success_rate: Summary,
    pub sqrt_pehe: Summary,
    pub policy_error_rate: Summary,
    pub realized_switch_step: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_seed: Vec<SeedMetrics>,
    pub aggregate: Aggregate,
    pub ptmb: f64,
    pub ptf: f64,
}

impl MetricsReport {
    pub fn from_seeds(per_seed: Vec<SeedMetrics>, subgroups: &[String]) -> Result<Self> {
        if per_seed.is_empty() {
            return Err(Error::Metric("no per-seed records".into()));
        }
        let col = |f: fn(&SeedMetrics) -> f64| Summary::of(&per_seed.iter().map(f).collect::<Vec<_>>());
        let aggregate = Aggregate {
            policy_value: col(|s| s.policy_value),
            worst_case_policy_value: col(|s| s.worst_case_policy_value),
            success_rate: col(|s| if s.success { 1.0 } else { 0.0 }),
            sqrt_pehe: col(|s| s.sqrt_pehe),
            policy_error_rate: col(|s| s.policy_error_rate),
            realized_switch_step: col(|s| s.realized_switch_step as f64),
        };
        Ok(Self {
            ptmb: ptmb_from(&per_seed),
            ptf: ptf_from(&per_seed, subgroups)?,
            per_seed,
            aggregate,
        })
    }

    pub fn compute(
        results: &[TrialResult],
        cohorts: &[GeneratedCohort],
        subgroups: &[String],
    ) -> Result<Self> {
        Self::from_seeds(seed_metrics(results, cohorts, subgroups)?, subgroups)
    }
}

fn seed_metrics(
    results: &[TrialResult],
    cohorts: &[GeneratedCohort],
    subgroups: &[String],
) -> Result<Vec<SeedMetrics>> {
    if results.len() != cohorts.len() {
        return Err(Error::Input(format!(
            "{} results for {} cohorts",
            results.len(),
            cohorts.len()
        )));
    }
    results
        .iter()
        .zip(cohorts)
        .map(|(r, c)| SeedMetrics::compute(r, c, subgroups))
        .collect()
}

pub fn ptmb_from(per_seed: &[SeedMetrics]) -> f64 {
    mean(per_seed.iter().map(|s| s.ptmb_term))
}

/// Minimum over subgroups of the across-seed mean term.
pub fn ptf_from(per_seed: &[SeedMetrics], subgroups: &[String]) -> Result<f64> {
    require_subgroups(subgroups)?;
    subgroups.iter().try_fold(f64::INFINITY, |m, s| {
        let terms = per_seed
            .iter()
            .map(|r| {
                r.ptf_terms
                    .get(s)
                    .copied()
                    .ok_or_else(|| Error::Metric(format!("seed {} lacks subgroup `{s}`", r.seed)))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(m.min(mean(terms.into_iter())))
    })
}

/// Mean over seeds of the policy value on success and the control value on
/// failure.
pub fn ptmb(results: &[TrialResult], cohorts: &[GeneratedCohort]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Metric("no trial results".into()));
    }
    if results.len() != cohorts.len() {
        return Err(Error::Input(format!(
            "{} results for {} cohorts",
            results.len(),
            cohorts.len()
        )));
    }
    let terms = results
        .iter()
        .zip(cohorts)
        .map(|(r, c)| {
            if r.eta {
                policy_value(&r.policy_on_test, &c.test)
            } else {
                control_value(&c.test)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean(terms.into_iter()))
}

pub fn ptf(results: &[TrialResult], cohorts: &[GeneratedCohort], subgroups: &[String]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Metric("no trial results".into()));
    }
    ptf_from(&seed_metrics(results, cohorts, subgroups)?, subgroups)
}
