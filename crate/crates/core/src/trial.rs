//! Two-stage trial engine: randomized warm-up with the regulatory test, then
//! model-guided acquisition, then end-of-trial tuning and the final policy.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{select_batch, AcquisitionKind, DEFAULT_SIGN_BALD_DRAWS};
use crate::causal::{fit_causal, fit_causal_validated, policy_from_cate};
use crate::data::{GeneratedCohort, PatientPool};
use crate::dataset::{Arm, Observation, Split, Stage, TrialDataset};
use crate::error::{Error, Result};
use crate::gp::{default_grid, Hyperparams};
use crate::sequential::{interim_decision, outcomes_by_arm, t_test, InterimDecision, SpendingSchedule, TestResult};

const ACQUISITION_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;
const MIN_TRAIN_PER_ARM: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchMode {
    /// Randomize for the first `t*` steps.
    Fixed(usize),
    EarlyStopping(SpendingSchedule),
    /// Randomize throughout.
    Rct,
    /// One randomized batch, then variance-maximizing acquisition.
    CausalBald,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub total_steps: usize,
    pub batch_size: usize,
    pub switch_mode: SwitchMode,
    pub acquisition: AcquisitionKind,
    pub epsilon: f64,
    pub train_val_ratio: f64,
    pub seed: u64,
    pub sign_bald_draws: usize,
}

impl TrialConfig {
    pub fn new(
        total_steps: usize,
        batch_size: usize,
        switch_mode: SwitchMode,
        acquisition: AcquisitionKind,
        seed: u64,
    ) -> Self {
        Self {
            total_steps,
            batch_size,
            switch_mode,
            acquisition,
            epsilon: 0.05,
            train_val_ratio: 0.9,
            seed,
            sign_bald_draws: DEFAULT_SIGN_BALD_DRAWS,
        }
    }

    pub fn rct(total_steps: usize, batch_size: usize, seed: u64) -> Self {
        Self::new(total_steps, batch_size, SwitchMode::Rct, AcquisitionKind::Uniform, seed)
    }

    pub fn causal_bald(total_steps: usize, batch_size: usize, seed: u64) -> Self {
        Self::new(total_steps, batch_size, SwitchMode::CausalBald, AcquisitionKind::MuMax, seed)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.total_steps == 0 {
            return bad("total_steps must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if !(self.train_val_ratio > 0.0 && self.train_val_ratio <= 1.0) {
            return bad(format!(
                "train_val_ratio must lie in (0, 1], got {}",
                self.train_val_ratio
            ));
        }
        if self.acquisition == AcquisitionKind::SignTauPi && self.sign_bald_draws < 2 {
            return bad(format!(
                "sign_bald_draws must be at least 2, got {}",
                self.sign_bald_draws
            ));
        }
        match &self.switch_mode {
            SwitchMode::Fixed(t) if *t == 0 || *t > self.total_steps => bad(format!(
                "t_star must lie in [1, {}], got {t}",
                self.total_steps
            )),
            SwitchMode::EarlyStopping(s) if s.overall_epsilon() != self.epsilon => bad(format!(
                "spending schedule epsilon {} differs from trial epsilon {}",
                s.overall_epsilon(),
                self.epsilon
            )),
            SwitchMode::Rct if self.acquisition != AcquisitionKind::Uniform => {
                bad("RCT mode requires uniform acquisition".into())
            }
            SwitchMode::CausalBald if self.acquisition != AcquisitionKind::MuMax => {
                bad("Causal-BALD mode requires mu_max acquisition".into())
            }
            _ => Ok(()),
        }
    }

    /// Planned switching step before any coverage extension. Early stopping
    /// has no fixed plan and reports `total_steps`.
    pub fn planned_switch_step(&self) -> usize {
        match self.switch_mode {
            SwitchMode::Fixed(t) => t,
            SwitchMode::CausalBald => 1,
            SwitchMode::Rct | SwitchMode::EarlyStopping(_) => self.total_steps,
        }
    }
}

/// Acquisition counts for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: usize,
    pub stage: Stage,
    /// Patients assigned to (control, treated).
    pub arm_counts: [usize; 2],
    /// Per subgroup label, patients assigned to (control, treated).
    pub subgroup_counts: BTreeMap<String, [usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub dataset: TrialDataset,
    pub eta: bool,
    /// Last randomized step.
    pub realized_switch_step: usize,
    /// The regulatory test that set `eta`, when it could be computed.
    pub test_result: Option<TestResult>,
    pub policy_on_test: Vec<Arm>,
    pub cate_on_test: Vec<f64>,
    pub trace: Vec<StepTrace>,
}

struct Engine<'a> {
    config: &'a TrialConfig,
    pool: PatientPool,
    dataset: TrialDataset,
    trace: Vec<StepTrace>,
    acq_rng: ChaCha8Rng,
    split_rng: ChaCha8Rng,
    grid: Vec<Hyperparams>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl<'a> Engine<'a> {
    fn new(config: &'a TrialConfig, cohort: &GeneratedCohort) -> Result<Self> {
        config.validate()?;
        let needed = config.total_steps * config.batch_size;
        if cohort.pool.len() < needed {
            return Err(Error::Trial(format!(
                "pool has {} patients, trial needs {needed}",
                cohort.pool.len()
            )));
        }
        if cohort.test.is_empty() {
            return Err(Error::Trial("test set is empty".into()));
        }
        Ok(Self {
            config,
            pool: PatientPool::new(cohort.pool.clone()),
            dataset: TrialDataset::new(),
            trace: Vec::with_capacity(config.total_steps),
            acq_rng: stream_rng(config.seed, ACQUISITION_STREAM),
            split_rng: stream_rng(config.seed, SPLIT_STREAM),
            grid: default_grid(),
        })
    }

    fn step(&mut self, step: usize, stage: Stage) -> Result<()> {
        let b = self.config.batch_size;
        let kind = match stage {
            Stage::Randomized => AcquisitionKind::Uniform,
            Stage::Augmented => self.config.acquisition,
        };
        let model = if kind.needs_model() {
            Some(fit_causal(&self.dataset.split(Split::Train), &self.grid)?)
        } else {
            None
        };
        let available = self.pool.available();
        if available.len() < b {
            return Err(Error::Trial(format!(
                "pool exhausted at step {step}: {} patients left, batch needs {b}",
                available.len()
            )));
        }
        let selection = select_batch(
            available,
            model.as_ref(),
            kind,
            b,
            self.config.sign_bald_draws,
            &mut self.acq_rng,
        )?;
        let chosen: Vec<(u64, Arm)> = selection
            .picks
            .iter()
            .map(|p| (available[p.pool_index].id, p.arm))
            .collect();

        let n_train = ((self.config.train_val_ratio * b as f64).round() as usize).min(b);
        let mut order: Vec<usize> = (0..b).collect();
        order.shuffle(&mut self.split_rng);
        let mut splits = vec![Split::Validation; b];
        for &i in &order[..n_train] {
            splits[i] = Split::Train;
        }

        let mut trace = StepTrace {
            step,
            stage,
            arm_counts: [0; 2],
            subgroup_counts: BTreeMap::new(),
        };
        for ((id, arm), split) in chosen.into_iter().zip(splits) {
            let revealed = self.pool.reveal(id, arm)?;
            trace.arm_counts[arm.index()] += 1;
            for label in &revealed.record.subgroups {
                trace.subgroup_counts.entry(label.clone()).or_insert([0; 2])[arm.index()] += 1;
            }
            self.dataset.push(Observation {
                patient_id: id,
                covariates: revealed.record.covariates,
                arm,
                outcome: revealed.outcome,
                step,
                stage,
                split,
            });
        }
        self.trace.push(trace);
        Ok(())
    }

    fn covered(&self) -> bool {
        self.dataset.train_counts().iter().all(|&n| n >= MIN_TRAIN_PER_ARM)
    }

    /// Randomizes through `t_star`, then keeps randomizing one batch at a time
    /// until both arms can be fit. Returns the last randomized step.
    fn stage_one(&mut self, from: usize, t_star: usize) -> Result<usize> {
        for t in from..=t_star {
            self.step(t, Stage::Randomized)?;
        }
        let mut last = t_star;
        while last < self.config.total_steps && !self.covered() {
            last += 1;
            self.step(last, Stage::Randomized)?;
        }
        Ok(last)
    }

    fn finish(
        mut self,
        cohort: &GeneratedCohort,
        switch: usize,
        eta: bool,
        test_result: Option<TestResult>,
    ) -> Result<TrialResult> {
        for t in switch + 1..=self.config.total_steps {
            self.step(t, Stage::Augmented)?;
        }
        let model = fit_causal_validated(
            &self.dataset.split(Split::Train),
            &self.dataset.split(Split::Validation),
            &self.grid,
        )?;
        let points: Vec<Vec<f64>> = cohort.test.iter().map(|r| r.covariates.clone()).collect();
        let cate_on_test: Vec<f64> = model.cate_batch(&points)?.iter().map(|p| p.mean).collect();
        let policy_on_test = cate_on_test.iter().map(|&c| policy_from_cate(c)).collect();
        Ok(TrialResult {
            seed: self.config.seed,
            dataset: self.dataset,
            eta,
            realized_switch_step: switch,
            test_result,
            policy_on_test,
            cate_on_test,
            trace: self.trace,
        })
    }
}

fn final_test(randomized: &[&Observation], epsilon: f64) -> Option<TestResult> {
    let (treated, control) = outcomes_by_arm(randomized.iter().copied());
    t_test(&treated, &control, epsilon).ok()
}

fn run_fixed(config: &TrialConfig, cohort: &GeneratedCohort) -> Result<TrialResult> {
    let mut engine = Engine::new(config, cohort)?;
    let switch = engine.stage_one(1, config.planned_switch_step())?;
    let test_result = final_test(&engine.dataset.stage(Stage::Randomized), config.epsilon);
    let eta = test_result.as_ref().is_some_and(|r| r.rejected);
    engine.finish(cohort, switch, eta, test_result)
}

/// Runs one trial. Early-stopping configurations are dispatched to
/// [`run_trial_early_stopping`].
pub fn run_trial(config: &TrialConfig, cohort: &GeneratedCohort) -> Result<TrialResult> {
    match config.switch_mode {
        SwitchMode::EarlyStopping(_) => run_trial_early_stopping(config, cohort),
        _ => run_fixed(config, cohort),
    }
}

fn rejection_test(
    randomized: &[&Observation],
    schedule: &SpendingSchedule,
    look: usize,
) -> Result<Option<TestResult>> {
    let alpha = schedule.threshold(look)?;
    Ok(final_test(randomized, alpha))
}

/// Randomizes look to look; the first rejecting look ends Stage I with a
/// successful trial. Without a rejection the trial stays randomized to the end.
pub fn run_trial_early_stopping(config: &TrialConfig, cohort: &GeneratedCohort) -> Result<TrialResult> {
    let SwitchMode::EarlyStopping(schedule) = &config.switch_mode else {
        return Err(Error::Config("early stopping requires a spending schedule".into()));
    };
    let mut engine = Engine::new(config, cohort)?;
    let looks = schedule.look_steps(config.total_steps);
    let mut next = 1;
    let mut last_test = None;
    for (look, &look_step) in looks.iter().enumerate() {
        for t in next..=look_step {
            engine.step(t, Stage::Randomized)?;
        }
        next = look_step + 1;
        let randomized = engine.dataset.stage(Stage::Randomized);
        if interim_decision(&randomized, schedule, look)? == InterimDecision::Reject {
            let test_result = rejection_test(&randomized, schedule, look)?;
            let switch = engine.stage_one(next, look_step)?;
            return engine.finish(cohort, switch, true, test_result);
        }
        last_test = rejection_test(&randomized, schedule, look)?;
    }
    let switch = engine.stage_one(next, config.total_steps)?;
    engine.finish(cohort, switch, false, last_test)
}

/// Recomputes the trial-success indicator from a dataset's randomized
/// observations alone, following the same rule as the engine.
pub fn evaluate_regulatory(dataset: &TrialDataset, config: &TrialConfig) -> Result<bool> {
    let randomized = dataset.stage(Stage::Randomized);
    match &config.switch_mode {
        SwitchMode::EarlyStopping(schedule) => {
            for (look, &look_step) in schedule.look_steps(config.total_steps).iter().enumerate() {
                let upto: Vec<&Observation> =
                    randomized.iter().copied().filter(|o| o.step <= look_step).collect();
                if upto.iter().all(|o| o.step < look_step) {
                    break;
                }
                if interim_decision(&upto, schedule, look)? == InterimDecision::Reject {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        _ => Ok(final_test(&randomized, config.epsilon).as_ref().is_some_and(|r| r.rejected)),
    }
}

/// Runs `n_seeds` independent trials on seeds `base_seed, base_seed + 1, ...`,
/// each on the cohort `cohort_for(seed)`. Results are ordered by seed; the
/// first failing seed aborts the experiment.
pub fn run_experiment<F>(
    template: &TrialConfig,
    n_seeds: usize,
    base_seed: u64,
    cohort_for: F,
) -> Result<Vec<TrialResult>>
where
    F: Fn(u64) -> Result<GeneratedCohort> + Sync,
{
    if n_seeds == 0 {
        return Err(Error::Config("n_seeds must be at least 1".into()));
    }
    template.validate()?;
    let outcomes: Vec<Result<TrialResult>> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed.wrapping_add(i);
            cohort_for(seed)
                .and_then(|cohort| run_trial(&template.with_seed(seed), &cohort))
                .map_err(|e| Error::Seed {
                    seed,
                    source: Box::new(e),
                })
        })
        .collect();
    outcomes.into_iter().collect()
}
