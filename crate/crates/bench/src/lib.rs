//! Shared fixtures for the engine benchmarks.

use rfan_core::{Arm, Observation, Split, Stage};

/// Alternating-arm observations drawn from the synthetic cohort.
pub fn synthetic_observations(n: usize, seed: u64) -> Vec<Observation> {
    let cohort = rfan_core::gen_synthetic(n, 1, seed).expect("positive sizes");
    cohort
        .pool
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let arm = Arm::from_treated(i % 2 == 1);
            Observation {
                patient_id: r.id,
                covariates: r.covariates.clone(),
                arm,
                outcome: r.outcome(arm),
                step: 1,
                stage: Stage::Randomized,
                split: Split::Train,
            }
        })
        .collect()
}
