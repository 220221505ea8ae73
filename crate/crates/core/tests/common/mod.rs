//! Invariant checks shared by the property tests and the acceptance run.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rfan_core::acquisition::{score_pool, select_batch, AcquisitionKind};
use rfan_core::metrics::{policy_error_rate, policy_value, sqrt_pehe, worst_case_policy_value};
use rfan_core::trial::evaluate_regulatory;
use rfan_core::{
    fit_causal, gen_synthetic, run_trial, t_test, Arm, CausalPosterior, Observation, Split, Stage, SwitchMode,
    TrialConfig,
};

pub type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn small_model(seed: u64, per_arm: usize) -> CausalPosterior {
    let c = gen_synthetic(2 * per_arm, 1, seed).unwrap();
    let data: Vec<Observation> = c
        .pool
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let arm = if i % 2 == 0 { Arm::Control } else { Arm::Treated };
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
        .collect();
    fit_causal(&data.iter().collect::<Vec<_>>(), &rfan_core::default_grid()).unwrap()
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
        .collect()
}

/// The selected batch maximizes the summed score over every subset of the
/// same size, and each pick carries the arm its kind prescribes.
pub fn argmax_selection_is_exhaustive_optimum(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = small_model(seed, rng.random_range(3..12));
    let n = rng.random_range(1..=15usize);
    let b = rng.random_range(1..=n);
    let pool = gen_synthetic(n, 1, seed.wrapping_add(1000)).unwrap().pool;
    let kinds = [
        AcquisitionKind::MuPi,
        AcquisitionKind::MuMax,
        AcquisitionKind::MuPiMax,
        AcquisitionKind::MuPiUnf,
        AcquisitionKind::SignTauPi,
    ];
    let kind = kinds[rng.random_range(0..kinds.len())];
    let draws = 16;
    let scored = score_pool(&pool, &model, kind, draws, &mut rng.clone()).map_err(|e| e.to_string())?;
    let sel = select_batch(&pool, Some(&model), kind, b, draws, &mut rng).map_err(|e| e.to_string())?;
    let chosen: Vec<usize> = sel.picks.iter().map(|p| p.pool_index).collect();
    let total = |s: &[usize]| s.iter().map(|&i| scored[i].score).sum::<f64>();
    let best = subsets(n, b).iter().map(|s| total(s)).fold(f64::NEG_INFINITY, f64::max);
    ensure(total(&chosen) >= best - 1e-12 * best.abs().max(1.0), || {
        format!("seed {seed}: {kind:?} picked {chosen:?} with total {} < {best}", total(&chosen))
    })?;
    let mut distinct = chosen.clone();
    distinct.sort();
    distinct.dedup();
    ensure(distinct.len() == b, || format!("seed {seed}: duplicate picks {chosen:?}"))?;
    if kind != AcquisitionKind::MuPiUnf {
        for p in &sel.picks {
            ensure(p.arm == scored[p.pool_index].arm, || format!("seed {seed}: {kind:?} arm mismatch"))?;
        }
    }
    Ok(())
}

/// Rewriting or permuting augmented-stage outcomes never changes the trial
/// success indicator.
pub fn eta_ignores_stage_two(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_total = 6;
    let t_star = rng.random_range(1..t_total);
    let cfg = TrialConfig::new(t_total, 6, SwitchMode::Fixed(t_star), AcquisitionKind::MuPiUnf, seed);
    let cohort = gen_synthetic(60, 50, seed).unwrap();
    let result = run_trial(&cfg, &cohort).map_err(|e| e.to_string())?;
    let baseline = evaluate_regulatory(&result.dataset, &cfg).map_err(|e| e.to_string())?;
    ensure(baseline == result.eta, || format!("seed {seed}: recomputed eta differs"))?;

    let mut permuted = result.dataset.clone();
    let stage_two: Vec<usize> = (0..permuted.len())
        .filter(|&i| permuted.observations()[i].stage == Stage::Augmented)
        .collect();
    let mut outcomes: Vec<f64> = stage_two.iter().map(|&i| permuted.observations()[i].outcome).collect();
    outcomes.shuffle(&mut rng);
    for (&i, y) in stage_two.iter().zip(outcomes) {
        permuted.observations_mut()[i].outcome = y;
    }
    let mut corrupted = result.dataset.clone();
    for o in corrupted.observations_mut() {
        if o.stage == Stage::Augmented {
            o.outcome = rng.random_range(-1e3..1e3);
        }
    }
    for mutated in [permuted, corrupted] {
        let eta = evaluate_regulatory(&mutated, &cfg).map_err(|e| e.to_string())?;
        ensure(eta == result.eta, || format!("seed {seed}: eta changed under mutation"))?;
    }
    Ok(())
}

fn partition_labels(x: f64) -> Vec<String> {
    vec![rfan_core::data::synthetic_subgroup(x).unwrap_or("rest").to_string()]
}

/// With subgroups that partition the test set, the worst subgroup value never
/// exceeds the overall value.
pub fn worst_case_below_mean(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test = gen_synthetic(1, 400, seed).unwrap().test;
    for r in &mut test {
        r.subgroups = partition_labels(r.covariates[0]);
    }
    let labels: Vec<String> = ["s1", "s2", "rest"].iter().map(|s| s.to_string()).collect();
    let p_treat: f64 = rng.random();
    let policy: Vec<Arm> = test.iter().map(|_| Arm::from_treated(rng.random_bool(p_treat))).collect();
    let pv = policy_value(&policy, &test).map_err(|e| e.to_string())?;
    let wc = worst_case_policy_value(&policy, &test, &labels).map_err(|e| e.to_string())?;
    ensure(wc <= pv + 1e-12, || format!("seed {seed}: worst case {wc} above mean {pv}"))
}

/// Reordering test patients (with their decisions) leaves every metric
/// unchanged up to summation rounding.
pub fn metrics_permutation_invariant(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let test = gen_synthetic(1, 300, seed).unwrap().test;
    let labels: Vec<String> = vec!["s1".into(), "s2".into()];
    let policy: Vec<Arm> = test.iter().map(|_| Arm::from_treated(rng.random_bool(0.5))).collect();
    let cate: Vec<f64> = test.iter().map(|_| rng.random_range(-3.0..5.0)).collect();
    let mut order: Vec<usize> = (0..test.len()).collect();
    order.shuffle(&mut rng);
    let test2: Vec<_> = order.iter().map(|&i| test[i].clone()).collect();
    let policy2: Vec<Arm> = order.iter().map(|&i| policy[i]).collect();
    let cate2: Vec<f64> = order.iter().map(|&i| cate[i]).collect();
    let pairs = [
        (policy_value(&policy, &test), policy_value(&policy2, &test2)),
        (
            worst_case_policy_value(&policy, &test, &labels),
            worst_case_policy_value(&policy2, &test2, &labels),
        ),
        (sqrt_pehe(&cate, &test), sqrt_pehe(&cate2, &test2)),
        (policy_error_rate(&policy, &test), policy_error_rate(&policy2, &test2)),
    ];
    for (a, b) in pairs {
        let (a, b) = (a.map_err(|e| e.to_string())?, b.map_err(|e| e.to_string())?);
        ensure((a - b).abs() <= 1e-10 * a.abs().max(1.0), || format!("seed {seed}: {a} != {b}"))?;
    }
    Ok(())
}

/// The t statistic is unchanged by a common positive affine map.
pub fn t_statistic_location_scale(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n1 = rng.random_range(2..30);
    let n0 = rng.random_range(2..30);
    let treated: Vec<f64> = (0..n1).map(|_| rng.random_range(-5.0..5.0)).collect();
    let control: Vec<f64> = (0..n0).map(|_| rng.random_range(-5.0..5.0)).collect();
    let a = rng.random_range(0.01..100.0);
    let c = rng.random_range(-100.0..100.0);
    let map = |v: &[f64]| v.iter().map(|x| a * x + c).collect::<Vec<f64>>();
    let r1 = t_test(&treated, &control, 0.05).map_err(|e| e.to_string())?;
    let r2 = t_test(&map(&treated), &map(&control), 0.05).map_err(|e| e.to_string())?;
    ensure(
        (r1.t_statistic - r2.t_statistic).abs() <= 1e-8 * r1.t_statistic.abs().max(1.0),
        || format!("seed {seed}: t {} vs {}", r1.t_statistic, r2.t_statistic),
    )?;
    ensure((r1.p_value - r2.p_value).abs() <= 1e-8, || format!("seed {seed}: p changed"))?;
    ensure(r1.rejected == r2.rejected, || format!("seed {seed}: decision changed"))
}
