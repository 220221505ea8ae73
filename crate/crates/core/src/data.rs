//! Simulation oracles: patients with frozen potential outcomes, the synthetic
//! generator and the potential-outcomes CSV loader.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Arm;
use crate::error::{Error, Result};

/// A patient with both potential outcomes realized up front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: u64,
    pub covariates: Vec<f64>,
    pub y0: f64,
    pub y1: f64,
    /// Noiseless conditional means `[E[Y0|x], E[Y1|x]]` when the generator is known.
    pub true_means: Option<[f64; 2]>,
    /// Sensitive-attribute levels this patient belongs to; empty for the majority.
    pub subgroups: Vec<String>,
}

impl PatientRecord {
    /// Realized potential outcome under `arm`.
    pub fn outcome(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Control => self.y0,
            Arm::Treated => self.y1,
        }
    }

    /// Ground-truth value of assigning `arm`: the noiseless mean when known,
    /// the realized outcome otherwise.
    pub fn ground_truth(&self, arm: Arm) -> f64 {
        match self.true_means {
            Some(m) => m[arm.index()],
            None => self.outcome(arm),
        }
    }

    pub fn true_cate(&self) -> f64 {
        self.ground_truth(Arm::Treated) - self.ground_truth(Arm::Control)
    }

    pub fn in_subgroup(&self, label: &str) -> bool {
        self.subgroups.iter().any(|s| s == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedCohort {
    pub pool: Vec<PatientRecord>,
    pub test: Vec<PatientRecord>,
    pub seed: u64,
}

pub const SYNTHETIC_SUBGROUPS: [&str; 2] = ["s1", "s2"];

/// Generator formula with unit-variance noise `eps`, written as the sum of its
/// original terms.
pub fn synthetic_outcome(x: f64, arm: Arm, eps: f64) -> f64 {
    let w = arm.index() as f64;
    (2.0 * w - 1.0) * x + (2.0 * w - 1.0) - 2.0 * ((2.0 * w - 2.0) * x).sin()
        + 2.0 * (1.0 + 0.5 * x)
        + eps
}

/// Noiseless means: control `1 + 2 sin 2x`, treated `2x + 3`.
pub fn synthetic_means(x: f64) -> [f64; 2] {
    [1.0 + 2.0 * (2.0 * x).sin(), 2.0 * x + 3.0]
}

pub fn synthetic_subgroup(x: f64) -> Option<&'static str> {
    if x < -1.2 {
        Some("s1")
    } else if x >= 1.3 {
        Some("s2")
    } else {
        None
    }
}

fn synthetic_patients(n: usize, first_id: u64, seed: u64) -> Vec<PatientRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let x: f64 = rng.sample(StandardNormal);
            let e0: f64 = rng.sample(StandardNormal);
            let e1: f64 = rng.sample(StandardNormal);
            PatientRecord {
                id: first_id + i as u64,
                covariates: vec![x],
                y0: synthetic_outcome(x, Arm::Control, e0),
                y1: synthetic_outcome(x, Arm::Treated, e1),
                true_means: Some(synthetic_means(x)),
                subgroups: synthetic_subgroup(x).map(String::from).into_iter().collect(),
            }
        })
        .collect()
}

/// One-dimensional synthetic cohort. The pool is drawn from `seed`, the test
/// set from `seed + 1`.
pub fn gen_synthetic(n_pool: usize, n_test: usize, seed: u64) -> Result<GeneratedCohort> {
    if n_pool == 0 || n_test == 0 {
        return Err(Error::Input(format!(
            "cohort sizes must be positive, got pool {n_pool} and test {n_test}"
        )));
    }
    Ok(GeneratedCohort {
        pool: synthetic_patients(n_pool, 0, seed),
        test: synthetic_patients(n_test, n_pool as u64, seed.wrapping_add(1)),
        seed,
    })
}

/// A patient removed from the pool together with the outcome it revealed.
#[derive(Debug, Clone, PartialEq)]
pub struct Revealed {
    pub record: PatientRecord,
    pub arm: Arm,
    pub outcome: f64,
}

/// Patients still available for enrollment. Order is preserved as patients
/// are removed.
#[derive(Debug, Clone)]
pub struct PatientPool {
    available: Vec<PatientRecord>,
    acquired: HashSet<u64>,
}

impl PatientPool {
    pub fn new(records: Vec<PatientRecord>) -> Self {
        Self {
            available: records,
            acquired: HashSet::new(),
        }
    }

    pub fn available(&self) -> &[PatientRecord] {
        &self.available
    }

    pub fn len(&self) -> usize {
        self.available.len()
    }

    pub fn is_empty(&self) -> bool {
        self.available.is_empty()
    }

    /// Reveals the stored outcome for `arm` and removes the patient.
    pub fn reveal(&mut self, id: u64, arm: Arm) -> Result<Revealed> {
        if self.acquired.contains(&id) {
            return Err(Error::Oracle(format!("patient {id} was already acquired")));
        }
        let pos = self
            .available
            .iter()
            .position(|r| r.id == id)
            .ok_or_else(|| Error::Oracle(format!("unknown patient id {id}")))?;
        let record = self.available.remove(pos);
        self.acquired.insert(id);
        let outcome = record.outcome(arm);
        Ok(Revealed {
            record,
            arm,
            outcome,
        })
    }
}

/// Parses `id,subgroup,x_0,...,x_{d-1},y0,y1`. A subgroup cell may hold several
/// attribute levels separated by `;`.
pub fn parse_potential_outcomes<R: Read>(reader: R) -> Result<Vec<PatientRecord>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = csv
        .headers()
        .map_err(|e| parse_err(1, "header", e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 5 {
        return Err(parse_err(
            1,
            "header",
            format!("expected id,subgroup,x_0..x_(d-1),y0,y1 with d >= 1, got {} columns", names.len()),
        ));
    }
    let d = names.len() - 4;
    let expected: Vec<String> = ["id".to_string(), "subgroup".to_string()]
        .into_iter()
        .chain((0..d).map(|i| format!("x_{i}")))
        .chain(["y0".to_string(), "y1".to_string()])
        .collect();
    for (got, want) in names.iter().zip(&expected) {
        if got != want {
            return Err(parse_err(1, got, format!("expected column `{want}`")));
        }
    }

    let mut ids = HashSet::new();
    let mut out = Vec::new();
    for rec in csv.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, "-", e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != expected.len() {
            let column = expected.get(rec.len()).map_or("-", |s| s.as_str());
            return Err(parse_err(
                line,
                column,
                format!("expected {} cells, found {}", expected.len(), rec.len()),
            ));
        }
        let id: u64 = rec[0]
            .parse()
            .map_err(|_| parse_err(line, "id", format!("`{}` is not an integer id", &rec[0])))?;
        if !ids.insert(id) {
            return Err(parse_err(line, "id", format!("duplicate id {id}")));
        }
        let number = |col: usize| -> Result<f64> {
            let cell = &rec[col];
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(_) => Err(parse_err(line, &expected[col], format!("`{cell}` is not finite"))),
                Err(_) if cell.is_empty() => Err(parse_err(line, &expected[col], "missing value")),
                Err(_) => Err(parse_err(line, &expected[col], format!("`{cell}` is not numeric"))),
            }
        };
        let covariates = (2..2 + d).map(number).collect::<Result<Vec<_>>>()?;
        out.push(PatientRecord {
            id,
            covariates,
            y0: number(2 + d)?,
            y1: number(3 + d)?,
            true_means: None,
            subgroups: rec[1]
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
        });
    }
    if out.is_empty() {
        return Err(parse_err(2, "-", "file has no data rows"));
    }
    Ok(out)
}

fn parse_err(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Seeded pool/test split; `split_fraction` of the rows (rounded) go to the pool.
pub fn split_cohort(
    records: Vec<PatientRecord>,
    split_fraction: f64,
    seed: u64,
) -> Result<GeneratedCohort> {
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::Input(format!(
            "split fraction must lie in (0, 1), got {split_fraction}"
        )));
    }
    let n = records.len();
    let n_pool = (split_fraction * n as f64).round() as usize;
    if n_pool == 0 || n_pool == n {
        return Err(Error::Input(format!(
            "split {split_fraction} of {n} rows leaves an empty pool or test set"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_pool = vec![false; n];
    for &i in &order[..n_pool] {
        in_pool[i] = true;
    }
    let (pool, test): (Vec<_>, Vec<_>) = records
        .into_iter()
        .zip(in_pool)
        .partition(|(_, p)| *p);
    Ok(GeneratedCohort {
        pool: pool.into_iter().map(|(r, _)| r).collect(),
        test: test.into_iter().map(|(r, _)| r).collect(),
        seed,
    })
}

pub fn load_potential_outcomes_csv(
    path: impl AsRef<Path>,
    split_fraction: f64,
    seed: u64,
) -> Result<GeneratedCohort> {
    let file = std::fs::File::open(path.as_ref())?;
    split_cohort(parse_potential_outcomes(file)?, split_fraction, seed)
}
