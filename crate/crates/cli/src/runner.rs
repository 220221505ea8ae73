use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::PathBuf;

use rfan_core::data::{parse_potential_outcomes, split_cohort, PatientRecord};
use rfan_core::metrics::MetricsReport;
use rfan_core::{gen_synthetic, run_experiment, GeneratedCohort, TrialConfig, SYNTHETIC_SUBGROUPS};

use crate::config::{ConfigError, DatasetSpec, ExperimentSpec};
use crate::output::{
    write_curves, write_results_csv, write_results_json, DesignRow, ResultsFile, SeedTrace,
};

#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "invalid config: {e}"),
            Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

/// Command-line overrides of config values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seeds: Option<usize>,
    pub jobs: Option<usize>,
}

enum Source {
    Synthetic { pool: usize, test: usize },
    Csv { records: Vec<PatientRecord>, fraction: f64 },
}

impl Source {
    fn cohort(&self, seed: u64) -> rfan_core::Result<GeneratedCohort> {
        match self {
            Source::Synthetic { pool, test } => gen_synthetic(*pool, *test, seed),
            Source::Csv { records, fraction } => split_cohort(records.clone(), *fraction, seed),
        }
    }

    fn default_subgroups(&self) -> Vec<String> {
        match self {
            Source::Synthetic { .. } => SYNTHETIC_SUBGROUPS.iter().map(|s| s.to_string()).collect(),
            Source::Csv { records, .. } => records
                .iter()
                .flat_map(|r| r.subgroups.iter().cloned())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
        }
    }
}

fn load_source(spec: &ExperimentSpec) -> Result<Source, Failure> {
    Ok(match &spec.dataset {
        DatasetSpec::Synthetic { pool_size, test_size } => Source::Synthetic {
            pool: *pool_size,
            test: *test_size,
        },
        DatasetSpec::Csv { path, pool_fraction } => {
            let file = std::fs::File::open(path).map_err(|e| {
                Failure::Config(ConfigError {
                    field: "dataset.path".into(),
                    message: format!("cannot open {}: {e}", path.display()),
                })
            })?;
            let records = parse_potential_outcomes(file)
                .map_err(|e| Failure::Runtime(format!("dataset {}: {e}", path.display())))?;
            Source::Csv {
                records,
                fraction: *pool_fraction,
            }
        }
    })
}

/// Runs every design at every sweep value and returns the rows in config
/// order (sweep value outer, design inner).
pub fn run_spec(spec: &ExperimentSpec, n_seeds: usize) -> Result<ResultsFile, Failure> {
    let source = load_source(spec)?;
    let subgroups = spec.subgroups.clone().unwrap_or_else(|| source.default_subgroups());
    if subgroups.is_empty() {
        return Err(Failure::Config(ConfigError {
            field: "subgroups".into(),
            message: "the dataset carries no subgroup labels; declare `subgroups`".into(),
        }));
    }
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|i| spec.base_seed.wrapping_add(i)).collect();
    let cohorts = seeds
        .iter()
        .map(|&s| source.cohort(s))
        .collect::<rfan_core::Result<Vec<_>>>()
        .map_err(|e| Failure::Runtime(format!("building cohorts: {e}")))?;

    let mut cache: HashMap<String, (MetricsReport, Vec<SeedTrace>)> = HashMap::new();
    let mut rows = Vec::new();
    for point in spec.sweep_points() {
        for (i, design) in spec.designs.iter().enumerate() {
            let config: TrialConfig = design.trial_config(i, point, spec.base_seed)?;
            let key = serde_json::to_string(&config).expect("config serializes");
            let where_ = match point {
                Some((over, v)) => format!("design `{}` ({} = {v})", design.label, over.name()),
                None => format!("design `{}`", design.label),
            };
            if !cache.contains_key(&key) {
                let results = run_experiment(&config, n_seeds, spec.base_seed, |seed| {
                    Ok(cohorts[(seed.wrapping_sub(spec.base_seed)) as usize].clone())
                })
                .map_err(|e| Failure::Runtime(format!("{where_} failed: {e}")))?;
                let report = MetricsReport::compute(&results, &cohorts, &subgroups)
                    .map_err(|e| Failure::Runtime(format!("{where_} metrics: {e}")))?;
                let traces = results
                    .into_iter()
                    .map(|r| SeedTrace {
                        seed: r.seed,
                        realized_switch_step: r.realized_switch_step,
                        steps: r.trace,
                    })
                    .collect();
                cache.insert(key.clone(), (report, traces));
            }
            let (report, traces) = cache[&key].clone();
            rows.push(DesignRow {
                design: design.label.clone(),
                sweep_value: point.map(|p| p.1),
                report,
                traces,
            });
        }
    }
    Ok(ResultsFile {
        sweep_over: spec.sweep.as_ref().map(|s| s.over.name().to_string()),
        subgroups,
        rows,
    })
}

/// Loads the config, runs it, and writes all outputs. Returns the written
/// file paths.
pub fn run_from_config(path: &std::path::Path, overrides: &Overrides) -> Result<Vec<PathBuf>, Failure> {
    let spec = ExperimentSpec::load(path)?;
    let n_seeds = overrides.seeds.unwrap_or(spec.n_seeds);
    if n_seeds == 0 {
        return Err(Failure::Config(ConfigError {
            field: "--seeds".into(),
            message: "must be at least 1".into(),
        }));
    }
    let out = overrides
        .out
        .clone()
        .or_else(|| spec.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("rfan-out"));

    let results = match overrides.jobs {
        Some(0) => {
            return Err(Failure::Config(ConfigError {
                field: "--jobs".into(),
                message: "must be at least 1".into(),
            }))
        }
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?
            .install(|| run_spec(&spec, n_seeds))?,
        None => run_spec(&spec, n_seeds)?,
    };

    let io = |e: std::io::Error| Failure::Runtime(format!("writing to {}: {e}", out.display()));
    std::fs::create_dir_all(&out).map_err(io)?;
    let csv_path = out.join("results.csv");
    let json_path = out.join("results.json");
    write_results_csv(&csv_path, &results.rows).map_err(io)?;
    write_results_json(&json_path, &results).map_err(io)?;
    let mut written = vec![csv_path, json_path];
    if let Some(name) = &results.sweep_over {
        written.extend(write_curves(&out, name, &results.rows).map_err(io)?);
    }
    Ok(written)
}
