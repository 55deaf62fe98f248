//! Parameter sweeps, result persistence and figure recipes.
//!
//! A sweep is the Cartesian product of the axes in [`SweepAxes`], each point
//! filled in from [`ModelTemplate`]. Points are solved in parallel and every
//! finished record is appended and flushed to `results.csv` by a single
//! writer, so an interrupted run loses at most the record being written.
//! Resuming skips every point already present in the file.

mod analysis;
mod dataset;
mod recipes;

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gaussian_states::{entanglement_entropy, log_negativity, mutual_information, CovarianceState, Region};
use crate::lattice_model::{CouplingRange, MeasurementKind, ModelSpec};
use crate::monitored_dynamics::{steady_state, SteadyConfig};
use crate::{Error, Result};

pub use analysis::{analyze, AnalysisTask, AnalyzeOptions, ControlAxis, ValueColumn};
pub use dataset::{
    read_profiles_csv, read_results_csv, read_results_json, write_profiles_csv, write_results_csv,
    write_results_json, ProfileRow, PROFILES_HEADER, RESULTS_HEADER, RESULTS_SCHEMA,
};
pub use recipes::{
    agree_to_two_digits, reproduce_figure, size_scaling, sudden_death, AppdRecipe, AppeRecipe, AppfRecipe, ApphRecipe,
    Check, Fig2Recipe, Fig3Recipe, Fig4Recipe, Figure, FigureReport, RecipeBook, Scale, SizeScaling,
};

pub const RESULTS_FILE: &str = "results.csv";
pub const PROFILES_FILE: &str = "profiles.csv";
pub const JSON_FILE: &str = "results.json";
pub const SCHEMA_FILE: &str = "results.schema.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Half-chain entropy `S_A`.
    Entropy,
    /// `I_BC` between the regions of [`mutual_information_regions`].
    MutualInformation,
    /// Half-chain logarithmic negativity `N_A`.
    Negativity,
    /// Position correlation between sites `L/2` and `L` (1-based).
    CorrelationElement,
    /// `S(l)` for every contiguous block `[0, l)`, written to `profiles.csv`.
    EntropyProfile,
}

fn default_observables() -> Vec<Observable> {
    vec![
        Observable::Entropy,
        Observable::MutualInformation,
        Observable::Negativity,
        Observable::CorrelationElement,
    ]
}

/// Fixed model parameters; any of them may instead be swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelTemplate {
    pub sites: Option<usize>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub measurement: Option<MeasurementKind>,
    #[serde(default = "unit")]
    pub eta: f64,
    #[serde(default = "unit")]
    pub omega: f64,
    #[serde(default = "unit")]
    pub kappa_coupling: f64,
    #[serde(default = "long_range")]
    pub coupling_range: CouplingRange,
}

fn unit() -> f64 {
    1.0
}

fn long_range() -> CouplingRange {
    CouplingRange::LongRange
}

impl Default for ModelTemplate {
    fn default() -> Self {
        ModelTemplate {
            sites: None,
            alpha: None,
            gamma: None,
            measurement: None,
            eta: 1.0,
            omega: 1.0,
            kappa_coupling: 1.0,
            coupling_range: CouplingRange::LongRange,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub alpha: Option<Vec<f64>>,
    pub gamma: Option<Vec<f64>>,
    pub sites: Option<Vec<usize>>,
    pub measurement: Option<Vec<MeasurementKind>>,
    pub eta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_observables")]
    pub observables: Vec<Observable>,
    #[serde(default)]
    pub model: ModelTemplate,
    pub sweep: SweepAxes,
    #[serde(default)]
    pub steady: SteadyConfig,
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: SweepConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.points()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Every grid point in sorted key order, validated.
    pub fn points(&self) -> Result<Vec<ModelSpec>> {
        fn axis<T: Clone>(name: &str, axis: &Option<Vec<T>>, fixed: Option<T>) -> Result<Vec<T>> {
            match (axis, fixed) {
                (Some(v), _) if v.is_empty() => Err(Error::Config(format!("sweep axis `{name}` is empty"))),
                (Some(v), _) => Ok(v.clone()),
                (None, Some(x)) => Ok(vec![x]),
                (None, None) => Err(Error::Config(format!(
                    "`{name}` must be given in [model] or swept in [sweep]"
                ))),
            }
        }
        let s = &self.sweep;
        if s.alpha.is_none() && s.gamma.is_none() && s.sites.is_none() && s.measurement.is_none() && s.eta.is_none()
        {
            return Err(Error::Config("[sweep] names no axis".into()));
        }
        if self.observables.is_empty() {
            return Err(Error::Config("no observables requested".into()));
        }
        let t = &self.model;
        let alphas = axis("alpha", &s.alpha, t.alpha)?;
        let gammas = axis("gamma", &s.gamma, t.gamma)?;
        let sites = axis("sites", &s.sites, t.sites)?;
        let kinds = axis("measurement", &s.measurement, t.measurement)?;
        let etas = axis("eta", &s.eta, Some(t.eta))?;
        let mut points = Vec::new();
        for &alpha in &alphas {
            for &gamma in &gammas {
                for &l in &sites {
                    for &measurement in &kinds {
                        for &eta in &etas {
                            let spec = ModelSpec {
                                sites: l,
                                alpha,
                                omega: t.omega,
                                kappa_coupling: t.kappa_coupling,
                                coupling_range: t.coupling_range,
                                measurement,
                                gamma,
                                eta,
                            };
                            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
                            points.push(spec);
                        }
                    }
                }
            }
        }
        points.sort_by(|a, b| PointKey::of(a).cmp(&PointKey::of(b)));
        points.dedup_by(|a, b| PointKey::of(a) == PointKey::of(b));
        Ok(points)
    }
}

/// Identity of a grid point, ordered lexicographically as
/// `(alpha, gamma, L, measurement, eta)`.
#[derive(Debug, Clone, Copy)]
pub struct PointKey {
    pub alpha: f64,
    pub gamma: f64,
    pub sites: usize,
    pub measurement: MeasurementKind,
    pub eta: f64,
}

impl PointKey {
    pub fn of(spec: &ModelSpec) -> Self {
        PointKey { alpha: spec.alpha, gamma: spec.gamma, sites: spec.sites, measurement: spec.measurement, eta: spec.eta }
    }
}

impl Ord for PointKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.alpha
            .total_cmp(&other.alpha)
            .then(self.gamma.total_cmp(&other.gamma))
            .then(self.sites.cmp(&other.sites))
            .then(self.measurement.cmp(&other.measurement))
            .then(self.eta.total_cmp(&other.eta))
    }
}

impl PartialOrd for PointKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for PointKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for PointKey {}

/// One solved grid point. Observables are `None` when not requested or when
/// the solve failed; a converged record never holds NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub alpha: f64,
    pub gamma: f64,
    #[serde(rename = "L")]
    pub sites: usize,
    pub measurement: MeasurementKind,
    pub eta: f64,
    pub converged: bool,
    #[serde(rename = "S_A")]
    pub entropy: Option<f64>,
    #[serde(rename = "I_BC")]
    pub mutual_information: Option<f64>,
    #[serde(rename = "N_A")]
    pub negativity: Option<f64>,
    pub corr_mid_end: Option<f64>,
    pub residual: Option<f64>,
    pub walltime_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy_profile: Option<Vec<f64>>,
}

impl ResultRecord {
    pub fn key(&self) -> PointKey {
        PointKey {
            alpha: self.alpha,
            gamma: self.gamma,
            sites: self.sites,
            measurement: self.measurement,
            eta: self.eta,
        }
    }

    fn failed(spec: &ModelSpec, walltime_s: f64) -> Self {
        ResultRecord {
            alpha: spec.alpha,
            gamma: spec.gamma,
            sites: spec.sites,
            measurement: spec.measurement,
            eta: spec.eta,
            converged: false,
            entropy: None,
            mutual_information: None,
            negativity: None,
            corr_mid_end: None,
            residual: None,
            walltime_s,
            entropy_profile: None,
        }
    }
}

/// Regions `B = [⌊L/4⌋, ⌊3L/8⌋)` and `C = [⌊5L/8⌋, ⌊3L/4⌋)` (0-based).
pub fn mutual_information_regions(sites: usize) -> Result<(Region, Region)> {
    let b = Region::contiguous(sites / 4, 3 * sites / 8, sites)?;
    let c = Region::contiguous(5 * sites / 8, 3 * sites / 4, sites)?;
    if b.is_empty() || c.is_empty() {
        return Err(Error::InvalidRegion(format!("mutual-information regions are empty for L = {sites}")));
    }
    Ok((b, c))
}

/// `S(l)` of the blocks `[0, l)` for `l = 1..L-1`.
pub fn entropy_profile(state: &CovarianceState) -> Result<Vec<f64>> {
    let l = state.n_modes();
    (1..l).map(|len| entanglement_entropy(state, &Region::contiguous(0, len, l)?)).collect()
}

/// The requested observables of a steady state.
pub fn measure(state: &CovarianceState, observables: &[Observable], record: &mut ResultRecord) -> Result<()> {
    let l = state.n_modes();
    for obs in observables {
        match obs {
            Observable::Entropy => {
                record.entropy = Some(entanglement_entropy(state, &Region::half_chain(l)?)?);
            }
            Observable::MutualInformation if l >= 8 => {
                let (b, c) = mutual_information_regions(l)?;
                record.mutual_information = Some(mutual_information(state, &b, &c)?);
            }
            Observable::Negativity if l >= 2 => {
                record.negativity = Some(log_negativity(state, &Region::half_chain(l)?)?);
            }
            Observable::CorrelationElement if l >= 2 => {
                record.corr_mid_end = Some(state.position_correlation(l / 2 - 1, l - 1));
            }
            Observable::EntropyProfile if l >= 2 => {
                record.entropy_profile = Some(entropy_profile(state)?);
            }
            _ => {}
        }
    }
    let values = [record.entropy, record.mutual_information, record.negativity, record.corr_mid_end];
    let profile_ok = record.entropy_profile.as_ref().is_none_or(|p| p.iter().all(|v| v.is_finite()));
    if values.iter().flatten().any(|v| !v.is_finite()) || !profile_ok {
        return Err(Error::SeriesNonConvergence("non-finite observable".into()));
    }
    Ok(())
}

/// Solves one grid point; failures become `converged = false` records.
pub fn solve_point(spec: &ModelSpec, observables: &[Observable], steady: &SteadyConfig) -> ResultRecord {
    let start = Instant::now();
    let attempt = || -> Result<ResultRecord> {
        let ss = steady_state(spec, steady)?;
        let mut record = ResultRecord::failed(spec, 0.0);
        record.converged = true;
        record.residual = Some(ss.residual);
        measure(&ss.state, observables, &mut record)?;
        Ok(record)
    };
    match attempt() {
        Ok(mut r) => {
            r.walltime_s = start.elapsed().as_secs_f64();
            r
        }
        Err(e) => {
            log::warn!(
                "point alpha={} gamma={} L={} {} eta={} failed: {e}",
                spec.alpha,
                spec.gamma,
                spec.sites,
                spec.measurement.as_str(),
                spec.eta
            );
            ResultRecord::failed(spec, start.elapsed().as_secs_f64())
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Keep records already in the output directory and skip their points.
    pub resume: bool,
    /// Overrides `SweepConfig::workers`.
    pub workers: Option<usize>,
    /// Writes `walltime_s = 0` so that repeated runs give identical files.
    pub no_timing: bool,
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    /// Every record in the output directory, sorted by key.
    pub records: Vec<ResultRecord>,
    /// Points solved in this run.
    pub solved: usize,
    /// Points skipped because a record already existed.
    pub skipped: usize,
    /// Records of this run with `converged = false`.
    pub failed: usize,
    pub output_dir: PathBuf,
}

struct AppendWriter {
    results: BufWriter<File>,
    profiles: BufWriter<File>,
}

impl AppendWriter {
    fn open(dir: &Path) -> Result<Self> {
        let open = |name: &str| -> Result<BufWriter<File>> {
            Ok(BufWriter::new(OpenOptions::new().append(true).open(dir.join(name))?))
        };
        Ok(AppendWriter { results: open(RESULTS_FILE)?, profiles: open(PROFILES_FILE)? })
    }

    /// Profile rows go first so that a record line implies its profile.
    fn append(&mut self, record: &ResultRecord) -> Result<()> {
        for row in dataset::profile_rows(record) {
            self.profiles.write_all(row.as_bytes())?;
        }
        self.profiles.flush()?;
        self.results.write_all(dataset::record_line(record).as_bytes())?;
        self.results.flush()?;
        Ok(())
    }
}

/// Runs the sweep, writing `results.csv`, `profiles.csv`, `results.json` and
/// `results.schema.json` into the output directory.
pub fn run_sweep(config: &SweepConfig, options: &RunOptions) -> Result<SweepSummary> {
    let points = config.points()?;
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let results_path = dir.join(RESULTS_FILE);
    let profiles_path = dir.join(PROFILES_FILE);

    let mut existing = Vec::new();
    if options.resume && results_path.exists() {
        existing = dataset::read_results_lenient(&results_path)?;
        if profiles_path.exists() {
            let profiles = dataset::read_profiles_lenient(&profiles_path)?;
            dataset::attach_profiles(&mut existing, &profiles);
        }
    }
    // Rewrite the surviving records so that appends start on a clean line.
    write_results_csv(&existing, &results_path)?;
    write_profiles_csv(&existing, &profiles_path)?;

    let done: BTreeSet<PointKey> = existing.iter().map(ResultRecord::key).collect();
    let todo: Vec<&ModelSpec> = points.iter().filter(|p| !done.contains(&PointKey::of(p))).collect();
    let skipped = points.len() - todo.len();
    log::info!("{} points to solve, {} already present", todo.len(), skipped);

    let workers = options.workers.unwrap_or(config.workers);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let writer = Mutex::new(AppendWriter::open(&dir)?);
    let new_records: Vec<ResultRecord> = pool.install(|| {
        todo.par_iter()
            .map(|spec| {
                let mut record = solve_point(spec, &config.observables, &config.steady);
                if options.no_timing {
                    record.walltime_s = 0.0;
                }
                writer.lock().map_err(|_| Error::Config("writer lock poisoned".into()))?.append(&record)?;
                Ok(record)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    drop(writer);

    let failed = new_records.iter().filter(|r| !r.converged).count();
    let solved = new_records.len();
    let mut records = existing;
    records.extend(new_records);
    records.sort_by_key(ResultRecord::key);
    records.dedup_by_key(|r| r.key());

    write_results_csv(&records, &results_path)?;
    write_profiles_csv(&records, &profiles_path)?;
    write_results_json(&records, &dir.join(JSON_FILE))?;
    crate::gaussian_states::matrix_io::atomic_write(&dir.join(SCHEMA_FILE), RESULTS_SCHEMA.as_bytes())?;
    Ok(SweepSummary { records, solved, skipped, failed, output_dir: dir })
}

#[cfg(test)]
mod tests;
