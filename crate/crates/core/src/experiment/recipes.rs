//! Figure recipes: the sweeps behind each figure plus the fits that summarise
//! them. Grids live in versioned TOML files embedded at build time.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{run_sweep, ModelTemplate, Observable, ResultRecord, RunOptions, SweepAxes, SweepConfig};
use crate::gaussian_states::{matrix_io::atomic_write, vacuum_state, Region};
use crate::lattice_model::{CouplingRange, MeasurementKind, ModelSpec};
use crate::monitored_dynamics::{entanglement_growth_rate, evolve, IntegratorConfig, Recording, SteadyConfig};
use crate::scaling_analysis::{
    crossing_point, data_collapse, fit_central_charge, fit_correlation_exponent, fit_power_law, interpolate,
    pade_fit, CollapseAnsatz, CollapseAxis, CollapseConfig, DecayLaw, ScalingDataset,
};
use crate::{Error, Result};

const DESK: &str = include_str!("../../recipes/desk.toml");
const PAPER: &str = include_str!("../../recipes/paper.toml");

/// Entropies below this count as exactly vanishing.
const VANISHING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
    Appd,
    Appe,
    Appf,
    Apph,
}

impl Figure {
    pub const ALL: [Figure; 7] =
        [Figure::Fig2, Figure::Fig3, Figure::Fig4, Figure::Appd, Figure::Appe, Figure::Appf, Figure::Apph];

    pub fn as_str(&self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Appd => "appd",
            Figure::Appe => "appe",
            Figure::Appf => "appf",
            Figure::Apph => "apph",
        }
    }
}

impl std::str::FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown figure `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Paper,
}

impl Scale {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scale::Desk => "desk",
            Scale::Paper => "paper",
        }
    }
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(Error::Config(format!("unknown scale `{other}`"))),
        }
    }
}

/// Local measurement, α scans at fixed γ.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig2Recipe {
    pub sites: Vec<usize>,
    pub gammas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub crossing_window: (f64, f64),
    pub crossing_target: (f64, f64),
    pub classify_gamma: f64,
    pub subvolume_alpha: f64,
    pub area_alpha: f64,
}

/// Nonlocal measurement, γ scan at fixed α.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig3Recipe {
    pub sites: Vec<usize>,
    pub alpha: f64,
    pub gammas: Vec<f64>,
    pub crossing_window: (f64, f64),
}

/// Central charges from entropy profiles and data collapses.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig4Recipe {
    pub sites: Vec<usize>,
    pub local_gamma: f64,
    /// Subvolume, critical and area-law points, in that order.
    pub local_profile_alphas: Vec<f64>,
    pub local_collapse_alphas: Vec<f64>,
    pub nonlocal_alpha: f64,
    /// Subvolume, critical and area-law points, in that order.
    pub nonlocal_profile_gammas: Vec<f64>,
    pub nonlocal_collapse_gammas: Vec<f64>,
    pub local_collapse: CollapseConfig,
    pub nonlocal_collapse: CollapseConfig,
}

/// Decay of the correlation element under local measurement.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppdRecipe {
    pub sites: Vec<usize>,
    pub gamma: f64,
    pub power_law_alpha: f64,
    pub exponential_alpha: f64,
}

/// Unitary entanglement growth rates.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppeRecipe {
    pub sites: Vec<usize>,
    pub proportional_alpha: f64,
    pub constant_alpha: f64,
    pub dt: f64,
    pub t_max: f64,
    pub fit_window: (f64, f64),
    pub min_r_squared: f64,
    pub max_relative_spread: f64,
}

/// Nearest-neighbour coupling with nonlocal measurement.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppfRecipe {
    pub sites: Vec<usize>,
    pub alphas: Vec<f64>,
    pub gamma: f64,
    pub orders: Vec<usize>,
}

/// Imperfect detection.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApphRecipe {
    pub sites: Vec<usize>,
    pub eta: f64,
    pub local_gamma: f64,
    /// Subvolume then area-law α.
    pub local_alphas: Vec<f64>,
    pub nonlocal_gamma: f64,
    /// Subvolume then area-law α.
    pub nonlocal_alphas: Vec<f64>,
    pub unconditional_sites: usize,
    pub unconditional_alpha: f64,
    pub unconditional_gamma: f64,
    pub unconditional_dt: f64,
    pub unconditional_t_max: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeBook {
    pub version: u32,
    pub fig2: Fig2Recipe,
    pub fig3: Fig3Recipe,
    pub fig4: Fig4Recipe,
    pub appd: AppdRecipe,
    pub appe: AppeRecipe,
    pub appf: AppfRecipe,
    pub apph: ApphRecipe,
}

impl RecipeBook {
    pub fn load(scale: Scale) -> Result<Self> {
        let text = match scale {
            Scale::Desk => DESK,
            Scale::Paper => PAPER,
        };
        toml::from_str(text).map_err(|e| Error::Config(format!("{} recipe book: {e}", scale.as_str())))
    }
}

/// One comparison against a target; `passed` is `None` for values reported
/// without a pass criterion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: Option<bool>,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed: Some(passed), detail: detail.into() }
    }

    fn info(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed: None, detail: detail.into() }
    }

    fn failed(name: impl Into<String>, err: &Error) -> Self {
        Check { name: name.into(), passed: Some(false), detail: format!("error: {err}") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureReport {
    pub figure: Figure,
    pub scale: Scale,
    pub recipe_version: u32,
    pub output_dir: PathBuf,
    pub checks: Vec<Check>,
    pub results: Value,
}

impl FigureReport {
    /// Every check with a criterion passed.
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed != Some(false))
    }
}

/// Size-scaling exponent `b` of `a·L^b`. Identically vanishing data is an
/// area law with `b = 0`; otherwise vanishing entries are left out of the fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SizeScaling {
    pub b: f64,
    pub b_stderr: f64,
    pub vanishing: bool,
    /// Sizes whose value vanished and was left out.
    pub zeros: usize,
}

impl SizeScaling {
    pub fn is_subvolume(&self) -> bool {
        self.b > 0.0 && self.b > 2.0 * self.b_stderr
    }

    pub fn is_area(&self, tol: f64) -> bool {
        self.b.abs() < tol
    }
}

pub fn size_scaling(sizes: &[f64], values: &[f64]) -> Result<SizeScaling> {
    let (l, v): (Vec<f64>, Vec<f64>) =
        sizes.iter().zip(values).filter(|(_, v)| v.abs() >= VANISHING).map(|(l, v)| (*l, *v)).unzip();
    let zeros = values.len() - v.len();
    if !values.is_empty() && v.is_empty() {
        return Ok(SizeScaling { b: 0.0, b_stderr: 0.0, vanishing: true, zeros });
    }
    if zeros > 0 && v.len() < 3 {
        return Err(Error::Fit(format!("only {} of {} values are nonzero", v.len(), values.len())));
    }
    let fit = fit_power_law(&l, &v, None)?;
    Ok(SizeScaling { b: fit.get("b"), b_stderr: fit.stderr("b"), vanishing: false, zeros })
}

/// `(L, value)` of converged records matching `keep`, sorted by `L`.
fn series(
    records: &[ResultRecord],
    keep: impl Fn(&ResultRecord) -> bool,
    value: impl Fn(&ResultRecord) -> Option<f64>,
) -> (Vec<f64>, Vec<f64>) {
    let mut pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.converged && keep(r))
        .filter_map(|r| value(r).map(|v| (r.sites as f64, v)))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.into_iter().unzip()
}

fn dataset(
    records: &[ResultRecord],
    keep: impl Fn(&ResultRecord) -> bool,
    control: impl Fn(&ResultRecord) -> f64,
    value: impl Fn(&ResultRecord) -> Option<f64>,
    window: Option<(f64, f64)>,
) -> ScalingDataset {
    let mut data = ScalingDataset::default();
    for r in records.iter().filter(|r| r.converged && keep(r)) {
        let c = control(r);
        if window.is_some_and(|(lo, hi)| c < lo || c > hi) {
            continue;
        }
        if let Some(v) = value(r) {
            data.push(c, r.sites, v);
        }
    }
    data
}

/// Differences below half a unit in the second significant digit of the mean.
pub fn agree_to_two_digits(values: &[f64]) -> bool {
    if values.is_empty() {
        return false;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let unit = 10f64.powf(mean.abs().log10().floor() - 1.0);
    let spread = values.iter().cloned().fold(f64::MIN, f64::max) - values.iter().cloned().fold(f64::MAX, f64::min);
    spread < 0.5 * unit
}

struct Runner {
    dir: PathBuf,
    workers: Option<usize>,
}

impl Runner {
    fn sweep(
        &self,
        name: &str,
        model: ModelTemplate,
        sweep: SweepAxes,
        observables: Vec<Observable>,
    ) -> Result<Vec<ResultRecord>> {
        let config = SweepConfig {
            output_dir: self.dir.join(name),
            workers: 0,
            observables,
            model,
            sweep,
            steady: SteadyConfig::default(),
        };
        let summary = run_sweep(&config, &RunOptions { resume: true, workers: self.workers, no_timing: false })?;
        Ok(summary.records)
    }
}

fn template(measurement: MeasurementKind) -> ModelTemplate {
    ModelTemplate { measurement: Some(measurement), ..ModelTemplate::default() }
}

/// Runs the recipe of `figure` at `scale`, writing sweeps and `report.json`
/// under `out_root/<figure>-<scale>`. Finished points are reused on reruns.
pub fn reproduce_figure(
    figure: Figure,
    scale: Scale,
    out_root: &Path,
    workers: Option<usize>,
) -> Result<FigureReport> {
    let book = RecipeBook::load(scale)?;
    if scale == Scale::Paper {
        log::warn!("paper-scale recipe for {} can take hours", figure.as_str());
    }
    let dir = out_root.join(format!("{}-{}", figure.as_str(), scale.as_str()));
    fs::create_dir_all(&dir)?;
    let runner = Runner { dir: dir.clone(), workers };
    let (checks, results) = match figure {
        Figure::Fig2 => fig2(&runner, &book.fig2)?,
        Figure::Fig3 => fig3(&runner, &book.fig3)?,
        Figure::Fig4 => fig4(&runner, &book.fig4)?,
        Figure::Appd => appd(&runner, &book.appd)?,
        Figure::Appe => appe(&book.appe)?,
        Figure::Appf => appf(&runner, &book.appf)?,
        Figure::Apph => apph(&runner, &book.apph)?,
    };
    let report = FigureReport { figure, scale, recipe_version: book.version, output_dir: dir.clone(), checks, results };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    atomic_write(&dir.join("report.json"), text.as_bytes())?;
    Ok(report)
}

type Outcome = (Vec<Check>, Value);

fn exponents_over(
    records: &[ResultRecord],
    controls: &[f64],
    keep: impl Fn(&ResultRecord, f64) -> bool,
    value: impl Fn(&ResultRecord) -> Option<f64> + Copy,
) -> Vec<(f64, Result<SizeScaling>)> {
    controls
        .iter()
        .map(|&c| {
            let (l, v) = series(records, |r| keep(r, c), value);
            (c, size_scaling(&l, &v))
        })
        .collect()
}

fn exponent_json(name: &str, rows: &[(f64, Result<SizeScaling>)]) -> Value {
    Value::Array(
        rows.iter()
            .map(|(c, s)| match s {
                Ok(s) => json!({ name: c, "b": s.b, "b_stderr": s.b_stderr, "vanishing": s.vanishing, "zeros": s.zeros }),
                Err(e) => json!({ name: c, "error": e.to_string() }),
            })
            .collect(),
    )
}

fn fig2(runner: &Runner, r: &Fig2Recipe) -> Result<Outcome> {
    let records = runner.sweep(
        "local",
        template(MeasurementKind::Local),
        SweepAxes {
            alpha: Some(r.alphas.clone()),
            gamma: Some(r.gammas.clone()),
            sites: Some(r.sites.clone()),
            ..SweepAxes::default()
        },
        vec![Observable::Entropy, Observable::MutualInformation, Observable::CorrelationElement],
    )?;
    let mut checks = Vec::new();
    let mut crossings = Vec::new();
    for &gamma in &r.gammas {
        let data = dataset(&records, |x| x.gamma == gamma, |x| x.alpha, |x| x.mutual_information, Some(r.crossing_window));
        let name = format!("I_BC crossing in alpha at gamma = {gamma}");
        match crossing_point(&data) {
            Ok(c) => {
                let (lo, hi) = r.crossing_target;
                let ok = c.pairs.len() + 1 == r.sites.len() && c.pairs.iter().all(|p| p.control >= lo && p.control <= hi);
                let list: Vec<String> = c.pairs.iter().map(|p| format!("{}/{}: {:.4}", p.smaller, p.larger, p.control)).collect();
                checks.push(Check::new(name, ok, format!("pairs [{}] within [{lo}, {hi}]", list.join(", "))));
                crossings.push(json!({ "gamma": gamma, "crossing": c }));
            }
            Err(e) => checks.push(Check::failed(name, &e)),
        }
    }
    let mut exponents = Vec::new();
    for &gamma in &r.gammas {
        let rows = exponents_over(&records, &r.alphas, |x, a| x.gamma == gamma && x.alpha == a, |x| x.entropy);
        exponents.push(json!({ "gamma": gamma, "exponents": exponent_json("alpha", &rows) }));
    }
    let classify = |alpha: f64| {
        let (l, v) = series(&records, |x| x.gamma == r.classify_gamma && x.alpha == alpha, |x| x.entropy);
        size_scaling(&l, &v)
    };
    match classify(r.subvolume_alpha) {
        Ok(s) => checks.push(Check::new(
            format!("subvolume law at alpha = {}, gamma = {}", r.subvolume_alpha, r.classify_gamma),
            s.is_subvolume(),
            format!("b = {:.4} ± {:.4}, need b > 2σ", s.b, s.b_stderr),
        )),
        Err(e) => checks.push(Check::failed("subvolume law", &e)),
    }
    match classify(r.area_alpha) {
        Ok(s) => checks.push(Check::new(
            format!("area law at alpha = {}, gamma = {}", r.area_alpha, r.classify_gamma),
            s.is_area(0.05),
            format!("b = {:.4} ± {:.4}, need |b| < 0.05", s.b, s.b_stderr),
        )),
        Err(e) => checks.push(Check::failed("area law", &e)),
    }
    Ok((checks, json!({ "crossings": crossings, "exponents": exponents })))
}

fn fig3(runner: &Runner, r: &Fig3Recipe) -> Result<Outcome> {
    let records = runner.sweep(
        "nonlocal",
        ModelTemplate { alpha: Some(r.alpha), ..template(MeasurementKind::Nonlocal) },
        SweepAxes { gamma: Some(r.gammas.clone()), sites: Some(r.sites.clone()), ..SweepAxes::default() },
        vec![Observable::Entropy, Observable::MutualInformation, Observable::CorrelationElement],
    )?;
    let mut checks = Vec::new();
    let rows = exponents_over(&records, &r.gammas, |x, g| x.gamma == g, |x| x.entropy);
    let data = dataset(&records, |_| true, |x| x.gamma, |x| x.mutual_information, Some(r.crossing_window));
    let crossing = match crossing_point(&data) {
        Ok(c) => c,
        Err(e) => {
            checks.push(Check::failed("I_BC crossing in gamma", &e));
            return Ok((checks, json!({ "exponents": exponent_json("gamma", &rows) })));
        }
    };
    let gc = crossing.fit.get("critical");
    checks.push(Check::new(
        format!("I_BC crossing in gamma at alpha = {}", r.alpha),
        crossing.pairs.len() + 1 == r.sites.len(),
        format!("gamma_c = {gc:.4} ± {:.4}", crossing.fit.stderr("critical")),
    ));
    let (below, above): (Vec<_>, Vec<_>) = rows.iter().partition(|(g, _)| *g < gc);
    let below_ok = !below.is_empty() && below.iter().all(|(_, s)| s.as_ref().is_ok_and(|s| s.b > 0.0));
    let above_ok = !above.is_empty() && above.iter().all(|(_, s)| s.as_ref().is_ok_and(|s| s.is_area(0.05)));
    checks.push(Check::new("b > 0 below gamma_c", below_ok, format!("{} scanned points", below.len())));
    checks.push(Check::new("|b| < 0.05 above gamma_c", above_ok, format!("{} scanned points", above.len())));
    let column: Vec<f64> =
        r.sites.iter().filter_map(|&l| interpolate(&entropy_curve(&records, l), gc)).collect();
    checks.push(Check::new(
        "S_A(gamma_c) independent of L",
        column.len() == r.sites.len() && agree_to_two_digits(&column),
        format!("S_A = {column:.4?}"),
    ));
    Ok((checks, json!({ "crossing": crossing, "exponents": exponent_json("gamma", &rows), "critical_column": column })))
}

fn entropy_curve(records: &[ResultRecord], sites: usize) -> Vec<(f64, f64)> {
    let mut curve: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.converged && r.sites == sites)
        .filter_map(|r| r.entropy.map(|s| (r.gamma, s)))
        .collect();
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    curve
}

fn central_charges(records: &[ResultRecord], keep: impl Fn(&ResultRecord) -> bool) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = records
        .iter()
        .filter(|r| r.converged && keep(r))
        .filter_map(|r| {
            let profile = r.entropy_profile.as_ref()?;
            let blocks: Vec<usize> = (1..=profile.len()).collect();
            fit_central_charge(&blocks, profile, r.sites).ok().map(|f| (r.sites, f.get("c")))
        })
        .collect();
    out.sort_by_key(|p| p.0);
    out
}

fn profile_checks(
    checks: &mut Vec<Check>,
    label: &str,
    records: &[ResultRecord],
    controls: &[f64],
    control: impl Fn(&ResultRecord) -> f64,
) -> Value {
    let phases = ["subvolume", "critical", "area"];
    let mut out = Vec::new();
    for (phase, &c) in phases.iter().zip(controls) {
        let cs = central_charges(records, |r| control(r) == c);
        let values: Vec<f64> = cs.iter().map(|p| p.1).collect();
        let detail = format!("c(L) = {cs:.4?}");
        match *phase {
            "subvolume" => checks.push(Check::new(
                format!("{label}: c grows with L in the subvolume phase ({c})"),
                values.len() >= 2 && values.windows(2).all(|w| w[1] > w[0]),
                detail,
            )),
            _ => checks.push(Check::info(format!("{label}: c(L) at the {phase} point ({c})"), detail)),
        }
        out.push(json!({ "phase": phase, "control": c, "central_charge": cs }));
    }
    Value::Array(out)
}

fn collapse_both(
    checks: &mut Vec<Check>,
    label: &str,
    data: &ScalingDataset,
    axis: CollapseAxis,
    config: &CollapseConfig,
) -> Value {
    let alg = data_collapse(data, CollapseAnsatz::Algebraic, axis, config);
    let bkt = data_collapse(data, CollapseAnsatz::Bkt, axis, config);
    match (&alg, &bkt) {
        (Ok(a), Ok(b)) => {
            checks.push(Check::info(
                format!("{label}: algebraic collapse"),
                format!(
                    "critical = {:.4} ± {:.4}, nu = {:.3} ± {:.3}",
                    a.fit.get("critical"),
                    a.fit.stderr("critical"),
                    a.fit.get("nu"),
                    a.fit.stderr("nu")
                ),
            ));
            checks.push(Check::new(
                format!("{label}: algebraic MSE below BKT MSE"),
                a.fit.mse < b.fit.mse,
                format!("{:.3e} vs {:.3e}", a.fit.mse, b.fit.mse),
            ));
        }
        (Err(e), _) | (_, Err(e)) => checks.push(Check::failed(format!("{label}: collapse"), e)),
    }
    json!({
        "algebraic": alg.as_ref().map(|c| &c.fit).ok(),
        "bkt": bkt.as_ref().map(|c| &c.fit).ok(),
    })
}

fn fig4(runner: &Runner, r: &Fig4Recipe) -> Result<Outcome> {
    let mut checks = Vec::new();
    let profiles = vec![Observable::Entropy, Observable::EntropyProfile];
    let local = runner.sweep(
        "local_profiles",
        ModelTemplate { gamma: Some(r.local_gamma), ..template(MeasurementKind::Local) },
        SweepAxes { alpha: Some(r.local_profile_alphas.clone()), sites: Some(r.sites.clone()), ..SweepAxes::default() },
        profiles.clone(),
    )?;
    let local_c = profile_checks(&mut checks, "local", &local, &r.local_profile_alphas, |x| x.alpha);
    let nonlocal = runner.sweep(
        "nonlocal_profiles",
        ModelTemplate { alpha: Some(r.nonlocal_alpha), ..template(MeasurementKind::Nonlocal) },
        SweepAxes { gamma: Some(r.nonlocal_profile_gammas.clone()), sites: Some(r.sites.clone()), ..SweepAxes::default() },
        profiles,
    )?;
    let nonlocal_c = profile_checks(&mut checks, "nonlocal", &nonlocal, &r.nonlocal_profile_gammas, |x| x.gamma);

    let local_scan = runner.sweep(
        "local_collapse",
        ModelTemplate { gamma: Some(r.local_gamma), ..template(MeasurementKind::Local) },
        SweepAxes { alpha: Some(r.local_collapse_alphas.clone()), sites: Some(r.sites.clone()), ..SweepAxes::default() },
        vec![Observable::Entropy],
    )?;
    let data = dataset(&local_scan, |_| true, |x| x.alpha, |x| x.entropy, None);
    let local_collapse =
        collapse_both(&mut checks, "local", &data, CollapseAxis::AlphaAtFixedGamma, &r.local_collapse);
    let nonlocal_scan = runner.sweep(
        "nonlocal_collapse",
        ModelTemplate { alpha: Some(r.nonlocal_alpha), ..template(MeasurementKind::Nonlocal) },
        SweepAxes { gamma: Some(r.nonlocal_collapse_gammas.clone()), sites: Some(r.sites.clone()), ..SweepAxes::default() },
        vec![Observable::Entropy],
    )?;
    let data = dataset(&nonlocal_scan, |_| true, |x| x.gamma, |x| x.entropy, None);
    let nonlocal_collapse =
        collapse_both(&mut checks, "nonlocal", &data, CollapseAxis::GammaAtFixedAlpha, &r.nonlocal_collapse);
    Ok((
        checks,
        json!({
            "local_central_charge": local_c,
            "nonlocal_central_charge": nonlocal_c,
            "local_collapse": local_collapse,
            "nonlocal_collapse": nonlocal_collapse,
        }),
    ))
}

fn appd(runner: &Runner, r: &AppdRecipe) -> Result<Outcome> {
    let records = runner.sweep(
        "local",
        ModelTemplate { gamma: Some(r.gamma), ..template(MeasurementKind::Local) },
        SweepAxes {
            alpha: Some(vec![r.power_law_alpha, r.exponential_alpha]),
            sites: Some(r.sites.clone()),
            ..SweepAxes::default()
        },
        vec![Observable::CorrelationElement],
    )?;
    let mut checks = Vec::new();
    let mut fits = Vec::new();
    for (alpha, expected) in [(r.power_law_alpha, DecayLaw::PowerLaw), (r.exponential_alpha, DecayLaw::Exponential)] {
        let (l, c) = series(&records, |x| x.alpha == alpha, |x| x.corr_mid_end.map(f64::abs));
        let name = format!("correlation decay at alpha = {alpha} is {expected:?}");
        match fit_correlation_exponent(&l, &c) {
            Ok(fit) => {
                checks.push(Check::new(
                    name,
                    fit.decay == expected,
                    format!(
                        "winner {:?}; power MSE {:.3e} (p = {:.3}), exponential MSE {:.3e} (xi = {:.3})",
                        fit.decay,
                        fit.power.mse,
                        fit.power.get("p"),
                        fit.exponential.mse,
                        fit.exponential.get("xi")
                    ),
                ));
                fits.push(json!({ "alpha": alpha, "fit": fit, "sizes": l, "correlations": c }));
            }
            Err(e) => checks.push(Check::failed(name, &e)),
        }
    }
    Ok((checks, Value::Array(fits)))
}

fn appe(r: &AppeRecipe) -> Result<Outcome> {
    let config = IntegratorConfig::propagator(r.dt, r.t_max);
    let mut checks = Vec::new();
    let mut out = Vec::new();
    for (alpha, proportional) in [(r.proportional_alpha, true), (r.constant_alpha, false)] {
        let model = ModelSpec::new(r.sites[0], alpha, 0.0, MeasurementKind::Local);
        let name = if proportional {
            format!("growth rate proportional to L at alpha = {alpha}")
        } else {
            format!("growth rate independent of L at alpha = {alpha}")
        };
        match entanglement_growth_rate(&model, &r.sites, r.fit_window, &config) {
            Ok(g) => {
                let rates: Vec<String> = g.rates.iter().map(|x| format!("{}: {:.4}", x.sites, x.rate)).collect();
                let (ok, need) = if proportional {
                    (g.r_squared > r.min_r_squared && g.slope > 0.0, format!("R² > {}, slope > 0", r.min_r_squared))
                } else {
                    (g.relative_spread < r.max_relative_spread, format!("spread < {}", r.max_relative_spread))
                };
                checks.push(Check::new(
                    name,
                    ok,
                    format!(
                        "rates [{}], slope {:.3e}, R² {:.4}, spread {:.3}; need {need}",
                        rates.join(", "),
                        g.slope,
                        g.r_squared,
                        g.relative_spread
                    ),
                ));
                out.push(json!({ "alpha": alpha, "report": g }));
            }
            Err(e) => checks.push(Check::failed(name, &e)),
        }
    }
    Ok((checks, Value::Array(out)))
}

fn appf(runner: &Runner, r: &AppfRecipe) -> Result<Outcome> {
    let records = runner.sweep(
        "short_range",
        ModelTemplate {
            gamma: Some(r.gamma),
            coupling_range: CouplingRange::NearestNeighbor,
            ..template(MeasurementKind::Nonlocal)
        },
        SweepAxes { alpha: Some(r.alphas.clone()), sites: Some(r.sites.clone()), ..SweepAxes::default() },
        vec![Observable::Entropy],
    )?;
    let mut checks = Vec::new();
    let mut out = Vec::new();
    for &alpha in &r.alphas {
        let (l, s) = series(&records, |x| x.alpha == alpha, |x| x.entropy);
        let fits: Vec<(usize, Result<_>)> = r.orders.iter().map(|&n| (n, pade_fit(&l, &s, n))).collect();
        let mse = |n: usize| {
            fits.iter()
                .find(|f| f.0 == n)
                .and_then(|f| f.1.as_ref().ok())
                .map_or(f64::INFINITY, |p| p.fit.reduced_mse())
        };
        let area = format!("finite Padé asymptote at alpha = {alpha}");
        let best = format!("first-order Padé has the smallest reduced MSE at alpha = {alpha}");
        let asymptotes: Vec<String> = fits
            .iter()
            .map(|(n, f)| match f {
                Ok(p) => format!("n={n}: {:.5}{}", p.asymptote, if p.singular { " (pole in range)" } else { "" }),
                Err(e) => format!("n={n}: {e}"),
            })
            .collect();
        match fits.iter().find(|f| f.0 == 1).map(|f| &f.1) {
            Some(Ok(p1)) => {
                checks.push(Check::new(
                    area,
                    p1.asymptote.is_finite() && !p1.singular,
                    format!("asymptotes [{}]", asymptotes.join(", ")),
                ));
                let mses: Vec<String> = r.orders.iter().map(|&n| format!("n={n}: {:.3e}", mse(n))).collect();
                checks.push(Check::new(
                    best,
                    r.orders.iter().all(|&n| mse(1) <= mse(n)),
                    format!("reduced MSE [{}]", mses.join(", ")),
                ));
            }
            Some(Err(e)) => checks.push(Check::failed(area, e)),
            None => checks.push(Check::new(area, false, "order 1 missing from the recipe")),
        }
        let fits_json: Vec<Value> = fits
            .iter()
            .map(|(n, f)| match f {
                Ok(p) => json!({ "order": n, "fit": p }),
                Err(e) => json!({ "order": n, "error": e.to_string() }),
            })
            .collect();
        out.push(json!({ "alpha": alpha, "sizes": l, "entropy": s, "pade": fits_json }));
    }
    Ok((checks, Value::Array(out)))
}

/// First recorded time at which `values` returns exactly to zero after
/// having been positive.
pub fn sudden_death(times: &[f64], values: &[f64]) -> Option<f64> {
    let first_positive = values.iter().position(|&v| v > 0.0)?;
    let death = values[first_positive..].iter().position(|&v| v == 0.0)? + first_positive;
    Some(times[death])
}

fn zero_note(s: &SizeScaling) -> String {
    if s.vanishing {
        " (identically zero)".into()
    } else if s.zeros > 0 {
        format!(" ({} vanishing sizes left out)", s.zeros)
    } else {
        String::new()
    }
}

fn apph(runner: &Runner, r: &ApphRecipe) -> Result<Outcome> {
    let mut checks = Vec::new();
    let mut out = serde_json::Map::new();
    for (label, kind, gamma, alphas) in [
        ("local", MeasurementKind::Local, r.local_gamma, &r.local_alphas),
        ("nonlocal", MeasurementKind::Nonlocal, r.nonlocal_gamma, &r.nonlocal_alphas),
    ] {
        let records = runner.sweep(
            label,
            ModelTemplate { gamma: Some(gamma), eta: r.eta, ..template(kind) },
            SweepAxes { alpha: Some(alphas.clone()), sites: Some(r.sites.clone()), ..SweepAxes::default() },
            vec![Observable::Negativity],
        )?;
        let rows = exponents_over(&records, alphas, |x, a| x.alpha == a, |x| x.negativity);
        for (i, (alpha, s)) in rows.iter().enumerate() {
            let subvolume = i == 0;
            let name = format!(
                "{label} eta = {}: N_A {} at alpha = {alpha}",
                r.eta,
                if subvolume { "subvolume" } else { "area" }
            );
            match s {
                Ok(s) => checks.push(Check::new(
                    name,
                    if subvolume { s.is_subvolume() } else { s.is_area(0.05) },
                    format!("b = {:.4} ± {:.4}{}", s.b, s.b_stderr, zero_note(s)),
                )),
                Err(e) => checks.push(Check::failed(name, e)),
            }
        }
        out.insert(format!("{label}_exponents"), exponent_json("alpha", &rows));
    }

    let l = r.unconditional_sites;
    let model = ModelSpec::new(l, r.unconditional_alpha, r.unconditional_gamma, MeasurementKind::Local).with_eta(0.0);
    let config = IntegratorConfig {
        stop_at_steady: false,
        ..IntegratorConfig::propagator(r.unconditional_dt, r.unconditional_t_max)
    };
    let recording = Recording { region: Region::half_chain(l)?, negativity: true };
    let traj = evolve(&vacuum_state(l), &model, &config, Some(&recording))?;
    let negativities = traj.negativities.unwrap_or_default();
    let mut csv = String::from("t,N_A\n");
    for (t, n) in traj.times.iter().zip(&negativities) {
        csv.push_str(&format!("{t:.16e},{n:.16e}\n"));
    }
    atomic_write(&runner.dir.join("unconditional.csv"), csv.as_bytes())?;
    let death = sudden_death(&traj.times, &negativities);
    let peak = negativities.iter().cloned().fold(0.0, f64::max);
    checks.push(Check::new(
        format!("eta = 0: N_A vanishes exactly at finite time (L = {l}, alpha = {})", r.unconditional_alpha),
        death.is_some(),
        match death {
            Some(t) => format!("peak N_A {peak:.4}, N_A = 0 from t = {t:.3}"),
            None => format!("peak N_A {peak:.4}, never returned to zero before t = {}", r.unconditional_t_max),
        },
    ));
    out.insert("unconditional".into(), json!({ "sites": l, "peak": peak, "death_time": death }));
    Ok((checks, Value::Object(out)))
}
