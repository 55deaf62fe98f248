//! Fits over stored sweep records, grouped by the parameters held fixed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::ResultRecord;
use crate::lattice_model::MeasurementKind;
use crate::scaling_analysis::{
    compare_log_law, crossing_point, data_collapse, fit_central_charge, fit_correlation_exponent, fit_power_law,
    pade_fit, CollapseAnsatz, CollapseAxis, CollapseConfig, ScalingDataset,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisTask {
    /// `a·L^b` per fixed `(α, γ)`.
    PowerLaw,
    /// Power law against `c·ln L + s0`.
    LogLaw,
    /// Crossing of curves for consecutive sizes along the control axis.
    Crossing,
    /// Finite-size data collapse along the control axis.
    Collapse,
    /// `[n/n]` rational fit against `L`.
    Pade,
    /// Power-law or exponential decay of `corr_mid_end` with `L`.
    Correlation,
    /// Calabrese–Cardy fit of each stored entropy profile.
    CentralCharge,
}

impl std::str::FromStr for AnalysisTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.replace('-', "_")))
            .map_err(|_| Error::Config(format!("unknown analysis task `{s}`")))
    }
}

/// Which stored observable to analyse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueColumn {
    #[serde(rename = "S_A")]
    Entropy,
    #[serde(rename = "I_BC")]
    MutualInformation,
    #[serde(rename = "N_A")]
    Negativity,
    #[serde(rename = "corr_mid_end")]
    CorrMidEnd,
}

impl ValueColumn {
    pub fn get(&self, r: &ResultRecord) -> Option<f64> {
        match self {
            ValueColumn::Entropy => r.entropy,
            ValueColumn::MutualInformation => r.mutual_information,
            ValueColumn::Negativity => r.negativity,
            ValueColumn::CorrMidEnd => r.corr_mid_end,
        }
    }
}

impl std::str::FromStr for ValueColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.into()))
            .map_err(|_| Error::Config(format!("unknown column `{s}` (use S_A, I_BC, N_A or corr_mid_end)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlAxis {
    Alpha,
    Gamma,
}

impl std::str::FromStr for ControlAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(ControlAxis::Alpha),
            "gamma" => Ok(ControlAxis::Gamma),
            other => Err(Error::Config(format!("unknown control axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOptions {
    pub task: AnalysisTask,
    pub column: ValueColumn,
    pub control: ControlAxis,
    /// Restricts the control axis for crossing and collapse.
    pub window: Option<(f64, f64)>,
    pub ansatz: CollapseAnsatz,
    pub collapse: CollapseConfig,
    pub pade_order: usize,
}

impl AnalyzeOptions {
    pub fn new(task: AnalysisTask) -> Self {
        AnalyzeOptions {
            task,
            column: ValueColumn::Entropy,
            control: ControlAxis::Alpha,
            window: None,
            ansatz: CollapseAnsatz::Algebraic,
            collapse: CollapseConfig::default(),
            pade_order: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Fixed {
    a: f64,
    b: f64,
    measurement: MeasurementKind,
    eta: f64,
}

impl Fixed {
    fn sortable(&self) -> (u64, u64, MeasurementKind, u64) {
        (ord_bits(self.a), ord_bits(self.b), self.measurement, ord_bits(self.eta))
    }
}

/// Order-preserving integer image of a float.
fn ord_bits(x: f64) -> u64 {
    let bits = x.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

fn usable(records: &[ResultRecord], column: ValueColumn) -> impl Iterator<Item = (&ResultRecord, f64)> {
    records.iter().filter(|r| r.converged).filter_map(move |r| column.get(r).map(|v| (r, v)))
}

fn outcome<T: Serialize>(group: Value, result: Result<T>) -> Value {
    match result {
        Ok(r) => json!({ "group": group, "result": r }),
        Err(e) => json!({ "group": group, "error": e.to_string() }),
    }
}

/// Runs `options.task` and returns a JSON array with one entry per group.
pub fn analyze(records: &[ResultRecord], options: &AnalyzeOptions) -> Result<Value> {
    let out: Vec<Value> = match options.task {
        AnalysisTask::PowerLaw | AnalysisTask::LogLaw | AnalysisTask::Pade | AnalysisTask::Correlation => {
            let column = if options.task == AnalysisTask::Correlation { ValueColumn::CorrMidEnd } else { options.column };
            let mut groups: BTreeMap<_, (Fixed, Vec<(f64, f64)>)> = BTreeMap::new();
            for (r, v) in usable(records, column) {
                let fixed = Fixed { a: r.alpha, b: r.gamma, measurement: r.measurement, eta: r.eta };
                groups.entry(fixed.sortable()).or_insert((fixed, Vec::new())).1.push((r.sites as f64, v));
            }
            groups
                .into_values()
                .map(|(f, mut pts)| {
                    pts.sort_by(|x, y| x.0.total_cmp(&y.0));
                    let (l, v): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
                    let group = json!({ "alpha": f.a, "gamma": f.b, "measurement": f.measurement, "eta": f.eta });
                    match options.task {
                        AnalysisTask::PowerLaw => outcome(group, fit_power_law(&l, &v, None)),
                        AnalysisTask::LogLaw => outcome(group, compare_log_law(&l, &v)),
                        AnalysisTask::Pade => outcome(group, pade_fit(&l, &v, options.pade_order)),
                        _ => outcome(group, fit_correlation_exponent(&l, &v.iter().map(|x| x.abs()).collect::<Vec<_>>())),
                    }
                })
                .collect()
        }
        AnalysisTask::Crossing | AnalysisTask::Collapse => {
            let mut groups: BTreeMap<_, (Fixed, ScalingDataset)> = BTreeMap::new();
            for (r, v) in usable(records, options.column) {
                let (control, other) = match options.control {
                    ControlAxis::Alpha => (r.alpha, r.gamma),
                    ControlAxis::Gamma => (r.gamma, r.alpha),
                };
                if let Some((lo, hi)) = options.window {
                    if control < lo || control > hi {
                        continue;
                    }
                }
                let fixed = Fixed { a: other, b: 0.0, measurement: r.measurement, eta: r.eta };
                groups.entry(fixed.sortable()).or_insert((fixed, ScalingDataset::default())).1.push(control, r.sites, v);
            }
            let fixed_name = match options.control {
                ControlAxis::Alpha => "gamma",
                ControlAxis::Gamma => "alpha",
            };
            let axis = match options.control {
                ControlAxis::Alpha => CollapseAxis::AlphaAtFixedGamma,
                ControlAxis::Gamma => CollapseAxis::GammaAtFixedAlpha,
            };
            groups
                .into_values()
                .map(|(f, data)| {
                    let group = json!({ fixed_name: f.a, "measurement": f.measurement, "eta": f.eta });
                    if options.task == AnalysisTask::Crossing {
                        outcome(group, crossing_point(&data))
                    } else {
                        outcome(group, data_collapse(&data, options.ansatz, axis, &options.collapse))
                    }
                })
                .collect()
        }
        AnalysisTask::CentralCharge => records
            .iter()
            .filter(|r| r.converged)
            .filter_map(|r| r.entropy_profile.as_ref().map(|p| (r, p)))
            .map(|(r, profile)| {
                let group = json!({
                    "alpha": r.alpha, "gamma": r.gamma, "L": r.sites, "measurement": r.measurement, "eta": r.eta
                });
                let blocks: Vec<usize> = (1..=profile.len()).collect();
                outcome(group, fit_central_charge(&blocks, profile, r.sites))
            })
            .collect(),
    };
    if out.is_empty() {
        return Err(Error::Config("no converged records carry the requested values".into()));
    }
    Ok(Value::Array(out))
}
