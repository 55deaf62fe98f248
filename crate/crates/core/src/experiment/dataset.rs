//! Result files.
//!
//! `results.csv` has the fixed header [`RESULTS_HEADER`]; floats use
//! `{:.16e}` so values survive a round trip bit for bit, and absent values
//! are empty fields. `profiles.csv` holds one row per block length.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use csv::{ReaderBuilder, StringRecord};

use super::{PointKey, ResultRecord};
use crate::gaussian_states::matrix_io::atomic_write;
use crate::lattice_model::MeasurementKind;
use crate::{Error, Result};

pub const RESULTS_HEADER: &str =
    "alpha,gamma,L,measurement,eta,converged,S_A,I_BC,N_A,corr_mid_end,residual,walltime_s";
pub const PROFILES_HEADER: &str = "alpha,gamma,L,measurement,eta,l,S";
pub const RESULTS_SCHEMA: &str = include_str!("../../schema/results.schema.json");

fn data_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Data { path: path.to_path_buf(), reason: reason.into() }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

fn key_fields(k: &PointKey) -> String {
    format!("{:.16e},{:.16e},{},{},{:.16e}", k.alpha, k.gamma, k.sites, k.measurement.as_str(), k.eta)
}

pub(super) fn record_line(r: &ResultRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{:.16e}\n",
        key_fields(&r.key()),
        r.converged,
        fmt_opt(r.entropy),
        fmt_opt(r.mutual_information),
        fmt_opt(r.negativity),
        fmt_opt(r.corr_mid_end),
        fmt_opt(r.residual),
        r.walltime_s
    )
}

pub(super) fn profile_rows(r: &ResultRecord) -> Vec<String> {
    let key = key_fields(&r.key());
    r.entropy_profile
        .iter()
        .flatten()
        .enumerate()
        .map(|(i, s)| format!("{key},{},{s:.16e}\n", i + 1))
        .collect()
}

pub fn write_results_csv(records: &[ResultRecord], path: &Path) -> Result<()> {
    let mut text = format!("{RESULTS_HEADER}\n");
    for r in records {
        text.push_str(&record_line(r));
    }
    atomic_write(path, text.as_bytes())
}

pub fn write_profiles_csv(records: &[ResultRecord], path: &Path) -> Result<()> {
    let mut text = format!("{PROFILES_HEADER}\n");
    for r in records {
        text.extend(profile_rows(r));
    }
    atomic_write(path, text.as_bytes())
}

struct Fields<'a> {
    rec: &'a StringRecord,
    path: &'a Path,
    line: u64,
}

impl Fields<'_> {
    fn err(&self, what: &str) -> Error {
        data_err(self.path, format!("line {}: {what}", self.line))
    }

    fn f64(&self, i: usize, name: &str) -> Result<f64> {
        self.rec[i].trim().parse().map_err(|_| self.err(&format!("bad {name} `{}`", &self.rec[i])))
    }

    fn opt(&self, i: usize, name: &str) -> Result<Option<f64>> {
        if self.rec[i].trim().is_empty() {
            Ok(None)
        } else {
            self.f64(i, name).map(Some)
        }
    }

    fn usize(&self, i: usize, name: &str) -> Result<usize> {
        self.rec[i].trim().parse().map_err(|_| self.err(&format!("bad {name} `{}`", &self.rec[i])))
    }

    fn key(&self) -> Result<PointKey> {
        let measurement: MeasurementKind =
            self.rec[3].trim().parse().map_err(|_| self.err("bad measurement"))?;
        Ok(PointKey {
            alpha: self.f64(0, "alpha")?,
            gamma: self.f64(1, "gamma")?,
            sites: self.usize(2, "L")?,
            measurement,
            eta: self.f64(4, "eta")?,
        })
    }
}

/// Parses `text` after its header; `lenient` drops an unterminated final line.
fn parse_table<T>(
    text: &str,
    path: &Path,
    header: &str,
    lenient: bool,
    parse: impl Fn(&Fields) -> Result<T>,
) -> Result<Vec<T>> {
    let body = if lenient && !text.ends_with('\n') {
        match text.rfind('\n') {
            Some(i) => {
                log::warn!("{}: dropping incomplete final line", path.display());
                &text[..=i]
            }
            None => "",
        }
    } else {
        text
    };
    let width = header.split(',').count();
    let mut reader = ReaderBuilder::new().has_headers(true).flexible(true).from_reader(body.as_bytes());
    let found = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if body.is_empty() && lenient {
        return Ok(Vec::new());
    }
    if found != header {
        return Err(data_err(path, format!("expected header `{header}`, found `{found}`")));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let fields = Fields { rec: &rec, path, line };
        if rec.len() != width {
            return Err(fields.err(&format!("expected {width} fields, found {}", rec.len())));
        }
        out.push(parse(&fields)?);
    }
    Ok(out)
}

fn parse_record(f: &Fields) -> Result<ResultRecord> {
    let key = f.key()?;
    let converged = match f.rec[5].trim() {
        "true" => true,
        "false" => false,
        other => return Err(f.err(&format!("bad converged `{other}`"))),
    };
    Ok(ResultRecord {
        alpha: key.alpha,
        gamma: key.gamma,
        sites: key.sites,
        measurement: key.measurement,
        eta: key.eta,
        converged,
        entropy: f.opt(6, "S_A")?,
        mutual_information: f.opt(7, "I_BC")?,
        negativity: f.opt(8, "N_A")?,
        corr_mid_end: f.opt(9, "corr_mid_end")?,
        residual: f.opt(10, "residual")?,
        walltime_s: f.f64(11, "walltime_s")?,
        entropy_profile: None,
    })
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRecord>> {
    parse_table(&fs::read_to_string(path)?, path, RESULTS_HEADER, false, parse_record)
}

pub(super) fn read_results_lenient(path: &Path) -> Result<Vec<ResultRecord>> {
    parse_table(&fs::read_to_string(path)?, path, RESULTS_HEADER, true, parse_record)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub key: PointKey,
    /// Block length.
    pub l: usize,
    pub entropy: f64,
}

fn parse_profile(f: &Fields) -> Result<ProfileRow> {
    Ok(ProfileRow { key: f.key()?, l: f.usize(5, "l")?, entropy: f.f64(6, "S")? })
}

pub fn read_profiles_csv(path: &Path) -> Result<Vec<ProfileRow>> {
    parse_table(&fs::read_to_string(path)?, path, PROFILES_HEADER, false, parse_profile)
}

pub(super) fn read_profiles_lenient(path: &Path) -> Result<Vec<ProfileRow>> {
    parse_table(&fs::read_to_string(path)?, path, PROFILES_HEADER, true, parse_profile)
}

/// Attaches complete profiles (`l = 1..L-1`, each once) to their records.
pub(super) fn attach_profiles(records: &mut [ResultRecord], rows: &[ProfileRow]) {
    let mut by_key: BTreeMap<PointKey, BTreeMap<usize, f64>> = BTreeMap::new();
    for row in rows {
        by_key.entry(row.key).or_default().insert(row.l, row.entropy);
    }
    for r in records.iter_mut() {
        if let Some(profile) = by_key.get(&r.key()) {
            let complete = r.sites >= 2 && profile.len() == r.sites - 1 && profile.keys().copied().eq(1..r.sites);
            if complete {
                r.entropy_profile = Some(profile.values().copied().collect());
            }
        }
    }
}

pub fn write_results_json(records: &[ResultRecord], path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(records)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub fn read_results_json(path: &Path) -> Result<Vec<ResultRecord>> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| data_err(path, e.to_string()))
}
