use std::fs;

use serde_json::Value;

use super::*;
use crate::gaussian_states::symplectic_spectrum;

fn sweep_toml(dir: &Path, body: &str) -> String {
    format!("output_dir = {:?}\n{body}", dir.display().to_string())
}

fn small_config(dir: &Path) -> SweepConfig {
    SweepConfig::from_toml_str(&sweep_toml(
        dir,
        r#"
observables = ["entropy", "mutual_information", "negativity", "correlation_element", "entropy_profile"]
[model]
measurement = "local"
gamma = 0.5
[sweep]
alpha = [0.5, 2.0]
sites = [8, 16]
eta = [0.6, 1.0]
"#,
    ))
    .unwrap()
}

fn quiet() -> RunOptions {
    RunOptions { resume: false, workers: Some(1), no_timing: true }
}

#[test]
fn single_site_sweep_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let config = SweepConfig::from_toml_str(&sweep_toml(
        dir.path(),
        "[model]\nmeasurement = \"local\"\ngamma = 0.5\nalpha = 1.0\n[sweep]\nsites = [1]\n",
    ))
    .unwrap();
    let summary = run_sweep(&config, &quiet()).unwrap();
    assert_eq!(summary.records.len(), 1);
    let r = &summary.records[0];
    assert!(r.converged);
    assert!(r.entropy.unwrap().abs() < 1e-12, "{:?}", r.entropy);
    assert_eq!(r.mutual_information, None);
    let ss = steady_state(&config.points().unwrap()[0], &config.steady).unwrap();
    let g = ss.state.matrix();
    assert!((g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)] - 0.25).abs() < 1e-8);
}

#[test]
fn config_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("[model]\nmeasurement = \"local\"\ngamma = 0.5\nalpha = 1.0\n[sweep]\nsites = []\n", "empty"),
        ("[model]\nmeasurement = \"local\"\ngamma = 0.5\nalpha = 1.0\nsites = 4\n[sweep]\n", "no axis"),
        ("[model]\nmeasurement = \"local\"\nalpha = 1.0\n[sweep]\nsites = [4]\n", "gamma"),
        ("[model]\nmeasurement = \"local\"\ngamma = 0.5\nalpha = 1.0\ncolour = 1\n[sweep]\nsites = [4]\n", "unknown"),
        ("[model]\nmeasurement = \"local\"\ngamma = -1.0\nalpha = 1.0\n[sweep]\nsites = [4]\n", "gamma"),
        ("observables = []\n[model]\nmeasurement = \"local\"\ngamma = 1.0\nalpha = 1.0\n[sweep]\nsites = [4]\n", "observables"),
    ];
    for (body, needle) in cases {
        match SweepConfig::from_toml_str(&sweep_toml(dir.path(), body)) {
            Err(Error::Config(msg)) => assert!(msg.contains(needle), "{msg} lacks {needle}"),
            other => panic!("accepted {body}: {other:?}"),
        }
    }
}

#[test]
fn points_are_sorted_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let points = small_config(dir.path()).points().unwrap();
    assert_eq!(points.len(), 8);
    let keys: Vec<PointKey> = points.iter().map(PointKey::of).collect();
    assert!(keys.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn config_toml_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let again = SweepConfig::from_toml_str(&config.to_toml_string().unwrap()).unwrap();
    assert_eq!(config, again);
}

#[test]
fn mutual_information_regions_use_floor_division() {
    let (b, c) = mutual_information_regions(52).unwrap();
    assert_eq!(b.sites(), (13..19).collect::<Vec<_>>().as_slice());
    assert_eq!(c.sites(), (32..39).collect::<Vec<_>>().as_slice());
    let (b, c) = mutual_information_regions(200).unwrap();
    assert_eq!((b.sites()[0], b.len(), c.sites()[0], c.len()), (50, 25, 125, 25));
    assert!(mutual_information_regions(4).is_err());
}

#[test]
fn sweep_records_are_complete_and_finite() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_sweep(&small_config(dir.path()), &quiet()).unwrap();
    assert_eq!((summary.solved, summary.skipped, summary.failed), (8, 0, 0));
    for r in &summary.records {
        assert!(r.converged);
        for v in [r.entropy, r.mutual_information, r.negativity, r.corr_mid_end, r.residual] {
            assert!(v.unwrap().is_finite());
        }
        assert_eq!(r.entropy_profile.as_ref().unwrap().len(), r.sites - 1);
        // The profile at l = L/2 is the half-chain entropy.
        assert_eq!(r.entropy_profile.as_ref().unwrap()[r.sites / 2 - 1], r.entropy.unwrap());
    }
    for name in [RESULTS_FILE, PROFILES_FILE, JSON_FILE, SCHEMA_FILE] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn failures_are_recorded_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    // The closed-form solver needs eta > 0, so the eta = 0 point fails.
    let config = SweepConfig::from_toml_str(&sweep_toml(
        dir.path(),
        "[model]\nmeasurement = \"local\"\ngamma = 0.5\nalpha = 1.0\nsites = 8\n[sweep]\neta = [0.0, 1.0]\n",
    ))
    .unwrap();
    let summary = run_sweep(&config, &quiet()).unwrap();
    assert_eq!((summary.solved, summary.failed), (2, 1));
    let failed = &summary.records[0];
    assert!(!failed.converged && failed.entropy.is_none() && failed.residual.is_none());
    assert!(summary.records[1].converged);
    let back = read_results_csv(&dir.path().join(RESULTS_FILE)).unwrap();
    assert!(!back[0].converged);
}

#[test]
fn rerun_performs_no_new_solves() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let first = run_sweep(&config, &quiet()).unwrap();
    let before = fs::read(dir.path().join(RESULTS_FILE)).unwrap();
    let second = run_sweep(&config, &RunOptions { resume: true, ..quiet() }).unwrap();
    assert_eq!((second.solved, second.skipped), (0, 8));
    assert_eq!(first.records, second.records);
    assert_eq!(before, fs::read(dir.path().join(RESULTS_FILE)).unwrap());
}

#[test]
fn repeated_runs_write_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_sweep(&small_config(a.path()), &quiet()).unwrap();
    run_sweep(&small_config(b.path()), &quiet()).unwrap();
    for name in [RESULTS_FILE, PROFILES_FILE, JSON_FILE] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn parallel_matches_serial() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let serial = run_sweep(&small_config(a.path()), &quiet()).unwrap();
    let parallel = run_sweep(&small_config(b.path()), &RunOptions { workers: Some(4), ..quiet() }).unwrap();
    assert_eq!(serial.records, parallel.records);
}

#[test]
fn interrupted_run_resumes_to_the_same_records() {
    let full = tempfile::tempdir().unwrap();
    let reference = run_sweep(&small_config(full.path()), &quiet()).unwrap();

    // Emulate a kill: keep a prefix of the appended log and cut the next line
    // in half, in both files.
    let dir = tempfile::tempdir().unwrap();
    run_sweep(&small_config(dir.path()), &quiet()).unwrap();
    let results = fs::read_to_string(dir.path().join(RESULTS_FILE)).unwrap();
    let lines: Vec<&str> = results.lines().collect();
    let cut = format!("{}\n{}", lines[..4].join("\n"), &lines[4][..20]);
    fs::write(dir.path().join(RESULTS_FILE), cut).unwrap();
    let profiles = fs::read_to_string(dir.path().join(PROFILES_FILE)).unwrap();
    let keep: usize = profiles.len() * 2 / 3;
    fs::write(dir.path().join(PROFILES_FILE), &profiles[..keep]).unwrap();
    fs::remove_file(dir.path().join(JSON_FILE)).unwrap();

    let resumed = run_sweep(&small_config(dir.path()), &RunOptions { resume: true, ..quiet() }).unwrap();
    assert_eq!((resumed.solved, resumed.skipped), (5, 3));
    assert_eq!(resumed.records, reference.records);
    for name in [RESULTS_FILE, PROFILES_FILE, JSON_FILE] {
        assert_eq!(fs::read(full.path().join(name)).unwrap(), fs::read(dir.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn without_resume_existing_results_are_replaced() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    run_sweep(&config, &quiet()).unwrap();
    let again = run_sweep(&config, &quiet()).unwrap();
    assert_eq!((again.solved, again.skipped), (8, 0));
    assert_eq!(read_results_csv(&dir.path().join(RESULTS_FILE)).unwrap().len(), 8);
}

fn sample_record() -> ResultRecord {
    ResultRecord {
        alpha: 0.1,
        gamma: 1.0 / 3.0,
        sites: 52,
        measurement: MeasurementKind::Nonlocal,
        eta: 0.6,
        converged: true,
        entropy: Some(std::f64::consts::PI),
        mutual_information: Some(1.234_567_890_123_456_7e-7),
        negativity: None,
        corr_mid_end: Some(-2.75e-17),
        residual: Some(3e-15),
        walltime_s: 0.125,
        entropy_profile: None,
    }
}

#[test]
fn one_record_gives_two_csv_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    write_results_csv(&[sample_record()], &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], RESULTS_HEADER);
    assert!(lines[1].starts_with("1.0000000000000001e-1,3.3333333333333331e-1,52,nonlocal,"), "{}", lines[1]);
    assert!(lines[1].contains(",,"), "absent N_A is an empty field");
}

#[test]
fn csv_and_json_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut failed = sample_record();
    failed.alpha = 0.2;
    failed.converged = false;
    failed.entropy = None;
    failed.mutual_information = None;
    failed.corr_mid_end = None;
    failed.residual = None;
    let records = vec![sample_record(), failed];
    let csv_path = dir.path().join("r.csv");
    write_results_csv(&records, &csv_path).unwrap();
    assert_eq!(read_results_csv(&csv_path).unwrap(), records);
    let json_path = dir.path().join("r.json");
    write_results_json(&records, &json_path).unwrap();
    assert_eq!(read_results_json(&json_path).unwrap(), records);
}

#[test]
fn strict_reader_rejects_damage() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    fs::write(&path, "alpha,gamma\n1,2\n").unwrap();
    assert!(matches!(read_results_csv(&path), Err(Error::Data { .. })));
    write_results_csv(&[sample_record()], &path).unwrap();
    let text = fs::read_to_string(&path).unwrap().replace("nonlocal", "global");
    fs::write(&path, text).unwrap();
    assert!(matches!(read_results_csv(&path), Err(Error::Data { .. })));
}

/// Checks the subset of JSON Schema used by the published schema file.
fn validate(schema: &Value, value: &Value, at: &str) -> std::result::Result<(), String> {
    if let Some(types) = schema.get("type") {
        let allowed: Vec<&str> = match types {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
            _ => return Err(format!("{at}: bad type keyword")),
        };
        let ok = allowed.iter().any(|t| match *t {
            "array" => value.is_array(),
            "object" => value.is_object(),
            "string" => value.is_string(),
            "boolean" => value.is_boolean(),
            "null" => value.is_null(),
            "number" => value.is_number(),
            "integer" => value.is_u64() || value.is_i64(),
            _ => false,
        });
        if !ok {
            return Err(format!("{at}: {value} is not {allowed:?}"));
        }
    }
    if let Some(options) = schema.get("enum").and_then(Value::as_array) {
        if !options.contains(value) {
            return Err(format!("{at}: {value} not in enum"));
        }
    }
    if let (Some(min), Some(x)) = (schema.get("minimum").and_then(Value::as_f64), value.as_f64()) {
        if x < min {
            return Err(format!("{at}: {x} < {min}"));
        }
    }
    if let (Some(max), Some(x)) = (schema.get("maximum").and_then(Value::as_f64), value.as_f64()) {
        if x > max {
            return Err(format!("{at}: {x} > {max}"));
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), value.as_array()) {
        for (i, v) in arr.iter().enumerate() {
            validate(items, v, &format!("{at}[{i}]"))?;
        }
    }
    if let Some(obj) = value.as_object() {
        let props = schema.get("properties").and_then(Value::as_object);
        for req in schema.get("required").and_then(Value::as_array).into_iter().flatten() {
            let name = req.as_str().unwrap();
            if !obj.contains_key(name) {
                return Err(format!("{at}: missing {name}"));
            }
        }
        for (k, v) in obj {
            match props.and_then(|p| p.get(k)) {
                Some(sub) => validate(sub, v, &format!("{at}.{k}"))?,
                None if schema.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    return Err(format!("{at}: unexpected {k}"))
                }
                None => {}
            }
        }
    }
    Ok(())
}

#[test]
fn json_export_validates_against_schema() {
    let dir = tempfile::tempdir().unwrap();
    run_sweep(&small_config(dir.path()), &quiet()).unwrap();
    let schema: Value = serde_json::from_str(&fs::read_to_string(dir.path().join(SCHEMA_FILE)).unwrap()).unwrap();
    let data: Value = serde_json::from_str(&fs::read_to_string(dir.path().join(JSON_FILE)).unwrap()).unwrap();
    assert_eq!(data.as_array().unwrap().len(), 8);
    validate(&schema, &data, "$").unwrap();

    let mut bad = data.clone();
    bad[0]["measurement"] = Value::String("global".into());
    assert!(validate(&schema, &bad, "$").is_err());
    let mut bad = data;
    bad[0].as_object_mut().unwrap().remove("S_A");
    assert!(validate(&schema, &bad, "$").is_err());
}

#[test]
fn steady_records_are_pure_at_unit_efficiency() {
    let spec = ModelSpec::new(16, 0.7, 0.5, MeasurementKind::Nonlocal);
    let ss = steady_state(&spec, &SteadyConfig::default()).unwrap();
    let spectrum = symplectic_spectrum(ss.state.matrix()).unwrap();
    assert!(spectrum.eigenvalues.iter().all(|k| (k - 0.5).abs() < 1e-8));
    let r = solve_point(&spec, &[Observable::Entropy, Observable::Negativity], &SteadyConfig::default());
    // For a pure state the log negativity is the Rényi-1/2 entropy, never below S.
    assert!(r.negativity.unwrap() >= r.entropy.unwrap());
}

fn synthetic(alpha: f64, gamma: f64, sites: usize, value: f64) -> ResultRecord {
    ResultRecord {
        alpha,
        gamma,
        sites,
        measurement: MeasurementKind::Local,
        eta: 1.0,
        converged: true,
        entropy: Some(value),
        mutual_information: Some(value),
        negativity: None,
        corr_mid_end: Some(value),
        residual: Some(0.0),
        walltime_s: 0.0,
        entropy_profile: None,
    }
}

#[test]
fn analysis_groups_by_fixed_parameters() {
    let mut records = Vec::new();
    for (alpha, b) in [(0.5, 0.5), (2.0, 0.0)] {
        for l in [50, 100, 200, 400] {
            records.push(synthetic(alpha, 1.0, l, 0.3 * (l as f64).powf(b)));
        }
    }
    let report = analyze(&records, &AnalyzeOptions::new(AnalysisTask::PowerLaw)).unwrap();
    let groups = report.as_array().unwrap();
    assert_eq!(groups.len(), 2);
    let b0 = groups[0]["result"]["params"]["b"].as_f64().unwrap();
    let b1 = groups[1]["result"]["params"]["b"].as_f64().unwrap();
    assert!((b0 - 0.5).abs() < 1e-10 && b1.abs() < 1e-10, "{b0} {b1}");
}

#[test]
fn analysis_crossing_over_alpha() {
    // I = (α − 0.9)·ln L crosses at α = 0.9 for every pair.
    let mut records = Vec::new();
    for l in [50, 100, 200] {
        for k in 0..11 {
            let alpha = 0.5 + 0.1 * k as f64;
            records.push(synthetic(alpha, 1.0, l, (0.9 - alpha) * (l as f64).ln()));
        }
    }
    let mut options = AnalyzeOptions::new(AnalysisTask::Crossing);
    options.column = ValueColumn::MutualInformation;
    let report = analyze(&records, &options).unwrap();
    let critical = report[0]["result"]["fit"]["params"]["critical"].as_f64().unwrap();
    assert!((critical - 0.9).abs() < 1e-9, "{critical}");
}

#[test]
fn analysis_without_values_is_an_error() {
    let mut r = synthetic(1.0, 1.0, 10, 1.0);
    r.converged = false;
    assert!(analyze(&[r], &AnalyzeOptions::new(AnalysisTask::PowerLaw)).is_err());
}

#[test]
fn task_and_column_names_parse() {
    assert_eq!("central_charge".parse::<AnalysisTask>().unwrap(), AnalysisTask::CentralCharge);
    assert_eq!("power-law".parse::<AnalysisTask>().unwrap(), AnalysisTask::PowerLaw);
    assert!("nonsense".parse::<AnalysisTask>().is_err());
    assert_eq!("I_BC".parse::<ValueColumn>().unwrap(), ValueColumn::MutualInformation);
    assert!("S".parse::<ValueColumn>().is_err());
}

#[test]
fn recipe_books_parse_and_pin_desk_grids() {
    let desk = RecipeBook::load(Scale::Desk).unwrap();
    assert_eq!(desk.version, 1);
    assert_eq!(desk.fig2.sites, vec![52, 100, 152, 200]);
    assert_eq!(desk.fig2.gammas, vec![0.5, 10.0]);
    assert_eq!(desk.appe.sites, vec![50, 100, 200]);
    assert_eq!(desk.appf.sites, vec![26, 40, 52, 76, 100, 126, 152, 176, 200]);
    assert_eq!(desk.apph.unconditional_sites, 20);
    let paper = RecipeBook::load(Scale::Paper).unwrap();
    assert!(paper.fig2.sites.contains(&400));
    for f in Figure::ALL {
        assert_eq!(f.as_str().parse::<Figure>().unwrap(), f);
    }
}

#[test]
fn sudden_death_needs_a_positive_stretch() {
    let t = [0.0, 1.0, 2.0, 3.0, 4.0];
    assert_eq!(sudden_death(&t, &[0.0, 0.3, 0.1, 0.0, 0.0]), Some(3.0));
    assert_eq!(sudden_death(&t, &[0.0, 0.0, 0.0, 0.0, 0.0]), None);
    assert_eq!(sudden_death(&t, &[0.0, 0.3, 0.2, 0.1, 1e-300]), None);
}

#[test]
fn two_digit_agreement() {
    assert!(agree_to_two_digits(&[0.1227, 0.1226, 0.1225]));
    assert!(!agree_to_two_digits(&[0.1227, 0.1300]));
    assert!(agree_to_two_digits(&[4.81, 4.79]));
    assert!(!agree_to_two_digits(&[]));
}

#[test]
fn size_scaling_of_vanishing_data_is_area_law() {
    let l = [52.0, 100.0, 152.0, 200.0];
    let s = size_scaling(&l, &[0.0; 4]).unwrap();
    assert!(s.vanishing && s.is_area(0.05) && !s.is_subvolume());
    let s = size_scaling(&l, &l.map(|x: f64| 0.1 * x.sqrt())).unwrap();
    assert!((s.b - 0.5).abs() < 1e-10 && s.is_subvolume());
}
