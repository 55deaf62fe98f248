//! `mipt`: sweeps, analyses and figure recipes for monitored boson chains.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mipt_core::experiment::{
    analyze, read_profiles_csv, read_results_csv, reproduce_figure, run_sweep, AnalysisTask, AnalyzeOptions,
    ControlAxis, Figure, RunOptions, Scale, SweepConfig, ValueColumn, PROFILES_FILE,
};
use mipt_core::scaling_analysis::CollapseAnsatz;

#[derive(Parser)]
#[command(name = "mipt", version, about = "Entanglement of continuously monitored long-range boson chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a parameter sweep described by a TOML file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (default: the config value, 0 = all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Keep existing records and solve only the missing points.
        #[arg(long)]
        resume: bool,
        /// Write zero wall times so repeated runs give identical files.
        #[arg(long)]
        no_timing: bool,
    },
    /// Fit stored sweep results and print a JSON report.
    Analyze(AnalyzeArgs),
    /// Run a figure recipe and print its report.
    Reproduce {
        #[arg(long)]
        figure: String,
        #[arg(long, default_value = "desk")]
        scale: String,
        /// Root directory for sweep outputs and report.json.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Args)]
struct AnalyzeArgs {
    /// results.csv written by `simulate`.
    #[arg(long)]
    input: PathBuf,
    /// power_law, log_law, central_charge, collapse, crossing, pade or correlation.
    #[arg(long)]
    task: String,
    /// Observable column: S_A, I_BC, N_A or corr_mid_end.
    #[arg(long, default_value = "S_A")]
    column: String,
    /// Control axis for crossing and collapse: alpha or gamma.
    #[arg(long, default_value = "alpha")]
    control: String,
    /// Control window `lo,hi` for crossing and collapse.
    #[arg(long, value_parser = parse_pair)]
    window: Option<(f64, f64)>,
    /// Collapse ansatz: algebraic or bkt.
    #[arg(long, default_value = "algebraic")]
    ansatz: String,
    /// Search range `lo,hi` for the critical value.
    #[arg(long, value_parser = parse_pair)]
    critical_range: Option<(f64, f64)>,
    /// Search range `lo,hi` for ν.
    #[arg(long, value_parser = parse_pair)]
    nu_range: Option<(f64, f64)>,
    /// Size that defines the scaling polynomial (default: median size).
    #[arg(long)]
    reference_size: Option<usize>,
    /// Padé order.
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// profiles.csv for central_charge (default: next to the input).
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad number `{a}`"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad number `{b}`"))?;
    if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
        return Err(format!("need lo < hi, got `{s}`"));
    }
    Ok((lo, hi))
}

/// Failure with an exit code: 1 for configuration and input errors.
struct Exit(u8);

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // Usage errors are configuration errors: exit 1, not clap's default 2.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Exit(code)) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<Exit> {
    match cli.command {
        Command::Simulate { config, workers, resume, no_timing } => {
            let sweep = SweepConfig::load(&config)?;
            let summary = run_sweep(&sweep, &RunOptions { resume, workers, no_timing })?;
            println!(
                "{} solved, {} skipped, {} failed; results in {}",
                summary.solved,
                summary.skipped,
                summary.failed,
                summary.output_dir.display()
            );
            Ok(Exit(if summary.failed > 0 { 2 } else { 0 }))
        }
        Command::Analyze(args) => {
            let report = run_analysis(&args)?;
            let text = serde_json::to_string_pretty(&report)?;
            match &args.output {
                Some(path) => std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?,
                None => println!("{text}"),
            }
            Ok(Exit(0))
        }
        Command::Reproduce { figure, scale, out, workers } => {
            let figure: Figure = figure.parse()?;
            let scale: Scale = scale.parse()?;
            let report = reproduce_figure(figure, scale, &out, workers)?;
            for check in &report.checks {
                let tag = match check.passed {
                    Some(true) => "PASS",
                    Some(false) => "FAIL",
                    None => "INFO",
                };
                println!("[{tag}] {}: {}", check.name, check.detail);
            }
            println!("report: {}", report.output_dir.join("report.json").display());
            Ok(Exit(if report.all_passed() { 0 } else { 2 }))
        }
    }
}

fn run_analysis(args: &AnalyzeArgs) -> Result<serde_json::Value> {
    let task: AnalysisTask = args.task.parse()?;
    let mut options = AnalyzeOptions::new(task);
    options.column = args.column.parse::<ValueColumn>()?;
    options.control = args.control.parse::<ControlAxis>()?;
    options.window = args.window;
    options.ansatz = match args.ansatz.as_str() {
        "algebraic" => CollapseAnsatz::Algebraic,
        "bkt" => CollapseAnsatz::Bkt,
        other => bail!("unknown ansatz `{other}` (use algebraic or bkt)"),
    };
    if let Some(range) = args.critical_range {
        options.collapse.critical_range = range;
    }
    if let Some(range) = args.nu_range {
        options.collapse.nu_range = range;
    }
    options.collapse.reference_size = args.reference_size;
    options.pade_order = args.order;

    let mut records = read_results_csv(&args.input)?;
    if task == AnalysisTask::CentralCharge {
        let path = args.profiles.clone().unwrap_or_else(|| sibling(&args.input, PROFILES_FILE));
        let rows = read_profiles_csv(&path)?;
        for r in records.iter_mut() {
            let mut profile: Vec<(usize, f64)> =
                rows.iter().filter(|p| p.key == r.key()).map(|p| (p.l, p.entropy)).collect();
            profile.sort_by_key(|p| p.0);
            if !profile.is_empty() {
                r.entropy_profile = Some(profile.into_iter().map(|p| p.1).collect());
            }
        }
    }
    Ok(analyze(&records, &options)?)
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().map_or_else(|| PathBuf::from(name), |d| d.join(name))
}
