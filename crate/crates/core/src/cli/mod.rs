//! Command-line front end: argument parsing, configuration layering, run
//! manifests and exit codes.
//!
//! Precedence for every setting is command-line flag, then the JSON file
//! given by `--config`, then the built-in default. `CBF_LP_SEED` replaces the
//! built-in default seed.

mod manifest;
mod plot;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use manifest::RunManifest;
pub use plot::{plot_environment_svg, plot_sweep_svg};

use crate::geometry::{Environment, GeometryError};
use crate::sim::{run_patrol, trace_metrics, ErrorMode, ErrorModel, Normalization, PatrolConfig, SimError, Trace};
use crate::synthesis::{
    at_cell, bisect_smax, parse_sweep_csv, sweep_csv, sweep_cv, synthesize_all, CellGainsDocument, GainsDocument,
    SynthesisConfig, SynthesisError,
};
use crate::verify::{check_gains_with, VerifyError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_VERIFICATION: i32 = 3;

pub const SEED_ENV: &str = "CBF_LP_SEED";
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_TOL: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(
    name = "cbf-lp",
    version,
    about = "Robust output-feedback synthesis, verification and simulation"
)]
pub struct Cli {
    /// JSON file with default settings (flags take precedence).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Skip writing the run manifest.
    #[arg(long, global = true)]
    pub no_manifest: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize gains for every cell.
    Synth {
        #[command(flatten)]
        common: SynthArgs,
        #[arg(short, long, default_value = "gains.json")]
        out: PathBuf,
    },
    /// Largest uniform scale box one cell tolerates.
    Bisect {
        #[command(flatten)]
        common: SynthArgs,
        #[arg(long, default_value_t = 0)]
        cell: usize,
        /// Bisection tolerance on alpha [default: 1e-3].
        #[arg(long)]
        tol: Option<f64>,
        #[arg(short, long, default_value = "bisect.json")]
        out: PathBuf,
    },
    /// Bisection at each decay rate of a grid.
    Sweep {
        #[command(flatten)]
        common: SynthArgs,
        #[arg(long, default_value_t = 0)]
        cell: usize,
        /// Comma-separated c_v values.
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.5,1,2")]
        grid: Vec<f64>,
        /// Bisection tolerance on alpha [default: 1e-3].
        #[arg(long)]
        tol: Option<f64>,
        #[arg(short, long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Certify a gains document against the environment.
    Verify {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        gains: PathBuf,
        #[arg(short, long, default_value = "report.json")]
        out: PathBuf,
    },
    /// Closed-loop patrol simulation.
    Simulate {
        #[command(flatten)]
        args: SimArgs,
        #[arg(short, long, default_value = "trace.csv")]
        out: PathBuf,
    },
    /// SVG of the environment with traces, or of a sweep curve.
    Plot {
        #[arg(long, required_unless_present = "sweep")]
        env: Option<PathBuf>,
        #[arg(long)]
        trace: Vec<PathBuf>,
        #[arg(long, conflicts_with_all = ["env", "trace"])]
        sweep: Option<PathBuf>,
        #[arg(short, long, default_value = "figure.svg")]
        out: PathBuf,
    },
    /// Re-run the command recorded in a manifest.
    Replay { manifest: PathBuf },
}

#[derive(Debug, Args, Clone, Default)]
pub struct SynthArgs {
    #[arg(long)]
    pub env: PathBuf,
    /// CLF decay rate [default: 0.5].
    #[arg(long)]
    pub cv: Option<f64>,
    /// CBF decay rate [default: 1].
    #[arg(long)]
    pub ch: Option<f64>,
    /// Lower scale bound for every landmark [default: 1/1.5].
    #[arg(long)]
    pub smin: Option<f64>,
    /// Upper scale bound for every landmark [default: 1.5].
    #[arg(long)]
    pub smax: Option<f64>,
    /// Bound on |k_i| [default: 10].
    #[arg(long)]
    pub k_bound: Option<f64>,
    /// Bound on |K_ij| [default: 1].
    #[arg(long)]
    pub gain_bound: Option<f64>,
    /// CLF slack weight [default: 1].
    #[arg(long)]
    pub wv: Option<f64>,
    /// Also enforce the input set.
    #[arg(long)]
    pub enforce_input_set: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    Exact,
    Constant,
    PerStepAll,
    PerStepSubset,
}

#[derive(Debug, Args, Clone)]
pub struct SimArgs {
    #[arg(long)]
    pub env: PathBuf,
    #[arg(long)]
    pub gains: PathBuf,
    /// Start point, comma-separated [default: centre of cell 0].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Measurement error model [default: exact].
    #[arg(long, value_enum)]
    pub errors: Option<ErrorKind>,
    /// Scale used by the constant model [default: 1].
    #[arg(long)]
    pub scale: Option<f64>,
    /// Landmarks perturbed per step by the subset model [default: 2].
    #[arg(long)]
    pub count: Option<usize>,
    /// Seed for the random models [default: 0, or CBF_LP_SEED].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Lower scale bound for random draws [default: 1/1.5].
    #[arg(long)]
    pub smin: Option<f64>,
    /// Upper scale bound for random draws [default: 1.5].
    #[arg(long)]
    pub smax: Option<f64>,
    /// Time step [default: 0.01].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Time limit [default: 600].
    #[arg(long)]
    pub max_time: Option<f64>,
    /// Laps to complete [default: 2].
    #[arg(long)]
    pub laps: Option<usize>,
    /// Commanded speed when normalizing [default: 1].
    #[arg(long)]
    pub v_ref: Option<f64>,
    /// Apply the raw control without speed normalization.
    #[arg(long)]
    pub no_normalize: bool,
    /// Reference trace for deviation metrics.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

/// Settings file; every field optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub c_v: Option<f64>,
    pub c_h: Option<f64>,
    pub s_min: Option<f64>,
    pub s_max: Option<f64>,
    pub k_bound: Option<f64>,
    pub gain_bound: Option<f64>,
    pub w_v: Option<f64>,
    pub w_h: Option<Vec<f64>>,
    pub enforce_input_set: Option<bool>,
    pub tol: Option<f64>,
    pub errors: Option<ErrorKind>,
    pub scale: Option<f64>,
    pub count: Option<usize>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub max_time: Option<f64>,
    pub laps: Option<usize>,
    pub v_ref: Option<f64>,
    pub normalize: Option<bool>,
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
    pub details: serde_json::Value,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            kind: "validation",
            message: message.into(),
            details: serde_json::Value::Null,
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self::validation(format!("{}: {e}", path.display()))
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<SynthesisError> for CliError {
    fn from(e: SynthesisError) -> Self {
        let details = match &e {
            SynthesisError::Infeasible { cell, families } => json!({ "cell": cell, "families": families }),
            SynthesisError::Cells(cells) => json!(cells
                .iter()
                .map(|(c, f)| json!({ "cell": c, "families": f }))
                .collect::<Vec<_>>()),
            _ => serde_json::Value::Null,
        };
        let (code, kind) = match e {
            SynthesisError::Infeasible { .. } | SynthesisError::Cells(_) | SynthesisError::NominalInfeasible => {
                (EXIT_INFEASIBLE, "infeasible")
            }
            _ => (EXIT_VALIDATION, "validation"),
        };
        Self {
            code,
            kind,
            message: e.to_string(),
            details,
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::SafetyViolation {
                row,
                cell,
                value,
                t,
                ref x,
                ..
            } => Self {
                code: EXIT_VERIFICATION,
                kind: "safety",
                message: e.to_string(),
                details: json!({ "row": row, "cell": cell, "h": value, "t": t, "x": x }),
            },
            SimError::LeftCells { t, ref x, .. } => Self {
                code: EXIT_VERIFICATION,
                kind: "safety",
                message: e.to_string(),
                details: json!({ "t": t, "x": x }),
            },
            other => Self::validation(other.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| CliError::validation(format!("{}: {e}", p.display()))),
    }
}

fn default_seed() -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::validation(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn synthesis_config(args: &SynthArgs, file: &ConfigFile, landmarks: usize) -> SynthesisConfig {
    let mut cfg = SynthesisConfig::new(landmarks);
    cfg.c_v = args.cv.or(file.c_v).unwrap_or(cfg.c_v);
    cfg.c_h = args.ch.or(file.c_h).unwrap_or(cfg.c_h);
    let lo = args
        .smin
        .or(file.s_min)
        .unwrap_or(cfg.s_min.first().copied().unwrap_or(1.0 / 1.5));
    let hi = args
        .smax
        .or(file.s_max)
        .unwrap_or(cfg.s_max.first().copied().unwrap_or(1.5));
    cfg = cfg.with_uniform_bounds(lo, hi);
    cfg.k_bound = args.k_bound.or(file.k_bound).unwrap_or(cfg.k_bound);
    cfg.gain_bound = args.gain_bound.or(file.gain_bound).unwrap_or(cfg.gain_bound);
    cfg.w_v = args.wv.or(file.w_v).unwrap_or(cfg.w_v);
    cfg.w_h = file.w_h.clone();
    cfg.enforce_input_set = args.enforce_input_set || file.enforce_input_set.unwrap_or(false);
    cfg
}

/// Outputs of one command, relative to nothing: paths as given.
struct Outcome {
    code: i32,
    outputs: Vec<PathBuf>,
    inputs: BTreeMap<String, PathBuf>,
    settings: serde_json::Value,
    seed: Option<u64>,
}

impl Outcome {
    fn ok(outputs: Vec<PathBuf>, inputs: BTreeMap<String, PathBuf>, settings: serde_json::Value) -> Self {
        Self {
            code: EXIT_OK,
            outputs,
            inputs,
            settings,
            seed: None,
        }
    }
}

fn inputs(pairs: &[(&str, &Path)]) -> BTreeMap<String, PathBuf> {
    pairs.iter().map(|(k, p)| (k.to_string(), p.to_path_buf())).collect()
}

fn run_synth(args: &SynthArgs, file: &ConfigFile, out: &Path) -> Result<Outcome, CliError> {
    let env = Environment::from_file(&args.env)?;
    let cfg = synthesis_config(args, file, env.num_landmarks());
    let results = synthesize_all(&env, &cfg)?;
    let doc = GainsDocument::from_results(&results, |i| env.cell_landmark_ids(i), &cfg);
    write(out, &doc.to_json())?;
    log::info!("wrote {} gain blocks to {}", doc.cells.len(), out.display());
    Ok(Outcome::ok(vec![out.into()], inputs(&[("env", &args.env)]), json!(cfg)))
}

#[derive(Serialize)]
struct BisectDocument {
    cell: usize,
    alpha_star: f64,
    capped: bool,
    tolerance: f64,
    gains: CellGainsDocument,
}

fn cell_index(env: &Environment, cell: usize) -> Result<(), CliError> {
    if cell >= env.cells().len() {
        return Err(CliError::validation(format!(
            "cell {cell} out of range ({} cells)",
            env.cells().len()
        )));
    }
    Ok(())
}

fn run_bisect(
    args: &SynthArgs,
    file: &ConfigFile,
    cell: usize,
    tol: Option<f64>,
    out: &Path,
) -> Result<Outcome, CliError> {
    let env = Environment::from_file(&args.env)?;
    cell_index(&env, cell)?;
    let cfg = synthesis_config(args, file, env.num_landmarks());
    let tol = tol.or(file.tol).unwrap_or(DEFAULT_TOL);
    let o = bisect_smax(env.cell(cell), &env, &cfg, tol).map_err(|e| at_cell(e, cell))?;
    let used = cfg.with_uniform_bounds(1.0, o.alpha_star);
    let doc = BisectDocument {
        cell,
        alpha_star: o.alpha_star,
        capped: o.capped,
        tolerance: tol,
        gains: CellGainsDocument::new(cell, env.cell_landmark_ids(cell), &o.gains, &used, o.result.objective),
    };
    write(out, &to_json(&doc))?;
    Ok(Outcome::ok(
        vec![out.into()],
        inputs(&[("env", &args.env)]),
        json!({ "synthesis": cfg, "cell": cell, "tol": tol }),
    ))
}

fn run_sweep(
    args: &SynthArgs,
    file: &ConfigFile,
    cell: usize,
    grid: &[f64],
    tol: Option<f64>,
    out: &Path,
) -> Result<Outcome, CliError> {
    let env = Environment::from_file(&args.env)?;
    cell_index(&env, cell)?;
    if grid.is_empty() {
        return Err(CliError::validation("empty c_v grid"));
    }
    let cfg = synthesis_config(args, file, env.num_landmarks());
    let tol = tol.or(file.tol).unwrap_or(DEFAULT_TOL);
    let rows = sweep_cv(env.cell(cell), &env, &cfg, grid, tol);
    write(out, &sweep_csv(&rows))?;
    Ok(Outcome::ok(
        vec![out.into()],
        inputs(&[("env", &args.env)]),
        json!({ "synthesis": cfg, "cell": cell, "grid": grid, "tol": tol }),
    ))
}

fn run_verify(env_path: &Path, gains_path: &Path, out: &Path) -> Result<Outcome, CliError> {
    let env = Environment::from_file(env_path)?;
    let doc = GainsDocument::from_json(&read(gains_path)?)?;
    let gains = doc.gains_map()?;
    let configs: BTreeMap<usize, SynthesisConfig> = doc.cells.iter().map(|c| (c.cell, c.config.clone())).collect();
    for (i, c) in &doc.cells.iter().map(|c| (c.cell, c)).collect::<BTreeMap<_, _>>() {
        if *i < env.cells().len() && c.landmarks != env.cell_landmark_ids(*i) {
            return Err(CliError::validation(format!(
                "cell {i}: gains refer to different landmarks"
            )));
        }
    }
    if let Some(missing) = (0..env.cells().len()).find(|i| !configs.contains_key(i)) {
        return Err(VerifyError::MissingGains(missing).into());
    }
    let report = check_gains_with(&env, &gains, |i| &configs[&i])?;
    write(out, &to_json(&report))?;
    let mut o = Outcome::ok(
        vec![out.into()],
        inputs(&[("env", env_path), ("gains", gains_path)]),
        serde_json::Value::Null,
    );
    if !report.pass {
        eprintln!(
            "{}",
            json!({ "error": "verification", "message": "gains failed certification", "failing_cells": report.failing })
        );
        o.code = EXIT_VERIFICATION;
    }
    Ok(o)
}

/// Resolved simulation settings.
#[derive(Debug, Clone, Serialize)]
struct SimSettings {
    x0: Vec<f64>,
    errors: ErrorModel,
    patrol: PatrolConfig,
}

fn sim_settings(args: &SimArgs, file: &ConfigFile, env: &Environment, seed: u64) -> Result<SimSettings, CliError> {
    let n = env.num_landmarks();
    let lo = args.smin.or(file.s_min).unwrap_or(1.0 / 1.5);
    let hi = args.smax.or(file.s_max).unwrap_or(1.5);
    let mode = match args.errors.or(file.errors).unwrap_or(ErrorKind::Exact) {
        ErrorKind::Exact => ErrorMode::Exact,
        ErrorKind::Constant => ErrorMode::Constant {
            s: vec![args.scale.or(file.scale).unwrap_or(1.0); n],
        },
        ErrorKind::PerStepAll => ErrorMode::PerStepAll { seed },
        ErrorKind::PerStepSubset => ErrorMode::PerStepSubset {
            count: args.count.or(file.count).unwrap_or(2),
            seed,
        },
    };
    let (lo, hi) = match &mode {
        // The constant scale may sit at either bound; widen to include it.
        ErrorMode::Constant { s } => (lo.min(s[0]), hi.max(s[0])),
        ErrorMode::Exact => (lo.min(1.0), hi.max(1.0)),
        _ => (lo, hi),
    };
    let defaults = PatrolConfig::default();
    let normalize = !args.no_normalize && file.normalize.unwrap_or(true);
    let patrol = PatrolConfig {
        dt: args.dt.or(file.dt).unwrap_or(defaults.dt),
        max_time: args.max_time.or(file.max_time).unwrap_or(defaults.max_time),
        laps: args.laps.or(file.laps).unwrap_or(defaults.laps),
        normalize: if normalize {
            Normalization::Speed {
                v_ref: args.v_ref.or(file.v_ref).unwrap_or(1.0),
            }
        } else {
            Normalization::Off
        },
        ..defaults
    };
    let x0 = match args.x0.clone().or_else(|| file.x0.clone()) {
        Some(x) => x,
        None => {
            let c = env
                .cells()
                .first()
                .ok_or_else(|| CliError::validation("environment has no cells"))?;
            match c.polytope().chebyshev_ball()? {
                Some((centre, _)) => centre.iter().copied().collect(),
                None => return Err(CliError::validation("cell 0 has no interior")),
            }
        }
    };
    Ok(SimSettings {
        x0,
        errors: ErrorModel::new(mode, n, lo, hi),
        patrol,
    })
}

fn run_simulate(args: &SimArgs, file: &ConfigFile, out: &Path) -> Result<Outcome, CliError> {
    let env = Environment::from_file(&args.env)?;
    let doc = GainsDocument::from_json(&read(&args.gains)?)?;
    let gains = doc.gains_map()?;
    let seed = match args.seed.or(file.seed) {
        Some(s) => s,
        None => default_seed()?,
    };
    let settings = sim_settings(args, file, &env, seed)?;
    let reference = match &args.reference {
        Some(p) => Some(Trace::from_csv(&read(p)?)?),
        None => None,
    };
    let x0 = DVector::from_vec(settings.x0.clone());
    let result = run_patrol(&env, &gains, &settings.errors, &x0, &settings.patrol);
    let metrics_path = out.with_extension("metrics.json");
    let mut ins = inputs(&[("env", &args.env), ("gains", &args.gains)]);
    if let Some(r) = &args.reference {
        ins.insert("reference".into(), r.clone());
    }
    match result {
        Ok(trace) => {
            write(out, &trace.to_csv())?;
            let metrics = trace_metrics(&trace, reference.as_ref())?;
            write(&metrics_path, &to_json(&metrics))?;
            let mut o = Outcome::ok(vec![out.into(), metrics_path], ins, json!(settings));
            o.seed = Some(seed);
            Ok(o)
        }
        Err(e) => {
            if let SimError::SafetyViolation { trace, .. } | SimError::LeftCells { trace, .. } = &e {
                write(out, &trace.to_csv())?;
            }
            Err(e.into())
        }
    }
}

fn run_plot(env: Option<&Path>, traces: &[PathBuf], sweep: Option<&Path>, out: &Path) -> Result<Outcome, CliError> {
    let mut ins = BTreeMap::new();
    let svg = if let Some(p) = sweep {
        let rows = parse_sweep_csv(&read(p)?)?;
        if rows.is_empty() {
            return Err(CliError::validation("sweep table is empty"));
        }
        ins.insert("sweep".to_string(), p.to_path_buf());
        plot_sweep_svg(&rows)
    } else {
        let env_path = env.ok_or_else(|| CliError::validation("--env is required"))?;
        let env = Environment::from_file(env_path)?;
        if env.state_dim() != 2 {
            return Err(CliError::validation("plotting needs a planar environment"));
        }
        ins.insert("env".to_string(), env_path.to_path_buf());
        let mut loaded = Vec::new();
        for (i, t) in traces.iter().enumerate() {
            loaded.push(Trace::from_csv(&read(t)?)?);
            ins.insert(format!("trace{i}"), t.clone());
        }
        plot_environment_svg(&env, &loaded)
    };
    write(out, &svg)?;
    Ok(Outcome::ok(vec![out.into()], ins, serde_json::Value::Null))
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synth { .. } => "synth",
        Command::Bisect { .. } => "bisect",
        Command::Sweep { .. } => "sweep",
        Command::Verify { .. } => "verify",
        Command::Simulate { .. } => "simulate",
        Command::Plot { .. } => "plot",
        Command::Replay { .. } => "replay",
    }
}

fn primary_output(c: &Command) -> Option<&Path> {
    match c {
        Command::Synth { out, .. }
        | Command::Bisect { out, .. }
        | Command::Sweep { out, .. }
        | Command::Verify { out, .. }
        | Command::Simulate { out, .. }
        | Command::Plot { out, .. } => Some(out),
        Command::Replay { .. } => None,
    }
}

fn dispatch(cli: &Cli, argv: &[String]) -> Result<i32, CliError> {
    if let Command::Replay { manifest } = &cli.command {
        let m = RunManifest::load(manifest).map_err(CliError::validation)?;
        let mut args = vec!["cbf-lp".to_string()];
        args.extend(m.args.iter().cloned());
        let replayed = Cli::try_parse_from(&args).map_err(|e| CliError::validation(e.to_string()))?;
        if matches!(replayed.command, Command::Replay { .. }) {
            return Err(CliError::validation("a manifest cannot replay another replay"));
        }
        return dispatch(&replayed, &m.args);
    }
    let file = load_config(cli.config.as_deref())?;
    let outcome = match &cli.command {
        Command::Synth { common, out } => run_synth(common, &file, out),
        Command::Bisect { common, cell, tol, out } => run_bisect(common, &file, *cell, *tol, out),
        Command::Sweep {
            common,
            cell,
            grid,
            tol,
            out,
        } => run_sweep(common, &file, *cell, grid, *tol, out),
        Command::Verify { env, gains, out } => run_verify(env, gains, out),
        Command::Simulate { args, out } => run_simulate(args, &file, out),
        Command::Plot { env, trace, sweep, out } => run_plot(env.as_deref(), trace, sweep.as_deref(), out),
        Command::Replay { .. } => unreachable!(),
    }?;
    if !cli.no_manifest {
        if let Some(primary) = primary_output(&cli.command) {
            let mut ins = outcome.inputs.clone();
            if let Some(c) = &cli.config {
                ins.insert("config".into(), c.clone());
            }
            let m = RunManifest::new(
                command_name(&cli.command),
                argv.to_vec(),
                ins,
                outcome.settings.clone(),
                outcome.seed,
                outcome.outputs.clone(),
            );
            m.write_next_to(primary).map_err(|e| CliError::io(primary, e))?;
        }
    }
    Ok(outcome.code)
}

/// Parses `argv` (without the program name) and runs the command. Returns
/// the process exit status; diagnostics go to stderr as JSON lines.
pub fn run_command<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let mut full = vec!["cbf-lp".to_string()];
    full.extend(argv.iter().cloned());
    let cli = match Cli::try_parse_from(&full) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli, &argv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": e.kind, "message": e.message, "details": e.details })
            );
            e.code
        }
    }
}
