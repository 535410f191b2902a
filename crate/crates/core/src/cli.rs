//! Command-line front end: `run`, `verify`, `lifespan`, `picard`, `besov`.
//!
//! Every failure maps to a stable cause code and exit status; the cause is
//! printed to stderr as one JSON object.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::diagnostics::{
    self, check_energy_inequality, level_set_report, lp_gain_check, vacuum_bound_estimate,
    DiagnosticsError, DiagnosticsRecord, EnergyVerdict, LevelSetExponents, LevelSetReport,
    LpGainReport, VacuumBoundReport,
};
use crate::fields::{Grid, RealField};
use crate::lifespan::{
    default_p, epsilon_from_data, inputs_from_data, lifespan_lower_bound, LifespanConstants,
    LifespanError, LifespanReport,
};
use crate::lp_besov::{besov_report, BesovSpec, BlockNorm, BumpPair};
use crate::model::{to_effective, ModelError, PhysParams};
use crate::solver::{
    picard_solve, resume, run, Checkpoint, CheckpointAt, PicardConfig, PicardReport, SolverError,
    SolverState,
};
use crate::verify::{run_suite, Suite, SuiteReport};

pub const SUMMARY_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "korteweg", version, about = "Quantum / Korteweg Navier-Stokes toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a configuration and write CSV diagnostics and a JSON summary.
    Run {
        config: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run a property suite (`divk`, `heat`, `bony`, `besov`, `degiorgi`,
    /// `equivalence`, or `all`).
    Verify { suite: String },
    /// Lifespan lower bound for the initial state of a config or a checkpoint.
    Lifespan {
        #[command(flatten)]
        source: StateSource,
        #[command(flatten)]
        constants: ConstantArgs,
    },
    /// Picard iteration on `[0, T]` with contraction ratios.
    Picard {
        #[command(flatten)]
        source: StateSource,
        #[command(flatten)]
        constants: ConstantArgs,
        /// Horizon; defaults to the lifespan bound.
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, default_value_t = 50)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-14)]
        tol: f64,
        #[arg(long, default_value_t = 64)]
        n_time: usize,
    },
    /// Dyadic block report of `q = ln(ρ/ρ̄)` and `v` in `B^s_{p,r}`.
    Besov {
        #[command(flatten)]
        source: StateSource,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        /// Regularity for `q`; `v` uses `s − 1`. Defaults to `N/p`.
        #[arg(long)]
        s: Option<f64>,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct StateSource {
    /// Run config whose initial preset supplies the state.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint file supplying the state.
    #[arg(long)]
    pub state: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct ConstantArgs {
    #[arg(long = "c-big", default_value_t = 1.0)]
    pub c_big: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c1: f64,
    #[arg(long = "c-small", default_value_t = 1.0)]
    pub c_small: f64,
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    #[arg(long = "eps-prime", default_value_t = 0.25)]
    pub eps_prime: f64,
    /// Integrability; defaults to the midpoint of `(N/(1−ε'), 2N)`.
    #[arg(long)]
    pub p: Option<f64>,
}

impl ConstantArgs {
    fn constants(&self, mu: f64) -> LifespanConstants {
        LifespanConstants {
            c_big: self.c_big,
            c1: self.c1,
            c_small: self.c_small,
            mu,
            eps: self.eps,
            eps_prime: self.eps_prime,
        }
    }

    fn p(&self, dim: usize) -> f64 {
        self.p.unwrap_or_else(|| default_p(dim, self.eps_prime))
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Solver(SolverError),
    #[error("verification failed: {0}")]
    VerifyFailed(String),
    #[error(transparent)]
    Lifespan(#[from] LifespanError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid argument: {0}")]
    Argument(String),
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        CliError::Solver(e)
    }
}

impl CliError {
    /// Machine-readable cause.
    pub fn cause(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config_invalid",
            CliError::UnknownSuite(_) | CliError::Argument(_) => "usage",
            CliError::Io { .. } => "io_error",
            CliError::Solver(e) => match e {
                SolverError::VacuumBreach { .. } => "vacuum_breach",
                SolverError::NumericBlowup { .. } => "numeric_blowup",
                SolverError::NonContraction { .. } => "non_contraction",
                SolverError::Checkpoint(_) => "checkpoint_error",
                SolverError::Config(_) => "config_invalid",
                SolverError::Model(_) | SolverError::Field(_) => "model_error",
            },
            CliError::VerifyFailed(_) => "verify_failed",
            CliError::Lifespan(LifespanError::ScheduleStall { .. }) => "schedule_stall",
            CliError::Lifespan(_) => "norm_error",
            CliError::Diagnostics(_) => "diagnostics_error",
            CliError::Model(_) => "model_error",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.cause() {
            "usage" => 2,
            "config_invalid" => 3,
            "io_error" => 4,
            "vacuum_breach" => 10,
            "numeric_blowup" => 11,
            "non_contraction" => 12,
            "checkpoint_error" => 13,
            "verify_failed" => 14,
            "schedule_stall" => 15,
            "norm_error" => 16,
            "diagnostics_error" => 17,
            _ => 18,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "cause": self.cause(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    diagnostics::write_json(value, &mut w).map_err(|e| io_err(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct AbortInfo {
    pub cause: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub summary_version: u32,
    pub config: RunConfig,
    pub completed: bool,
    pub abort: Option<AbortInfo>,
    pub steps: usize,
    pub t_final: f64,
    pub initial: DiagnosticsRecord,
    pub last: DiagnosticsRecord,
    pub energy: EnergyVerdict,
    pub lp_gain: Vec<LpGainReport>,
    pub level_set: Option<LevelSetReport>,
    pub vacuum_bound: Option<VacuumBoundReport>,
    pub checkpoints: Vec<PathBuf>,
    pub csv: PathBuf,
}

/// Executes a validated config, writes the CSV series, checkpoints and the
/// JSON summary, and returns the summary. A vacuum breach or blowup still
/// writes the artifacts and then surfaces as an error.
pub fn cmd_run(cfg: &RunConfig, resume_from: Option<&Path>) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let mut solver_cfg = cfg.solver.clone();
    solver_cfg.keep_samples |= cfg.needs_samples();
    let mut observer = CheckpointAt::new(cfg.output.checkpoint_at.clone());
    let out = match resume_from {
        Some(path) => {
            let cp = Checkpoint::load(path)?;
            resume(&cp, &solver_cfg, &mut observer)?
        }
        None => {
            let initial = cfg.initial.build(&grid, &cfg.params)?;
            let state = SolverState::from_primitive(initial, solver_cfg.formulation, &cfg.params)?;
            run(state, &cfg.params, &solver_cfg, &mut observer)?
        }
    };

    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let csv = cfg.output.csv_path();
    let file = File::create(&csv).map_err(|e| io_err(&csv, e))?;
    diagnostics::write_csv(&out.records, BufWriter::new(file)).map_err(|e| io_err(&csv, e))?;
    let mut checkpoints = Vec::new();
    for cp in &observer.taken {
        let path = dir.join(format!("checkpoint_{}.json", cp.step));
        cp.save(&path)?;
        checkpoints.push(path);
    }

    let params = &cfg.params;
    let dim = grid.dim();
    let energy = check_energy_inequality(&out.records, cfg.diagnostics.energy_tol);
    let lp_gain = cfg
        .diagnostics
        .lp_gain
        .iter()
        .map(|&p| lp_gain_check(&out.records, p, params, dim))
        .collect::<Result<Vec<_>, _>>()?;
    let level_set = match &cfg.diagnostics.level_set {
        Some(ls) if !out.samples.is_empty() => {
            let ex = LevelSetExponents::half(ls.q, dim)?;
            Some(level_set_report(&out.samples, ls.alpha, ls.k, &ex)?)
        }
        _ => None,
    };
    let vacuum_bound = match &cfg.diagnostics.vacuum_bound {
        Some(vb) if !out.samples.is_empty() => Some(vacuum_bound_estimate(&out.samples, params, vb)?),
        _ => None,
    };
    let abort = out.abort.as_ref().map(|e| AbortInfo {
        cause: CliError::Solver(e.clone()).cause(),
        message: e.to_string(),
    });
    let summary = RunSummary {
        summary_version: SUMMARY_VERSION,
        config: cfg.clone(),
        completed: out.completed(),
        abort,
        steps: out.steps,
        t_final: out.t,
        initial: out.initial.clone(),
        last: out.records.last().cloned().unwrap_or_else(|| out.initial.clone()),
        energy,
        lp_gain,
        level_set,
        vacuum_bound,
        checkpoints,
        csv,
    };
    write_json_file(&cfg.output.json_path(), &summary)?;
    match out.abort {
        Some(e) => Err(e.into()),
        None => Ok(summary),
    }
}

pub fn cmd_verify(suite: &str) -> Result<Vec<SuiteReport>, CliError> {
    let suites: Vec<Suite> = if suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![Suite::parse(suite).ok_or_else(|| CliError::UnknownSuite(suite.into()))?]
    };
    Ok(suites.into_iter().map(run_suite).collect())
}

/// `(q, v)` and the parameters of a config's initial preset or a checkpoint.
pub fn load_state(source: &StateSource) -> Result<(RealField, Vec<RealField>, PhysParams), CliError> {
    let (state, params) = match (&source.config, &source.state) {
        (Some(path), _) => {
            let cfg = RunConfig::load(path)?;
            let grid = cfg.grid()?;
            let s = cfg.initial.build(&grid, &cfg.params)?;
            (SolverState::Primitive(s), cfg.params)
        }
        (None, Some(path)) => Checkpoint::load(path)?.restore()?,
        (None, None) => return Err(CliError::Argument("need --config or --state".into())),
    };
    let eff = match state {
        SolverState::Primitive(s) => to_effective(&s, &params)?,
        SolverState::Effective(e) => e,
    };
    Ok((eff.q, eff.v, params))
}

#[derive(Debug, Clone, Serialize)]
pub struct LifespanSummary {
    pub report: LifespanReport,
    pub sqrt_eps_max: f64,
}

pub fn lifespan_of(
    q: &RealField,
    v: &[RealField],
    params: &PhysParams,
    args: &ConstantArgs,
) -> Result<LifespanSummary, CliError> {
    let dim = q.grid().dim();
    let inputs = inputs_from_data(q, v, args.p(dim), args.constants(params.mu), &BumpPair::default())?;
    let report = lifespan_lower_bound(&inputs)?;
    Ok(LifespanSummary {
        sqrt_eps_max: epsilon_from_data(report.a0, args.c1)?,
        report,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BesovSummary {
    pub spec_q: BesovSpec,
    pub spec_v: BesovSpec,
    pub norm_q: f64,
    pub norm_v: f64,
    pub blocks_q: Vec<BlockNorm>,
    pub blocks_v: Vec<BlockNorm>,
}

pub fn besov_of(q: &RealField, v: &[RealField], p: f64, r: f64, s: Option<f64>) -> Result<BesovSummary, CliError> {
    let grid: &Grid = q.grid();
    let s = s.unwrap_or(grid.dim() as f64 / p);
    let spec_q = BesovSpec::new(s, p, r).map_err(|e| CliError::Argument(e.to_string()))?;
    let spec_v = spec_q.with_s(s - 1.0);
    let bumps = BumpPair::default();
    let blocks_q = besov_report(std::slice::from_ref(q), &spec_q, &bumps);
    let blocks_v = besov_report(v, &spec_v, &bumps);
    let sum = |b: &[BlockNorm]| crate::lp_besov::lr_sum(b.iter().map(|x| x.weighted), r);
    Ok(BesovSummary {
        norm_q: sum(&blocks_q),
        norm_v: sum(&blocks_v),
        spec_q,
        spec_v,
        blocks_q,
        blocks_v,
    })
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    diagnostics::write_json(value, &mut lock).map_err(|e| io_err(Path::new("<stdout>"), e))?;
    writeln!(lock).map_err(|e| io_err(Path::new("<stdout>"), e))
}

/// Runs one command, printing its JSON result to stdout.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            out_dir,
            resume,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(dir) = out_dir {
                cfg.output.dir = dir;
            }
            let summary = cmd_run(&cfg, resume.as_deref())?;
            print_json(&serde_json::json!({
                "completed": summary.completed,
                "steps": summary.steps,
                "t_final": summary.t_final,
                "energy_holds": summary.energy.holds(),
                "csv": summary.csv,
                "summary": cfg.output.json_path(),
            }))
        }
        Command::Verify { suite } => {
            let reports = cmd_verify(&suite)?;
            print_json(&reports)?;
            let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.suite.name()).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::VerifyFailed(failed.join(", ")))
            }
        }
        Command::Lifespan { source, constants } => {
            let (q, v, params) = load_state(&source)?;
            print_json(&lifespan_of(&q, &v, &params, &constants)?)
        }
        Command::Picard {
            source,
            constants,
            t,
            max_iters,
            tol,
            n_time,
        } => {
            let (q, v, params) = load_state(&source)?;
            let dim = q.grid().dim();
            let t = match t {
                Some(t) => t,
                None => lifespan_of(&q, &v, &params, &constants)?.report.t,
            };
            let pcfg = PicardConfig {
                max_iters,
                tol,
                p: constants.p(dim),
                n_time,
                dealias: true,
            };
            let report: PicardReport = picard_solve(&q, &v, &params, t, &pcfg)?;
            print_json(&report)?;
            report.into_result().map(|_| ()).map_err(CliError::from)
        }
        Command::Besov { source, p, r, s } => {
            let (q, v, _) = load_state(&source)?;
            print_json(&besov_of(&q, &v, p, r, s)?)
        }
    }
}

/// Parses arguments, runs, and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
