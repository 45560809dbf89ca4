//! End-to-end runs: build the initial state, evolve, and write artifacts.

use std::fs::{self, File};
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::time::Instant;

use manywalk::oracle::{oracle_run, OracleError, DEFAULT_MATRIX_LIMIT};
use manywalk::{
    observe, read_checkpoint, run, step, CheckpointError, GmpState, Lattice, ObservableSpec,
    Reduction, RunError, RunPlan, Sink, StateError, StepOptions,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::output::{self, CsvSink, CHECKPOINT, FINAL_STATE, HALT_KIND, META};

/// Largest per-step deviation tolerated by [`oracle_check`].
pub const ORACLE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot build initial state: {0}")]
    Initial(StateError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    /// Output failed mid-run; the last reached state was saved to `checkpoint`.
    #[error("output failed at step {step}: {source}; checkpoint kept at {}", checkpoint.display())]
    Output {
        step: u64,
        source: io::Error,
        checkpoint: PathBuf,
    },
    #[error("evolution failed: {0}")]
    Evolve(#[from] manywalk::EvolveError),
    #[error("cannot resume: {0}")]
    Resume(String),
    #[error("oracle: {0}")]
    Oracle(#[from] OracleError),
    #[error("thread pool: {0}")]
    Threads(String),
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> DriverError + '_ {
    move |source| DriverError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Settings that only affect how a run is executed, never its output.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunControl {
    /// Stop abruptly once this absolute step is reached, leaving the files as
    /// a killed process would.
    pub halt_after: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed { final_step: u64 },
    Halted { step: u64 },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Meta {
    pub config: ExperimentConfig,
    /// The lattice actually used, in lattice-file syntax.
    pub lattice_file: String,
    pub manywalk_version: String,
    pub checkpoint_format: u32,
    pub completed: bool,
    pub final_step: Option<u64>,
    pub wall_time_seconds: Option<f64>,
}

fn write_meta(dir: &Path, meta: &Meta) -> Result<(), DriverError> {
    let path = dir.join(META);
    let text = serde_json::to_string_pretty(meta).map_err(|e| DriverError::Io {
        path: path.clone(),
        source: io::Error::new(io::ErrorKind::InvalidData, e),
    })?;
    fs::write(&path, text + "\n").map_err(io_at(&path))
}

fn step_options(cfg: &ExperimentConfig) -> StepOptions {
    StepOptions {
        prune_eps: cfg.prune_eps,
        fermion_rule: cfg.fermion_rule,
        reduction: if cfg.deterministic {
            Reduction::Canonical
        } else {
            Reduction::Sharded
        },
    }
}

fn observable_spec(cfg: &ExperimentConfig, initial: &GmpState) -> ObservableSpec {
    let mut spec = ObservableSpec::for_state(initial);
    if let Some(t) = cfg.tracked() {
        spec.tracked = t;
    }
    if let Some(ns) = &cfg.counting_n {
        spec.counting_n = ns.clone();
    }
    spec.eps = cfg.prune_eps;
    spec
}

pub fn initial_state(cfg: &ExperimentConfig, lattice: &Lattice) -> Result<GmpState, DriverError> {
    cfg.validate_against(lattice)?;
    GmpState::make_initial(
        lattice,
        cfg.particles,
        cfg.statistics,
        cfg.initial_vertex,
        cfg.coin_amplitudes(),
    )
    .map_err(DriverError::Initial)
}

fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, DriverError>
where
    T: Send,
{
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| DriverError::Threads(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

struct Job<'a> {
    cfg: &'a ExperimentConfig,
    lattice: &'a Lattice,
    spec: ObservableSpec,
    start: GmpState,
    sink: CsvSink,
    meta: Meta,
    clock: Instant,
}

fn execute(job: Job<'_>, control: RunControl) -> Result<RunOutcome, DriverError> {
    let Job {
        cfg,
        lattice,
        spec,
        start,
        mut sink,
        mut meta,
        clock,
    } = job;
    let dir = cfg.output_dir.as_path();
    let remaining = cfg.steps.saturating_sub(start.step());
    let final_state = if remaining == 0 {
        // rows for the final step were truncated on reopen
        sink.record(&observe(&start, &spec)).map_err(io_at(dir))?;
        start
    } else {
        let plan = RunPlan {
            lattice,
            steps: remaining,
            observe_every: cfg.observe_every,
            observables: &spec,
            options: step_options(cfg),
        };
        let sink_ref = &mut sink;
        let result = with_threads(cfg.threads, move || run(start, &plan, sink_ref))?;
        match result {
            Ok(state) => state,
            Err(RunError::Sink { state, source })
                if source.kind() == HALT_KIND && control.halt_after.is_some() =>
            {
                return Ok(RunOutcome::Halted { step: state.step() });
            }
            Err(RunError::Sink { state, source }) => {
                let _ = sink.flush();
                let checkpoint = dir.join(CHECKPOINT);
                output::write_snapshot(dir, CHECKPOINT, lattice.side(), &state)
                    .map_err(io_at(&checkpoint))?;
                return Err(DriverError::Output {
                    step: state.step(),
                    source,
                    checkpoint,
                });
            }
            Err(RunError::Evolve(e)) => {
                let _ = sink.flush();
                return Err(e.into());
            }
            Err(e @ (RunError::NoSteps | RunError::NoObservationInterval)) => {
                return Err(DriverError::Resume(e.to_string()));
            }
        }
    };
    sink.flush().map_err(io_at(dir))?;
    let path = dir.join(FINAL_STATE);
    output::write_snapshot(dir, FINAL_STATE, lattice.side(), &final_state).map_err(io_at(&path))?;
    meta.completed = true;
    meta.final_step = Some(final_state.step());
    meta.wall_time_seconds = Some(clock.elapsed().as_secs_f64());
    write_meta(dir, &meta)?;
    Ok(RunOutcome::Completed {
        final_step: final_state.step(),
    })
}

/// Runs `cfg` from the initial state, writing every artifact into `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome, DriverError> {
    run_experiment_with(cfg, RunControl::default())
}

pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    control: RunControl,
) -> Result<RunOutcome, DriverError> {
    let clock = Instant::now();
    cfg.validate()?;
    let lattice = cfg.load_lattice()?;
    let start = initial_state(cfg, &lattice)?;
    let spec = observable_spec(cfg, &start);
    let dir = cfg.output_dir.as_path();
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    let meta = Meta {
        config: cfg.clone(),
        lattice_file: lattice.to_lattice_file(),
        manywalk_version: env!("CARGO_PKG_VERSION").to_string(),
        checkpoint_format: manywalk::checkpoint::FORMAT_VERSION,
        completed: false,
        final_step: None,
        wall_time_seconds: None,
    };
    write_meta(dir, &meta)?;
    let checkpoint = dir.join(CHECKPOINT);
    output::write_snapshot(dir, CHECKPOINT, lattice.side(), &start).map_err(io_at(&checkpoint))?;
    let sink = CsvSink::create(dir, lattice.side(), cfg.checkpoint_every, cfg.steps)
        .map_err(io_at(dir))?
        .halt_after(control.halt_after);
    execute(
        Job {
            cfg,
            lattice: &lattice,
            spec,
            start,
            sink,
            meta,
            clock,
        },
        control,
    )
}

/// Continues an interrupted run in `dir` from its last checkpoint.
pub fn resume(dir: &Path, threads: Option<usize>) -> Result<RunOutcome, DriverError> {
    resume_with(dir, threads, RunControl::default())
}

pub fn resume_with(
    dir: &Path,
    threads: Option<usize>,
    control: RunControl,
) -> Result<RunOutcome, DriverError> {
    let clock = Instant::now();
    let meta_path = dir.join(META);
    let text = fs::read_to_string(&meta_path).map_err(io_at(&meta_path))?;
    let mut meta: Meta = serde_json::from_str(&text)
        .map_err(|e| DriverError::Resume(format!("{}: {e}", meta_path.display())))?;
    let mut cfg = meta.config.clone();
    cfg.output_dir = dir.to_path_buf();
    if threads.is_some() {
        cfg.threads = threads;
    }
    cfg.validate()?;
    let lattice: Lattice = meta
        .lattice_file
        .parse()
        .map_err(|e| DriverError::Resume(format!("stored lattice is invalid: {e}")))?;
    let initial = initial_state(&cfg, &lattice)?;
    let spec = observable_spec(&cfg, &initial);

    let cp_path = dir.join(CHECKPOINT);
    let file = File::open(&cp_path).map_err(io_at(&cp_path))?;
    let (header, state) = read_checkpoint(BufReader::new(file)).map_err(|e| match e {
        CheckpointError::Io(source) => DriverError::Io {
            path: cp_path.clone(),
            source,
        },
        other => DriverError::Resume(format!("{}: {other}", cp_path.display())),
    })?;
    if header.side != lattice.side()
        || header.particles != cfg.particles
        || header.statistics != cfg.statistics
    {
        return Err(DriverError::Resume(
            "checkpoint does not match the stored configuration".into(),
        ));
    }
    if state.step() > cfg.steps {
        return Err(DriverError::Resume(format!(
            "checkpoint step {} is past the end",
            state.step()
        )));
    }
    let sink = CsvSink::reopen(
        dir,
        lattice.side(),
        cfg.checkpoint_every,
        cfg.steps,
        state.step(),
    )
    .map_err(io_at(dir))?
    .halt_after(control.halt_after);
    meta.completed = false;
    meta.final_step = None;
    meta.wall_time_seconds = None;
    write_meta(dir, &meta)?;
    execute(
        Job {
            cfg: &cfg,
            lattice: &lattice,
            spec,
            start: state,
            sink,
            meta,
            clock,
        },
        control,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    /// Largest amplitude deviation after each step, starting with step 0.
    pub deviations: Vec<f64>,
    pub tolerance: f64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.deviations.iter().all(|&d| d <= self.tolerance)
    }

    pub fn worst(&self) -> f64 {
        self.deviations.iter().copied().fold(0.0, f64::max)
    }
}

/// Runs the sparse engine and the dense oracle side by side.
pub fn oracle_check(
    cfg: &ExperimentConfig,
    max_dim: Option<usize>,
) -> Result<OracleReport, DriverError> {
    cfg.validate()?;
    let lattice = cfg.load_lattice()?;
    let start = initial_state(cfg, &lattice)?;
    let opts = step_options(cfg);
    let limit = max_dim.unwrap_or(DEFAULT_MATRIX_LIMIT);
    let (basis, history) = oracle_run(
        &start,
        &lattice,
        cfg.steps,
        cfg.fermion_rule,
        cfg.prune_eps,
        limit,
    )?;
    let mut deviations = Vec::with_capacity(history.len());
    let mut state = start;
    deviations.push(basis.deviation(&history[0], &state)?);
    for dense in &history[1..] {
        state = step(&state, &lattice, &opts)?.0;
        deviations.push(basis.deviation(dense, &state)?);
    }
    Ok(OracleReport {
        deviations,
        tolerance: ORACLE_TOLERANCE,
    })
}
