use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use manywalk_cli::config::{resolve_lattice, ConfigBuilder};
use manywalk_cli::{oracle_check, resume, run_experiment, ExperimentConfig, RunOutcome};

#[derive(Parser)]
#[command(
    name = "manywalk",
    version,
    about = "Many-particle coined quantum walks on square grid subgraphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV time series plus checkpoints.
    Run(ExperimentArgs),
    /// Compare the sparse engine against the dense reference, step by step.
    OracleCheck {
        #[command(flatten)]
        args: ExperimentArgs,
        /// Largest dense dimension (4 x configurations) to allow.
        #[arg(long)]
        max_dim: Option<usize>,
    },
    /// Lattice file utilities.
    Lattice {
        #[command(subcommand)]
        command: LatticeCommand,
    },
    /// Continue an interrupted run from its output directory.
    Resume {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Subcommand)]
enum LatticeCommand {
    /// Parse a lattice file (or builtin name) and print a summary.
    Validate {
        lattice: String,
        /// Print the normalised lattice file.
        #[arg(long)]
        print: bool,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// key=value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// gridM, lattice2, or a lattice file path.
    #[arg(long)]
    lattice: Option<String>,
    #[arg(long)]
    particles: Option<usize>,
    /// boson or fermion.
    #[arg(long)]
    statistics: Option<String>,
    #[arg(long)]
    initial_vertex: Option<usize>,
    /// Four re,im pairs separated by semicolons.
    #[arg(long)]
    coin_amps: Option<String>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    observe_every: Option<u64>,
    #[arg(long)]
    prune_eps: Option<f64>,
    /// equal or geq.
    #[arg(long)]
    fermion_rule: Option<String>,
    #[arg(long)]
    tracked_configuration: Option<String>,
    #[arg(long)]
    counting_n: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Force canonical-order reduction for bit-reproducible output.
    #[arg(long)]
    deterministic: bool,
}

impl ExperimentArgs {
    fn into_config(self) -> Result<ExperimentConfig> {
        let mut builder = ConfigBuilder::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            builder
                .apply_text(&text)
                .with_context(|| format!("in {}", path.display()))?;
        }
        let overrides: [(&str, Option<String>); 14] = [
            ("lattice", self.lattice),
            ("particles", self.particles.map(|v| v.to_string())),
            ("statistics", self.statistics),
            ("initial_vertex", self.initial_vertex.map(|v| v.to_string())),
            ("coin_amps", self.coin_amps),
            ("steps", self.steps.map(|v| v.to_string())),
            ("observe_every", self.observe_every.map(|v| v.to_string())),
            ("prune_eps", self.prune_eps.map(|v| v.to_string())),
            ("fermion_rule", self.fermion_rule),
            ("tracked_configuration", self.tracked_configuration),
            ("counting_n", self.counting_n),
            ("output_dir", self.out.map(|p| p.display().to_string())),
            (
                "checkpoint_every",
                self.checkpoint_every.map(|v| v.to_string()),
            ),
            ("threads", self.threads.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                builder.set(key, &v)?;
            }
        }
        if self.deterministic {
            builder.set("deterministic", "true")?;
        }
        Ok(builder.build()?)
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run(args) => {
            let cfg = args.into_config()?;
            report_outcome(run_experiment(&cfg)?, &cfg.output_dir)
        }
        Command::Resume { out, threads } => report_outcome(resume(&out, threads)?, &out),
        Command::OracleCheck { args, max_dim } => {
            let cfg = args.into_config()?;
            let report = oracle_check(&cfg, max_dim)?;
            for (t, d) in report.deviations.iter().enumerate() {
                println!("step {t:>4}  max deviation {d:.3e}");
            }
            if report.passed() {
                println!(
                    "PASS: worst deviation {:.3e} <= {:.0e}",
                    report.worst(),
                    report.tolerance
                );
                Ok(ExitCode::SUCCESS)
            } else {
                println!(
                    "FAIL: worst deviation {:.3e} > {:.0e}",
                    report.worst(),
                    report.tolerance
                );
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Lattice {
            command: LatticeCommand::Validate { lattice, print },
        } => {
            let l = resolve_lattice(&lattice)?;
            let isolated = (1..=l.vertex_count()).filter(|&v| l.degree(v) == 0).count();
            println!(
                "ok: {}x{} grid subgraph, {} edges, {} isolated vertices",
                l.side(),
                l.side(),
                l.edges().len(),
                isolated
            );
            if print {
                print!("{}", l.to_lattice_file());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn report_outcome(outcome: RunOutcome, dir: &std::path::Path) -> Result<ExitCode> {
    match outcome {
        RunOutcome::Completed { final_step } => {
            println!(
                "completed {final_step} steps; artifacts in {}",
                dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        RunOutcome::Halted { step } => bail!("run halted at step {step}"),
    }
}
