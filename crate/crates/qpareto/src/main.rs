use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qpareto::commands::{self, Run, EXIT_ERROR};
use qpareto::config::{ExperimentConfig, OutputFormat};
use qpareto_core::make_gate;

#[derive(Parser)]
#[command(
    name = "qpareto",
    version,
    about = "Time-optimal gate control: D-MORPH, Pareto front tracking, noise and phase studies"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed; repeat for several. Replaces the configured list.
    #[arg(long = "seed", global = true)]
    seeds: Vec<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Subcommand)]
enum Command {
    /// Run D-MORPH once per seed at a fixed control time.
    Optimize {
        /// Control time; overrides `optimize.time`.
        #[arg(long)]
        time: Option<f64>,
        /// Accepted-step budget; overrides `optimizer.max_steps`.
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Track the Pareto front downward in T and estimate T*.
    Pft {
        /// Starting time; overrides `pft.t0`.
        #[arg(long)]
        t0: Option<f64>,
    },
    /// T* over several couplings and the log-log slope.
    Sweep,
    /// Monte-Carlo additive-white-noise error against the closed form.
    Noise {
        /// Trials per point; overrides `noise.trials`.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Phase-independent searches classified by global phase.
    Phases {
        #[arg(long)]
        time: Option<f64>,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Print a target gate matrix.
    Gates {
        /// Gate name; overrides `gate.name`.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        qubits: Option<usize>,
        #[arg(long)]
        phase_index: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
}

fn apply_overrides(cfg: &mut ExperimentConfig, cli: &Cli) {
    let g = &cli.global;
    if !g.seeds.is_empty() {
        cfg.seeds = g.seeds.clone();
    }
    if g.out.is_some() {
        cfg.out = g.out.clone();
    }
    if g.jobs.is_some() {
        cfg.jobs = g.jobs;
    }
    if g.format.is_some() {
        cfg.format = g.format;
    }
    match &cli.command {
        Command::Optimize { time, max_steps } => {
            if time.is_some() {
                cfg.optimize.time = *time;
            }
            if max_steps.is_some() {
                cfg.optimizer.max_steps = *max_steps;
            }
        }
        Command::Pft { t0 } => {
            if t0.is_some() {
                cfg.pft.t0 = *t0;
            }
        }
        Command::Noise { trials } => {
            if trials.is_some() {
                cfg.noise.trials = *trials;
            }
        }
        Command::Phases { time, runs } => {
            if time.is_some() {
                cfg.phases.time = *time;
            }
            if runs.is_some() {
                cfg.phases.runs = *runs;
            }
            cfg.objective = qpareto::config::ObjectiveName::PhaseIndependent;
        }
        Command::Gates {
            name,
            qubits,
            phase_index,
            alpha,
        } => {
            if let Some(n) = name {
                cfg.gate.name = n.clone();
            }
            if phase_index.is_some() {
                cfg.gate.phase_index = phase_index.unwrap();
            }
            if alpha.is_some() {
                cfg.gate.alpha = *alpha;
            }
            if qubits.is_some() {
                cfg.system.n = *qubits;
                cfg.system.omega = None;
            }
        }
        Command::Sweep => {}
    }
}

fn run(cli: &Cli) -> anyhow::Result<i32> {
    let mut cfg = commands::load_config(cli.global.config.as_deref())?;
    apply_overrides(&mut cfg, cli);
    if let Command::Gates { .. } = cli.command {
        let n = cfg.system.build()?.qubits();
        let gate = make_gate(cfg.gate.kind()?, n, cfg.gate.phase_index)?;
        print!("{}", commands::format_gate(&gate));
        return Ok(0);
    }
    let run = Run::new(cfg)?;
    std::fs::create_dir_all(&run.out)?;
    match cli.command {
        Command::Optimize { .. } => commands::cmd_optimize(&run),
        Command::Pft { .. } => commands::cmd_pft(&run),
        Command::Sweep => commands::cmd_sweep(&run),
        Command::Noise { .. } => commands::cmd_noise(&run),
        Command::Phases { .. } => commands::cmd_phases(&run),
        Command::Gates { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
