//! Experiment runners behind the subcommands.
//!
//! Independent jobs (seeds, couplings, trials) run on a rayon pool; results
//! are collected in job order so output files do not depend on scheduling.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use qpareto_core::dmorph::dmorph_run;
use qpareto_core::dynamics::init_fields;
use qpareto_core::noise::{mean_and_stderr, predicted_error, NoiseSampler, NoiseSpec};
use qpareto_core::pft::{
    pft_run_with_progress, summarize_scaling, three_qubit_system, Confidence, PftTrajectory,
    ScalingRow,
};
use qpareto_core::phase::{phase_run, summarize_phases, PhaseStudySettings};
use qpareto_core::{
    make_grid, ControlFieldSet, Error, ObjectiveKind, OptimizationTrace, SpinSystem, TargetGate,
    Termination,
};

use crate::config::{ExperimentConfig, OutputFormat};
use crate::formats::{
    ensemble_table, noise_table, num, pareto_table, scaling_table, trace_table, write_fields_csv,
    write_json, Failure, FieldArchive, NoiseRow, OptimizeSummary,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
/// `optimize`: some seed stalled. `pft`: the first optimization failed.
/// Other commands: some jobs failed.
pub const EXIT_STALLED: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

/// Resolved settings shared by every command.
pub struct Run {
    pub cfg: ExperimentConfig,
    pub system: SpinSystem,
    pub target: TargetGate,
    pub out: PathBuf,
    pub format: OutputFormat,
    pool: rayon::ThreadPool,
}

impl Run {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let system = cfg.system.build()?;
        let target = cfg.gate.build(system.qubits())?;
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(j) = cfg.jobs {
            pool = pool.num_threads(j);
        }
        Ok(Self {
            out: cfg.out_dir(),
            format: cfg.format(),
            system,
            target,
            pool: pool.build()?,
            cfg,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// `manifest.json`: the only output carrying a timestamp.
    fn write_manifest(&self, command: &str) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            version: &'a str,
            unix_time: u64,
            seeds: Vec<u64>,
            config: &'a ExperimentConfig,
        }
        let unix_time = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        write_json(
            &self.path("manifest.json"),
            &Manifest {
                command,
                version: env!("CARGO_PKG_VERSION"),
                unix_time,
                seeds: self.cfg.seeds(),
                config: &self.cfg,
            },
        )
    }

    fn write_failures(&self, failures: &[Failure]) -> Result<()> {
        let path = self.path("failures.json");
        if failures.is_empty() {
            if path.exists() {
                std::fs::remove_file(&path)?;
            }
            return Ok(());
        }
        for f in failures {
            warn!("{}: {}", f.job, f.error);
        }
        write_json(&path, &failures)
    }

    fn initial_fields(&self, time: f64, seed: u64) -> Result<ControlFieldSet> {
        let grid = make_grid(time, &self.system, self.cfg.grid_safety())?;
        Ok(init_fields(
            &self.system,
            grid,
            self.cfg.spectral_components(),
            seed,
        )?)
    }

    /// One D-MORPH run from the random fields of `seed`.
    pub fn optimize_one(
        &self,
        time: f64,
        seed: u64,
        kind: ObjectiveKind,
    ) -> Result<(ControlFieldSet, OptimizationTrace)> {
        let start = self.initial_fields(time, seed)?;
        let settings = self.cfg.optimizer.settings();
        Ok(dmorph_run(
            &self.system,
            &self.target,
            &start,
            kind,
            &settings,
        )?)
    }
}

fn require<T: Copy>(v: Option<T>, key: &str) -> Result<T> {
    v.with_context(|| format!("missing `{key}` in the configuration"))
}

/// `optimize`: one run per seed. Exit 0 if every seed converged, 2 if any
/// stalled, 3 if any ran out of budget.
pub fn cmd_optimize(run: &Run) -> Result<i32> {
    let time = require(run.cfg.optimize.time, "optimize.time")?;
    run.write_manifest("optimize")?;
    let kind: ObjectiveKind = run.cfg.objective.into();
    let seeds = run.cfg.seeds();
    let results: Vec<Result<(ControlFieldSet, OptimizationTrace)>> = run.pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| run.optimize_one(time, seed, kind))
            .collect()
    });
    let mut code = EXIT_OK;
    let mut stalled = false;
    let mut budget = false;
    for (seed, res) in seeds.iter().zip(results) {
        let (fields, trace) = match res {
            Ok(r) => r,
            Err(e) => {
                warn!("seed {seed}: {e:#}");
                code = EXIT_ERROR;
                continue;
            }
        };
        info!(
            "seed {seed}: {} at {:.3e} after {} steps",
            trace.termination.as_str(),
            trace.final_objective(),
            trace.accepted_steps
        );
        let n = fields.fields();
        trace_table(&trace, n).write(&run.path(&format!("trace_seed{seed}")), run.format)?;
        write_json(
            &run.path(&format!("summary_seed{seed}.json")),
            &OptimizeSummary::new(*seed, &trace, fields.grid.steps()),
        )?;
        write_fields_csv(&run.path(&format!("fields_seed{seed}.csv")), &fields)?;
        write_json(
            &run.path(&format!("fields_seed{seed}.json")),
            &FieldArchive::new(&fields, *seed),
        )?;
        match trace.termination {
            Termination::Converged => {}
            Termination::Stalled => stalled = true,
            Termination::Budget => budget = true,
        }
    }
    if code != EXIT_OK {
        return Ok(code);
    }
    Ok(if stalled {
        EXIT_STALLED
    } else if budget {
        EXIT_BUDGET
    } else {
        EXIT_OK
    })
}

#[derive(Debug, Serialize)]
struct PftSummary {
    seed: u64,
    t0: f64,
    t_star: Option<f64>,
    t_star_uncertainty: Option<f64>,
    confidence: &'static str,
    exhausted: bool,
    points: usize,
    stop_value: f64,
    base_budget: usize,
    retry_factor: usize,
    budgets: Vec<usize>,
    retried: Vec<bool>,
    verification_objective: Option<f64>,
    verification_termination: Option<&'static str>,
}

fn confidence_str(c: Confidence) -> &'static str {
    match c {
        Confidence::Confirmed => "confirmed",
        Confidence::Unconfirmed => "unconfirmed",
        Confidence::NotChecked => "not-checked",
    }
}

fn pft_summary(
    traj: &PftTrajectory,
    stop_value: f64,
    base_budget: usize,
    retry_factor: usize,
) -> PftSummary {
    PftSummary {
        seed: traj.seed,
        t0: traj.t0,
        t_star: traj.critical.map(|c| c.t_star),
        t_star_uncertainty: traj.critical.map(|c| c.uncertainty),
        confidence: confidence_str(traj.confidence),
        exhausted: traj.exhausted,
        points: traj.points.len(),
        stop_value,
        base_budget,
        retry_factor,
        budgets: traj.points.iter().map(|p| p.budget).collect(),
        retried: traj.points.iter().map(|p| p.retried).collect(),
        verification_objective: traj.verification.as_ref().map(|v| v.objective),
        verification_termination: traj.verification.as_ref().map(|v| v.termination.as_str()),
    }
}

/// `pft`: one trajectory per seed. Exit 2 when the first optimization of
/// any seed fails.
pub fn cmd_pft(run: &Run) -> Result<i32> {
    let t0 = require(run.cfg.pft.t0, "pft.t0")?;
    run.write_manifest("pft")?;
    let seeds = run.cfg.seeds();
    let results: Vec<Result<(PftTrajectory, f64, usize, usize)>> = run.pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let s = run.cfg.pft.settings(&run.cfg, t0, seed)?;
                let traj = pft_run_with_progress(&run.system, &run.target, &s, &mut |p| {
                    info!(
                        "seed {seed}: T = {:.5} objective {:.3e} ({} steps)",
                        p.time, p.objective, p.effort
                    )
                })?;
                Ok((traj, s.stop_value, s.base_budget, s.retry_factor))
            })
            .collect()
    });
    let mut code = EXIT_OK;
    let archive = run.cfg.pft.archive_fields.unwrap_or(true);
    for (seed, res) in seeds.iter().zip(results) {
        let (traj, stop, base, retry) = match res {
            Ok(r) => r,
            Err(e) => {
                warn!("seed {seed}: {e:#}");
                let first = matches!(
                    e.downcast_ref::<Error>(),
                    Some(Error::FirstStepFailed { .. })
                );
                code = code.max(if first { EXIT_STALLED } else { EXIT_ERROR });
                continue;
            }
        };
        pareto_table(&traj.points, *seed)
            .write(&run.path(&format!("pareto_seed{seed}")), run.format)?;
        write_json(
            &run.path(&format!("tstar_seed{seed}.json")),
            &pft_summary(&traj, stop, base, retry),
        )?;
        if archive {
            for (i, p) in traj.points.iter().enumerate() {
                write_json(
                    &run.path(&format!("fields_seed{seed}/point{i:04}.json")),
                    &FieldArchive::new(&p.fields, *seed),
                )?;
            }
        }
        match traj.critical {
            Some(c) => info!(
                "seed {seed}: T* = {} ± {}",
                num(c.t_star),
                num(c.uncertainty)
            ),
            None => info!("seed {seed}: no T* estimate"),
        }
    }
    Ok(code)
}

/// `sweep`: `T*` over couplings and the log–log slope against the mean
/// coupling.
pub fn cmd_sweep(run: &Run) -> Result<i32> {
    let sweep = &run.cfg.sweep;
    let systems: Vec<SpinSystem> = if !sweep.triples.is_empty() {
        let w = run.system.omega();
        if w.len() != 3 {
            bail!("sweep.triples needs a three-qubit system.omega");
        }
        sweep
            .triples
            .iter()
            .map(|j| three_qubit_system([w[0], w[1], w[2]], *j))
            .collect::<qpareto_core::Result<_>>()?
    } else if !sweep.couplings.is_empty() {
        sweep
            .couplings
            .iter()
            .map(|&j| SpinSystem::with_uniform_coupling(run.system.omega().to_vec(), j))
            .collect::<qpareto_core::Result<_>>()?
    } else {
        bail!("sweep needs `couplings` or `triples`");
    };
    run.write_manifest("sweep")?;
    let seed = run.cfg.seeds()[0];
    let t0_scale = sweep.t0_scale.unwrap_or(3.6);
    let rows: Vec<ScalingRow> = run.pool.install(|| {
        systems
            .par_iter()
            .map(|sys| {
                let coupling = sys.mean_coupling();
                let t0 = sweep.t0.unwrap_or(t0_scale / coupling);
                let t_star = run
                    .cfg
                    .pft
                    .settings(&run.cfg, t0, seed)
                    .map_err(|e| Error::InvalidSettings(format!("{e:#}")))
                    .and_then(|s| {
                        let target = run
                            .cfg
                            .gate
                            .build(sys.qubits())
                            .map_err(|e| Error::InvalidSettings(format!("{e:#}")))?;
                        let traj = pft_run_with_progress(sys, &target, &s, &mut |p| {
                            info!(
                                "J = {coupling}: T = {:.5} objective {:.3e}",
                                p.time, p.objective
                            )
                        })?;
                        traj.critical.ok_or(if traj.exhausted {
                            Error::NoConvergedPoint
                        } else {
                            Error::FrontNotExhausted
                        })
                    });
                ScalingRow { coupling, t_star }
            })
            .collect()
    });
    let study = summarize_scaling(rows);
    scaling_table(&study.rows, study.slope).write(&run.path("scaling"), run.format)?;
    let failures: Vec<Failure> = study
        .rows
        .iter()
        .filter_map(|r| {
            r.t_star.as_ref().err().map(|e| Failure {
                job: format!("J={}", r.coupling),
                error: e.to_string(),
            })
        })
        .collect();
    run.write_failures(&failures)?;
    if let Some(s) = study.slope {
        info!("log-log slope {}", num(s));
    }
    Ok(if failures.is_empty() && study.slope.is_some() {
        EXIT_OK
    } else {
        EXIT_STALLED
    })
}

/// Mean `D̃` over `trials` noisy propagations, trials spread over the pool.
pub fn monte_carlo_parallel(sampler: &NoiseSampler, trials: usize) -> (f64, f64) {
    let samples: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|i| sampler.trial(i))
        .collect();
    mean_and_stderr(&samples)
}

/// `noise`: optimize at each `T`, then compare Monte-Carlo errors with the
/// closed form for each `σ²`.
pub fn cmd_noise(run: &Run) -> Result<i32> {
    let nc = &run.cfg.noise;
    if nc.sigma2.is_empty() {
        bail!("noise.sigma2 must list at least one variance");
    }
    let times = if nc.times.is_empty() {
        vec![10.0]
    } else {
        nc.times.clone()
    };
    let trials = nc.trials.unwrap_or(2000);
    let n = run.system.qubits();
    run.write_manifest("noise")?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &time in &times {
        for seed in run.cfg.seeds() {
            let job = format!("T={time} seed={seed}");
            let fields = match run
                .pool
                .install(|| run.optimize_one(time, seed, ObjectiveKind::PhaseDependent))
            {
                Ok((f, trace)) if trace.converged() => f,
                Ok((_, trace)) => {
                    failures.push(Failure {
                        job,
                        error: format!(
                            "optimization {} at {:e}; noise needs a converged optimum",
                            trace.termination.as_str(),
                            trace.final_objective()
                        ),
                    });
                    continue;
                }
                Err(e) => {
                    failures.push(Failure {
                        job,
                        error: format!("{e:#}"),
                    });
                    continue;
                }
            };
            for &sigma2 in &nc.sigma2 {
                let spec = match &nc.beta {
                    Some(b) => NoiseSpec::new(sigma2, b.clone())?,
                    None => NoiseSpec::independent(sigma2, n)?,
                };
                let predicted = predicted_error(&run.system, time, &spec)?;
                let mut sampler =
                    NoiseSampler::new(&run.system, &run.target, &fields, &spec, seed)?;
                if let Some(r) = nc.substeps {
                    sampler = sampler.with_substeps(r);
                }
                let (mc_mean, mc_stderr) =
                    run.pool.install(|| monte_carlo_parallel(&sampler, trials));
                info!("T = {time} sigma2 = {sigma2:e}: predicted {predicted:.4e}, sampled {mc_mean:.4e} ± {mc_stderr:.1e}");
                rows.push(NoiseRow {
                    sigma2,
                    time,
                    predicted,
                    mc_mean,
                    mc_stderr,
                    trials,
                    seed,
                });
            }
        }
    }
    noise_table(&rows).write(&run.path("noise"), run.format)?;
    run.write_failures(&failures)?;
    Ok(if failures.is_empty() {
        EXIT_OK
    } else {
        EXIT_STALLED
    })
}

#[derive(Debug, Serialize)]
struct PhasesSummary {
    gate: String,
    time: f64,
    runs: usize,
    classes: Vec<ClassOut>,
}

#[derive(Debug, Serialize)]
struct ClassOut {
    m: usize,
    count: usize,
    fraction: f64,
    converged: usize,
    mean_g: Option<f64>,
    mean_distance: Option<f64>,
}

/// `phases`: phase-independent searches from seeds `s, s+1, …` and their
/// nearest phase classes.
pub fn cmd_phases(run: &Run) -> Result<i32> {
    let time = require(run.cfg.phases.time, "phases.time")?;
    let runs = run.cfg.phases.runs.unwrap_or(100);
    run.write_manifest("phases")?;
    let base = run.cfg.seeds()[0];
    let settings = PhaseStudySettings {
        initial_fluence: run.cfg.phases.initial_fluence.unwrap_or(1.0),
        grid_safety: run.cfg.grid_safety(),
        spectral_components: run.cfg.spectral_components(),
        dmorph: run.cfg.optimizer.settings(),
        ..PhaseStudySettings::new(time)
    };
    let results: Vec<(u64, qpareto_core::Result<_>)> = run.pool.install(|| {
        (0..runs as u64)
            .into_par_iter()
            .map(|i| {
                let seed = base.wrapping_add(i);
                (seed, phase_run(&run.system, &run.target, seed, &settings))
            })
            .collect()
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(Failure {
                job: format!("seed={seed}"),
                error: e.to_string(),
            }),
        }
    }
    let ensemble = summarize_phases(records, run.target.dim());
    ensemble_table(&ensemble.records).write(&run.path("ensemble"), run.format)?;
    let finite = |x: f64| if x.is_finite() { Some(x) } else { None };
    let summary = PhasesSummary {
        gate: run.target.kind.name(),
        time,
        runs,
        classes: ensemble
            .classes
            .iter()
            .map(|c| ClassOut {
                m: c.m,
                count: c.count,
                fraction: ensemble.fraction(c.m),
                converged: c.converged,
                mean_g: finite(c.mean_g),
                mean_distance: finite(c.mean_distance),
            })
            .collect(),
    };
    write_json(&run.path("phases_summary.json"), &summary)?;
    for c in &summary.classes {
        info!(
            "m = {}: {} runs, {} converged, mean G {:?}",
            c.m, c.count, c.converged, c.mean_g
        );
    }
    run.write_failures(&failures)?;
    Ok(if failures.is_empty() {
        EXIT_OK
    } else {
        EXIT_STALLED
    })
}

/// Gate matrix as text, one row per line, `re+imi` entries.
pub fn format_gate(target: &TargetGate) -> String {
    let mut s = format!(
        "{} (m = {}, N = {})\n",
        target.kind.name(),
        target.phase_index,
        target.dim()
    );
    for i in 0..target.dim() {
        let row: Vec<String> = (0..target.dim())
            .map(|j| {
                let z = target.matrix[(i, j)];
                format!("{:+.6}{:+.6}i", z.re, z.im)
            })
            .collect();
        s.push_str(&row.join("  "));
        s.push('\n');
    }
    s
}

/// Loads `path` if given, else the defaults.
pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}
