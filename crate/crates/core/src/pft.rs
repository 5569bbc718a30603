//! Pareto front tracking (PFT) in the control time.
//!
//! Starting from a converged optimum at `T0`, the control time is lowered in
//! small steps and every optimization is warm-started from the previous
//! optimum carried onto the shorter interval. The sweep ends at the first
//! time where the optimizer can no longer reach the stop value; the last time
//! that reached `D̃ ≤ 1e-8` estimates the critical time `T*`.

use alloc::vec::Vec;

use crate::dmorph::{dmorph_run, DmorphSettings, OptimizationTrace, Termination};
use crate::dynamics::{
    init_fields, make_grid, resample_fields, ResampleMode, DEFAULT_GRID_SAFETY,
    DEFAULT_SPECTRAL_COMPONENTS,
};
use crate::{ControlFieldSet, Error, ObjectiveKind, Result, SpinSystem, TargetGate};
#[allow(unused_imports)] // shadowed by std when a dependency links it
use num_traits::Float;

/// Objective level that counts as reaching the gate.
pub const CRITICAL_THRESHOLD: f64 = 1e-8;
/// Stop value for tracing the competitive part of the front.
pub const FRONT_STOP_VALUE: f64 = 1e-2;

/// How the next control time is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStep {
    /// `ΔT = fraction · T(p)`.
    Relative(f64),
    /// Fixed `ΔT`, for fine sweeps close to `T*`.
    Absolute(f64),
}

impl TimeStep {
    fn next(&self, t: f64) -> f64 {
        match *self {
            TimeStep::Relative(f) => t - f * t,
            TimeStep::Absolute(dt) => t - dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PftSettings {
    pub t0: f64,
    pub time_step: TimeStep,
    /// The sweep ends at the first point whose best objective exceeds this.
    pub stop_value: f64,
    pub dmorph: DmorphSettings,
    /// Accepted-step budget at `T0`; scaled by `(T0/T)²` along the sweep.
    pub base_budget: usize,
    /// Budget multiplier of the single retry after budget exhaustion.
    pub retry_factor: usize,
    pub seed: u64,
    pub objective: ObjectiveKind,
    pub grid_safety: f64,
    pub spectral_components: usize,
    pub resample: ResampleMode,
    /// Hard floor on the control time.
    pub min_time: f64,
    pub max_points: usize,
    /// Double `T0` (up to three times) when the first optimization fails.
    pub auto_double_t0: bool,
    /// Re-run a cold-start optimization at the estimated `T*`.
    pub verify: bool,
}

impl PftSettings {
    /// Sweep that stops as soon as `D̃ ≤ 1e-8` is lost.
    pub fn critical(t0: f64, seed: u64) -> Self {
        Self {
            t0,
            time_step: TimeStep::Relative(0.01),
            stop_value: CRITICAL_THRESHOLD,
            dmorph: DmorphSettings::default(),
            base_budget: 20_000,
            retry_factor: 4,
            seed,
            objective: ObjectiveKind::PhaseDependent,
            grid_safety: DEFAULT_GRID_SAFETY,
            spectral_components: DEFAULT_SPECTRAL_COMPONENTS,
            resample: ResampleMode::Compress,
            min_time: 0.0,
            max_points: 10_000,
            auto_double_t0: false,
            verify: true,
        }
    }

    /// Sweep that follows the front down to `D̃ = 1e-2`.
    pub fn front(t0: f64, seed: u64) -> Self {
        Self {
            stop_value: FRONT_STOP_VALUE,
            ..Self::critical(t0, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0.is_finite() && self.t0 > 0.0) {
            return Err(Error::NonPositiveTime(self.t0));
        }
        match self.time_step {
            TimeStep::Relative(f) if !(f > 0.0 && f <= 0.05) => {
                return Err(Error::InvalidSettings(
                    "relative time step must lie in (0, 0.05]".into(),
                ))
            }
            TimeStep::Absolute(dt) if !(dt > 0.0 && dt < self.t0) => {
                return Err(Error::InvalidSettings(
                    "absolute time step must lie in (0, T0)".into(),
                ))
            }
            _ => {}
        }
        if !(self.stop_value > 0.0) {
            return Err(Error::InvalidSettings("stop_value must be positive".into()));
        }
        if self.base_budget == 0 || self.retry_factor == 0 {
            return Err(Error::InvalidSettings("budgets must be positive".into()));
        }
        self.dmorph.validate()
    }

    /// `base · (T0/T)²`.
    pub fn budget_at(&self, t: f64) -> usize {
        let ratio = self.t0 / t;
        (self.base_budget as f64 * ratio * ratio).ceil() as usize
    }
}

/// One optimized control time.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    pub time: f64,
    pub objective: f64,
    pub termination: Termination,
    /// Accepted steps, including a retry.
    pub effort: usize,
    pub lambda_star: f64,
    pub fluence_star: f64,
    /// Accepted-step budget granted (after a retry, the retry budget).
    pub budget: usize,
    pub retried: bool,
    pub fields: ControlFieldSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalTime {
    pub t_star: f64,
    /// Distance to the next (failed) time in the sweep.
    pub uncertainty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Confidence {
    /// A cold start at `T*` also reached the threshold.
    Confirmed,
    /// The cold start at `T*` did not reach the threshold.
    Unconfirmed,
    NotChecked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub objective: f64,
    pub termination: Termination,
    pub effort: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PftTrajectory {
    pub points: Vec<ParetoPoint>,
    /// The last point failed to reach the stop value.
    pub exhausted: bool,
    pub critical: Option<CriticalTime>,
    pub confidence: Confidence,
    pub verification: Option<Verification>,
    pub seed: u64,
    /// `T0` actually used (after any doubling).
    pub t0: f64,
}

fn optimize_with_retry(
    system: &SpinSystem,
    target: &TargetGate,
    start: &ControlFieldSet,
    settings: &PftSettings,
    budget: usize,
) -> Result<(ControlFieldSet, OptimizationTrace, usize, bool)> {
    let mut dm = settings.dmorph.clone();
    dm.max_steps = budget;
    let (fields, trace) = dmorph_run(system, target, start, settings.objective, &dm)?;
    if trace.termination != Termination::Budget || trace.final_objective() <= settings.stop_value {
        return Ok((fields, trace, budget, false));
    }
    // Out of budget above the stop value: one longer continuation before
    // calling the point unreachable.
    let retry_budget = budget.saturating_mul(settings.retry_factor);
    dm.max_steps = retry_budget;
    let (fields2, mut trace2) = dmorph_run(system, target, &fields, settings.objective, &dm)?;
    trace2.accepted_steps += trace.accepted_steps;
    trace2.rejected_steps += trace.rejected_steps;
    trace2.gradient_evaluations += trace.gradient_evaluations;
    let offset = trace.lambda_star();
    for step in trace2.steps.iter_mut() {
        step.lambda += offset;
    }
    Ok((fields2, trace2, retry_budget, true))
}

fn point_from(
    time: f64,
    fields: ControlFieldSet,
    trace: &OptimizationTrace,
    budget: usize,
    retried: bool,
) -> ParetoPoint {
    ParetoPoint {
        time,
        objective: trace.final_objective(),
        termination: trace.termination,
        effort: trace.accepted_steps,
        lambda_star: trace.lambda_star(),
        fluence_star: trace.fluence_star(),
        budget,
        retried,
        fields,
    }
}

/// Runs one PFT trajectory.
pub fn pft_run(
    system: &SpinSystem,
    target: &TargetGate,
    settings: &PftSettings,
) -> Result<PftTrajectory> {
    pft_run_with_progress(system, target, settings, &mut |_| {})
}

/// [`pft_run`] with a callback after every point.
pub fn pft_run_with_progress(
    system: &SpinSystem,
    target: &TargetGate,
    settings: &PftSettings,
    progress: &mut dyn FnMut(&ParetoPoint),
) -> Result<PftTrajectory> {
    settings.validate()?;
    let mut t0 = settings.t0;
    let mut attempts = 0;
    let first = loop {
        let grid = make_grid(t0, system, settings.grid_safety)?;
        let start = init_fields(system, grid, settings.spectral_components, settings.seed)?;
        let budget = settings.base_budget;
        let (fields, trace, used, retried) =
            optimize_with_retry(system, target, &start, settings, budget)?;
        let point = point_from(t0, fields, &trace, used, retried);
        if point.objective <= settings.stop_value {
            break point;
        }
        if settings.auto_double_t0 && attempts < 3 {
            attempts += 1;
            t0 *= 2.0;
            continue;
        }
        return Err(Error::FirstStepFailed {
            t: t0,
            objective: point.objective,
            stop: settings.stop_value,
        });
    };
    progress(&first);
    let mut points = alloc::vec![first];
    let mut exhausted = false;
    let scaled = PftSettings {
        t0,
        ..settings.clone()
    };
    while points.len() < settings.max_points {
        let prev = points.last().unwrap();
        let t = settings.time_step.next(prev.time);
        if !(t > settings.min_time) || t <= 0.0 {
            break;
        }
        let grid = make_grid(t, system, settings.grid_safety)?;
        let start = resample_fields(&prev.fields, grid, settings.resample)?;
        let budget = scaled.budget_at(t);
        let (fields, trace, used, retried) =
            optimize_with_retry(system, target, &start, &scaled, budget)?;
        let point = point_from(t, fields, &trace, used, retried);
        progress(&point);
        let failed = point.objective > settings.stop_value;
        points.push(point);
        if failed {
            exhausted = true;
            break;
        }
    }

    let mut traj = PftTrajectory {
        points,
        exhausted,
        critical: None,
        confidence: Confidence::NotChecked,
        verification: None,
        seed: settings.seed,
        t0,
    };
    traj.critical = estimate_critical_time(&traj, CRITICAL_THRESHOLD).ok();
    if let (true, Some(ct)) = (settings.verify, traj.critical) {
        let grid = make_grid(ct.t_star, system, settings.grid_safety)?;
        let start = init_fields(
            system,
            grid,
            settings.spectral_components,
            settings.seed.wrapping_add(0x9e37_79b9),
        )?;
        let mut dm = settings.dmorph.clone();
        dm.max_steps = scaled
            .budget_at(ct.t_star)
            .saturating_mul(settings.retry_factor);
        dm.target_value = CRITICAL_THRESHOLD;
        let (_, trace) = dmorph_run(system, target, &start, settings.objective, &dm)?;
        traj.confidence = if trace.final_objective() <= CRITICAL_THRESHOLD {
            Confidence::Confirmed
        } else {
            Confidence::Unconfirmed
        };
        traj.verification = Some(Verification {
            objective: trace.final_objective(),
            termination: trace.termination,
            effort: trace.accepted_steps,
        });
    }
    Ok(traj)
}

/// Smallest control time whose optimum reached `threshold`, with the gap to
/// the next (failed) point as uncertainty.
pub fn estimate_critical_time(traj: &PftTrajectory, threshold: f64) -> Result<CriticalTime> {
    critical_time_of(traj.points.iter().map(|p| (p.time, p.objective)), threshold)
}

/// [`estimate_critical_time`] over bare `(T, objective)` pairs.
pub fn critical_time_of(
    points: impl IntoIterator<Item = (f64, f64)>,
    threshold: f64,
) -> Result<CriticalTime> {
    let pts: Vec<(f64, f64)> = points.into_iter().collect();
    let t_star = pts
        .iter()
        .filter(|(_, obj)| *obj <= threshold)
        .map(|(t, _)| *t)
        .fold(f64::INFINITY, f64::min);
    if !t_star.is_finite() {
        return Err(Error::NoConvergedPoint);
    }
    let below = pts
        .iter()
        .filter(|(t, obj)| *t < t_star && *obj > threshold)
        .map(|(t, _)| *t)
        .fold(f64::NEG_INFINITY, f64::max);
    if !below.is_finite() {
        return Err(Error::FrontNotExhausted);
    }
    Ok(CriticalTime {
        t_star,
        uncertainty: t_star - below,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let pairs: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::DegenerateRegression);
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateRegression);
    }
    Ok(sxy / sxx)
}

/// Coupling triples `(J12, J13, J23)` of the three-qubit unequal-coupling
/// study.
pub const THREE_QUBIT_COUPLINGS: [[f64; 3]; 10] = [
    [2.0, 1.2, 1.6],
    [1.2, 0.4, 0.8],
    [2.0, 0.4, 2.0],
    [2.0, 0.0, 2.0],
    [4.0, 0.4, 4.0],
    [4.0, 0.0, 4.0],
    [8.0, 0.0, 8.0],
    [20.0, 0.0, 20.0],
    [40.0, 0.0, 40.0],
    [80.0, 0.0, 80.0],
];

/// Three-qubit system with the given `(J12, J13, J23)`.
pub fn three_qubit_system(omega: [f64; 3], j: [f64; 3]) -> Result<SpinSystem> {
    SpinSystem::new(
        omega.to_vec(),
        alloc::vec![
            alloc::vec![0.0, j[0], j[1]],
            alloc::vec![j[0], 0.0, j[2]],
            alloc::vec![j[1], j[2], 0.0],
        ],
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    /// `J` for equal couplings, the mean coupling otherwise.
    pub coupling: f64,
    pub t_star: Result<CriticalTime>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingStudy {
    pub rows: Vec<ScalingRow>,
    /// Log–log slope of `T*` against the coupling over the successful rows.
    pub slope: Option<f64>,
}

/// Collects `(coupling, T*)` rows and fits the log–log slope.
pub fn summarize_scaling(rows: Vec<ScalingRow>) -> ScalingStudy {
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| r.t_star.as_ref().ok().map(|ct| (r.coupling, ct.t_star)))
        .unzip();
    let slope = loglog_slope(&xs, &ys).ok();
    ScalingStudy { rows, slope }
}

/// Runs one PFT per system (sequentially) and regresses `T*` on the mean
/// coupling. `t0_for` picks the starting time for each coupling.
pub fn scaling_study(
    systems: &[SpinSystem],
    target: &TargetGate,
    settings: &PftSettings,
    t0_for: &dyn Fn(f64) -> f64,
) -> ScalingStudy {
    let rows = systems
        .iter()
        .map(|sys| {
            let coupling = sys.mean_coupling();
            let s = PftSettings {
                t0: t0_for(coupling),
                ..settings.clone()
            };
            let t_star = pft_run(sys, target, &s).and_then(|traj| {
                traj.critical.ok_or_else(|| {
                    if traj.exhausted {
                        Error::NoConvergedPoint
                    } else {
                        Error::FrontNotExhausted
                    }
                })
            });
            ScalingRow { coupling, t_star }
        })
        .collect();
    summarize_scaling(rows)
}
