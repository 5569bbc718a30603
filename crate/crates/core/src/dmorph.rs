//! D-MORPH: gradient flow of the control fields in an algorithmic index `s`,
//!
//! ```text
//! ∂ε_k(s, t)/∂s = −δObjective/δε_k(t)
//! ```
//!
//! integrated with adaptive Dormand–Prince stepping. Every accepted step is
//! one unit of search effort.

use alloc::vec::Vec;
use core::cell::Cell;

use crate::dynamics::{ControlModel, TimeGrid};
use crate::integrator::{DormandPrince, Evaluation};
use crate::objective::{gradient, gradient_norm, objective_value, GradientField};
use crate::{ControlFieldSet, Error, ObjectiveKind, Operator, Result, SpinSystem, TargetGate};
#[allow(unused_imports)] // shadowed by std when a dependency links it
use num_traits::Float;

pub use crate::objective::GradientMode;

#[derive(Debug, Clone, PartialEq)]
pub struct DmorphSettings {
    /// Stop once the objective is at or below this value.
    pub target_value: f64,
    /// A step "stalls" when it improves the objective by at most this
    /// fraction of its current value.
    pub rel_improvement: f64,
    /// Consecutive stalled steps that end the run.
    pub stall_window: usize,
    pub rtol: f64,
    pub atol: f64,
    /// Accepted-step budget.
    pub max_steps: usize,
    pub gradient_mode: GradientMode,
    /// Largest objective increase an accepted step may show.
    pub descent_tolerance: f64,
    /// An accepted step of length `ds` must lower the objective by at least
    /// this fraction of the first-order prediction `ds·Σ²`.
    ///
    /// Without it the adaptive step can settle at the integrator's stability
    /// limit along the stiffest landscape direction, where that component
    /// neither grows nor decays and the objective stops moving while `Σ`
    /// stays large. Zero disables the test.
    pub sufficient_decrease: f64,
    /// Keep a copy of the knob vector after every accepted step.
    pub record_fields: bool,
}

impl Default for DmorphSettings {
    fn default() -> Self {
        Self {
            target_value: 1e-8,
            rel_improvement: 1e-6,
            stall_window: 10,
            rtol: 1e-3,
            atol: 1e-6,
            max_steps: 100_000,
            gradient_mode: GradientMode::Continuum,
            descent_tolerance: 1e-12,
            sufficient_decrease: 0.1,
            record_fields: false,
        }
    }
}

impl DmorphSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("target_value", self.target_value),
            ("rel_improvement", self.rel_improvement),
            ("rtol", self.rtol),
            ("atol", self.atol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidSettings(alloc::format!(
                    "{name} must be positive"
                )));
            }
        }
        if self.stall_window == 0 {
            return Err(Error::InvalidSettings(
                "stall_window must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.sufficient_decrease) {
            return Err(Error::InvalidSettings(
                "sufficient_decrease must lie in [0, 1)".into(),
            ));
        }
        if !(self.descent_tolerance >= 0.0) {
            return Err(Error::InvalidSettings(
                "descent_tolerance must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    Stalled,
    Budget,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "CONVERGED",
            Termination::Stalled => "STALLED",
            Termination::Budget => "BUDGET",
        }
    }
}

/// State after an accepted step. Row 0 holds the starting fields.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub s: f64,
    pub ds: f64,
    pub objective: f64,
    /// Slope metric `Σ(s)`.
    pub sigma: f64,
    /// Path length `Λ(s)`.
    pub lambda: f64,
    pub fluences: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationTrace {
    pub steps: Vec<TraceStep>,
    pub termination: Termination,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub gradient_evaluations: usize,
    /// Evaluations where the phase-independent gradient was singular and
    /// the phase-dependent one was used instead.
    pub phase_singularities: usize,
    pub duration: f64,
    pub objective_kind: ObjectiveKind,
    /// Knob vectors after every row of `steps` when recording was enabled.
    pub snapshots: Vec<Vec<f64>>,
}

impl OptimizationTrace {
    fn last(&self) -> &TraceStep {
        self.steps.last().expect("trace holds the starting row")
    }

    pub fn final_objective(&self) -> f64 {
        self.last().objective
    }

    /// `Λ* = Λ(s*)`.
    pub fn lambda_star(&self) -> f64 {
        self.last().lambda
    }

    /// Total fluence of the final fields.
    pub fn fluence_star(&self) -> f64 {
        self.last().fluences.iter().sum()
    }

    pub fn final_sigma(&self) -> f64 {
        self.last().sigma
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// Accepted-step count of a finished run.
pub fn search_effort(trace: &OptimizationTrace) -> usize {
    trace.accepted_steps
}

/// Slope metric `Σ = sqrt(Σ_k Σ_j g_{k,j}² dt)`.
pub fn slope_metric(g: &GradientField, grid: &TimeGrid) -> f64 {
    gradient_norm(g, grid.dt())
}

/// `ΔΛ = Σ ds / √T`.
pub fn path_length_increment(sigma: f64, ds: f64, duration: f64) -> f64 {
    sigma * ds / duration.sqrt()
}

/// Snapshot handed to an observer after every accepted step (and once for
/// the starting fields, with `step == 0`).
pub struct StepView<'a> {
    pub step: usize,
    pub s: f64,
    pub objective: f64,
    pub propagator: &'a Operator,
}

#[derive(Clone)]
struct StateInfo {
    objective: f64,
    sigma: f64,
    propagator: Operator,
}

/// Runs the gradient flow from `fields0` until convergence, stall or budget
/// exhaustion.
pub fn dmorph_run(
    system: &SpinSystem,
    target: &TargetGate,
    fields0: &ControlFieldSet,
    kind: ObjectiveKind,
    settings: &DmorphSettings,
) -> Result<(ControlFieldSet, OptimizationTrace)> {
    dmorph_run_observed(system, target, fields0, kind, settings, &mut |_| {})
}

/// [`dmorph_run`] with a callback after every accepted step.
pub fn dmorph_run_observed(
    system: &SpinSystem,
    target: &TargetGate,
    fields0: &ControlFieldSet,
    kind: ObjectiveKind,
    settings: &DmorphSettings,
    observer: &mut dyn FnMut(&StepView<'_>),
) -> Result<(ControlFieldSet, OptimizationTrace)> {
    settings.validate()?;
    if target.dim() != system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            got: target.dim(),
        });
    }
    let model = ControlModel::new(system);
    let grid = fields0.grid;
    let nfields = fields0.fields();
    let duration = grid.duration();

    let evaluations = Cell::new(0usize);
    let singular = Cell::new(0usize);
    let current_s = Cell::new(0.0f64);
    let mut rhs = |y: &[f64]| -> Result<Evaluation<StateInfo>> {
        evaluations.set(evaluations.get() + 1);
        let fields = ControlFieldSet::from_flat(grid, nfields, y);
        let cache = model.propagate(&fields)?;
        let u_t = cache.final_propagator();
        let objective = objective_value(kind, u_t, target)?;
        let g = match gradient(&cache, target, kind, settings.gradient_mode) {
            Ok(g) => g,
            Err(Error::PhaseSingularity(_)) => {
                singular.set(singular.get() + 1);
                gradient(
                    &cache,
                    target,
                    ObjectiveKind::PhaseDependent,
                    settings.gradient_mode,
                )?
            }
            Err(e) => return Err(e),
        };
        if !g.is_finite() || !objective.is_finite() {
            return Err(Error::NonFiniteGradient { s: current_s.get() });
        }
        let sigma = gradient_norm(&g, grid.dt());
        let derivative = g.flatten().into_iter().map(|v| -v).collect();
        Ok(Evaluation {
            derivative,
            extra: StateInfo {
                objective,
                sigma,
                propagator: u_t.clone(),
            },
        })
    };

    let mut y = fields0.flatten();
    let mut current = rhs(&y)?;
    let mut steps = Vec::new();
    let mut snapshots = Vec::new();
    steps.push(TraceStep {
        s: 0.0,
        ds: 0.0,
        objective: current.extra.objective,
        sigma: current.extra.sigma,
        lambda: 0.0,
        fluences: fields0.fluences(),
    });
    if settings.record_fields {
        snapshots.push(y.clone());
    }
    observer(&StepView {
        step: 0,
        s: 0.0,
        objective: current.extra.objective,
        propagator: &current.extra.propagator,
    });

    let mut dp = DormandPrince::new(settings.rtol, settings.atol);
    let mut s = 0.0;
    let mut lambda = 0.0;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut stalled_run = 0usize;
    let max_rejections = settings.max_steps.saturating_mul(10).saturating_add(1000);

    let termination = if current.extra.objective <= settings.target_value {
        Termination::Converged
    } else {
        let mut h = dp.initial_step(&y, &current, &mut rhs)?;
        loop {
            if accepted >= settings.max_steps || rejected >= max_rejections {
                break Termination::Budget;
            }
            if !(h > 1e-14 * (1.0 + s)) {
                break Termination::Stalled;
            }
            current_s.set(s);
            let proposal = dp.propose(&y, &current, h, &mut rhs)?;
            let old = current.extra.objective;
            let new = proposal.end.extra.objective;
            if !(proposal.error <= 1.0) {
                rejected += 1;
                h = dp.reject(h, proposal.error);
                continue;
            }
            let required =
                settings.sufficient_decrease * h * current.extra.sigma * current.extra.sigma;
            if new > old - required + settings.descent_tolerance {
                rejected += 1;
                h *= 0.5;
                continue;
            }
            accepted += 1;
            s += h;
            lambda += path_length_increment(
                0.5 * (current.extra.sigma + proposal.end.extra.sigma),
                h,
                duration,
            );
            if (new - old).abs() <= settings.rel_improvement * old {
                stalled_run += 1;
            } else {
                stalled_run = 0;
            }
            let err = proposal.error;
            y = proposal.y_new;
            current = proposal.end;
            let fields_now = ControlFieldSet::from_flat(grid, nfields, &y);
            steps.push(TraceStep {
                s,
                ds: h,
                objective: new,
                sigma: current.extra.sigma,
                lambda,
                fluences: fields_now.fluences(),
            });
            if settings.record_fields {
                snapshots.push(y.clone());
            }
            observer(&StepView {
                step: accepted,
                s,
                objective: new,
                propagator: &current.extra.propagator,
            });
            h = dp.accept(h, err);
            if new <= settings.target_value {
                break Termination::Converged;
            }
            if stalled_run >= settings.stall_window {
                break Termination::Stalled;
            }
        }
    };

    let trace = OptimizationTrace {
        steps,
        termination,
        accepted_steps: accepted,
        rejected_steps: rejected,
        gradient_evaluations: evaluations.get(),
        phase_singularities: singular.get(),
        duration,
        objective_kind: kind,
        snapshots,
    };
    Ok((ControlFieldSet::from_flat(grid, nfields, &y), trace))
}
