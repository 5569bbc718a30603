//! Gate distances and their gradients with respect to the control knobs.
//!
//! Gradients use the functional (per-unit-time) convention: the partial
//! derivative with respect to one knob equals `dt` times the stored value.

use alloc::vec::Vec;

use crate::dynamics::PropagationCache;
use crate::linalg::trace_adjoint_product;
use crate::{Error, Operator, Result, TargetGate, C64};
#[allow(unused_imports)] // shadowed by std when a dependency links it
use num_traits::Float;

/// Below this `|Tr(W†U_T)|` the phase-independent gradient is undefined.
pub const PHASE_SINGULARITY_THRESHOLD: f64 = 1e-12;

/// Objective minimized by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObjectiveKind {
    /// Normalized distance `D̃ = D / 4N`.
    #[default]
    PhaseDependent,
    /// `G = 1 − |Tr(W†U_T)| / N`.
    PhaseIndependent,
}

/// How the knob gradient is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    /// Functional derivative evaluated at each knob time. Cheap, and an
    /// `O(dt)` approximation of the discrete derivative.
    #[default]
    Continuum,
    /// Exact derivative of the discretized propagator (Fréchet derivative of
    /// every step exponential).
    ExactDiscrete,
}

/// Per-knob gradient, `values[k][j]`, per unit time.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub values: Vec<Vec<f64>>,
}

impl GradientField {
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.values.iter_mut().flatten().for_each(|v| *v *= factor);
        self
    }
}

fn check_dims(u: &Operator, w: &TargetGate) -> Result<()> {
    if u.nrows() != w.dim() || u.ncols() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            got: u.nrows(),
        });
    }
    Ok(())
}

/// `D = 2N − 2 Re Tr(W†U_T)`, in `[0, 4N]`.
pub fn distance(u: &Operator, w: &TargetGate) -> Result<f64> {
    check_dims(u, w)?;
    let n = w.dim() as f64;
    Ok(2.0 * n - 2.0 * trace_adjoint_product(&w.matrix, u).re)
}

/// `D̃ = D / 4N`, in `[0, 1]`.
pub fn normalized_distance(u: &Operator, w: &TargetGate) -> Result<f64> {
    Ok(distance(u, w)? / (4.0 * w.dim() as f64))
}

/// `F = 1 − D̃`.
pub fn fidelity(u: &Operator, w: &TargetGate) -> Result<f64> {
    Ok(1.0 - normalized_distance(u, w)?)
}

/// `G = 1 − |Tr(W†U_T)| / N`.
pub fn phase_independent_distance(u: &Operator, w: &TargetGate) -> Result<f64> {
    check_dims(u, w)?;
    let n = w.dim() as f64;
    Ok(1.0 - trace_adjoint_product(&w.matrix, u).norm() / n)
}

pub fn objective_value(kind: ObjectiveKind, u: &Operator, w: &TargetGate) -> Result<f64> {
    match kind {
        ObjectiveKind::PhaseDependent => normalized_distance(u, w),
        ObjectiveKind::PhaseIndependent => phase_independent_distance(u, w),
    }
}

/// Functional gradient of the chosen objective.
///
/// Fails with [`Error::PhaseSingularity`] when the phase-independent
/// objective is requested at `|Tr(W†U_T)| < 1e-12`.
pub fn gradient(
    cache: &PropagationCache,
    w: &TargetGate,
    kind: ObjectiveKind,
    mode: GradientMode,
) -> Result<GradientField> {
    let u_t = cache.final_propagator();
    check_dims(u_t, w)?;
    let n = w.dim() as f64;
    let z = trace_adjoint_product(&w.matrix, u_t);
    if kind == ObjectiveKind::PhaseIndependent && z.norm() < PHASE_SINGULARITY_THRESHOLD {
        return Err(Error::PhaseSingularity(z.norm()));
    }
    let dz = trace_derivatives(cache, &w.matrix, mode);
    let values = dz
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|d| match kind {
                    ObjectiveKind::PhaseDependent => -d.re / (2.0 * n),
                    ObjectiveKind::PhaseIndependent => -(z.conj() * d).re / (n * z.norm()),
                })
                .collect()
        })
        .collect();
    Ok(GradientField { values })
}

/// Functional gradient of the unnormalized distance `D`.
pub fn distance_gradient(
    cache: &PropagationCache,
    w: &TargetGate,
    mode: GradientMode,
) -> Result<GradientField> {
    let scale = 4.0 * w.dim() as f64;
    Ok(gradient(cache, w, ObjectiveKind::PhaseDependent, mode)?.scaled(scale))
}

/// `δ Tr(W†U_T) / δε_k(t_j)` per unit time, `[k][j]`.
fn trace_derivatives(cache: &PropagationCache, w: &Operator, mode: GradientMode) -> Vec<Vec<C64>> {
    let m = cache.steps();
    let fields = cache.controls.len();
    let back = cache.backward_products(w);
    let mut out = alloc::vec![alloc::vec![C64::new(0.0, 0.0); m]; fields];
    match mode {
        GradientMode::Continuum => {
            // δU_T/δε_k(t) = −i U_T H_c^(k)(t); with B = U(t) W† U(T,t),
            // Tr(W† U_T H_c^(k)(t)) = Tr(B S_x^(k)).
            for j in 0..m {
                let node = j + 1;
                let b = &cache.forward_products[node] * &back[node];
                for (k, &bit) in cache.control_bits.iter().enumerate() {
                    out[k][j] = C64::new(0.0, -1.0) * trace_with_sx(&b, bit);
                }
            }
        }
        GradientMode::ExactDiscrete => {
            // ∂U_T/∂ε_{k,j} = U(T,t_{j+1}) L_j U(t_j), with L_j the Fréchet
            // derivative of exp(−i H_j dt) along S_x^(k):
            // L_j = V (Γ ∘ V† S V) V†, Γ_ab the divided difference of exp.
            let dt = cache.dt;
            for j in 0..m {
                let eig = &cache.step_eigen[j];
                let v = &eig.vectors;
                let c = &cache.forward_products[j] * &back[j + 1];
                let c_eig = v.adjoint() * c * v;
                let dim = v.nrows();
                let mut gamma = Operator::zeros(dim, dim);
                for a in 0..dim {
                    for b in 0..dim {
                        gamma[(a, b)] =
                            crate::linalg::exp_divided_difference(eig.values[a], eig.values[b], dt);
                    }
                }
                for (k, &bit) in cache.control_bits.iter().enumerate() {
                    let s_eig = v.adjoint() * sx_times(v, bit);
                    let mut acc = C64::new(0.0, 0.0);
                    for a in 0..dim {
                        for b in 0..dim {
                            acc += c_eig[(b, a)] * gamma[(a, b)] * s_eig[(a, b)];
                        }
                    }
                    out[k][j] = acc / dt;
                }
            }
        }
    }
    out
}

/// `Tr(B S_x)` for the `S_x` that flips `bit`.
fn trace_with_sx(b: &Operator, bit: usize) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for a in 0..b.nrows() {
        acc += b[(a, a ^ bit)];
    }
    acc * 0.5
}

/// `S_x V` for the `S_x` that flips `bit`.
fn sx_times(v: &Operator, bit: usize) -> Operator {
    let dim = v.nrows();
    Operator::from_fn(dim, dim, |a, c| v[(a ^ bit, c)] * 0.5)
}

/// L2 norm of a functional gradient, `sqrt(Σ_k Σ_j g² dt)`.
pub fn gradient_norm(g: &GradientField, dt: f64) -> f64 {
    (g.values.iter().flatten().map(|x| x * x).sum::<f64>() * dt).sqrt()
}
