//! Which global-phase variant `e^{i2πm/N} W` a phase-independent search ends
//! up near.

use alloc::vec::Vec;

use crate::dmorph::{dmorph_run, DmorphSettings, Termination};
use crate::dynamics::{init_fields, make_grid, propagate};
use crate::linalg::trace_adjoint_product;
use crate::spinsys::phase_factor;
use crate::{Error, ObjectiveKind, Operator, Result, SpinSystem, TargetGate};

/// Level of `G` that counts as reaching the gate.
pub const CONVERGED_G: f64 = 1e-8;

/// Nearest phase variant of `target` to `u` and the normalized distance to
/// it. Ties go to the smallest `m`.
pub fn classify_phase(u: &Operator, target: &TargetGate) -> Result<(usize, f64)> {
    let dim = target.dim();
    if u.nrows() != dim || u.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: u.nrows(),
        });
    }
    let z = trace_adjoint_product(&target.matrix, u);
    let n = dim as f64;
    let mut best = (0, f64::INFINITY);
    for m in 0..dim {
        // Tr[(e^{iφ}W)† U] = e^{−iφ} z
        let overlap = (phase_factor(m as isize, dim).conj() * z).re;
        let d = (2.0 * n - 2.0 * overlap) / (4.0 * n);
        if d < best.1 - 1e-15 {
            best = (m, d);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRunRecord {
    pub seed: u64,
    pub final_g: f64,
    pub converged: bool,
    pub phase_m: usize,
    /// `D̃` against the nearest phase variant.
    pub distance_m: f64,
    pub termination: Termination,
    pub effort: usize,
    pub lambda_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseStudySettings {
    pub duration: f64,
    /// Fluence of each random initial field.
    ///
    /// Unit-fluence fields barely move `U_T` away from free evolution, so
    /// every search starts near the same phase class; larger values spread
    /// the starting points over all classes.
    pub initial_fluence: f64,
    pub grid_safety: f64,
    pub spectral_components: usize,
    pub dmorph: DmorphSettings,
}

impl PhaseStudySettings {
    pub fn new(duration: f64) -> Self {
        Self {
            duration,
            initial_fluence: 1.0,
            grid_safety: crate::dynamics::DEFAULT_GRID_SAFETY,
            spectral_components: crate::dynamics::DEFAULT_SPECTRAL_COMPONENTS,
            dmorph: DmorphSettings::default(),
        }
    }
}

/// Runs one phase-independent search from the random fields of `seed`.
pub fn phase_run(
    system: &SpinSystem,
    target: &TargetGate,
    seed: u64,
    settings: &PhaseStudySettings,
) -> Result<PhaseRunRecord> {
    if !(settings.initial_fluence > 0.0) {
        return Err(Error::InvalidSettings(
            "initial fluence must be positive".into(),
        ));
    }
    let grid = make_grid(settings.duration, system, settings.grid_safety)?;
    let start = init_fields(system, grid, settings.spectral_components, seed)?
        .with_fluence(settings.initial_fluence);
    let mut dm = settings.dmorph.clone();
    dm.target_value = dm.target_value.min(CONVERGED_G);
    let (fields, trace) = dmorph_run(system, target, &start, ObjectiveKind::PhaseIndependent, &dm)?;
    let cache = propagate(system, &fields)?;
    let (phase_m, distance_m) = classify_phase(cache.final_propagator(), target)?;
    let final_g = trace.final_objective();
    Ok(PhaseRunRecord {
        seed,
        final_g,
        converged: final_g <= CONVERGED_G,
        phase_m,
        distance_m,
        termination: trace.termination,
        effort: trace.accepted_steps,
        lambda_star: trace.lambda_star(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseClassSummary {
    pub m: usize,
    pub count: usize,
    pub converged: usize,
    pub mean_g: f64,
    pub mean_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEnsemble {
    /// Sorted by seed.
    pub records: Vec<PhaseRunRecord>,
    /// One entry per phase index `0..N`.
    pub classes: Vec<PhaseClassSummary>,
}

impl PhaseEnsemble {
    pub fn fraction(&self, m: usize) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.classes[m].count as f64 / self.records.len() as f64
    }
}

/// Per-class counts and means of a set of records.
pub fn summarize_phases(mut records: Vec<PhaseRunRecord>, dim: usize) -> PhaseEnsemble {
    records.sort_by_key(|r| r.seed);
    let classes = (0..dim)
        .map(|m| {
            let members: Vec<&PhaseRunRecord> = records.iter().filter(|r| r.phase_m == m).collect();
            let count = members.len();
            let mean = |f: &dyn Fn(&PhaseRunRecord) -> f64| {
                if count == 0 {
                    f64::NAN
                } else {
                    members.iter().map(|r| f(r)).sum::<f64>() / count as f64
                }
            };
            PhaseClassSummary {
                m,
                count,
                converged: members.iter().filter(|r| r.converged).count(),
                mean_g: mean(&|r| r.final_g),
                mean_distance: mean(&|r| r.distance_m),
            }
        })
        .collect();
    PhaseEnsemble { records, classes }
}

/// `runs` searches with seeds `seed, seed+1, …`, run one after another.
pub fn phase_ensemble(
    system: &SpinSystem,
    target: &TargetGate,
    runs: usize,
    seed: u64,
    settings: &PhaseStudySettings,
) -> Result<PhaseEnsemble> {
    let records = (0..runs as u64)
        .map(|i| phase_run(system, target, seed.wrapping_add(i), settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_phases(records, target.dim()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinsys::{make_gate, GateKind};
    use crate::C64;

    #[test]
    fn exact_phase_variants() {
        let w = make_gate(GateKind::Cnot, 2, 0).unwrap();
        assert_eq!(classify_phase(&w.matrix, &w).unwrap().0, 0);
        let u = &w.matrix * C64::new(0.0, 1.0);
        let (m, d) = classify_phase(&u, &w).unwrap();
        assert_eq!(m, 1);
        assert!(d.abs() < 1e-15);
    }

    #[test]
    fn tie_goes_to_smallest_index() {
        let w = make_gate(GateKind::Swap, 2, 0).unwrap();
        // halfway between m = 0 and m = 1
        let u = &w.matrix * C64::from_polar(1.0, core::f64::consts::FRAC_PI_4);
        assert_eq!(classify_phase(&u, &w).unwrap().0, 0);
    }

    #[test]
    fn summary_counts() {
        let rec = |seed, m, g| PhaseRunRecord {
            seed,
            final_g: g,
            converged: g <= CONVERGED_G,
            phase_m: m,
            distance_m: g,
            termination: Termination::Converged,
            effort: 1,
            lambda_star: 0.0,
        };
        let e = summarize_phases(
            alloc::vec![rec(3, 1, 0.02), rec(1, 0, 1e-9), rec(2, 1, 0.04)],
            4,
        );
        assert_eq!(e.records[0].seed, 1);
        assert_eq!(e.classes[1].count, 2);
        assert!((e.classes[1].mean_g - 0.03).abs() < 1e-15);
        assert_eq!(e.classes[0].converged, 1);
        let total: f64 = (0..4).map(|m| e.fraction(m)).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }
}
