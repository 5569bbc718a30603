mod common;

use approx::assert_relative_eq;
use common::*;
use qpareto_core::dmorph::DmorphSettings;
use qpareto_core::dynamics::{init_fields, propagate};
use qpareto_core::objective::gradient;
use qpareto_core::spinsys::random_su_gate;
use qpareto_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_system(n: usize, rng: &mut ChaCha8Rng) -> SpinSystem {
    let omega: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..30.0)).collect();
    let mut j = vec![vec![0.0; n]; n];
    for k in 0..n {
        for l in k + 1..n {
            let v = rng.random_range(0.1..3.0);
            j[k][l] = v;
            j[l][k] = v;
        }
    }
    SpinSystem::new(omega, j).unwrap()
}

#[test]
fn drift_and_controls_match_entrywise_build() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 1..=4 {
        let sys = random_system(n, &mut rng);
        let h = drift_by_entries(sys.omega(), sys.couplings());
        assert!(frobenius(&(sys.drift_hamiltonian() - h)) < 1e-13, "n = {n}");
        for (k, c) in sys.control_operators().iter().enumerate() {
            assert!(frobenius(&(c - sx_by_entries(n, k))) < 1e-15);
        }
    }
}

#[test]
fn free_evolution_matches_series_exponential() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 1..=3 {
        let sys = random_system(n, &mut rng);
        let t = 3.7;
        let grid = make_grid(t, &sys, 0.9).unwrap();
        let zero = ControlFieldSet::zeros(grid, n);
        let u = propagate(&sys, &zero).unwrap();
        let h = drift_by_entries(sys.omega(), sys.couplings());
        let reference = expm_taylor(&(h * C64::new(0.0, -t)));
        let err = frobenius(&(u.final_propagator() - reference));
        assert!(err <= 1e-10, "n = {n}: {err:e}");
    }
}

#[test]
fn exact_gradient_matches_central_differences() {
    let sys = SpinSystem::with_uniform_coupling(vec![20.0, 24.0], 0.8).unwrap();
    for (seed, kind) in [
        (1, ObjectiveKind::PhaseDependent),
        (2, ObjectiveKind::PhaseIndependent),
    ] {
        let target = random_su_gate(2, seed);
        let grid = TimeGrid::new(2.0, 40).unwrap();
        let fields = init_fields(&sys, grid, 10, seed).unwrap().with_fluence(4.0);
        let cache = propagate(&sys, &fields).unwrap();
        let g = gradient(&cache, &target, kind, GradientMode::ExactDiscrete).unwrap();
        let fd = fd_gradient(&sys, &target, &fields, kind, 1e-4);
        let scale = fd.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        let worst = g
            .values
            .iter()
            .flatten()
            .zip(fd.iter().flatten())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(worst / scale <= 1e-6, "{kind:?}: {:e}", worst / scale);
    }
}

#[test]
fn continuum_gradient_approaches_exact_under_refinement() {
    let sys = SpinSystem::with_uniform_coupling(vec![20.0, 24.0], 0.8).unwrap();
    let target = make_gate(GateKind::Cnot, 2, 0).unwrap();
    let coarse = init_fields(&sys, TimeGrid::new(3.0, 60).unwrap(), 10, 7).unwrap();
    let mut errs = Vec::new();
    for steps in [60, 120, 240] {
        let grid = TimeGrid::new(3.0, steps).unwrap();
        let fields =
            dynamics::resample_fields(&coarse, grid, dynamics::ResampleMode::Compress).unwrap();
        let cache = propagate(&sys, &fields).unwrap();
        let kind = ObjectiveKind::PhaseDependent;
        let a = gradient(&cache, &target, kind, GradientMode::Continuum).unwrap();
        let b = gradient(&cache, &target, kind, GradientMode::ExactDiscrete).unwrap();
        let diff = a
            .flatten()
            .iter()
            .zip(b.flatten())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        errs.push(diff);
    }
    // first order in dt
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio > 1.6 && ratio < 2.5, "{errs:?}");
    }
}

#[test]
fn recorded_path_length_matches_field_chords() {
    let sys = SpinSystem::with_uniform_coupling(vec![20.0, 24.0], 0.8).unwrap();
    let target = make_gate(GateKind::Cnot, 2, 0).unwrap();
    let grid = make_grid(10.0, &sys, 0.9).unwrap();
    let start = init_fields(&sys, grid, 10, 0).unwrap();
    let settings = DmorphSettings {
        record_fields: true,
        ..DmorphSettings::default()
    };
    let (_, trace) = dmorph_run(
        &sys,
        &target,
        &start,
        ObjectiveKind::PhaseDependent,
        &settings,
    )
    .unwrap();
    assert!(trace.converged());
    let chord = chord_path_length(&trace.snapshots, grid.dt(), grid.duration());
    assert_relative_eq!(trace.lambda_star(), chord, max_relative = 0.01);
}
