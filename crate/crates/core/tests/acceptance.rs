//! Acceptance checks, one PASS/FAIL line each.
//!
//! Runs everything by default (about 20 minutes on one core). Set
//! `QPARETO_CRITERIA=1,2,5` to run a subset. Failures only set the exit
//! status when `QPARETO_STRICT` is set.

mod common;

use std::time::Instant;

use common::*;
use qpareto_core::dmorph::DmorphSettings;
use qpareto_core::dynamics::{init_fields, propagate, resample_fields, ResampleMode};
use qpareto_core::noise::{hessian_diag_block, predicted_error, NoiseSampler, NoiseSpec};
use qpareto_core::objective::{distance, gradient, phase_independent_distance};
use qpareto_core::pft::{loglog_slope, pft_run, PftSettings, PftTrajectory};
use qpareto_core::phase::{phase_run, PhaseRunRecord, PhaseStudySettings};
use qpareto_core::spinsys::{phase_factor, random_su_gate};
use qpareto_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const D_CONVERGED: f64 = 1e-8;

fn cnot_system(j: f64) -> SpinSystem {
    SpinSystem::with_uniform_coupling(vec![20.0, 24.0], j).unwrap()
}

fn cnot() -> TargetGate {
    make_gate(GateKind::Cnot, 2, 0).unwrap()
}

fn optimize(
    sys: &SpinSystem,
    target: &TargetGate,
    t: f64,
    seed: u64,
    record: bool,
) -> (ControlFieldSet, OptimizationTrace) {
    let grid = make_grid(t, sys, 0.9).unwrap();
    let start = init_fields(sys, grid, 10, seed).unwrap();
    let settings = DmorphSettings {
        record_fields: record,
        ..DmorphSettings::default()
    };
    dmorph_run(
        sys,
        target,
        &start,
        ObjectiveKind::PhaseDependent,
        &settings,
    )
    .unwrap()
}

/// Results shared between criteria.
#[derive(Default)]
struct Shared {
    cnot_t10: Option<Vec<(ControlFieldSet, OptimizationTrace)>>,
    pft_j08: Option<PftTrajectory>,
}

impl Shared {
    fn cnot_t10(&mut self) -> &[(ControlFieldSet, OptimizationTrace)] {
        self.cnot_t10.get_or_insert_with(|| {
            let sys = cnot_system(0.8);
            (0..10)
                .map(|seed| optimize(&sys, &cnot(), 10.0, seed, true))
                .collect()
        })
    }

    fn pft_j08(&mut self) -> &PftTrajectory {
        self.pft_j08.get_or_insert_with(|| critical_sweep(0.8, 4.5))
    }
}

fn critical_sweep(j: f64, t0: f64) -> PftTrajectory {
    let mut settings = PftSettings::critical(t0, 0);
    settings.verify = false;
    pft_run(&cnot_system(j), &cnot(), &settings).unwrap()
}

type Outcome = (bool, String);

fn gradient_fd(_: &mut Shared) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let mut steps_max = 0;
    for i in 0..10u64 {
        let omega = vec![rng.random_range(10.0..25.0), rng.random_range(10.0..25.0)];
        let sys = SpinSystem::with_uniform_coupling(omega, rng.random_range(0.2..3.0)).unwrap();
        let t = rng.random_range(1.0..8.0);
        let grid = make_grid(t, &sys, 0.9).unwrap();
        steps_max = steps_max.max(grid.steps());
        let target = random_su_gate(2, 100 + i);
        let fields = init_fields(&sys, grid, 10, i).unwrap();
        let kind = ObjectiveKind::PhaseDependent;
        let cache = propagate(&sys, &fields).unwrap();
        let g = gradient(&cache, &target, kind, GradientMode::ExactDiscrete).unwrap();
        let fd = fd_gradient(&sys, &target, &fields, kind, 1e-4);
        let scale = fd.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        let err = g
            .flatten()
            .iter()
            .zip(fd.iter().flatten())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(err / scale);
    }
    (
        worst <= 1e-6 && steps_max <= 200,
        format!("max |g - g_fd| / max |g_fd| = {worst:.2e}, M ≤ {steps_max}"),
    )
}

fn free_evolution(_: &mut Shared) -> Outcome {
    let mut worst = 0.0f64;
    for n in 1..=3 {
        let sys = SpinSystem::uniform(n, 0.8).unwrap();
        let t = 10.0;
        let grid = make_grid(t, &sys, 0.9).unwrap();
        let u = propagate(&sys, &ControlFieldSet::zeros(grid, n)).unwrap();
        let h = drift_by_entries(sys.omega(), sys.couplings());
        let reference = expm_taylor(&(h * C64::new(0.0, -t)));
        worst = worst.max(frobenius(&(u.final_propagator() - reference)));
    }
    (
        worst <= 1e-10,
        format!("max ‖U − exp(−iH₀T)‖_F = {worst:.2e}"),
    )
}

fn trace_identity(_: &mut Shared) -> Outcome {
    let mut worst = 0.0f64;
    for n in 2..=4 {
        let sys = SpinSystem::uniform(n, 0.8).unwrap();
        for k in 0..n {
            for j in 0..n {
                let expect = if k == j { 0.125 } else { 0.0 };
                worst = worst.max((hessian_diag_block(&sys, k, j).unwrap() - expect).abs());
            }
        }
    }
    (
        worst <= 1e-14,
        format!("max deviation from δ/8 = {worst:.2e}"),
    )
}

fn distance_extremes(_: &mut Shared) -> Outcome {
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let gates = [
        make_gate(GateKind::Cnot, 2, 0).unwrap(),
        make_gate(GateKind::Swap, 2, 0).unwrap(),
        make_gate(GateKind::SqrtSwap, 2, 0).unwrap(),
        make_gate(GateKind::Cphase(std::f64::consts::FRAC_PI_2), 2, 0).unwrap(),
        make_gate(GateKind::Qft, 2, 0).unwrap(),
        make_gate(GateKind::Qft, 3, 0).unwrap(),
        make_gate(GateKind::QftPrime, 3, 0).unwrap(),
    ];
    for w in &gates {
        let n = w.dim() as f64;
        worst = worst.max(distance(&w.matrix, w).unwrap().abs());
        worst = worst.max((distance(&(-&w.matrix), w).unwrap() - 4.0 * n).abs());
        for m in 0..w.dim() {
            let u = &w.matrix * phase_factor(m as isize, w.dim());
            worst = worst.max(phase_independent_distance(&u, w).unwrap().abs());
        }
        let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let u = &w.matrix * C64::from_polar(1.0, phi);
        worst = worst.max(phase_independent_distance(&u, w).unwrap().abs());
    }
    (worst <= 1e-14, format!("max deviation = {worst:.2e}"))
}

fn noise_closed_form(_: &mut Shared) -> Outcome {
    let sys = cnot_system(0.8);
    let noise = NoiseSpec::independent(1e-4, 2).unwrap();
    let p = predicted_error(&sys, 10.0, &noise).unwrap();
    (p == 1.25e-4, format!("predicted = {p:e}"))
}

fn convergence(shared: &mut Shared) -> Outcome {
    let runs = shared.cnot_t10();
    let ok = runs
        .iter()
        .filter(|(_, t)| t.final_objective() <= D_CONVERGED)
        .count();
    let worst = runs
        .iter()
        .map(|(_, t)| t.final_objective())
        .fold(0.0f64, f64::max);
    let efforts: Vec<usize> = runs.iter().map(|(_, t)| t.accepted_steps).collect();
    (
        ok == 10,
        format!("{ok}/10 seeds reach D ≤ 1e-8 (worst {worst:.3e}, steps {efforts:?})"),
    )
}

fn monotone_and_path(shared: &mut Shared) -> Outcome {
    let runs = shared.cnot_t10();
    let mut worst_rise = f64::NEG_INFINITY;
    let mut worst_rel = 0.0f64;
    for (fields, trace) in runs {
        for w in trace.steps.windows(2) {
            worst_rise = worst_rise.max(w[1].objective - w[0].objective);
        }
        let grid = fields.grid;
        let chord = chord_path_length(&trace.snapshots, grid.dt(), grid.duration());
        worst_rel = worst_rel.max((trace.lambda_star() - chord).abs() / chord);
    }
    (
        worst_rise <= 1e-9 && worst_rel <= 0.01,
        format!(
            "largest step change {worst_rise:.2e}, max |Λ_Σ − Λ_chord| / Λ_chord = {worst_rel:.2e}"
        ),
    )
}

fn noise_linearity(shared: &mut Shared) -> Outcome {
    let sys = cnot_system(0.8);
    let target = cnot();
    let fields = shared.cnot_t10()[0].0.clone();
    let trials = 2000u64;
    let run = |sigma2: f64| {
        let noise = NoiseSpec::independent(sigma2, 2).unwrap();
        let sampler = NoiseSampler::new(&sys, &target, &fields, &noise, 1).unwrap();
        let samples: Vec<f64> = (0..trials).map(|i| sampler.trial(i)).collect();
        qpareto_core::noise::mean_and_stderr(&samples)
    };
    let (m1, s1) = run(1e-5);
    let (m2, s2) = run(5e-6);
    let within = (m1 / 1.25e-5 - 1.0).abs() <= 0.1;
    // independent-sample bound; the two runs share streams, so this is loose
    let halving = (m1 / 2.0 - m2).abs() <= 3.0 * (s1 * s1 / 4.0 + s2 * s2).sqrt();
    (
        within && halving,
        format!(
            "mean(1e-5) = {m1:.4e} ± {s1:.1e} ({:+.1}%), mean(5e-6) = {m2:.4e} ± {s2:.1e}, ratio {:.4}",
            100.0 * (m1 / 1.25e-5 - 1.0),
            m1 / m2
        ),
    )
}

fn effort_trend(_: &mut Shared) -> Outcome {
    let sys = cnot_system(0.8);
    let target = cnot();
    let mut medians = Vec::new();
    let mut all_converged = true;
    for t in [10.0, 6.0, 4.5, 4.2] {
        let efforts: Vec<usize> = (0..5)
            .map(|seed| {
                let (_, trace) = optimize(&sys, &target, t, seed, false);
                all_converged &= trace.converged();
                trace.accepted_steps
            })
            .collect();
        medians.push(median(efforts));
    }
    let increasing = medians.windows(2).all(|w| w[1] > w[0]);
    (
        increasing,
        format!(
            "median steps at T = 10, 6, 4.5, 4.2: {medians:?} (all converged: {all_converged})"
        ),
    )
}

fn critical_time(shared: &mut Shared) -> Outcome {
    let traj = shared.pft_j08();
    match traj.critical {
        Some(ct) => (
            (ct.t_star - 4.12).abs() <= 0.05,
            format!(
                "T* = {:.4} (next point {:.4} failed), {} points",
                ct.t_star,
                ct.t_star - ct.uncertainty,
                traj.points.len()
            ),
        ),
        None => (false, "no critical time".into()),
    }
}

fn pareto_steepness(shared: &mut Shared) -> Outcome {
    let sys = cnot_system(0.8);
    let target = cnot();
    let (start, budget, retry) = {
        let traj = shared.pft_j08();
        let mut s = PftSettings::critical(traj.t0, 0);
        s.verify = false;
        (
            traj.points.last().unwrap().fields.clone(),
            s.budget_at(4.0),
            s.retry_factor,
        )
    };
    let grid = make_grid(4.0, &sys, 0.9).unwrap();
    // the warm start gets what the sweep would have spent on this point
    let mut starts = vec![(
        "warm",
        resample_fields(&start, grid, ResampleMode::Compress).unwrap(),
        budget * (1 + retry),
    )];
    for seed in 0..2 {
        starts.push(("cold", init_fields(&sys, grid, 10, seed).unwrap(), budget));
    }
    let mut best = f64::INFINITY;
    let mut notes = Vec::new();
    for (label, f0, max_steps) in starts {
        let settings = DmorphSettings {
            max_steps,
            ..DmorphSettings::default()
        };
        let (_, trace) =
            dmorph_run(&sys, &target, &f0, ObjectiveKind::PhaseDependent, &settings).unwrap();
        best = best.min(trace.final_objective());
        notes.push(format!(
            "{label} {:.3e} ({}, {} steps)",
            trace.final_objective(),
            trace.termination.as_str(),
            trace.accepted_steps
        ));
    }
    (
        best > 1e-5,
        format!("best D at T = 4.0: {best:.3e}; {}", notes.join(", ")),
    )
}

fn coupling_scaling(shared: &mut Shared) -> Outcome {
    let mut js = vec![0.8];
    let mut ts = Vec::new();
    let mut notes = Vec::new();
    match shared.pft_j08().critical {
        Some(ct) => ts.push(ct.t_star),
        None => return (false, "no T* at J = 0.8".into()),
    }
    for j in [1.6, 3.2] {
        // T0 = 3.6/J lands too close to T* for the first step at J = 3.2
        let mut settings = PftSettings::critical(4.8 / j, 0);
        settings.verify = false;
        match pft_run(&cnot_system(j), &cnot(), &settings).map(|t| t.critical) {
            Ok(Some(ct)) => {
                js.push(j);
                ts.push(ct.t_star);
            }
            Ok(None) => notes.push(format!("no T* at J = {j}")),
            Err(e) => notes.push(format!("J = {j}: {e}")),
        }
    }
    if ts.len() < 3 {
        return (false, notes.join("; "));
    }
    let slope = loglog_slope(&js, &ts).unwrap();
    (
        (-1.05..=-0.95).contains(&slope),
        format!("T* = {ts:.4?} at J = {js:?}, slope {slope:.4}"),
    )
}

fn phase_reachability(_: &mut Shared) -> Outcome {
    let sys = cnot_system(0.8);
    let swap = make_gate(GateKind::Swap, 2, 0).unwrap();
    let ensemble = |t: f64, runs: u64| -> Vec<PhaseRunRecord> {
        let mut settings = PhaseStudySettings::new(t);
        settings.initial_fluence = 36.0;
        (0..runs)
            .map(|seed| phase_run(&sys, &swap, seed, &settings).unwrap())
            .collect()
    };
    let at10 = ensemble(10.0, 10);
    let good: Vec<&PhaseRunRecord> = at10.iter().filter(|r| r.phase_m % 2 == 0).collect();
    let bad: Vec<&PhaseRunRecord> = at10.iter().filter(|r| r.phase_m % 2 == 1).collect();
    let good_ok = !good.is_empty() && good.iter().all(|r| r.final_g <= 1e-8);
    let bad_ok = !bad.is_empty() && bad.iter().all(|r| (r.final_g / 2.1e-2 - 1.0).abs() <= 0.2);
    let at12 = ensemble(12.0, 10);
    let all12 = at12.iter().all(|r| r.final_g <= 1e-8);
    let bad_g: Vec<String> = bad.iter().map(|r| format!("{:.3e}", r.final_g)).collect();
    (
        good_ok && bad_ok && all12,
        format!(
            "T = 10: {}/{} of m∈{{0,2}} converged, m∈{{1,3}} G = [{}]; T = 12: {}/10 converged",
            good.iter().filter(|r| r.final_g <= 1e-8).count(),
            good.len(),
            bad_g.join(", "),
            at12.iter().filter(|r| r.final_g <= 1e-8).count()
        ),
    )
}

type Check = fn(&mut Shared) -> Outcome;

fn main() {
    let criteria: [(usize, &str, Check); 13] = [
        (1, "gradient vs finite differences", gradient_fd),
        (2, "free-evolution oracle", free_evolution),
        (3, "trace identity", trace_identity),
        (4, "distance extremes", distance_extremes),
        (5, "noise closed form", noise_closed_form),
        (6, "CNOT T=10 convergence", convergence),
        (7, "monotone descent and path length", monotone_and_path),
        (8, "Monte-Carlo noise linearity", noise_linearity),
        (9, "effort trend", effort_trend),
        (10, "critical time", critical_time),
        (11, "Pareto steepness", pareto_steepness),
        (12, "1/J scaling", coupling_scaling),
        (13, "global-phase reachability", phase_reachability),
    ];
    let selected: Option<Vec<usize>> = std::env::var("QPARETO_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut shared = Shared::default();
    let mut failed = 0;
    for (id, name, check) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = check(&mut shared);
        failed += usize::from(!ok);
        println!(
            "criterion {id:>2} {name}: {} [{:.1}s] {detail}",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        // a red criterion is a research result, not a broken build
        if std::env::var_os("QPARETO_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
