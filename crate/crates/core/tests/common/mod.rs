// Test-only reference implementations. None of these call into the library
// routines they check.
#![allow(dead_code)]

use nalgebra::DMatrix;
use qpareto_core::dynamics::propagate;
use qpareto_core::objective::objective_value;
use qpareto_core::{ControlFieldSet, ObjectiveKind, SpinSystem, TargetGate, C64};

pub type Mat = DMatrix<C64>;

fn bit(a: usize, n: usize, k: usize) -> usize {
    (a >> (n - 1 - k)) & 1
}

/// Drift Hamiltonian written entry by entry in the computational basis.
///
/// `S_z` is diagonal with `+1/2` on bit 0 and `−1/2` on bit 1;
/// `S_x S_x + S_y S_y` swaps antiparallel pairs with amplitude `1/2`.
pub fn drift_by_entries(omega: &[f64], j: &[Vec<f64>]) -> Mat {
    let n = omega.len();
    let dim = 1 << n;
    let sz = |a: usize, k: usize| 0.5 - bit(a, n, k) as f64;
    let mut h = Mat::zeros(dim, dim);
    for a in 0..dim {
        let mut diag = 0.0;
        for k in 0..n {
            diag += omega[k] * sz(a, k);
            for l in k + 1..n {
                diag += j[k][l] * sz(a, k) * sz(a, l);
                if bit(a, n, k) != bit(a, n, l) {
                    let b = a ^ (1 << (n - 1 - k)) ^ (1 << (n - 1 - l));
                    h[(b, a)] += C64::new(0.5 * j[k][l], 0.0);
                }
            }
        }
        h[(a, a)] += C64::new(diag, 0.0);
    }
    h
}

/// `S_x` of qubit `k`, entry by entry.
pub fn sx_by_entries(n: usize, k: usize) -> Mat {
    let dim = 1 << n;
    let flip = 1 << (n - 1 - k);
    Mat::from_fn(dim, dim, |a, b| {
        if a ^ b == flip {
            C64::new(0.5, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// `exp(a)` by scaling and squaring a truncated Taylor series.
pub fn expm_taylor(a: &Mat) -> Mat {
    let norm = a.iter().map(|z| z.norm()).sum::<f64>();
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.05 {
        scale *= 0.5;
        squarings += 1;
    }
    let x = a * C64::new(scale, 0.0);
    let dim = a.nrows();
    let mut term = Mat::identity(dim, dim);
    let mut sum = term.clone();
    for k in 1..=20 {
        term = &term * &x * C64::new(1.0 / k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

pub fn frobenius(a: &Mat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Central-difference gradient per unit time, `[k][j]`.
pub fn fd_gradient(
    system: &SpinSystem,
    target: &TargetGate,
    fields: &ControlFieldSet,
    kind: ObjectiveKind,
    h: f64,
) -> Vec<Vec<f64>> {
    let dt = fields.grid.dt();
    let value = |f: &ControlFieldSet| {
        let u = propagate(system, f).unwrap();
        objective_value(kind, u.final_propagator(), target).unwrap()
    };
    (0..fields.fields())
        .map(|k| {
            (0..fields.grid.steps())
                .map(|j| {
                    let mut plus = fields.clone();
                    plus.values[k][j] += h;
                    let mut minus = fields.clone();
                    minus.values[k][j] -= h;
                    (value(&plus) - value(&minus)) / (2.0 * h * dt)
                })
                .collect()
        })
        .collect()
}

/// Path length from consecutive knob snapshots:
/// `Σ_i ‖ε_{i+1} − ε_i‖_{L2} / √T`.
pub fn chord_path_length(snapshots: &[Vec<f64>], dt: f64, duration: f64) -> f64 {
    snapshots
        .windows(2)
        .map(|w| {
            let sq: f64 = w[0].iter().zip(&w[1]).map(|(a, b)| (b - a) * (b - a)).sum();
            (sq * dt).sqrt()
        })
        .sum::<f64>()
        / duration.sqrt()
}

pub fn median(mut xs: Vec<usize>) -> f64 {
    xs.sort_unstable();
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2] as f64
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2]) as f64
    }
}
