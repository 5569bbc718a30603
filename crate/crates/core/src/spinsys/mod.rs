//! Coupled spin-1/2 systems with isotropic Heisenberg exchange and
//! x-polarized single-qubit controls.
//!
//! Basis ordering is the tensor order `qubit 1 ⊗ … ⊗ qubit n` with
//! `|↑⟩ = (1, 0)` first, so qubit `k` (0-based) flips bit `n − 1 − k` of the
//! basis index.

mod gates;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

pub use gates::{
    make_gate, phase_factor, random_su_gate, su_gate_from_generator, GateKind, TargetGate,
};

use crate::linalg::{identity, kron};
use crate::{Error, Operator, Result, C64};

/// Frequencies used when a system is built from a qubit count alone.
pub const DEFAULT_FREQUENCIES: [f64; 4] = [20.0, 24.0, 30.0, 40.0];

/// Cartesian spin component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// `S_a = σ_a / 2` for a single spin.
pub fn spin_half(axis: Axis) -> Operator {
    let z = C64::new(0.0, 0.0);
    let h = C64::new(0.5, 0.0);
    let ih = C64::new(0.0, 0.5);
    match axis {
        Axis::X => Operator::from_row_slice(2, 2, &[z, h, h, z]),
        Axis::Y => Operator::from_row_slice(2, 2, &[z, -ih, ih, z]),
        Axis::Z => Operator::from_row_slice(2, 2, &[h, z, z, -h]),
    }
}

/// Qubit count, transition frequencies and the symmetric coupling matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    omega: Vec<f64>,
    couplings: Vec<Vec<f64>>,
}

impl SpinSystem {
    pub fn new(omega: Vec<f64>, couplings: Vec<Vec<f64>>) -> Result<Self> {
        let n = omega.len();
        if n == 0 {
            return Err(Error::InvalidSystem(
                "at least one qubit is required".into(),
            ));
        }
        for (k, &w) in omega.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidSystem(format!(
                    "omega[{k}] = {w} must be finite and positive"
                )));
            }
            if omega[..k].iter().any(|&v| v == w) {
                return Err(Error::InvalidSystem(format!(
                    "omega[{k}] = {w} repeats an earlier frequency"
                )));
            }
        }
        if couplings.len() != n || couplings.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidSystem(format!(
                "coupling matrix must be {n}x{n}"
            )));
        }
        for k in 0..n {
            if couplings[k][k] != 0.0 {
                return Err(Error::InvalidSystem(format!(
                    "coupling diagonal entry ({k},{k}) must be zero"
                )));
            }
            for j in 0..n {
                let v = couplings[k][j];
                if !v.is_finite() {
                    return Err(Error::InvalidSystem(format!(
                        "coupling ({k},{j}) not finite"
                    )));
                }
                if v != couplings[j][k] {
                    return Err(Error::InvalidSystem(format!(
                        "coupling matrix not symmetric at ({k},{j})"
                    )));
                }
            }
        }
        Ok(Self { omega, couplings })
    }

    /// `n` qubits with the default frequencies and one coupling `j` between
    /// every pair.
    pub fn uniform(n: usize, j: f64) -> Result<Self> {
        if n == 0 || n > DEFAULT_FREQUENCIES.len() {
            return Err(Error::InvalidSystem(format!(
                "default frequencies cover 1..={} qubits, got {n}",
                DEFAULT_FREQUENCIES.len()
            )));
        }
        Self::with_uniform_coupling(DEFAULT_FREQUENCIES[..n].to_vec(), j)
    }

    pub fn with_uniform_coupling(omega: Vec<f64>, j: f64) -> Result<Self> {
        let n = omega.len();
        let couplings = (0..n)
            .map(|a| (0..n).map(|b| if a == b { 0.0 } else { j }).collect())
            .collect();
        Self::new(omega, couplings)
    }

    pub fn qubits(&self) -> usize {
        self.omega.len()
    }

    /// Hilbert-space dimension `2^n`.
    pub fn dim(&self) -> usize {
        1 << self.omega.len()
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn couplings(&self) -> &[Vec<f64>] {
        &self.couplings
    }

    /// Largest transition frequency.
    pub fn max_frequency(&self) -> f64 {
        self.omega.iter().copied().fold(f64::MIN, f64::max)
    }

    /// Mean of the off-diagonal couplings `J^(k,j)`, `k < j`.
    pub fn mean_coupling(&self) -> f64 {
        let n = self.qubits();
        if n < 2 {
            return 0.0;
        }
        let mut sum = 0.0;
        for k in 0..n {
            for j in k + 1..n {
                sum += self.couplings[k][j];
            }
        }
        sum / (n * (n - 1) / 2) as f64
    }

    /// Same frequencies, every coupling multiplied by `factor`.
    pub fn scaled_couplings(&self, factor: f64) -> Result<Self> {
        let couplings = self
            .couplings
            .iter()
            .map(|row| row.iter().map(|v| v * factor).collect())
            .collect();
        Self::new(self.omega.clone(), couplings)
    }

    /// `S_a^(k)`: the spin operator of qubit `k` (0-based) embedded in the
    /// full space.
    pub fn spin_operator(&self, k: usize, axis: Axis) -> Operator {
        embed(self.qubits(), k, &spin_half(axis))
    }

    /// `H₀ = Σ_k ω_k S_z^(k) + Σ_{k<j} J^(k,j) S^(k)·S^(j)`.
    pub fn drift_hamiltonian(&self) -> Operator {
        let n = self.qubits();
        let mut h = Operator::zeros(self.dim(), self.dim());
        for (k, &w) in self.omega.iter().enumerate() {
            h += self.spin_operator(k, Axis::Z) * C64::new(w, 0.0);
        }
        for k in 0..n {
            for j in k + 1..n {
                let coupling = self.couplings[k][j];
                if coupling == 0.0 {
                    continue;
                }
                for axis in [Axis::X, Axis::Y, Axis::Z] {
                    let term = self.spin_operator(k, axis) * self.spin_operator(j, axis);
                    h += term * C64::new(coupling, 0.0);
                }
            }
        }
        h
    }

    /// `[S_x^(1), …, S_x^(n)]`.
    pub fn control_operators(&self) -> Vec<Operator> {
        (0..self.qubits())
            .map(|k| self.spin_operator(k, Axis::X))
            .collect()
    }

    /// Basis-index bit flipped by `S_x^(k)`.
    pub fn control_bit(&self, k: usize) -> usize {
        1 << (self.qubits() - 1 - k)
    }
}

/// `build_drift_hamiltonian`.
pub fn build_drift_hamiltonian(system: &SpinSystem) -> Operator {
    system.drift_hamiltonian()
}

/// `build_control_operators`.
pub fn build_control_operators(system: &SpinSystem) -> Vec<Operator> {
    system.control_operators()
}

fn embed(n: usize, k: usize, op: &Operator) -> Operator {
    let id2 = identity(2);
    let mut out = Operator::identity(1, 1);
    for q in 0..n {
        out = kron(&out, if q == k { op } else { &id2 });
    }
    out
}

/// Zero coupling matrix for `n` qubits.
pub fn no_couplings(n: usize) -> Vec<Vec<f64>> {
    vec![vec![0.0; n]; n]
}
