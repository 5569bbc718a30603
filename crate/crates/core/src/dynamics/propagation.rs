use alloc::vec::Vec;

use crate::linalg::{identity, HermitianEigen};
use crate::{ControlFieldSet, Error, Operator, Result, SpinSystem, C64};

/// Drift and control operators of a system, built once and reused for every
/// propagation.
#[derive(Debug, Clone)]
pub struct ControlModel {
    pub drift: Operator,
    pub controls: Vec<Operator>,
    /// Basis bit flipped by each `S_x^(k)`.
    pub control_bits: Vec<usize>,
}

impl ControlModel {
    pub fn new(system: &SpinSystem) -> Self {
        Self {
            drift: system.drift_hamiltonian(),
            controls: system.control_operators(),
            control_bits: (0..system.qubits())
                .map(|k| system.control_bit(k))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn fields(&self) -> usize {
        self.controls.len()
    }

    /// `H₀ + Σ_k ε_k S_x^(k)`.
    pub fn hamiltonian(&self, amplitudes: impl IntoIterator<Item = f64>) -> Operator {
        let mut h = self.drift.clone();
        for (bit, eps) in self.control_bits.iter().zip(amplitudes) {
            add_sx(&mut h, *bit, eps);
        }
        h
    }

    pub fn propagate(&self, fields: &ControlFieldSet) -> Result<PropagationCache> {
        if fields.fields() != self.fields() {
            return Err(Error::DimensionMismatch {
                expected: self.fields(),
                got: fields.fields(),
            });
        }
        let grid = fields.grid;
        let dt = grid.dt();
        let m = grid.steps();
        let mut step_eigen = Vec::with_capacity(m);
        let mut step_propagators = Vec::with_capacity(m);
        let mut forward = Vec::with_capacity(m + 1);
        forward.push(identity(self.dim()));
        for j in 0..m {
            let h = self.hamiltonian(fields.values.iter().map(|row| row[j]));
            let eig = HermitianEigen::new(&h);
            let u = eig.apply(|l| C64::new(0.0, -l * dt).exp());
            let next = &u * &forward[j];
            forward.push(next);
            step_propagators.push(u);
            step_eigen.push(eig);
        }
        Ok(PropagationCache {
            dt,
            step_eigen,
            step_propagators,
            forward_products: forward,
            controls: self.controls.clone(),
            control_bits: self.control_bits.clone(),
        })
    }
}

/// `h += eps · S_x` where `S_x` flips `bit`.
pub(crate) fn add_sx(h: &mut Operator, bit: usize, eps: f64) {
    let half = C64::new(0.5 * eps, 0.0);
    for a in 0..h.nrows() {
        h[(a, a ^ bit)] += half;
    }
}

/// Propagators of one field set.
#[derive(Debug, Clone)]
pub struct PropagationCache {
    pub dt: f64,
    /// Eigendecomposition of each step Hamiltonian.
    pub step_eigen: Vec<HermitianEigen>,
    /// `U_j = exp(−i H_j dt)`.
    pub step_propagators: Vec<Operator>,
    /// `U(t_j, 0)` for `j = 0..=M`.
    pub forward_products: Vec<Operator>,
    pub controls: Vec<Operator>,
    pub control_bits: Vec<usize>,
}

impl PropagationCache {
    pub fn steps(&self) -> usize {
        self.step_propagators.len()
    }

    pub fn dim(&self) -> usize {
        self.forward_products[0].nrows()
    }

    /// `U_T`.
    pub fn final_propagator(&self) -> &Operator {
        self.forward_products
            .last()
            .expect("cache holds at least the identity")
    }

    /// `U†(t_j) H_c^(k) U(t_j)` at node `j`.
    pub fn conjugated_control(&self, k: usize, j: usize) -> Operator {
        let u = &self.forward_products[j];
        u.adjoint() * &self.controls[k] * u
    }

    /// Conjugated controls for every field and every node, `[k][j]`.
    pub fn conjugated_controls(&self) -> Vec<Vec<Operator>> {
        (0..self.controls.len())
            .map(|k| {
                (0..self.forward_products.len())
                    .map(|j| self.conjugated_control(k, j))
                    .collect()
            })
            .collect()
    }

    /// `W† U(T, t_j)` for `j = 0..=M`.
    pub fn backward_products(&self, w: &Operator) -> Vec<Operator> {
        let m = self.steps();
        let mut back = Vec::with_capacity(m + 1);
        back.push(w.adjoint());
        for j in (0..m).rev() {
            let next = back.last().unwrap() * &self.step_propagators[j];
            back.push(next);
        }
        back.reverse();
        back
    }
}

/// Builds the model and propagates in one call.
pub fn propagate(system: &SpinSystem, fields: &ControlFieldSet) -> Result<PropagationCache> {
    ControlModel::new(system).propagate(fields)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{init_fields, make_grid, TimeGrid};
    use crate::linalg::{frobenius_norm, hermiticity_residual, unitarity_residual};
    use crate::spinsys::no_couplings;
    use alloc::vec;

    #[test]
    fn free_precession_single_spin() {
        let sys = SpinSystem::new(vec![20.0], no_couplings(1)).unwrap();
        let t = 1.3;
        let grid = make_grid(t, &sys, 0.9).unwrap();
        let cache = propagate(&sys, &ControlFieldSet::zeros(grid, 1)).unwrap();
        let u = cache.final_propagator();
        assert!((u[(0, 0)] - C64::new(0.0, -10.0 * t).exp()).norm() < 1e-12);
        assert!((u[(1, 1)] - C64::new(0.0, 10.0 * t).exp()).norm() < 1e-12);
        assert!(u[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn cache_invariants() {
        let sys = SpinSystem::with_uniform_coupling(vec![20.0, 24.0], 0.8).unwrap();
        let grid = make_grid(3.0, &sys, 0.9).unwrap();
        let fields = init_fields(&sys, grid, 10, 11).unwrap();
        let cache = propagate(&sys, &fields).unwrap();
        assert_eq!(cache.forward_products[0], identity(4));
        for j in 1..=cache.steps() {
            assert!(unitarity_residual(&cache.forward_products[j]) <= 1e-10);
            let comp = &cache.step_propagators[j - 1] * &cache.forward_products[j - 1];
            assert!(frobenius_norm(&(comp - &cache.forward_products[j])) <= 1e-12);
        }
        for row in cache.conjugated_controls() {
            for h in row {
                assert!(hermiticity_residual(&h) <= 1e-12);
            }
        }
        let w = identity(4);
        let back = cache.backward_products(&w);
        // W† U(T, t_j) U(t_j) = W† U_T at every node
        for j in 0..=cache.steps() {
            let full = &back[j] * &cache.forward_products[j];
            assert!(frobenius_norm(&(full - cache.final_propagator())) < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let sys = SpinSystem::with_uniform_coupling(vec![20.0, 24.0], 0.8).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        assert!(matches!(
            propagate(&sys, &ControlFieldSet::zeros(grid, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
