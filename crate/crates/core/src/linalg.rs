//! Small dense complex linear algebra helpers.
//!
//! Dimensions here are at most 16, so everything is plain dense `DMatrix`
//! arithmetic. Exponentials of Hermitian generators go through the Hermitian
//! eigendecomposition, which keeps them unitary to rounding.

use alloc::vec::Vec;

use nalgebra::DVector;
#[allow(unused_imports)] // shadowed by std when a dependency links it
use num_traits::Float;

use crate::{Operator, C64};

pub fn zeros(dim: usize) -> Operator {
    Operator::zeros(dim, dim)
}

pub fn identity(dim: usize) -> Operator {
    Operator::identity(dim, dim)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    a.kronecker(b)
}

pub fn trace(a: &Operator) -> C64 {
    a.trace()
}

/// `Tr(a b)` without forming the product.
pub fn trace_of_product(a: &Operator, b: &Operator) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// `Tr(a^† b)`.
pub fn trace_adjoint_product(a: &Operator, b: &Operator) -> C64 {
    a.iter()
        .zip(b.iter())
        .fold(C64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

pub fn frobenius_norm(a: &Operator) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest elementwise deviation `max |a - a^†|`.
pub fn hermiticity_residual(a: &Operator) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `‖u^† u − I‖_F`.
pub fn unitarity_residual(u: &Operator) -> f64 {
    let n = u.nrows();
    let prod = u.adjoint() * u;
    frobenius_norm(&(prod - identity(n)))
}

pub fn commutator(a: &Operator, b: &Operator) -> Operator {
    a * b - b * a
}

pub fn scale(a: &Operator, z: C64) -> Operator {
    a * z
}

/// Eigendecomposition `h = V diag(λ) V^†` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: Operator,
}

impl HermitianEigen {
    pub fn new(h: &Operator) -> Self {
        let eig = h.clone().symmetric_eigen();
        Self {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }

    /// `V diag(f(λ)) V^†`.
    pub fn apply<F: Fn(f64) -> C64>(&self, f: F) -> Operator {
        let diag = DVector::from_iterator(self.values.len(), self.values.iter().map(|&l| f(l)));
        let mut scaled = self.vectors.clone();
        for (mut col, d) in scaled.column_iter_mut().zip(diag.iter()) {
            col *= *d;
        }
        scaled * self.vectors.adjoint()
    }
}

/// `exp(-i h t)` for Hermitian `h`.
pub fn expm_hermitian(h: &Operator, t: f64) -> Operator {
    HermitianEigen::new(h).apply(|l| C64::new(0.0, -l * t).exp())
}

/// Divided difference of `λ ↦ exp(-i λ t)` at `(a, b)`; the derivative when
/// the two points coincide.
///
/// Written as `-i t · exp(-i t (a+b)/2) · sinc(t (a−b)/2)`, which needs no
/// special case for near-degenerate eigenvalues.
pub fn exp_divided_difference(a: f64, b: f64, t: f64) -> C64 {
    let mid = 0.5 * (a + b);
    let x = 0.5 * (a - b) * t;
    C64::new(0.0, -t) * C64::new(0.0, -mid * t).exp() * sinc(x)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Determinant via LU.
pub fn determinant(a: &Operator) -> C64 {
    a.clone().determinant()
}
