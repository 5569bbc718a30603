use alloc::format;
use alloc::string::{String, ToString};
use core::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, FRAC_PI_8, PI};
use core::fmt;

#[allow(unused_imports)] // shadowed by std when a dependency links it
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{determinant, HermitianEigen};
use crate::{Error, Operator, Result, C64};

/// Named target transformations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateKind {
    Cnot,
    Swap,
    SqrtSwap,
    /// Fourier transform with matrix indices starting at 0.
    Qft,
    /// Fourier transform with matrix indices starting at 1.
    QftPrime,
    Cphase(f64),
    Identity,
    /// `exp(iA)` for a seeded random traceless Hermitian `A`.
    Random(u64),
}

impl GateKind {
    /// Parses `CNOT`, `SWAP`, `SQRT_SWAP`, `QFT`, `QFT_PRIME`, `IDENTITY`,
    /// `CPHASE` (angle from `alpha`) or `RANDOM` (seed from `seed`).
    pub fn from_name(name: &str, alpha: Option<f64>, seed: Option<u64>) -> Result<Self> {
        let upper = name.trim().to_ascii_uppercase();
        Ok(match upper.as_str() {
            "CNOT" => GateKind::Cnot,
            "SWAP" => GateKind::Swap,
            "SQRT_SWAP" | "SQRTSWAP" => GateKind::SqrtSwap,
            "QFT" => GateKind::Qft,
            "QFT_PRIME" | "QFT'" => GateKind::QftPrime,
            "IDENTITY" | "I" => GateKind::Identity,
            "CPHASE" => GateKind::Cphase(
                alpha
                    .ok_or_else(|| Error::UnknownGate("CPHASE needs an angle alpha".to_string()))?,
            ),
            "RANDOM" => GateKind::Random(seed.unwrap_or(0)),
            _ => return Err(Error::UnknownGate(name.to_string())),
        })
    }

    pub fn name(&self) -> String {
        match self {
            GateKind::Cnot => "CNOT".into(),
            GateKind::Swap => "SWAP".into(),
            GateKind::SqrtSwap => "SQRT_SWAP".into(),
            GateKind::Qft => "QFT".into(),
            GateKind::QftPrime => "QFT_PRIME".into(),
            GateKind::Cphase(a) => format!("CPHASE({a})"),
            GateKind::Identity => "IDENTITY".into(),
            GateKind::Random(seed) => format!("RANDOM({seed})"),
        }
    }

    fn two_qubit_only(&self) -> bool {
        matches!(
            self,
            GateKind::Cnot | GateKind::Swap | GateKind::SqrtSwap | GateKind::Cphase(_)
        )
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// An SU(N) target with its global-phase index `m`: the matrix is
/// `e^{i 2πm/N}` times the phase-0 representative.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetGate {
    pub matrix: Operator,
    pub kind: GateKind,
    pub phase_index: usize,
}

impl TargetGate {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The same gate with phase index `m`.
    pub fn with_phase(&self, m: usize) -> Result<Self> {
        let dim = self.dim();
        if m >= dim {
            return Err(Error::PhaseIndex { index: m, dim });
        }
        let shift = phase_factor(m as isize - self.phase_index as isize, dim);
        Ok(Self {
            matrix: &self.matrix * shift,
            kind: self.kind,
            phase_index: m,
        })
    }
}

/// `e^{i 2πm/N}`.
pub fn phase_factor(m: isize, dim: usize) -> C64 {
    let m = m.rem_euclid(dim as isize);
    C64::new(0.0, 2.0 * PI * m as f64 / dim as f64).exp()
}

pub fn make_gate(kind: GateKind, n: usize, phase_index: usize) -> Result<TargetGate> {
    if n == 0 {
        return Err(Error::InvalidSystem(
            "at least one qubit is required".into(),
        ));
    }
    if kind.two_qubit_only() && n != 2 {
        return Err(Error::GateQubitMismatch {
            gate: kind.name(),
            expected: 2,
            got: n,
        });
    }
    let dim = 1usize << n;
    if phase_index >= dim {
        return Err(Error::PhaseIndex {
            index: phase_index,
            dim,
        });
    }
    let base = match kind {
        GateKind::Cnot => permutation_gate(&[0, 1, 3, 2]) * cis(-FRAC_PI_4),
        GateKind::Swap => permutation_gate(&[0, 2, 1, 3]) * cis(-FRAC_PI_4),
        GateKind::SqrtSwap => sqrt_swap(),
        GateKind::Qft => fourier(dim, 0),
        GateKind::QftPrime => fourier(dim, 1),
        GateKind::Cphase(alpha) => {
            let mut m = Operator::identity(4, 4);
            m[(3, 3)] = cis(alpha);
            m * cis(-alpha / 4.0)
        }
        GateKind::Identity => Operator::identity(dim, dim),
        GateKind::Random(seed) => random_generator_exp(n, seed),
    };
    Ok(TargetGate {
        matrix: base * phase_factor(phase_index as isize, dim),
        kind,
        phase_index,
    })
}

/// `W = exp(iA)` with `A` Hermitian and traceless, built from a seeded
/// standard-normal complex matrix.
pub fn random_su_gate(n: usize, seed: u64) -> TargetGate {
    TargetGate {
        matrix: random_generator_exp(n, seed),
        kind: GateKind::Random(seed),
        phase_index: 0,
    }
}

/// `exp(iA)` after projecting `a` onto traceless Hermitian matrices.
pub fn su_gate_from_generator(a: &Operator) -> Operator {
    let dim = a.nrows();
    let mut herm = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let shift = herm.trace() / dim as f64;
    for i in 0..dim {
        herm[(i, i)] -= shift;
    }
    HermitianEigen::new(&herm).apply(|l| cis(l))
}

fn random_generator_exp(n: usize, seed: u64) -> Operator {
    let dim = 1usize << n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Operator::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            a[(i, j)] = C64::new(re, im);
        }
    }
    su_gate_from_generator(&a)
}

fn cis(theta: f64) -> C64 {
    C64::new(theta.cos(), theta.sin())
}

fn permutation_gate(images: &[usize]) -> Operator {
    let dim = images.len();
    let mut m = Operator::zeros(dim, dim);
    for (col, &row) in images.iter().enumerate() {
        m[(row, col)] = C64::new(1.0, 0.0);
    }
    m
}

fn sqrt_swap() -> Operator {
    let mut m = Operator::identity(4, 4);
    let d = cis(FRAC_PI_4) * FRAC_1_SQRT_2;
    let o = cis(-FRAC_PI_4) * FRAC_1_SQRT_2;
    m[(1, 1)] = d;
    m[(2, 2)] = d;
    m[(1, 2)] = o;
    m[(2, 1)] = o;
    // e^{-iπ/8} puts the determinant at +1.
    m * cis(-FRAC_PI_8)
}

/// `N^{-1/2} e^{5iπ/(2N)} ω^{jk}` with `j, k` starting at `offset`, then
/// rephased into SU(N) when the prefactor alone does not do it (every
/// `n ≠ 2`).
fn fourier(dim: usize, offset: usize) -> Operator {
    let pref = cis(5.0 * PI / (2.0 * dim as f64)) / (dim as f64).sqrt();
    let mut m = Operator::zeros(dim, dim);
    for j in 0..dim {
        for k in 0..dim {
            let e = ((j + offset) * (k + offset)) % dim;
            m[(j, k)] = pref * cis(2.0 * PI * e as f64 / dim as f64);
        }
    }
    let det = determinant(&m);
    if (det - C64::new(1.0, 0.0)).norm() > 1e-12 {
        m *= cis(-det.arg() / dim as f64);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius_norm, unitarity_residual};

    const ALL: [GateKind; 7] = [
        GateKind::Cnot,
        GateKind::Swap,
        GateKind::SqrtSwap,
        GateKind::Qft,
        GateKind::QftPrime,
        GateKind::Cphase(PI),
        GateKind::Identity,
    ];

    fn assert_su(m: &Operator) {
        assert!(unitarity_residual(m) <= 1e-10);
        assert!((determinant(m) - C64::new(1.0, 0.0)).norm() <= 1e-10);
    }

    #[test]
    fn cnot_literal() {
        let g = make_gate(GateKind::Cnot, 2, 0).unwrap();
        let p = cis(-FRAC_PI_4);
        assert_eq!(g.matrix[(0, 0)], p);
        assert_eq!(g.matrix[(1, 1)], p);
        assert_eq!(g.matrix[(2, 3)], p);
        assert_eq!(g.matrix[(3, 2)], p);
        assert_eq!(g.matrix[(2, 2)], C64::new(0.0, 0.0));
    }

    #[test]
    fn qft_two_qubit_entries() {
        let g = make_gate(GateKind::Qft, 2, 0).unwrap();
        for z in g.matrix.iter() {
            assert!((z.norm() - 0.5).abs() < 1e-15);
        }
        assert!((g.matrix[(0, 0)] - cis(5.0 * PI / 8.0) * 0.5).norm() < 1e-15);
        // ω = i: row 1 is (1, i, -1, -i) up to the prefactor
        assert!((g.matrix[(1, 1)] / g.matrix[(0, 0)] - C64::new(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn cphase_pi() {
        let g = make_gate(GateKind::Cphase(PI), 2, 0).unwrap();
        let p = cis(-FRAC_PI_4);
        for i in 0..3 {
            assert!((g.matrix[(i, i)] - p).norm() < 1e-15);
        }
        assert!((g.matrix[(3, 3)] + p).norm() < 1e-15);
    }

    #[test]
    fn swap_phase_two_is_negation() {
        let g0 = make_gate(GateKind::Swap, 2, 0).unwrap();
        let g2 = make_gate(GateKind::Swap, 2, 2).unwrap();
        assert!(frobenius_norm(&(g2.matrix + g0.matrix)) < 1e-15);
    }

    #[test]
    fn all_gates_are_special_unitary() {
        for kind in ALL {
            for n in 1..=4 {
                let Ok(g) = make_gate(kind, n, 0) else {
                    assert!(kind.two_qubit_only() && n != 2);
                    continue;
                };
                assert_su(&g.matrix);
                for m in 0..g.dim() {
                    let gm = make_gate(kind, n, m).unwrap();
                    assert_su(&gm.matrix);
                    let expect = &g.matrix * phase_factor(m as isize, g.dim());
                    assert!(gm
                        .matrix
                        .iter()
                        .zip(expect.iter())
                        .all(|(a, b)| (a - b).norm() <= 1e-14));
                }
            }
        }
    }

    #[test]
    fn qft_prime_shifts_indices() {
        let q = make_gate(GateKind::Qft, 2, 0).unwrap();
        let qp = make_gate(GateKind::QftPrime, 2, 0).unwrap();
        // (j+1)(k+1) = jk + j + k + 1 ⇒ QFT'(j,k) = QFT(j,k) ω^{j+k+1}
        for j in 0..4 {
            for k in 0..4 {
                let w = cis(2.0 * PI * ((j + k + 1) % 4) as f64 / 4.0);
                assert!((qp.matrix[(j, k)] - q.matrix[(j, k)] * w).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn mismatched_or_unknown() {
        assert!(matches!(
            make_gate(GateKind::Cnot, 3, 0),
            Err(Error::GateQubitMismatch { .. })
        ));
        assert!(GateKind::from_name("TOFFOLI", None, None).is_err());
        assert!(make_gate(GateKind::Swap, 2, 4).is_err());
        assert_eq!(
            GateKind::from_name("cphase", Some(1.0), None).unwrap(),
            GateKind::Cphase(1.0)
        );
    }

    #[test]
    fn random_gate_deterministic_and_special() {
        let a = random_su_gate(2, 7);
        let b = random_su_gate(2, 7);
        assert_eq!(a, b);
        assert_su(&a.matrix);
        assert_ne!(random_su_gate(2, 8).matrix, a.matrix);
        let zero = su_gate_from_generator(&Operator::zeros(4, 4));
        assert!(frobenius_norm(&(zero - Operator::identity(4, 4))) < 1e-15);
    }
}
