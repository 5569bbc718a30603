//! Additive white field noise: second-order error prediction and Monte-Carlo
//! sampling on optimal fields.
//!
//! The noise obeys `E{ξ_k(t) ξ_j(t')} = σ² β_kj δ(t − t')`.

use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)] // shadowed by std when a dependency links it
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::ControlModel;
use crate::linalg::{trace_of_product, HermitianEigen};
use crate::objective::normalized_distance;
use crate::{ControlFieldSet, Error, Result, SpinSystem, TargetGate, C64};

/// Largest phase `Ω·h` a noise sub-step may accumulate.
const MAX_SUBSTEP_PHASE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    /// Variance per unit time.
    pub sigma2: f64,
    /// Cross-correlation between the fields, unit diagonal.
    pub beta: Vec<Vec<f64>>,
}

impl NoiseSpec {
    pub fn new(sigma2: f64, beta: Vec<Vec<f64>>) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(Error::InvalidSettings(
                "sigma2 must be finite and non-negative".into(),
            ));
        }
        let n = beta.len();
        for (k, row) in beta.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidSettings("beta must be square".into()));
            }
            if row[k] != 1.0 {
                return Err(Error::InvalidSettings(
                    "beta must have a unit diagonal".into(),
                ));
            }
            for (j, &b) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&b) {
                    return Err(Error::InvalidSettings(
                        "beta entries must lie in [0, 1]".into(),
                    ));
                }
                if b != beta[j][k] {
                    return Err(Error::InvalidSettings("beta must be symmetric".into()));
                }
            }
        }
        Ok(Self { sigma2, beta })
    }

    /// Uncorrelated noise on `n` fields.
    pub fn independent(sigma2: f64, n: usize) -> Result<Self> {
        let beta = (0..n)
            .map(|k| (0..n).map(|j| if k == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(sigma2, beta)
    }

    fn check_fields(&self, n: usize) -> Result<()> {
        if self.beta.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.beta.len(),
            });
        }
        Ok(())
    }

    /// Lower Cholesky factor of `beta`.
    pub fn cholesky(&self) -> Result<DMatrix<f64>> {
        let n = self.beta.len();
        let m = DMatrix::from_fn(n, n, |k, j| self.beta[k][j]);
        m.cholesky()
            .map(|c| c.l())
            .ok_or(Error::NotPositiveDefinite)
    }
}

/// `(1/2N) Tr[H_c^(k) H_c^(j)]`, the time-independent Hessian block.
pub fn hessian_diag_block(system: &SpinSystem, k: usize, j: usize) -> Result<f64> {
    let n = system.qubits();
    for idx in [k, j] {
        if idx >= n {
            return Err(Error::IndexOutOfRange { index: idx, len: n });
        }
    }
    let controls = system.control_operators();
    let tr = trace_of_product(&controls[k], &controls[j]).re;
    Ok(tr / (2.0 * system.dim() as f64))
}

/// `E{D̃} ≈ (σ²T/4N) Σ_kj β_kj Tr[H_c^(k) H_c^(j)]`.
pub fn predicted_error(system: &SpinSystem, duration: f64, noise: &NoiseSpec) -> Result<f64> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::NonPositiveTime(duration));
    }
    let n = system.qubits();
    noise.check_fields(n)?;
    let mut sum = 0.0;
    for k in 0..n {
        for j in 0..n {
            if noise.beta[k][j] != 0.0 {
                sum += noise.beta[k][j] * 2.0 * hessian_diag_block(system, k, j)?;
            }
        }
    }
    // 2·hessian_diag_block = Tr[..]/N, so this is σ²T/4 · Σ β Tr/N
    Ok(noise.sigma2 * duration / 4.0 * sum)
}

/// `σ² n T / 16` for uncorrelated noise.
pub fn predicted_error_independent(qubits: usize, duration: f64, sigma2: f64) -> f64 {
    sigma2 * qubits as f64 * duration / 16.0
}

/// Noise sub-steps per knob so that `Ω·dt/r ≤ 0.25`.
///
/// A noise sample held over a whole knob filters out the part of the white
/// spectrum near the transition frequencies, which lowers the mean error by
/// roughly `sinc²(Ω dt/2)`; sub-stepping keeps the sampled noise white over
/// the band the dynamics respond to.
pub fn noise_substeps(system: &SpinSystem, dt: f64) -> usize {
    let phase = system.max_frequency() * dt;
    ((phase / MAX_SUBSTEP_PHASE).ceil() as usize).max(1)
}

/// Reusable Monte-Carlo sampler for one system, target and field set.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    model: ControlModel,
    target: TargetGate,
    fields: ControlFieldSet,
    noise: NoiseSpec,
    chol: DMatrix<f64>,
    substeps: usize,
    seed: u64,
}

impl NoiseSampler {
    pub fn new(
        system: &SpinSystem,
        target: &TargetGate,
        fields: &ControlFieldSet,
        noise: &NoiseSpec,
        seed: u64,
    ) -> Result<Self> {
        let n = system.qubits();
        noise.check_fields(n)?;
        if fields.fields() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: fields.fields(),
            });
        }
        if target.dim() != system.dim() {
            return Err(Error::DimensionMismatch {
                expected: system.dim(),
                got: target.dim(),
            });
        }
        Ok(Self {
            model: ControlModel::new(system),
            target: target.clone(),
            fields: fields.clone(),
            noise: noise.clone(),
            chol: noise.cholesky()?,
            substeps: noise_substeps(system, fields.grid.dt()),
            seed,
        })
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// Overrides the number of noise sub-steps per knob.
    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps.max(1);
        self
    }

    /// `D̃` for one noise realization. Trial `i` draws from its own stream,
    /// so results do not depend on the order trials are run in.
    pub fn trial(&self, index: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let n = self.fields.fields();
        let grid = self.fields.grid;
        let h = grid.dt() / self.substeps as f64;
        let std = (self.noise.sigma2 / h).sqrt();
        let mut u = crate::linalg::identity(self.model.dim());
        let mut z = alloc::vec![0.0; n];
        let mut amps = alloc::vec![0.0; n];
        for j in 0..grid.steps() {
            for _ in 0..self.substeps {
                for v in z.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                for k in 0..n {
                    let mut xi = 0.0;
                    for l in 0..=k {
                        xi += self.chol[(k, l)] * z[l];
                    }
                    amps[k] = self.fields.values[k][j] + std * xi;
                }
                let ham = self.model.hamiltonian(amps.iter().copied());
                let step = HermitianEigen::new(&ham).apply(|l| C64::new(0.0, -l * h).exp());
                u = step * u;
            }
        }
        normalized_distance(&u, &self.target).unwrap_or(f64::NAN)
    }
}

/// Mean and standard error of a sample.
pub fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Mean `D̃` over `trials` noisy propagations of `fields`, with its standard
/// error.
pub fn monte_carlo_error(
    system: &SpinSystem,
    target: &TargetGate,
    fields: &ControlFieldSet,
    noise: &NoiseSpec,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let sampler = NoiseSampler::new(system, target, fields, noise, seed)?;
    let samples: Vec<f64> = (0..trials as u64).map(|i| sampler.trial(i)).collect();
    Ok(mean_and_stderr(&samples))
}
