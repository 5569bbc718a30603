//! Time meshes, control fields and propagation.
//!
//! Fields are piecewise constant: knob `j` of field `k` holds on the interval
//! `(j·dt, (j+1)·dt]` and is reported at the right endpoint `(j+1)·dt`.

mod propagation;

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // shadowed by std when a dependency links it
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result, SpinSystem};

pub use propagation::{propagate, ControlModel, PropagationCache};

/// Default fraction of the Nyquist bound used for the mesh step.
pub const DEFAULT_GRID_SAFETY: f64 = 0.9;
/// Default number of spectral components in a random initial field.
pub const DEFAULT_SPECTRAL_COMPONENTS: usize = 10;

/// Uniform mesh on `[0, T]` with `steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    duration: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(duration: f64, steps: usize) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::NonPositiveTime(duration));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("at least one step is required".into()));
        }
        Ok(Self { duration, steps })
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.duration / self.steps as f64
    }

    /// Time of node `j`, `0 ≤ j ≤ steps`; node `steps` is exactly `T`.
    pub fn node(&self, j: usize) -> f64 {
        if j == self.steps {
            self.duration
        } else {
            j as f64 * self.duration / self.steps as f64
        }
    }

    /// Time at which knob `j` is reported, `(j+1)·dt`.
    pub fn knob_time(&self, j: usize) -> f64 {
        self.node(j + 1)
    }
}

/// Largest mesh step that keeps the sampling rate above twice the highest
/// transition frequency, `π / (2Ω)`.
pub fn nyquist_step(system: &SpinSystem) -> f64 {
    PI / (2.0 * system.max_frequency())
}

/// `M = ceil(T / (safety · π/(2Ω)))`, `dt = T/M`.
pub fn make_grid(duration: f64, system: &SpinSystem, safety: f64) -> Result<TimeGrid> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::NonPositiveTime(duration));
    }
    if !(safety > 0.0 && safety < 1.0) {
        return Err(Error::InvalidGrid(
            "safety factor must lie in (0, 1)".into(),
        ));
    }
    let max_dt = safety * nyquist_step(system);
    let steps = (duration / max_dt).ceil().max(1.0) as usize;
    TimeGrid::new(duration, steps)
}

/// One real field per qubit sampled on the knobs of a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ControlFieldSet {
    pub grid: TimeGrid,
    /// `values[k][j]`: field `k` on interval `j`.
    pub values: Vec<Vec<f64>>,
}

impl ControlFieldSet {
    pub fn new(grid: TimeGrid, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid("at least one field is required".into()));
        }
        for row in &values {
            if row.len() != grid.steps() {
                return Err(Error::DimensionMismatch {
                    expected: grid.steps(),
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidGrid("field values must be finite".into()));
            }
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TimeGrid, fields: usize) -> Self {
        Self {
            grid,
            values: vec![vec![0.0; grid.steps()]; fields],
        }
    }

    pub fn fields(&self) -> usize {
        self.values.len()
    }

    /// Knob values in field-major order.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn from_flat(grid: TimeGrid, fields: usize, flat: &[f64]) -> Self {
        let m = grid.steps();
        debug_assert_eq!(flat.len(), fields * m);
        Self {
            grid,
            values: flat.chunks(m).map(|c| c.to_vec()).collect(),
        }
    }

    pub fn fluence(&self, k: usize) -> Result<f64> {
        fluence(self, k)
    }

    pub fn fluences(&self) -> Vec<f64> {
        (0..self.fields())
            .map(|k| sum_squares(&self.values[k]) * self.grid.dt())
            .collect()
    }

    pub fn total_fluence(&self) -> f64 {
        self.fluences().iter().sum()
    }

    /// Rescales every field to fluence `f`; all-zero fields stay zero.
    pub fn with_fluence(mut self, f: f64) -> Self {
        let dt = self.grid.dt();
        for row in self.values.iter_mut() {
            let current = sum_squares(row) * dt;
            if current > 0.0 {
                let c = (f / current).sqrt();
                row.iter_mut().for_each(|v| *v *= c);
            }
        }
        self
    }
}

fn sum_squares(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// `f_k = Σ_j ε_{k,j}² dt`.
pub fn fluence(fields: &ControlFieldSet, k: usize) -> Result<f64> {
    let row = fields.values.get(k).ok_or(Error::IndexOutOfRange {
        index: k,
        len: fields.fields(),
    })?;
    Ok(sum_squares(row) * fields.grid.dt())
}

/// Random band-limited initial fields of unit fluence.
///
/// Each field is `A(t) Σ_i sin(η_i t + φ_i)` with a Gaussian envelope
/// `A(t) = A₀ exp[−8π (t − T/2)² / T²]`, `η_i ~ U[0, Ω]`, `φ_i ~ U[0, 2π]`,
/// and `A₀` chosen per field so that its fluence is 1.
pub fn init_fields(
    system: &SpinSystem,
    grid: TimeGrid,
    spectral_components: usize,
    seed: u64,
) -> Result<ControlFieldSet> {
    if spectral_components == 0 {
        return Err(Error::InvalidSettings(
            "need at least one spectral component".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega_max = system.max_frequency();
    let t_total = grid.duration();
    let mut values = Vec::with_capacity(system.qubits());
    for _ in 0..system.qubits() {
        let etas: Vec<f64> = (0..spectral_components)
            .map(|_| rng.random_range(0.0..=omega_max))
            .collect();
        let phases: Vec<f64> = (0..spectral_components)
            .map(|_| rng.random_range(0.0..=2.0 * PI))
            .collect();
        let mut row: Vec<f64> = (0..grid.steps())
            .map(|j| {
                let t = grid.knob_time(j);
                let carrier: f64 = etas
                    .iter()
                    .zip(&phases)
                    .map(|(eta, phi)| (eta * t + phi).sin())
                    .sum();
                gaussian_envelope(t, t_total) * carrier
            })
            .collect();
        let raw = sum_squares(&row) * grid.dt();
        if !(raw > 0.0) {
            return Err(Error::InvalidGrid(
                "initial field vanishes on every knob".into(),
            ));
        }
        let amplitude = 1.0 / raw.sqrt();
        row.iter_mut().for_each(|v| *v *= amplitude);
        values.push(row);
    }
    ControlFieldSet::new(grid, values)
}

/// `exp[−8π (t − T/2)² / T²]`.
pub fn gaussian_envelope(t: f64, t_total: f64) -> f64 {
    let x = (t - 0.5 * t_total) / t_total;
    (-8.0 * PI * x * x).exp()
}

/// How a field set is carried onto a shorter interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResampleMode {
    /// Rescale time so the whole field shape fits the new interval.
    #[default]
    Compress,
    /// Keep the leading part of the field and drop the tail.
    Truncate,
}

/// Resamples every field onto `new_grid` by linear interpolation between
/// knob samples.
pub fn resample_fields(
    fields: &ControlFieldSet,
    new_grid: TimeGrid,
    mode: ResampleMode,
) -> Result<ControlFieldSet> {
    let old = fields.grid;
    if new_grid.duration() > old.duration() * (1.0 + 1e-12) {
        return Err(Error::ResampleLonger {
            old: old.duration(),
            new: new_grid.duration(),
        });
    }
    let ratio = match mode {
        ResampleMode::Compress => old.duration() / new_grid.duration(),
        ResampleMode::Truncate => 1.0,
    };
    let values = fields
        .values
        .iter()
        .map(|row| {
            (0..new_grid.steps())
                .map(|j| {
                    let tau = if j + 1 == new_grid.steps() && mode == ResampleMode::Compress {
                        old.duration()
                    } else {
                        new_grid.knob_time(j) * ratio
                    };
                    interpolate_knobs(row, old, tau)
                })
                .collect()
        })
        .collect();
    ControlFieldSet::new(new_grid, values)
}

/// Piecewise-linear interpolant through `(knob_time(i), row[i])`, extended
/// linearly to the left of the first knob and held constant to the right of
/// the last.
fn interpolate_knobs(row: &[f64], grid: TimeGrid, tau: f64) -> f64 {
    let m = row.len();
    if m == 1 {
        return row[0];
    }
    let dt = grid.dt();
    // knob i sits at (i + 1) dt
    let x = tau / dt - 1.0;
    if x >= (m - 1) as f64 {
        return row[m - 1];
    }
    let i = if x < 0.0 { 0 } else { x.floor() as usize };
    let frac = x - i as f64;
    row[i] + (row[i + 1] - row[i]) * frac
}
