//! Embedded Dormand–Prince 5(4) stepping with a PI step-size controller.
//!
//! The integrator only proposes steps; the caller decides whether to accept
//! them, which lets the optimizer add its own acceptance rules on top of the
//! error test.

use alloc::vec::Vec;

use crate::Result;
#[allow(unused_imports)] // shadowed by std when a dependency links it
use num_traits::Float;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights minus the embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Right-hand side value with whatever the caller evaluated alongside it.
#[derive(Debug, Clone)]
pub struct Evaluation<X> {
    pub derivative: Vec<f64>,
    pub extra: X,
}

/// A proposed step from `y` to `y_new` of size `h`.
#[derive(Debug, Clone)]
pub struct Proposal<X> {
    pub h: f64,
    pub y_new: Vec<f64>,
    /// Evaluation at `y_new` (first stage of the next step).
    pub end: Evaluation<X>,
    /// Scaled RMS error estimate; the step passes the error test at `≤ 1`.
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct DormandPrince {
    pub rtol: f64,
    pub atol: f64,
    pub safety: f64,
    pub min_factor: f64,
    pub max_factor: f64,
    prev_error: f64,
}

impl DormandPrince {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            safety: 0.9,
            min_factor: 0.2,
            max_factor: 5.0,
            prev_error: 1e-4,
        }
    }

    fn scaled_norm(&self, v: &[f64], y0: &[f64], y1: &[f64]) -> f64 {
        let sum: f64 = v
            .iter()
            .zip(y0.iter().zip(y1))
            .map(|(x, (a, b))| {
                let sc = self.atol + self.rtol * a.abs().max(b.abs());
                (x / sc) * (x / sc)
            })
            .sum();
        (sum / v.len().max(1) as f64).sqrt()
    }

    /// Starting step from the local scale of `y` and `f(y)`, as in Hairer,
    /// Nørsett & Wanner. Costs one extra evaluation.
    pub fn initial_step<X, F>(&self, y: &[f64], start: &Evaluation<X>, rhs: &mut F) -> Result<f64>
    where
        F: FnMut(&[f64]) -> Result<Evaluation<X>>,
    {
        let f0 = &start.derivative;
        let d0 = self.scaled_norm(y, y, y);
        let d1 = self.scaled_norm(f0, y, y);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
        let f1 = rhs(&y1)?.derivative;
        let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
        let d2 = self.scaled_norm(&diff, y, y) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        Ok((100.0 * h0).min(h1))
    }

    /// One trial step of size `h` from `y`, given `f(y)`.
    pub fn propose<X, F>(
        &self,
        y: &[f64],
        start: &Evaluation<X>,
        h: f64,
        rhs: &mut F,
    ) -> Result<Proposal<X>>
    where
        F: FnMut(&[f64]) -> Result<Evaluation<X>>,
    {
        let len = y.len();
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        k.push(start.derivative.clone());
        let mut stage = alloc::vec![0.0; len];
        for s in 1..6 {
            for i in 0..len {
                let mut acc = 0.0;
                for (r, kr) in k.iter().enumerate() {
                    acc += A[s][r] * kr[i];
                }
                stage[i] = y[i] + h * acc;
            }
            debug_assert!(C[s] > 0.0);
            k.push(rhs(&stage)?.derivative);
        }
        let y_new: Vec<f64> = (0..len)
            .map(|i| {
                let mut acc = 0.0;
                for (r, kr) in k.iter().enumerate() {
                    acc += A[6][r] * kr[i];
                }
                y[i] + h * acc
            })
            .collect();
        let end = rhs(&y_new)?;
        k.push(end.derivative.clone());
        let err_vec: Vec<f64> = (0..len)
            .map(|i| h * k.iter().zip(E.iter()).map(|(kr, e)| e * kr[i]).sum::<f64>())
            .collect();
        let error = self.scaled_norm(&err_vec, y, &y_new);
        Ok(Proposal {
            h,
            y_new,
            end,
            error,
        })
    }

    /// Next step size after an accepted step with error `err`.
    pub fn accept(&mut self, h: f64, err: f64) -> f64 {
        let err = err.max(1e-10);
        let factor = self.safety * err.powf(-0.7 / 5.0) * self.prev_error.powf(0.4 / 5.0);
        self.prev_error = err;
        h * factor.clamp(self.min_factor, self.max_factor)
    }

    /// Reduced step size after a rejected step with error `err`.
    pub fn reject(&self, h: f64, err: f64) -> f64 {
        let factor = if err.is_finite() {
            (self.safety * err.powf(-0.2)).clamp(self.min_factor, 1.0)
        } else {
            self.min_factor
        };
        h * factor
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn integrate<F>(y0: f64, t_end: f64, rtol: f64, mut f: F) -> (f64, usize)
    where
        F: FnMut(f64) -> f64,
    {
        let mut dp = DormandPrince::new(rtol, rtol * 1e-3);
        let mut rhs = |y: &[f64]| -> Result<Evaluation<()>> {
            Ok(Evaluation {
                derivative: vec![f(y[0])],
                extra: (),
            })
        };
        let mut y = vec![y0];
        let mut start = rhs(&y).unwrap();
        let mut t = 0.0;
        let mut h = dp.initial_step(&y, &start, &mut rhs).unwrap();
        let mut accepted = 0;
        while t < t_end {
            h = h.min(t_end - t);
            let p = dp.propose(&y, &start, h, &mut rhs).unwrap();
            if p.error <= 1.0 {
                t += h;
                y = p.y_new;
                start = p.end;
                h = dp.accept(h, p.error);
                accepted += 1;
            } else {
                h = dp.reject(h, p.error);
            }
        }
        (y[0], accepted)
    }

    #[test]
    fn exponential_decay_to_tolerance() {
        let (y, steps) = integrate(1.0, 2.0, 1e-8, |y| -y);
        assert!((y - (-2.0f64).exp()).abs() < 1e-8);
        assert!(steps > 5 && steps < 500);
    }

    #[test]
    fn fifth_order_convergence() {
        // y' = y² has y = 1/(1−t); errors shrink sharply with tolerance
        let exact = 1.0 / (1.0 - 0.5);
        let (coarse, _) = integrate(1.0, 0.5, 1e-4, |y| y * y);
        let (fine, _) = integrate(1.0, 0.5, 1e-9, |y| y * y);
        assert!((fine - exact).abs() < 1e-8);
        assert!((fine - exact).abs() < (coarse - exact).abs());
    }
}
