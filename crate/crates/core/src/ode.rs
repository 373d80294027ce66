//! Dormand–Prince 5(4) with step-size control, landing exactly on each
//! requested output time.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub atol: f64,
    pub rtol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { atol: 1e-10, rtol: 1e-8 }
    }
}

const MAX_STEPS: usize = 10_000_000;

// Dormand–Prince tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Integrates `y' = f(t, y)` from `grid[0]` and returns the state at every
/// grid time. The grid must be non-decreasing.
pub fn dopri5<const N: usize, F>(mut f: F, y0: [f64; N], grid: &[f64], tol: Tolerances) -> Result<Vec<[f64; N]>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let mut out = Vec::with_capacity(grid.len());
    let Some(&t0) = grid.first() else {
        return Ok(out);
    };
    if grid.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::GridMismatch("time grid must be non-decreasing".into()));
    }
    out.push(y0);
    let t_end = *grid.last().unwrap();
    if t_end == t0 {
        out.resize(grid.len(), y0);
        return Ok(out);
    }

    let err_norm = |y: &[f64; N], yn: &[f64; N], e: &[f64; N]| -> f64 {
        let mut s = 0.0;
        for i in 0..N {
            let sc = tol.atol + tol.rtol * y[i].abs().max(yn[i].abs());
            s += (e[i] / sc).powi(2);
        }
        (s / N as f64).sqrt()
    };

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);

    // initial step guess (Hairer, Nørsett & Wanner)
    let mut h = {
        let d0 = err_norm(&y, &y, &y);
        let d1 = err_norm(&y, &y, &k1);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(t_end - t0);
        let y1 = axpy(&y, h0, &[(1.0, &k1)]);
        let f1 = f(t + h0, &y1);
        let mut diff = [0.0; N];
        for i in 0..N {
            diff[i] = (f1[i] - k1[i]) / h0;
        }
        let d2 = err_norm(&y, &y, &diff);
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(t_end - t0)
    };

    let mut steps = 0usize;
    for &target in &grid[1..] {
        while t < target {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::StepControl {
                    t,
                    reason: "maximum number of steps exceeded",
                });
            }
            let remaining = target - t;
            let last = h >= remaining * (1.0 - 1e-12);
            let hs = if last { remaining } else { h };
            if hs <= (t.abs() + hs).max(1.0) * f64::EPSILON * 4.0 && !last {
                return Err(Error::StepControl {
                    t,
                    reason: "step size underflow",
                });
            }

            let k2 = f(t + C2 * hs, &axpy(&y, hs, &[(A21, &k1)]));
            let k3 = f(t + C3 * hs, &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]));
            let k4 = f(t + C4 * hs, &axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = f(t + C5 * hs, &axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
            let k6 = f(
                t + hs,
                &axpy(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            );
            let yn = axpy(&y, hs, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let k7 = f(t + hs, &yn);
            let mut e = [0.0; N];
            for i in 0..N {
                e[i] = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            }
            let err = err_norm(&y, &yn, &e);
            if !err.is_finite() {
                return Err(Error::NonFinite { t });
            }
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                t = if last { target } else { t + hs };
                y = yn;
                k1 = k7;
                h = if last { h.max(hs * fac) } else { hs * fac };
            } else {
                h = hs * fac.min(1.0);
            }
        }
        out.push(y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let grid: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        let ys = dopri5(|_, y: &[f64; 1]| [-0.7 * y[0]], [1.0], &grid, Tolerances::default()).unwrap();
        for (t, y) in grid.iter().zip(&ys) {
            assert!((y[0] - (-0.7 * t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn harmonic_oscillator_many_periods() {
        let grid = [0.0, 50.0, 100.0];
        let ys = dopri5(
            |_, y: &[f64; 2]| [y[1], -y[0]],
            [1.0, 0.0],
            &grid,
            Tolerances {
                atol: 1e-12,
                rtol: 1e-12,
            },
        )
        .unwrap();
        assert!((ys[2][0] - 100f64.cos()).abs() < 1e-9);
        assert!((ys[2][1] + 100f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn rejects_decreasing_grid() {
        assert!(dopri5(|_, y: &[f64; 1]| *y, [1.0], &[1.0, 0.0], Tolerances::default()).is_err());
    }

    #[test]
    fn repeated_grid_points() {
        let ys = dopri5(|_, y: &[f64; 1]| [-y[0]], [1.0], &[0.0, 0.0, 1.0, 1.0], Tolerances::default()).unwrap();
        assert_eq!(ys.len(), 4);
        assert_eq!(ys[0], ys[1]);
        assert_eq!(ys[2], ys[3]);
    }
}
