//! Temporal intensity envelopes.
//!
//! `t_pulse` is the total duration of a square pulse and the intensity FWHM
//! of every other shape. Shaped pulses live in a window `[0, 2 * window_factor * T]`
//! and are centred in it.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PulseKind {
    Square,
    Gaussian,
    Trapezoid,
    Lorentzian,
}

impl FromStr for PulseKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "square" => Ok(PulseKind::Square),
            "gaussian" => Ok(PulseKind::Gaussian),
            "trapezoid" | "trapezoidal" => Ok(PulseKind::Trapezoid),
            "lorentzian" => Ok(PulseKind::Lorentzian),
            other => Err(format!("unknown pulse kind `{other}`")),
        }
    }
}

impl fmt::Display for PulseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PulseKind::Square => "square",
            PulseKind::Gaussian => "gaussian",
            PulseKind::Trapezoid => "trapezoid",
            PulseKind::Lorentzian => "lorentzian",
        })
    }
}

pub const DEFAULT_WINDOW_FACTOR: f64 = 3.0;
pub const DEFAULT_RAMP_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseShape {
    pub kind: PulseKind,
    pub t_pulse: f64,
    pub ramp_fraction: f64,
    pub window_factor: f64,
}

impl PulseShape {
    pub fn new(kind: PulseKind, t_pulse: f64) -> Result<Self> {
        Self::with_options(kind, t_pulse, DEFAULT_RAMP_FRACTION, DEFAULT_WINDOW_FACTOR)
    }

    pub fn square(t_pulse: f64) -> Result<Self> {
        Self::new(PulseKind::Square, t_pulse)
    }

    pub fn gaussian(t_pulse: f64) -> Result<Self> {
        Self::new(PulseKind::Gaussian, t_pulse)
    }

    pub fn with_options(kind: PulseKind, t_pulse: f64, ramp_fraction: f64, window_factor: f64) -> Result<Self> {
        if !(t_pulse.is_finite() && t_pulse > 0.0) {
            return Err(Error::invalid("t_pulse", format!("must be > 0, got {t_pulse}")));
        }
        if !(0.0..=0.5).contains(&ramp_fraction) {
            return Err(Error::invalid(
                "ramp_fraction",
                format!("must lie in [0, 0.5], got {ramp_fraction}"),
            ));
        }
        if !(window_factor.is_finite() && window_factor >= 1.0) {
            return Err(Error::invalid("window_factor", format!("must be >= 1, got {window_factor}")));
        }
        Ok(Self {
            kind,
            t_pulse,
            ramp_fraction,
            window_factor,
        })
    }

    /// Centre of a shaped pulse; for a square pulse, the middle of `[0, T]`.
    pub fn center(&self) -> f64 {
        match self.kind {
            PulseKind::Square => 0.5 * self.t_pulse,
            _ => self.window_factor * self.t_pulse,
        }
    }

    /// Simulation window `[0, end]`: the pulse itself for a square pulse,
    /// `2 * window_factor * T` otherwise.
    pub fn window_end(&self) -> f64 {
        match self.kind {
            PulseKind::Square => self.t_pulse,
            _ => 2.0 * self.window_factor * self.t_pulse,
        }
    }

    /// Dimensionless envelope in `[0, 1]`, peak value 1.
    pub fn envelope(&self, t: f64) -> f64 {
        let tp = self.t_pulse;
        match self.kind {
            PulseKind::Square => {
                if (0.0..=tp).contains(&t) {
                    1.0
                } else {
                    0.0
                }
            }
            PulseKind::Gaussian => {
                let x = (t - self.center()) / tp;
                (-4.0 * std::f64::consts::LN_2 * x * x).exp()
            }
            PulseKind::Lorentzian => {
                let x = (t - self.center()) / tp;
                1.0 / (1.0 + 4.0 * x * x)
            }
            PulseKind::Trapezoid => {
                // half-max points sit at the middle of each ramp
                let ramp = self.ramp_fraction * tp;
                let d = (t - self.center()).abs();
                let flat = 0.5 * (tp - ramp);
                if d <= flat {
                    1.0
                } else if d >= flat + ramp {
                    0.0
                } else {
                    1.0 - (d - flat) / ramp
                }
            }
        }
    }

    pub fn intensity(&self, i0: f64, t: f64) -> f64 {
        i0 * self.envelope(t)
    }

    pub fn is_constant(&self) -> bool {
        self.kind == PulseKind::Square
    }
}

pub fn envelope(shape: &PulseShape, t: f64) -> f64 {
    shape.envelope(t)
}

pub fn intensity_profile(shape: &PulseShape, i0: f64, t: f64) -> f64 {
    shape.intensity(i0, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + k as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn square_envelope() {
        let p = PulseShape::square(100.0).unwrap();
        assert_eq!(p.envelope(50.0), 1.0);
        assert_eq!(p.envelope(0.0), 1.0);
        assert_eq!(p.envelope(100.0), 1.0);
        assert_eq!(p.envelope(100.0001), 0.0);
        assert_eq!(p.window_end(), 100.0);
        assert_eq!(intensity_profile(&p, 0.3, 20.0), 0.3);
        assert_eq!(intensity_profile(&p, 0.0, 20.0), 0.0);
    }

    #[test]
    fn gaussian_fwhm_and_peak() {
        let p = PulseShape::gaussian(40.0).unwrap();
        let tc = p.center();
        assert_eq!(tc, 120.0);
        assert_eq!(envelope(&p, tc), 1.0);
        assert_relative_eq!(envelope(&p, tc + 20.0), 0.5, max_relative = 1e-14);
        assert_relative_eq!(envelope(&p, tc - 20.0), 0.5, max_relative = 1e-14);
        assert_eq!(intensity_profile(&p, 2.5, tc), 2.5);
        assert!(p.envelope(0.0) < 2e-11);
    }

    #[test]
    fn gaussian_fluence() {
        let tp = 826.8;
        let p = PulseShape::gaussian(tp).unwrap();
        let i0 = 2.85e-3;
        let num = simpson(|t| p.intensity(i0, t), 0.0, p.window_end(), 20_000);
        let exact = i0 * tp * (std::f64::consts::PI / (4.0 * std::f64::consts::LN_2)).sqrt();
        assert_relative_eq!(num, exact, max_relative = 1e-8);
    }

    #[test]
    fn lorentzian_and_trapezoid_half_max() {
        let l = PulseShape::new(PulseKind::Lorentzian, 10.0).unwrap();
        assert_relative_eq!(l.envelope(l.center() + 5.0), 0.5);
        let z = PulseShape::with_options(PulseKind::Trapezoid, 10.0, 0.4, 3.0).unwrap();
        assert_relative_eq!(z.envelope(z.center() + 5.0), 0.5, max_relative = 1e-12);
        assert_relative_eq!(z.envelope(z.center() - 5.0), 0.5, max_relative = 1e-12);
        assert_eq!(z.envelope(z.center()), 1.0);
        assert_eq!(z.envelope(0.0), 0.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(PulseShape::square(0.0).is_err());
        assert!(PulseShape::with_options(PulseKind::Trapezoid, 1.0, 0.7, 3.0).is_err());
        assert!(PulseShape::with_options(PulseKind::Gaussian, 1.0, 0.1, 0.5).is_err());
        assert_eq!("Gaussian".parse::<PulseKind>(), Ok(PulseKind::Gaussian));
        assert!("sawtooth".parse::<PulseKind>().is_err());
    }

    #[test]
    fn trapezoid_tends_to_square_shape() {
        // same FWHM, vanishing ramps: flat top spanning [tc - T/2, tc + T/2]
        let z = PulseShape::with_options(PulseKind::Trapezoid, 10.0, 1e-9, 3.0).unwrap();
        let tc = z.center();
        for &dt in &[-4.9, -2.0, 0.0, 3.3, 4.99] {
            assert_eq!(z.envelope(tc + dt), 1.0);
        }
        for &dt in &[-5.01, 5.01, 12.0] {
            assert_eq!(z.envelope(tc + dt), 0.0);
        }
    }

    proptest! {
        #[test]
        fn envelope_bounded(
            kind in prop_oneof![
                Just(PulseKind::Square),
                Just(PulseKind::Gaussian),
                Just(PulseKind::Trapezoid),
                Just(PulseKind::Lorentzian)
            ],
            tp in 1.0f64..1e4,
            frac in 0.0f64..1.0,
            ramp in 0.0f64..0.5,
        ) {
            let p = PulseShape::with_options(kind, tp, ramp, 3.0).unwrap();
            let t = frac * p.window_end();
            let e = p.envelope(t);
            prop_assert!((0.0..=1.0).contains(&e));
            prop_assert_eq!(p.envelope(p.center()), 1.0);
        }
    }
}
