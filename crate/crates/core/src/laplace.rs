//! Exact constant-intensity solution in the Laplace domain.
//!
//! The averaged equations become a 2×2 linear system for the transforms
//! F₁(s), F₂(s) of the populations. Clearing the kernel transforms
//! G₁ = (s+a)/D, G₂ = Δ/D with D = (s+a)² + Δ² gives rational functions with
//! a common degree-6 denominator, which are inverted by partial fractions over
//! its numerically located roots.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::decorrelated::{populations_by_expm, Couplings};
use crate::error::{Error, Result};
use crate::model::{AtomParams, FieldConfig, SolverContext};

/// Real polynomial, coefficients in ascending powers of `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Poly(coeffs)
    }

    pub fn constant(c: f64) -> Self {
        Poly::new(vec![c])
    }

    /// `s + r`
    pub fn linear(r: f64) -> Self {
        Poly::new(vec![r, 1.0])
    }

    pub fn degree(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    pub fn leading(&self) -> f64 {
        *self.0.last().unwrap()
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.0.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly::constant(0.0);
        }
        Poly::new(self.0.iter().enumerate().skip(1).map(|(k, &c)| k as f64 * c).collect())
    }

    pub fn scale(&self, x: f64) -> Poly {
        Poly::new(self.0.iter().map(|c| c * x).collect())
    }

    /// Roots via companion-matrix eigenvalues of `p(scale·u)`, polished by
    /// Newton iterations on the unscaled polynomial.
    pub fn roots(&self, scale: f64) -> Vec<Complex64> {
        let n = self.degree();
        if n == 0 {
            return Vec::new();
        }
        let lead = self.leading() * scale.powi(n as i32);
        let c: Vec<f64> = (0..n).map(|j| self.0[j] * scale.powi(j as i32) / lead).collect();
        let mut comp = DMatrix::<f64>::zeros(n, n);
        for i in 1..n {
            comp[(i, i - 1)] = 1.0;
        }
        for j in 0..n {
            comp[(j, n - 1)] = -c[j];
        }
        let dp = self.derivative();
        comp.complex_eigenvalues()
            .iter()
            .map(|&u| {
                let mut z = u * scale;
                let mut pz = self.eval(z).norm();
                for _ in 0..4 {
                    let next = z - self.eval(z) / dp.eval(z);
                    let pn = self.eval(next).norm();
                    // accept only descending steps; near multiple roots the
                    // quotient is rounding noise
                    if !next.is_finite() || !(pn < pz) {
                        break;
                    }
                    z = next;
                    pz = pn;
                }
                z
            })
            .collect()
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let n = self.0.len().max(rhs.0.len());
        Poly::new(
            (0..n)
                .map(|k| self.0.get(k).copied().unwrap_or(0.0) + rhs.0.get(k).copied().unwrap_or(0.0))
                .collect(),
        )
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        self + &(-rhs)
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len() + rhs.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in rhs.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }
}

/// F₁ = f1_num / common_den, F₂ = f2_num / common_den.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalPair {
    pub f1_num: Poly,
    pub f2_num: Poly,
    pub common_den: Poly,
    /// Natural rate scale used to condition root finding.
    pub rate_scale: f64,
}

impl RationalPair {
    pub fn f1(&self, s: Complex64) -> Complex64 {
        self.f1_num.eval(s) / self.common_den.eval(s)
    }

    pub fn f2(&self, s: Complex64) -> Complex64 {
        self.f2_num.eval(s) / self.common_den.eval(s)
    }
}

/// Poles and residues of one population: `x(t) = Σ r·e^{p t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialSum {
    pub terms: Vec<(Complex64, Complex64)>,
}

impl ExponentialSum {
    pub fn eval(&self, t: f64) -> Complex64 {
        self.terms.iter().map(|&(p, r)| r * (p * t).exp()).sum()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.terms.iter().map(|t| t.0).collect()
    }
}

/// Laplace-domain solution for constant intensity `i0` from populations
/// `initial = (σ11(0), σ22(0))` and empty memory.
pub fn solve_sdomain(atom: &AtomParams, context: &SolverContext, i0: f64, initial: (f64, f64)) -> Result<RationalPair> {
    solve_sdomain_with(atom, context, i0, initial, &Couplings::new(atom.q))
}

pub fn solve_sdomain_with(
    atom: &AtomParams,
    context: &SolverContext,
    i0: f64,
    initial: (f64, f64),
    c: &Couplings,
) -> Result<RationalPair> {
    let a = context.kappa_tilde.re;
    let delta = -context.kappa_tilde.im;
    if !(a > 0.0) {
        return Err(Error::NonDecayingKernel { re: a });
    }
    let k = atom.d21 * atom.d21 * i0;
    let gamma = atom.gamma_per_intensity * i0;
    let (s11_0, s22_0) = initial;
    let sg = Poly::linear(gamma);
    let sbig = Poly::linear(atom.big_gamma);
    let rate_scale = a.max(delta.abs()).max(atom.big_gamma);

    if k == 0.0 {
        return Ok(RationalPair {
            f1_num: sbig.scale(s11_0),
            f2_num: sg.scale(s22_0),
            common_den: &sg * &sbig,
            rate_scale,
        });
    }

    // G₁ = n1/d, G₂ = n2/d; at Δ = 0 the sine kernel vanishes and a single
    // factor (s + a) clears the system.
    let (n1, n2, d) = if delta.abs() <= 1e-10 * a {
        (Poly::constant(1.0), Poly::constant(0.0), Poly::linear(a))
    } else {
        let sa = Poly::linear(a);
        (
            sa.clone(),
            Poly::constant(delta),
            &(&sa * &sa) + &Poly::constant(delta * delta),
        )
    };

    let m11 = &(&sg * &d) - &(&n1.scale(k * c.c11_cos) + &n2.scale(k * c.c11_sin));
    let m12 = n1.scale(-k * c.c12_cos);
    let m21 = n1.scale(-k * c.c21_cos);
    let m22 = &(&sbig * &d) - &(&n1.scale(k * c.c22_cos) + &n2.scale(k * c.c22_sin));
    let r1 = d.scale(s11_0);
    let r2 = d.scale(s22_0);

    let det = &(&m11 * &m22) - &(&m12 * &m21);
    if det.is_zero() {
        return Err(Error::DegenerateSystem);
    }
    Ok(RationalPair {
        f1_num: &(&r1 * &m22) - &(&m12 * &r2),
        f2_num: &(&m11 * &r2) - &(&m21 * &r1),
        common_den: det,
        rate_scale,
    })
}

/// Companion eigenvalues of an exact double root are only resolved to about
/// √ε relative, so closer pairs are treated as coincident.
pub const ROOT_SEPARATION_REL: f64 = 1e-7;

/// Residues at the simple roots of the common denominator.
pub fn invert_partial_fractions(r: &RationalPair) -> Result<(ExponentialSum, ExponentialSum)> {
    let den = &r.common_den;
    if den.is_zero() || den.leading() == 0.0 {
        return Err(Error::DegenerateSystem);
    }
    let n = den.degree();
    if (!r.f1_num.is_zero() && r.f1_num.degree() >= n) || (!r.f2_num.is_zero() && r.f2_num.degree() >= n) {
        return Err(Error::NotStrictlyProper);
    }
    let poles = den.roots(r.rate_scale);
    let radius = poles.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let threshold = ROOT_SEPARATION_REL * radius;
    let mut min_sep = f64::INFINITY;
    for i in 0..poles.len() {
        for j in i + 1..poles.len() {
            min_sep = min_sep.min((poles[i] - poles[j]).norm());
        }
    }
    if min_sep < threshold {
        return Err(Error::DegenerateRoots {
            separation: min_sep,
            threshold,
        });
    }
    let dd = den.derivative();
    let residues = |num: &Poly| ExponentialSum {
        terms: poles.iter().map(|&p| (p, num.eval(p) / dd.eval(p))).collect(),
    };
    Ok((residues(&r.f1_num), residues(&r.f2_num)))
}

/// Real populations at time `t`; logs if the imaginary residue leakage
/// exceeds 1e-12.
pub fn populations_at(es: &(ExponentialSum, ExponentialSum), t: f64) -> (f64, f64) {
    let a = es.0.eval(t);
    let b = es.1.eval(t);
    let leak = a.im.abs().max(b.im.abs());
    if leak > 1e-12 {
        log::warn!("imaginary leakage {leak:.2e} in reconstructed populations at t = {t:.4e}");
    }
    (a.re, b.re)
}

/// Populations at `t` for a constant-intensity configuration from the ground
/// state. Falls back to the matrix exponential when the denominator roots
/// are degenerate.
pub fn constant_intensity_populations(atom: &AtomParams, config: &FieldConfig, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    let ctx = SolverContext::new(atom, config);
    let rp = solve_sdomain(atom, &ctx, config.i0, (1.0, 0.0))?;
    match invert_partial_fractions(&rp) {
        Ok(es) => Ok(times.iter().map(|&t| populations_at(&es, t)).collect()),
        Err(e @ Error::DegenerateRoots { .. }) => {
            log::warn!("{e}; falling back to the matrix exponential (delta = {:.4e})", config.delta);
            Ok(times.iter().map(|&t| populations_by_expm(atom, config, t)).collect())
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decorrelated::{propagate_averaged, AveragedDynamics};
    use crate::model::{helium_2s2p_params, FieldModel};
    use crate::ode::Tolerances;
    use crate::pulses::PulseShape;
    use crate::units::{intensity_to_au, time_fs_to_au};
    use approx::assert_relative_eq;

    fn cfg(i0_wcm2: f64, gl: f64, delta: f64, t_fs: f64) -> FieldConfig {
        FieldConfig::new(
            intensity_to_au(i0_wcm2),
            gl,
            delta,
            PulseShape::square(time_fs_to_au(t_fs)).unwrap(),
            FieldModel::PhaseDiffusion,
        )
        .unwrap()
    }

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn poly_arithmetic_and_roots() {
        let p = &Poly::linear(1.0) * &Poly::linear(-2.0); // (s+1)(s-2)
        assert_eq!(p, Poly(vec![-2.0, -1.0, 1.0]));
        let mut r: Vec<f64> = p.roots(1.0).iter().map(|z| z.re).collect();
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(r[0], -1.0, max_relative = 1e-14);
        assert_relative_eq!(r[1], 2.0, max_relative = 1e-14);
        assert_eq!((&p - &p).degree(), 0);
        assert!((&p - &p).is_zero());
        assert_eq!(p.derivative(), Poly(vec![-1.0, 2.0]));
    }

    #[test]
    fn zero_intensity_transforms() {
        let atom = helium_2s2p_params();
        let conf = cfg(0.0, 0.0018, 0.001, 120.0);
        let ctx = SolverContext::new(&atom, &conf);
        let g = solve_sdomain(&atom, &ctx, 0.0, (1.0, 0.0)).unwrap();
        for s in [0.3, 1.0, 7.5] {
            assert_relative_eq!(g.f1(c(s)).re, 1.0 / s, max_relative = 1e-14);
            assert_eq!(g.f2(c(s)).norm(), 0.0);
        }
        let e = solve_sdomain(&atom, &ctx, 0.0, (0.0, 1.0)).unwrap();
        for s in [0.3, 1.0, 7.5] {
            assert_relative_eq!(e.f2(c(s)).re, 1.0 / (s + atom.big_gamma), max_relative = 1e-14);
        }
    }

    #[test]
    fn single_pole_inversion() {
        let gamma = 1.37e-3;
        let rp = RationalPair {
            f1_num: Poly::constant(1.0),
            f2_num: Poly::constant(0.0),
            common_den: Poly::linear(gamma),
            rate_scale: gamma,
        };
        let (a, _) = invert_partial_fractions(&rp).unwrap();
        assert_eq!(a.terms.len(), 1);
        assert_relative_eq!(a.terms[0].0.re, -gamma, max_relative = 1e-14);
        assert_relative_eq!(a.terms[0].1.re, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn improper_and_degenerate_inputs() {
        let rp = RationalPair {
            f1_num: Poly(vec![1.0, 1.0]),
            f2_num: Poly::constant(0.0),
            common_den: Poly::linear(1.0),
            rate_scale: 1.0,
        };
        assert_eq!(invert_partial_fractions(&rp), Err(Error::NotStrictlyProper));
        let double = &Poly::linear(1.0) * &Poly::linear(1.0);
        let rp = RationalPair {
            f1_num: Poly::constant(1.0),
            f2_num: Poly::constant(0.0),
            common_den: double,
            rate_scale: 1.0,
        };
        assert!(matches!(invert_partial_fractions(&rp), Err(Error::DegenerateRoots { .. })));
    }

    #[test]
    fn initial_conditions_and_late_decay() {
        let atom = helium_2s2p_params();
        for delta in [0.0, 0.001, -0.004] {
            let conf = cfg(1e14, 0.0018, delta, 120.0);
            let ctx = SolverContext::new(&atom, &conf);
            let es = invert_partial_fractions(&solve_sdomain(&atom, &ctx, conf.i0, (1.0, 0.0)).unwrap()).unwrap();
            let (a, b) = populations_at(&es, 0.0);
            assert!((a - 1.0).abs() < 1e-12 && b.abs() < 1e-12, "{a} {b}");
            let slowest = es.0.poles().iter().map(|p| -p.re).fold(f64::INFINITY, f64::min);
            let (_, b) = populations_at(&es, 20.0 / slowest);
            assert!(b.abs() < 1e-8);
        }
    }

    #[test]
    fn poles_are_stable_and_conjugate_closed() {
        let atom = helium_2s2p_params();
        for i in [1e13, 5e13, 1e14, 5e14] {
            for delta in [-0.01, -0.002, 0.0, 0.0015, 0.02] {
                let conf = cfg(i, 0.0018, delta, 120.0);
                let ctx = SolverContext::new(&atom, &conf);
                let (es, _) = invert_partial_fractions(&solve_sdomain(&atom, &ctx, conf.i0, (1.0, 0.0)).unwrap()).unwrap();
                let poles = es.poles();
                for p in &poles {
                    assert!(p.re <= 1e-12, "{i} {delta}: {p}");
                    let partner = poles.iter().map(|q| (q - p.conj()).norm()).fold(f64::INFINITY, f64::min);
                    assert!(partner < 1e-9 * p.norm().max(1e-6));
                }
            }
        }
    }

    #[test]
    fn laplace_matches_expm_and_integration() {
        let atom = helium_2s2p_params();
        for &(i, d) in &[(1e13, 0.0), (1e13, 0.002), (1e14, -0.001), (5e14, 0.0007)] {
            let conf = cfg(i, 0.0018, d, 120.0);
            let t = conf.t_pulse();
            let lap = constant_intensity_populations(&atom, &conf, &[t]).unwrap()[0];
            let ex = populations_by_expm(&atom, &conf, t);
            assert!((lap.0 - ex.0).abs() < 1e-10 && (lap.1 - ex.1).abs() < 1e-10, "{lap:?} {ex:?}");
            let ad = propagate_averaged(&atom, &conf, &[0.0, t]).unwrap()[1];
            assert!((lap.0 - ad.s11).abs() < 1e-8 && (lap.1 - ad.s22).abs() < 1e-8);
        }
    }

    #[test]
    fn transform_matches_quadrature_of_time_solution() {
        let atom = helium_2s2p_params();
        for s in [1.0, 2e-3] {
            // ∫₀^∞ e^{-st} σ11(t) dt by composite Simpson on the adaptive solution
            let t_end = 40.0 / s;
            let conf = FieldConfig {
                pulse: PulseShape::square(t_end * 1.01).unwrap(),
                ..cfg(1e13, 0.0018, 0.0, 120.0)
            };
            let ctx = SolverContext::new(&atom, &conf);
            let rp = solve_sdomain(&atom, &ctx, conf.i0, (1.0, 0.0)).unwrap();
            let n = 4000;
            let grid: Vec<f64> = (0..=n).map(|k| t_end * k as f64 / n as f64).collect();
            let xs = AveragedDynamics::new(&atom, &conf)
                .with_tolerances(Tolerances {
                    atol: 1e-13,
                    rtol: 1e-12,
                })
                .propagate(&grid)
                .unwrap();
            let h = t_end / n as f64;
            let mut acc = 0.0;
            for (k, (t, x)) in grid.iter().zip(&xs).enumerate() {
                let w = if k == 0 || k == n {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc += w * (-s * t).exp() * x.s11;
            }
            acc *= h / 3.0;
            assert_relative_eq!(rp.f1(c(s)).re, acc, max_relative = 1e-6);
        }
    }

    #[test]
    fn tiny_detuning_is_treated_as_resonant() {
        let atom = helium_2s2p_params();
        let conf = cfg(1e14, 0.0018, 1e-19, 120.0);
        let t = conf.t_pulse();
        let a = constant_intensity_populations(&atom, &conf, &[t]).unwrap()[0];
        let b = constant_intensity_populations(&atom, &conf.with_delta(0.0), &[t]).unwrap()[0];
        assert!((a.0 - b.0).abs() < 1e-12);
    }
}
