//! Field-averaged population dynamics after decorrelating atom and field.
//!
//! The memory integrals `y_i(t) = ∫₀ᵗ ⟨σ_ii(t')⟩ e^{−κ̃(t−t')} dt'` obey the
//! local equation `ẏ_i = ⟨σ_ii⟩ − κ̃ y_i`, which turns the integro-differential
//! system into a closed six-dimensional real ODE.
//!
//! For shaped pulses the kernel rate κ̃ is built from the peak intensity, while
//! the direct-ionization loss γ(t) and the coupling prefactor d²I(t) follow the
//! envelope at the outer time `t`.

use nalgebra::SMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{AtomParams, FieldConfig, SolverContext};
use crate::ode::{dopri5, Tolerances};

pub type Generator = SMatrix<f64, 6, 6>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragedState {
    pub s11: f64,
    pub s22: f64,
    pub y1: Complex64,
    pub y2: Complex64,
}

impl AveragedState {
    pub fn ground() -> Self {
        Self {
            s11: 1.0,
            s22: 0.0,
            y1: Complex64::new(0.0, 0.0),
            y2: Complex64::new(0.0, 0.0),
        }
    }

    fn to_array(self) -> [f64; 6] {
        [self.s11, self.s22, self.y1.re, self.y1.im, self.y2.re, self.y2.im]
    }

    fn from_array(x: &[f64; 6]) -> Self {
        Self {
            s11: x[0],
            s22: x[1],
            y1: Complex64::new(x[2], x[3]),
            y2: Complex64::new(x[4], x[5]),
        }
    }
}

/// Real coefficients multiplying the cosine (`C_i = Re y_i`) and sine
/// (`S_i = Im y_i`) memory integrals once the Im{·} in the averaged equations
/// is expanded. Used by the generator and by the Laplace-domain solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Couplings {
    /// ṡ11 ∋ k·(c11_cos·C1 + c11_sin·S1 + c12_cos·C2)
    pub c11_cos: f64,
    pub c11_sin: f64,
    pub c12_cos: f64,
    /// ṡ22 ∋ k·(c21_cos·C1 + c22_cos·C2 + c22_sin·S2)
    pub c21_cos: f64,
    pub c22_cos: f64,
    pub c22_sin: f64,
}

impl Couplings {
    pub fn new(q: f64) -> Self {
        let iq2 = 1.0 / (q * q);
        Self {
            c11_cos: -1.0 + iq2,
            c11_sin: -2.0 / q,
            c12_cos: 1.0 + iq2,
            c21_cos: 1.0 + iq2,
            c22_cos: -1.0 + iq2,
            c22_sin: 2.0 / q,
        }
    }

    /// Drops the odd-in-detuning sine terms, keeping the 1/q² pieces.
    pub fn without_sine_terms(self) -> Self {
        Self {
            c11_sin: 0.0,
            c22_sin: 0.0,
            ..self
        }
    }
}

/// Settings of the averaged-equation integrator for one field configuration.
#[derive(Debug, Clone, Copy)]
pub struct AveragedDynamics {
    pub atom: AtomParams,
    pub config: FieldConfig,
    /// Memory-kernel rate; peak-intensity value by default.
    pub kappa_tilde: Complex64,
    pub tol: Tolerances,
}

impl AveragedDynamics {
    pub fn new(atom: &AtomParams, config: &FieldConfig) -> Self {
        Self {
            atom: *atom,
            config: *config,
            kappa_tilde: SolverContext::new(atom, config).kappa_tilde,
            tol: Tolerances::default(),
        }
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    fn check_kernel(&self) -> Result<()> {
        if !(self.kappa_tilde.re > 0.0) {
            return Err(Error::NonDecayingKernel { re: self.kappa_tilde.re });
        }
        Ok(())
    }

    /// Integrates the full decorrelated system on `t_grid`, starting from
    /// the ground state with empty memory at `t_grid[0]`.
    pub fn propagate(&self, t_grid: &[f64]) -> Result<Vec<AveragedState>> {
        self.check_kernel()?;
        let atom = self.atom;
        let cfg = self.config;
        let kt = self.kappa_tilde;
        let (f1, f2) = atom.fano_factors();
        let i = Complex64::i();
        let d2 = atom.d21 * atom.d21;
        // bracket coefficients of y1, y2 in the two population equations
        let a1 = f1 * (-i * f1);
        let a2 = f1 * (i * f2);
        let b1 = f2 * (-i * f1);
        let b2 = f2 * (i * f2);

        let rhs = move |t: f64, x: &[f64; 6]| -> [f64; 6] {
            let st = AveragedState::from_array(x);
            let intensity = cfg.intensity(t);
            let gamma = atom.gamma_per_intensity * intensity;
            let pref = d2 * intensity;
            let ds11 = -gamma * st.s11 + pref * (a1 * st.y1 + a2 * st.y2).im;
            let ds22 = -atom.big_gamma * st.s22 - pref * (b1 * st.y1 + b2 * st.y2).im;
            let dy1 = st.s11 - kt * st.y1;
            let dy2 = st.s22 - kt * st.y2;
            [ds11, ds22, dy1.re, dy1.im, dy2.re, dy2.im]
        };
        let xs = dopri5(rhs, AveragedState::ground().to_array(), t_grid, self.tol)?;
        Ok(xs.iter().map(AveragedState::from_array).collect())
    }

    /// Rate equations: populations taken out of the memory integrals, which
    /// leaves the factor (1 − e^{−κ̃t})/κ̃.
    pub fn propagate_rate(&self, t_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
        self.check_kernel()?;
        let atom = self.atom;
        let cfg = self.config;
        let kt = self.kappa_tilde;
        let t0 = t_grid.first().copied().unwrap_or(0.0);
        let (f1, f2) = atom.fano_factors();
        let i = Complex64::i();
        let d2 = atom.d21 * atom.d21;
        let a1 = -i * f1 * f1;
        let a2 = i * f1 * f2;
        let b1 = -i * f1 * f2;
        let b2 = i * f2 * f2;

        let rhs = move |t: f64, x: &[f64; 2]| -> [f64; 2] {
            let (s11, s22) = (x[0], x[1]);
            let intensity = cfg.intensity(t);
            let gamma = atom.gamma_per_intensity * intensity;
            let pref = d2 * intensity;
            let g = memory_factor(kt, t - t0);
            let ds11 = -gamma * s11 + pref * (g * (a1 * s11 + a2 * s22)).im;
            let ds22 = -atom.big_gamma * s22 - pref * (g * (b1 * s11 + b2 * s22)).im;
            [ds11, ds22]
        };
        let xs = dopri5(rhs, [1.0, 0.0], t_grid, self.tol)?;
        Ok(xs.iter().map(|x| (x[0], x[1])).collect())
    }
}

/// Warns when the peak Rabi frequency exceeds 1.5 Γ, where the rate
/// equations stop being reliable. Returns whether they are in range.
pub fn check_rate_validity(atom: &AtomParams, config: &FieldConfig) -> bool {
    let ratio = SolverContext::new(atom, config).omega_rabi / atom.big_gamma;
    if ratio > 1.5 {
        log::warn!(
            "rate equations used with Omega/Gamma = {ratio:.2}; they hold while the Rabi frequency stays below or comparable to the autoionization width"
        );
    }
    ratio <= 1.5
}

/// (1 − e^{−κt})/κ, accurate for small |κt|.
pub fn memory_factor(kappa: Complex64, t: f64) -> Complex64 {
    let z = kappa * t;
    if z.norm() < 1e-4 {
        // t·(1 − z/2 + z²/6 − z³/24)
        t * (1.0 - z / 2.0 + z * z / 6.0 - z * z * z / 24.0)
    } else {
        (1.0 - (-z).exp()) / kappa
    }
}

pub fn propagate_averaged(atom: &AtomParams, config: &FieldConfig, t_grid: &[f64]) -> Result<Vec<AveragedState>> {
    AveragedDynamics::new(atom, config).propagate(t_grid)
}

pub fn propagate_rate_equations(atom: &AtomParams, config: &FieldConfig, t_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_rate_validity(atom, config);
    AveragedDynamics::new(atom, config).propagate_rate(t_grid)
}

/// Constant-intensity generator of `(s11, s22, Re y1, Im y1, Re y2, Im y2)`.
pub fn build_generator(atom: &AtomParams, context: &SolverContext, i0: f64) -> Generator {
    build_generator_with(atom, context, i0, &Couplings::new(atom.q))
}

pub fn build_generator_with(atom: &AtomParams, context: &SolverContext, i0: f64, c: &Couplings) -> Generator {
    let k = atom.d21 * atom.d21 * i0;
    let gamma = atom.gamma_per_intensity * i0;
    let a = context.kappa_tilde.re;
    let delta = -context.kappa_tilde.im;
    #[rustfmt::skip]
    let g = Generator::from_row_slice(&[
        -gamma, 0.0,              k * c.c11_cos, k * c.c11_sin, k * c.c12_cos, 0.0,
        0.0,    -atom.big_gamma,  k * c.c21_cos, 0.0,           k * c.c22_cos, k * c.c22_sin,
        1.0,    0.0,              -a,            -delta,        0.0,           0.0,
        0.0,    0.0,              delta,         -a,            0.0,           0.0,
        0.0,    1.0,              0.0,           0.0,           -a,            -delta,
        0.0,    0.0,              0.0,           0.0,           delta,         -a,
    ]);
    let abscissa = spectral_abscissa(&g);
    if abscissa > 1e-12 * a.max(atom.big_gamma) {
        log::warn!("generator has a growing mode: spectral abscissa {abscissa:.3e}");
    }
    g
}

pub fn eigenvalues(g: &Generator) -> Vec<Complex64> {
    g.complex_eigenvalues().iter().copied().collect()
}

/// Largest real part of the generator's eigenvalues.
pub fn spectral_abscissa(g: &Generator) -> f64 {
    g.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// `exp(G t) x0` for every grid time (measured from 0).
pub fn propagate_generator(g: &Generator, x0: &[f64; 6], t_grid: &[f64]) -> Vec<AveragedState> {
    let x0 = SMatrix::<f64, 6, 1>::from_column_slice(x0);
    t_grid
        .iter()
        .map(|&t| {
            let x = (g * t).exp() * x0;
            AveragedState::from_array(&[x[0], x[1], x[2], x[3], x[4], x[5]])
        })
        .collect()
}

/// Matrix-exponential populations at time `t` for a constant-intensity
/// configuration, from the ground state.
pub fn populations_by_expm(atom: &AtomParams, config: &FieldConfig, t: f64) -> (f64, f64) {
    let ctx = SolverContext::new(atom, config);
    let g = build_generator(atom, &ctx, config.i0);
    let s = propagate_generator(&g, &AveragedState::ground().to_array(), &[t])[0];
    (s.s11, s.s22)
}
