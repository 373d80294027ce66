//! Physical parameters of the ground state + autoionizing state system and
//! the couplings derived from them.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::pulses::PulseShape;
use crate::units;

/// Atomic constants of an isolated autoionizing resonance, all in a.u.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomParams {
    /// Fano asymmetry parameter.
    pub q: f64,
    /// Autoionization width Γ.
    pub big_gamma: f64,
    /// Dipole matrix element between the ground state and the discrete part.
    pub d21: f64,
    /// Direct ionization width per unit intensity, γ = c_γ·I.
    pub gamma_per_intensity: f64,
    /// Resonance energy ω₂₁.
    pub omega_ag: f64,
    /// Photoionization cross section of the ion produced by autoionization.
    pub sigma_di: f64,
}

/// Helium 2s2p ¹P parameters.
pub fn helium_2s2p_params() -> AtomParams {
    AtomParams {
        q: -2.79,
        big_gamma: 1.37e-3,
        d21: 0.025,
        gamma_per_intensity: 0.1775,
        omega_ag: 2.211,
        sigma_di: units::area_cm2_to_au(1.2e-18),
    }
}

impl Default for AtomParams {
    fn default() -> Self {
        helium_2s2p_params()
    }
}

impl AtomParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.big_gamma.is_finite() && self.big_gamma > 0.0) {
            return Err(Error::invalid("big_gamma", "must be > 0"));
        }
        if !(self.d21.is_finite() && self.d21 > 0.0) {
            return Err(Error::invalid("d21", "must be > 0"));
        }
        if !(self.gamma_per_intensity.is_finite() && self.gamma_per_intensity >= 0.0) {
            return Err(Error::invalid("gamma_per_intensity", "must be >= 0"));
        }
        if !(self.sigma_di.is_finite() && self.sigma_di >= 0.0) {
            return Err(Error::invalid("sigma_di", "must be >= 0"));
        }
        if !(self.q.is_finite() && self.q != 0.0) {
            return Err(Error::invalid("q", "must be finite and non-zero"));
        }
        if !self.omega_ag.is_finite() {
            return Err(Error::invalid("omega_ag", "must be finite"));
        }
        Ok(())
    }

    pub fn lifetime(&self) -> f64 {
        1.0 / self.big_gamma
    }

    /// Coupling factors `(1 - i/q)` and `(1 + i/q)`.
    pub fn fano_factors(&self) -> (Complex64, Complex64) {
        let iq = Complex64::new(0.0, 1.0 / self.q);
        (Complex64::new(1.0, 0.0) - iq, Complex64::new(1.0, 0.0) + iq)
    }
}

/// Ω = d₂₁·ℰ₀/2.
pub fn rabi_frequency(atom: &AtomParams, e0: f64) -> f64 {
    atom.d21 * e0 / 2.0
}

/// γ = c_γ·I.
pub fn ionization_width(atom: &AtomParams, i: f64) -> f64 {
    atom.gamma_per_intensity * i
}

/// Relative violation of 4Ω² = q²γΓ at intensity `i`.
///
/// Both sides are linear in the intensity, so the result does not depend on
/// `i` for a fixed parameter set.
pub fn check_fano_relation(atom: &AtomParams, i: f64) -> f64 {
    let omega = rabi_frequency(atom, units::field_amplitude_from_intensity(i));
    let rhs = atom.q * atom.q * ionization_width(atom, i) * atom.big_gamma;
    (4.0 * omega * omega - rhs).abs() / rhs
}

/// Emits a warning when the Fano relation is violated by more than `tolerance`.
pub fn warn_fano_relation(atom: &AtomParams, i: f64, tolerance: f64) -> f64 {
    let dev = check_fano_relation(atom, i);
    if dev > tolerance {
        log::warn!(
            "4*Omega^2 = q^2*gamma*Gamma violated by {:.1}% for the atomic parameters in use",
            100.0 * dev
        );
    }
    dev
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldModel {
    Deterministic,
    PhaseDiffusion,
    Chaotic,
}

impl FromStr for FieldModel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "deterministic" | "coherent" => Ok(FieldModel::Deterministic),
            "phase-diffusion" | "phase_diffusion" | "pd" => Ok(FieldModel::PhaseDiffusion),
            "chaotic" => Ok(FieldModel::Chaotic),
            other => Err(format!("unknown field model `{other}`")),
        }
    }
}

impl fmt::Display for FieldModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FieldModel::Deterministic => "deterministic",
            FieldModel::PhaseDiffusion => "phase-diffusion",
            FieldModel::Chaotic => "chaotic",
        })
    }
}

/// Drive description in a.u.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldConfig {
    /// Peak intensity I₀.
    pub i0: f64,
    /// Bandwidth γ_L.
    pub gamma_l: f64,
    /// Detuning Δ = ω − ω₂₁.
    pub delta: f64,
    pub pulse: PulseShape,
    pub model: FieldModel,
}

impl FieldConfig {
    pub fn new(i0: f64, gamma_l: f64, delta: f64, pulse: PulseShape, model: FieldModel) -> Result<Self> {
        let cfg = Self {
            i0,
            gamma_l,
            delta,
            pulse,
            model,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.i0.is_finite() && self.i0 >= 0.0) {
            return Err(Error::invalid("i0", "must be >= 0"));
        }
        if !(self.gamma_l.is_finite() && self.gamma_l >= 0.0) {
            return Err(Error::invalid("gamma_l", "must be >= 0"));
        }
        if !self.delta.is_finite() {
            return Err(Error::invalid("delta", "must be finite"));
        }
        if !(self.pulse.t_pulse > 0.0) {
            return Err(Error::invalid("t_pulse", "must be > 0"));
        }
        Ok(())
    }

    pub fn t_pulse(&self) -> f64 {
        self.pulse.t_pulse
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self { delta, ..*self }
    }

    pub fn intensity(&self, t: f64) -> f64 {
        self.pulse.intensity(self.i0, t)
    }
}

/// Derived rates at peak intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverContext {
    /// κ = −iΔ + (γ+Γ)/2.
    pub kappa: Complex64,
    /// κ̃ = κ + γ_L/2.
    pub kappa_tilde: Complex64,
    pub omega_rabi: f64,
    /// γ at peak intensity.
    pub gamma: f64,
}

impl SolverContext {
    pub fn new(atom: &AtomParams, config: &FieldConfig) -> Self {
        let gamma = ionization_width(atom, config.i0);
        let kappa = Complex64::new(0.5 * (gamma + atom.big_gamma), -config.delta);
        let kappa_tilde = kappa + 0.5 * config.gamma_l;
        Self {
            kappa,
            kappa_tilde,
            omega_rabi: rabi_frequency(atom, units::field_amplitude_from_intensity(config.i0)),
            gamma,
        }
    }
}
