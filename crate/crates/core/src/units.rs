//! Laboratory units ↔ atomic units.
//!
//! Everything inside the library works in atomic units (a.u.). These
//! conversions are only meant to be used at the configuration boundary.

use std::fmt;

/// Hartree energy in eV (CODATA 2018).
pub const HARTREE_EV: f64 = 27.211386;
/// Atomic unit of time in fs (CODATA 2018).
pub const AU_TIME_FS: f64 = 0.02418884;
/// Atomic unit of intensity in W/cm².
pub const AU_INTENSITY_W_CM2: f64 = 3.50945e16;
/// Bohr radius squared in cm² (atomic unit of area).
pub const AU_AREA_CM2: f64 = 2.8002852e-17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnitKind {
    Energy,
    Time,
    Intensity,
    FieldAmplitude,
    Area,
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            UnitKind::Energy => "energy",
            UnitKind::Time => "time",
            UnitKind::Intensity => "intensity",
            UnitKind::FieldAmplitude => "field-amplitude",
            UnitKind::Area => "area",
        };
        f.write_str(s)
    }
}

/// A value in atomic units tagged with what kind of quantity it is.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity {
    value: f64,
    kind: UnitKind,
}

impl Quantity {
    /// Returns `None` if the value is not finite, or negative for a time or
    /// an intensity.
    pub fn new(value: f64, kind: UnitKind) -> Option<Self> {
        if !value.is_finite() {
            return None;
        }
        if matches!(kind, UnitKind::Time | UnitKind::Intensity) && value < 0.0 {
            return None;
        }
        Some(Self { value, kind })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn kind(&self) -> UnitKind {
        self.kind
    }

    /// Value expressed in the laboratory unit of its kind
    /// (eV, fs, W/cm², a.u., cm²).
    pub fn to_lab(&self) -> f64 {
        match self.kind {
            UnitKind::Energy => energy_au_to_ev(self.value),
            UnitKind::Time => time_au_to_fs(self.value),
            UnitKind::Intensity => intensity_from_au(self.value),
            UnitKind::FieldAmplitude => self.value,
            UnitKind::Area => area_au_to_cm2(self.value),
        }
    }
}

pub fn energy_ev_to_au(e: f64) -> f64 {
    e / HARTREE_EV
}

pub fn energy_au_to_ev(e: f64) -> f64 {
    e * HARTREE_EV
}

pub fn time_fs_to_au(t: f64) -> f64 {
    t / AU_TIME_FS
}

pub fn time_au_to_fs(t: f64) -> f64 {
    t * AU_TIME_FS
}

/// W/cm² → a.u.
pub fn intensity_to_au(i: f64) -> f64 {
    i / AU_INTENSITY_W_CM2
}

/// a.u. → W/cm².
pub fn intensity_from_au(i: f64) -> f64 {
    i * AU_INTENSITY_W_CM2
}

/// Peak field amplitude ℰ₀ for a cycle-averaged intensity, I = ℰ₀²/2.
pub fn field_amplitude_from_intensity(i: f64) -> f64 {
    (2.0 * i).sqrt()
}

pub fn intensity_from_field_amplitude(e0: f64) -> f64 {
    0.5 * e0 * e0
}

pub fn area_cm2_to_au(a: f64) -> f64 {
    a / AU_AREA_CM2
}

pub fn area_au_to_cm2(a: f64) -> f64 {
    a * AU_AREA_CM2
}
