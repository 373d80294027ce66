//! Run configuration: TOML sections `[atom]`, `[field]`, `[scan]`,
//! `[solver]`, `[output]`, with physical inputs in laboratory units.
//!
//! ```toml
//! [field]
//! pulse = "square"
//! intensity_w_cm2 = [1e13, 5e13, 1e14, 5e14]
//! bandwidth_au = 0.0018
//! duration_fs = 120
//!
//! [scan]
//! delta_min_au = -0.015
//! delta_max_au = 0.015
//! points = 301
//! ```
//!
//! `intensity_w_cm2`, `bandwidth_au` and `duration_fs` accept a number or a
//! list; every combination becomes one curve.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::model::{helium_2s2p_params, AtomParams, FieldConfig, FieldModel};
use crate::observables::{detuning_grid, ScanOptions, Solver};
use crate::ode::Tolerances;
use crate::propagator::McOptions;
use crate::pulses::{PulseKind, PulseShape, DEFAULT_RAMP_FRACTION, DEFAULT_WINDOW_FACTOR};
use crate::units;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("key `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomSection {
    q: Option<f64>,
    big_gamma: Option<f64>,
    d21: Option<f64>,
    gamma_per_intensity: Option<f64>,
    omega_ag: Option<f64>,
    sigma_di_cm2: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldSection {
    intensity_w_cm2: OneOrMany<f64>,
    bandwidth_au: OneOrMany<f64>,
    duration_fs: OneOrMany<f64>,
    #[serde(default = "default_pulse")]
    pulse: String,
    #[serde(default = "default_model")]
    model: String,
    window_factor: Option<f64>,
    ramp_fraction: Option<f64>,
}

fn default_pulse() -> String {
    "square".into()
}

fn default_model() -> String {
    "phase-diffusion".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScanSection {
    delta_min_au: f64,
    delta_max_au: f64,
    points: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    #[serde(alias = "solvers")]
    solver: Option<OneOrMany<String>>,
    n_traj: Option<usize>,
    seed: Option<u64>,
    rtol: Option<f64>,
    atol: Option<f64>,
    dt_au: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    name: Option<String>,
    dir: Option<String>,
    double_ionization: Option<bool>,
    eval_time_fs: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    atom: AtomSection,
    field: FieldSection,
    scan: ScanSection,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    output: OutputSection,
}

/// A validated run: one curve per field configuration, a common detuning
/// grid and the selected solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub atom: AtomParams,
    pub curves: Vec<FieldConfig>,
    pub grid: Vec<f64>,
    pub solvers: Vec<Solver>,
    pub options: ScanOptions,
    pub name: String,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            ConfigError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        build(raw)
    }

    /// The single solver of a scan; errors unless exactly one is selected.
    pub fn single_solver(&self) -> Result<Solver, ConfigError> {
        match self.solvers.as_slice() {
            [s] => Ok(*s),
            _ => Err(invalid(
                "solver.solver",
                format!("exactly one solver required, got {}", self.solvers.len()),
            )),
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, column)
}

fn positive(key: &str, x: f64) -> Result<f64, ConfigError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(invalid(key, format!("must be > 0, got {x}")))
    }
}

fn non_negative(key: &str, x: f64) -> Result<f64, ConfigError> {
    if x.is_finite() && x >= 0.0 {
        Ok(x)
    } else {
        Err(invalid(key, format!("must be >= 0, got {x}")))
    }
}

fn non_empty<T: Clone>(key: &str, v: &OneOrMany<T>) -> Result<Vec<T>, ConfigError> {
    let v = v.to_vec();
    if v.is_empty() {
        return Err(invalid(key, "empty list"));
    }
    Ok(v)
}

fn build(raw: RawConfig) -> Result<RunConfig, ConfigError> {
    let base = helium_2s2p_params();
    let a = &raw.atom;
    let atom = AtomParams {
        q: a.q.unwrap_or(base.q),
        big_gamma: a.big_gamma.unwrap_or(base.big_gamma),
        d21: a.d21.unwrap_or(base.d21),
        gamma_per_intensity: a.gamma_per_intensity.unwrap_or(base.gamma_per_intensity),
        omega_ag: a.omega_ag.unwrap_or(base.omega_ag),
        sigma_di: a.sigma_di_cm2.map_or(base.sigma_di, units::area_cm2_to_au),
    };
    atom.validate().map_err(|e| invalid("atom", e.to_string()))?;

    let f = &raw.field;
    let kind: PulseKind = f.pulse.parse().map_err(|e: String| invalid("field.pulse", e))?;
    let model: FieldModel = f.model.parse().map_err(|e: String| invalid("field.model", e))?;
    let window_factor = f.window_factor.unwrap_or(DEFAULT_WINDOW_FACTOR);
    let ramp_fraction = f.ramp_fraction.unwrap_or(DEFAULT_RAMP_FRACTION);
    let intensities = non_empty("field.intensity_w_cm2", &f.intensity_w_cm2)?;
    let bandwidths = non_empty("field.bandwidth_au", &f.bandwidth_au)?;
    let durations = non_empty("field.duration_fs", &f.duration_fs)?;
    let mut curves = Vec::new();
    for &t_fs in &durations {
        let t = units::time_fs_to_au(positive("field.duration_fs", t_fs)?);
        let pulse =
            PulseShape::with_options(kind, t, ramp_fraction, window_factor).map_err(|e| invalid("field", e.to_string()))?;
        for &gl in &bandwidths {
            let gl = non_negative("field.bandwidth_au", gl)?;
            for &i in &intensities {
                let i0 = units::intensity_to_au(non_negative("field.intensity_w_cm2", i)?);
                let c = FieldConfig::new(i0, gl, 0.0, pulse, model).map_err(|e| invalid("field", e.to_string()))?;
                curves.push(c);
            }
        }
    }

    let s = &raw.scan;
    if s.points < 2 {
        return Err(invalid("scan.points", format!("need at least 2 points, got {}", s.points)));
    }
    let grid =
        detuning_grid(s.delta_min_au, s.delta_max_au, s.points).map_err(|e| invalid("scan.delta_max_au", e.to_string()))?;

    let sv = &raw.solver;
    let names = sv.solver.as_ref().map_or_else(|| vec!["laplace".to_string()], |v| v.to_vec());
    let solvers = names
        .iter()
        .map(|n| n.parse::<Solver>().map_err(|e| invalid("solver.solver", e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    if solvers.is_empty() {
        return Err(invalid("solver.solver", "no solver selected"));
    }
    let defaults = ScanOptions::default();
    let tol = Tolerances {
        atol: positive("solver.atol", sv.atol.unwrap_or(defaults.tol.atol))?,
        rtol: positive("solver.rtol", sv.rtol.unwrap_or(defaults.tol.rtol))?,
    };
    let n_traj = sv.n_traj.unwrap_or(defaults.mc.n_traj);
    if n_traj == 0 {
        return Err(invalid("solver.n_traj", "must be >= 1"));
    }
    let dt = sv.dt_au.map(|d| positive("solver.dt_au", d)).transpose()?;
    let mc = McOptions {
        n_traj,
        seed: sv.seed.unwrap_or(defaults.mc.seed),
        dt,
        ..defaults.mc
    };

    let o = &raw.output;
    let eval_time = o
        .eval_time_fs
        .map(|t| positive("output.eval_time_fs", t).map(units::time_fs_to_au))
        .transpose()?;
    if let Some(t) = eval_time {
        if curves.iter().any(|c| c.pulse.window_end() > t) {
            return Err(invalid("output.eval_time_fs", "precedes the end of the pulse window"));
        }
    }
    let name = o.name.clone().unwrap_or_else(|| "scan".into());
    if name.is_empty() || name.contains(['/', '\\']) {
        return Err(invalid("output.name", format!("not a plain file stem: `{name}`")));
    }

    Ok(RunConfig {
        atom,
        curves,
        grid,
        solvers,
        options: ScanOptions {
            double_ionization: o.double_ionization.unwrap_or(false),
            eval_time,
            tol,
            mc,
            ..defaults
        },
        name,
        out_dir: PathBuf::from(o.dir.clone().unwrap_or_else(|| "out".into())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const FIG1: &str = r#"
[field]
pulse = "square"
intensity_w_cm2 = [1e13, 5e13, 1e14, 5e14]
bandwidth_au = 0.0018
duration_fs = 120

[scan]
delta_min_au = -0.015
delta_max_au = 0.015
points = 301

[output]
name = "fig1"
"#;

    #[test]
    fn parses_figure_config() {
        let c = RunConfig::parse(FIG1).unwrap();
        assert_eq!(c.curves.len(), 4);
        assert_eq!(c.grid.len(), 301);
        assert_eq!(c.solvers, vec![Solver::Laplace]);
        assert_eq!(c.name, "fig1");
        assert_relative_eq!(c.curves[0].i0, units::intensity_to_au(1e13));
        assert_relative_eq!(c.curves[3].t_pulse(), units::time_fs_to_au(120.0));
        assert_eq!(c.curves[0].model, FieldModel::PhaseDiffusion);
        assert_eq!(c.atom, helium_2s2p_params());
        assert!(!c.options.double_ionization);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = FIG1.replace("points = 301", "points = \"many\"");
        match RunConfig::parse(&text) {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 11),
            other => panic!("{other:?}"),
        }
        let text = FIG1.replace("duration_fs = 120", "duration_fs = 120\ncolour = 3");
        match RunConfig::parse(&text) {
            Err(ConfigError::Parse { line, message, .. }) => {
                assert_eq!(line, 7);
                assert!(message.contains("colour"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_values_name_the_key() {
        let cases = [
            ("points = 301", "points = 0", "scan.points"),
            ("pulse = \"square\"", "pulse = \"sawtooth\"", "field.pulse"),
            ("duration_fs = 120", "duration_fs = -1", "field.duration_fs"),
            ("duration_fs = 120", "duration_fs = []", "field.duration_fs"),
            ("delta_max_au = 0.015", "delta_max_au = -0.02", "scan.delta_max_au"),
        ];
        for (from, to, key) in cases {
            match RunConfig::parse(&FIG1.replace(from, to)) {
                Err(ConfigError::Invalid { key: k, .. }) => assert_eq!(k, key),
                other => panic!("{to}: {other:?}"),
            }
        }
    }

    #[test]
    fn solver_lists_and_overrides() {
        let text = format!("{FIG1}\n[solver]\nsolvers = [\"laplace\", \"mc\"]\nn_traj = 50\nseed = 4\n");
        let c = RunConfig::parse(&text).unwrap();
        assert_eq!(c.solvers, vec![Solver::Laplace, Solver::MonteCarlo]);
        assert!(c.single_solver().is_err());
        assert_eq!(c.options.mc.n_traj, 50);
        assert_eq!(c.options.mc.seed, 4);
    }

    #[test]
    fn line_col_offsets() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }
}
