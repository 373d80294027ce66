//! Measured quantities: ionization probability after the pulse, the
//! double-ionization-corrected probability, detuning scans and profile
//! metrics.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::decorrelated::{check_rate_validity, AveragedDynamics};
use crate::error::{Error, Result};
use crate::laplace::constant_intensity_populations;
use crate::model::{AtomParams, FieldConfig};
use crate::ode::Tolerances;
use crate::propagator::{monte_carlo_average, McOptions};

/// Ionization probability at `t ≥ t_end`, counting the excited population
/// that has autoionized since the pulse ended.
pub fn ionization_probability(s11_t: f64, s22_t: f64, t: f64, t_end: f64, big_gamma: f64) -> Result<f64> {
    if t < t_end {
        return Err(Error::TimeBeforePulseEnd);
    }
    Ok(1.0 - s11_t - s22_t * (-big_gamma * (t - t_end)).exp())
}

/// The `t → ∞` limit: everything not left in the ground state ionizes.
pub fn asymptotic_ionization(s11_t: f64) -> f64 {
    1.0 - s11_t
}

/// Ionization rate of the ion, cross section times photon flux.
pub fn gamma_di(atom: &AtomParams, i: f64, omega: f64) -> f64 {
    atom.sigma_di * i / omega
}

/// Integrates dP⋄/dt = dP/dt − γ_DI(t)·P⋄ from P⋄(0) = 0 with the
/// trapezoidal rule on the grid of `p_ion`.
pub fn double_ionization_correct(times: &[f64], p_ion: &[f64], gamma_di_series: &[f64]) -> Result<Vec<f64>> {
    if times.len() != p_ion.len() || times.len() != gamma_di_series.len() {
        return Err(Error::GridMismatch(format!(
            "{} times, {} probabilities, {} rates",
            times.len(),
            p_ion.len(),
            gamma_di_series.len()
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::GridMismatch("time grid must be strictly increasing".into()));
    }
    let mut out = Vec::with_capacity(times.len());
    let Some(&first) = p_ion.first() else {
        return Ok(out);
    };
    out.push(first);
    for k in 1..times.len() {
        let h = times[k] - times[k - 1];
        let prev = out[k - 1];
        let dp = p_ion[k] - p_ion[k - 1];
        let next = (prev * (1.0 - 0.5 * h * gamma_di_series[k - 1]) + dp) / (1.0 + 0.5 * h * gamma_di_series[k]);
        out.push(next);
    }
    Ok(out)
}

/// Stationary weak-field ionization rate: golden rule with the
/// bandwidth-broadened kernel.
pub fn fano_rate_reference(atom: &AtomParams, i: f64, delta: f64, gamma_l: f64) -> f64 {
    let gamma = atom.gamma_per_intensity * i;
    let kt = Complex64::new(0.5 * (gamma + atom.big_gamma + gamma_l), -delta);
    let (f1, _) = atom.fano_factors();
    gamma + atom.d21 * atom.d21 * i * (Complex64::i() * f1 * f1 / kt).im
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Solver {
    Laplace,
    Decorrelated,
    Rate,
    MonteCarlo,
}

impl Solver {
    pub const ALL: [Solver; 4] = [Solver::Laplace, Solver::Decorrelated, Solver::Rate, Solver::MonteCarlo];
}

impl FromStr for Solver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "laplace" => Ok(Solver::Laplace),
            "decorrelated" | "da" => Ok(Solver::Decorrelated),
            "rate" => Ok(Solver::Rate),
            "mc" | "monte-carlo" | "montecarlo" => Ok(Solver::MonteCarlo),
            other => Err(Error::invalid("solver", format!("unknown solver `{other}`"))),
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::Laplace => "laplace",
            Solver::Decorrelated => "decorrelated",
            Solver::Rate => "rate",
            Solver::MonteCarlo => "mc",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    /// Also report the double-ionization-corrected probability.
    pub double_ionization: bool,
    /// Finite evaluation time; `None` reports the asymptotic value.
    pub eval_time: Option<f64>,
    pub tol: Tolerances,
    pub mc: McOptions,
    /// Samples of the population history used by the correction.
    pub n_history: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            double_ionization: false,
            eval_time: None,
            tol: Tolerances::default(),
            mc: McOptions::default(),
            n_history: 2001,
        }
    }
}

/// Result at a single detuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointResult {
    pub p_ion: f64,
    pub p_corrected: Option<f64>,
    pub std_error: Option<f64>,
}

/// Population history on `[0, window end]`.
struct History {
    times: Vec<f64>,
    s11: Vec<f64>,
    s22: Vec<f64>,
    std_error: Option<f64>,
}

fn history(atom: &AtomParams, config: &FieldConfig, solver: Solver, opts: &ScanOptions, n: usize) -> Result<History> {
    let end = config.pulse.window_end();
    let grid: Vec<f64> = (0..n).map(|k| end * k as f64 / (n - 1) as f64).collect();
    let unzip = |v: Vec<(f64, f64)>| v.into_iter().unzip::<f64, f64, Vec<f64>, Vec<f64>>();
    match solver {
        Solver::Laplace => {
            if !config.pulse.is_constant() {
                return Err(Error::Unsupported(format!(
                    "the Laplace solver needs a square pulse, got {}",
                    config.pulse.kind
                )));
            }
            let (s11, s22) = unzip(constant_intensity_populations(atom, config, &grid)?);
            Ok(History {
                times: grid,
                s11,
                s22,
                std_error: None,
            })
        }
        Solver::Decorrelated => {
            let xs = AveragedDynamics::new(atom, config)
                .with_tolerances(opts.tol)
                .propagate(&grid)?;
            Ok(History {
                times: grid,
                s11: xs.iter().map(|x| x.s11).collect(),
                s22: xs.iter().map(|x| x.s22).collect(),
                std_error: None,
            })
        }
        Solver::Rate => {
            let (s11, s22) = unzip(
                AveragedDynamics::new(atom, config)
                    .with_tolerances(opts.tol)
                    .propagate_rate(&grid)?,
            );
            Ok(History {
                times: grid,
                s11,
                s22,
                std_error: None,
            })
        }
        Solver::MonteCarlo => {
            let r = monte_carlo_average(atom, config, &McOptions { n_record: n, ..opts.mc })?;
            let std_error = Some(r.ionization().std_error);
            Ok(History {
                times: r.times,
                s11: r.mean_sigma11,
                s22: r.mean_sigma22,
                std_error,
            })
        }
    }
}

/// Runs one solver at one detuning.
pub fn evaluate_point(atom: &AtomParams, config: &FieldConfig, solver: Solver, opts: &ScanOptions) -> Result<PointResult> {
    let n = if opts.double_ionization { opts.n_history.max(3) } else { 2 };
    let h = history(atom, config, solver, opts, n)?;
    let end = *h.times.last().unwrap();
    let s11 = *h.s11.last().unwrap();
    let s22 = *h.s22.last().unwrap();
    // fraction of the final excited population that has decayed by the
    // evaluation time
    let decayed = match opts.eval_time {
        Some(t) => {
            if t < end {
                return Err(Error::TimeBeforePulseEnd);
            }
            1.0 - (-atom.big_gamma * (t - end)).exp()
        }
        None => 1.0,
    };
    let p_ion = 1.0 - s11 - s22 * (1.0 - decayed);
    let p_corrected = if opts.double_ionization {
        let omega = atom.omega_ag + config.delta;
        let p: Vec<f64> = h.s11.iter().zip(&h.s22).map(|(a, b)| 1.0 - a - b).collect();
        let g: Vec<f64> = h.times.iter().map(|&t| gamma_di(atom, config.intensity(t), omega)).collect();
        let corrected = double_ionization_correct(&h.times, &p, &g)?;
        Some(corrected.last().unwrap() + s22 * decayed)
    } else {
        None
    };
    Ok(PointResult {
        p_ion,
        p_corrected,
        std_error: h.std_error,
    })
}

/// Detuning scan; per-point failures are recorded and the scan continues.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileScan {
    pub detunings: Vec<f64>,
    /// NaN where the solver failed.
    pub p_ion: Vec<f64>,
    pub p_corrected: Option<Vec<f64>>,
    pub std_error: Option<Vec<f64>>,
    pub solver: Solver,
    pub config: FieldConfig,
    pub failures: Vec<(usize, Error)>,
}

/// `n` equally spaced detunings on `[lo, hi]`; the exact resonance is hit
/// when the grid is symmetric with an odd count.
pub fn detuning_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(
            "scan",
            format!("need at least 2 points on a non-empty range, got {n} on [{lo}, {hi}]"),
        ));
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n)
        .map(|k| {
            let d = lo + k as f64 * step;
            if d.abs() < 1e-9 * step {
                0.0
            } else {
                d
            }
        })
        .collect())
}

pub fn scan_profile(
    atom: &AtomParams,
    template: &FieldConfig,
    grid: &[f64],
    solver: Solver,
    opts: &ScanOptions,
) -> Result<ProfileScan> {
    atom.validate()?;
    template.validate()?;
    if grid.is_empty() {
        return Err(Error::invalid("scan", "empty detuning grid"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::GridMismatch("detunings must be strictly increasing".into()));
    }
    if grid.iter().any(|d| d.abs() > 0.05 + 1e-12) {
        log::warn!("detuning grid extends beyond +-0.05 a.u. of the resonance");
    }
    if solver == Solver::Rate {
        check_rate_validity(atom, template);
    }
    let points: Vec<Result<PointResult>> = grid
        .par_iter()
        .map(|&d| evaluate_point(atom, &template.with_delta(d), solver, opts))
        .collect();
    let mut scan = ProfileScan {
        detunings: grid.to_vec(),
        p_ion: Vec::with_capacity(grid.len()),
        p_corrected: opts.double_ionization.then(Vec::new),
        std_error: (solver == Solver::MonteCarlo).then(Vec::new),
        solver,
        config: *template,
        failures: Vec::new(),
    };
    for (k, r) in points.into_iter().enumerate() {
        let r = r.unwrap_or_else(|e| {
            log::warn!("{solver} failed at delta = {:.6e}: {e}", grid[k]);
            scan.failures.push((k, e));
            PointResult {
                p_ion: f64::NAN,
                p_corrected: opts.double_ionization.then_some(f64::NAN),
                std_error: Some(f64::NAN),
            }
        });
        scan.p_ion.push(r.p_ion);
        if let Some(c) = scan.p_corrected.as_mut() {
            c.push(r.p_corrected.unwrap_or(f64::NAN));
        }
        if let Some(s) = scan.std_error.as_mut() {
            s.push(r.std_error.unwrap_or(f64::NAN));
        }
    }
    Ok(scan)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileMetrics {
    pub peak_position: Option<f64>,
    pub peak_value: Option<f64>,
    pub min_position: Option<f64>,
    pub min_value: f64,
    pub fwhm: Option<f64>,
    pub contrast: f64,
}

/// Vertex of the parabola through three equally spaced points.
fn parabolic_vertex(x: &[f64], y: &[f64], k: usize) -> (f64, f64) {
    let (y0, y1, y2) = (y[k - 1], y[k], y[k + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    if denom == 0.0 {
        return (x[k], y1);
    }
    let off = (0.5 * (y0 - y2) / denom).clamp(-1.0, 1.0);
    let h = 0.5 * (x[k + 1] - x[k - 1]);
    (x[k] + off * h, y1 - 0.25 * (y0 - y2) * off)
}

fn crossing(x: &[f64], y: &[f64], i: usize, j: usize, level: f64) -> f64 {
    x[i] + (level - y[i]) * (x[j] - x[i]) / (y[j] - y[i])
}

/// Shape metrics of a profile `y(x)`; failed (NaN) points are dropped.
pub fn profile_metrics(x: &[f64], y: &[f64]) -> Result<ProfileMetrics> {
    let (x, y): (Vec<f64>, Vec<f64>) = x.iter().zip(y).filter(|p| p.1.is_finite()).map(|(a, b)| (*a, *b)).unzip();
    let n = x.len();
    if n < 5 {
        return Err(Error::invalid("profile", format!("need at least 5 valid points, got {n}")));
    }
    let (imax, &ymax) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let contrast = if ymax > 0.0 {
        ((ymax - ymin) / ymax).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let (peak_position, peak_value) = if imax > 0 && imax < n - 1 {
        let (p, v) = parabolic_vertex(&x, &y, imax);
        (Some(p), Some(v))
    } else {
        (None, None)
    };

    let local_min = (1..n - 1)
        .filter(|&k| y[k] <= y[k - 1] && y[k] <= y[k + 1] && (y[k] < y[k - 1] || y[k] < y[k + 1]))
        .min_by(|&a, &b| y[a].total_cmp(&y[b]));
    let (min_position, min_value) = match local_min {
        Some(k) => {
            let (p, v) = parabolic_vertex(&x, &y, k);
            (Some(p), v)
        }
        None => (None, ymin),
    };

    let fwhm = match (peak_position, contrast >= 1e-3) {
        (Some(_), true) => {
            let baseline = 0.5 * (y[0] + y[n - 1]);
            let level = baseline + 0.5 * (ymax - baseline);
            let left = (0..imax)
                .rev()
                .find(|&k| y[k] < level)
                .map(|k| crossing(&x, &y, k, k + 1, level));
            let right = (imax + 1..n)
                .find(|&k| y[k] < level)
                .map(|k| crossing(&x, &y, k - 1, k, level));
            match (left, right) {
                (Some(l), Some(r)) if ymax > baseline => Some(r - l),
                _ => None,
            }
        }
        _ => None,
    };

    Ok(ProfileMetrics {
        peak_position,
        peak_value,
        min_position,
        min_value,
        fwhm,
        contrast,
    })
}

impl ProfileScan {
    pub fn metrics(&self) -> Result<ProfileMetrics> {
        profile_metrics(&self.detunings, &self.p_ion)
    }
}
