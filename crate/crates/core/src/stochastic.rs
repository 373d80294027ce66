//! Discrete-time realizations of the two Markovian field models and the
//! estimators used to check their correlation functions.
//!
//! Samples are normalized to a unit stationary mean intensity, ⟨|ε|²⟩ = 1.
//! Sample `k` holds the field on `[k·dt, (k+1)·dt)`.

use std::f64::consts::TAU;
use std::io::{self, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::FieldModel;
use crate::stats::{jackknife_mean, jackknife_statistic, Estimate};

/// Identifies one random stream: a master seed and a trajectory index.
///
/// ChaCha is counter based, so each `(seed, index)` pair selects an
/// independent stream that does not depend on the order of generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub index: u64,
}

impl StreamKey {
    pub fn new(seed: u64, index: u64) -> Self {
        Self { seed, index }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.index);
        rng
    }
}

impl From<u64> for StreamKey {
    fn from(seed: u64) -> Self {
        Self { seed, index: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldTrajectory {
    pub dt: f64,
    pub samples: Vec<Complex64>,
    pub model: FieldModel,
}

impl FieldTrajectory {
    /// Unit field for deterministic runs.
    pub fn constant(dt: f64, n_steps: usize) -> Self {
        Self {
            dt,
            samples: vec![Complex64::new(1.0, 0.0); n_steps],
            model: FieldModel::Deterministic,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.samples.len() as f64
    }

    pub fn max_modulus(&self) -> f64 {
        self.samples.iter().map(|e| e.norm()).fold(0.0, f64::max)
    }

    /// Writes `t, re, im` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# model = {}", self.model)?;
        writeln!(w, "# dt_au = {:.12e}", self.dt)?;
        writeln!(w, "t_au,re_eps,im_eps")?;
        for (k, e) in self.samples.iter().enumerate() {
            writeln!(w, "{:.12e},{:.12e},{:.12e}", k as f64 * self.dt, e.re, e.im)?;
        }
        Ok(())
    }
}

fn check_args(gamma_l: f64, dt: f64, n_steps: usize) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
    }
    if !(gamma_l.is_finite() && gamma_l >= 0.0) {
        return Err(Error::invalid("gamma_l", "must be >= 0"));
    }
    if n_steps == 0 {
        return Err(Error::invalid("n_steps", "must be >= 1"));
    }
    Ok(())
}

/// Constant amplitude, Wiener phase with ⟨(Δφ)²⟩ = γ_L·|Δt|.
pub fn sample_phase_diffusion(gamma_l: f64, dt: f64, n_steps: usize, key: impl Into<StreamKey>) -> Result<FieldTrajectory> {
    check_args(gamma_l, dt, n_steps)?;
    let mut rng = key.into().rng();
    let sd = (gamma_l * dt).sqrt();
    let mut phi = TAU * rng.random::<f64>();
    let mut samples = Vec::with_capacity(n_steps);
    samples.push(Complex64::from_polar(1.0, phi));
    for _ in 1..n_steps {
        let z: f64 = rng.sample(StandardNormal);
        phi += sd * z;
        samples.push(Complex64::from_polar(1.0, phi));
    }
    Ok(FieldTrajectory {
        dt,
        samples,
        model: FieldModel::PhaseDiffusion,
    })
}

fn circular_gaussian<R: Rng>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Markovian chaotic field: stationary complex Ornstein–Uhlenbeck process
/// advanced with its exact transition density.
pub fn sample_chaotic(gamma_l: f64, dt: f64, n_steps: usize, key: impl Into<StreamKey>) -> Result<FieldTrajectory> {
    check_args(gamma_l, dt, n_steps)?;
    let mut rng = key.into().rng();
    let decay = (-0.5 * gamma_l * dt).exp();
    let var = -(-gamma_l * dt).exp_m1();
    let mut eps = circular_gaussian(&mut rng, 1.0);
    let mut samples = Vec::with_capacity(n_steps);
    samples.push(eps);
    for _ in 1..n_steps {
        eps = eps * decay + circular_gaussian(&mut rng, var);
        samples.push(eps);
    }
    Ok(FieldTrajectory {
        dt,
        samples,
        model: FieldModel::Chaotic,
    })
}

/// Dispatches on the field model; deterministic runs get ε ≡ 1.
pub fn sample_field(
    model: FieldModel,
    gamma_l: f64,
    dt: f64,
    n_steps: usize,
    key: impl Into<StreamKey>,
) -> Result<FieldTrajectory> {
    match model {
        FieldModel::Deterministic => {
            check_args(gamma_l, dt, n_steps)?;
            Ok(FieldTrajectory::constant(dt, n_steps))
        }
        FieldModel::PhaseDiffusion => sample_phase_diffusion(gamma_l, dt, n_steps, key),
        FieldModel::Chaotic => sample_chaotic(gamma_l, dt, n_steps, key),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEstimate {
    pub lag: f64,
    pub value: Complex64,
    pub std_error: f64,
}

impl CorrelationEstimate {
    /// |value − expected| in units of the standard error.
    pub fn z_score(&self, expected: Complex64) -> f64 {
        let d = (self.value - expected).norm();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// ⟨ε*(t)ε(t+lag)⟩ averaged over time within each trajectory and then over
/// trajectories; the standard error is a jackknife over trajectories.
pub fn estimate_correlation(trajs: &[FieldTrajectory], lag: f64) -> Result<CorrelationEstimate> {
    let first = trajs.first().ok_or(Error::LagOutOfRange { lag })?;
    let dt = first.dt;
    let steps = lag / dt;
    let k = steps.round();
    if !(lag >= 0.0) || (steps - k).abs() > 1e-6 * steps.max(1.0) {
        return Err(Error::LagOutOfRange { lag });
    }
    let k = k as usize;
    let mut re = Vec::with_capacity(trajs.len());
    let mut im = Vec::with_capacity(trajs.len());
    for tr in trajs {
        if tr.dt != dt {
            return Err(Error::GridMismatch("trajectories have different dt".into()));
        }
        if k >= tr.len() {
            return Err(Error::LagOutOfRange { lag });
        }
        let n = tr.len() - k;
        let sum: Complex64 = (0..n).map(|j| tr.samples[j].conj() * tr.samples[j + k]).sum();
        let c = sum / n as f64;
        re.push(c.re);
        im.push(c.im);
    }
    let er = jackknife_mean(&re);
    let ei = jackknife_mean(&im);
    Ok(CorrelationEstimate {
        lag,
        value: Complex64::new(er.value, ei.value),
        std_error: er.std_error.hypot(ei.std_error),
    })
}

/// ⟨|ε|^(2n)⟩ / ⟨|ε|²⟩ⁿ with a jackknife error over trajectories.
/// Expected n! for the chaotic model and 1 for phase diffusion.
pub fn estimate_moment_ratio(trajs: &[FieldTrajectory], order: u32) -> Result<Estimate> {
    if !(2..=3).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    let mut high = Vec::with_capacity(trajs.len());
    let mut low = Vec::with_capacity(trajs.len());
    for tr in trajs {
        let n = tr.len() as f64;
        let (h, l) = tr.samples.iter().fold((0.0, 0.0), |(h, l), e| {
            let i = e.norm_sqr();
            (h + i.powi(order as i32), l + i)
        });
        high.push(h / n);
        low.push(l / n);
    }
    Ok(jackknife_statistic(&[high, low], |m| m[0] / m[1].powi(order as i32)))
}

/// Mean intensity of sample `k` across the ensemble.
pub fn ensemble_intensity(trajs: &[FieldTrajectory], k: usize) -> Estimate {
    let xs: Vec<f64> = trajs.iter().map(|t| t.samples[k].norm_sqr()).collect();
    jackknife_mean(&xs)
}
