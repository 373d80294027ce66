//! Stochastic propagation: one density-matrix trajectory per field
//! realization, averaged over an ensemble.

use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{AtomParams, FieldConfig, SolverContext};
use crate::stats::{jackknife_mean, Estimate};
use crate::stochastic::{sample_field, FieldTrajectory, StreamKey};

/// Largest admissible rate·dt product for the fixed-step integrator.
pub const MAX_RATE_DT: f64 = 0.1;

/// Populations below zero by less than this are clamped.
const CLAMP_TOL: f64 = 1e-10;

/// σ11, σ22 and the coherence σ21 for a single field realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityState {
    pub s11: f64,
    pub s22: f64,
    pub s21: Complex64,
}

impl DensityState {
    pub fn ground() -> Self {
        Self {
            s11: 1.0,
            s22: 0.0,
            s21: Complex64::new(0.0, 0.0),
        }
    }

    fn axpy(&self, h: f64, k: &DensityState) -> DensityState {
        DensityState {
            s11: self.s11 + h * k.s11,
            s22: self.s22 + h * k.s22,
            s21: self.s21 + h * k.s21,
        }
    }

    fn is_finite(&self) -> bool {
        self.s11.is_finite() && self.s22.is_finite() && self.s21.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub n_traj: usize,
    pub seed: u64,
    /// Fixed step; `None` selects [`default_dt`].
    pub dt: Option<f64>,
    /// Number of recorded times, including both ends of the window.
    pub n_record: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            n_traj: 1000,
            seed: 1,
            dt: None,
            n_record: 201,
        }
    }
}

/// Ensemble means and standard errors on the recording grid, plus the final
/// populations of each trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct McResult {
    pub times: Vec<f64>,
    pub mean_sigma11: Vec<f64>,
    pub mean_sigma22: Vec<f64>,
    pub std_err11: Vec<f64>,
    pub std_err22: Vec<f64>,
    pub n_traj: usize,
    pub final_s11: Vec<f64>,
    pub final_s22: Vec<f64>,
    pub dt: f64,
}

impl McResult {
    /// Asymptotic ionization 1 − σ11 at the end of the window.
    pub fn ionization(&self) -> Estimate {
        let p: Vec<f64> = self.final_s11.iter().map(|s| 1.0 - s).collect();
        jackknife_mean(&p)
    }
}

/// Step chosen from the fastest time scale of the problem.
pub fn default_dt(atom: &AtomParams, config: &FieldConfig) -> f64 {
    let ctx = SolverContext::new(atom, config);
    let mut dt = config.pulse.window_end() / 2000.0;
    for rate in [
        config.gamma_l,
        ctx.kappa_tilde.re,
        config.delta.abs(),
        ctx.omega_rabi,
        ctx.gamma,
    ] {
        if rate > 0.0 {
            dt = dt.min(0.05 / rate);
        }
    }
    dt
}

/// Number of steps covering the window and the step that lands on its end.
fn step_grid(config: &FieldConfig, dt: f64) -> Result<(usize, f64)> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
    }
    let end = config.pulse.window_end();
    let n = (end / dt).ceil().max(1.0) as usize;
    Ok((n, end / n as f64))
}

fn check_step(atom: &AtomParams, config: &FieldConfig, field: &FieldTrajectory) -> Result<()> {
    let ctx = SolverContext::new(atom, config);
    let emax = field.max_modulus();
    let f = (1.0 + 1.0 / (atom.q * atom.q)).sqrt();
    let dt = field.dt;
    let rates = [
        ("gamma", ctx.gamma * emax * emax),
        ("Gamma", atom.big_gamma),
        ("Omega", ctx.omega_rabi * emax * f),
        ("Delta", config.delta.abs()),
    ];
    for (name, r) in rates {
        let product = r * dt;
        if product > MAX_RATE_DT {
            return Err(Error::StepTooLarge {
                dt,
                rate_name: name,
                product,
                limit: MAX_RATE_DT,
            });
        }
    }
    Ok(())
}

/// Per-trajectory equations with Fano-modified couplings.
fn derivative(
    atom: &AtomParams,
    delta: f64,
    f1: Complex64,
    f2: Complex64,
    gamma: f64,
    omega: Complex64,
    x: &DensityState,
) -> DensityState {
    let i = Complex64::i();
    let oc = omega.conj();
    DensityState {
        s11: -gamma * x.s11 + 2.0 * (oc * f1 * x.s21).im,
        s22: -atom.big_gamma * x.s22 - 2.0 * (oc * f2 * x.s21).im,
        s21: Complex64::new(-0.5 * (gamma + atom.big_gamma), delta) * x.s21 - i * omega * f1 * x.s11 + i * omega * f2 * x.s22,
    }
}

/// Integrates one trajectory with classical RK4 on the field's own grid.
/// `observe(k, t, eps, state)` sees the state at the start of every step and
/// once more at the end.
pub fn propagate_with<F>(atom: &AtomParams, field: &FieldTrajectory, config: &FieldConfig, mut observe: F) -> Result<DensityState>
where
    F: FnMut(usize, f64, Complex64, &DensityState),
{
    check_step(atom, config, field)?;
    let (f1, f2) = atom.fano_factors();
    let dt = field.dt;
    let half = 0.5 * dt;
    let rabi_per_amplitude = 0.5 * atom.d21;
    let mut x = DensityState::ground();
    let coeffs = |t: f64, eps: Complex64| {
        let intensity = config.intensity(t);
        let omega = rabi_per_amplitude * (2.0 * intensity).sqrt() * eps;
        (atom.gamma_per_intensity * intensity * eps.norm_sqr(), omega)
    };
    // keep the last stage inside a closed pulse window despite rounding
    let window = config.pulse.window_end();
    let end = if (field.duration() - window).abs() <= 1e-9 * window {
        window
    } else {
        field.duration()
    };
    for (k, &eps) in field.samples.iter().enumerate() {
        let t = k as f64 * dt;
        observe(k, t, eps, &x);
        let (g0, o0) = coeffs(t, eps);
        let (gm, om) = coeffs(t + half, eps);
        let (g1, o1) = coeffs(((k + 1) as f64 * dt).min(end), eps);
        let d = |g, o, s: &DensityState| derivative(atom, config.delta, f1, f2, g, o, s);
        let k1 = d(g0, o0, &x);
        let k2 = d(gm, om, &x.axpy(half, &k1));
        let k3 = d(gm, om, &x.axpy(half, &k2));
        let k4 = d(g1, o1, &x.axpy(dt, &k3));
        let mut next = x.axpy(dt / 6.0, &k1);
        next = next.axpy(dt / 3.0, &k2);
        next = next.axpy(dt / 3.0, &k3);
        next = next.axpy(dt / 6.0, &k4);
        if !next.is_finite() {
            return Err(Error::NonFinite { t: t + dt });
        }
        for p in [&mut next.s11, &mut next.s22] {
            if *p < 0.0 {
                if *p < -CLAMP_TOL {
                    return Err(Error::StepControl {
                        t: t + dt,
                        reason: "negative population",
                    });
                }
                *p = 0.0;
            }
        }
        x = next;
    }
    let n = field.len();
    observe(n, n as f64 * dt, field.samples.last().copied().unwrap_or_default(), &x);
    Ok(x)
}

/// Final state of one trajectory.
pub fn propagate_trajectory(atom: &AtomParams, field: &FieldTrajectory, config: &FieldConfig) -> Result<DensityState> {
    propagate_with(atom, field, config, |_, _, _, _| {})
}

fn record_indices(n_steps: usize, n_record: usize) -> Vec<usize> {
    let m = n_record.max(2) - 1;
    let mut idx: Vec<usize> = (0..=m).map(|j| (j * n_steps + m / 2) / m).collect();
    idx.dedup();
    idx
}

/// Ensemble average over trajectories with keys `(opts.seed, 0..n_traj)`.
pub fn monte_carlo_average(atom: &AtomParams, config: &FieldConfig, opts: &McOptions) -> Result<McResult> {
    let keys: Vec<StreamKey> = (0..opts.n_traj as u64).map(|i| StreamKey::new(opts.seed, i)).collect();
    monte_carlo_from_streams(atom, config, opts, &keys)
}

/// Ensemble average over explicitly given random streams. Trajectories run
/// in parallel; the reduction is in key order, so results do not depend on
/// the thread count.
pub fn monte_carlo_from_streams(
    atom: &AtomParams,
    config: &FieldConfig,
    opts: &McOptions,
    keys: &[StreamKey],
) -> Result<McResult> {
    atom.validate()?;
    config.validate()?;
    if keys.is_empty() {
        return Err(Error::invalid("n_traj", "must be >= 1"));
    }
    let (n_steps, dt) = step_grid(config, opts.dt.unwrap_or_else(|| default_dt(atom, config)))?;
    let rec = record_indices(n_steps, opts.n_record);
    let runs: Vec<Vec<(f64, f64)>> = keys
        .par_iter()
        .enumerate()
        .map(|(index, &key)| {
            let field = sample_field(config.model, config.gamma_l, dt, n_steps, key)?;
            let mut out = Vec::with_capacity(rec.len());
            let mut next = 0;
            propagate_with(atom, &field, config, |k, _, _, x| {
                if next < rec.len() && rec[next] == k {
                    out.push((x.s11, x.s22));
                    next += 1;
                }
            })
            .map_err(|e| Error::Trajectory {
                index,
                source: Box::new(e),
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let n = runs.len();
    let mut res = McResult {
        times: rec.iter().map(|&k| k as f64 * dt).collect(),
        mean_sigma11: Vec::with_capacity(rec.len()),
        mean_sigma22: Vec::with_capacity(rec.len()),
        std_err11: Vec::with_capacity(rec.len()),
        std_err22: Vec::with_capacity(rec.len()),
        n_traj: n,
        final_s11: runs.iter().map(|r| r.last().unwrap().0).collect(),
        final_s22: runs.iter().map(|r| r.last().unwrap().1).collect(),
        dt,
    };
    let mut col = vec![0.0; n];
    for j in 0..rec.len() {
        for (c, r) in col.iter_mut().zip(&runs) {
            *c = r[j].0;
        }
        let e = jackknife_mean(&col);
        res.mean_sigma11.push(e.value);
        res.std_err11.push(e.std_error);
        for (c, r) in col.iter_mut().zip(&runs) {
            *c = r[j].1;
        }
        let e = jackknife_mean(&col);
        res.mean_sigma22.push(e.value);
        res.std_err22.push(e.std_error);
    }
    Ok(res)
}

/// Writes one trajectory as CSV: time, field sample, populations, coherence.
pub fn dump_trajectory<W: Write>(
    atom: &AtomParams,
    config: &FieldConfig,
    dt: Option<f64>,
    key: StreamKey,
    mut w: W,
) -> Result<DensityState> {
    let (n_steps, dt) = step_grid(config, dt.unwrap_or_else(|| default_dt(atom, config)))?;
    let field = sample_field(config.model, config.gamma_l, dt, n_steps, key)?;
    let io_err = |e: io::Error| Error::Unsupported(format!("write failed: {e}"));
    let header = format!(
        "# model = {}\n# seed = {}\n# index = {}\n# dt_au = {:.12e}\n# delta_au = {:.12e}\nt_au,re_eps,im_eps,sigma11,sigma22,re_sigma21,im_sigma21\n",
        config.model, key.seed, key.index, dt, config.delta
    );
    w.write_all(header.as_bytes()).map_err(io_err)?;
    let mut failure = None;
    let fin = propagate_with(atom, &field, config, |_, t, e, x| {
        if failure.is_none() {
            if let Err(err) = writeln!(
                w,
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                t, e.re, e.im, x.s11, x.s22, x.s21.re, x.s21.im
            ) {
                failure = Some(err);
            }
        }
    })?;
    match failure {
        Some(e) => Err(io_err(e)),
        None => Ok(fin),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::constant_intensity_populations;
    use crate::model::{helium_2s2p_params, FieldModel};
    use crate::pulses::PulseShape;
    use crate::units::{intensity_to_au, time_fs_to_au};
    use approx::assert_relative_eq;

    fn cfg(i_wcm2: f64, gl: f64, delta: f64, t_fs: f64, model: FieldModel) -> FieldConfig {
        FieldConfig::new(
            intensity_to_au(i_wcm2),
            gl,
            delta,
            PulseShape::square(time_fs_to_au(t_fs)).unwrap(),
            model,
        )
        .unwrap()
    }

    #[test]
    fn zero_intensity_keeps_ground_state() {
        let atom = helium_2s2p_params();
        let c = cfg(0.0, 0.0018, 0.001, 20.0, FieldModel::PhaseDiffusion);
        let field = sample_field(c.model, c.gamma_l, 1.0, 800, 3).unwrap();
        let x = propagate_trajectory(&atom, &field, &c).unwrap();
        assert_eq!(x, DensityState::ground());
    }

    #[test]
    fn pure_direct_ionization_without_coupling() {
        let atom = AtomParams {
            d21: 1e-300,
            ..helium_2s2p_params()
        };
        let c = cfg(1e14, 0.0, 0.0, 20.0, FieldModel::Deterministic);
        let (n, dt) = step_grid(&c, 2.0).unwrap();
        let x = propagate_trajectory(&atom, &FieldTrajectory::constant(dt, n), &c).unwrap();
        let gamma = atom.gamma_per_intensity * c.i0;
        assert_relative_eq!(x.s11, (-gamma * c.t_pulse()).exp(), max_relative = 1e-10);
    }

    #[test]
    fn deterministic_matches_laplace_solution() {
        let atom = helium_2s2p_params();
        for delta in [0.0, 0.0015, -0.003] {
            let c = cfg(1e14, 0.0, delta, 20.0, FieldModel::Deterministic);
            let (n, dt) = step_grid(&c, 0.5).unwrap();
            let x = propagate_trajectory(&atom, &FieldTrajectory::constant(dt, n), &c).unwrap();
            let exact = constant_intensity_populations(&atom, &c, &[c.t_pulse()]).unwrap()[0];
            assert!((x.s11 - exact.0).abs() < 1e-6, "{delta}: {} {}", x.s11, exact.0);
            assert!((x.s22 - exact.1).abs() < 1e-6);
        }
    }

    #[test]
    fn step_refinement_converges() {
        let atom = helium_2s2p_params();
        let c = cfg(1e14, 0.0, 0.002, 20.0, FieldModel::Deterministic);
        let run = |dt| {
            let (n, dt) = step_grid(&c, dt).unwrap();
            propagate_trajectory(&atom, &FieldTrajectory::constant(dt, n), &c).unwrap()
        };
        let (a, b) = (run(1.0), run(0.5));
        assert!((a.s11 - b.s11).abs() < 1e-6 && (a.s22 - b.s22).abs() < 1e-6);
    }

    #[test]
    fn rejects_coarse_steps() {
        let atom = helium_2s2p_params();
        let c = cfg(1e14, 0.0, 0.0, 20.0, FieldModel::Deterministic);
        let field = FieldTrajectory::constant(200.0, 5);
        assert!(matches!(
            propagate_trajectory(&atom, &field, &c),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn identical_streams_have_zero_spread() {
        let atom = helium_2s2p_params();
        let c = cfg(1e14, 0.0018, 0.001, 10.0, FieldModel::PhaseDiffusion);
        let opts = McOptions {
            n_traj: 2,
            seed: 9,
            dt: Some(1.0),
            n_record: 11,
        };
        let keys = [StreamKey::new(9, 4), StreamKey::new(9, 4)];
        let r = monte_carlo_from_streams(&atom, &c, &opts, &keys).unwrap();
        assert!(r.std_err11.iter().chain(&r.std_err22).all(|&e| e == 0.0));
        assert_eq!(r.ionization().std_error, 0.0);
    }

    #[test]
    fn phase_diffusion_without_bandwidth_is_deterministic() {
        let atom = helium_2s2p_params();
        let c = cfg(1e14, 0.0, 0.0007, 10.0, FieldModel::PhaseDiffusion);
        let opts = McOptions {
            n_traj: 4,
            seed: 2,
            dt: Some(1.0),
            n_record: 3,
        };
        let r = monte_carlo_average(&atom, &c, &opts).unwrap();
        let det = monte_carlo_average(
            &atom,
            &FieldConfig {
                model: FieldModel::Deterministic,
                ..c
            },
            &opts,
        )
        .unwrap();
        for (a, b) in r.final_s11.iter().zip(&det.final_s11) {
            assert!((a - b).abs() < 1e-13);
        }
        assert_eq!(r.times, det.times);
        assert_eq!(*r.times.last().unwrap(), c.t_pulse());
    }

    #[test]
    fn results_are_reproducible() {
        let atom = helium_2s2p_params();
        let c = cfg(1e14, 0.0018, 0.001, 10.0, FieldModel::Chaotic);
        let opts = McOptions {
            n_traj: 8,
            seed: 5,
            dt: Some(1.0),
            n_record: 5,
        };
        let a = monte_carlo_average(&atom, &c, &opts).unwrap();
        let b = monte_carlo_average(&atom, &c, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dump_writes_every_step() {
        let atom = helium_2s2p_params();
        let c = cfg(1e14, 0.0018, 0.0, 1.0, FieldModel::PhaseDiffusion);
        let mut buf = Vec::new();
        let fin = dump_trajectory(&atom, &c, Some(1.0), StreamKey::new(1, 0), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        let (n, _) = step_grid(&c, 1.0).unwrap();
        assert_eq!(rows.len(), n + 2);
        let last: Vec<f64> = rows.last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_relative_eq!(last[3], fin.s11, max_relative = 1e-11);
    }

    #[test]
    fn record_grid_spans_window() {
        assert_eq!(record_indices(10, 3), vec![0, 5, 10]);
        assert_eq!(record_indices(3, 11), vec![0, 1, 2, 3]);
    }
}
