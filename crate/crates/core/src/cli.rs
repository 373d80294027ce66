//! Command-line front end: `scan`, `validate`, `compare-solvers` and
//! `trajectory-dump`.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numerical
//! failure, 4 validation failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use crate::config::RunConfig;
use crate::decorrelated::AveragedDynamics;
use crate::laplace::constant_intensity_populations;
use crate::model::{helium_2s2p_params, FieldConfig, FieldModel};
use crate::observables::{evaluate_point, scan_profile, ProfileScan, ScanOptions, Solver};
use crate::ode::Tolerances;
use crate::propagator::{dump_trajectory, McOptions};
use crate::pulses::PulseShape;
use crate::stats::{error_band, SMALL_SAMPLE};
use crate::stochastic::{estimate_correlation, estimate_moment_ratio, sample_field, FieldTrajectory, StreamKey};
use crate::units;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "autoion",
    version,
    about = "Ionization profiles of an autoionizing resonance driven by fluctuating fields"
)]
pub struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ionization probability against detuning for every curve of a config.
    Scan(ScanArgs),
    /// Cross-solver and field-statistics self checks.
    Validate(ValidateArgs),
    /// Side-by-side profiles from several solvers.
    CompareSolvers(CompareArgs),
    /// One stochastic trajectory, step by step.
    TrajectoryDump(DumpArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_parser = parse_solver)]
    pub solver: Option<Solver>,
    #[arg(long, value_enum)]
    pub double_ionization: Option<OnOff>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum)]
    pub double_ionization: Option<OnOff>,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Detuning in a.u.
    #[arg(long, allow_hyphen_values = true)]
    pub delta: f64,
    /// Trajectory index within the seed's streams.
    #[arg(long, default_value_t = 0)]
    pub index: u64,
    /// Which curve of the config to use.
    #[arg(long, default_value_t = 0)]
    pub curve: usize,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Trajectories per statistical check.
    #[arg(long, default_value_t = 400)]
    pub n_traj: usize,
    /// Also write the report to this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Conjugates the memory kernel of the averaged solver (mutation test).
    #[arg(long, hide = true)]
    pub inject_kappa_error: bool,
}

fn parse_solver(s: &str) -> Result<Solver, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Numerical(String),
    Validation(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Numerical(_) => EXIT_NUMERICAL,
            Failure::Validation(_) => EXIT_VALIDATION,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numerical(m) | Failure::Validation(m) => m,
        }
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default())
        .filter_level(level)
        .try_init();
    let result = match &cli.command {
        Command::Scan(a) => cmd_scan(a),
        Command::Validate(a) => cmd_validate(a),
        Command::CompareSolvers(a) => cmd_compare_solvers(a),
        Command::TrajectoryDump(a) => cmd_trajectory_dump(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

fn load(run: &RunArgs, double_ionization: Option<OnOff>) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::from_path(&run.config).map_err(|e| Failure::Config(format!("{}: {e}", run.config.display())))?;
    if let Some(seed) = run.seed {
        cfg.options.mc.seed = seed;
    }
    if let Some(dir) = &run.out {
        cfg.out_dir = dir.clone();
    }
    if let Some(flag) = double_ionization {
        cfg.options.double_ionization = flag == OnOff::On;
    }
    Ok(cfg)
}

fn write_file(dir: &Path, file: &str, content: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(file);
    fs::write(&path, content).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.12e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".into(), fmt_num)
}

/// Metadata shared by all output files.
pub fn header(cfg: &RunConfig, solvers: &[Solver]) -> String {
    let a = &cfg.atom;
    let c0 = &cfg.curves[0];
    let mut h = String::new();
    let _ = writeln!(h, "# autoion {}", env!("CARGO_PKG_VERSION"));
    let names: Vec<String> = solvers.iter().map(Solver::to_string).collect();
    let _ = writeln!(h, "# solver = {}", names.join(","));
    let _ = writeln!(
        h,
        "# atom: q = {}, big_gamma_au = {}, d21_au = {}, gamma_per_intensity_au = {}, omega_ag_au = {}, sigma_di_au = {}",
        a.q, a.big_gamma, a.d21, a.gamma_per_intensity, a.omega_ag, a.sigma_di
    );
    let _ = writeln!(
        h,
        "# pulse = {}, model = {}, window_factor = {}, ramp_fraction = {}",
        c0.pulse.kind, c0.model, c0.pulse.window_factor, c0.pulse.ramp_fraction
    );
    let o = &cfg.options;
    if solvers.contains(&Solver::MonteCarlo) {
        let dt = o.mc.dt.map_or_else(|| "auto".to_string(), |d| d.to_string());
        let _ = writeln!(h, "# seed = {}, n_traj = {}, dt_au = {}", o.mc.seed, o.mc.n_traj, dt);
    }
    let _ = writeln!(h, "# rtol = {:e}, atol = {:e}", o.tol.rtol, o.tol.atol);
    let _ = writeln!(h, "# double_ionization = {}", if o.double_ionization { "on" } else { "off" });
    match o.eval_time {
        Some(t) => {
            let _ = writeln!(h, "# evaluation_time_au = {t}");
        }
        None => {
            let _ = writeln!(h, "# evaluation = asymptotic");
        }
    }
    let g = &cfg.grid;
    let _ = writeln!(h, "# grid: {} .. {} a.u., {} points", g[0], g[g.len() - 1], g.len());
    h
}

fn curve_line(k: usize, c: &FieldConfig) -> String {
    format!(
        "# curve {k}: intensity_w_cm2 = {:.6e}, bandwidth_au = {}, duration_fs = {:.6}, i0_au = {}, t_pulse_au = {}\n",
        units::intensity_from_au(c.i0),
        c.gamma_l,
        units::time_au_to_fs(c.t_pulse()),
        c.i0,
        c.t_pulse()
    )
}

/// Gnuplot-style CSV: one block per curve, blocks separated by two blank lines.
pub fn format_scan_csv(cfg: &RunConfig, scans: &[ProfileScan]) -> String {
    let solver = scans[0].solver;
    let mut out = header(cfg, &[solver]);
    let mut cols = vec!["delta_au", "omega_au", "p_ion"];
    if cfg.options.double_ionization {
        cols.push("p_ion_corrected");
    }
    if solver == Solver::MonteCarlo {
        cols.push("stderr");
    }
    let _ = writeln!(out, "# columns: {}", cols.join(","));
    for (k, s) in scans.iter().enumerate() {
        if k > 0 {
            out.push_str("\n\n");
        }
        out.push_str(&curve_line(k, &s.config));
        for (j, &d) in s.detunings.iter().enumerate() {
            let mut row = vec![fmt_num(d), fmt_num(cfg.atom.omega_ag + d), fmt_num(s.p_ion[j])];
            if let Some(c) = &s.p_corrected {
                row.push(fmt_num(c[j]));
            }
            if let Some(e) = &s.std_error {
                row.push(fmt_num(e[j]));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
    }
    out
}

/// One row of profile metrics per curve.
pub fn format_metrics(cfg: &RunConfig, scans: &[ProfileScan]) -> String {
    let mut out = header(cfg, &[scans[0].solver]);
    out.push_str(
        "curve,intensity_w_cm2,bandwidth_au,duration_fs,peak_position_au,peak_value,min_position_au,min_value,fwhm_au,contrast,failed_points\n",
    );
    for (k, s) in scans.iter().enumerate() {
        let c = &s.config;
        let m = s.metrics().ok();
        let _ = writeln!(
            out,
            "{k},{:.6e},{},{:.6},{},{},{},{},{},{},{}",
            units::intensity_from_au(c.i0),
            c.gamma_l,
            units::time_au_to_fs(c.t_pulse()),
            fmt_opt(m.and_then(|m| m.peak_position)),
            fmt_opt(m.and_then(|m| m.peak_value)),
            fmt_opt(m.and_then(|m| m.min_position)),
            fmt_opt(m.map(|m| m.min_value)),
            fmt_opt(m.and_then(|m| m.fwhm)),
            fmt_opt(m.map(|m| m.contrast)),
            s.failures.len()
        );
    }
    out
}

fn run_scans(cfg: &RunConfig, solver: Solver) -> Result<Vec<ProfileScan>, Failure> {
    cfg.curves
        .iter()
        .map(|c| scan_profile(&cfg.atom, c, &cfg.grid, solver, &cfg.options).map_err(|e| Failure::Numerical(e.to_string())))
        .collect()
}

fn failure_summary(scans: &[ProfileScan]) -> Option<String> {
    let n: usize = scans.iter().map(|s| s.failures.len()).sum();
    let first = scans.iter().flat_map(|s| s.failures.first()).next()?;
    Some(format!("{n} scan point(s) failed; first: {}", first.1))
}

fn cmd_scan(a: &ScanArgs) -> Result<(), Failure> {
    let mut cfg = load(&a.run, a.double_ionization)?;
    if let Some(s) = a.solver {
        cfg.solvers = vec![s];
    }
    let solver = cfg.single_solver().map_err(|e| Failure::Config(e.to_string()))?;
    let scans = run_scans(&cfg, solver)?;
    let csv = write_file(&cfg.out_dir, &format!("{}.csv", cfg.name), &format_scan_csv(&cfg, &scans))?;
    let met = write_file(
        &cfg.out_dir,
        &format!("{}.metrics.csv", cfg.name),
        &format_metrics(&cfg, &scans),
    )?;
    println!("wrote {} and {}", csv.display(), met.display());
    match failure_summary(&scans) {
        Some(m) => Err(Failure::Numerical(m)),
        None => Ok(()),
    }
}

fn cmd_compare_solvers(a: &CompareArgs) -> Result<(), Failure> {
    let cfg = load(&a.run, a.double_ionization)?;
    if cfg.solvers.len() < 2 {
        return Err(Failure::Config(
            "key `solver.solvers`: compare-solvers needs at least two solvers".into(),
        ));
    }
    let per_solver: Vec<Vec<ProfileScan>> = cfg.solvers.iter().map(|&s| run_scans(&cfg, s)).collect::<Result<_, _>>()?;

    let mut out = header(&cfg, &cfg.solvers);
    let mut cols = vec!["delta_au".to_string(), "omega_au".to_string()];
    cols.extend(cfg.solvers.iter().map(|s| format!("p_{s}")));
    if cfg.solvers.contains(&Solver::MonteCarlo) {
        cols.push("stderr_mc".into());
    }
    let _ = writeln!(out, "# columns: {}", cols.join(","));
    let mut summary = String::from("curve,solver_a,solver_b,max_abs_deviation,max_z\n");
    for (k, c) in cfg.curves.iter().enumerate() {
        if k > 0 {
            out.push_str("\n\n");
        }
        out.push_str(&curve_line(k, c));
        let mc_err = per_solver.iter().find_map(|v| v[k].std_error.clone());
        for (j, &d) in cfg.grid.iter().enumerate() {
            let mut row = vec![fmt_num(d), fmt_num(cfg.atom.omega_ag + d)];
            row.extend(per_solver.iter().map(|v| fmt_num(v[k].p_ion[j])));
            if let Some(e) = &mc_err {
                row.push(fmt_num(e[j]));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        for x in 0..cfg.solvers.len() {
            for y in x + 1..cfg.solvers.len() {
                let (sa, sb) = (&per_solver[x][k], &per_solver[y][k]);
                let err = sa.std_error.as_ref().or(sb.std_error.as_ref());
                let mut max_dev: f64 = 0.0;
                let mut max_z: Option<f64> = err.map(|_| 0.0);
                for j in 0..cfg.grid.len() {
                    let d = (sa.p_ion[j] - sb.p_ion[j]).abs();
                    max_dev = max_dev.max(d);
                    if let (Some(z), Some(e)) = (max_z.as_mut(), err) {
                        let zj = if d == 0.0 { 0.0 } else { d / e[j] };
                        *z = z.max(zj);
                    }
                }
                let line = format!("{k},{},{},{},{}", sa.solver, sb.solver, fmt_num(max_dev), fmt_opt(max_z));
                println!("{line}");
                summary.push_str(&line);
                summary.push('\n');
            }
        }
    }
    let csv = write_file(&cfg.out_dir, &format!("{}.compare.csv", cfg.name), &out)?;
    let dev = write_file(&cfg.out_dir, &format!("{}.deviation.csv", cfg.name), &summary)?;
    println!("wrote {} and {}", csv.display(), dev.display());
    let all: Vec<ProfileScan> = per_solver.into_iter().flatten().collect();
    match failure_summary(&all) {
        Some(m) => Err(Failure::Numerical(m)),
        None => Ok(()),
    }
}

fn cmd_trajectory_dump(a: &DumpArgs) -> Result<(), Failure> {
    let cfg = load(&a.run, None)?;
    let curve = cfg
        .curves
        .get(a.curve)
        .ok_or_else(|| Failure::Config(format!("curve {} out of range ({} curves)", a.curve, cfg.curves.len())))?;
    if !a.delta.is_finite() {
        return Err(Failure::Config("--delta must be finite".into()));
    }
    let config = curve.with_delta(a.delta);
    let key = StreamKey::new(cfg.options.mc.seed, a.index);
    let mut buf = Vec::new();
    dump_trajectory(&cfg.atom, &config, cfg.options.mc.dt, key, &mut buf).map_err(|e| Failure::Numerical(e.to_string()))?;
    let text = String::from_utf8(buf).expect("ascii output");
    let file = format!("{}_trajectory_c{}_i{}.csv", cfg.name, a.curve, a.index);
    let path = write_file(&cfg.out_dir, &file, &text)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Outcome of one self check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= tolerance,
            value,
            tolerance,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} check={} value={:.4e} tol={:.4e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidateOptions {
    pub seed: u64,
    pub n_traj: usize,
    pub inject_kappa_error: bool,
}

fn square(i_wcm2: f64, gamma_l: f64, delta: f64, t_fs: f64, model: FieldModel) -> FieldConfig {
    FieldConfig::new(
        units::intensity_to_au(i_wcm2),
        gamma_l,
        delta,
        PulseShape::square(units::time_fs_to_au(t_fs)).expect("positive duration"),
        model,
    )
    .expect("valid field")
}

/// Cross-solver and field-statistics checks.
pub fn run_validation(opts: &ValidateOptions) -> Vec<Check> {
    let atom = helium_2s2p_params();
    let gam = atom.big_gamma;
    let mut checks = Vec::new();
    let band = error_band(3.0, opts.n_traj);
    if opts.n_traj < SMALL_SAMPLE {
        log::warn!(
            "n_traj = {} < {SMALL_SAMPLE}: statistical bands widened to {band:.3} standard errors",
            opts.n_traj
        );
    }

    // exact constant-intensity solution against adaptive integration
    let mut worst: f64 = 0.0;
    for i in [1e13, 1e14, 5e14] {
        for delta in [-gam, 0.0, gam, 0.005] {
            let c = square(i, 0.0018, delta, 20.0, FieldModel::PhaseDiffusion);
            let t = c.t_pulse();
            let exact = constant_intensity_populations(&atom, &c, &[t]);
            let mut dynamics = AveragedDynamics::new(&atom, &c).with_tolerances(Tolerances {
                atol: 1e-13,
                rtol: 1e-11,
            });
            if opts.inject_kappa_error {
                dynamics.kappa_tilde = dynamics.kappa_tilde.conj();
            }
            let dev = match (exact, dynamics.propagate(&[0.0, t])) {
                (Ok(e), Ok(x)) => (e[0].0 - x[1].s11).abs().max((e[0].1 - x[1].s22).abs()),
                _ => f64::INFINITY,
            };
            worst = worst.max(dev);
        }
    }
    checks.push(Check::new("laplace_vs_decorrelated", worst, 1e-8));

    // phase diffusion: the averaged equations are exact
    let mut worst_z: f64 = 0.0;
    for delta in [-gam, 0.0, gam] {
        let c = square(1e13, 0.0018, delta, 20.0, FieldModel::PhaseDiffusion);
        let mc_opts = ScanOptions {
            mc: McOptions {
                n_traj: opts.n_traj,
                seed: opts.seed,
                dt: Some(0.5),
                n_record: 2,
            },
            ..ScanOptions::default()
        };
        let z = match (
            evaluate_point(&atom, &c, Solver::MonteCarlo, &mc_opts),
            evaluate_point(&atom, &c, Solver::Decorrelated, &ScanOptions::default()),
        ) {
            (Ok(mc), Ok(da)) => {
                let d = (mc.p_ion - da.p_ion).abs();
                if d == 0.0 {
                    0.0
                } else {
                    d / mc.std_error.unwrap_or(0.0)
                }
            }
            _ => f64::INFINITY,
        };
        worst_z = worst_z.max(z);
    }
    checks.push(Check::new("mc_vs_decorrelated_phase_diffusion", worst_z, band));

    // field statistics
    let gamma_l = 0.01;
    let dt = 5.0;
    let n_steps = 4000;
    for model in [FieldModel::PhaseDiffusion, FieldModel::Chaotic] {
        let trajs: Result<Vec<FieldTrajectory>, _> = (0..opts.n_traj as u64)
            .map(|k| sample_field(model, gamma_l, dt, n_steps, StreamKey::new(opts.seed, k)))
            .collect();
        let Ok(trajs) = trajs else {
            checks.push(Check::new(format!("field_sampling_{model}"), f64::INFINITY, 0.0));
            continue;
        };
        for x in [0.5, 1.0, 2.0] {
            let tau = x / gamma_l;
            let expected = Complex64::new((-0.5 * gamma_l * tau).exp(), 0.0);
            let z = estimate_correlation(&trajs, tau).map_or(f64::INFINITY, |e| e.z_score(expected));
            checks.push(Check::new(format!("correlation_{model}_tau{x}"), z, band));
        }
        match model {
            FieldModel::PhaseDiffusion => {
                let r = estimate_moment_ratio(&trajs, 2).map_or(f64::INFINITY, |e| (e.value - 1.0).abs());
                checks.push(Check::new("moment4_phase-diffusion", r, 1e-12));
            }
            _ => {
                for (order, target) in [(2, 2.0), (3, 6.0)] {
                    let z = estimate_moment_ratio(&trajs, order).map_or(f64::INFINITY, |e| e.z_score(target));
                    checks.push(Check::new(format!("moment{}_chaotic", 2 * order), z, band));
                }
            }
        }
    }
    checks
}

fn cmd_validate(a: &ValidateArgs) -> Result<(), Failure> {
    if a.n_traj < 2 {
        return Err(Failure::Config("--n-traj must be at least 2".into()));
    }
    let checks = run_validation(&ValidateOptions {
        seed: a.seed,
        n_traj: a.n_traj,
        inject_kappa_error: a.inject_kappa_error,
    });
    let mut report = String::new();
    if a.n_traj < SMALL_SAMPLE {
        let _ = writeln!(
            report,
            "# warning: n_traj = {} below {SMALL_SAMPLE}, statistical tolerances widened",
            a.n_traj
        );
    }
    for c in &checks {
        let _ = writeln!(report, "{}", c.line());
    }
    print!("{report}");
    if let Some(dir) = &a.out {
        write_file(dir, "validation.txt", &report)?;
    }
    let failed: Vec<&Check> = checks.iter().filter(|c| !c.passed).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Validation(format!(
            "{} check(s) failed: {}",
            failed.len(),
            failed
                .iter()
                .map(|c| format!("{} ({:.4e} > {:.4e})", c.name, c.value, c.tolerance))
                .collect::<Vec<_>>()
                .join(", ")
        )))
    }
}
