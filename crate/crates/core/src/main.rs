use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qubit_variance::energy::energy_sample_series;
use qubit_variance::error::{Error, Result};
use qubit_variance::experiments::{
    amplitude_sweep, envelope_report, figure_level_default, run_weak_rabi, zeno_jump_schedule, WEAK_DRIVE_LIMIT,
};
use qubit_variance::hds::integrate_hds;
use qubit_variance::io::config::{ConfigOverrides, DriveKind, Format, RunConfig};
use qubit_variance::io::figures::{emit_figure_data, FigureId};
use qubit_variance::io::suite::run_invariant_suite_with;
use qubit_variance::io::table::{energy_table, schedule_table, spinor_table, sweep_table, trajectory_table, write_table, DataTable};
use qubit_variance::model::{spinor_from_hds, ModelParams};
use qubit_variance::ode::Method;
use qubit_variance::par::{self, Execution};
use qubit_variance::schrodinger::{compare_trajectories, integrate_schrodinger};

#[derive(Parser)]
#[command(name = "qubit-variance", version, about = "Driven-qubit dynamics, energy variances and Zeno jump schedules")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML file with the same keys as the flags; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    drive: Option<DriveKind>,
    /// Sinusoid amplitude A, or the constant drive value.
    #[arg(long, global = true, allow_hyphen_values = true)]
    amplitude: Option<f64>,
    /// `T1` or `T0,T1`.
    #[arg(long, global = true, value_parser = parse_span)]
    tau_span: Option<(f64, f64)>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    alpha0: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    delta0: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    theta0: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    rtol: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    atol: Option<f64>,
    /// dopri5 or dop853.
    #[arg(long, global = true, value_parser = str::parse::<Method>)]
    method: Option<Method>,
    #[arg(long, global = true)]
    samples_per_cycle: Option<usize>,
    #[arg(long, global = true)]
    overlay: Option<PathBuf>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    t_rabi_us: Option<f64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel work.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Comma-separated sweep amplitudes.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    amplitudes: Option<Vec<f64>>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FigureArg {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the canonical equations and write trajectory and energy tables.
    Simulate {
        /// Also integrate the Schrödinger equation and report the divergence.
        #[arg(long)]
        oracle: bool,
    },
    /// Write the data behind a figure.
    Figure {
        #[arg(value_enum)]
        fig: FigureArg,
    },
    /// Frozen-level jump schedule.
    Zeno {
        /// Starting freeze level, +1 or -1.
        #[arg(long, allow_hyphen_values = true)]
        level: Option<i8>,
        #[arg(long)]
        tau_start: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        /// Use the analytic A/2 instead of the measured Delta H_max.
        #[arg(long)]
        analytic_window: bool,
    },
    /// Envelope and window statistics over the amplitude list.
    Sweep {
        #[arg(long)]
        sequential: bool,
    },
    /// Run the invariant suite.
    Check {
        #[arg(long)]
        sequential: bool,
    },
}

fn parse_span(s: &str) -> std::result::Result<(f64, f64), String> {
    let nums: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("{p:?} is not a number")))
        .collect::<std::result::Result<_, _>>()?;
    match nums[..] {
        [t1] => Ok((0.0, t1)),
        [t0, t1] => Ok((t0, t1)),
        _ => Err("expected T1 or T0,T1".into()),
    }
}

impl GlobalArgs {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            drive: self.drive,
            amplitude: self.amplitude,
            alpha0: self.alpha0,
            delta0: self.delta0,
            theta0: self.theta0,
            tau_span: self.tau_span,
            rtol: self.rtol,
            atol: self.atol,
            method: self.method,
            samples_per_cycle: self.samples_per_cycle,
            out: self.out.clone(),
            format: self.format,
            seed: self.seed,
            overlay: self.overlay.clone(),
            t_rabi_us: self.t_rabi_us,
            threads: self.threads,
            amplitudes: self.amplitudes.clone(),
        }
    }

    fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => ConfigOverrides::from_file(p).map_err(|e| match e {
                Error::Parse { line, msg } => Error::Parse { line, msg: format!("{}: {msg}", p.display()) },
                other => other,
            })?,
            None => ConfigOverrides::default(),
        };
        RunConfig::resolve(file.merged(self.overrides()))
    }
}

enum Failure {
    Checks(usize),
    Error(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Parse { .. } | Error::InvalidArgument(_) | Error::Io(_) | Error::Json(_) => 2,
        _ => 3,
    }
}

fn report_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

fn simulate(cfg: &RunConfig, oracle: bool) -> Result<()> {
    let drive = cfg.drive_spec();
    if cfg.drive == DriveKind::Sin && cfg.amplitude > WEAK_DRIVE_LIMIT {
        warn(&format!("amplitude {} is outside the weak-drive regime", cfg.amplitude));
    }
    let write = |stem: &str, t: &DataTable| write_table(&cfg.out_dir, stem, t, cfg.format, Some(cfg));
    let traj = match integrate_hds(&cfg.initial, &drive, cfg.tau_span, &cfg.solver(), &cfg.sampling()) {
        Ok(t) => t,
        Err(f) => {
            let p = write("trajectory_partial", &trajectory_table(&f.partial))?;
            warn(&format!("partial trajectory written to {}", p.display()));
            return Err(f.into());
        }
    };
    let mut paths = vec![write("trajectory", &trajectory_table(&traj))?];
    paths.push(write("energy", &energy_table(&energy_sample_series(&traj)?))?);
    println!(
        "{} samples over [{}, {}], H drift {:.3e}, {} steps ({} rejected)",
        traj.len(),
        cfg.tau_span.0,
        cfg.tau_span.1,
        traj.hamiltonian_drift(),
        traj.stats.accepted,
        traj.stats.rejected
    );
    if oracle {
        let spinor = integrate_schrodinger(
            &spinor_from_hds(&cfg.initial)?,
            &drive,
            cfg.tau_span,
            &ModelParams::default(),
            &cfg.solver(),
            &cfg.sampling(),
        )?;
        paths.push(write("spinor", &spinor_table(&spinor))?);
        let r = compare_trajectories(&traj, &spinor)?;
        let mut t = DataTable::new(
            "oracle_report",
            &["max_abs_alpha_diff", "max_abs_delta_diff", "max_abs_theta_diff", "max_energy_diff", "tau_of_max", "norm_drift"],
        );
        t.push(vec![
            r.max_abs_alpha_diff,
            r.max_abs_delta_diff,
            r.max_abs_theta_diff,
            r.max_energy_diff,
            r.tau_of_max,
            spinor.norm_drift(),
        ]);
        paths.push(write("oracle_report", &t)?);
        println!(
            "oracle: alpha diff {:.3e}, energy diff {:.3e}, norm drift {:.3e}",
            r.max_abs_alpha_diff,
            r.max_energy_diff,
            spinor.norm_drift()
        );
    }
    report_paths(&paths);
    Ok(())
}

fn figure(cfg: &RunConfig, fig: FigureArg) -> Result<()> {
    let figs: Vec<FigureId> = match fig {
        FigureArg::Fig1 => vec![FigureId::Fig1],
        FigureArg::Fig2 => vec![FigureId::Fig2],
        FigureArg::Fig3 => vec![FigureId::Fig3],
        FigureArg::Fig4 => vec![FigureId::Fig4],
        FigureArg::All => FigureId::ALL.to_vec(),
    };
    if cfg.drive == DriveKind::Sin && cfg.amplitude > WEAK_DRIVE_LIMIT {
        warn(&format!("amplitude {} is outside the weak-drive regime", cfg.amplitude));
    }
    if figs.contains(&FigureId::Fig4) && cfg.overlay.is_none() {
        warn("no overlay given; fig4 carries theory columns only");
    }
    for f in figs {
        report_paths(&emit_figure_data(f, cfg)?);
    }
    Ok(())
}

fn zeno(cfg: &RunConfig, level: Option<i8>, tau_start: Option<f64>, horizon: Option<f64>, analytic: bool) -> Result<()> {
    let a = cfg.rabi_amplitude();
    let (default_level, default_start) = figure_level_default(a);
    let level = level.unwrap_or(default_level);
    let tau_start = tau_start.unwrap_or(default_start);
    let horizon = horizon.unwrap_or(qubit_variance::experiments::rabi_period(a));
    let measured = if analytic {
        None
    } else {
        let run = run_weak_rabi(a, 1.0, &cfg.initial, &cfg.solver(), &cfg.sampling())?;
        run.warnings.iter().for_each(|w| warn(w));
        Some(envelope_report(&run, std::f64::consts::TAU, 0.05)?.delta_h_max)
    };
    let schedule = zeno_jump_schedule(a, level, tau_start, horizon, measured)?;
    for seg in &schedule.segments {
        match seg.tau_jump {
            Some(t) => println!("level {:+} from {:.4} jumps at {t:.4}", seg.freeze_level, seg.tau_start),
            None => println!("level {:+} from {:.4} holds to the horizon", seg.freeze_level, seg.tau_start),
        }
    }
    if let Some(d) = schedule.delta_tau_min {
        println!("delta_tau_min = {d:.4}");
    }
    let p = write_table(&cfg.out_dir, "zeno_schedule", &schedule_table(&schedule), cfg.format, Some(cfg))?;
    report_paths(&[p]);
    Ok(())
}

fn sweep(cfg: &RunConfig, sequential: bool) -> Result<()> {
    let exec = if sequential { Execution::Sequential } else { Execution::default() };
    for &a in cfg.amplitudes.iter().filter(|&&a| a > WEAK_DRIVE_LIMIT) {
        warn(&format!("sweep amplitude {a} is outside the weak-drive regime"));
    }
    let points = par::with_threads(cfg.threads, || amplitude_sweep(&cfg.amplitudes, &cfg.solver(), &cfg.sampling(), exec));
    let points: Vec<_> = points.into_iter().collect::<Result<_>>()?;
    for p in &points {
        println!(
            "A = {:e}: residual {:.3e}, Delta H_max / A = {:.4}, Delta tau_min = {:.2}",
            p.amplitude, p.envelope_residual, p.delta_h_max_over_amplitude, p.delta_tau_min
        );
    }
    let path = write_table(&cfg.out_dir, "sweep", &sweep_table(&points), cfg.format, Some(cfg))?;
    report_paths(&[path]);
    Ok(())
}

fn check(cfg: &RunConfig, sequential: bool) -> std::result::Result<(), Failure> {
    let exec = if sequential { Execution::Sequential } else { Execution::default() };
    let start = std::time::Instant::now();
    let report = run_invariant_suite_with(cfg, exec);
    let wall = start.elapsed().as_secs_f64();
    for c in &report.checks {
        println!(
            "{} {:<36} measured {:>11.4e}  threshold {:>11.4e}  {:>7.3}s  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.threshold,
            c.runtime_s,
            c.detail
        );
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(Error::from)?;
    let path = cfg.out_dir.join("suite_report.json");
    std::fs::write(&path, report.to_json()?).map_err(Error::from)?;
    let failed = report.failures().count();
    println!("{} of {} checks passed in {:.2}s; report in {}", report.checks.len() - failed, report.checks.len(), wall, path.display());
    if failed > 0 {
        return Err(Failure::Checks(failed));
    }
    Ok(())
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    let cfg = cli.global.resolve()?;
    match cli.command {
        Command::Simulate { oracle } => simulate(&cfg, oracle)?,
        Command::Figure { fig } => figure(&cfg, fig)?,
        Command::Zeno { level, tau_start, horizon, analytic_window } => {
            zeno(&cfg, level, tau_start, horizon, analytic_window)?
        }
        Command::Sweep { sequential } => sweep(&cfg, sequential)?,
        Command::Check { sequential } => check(&cfg, sequential)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks(n)) => {
            eprintln!("error: {n} check(s) failed");
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
