use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mwgrav::Preset;
use mwgrav_cli::config::{Format, RunConfig};
use mwgrav_cli::{run, CliError, Command, Overrides};

/// Fisher-information scans of a two-state matterwave gravimeter.
///
/// Files are always written in natural units (L = 1/k0, t0 = m/(hbar k0^2),
/// Fisher values in k0^2 Tpi^4). Set MWGRAV_THREADS to fix the worker count.
#[derive(Parser)]
#[command(name = "mwgrav", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Kasevich-Chu scan with a Gaussian initial state.
    ScanKc(Common),
    /// Kasevich-Chu scan with the chirped initial state.
    ScanKcChirped(Common),
    /// Kasevich-Chu followed by a harmonic trap after 2 Tpi.
    ScanTrap(Common),
    /// Mirrorless (Ramsey) scan.
    ScanRamsey(Common),
    /// Momentum CFI at 2 Tpi versus detector momentum resolution.
    ResolutionSweep(WithPreset),
    /// Symmetric Kasevich-Chu point versus finite pulse duration.
    PulseDuration(WithPreset),
    /// Spinor after a sequence as a text table `z re_a im_a re_b im_b`.
    StateDump(StateDumpArgs),
    /// Echo the resolved config and derived quantities without computing.
    Validate(WithPreset),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Initial width sigma (units of L).
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<f64>,
    /// Pulse spacing Tpi (units of t0).
    #[arg(long, allow_hyphen_values = true)]
    t_pi: Option<f64>,
    /// Evenly spaced scan points over [0, 2 Tpi].
    #[arg(long)]
    points: Option<usize>,
    /// Finite-difference step in g.
    #[arg(long, allow_hyphen_values = true)]
    dg: Option<f64>,
    /// Probability floor for CFI sums.
    #[arg(long, allow_hyphen_values = true)]
    floor: Option<f64>,
    /// Number of grid points.
    #[arg(long)]
    n_points: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    z_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    z_max: Option<f64>,
    /// Output file; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// csv or json; defaults to the output extension.
    #[arg(long)]
    format: Option<Format>,
    /// Report SI equivalents on standard error (files stay in natural units).
    #[arg(long)]
    si: bool,
}

#[derive(Args)]
struct WithPreset {
    /// kc, kc-chirped, ramsey or trap.
    #[arg(long)]
    preset: Option<Preset>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct StateDumpArgs {
    /// Sequence time in units of Tpi.
    #[arg(long, default_value_t = 2.0)]
    t: f64,
    /// Acceleration for the run; defaults to the working point.
    #[arg(long, allow_hyphen_values = true)]
    g: Option<f64>,
    #[command(flatten)]
    inner: WithPreset,
}

fn overrides(c: &Common, preset: Option<Preset>) -> Overrides {
    Overrides {
        preset,
        sigma: c.sigma,
        t_pi: c.t_pi,
        points: c.points,
        dg: c.dg,
        floor: c.floor,
        n_points: c.n_points,
        z_min: c.z_min,
        z_max: c.z_max,
        output: c.output.clone(),
        format: c.format,
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("MWGRAV_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("MWGRAV_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let (cmd, common, preset) = match &cli.command {
        Cmd::ScanKc(c) => (Command::Scan(Preset::Kc), c, None),
        Cmd::ScanKcChirped(c) => (Command::Scan(Preset::KcChirped), c, None),
        Cmd::ScanTrap(c) => (Command::Scan(Preset::Trap), c, None),
        Cmd::ScanRamsey(c) => (Command::Scan(Preset::Ramsey), c, None),
        Cmd::ResolutionSweep(w) => (Command::ResolutionSweep, &w.common, w.preset),
        Cmd::PulseDuration(w) => (Command::PulseDuration, &w.common, w.preset),
        Cmd::Validate(w) => (Command::Validate, &w.common, w.preset),
        Cmd::StateDump(s) => (
            Command::StateDump {
                t_over_tpi: s.t,
                g: s.g,
            },
            &s.inner.common,
            s.inner.preset,
        ),
    };
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    overrides(common, preset).apply(&mut cfg);
    run(cmd, cfg, common.si, &mut |v| eprintln!("{v}"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let err = CliError::Config(e.to_string().trim_end().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code());
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code())
        }
    }
}
