use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use vcs_core::scenario::analysis::{self, ScanRequest, SweepMode, SweepParameter};
use vcs_core::scenario::run;
use vcs_core::scenario::Scenario;

/// Voltage collapse scenarios for star DC networks with constant-power loads.
#[derive(Debug, Parser)]
#[command(name = "vcsim", version)]
struct Cli {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for output files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Suppress the text report on stdout.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the scenario; writes the trace CSV and the report.
    /// Exits 0 on convergence or horizon, 2 on voltage collapse.
    Simulate,
    /// Enumerate every equilibrium at frozen demand and classify it.
    Equilibria(Frozen),
    /// Eigenvalues of the linearized dynamics, at every equilibrium or at a given state.
    Stability {
        #[command(flatten)]
        frozen: Frozen,
        /// Conductances, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        state: Option<Vec<f64>>,
    },
    /// Local Nash test of the load game at a state.
    Game {
        #[command(flatten)]
        frozen: Frozen,
        /// Conductances, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        state: Vec<f64>,
        /// Scan this load's payoff (1-based) with the others held fixed.
        #[arg(long)]
        scan_load: Option<usize>,
        /// Opponents' total conductance during the scan (default: taken from --state).
        #[arg(long)]
        scan_others: Option<f64>,
        #[arg(long, default_value_t = 1000.0)]
        scan_max: f64,
        #[arg(long, default_value_t = 1000)]
        scan_points: usize,
    },
    /// Equilibria and verdicts over a parameter range; writes sweep.csv.
    Sweep {
        /// One of p0-scale, g_l, kappa.
        #[arg(long)]
        parameter: String,
        #[arg(long, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Freeze demands at this time (default: the last demand breakpoint).
        #[arg(long)]
        at_time: Option<f64>,
        /// Also run the full simulation at every point.
        #[arg(long)]
        simulate: bool,
    },
}

#[derive(Debug, Args)]
struct Frozen {
    /// Freeze demands at this time.
    #[arg(long, default_value_t = 0.0)]
    at_time: f64,
    /// Print JSON instead of the table.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_cli(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load(cli: &Cli) -> Result<Scenario> {
    let Some(path) = &cli.config else {
        bail!("--config <path> is required");
    };
    Scenario::load(path).with_context(|| format!("loading {}", path.display()))
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn check_time(scenario: &Scenario, t: f64) -> Result<()> {
    let t_end = scenario.options.t_end;
    if !(t >= 0.0 && t <= t_end) {
        bail!("--at-time {t} outside the horizon [0, {t_end}]");
    }
    Ok(())
}

fn emit(cli: &Cli, json: bool, text: String, value: &impl serde::Serialize) -> Result<()> {
    if cli.quiet {
        return Ok(());
    }
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        print!("{text}");
    }
    Ok(())
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn run_cli(cli: &Cli) -> Result<u8> {
    let scenario = load(cli)?;
    match &cli.command {
        Command::Simulate => {
            let outcome = run::simulate(&scenario)?;
            let files = run::write_outputs(&scenario, &outcome, &out_dir(cli))?;
            if !cli.quiet {
                print!("{}", outcome.report.render_text());
                println!("trace: {}", files.trace.display());
                println!("report: {} ({})", files.report_json.display(), files.report_text.display());
            }
            Ok(run::exit_code(&outcome.trace.termination) as u8)
        }
        Command::Equilibria(frozen) => {
            check_time(&scenario, frozen.at_time)?;
            let report = analysis::catalog(&scenario.config_at(frozen.at_time)?, frozen.at_time)?;
            emit(cli, frozen.json, report.render_text(), &report)?;
            Ok(0)
        }
        Command::Stability { frozen, state } => {
            check_time(&scenario, frozen.at_time)?;
            let cfg = scenario.config_at(frozen.at_time)?;
            match state {
                Some(g) => {
                    let report = analysis::stability_at(&cfg, g)?;
                    emit(cli, frozen.json, report.render_text(), &report)?;
                }
                None => {
                    let report = analysis::catalog(&cfg, frozen.at_time)?;
                    emit(cli, frozen.json, report.render_text(), &report)?;
                }
            }
            Ok(0)
        }
        Command::Game {
            frozen,
            state,
            scan_load,
            scan_others,
            scan_max,
            scan_points,
        } => {
            check_time(&scenario, frozen.at_time)?;
            let cfg = scenario.config_at(frozen.at_time)?;
            let scan = match scan_load {
                None => None,
                Some(0) => bail!("--scan-load is 1-based"),
                Some(k) => {
                    let load = k - 1;
                    let others = match scan_others {
                        Some(x) => *x,
                        None => state.iter().enumerate().filter(|(i, _)| *i != load).map(|(_, g)| g).sum(),
                    };
                    Some(ScanRequest {
                        load,
                        others,
                        g_max: *scan_max,
                        points: *scan_points,
                    })
                }
            };
            let report = analysis::game_report(&cfg, state, scan)?;
            emit(cli, frozen.json, report.render_text(), &report)?;
            Ok(0)
        }
        Command::Sweep {
            parameter,
            from,
            to,
            steps,
            at_time,
            simulate,
        } => {
            let parameter: SweepParameter = parameter.parse()?;
            let time = at_time.unwrap_or_else(|| scenario.schedule.last_change());
            check_time(&scenario, time)?;
            let mode = if *simulate { SweepMode::Simulate } else { SweepMode::Static };
            let report = analysis::sweep(&scenario, parameter, *from, *to, *steps, time, mode)?;
            let path = out_dir(cli).join("sweep.csv");
            let mut bytes = Vec::new();
            report.write_csv(&mut bytes, scenario.config.n())?;
            write(&path, &bytes)?;
            if !cli.quiet {
                print!("{}", report.render_text());
                println!("sweep: {}", path.display());
            }
            Ok(0)
        }
    }
}
