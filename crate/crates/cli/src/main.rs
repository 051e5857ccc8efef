//! `msnc` — command-line front end: one-off analyses and the scenario
//! runner.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical
//! failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use msnc_core::blc::{self, BlcSpec};
use msnc_core::diode::{large_signal_extract, DiodeTopology};
use msnc_core::netalg::{mag_db, write_s2p, FrequencyGrid, ScatteringMatrix};
use msnc_core::pipeline::{
    run_scenario, validate_config, OutputFormat, PipelineError, ScenarioConfig, Table,
};
use msnc_core::steady::{
    efficiency, hot_s_column, integrate_to_steady, power_sweep, CircuitNetlist, ExcitationSpec,
};
use msnc_core::synth::msnc::msnc_netlist;
use msnc_core::synth::{design_matching_networks, stub_network_abcd};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(
    name = "msnc",
    version,
    about = "Multimode nonlinear branch-line coupler analysis and synthesis"
)]
struct Cli {
    /// Scenario configuration (TOML, or JSON by extension); defaults apply
    /// when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Topology {
    Series,
    AntiparallelPair,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Small-signal S-parameters of the configured matching networks over
    /// the frequency grid, written as Touchstone files.
    Analyze,
    /// Mode impedances that realise coupling `k`.
    SolveK {
        /// Coupling values; the configured grid when omitted.
        #[arg(long, num_args = 1..)]
        k: Vec<f64>,
    },
    /// Refit the impedance polynomials to solver output.
    Fit,
    /// Large-signal diode impedance at one drive level.
    DiodeExtract {
        #[arg(long, allow_hyphen_values = true)]
        drive: f64,
        #[arg(long, value_enum, default_value = "series")]
        topology: Topology,
        /// Frequency in Hz; the configured operating frequency by default.
        #[arg(long)]
        freq: Option<f64>,
    },
    /// Periodic steady state of a netlist (the configured full circuit by
    /// default) at one drive, or a power sweep over the configured grid.
    Simulate {
        /// Netlist JSON file.
        #[arg(long)]
        netlist: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true, default_value_t = -10.0)]
        drive: f64,
        #[arg(long)]
        freq: Option<f64>,
        /// Sweep the configured power grid instead of one drive.
        #[arg(long)]
        sweep: bool,
    },
    /// Genetic-algorithm matching-network synthesis.
    Synth,
    /// Run a named scenario.
    Scenario { name: String },
    /// Validate a configuration file and list every problem.
    Validate { path: PathBuf },
    /// Print the effective configuration (defaults, file and flags) as TOML.
    Config,
}

enum CliError {
    Usage(String),
    Numerical(String),
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) | PipelineError::Io { .. } => CliError::Usage(e.to_string()),
            PipelineError::Stage { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => validate_config(p)
            .map_err(|e| usage(format!("{}:\n  {}", p.display(), e.join("\n  "))))?,
        None => ScenarioConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.output_dir = o.display().to_string();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    if let Some(f) = cli.format {
        cfg.format = match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        };
    }
    cfg.solver.jobs = cfg.jobs;
    Ok(cfg)
}

fn print_json<T: Serialize>(v: &T) -> Result<(), CliError> {
    let s = serde_json::to_string_pretty(v).map_err(numerical)?;
    println!("{s}");
    Ok(())
}

/// Prints a table to stdout in the configured format.
fn print_table(t: &Table, format: OutputFormat) -> Result<(), CliError> {
    match format {
        OutputFormat::Json => print_json(t),
        OutputFormat::Csv => t.write_csv(std::io::stdout().lock()).map_err(usage),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Validate { path } = &cli.command {
        return match validate_config(path) {
            Ok(_) => {
                println!("{}: valid", path.display());
                Ok(())
            }
            Err(errs) => Err(usage(format!(
                "{}: {} problem(s)\n  {}",
                path.display(),
                errs.len(),
                errs.join("\n  ")
            ))),
        };
    }
    let cfg = load_config(&cli)?;
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(usage(format!(
            "invalid configuration:\n  {}",
            errs.join("\n  ")
        )));
    }
    let spec = BlcSpec {
        z0: cfg.components.z0,
        freq_design: cfg.components.f_design,
        z_source: cfg.components.z0,
    };
    let f0 = cfg.frequency.f0_hz;

    match cli.command {
        Command::Validate { .. } => unreachable!("handled above"),
        Command::Config => {
            print!("{}", cfg.to_toml_string());
            Ok(())
        }
        Command::Analyze => {
            let dir = PathBuf::from(&cfg.output_dir);
            ensure_dir(&dir)?;
            let grid = FrequencyGrid {
                start_hz: cfg.frequency.start_hz,
                stop_hz: cfg.frequency.stop_hz,
                points: cfg.frequency.points,
            };
            let mut summary = Vec::new();
            for (name, mn) in [("mn1", &cfg.topology.mn1), ("mn2", &cfg.topology.mn2)] {
                let data: Vec<ScatteringMatrix> = grid
                    .values()
                    .iter()
                    .map(|&f| {
                        stub_network_abcd(mn, &cfg.substrate, f)?
                            .to_s(cfg.components.z0)
                            .map_err(Into::into)
                    })
                    .collect::<Result<_, msnc_core::synth::SynthError>>()
                    .map_err(numerical)?;
                let path = dir.join(format!("{name}.s2p"));
                let mut file = fs::File::create(&path)
                    .map_err(|e| usage(format!("{}: {e}", path.display())))?;
                write_s2p(&mut file, &data).map_err(usage)?;
                let abcd = stub_network_abcd(mn, &cfg.substrate, f0).map_err(numerical)?;
                let z_in = abcd
                    .input_impedance(Complex64::new(cfg.components.z0, 0.0))
                    .map_err(numerical)?;
                summary.push(json!({ "network": name, "file": path.display().to_string(), "z_in_at_f0": z_in }));
            }
            print_json(&summary)
        }
        Command::SolveK { k } => {
            let ks = if k.is_empty() { cfg.k_grid.values() } else { k };
            let rows = blc::s_params_vs_k(&ks, &spec).map_err(numerical)?;
            let mut t = Table::new(&[
                "k", "z_ae_re", "z_ae_im", "z_ao_re", "z_ao_im", "residual", "s11_db", "s21_db",
                "s31_db", "s41_db",
            ]);
            for r in &rows {
                let s = r.solution;
                t.push(msnc_core::row![
                    s.k, s.z_ae.re, s.z_ae.im, s.z_ao.re, s.z_ao.im, s.residual, r.s11_db,
                    r.s21_db, r.s31_db, r.s41_db
                ]);
            }
            print_table(&t, cfg.format)
        }
        Command::Fit => {
            let sols: Vec<_> = cfg
                .k_grid
                .values()
                .iter()
                .filter(|&&k| k >= 0.05 - 1e-12)
                .map(|&k| blc::solve_za_for_k(k, &spec))
                .collect::<Result<_, _>>()
                .map_err(numerical)?;
            let rep = blc::refit(&sols).map_err(numerical)?;
            print_json(&json!({ "published": blc::FitCoefficients::published(), "refit": rep }))
        }
        Command::DiodeExtract {
            drive,
            topology,
            freq,
        } => {
            let top = match topology {
                Topology::Series => DiodeTopology::Series,
                Topology::AntiparallelPair => DiodeTopology::AntiparallelPair,
            };
            let p = large_signal_extract(
                drive,
                freq.unwrap_or(f0),
                cfg.components.z0,
                top,
                &cfg.components.diode,
                &cfg.solver,
            )
            .map_err(numerical)?;
            print_json(&json!({
                "drive_dbm": p.drive_dbm,
                "freq_hz": p.freq,
                "z_d": p.z_d,
                "z_d_mag": p.z_d.norm(),
                "y_d": p.y_d,
                "v_amp": p.v_amp,
            }))
        }
        Command::Simulate {
            netlist,
            drive,
            freq,
            sweep,
        } => {
            let f = freq.unwrap_or(f0);
            let net = match netlist {
                Some(p) => {
                    let text = fs::read_to_string(&p)
                        .map_err(|e| usage(format!("{}: {e}", p.display())))?;
                    let net = CircuitNetlist::from_json(&text)
                        .map_err(|e| usage(format!("{}: {e}", p.display())))?;
                    let errs = net.validate();
                    if !errs.is_empty() {
                        return Err(usage(format!("{}:\n  {}", p.display(), errs.join("\n  "))));
                    }
                    net
                }
                None => msnc_netlist(
                    &cfg.topology,
                    &cfg.substrate,
                    &cfg.components,
                    f,
                    cfg.solver.samples_per_period,
                )
                .map_err(numerical)?,
            };
            if sweep {
                let rows = power_sweep(
                    &net,
                    f,
                    &cfg.power_dbm.values(),
                    cfg.components.z0,
                    &cfg.solver,
                )
                .map_err(numerical)?;
                let mut t = Table::new(&[
                    "p_in_dbm",
                    "p_dc_w",
                    "eta",
                    "s11_db",
                    "s21_db",
                    "energy_imbalance",
                ]);
                for r in &rows {
                    t.push(msnc_core::row![
                        r.p_in_dbm,
                        r.p_dc_w,
                        r.eta,
                        r.s11_db,
                        r.s21_db,
                        r.energy_imbalance
                    ]);
                }
                return print_table(&t, cfg.format);
            }
            let exc = ExcitationSpec {
                z_source: cfg.components.z0,
                ..ExcitationSpec::single(f, drive)
            };
            let res = integrate_to_steady(&net, &exc, &cfg.solver).map_err(numerical)?;
            let col = hot_s_column(&net, &res, "1", f).map_err(numerical)?;
            let s_db: Vec<f64> = col.iter().map(|s| mag_db(*s)).collect();
            print_json(&json!({
                "drive_dbm": drive,
                "freq_hz": f,
                "p_dc_w": res.p_dc,
                "efficiency": efficiency(&res).ok(),
                "dc_load_voltage": res.dc_load_voltage,
                "s_column_db": s_db,
                "converged": res.converged,
                "diagnostics": {
                    "accelerated": res.diagnostics.accelerated,
                    "outer_iterations": res.diagnostics.outer_iterations,
                    "settle_periods": res.diagnostics.settle_periods,
                    "time_steps": res.diagnostics.time_steps,
                    "energy": res.diagnostics.energy,
                },
            }))
        }
        Command::Synth => {
            let dir = PathBuf::from(&cfg.output_dir);
            ensure_dir(&dir)?;
            let mut dc = msnc_core::pipeline::design_config(&cfg);
            dc.ga.jobs = cfg.jobs;
            let rep = design_matching_networks(&dc).map_err(numerical)?;
            let path = dir.join("design_report.json");
            let text = serde_json::to_string_pretty(&rep).map_err(numerical)?;
            fs::write(&path, text + "\n").map_err(|e| usage(format!("{}: {e}", path.display())))?;
            print_json(&json!({
                "report": path.display().to_string(),
                "best_cost": rep.best_cost,
                "evaluations": rep.evaluations,
                "goal_met": rep.goal_met,
                "topology": rep.topology,
            }))
        }
        Command::Scenario { name } => {
            let cfg = ScenarioConfig {
                scenario: name,
                ..cfg
            };
            let result = run_scenario(&cfg);
            let report = match &result {
                Ok(r) => Some(r.clone()),
                Err(PipelineError::Stage { report, .. }) => Some((**report).clone()),
                Err(_) => None,
            };
            if let Some(r) = &report {
                let mut err = std::io::stderr().lock();
                for (stage, d) in &r.timings {
                    let _ = writeln!(err, "stage {stage}: {:.3} s", d.as_secs_f64());
                }
                for c in &r.checks {
                    println!(
                        "{} {}: {}",
                        if c.passed { "PASS" } else { "FAIL" },
                        c.name,
                        c.detail
                    );
                }
                for m in &r.manifest {
                    println!("wrote {}", Path::new(&cfg.output_dir).join(m).display());
                }
            }
            result.map(|_| ()).map_err(Into::into)
        }
    }
}
