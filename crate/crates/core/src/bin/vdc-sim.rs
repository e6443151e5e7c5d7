use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use vdc_core::allocator::{derive_gains, GAIN_IDENTITY_TOL};
use vdc_core::sim::telemetry::{write_json, write_summary, write_telemetry, write_text};
use vdc_core::sim::zwidth::{report_csv, run_sweep};
use vdc_core::sim::{run_experiment, ExperimentConfig};
use vdc_core::spatial::Mat6;
use vdc_core::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_ASSERTION: u8 = 3;

/// Virtual decomposition impedance control simulator.
#[derive(Parser)]
#[command(name = "vdc-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment; writes telemetry.csv and summary.json.
    Simulate {
        config: PathBuf,
        /// Output directory (overrides run.output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep desired inertia and find the largest passive wall stiffness.
    Zwidth {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the allocator gains derived from the impedance section.
    Gains { config: PathBuf },
    /// Parse and check a configuration without running it.
    Validate { config: PathBuf },
}

fn output_dir(cli: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    cli.or_else(|| cfg.run.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::from_path(path).map_err(|e| {
        eprintln!("{e}");
        ExitCode::from(EXIT_CONFIG)
    })
}

fn fail(e: Error) -> ExitCode {
    eprintln!("{e}");
    match e {
        Error::Diverged { .. } => ExitCode::from(EXIT_DIVERGED),
        _ => ExitCode::from(EXIT_CONFIG),
    }
}

fn simulate(path: &Path, out: Option<PathBuf>) -> Result<ExitCode, Error> {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return Ok(code),
    };
    let dir = output_dir(out, &cfg);
    let checks = cfg.checks.clone();
    let outcome = run_experiment(cfg, true)?;
    let sim = &outcome.simulation;
    write_telemetry(&dir.join("telemetry.csv"), sim.records(), sim.dt())?;
    write_summary(&dir.join("summary.json"), &outcome.summary)?;
    let s = &outcome.summary;
    if let Some(reason) = &s.diverged {
        eprintln!("diverged at t = {}: {reason}", s.final_time);
        return Ok(ExitCode::from(EXIT_DIVERGED));
    }
    let mut failed = Vec::new();
    if !s.stability_bound_held {
        failed.push(format!(
            "integral of S fell to {} below -{}",
            s.min_stability_integral, s.gamma0
        ));
    }
    if let Some(bound) = checks.max_upsilon_after_transient {
        if s.max_upsilon_after_transient >= bound {
            failed.push(format!("max |upsilon| after transient {} >= {bound}", s.max_upsilon_after_transient));
        }
    }
    if let Some(bound) = checks.max_upsilon_in_contact {
        match s.max_upsilon_sustained_contact {
            Some(u) if u < bound => {}
            Some(u) => failed.push(format!("max |upsilon| in sustained contact {u} >= {bound}")),
            None => failed.push("no sustained contact to check".into()),
        }
    }
    if checks.require_no_fallback && s.fallback_count > 0 {
        failed.push(format!("{} SPD projection fallbacks", s.fallback_count));
    }
    println!("wrote {}", dir.display());
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for f in failed {
            eprintln!("check failed: {f}");
        }
        Ok(ExitCode::from(EXIT_ASSERTION))
    }
}

fn zwidth(path: &Path, out: Option<PathBuf>) -> Result<ExitCode, Error> {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return Ok(code),
    };
    if cfg.zwidth.is_none() {
        eprintln!("config error: missing [zwidth] section");
        return Ok(ExitCode::from(EXIT_CONFIG));
    }
    let dir = output_dir(out, &cfg);
    let report = run_sweep(&cfg)?;
    write_json(&dir.join("sweep.json"), &report)?;
    write_text(&dir.join("sweep.csv"), &report_csv(&report))?;
    let mut ok = true;
    for p in &report.points {
        let k = p.max_passive_stiffness.map_or("none".to_string(), |k| format!("{k:.1}"));
        println!("m_d = {:>5}: K_e max = {k}{}", p.desired_inertia, if p.saturated { " (range end)" } else { "" });
        if let Some(b) = &p.boundary {
            if b.contact_energy.balance_error() > 1e-9 || b.replay_error > 1e-9 || b.min_stability_integral < -cfg.run.gamma0 {
                eprintln!("energy check failed at m_d = {}", p.desired_inertia);
                ok = false;
            }
        }
    }
    println!("wrote {}", dir.display());
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(EXIT_ASSERTION) })
}

#[derive(Serialize)]
struct GainsReport {
    gamma_p: Mat6,
    gamma_v: Mat6,
    gamma_f: Mat6,
    identity_residuals: [f64; 3],
}

fn gains(path: &Path) -> Result<ExitCode, Error> {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return Ok(code),
    };
    let spec = cfg.impedance.spec()?;
    let g = derive_gains(&spec)?;
    let residuals = g.identity_residuals(&spec)?;
    let report = GainsReport {
        gamma_p: g.gamma_p,
        gamma_v: g.gamma_v,
        gamma_f: g.gamma_f,
        identity_residuals: residuals,
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("matrices serialize"));
    let diag = |m: &Mat6| (0..6).map(|i| format!("{:.6}", m[(i, i)])).collect::<Vec<_>>().join(", ");
    eprintln!("diag Gamma_p = [{}]", diag(&g.gamma_p));
    eprintln!("diag Gamma_v = [{}]", diag(&g.gamma_v));
    eprintln!("diag Gamma_f = [{}]", diag(&g.gamma_f));
    Ok(if residuals.iter().all(|r| *r < GAIN_IDENTITY_TOL) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_ASSERTION)
    })
}

fn validate(path: &Path) -> ExitCode {
    match load(path) {
        Ok(cfg) => match derive_gains(&cfg.impedance.spec().expect("validated")) {
            Ok(_) => {
                println!("ok: {:?} plant, {} steps of {} s", cfg.run.mode, cfg.steps(), cfg.run.dt);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Err(code) => code,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out } => simulate(&config, out),
        Command::Zwidth { config, out } => zwidth(&config, out),
        Command::Gains { config } => gains(&config),
        Command::Validate { config } => Ok(validate(&config)),
    };
    result.unwrap_or_else(fail)
}
