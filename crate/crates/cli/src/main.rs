use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use elliptic_workbench::{report, run, RunConfig, SuiteError};

#[derive(Parser)]
#[command(
    name = "workbench",
    version,
    about = "Verification suites for elliptic current algebras"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the requested checks and emit a report.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algebra: Option<String>,
    #[arg(long = "Kx")]
    kx: Option<String>,
    #[arg(long = "Knome")]
    knome: Option<String>,
    /// Comma list: EE, FF, H+H+, ..., HC, EF, EF-supports, Serre, a1, a2, a3,
    /// tau, tau-structure, hom:<rel>, iter:<m>, fock:<rel>, scaling.
    #[arg(long)]
    check: Option<String>,
    /// Restrict node-pair checks to `i,j`.
    #[arg(long)]
    nodes: Option<String>,
    /// Scan conventions when a relation check fails.
    #[arg(long)]
    calibrate: bool,
    #[arg(long = "calibration-box")]
    calibration_box: Option<String>,
    #[arg(long)]
    cocycle: bool,
    #[arg(long = "antipode-convention")]
    antipode_convention: Option<String>,
    #[arg(long = "charge-reading")]
    charge_reading: Option<String>,
    /// Integer charges `c_n,c_{n+1}`.
    #[arg(long)]
    charges: Option<String>,
    /// Oracle points `p:q,...`, each a rational fourth power.
    #[arg(long)]
    samples: Option<String>,
    /// Fock space cutoff.
    #[arg(long)]
    cutoff: Option<String>,
    /// Include wall-clock times (reports are no longer byte-stable).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    format: Option<String>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, elliptic_workbench::ConfigError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags: [(&str, Option<&String>); 13] = [
            ("algebra", self.algebra.as_ref()),
            ("Kx", self.kx.as_ref()),
            ("Knome", self.knome.as_ref()),
            ("check", self.check.as_ref()),
            ("nodes", self.nodes.as_ref()),
            ("calibration-box", self.calibration_box.as_ref()),
            ("antipode-convention", self.antipode_convention.as_ref()),
            ("charge-reading", self.charge_reading.as_ref()),
            ("charges", self.charges.as_ref()),
            ("samples", self.samples.as_ref()),
            ("cutoff", self.cutoff.as_ref()),
            ("out", self.out.as_ref()),
            ("format", self.format.as_ref()),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        for (k, on) in [
            ("calibrate", self.calibrate),
            ("cocycle", self.cocycle),
            ("timing", self.timing),
        ] {
            if on {
                cfg.set(k, "true")?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let Command::Run(args) = Cli::parse().command;
    let cfg = match args.config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let rep = match run(&cfg) {
        Ok(r) => r,
        Err(SuiteError::Config(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    let doc = report::emit(&rep, cfg.format);
    match &cfg.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &doc) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(3);
            }
        }
        None => print!("{doc}"),
    }
    if rep.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
