use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod report;
mod run;

use report::Report;

#[derive(Parser, Debug)]
#[command(name = "daegeo", version, about = "Geometric analysis of E(x)x' = F(x)")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Geometric reduction to M* plus the semi-explicit verdict.
    Analyze(Common),
    /// Explicitation with driving variables.
    Explicitate(Common),
    /// Zero dynamics of the explicitation, N_k = M_k cross-check and NWF1 indices.
    Zerodyn(Common),
    /// Relative degree, S_i chain and the NWF2 verdict.
    Nwf2(Common),
    /// Wong sequences of a linear model (or of the linearization at the point).
    Wong(Common),
    /// Quasi-Weierstrass form of a linear model.
    Wf(Common),
    /// Integrates the reduced dynamics on M*.
    Simulate(Common),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Model file.
    pub model: PathBuf,
    /// Base point "v1,...,vn"; defaults to the model's [point] section.
    #[arg(long, allow_hyphen_values = true)]
    pub point: Option<String>,
    #[arg(long)]
    pub tol_rank: Option<f64>,
    #[arg(long)]
    pub tol_residual: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub tmax: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Write the report here instead of stdout; `simulate` writes CSV for a `.csv` path.
    #[arg(short = 'o', long = "output")]
    pub output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run::execute(&cli.command) {
        Ok(outcome) => outcome.finish(),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// What a finished command hands back to `main`.
pub struct Outcome {
    pub report: Report,
    pub common: Common,
    pub csv: Option<String>,
}

impl Outcome {
    fn finish(self) -> ExitCode {
        let failed = self.report.error.is_some();
        if let Some(err) = &self.report.error {
            eprintln!("analysis failed: {err}");
        }
        let body = match self.common.format {
            Format::Json => self.report.to_json(),
            Format::Text => self.report.to_text(),
        };
        let written = match (&self.common.output, &self.csv) {
            (Some(path), Some(csv)) if path.extension().is_some_and(|e| e == "csv") => std::fs::write(path, csv),
            (Some(path), _) => std::fs::write(path, &body),
            (None, _) => {
                print!("{body}");
                Ok(())
            }
        };
        if let Err(e) = written {
            eprintln!("error: cannot write output: {e}");
            return ExitCode::from(2);
        }
        ExitCode::from(if failed { 1 } else { 0 })
    }
}
