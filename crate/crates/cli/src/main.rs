mod fields;
mod invariants;
mod verify;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "folia", version, about = "Foliated Randers geometry: invariants, field dumps and integral-formula checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// σ_λ invariants, Newton transforms and determinant-series coefficients of matrices.
    Invariants(invariants::Args),
    /// Dump geometric fields of a chart over its grid.
    Fields(fields::Args),
    /// Check integral formulae over charts and write residual reports.
    Verify(verify::Args),
}

/// Usage and configuration problems.
pub const EXIT_USAGE: u8 = 2;
/// At least one verification failed or regressed.
pub const EXIT_FAIL: u8 = 1;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Invariants(a) => invariants::run(a),
        Command::Fields(a) => fields::run(a),
        Command::Verify(a) => verify::run(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

/// Resolves a chart argument: a preset name, or a path to a chart file.
pub fn load_chart(spec: &str) -> Result<folia_core::FoliatedChart, String> {
    if folia_core::chart::PRESETS.contains(&spec) {
        return folia_core::FoliatedChart::preset(spec).map_err(|e| e.to_string());
    }
    let path = std::path::Path::new(spec);
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{spec}: {e}"))?;
        return folia_core::FoliatedChart::from_toml(&text).map_err(|e| format!("{spec}: {e}"));
    }
    Err(format!("`{spec}` is neither a preset ({}) nor a chart file", folia_core::chart::PRESETS.join(", ")))
}
