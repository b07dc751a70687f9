use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use coldec::runner::{execute, parse_config, Command, Invocation};

/// Collisional decoherence simulator.
#[derive(Debug, Parser)]
#[command(name = "coldec", version, about)]
struct Cli {
    #[arg(value_enum)]
    command: Command,

    /// TOML configuration; omitted keys take the reference values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Extra snapshot steps, comma separated.
    #[arg(long, value_delimiter = ',')]
    snapshots: Vec<usize>,

    /// Worker threads (results do not depend on this).
    #[arg(long)]
    threads: Option<usize>,

    /// Also write gnuplot scripts for the produced CSV files.
    #[arg(long)]
    emit_plots: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", path.display());
                return ExitCode::from(2);
            }
        },
        None => String::new(),
    };
    let result = parse_config(&text).and_then(|mut config| {
        config.output.snapshots.extend(cli.snapshots.iter().copied());
        config.output.snapshots.sort_unstable();
        config.output.snapshots.dedup();
        let inv = Invocation {
            command: cli.command,
            config,
            out_dir: cli.out.clone(),
            threads: cli.threads,
            emit_plots: cli.emit_plots,
        };
        execute(&inv)
    });
    match result {
        Ok(summary) => {
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
            println!("manifest {}", summary.manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
