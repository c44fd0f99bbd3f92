use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use obscert_cli::{run, write_output, Command, RunConfig};

#[derive(Parser)]
#[command(name = "obscert", version, about = "Certified observability constants")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Directory for the report and CSV (overrides the config).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Seed for random masks (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Verify hypotheses, certify and check soundness.
    Certify { config: PathBuf },
    /// One certification per sweep point; writes a CSV.
    Sweep { config: PathBuf },
    /// Check explicitly configured hypothesis certificates.
    Verify { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, path) = match cli.command {
        Cmd::Certify { config } => (Command::Certify, config),
        Cmd::Sweep { config } => (Command::Sweep, config),
        Cmd::Verify { config } => (Command::Verify, config),
    };
    let start = Instant::now();
    let result = run(command, &path, cli.seed, cli.output_dir.clone()).and_then(|out| {
        let mut spec = RunConfig::load(&path)?.output;
        if let Some(d) = cli.output_dir {
            spec.dir = d;
        }
        let written = write_output(&out, &spec)?;
        Ok((out, written))
    });
    match result {
        Ok((out, written)) => {
            for d in &out.report.diagnostics {
                eprintln!("{d}");
            }
            for p in written {
                eprintln!("wrote {}", p.display());
            }
            let s = &out.report.summary;
            eprintln!(
                "{} certificate(s), {} sound, {} unsound, {} failed; exit {}; {:.2} s",
                s.certificates,
                s.sound,
                s.unsound,
                s.failed,
                out.report.exit_code,
                start.elapsed().as_secs_f64()
            );
            ExitCode::from(out.report.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
