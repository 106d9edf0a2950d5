use std::process::ExitCode;

use clap::Parser;
use optiwake::cli::{dispatch, exit_code, Cli, RunManifest};

fn main() -> ExitCode {
    let manifest = RunManifest::from(Cli::parse());
    match dispatch(&manifest) {
        Ok(summary) => {
            println!(
                "{} done: seed {}, calibration {}, params {}, v{}",
                summary.command,
                summary.seed,
                summary.calibration_id,
                summary.param_hash,
                summary.version
            );
            for o in &summary.outputs {
                println!("  {}", manifest.out.join(o).display());
            }
            for n in &summary.notes {
                println!("  note: {n}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
