use std::process::ExitCode;

use clap::Parser;
use multilayer_vi::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            for l in &out.lines {
                println!("{l}");
            }
            for p in &out.written {
                println!("wrote {}", p.display());
            }
            if out.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
