use std::process::ExitCode;

use atseg_cli::{resolve, run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = resolve(&cli).and_then(run);
    match result {
        Ok(m) => {
            if let Some(o) = &m.outcome {
                if let (Some(v), Some(x)) = (o.phi_min, &o.phi_argmin) {
                    println!("min phi {v:.6} at {x:?}");
                }
            }
            println!("outputs in {}", m.spec.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("atseg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
