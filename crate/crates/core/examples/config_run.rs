// Runs a bundled JSON configuration through the same path as the
// `optimal-load solve` command and writes its outputs to a scratch directory.

use std::path::{Path, PathBuf};

use optimal_load::cli::{load_config, prepare, run_solve, CliError};

pub fn run_example() -> Result<PathBuf, CliError> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/rc.json");
    let prepared = prepare(load_config(&config)?, None, Some(200))?;
    let out = std::env::temp_dir().join(format!("optimal-load-example-{}", std::process::id()));
    run_solve(&prepared, &out, false)?;
    Ok(out)
}

#[allow(dead_code)]
fn main() {
    match run_example() {
        Ok(out) => println!("outputs in {}", out.display()),
        Err(e) => {
            eprintln!("{}", e.to_json());
            std::process::exit(e.exit_code());
        }
    }
}
