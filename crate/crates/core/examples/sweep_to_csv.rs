//! Drives the `sweep` subcommand in-process and reads one trace back.
//! Output goes to the directory given as the first argument, or a temp dir.

use std::path::PathBuf;

use vsgd::cli::{execute, parse_args, read_csv};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("vsgd_sweep_example"));
    let out = dir.to_str().ok_or("non UTF-8 path")?;
    let cli = parse_args([
        "vsgd", "sweep", "--optimizer", "vsgd,adam,sgdm", "--lr", "0.01,0.001", "--seed", "0,1", "--problem",
        "quad:dim=10,noise=0.5,cond=10", "--steps", "2000", "--record-stride", "100", "--out", out,
    ])?;
    let code = execute(&cli, &mut std::io::stdout())?;

    let trace = read_csv(&dir.join("vsgd_quad_lr0.01_wd0_seed0.csv"))?;
    for row in trace.iter().step_by(5) {
        println!("t={:>5} loss {:.4e} mean σ² {:?}", row.t, row.loss, row.summary.mean_sigma2);
    }
    std::process::exit(code);
}
