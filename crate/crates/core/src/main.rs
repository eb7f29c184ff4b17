use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tdnns::bench::{
    convergence_study, run_benchmark, to_csv, write_vtk, BenchName, BenchmarkSpec,
};
use tdnns::forms::MethodKind;

#[derive(Parser)]
#[command(name = "tdnns", about = "Nonlinear TDNNS elasticity benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one benchmark and write results.csv (and deformed.vtk with --vtk).
    Run(RunArgs),
    /// Shearing-plate refinement study with convergence rates.
    Convergence {
        #[command(flatten)]
        common: RunArgs,
        #[arg(long, default_value_t = 4)]
        levels: usize,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    bench: String,
    #[arg(long, default_value = "F")]
    method: String,
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// `n` or `nx,ny`.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    force: Option<f64>,
    #[arg(long)]
    loadsteps: Option<usize>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    ul: Option<bool>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    vtk: bool,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    let num = |p: &str| p.trim().parse::<usize>().map_err(|e| format!("bad grid '{s}': {e}"));
    match parts.as_slice() {
        [n] => {
            let n = num(n)?;
            Ok((n, n))
        }
        [a, b] => Ok((num(a)?, num(b)?)),
        _ => Err(format!("bad grid '{s}'")),
    }
}

fn spec_from(a: &RunArgs) -> Result<BenchmarkSpec, String> {
    let bench = BenchName::parse(&a.bench).ok_or_else(|| format!("unknown benchmark '{}'", a.bench))?;
    let method = MethodKind::parse(&a.method).ok_or_else(|| format!("unknown method '{}'", a.method))?;
    let mut s = BenchmarkSpec::new(bench, method);
    s.order = a.order;
    if let Some(g) = &a.grid {
        s.grid = parse_grid(g)?;
    }
    if let Some(f) = a.force {
        s.force = f;
    }
    if let Some(n) = a.loadsteps {
        s.newton.load_steps = n;
    }
    if let Some(c) = a.c1 {
        s.c1 = c;
    }
    if let Some(c) = a.c2 {
        s.c2 = c;
    }
    if let Some(u) = a.ul {
        s.ul = u;
    }
    Ok(s)
}

fn write_rows(out: &PathBuf, csv: &str) -> Result<(), String> {
    std::fs::create_dir_all(out).map_err(|e| e.to_string())?;
    std::fs::write(out.join("results.csv"), csv).map_err(|e| e.to_string())?;
    print!("{csv}");
    Ok(())
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Run(a) => {
            let spec = spec_from(&a)?;
            let out = run_benchmark(&spec).map_err(|e| e.to_string())?;
            write_rows(&a.out, &to_csv(&out.rows))?;
            if let Some(e) = &out.error {
                eprintln!("solver failure: {e}");
            }
            if a.vtk {
                if let Some(sol) = &out.solution {
                    write_vtk(&a.out.join("deformed.vtk"), &out.problem, sol).map_err(|e| e.to_string())?;
                }
            }
            Ok(out.success)
        }
        Command::Convergence { common, levels } => {
            let spec = spec_from(&common)?;
            let (rows, ok) = convergence_study(&spec, levels).map_err(|e| e.to_string())?;
            write_rows(&common.out, &to_csv(&rows))?;
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
