use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use fpm_core::assembly::OperatorDiagnostics;
use fpm_core::geometry::{build_voronoi_partition_2d, read_points, write_partition, BoundaryPolygon};
use fpm_core::io::{self, SimulationConfig};
use fpm_core::stepper::explicit_stability_limit;
use fpm_core::FpmError;

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "fpm", version, about = "Meshfree monodomain solver (Fragile Points Method)")]
struct Cli {
    /// Worker threads (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Fixed-order reductions so repeated runs are bit-identical
    #[arg(long, global = true)]
    deterministic: bool,
    /// Where results go (overrides the config's output directory)
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// Only print warnings and errors on stderr
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a simulation described by a TOML config
    Run { config: PathBuf },
    /// Build a clipped 2D Voronoi partition and write it as partition.txt
    Partition { points: PathBuf, boundary: PathBuf },
    /// Compute LAT/APD90/CV tables for a finished run directory
    Post { run_dir: PathBuf },
    /// Assemble the operators and print structural diagnostics
    Check { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &FpmError) -> u8 {
    match e {
        FpmError::Config(_) | FpmError::Parse { .. } => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn load_config(cli: &Cli, path: &Path) -> Result<SimulationConfig, FpmError> {
    let mut cfg = SimulationConfig::load(path)?;
    if cli.deterministic {
        cfg.deterministic = true;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<(), FpmError> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load_config(cli, config)?;
            let out = match &cli.output_dir {
                Some(d) => d.clone(),
                None => cfg.resolve(&cfg.output.directory),
            };
            let problem = io::prepare(&cfg)?;
            let report = io::run(&cfg, &problem, &out, !cli.quiet)?;
            let r = &report.result;
            println!("output: {}", report.directory.display());
            println!("steps: {}", r.steps);
            println!("final time (ms): {}", r.state.t);
            println!("cg iterations: {}", r.solver_iterations);
            println!("activated nodes: {}/{}", r.activation.activated(), r.activation.len());
            Ok(())
        }
        Command::Partition { points, boundary } => {
            let cloud = read_points(points)?;
            if cloud.dim() != 2 {
                return Err(FpmError::Config("partition needs 2D points".into()));
            }
            let polygon = BoundaryPolygon::read(boundary)?;
            let part = build_voronoi_partition_2d(&cloud, &polygon)?;
            let dir = cli.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("partition.txt");
            write_partition(&part, &path)?;
            let closure = part.measure_closure(polygon.area());
            println!("cells: {}", part.len());
            println!("facets: {}", part.facets().len());
            println!("internal facets: {}", part.internal_facets().count());
            println!("collapsed pairs: {}", part.collapsed_pairs());
            println!("area closure error: {:e}", closure.relative_error);
            println!("written: {}", path.display());
            Ok(())
        }
        Command::Post { run_dir } => {
            let report = io::post_process(run_dir)?;
            println!("probe,lat_ms,apd90_ms");
            for r in &report.probes {
                println!("{},{},{}", r.probe, r.lat_ms, r.apd90_ms);
            }
            println!();
            println!("axis,from_node,to_node,distance_cm,cv_cm_per_ms");
            for r in &report.cv {
                println!("{},{},{},{},{}", r.axis, r.from_node, r.to_node, r.distance_cm, r.cv_cm_per_ms);
            }
            Ok(())
        }
        Command::Check { config } => {
            let cfg = load_config(cli, config)?;
            let problem = io::prepare(&cfg)?;
            let d = OperatorDiagnostics::compute(&problem.operators);
            let kind = if d.eigenvalue_exact { "dense" } else { "power-iteration estimate" };
            println!("points: {} ({}D)", d.n, problem.partition.dim());
            println!("nonzeros: {}", d.nnz);
            println!("|K|_inf: {:e}", d.k_norm_inf);
            println!("|K - K^T|_inf: {:e}", d.k_asymmetry_inf);
            println!("|K 1|_inf: {:e}", d.k_null_residual_inf);
            println!("|C - C^T|_inf: {:e}", d.c_asymmetry_inf);
            println!("min eigenvalue of K ({kind}): {:e}", d.k_min_eigenvalue);
            println!("explicit step limit (ms): {:e}", explicit_stability_limit(&problem.operators)?);
            Ok(())
        }
    }
}
