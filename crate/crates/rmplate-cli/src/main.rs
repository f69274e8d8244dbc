//! Command-line front end for the plate experiments.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for solver
//! failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use rmplate::driver::{
    default_locking_sweep, parse_experiment, parse_mesh_spec, parse_variant, run_convergence,
    run_locking, run_single, DriverError, Experiment, MeshSpec, RunConfig,
};

#[derive(Parser, Debug)]
#[command(
    name = "rmplate",
    about = "Clamped Reissner-Mindlin plate experiments on quadrilateral meshes",
    long_about = None
)]
struct Cli {
    /// Experiment: convergence | locking | single
    #[arg(long)]
    experiment: Option<String>,

    /// Mesh spec: trapezoid:levels:distortion | perturbed:n:jitter:seed | file:path
    #[arg(long)]
    mesh: Option<String>,

    /// Plate thickness; repeat the flag for a sweep
    #[arg(long = "thickness", short = 't')]
    thickness: Vec<f64>,

    /// Young's modulus (Pa)
    #[arg(long = "E")]
    youngs_modulus: Option<f64>,

    /// Poisson ratio
    #[arg(long)]
    nu: Option<f64>,

    /// Shear correction factor
    #[arg(long = "shear-correction")]
    shear_correction: Option<f64>,

    /// Interior penalty constant
    #[arg(long)]
    gamma: Option<f64>,

    /// Rotation transport: covariant | parametric
    #[arg(long)]
    variant: Option<String>,

    /// Number of refinement levels (trapezoid meshes)
    #[arg(long)]
    levels: Option<usize>,

    /// Trapezoid distortion in [0, 0.45)
    #[arg(long)]
    distortion: Option<f64>,

    /// Seed of the perturbed mesh generator
    #[arg(long)]
    seed: Option<u64>,

    /// Output file (CSV for tables, `x y u` dump for single solves);
    /// tables go to stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,

    /// Plain key=value configuration file; explicit flags override it
    #[arg(long)]
    config: Option<PathBuf>,

    /// Solve with zero load instead of the manufactured load
    #[arg(long)]
    zero_load: bool,
}

fn build_config(cli: &Cli) -> Result<RunConfig, DriverError> {
    let mut config = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DriverError::Config(format!("cannot read {}: {e}", path.display())))?;
        config.apply_config_file(&text)?;
    }
    if let Some(experiment) = &cli.experiment {
        config.experiment = parse_experiment(experiment)?;
    }
    if let Some(mesh) = &cli.mesh {
        config.mesh = parse_mesh_spec(mesh)?;
    }
    if let Some(levels) = cli.levels {
        match config.mesh {
            MeshSpec::Trapezoid { distortion, .. } => {
                config.mesh = MeshSpec::Trapezoid { levels, distortion };
            }
            _ => return Err(DriverError::Config("--levels needs a trapezoid mesh".into())),
        }
    }
    if let Some(distortion) = cli.distortion {
        match config.mesh {
            MeshSpec::Trapezoid { levels, .. } => {
                config.mesh = MeshSpec::Trapezoid { levels, distortion };
            }
            _ => {
                return Err(DriverError::Config(
                    "--distortion needs a trapezoid mesh".into(),
                ))
            }
        }
    }
    if let Some(seed) = cli.seed {
        match config.mesh {
            MeshSpec::Perturbed { n, jitter, .. } => {
                config.mesh = MeshSpec::Perturbed { n, jitter, seed };
            }
            _ => return Err(DriverError::Config("--seed needs a perturbed mesh".into())),
        }
    }
    if let Some(e) = cli.youngs_modulus {
        config.e = e;
    }
    if let Some(nu) = cli.nu {
        config.nu = nu;
    }
    if let Some(k) = cli.shear_correction {
        config.k_shear = k;
    }
    if let Some(gamma) = cli.gamma {
        config.gamma = gamma;
    }
    if let Some(variant) = &cli.variant {
        config.variant = parse_variant(variant)?;
    }
    if !cli.thickness.is_empty() {
        config.thickness = cli.thickness.clone();
    } else if config.experiment == Experiment::Locking && config.thickness == vec![1e-2] {
        config.thickness = default_locking_sweep();
    }
    if let Some(out) = &cli.out {
        config.out = Some(out.clone());
    }
    if cli.zero_load {
        config.zero_load = true;
    }
    Ok(config)
}

fn emit(config: &RunConfig, table: String) -> Result<(), DriverError> {
    match &config.out {
        Some(path) => std::fs::write(path, table)?,
        None => print!("{table}"),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), DriverError> {
    let config = build_config(cli)?;
    match config.experiment {
        Experiment::Convergence => {
            let table = run_convergence(&config)?;
            emit(&config, table.to_csv())
        }
        Experiment::Locking => {
            let table = run_locking(&config)?;
            emit(&config, table.to_csv())
        }
        Experiment::Single => {
            let result = run_single(&config)?;
            print!("{}", result.summary);
            if let Some(path) = &config.out {
                std::fs::write(path, &result.dump)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
