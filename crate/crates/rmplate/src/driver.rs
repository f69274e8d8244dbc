//! Experiment drivers: convergence studies, locking sweeps, single solves,
//! and their deterministic CSV emission.
//!
//! The command-line front end parses flags into a [`RunConfig`] and calls
//! the runners here; tests call them directly. All numbers are printed with
//! twelve significant digits, so a repeated run reproduces its output file
//! byte for byte.

use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::analysis::{
    exact_fields, l2_error_displacement, locking_ratio, scaled_shear_error, triple_norm_error,
    AnalysisError, ErrorReport, LevelErrors,
};
use crate::assembly::{assemble, AssemblyError, MaterialParams};
use crate::mapping::RotationVariant;
use crate::mesh::{
    generate_perturbed_mesh, generate_trapezoid_sequence, MeshError, QuadMesh,
};
use crate::solver::{solve_spd, SolverError};
use crate::spaces::{build_dof_map, DofMap};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl DriverError {
    /// Process exit code: 2 for configuration errors, 3 for solver
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            DriverError::Config(_) | DriverError::Mesh(_) => 2,
            DriverError::Solver(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Convergence,
    Locking,
    Single,
}

/// Mesh selection: a trapezoid refinement family, a jittered fixed mesh, or
/// an external mesh file.
#[derive(Clone, Debug, PartialEq)]
pub enum MeshSpec {
    Trapezoid { levels: usize, distortion: f64 },
    Perturbed { n: usize, jitter: f64, seed: u64 },
    File(PathBuf),
}

/// Full experiment configuration with the documented defaults.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub mesh: MeshSpec,
    pub e: f64,
    pub nu: f64,
    pub k_shear: f64,
    pub gamma: f64,
    /// Thicknesses; convergence uses each entry, locking sweeps them.
    pub thickness: Vec<f64>,
    pub variant: RotationVariant,
    pub out: Option<PathBuf>,
    /// Replace the manufactured load by zero (diagnostic).
    pub zero_load: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Convergence,
            mesh: MeshSpec::Trapezoid {
                levels: 5,
                distortion: 0.25,
            },
            e: 180e9,
            nu: 0.3,
            k_shear: 5.0 / 6.0,
            gamma: 10.0,
            thickness: vec![1e-2],
            variant: RotationVariant::Covariant,
            out: None,
            zero_load: false,
        }
    }
}

/// Default thickness sweep of the locking experiment: decades from 1e-2
/// down to 1e-8.
pub fn default_locking_sweep() -> Vec<f64> {
    (2..=8).map(|k| 10f64.powi(-k)).collect()
}

pub fn parse_experiment(s: &str) -> Result<Experiment, DriverError> {
    match s {
        "convergence" => Ok(Experiment::Convergence),
        "locking" => Ok(Experiment::Locking),
        "single" | "single-solve" => Ok(Experiment::Single),
        other => Err(DriverError::Config(format!("unknown experiment '{other}'"))),
    }
}

pub fn parse_variant(s: &str) -> Result<RotationVariant, DriverError> {
    match s {
        "covariant" => Ok(RotationVariant::Covariant),
        "parametric" | "bilinear" => Ok(RotationVariant::PlainParametric),
        other => Err(DriverError::Config(format!("unknown variant '{other}'"))),
    }
}

/// Parse `trapezoid:levels:distortion`, `perturbed:n:jitter:seed`, or
/// `file:path`.
pub fn parse_mesh_spec(s: &str) -> Result<MeshSpec, DriverError> {
    let mut parts = s.split(':');
    let kind = parts.next().unwrap_or("");
    let bad = |what: &str| DriverError::Config(format!("invalid mesh spec '{s}': {what}"));
    match kind {
        "trapezoid" => {
            let levels = parts
                .next()
                .ok_or_else(|| bad("missing levels"))?
                .parse()
                .map_err(|_| bad("levels"))?;
            let distortion = match parts.next() {
                Some(d) => d.parse().map_err(|_| bad("distortion"))?,
                None => 0.25,
            };
            Ok(MeshSpec::Trapezoid { levels, distortion })
        }
        "perturbed" => {
            let n = parts
                .next()
                .ok_or_else(|| bad("missing n"))?
                .parse()
                .map_err(|_| bad("n"))?;
            let jitter = match parts.next() {
                Some(j) => j.parse().map_err(|_| bad("jitter"))?,
                None => 0.2,
            };
            let seed = match parts.next() {
                Some(sd) => sd.parse().map_err(|_| bad("seed"))?,
                None => 42,
            };
            Ok(MeshSpec::Perturbed { n, jitter, seed })
        }
        "file" => {
            let path = parts.next().ok_or_else(|| bad("missing path"))?;
            Ok(MeshSpec::File(PathBuf::from(path)))
        }
        _ => Err(bad("unknown kind")),
    }
}

impl RunConfig {
    /// Apply one `key=value` assignment (config-file syntax).
    pub fn apply_key_value(&mut self, key: &str, value: &str) -> Result<(), DriverError> {
        let bad = |what: &str| DriverError::Config(format!("invalid value for {what}: '{value}'"));
        match key {
            "experiment" => self.experiment = parse_experiment(value)?,
            "mesh" => self.mesh = parse_mesh_spec(value)?,
            "E" | "e" => self.e = value.parse().map_err(|_| bad("E"))?,
            "nu" => self.nu = value.parse().map_err(|_| bad("nu"))?,
            "shear_correction" | "k" => self.k_shear = value.parse().map_err(|_| bad("k"))?,
            "gamma" => self.gamma = value.parse().map_err(|_| bad("gamma"))?,
            "thickness" | "t" => {
                self.thickness = value
                    .split(',')
                    .map(|t| t.parse().map_err(|_| bad("thickness")))
                    .collect::<Result<_, _>>()?;
            }
            "variant" => self.variant = parse_variant(value)?,
            "levels" => {
                if let MeshSpec::Trapezoid { distortion, .. } = self.mesh {
                    self.mesh = MeshSpec::Trapezoid {
                        levels: value.parse().map_err(|_| bad("levels"))?,
                        distortion,
                    };
                } else {
                    return Err(DriverError::Config(
                        "levels applies to trapezoid meshes".into(),
                    ));
                }
            }
            "distortion" => {
                if let MeshSpec::Trapezoid { levels, .. } = self.mesh {
                    self.mesh = MeshSpec::Trapezoid {
                        levels,
                        distortion: value.parse().map_err(|_| bad("distortion"))?,
                    };
                } else {
                    return Err(DriverError::Config(
                        "distortion applies to trapezoid meshes".into(),
                    ));
                }
            }
            "seed" => {
                if let MeshSpec::Perturbed { n, jitter, .. } = self.mesh {
                    self.mesh = MeshSpec::Perturbed {
                        n,
                        jitter,
                        seed: value.parse().map_err(|_| bad("seed"))?,
                    };
                } else {
                    return Err(DriverError::Config(
                        "seed applies to perturbed meshes".into(),
                    ));
                }
            }
            "out" => self.out = Some(PathBuf::from(value)),
            "zero_load" => self.zero_load = value.parse().map_err(|_| bad("zero_load"))?,
            other => {
                return Err(DriverError::Config(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }

    /// Parse a plain `key=value` config file; blank lines and `#` comments
    /// are ignored.
    pub fn apply_config_file(&mut self, text: &str) -> Result<(), DriverError> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                DriverError::Config(format!("line {}: expected key=value", lineno + 1))
            })?;
            self.apply_key_value(key.trim(), value.trim())?;
        }
        Ok(())
    }

    fn material(&self, t: f64) -> Result<MaterialParams, DriverError> {
        Ok(MaterialParams::new(self.e, self.nu, self.k_shear, t, self.gamma)?)
    }

    /// The single mesh referred to by the spec (finest level for a
    /// trapezoid family).
    pub fn single_mesh(&self) -> Result<QuadMesh, DriverError> {
        match &self.mesh {
            MeshSpec::Trapezoid { levels, distortion } => Ok(generate_trapezoid_sequence(
                *levels,
                *distortion,
            )?
            .pop()
            .expect("levels >= 1")),
            MeshSpec::Perturbed { n, jitter, seed } => {
                Ok(generate_perturbed_mesh(*n, *jitter, *seed)?)
            }
            MeshSpec::File(path) => {
                let text = std::fs::read_to_string(path)?;
                Ok(QuadMesh::from_text(&text)?)
            }
        }
    }
}

fn format_sig(x: f64) -> String {
    format!("{x:.11e}")
}

/// Outcome of a convergence run for one thickness.
#[derive(Clone, Debug)]
pub struct ConvergenceTable {
    pub t: f64,
    pub variant: RotationVariant,
    pub report: ErrorReport,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "level,n_elements,h,dofs,triple_norm_err,l2_err,shear_err,triple_rate,l2_rate,shear_rate\n",
        );
        let triple_rates = self.report.rates(|l| l.triple_norm).expect("monotone h");
        let l2_rates = self.report.rates(|l| l.l2_displacement).expect("monotone h");
        let shear_rates = self.report.rates(|l| l.scaled_shear).expect("monotone h");
        for (i, level) in self.report.levels.iter().enumerate() {
            let rate = |rates: &[f64]| {
                if i == 0 {
                    String::new()
                } else {
                    format_sig(rates[i - 1])
                }
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                level.level,
                level.n_elements,
                format_sig(level.h),
                level.dofs,
                format_sig(level.triple_norm),
                format_sig(level.l2_displacement),
                format_sig(level.scaled_shear),
                rate(&triple_rates),
                rate(&l2_rates),
                rate(&shear_rates),
            );
        }
        out
    }
}

/// Solve the manufactured problem on one mesh and measure every error.
pub fn solve_level(
    mesh: &QuadMesh,
    dofs: &DofMap,
    config: &RunConfig,
    t: f64,
    variant: RotationVariant,
    level: usize,
) -> Result<LevelErrors, DriverError> {
    let params = config.material(t)?;
    let exact = exact_fields(config.e, config.nu, t);
    let system = if config.zero_load {
        assemble(mesh, dofs, &params, variant, |_| 0.0)?
    } else {
        assemble(mesh, dofs, &params, variant, |p| exact.load(p))?
    };
    let solution = solve_spd(&system)?;
    let triple_norm = triple_norm_error(mesh, dofs, &params, variant, &solution, &exact)?;
    let l2 = l2_error_displacement(mesh, dofs, &solution, &exact);
    let (scaled_shear, shear_unscaled) =
        scaled_shear_error(mesh, dofs, &params, variant, &solution, &exact);
    let ratio = locking_ratio(dofs, &solution, &exact)?;
    Ok(LevelErrors {
        level,
        n_elements: mesh.n_elements(),
        h: mesh.h,
        dofs: system.dim,
        triple_norm,
        l2_displacement: l2,
        scaled_shear,
        shear_unscaled,
        locking_ratio: ratio,
    })
}

/// Convergence study over the trapezoid family at the first configured
/// thickness.
pub fn run_convergence(config: &RunConfig) -> Result<ConvergenceTable, DriverError> {
    let MeshSpec::Trapezoid { levels, distortion } = config.mesh else {
        return Err(DriverError::Config(
            "the convergence experiment requires a trapezoid mesh family".into(),
        ));
    };
    let t = *config
        .thickness
        .first()
        .ok_or_else(|| DriverError::Config("at least one thickness is required".into()))?;
    let meshes = generate_trapezoid_sequence(levels, distortion)?;
    let mut report = ErrorReport::default();
    for (i, mesh) in meshes.iter().enumerate() {
        let dofs = build_dof_map(mesh);
        report
            .levels
            .push(solve_level(mesh, &dofs, config, t, config.variant, i + 1)?);
    }
    Ok(ConvergenceTable {
        t,
        variant: config.variant,
        report,
    })
}

/// One row of a locking sweep.
#[derive(Clone, Debug)]
pub struct LockingRow {
    pub t: f64,
    pub variant: RotationVariant,
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct LockingTable {
    pub rows: Vec<LockingRow>,
}

impl LockingTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,variant,ratio\n");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{}",
                format_sig(row.t),
                row.variant.label(),
                format_sig(row.ratio)
            );
        }
        out
    }

    pub fn ratios(&self, variant: RotationVariant) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.variant == variant)
            .map(|r| (r.t, r.ratio))
            .collect()
    }
}

/// Locking-ratio sweep on a fixed mesh: for every configured thickness,
/// both rotation variants are solved and their ratios recorded.
pub fn run_locking(config: &RunConfig) -> Result<LockingTable, DriverError> {
    let mesh = config.single_mesh()?;
    let dofs = build_dof_map(&mesh);
    let mut rows = Vec::new();
    for &t in &config.thickness {
        for variant in [RotationVariant::Covariant, RotationVariant::PlainParametric] {
            let level = solve_level(&mesh, &dofs, config, t, variant, 0)?;
            rows.push(LockingRow {
                t,
                variant,
                ratio: level.locking_ratio,
            });
        }
    }
    Ok(LockingTable { rows })
}

/// Result of a single solve: a human-readable summary plus an optional
/// per-node displacement dump (`x y u` lines).
#[derive(Clone, Debug)]
pub struct SingleResult {
    pub summary: String,
    pub dump: String,
    pub errors: LevelErrors,
}

pub fn run_single(config: &RunConfig) -> Result<SingleResult, DriverError> {
    let mesh = config.single_mesh()?;
    let dofs = build_dof_map(&mesh);
    let t = *config
        .thickness
        .first()
        .ok_or_else(|| DriverError::Config("at least one thickness is required".into()))?;
    let errors = solve_level(&mesh, &dofs, config, t, config.variant, 0)?;

    // Recompute the solution for the dump; solves are deterministic.
    let params = config.material(t)?;
    let exact = exact_fields(config.e, config.nu, t);
    let system = if config.zero_load {
        assemble(&mesh, &dofs, &params, config.variant, |_| 0.0)?
    } else {
        assemble(&mesh, &dofs, &params, config.variant, |p| exact.load(p))?
    };
    let solution = solve_spd(&system)?;

    let mut summary = String::new();
    let _ = writeln!(summary, "mesh: {} elements, h = {}", mesh.n_elements(), format_sig(mesh.h));
    let _ = writeln!(
        summary,
        "dofs: {} displacement + {} rotation, {} after elimination",
        dofs.n_displacement, dofs.n_rotation, system.dim
    );
    let _ = writeln!(
        summary,
        "variant: {}, t = {}",
        config.variant.label(),
        format_sig(t)
    );
    let _ = writeln!(
        summary,
        "solver relative residual: {}",
        format_sig(solution.relative_residual)
    );
    let _ = writeln!(summary, "triple_norm_err: {}", format_sig(errors.triple_norm));
    let _ = writeln!(summary, "l2_err: {}", format_sig(errors.l2_displacement));
    let _ = writeln!(summary, "shear_err: {}", format_sig(errors.scaled_shear));
    let _ = writeln!(summary, "locking_ratio: {}", format_sig(errors.locking_ratio));

    let mut dump = String::new();
    for d in 0..dofs.n_displacement {
        let p = dofs.node_position(d);
        let _ = writeln!(
            dump,
            "{} {} {}",
            format_sig(p.x),
            format_sig(p.y),
            format_sig(solution.displacement[d])
        );
    }

    Ok(SingleResult {
        summary,
        dump,
        errors,
    })
}
