//! Command-line and config-file options.
//!
//! Every option can come from a TOML file passed with `--config`; flags given on
//! the command line take precedence over the file.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use wg_stokes::{ManufacturedSolution, MeshFamily, SolverKind};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "wg-stokes", version, about = "Stabilizer-free weak Galerkin Stokes solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a convergence study and write rate tables.
    Solve(SolveArgs),
    /// Empirical norm-equivalence and inf-sup probes.
    Probe(ProbeArgs),
    /// Build meshes (or read one) and check their invariants.
    MeshCheck(MeshCheckArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Mesh family: tri | nonconvex-l.
    #[arg(long)]
    pub mesh: Option<String>,
    /// Velocity degree k (1, 2 or 3).
    #[arg(long)]
    pub order: Option<usize>,
    /// Inclusive level range `A..B`; level i has 2^i subdivisions per side.
    #[arg(long)]
    pub levels: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file with defaults for any of these options.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Problem: s1 | patch-k1 | patch-k2.
    #[arg(long)]
    pub problem: Option<String>,
    /// Write one VTK file per level with cell averages of u_0 and p_h.
    #[arg(long)]
    pub export_vtk: bool,
    /// Minimum cell quadrature degree.
    #[arg(long)]
    pub quad_degree: Option<usize>,
    /// Linear solver: auto | direct | minres.
    #[arg(long)]
    pub solver: Option<String>,
    /// Accepted for symmetry with `probe`; the solve itself is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub norm_equivalence: bool,
    #[arg(long)]
    pub inf_sup: bool,
    /// Random fields per level for the norm-equivalence probe.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct MeshCheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Check a mesh file instead of generated meshes.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub problem: Option<String>,
    pub mesh: Option<String>,
    pub order: Option<usize>,
    pub levels: Option<String>,
    pub out: Option<PathBuf>,
    pub export_vtk: Option<bool>,
    pub seed: Option<u64>,
    pub quad_degree: Option<usize>,
    pub solver: Option<String>,
    pub samples: Option<usize>,
    pub norm_equivalence: Option<bool>,
    pub inf_sup: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    fn for_args(common: &CommonArgs) -> Result<Self, CliError> {
        common.config.as_deref().map_or(Ok(Self::default()), Self::load)
    }
}

/// Fully resolved study configuration; recorded in `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct StudyConfig {
    pub problem: String,
    pub mesh: String,
    pub order: usize,
    pub levels: [usize; 2],
    pub out: Option<PathBuf>,
    pub export_vtk: bool,
    pub seed: u64,
    pub quad_degree: Option<usize>,
    pub solver: SolverKind,
    pub samples: usize,
    pub norm_equivalence: bool,
    pub inf_sup: bool,
}

pub const DEFAULT_SEED: u64 = 20240607;
pub const DEFAULT_SAMPLES: usize = 24;

impl StudyConfig {
    pub fn family(&self) -> MeshFamily {
        self.mesh.parse().expect("validated on construction")
    }

    pub fn level_list(&self) -> Vec<usize> {
        (self.levels[0]..=self.levels[1]).collect()
    }

    pub fn solution(&self) -> ManufacturedSolution {
        ManufacturedSolution::by_name(&self.problem).expect("validated on construction")
    }

    fn resolve(common: &CommonArgs, file: &FileConfig, needs_order: bool) -> Result<Self, CliError> {
        let mesh = common.mesh.clone().or_else(|| file.mesh.clone()).unwrap_or_else(|| "tri".into());
        match mesh.parse::<MeshFamily>() {
            Ok(MeshFamily::Custom) | Err(_) => {
                return Err(CliError::Usage(format!("unknown mesh family {mesh:?} (expected tri or nonconvex-l)")))
            }
            Ok(_) => {}
        }
        let order = common.order.or(file.order).unwrap_or(1);
        if needs_order && !(1..=3).contains(&order) {
            return Err(CliError::Usage(format!("order must be 1, 2 or 3, got {order}")));
        }
        let levels = parse_levels(common.levels.as_deref().or(file.levels.as_deref()).unwrap_or("2..4"))?;
        Ok(StudyConfig {
            problem: String::new(),
            mesh,
            order,
            levels,
            out: common.out.clone().or_else(|| file.out.clone()),
            export_vtk: false,
            seed: file.seed.unwrap_or(DEFAULT_SEED),
            quad_degree: file.quad_degree,
            solver: SolverKind::Auto,
            samples: file.samples.unwrap_or(DEFAULT_SAMPLES),
            norm_equivalence: false,
            inf_sup: false,
        })
    }

    pub fn for_solve(args: &SolveArgs) -> Result<Self, CliError> {
        let file = FileConfig::for_args(&args.common)?;
        let mut cfg = Self::resolve(&args.common, &file, true)?;
        cfg.problem = args.problem.clone().or_else(|| file.problem.clone()).unwrap_or_else(|| "s1".into());
        if cfg.problem == "custom" {
            return Err(CliError::Usage("problem 'custom' has no closed form here; use the library API".into()));
        }
        if ManufacturedSolution::by_name(&cfg.problem).is_none() {
            return Err(CliError::Usage(format!("unknown problem {:?} (expected s1, patch-k1 or patch-k2)", cfg.problem)));
        }
        cfg.export_vtk = args.export_vtk || file.export_vtk.unwrap_or(false);
        cfg.quad_degree = args.quad_degree.or(file.quad_degree);
        if let Some(s) = args.solver.as_deref().or(file.solver.as_deref()) {
            cfg.solver = s.parse().map_err(|e: wg_stokes::WgError| CliError::Usage(e.to_string()))?;
        }
        cfg.seed = args.seed.unwrap_or(cfg.seed);
        if cfg.export_vtk && cfg.out.is_none() {
            return Err(CliError::Usage("--export-vtk needs --out".into()));
        }
        Ok(cfg)
    }

    pub fn for_probe(args: &ProbeArgs) -> Result<Self, CliError> {
        let file = FileConfig::for_args(&args.common)?;
        let mut cfg = Self::resolve(&args.common, &file, true)?;
        cfg.problem = "none".into();
        cfg.norm_equivalence = args.norm_equivalence || file.norm_equivalence.unwrap_or(false);
        cfg.inf_sup = args.inf_sup || file.inf_sup.unwrap_or(false);
        if !cfg.norm_equivalence && !cfg.inf_sup {
            return Err(CliError::Usage("probe needs --norm-equivalence and/or --inf-sup".into()));
        }
        cfg.samples = args.samples.unwrap_or(cfg.samples);
        if cfg.samples < 10 {
            return Err(CliError::Usage("--samples must be at least 10".into()));
        }
        cfg.seed = args.seed.unwrap_or(cfg.seed);
        Ok(cfg)
    }

    pub fn for_mesh_check(args: &MeshCheckArgs) -> Result<Self, CliError> {
        let file = FileConfig::for_args(&args.common)?;
        let mut cfg = Self::resolve(&args.common, &file, false)?;
        cfg.problem = "none".into();
        Ok(cfg)
    }
}

/// Parse an inclusive range `A..B` (or a single level `A`).
pub fn parse_levels(s: &str) -> Result<[usize; 2], CliError> {
    let bad = || CliError::Usage(format!("invalid level range {s:?} (expected A..B with A <= B <= 10)"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a.trim(), b.trim().trim_start_matches('=')),
        None => (s.trim(), s.trim()),
    };
    let a: usize = a.parse().map_err(|_| bad())?;
    let b: usize = b.parse().map_err(|_| bad())?;
    if a > b || b > 10 {
        return Err(bad());
    }
    Ok([a, b])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve_args(argv: &[&str]) -> SolveArgs {
        let cli = Cli::try_parse_from(["wg-stokes", "solve"].iter().chain(argv)).unwrap();
        match cli.command {
            Command::Solve(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn level_ranges() {
        assert_eq!(parse_levels("3..6").unwrap(), [3, 6]);
        assert_eq!(parse_levels("2..=2").unwrap(), [2, 2]);
        assert_eq!(parse_levels("4").unwrap(), [4, 4]);
        assert!(parse_levels("5..3").is_err());
        assert!(parse_levels("a..b").is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("study.toml");
        std::fs::write(&path, "problem = \"patch-k2\"\nmesh = \"nonconvex-l\"\norder = 2\nlevels = \"1..2\"\n").unwrap();
        let args = solve_args(&["--config", path.to_str().unwrap(), "--order", "3"]);
        let cfg = StudyConfig::for_solve(&args).unwrap();
        assert_eq!(cfg.problem, "patch-k2");
        assert_eq!(cfg.mesh, "nonconvex-l");
        assert_eq!(cfg.order, 3);
        assert_eq!(cfg.levels, [1, 2]);
        assert_eq!(cfg.solver, SolverKind::Auto);
    }

    #[test]
    fn solver_choice() {
        assert_eq!(StudyConfig::for_solve(&solve_args(&["--solver", "minres"])).unwrap().solver, SolverKind::Minres);
        assert!(matches!(StudyConfig::for_solve(&solve_args(&["--solver", "cg"])), Err(CliError::Usage(_))));
    }

    #[test]
    fn unknown_config_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "ordr = 2\n").unwrap();
        let args = solve_args(&["--config", path.to_str().unwrap()]);
        assert!(matches!(StudyConfig::for_solve(&args), Err(CliError::Usage(_))));
    }

    #[test]
    fn rejects_unsupported_order_and_problem() {
        assert!(StudyConfig::for_solve(&solve_args(&["--order", "4"])).is_err());
        assert!(StudyConfig::for_solve(&solve_args(&["--problem", "s2"])).is_err());
        assert!(StudyConfig::for_solve(&solve_args(&["--mesh", "custom"])).is_err());
    }
}
