//! Driver behind the `wg-stokes` binary: convergence studies, probes and mesh checks.

pub mod config;
pub mod report;
pub mod vtk;

use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use wg_stokes::assembly::{assemble, solve_with};
use wg_stokes::verification::{
    compute_errors, n_for_level, probe_infsup, probe_norm_equivalence, InfSupResult, LevelResult, NormRatioStats,
    RateTable,
};
use wg_stokes::weakops::OperatorCache;
use wg_stokes::WgError;

use config::StudyConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Solver(#[from] WgError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// Files produced by a `solve` run.
#[derive(Debug)]
pub struct SolveOutput {
    pub table: RateTable,
    pub csv: String,
    pub markdown: String,
    pub summary: serde_json::Value,
}

/// Run the convergence study described by `cfg`, writing artifacts when `cfg.out` is set.
pub fn run_solve(cfg: &StudyConfig) -> Result<SolveOutput, CliError> {
    let started = Instant::now();
    let exact = cfg.solution();
    let family = cfg.family();
    let cache = OperatorCache::with_min_quadrature(cfg.order, cfg.quad_degree.unwrap_or(0));
    if let Some(out) = &cfg.out {
        std::fs::create_dir_all(out)?;
    }
    let mut levels = Vec::new();
    for level in cfg.level_list() {
        let n = n_for_level(level);
        let mesh = family.build(n)?;
        let t = Instant::now();
        let system = assemble(&mesh, cfg.order, &exact, &cache)?;
        let assemble_seconds = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let result = solve_with(&system, cfg.solver)?;
        let solve_seconds = t.elapsed().as_secs_f64();
        let errors = compute_errors(&mesh, &system, &result, &exact)?;
        if cfg.export_vtk {
            let out = cfg.out.as_ref().expect("validated: --export-vtk needs --out");
            std::fs::write(out.join(format!("solution_level{level}.vtk")), vtk::cell_averages(&mesh, &system, &result))?;
        }
        levels.push(LevelResult { level, n, errors, residual: result.residual, assemble_seconds, solve_seconds });
    }
    let table = RateTable { problem: exact.name.into(), family: family.tag().into(), k: cfg.order, levels };
    let rows = report::rows(&table);
    let csv = report::to_csv(&rows);
    let markdown = report::to_markdown(&rows);
    let summary = json!({
        "config": cfg,
        "rows": rows,
        "levels": table.levels,
        "finest_rates": table.finest_rates(),
        "total_seconds": started.elapsed().as_secs_f64(),
    });
    if let Some(out) = &cfg.out {
        std::fs::write(out.join("rates.csv"), &csv)?;
        std::fs::write(out.join("rates.md"), &markdown)?;
        write_json(&out.join("summary.json"), &summary)?;
    }
    Ok(SolveOutput { table, csv, markdown, summary })
}

#[derive(Debug, Serialize)]
pub struct ProbeLevel<T> {
    pub level: usize,
    #[serde(flatten)]
    pub result: T,
}

#[derive(Debug, Serialize)]
pub struct ProbeOutput {
    pub config: StudyConfig,
    pub norm_equivalence: Option<Vec<ProbeLevel<NormRatioStats>>>,
    pub inf_sup: Option<Vec<ProbeLevel<InfSupResult>>>,
}

/// Run the requested probes on every level of `cfg`.
pub fn run_probe(cfg: &StudyConfig) -> Result<ProbeOutput, CliError> {
    let family = cfg.family();
    let mut norm = cfg.norm_equivalence.then(Vec::new);
    let mut infsup = cfg.inf_sup.then(Vec::new);
    for level in cfg.level_list() {
        let mesh = family.build(n_for_level(level))?;
        if let Some(v) = norm.as_mut() {
            // Distinct deterministic stream per level.
            let result = probe_norm_equivalence(&mesh, cfg.order, cfg.samples, cfg.seed.wrapping_add(level as u64))?;
            v.push(ProbeLevel { level, result });
        }
        if let Some(v) = infsup.as_mut() {
            v.push(ProbeLevel { level, result: probe_infsup(&mesh, cfg.order)? });
        }
    }
    let out = ProbeOutput { config: cfg.clone(), norm_equivalence: norm, inf_sup: infsup };
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("probe.json"), &out)?;
    }
    Ok(out)
}

/// One line per checked mesh; `Ok(false)` when any mesh has violations.
pub fn run_mesh_check(cfg: &StudyConfig, input: Option<&Path>, mut log: impl std::io::Write) -> Result<bool, CliError> {
    let meshes = match input {
        Some(path) => {
            let file = std::io::BufReader::new(std::fs::File::open(path)?);
            vec![(None, wg_stokes::PolyMesh::read_text(file)?)]
        }
        None => cfg
            .level_list()
            .into_iter()
            .map(|l| Ok((Some(l), cfg.family().build(n_for_level(l))?)))
            .collect::<Result<Vec<_>, WgError>>()?,
    };
    let mut all_valid = true;
    for (level, mesh) in meshes {
        let report = mesh.validate();
        let label = level.map_or_else(|| "input".to_string(), |l| format!("level {l}"));
        writeln!(
            log,
            "{label}: {} cells, {} edges, {} vertices, h = {:.6e}: {}",
            mesh.cells.len(),
            mesh.edges.len(),
            mesh.vertices.len(),
            mesh.h,
            if report.is_valid() { "valid".to_string() } else { format!("{} violations", report.violations.len()) }
        )?;
        if !report.is_valid() {
            all_valid = false;
            write!(log, "{report}")?;
        }
        if let (Some(dir), Some(l)) = (&cfg.out, level) {
            std::fs::create_dir_all(dir)?;
            let file = std::fs::File::create(dir.join(format!("{}_level{l}.mesh", mesh.family.tag())))?;
            mesh.write_text(std::io::BufWriter::new(file))?;
        }
    }
    Ok(all_valid)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
