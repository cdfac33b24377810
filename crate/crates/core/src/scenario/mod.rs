//! Scenario definitions, the frame loop, per-frame metrics, and the
//! built-in experiment suite.

mod builtins;
mod compare;
mod config;

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{Rotation3, Vector3};
use thiserror::Error;

pub use builtins::{builtin_scenario, builtin_scenarios};
pub use compare::{compare_runs, parse_metrics_csv, ColumnDelta, CompareReport};
pub use config::{parse_scenario, write_scenario};

use crate::constraints::{constraint_value, ZoneError, ZoneSet};
use crate::energy::{EnergyError, EpidermisParams, MaterialParams};
use crate::mesh::{
    deformation_gradient, export_surface, import_mesh, make_grid, make_two_tet, MeshError, TetMesh,
};
use crate::solver::{
    solve_static, step_implicit_euler, BoundaryConditions, Problem, SimState, SolverConfig,
    SolverError,
};
use crate::zoning::{
    global_zone, k_ring_zones, per_element_zones, zones_from_surface_weights, SurfaceWeights,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Zone(#[from] ZoneError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("frame {frame}: {source}")]
    Solver { frame: u32, source: SolverError },
    #[error("frame {frame}: solver did not converge ({note})")]
    NonConvergence { frame: u32, note: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ScenarioError {
    /// True for failures of the solve itself (as opposed to configuration,
    /// parsing, or I/O problems).
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            ScenarioError::Solver { .. } | ScenarioError::NonConvergence { .. }
        )
    }
}

/// Mesh source of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshSpec {
    TwoTet,
    Grid {
        nx: usize,
        ny: usize,
        nz: usize,
        lx: f64,
        ly: f64,
        lz: f64,
    },
    File(PathBuf),
}

/// Zone construction of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum ZoneSpec {
    None,
    Global,
    KRing(usize),
    PerElement,
    Weights { path: PathBuf, threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// A sequence of static solves; the script time spans `[0, duration]`.
    Static,
    /// Implicit-Euler steps of size `dt`; the script time is simulation
    /// time.
    Dynamic,
}

/// Named vertex selection in the reference configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Selector {
    /// Axis-aligned box (inclusive) in reference coordinates.
    Box { min: [f64; 3], max: [f64; 3] },
    /// Explicit vertex indices.
    Indices(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexSet {
    pub name: String,
    pub selector: Selector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    /// Keys are offsets added to the reference position.
    Translate,
    /// Keys are per-axis scale factors about the origin.
    Scale,
    /// Keys are rotation vectors (axis times angle, radians) about the
    /// origin.
    Rotate,
}

/// Piecewise-linear keyframe table `t -> (x, y, z)` driving one vertex set.
#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    pub set: String,
    pub motion: Motion,
    pub origin: Vector3<f64>,
    pub keys: Vec<(f64, [f64; 3])>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputPlan {
    /// Metrics CSV path, resolved against the output directory.
    pub csv: PathBuf,
    /// Export the deformed surface every N frames (0 disables).
    pub surface_every: u32,
}

/// A complete, runnable experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub mesh: MeshSpec,
    pub material: MaterialParams,
    pub epidermis: Option<EpidermisParams>,
    pub zones: ZoneSpec,
    pub mode: RunMode,
    pub frames: u32,
    /// Script time reached at the last frame of a static sequence.
    pub duration: f64,
    pub solver: SolverConfig,
    pub sets: Vec<VertexSet>,
    /// Names of sets held fixed at their reference positions.
    pub fixed: Vec<String>,
    pub scripts: Vec<Script>,
    pub output: OutputPlan,
    /// Reserved for randomized property-test drivers; runs are
    /// deterministic and ignore it.
    pub seed: Option<u64>,
}

/// One CSV row of per-frame diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMetrics {
    pub frame: u32,
    pub total_volume: f64,
    pub volume_error_pct: f64,
    pub elastic_energy: f64,
    pub kinetic_energy: f64,
    pub max_constraint_residual: f64,
    pub min_element_j: f64,
    pub newton_iters: u32,
    pub outer_iters: u32,
    pub wall_ms: f64,
}

pub const METRICS_HEADER: &str = "frame,total_volume,volume_error_pct,elastic_energy,\
kinetic_energy,max_constraint_residual,min_element_J,newton_iters,outer_iters,wall_ms";

impl FrameMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.frame,
            self.total_volume,
            self.volume_error_pct,
            self.elastic_energy,
            self.kinetic_energy,
            self.max_constraint_residual,
            self.min_element_j,
            self.newton_iters,
            self.outer_iters,
            self.wall_ms
        )
    }
}

/// Command-line overrides applied on top of a scenario.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub frames: Option<u32>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Result of a scenario run, with the metric rows that were written to CSV
/// and the final state for further inspection.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub name: String,
    pub metrics: Vec<FrameMetrics>,
    pub csv_path: PathBuf,
    pub final_state: SimState,
}

/// Loads a scenario config and runs it; `base_dir` for relative input
/// paths is the config file's directory.
pub fn run_scenario(
    config_path: impl AsRef<Path>,
    overrides: &RunOverrides,
) -> Result<RunSummary, ScenarioError> {
    let path = config_path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|err| ScenarioError::Config {
        path: path.display().to_string(),
        line: 0,
        message: format!("cannot read config: {err}"),
    })?;
    let mut scenario = parse_scenario(&text).map_err(|(line, message)| ScenarioError::Config {
        path: path.display().to_string(),
        line,
        message,
    })?;
    if let Some(dir) = path.parent() {
        scenario.resolve_input_paths(dir);
    }
    run(&scenario, overrides)
}

impl Scenario {
    /// Resolves relative mesh/weight input paths against a base directory.
    pub fn resolve_input_paths(&mut self, base: &Path) {
        if let MeshSpec::File(p) = &mut self.mesh {
            if p.is_relative() {
                *p = base.join(&p);
            }
        }
        if let ZoneSpec::Weights { path, .. } = &mut self.zones {
            if path.is_relative() {
                *path = base.join(&path);
            }
        }
    }

    pub fn build_mesh(&self) -> Result<TetMesh, MeshError> {
        match &self.mesh {
            MeshSpec::TwoTet => Ok(make_two_tet()),
            MeshSpec::Grid {
                nx,
                ny,
                nz,
                lx,
                ly,
                lz,
            } => make_grid(*nx, *ny, *nz, *lx, *ly, *lz),
            MeshSpec::File(path) => import_mesh(path),
        }
    }

    pub fn build_zones(&self, mesh: &TetMesh) -> Result<ZoneSet, ZoneError> {
        match &self.zones {
            ZoneSpec::None => Ok(ZoneSet::empty()),
            ZoneSpec::Global => Ok(global_zone(mesh)),
            ZoneSpec::KRing(k) => k_ring_zones(mesh, *k),
            ZoneSpec::PerElement => Ok(per_element_zones(mesh)),
            ZoneSpec::Weights { path, threshold } => {
                let weights = SurfaceWeights::read(path)?;
                zones_from_surface_weights(mesh, &weights, *threshold)
            }
        }
    }

    fn resolve_set(&self, mesh: &TetMesh, name: &str) -> Result<Vec<usize>, ScenarioError> {
        let set = self
            .sets
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| ScenarioError::Invalid(format!("unknown vertex set \"{name}\"")))?;
        let vertices = match &set.selector {
            Selector::Box { min, max } => (0..mesh.vertex_count())
                .filter(|&v| {
                    let p = mesh.vertices()[v];
                    p.x >= min[0]
                        && p.x <= max[0]
                        && p.y >= min[1]
                        && p.y <= max[1]
                        && p.z >= min[2]
                        && p.z <= max[2]
                })
                .collect::<Vec<_>>(),
            Selector::Indices(idx) => {
                for &v in idx {
                    if v >= mesh.vertex_count() {
                        return Err(ScenarioError::Invalid(format!(
                            "set \"{name}\" references vertex {v} out of range"
                        )));
                    }
                }
                idx.clone()
            }
        };
        if vertices.is_empty() {
            return Err(ScenarioError::Invalid(format!(
                "vertex set \"{name}\" selected no vertices"
            )));
        }
        Ok(vertices)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if self.frames == 0 {
            return Err(ScenarioError::Invalid("frames must be at least 1".into()));
        }
        for script in &self.scripts {
            if script.keys.is_empty() {
                return Err(ScenarioError::Invalid(format!(
                    "script on set \"{}\" has no keyframes",
                    script.set
                )));
            }
            for pair in script.keys.windows(2) {
                if pair[1].0 <= pair[0].0 {
                    return Err(ScenarioError::Invalid(format!(
                        "script on set \"{}\": keyframe times must be strictly increasing",
                        script.set
                    )));
                }
            }
        }
        Ok(())
    }
}

fn eval_keys(keys: &[(f64, [f64; 3])], t: f64) -> [f64; 3] {
    debug_assert!(!keys.is_empty());
    if t <= keys[0].0 {
        return keys[0].1;
    }
    if t >= keys[keys.len() - 1].0 {
        return keys[keys.len() - 1].1;
    }
    for pair in keys.windows(2) {
        let (t0, v0) = pair[0];
        let (t1, v1) = pair[1];
        if t <= t1 {
            let s = (t - t0) / (t1 - t0);
            return [
                v0[0] + s * (v1[0] - v0[0]),
                v0[1] + s * (v1[1] - v0[1]),
                v0[2] + s * (v1[2] - v0[2]),
            ];
        }
    }
    keys[keys.len() - 1].1
}

fn motion_target(
    motion: Motion,
    origin: &Vector3<f64>,
    value: [f64; 3],
    reference: &Vector3<f64>,
) -> Vector3<f64> {
    let v = Vector3::new(value[0], value[1], value[2]);
    match motion {
        Motion::Translate => reference + v,
        Motion::Scale => origin + (reference - origin).component_mul(&v),
        Motion::Rotate => origin + Rotation3::new(v) * (reference - origin),
    }
}

/// Runs a scenario: one constrained solve (or implicit-Euler step) per
/// frame, one metrics row per frame, optional surface exports, atomic CSV
/// replacement. On solver failure the rows collected so far are still
/// flushed before the error is returned.
pub fn run(scenario: &Scenario, overrides: &RunOverrides) -> Result<RunSummary, ScenarioError> {
    scenario.validate()?;
    let frames = overrides.frames.unwrap_or(scenario.frames);
    let out_dir = overrides
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("."));

    let mesh = scenario.build_mesh()?;
    let zones = scenario.build_zones(&mesh)?;
    let config = scenario.solver.clone();

    let mut fixed_vertices = Vec::new();
    for name in &scenario.fixed {
        fixed_vertices.extend(scenario.resolve_set(&mesh, name)?);
    }
    let mut scripted: Vec<(Vec<usize>, &Script)> = Vec::new();
    for script in &scenario.scripts {
        scripted.push((scenario.resolve_set(&mesh, &script.set)?, script));
    }

    std::fs::create_dir_all(&out_dir)?;
    let csv_path = out_dir.join(&scenario.output.csv);
    let surface_stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| scenario.name.clone());

    let masses_per_dof = crate::solver::lumped_masses_per_dof(&mesh, config.mass_density);
    let mut state = SimState::rest(&mesh, &zones);
    let mut metrics: Vec<FrameMetrics> = Vec::with_capacity(frames as usize);

    let mut run_frames = || -> Result<(), ScenarioError> {
        for frame in 1..=frames {
            let script_time = match scenario.mode {
                RunMode::Static => scenario.duration * frame as f64 / frames as f64,
                RunMode::Dynamic => frame as f64 * config.dt,
            };

            let mut bc = BoundaryConditions::with_fixed(fixed_vertices.iter().copied());
            for (vertices, script) in &scripted {
                let value = eval_keys(&script.keys, script_time);
                for &v in vertices {
                    bc.script(
                        v,
                        motion_target(script.motion, &script.origin, value, &mesh.vertices()[v]),
                    );
                }
            }

            let problem = Problem {
                mesh: &mesh,
                materials: &scenario.material,
                epidermis: scenario.epidermis.as_ref(),
                zones: &zones,
                bc: &bc,
                config: &config,
            };

            let clock = Instant::now();
            let report = match scenario.mode {
                RunMode::Static => solve_static(&problem, &state),
                RunMode::Dynamic => step_implicit_euler(&problem, &state),
            }
            .map_err(|source| ScenarioError::Solver { frame, source })?;
            let wall_ms = clock.elapsed().as_secs_f64() * 1e3;

            if !report.converged {
                return Err(ScenarioError::NonConvergence {
                    frame,
                    note: report.note.unwrap_or_default(),
                });
            }
            state = report.state;
            if scenario.mode == RunMode::Static {
                state.time = script_time;
            }

            metrics.push(frame_metrics(
                frame,
                &mesh,
                &zones,
                scenario,
                &state,
                &masses_per_dof,
                report.newton_iters,
                report.outer_iters,
                wall_ms,
            )?);

            if scenario.output.surface_every > 0 && frame % scenario.output.surface_every == 0 {
                let obj = out_dir.join(format!("{surface_stem}_{frame:04}.obj"));
                export_surface(&mesh, &state.x, obj)?;
            }
        }
        Ok(())
    };

    let outcome = run_frames();
    if !metrics.is_empty() || outcome.is_ok() {
        write_metrics_atomic(&csv_path, &metrics)?;
    }
    outcome?;

    Ok(RunSummary {
        name: scenario.name.clone(),
        metrics,
        csv_path,
        final_state: state,
    })
}

#[allow(clippy::too_many_arguments)]
fn frame_metrics(
    frame: u32,
    mesh: &TetMesh,
    zones: &ZoneSet,
    scenario: &Scenario,
    state: &SimState,
    masses_per_dof: &[f64],
    newton_iters: u32,
    outer_iters: u32,
    wall_ms: f64,
) -> Result<FrameMetrics, ScenarioError> {
    let total_volume = mesh.total_volume(&state.x);
    let rest = mesh.total_rest_volume();
    let report = crate::energy::total_energy(
        mesh,
        &state.x,
        &scenario.material,
        scenario.epidermis.as_ref(),
    )?;
    let max_constraint_residual = zones
        .zones()
        .iter()
        .map(|z| (constraint_value(mesh, &state.x, z) / z.rest_volume).abs())
        .fold(0.0, f64::max);
    let min_element_j = (0..mesh.tet_count())
        .map(|e| deformation_gradient(mesh, &state.x, e).determinant())
        .fold(f64::INFINITY, f64::min);
    Ok(FrameMetrics {
        frame,
        total_volume,
        volume_error_pct: 100.0 * (total_volume - rest) / rest,
        elastic_energy: report.total,
        kinetic_energy: state.kinetic_energy(masses_per_dof),
        max_constraint_residual,
        min_element_j,
        newton_iters,
        outer_iters,
        wall_ms,
    })
}

/// Writes the metrics CSV via a temp file and rename, so re-runs replace
/// outputs atomically.
fn write_metrics_atomic(path: &Path, metrics: &[FrameMetrics]) -> Result<(), std::io::Error> {
    let mut text = String::from(METRICS_HEADER);
    text.push('\n');
    for row in metrics {
        text.push_str(&row.csv_row());
        text.push('\n');
    }
    let tmp = path.with_extension("csv.tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyframe_interpolation() {
        let keys = vec![(0.0, [0.0, 0.0, 0.0]), (1.0, [2.0, -4.0, 6.0])];
        assert_eq!(eval_keys(&keys, -1.0), [0.0, 0.0, 0.0]);
        assert_eq!(eval_keys(&keys, 0.5), [1.0, -2.0, 3.0]);
        assert_eq!(eval_keys(&keys, 2.0), [2.0, -4.0, 6.0]);
    }

    #[test]
    fn motion_targets() {
        let reference = Vector3::new(1.0, 2.0, 3.0);
        let origin = Vector3::new(0.0, 0.0, 1.0);
        assert_eq!(
            motion_target(Motion::Translate, &origin, [0.5, 0.0, -1.0], &reference),
            Vector3::new(1.5, 2.0, 2.0)
        );
        assert_eq!(
            motion_target(Motion::Scale, &origin, [1.0, 1.0, 0.0], &reference),
            Vector3::new(1.0, 2.0, 1.0)
        );
        let rotated = motion_target(
            Motion::Rotate,
            &origin,
            [0.0, 0.0, std::f64::consts::FRAC_PI_2],
            &reference,
        );
        assert!((rotated - Vector3::new(-2.0, 1.0, 3.0)).norm() < 1e-12);
    }

    #[test]
    fn validation_catches_bad_keys() {
        let mut scenario = builtin_scenario("two_tet_cnh").unwrap();
        scenario.scripts[0].keys = vec![(0.0, [1.0; 3]), (0.0, [0.0; 3])];
        assert!(matches!(
            run(&scenario, &RunOverrides::default()),
            Err(ScenarioError::Invalid(_))
        ));
    }
}
