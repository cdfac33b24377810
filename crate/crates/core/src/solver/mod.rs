//! Equality-constrained statics and implicit-Euler dynamics.
//!
//! Statics minimize the total potential subject to zonal volume constraints
//! with an augmented-Lagrangian outer loop (multiplier update
//! `p <- p + mu_al c`) around a Newton inner loop with per-element
//! PSD-projected Hessians and Armijo backtracking. Dynamics minimize the
//! implicit-Euler incremental potential with the same machinery. Dirichlet
//! rows are eliminated from the system, never penalized.

mod newton;

use nalgebra::Vector3;
use thiserror::Error;

use crate::constraints::{constraint_jacobian, constraint_value, ZoneSet};
use crate::energy::{penalty_du, EnergyError, EpidermisParams, MaterialParams};
use crate::mesh::{deformation_gradient, Displacement, TetMesh};

pub use newton::SolveReport;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solver produced non-finite values: {context}")]
    NumericalBreakdown { context: String },
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("invalid boundary conditions: {0}")]
    InvalidBc(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Solver and time-integration parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// KKT stationarity tolerance factor; the absolute tolerance is
    /// `grad_tol * (mu * V_total)^(2/3)`, which makes the threshold
    /// insensitive to the problem's stiffness and size scales.
    pub grad_tol: f64,
    /// Per-zone feasibility tolerance, relative to the zone rest volume.
    pub constraint_tol: f64,
    /// Newton iteration budget per augmented-Lagrangian outer iteration.
    pub max_newton: u32,
    /// Outer (multiplier update) iteration budget.
    pub max_outer: u32,
    /// Initial augmented-Lagrangian penalty factor. The per-zone penalty is
    /// `penalty_mu0 * max(10 lambda, mu) / V_zone^0`: an order of magnitude
    /// stiffer than the material's own volume penalty regardless of zone
    /// size, and still positive at lambda = 0.
    pub penalty_mu0: f64,
    /// Penalty growth applied when feasibility stalls.
    pub penalty_growth: f64,
    /// Backtracking factor of the line search, in (0, 1).
    pub ls_backtrack: f64,
    /// Armijo sufficient-decrease constant.
    pub ls_armijo: f64,
    /// Time step for implicit Euler (s).
    pub dt: f64,
    /// Mass density for lumped masses (kg/m^3).
    pub mass_density: f64,
    /// Gravitational acceleration (m/s^2).
    pub gravity: Vector3<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grad_tol: 1e-6,
            constraint_tol: 1e-8,
            max_newton: 100,
            max_outer: 30,
            penalty_mu0: 1.0,
            penalty_growth: 10.0,
            ls_backtrack: 0.5,
            ls_armijo: 1e-4,
            dt: 8e-3,
            mass_density: 1000.0,
            gravity: Vector3::new(0.0, 0.0, -9.81),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = [
            (self.grad_tol, "grad_tol"),
            (self.constraint_tol, "constraint_tol"),
            (self.penalty_mu0, "penalty_mu0"),
            (self.dt, "dt"),
            (self.mass_density, "mass_density"),
        ];
        for (value, name) in positive {
            if !(value > 0.0) {
                return Err(SolverError::InvalidConfig(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if !(self.ls_backtrack > 0.0 && self.ls_backtrack < 1.0) {
            return Err(SolverError::InvalidConfig(format!(
                "ls_backtrack must lie in (0, 1), got {}",
                self.ls_backtrack
            )));
        }
        if !(self.ls_armijo > 0.0 && self.ls_armijo < 0.5) {
            return Err(SolverError::InvalidConfig(format!(
                "ls_armijo must lie in (0, 0.5), got {}",
                self.ls_armijo
            )));
        }
        if self.penalty_growth < 1.0 {
            return Err(SolverError::InvalidConfig(format!(
                "penalty_growth must be at least 1, got {}",
                self.penalty_growth
            )));
        }
        Ok(())
    }

    /// Absolute stationarity tolerance for a given problem scale.
    pub fn grad_tol_abs(&self, materials: &MaterialParams, mesh: &TetMesh) -> f64 {
        self.grad_tol * (materials.mu * mesh.total_rest_volume()).powf(2.0 / 3.0)
    }
}

/// Dirichlet data for one solve: vertices held at their reference position
/// and vertices scripted to explicit targets. The two sets must be
/// disjoint.
#[derive(Debug, Clone, Default)]
pub struct BoundaryConditions {
    fixed: Vec<usize>,
    scripted: Vec<(usize, Vector3<f64>)>,
}

impl BoundaryConditions {
    pub fn free() -> Self {
        BoundaryConditions::default()
    }

    pub fn with_fixed(vertices: impl IntoIterator<Item = usize>) -> Self {
        BoundaryConditions {
            fixed: vertices.into_iter().collect(),
            scripted: Vec::new(),
        }
    }

    pub fn fix(&mut self, vertex: usize) {
        self.fixed.push(vertex);
    }

    /// Prescribes an explicit target position for a vertex.
    pub fn script(&mut self, vertex: usize, target: Vector3<f64>) {
        self.scripted.push((vertex, target));
    }

    pub fn fixed(&self) -> &[usize] {
        &self.fixed
    }

    pub fn scripted(&self) -> &[(usize, Vector3<f64>)] {
        &self.scripted
    }

    pub fn validate(&self, vertex_count: usize) -> Result<(), SolverError> {
        let mut seen = vec![false; vertex_count];
        let all = self
            .fixed
            .iter()
            .copied()
            .chain(self.scripted.iter().map(|&(v, _)| v));
        for v in all {
            if v >= vertex_count {
                return Err(SolverError::InvalidBc(format!(
                    "vertex {v} out of range ({vertex_count} vertices)"
                )));
            }
            if seen[v] {
                return Err(SolverError::InvalidBc(format!(
                    "vertex {v} prescribed more than once"
                )));
            }
            seen[v] = true;
        }
        Ok(())
    }

    /// All prescribed `(vertex, target)` pairs; fixed vertices target their
    /// reference position.
    pub(crate) fn prescribed(&self, mesh: &TetMesh) -> Vec<(usize, Vector3<f64>)> {
        let mut out: Vec<(usize, Vector3<f64>)> = self
            .fixed
            .iter()
            .map(|&v| (v, mesh.vertices()[v]))
            .collect();
        out.extend(self.scripted.iter().copied());
        out
    }
}

/// Positions, velocities, per-zone multipliers, and simulation time.
#[derive(Debug, Clone)]
pub struct SimState {
    pub x: Displacement,
    /// Stacked velocity vector (m/s), same layout as `x`.
    pub v: Vec<f64>,
    /// Lagrange multipliers, one per zone (Pa).
    pub multipliers: Vec<f64>,
    pub time: f64,
}

impl SimState {
    /// Rest state: reference positions, zero velocity, zero multipliers.
    pub fn rest(mesh: &TetMesh, zones: &ZoneSet) -> Self {
        SimState {
            x: mesh.reference_positions(),
            v: vec![0.0; 3 * mesh.vertex_count()],
            multipliers: vec![0.0; zones.len()],
            time: 0.0,
        }
    }

    pub fn kinetic_energy(&self, masses_per_dof: &[f64]) -> f64 {
        0.5 * self
            .v
            .iter()
            .zip(masses_per_dof)
            .map(|(v, m)| m * v * v)
            .sum::<f64>()
    }
}

/// A constrained elasticity problem: everything except the evolving state.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub mesh: &'a TetMesh,
    pub materials: &'a MaterialParams,
    pub epidermis: Option<&'a EpidermisParams>,
    pub zones: &'a ZoneSet,
    pub bc: &'a BoundaryConditions,
    pub config: &'a SolverConfig,
}

impl Problem<'_> {
    fn validate(&self) -> Result<(), SolverError> {
        self.config.validate()?;
        self.materials.validate()?;
        if let Some(epi) = self.epidermis {
            epi.validate()?;
        }
        self.bc.validate(self.mesh.vertex_count())
    }

    /// Lumped vertex masses: a quarter of each incident tet's rest mass.
    pub fn lumped_masses(&self) -> Vec<f64> {
        lumped_masses(self.mesh, self.config.mass_density)
    }

    /// Lumped masses expanded to one entry per degree of freedom.
    pub fn lumped_masses_per_dof(&self) -> Vec<f64> {
        let masses = self.lumped_masses();
        let mut out = Vec::with_capacity(3 * masses.len());
        for m in masses {
            out.extend_from_slice(&[m, m, m]);
        }
        out
    }
}

pub(crate) fn lumped_masses(mesh: &TetMesh, density: f64) -> Vec<f64> {
    let mut masses = vec![0.0; mesh.vertex_count()];
    for (e, tet) in mesh.tets().iter().enumerate() {
        let share = density * mesh.rest_volume(e) / 4.0;
        for &v in tet {
            masses[v] += share;
        }
    }
    masses
}

pub(crate) fn lumped_masses_per_dof(mesh: &TetMesh, density: f64) -> Vec<f64> {
    let masses = lumped_masses(mesh, density);
    let mut out = Vec::with_capacity(3 * masses.len());
    for m in masses {
        out.extend_from_slice(&[m, m, m]);
    }
    out
}

/// Solves the static equality-constrained minimization from `init.x`,
/// warm-starting the multipliers from `init.multipliers`.
///
/// On success the returned state satisfies the stationarity and relative
/// feasibility tolerances of the config. Exhausting the outer iteration
/// budget is not an `Err`: the best iterate is returned with
/// `converged = false` and a diagnostic note. Gravity from the config acts
/// as an external potential through the lumped masses.
pub fn solve_static(problem: &Problem, init: &SimState) -> Result<SolveReport, SolverError> {
    problem.validate()?;
    check_multipliers(problem, init)?;
    let mut system = newton::System::new(*problem, None)?;
    let mut report = system.minimize(&init.x, &init.multipliers)?;
    report.state.v = vec![0.0; 3 * problem.mesh.vertex_count()];
    report.state.time = init.time;
    Ok(report)
}

/// Advances one implicit-Euler step of size `config.dt`.
///
/// The step minimizes `1/(2 h^2) ||x - x_hat||^2_M + W(x)` subject to the
/// zonal constraints, with `x_hat = x_n + h v_n + h^2 M^-1 f_ext` and `M`
/// the lumped (diagonal) mass matrix; velocities update as `(x - x_n)/h`.
/// Multipliers are warm-started from the previous step.
pub fn step_implicit_euler(
    problem: &Problem,
    state: &SimState,
) -> Result<SolveReport, SolverError> {
    problem.validate()?;
    check_multipliers(problem, state)?;
    let h = problem.config.dt;
    let mass = problem.lumped_masses_per_dof();
    let n_dof = mass.len();
    let g = problem.config.gravity;
    let mut x_hat = vec![0.0; n_dof];
    for i in 0..n_dof {
        let gravity = match i % 3 {
            0 => g.x,
            1 => g.y,
            _ => g.z,
        };
        x_hat[i] = state.x.as_slice()[i] + h * state.v[i] + h * h * gravity;
    }

    let inertia = newton::Inertia { mass, x_hat, h };
    let mut system = newton::System::new(*problem, Some(inertia))?;
    let mut report = system.minimize(&state.x, &state.multipliers)?;

    let mut v = vec![0.0; n_dof];
    for i in 0..n_dof {
        v[i] = (report.state.x.as_slice()[i] - state.x.as_slice()[i]) / h;
    }
    report.state.v = v;
    report.state.time = state.time + h;
    Ok(report)
}

fn check_multipliers(problem: &Problem, state: &SimState) -> Result<(), SolverError> {
    if state.multipliers.len() != problem.zones.len() {
        return Err(SolverError::DimensionMismatch(format!(
            "{} multipliers for {} zones",
            state.multipliers.len(),
            problem.zones.len()
        )));
    }
    if state.x.dof() != 3 * problem.mesh.vertex_count() {
        return Err(SolverError::DimensionMismatch(format!(
            "{} position entries for {} vertices",
            state.x.dof(),
            problem.mesh.vertex_count()
        )));
    }
    Ok(())
}

/// Per-element pressures: the sum of the multipliers of every zone
/// containing the element plus the fine-scale penalty stress
/// `lambda dU/dJ (J_e)`. The multipliers are already in stress units
/// because the constraints are volumes.
pub fn compute_element_pressures(problem: &Problem, state: &SimState) -> Vec<f64> {
    let mesh = problem.mesh;
    let materials = problem.materials;
    let mut pressures = vec![0.0; mesh.tet_count()];
    for (zone, &p) in problem.zones.zones().iter().zip(&state.multipliers) {
        for &e in &zone.elements {
            pressures[e] += p;
        }
    }
    for (e, pressure) in pressures.iter_mut().enumerate() {
        let j = deformation_gradient(mesh, &state.x, e).determinant();
        *pressure += materials.lambda * penalty_du(j, materials.beta);
    }
    pressures
}

/// KKT residuals of a static state.
#[derive(Debug, Clone)]
pub struct KktResiduals {
    /// Reduced norm of `grad W + sum_j p_j grad c_j`, external gravity
    /// potential included.
    pub stationarity: f64,
    /// Per-zone constraint values (m^3).
    pub feasibility: Vec<f64>,
}

impl KktResiduals {
    pub fn max_relative_feasibility(&self, zones: &ZoneSet) -> f64 {
        self.feasibility
            .iter()
            .zip(zones.zones())
            .map(|(c, z)| (c / z.rest_volume).abs())
            .fold(0.0, f64::max)
    }
}

/// Recomputes the quantities thresholded by [`solve_static`] from scratch.
pub fn kkt_residuals(problem: &Problem, state: &SimState) -> Result<KktResiduals, SolverError> {
    problem.validate()?;
    check_multipliers(problem, state)?;
    let mesh = problem.mesh;
    let assembly = crate::energy::assemble(
        mesh,
        &state.x,
        problem.materials,
        problem.epidermis,
        crate::energy::AssembleOptions::default(),
    )?;
    let mut grad = assembly.gradient;

    // Gravity enters the potential as -f.x.
    let masses = lumped_masses(mesh, problem.config.mass_density);
    let g = problem.config.gravity;
    for (v, &m) in masses.iter().enumerate() {
        grad[3 * v] -= m * g.x;
        grad[3 * v + 1] -= m * g.y;
        grad[3 * v + 2] -= m * g.z;
    }

    let mut feasibility = Vec::with_capacity(problem.zones.len());
    for (zone, &p) in problem.zones.zones().iter().zip(&state.multipliers) {
        feasibility.push(constraint_value(mesh, &state.x, zone));
        let jac = constraint_jacobian(mesh, &state.x, zone);
        for (vertex, gvec) in jac.entries {
            grad[3 * vertex] += p * gvec.x;
            grad[3 * vertex + 1] += p * gvec.y;
            grad[3 * vertex + 2] += p * gvec.z;
        }
    }

    // Prescribed rows are eliminated from the system.
    let mut prescribed = vec![false; mesh.vertex_count()];
    for (v, _) in problem.bc.prescribed(mesh) {
        prescribed[v] = true;
    }
    let stationarity = grad
        .iter()
        .enumerate()
        .filter(|(i, _)| !prescribed[i / 3])
        .map(|(_, g)| g * g)
        .sum::<f64>()
        .sqrt();

    Ok(KktResiduals {
        stationarity,
        feasibility,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{MaterialModel, MaterialParams};
    use crate::mesh::{make_grid, make_two_tet};
    use crate::zoning::{global_zone, per_element_zones};
    use approx::assert_relative_eq;

    fn no_gravity() -> SolverConfig {
        SolverConfig {
            gravity: Vector3::zeros(),
            ..SolverConfig::default()
        }
    }

    #[test]
    fn rest_state_is_a_kkt_point() {
        let mesh = make_two_tet();
        let zones = global_zone(&mesh);
        let materials = MaterialParams::default();
        let bc = BoundaryConditions::free();
        let config = no_gravity();
        let problem = Problem {
            mesh: &mesh,
            materials: &materials,
            epidermis: None,
            zones: &zones,
            bc: &bc,
            config: &config,
        };
        let init = SimState::rest(&mesh, &zones);
        let report = solve_static(&problem, &init).unwrap();
        assert!(report.converged);
        assert_eq!(report.newton_iters, 0, "rest needs no Newton steps");
        assert_eq!(report.state.x, mesh.reference_positions());
        assert_eq!(report.state.multipliers, vec![0.0]);
    }

    #[test]
    fn free_fall_matches_gravity_increment() {
        // A single unconstrained tet in free fall: rigid translation keeps
        // the elastic energy at zero, so dv = g dt exactly.
        let mesh = make_grid(2, 2, 2, 0.1, 0.1, 0.1).unwrap();
        let zones = crate::constraints::ZoneSet::empty();
        let materials = MaterialParams::default();
        let bc = BoundaryConditions::free();
        let config = SolverConfig::default();
        let problem = Problem {
            mesh: &mesh,
            materials: &materials,
            epidermis: None,
            zones: &zones,
            bc: &bc,
            config: &config,
        };
        let state = SimState::rest(&mesh, &zones);
        let report = step_implicit_euler(&problem, &state).unwrap();
        assert!(report.converged);
        let h = config.dt;
        for v in 0..mesh.vertex_count() {
            let dv = Vector3::new(
                report.state.v[3 * v],
                report.state.v[3 * v + 1],
                report.state.v[3 * v + 2],
            );
            assert_relative_eq!(dv, config.gravity * h, epsilon = 1e-10);
        }
        assert_relative_eq!(report.state.time, h, epsilon = 1e-15);
    }

    #[test]
    fn dynamics_rest_is_a_fixed_point_without_gravity() {
        let mesh = make_two_tet();
        let zones = global_zone(&mesh);
        let materials = MaterialParams::default();
        let bc = BoundaryConditions::free();
        let config = no_gravity();
        let problem = Problem {
            mesh: &mesh,
            materials: &materials,
            epidermis: None,
            zones: &zones,
            bc: &bc,
            config: &config,
        };
        let state = SimState::rest(&mesh, &zones);
        let report = step_implicit_euler(&problem, &state).unwrap();
        assert!(report.converged);
        assert_eq!(report.state.x, mesh.reference_positions());
        assert!(report.state.v.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn per_element_zones_enforce_unit_jacobian() {
        // One grid cell, bottom face fixed, one top vertex pushed down by
        // 5%: with a zone per element every J_e returns to 1.
        let mesh = make_grid(2, 2, 2, 1.0, 1.0, 1.0).unwrap();
        let zones = per_element_zones(&mesh);
        let materials = MaterialParams {
            mu: 1.0,
            lambda: 1.0,
            beta: 0.0,
            epsilon: 0.1,
            model: MaterialModel::DeviatoricNeoHookean,
        };
        let mut bc = BoundaryConditions::free();
        for (v, pos) in mesh.vertices().iter().enumerate() {
            if pos.z < 1e-9 {
                bc.fix(v);
            }
        }
        let top = mesh
            .vertices()
            .iter()
            .position(|p| p.z > 0.9 && p.x < 0.1 && p.y < 0.1)
            .unwrap();
        bc.script(top, mesh.vertices()[top] - Vector3::new(0.0, 0.0, 0.05));
        let config = no_gravity();
        let problem = Problem {
            mesh: &mesh,
            materials: &materials,
            epidermis: None,
            zones: &zones,
            bc: &bc,
            config: &config,
        };
        let report = solve_static(&problem, &SimState::rest(&mesh, &zones)).unwrap();
        assert!(report.converged, "note: {:?}", report.note);
        for e in 0..mesh.tet_count() {
            let j = deformation_gradient(&mesh, &report.state.x, e).determinant();
            assert!(
                (j - 1.0).abs() <= 1e-6,
                "element {e} J = {j} not within 1e-6 of 1"
            );
        }
    }

    #[test]
    fn kkt_residuals_match_independent_recomputation() {
        let mesh = make_two_tet();
        let zones = global_zone(&mesh);
        let materials = MaterialParams::default();
        let bc = BoundaryConditions::with_fixed([0]);
        let config = no_gravity();
        let problem = Problem {
            mesh: &mesh,
            materials: &materials,
            epidermis: None,
            zones: &zones,
            bc: &bc,
            config: &config,
        };

        // Perturbed, unconverged state with a nonzero multiplier.
        let mut state = SimState::rest(&mesh, &zones);
        for (i, v) in state.x.as_mut_slice().iter_mut().enumerate() {
            *v += 0.01 * ((i * 17 + 3) % 7) as f64 / 7.0;
        }
        state.multipliers[0] = 0.37;

        let res = kkt_residuals(&problem, &state).unwrap();

        // Independent recomputation from the public API.
        let assembly = crate::energy::assemble(
            &mesh,
            &state.x,
            &materials,
            None,
            crate::energy::AssembleOptions::default(),
        )
        .unwrap();
        let mut grad = assembly.gradient;
        let jac = constraint_jacobian(&mesh, &state.x, &zones.zones()[0]);
        for (v, g) in jac.entries {
            grad[3 * v] += state.multipliers[0] * g.x;
            grad[3 * v + 1] += state.multipliers[0] * g.y;
            grad[3 * v + 2] += state.multipliers[0] * g.z;
        }
        let expected: f64 = grad
            .iter()
            .enumerate()
            .filter(|(i, _)| i / 3 != 0)
            .map(|(_, g)| g * g)
            .sum::<f64>()
            .sqrt();
        assert_relative_eq!(res.stationarity, expected, max_relative = 1e-12);
        assert_relative_eq!(
            res.feasibility[0],
            constraint_value(&mesh, &state.x, &zones.zones()[0]),
            max_relative = 1e-12
        );

        // At the reference with zero multipliers both residuals vanish.
        let rest = SimState::rest(&mesh, &zones);
        let res = kkt_residuals(&problem, &rest).unwrap();
        assert_relative_eq!(res.stationarity, 0.0, epsilon = 1e-10);
        assert_relative_eq!(res.feasibility[0], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn converged_solve_meets_tolerances() {
        // Squash one apex of the two-tet mesh halfway to the shared face and
        // let the other inflate under a global constraint.
        let mesh = make_two_tet();
        let zones = global_zone(&mesh);
        let materials = MaterialParams {
            mu: 1.0,
            lambda: 10.0,
            beta: 1.0,
            epsilon: 0.1,
            model: MaterialModel::DeviatoricNeoHookean,
        };
        let mut bc = BoundaryConditions::with_fixed([0, 1, 2]);
        let apex = mesh.vertices()[3];
        let centroid = (mesh.vertices()[0] + mesh.vertices()[1] + mesh.vertices()[2]) / 3.0;
        bc.script(3, centroid + (apex - centroid) * 0.5);
        let config = no_gravity();
        let problem = Problem {
            mesh: &mesh,
            materials: &materials,
            epidermis: None,
            zones: &zones,
            bc: &bc,
            config: &config,
        };
        let report = solve_static(&problem, &SimState::rest(&mesh, &zones)).unwrap();
        assert!(report.converged, "note: {:?}", report.note);

        let res = kkt_residuals(&problem, &report.state).unwrap();
        assert!(res.stationarity <= config.grad_tol_abs(&materials, &mesh) * 1.0001);
        assert!(res.max_relative_feasibility(&zones) <= config.constraint_tol);

        // Dirichlet vertices never move.
        assert_eq!(report.state.x.vertex(0), mesh.vertices()[0]);
        assert_eq!(
            report.state.x.vertex(3),
            centroid + (apex - centroid) * 0.5
        );

        // The free tet must have absorbed the squashed tet's volume loss.
        let total: f64 = (0..2).map(|e| mesh.tet_volume(&report.state.x, e)).sum();
        assert_relative_eq!(total, mesh.total_rest_volume(), max_relative = 1e-7);
    }

    #[test]
    fn solves_are_deterministic() {
        let mesh = make_grid(3, 3, 3, 1.0, 1.0, 1.0).unwrap();
        let zones = global_zone(&mesh);
        let materials = MaterialParams::default();
        let mut bc = BoundaryConditions::free();
        for (v, pos) in mesh.vertices().iter().enumerate() {
            if pos.z < 1e-9 {
                bc.fix(v);
            }
        }
        let config = SolverConfig {
            mass_density: 100.0,
            ..SolverConfig::default()
        };
        let problem = Problem {
            mesh: &mesh,
            materials: &materials,
            epidermis: None,
            zones: &zones,
            bc: &bc,
            config: &config,
        };
        let init = SimState::rest(&mesh, &zones);
        let a = solve_static(&problem, &init).unwrap();
        let b = solve_static(&problem, &init).unwrap();
        assert_eq!(a.state.x, b.state.x, "repeated solves must be bitwise equal");
        assert_eq!(a.state.multipliers, b.state.multipliers);
        assert_eq!(a.newton_iters, b.newton_iters);
    }

    #[test]
    fn invalid_config_and_bc_rejected() {
        let mesh = make_two_tet();
        let zones = ZoneSet::empty();
        let materials = MaterialParams::default();
        let bad = SolverConfig {
            ls_backtrack: 1.5,
            ..SolverConfig::default()
        };
        let bc = BoundaryConditions::free();
        let problem = Problem {
            mesh: &mesh,
            materials: &materials,
            epidermis: None,
            zones: &zones,
            bc: &bc,
            config: &bad,
        };
        assert!(matches!(
            solve_static(&problem, &SimState::rest(&mesh, &zones)),
            Err(SolverError::InvalidConfig(_))
        ));

        let config = SolverConfig::default();
        let mut bc = BoundaryConditions::with_fixed([2]);
        bc.script(2, Vector3::zeros());
        let problem = Problem {
            mesh: &mesh,
            materials: &materials,
            epidermis: None,
            zones: &zones,
            bc: &bc,
            config: &config,
        };
        assert!(matches!(
            solve_static(&problem, &SimState::rest(&mesh, &zones)),
            Err(SolverError::InvalidBc(_))
        ));
    }

    #[test]
    fn pressures_at_rest_are_zero() {
        let mesh = make_two_tet();
        let zones = global_zone(&mesh);
        let materials = MaterialParams::default();
        let bc = BoundaryConditions::free();
        let config = no_gravity();
        let problem = Problem {
            mesh: &mesh,
            materials: &materials,
            epidermis: None,
            zones: &zones,
            bc: &bc,
            config: &config,
        };
        let state = SimState::rest(&mesh, &zones);
        let pressures = compute_element_pressures(&problem, &state);
        for p in pressures {
            assert_relative_eq!(p, 0.0, epsilon = 1e-12);
        }
    }
}
