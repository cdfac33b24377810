//! Reduced-system assembly and the augmented-Lagrangian Newton iteration.
//!
//! The inner loop minimizes the augmented Lagrangian
//! `W(x) + sum_j p_j c_j + (mu_j/2) c_j^2` over the free DoF. Its Hessian
//! splits into a sparse part (elastic stencils plus `(p_j + mu_j c_j)`
//! times the constraint curvature, PSD-projected per element) and the
//! low-rank part `sum_j mu_j grad c_j grad c_j^T`, which is handled by the
//! Woodbury identity around a shifted LDL^T factorization of the sparse
//! part. Conjugate gradients back the direct solve up if factorization
//! keeps failing.

use nalgebra::{DMatrix, DVector, Vector3};

use super::{Problem, SimState, SolverError};
use crate::constraints::{tet_volume_gradient, tet_volume_hessian};
use crate::energy::{
    tet_elastic_stencil, tet_energy_value, tri_epidermis_stencil, tri_energy_value,
};
use crate::math::ProjectPsd;
use crate::mesh::Displacement;
use crate::sparse::{pcg, LdlFactor, LdlSymbolic, SymCsr};

/// Implicit-Euler inertial term: `1/(2 h^2) ||x - x_hat||^2_M`.
pub(crate) struct Inertia {
    /// Lumped mass per degree of freedom.
    pub mass: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub h: f64,
}

/// Outcome of a constrained solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub state: SimState,
    /// Whether both tolerances were met within the iteration budgets.
    pub converged: bool,
    /// Newton steps taken, summed over outer iterations.
    pub newton_iters: u32,
    /// Augmented-Lagrangian outer iterations executed.
    pub outer_iters: u32,
    /// Reduced norm of the Lagrangian gradient at the returned state.
    pub stationarity: f64,
    /// Largest `|c_j| / V_j^0` at the returned state.
    pub max_rel_feasibility: f64,
    /// Diagnostic on non-convergence.
    pub note: Option<String>,
}

enum InnerStatus {
    Converged,
    MaxIters,
    Stalled,
}

struct Assembled {
    merit: f64,
    grad: Vec<f64>,
    constraint_cols: Vec<Vec<f64>>,
}

pub(crate) struct System<'a> {
    problem: Problem<'a>,
    inertia: Option<Inertia>,
    prescribed: Vec<(usize, Vector3<f64>)>,
    /// Global DoF -> reduced index.
    reduced_of: Vec<Option<usize>>,
    n_free: usize,
    active_tets: Vec<bool>,
    active_tris: Vec<bool>,
    /// Element -> indices of zones containing it.
    elem_zones: Vec<Vec<usize>>,
    /// Gravity force per DoF (zero in dynamic solves, where gravity enters
    /// through `x_hat`).
    ext_force: Vec<f64>,
    hessian: SymCsr,
    symbolic: LdlSymbolic,
}

impl<'a> System<'a> {
    pub(crate) fn new(
        problem: Problem<'a>,
        inertia: Option<Inertia>,
    ) -> Result<Self, SolverError> {
        let mesh = problem.mesh;
        let n_verts = mesh.vertex_count();
        let n_dof = 3 * n_verts;

        let prescribed = problem.bc.prescribed(mesh);
        let mut is_prescribed = vec![false; n_verts];
        for &(v, _) in &prescribed {
            is_prescribed[v] = true;
        }

        let mut reduced_of = vec![None; n_dof];
        let mut n_free = 0;
        for v in 0..n_verts {
            if !is_prescribed[v] {
                for i in 0..3 {
                    reduced_of[3 * v + i] = Some(n_free);
                    n_free += 1;
                }
            }
        }

        // Elements with every vertex prescribed contribute a constant to the
        // energy and nothing to the reduced system; skip them so that even
        // states where scripted elements are fully flattened stay solvable.
        let active_tets: Vec<bool> = mesh
            .tets()
            .iter()
            .map(|tet| tet.iter().any(|&v| !is_prescribed[v]))
            .collect();
        let active_tris: Vec<bool> = mesh
            .surface()
            .iter()
            .map(|tri| tri.iter().any(|&v| !is_prescribed[v]))
            .collect();

        let mut elem_zones = vec![Vec::new(); mesh.tet_count()];
        for (j, zone) in problem.zones.zones().iter().enumerate() {
            for &e in &zone.elements {
                elem_zones[e].push(j);
            }
        }

        let mut ext_force = vec![0.0; n_dof];
        if inertia.is_none() {
            let g = problem.config.gravity;
            let masses = super::lumped_masses(mesh, problem.config.mass_density);
            for (v, &m) in masses.iter().enumerate() {
                ext_force[3 * v] = m * g.x;
                ext_force[3 * v + 1] = m * g.y;
                ext_force[3 * v + 2] = m * g.z;
            }
        }

        let mut pairs = Vec::new();
        for (e, tet) in mesh.tets().iter().enumerate() {
            if !active_tets[e] {
                continue;
            }
            for &a in tet {
                for &b in tet {
                    if a > b {
                        continue;
                    }
                    for i in 0..3 {
                        let Some(ra) = reduced_of[3 * a + i] else {
                            continue;
                        };
                        for jj in 0..3 {
                            if let Some(rb) = reduced_of[3 * b + jj] {
                                pairs.push((ra, rb));
                            }
                        }
                    }
                }
            }
        }
        let hessian = SymCsr::from_pairs(n_free, pairs);
        let symbolic = LdlSymbolic::analyze(&hessian);

        Ok(System {
            problem,
            inertia,
            prescribed,
            reduced_of,
            n_free,
            active_tets,
            active_tris,
            elem_zones,
            ext_force,
            hessian,
            symbolic,
        })
    }

    fn apply_prescribed(&self, x: &mut Displacement) {
        for &(v, target) in &self.prescribed {
            x.set_vertex(v, target);
        }
    }

    fn constraint_values(&self, x: &Displacement) -> Vec<f64> {
        self.problem
            .zones
            .zones()
            .iter()
            .map(|zone| crate::constraints::constraint_value(self.problem.mesh, x, zone))
            .collect()
    }

    /// Augmented-Lagrangian merit; `None` marks an invalid trial state
    /// (inverted element under a log model, or a non-finite value).
    fn merit(&self, x: &Displacement, p: &[f64], mu: &[f64]) -> Option<f64> {
        let mesh = self.problem.mesh;
        let mut total = 0.0;
        for e in 0..mesh.tet_count() {
            if !self.active_tets[e] {
                continue;
            }
            let (dev, pen) = tet_energy_value(mesh, x, e, self.problem.materials).ok()?;
            total += dev + pen;
        }
        if let Some(epi) = self.problem.epidermis {
            if epi.lambda_e > 0.0 {
                for t in 0..mesh.surface().len() {
                    if self.active_tris[t] {
                        total += tri_energy_value(mesh, x, t, epi);
                    }
                }
            }
        }
        for (i, red) in self.reduced_of.iter().enumerate() {
            if red.is_some() {
                total -= self.ext_force[i] * x.as_slice()[i];
            }
        }
        if let Some(inertia) = &self.inertia {
            let inv_h2 = 1.0 / (inertia.h * inertia.h);
            for (i, red) in self.reduced_of.iter().enumerate() {
                if red.is_some() {
                    let d = x.as_slice()[i] - inertia.x_hat[i];
                    total += 0.5 * inv_h2 * inertia.mass[i] * d * d;
                }
            }
        }
        for ((zone, &pj), &muj) in self
            .problem
            .zones
            .zones()
            .iter()
            .zip(p)
            .zip(mu)
        {
            let c = crate::constraints::constraint_value(self.problem.mesh, x, zone);
            total += pj * c + 0.5 * muj * c * c;
        }
        total.is_finite().then_some(total)
    }

    /// Assembles the merit, reduced gradient, sparse Hessian part (into
    /// `self.hessian`, PSD-projected per element), and reduced constraint
    /// gradient columns at `x`.
    fn assemble(
        &mut self,
        x: &Displacement,
        p: &[f64],
        mu: &[f64],
    ) -> Result<Assembled, SolverError> {
        let mesh = self.problem.mesh;
        let mut merit = 0.0;
        let mut grad = vec![0.0; self.n_free];
        self.hessian.reset();

        let c_values = self.constraint_values(x);
        let mut coef = vec![0.0; p.len()];
        for j in 0..p.len() {
            coef[j] = p[j] + mu[j] * c_values[j];
            merit += p[j] * c_values[j] + 0.5 * mu[j] * c_values[j] * c_values[j];
        }

        for e in 0..mesh.tet_count() {
            if !self.active_tets[e] {
                continue;
            }
            let mut stencil = tet_elastic_stencil(mesh, x, e, self.problem.materials)?;
            merit += stencil.deviatoric + stencil.penalty;

            let zone_coef: f64 = self.elem_zones[e].iter().map(|&j| coef[j]).sum();
            if zone_coef != 0.0 {
                let tet = mesh.tets()[e];
                let (a, b, c, d) = (
                    x.vertex(tet[0]),
                    x.vertex(tet[1]),
                    x.vertex(tet[2]),
                    x.vertex(tet[3]),
                );
                stencil.hess += tet_volume_hessian(&a, &b, &c, &d) * zone_coef;
                let vol_grad = tet_volume_gradient(&a, &b, &c, &d);
                for (v, gv) in vol_grad.iter().enumerate() {
                    stencil.grad[3 * v] += zone_coef * gv.x;
                    stencil.grad[3 * v + 1] += zone_coef * gv.y;
                    stencil.grad[3 * v + 2] += zone_coef * gv.z;
                }
            }

            stencil.hess.project_psd();

            let tet = &mesh.tets()[e];
            for (v, &gv) in tet.iter().enumerate() {
                for i in 0..3 {
                    if let Some(r) = self.reduced_of[3 * gv + i] {
                        grad[r] += stencil.grad[3 * v + i];
                    }
                }
            }
            for (v, &gv) in tet.iter().enumerate() {
                for (u, &gu) in tet.iter().enumerate() {
                    for i in 0..3 {
                        let Some(r) = self.reduced_of[3 * gv + i] else {
                            continue;
                        };
                        for jj in 0..3 {
                            if let Some(cidx) = self.reduced_of[3 * gu + jj] {
                                let val = stencil.hess[(3 * v + i, 3 * u + jj)];
                                if val != 0.0 {
                                    self.hessian.add(r, cidx, val);
                                }
                            }
                        }
                    }
                }
            }
        }

        if let Some(epi) = self.problem.epidermis {
            if epi.lambda_e > 0.0 {
                for t in 0..mesh.surface().len() {
                    if !self.active_tris[t] {
                        continue;
                    }
                    let mut stencil = tri_epidermis_stencil(mesh, x, t, epi);
                    merit += stencil.energy;
                    stencil.hess.project_psd();
                    let tri = &mesh.surface()[t];
                    for (v, &gv) in tri.iter().enumerate() {
                        for i in 0..3 {
                            if let Some(r) = self.reduced_of[3 * gv + i] {
                                grad[r] += stencil.grad[3 * v + i];
                            }
                        }
                    }
                    for (v, &gv) in tri.iter().enumerate() {
                        for (u, &gu) in tri.iter().enumerate() {
                            for i in 0..3 {
                                let Some(r) = self.reduced_of[3 * gv + i] else {
                                    continue;
                                };
                                for jj in 0..3 {
                                    if let Some(cidx) = self.reduced_of[3 * gu + jj] {
                                        let val = stencil.hess[(3 * v + i, 3 * u + jj)];
                                        if val != 0.0 {
                                            self.hessian.add(r, cidx, val);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }

        // External force and inertial terms.
        for (i, red) in self.reduced_of.iter().enumerate() {
            if let Some(r) = *red {
                if self.ext_force[i] != 0.0 {
                    merit -= self.ext_force[i] * x.as_slice()[i];
                    grad[r] -= self.ext_force[i];
                }
            }
        }
        if let Some(inertia) = &self.inertia {
            let inv_h2 = 1.0 / (inertia.h * inertia.h);
            for (i, red) in self.reduced_of.iter().enumerate() {
                if let Some(r) = *red {
                    let k = inv_h2 * inertia.mass[i];
                    let d = x.as_slice()[i] - inertia.x_hat[i];
                    merit += 0.5 * k * d * d;
                    grad[r] += k * d;
                    self.hessian.add(r, r, k);
                }
            }
        }

        // Reduced constraint gradient columns for the low-rank Hessian part.
        let mut constraint_cols = Vec::with_capacity(p.len());
        for zone in self.problem.zones.zones() {
            let mut col = vec![0.0; self.n_free];
            for &e in &zone.elements {
                if !self.active_tets[e] {
                    continue;
                }
                let tet = mesh.tets()[e];
                let g = tet_volume_gradient(
                    &x.vertex(tet[0]),
                    &x.vertex(tet[1]),
                    &x.vertex(tet[2]),
                    &x.vertex(tet[3]),
                );
                for (v, gv) in g.iter().enumerate() {
                    for (i, &component) in [gv.x, gv.y, gv.z].iter().enumerate() {
                        if let Some(r) = self.reduced_of[3 * tet[v] + i] {
                            col[r] += component;
                        }
                    }
                }
            }
            constraint_cols.push(col);
        }

        if !merit.is_finite() {
            return Err(SolverError::NumericalBreakdown {
                context: "merit became non-finite during assembly".to_string(),
            });
        }

        Ok(Assembled {
            merit,
            grad,
            constraint_cols,
        })
    }

    /// Solves `(H + sum_j mu_j g_j g_j^T) d = -grad` with shift retries and
    /// a CG fallback.
    fn newton_direction(
        &self,
        asm: &Assembled,
        mu: &[f64],
    ) -> Result<Vec<f64>, SolverError> {
        let n = self.n_free;
        let m = asm.constraint_cols.len();
        let scale = self.hessian.max_abs_diagonal().max(1e-300);
        let neg_grad: Vec<f64> = asm.grad.iter().map(|g| -g).collect();

        let mut shift = 0.0;
        for _attempt in 0..24 {
            let factor = match LdlFactor::factor(&self.hessian, &self.symbolic, shift) {
                Ok(f) => f,
                Err(_) => {
                    shift = if shift == 0.0 { 1e-10 * scale } else { shift * 100.0 };
                    continue;
                }
            };
            let mut z = neg_grad.clone();
            factor.solve_in_place(&mut z);
            let d = if m == 0 {
                z
            } else {
                let mut zcols = Vec::with_capacity(m);
                for col in &asm.constraint_cols {
                    let mut zc = col.clone();
                    factor.solve_in_place(&mut zc);
                    zcols.push(zc);
                }
                // Woodbury: (H + G D G^T)^-1 b
                //   = z - Z (D^-1 + G^T Z)^-1 G^T z,  Z = H^-1 G.
                let mut small = DMatrix::<f64>::zeros(m, m);
                for j in 0..m {
                    for k in 0..m {
                        let dot: f64 = asm.constraint_cols[j]
                            .iter()
                            .zip(&zcols[k])
                            .map(|(a, b)| a * b)
                            .sum();
                        small[(j, k)] = dot;
                    }
                    small[(j, j)] += 1.0 / mu[j];
                }
                let rhs = DVector::from_iterator(
                    m,
                    (0..m).map(|j| {
                        asm.constraint_cols[j]
                            .iter()
                            .zip(&z)
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                    }),
                );
                let sym = (small.clone() + small.transpose()) * 0.5;
                let w = match sym.clone().cholesky() {
                    Some(chol) => chol.solve(&rhs),
                    None => match sym.lu().solve(&rhs) {
                        Some(w) => w,
                        None => {
                            shift = if shift == 0.0 { 1e-10 * scale } else { shift * 100.0 };
                            continue;
                        }
                    },
                };
                let mut d = z;
                for j in 0..m {
                    for i in 0..n {
                        d[i] -= zcols[j][i] * w[j];
                    }
                }
                d
            };
            if d.iter().all(|v| v.is_finite()) {
                return Ok(d);
            }
            shift = if shift == 0.0 { 1e-10 * scale } else { shift * 100.0 };
        }

        // Direct factorization failed repeatedly: iterate instead.
        let shift = 1e-8 * scale;
        let apply = |v: &[f64], out: &mut [f64]| {
            self.hessian.matvec(v, out);
            for i in 0..n {
                out[i] += shift * v[i];
            }
            for (j, col) in asm.constraint_cols.iter().enumerate() {
                let dot: f64 = col.iter().zip(v).map(|(a, b)| a * b).sum();
                let s = mu[j] * dot;
                for i in 0..n {
                    out[i] += s * col[i];
                }
            }
        };
        let mut diag = self.hessian.diagonal();
        for i in 0..n {
            diag[i] += shift;
            for (j, col) in asm.constraint_cols.iter().enumerate() {
                diag[i] += mu[j] * col[i] * col[i];
            }
        }
        let mut d = vec![0.0; n];
        let (_, converged) = pcg(apply, &neg_grad, &mut d, &diag, 1e-10, 4 * n + 200);
        if converged && d.iter().all(|v| v.is_finite()) {
            Ok(d)
        } else {
            Err(SolverError::NumericalBreakdown {
                context: "linear solver failed on the Newton system".to_string(),
            })
        }
    }

    /// Newton iterations on the augmented Lagrangian at fixed `(p, mu)`.
    /// Returns the reduced gradient norm at exit.
    fn inner_newton(
        &mut self,
        x: &mut Displacement,
        p: &[f64],
        mu: &[f64],
        gtol: f64,
        newton_total: &mut u32,
    ) -> Result<(f64, InnerStatus), SolverError> {
        let max_newton = self.problem.config.max_newton;
        let mut iters = 0u32;
        loop {
            let asm = self.assemble(x, p, mu)?;
            let gnorm = asm.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gnorm <= gtol {
                return Ok((gnorm, InnerStatus::Converged));
            }
            if iters >= max_newton {
                return Ok((gnorm, InnerStatus::MaxIters));
            }

            let dir = self.newton_direction(&asm, mu)?;
            let slope: f64 = asm.grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
            if !slope.is_finite() || slope >= 0.0 {
                return Ok((gnorm, InnerStatus::Stalled));
            }

            // Armijo backtracking on the merit; a trial state where the
            // energy is undefined counts as +infinity.
            let armijo = self.problem.config.ls_armijo;
            let rho = self.problem.config.ls_backtrack;
            let mut t = 1.0;
            let mut accepted = false;
            while t >= 1e-14 {
                let mut x_trial = x.clone();
                {
                    let data = x_trial.as_mut_slice();
                    for (i, red) in self.reduced_of.iter().enumerate() {
                        if let Some(r) = *red {
                            data[i] += t * dir[r];
                        }
                    }
                }
                if let Some(f_trial) = self.merit(&x_trial, p, mu) {
                    if f_trial <= asm.merit + armijo * t * slope {
                        *x = x_trial;
                        accepted = true;
                        break;
                    }
                }
                t *= rho;
            }
            if !accepted {
                return Ok((gnorm, InnerStatus::Stalled));
            }
            iters += 1;
            *newton_total += 1;
        }
    }

    /// Augmented-Lagrangian outer loop.
    pub(crate) fn minimize(
        &mut self,
        x_init: &Displacement,
        p_init: &[f64],
    ) -> Result<SolveReport, SolverError> {
        let cfg = self.problem.config;
        let zones = self.problem.zones;
        let m = zones.len();
        let gtol = cfg.grad_tol_abs(self.problem.materials, self.problem.mesh);
        let ctol = cfg.constraint_tol;

        let mut x = x_init.clone();
        self.apply_prescribed(&mut x);
        let mut p = p_init.to_vec();

        // Per-zone penalty unit: an order of magnitude above the material's
        // own volume stiffness, normalized by zone volume so the quadratic
        // term carries energy units; `mu` keeps it positive at lambda = 0.
        let mat = self.problem.materials;
        let mu_unit: Vec<f64> = zones
            .zones()
            .iter()
            .map(|z| (10.0 * mat.lambda).max(mat.mu) / z.rest_volume)
            .collect();
        let mut mu_factor = cfg.penalty_mu0;

        let mut newton_total = 0u32;
        let mut prev_feas = f64::INFINITY;
        let mut best: Option<(f64, Displacement, Vec<f64>, f64, f64)> = None;
        let mut outer_done = 0u32;

        for outer in 1..=cfg.max_outer.max(1) {
            outer_done = outer;
            let mu: Vec<f64> = mu_unit.iter().map(|u| u * mu_factor).collect();
            let (gnorm, _status) = self.inner_newton(&mut x, &p, &mu, gtol, &mut newton_total)?;

            let c = self.constraint_values(&x);
            for j in 0..m {
                p[j] += mu[j] * c[j];
            }
            let feas = c
                .iter()
                .zip(zones.zones())
                .map(|(cj, z)| (cj / z.rest_volume).abs())
                .fold(0.0, f64::max);

            // After the multiplier update the inner gradient equals the
            // Lagrangian gradient at the new multipliers, so `gnorm` is the
            // KKT stationarity.
            let score = (gnorm / gtol).max(if m > 0 { feas / ctol } else { 0.0 });
            if best.as_ref().map_or(true, |(s, ..)| score < *s) {
                best = Some((score, x.clone(), p.clone(), gnorm, feas));
            }

            if gnorm <= gtol && feas <= ctol {
                return Ok(SolveReport {
                    state: SimState {
                        x,
                        v: Vec::new(),
                        multipliers: p,
                        time: 0.0,
                    },
                    converged: true,
                    newton_iters: newton_total,
                    outer_iters: outer,
                    stationarity: gnorm,
                    max_rel_feasibility: feas,
                    note: None,
                });
            }
            if m == 0 {
                break;
            }
            if feas > 0.25 * prev_feas {
                mu_factor *= cfg.penalty_growth;
            }
            prev_feas = feas;
        }

        let (_, bx, bp, stat, feas) = best.expect("at least one outer iteration ran");
        Ok(SolveReport {
            state: SimState {
                x: bx,
                v: Vec::new(),
                multipliers: bp,
                time: 0.0,
            },
            converged: false,
            newton_iters: newton_total,
            outer_iters: outer_done,
            stationarity: stat,
            max_rel_feasibility: feas,
            note: Some(format!(
                "not converged after {outer_done} outer iterations: \
                 stationarity {stat:.3e} (tol {gtol:.3e}), relative feasibility \
                 {feas:.3e} (tol {ctol:.3e})"
            )),
        })
    }
}
