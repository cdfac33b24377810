//! Global assembly of energy, gradient, and sparse Hessian from per-element
//! stencils, with optional per-element PSD projection.

use nalgebra::{Matrix2, Matrix3, Matrix3x2, SMatrix, SVector, Vector2, Vector3};

use super::density::{psi_dev_nh, psi_epidermis, psi_unh};
use super::penalty::{penalty_d2u, penalty_du, penalty_u};
use super::{EnergyError, EnergyReport, EpidermisParams, MaterialModel, MaterialParams};
use crate::math::{cofactor, det_hessian, ProjectPsd};
use crate::mesh::{deformation_gradient, reduced_deformation_gradient, Displacement, TetMesh};
use crate::sparse::SymCsr;

#[derive(Debug, Clone, Copy, Default)]
pub struct AssembleOptions {
    /// Clamp each element stencil's eigenvalues at zero before scatter.
    pub psd_project: bool,
}

/// Assembled energy, gradient, and sparse symmetric Hessian.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub report: EnergyReport,
    pub gradient: Vec<f64>,
    pub hessian: SymCsr,
    pub psd_projected: bool,
}

/// Per-vertex differentiation weights of `F` with respect to the four tet
/// vertices: `dF_ij / dx_v[a] = delta_ia * w_v[j]`.
#[inline]
pub(crate) fn tet_weights(inv_shape: &Matrix3<f64>) -> [Vector3<f64>; 4] {
    let r0: Vector3<f64> = inv_shape.row(0).transpose();
    let r1: Vector3<f64> = inv_shape.row(1).transpose();
    let r2: Vector3<f64> = inv_shape.row(2).transpose();
    [-(r0 + r1 + r2), r0, r1, r2]
}

#[inline]
pub(crate) fn pull_tet_gradient(
    g_f: &Matrix3<f64>,
    w: &[Vector3<f64>; 4],
) -> SVector<f64, 12> {
    let mut out = SVector::<f64, 12>::zeros();
    for (v, wv) in w.iter().enumerate() {
        out.fixed_rows_mut::<3>(3 * v).copy_from(&(g_f * wv));
    }
    out
}

pub(crate) fn pull_tet_hessian(
    h_f: &SMatrix<f64, 9, 9>,
    w: &[Vector3<f64>; 4],
) -> SMatrix<f64, 12, 12> {
    let mut out = SMatrix::<f64, 12, 12>::zeros();
    for j in 0..3 {
        for l in 0..3 {
            let block = h_f.fixed_view::<3, 3>(3 * j, 3 * l);
            for (v, wv) in w.iter().enumerate() {
                for (u, wu) in w.iter().enumerate() {
                    let scale = wv[j] * wu[l];
                    if scale != 0.0 {
                        let mut view = out.fixed_view_mut::<3, 3>(3 * v, 3 * u);
                        view += block * scale;
                    }
                }
            }
        }
    }
    out
}

#[inline]
pub(crate) fn tri_weights(inv_shape: &Matrix2<f64>) -> [Vector2<f64>; 3] {
    let r0: Vector2<f64> = inv_shape.row(0).transpose();
    let r1: Vector2<f64> = inv_shape.row(1).transpose();
    [-(r0 + r1), r0, r1]
}

#[inline]
pub(crate) fn pull_tri_gradient(
    g_f: &Matrix3x2<f64>,
    w: &[Vector2<f64>; 3],
) -> SVector<f64, 9> {
    let mut out = SVector::<f64, 9>::zeros();
    for (v, wv) in w.iter().enumerate() {
        out.fixed_rows_mut::<3>(3 * v).copy_from(&(g_f * wv));
    }
    out
}

pub(crate) fn pull_tri_hessian(
    h_f: &SMatrix<f64, 6, 6>,
    w: &[Vector2<f64>; 3],
) -> SMatrix<f64, 9, 9> {
    let mut out = SMatrix::<f64, 9, 9>::zeros();
    for j in 0..2 {
        for l in 0..2 {
            let block = h_f.fixed_view::<3, 3>(3 * j, 3 * l);
            for (v, wv) in w.iter().enumerate() {
                for (u, wu) in w.iter().enumerate() {
                    let scale = wv[j] * wu[l];
                    if scale != 0.0 {
                        let mut view = out.fixed_view_mut::<3, 3>(3 * v, 3 * u);
                        view += block * scale;
                    }
                }
            }
        }
    }
    out
}

/// Elastic energy of one tet and its vertex-space derivatives, scaled by
/// the rest volume. Unprojected.
pub(crate) struct TetStencil {
    /// Model term (J).
    pub deviatoric: f64,
    /// Compression penalty term (J); zero for the standard model.
    pub penalty: f64,
    pub grad: SVector<f64, 12>,
    pub hess: SMatrix<f64, 12, 12>,
}

pub(crate) fn tet_elastic_stencil(
    mesh: &TetMesh,
    x: &Displacement,
    e: usize,
    materials: &MaterialParams,
) -> Result<TetStencil, EnergyError> {
    let f = deformation_gradient(mesh, x, e);
    let v0 = mesh.rest_volume(e);
    let w = tet_weights(mesh.rest_inverse_shape(e));

    let (deviatoric, penalty, g_f, h_f) = match materials.model {
        MaterialModel::NeoHookean => {
            let eval = psi_unh(&f, materials.lambda, materials.mu).map_err(|err| match err {
                EnergyError::InvertedElement { det_f } => {
                    EnergyError::InvertedTet { element: e, det_f }
                }
                other => other,
            })?;
            (eval.value * v0, 0.0, eval.gradient * v0, eval.hessian * v0)
        }
        MaterialModel::DeviatoricNeoHookean => {
            let eval = psi_dev_nh(&f, materials.mu, materials.epsilon);
            let j = f.determinant();
            let lambda = materials.lambda;
            let beta = materials.beta;
            let g_det = cofactor(&f);
            let pen_value = lambda * penalty_u(j, beta);
            let du = lambda * penalty_du(j, beta);
            let d2u = lambda * penalty_d2u(j, beta);
            let mut h = eval.hessian;
            let vg = SMatrix::<f64, 9, 1>::from_column_slice(g_det.as_slice());
            h += vg * vg.transpose() * d2u;
            h += det_hessian(&f) * du;
            (
                eval.value * v0,
                pen_value * v0,
                (eval.gradient + g_det * du) * v0,
                h * v0,
            )
        }
    };

    Ok(TetStencil {
        deviatoric,
        penalty,
        grad: pull_tet_gradient(&g_f, &w),
        hess: pull_tet_hessian(&h_f, &w),
    })
}

/// Surface energy of one boundary triangle and its vertex-space
/// derivatives, scaled by the rest area. Unprojected.
pub(crate) struct TriStencil {
    pub energy: f64,
    pub grad: SVector<f64, 9>,
    pub hess: SMatrix<f64, 9, 9>,
}

pub(crate) fn tri_epidermis_stencil(
    mesh: &TetMesh,
    x: &Displacement,
    t: usize,
    epidermis: &EpidermisParams,
) -> TriStencil {
    let basis = mesh.surface_rest_basis(t);
    let f = reduced_deformation_gradient(mesh, x, t);
    let eval = psi_epidermis(&f, epidermis.gamma, epidermis.lambda_e);
    let w = tri_weights(&basis.inv_shape);
    let a0 = basis.rest_area;
    TriStencil {
        energy: eval.value * a0,
        grad: pull_tri_gradient(&(eval.gradient * a0), &w),
        hess: pull_tri_hessian(&(eval.hessian * a0), &w),
    }
}

/// Value-only elastic energy `(model_term, penalty_term)` of one tet,
/// scaled by the rest volume.
pub(crate) fn tet_energy_value(
    mesh: &TetMesh,
    x: &Displacement,
    e: usize,
    materials: &MaterialParams,
) -> Result<(f64, f64), EnergyError> {
    let f = deformation_gradient(mesh, x, e);
    let v0 = mesh.rest_volume(e);
    match materials.model {
        MaterialModel::NeoHookean => {
            let value = super::density::psi_unh_value(&f, materials.lambda, materials.mu)
                .map_err(|err| match err {
                    EnergyError::InvertedElement { det_f } => {
                        EnergyError::InvertedTet { element: e, det_f }
                    }
                    other => other,
                })?;
            Ok((value * v0, 0.0))
        }
        MaterialModel::DeviatoricNeoHookean => {
            let dev = super::density::psi_dev_nh_value(&f, materials.mu, materials.epsilon);
            let pen = materials.lambda * penalty_u(f.determinant(), materials.beta);
            Ok((dev * v0, pen * v0))
        }
    }
}

/// Value-only surface energy of one boundary triangle, scaled by rest area.
pub(crate) fn tri_energy_value(
    mesh: &TetMesh,
    x: &Displacement,
    t: usize,
    epidermis: &EpidermisParams,
) -> f64 {
    let f = reduced_deformation_gradient(mesh, x, t);
    super::density::psi_epidermis_value(&f, epidermis.gamma, epidermis.lambda_e)
        * mesh.surface_rest_basis(t).rest_area
}

/// Total elastic energy without derivatives.
pub fn total_energy(
    mesh: &TetMesh,
    x: &Displacement,
    materials: &MaterialParams,
    epidermis: Option<&EpidermisParams>,
) -> Result<EnergyReport, EnergyError> {
    let mut deviatoric = 0.0;
    let mut penalty = 0.0;
    for e in 0..mesh.tet_count() {
        let (dev, pen) = tet_energy_value(mesh, x, e, materials)?;
        deviatoric += dev;
        penalty += pen;
    }
    let mut epidermis_energy = 0.0;
    if let Some(epi) = epidermis {
        for t in 0..mesh.surface().len() {
            epidermis_energy += tri_energy_value(mesh, x, t, epi);
        }
    }
    Ok(EnergyReport::from_terms(
        deviatoric,
        penalty,
        epidermis_energy,
        0.0,
    ))
}

/// Sparsity pattern of the assembled Hessian: 3x3 blocks for every vertex
/// pair coupled by a tet.
pub(crate) fn hessian_pattern(mesh: &TetMesh) -> SymCsr {
    let n_dof = 3 * mesh.vertex_count();
    let mut pairs = Vec::with_capacity(mesh.tet_count() * 144);
    for tet in mesh.tets() {
        for &a in tet {
            for &b in tet {
                if a <= b {
                    for i in 0..3 {
                        for j in 0..3 {
                            pairs.push((3 * a + i, 3 * b + j));
                        }
                    }
                }
            }
        }
    }
    SymCsr::from_pairs(n_dof, pairs)
}

pub(crate) fn scatter_tet(
    hessian: &mut SymCsr,
    tet: &[usize; 4],
    stencil: &SMatrix<f64, 12, 12>,
) {
    for (v, &gv) in tet.iter().enumerate() {
        for (u, &gu) in tet.iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    let val = stencil[(3 * v + i, 3 * u + j)];
                    if val != 0.0 {
                        hessian.add(3 * gv + i, 3 * gu + j, val);
                    }
                }
            }
        }
    }
}

pub(crate) fn scatter_tri(
    hessian: &mut SymCsr,
    tri: &[usize; 3],
    stencil: &SMatrix<f64, 9, 9>,
) {
    for (v, &gv) in tri.iter().enumerate() {
        for (u, &gu) in tri.iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    let val = stencil[(3 * v + i, 3 * u + j)];
                    if val != 0.0 {
                        hessian.add(3 * gv + i, 3 * gu + j, val);
                    }
                }
            }
        }
    }
}

/// Assembles total elastic energy, gradient, and sparse Hessian.
///
/// `W = sum_e V0_e [psi_model(F_e) + lambda U(J_e; beta)] + sum_t A0_t
/// psi_surface(F~_t)`, with the penalty term present for the deviatoric
/// model only. With `psd_project` every element stencil is eigenvalue
/// clamped at zero before scatter.
pub fn assemble(
    mesh: &TetMesh,
    x: &Displacement,
    materials: &MaterialParams,
    epidermis: Option<&EpidermisParams>,
    options: AssembleOptions,
) -> Result<Assembly, EnergyError> {
    assert_eq!(
        x.dof(),
        3 * mesh.vertex_count(),
        "position vector does not match mesh"
    );
    let n_dof = 3 * mesh.vertex_count();
    let mut gradient = vec![0.0; n_dof];
    let mut hessian = hessian_pattern(mesh);
    let mut deviatoric = 0.0;
    let mut penalty = 0.0;
    let mut epidermis_energy = 0.0;

    for e in 0..mesh.tet_count() {
        let mut stencil = tet_elastic_stencil(mesh, x, e, materials)?;
        deviatoric += stencil.deviatoric;
        penalty += stencil.penalty;
        if options.psd_project {
            stencil.hess.project_psd();
        }
        let tet = &mesh.tets()[e];
        for (v, &gv) in tet.iter().enumerate() {
            for i in 0..3 {
                gradient[3 * gv + i] += stencil.grad[3 * v + i];
            }
        }
        scatter_tet(&mut hessian, tet, &stencil.hess);
    }

    if let Some(epi) = epidermis {
        for t in 0..mesh.surface().len() {
            let mut stencil = tri_epidermis_stencil(mesh, x, t, epi);
            epidermis_energy += stencil.energy;
            if options.psd_project {
                stencil.hess.project_psd();
            }
            let tri = &mesh.surface()[t];
            for (v, &gv) in tri.iter().enumerate() {
                for i in 0..3 {
                    gradient[3 * gv + i] += stencil.grad[3 * v + i];
                }
            }
            scatter_tri(&mut hessian, tri, &stencil.hess);
        }
    }

    Ok(Assembly {
        report: EnergyReport::from_terms(deviatoric, penalty, epidermis_energy, 0.0),
        gradient,
        hessian,
        psd_projected: options.psd_project,
    })
}
