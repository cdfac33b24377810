//! Energy density functions and their analytic first and second derivatives
//! with respect to the deformation gradient.

use nalgebra::{Matrix3, Matrix3x2, SMatrix, Vector3};

use super::penalty::{penalty_d2u, penalty_du, penalty_u};
use super::EnergyError;
use crate::math::{cofactor, det_hessian, skew};

/// Energy density with derivatives with respect to a 3x3 deformation
/// gradient. The Hessian uses column-major ordering of `F`.
#[derive(Debug, Clone)]
pub struct DensityEval {
    pub value: f64,
    pub gradient: Matrix3<f64>,
    pub hessian: SMatrix<f64, 9, 9>,
}

/// Energy density with derivatives with respect to a 3x2 reduced
/// deformation gradient (column-major ordering, 6 components).
#[derive(Debug, Clone)]
pub struct SurfaceDensityEval {
    pub value: f64,
    pub gradient: Matrix3x2<f64>,
    pub hessian: SMatrix<f64, 6, 6>,
}

/// Lamé parameters `(lambda, mu)` from Young's modulus and Poisson's ratio.
///
/// `lambda = E nu / ((1 + nu)(1 - 2 nu))`, `mu = E / (2 (1 + nu))`.
pub fn lame_from_young_poisson(e: f64, nu: f64) -> Result<(f64, f64), EnergyError> {
    if !(e > 0.0) {
        return Err(EnergyError::InvalidParameter(format!(
            "Young's modulus must be positive, got {e}"
        )));
    }
    if nu == 0.5 {
        return Err(EnergyError::IncompressibleLimit);
    }
    if !(-1.0 < nu && nu < 0.5) {
        return Err(EnergyError::InvalidParameter(format!(
            "Poisson's ratio must lie in (-1, 0.5), got {nu}"
        )));
    }
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = e / (2.0 * (1.0 + nu));
    Ok((lambda, mu))
}

/// Standard neo-Hookean density with logarithmic volume terms:
/// `psi = (mu/2)(I_C - 3) - mu log J + (lambda/2)(log J)^2`.
///
/// Undefined for inverted elements (`det F <= 0`).
pub fn psi_unh(f: &Matrix3<f64>, lambda: f64, mu: f64) -> Result<DensityEval, EnergyError> {
    let j = f.determinant();
    if !(j > 0.0) {
        return Err(EnergyError::InvertedElement { det_f: j });
    }
    let i_c = f.norm_squared();
    let log_j = j.ln();
    let value = 0.5 * mu * (i_c - 3.0) - mu * log_j + 0.5 * lambda * log_j * log_j;

    let f_inv_t = cofactor(f) / j;
    let gradient = f * mu + f_inv_t * (lambda * log_j - mu);

    // H[(i,j),(k,l)] = mu d_ik d_jl + lambda B_ij B_kl + (mu - lambda log J) B_il B_kj
    // with B = F^{-T}.
    let mut hessian = SMatrix::<f64, 9, 9>::identity() * mu;
    let coeff = mu - lambda * log_j;
    for jj in 0..3 {
        for i in 0..3 {
            let row = i + 3 * jj;
            for ll in 0..3 {
                for k in 0..3 {
                    let col = k + 3 * ll;
                    hessian[(row, col)] += lambda * f_inv_t[(i, jj)] * f_inv_t[(k, ll)]
                        + coeff * f_inv_t[(i, ll)] * f_inv_t[(k, jj)];
                }
            }
        }
    }

    Ok(DensityEval {
        value,
        gradient,
        hessian,
    })
}

/// Deviatoric rescaling factor with quadratic extension below `epsilon`:
/// `J^(-1/3)` for `J > epsilon`, otherwise the second-order Taylor
/// polynomial about `epsilon`, which matches value, slope, and curvature at
/// the branch point. Returns `(value, d/dJ, d2/dJ2)`; defined for all real
/// `J`.
pub fn alpha_tilde(j: f64, epsilon: f64) -> (f64, f64, f64) {
    debug_assert!(epsilon > 0.0 && epsilon < 1.0);
    if j > epsilon {
        let a = j.cbrt().recip();
        let a1 = -a / (3.0 * j);
        let a2 = 4.0 * a / (9.0 * j * j);
        (a, a1, a2)
    } else {
        let e1 = epsilon.cbrt().recip(); // epsilon^(-1/3)
        let e4 = e1 / epsilon; // epsilon^(-4/3)
        let e7 = e4 / epsilon; // epsilon^(-7/3)
        let d = j - epsilon;
        let value = e1 - e4 * d / 3.0 + 2.0 * e7 * d * d / 9.0;
        let first = -e4 / 3.0 + 4.0 * e7 * d / 9.0;
        let second = 4.0 * e7 / 9.0;
        (value, first, second)
    }
}

/// Value-only evaluation of [`psi_unh`].
pub fn psi_unh_value(f: &Matrix3<f64>, lambda: f64, mu: f64) -> Result<f64, EnergyError> {
    let j = f.determinant();
    if !(j > 0.0) {
        return Err(EnergyError::InvertedElement { det_f: j });
    }
    let log_j = j.ln();
    Ok(0.5 * mu * (f.norm_squared() - 3.0) - mu * log_j + 0.5 * lambda * log_j * log_j)
}

/// Value-only evaluation of [`psi_dev_nh`].
pub fn psi_dev_nh_value(f: &Matrix3<f64>, mu: f64, epsilon: f64) -> f64 {
    let (a, _, _) = alpha_tilde(f.determinant(), epsilon);
    0.5 * mu * (a * a * f.norm_squared() - 3.0)
}

/// Value-only evaluation of [`psi_epidermis`].
pub fn psi_epidermis_value(ftilde: &Matrix3x2<f64>, gamma: f64, lambda_e: f64) -> f64 {
    let f1: Vector3<f64> = ftilde.column(0).into();
    let f2: Vector3<f64> = ftilde.column(1).into();
    lambda_e * penalty_u(f1.cross(&f2).norm(), gamma)
}

/// Deviatoric neo-Hookean density under the volume-preserving rescaling:
/// `psi = (mu/2)(alpha~(J)^2 I_C - 3)`.
///
/// Defined for all deformation gradients, including inverted ones, via the
/// extension in [`alpha_tilde`].
pub fn psi_dev_nh(f: &Matrix3<f64>, mu: f64, epsilon: f64) -> DensityEval {
    let j = f.determinant();
    let i_c = f.norm_squared();
    let (a, a1, a2) = alpha_tilde(j, epsilon);
    let g_j = cofactor(f);

    let value = 0.5 * mu * (a * a * i_c - 3.0);
    let gradient = g_j * (mu * a * a1 * i_c) + f * (mu * a * a);

    let vg = flatten(&g_j);
    let vf = flatten(f);
    let mut hessian = det_hessian(f) * (mu * a * a1 * i_c);
    hessian += vg * vg.transpose() * (mu * (a1 * a1 + a * a2) * i_c);
    let cross = vg * vf.transpose() * (2.0 * mu * a * a1);
    hessian += cross + cross.transpose();
    hessian += SMatrix::<f64, 9, 9>::identity() * (mu * a * a);

    DensityEval {
        value,
        gradient,
        hessian,
    }
}

/// Surface area-preservation density for the stiff outer skin layer:
/// `psi = lambda_e * U(J~; gamma)` with `J~` the area ratio
/// `sqrt(det(F~^T F~))` of the 3x2 reduced deformation gradient.
pub fn psi_epidermis(ftilde: &Matrix3x2<f64>, gamma: f64, lambda_e: f64) -> SurfaceDensityEval {
    let f1: Vector3<f64> = ftilde.column(0).into();
    let f2: Vector3<f64> = ftilde.column(1).into();
    let w = f1.cross(&f2);
    let jt = w.norm();

    let value = lambda_e * penalty_u(jt, gamma);
    if jt < 1e-30 {
        // Degenerate triangle: the area gradient direction is undefined.
        return SurfaceDensityEval {
            value,
            gradient: Matrix3x2::zeros(),
            hessian: SMatrix::<f64, 6, 6>::zeros(),
        };
    }
    let du = lambda_e * penalty_du(jt, gamma);
    let d2u = lambda_e * penalty_d2u(jt, gamma);

    let w_hat = w / jt;
    // dJ~/df1 = f2 x w^, dJ~/df2 = w^ x f1.
    let q1 = f2.cross(&w_hat);
    let q2 = w_hat.cross(&f1);
    let q = Matrix3x2::from_columns(&[q1, q2]);
    let gradient = q * du;

    // Hessian of J~ over stacked (f1, f2): Gauss part K_c^T P K_d / J~ plus
    // the bilinear cross terms of w = f1 x f2.
    let p = Matrix3::identity() - w_hat * w_hat.transpose();
    let k1 = -skew(&f2);
    let k2 = skew(&f1);
    let mut hj = SMatrix::<f64, 6, 6>::zeros();
    let b11 = k1.transpose() * p * k1 / jt;
    let b12 = k1.transpose() * p * k2 / jt - skew(&w_hat);
    let b22 = k2.transpose() * p * k2 / jt;
    hj.fixed_view_mut::<3, 3>(0, 0).copy_from(&b11);
    hj.fixed_view_mut::<3, 3>(0, 3).copy_from(&b12);
    hj.fixed_view_mut::<3, 3>(3, 0).copy_from(&b12.transpose());
    hj.fixed_view_mut::<3, 3>(3, 3).copy_from(&b22);

    let vq = flatten32(&q);
    let hessian = vq * vq.transpose() * d2u + hj * du;

    SurfaceDensityEval {
        value,
        gradient,
        hessian,
    }
}

#[inline]
fn flatten(m: &Matrix3<f64>) -> SMatrix<f64, 9, 1> {
    SMatrix::<f64, 9, 1>::from_column_slice(m.as_slice())
}

#[inline]
fn flatten32(m: &Matrix3x2<f64>) -> SMatrix<f64, 6, 1> {
    SMatrix::<f64, 6, 1>::from_column_slice(m.as_slice())
}
