//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{Matrix3, SMatrix, Vector3};

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
#[inline]
pub fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Cofactor matrix of `f`, i.e. the gradient of `det(f)` with respect to `f`.
///
/// Unlike `det(f) * f.try_inverse()`, this stays well defined for singular
/// and inverted inputs.
pub fn cofactor(f: &Matrix3<f64>) -> Matrix3<f64> {
    let c0 = f.column(1).cross(&f.column(2));
    let c1 = f.column(2).cross(&f.column(0));
    let c2 = f.column(0).cross(&f.column(1));
    Matrix3::from_columns(&[c0, c1, c2])
}

/// Hessian of `det(f)` with respect to `f`, in column-major 9x9 layout.
///
/// Off-diagonal 3x3 blocks are cross-product matrices of the remaining
/// column; diagonal blocks vanish because the determinant is linear in each
/// column.
pub fn det_hessian(f: &Matrix3<f64>) -> SMatrix<f64, 9, 9> {
    let f0: Vector3<f64> = f.column(0).into();
    let f1: Vector3<f64> = f.column(1).into();
    let f2: Vector3<f64> = f.column(2).into();
    let mut h = SMatrix::<f64, 9, 9>::zeros();
    // d(f1 x f2)/df1 = -[f2]x, etc.; block(c, d) = d^2 det / df_c df_d.
    let b01 = -skew(&f2);
    let b02 = skew(&f1);
    let b12 = -skew(&f0);
    h.fixed_view_mut::<3, 3>(0, 3).copy_from(&b01);
    h.fixed_view_mut::<3, 3>(3, 0).copy_from(&b01.transpose());
    h.fixed_view_mut::<3, 3>(0, 6).copy_from(&b02);
    h.fixed_view_mut::<3, 3>(6, 0).copy_from(&b02.transpose());
    h.fixed_view_mut::<3, 3>(3, 6).copy_from(&b12);
    h.fixed_view_mut::<3, 3>(6, 3).copy_from(&b12.transpose());
    h
}

/// Eigenvalue clamping at zero for symmetric element stencils.
pub trait ProjectPsd {
    /// Clamps the eigenvalues of a symmetric matrix at zero.
    ///
    /// The input is symmetrized first so that accumulated round-off cannot
    /// feed an unsymmetric matrix to the eigensolver.
    fn project_psd(&mut self);
}

macro_rules! impl_project_psd {
    ($($n:literal),*) => {$(
        impl ProjectPsd for SMatrix<f64, $n, $n> {
            fn project_psd(&mut self) {
                let sym = (*self + self.transpose()) * 0.5;
                let eig = sym.symmetric_eigen();
                let mut out = SMatrix::<f64, $n, $n>::zeros();
                for (k, &val) in eig.eigenvalues.iter().enumerate() {
                    if val > 0.0 {
                        let v = eig.eigenvectors.column(k);
                        out += v * v.transpose() * val;
                    }
                }
                *self = out;
            }
        }
    )*};
}

impl_project_psd!(3, 6, 9, 12);

/// Closest point to `p` on triangle `(a, b, c)`.
pub fn closest_point_on_triangle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Vector3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Barycentric coordinates of `p` with respect to triangle `(a, b, c)`.
///
/// `p` is assumed to lie in (or near) the triangle plane; the coordinates of
/// its in-plane projection are returned.
pub fn barycentric(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> [f64; 3] {
    let v0 = b - a;
    let v1 = c - a;
    let v2 = p - a;
    let d00 = v0.dot(&v0);
    let d01 = v0.dot(&v1);
    let d11 = v1.dot(&v1);
    let d20 = v2.dot(&v0);
    let d21 = v2.dot(&v1);
    let denom = d00 * d11 - d01 * d01;
    if denom.abs() < f64::MIN_POSITIVE {
        return [1.0, 0.0, 0.0];
    }
    let v = (d11 * d20 - d01 * d21) / denom;
    let w = (d00 * d21 - d01 * d20) / denom;
    [1.0 - v - w, v, w]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn skew_matches_cross() {
        let a = Vector3::new(1.0, -2.0, 0.5);
        let b = Vector3::new(0.3, 4.0, -1.0);
        assert_relative_eq!(skew(&a) * b, a.cross(&b), epsilon = 1e-14);
    }

    #[test]
    fn cofactor_times_transpose_is_det_identity() {
        let f = Matrix3::new(2.0, 0.3, -0.1, 0.0, 1.5, 0.2, 0.4, -0.2, 0.9);
        let det = f.determinant();
        let prod = cofactor(&f).transpose() * f;
        assert_relative_eq!(prod, Matrix3::identity() * det, epsilon = 1e-12);
    }

    #[test]
    fn psd_projection_clamps_negative_modes() {
        let mut m = SMatrix::<f64, 3, 3>::from_diagonal(&Vector3::new(2.0, -1.0, 0.5));
        m.project_psd();
        let eig = m.symmetric_eigen();
        for &v in eig.eigenvalues.iter() {
            assert!(v >= -1e-14);
        }
        assert_relative_eq!(m[(0, 0)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(m[(1, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn closest_point_cases() {
        let a = Vector3::new(0.0, 0.0, 0.0);
        let b = Vector3::new(1.0, 0.0, 0.0);
        let c = Vector3::new(0.0, 1.0, 0.0);
        // Above the interior: projects straight down.
        let q = closest_point_on_triangle(&Vector3::new(0.25, 0.25, 1.0), &a, &b, &c);
        assert_relative_eq!(q, Vector3::new(0.25, 0.25, 0.0), epsilon = 1e-14);
        // Beyond a vertex: snaps to the vertex.
        let q = closest_point_on_triangle(&Vector3::new(2.0, -1.0, 0.3), &a, &b, &c);
        assert_relative_eq!(q, b, epsilon = 1e-14);
        // Past an edge: lands on it.
        let q = closest_point_on_triangle(&Vector3::new(0.5, -1.0, 0.0), &a, &b, &c);
        assert_relative_eq!(q, Vector3::new(0.5, 0.0, 0.0), epsilon = 1e-14);
    }

    #[test]
    fn barycentric_recovers_point() {
        let a = Vector3::new(0.0, 0.0, 1.0);
        let b = Vector3::new(2.0, 0.0, 1.0);
        let c = Vector3::new(0.0, 3.0, 1.0);
        let p = a * 0.2 + b * 0.5 + c * 0.3;
        let w = barycentric(&p, &a, &b, &c);
        assert_relative_eq!(w[0], 0.2, epsilon = 1e-12);
        assert_relative_eq!(w[1], 0.5, epsilon = 1e-12);
        assert_relative_eq!(w[2], 0.3, epsilon = 1e-12);
    }
}
