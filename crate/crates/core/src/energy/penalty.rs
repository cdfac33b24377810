//! Compression penalty family.
//!
//! `U(J; beta) = (1/12)(J-1)^2 [beta (J-1)^2 + 6]` is finite for all real
//! `J`, vanishes with zero slope at rest, has unit curvature at `J = 1` so
//! the scaling coefficient keeps its linear-elastic meaning, and has convex
//! second derivative `beta (J-1)^2 + 1 >= 1`. At `beta = 0` it reduces to
//! the quadratic volumetric term `(1/2)(J-1)^2`.

use super::EnergyError;

/// Penalty value `U(J; beta)`.
#[inline]
pub fn penalty_u(j: f64, beta: f64) -> f64 {
    let d = j - 1.0;
    d * d * (beta * d * d + 6.0) / 12.0
}

/// First derivative `dU/dJ = (1/3)(J-1)[beta (J-1)^2 + 3]`.
#[inline]
pub fn penalty_du(j: f64, beta: f64) -> f64 {
    let d = j - 1.0;
    d * (beta * d * d + 3.0) / 3.0
}

/// Second derivative `d2U/dJ2 = beta (J-1)^2 + 1`.
#[inline]
pub fn penalty_d2u(j: f64, beta: f64) -> f64 {
    let d = j - 1.0;
    beta * d * d + 1.0
}

/// Generalized penalty of order `n >= 1` as `(value, dU/dJ, d2U/dJ2)`.
///
/// Built from the prescribed curvature `beta (J-1)^(2n) + 1`:
/// `U_n(J; beta) = (J-1)^2 [beta (J-1)^(2n) + m/2] / m` with
/// `m = (2n+1)(2n+2)`. Order 1 reproduces [`penalty_u`] exactly.
pub fn penalty_un(j: f64, beta: f64, n: u32) -> Result<(f64, f64, f64), EnergyError> {
    if n == 0 {
        return Err(EnergyError::InvalidParameter(
            "penalty order n must be at least 1".to_string(),
        ));
    }
    let d = j - 1.0;
    let m = ((2 * n + 1) * (2 * n + 2)) as f64;
    let d2n = d.powi(2 * n as i32);
    let value = d * d * (beta * d2n + 0.5 * m) / m;
    let first = beta * d2n * d / (2 * n + 1) as f64 + d;
    let second = beta * d2n + 1.0;
    Ok((value, first, second))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const BETAS: [f64; 4] = [0.0, 1.0, 6.0, 9.0];

    #[test]
    fn rest_conditions_hold_exactly() {
        for beta in BETAS {
            assert_eq!(penalty_u(1.0, beta), 0.0);
            assert_eq!(penalty_du(1.0, beta), 0.0);
            assert_eq!(penalty_d2u(1.0, beta), 1.0);
        }
    }

    #[test]
    fn finite_everywhere() {
        for beta in BETAS {
            for j in [-100.0, 0.0, 100.0] {
                assert!(penalty_u(j, beta).is_finite());
                assert!(penalty_du(j, beta).is_finite());
                assert!(penalty_d2u(j, beta).is_finite());
            }
        }
    }

    #[test]
    fn beta_zero_is_quadratic() {
        for i in 0..100 {
            let j = -3.0 + 0.07 * i as f64;
            let d = j - 1.0;
            assert_relative_eq!(penalty_u(j, 0.0), 0.5 * d * d, epsilon = 1e-12);
        }
    }

    #[test]
    fn frozen_values() {
        // beta = 0, J = 3: (1/2)(2)^2 = 2.
        assert_relative_eq!(penalty_u(3.0, 0.0), 2.0, epsilon = 1e-15);
        // beta = 6, J = 0: (1/12)(1)(6 + 6) = 1.
        assert_relative_eq!(penalty_u(0.0, 6.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn curvature_at_least_one() {
        for beta in BETAS {
            for i in 0..=1000 {
                let j = -10.0 + 0.02 * i as f64;
                assert!(penalty_d2u(j, beta) >= 1.0);
                assert!(penalty_u(j, beta) >= 0.0);
            }
        }
    }

    #[test]
    fn stress_ordering_under_compression() {
        // Steeper beta means stronger stress response for J in (0, 1).
        for i in 1..100 {
            let j = i as f64 / 100.0;
            let s0 = penalty_du(j, 0.0).abs();
            let s1 = penalty_du(j, 1.0).abs();
            let s6 = penalty_du(j, 6.0).abs();
            assert!(s6 >= s1 && s1 >= s0, "ordering violated at J = {j}");
        }
    }

    #[test]
    fn order_one_matches_base_penalty() {
        for beta in BETAS {
            for i in 0..50 {
                let j = -2.0 + 0.1 * i as f64;
                let (u, du, d2u) = penalty_un(j, beta, 1).unwrap();
                assert_relative_eq!(u, penalty_u(j, beta), epsilon = 1e-12);
                assert_relative_eq!(du, penalty_du(j, beta), epsilon = 1e-12);
                assert_relative_eq!(d2u, penalty_d2u(j, beta), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn order_two_frozen_values() {
        let (u, _, _) = penalty_un(1.0, 17.0, 2).unwrap();
        assert_eq!(u, 0.0);
        // U2(2; 30) = (1/30)(1)(30 + 15) = 1.5.
        let (u, _, _) = penalty_un(2.0, 30.0, 2).unwrap();
        assert_relative_eq!(u, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn second_derivative_formula() {
        for n in 1..=4u32 {
            for i in 0..40 {
                let j = -1.5 + 0.12 * i as f64;
                let beta = 2.5;
                let (_, _, d2u) = penalty_un(j, beta, n).unwrap();
                let expected = beta * (j - 1.0).powi(2 * n as i32) + 1.0;
                assert_relative_eq!(d2u, expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn order_zero_rejected() {
        assert!(penalty_un(0.5, 1.0, 0).is_err());
    }
}
