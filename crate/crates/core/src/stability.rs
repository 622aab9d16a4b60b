//! Linear stability of the disease-free equilibrium and reproduction numbers.
//!
//! Only the infected block (E, I_A, I_S) matters at the disease-free state, so
//! the Jacobian is 3x3 and its characteristic polynomial is a monic cubic that
//! is tested with Jury's criterion.

use serde::{Deserialize, Serialize};

use crate::model::{CompartmentState, EpiParams};
use crate::{Error, Result, Scalar};

/// Conditions closer than this to equality are treated as boundary cases.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// `F(z) = a3 z^3 + a2 z^2 + a1 z + a0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharPoly3<T> {
    pub a3: T,
    pub a2: T,
    pub a1: T,
    pub a0: T,
}

impl<T: Scalar> CharPoly3<T> {
    pub fn eval(&self, z: T) -> T {
        ((self.a3 * z + self.a2) * z + self.a1) * z + self.a0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JuryReport<T> {
    pub stable: bool,
    /// Set when some condition holds only up to [`BOUNDARY_TOL`]; such cases are reported unstable.
    pub boundary: bool,
    pub f_at_1: T,
    /// `(-1)^3 F(-1)`.
    pub f_at_minus1_signed: T,
    pub abs_a0_lt_a3: bool,
    pub abs_b0_gt_abs_b2: bool,
    pub b0: T,
    pub b2: T,
}

/// Jacobian of `(E, I_A, I_S)` at the disease-free state.
pub fn disease_free_jacobian<T: Scalar>(params: &EpiParams<T>, beta: T) -> [[T; 3]; 3] {
    let one = T::one();
    let zero = T::zero();
    let EpiParams {
        sigma,
        h,
        delta_a,
        epsilon,
        ..
    } = *params;
    [
        [one - sigma, beta, beta],
        [(one - epsilon) * sigma, one - delta_a, zero],
        [epsilon * sigma, zero, one - h],
    ]
}

/// Characteristic polynomial of [`disease_free_jacobian`] from its closed-form coefficients.
pub fn char_poly<T: Scalar>(params: &EpiParams<T>, beta: T) -> CharPoly3<T> {
    let EpiParams {
        sigma: s,
        h,
        delta_a: da,
        epsilon: eps,
        ..
    } = *params;
    let b = beta;
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    CharPoly3 {
        a3: T::one(),
        a2: da + h + s - three,
        a1: da * h - two * h - two * s - two * da - b * s + da * s + h * s + three,
        a0: da + h + s - da * h + b * s - da * s - h * s - b * h * s + da * h * s + b * eps * h * s
            - b * da * eps * s
            - T::one(),
    }
}

/// Jury's test for a cubic: all roots strictly inside the unit circle iff
/// `F(1) > 0`, `-F(-1) > 0`, `|a0| < a3` and `|b0| > |b2|`.
pub fn jury_test<T: Scalar>(p: &CharPoly3<T>) -> JuryReport<T> {
    let tol = T::lit(BOUNDARY_TOL);
    let f_at_1 = p.eval(T::one());
    let f_at_minus1_signed = -p.eval(-T::one());
    let b0 = p.a0 * p.a0 - p.a3 * p.a3;
    let b2 = p.a0 * p.a2 - p.a1 * p.a3;

    // Each margin must be positive for stability.
    let margins = [
        f_at_1,
        f_at_minus1_signed,
        p.a3 - p.a0.abs(),
        b0.abs() - b2.abs(),
    ];
    let strict = margins.map(|m| m > T::zero());
    let boundary = margins.iter().any(|m| m.abs() <= tol);

    JuryReport {
        stable: strict.iter().all(|&ok| ok) && !boundary,
        boundary,
        f_at_1,
        f_at_minus1_signed,
        abs_a0_lt_a3: strict[2],
        abs_b0_gt_abs_b2: strict[3],
        b0,
        b2,
    }
}

/// Basic reproduction number `beta * ((1 - eps)/delta_a + eps/h)`.
pub fn r0<T: Scalar>(params: &EpiParams<T>, beta: T) -> T {
    let one = T::one();
    beta * ((one - params.epsilon) / params.delta_a + params.epsilon / params.h)
}

/// Effective reproduction number for the day following `state`:
/// `R0 * S / (N - D - Q - H)`, all taken from `state`.
pub fn r_eff<T: Scalar>(state: &CompartmentState<T>, params: &EpiParams<T>, beta: T) -> Result<T> {
    let denom = state.mixing_population(params.population);
    if !(denom > T::zero()) {
        return Err(Error::DenominatorNonpositive {
            day: state.day + 1,
            value: denom.to_f64_lossy(),
        });
    }
    Ok(r0(params, beta) * state.s / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::initial_state;

    fn nominal() -> EpiParams<f64> {
        EpiParams::lombardy_early()
    }

    /// Coefficients of det(zI - J) by cofactor expansion, sampled at four points
    /// and interpolated; independent of the closed forms.
    fn det_poly(j: &[[f64; 3]; 3]) -> [f64; 4] {
        let det_at = |z: f64| {
            let m = [
                [z - j[0][0], -j[0][1], -j[0][2]],
                [-j[1][0], z - j[1][1], -j[1][2]],
                [-j[2][0], -j[2][1], z - j[2][2]],
            ];
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        // Monic cubic: recover a0..a2 from values at z = 0, 1, -1.
        let f0 = det_at(0.0);
        let f1 = det_at(1.0);
        let fm1 = det_at(-1.0);
        let a0 = f0;
        let a2 = (f1 + fm1) / 2.0 - a0;
        let a1 = (f1 - fm1) / 2.0 - 1.0;
        [1.0, a2, a1, a0]
    }

    #[test]
    fn jacobian_with_unit_rates_and_no_transmission() {
        let mut p = nominal();
        p.sigma = 1.0;
        p.delta_a = 1.0;
        p.h = 1.0;
        p.epsilon = 0.3;
        let j = disease_free_jacobian(&p, 0.0);
        assert_eq!(j, [[0.0, 0.0, 0.0], [0.7, 0.0, 0.0], [0.3, 0.0, 0.0]]);
    }

    #[test]
    fn jacobian_nominal_entries() {
        let j = disease_free_jacobian(&nominal(), 0.68);
        assert!((j[0][0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(j[0][1], 0.68);
        assert!((j[1][0] - 0.88 / 3.0).abs() < 1e-15);
        assert!((j[1][1] - (1.0 - 1.0 / 6.6)).abs() < 1e-15);
        assert!((j[2][0] - 0.04).abs() < 1e-15);
        assert!((j[2][2] - 6.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn jacobian_decouples_symptomatic_without_epsilon() {
        let mut p = nominal();
        p.epsilon = 0.0;
        let j = disease_free_jacobian(&p, 0.68);
        assert_eq!(j[2], [0.0, 0.0, 1.0 - p.h]);
    }

    #[test]
    fn a2_examples() {
        let mut p = nominal();
        let c = char_poly(&p, 0.68);
        assert!((c.a2 - (1.0 / 6.6 + 1.0 / 7.0 + 1.0 / 3.0 - 3.0)).abs() < 1e-15);
        assert!((c.a2 + 2.3723).abs() < 1e-4);
        p.sigma = 1.0;
        p.delta_a = 1.0;
        p.h = 1.0;
        assert_eq!(char_poly(&p, 0.0).a2, 0.0);
    }

    #[test]
    fn closed_form_matches_determinant_expansion() {
        for (beta, eps) in [(0.0, 0.0), (0.68, 0.12), (0.1, 0.5), (1.7, 1.0)] {
            let mut p = nominal();
            p.epsilon = eps;
            let c = char_poly(&p, beta);
            let oracle = det_poly(&disease_free_jacobian(&p, beta));
            let got = [c.a3, c.a2, c.a1, c.a0];
            for k in 0..4 {
                assert!((got[k] - oracle[k]).abs() < 1e-12, "beta={beta} eps={eps} k={k}");
            }
        }
    }

    #[test]
    fn jury_on_pure_cubic() {
        let p = CharPoly3 {
            a3: 1.0,
            a2: 0.0,
            a1: 0.0,
            a0: 0.0,
        };
        let r = jury_test(&p);
        assert!(r.stable && !r.boundary);
    }

    #[test]
    fn jury_nominal_transmission_is_unstable() {
        let r = jury_test(&char_poly(&nominal(), 0.68));
        assert!(!r.stable);
        assert!(r.f_at_1 < 0.0);
    }

    #[test]
    fn jury_low_transmission_is_stable() {
        assert!(r0(&nominal(), 0.10) < 1.0);
        assert!(jury_test(&char_poly(&nominal(), 0.10)).stable);
    }

    #[test]
    fn root_on_unit_circle_is_boundary() {
        // (z - 1) z^2
        let p = CharPoly3 {
            a3: 1.0,
            a2: -1.0,
            a1: 0.0,
            a0: 0.0,
        };
        let r = jury_test(&p);
        assert!(r.boundary);
        assert!(!r.stable);
    }

    #[test]
    fn r0_examples() {
        let mut p = nominal();
        assert!((r0(&p, 0.68) - 4.52064).abs() < 1e-5);
        assert_eq!(r0(&p, 0.0), 0.0);
        p.epsilon = 0.0;
        assert!((r0(&p, 0.68) - 0.68 * 6.6).abs() < 1e-12);
    }

    #[test]
    fn r_eff_examples() {
        let p = nominal();
        let n = p.population;
        let x0 = initial_state(n).unwrap();
        let re = r_eff(&x0, &p, 0.68).unwrap();
        assert!((re - r0(&p, 0.68) * (n - 1.0) / n).abs() < 1e-12);

        let half = CompartmentState {
            s: n / 2.0,
            ..x0
        };
        assert!((r_eff(&half, &p, 0.68).unwrap() - r0(&p, 0.68) / 2.0).abs() < 1e-12);
        let depleted = CompartmentState { s: 0.0, ..x0 };
        assert_eq!(r_eff(&depleted, &p, 0.68).unwrap(), 0.0);
    }

    #[test]
    fn r_eff_moves_with_susceptibles_and_denominator() {
        let p = nominal();
        let x = CompartmentState {
            s: 6.0e6,
            h: 1.0e4,
            q: 2.0e4,
            d: 5.0e3,
            r_a: 3.965e6,
            ..Default::default()
        };
        let base = r_eff(&x, &p, 0.5).unwrap();
        let more_s = CompartmentState { s: x.s + 1.0e3, ..x };
        assert!(r_eff(&more_s, &p, 0.5).unwrap() > base);
        let more_h = CompartmentState { h: x.h + 1.0e3, ..x };
        assert!(r_eff(&more_h, &p, 0.5).unwrap() > base, "smaller mixing denominator raises R_e");
    }
}
