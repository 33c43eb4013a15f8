//! Auxiliary processes behind the joint transform.
//!
//! From the fundamental subordinators `Y1`, `Y2` of the two inputs, define
//!
//! ```text
//! X_L(t) = Y1(r2 t) - Y2(t),      p_L = d2^+ + r2 d1^+,
//! X_R(t) = Y1(t) - Y2(r1 t),      p_R = d1^+ + r1 d2^+,
//! ```
//!
//! whose exponents on the imaginary axis are
//! `phi_L(w) = r2 phi_Y1(w) + phi_Y2(-w)` and
//! `phi_R(w) = phi_Y1(w) + r1 phi_Y2(-w)`. Swapping the queue indices maps
//! `(phi_L, p_L)` to `(phi_R, p_R)` composed with `w -> -w`.
//!
//! The boundary constants of the transform are
//!
//! ```text
//! p_L0 = d2 + r2 d1^+ + (d1 ^ 0) / r1,
//! p_R0 = d1 + r1 d2^+ + (d2 ^ 0) / r2,
//! ```
//!
//! where `d ^ 0 = min(d, 0)` and `0/0` is read as `0` (a zero coupling forces
//! the corresponding drift positive under stability). When both drifts are
//! nonnegative these collapse to `p_L` and `p_R`.

use num_complex::Complex64;

use crate::error::Error;
use crate::first_passage::{fundamental_exponent, phi_zero};
use crate::models::{CoupledSystem, LevyModel};
use crate::Result;

/// Derived constants and exponents of a stable coupled system.
#[derive(Debug, Clone)]
pub struct AuxiliarySystem {
    system: CoupledSystem,
    pub p_left: f64,
    pub p_right: f64,
    pub p_left_zero: f64,
    pub p_right_zero: f64,
    /// `Phi_i(0)`, the lower edges of the admissible transform domain.
    pub phi1_zero: f64,
    pub phi2_zero: f64,
}

impl AuxiliarySystem {
    pub fn new(system: &CoupledSystem) -> Result<Self> {
        system.require_stable()?;
        let d1 = system.x1.drift();
        let d2 = system.x2.drift();
        let (r1, r2) = (system.r1, system.r2);
        let p_left = d2.max(0.0) + r2 * d1.max(0.0);
        let p_right = d1.max(0.0) + r1 * d2.max(0.0);

        let neg_over = |d: f64, r: f64| -> Result<f64> {
            let dn = d.min(0.0);
            if dn == 0.0 {
                Ok(0.0)
            } else if r > 0.0 {
                Ok(dn / r)
            } else {
                // unreachable under stability: r = 0 forces d > 0
                Err(Error::Unstable {
                    margin1: d,
                    margin2: d,
                })
            }
        };
        let p_left_zero = d2 + r2 * d1.max(0.0) + neg_over(d1, r1)?;
        let p_right_zero = d1 + r1 * d2.max(0.0) + neg_over(d2, r2)?;

        Ok(AuxiliarySystem {
            p_left,
            p_right,
            p_left_zero,
            p_right_zero,
            phi1_zero: phi_zero(&system.x1),
            phi2_zero: phi_zero(&system.x2),
            system: system.clone(),
        })
    }

    pub fn system(&self) -> &CoupledSystem {
        &self.system
    }

    pub fn model(&self, queue: usize) -> &LevyModel {
        match queue {
            1 => &self.system.x1,
            2 => &self.system.x2,
            _ => panic!("queue index must be 1 or 2"),
        }
    }

    /// `phi_Y1(a)`.
    pub fn fundamental1(&self, a: Complex64) -> Result<Complex64> {
        fundamental_exponent(&self.system.x1, a)
    }

    /// `phi_Y2(a)`.
    pub fn fundamental2(&self, a: Complex64) -> Result<Complex64> {
        fundamental_exponent(&self.system.x2, a)
    }

    /// Exponent of `X_L`: `r2 phi_Y1(w) + phi_Y2(-w)`.
    pub fn phi_left(&self, w: Complex64) -> Result<Complex64> {
        let up = if self.system.r2 > 0.0 {
            self.system.r2 * self.fundamental1(w)?
        } else {
            Complex64::new(0.0, 0.0)
        };
        Ok(up + self.fundamental2(-w)?)
    }

    /// Exponent of `X_R`: `phi_Y1(w) + r1 phi_Y2(-w)`.
    pub fn phi_right(&self, w: Complex64) -> Result<Complex64> {
        let down = if self.system.r1 > 0.0 {
            self.system.r1 * self.fundamental2(-w)?
        } else {
            Complex64::new(0.0, 0.0)
        };
        Ok(self.fundamental1(w)? + down)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::JumpLaw;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn mm1(service: f64) -> LevyModel {
        LevyModel::CompoundPoisson {
            rate: 1.0,
            jumps: JumpLaw::Exponential { rate: 2.0 },
            service,
        }
    }

    #[test]
    fn independent_case_constants() {
        let sys = CoupledSystem::new(mm1(1.0), mm1(1.2), 0.0, 0.0).unwrap();
        let aux = AuxiliarySystem::new(&sys).unwrap();
        assert_relative_eq!(aux.p_right, 0.5);
        assert_relative_eq!(aux.p_left, 0.7);
        assert_relative_eq!(aux.p_right_zero, 0.5);
        assert_relative_eq!(aux.p_left_zero, 0.7);
    }

    #[test]
    fn nonnegative_drifts_collapse() {
        let sys = CoupledSystem::new(mm1(1.0), mm1(1.2), 0.4, 0.3).unwrap();
        let aux = AuxiliarySystem::new(&sys).unwrap();
        assert_relative_eq!(aux.p_left_zero, aux.p_left);
        assert_relative_eq!(aux.p_right_zero, aux.p_right);
    }

    #[test]
    fn negative_drift_regime() {
        // d1 = -0.5, X2 pure drift d2 = 2, r1 = 0.5, r2 = 0.25
        let x1 = LevyModel::CompoundPoisson {
            rate: 1.0,
            jumps: JumpLaw::Exponential { rate: 1.0 },
            service: 0.5,
        };
        let x2 = LevyModel::PureDrift { rate: 2.0 };
        let sys = CoupledSystem::new(x1, x2, 0.5, 0.25).unwrap();
        let aux = AuxiliarySystem::new(&sys).unwrap();
        assert_relative_eq!(aux.p_right, 1.0); // d1^+ + r1 d2 = 0 + 1
        assert_relative_eq!(aux.p_left, 2.0); // d2 + r2 d1^+ = 2
        assert_relative_eq!(aux.p_right_zero, 0.5); // r1 d2 + d1
        assert_relative_eq!(aux.p_left_zero, 1.0); // d2 + d1 / r1
        assert_relative_eq!(aux.p_left_zero, aux.p_right_zero / sys.r1);
        // stability makes all of them positive
        assert!(aux.p_left > 0.0 && aux.p_right > 0.0);
        assert!(aux.p_left_zero > 0.0 && aux.p_right_zero > 0.0);
    }

    #[test]
    fn exponent_combination_identity() {
        let sys = CoupledSystem::new(mm1(1.0), mm1(1.2), 0.5, 0.5).unwrap();
        let aux = AuxiliarySystem::new(&sys).unwrap();
        for &t in &[0.2, 1.0, -3.0, 12.0] {
            let w = c(0.0, t);
            let left = aux.phi_left(w).unwrap();
            let direct =
                sys.r2 * aux.fundamental1(w).unwrap() + aux.fundamental2(-w).unwrap();
            assert_relative_eq!(left.re, direct.re, epsilon = 1e-13);
            assert_relative_eq!(left.im, direct.im, epsilon = 1e-13);
        }
    }

    #[test]
    fn index_interchange_swaps_sides() {
        let sys = CoupledSystem::new(mm1(1.0), mm1(1.3), 0.4, 0.7).unwrap();
        let aux = AuxiliarySystem::new(&sys).unwrap();
        let rev = AuxiliarySystem::new(&sys.reversed()).unwrap();
        assert_relative_eq!(aux.p_left, rev.p_right);
        assert_relative_eq!(aux.p_right, rev.p_left);
        for &t in &[0.5, -2.0, 7.0] {
            let w = c(0.0, t);
            let a = aux.phi_left(w).unwrap();
            let b = rev.phi_right(-w).unwrap();
            assert_relative_eq!(a.re, b.re, epsilon = 1e-13);
            assert_relative_eq!(a.im, b.im, epsilon = 1e-13);
        }
    }

    #[test]
    fn exponents_have_nonpositive_real_part_on_axis() {
        let sys = CoupledSystem::new(mm1(1.0), mm1(1.2), 0.5, 0.5).unwrap();
        let aux = AuxiliarySystem::new(&sys).unwrap();
        for k in 0..50 {
            let w = c(0.0, -40.0 + 80.0 * k as f64 / 49.0);
            if w.im == 0.0 {
                continue;
            }
            assert!(aux.phi_left(w).unwrap().re <= 1e-12);
            assert!(aux.phi_right(w).unwrap().re <= 1e-12);
        }
    }

    #[test]
    fn unstable_rejected() {
        let x = LevyModel::Brownian {
            drift: -1.0,
            volatility: 1.0,
        };
        let sys = CoupledSystem::new(x.clone(), x, 0.1, 0.1).unwrap();
        assert!(matches!(
            AuxiliarySystem::new(&sys),
            Err(Error::Unstable { .. })
        ));
    }
}
