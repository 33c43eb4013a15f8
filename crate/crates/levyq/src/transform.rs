//! The joint stationary workload transform and everything read off it.
//!
//! For a stable system the transform of `(W1, W2)` is
//!
//! ```text
//!                      p_R0 (a1 - r2 a2) PsiL-(-phi2(a2)) / PsiR-(-phi2(a2))
//!                    + p_L0 (a2 - r1 a1) PsiR+(phi1(a1)) / PsiL+(phi1(a1))
//! E e^{-a1W1-a2W2} = ---------------------------------------------------------
//!                      (1 - r1 r2) (phi1(a1) + phi2(a2))
//! ```
//!
//! on `Re(a_i) > Phi_i(0)`. The two factor ratios are exactly the boundary
//! functions
//!
//! ```text
//! F1(a) = E* int_0^1 e^{-a W2(t)} dL1(t),
//! F2(a) = E* int_0^1 e^{-a W1(t)} dL2(t)
//! ```
//!
//! up to the constants `p_R0 / (1 - r1 r2)` and `p_L0 / (1 - r1 r2)`, and the
//! whole expression is the unique solution of the functional equation
//!
//! ```text
//! (phi1(a1)+phi2(a2)) E e^{-a1W1-a2W2} = (a1-r2 a2) F1(a2) + (a2-r1 a1) F2(a1).
//! ```
//!
//! Marginal transforms come from the exact algebraic limit of the other
//! argument at its boundary, moments from one-sided Richardson differences at
//! the origin, and two special families (uncoupled queues, one pure-drift
//! input) have independent closed forms used as golden cross-checks.

use num_complex::Complex64;

use crate::auxiliary::AuxiliarySystem;
use crate::error::Error;
use crate::models::{CoupledSystem, LevyModel};
use crate::wiener_hopf::{
    factor_closed_form, factor_grid, factor_mc, FactorMethod, FactorPair, FactorSide,
    GridParams, SideTag,
};
use crate::Result;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// How to produce the two factor pairs of a context.
#[derive(Debug, Clone)]
pub enum FactorPlan {
    /// Closed form where one-sided, else grid, else Monte-Carlo.
    Auto {
        grid: GridParams,
        mc_paths: usize,
        seed: u64,
    },
    ClosedForm,
    Grid(GridParams),
    MonteCarlo { paths: usize, seed: u64 },
}

impl Default for FactorPlan {
    fn default() -> Self {
        FactorPlan::Auto {
            grid: GridParams::default(),
            mc_paths: 200_000,
            seed: 0x1eaf,
        }
    }
}

fn build_pair(side: FactorSide, plan: &FactorPlan) -> Result<FactorPair> {
    match plan {
        FactorPlan::ClosedForm => factor_closed_form(side),
        FactorPlan::Grid(params) => factor_grid(side, params),
        FactorPlan::MonteCarlo { paths, seed } => factor_mc(side, *paths, *seed),
        FactorPlan::Auto {
            grid,
            mc_paths,
            seed,
        } => {
            if side.is_one_sided() {
                return factor_closed_form(side);
            }
            match factor_grid(side.clone(), grid) {
                Ok(pair) => Ok(pair),
                Err(Error::Unsupported(_)) => factor_mc(side, *mc_paths, *seed),
                Err(e) => Err(e),
            }
        }
    }
}

/// An immutable, thread-safe evaluation context for one stable system.
#[derive(Debug, Clone)]
pub struct TransformContext {
    system: CoupledSystem,
    aux: AuxiliarySystem,
    left: FactorPair,
    right: FactorPair,
}

impl TransformContext {
    pub fn new(system: &CoupledSystem) -> Result<Self> {
        Self::with_plan(system, &FactorPlan::default())
    }

    pub fn with_plan(system: &CoupledSystem, plan: &FactorPlan) -> Result<Self> {
        let aux = AuxiliarySystem::new(system)?;
        let left = build_pair(FactorSide::from_aux(aux.clone(), SideTag::Left), plan)?;
        let right = build_pair(FactorSide::from_aux(aux.clone(), SideTag::Right), plan)?;
        for pair in [&left, &right] {
            if let Some(tol) = pair.tolerance() {
                let worst = pair
                    .residual_report
                    .iter()
                    .fold(0.0f64, |m, &(_, r)| m.max(r));
                if worst > tol {
                    return Err(Error::Numerical(format!(
                        "factor pair failed its identity check: residual {worst:e} > {tol:e}"
                    )));
                }
            }
        }
        Ok(TransformContext {
            system: system.clone(),
            aux,
            left,
            right,
        })
    }

    pub fn system(&self) -> &CoupledSystem {
        &self.system
    }

    pub fn aux(&self) -> &AuxiliarySystem {
        &self.aux
    }

    pub fn left_factors(&self) -> &FactorPair {
        &self.left
    }

    pub fn right_factors(&self) -> &FactorPair {
        &self.right
    }

    /// Worst factor method in play.
    pub fn method(&self) -> FactorMethod {
        match (self.left.method(), self.right.method()) {
            (FactorMethod::MonteCarlo, _) | (_, FactorMethod::MonteCarlo) => {
                FactorMethod::MonteCarlo
            }
            (FactorMethod::Grid, _) | (_, FactorMethod::Grid) => FactorMethod::Grid,
            _ => FactorMethod::ClosedForm,
        }
    }

    /// Deterministic tolerance of the assembled transform (`None` when a
    /// Monte-Carlo factor engine is involved).
    pub fn tolerance(&self) -> Option<f64> {
        match (self.left.tolerance(), self.right.tolerance()) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        }
    }

    fn check_domain(&self, a1: Complex64, a2: Complex64) -> Result<(Complex64, Complex64)> {
        if a1.re <= self.aux.phi1_zero && !(a1ceq_zero(a1) && self.aux.phi1_zero == 0.0) {
            return Err(Error::Domain(format!(
                "need Re(a1) > Phi1(0) = {}, got {a1}",
                self.aux.phi1_zero
            )));
        }
        if a2.re <= self.aux.phi2_zero && !(a1ceq_zero(a2) && self.aux.phi2_zero == 0.0) {
            return Err(Error::Domain(format!(
                "need Re(a2) > Phi2(0) = {}, got {a2}",
                self.aux.phi2_zero
            )));
        }
        let w1 = self.system.x1.laplace_exponent(a1);
        let w2 = self.system.x2.laplace_exponent(a2);
        if w1.re < 0.0 || w2.re < 0.0 {
            return Err(Error::Domain(format!(
                "factor arguments left their half-planes: phi1(a1) = {w1}, phi2(a2) = {w2}"
            )));
        }
        Ok((w1, w2))
    }

    /// Ratio `PsiR+(w) / PsiL+(w)`, the ascending part of the transform.
    fn ascending_ratio(&self, w: Complex64) -> Result<Complex64> {
        Ok(self.right.psi_plus(w)? / self.left.psi_plus(w)?)
    }

    /// Ratio `PsiL-(w) / PsiR-(w)`, the descending part.
    fn descending_ratio(&self, w: Complex64) -> Result<Complex64> {
        Ok(self.left.psi_minus(w)? / self.right.psi_minus(w)?)
    }

    /// `E exp(-a1 W1 - a2 W2)` for `Re(a_i) > Phi_i(0)`.
    ///
    /// Real positive arguments produce values in `(0, 1]`; the origin (when
    /// admissible as a limit) evaluates to one.
    pub fn joint_transform(&self, a1: Complex64, a2: Complex64) -> Result<Complex64> {
        if a1ceq_zero(a1) && a1ceq_zero(a2) {
            if self.aux.phi1_zero == 0.0 && self.aux.phi2_zero == 0.0 {
                return Ok(ONE);
            }
            return Err(Error::Domain(
                "origin is outside the admissible domain (a drift is negative)".into(),
            ));
        }
        let (w1, w2) = self.check_domain(a1, a2)?;
        let denom = w1 + w2;
        let scale = 1.0 + w1.norm() + w2.norm();
        if denom.norm() < 1e-6 * scale && a1.norm().max(a2.norm()) > 1e-3 {
            return Err(Error::Singularity(format!(
                "phi1(a1) + phi2(a2) = {denom} vanishes near ({a1}, {a2}); \
                 the cancellation is ill-conditioned there"
            )));
        }
        let (r1, r2) = (self.system.r1, self.system.r2);
        let desc = self.descending_ratio(-w2)?;
        let asc = self.ascending_ratio(w1)?;
        let numer = self.aux.p_right_zero * (a1 - r2 * a2) * desc
            + self.aux.p_left_zero * (a2 - r1 * a1) * asc;
        Ok(numer / ((1.0 - r1 * r2) * denom))
    }

    /// Boundary function `F1(a) = E* int_0^1 e^{-a W2} dL1`; requires
    /// `Re(a) >= Phi2(0)`.
    pub fn boundary_f1(&self, a: Complex64) -> Result<Complex64> {
        if a.re < self.aux.phi2_zero {
            return Err(Error::Domain(format!(
                "F1 formula holds for Re(a) >= Phi2(0) = {}",
                self.aux.phi2_zero
            )));
        }
        let w2 = self.system.x2.laplace_exponent(a);
        if w2.re < 0.0 {
            return Err(Error::Domain(format!("phi2(a) = {w2} left its half-plane")));
        }
        let z = 1.0 - self.system.r1 * self.system.r2;
        Ok(self.aux.p_right_zero / z * self.descending_ratio(-w2)?)
    }

    /// Boundary function `F2(a) = E* int_0^1 e^{-a W1} dL2`; requires
    /// `Re(a) >= Phi1(0)`.
    pub fn boundary_f2(&self, a: Complex64) -> Result<Complex64> {
        if a.re < self.aux.phi1_zero {
            return Err(Error::Domain(format!(
                "F2 formula holds for Re(a) >= Phi1(0) = {}",
                self.aux.phi1_zero
            )));
        }
        let w1 = self.system.x1.laplace_exponent(a);
        if w1.re < 0.0 {
            return Err(Error::Domain(format!("phi1(a) = {w1} left its half-plane")));
        }
        let z = 1.0 - self.system.r1 * self.system.r2;
        Ok(self.aux.p_left_zero / z * self.ascending_ratio(w1)?)
    }

    /// Residual of the functional equation at `(a1, a2)`. Pass an
    /// independently computed transform value to make this a real test;
    /// `None` replays the pipeline's own value.
    pub fn functional_eq_residual(
        &self,
        a1: Complex64,
        a2: Complex64,
        transform: Option<Complex64>,
    ) -> Result<f64> {
        let t = match transform {
            Some(v) => v,
            None => self.joint_transform(a1, a2)?,
        };
        let w1 = self.system.x1.laplace_exponent(a1);
        let w2 = self.system.x2.laplace_exponent(a2);
        let (r1, r2) = (self.system.r1, self.system.r2);
        let lhs = (w1 + w2) * t;
        let rhs = (a1 - r2 * a2) * self.boundary_f1(a2)? + (a2 - r1 * a1) * self.boundary_f2(a1)?;
        Ok((lhs - rhs).norm())
    }

    /// Marginal transform `E exp(-a W_i)`, obtained as the exact limit of the
    /// joint transform with the other argument at its zero boundary. Requires
    /// the other input's drift to be nonnegative (so that boundary exists).
    pub fn marginal_lst(&self, queue: usize, a: Complex64) -> Result<Complex64> {
        let z = 1.0 - self.system.r1 * self.system.r2;
        match queue {
            1 => {
                if self.system.x2.drift() < 0.0 {
                    return Err(Error::Unsupported(
                        "queue 1 marginal needs d2 >= 0 so a2 can reach zero".into(),
                    ));
                }
                if a1ceq_zero(a) {
                    return Ok(ONE);
                }
                if a.re <= self.aux.phi1_zero {
                    return Err(Error::Domain(format!(
                        "need Re(a) > Phi1(0) = {}",
                        self.aux.phi1_zero
                    )));
                }
                let w1 = self.system.x1.laplace_exponent(a);
                if w1.re < 0.0 {
                    return Err(Error::Domain(format!("phi1(a) = {w1} left its half-plane")));
                }
                let asc = self.ascending_ratio(w1)?;
                Ok(
                    a * (self.aux.p_right_zero - self.system.r1 * self.aux.p_left_zero * asc)
                        / (z * w1),
                )
            }
            2 => {
                if self.system.x1.drift() < 0.0 {
                    return Err(Error::Unsupported(
                        "queue 2 marginal needs d1 >= 0 so a1 can reach zero".into(),
                    ));
                }
                if a1ceq_zero(a) {
                    return Ok(ONE);
                }
                if a.re <= self.aux.phi2_zero {
                    return Err(Error::Domain(format!(
                        "need Re(a) > Phi2(0) = {}",
                        self.aux.phi2_zero
                    )));
                }
                let w2 = self.system.x2.laplace_exponent(a);
                if w2.re < 0.0 {
                    return Err(Error::Domain(format!("phi2(a) = {w2} left its half-plane")));
                }
                let desc = self.descending_ratio(-w2)?;
                Ok(
                    a * (self.aux.p_left_zero - self.system.r2 * self.aux.p_right_zero * desc)
                        / (z * w2),
                )
            }
            _ => Err(Error::Domain("queue index must be 1 or 2".into())),
        }
    }

    /// Stationary means by one-sided Richardson differences of the marginal
    /// transforms, plus the means identity
    /// `r2 (d1 + r1 d2) E W1 + r1 (d2 + r2 d1) E W2
    ///   = (r2 phi1''(0) + r1 phi2''(0)) / 2`.
    pub fn moments(&self, step: f64) -> Result<MomentReport> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidModel("moment step must be positive".into()));
        }
        if self.tolerance().is_none() {
            return Err(Error::Unsupported(
                "moment extraction needs deterministic factor engines; \
                 Monte-Carlo factors are too noisy to differentiate"
                    .into(),
            ));
        }
        let mean_w1 = self.mean_workload(1, step)?;
        let mean_w2 = self.mean_workload(2, step)?;
        let d1 = self.system.x1.drift();
        let d2 = self.system.x2.drift();
        let (r1, r2) = (self.system.r1, self.system.r2);
        let lhs = r2 * (d1 + r1 * d2) * mean_w1 + r1 * (d2 + r2 * d1) * mean_w2;
        let rhs = 0.5 * (r2 * self.system.x1.curvature() + r1 * self.system.x2.curvature());
        let residual = (lhs - rhs).abs() / rhs.abs().max(1e-12);
        Ok(MomentReport {
            mean_w1,
            mean_w2,
            step,
            means_identity_lhs: lhs,
            means_identity_rhs: rhs,
            means_identity_residual: residual,
        })
    }

    fn mean_workload(&self, queue: usize, step: f64) -> Result<f64> {
        let model = match queue {
            1 => &self.system.x1,
            _ => &self.system.x2,
        };
        if model.is_pure_drift() {
            // that workload is identically zero
            return Ok(0.0);
        }
        let own_zero = match queue {
            1 => self.aux.phi1_zero,
            _ => self.aux.phi2_zero,
        };
        if own_zero > 0.0 {
            return Err(Error::Unsupported(format!(
                "queue {queue} mean needs its own drift nonnegative; the transform \
                 domain does not reach the origin"
            )));
        }
        // f(t) = (1 - m(t)) / t -> E W as t -> 0; two Richardson sweeps
        let f = |t: f64| -> Result<f64> {
            let m = self.marginal_lst(queue, Complex64::new(t, 0.0))?;
            Ok((1.0 - m.re) / t)
        };
        let fh = f(step)?;
        let fh2 = f(step / 2.0)?;
        let fh4 = f(step / 4.0)?;
        Ok((fh - 6.0 * fh2 + 8.0 * fh4) / 3.0)
    }
}

fn a1ceq_zero(a: Complex64) -> bool {
    a.re == 0.0 && a.im == 0.0
}

/// Moment extraction output.
#[derive(Debug, Clone, Copy)]
pub struct MomentReport {
    pub mean_w1: f64,
    pub mean_w2: f64,
    pub step: f64,
    pub means_identity_lhs: f64,
    pub means_identity_rhs: f64,
    /// `|lhs - rhs| / max(|rhs|, 1e-12)`.
    pub means_identity_residual: f64,
}

/// Families with a printed closed form that bypasses factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecialCase {
    /// `r1 = r2 = 0`: product of two generalized Pollaczek-Khinchine forms.
    Independent,
    /// `X2` pure drift: queue 2 workload vanishes and queue 1 reflects
    /// `X1(t) - r1 d2 t`.
    DeterministicDrift,
}

/// Closed-form transform for one of the special families.
#[derive(Debug, Clone)]
pub struct SpecialCaseTransform {
    case: SpecialCase,
    system: CoupledSystem,
}

impl SpecialCaseTransform {
    pub fn new(system: &CoupledSystem, case: SpecialCase) -> Result<Self> {
        system.require_stable()?;
        match case {
            SpecialCase::Independent => {
                if system.r1 != 0.0 || system.r2 != 0.0 {
                    return Err(Error::Unsupported(
                        "independent closed form needs r1 = r2 = 0".into(),
                    ));
                }
            }
            SpecialCase::DeterministicDrift => {
                if !matches!(system.x2, LevyModel::PureDrift { .. }) {
                    return Err(Error::Unsupported(
                        "deterministic-drift closed form needs X2 to be pure drift".into(),
                    ));
                }
            }
        }
        Ok(SpecialCaseTransform {
            case,
            system: system.clone(),
        })
    }

    pub fn case(&self) -> SpecialCase {
        self.case
    }

    pub fn eval(&self, a1: Complex64, a2: Complex64) -> Result<Complex64> {
        match self.case {
            SpecialCase::Independent => {
                Ok(pk_factor(&self.system.x1, a1)? * pk_factor(&self.system.x2, a2)?)
            }
            SpecialCase::DeterministicDrift => {
                // E e^{-a1 W1 - a2 W2} = (d1 + r1 d2) a1 / (phi1(a1) + r1 d2 a1)
                let d2 = self.system.x2.drift();
                let drift = self.system.x1.drift() + self.system.r1 * d2;
                if a1ceq_zero(a1) {
                    return Ok(ONE);
                }
                let denom =
                    self.system.x1.laplace_exponent(a1) + self.system.r1 * d2 * a1;
                Ok(drift * a1 / denom)
            }
        }
    }
}

/// Generalized Pollaczek-Khinchine transform `d a / phi(a)` of one reflected
/// queue (requires `d > 0`).
fn pk_factor(model: &LevyModel, a: Complex64) -> Result<Complex64> {
    let d = model.drift();
    if d <= 0.0 {
        return Err(Error::Unstable {
            margin1: d,
            margin2: d,
        });
    }
    if a1ceq_zero(a) {
        return Ok(ONE);
    }
    Ok(d * a / model.laplace_exponent(a))
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

    fn independent() -> CoupledSystem {
        CoupledSystem::new(mm1(1.0), mm1(1.0), 0.0, 0.0).unwrap()
    }

    fn coupled() -> CoupledSystem {
        CoupledSystem::new(mm1(1.0), mm1(1.0), 0.5, 0.5).unwrap()
    }

    #[test]
    fn independent_pipeline_equals_product_form() {
        let sys = independent();
        let ctx = TransformContext::new(&sys).unwrap();
        let special = SpecialCaseTransform::new(&sys, SpecialCase::Independent).unwrap();
        for &a1 in &[0.25, 0.5, 1.0, 2.0, 4.0] {
            for &a2 in &[0.5, 1.0, 3.0, 8.0] {
                let got = ctx.joint_transform(c(a1, 0.0), c(a2, 0.0)).unwrap();
                let want = special.eval(c(a1, 0.0), c(a2, 0.0)).unwrap();
                assert!(
                    (got - want).norm() < 1e-8,
                    "({a1}, {a2}): {got} vs {want}"
                );
            }
        }
        // the worked value at (1, 1)
        let got = ctx.joint_transform(c(1.0, 0.0), c(1.0, 0.0)).unwrap();
        assert_relative_eq!(got.re, 0.5625, epsilon = 1e-10);
    }

    #[test]
    fn deterministic_drift_pipeline_matches_closed_form() {
        // d1 > 0 configuration
        let sys = CoupledSystem::new(mm1(1.0), LevyModel::PureDrift { rate: 2.0 }, 0.4, 0.25)
            .unwrap();
        let ctx = TransformContext::new(&sys).unwrap();
        let special =
            SpecialCaseTransform::new(&sys, SpecialCase::DeterministicDrift).unwrap();
        for &a1 in &[0.3, 1.0, 2.0, 5.0] {
            for &a2 in &[0.4, 1.5, 6.0] {
                let got = ctx.joint_transform(c(a1, 0.0), c(a2, 0.0)).unwrap();
                let want = special.eval(c(a1, 0.0), c(a2, 0.0)).unwrap();
                assert!(
                    (got - want).norm() < 1e-8,
                    "({a1}, {a2}): {got} vs {want}"
                );
                // independent of a2
                let other = ctx.joint_transform(c(a1, 0.0), c(a2 + 1.0, 0.0)).unwrap();
                assert!((got - other).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn deterministic_drift_negative_d1() {
        // d1 = -0.5 < 0, stabilized by r1 d2 = 1
        let x1 = LevyModel::CompoundPoisson {
            rate: 1.0,
            jumps: JumpLaw::Exponential { rate: 1.0 },
            service: 0.5,
        };
        let sys = CoupledSystem::new(x1, LevyModel::PureDrift { rate: 2.0 }, 0.5, 0.25).unwrap();
        let ctx = TransformContext::new(&sys).unwrap();
        let special =
            SpecialCaseTransform::new(&sys, SpecialCase::DeterministicDrift).unwrap();
        // Phi1(0) = 1: the theorem domain starts above it
        assert_relative_eq!(ctx.aux().phi1_zero, 1.0, epsilon = 1e-10);
        for &a1 in &[1.05, 1.5, 2.0, 4.0, 9.0] {
            let got = ctx.joint_transform(c(a1, 0.0), c(0.7, 0.0)).unwrap();
            let want = special.eval(c(a1, 0.0), c(0.7, 0.0)).unwrap();
            assert!((got - want).norm() < 1e-8, "a1 = {a1}: {got} vs {want}");
        }
        // below the domain edge the formula is refused
        assert!(matches!(
            ctx.joint_transform(c(0.5, 0.0), c(1.0, 0.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn origin_limit_is_one() {
        let ctx = TransformContext::new(&coupled()).unwrap();
        assert_eq!(ctx.joint_transform(c(0.0, 0.0), c(0.0, 0.0)).unwrap(), ONE);
        let near = ctx.joint_transform(c(1e-7, 0.0), c(1e-7, 0.0)).unwrap();
        assert!((near - ONE).norm() < 1e-6);
    }

    #[test]
    fn transform_values_bounded_and_monotone() {
        let ctx = TransformContext::new(&coupled()).unwrap();
        let mut prev = 1.0 + 1e-12;
        for k in 0..25 {
            let a = 0.05 + 5.0 * k as f64 / 24.0;
            let v = ctx.joint_transform(c(a, 0.0), c(a, 0.0)).unwrap();
            assert!(v.im.abs() < 1e-10);
            assert!(v.re > 0.0 && v.re <= 1.0 + 1e-10, "T({a},{a}) = {v}");
            assert!(v.re <= prev + 1e-10);
            prev = v.re;
        }
    }

    #[test]
    fn functional_equation_closes_on_special_cases() {
        // independent: the pipeline and the product form satisfy the same
        // functional equation to closed-form accuracy
        let sys = independent();
        let ctx = TransformContext::new(&sys).unwrap();
        let special = SpecialCaseTransform::new(&sys, SpecialCase::Independent).unwrap();
        for &(a1, a2) in &[(0.5, 0.5), (1.0, 2.0), (3.0, 0.7)] {
            let t = special.eval(c(a1, 0.0), c(a2, 0.0)).unwrap();
            let resid = ctx
                .functional_eq_residual(c(a1, 0.0), c(a2, 0.0), Some(t))
                .unwrap();
            assert!(resid <= 1e-10, "residual {resid:e} at ({a1}, {a2})");
        }
        // coupled fixture: internal consistency of the assembled pipeline
        let ctx = TransformContext::new(&coupled()).unwrap();
        for &(a1, a2) in &[(0.5, 1.0), (1.0, 1.0), (2.0, 0.5)] {
            let resid = ctx
                .functional_eq_residual(c(a1, 0.0), c(a2, 0.0), None)
                .unwrap();
            assert!(resid <= 1e-12);
        }
    }

    #[test]
    fn boundary_functions_normalization_and_monotonicity() {
        let sys = coupled();
        let ctx = TransformContext::new(&sys).unwrap();
        let (lr1, lr2) = sys.regulator_rates();
        let f1_0 = ctx.boundary_f1(c(0.0, 0.0)).unwrap();
        let f2_0 = ctx.boundary_f2(c(0.0, 0.0)).unwrap();
        assert_relative_eq!(f1_0.re, lr1, epsilon = 1e-9);
        assert_relative_eq!(f2_0.re, lr2, epsilon = 1e-9);
        let mut prev = f1_0.re + 1e-12;
        for k in 1..20 {
            let a = k as f64 * 0.4;
            let v = ctx.boundary_f1(c(a, 0.0)).unwrap();
            assert!(v.re <= prev + 1e-9, "F1 not nonincreasing at {a}");
            prev = v.re;
        }
    }

    #[test]
    fn marginal_reduces_to_pollaczek_khinchine_when_uncoupled() {
        let sys = independent();
        let ctx = TransformContext::new(&sys).unwrap();
        for &a in &[0.3, 1.0, 2.0, 10.0] {
            let got = ctx.marginal_lst(1, c(a, 0.0)).unwrap();
            let want = 0.5 * a / sys.x1.laplace_exponent(c(a, 0.0)).re;
            assert_relative_eq!(got.re, want, max_relative = 1e-10);
        }
    }

    #[test]
    fn marginal_of_pure_drift_queue_is_unit() {
        let sys = CoupledSystem::new(mm1(1.0), LevyModel::PureDrift { rate: 2.0 }, 0.4, 0.25)
            .unwrap();
        let ctx = TransformContext::new(&sys).unwrap();
        for &a in &[0.5, 2.0, 7.0] {
            let got = ctx.marginal_lst(2, c(a, 0.0)).unwrap();
            assert!((got - ONE).norm() < 1e-10, "marginal2({a}) = {got}");
        }
    }

    #[test]
    fn moments_match_oracles() {
        // isolated M/M/1: E W = phi''(0) / (2 d) = 0.5
        let ctx = TransformContext::new(&independent()).unwrap();
        let report = ctx.moments(0.01).unwrap();
        assert_relative_eq!(report.mean_w1, 0.5, max_relative = 1e-6);
        assert_relative_eq!(report.mean_w2, 0.5, max_relative = 1e-6);

        // pure-drift queue has zero workload
        let sys = CoupledSystem::new(mm1(1.0), LevyModel::PureDrift { rate: 2.0 }, 0.4, 0.25)
            .unwrap();
        let report = TransformContext::new(&sys).unwrap().moments(0.01).unwrap();
        assert_eq!(report.mean_w2, 0.0);
        // with E W2 = 0 the identity pins E W1 = phi1''(0) / (2 (d1 + r1 d2))
        let want = 0.5 / (2.0 * (0.5 + 0.4 * 2.0));
        assert_relative_eq!(report.mean_w1, want, max_relative = 1e-5);
        assert!(report.means_identity_residual < 1e-5);
    }

    #[test]
    fn means_identity_on_coupled_fixture() {
        let ctx = TransformContext::new(&coupled()).unwrap();
        let report = ctx.moments(0.01).unwrap();
        assert!(
            report.means_identity_residual < 1e-3,
            "identity residual {} (lhs {}, rhs {})",
            report.means_identity_residual,
            report.means_identity_lhs,
            report.means_identity_rhs
        );
        // symmetric fixture: equal means
        assert_relative_eq!(report.mean_w1, report.mean_w2, max_relative = 1e-6);
    }

    #[test]
    fn singularity_guard_triggers_off_origin() {
        // both factor arguments purely imaginary and opposite: the kernel
        // phi1(a1) + phi2(a2) vanishes away from the origin
        let sys = independent();
        let ctx = TransformContext::new(&sys).unwrap();
        let y = 1.0;
        let a1 = crate::first_passage::first_passage_exponent(&sys.x1, c(0.0, y)).unwrap();
        let a2 = crate::first_passage::first_passage_exponent(&sys.x2, c(0.0, -y)).unwrap();
        match ctx.joint_transform(a1, a2) {
            Err(Error::Singularity(_)) => {}
            other => panic!("expected singularity error, got {other:?}"),
        }
    }

    #[test]
    fn special_case_mismatch_rejected() {
        assert!(SpecialCaseTransform::new(&coupled(), SpecialCase::Independent).is_err());
        assert!(
            SpecialCaseTransform::new(&independent(), SpecialCase::DeterministicDrift).is_err()
        );
    }

    #[test]
    fn deterministic_drift_origin_limit() {
        let sys = CoupledSystem::new(mm1(1.0), LevyModel::PureDrift { rate: 2.0 }, 0.4, 0.25)
            .unwrap();
        let special =
            SpecialCaseTransform::new(&sys, SpecialCase::DeterministicDrift).unwrap();
        assert_eq!(special.eval(c(0.0, 0.0), c(1.0, 0.0)).unwrap(), ONE);
        let near = special.eval(c(1e-9, 0.0), c(1.0, 0.0)).unwrap();
        assert!((near - ONE).norm() < 1e-7);
    }
}
