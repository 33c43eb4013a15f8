//! First-passage inverse of the Laplace exponent and the fundamental
//! subordinator derived from it.
//!
//! For a spectrally-positive input with exponent `phi`, the downward passage
//! times form a subordinator whose exponent is `-Phi`, where `Phi(a)` is the
//! right inverse of `phi`: for real `a >= 0` it is the unique nonnegative
//! solution of `phi(Phi(a)) = a` (the positive one when `d < 0` or `a > 0`),
//! and `Phi(0) = 0` exactly when `d >= 0`. Removing the killing rate `d^+`
//! from the ladder-time exponent leaves the fundamental pure-jump
//! subordinator `Y` with exponent
//!
//! ```text
//! phi_Y(a) = d^+ - a / Phi(a),        phi_Y(0) = 0.
//! ```
//!
//! For bounded-variation input `Y` is compound Poisson with intensity
//! `rho = lambda E B` and jumps distributed as the busy period started from a
//! residual service time; for Brownian input it is an inverse Gaussian
//! subordinator.
//!
//! Real arguments use a bracketed Newton iteration with bisection fallback;
//! complex arguments continue the real solution along the vertical segment
//! from `Re(a)` to `a`, reseeding Newton at every step. Both paths target an
//! absolute residual of `1e-13 * (1 + |a|)`.

use num_complex::Complex64;

use crate::error::Error;
use crate::models::{LevyModel, ResidualLaw};
use crate::Result;

const RESIDUAL_TOL: f64 = 1e-13;
const MAX_NEWTON_ITERS: usize = 200;

fn phi_real(model: &LevyModel, x: f64) -> f64 {
    model.laplace_exponent(Complex64::new(x, 0.0)).re
}

fn phi_deriv_real(model: &LevyModel, x: f64) -> f64 {
    model.laplace_exponent_deriv(Complex64::new(x, 0.0)).re
}

/// Real location of the minimum of `phi` (where `phi' = 0`) on the maximal
/// interval of analyticity. Negative when `d > 0`, positive when `d < 0`,
/// zero when `d = 0`. `None` for pure drift (no minimum, `phi` linear).
fn phi_argmin(model: &LevyModel) -> Option<f64> {
    match model {
        LevyModel::PureDrift { .. } => None,
        LevyModel::Brownian { drift, volatility } => Some(-drift / (volatility * volatility)),
        LevyModel::CompoundPoisson { .. } => {
            let d = model.drift();
            if d == 0.0 {
                return Some(0.0);
            }
            let pole = model.pole_abscissa();
            // bracket a sign change of the increasing function phi'
            let (mut lo, mut hi) = if d > 0.0 {
                // phi'(0) > 0: walk toward the pole (or to -inf) until phi' < 0
                let mut x = if pole.is_finite() { pole / 2.0 } else { -1.0 };
                let mut k = 0;
                while phi_deriv_real(model, x) > 0.0 {
                    x = if pole.is_finite() {
                        pole + (x - pole) / 2.0
                    } else {
                        x * 2.0
                    };
                    k += 1;
                    if k > 200 {
                        return Some(x); // derivative must flip eventually; give up gracefully
                    }
                }
                (x, 0.0)
            } else {
                let mut x = 1.0;
                while phi_deriv_real(model, x) < 0.0 {
                    x *= 2.0;
                }
                (0.0, x)
            };
            // bisection on phi' (strictly increasing by convexity)
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if phi_deriv_real(model, mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-14 * (1.0 + hi.abs()) {
                    break;
                }
            }
            Some(0.5 * (lo + hi))
        }
    }
}

/// Real abscissa of the branch point of the continuation of `Phi`:
/// `phi(argmin phi) <= 0`. `Phi` extends analytically to `Re(a)` above this
/// value. Negative infinity for pure drift.
pub fn branch_abscissa(model: &LevyModel) -> f64 {
    match phi_argmin(model) {
        None => f64::NEG_INFINITY,
        Some(x) => phi_real(model, x),
    }
}

/// Solve `phi(x) = target` for the root on the increasing branch,
/// `x >= argmin phi`, by safeguarded Newton within a verified bracket.
fn solve_real(model: &LevyModel, target: f64) -> Result<f64> {
    if let LevyModel::PureDrift { rate } = model {
        return Ok(target / rate);
    }
    let tol = RESIDUAL_TOL * (1.0 + target.abs());
    // lower bracket end: 0 suffices for target >= 0 and d >= 0, otherwise the
    // increasing branch starts at the argmin
    let d = model.drift();
    let mut lo = if target >= 0.0 && d >= 0.0 {
        0.0
    } else {
        let x_min = phi_argmin(model).expect("non-drift model has an argmin");
        if target < phi_real(model, x_min) - tol {
            return Err(Error::Domain(format!(
                "target {target} lies below the branch point {}",
                phi_real(model, x_min)
            )));
        }
        x_min
    };
    let mut hi = lo.max(0.0) + 1.0;
    let mut grow = 0;
    while phi_real(model, hi) < target {
        hi = lo.max(0.0) + (hi - lo.max(0.0)) * 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::Numerical(format!(
                "bracket growth failed solving phi(x) = {target}"
            )));
        }
    }
    let mut x = 0.5 * (lo + hi);
    let mut fx = phi_real(model, x) - target;
    for _ in 0..MAX_NEWTON_ITERS {
        if fx.abs() <= tol {
            return Ok(x);
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let dfx = phi_deriv_real(model, x);
        let newton = x - fx / dfx;
        x = if dfx > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        fx = phi_real(model, x) - target;
    }
    if fx.abs() <= 10.0 * tol {
        return Ok(x);
    }
    Err(Error::Numerical(format!(
        "first-passage Newton failed: residual {fx:e} at target {target}"
    )))
}

/// `Phi(0)`: zero when `d >= 0`, otherwise the positive root of `phi(x) = 0`.
pub fn phi_zero(model: &LevyModel) -> f64 {
    if model.drift() >= 0.0 {
        0.0
    } else {
        solve_real(model, 0.0).expect("positive root exists for d < 0")
    }
}

/// Newton from an explicit seed; used by the factorization grid to march
/// along the imaginary axis reusing neighbouring solutions.
pub(crate) fn solve_with_seed(
    model: &LevyModel,
    target: Complex64,
    seed: Complex64,
) -> Result<Complex64> {
    if let LevyModel::PureDrift { rate } = model {
        return Ok(target / *rate);
    }
    let tol = RESIDUAL_TOL * (1.0 + target.norm());
    let mut x = seed;
    let mut best = (f64::INFINITY, seed);
    for _ in 0..60 {
        let fx = model.laplace_exponent(x) - target;
        let r = fx.norm();
        if r <= tol {
            return Ok(x);
        }
        if r < best.0 {
            best = (r, x);
        }
        let dfx = model.laplace_exponent_deriv(x);
        if dfx.norm() < 1e-300 {
            return Err(Error::Numerical(
                "first-passage Newton hit a critical point of phi".into(),
            ));
        }
        let mut step = fx / dfx;
        // keep iterates right of the transform singularities
        let pole = model.pole_abscissa();
        if pole.is_finite() {
            let mut trial = x - step;
            let mut halved = 0;
            while trial.re <= pole && halved < 60 {
                step *= 0.5;
                trial = x - step;
                halved += 1;
            }
        }
        x -= step;
        if !x.re.is_finite() || !x.im.is_finite() {
            return Err(Error::Numerical("first-passage Newton diverged".into()));
        }
    }
    if best.0 <= 100.0 * tol {
        return Ok(best.1);
    }
    Err(Error::Numerical(format!(
        "first-passage Newton failed at target {target}: residual {:e}",
        best.0
    )))
}

fn solve_by_continuation(model: &LevyModel, a: Complex64, steps: usize) -> Result<Complex64> {
    let x_real = solve_real(model, a.re)?;
    let mut x = Complex64::new(x_real, 0.0);
    for j in 1..=steps {
        let target = Complex64::new(a.re, a.im * j as f64 / steps as f64);
        x = solve_with_seed(model, target, x)?;
    }
    Ok(x)
}

/// Continuation of `Phi` into the analyticity strip left of the imaginary
/// axis; accepts any `a` with `Re(a)` above the branch abscissa. Internal to
/// the factorization machinery.
pub(crate) fn first_passage_extended(model: &LevyModel, a: Complex64) -> Result<Complex64> {
    if a.im == 0.0 {
        return solve_real(model, a.re).map(|x| Complex64::new(x, 0.0));
    }
    // Phi is analytic on Re > branch; continuation along the vertical segment
    // cannot leave the branch, so a failed coarse pass is retried finer.
    match solve_by_continuation(model, a, 16) {
        Ok(x) => Ok(x),
        Err(_) => solve_by_continuation(model, a, 64),
    }
}

/// `Phi(a)` for `Re(a) >= 0`: the first-passage exponent, with
/// `phi(Phi(a)) = a`, `Re(Phi(a)) > 0` iff `Re(a) > 0`, and `Phi(a) != 0`
/// for `a != 0`.
pub fn first_passage_exponent(model: &LevyModel, a: Complex64) -> Result<Complex64> {
    if a.re < 0.0 {
        return Err(Error::Domain(format!(
            "first-passage exponent needs Re(a) >= 0, got {a}"
        )));
    }
    let x = first_passage_extended(model, a)?;
    if a.re > 0.0 && x.re <= 0.0 {
        return Err(Error::Numerical(format!(
            "continuation left the principal branch at {a} (got {x})"
        )));
    }
    Ok(x)
}

/// Exponent of the fundamental pure-jump subordinator,
/// `phi_Y(a) = d^+ - a / Phi(a)` for `a != 0`, `phi_Y(0) = 0` by continuity.
///
/// For real `a > 0` the value is real, nonpositive and nonincreasing.
pub fn fundamental_exponent(model: &LevyModel, a: Complex64) -> Result<Complex64> {
    if a == Complex64::new(0.0, 0.0) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let phi = first_passage_extended(model, a)?;
    Ok(Complex64::new(model.drift_pos(), 0.0) - a / phi)
}

/// Busy-period representation of the ladder structure of a compound Poisson
/// input with positive drift: `a / Phi(a) = s - rho E exp(-a U)` where `U` is
/// the busy period started from a residual service time `R`.
#[derive(Debug, Clone)]
pub struct BusyPeriodView {
    /// Offered load `rho = lambda E B`.
    pub rho: f64,
    /// Law of the initial workload `R` (stationary residual life of a jump).
    pub residual: ResidualLaw,
    model: LevyModel,
}

impl BusyPeriodView {
    pub fn new(model: &LevyModel) -> Result<Self> {
        let jumps = match model {
            LevyModel::CompoundPoisson { jumps, .. } => jumps,
            other => {
                return Err(Error::Unsupported(format!(
                    "busy-period view requires compound Poisson input, got {}",
                    other.describe()
                )))
            }
        };
        if model.drift() <= 0.0 {
            return Err(Error::Unsupported(format!(
                "busy period is improper for nonpositive drift d = {}",
                model.drift()
            )));
        }
        Ok(BusyPeriodView {
            rho: model.load().unwrap(),
            residual: jumps.residual(),
            model: model.clone(),
        })
    }

    /// `E exp(-a U) = E exp(-Phi(a) R)`.
    pub fn u_lst(&self, a: Complex64) -> Result<Complex64> {
        let phi = first_passage_exponent(&self.model, a)?;
        Ok(self.residual.lst(phi))
    }

    /// Mean busy period `E U = E R / d`.
    pub fn mean(&self) -> f64 {
        self.residual.mean() / self.model.drift()
    }
}
