//! Wiener-Hopf factorization of the auxiliary processes.
//!
//! For a Lévy process `X` with exponent `phi_X` and a rate `p > 0`, the
//! factors are the transforms of the running extremes at an independent
//! exponential horizon,
//!
//! ```text
//! Psi+(w) = E exp(-w sup X(e_p)),   Re(w) >= 0,
//! Psi-(w) = E exp(-w inf X(e_p)),   Re(w) <= 0,
//! ```
//!
//! analytic on their half-planes and satisfying
//! `p / (p - phi_X(w)) = Psi+(w) Psi-(w)` on the imaginary axis. Both
//! auxiliary processes here are differences of pure-jump subordinator
//! streams, so `Re(p - phi_X) >= p > 0` everywhere on the axis and the
//! principal logarithm of the ratio never winds.
//!
//! Three engines produce factor pairs:
//!
//! * closed form, when the process is one-sided (a vanished coupling or a
//!   pure-drift input silences one jump stream): the one-sided factor is
//!   `p / (p - phi_X)` and the other is identically one;
//! * grid factorization for bounded-variation inputs: the boundary function
//!   `g = log(p / (p - phi_X))` is sampled on a symmetric imaginary-axis
//!   grid, its limit constant subtracted, and the remainder split into
//!   half-plane-analytic parts by trapezoid Cauchy-kernel quadrature.
//!   Off-axis evaluation close to the contour subtracts `g` at the
//!   evaluation point (using the analytic strip of the exponent) so the
//!   kernel singularity integrates in closed form; boundary values on the
//!   axis use the principal-value sum plus the half-jump, which makes the
//!   factorization identity and the `Psi(0) = 1` normalization exact by
//!   construction. The subtracted constant is re-attached through that
//!   normalization, which also cancels the leading grid-truncation error
//!   between evaluation points;
//! * Monte-Carlo estimation from exact sup/inf samples of the piecewise
//!   constant path, the universal cross-check.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::auxiliary::AuxiliarySystem;
use crate::error::Error;
use crate::first_passage::{branch_abscissa, solve_with_seed};
use crate::models::{CoupledSystem, LevyModel};
use crate::sim::{sample_sup_inf, JumpComponent, SupInf};
use crate::Result;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Which auxiliary process a factor pair belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideTag {
    /// `X_L(t) = Y1(r2 t) - Y2(t)` at rate `p_L`.
    Left,
    /// `X_R(t) = Y1(t) - Y2(r1 t)` at rate `p_R`.
    Right,
}

/// One auxiliary process: evaluable exponent plus its rate.
#[derive(Debug, Clone)]
pub struct FactorSide {
    pub tag: SideTag,
    aux: AuxiliarySystem,
}

impl FactorSide {
    pub fn new(system: &CoupledSystem, tag: SideTag) -> Result<Self> {
        Ok(FactorSide {
            tag,
            aux: AuxiliarySystem::new(system)?,
        })
    }

    pub fn from_aux(aux: AuxiliarySystem, tag: SideTag) -> Self {
        FactorSide { tag, aux }
    }

    pub fn aux(&self) -> &AuxiliarySystem {
        &self.aux
    }

    /// The exponential-horizon rate: `p_L` or `p_R`.
    pub fn rate(&self) -> f64 {
        match self.tag {
            SideTag::Left => self.aux.p_left,
            SideTag::Right => self.aux.p_right,
        }
    }

    /// `phi_X(w)`; on the imaginary axis and within the analytic strip.
    pub fn exponent(&self, w: Complex64) -> Result<Complex64> {
        match self.tag {
            SideTag::Left => self.aux.phi_left(w),
            SideTag::Right => self.aux.phi_right(w),
        }
    }

    /// Upward jump stream `(time scale, model)`, if present.
    fn up_component(&self) -> Option<(f64, &LevyModel)> {
        let sys = self.aux.system();
        let scale = match self.tag {
            SideTag::Left => sys.r2,
            SideTag::Right => 1.0,
        };
        if scale == 0.0 || sys.x1.is_pure_drift() {
            None
        } else {
            Some((scale, &sys.x1))
        }
    }

    /// Downward jump stream `(time scale, model)`, if present.
    fn down_component(&self) -> Option<(f64, &LevyModel)> {
        let sys = self.aux.system();
        let scale = match self.tag {
            SideTag::Left => 1.0,
            SideTag::Right => sys.r1,
        };
        if scale == 0.0 || sys.x2.is_pure_drift() {
            None
        } else {
            Some((scale, &sys.x2))
        }
    }

    /// True when at most one jump stream is present.
    pub fn is_one_sided(&self) -> bool {
        self.up_component().is_none() || self.down_component().is_none()
    }

    /// Both inputs have bounded variation (the auxiliary process is then a
    /// two-sided compound Poisson path).
    pub fn bounded_variation(&self) -> bool {
        let sys = self.aux.system();
        sys.x1.bounded_variation() && sys.x2.bounded_variation()
    }

    /// Jump components for Monte-Carlo sampling; intensity of a stream with
    /// time scale `c` is `c * rho`.
    pub fn mc_components(&self) -> Result<(Option<JumpComponent>, Option<JumpComponent>)> {
        let mk = |part: Option<(f64, &LevyModel)>| -> Result<Option<JumpComponent>> {
            match part {
                None => Ok(None),
                Some((scale, model)) => {
                    let rho = model.load().ok_or_else(|| {
                        Error::Unsupported(
                            "Monte-Carlo factors need compound Poisson inputs".into(),
                        )
                    })?;
                    if model.drift() <= 0.0 {
                        return Err(Error::Unsupported(
                            "Monte-Carlo factors need positive drift in every component".into(),
                        ));
                    }
                    Ok(Some(JumpComponent {
                        intensity: scale * rho,
                        model: model.clone(),
                    }))
                }
            }
        };
        Ok((mk(self.up_component())?, mk(self.down_component())?))
    }

    /// Half-width of the vertical strip around the axis where the exponent
    /// stays analytic; zero when a drift vanishes (branch point at origin).
    pub fn strip_halfwidth(&self) -> f64 {
        let sys = self.aux.system();
        let mut strip = f64::INFINITY;
        if self.up_component().is_some() || !sys.x1.is_pure_drift() {
            strip = strip.min(branch_abscissa(&sys.x1).abs());
        }
        if self.down_component().is_some() || !sys.x2.is_pure_drift() {
            strip = strip.min(branch_abscissa(&sys.x2).abs());
        }
        if strip.is_infinite() {
            // pure-drift pair: exponent identically zero, any strip works
            strip = 1.0;
        }
        0.8 * strip
    }
}

/// How a factor pair was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorMethod {
    ClosedForm,
    Grid,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OneSided {
    /// Only the upward stream present: `Psi- == 1`.
    Up,
    /// Only the downward stream present: `Psi+ == 1`.
    Down,
    /// No jumps at all: both factors identically one.
    Degenerate,
}

#[derive(Debug, Clone)]
enum Engine {
    ClosedForm { kind: OneSided },
    Grid(Box<GridFactorization>),
    MonteCarlo(McFactor),
}

/// A Wiener-Hopf factor pair: `psi_plus` on `Re(w) >= 0`, `psi_minus` on
/// `Re(w) <= 0`, normalized to one at the origin.
#[derive(Debug, Clone)]
pub struct FactorPair {
    side: FactorSide,
    engine: Engine,
    /// `(theta, residual)` of the factorization identity on the build grid.
    pub residual_report: Vec<(f64, f64)>,
}

impl FactorPair {
    pub fn method(&self) -> FactorMethod {
        match &self.engine {
            Engine::ClosedForm { .. } => FactorMethod::ClosedForm,
            Engine::Grid(_) => FactorMethod::Grid,
            Engine::MonteCarlo(_) => FactorMethod::MonteCarlo,
        }
    }

    pub fn side(&self) -> &FactorSide {
        &self.side
    }

    /// Deterministic accuracy of the factorization identity; `None` for the
    /// statistical Monte-Carlo engine.
    pub fn tolerance(&self) -> Option<f64> {
        match &self.engine {
            Engine::ClosedForm { .. } => Some(1e-12),
            Engine::Grid(_) => Some(1e-6),
            Engine::MonteCarlo(_) => None,
        }
    }

    pub fn psi_plus(&self, w: Complex64) -> Result<Complex64> {
        if w.re < 0.0 {
            return Err(Error::Domain(format!(
                "Psi+ is defined for Re(w) >= 0, got {w}"
            )));
        }
        match &self.engine {
            Engine::ClosedForm { kind } => match kind {
                OneSided::Up => {
                    let p = self.side.rate();
                    let (scale, model) = self.side.up_component().expect("one-sided up");
                    let phi =
                        scale * crate::first_passage::fundamental_exponent(model, w)?;
                    Ok(p / (p - phi))
                }
                _ => Ok(Complex64::new(1.0, 0.0)),
            },
            Engine::Grid(grid) => grid.psi_plus(w),
            Engine::MonteCarlo(mc) => Ok(mc.psi_plus(w).0),
        }
    }

    pub fn psi_minus(&self, w: Complex64) -> Result<Complex64> {
        if w.re > 0.0 {
            return Err(Error::Domain(format!(
                "Psi- is defined for Re(w) <= 0, got {w}"
            )));
        }
        match &self.engine {
            Engine::ClosedForm { kind } => match kind {
                OneSided::Down => {
                    let p = self.side.rate();
                    let (scale, model) = self.side.down_component().expect("one-sided down");
                    let phi =
                        scale * crate::first_passage::fundamental_exponent(model, -w)?;
                    Ok(p / (p - phi))
                }
                _ => Ok(Complex64::new(1.0, 0.0)),
            },
            Engine::Grid(grid) => grid.psi_minus(w),
            Engine::MonteCarlo(mc) => Ok(mc.psi_minus(w).0),
        }
    }

    /// Factor value with a standard error (zero for deterministic engines).
    pub fn psi_plus_with_se(&self, w: Complex64) -> Result<(Complex64, f64)> {
        match &self.engine {
            Engine::MonteCarlo(mc) => {
                if w.re < 0.0 {
                    return Err(Error::Domain("Psi+ needs Re(w) >= 0".into()));
                }
                Ok(mc.psi_plus(w))
            }
            _ => Ok((self.psi_plus(w)?, 0.0)),
        }
    }

    pub fn psi_minus_with_se(&self, w: Complex64) -> Result<(Complex64, f64)> {
        match &self.engine {
            Engine::MonteCarlo(mc) => {
                if w.re > 0.0 {
                    return Err(Error::Domain("Psi- needs Re(w) <= 0".into()));
                }
                Ok(mc.psi_minus(w))
            }
            _ => Ok((self.psi_minus(w)?, 0.0)),
        }
    }

    /// Residual and a batch standard error of the factorization identity at
    /// one axis point (the error is zero for deterministic engines).
    pub fn identity_residual_with_se(&self, theta: f64) -> Result<(f64, f64)> {
        let w = Complex64::new(0.0, theta);
        let scale = {
            let p = self.side.rate();
            (p - self.side.exponent(w)?) / p
        };
        match &self.engine {
            Engine::MonteCarlo(mc) => {
                let (value, se) = mc.identity_product(w, scale);
                Ok(((value - 1.0).norm(), se))
            }
            _ => {
                let prod = self.psi_plus(w)? * self.psi_minus(w)? * scale;
                Ok(((prod - Complex64::new(1.0, 0.0)).norm(), 0.0))
            }
        }
    }
}

/// Max residual of `Psi+ Psi- (p - phi_X) / p = 1` over the given axis grid.
pub fn verify_identity(pair: &FactorPair, thetas: &[f64]) -> Result<f64> {
    let mut worst = 0.0f64;
    for &theta in thetas {
        let (r, _) = pair.identity_residual_with_se(theta)?;
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Closed-form factors for a one-sided auxiliary process.
pub fn factor_closed_form(side: FactorSide) -> Result<FactorPair> {
    let kind = match (side.up_component().is_some(), side.down_component().is_some()) {
        (true, true) => {
            return Err(Error::Unsupported(
                "closed-form factors need a one-sided process; use the grid or \
                 Monte-Carlo engine"
                    .into(),
            ))
        }
        (true, false) => OneSided::Up,
        (false, true) => OneSided::Down,
        (false, false) => OneSided::Degenerate,
    };
    let mut pair = FactorPair {
        side,
        engine: Engine::ClosedForm { kind },
        residual_report: Vec::new(),
    };
    pair.residual_report = default_report(&pair)?;
    Ok(pair)
}

fn default_report(pair: &FactorPair) -> Result<Vec<(f64, f64)>> {
    let thetas: Vec<f64> = (0..33)
        .map(|k| -12.0 + 24.0 * k as f64 / 32.0)
        .filter(|t| t.abs() > 1e-9)
        .collect();
    thetas
        .iter()
        .map(|&t| pair.identity_residual_with_se(t).map(|(r, _)| (t, r)))
        .collect()
}

/// Grid-factorization parameters.
#[derive(Debug, Clone)]
pub struct GridParams {
    /// Grid half-width; defaults to `200 * p`.
    pub theta_max: Option<f64>,
    /// Node count (even, so the origin falls between nodes).
    pub points: usize,
    /// Bound on `|g(i Theta) - g_inf|`; larger means the grid is too short.
    pub tail_tol: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            theta_max: None,
            points: 1 << 14,
            tail_tol: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
struct GridFactorization {
    side: FactorSide,
    rate: f64,
    theta_max: f64,
    spacing: f64,
    nodes: Vec<f64>,
    /// trapezoid weights (spacing, halved at the ends)
    weights: Vec<f64>,
    /// `g(i theta_k) - g_inf`
    h: Vec<Complex64>,
    g_inf: f64,
    /// boundary values at the origin fixing `Psi(0) = 1`
    h_plus_origin: Complex64,
    h_minus_origin: Complex64,
    strip: f64,
}

/// Grid-based analytic factorization; bounded-variation inputs with
/// absolutely continuous jump laws only.
pub fn factor_grid(side: FactorSide, params: &GridParams) -> Result<FactorPair> {
    if !side.bounded_variation() {
        return Err(Error::Unsupported(
            "grid factorization needs bounded-variation inputs; Brownian sides \
             have closed-form or Monte-Carlo routes only"
                .into(),
        ));
    }
    for part in [side.up_component(), side.down_component()]
        .into_iter()
        .flatten()
    {
        if let LevyModel::CompoundPoisson { jumps, .. } = part.1 {
            if !jumps.has_density() {
                return Err(Error::Unsupported(
                    "grid factorization needs jump laws with a density; \
                     deterministic jumps do not decay along the axis"
                        .into(),
                ));
            }
        }
    }
    let grid = GridFactorization::build(side, params)?;
    let mut pair = FactorPair {
        side: grid.side.clone(),
        engine: Engine::Grid(Box::new(grid)),
        residual_report: Vec::new(),
    };
    pair.residual_report = default_report(&pair)?;
    Ok(pair)
}

impl GridFactorization {
    fn build(side: FactorSide, params: &GridParams) -> Result<GridFactorization> {
        let rate = side.rate();
        if rate <= 0.0 {
            return Err(Error::Unstable {
                margin1: rate,
                margin2: rate,
            });
        }
        let theta_max = params.theta_max.unwrap_or(200.0 * rate);
        let n = params.points.max(64) & !1usize; // force even
        let spacing = 2.0 * theta_max / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n).map(|k| -theta_max + k as f64 * spacing).collect();
        let mut weights = vec![spacing; n];
        weights[0] = spacing / 2.0;
        weights[n - 1] = spacing / 2.0;

        let sys = side.aux().system().clone();
        let phi1_up = march_first_passage(&sys.x1, &nodes, 1.0)?;
        let phi2_down = march_first_passage(&sys.x2, &nodes, -1.0)?;
        let (up_scale, down_scale) = match side.tag {
            SideTag::Left => (sys.r2, 1.0),
            SideTag::Right => (1.0, sys.r1),
        };
        let d1p = sys.x1.drift_pos();
        let d2p = sys.x2.drift_pos();

        let mut g = Vec::with_capacity(n);
        for (k, &t) in nodes.iter().enumerate() {
            let z = Complex64::new(0.0, t);
            let y1 = if up_scale == 0.0 || sys.x1.is_pure_drift() {
                Complex64::new(0.0, 0.0)
            } else {
                d1p - z / phi1_up[k]
            };
            let y2 = if down_scale == 0.0 || sys.x2.is_pure_drift() {
                Complex64::new(0.0, 0.0)
            } else {
                d2p - (-z) / phi2_down[k]
            };
            let phi_x = up_scale * y1 + down_scale * y2;
            let inner = Complex64::new(1.0, 0.0) - phi_x / rate;
            if inner.re <= 0.0 {
                return Err(Error::Numerical(format!(
                    "exponent wound past the rate at theta = {t}"
                )));
            }
            g.push(-inner.ln());
        }

        // empirical limit constant: Re(g) decays like 1/theta^2, so one
        // Richardson step on the symmetric end averages estimates it
        let re_end = 0.5 * (g[0].re + g[n - 1].re);
        let mid_idx = nodes
            .iter()
            .position(|&t| t >= theta_max / 2.0)
            .unwrap_or(n - 1);
        let re_mid = 0.5 * (g[mid_idx].re + g[n - 1 - mid_idx].re);
        let g_inf = (4.0 * re_end - re_mid) / 3.0;
        if (g[n - 1] - g_inf).norm() > params.tail_tol {
            return Err(Error::Numerical(format!(
                "grid too small: |g(i Theta) - g_inf| = {:.3e} above tail tolerance {:.3e}",
                (g[n - 1] - g_inf).norm(),
                params.tail_tol
            )));
        }

        let h: Vec<Complex64> = g.iter().map(|&v| v - g_inf).collect();
        let strip = side.strip_halfwidth();
        let mut grid = GridFactorization {
            side,
            rate,
            theta_max,
            spacing,
            nodes,
            weights,
            h,
            g_inf,
            h_plus_origin: Complex64::new(0.0, 0.0),
            h_minus_origin: Complex64::new(0.0, 0.0),
            strip,
        };
        let origin_pv = grid.cauchy_principal_value(0.0)?;
        let h_origin = Complex64::new(-grid.g_inf, 0.0); // g(0) = 0
        grid.h_plus_origin = -origin_pv + 0.5 * h_origin;
        grid.h_minus_origin = origin_pv + 0.5 * h_origin;
        Ok(grid)
    }

    /// Fresh boundary value `h(i theta)` (not restricted to nodes).
    fn h_on_axis(&self, theta: f64) -> Result<Complex64> {
        self.h_at(Complex64::new(0.0, theta))
    }

    fn h_at(&self, w: Complex64) -> Result<Complex64> {
        let phi_x = self.side.exponent(w)?;
        let inner = Complex64::new(1.0, 0.0) - phi_x / self.rate;
        if inner.re <= 0.0 {
            return Err(Error::Numerical(format!(
                "exponent wound past the rate at w = {w}"
            )));
        }
        Ok(-inner.ln() - self.g_inf)
    }

    /// `int_{-Theta}^{Theta} dtheta / (i theta - w)` in closed form, with the
    /// branch tracked across the negative real axis for `Re(w) > 0`.
    fn kernel_integral(&self, w: Complex64) -> Complex64 {
        let i = Complex64::new(0.0, 1.0);
        if w.re == 0.0 {
            let v = w.im;
            return -i * ((self.theta_max - v) / (self.theta_max + v)).ln();
        }
        let top = (i * self.theta_max - w).ln();
        let bot = (-i * self.theta_max - w).ln();
        let mut value = -i * (top - bot);
        if w.re > 0.0 && w.im.abs() < self.theta_max {
            value -= TWO_PI;
        }
        value
    }

    /// Discrete Cauchy transform `(1/(2 pi i)) int h(z)/(z - w) dz` over the
    /// truncated axis, for `w` strictly off the contour.
    fn cauchy(&self, w: Complex64) -> Result<Complex64> {
        let plain_zone = 5.0 * self.spacing;
        if w.re.abs() >= plain_zone {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..self.nodes.len() {
                let z = Complex64::new(0.0, self.nodes[k]);
                acc += self.weights[k] * self.h[k] / (z - w);
            }
            return Ok(acc / TWO_PI);
        }
        // near the contour: subtract the value at (or beside) w so the kernel
        // integrates exactly and the remainder stays smooth
        let anchor = if w.re.abs() <= self.strip {
            w
        } else {
            Complex64::new(0.0, w.im)
        };
        let h_anchor = self.h_at(anchor)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..self.nodes.len() {
            let z = Complex64::new(0.0, self.nodes[k]);
            acc += self.weights[k] * (self.h[k] - h_anchor) / (z - w);
        }
        Ok((acc + h_anchor * self.kernel_integral(w)) / TWO_PI)
    }

    /// Principal-value Cauchy transform on the contour itself.
    fn cauchy_principal_value(&self, theta: f64) -> Result<Complex64> {
        if theta.abs() >= self.theta_max {
            return Err(Error::Domain(format!(
                "boundary point {theta} outside the grid (+-{})",
                self.theta_max
            )));
        }
        let h0 = if theta == 0.0 {
            Complex64::new(-self.g_inf, 0.0)
        } else {
            self.h_on_axis(theta)?
        };
        let mut acc = Complex64::new(0.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        for k in 0..self.nodes.len() {
            let dt = self.nodes[k] - theta;
            let term = if dt.abs() < 1e-9 * self.spacing {
                // node collision: use the derivative limit of (h - h0)/(i dt)
                let dh = 0.5 * self.spacing;
                let deriv =
                    (self.h_on_axis(theta + dh)? - self.h_on_axis(theta - dh)?) / (2.0 * dh);
                -i * deriv
            } else {
                (self.h[k] - h0) / (i * dt)
            };
            acc += self.weights[k] * term;
        }
        let w = Complex64::new(0.0, theta);
        Ok((acc + h0 * self.kernel_integral(w)) / TWO_PI)
    }

    fn psi_plus(&self, w: Complex64) -> Result<Complex64> {
        let log_psi = if w.re == 0.0 {
            let pv = self.cauchy_principal_value(w.im)?;
            let h0 = if w.im == 0.0 {
                Complex64::new(-self.g_inf, 0.0)
            } else {
                self.h_on_axis(w.im)?
            };
            (-pv + 0.5 * h0) - self.h_plus_origin
        } else {
            -self.cauchy(w)? - self.h_plus_origin
        };
        Ok(log_psi.exp())
    }

    fn psi_minus(&self, w: Complex64) -> Result<Complex64> {
        let log_psi = if w.re == 0.0 {
            let pv = self.cauchy_principal_value(w.im)?;
            let h0 = if w.im == 0.0 {
                Complex64::new(-self.g_inf, 0.0)
            } else {
                self.h_on_axis(w.im)?
            };
            (pv + 0.5 * h0) - self.h_minus_origin
        } else {
            self.cauchy(w)? - self.h_minus_origin
        };
        Ok(log_psi.exp())
    }
}

/// March `Phi(i * sign * theta_k)` along the grid, reusing each solution as
/// the seed of its neighbour (the grid itself is the continuation path).
fn march_first_passage(
    model: &LevyModel,
    nodes: &[f64],
    sign: f64,
) -> Result<Vec<Complex64>> {
    let n = nodes.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    if model.is_pure_drift() {
        for (k, &t) in nodes.iter().enumerate() {
            out[k] = Complex64::new(0.0, sign * t) / model.drift();
        }
        return Ok(out);
    }
    let start = Complex64::new(crate::first_passage::phi_zero(model).max(1e-12), 0.0);
    // split at the sign change; march outward in both directions
    let first_nonneg = nodes.partition_point(|&t| t < 0.0);
    let mut seed = start;
    for k in first_nonneg..n {
        let target = Complex64::new(0.0, sign * nodes[k]);
        seed = match solve_with_seed(model, target, seed) {
            Ok(x) => x,
            Err(_) => crate::first_passage::first_passage_extended(model, target)?,
        };
        out[k] = seed;
    }
    seed = start;
    for k in (0..first_nonneg).rev() {
        let target = Complex64::new(0.0, sign * nodes[k]);
        seed = match solve_with_seed(model, target, seed) {
            Ok(x) => x,
            Err(_) => crate::first_passage::first_passage_extended(model, target)?,
        };
        out[k] = seed;
    }
    Ok(out)
}

/// Monte-Carlo factor estimates from exact extreme samples.
#[derive(Debug, Clone)]
struct McFactor {
    samples: Vec<SupInf>,
    /// sample batches for standard errors of derived quantities
    batch_count: usize,
}

impl McFactor {
    fn mean_with_se<F: Fn(&SupInf) -> Complex64>(&self, f: F) -> (Complex64, f64) {
        let n = self.samples.len();
        let mut sum = Complex64::new(0.0, 0.0);
        for s in &self.samples {
            sum += f(s);
        }
        let mean = sum / n as f64;
        let mut var = 0.0;
        for s in &self.samples {
            let d = f(s) - mean;
            var += d.norm_sqr();
        }
        var /= (n - 1) as f64;
        (mean, (var / n as f64).sqrt())
    }

    fn psi_plus(&self, w: Complex64) -> (Complex64, f64) {
        self.mean_with_se(|s| (-w * s.sup).exp())
    }

    fn psi_minus(&self, w: Complex64) -> (Complex64, f64) {
        self.mean_with_se(|s| (-w * s.inf).exp())
    }

    /// Batch estimate of `Psi+ Psi- * scale` with a standard error that
    /// respects the sup/inf correlation.
    fn identity_product(&self, w: Complex64, scale: Complex64) -> (Complex64, f64) {
        let b = self.batch_count.max(2);
        let len = self.samples.len() / b;
        let mut prods = Vec::with_capacity(b);
        for chunk in self.samples.chunks(len).take(b) {
            let m = chunk.len() as f64;
            let mut up = Complex64::new(0.0, 0.0);
            let mut down = Complex64::new(0.0, 0.0);
            for s in chunk {
                up += (-w * s.sup).exp();
                down += (-w * s.inf).exp();
            }
            prods.push(up / m * (down / m) * scale);
        }
        let n = prods.len() as f64;
        let mean = prods.iter().sum::<Complex64>() / n;
        let var = prods.iter().map(|p| (p - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }
}

/// Monte-Carlo factor pair from `n_paths` exact sup/inf samples.
pub fn factor_mc(side: FactorSide, n_paths: usize, seed: u64) -> Result<FactorPair> {
    if n_paths < 1000 {
        return Err(Error::InvalidModel(format!(
            "{n_paths} paths is statistically meaningless; need at least 1000"
        )));
    }
    let (up, down) = side.mc_components()?;
    let p = side.rate();
    const CHUNK: usize = 4096;
    let chunks = n_paths.div_ceil(CHUNK);
    let samples: Result<Vec<Vec<SupInf>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            use rand_chacha::rand_core::SeedableRng;
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(
                seed ^ (c as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            let take = CHUNK.min(n_paths - c * CHUNK);
            (0..take)
                .map(|_| sample_sup_inf(up.as_ref(), down.as_ref(), p, &mut rng))
                .collect()
        })
        .collect();
    let mut flat = Vec::with_capacity(n_paths);
    for chunk in samples? {
        flat.extend(chunk);
    }
    let mc = McFactor {
        samples: flat,
        batch_count: 32,
    };
    let mut pair = FactorPair {
        side,
        engine: Engine::MonteCarlo(mc),
        residual_report: Vec::new(),
    };
    // report on a short grid; statistical, so residuals are only indicative
    pair.residual_report = [-4.0, -1.0, 1.0, 4.0]
        .iter()
        .map(|&t| pair.identity_residual_with_se(t).map(|(r, _)| (t, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(pair)
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

    fn coupled_fixture() -> CoupledSystem {
        CoupledSystem::new(mm1(1.0), mm1(1.0), 0.5, 0.5).unwrap()
    }

    fn independent_fixture() -> CoupledSystem {
        CoupledSystem::new(mm1(1.0), mm1(1.0), 0.0, 0.0).unwrap()
    }

    #[test]
    fn closed_form_independent_matches_pollaczek_khinchine_factor() {
        // r = 0: Psi_R+(phi1(a)) = d1 a / phi1(a)
        let side = FactorSide::new(&independent_fixture(), SideTag::Right).unwrap();
        let pair = factor_closed_form(side).unwrap();
        for &a in &[0.3, 1.0, 2.5, 8.0] {
            let phi = independent_fixture().x1.laplace_exponent(c(a, 0.0));
            let got = pair.psi_plus(phi).unwrap();
            let want = 0.5 * a / phi.re;
            assert_relative_eq!(got.re, want, max_relative = 1e-11);
            assert!(got.im.abs() < 1e-12);
        }
        // descending factor is identically one
        assert_eq!(pair.psi_minus(c(-3.0, 0.5)).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn closed_form_degenerate_both_one() {
        let sys = CoupledSystem::new(
            LevyModel::PureDrift { rate: 1.0 },
            LevyModel::PureDrift { rate: 2.0 },
            0.3,
            0.3,
        )
        .unwrap();
        let pair = factor_closed_form(FactorSide::new(&sys, SideTag::Left).unwrap()).unwrap();
        assert_eq!(pair.psi_plus(c(2.0, 0.0)).unwrap(), c(1.0, 0.0));
        assert_eq!(pair.psi_minus(c(-2.0, 0.0)).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn closed_form_rejects_two_sided() {
        let side = FactorSide::new(&coupled_fixture(), SideTag::Left).unwrap();
        assert!(matches!(
            factor_closed_form(side),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn closed_form_identity_is_exact() {
        let side = FactorSide::new(&independent_fixture(), SideTag::Right).unwrap();
        let pair = factor_closed_form(side).unwrap();
        let thetas: Vec<f64> = (1..40).map(|k| -10.0 + 20.0 * k as f64 / 39.0).collect();
        assert!(verify_identity(&pair, &thetas).unwrap() <= 1e-12);
    }

    #[test]
    fn grid_identity_and_normalization() {
        let side = FactorSide::new(&coupled_fixture(), SideTag::Left).unwrap();
        let pair = factor_grid(side, &GridParams::default()).unwrap();
        // Psi(0) = 1 by construction
        assert_relative_eq!(pair.psi_plus(c(0.0, 0.0)).unwrap().re, 1.0, epsilon = 1e-10);
        assert_relative_eq!(pair.psi_minus(c(0.0, 0.0)).unwrap().re, 1.0, epsilon = 1e-10);
        // identity on a wide check grid
        let thetas: Vec<f64> = (0..200).map(|k| -50.0 + 100.5 * k as f64 / 199.0).collect();
        let resid = verify_identity(&pair, &thetas).unwrap();
        assert!(resid <= 1e-6, "identity residual {resid:e}");
    }

    #[test]
    fn grid_matches_closed_form_on_one_sided_fixture() {
        // grid engine accuracy oracle: one-sided process where the exact
        // factor is known in closed form
        let sys = independent_fixture();
        let side = FactorSide::new(&sys, SideTag::Right).unwrap();
        let closed = factor_closed_form(side.clone()).unwrap();
        let grid = factor_grid(side, &GridParams::default()).unwrap();
        for &wre in &[0.05, 0.3, 1.0, 2.0, 5.0] {
            let w = c(wre, 0.0);
            let a = closed.psi_plus(w).unwrap();
            let b = grid.psi_plus(w).unwrap();
            assert!(
                (a - b).norm() < 1e-5,
                "Psi+({wre}): closed {a} vs grid {b}"
            );
        }
        // descending factor of the one-sided process is 1
        for &wre in &[-3.0, -1.0, -0.2] {
            let b = grid.psi_minus(c(wre, 0.0)).unwrap();
            assert!((b - c(1.0, 0.0)).norm() < 1e-5, "Psi-({wre}) = {b}");
        }
    }

    #[test]
    fn grid_factor_is_monotone_lst_on_positive_reals() {
        let side = FactorSide::new(&coupled_fixture(), SideTag::Left).unwrap();
        let pair = factor_grid(side, &GridParams::default()).unwrap();
        let mut prev = 1.0 + 1e-12;
        for k in 0..40 {
            let w = 0.05 + 6.0 * k as f64 / 39.0;
            let v = pair.psi_plus(c(w, 0.0)).unwrap();
            assert!(v.im.abs() < 1e-9);
            assert!(v.re > 0.0 && v.re <= 1.0 + 1e-9, "Psi+({w}) = {v}");
            assert!(v.re <= prev + 1e-9, "not nonincreasing at {w}");
            prev = v.re;
        }
    }

    #[test]
    fn grid_index_interchange() {
        // factors of the reversed system reproduce the original pair
        let sys = CoupledSystem::new(mm1(1.0), mm1(1.2), 0.4, 0.6).unwrap();
        let pair = factor_grid(
            FactorSide::new(&sys, SideTag::Right).unwrap(),
            &GridParams::default(),
        )
        .unwrap();
        let reversed = factor_grid(
            FactorSide::new(&sys.reversed(), SideTag::Left).unwrap(),
            &GridParams::default(),
        )
        .unwrap();
        for &t in &[-7.0, -2.0, -0.4, 0.9, 3.0] {
            let w = c(0.0, t);
            let a = pair.psi_minus(-w).unwrap();
            let b = reversed.psi_plus(w).unwrap();
            assert!(
                (a - b).norm() < 1e-9,
                "interchange at {t}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn grid_rejects_brownian_and_deterministic() {
        let sys = CoupledSystem::new(
            LevyModel::Brownian {
                drift: 1.0,
                volatility: 1.0,
            },
            mm1(1.0),
            0.5,
            0.5,
        )
        .unwrap();
        assert!(matches!(
            factor_grid(
                FactorSide::new(&sys, SideTag::Left).unwrap(),
                &GridParams::default()
            ),
            Err(Error::Unsupported(_))
        ));
        let det = LevyModel::CompoundPoisson {
            rate: 2.0,
            jumps: JumpLaw::Deterministic { size: 0.25 },
            service: 1.0,
        };
        let sys = CoupledSystem::new(det, mm1(1.0), 0.5, 0.5).unwrap();
        assert!(matches!(
            factor_grid(
                FactorSide::new(&sys, SideTag::Left).unwrap(),
                &GridParams::default()
            ),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn grid_tail_tolerance_signal() {
        let side = FactorSide::new(&coupled_fixture(), SideTag::Left).unwrap();
        let params = GridParams {
            theta_max: Some(2.0),
            points: 256,
            tail_tol: 1e-4,
        };
        assert!(matches!(
            factor_grid(side, &params),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn mc_degenerate_side_psi_minus_is_one() {
        let side = FactorSide::new(&independent_fixture(), SideTag::Right).unwrap();
        let pair = factor_mc(side, 2000, 42).unwrap();
        assert_eq!(pair.psi_minus(c(-1.0, 0.0)).unwrap(), c(1.0, 0.0));
        assert_eq!(pair.psi_plus(c(0.0, 0.0)).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn mc_agrees_with_grid_on_fixture() {
        let sys = coupled_fixture();
        let grid = factor_grid(
            FactorSide::new(&sys, SideTag::Left).unwrap(),
            &GridParams::default(),
        )
        .unwrap();
        let mc = factor_mc(FactorSide::new(&sys, SideTag::Left).unwrap(), 120_000, 7).unwrap();
        for &w in &[0.5, 1.0, 2.0] {
            let (est, se) = mc.psi_plus_with_se(c(w, 0.0)).unwrap();
            let exact = grid.psi_plus(c(w, 0.0)).unwrap();
            assert!(
                (est - exact).norm() < 3.0 * se,
                "Psi+({w}): mc {est} +- {se} vs grid {exact}"
            );
            let (est, se) = mc.psi_minus_with_se(c(-w, 0.0)).unwrap();
            let exact = grid.psi_minus(c(-w, 0.0)).unwrap();
            assert!(
                (est - exact).norm() < 3.0 * se,
                "Psi-({w}): mc {est} +- {se} vs grid {exact}"
            );
        }
    }

    #[test]
    fn mc_identity_within_statistical_error() {
        let side = FactorSide::new(&coupled_fixture(), SideTag::Left).unwrap();
        let pair = factor_mc(side, 60_000, 9).unwrap();
        for &t in &[0.5, 2.0, -1.0] {
            let (resid, se) = pair.identity_residual_with_se(t).unwrap();
            assert!(resid < 3.0 * se + 1e-3, "residual {resid} vs se {se} at {t}");
        }
    }

    #[test]
    fn mc_rejects_thin_sampling_and_bad_models() {
        let side = FactorSide::new(&coupled_fixture(), SideTag::Left).unwrap();
        assert!(factor_mc(side, 100, 1).is_err());
        let sys = CoupledSystem::new(
            LevyModel::Brownian {
                drift: 1.0,
                volatility: 1.0,
            },
            mm1(1.0),
            0.5,
            0.5,
        )
        .unwrap();
        assert!(matches!(
            factor_mc(FactorSide::new(&sys, SideTag::Left).unwrap(), 2000, 1),
            Err(Error::Unsupported(_))
        ));
    }
}
