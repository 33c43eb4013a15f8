//! Input models: jump laws, Lévy processes, the coupled system and the
//! fluid-network mapping.
//!
//! A queue input is a spectrally-positive Lévy process `X(t)` described by its
//! Laplace exponent `phi(a) = log E exp(-a X(1))`. Three closed-form families
//! are supported:
//!
//! * compound Poisson jumps minus a service drift:
//!   `phi(a) = a s - lambda + lambda E exp(-a B)`,
//! * Brownian motion with drift: `phi(a) = d a + sigma^2 a^2 / 2`,
//! * pure drift: `phi(a) = d a`.
//!
//! The mean drift `d = -E X(1) = phi'(0)` is finite for all of them, and
//! `phi` is analytic on the right half-plane and continuous on the imaginary
//! axis.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::Error;
use crate::Result;

/// Distribution of a single upward jump (a service requirement).
///
/// All four families have finite second and third moments, which the moment
/// extraction layer relies on.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpLaw {
    /// Exponential with the given rate.
    Exponential { rate: f64 },
    /// Erlang: sum of `shape` independent exponentials with the given rate.
    Erlang { shape: u32, rate: f64 },
    /// Finite mixture of exponentials; `weights` must sum to one.
    Hyperexponential { weights: Vec<f64>, rates: Vec<f64> },
    /// Unit point mass at `size`.
    Deterministic { size: f64 },
}

impl JumpLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            JumpLaw::Exponential { rate } => {
                if !rate.is_finite() || *rate <= 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "exponential jump rate must be positive, got {rate}"
                    )));
                }
            }
            JumpLaw::Erlang { shape, rate } => {
                if *shape == 0 {
                    return Err(Error::InvalidModel("erlang shape must be >= 1".into()));
                }
                if !rate.is_finite() || *rate <= 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "erlang jump rate must be positive, got {rate}"
                    )));
                }
            }
            JumpLaw::Hyperexponential { weights, rates } => {
                if weights.is_empty() || weights.len() != rates.len() {
                    return Err(Error::InvalidModel(
                        "hyperexponential weights and rates must be non-empty and equal length"
                            .into(),
                    ));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::InvalidModel(
                        "hyperexponential weights must be nonnegative".into(),
                    ));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidModel(format!(
                        "hyperexponential weights must sum to 1, got {total}"
                    )));
                }
                if rates.iter().any(|r| !r.is_finite() || *r <= 0.0) {
                    return Err(Error::InvalidModel(
                        "hyperexponential rates must be positive".into(),
                    ));
                }
            }
            JumpLaw::Deterministic { size } => {
                if !size.is_finite() || *size <= 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "deterministic jump size must be positive, got {size}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Mean jump size `E B`.
    pub fn mean(&self) -> f64 {
        match self {
            JumpLaw::Exponential { rate } => 1.0 / rate,
            JumpLaw::Erlang { shape, rate } => f64::from(*shape) / rate,
            JumpLaw::Hyperexponential { weights, rates } => {
                weights.iter().zip(rates).map(|(w, r)| w / r).sum()
            }
            JumpLaw::Deterministic { size } => *size,
        }
    }

    /// Second moment `E B^2`.
    pub fn second_moment(&self) -> f64 {
        match self {
            JumpLaw::Exponential { rate } => 2.0 / (rate * rate),
            JumpLaw::Erlang { shape, rate } => {
                let k = f64::from(*shape);
                k * (k + 1.0) / (rate * rate)
            }
            JumpLaw::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| 2.0 * w / (r * r))
                .sum(),
            JumpLaw::Deterministic { size } => size * size,
        }
    }

    /// Third moment `E B^3`.
    pub fn third_moment(&self) -> f64 {
        match self {
            JumpLaw::Exponential { rate } => 6.0 / rate.powi(3),
            JumpLaw::Erlang { shape, rate } => {
                let k = f64::from(*shape);
                k * (k + 1.0) * (k + 2.0) / rate.powi(3)
            }
            JumpLaw::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| 6.0 * w / r.powi(3))
                .sum(),
            JumpLaw::Deterministic { size } => size.powi(3),
        }
    }

    /// Laplace-Stieltjes transform `beta(a) = E exp(-a B)`, `Re(a) >= 0`.
    ///
    /// For the rational families the closed form extends meromorphically to
    /// the left of the axis; callers staying right of [`JumpLaw::pole_abscissa`]
    /// may evaluate there.
    pub fn lst(&self, a: Complex64) -> Complex64 {
        match self {
            JumpLaw::Exponential { rate } => rate / (rate + a),
            JumpLaw::Erlang { shape, rate } => (rate / (rate + a)).powu(*shape),
            JumpLaw::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * r / (r + a))
                .sum(),
            JumpLaw::Deterministic { size } => (-a * *size).exp(),
        }
    }

    /// Derivative `beta'(a)`.
    pub fn lst_deriv(&self, a: Complex64) -> Complex64 {
        match self {
            JumpLaw::Exponential { rate } => -rate / ((rate + a) * (rate + a)),
            JumpLaw::Erlang { shape, rate } => {
                let k = f64::from(*shape);
                -k * rate.powi(*shape as i32) / (rate + a).powu(*shape + 1)
            }
            JumpLaw::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| -w * r / ((r + a) * (r + a)))
                .sum(),
            JumpLaw::Deterministic { size } => -size * (-a * *size).exp(),
        }
    }

    /// Real-axis abscissa of the nearest singularity of the transform
    /// (infinite for the entire deterministic case).
    pub fn pole_abscissa(&self) -> f64 {
        match self {
            JumpLaw::Exponential { rate } | JumpLaw::Erlang { rate, .. } => -rate,
            JumpLaw::Hyperexponential { rates, .. } => {
                -rates.iter().cloned().fold(f64::INFINITY, f64::min)
            }
            JumpLaw::Deterministic { .. } => f64::NEG_INFINITY,
        }
    }

    /// Whether the law is absolutely continuous, so its transform decays
    /// along the imaginary axis.
    pub fn has_density(&self) -> bool {
        !matches!(self, JumpLaw::Deterministic { .. })
    }

    /// The stationary residual-life (equilibrium) law with transform
    /// `(1 - beta(a)) / (a E B)`.
    pub fn residual(&self) -> ResidualLaw {
        ResidualLaw { base: self.clone() }
    }

    /// Draw one jump.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            JumpLaw::Exponential { rate } => Exp::new(*rate).unwrap().sample(rng),
            JumpLaw::Erlang { shape, rate } => {
                let e = Exp::new(*rate).unwrap();
                (0..*shape).map(|_| e.sample(rng)).sum()
            }
            JumpLaw::Hyperexponential { weights, rates } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (w, r) in weights.iter().zip(rates) {
                    acc += w;
                    if u <= acc {
                        return Exp::new(*r).unwrap().sample(rng);
                    }
                }
                Exp::new(*rates.last().unwrap()).unwrap().sample(rng)
            }
            JumpLaw::Deterministic { size } => *size,
        }
    }
}

/// Stationary residual life of a [`JumpLaw`]: density `(1 - F_B(x)) / E B`.
///
/// For an exponential base this is the same exponential; for Erlang it is the
/// uniform mixture of the partial stage sums; for a deterministic size it is
/// uniform on `(0, size)`.
#[derive(Debug, Clone)]
pub struct ResidualLaw {
    base: JumpLaw,
}

impl ResidualLaw {
    pub fn base(&self) -> &JumpLaw {
        &self.base
    }

    /// Mean `E R = E B^2 / (2 E B)`.
    pub fn mean(&self) -> f64 {
        self.base.second_moment() / (2.0 * self.base.mean())
    }

    /// Transform `E exp(-a R) = (1 - beta(a)) / (a E B)`.
    ///
    /// A short series handles the removable singularity at the origin.
    pub fn lst(&self, a: Complex64) -> Complex64 {
        let m1 = self.base.mean();
        if a.norm() * m1 < 1e-6 {
            let m2 = self.base.second_moment();
            let m3 = self.base.third_moment();
            return Complex64::new(1.0, 0.0) - a * (m2 / (2.0 * m1))
                + a * a * (m3 / (6.0 * m1));
        }
        (Complex64::new(1.0, 0.0) - self.base.lst(a)) / (a * m1)
    }

    /// Draw one residual life.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.base {
            JumpLaw::Exponential { rate } => Exp::new(*rate).unwrap().sample(rng),
            JumpLaw::Erlang { shape, rate } => {
                // uniform stage index, then that many exponential stages
                let stages = rng.gen_range(1..=*shape);
                let e = Exp::new(*rate).unwrap();
                (0..stages).map(|_| e.sample(rng)).sum()
            }
            JumpLaw::Hyperexponential { weights, rates } => {
                // residual mixture reweights each component by its mean
                let mean = self.base.mean();
                let u: f64 = rng.gen::<f64>() * mean;
                let mut acc = 0.0;
                for (w, r) in weights.iter().zip(rates) {
                    acc += w / r;
                    if u <= acc {
                        return Exp::new(*r).unwrap().sample(rng);
                    }
                }
                Exp::new(*rates.last().unwrap()).unwrap().sample(rng)
            }
            JumpLaw::Deterministic { size } => rng.gen::<f64>() * size,
        }
    }

    pub fn describe(&self) -> String {
        match &self.base {
            JumpLaw::Exponential { rate } => format!("exponential(rate {rate})"),
            JumpLaw::Erlang { shape, rate } => {
                format!("uniform mixture of Erlang(1..={shape}, rate {rate}) stages")
            }
            JumpLaw::Hyperexponential { weights, rates } => {
                let mean = self.base.mean();
                let w: Vec<String> = weights
                    .iter()
                    .zip(rates)
                    .map(|(w, r)| format!("{:.6}*exp({})", w / r / mean, r))
                    .collect();
                format!("hyperexponential [{}]", w.join(", "))
            }
            JumpLaw::Deterministic { size } => format!("uniform(0, {size})"),
        }
    }
}

/// A spectrally-positive Lévy process, the net input of one queue.
#[derive(Debug, Clone, PartialEq)]
pub enum LevyModel {
    /// Compound Poisson arrivals (intensity `rate`, jump law `jumps`) minus a
    /// constant service drift `service > 0`.
    CompoundPoisson {
        rate: f64,
        jumps: JumpLaw,
        service: f64,
    },
    /// Brownian motion with `E X(1) = -drift` and the given volatility.
    Brownian { drift: f64, volatility: f64 },
    /// Deterministic decrease `X(t) = -rate * t`, `rate > 0`.
    PureDrift { rate: f64 },
}

impl LevyModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            LevyModel::CompoundPoisson {
                rate,
                jumps,
                service,
            } => {
                if !rate.is_finite() || *rate <= 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "arrival rate must be positive, got {rate}"
                    )));
                }
                if !service.is_finite() || *service <= 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "service rate must be positive, got {service}"
                    )));
                }
                jumps.validate()
            }
            LevyModel::Brownian { drift, volatility } => {
                if !drift.is_finite() {
                    return Err(Error::InvalidModel("brownian drift must be finite".into()));
                }
                if !volatility.is_finite() || *volatility <= 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "volatility must be positive, got {volatility}"
                    )));
                }
                Ok(())
            }
            LevyModel::PureDrift { rate } => {
                if !rate.is_finite() || *rate <= 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "pure drift rate must be positive, got {rate}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Laplace exponent `phi(a) = log E exp(-a X(1))`.
    pub fn laplace_exponent(&self, a: Complex64) -> Complex64 {
        match self {
            LevyModel::CompoundPoisson {
                rate,
                jumps,
                service,
            } => a * *service - rate + rate * jumps.lst(a),
            LevyModel::Brownian { drift, volatility } => {
                let v2 = volatility * volatility;
                a * *drift + a * a * (v2 / 2.0)
            }
            LevyModel::PureDrift { rate } => a * *rate,
        }
    }

    /// Derivative `phi'(a)`.
    pub fn laplace_exponent_deriv(&self, a: Complex64) -> Complex64 {
        match self {
            LevyModel::CompoundPoisson {
                rate,
                jumps,
                service,
            } => Complex64::new(*service, 0.0) + rate * jumps.lst_deriv(a),
            LevyModel::Brownian { drift, volatility } => {
                let v2 = volatility * volatility;
                Complex64::new(*drift, 0.0) + a * v2
            }
            LevyModel::PureDrift { rate } => Complex64::new(*rate, 0.0),
        }
    }

    /// Mean drift `d = -E X(1) = phi'(0)`.
    pub fn drift(&self) -> f64 {
        match self {
            LevyModel::CompoundPoisson {
                rate,
                jumps,
                service,
            } => service - rate * jumps.mean(),
            LevyModel::Brownian { drift, .. } => *drift,
            LevyModel::PureDrift { rate } => *rate,
        }
    }

    /// Second derivative `phi''(0)`: `sigma^2` for Brownian input,
    /// `lambda E B^2` for compound Poisson, zero for pure drift.
    pub fn curvature(&self) -> f64 {
        match self {
            LevyModel::CompoundPoisson { rate, jumps, .. } => rate * jumps.second_moment(),
            LevyModel::Brownian { volatility, .. } => volatility * volatility,
            LevyModel::PureDrift { .. } => 0.0,
        }
    }

    /// Third derivative `phi'''(0)` (enters the error terms of one-sided
    /// moment extraction): `-lambda E B^3` for compound Poisson, zero else.
    pub fn third_cumulant(&self) -> f64 {
        match self {
            LevyModel::CompoundPoisson { rate, jumps, .. } => -rate * jumps.third_moment(),
            _ => 0.0,
        }
    }

    /// Whether the paths have bounded variation on finite intervals. True
    /// exactly for the compound Poisson and pure drift variants.
    pub fn bounded_variation(&self) -> bool {
        !matches!(self, LevyModel::Brownian { .. })
    }

    /// Offered load `rho = lambda E B` (compound Poisson only).
    pub fn load(&self) -> Option<f64> {
        match self {
            LevyModel::CompoundPoisson { rate, jumps, .. } => Some(rate * jumps.mean()),
            _ => None,
        }
    }

    /// `max(d, 0)`.
    pub fn drift_pos(&self) -> f64 {
        self.drift().max(0.0)
    }

    /// Real abscissa below which the exponent stops being analytic
    /// (`-infinity` when entire).
    pub fn pole_abscissa(&self) -> f64 {
        match self {
            LevyModel::CompoundPoisson { jumps, .. } => jumps.pole_abscissa(),
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn is_pure_drift(&self) -> bool {
        matches!(self, LevyModel::PureDrift { .. })
    }

    pub fn is_compound_poisson(&self) -> bool {
        matches!(self, LevyModel::CompoundPoisson { .. })
    }

    pub fn describe(&self) -> String {
        match self {
            LevyModel::CompoundPoisson {
                rate,
                jumps,
                service,
            } => format!("CPP(lambda {rate}, jumps {jumps:?}, service {service})"),
            LevyModel::Brownian { drift, volatility } => {
                format!("Brownian(drift {drift}, sigma {volatility})")
            }
            LevyModel::PureDrift { rate } => format!("PureDrift({rate})"),
        }
    }
}

/// Stability verdict of a coupled system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    pub stable: bool,
    /// `(d1 + r1 d2, d2 + r2 d1)` — both must be strictly positive.
    pub margins: (f64, f64),
}

/// Two inputs plus the coupling fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSystem {
    pub x1: LevyModel,
    pub x2: LevyModel,
    pub r1: f64,
    pub r2: f64,
}

impl CoupledSystem {
    pub fn new(x1: LevyModel, x2: LevyModel, r1: f64, r2: f64) -> Result<Self> {
        x1.validate()?;
        x2.validate()?;
        if !r1.is_finite() || !r2.is_finite() || r1 < 0.0 || r2 < 0.0 {
            return Err(Error::InvalidModel(format!(
                "coupling fractions must be nonnegative, got ({r1}, {r2})"
            )));
        }
        if r1 * r2 >= 1.0 {
            return Err(Error::InvalidModel(format!(
                "need r1*r2 < 1 for a well-posed reflection, got {r1}*{r2} = {}",
                r1 * r2
            )));
        }
        Ok(CoupledSystem { x1, x2, r1, r2 })
    }

    /// Drift margins and the stability verdict.
    pub fn stability(&self) -> Stability {
        let d1 = self.x1.drift();
        let d2 = self.x2.drift();
        let margins = (d1 + self.r1 * d2, d2 + self.r2 * d1);
        Stability {
            stable: margins.0 > 0.0 && margins.1 > 0.0,
            margins,
        }
    }

    pub fn require_stable(&self) -> Result<()> {
        let st = self.stability();
        if st.stable {
            Ok(())
        } else {
            Err(Error::Unstable {
                margin1: st.margins.0,
                margin2: st.margins.1,
            })
        }
    }

    /// Stationary rates of the regulators,
    /// `E L1(1) = (d1 + r1 d2) / (1 - r1 r2)` and symmetrically for `L2`.
    pub fn regulator_rates(&self) -> (f64, f64) {
        let (m1, m2) = self.stability().margins;
        let z = 1.0 - self.r1 * self.r2;
        (m1 / z, m2 / z)
    }

    /// The same system with queue indices swapped.
    pub fn reversed(&self) -> CoupledSystem {
        CoupledSystem {
            x1: self.x2.clone(),
            x2: self.x1.clone(),
            r1: self.r2,
            r2: self.r1,
        }
    }
}

/// External input into one node of a fluid network; a nondecreasing process.
#[derive(Debug, Clone, PartialEq)]
pub enum NetworkInput {
    /// Compound Poisson jumps, no drift component.
    CompoundPoisson { rate: f64, jumps: JumpLaw },
    /// Constant fluid inflow at the given rate.
    Fluid { rate: f64 },
}

/// A two-node fluid network: substochastic routing matrix `P`, service rate
/// vector `c`, independent nondecreasing external inputs.
///
/// Outflow from node `j` is routed to node `i` with probability `p[j][i]`;
/// the workload vector is the reflection of
/// `X_tilde(t) - (I - P') c t` under the regulator matrix `(I - P')`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidNetwork {
    /// Row-indexed routing matrix: `routing[j][i]` is the fraction of node j
    /// outflow entering node i.
    pub routing: [[f64; 2]; 2],
    pub service: [f64; 2],
    pub inputs: [NetworkInput; 2],
}

impl FluidNetwork {
    pub fn validate(&self) -> Result<()> {
        for row in &self.routing {
            for p in row {
                if !p.is_finite() || *p < 0.0 {
                    return Err(Error::InvalidModel(
                        "routing entries must be nonnegative".into(),
                    ));
                }
            }
            if row[0] + row[1] > 1.0 + 1e-12 {
                return Err(Error::InvalidModel(
                    "routing matrix must be substochastic (row sums <= 1)".into(),
                ));
            }
        }
        if self.spectral_radius() >= 1.0 - 1e-12 {
            return Err(Error::InvalidModel(
                "routing matrix must have spectral radius < 1 (P^n -> 0)".into(),
            ));
        }
        for c in &self.service {
            if !c.is_finite() || *c <= 0.0 {
                return Err(Error::InvalidModel("service rates must be positive".into()));
            }
        }
        for input in &self.inputs {
            match input {
                NetworkInput::CompoundPoisson { rate, jumps } => {
                    if !rate.is_finite() || *rate <= 0.0 {
                        return Err(Error::InvalidModel(
                            "external arrival rate must be positive".into(),
                        ));
                    }
                    jumps.validate()?;
                }
                NetworkInput::Fluid { rate } => {
                    if !rate.is_finite() || *rate < 0.0 {
                        return Err(Error::InvalidModel(
                            "fluid input rate must be nonnegative".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn spectral_radius(&self) -> f64 {
        let p = &self.routing;
        let tr = p[0][0] + p[1][1];
        let det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
        let disc = tr * tr - 4.0 * det;
        if disc >= 0.0 {
            let s = disc.sqrt();
            ((tr + s) / 2.0).abs().max(((tr - s) / 2.0).abs())
        } else {
            // complex pair, |lambda| = sqrt(det)
            det.abs().sqrt()
        }
    }

    /// Coupling fractions `r_i = p[j][i] / (1 - p[j][j])` implied by the
    /// routing matrix alone.
    pub fn coupling_fractions(&self) -> Result<(f64, f64)> {
        let p = &self.routing;
        if p[1][1] >= 1.0 || p[0][0] >= 1.0 {
            return Err(Error::Unsupported(
                "routing loop probability p_jj = 1 violates P^n -> 0".into(),
            ));
        }
        Ok((p[1][0] / (1.0 - p[1][1]), p[0][1] / (1.0 - p[0][0])))
    }

    /// Effective service drain of node `i` after feedback:
    /// `c_i (1 - p_ii) - p_ji c_j`.
    pub fn effective_service(&self, i: usize) -> f64 {
        let j = 1 - i;
        self.service[i] * (1.0 - self.routing[i][i]) - self.routing[j][i] * self.service[j]
    }

    /// Rewrite the network as a [`CoupledSystem`].
    ///
    /// The driving processes become `X_i = X_tilde_i - s_i t` with the
    /// effective rates above. A node whose effective rate is not positive
    /// would make `X_i` nondecreasing, which the transform machinery does not
    /// cover; such networks are rejected.
    pub fn to_coupled(&self) -> Result<CoupledSystem> {
        self.validate()?;
        let (r1, r2) = self.coupling_fractions()?;
        let mut models = Vec::with_capacity(2);
        for i in 0..2 {
            let s_eff = self.effective_service(i);
            let model = match &self.inputs[i] {
                NetworkInput::CompoundPoisson { rate, jumps } => {
                    if s_eff <= 0.0 {
                        return Err(Error::Unsupported(format!(
                            "node {} has effective service rate {s_eff} <= 0; \
                             its net input is a subordinator",
                            i + 1
                        )));
                    }
                    LevyModel::CompoundPoisson {
                        rate: *rate,
                        jumps: jumps.clone(),
                        service: s_eff,
                    }
                }
                NetworkInput::Fluid { rate } => {
                    let d = s_eff - rate;
                    if d <= 0.0 {
                        return Err(Error::Unsupported(format!(
                            "node {} fluid input saturates its effective service \
                             rate ({rate} >= {s_eff})",
                            i + 1
                        )));
                    }
                    LevyModel::PureDrift { rate: d }
                }
            };
            models.push(model);
        }
        let x2 = models.pop().unwrap();
        let x1 = models.pop().unwrap();
        CoupledSystem::new(x1, x2, r1, r2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub(crate) fn mm1_fixture() -> LevyModel {
        LevyModel::CompoundPoisson {
            rate: 1.0,
            jumps: JumpLaw::Exponential { rate: 2.0 },
            service: 1.0,
        }
    }

    #[test]
    fn jump_law_moments_and_lst() {
        let laws = [
            JumpLaw::Exponential { rate: 2.0 },
            JumpLaw::Erlang { shape: 2, rate: 4.0 },
            JumpLaw::Hyperexponential {
                weights: vec![0.4, 0.6],
                rates: vec![1.0, 3.0],
            },
            JumpLaw::Deterministic { size: 0.25 },
        ];
        for law in &laws {
            law.validate().unwrap();
            assert!(law.mean() > 0.0);
            // LST(0) = 1
            assert_relative_eq!(law.lst(c(0.0, 0.0)).re, 1.0, max_relative = 1e-14);
            // |LST| <= 1 on Re >= 0
            for &(re, im) in &[(0.0, 3.0), (1.0, -2.0), (5.0, 0.0), (0.5, 10.0)] {
                assert!(law.lst(c(re, im)).norm() <= 1.0 + 1e-12);
            }
            // derivative at 0 equals -mean
            assert_relative_eq!(law.lst_deriv(c(0.0, 0.0)).re, -law.mean(), epsilon = 1e-12);
        }
        assert_relative_eq!(laws[1].mean(), 0.5);
        assert_relative_eq!(laws[1].second_moment(), 6.0 / 16.0);
        assert_relative_eq!(laws[2].mean(), 0.6);
    }

    #[test]
    fn residual_of_exponential_is_itself() {
        let law = JumpLaw::Exponential { rate: 2.0 };
        let res = law.residual();
        for &a in &[0.0, 0.3, 1.0, 7.5] {
            let want = law.lst(c(a, 0.0));
            let got = res.lst(c(a, 0.0));
            assert_relative_eq!(got.re, want.re, epsilon = 1e-10);
        }
        assert_relative_eq!(res.mean(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn erlang_residual_matches_direct_integration() {
        // oracle: E exp(-aR) = int_0^inf exp(-ax) (1 - F_B(x)) / E B dx by quadrature
        let law = JumpLaw::Erlang { shape: 2, rate: 4.0 };
        let res = law.residual();
        let survival = |x: f64| (-4.0 * x).exp() * (1.0 + 4.0 * x);
        let mean = law.mean();
        for &a in &[0.5, 1.0, 2.0] {
            let n = 400_000;
            let hi = 10.0;
            let dx = hi / n as f64;
            let mut acc = 0.0;
            for k in 0..n {
                let x = (k as f64 + 0.5) * dx;
                acc += (-a * x).exp() * survival(x) / mean * dx;
            }
            assert_relative_eq!(res.lst(c(a, 0.0)).re, acc, epsilon = 1e-6);
        }
    }

    #[test]
    fn residual_lst_series_is_continuous_at_origin() {
        let law = JumpLaw::Hyperexponential {
            weights: vec![0.4, 0.6],
            rates: vec![1.0, 3.0],
        };
        let res = law.residual();
        let near = res.lst(c(1e-7, 0.0)).re;
        let at = res.lst(c(0.0, 0.0)).re;
        assert_relative_eq!(at, 1.0, epsilon = 1e-14);
        assert!((near - 1.0).abs() < 1e-6);
    }

    #[test]
    fn laplace_exponent_closed_forms() {
        // Brownian d=1, sigma=1 at a=2 -> 2 + 2 = 4
        let bm = LevyModel::Brownian {
            drift: 1.0,
            volatility: 1.0,
        };
        assert_relative_eq!(bm.laplace_exponent(c(2.0, 0.0)).re, 4.0);
        // any model at 0 -> 0
        let mm1 = mm1_fixture();
        assert_eq!(mm1.laplace_exponent(c(0.0, 0.0)), c(0.0, 0.0));
        // M/M/1 fixture at a=1: 1 - 1 + 2/3
        assert_relative_eq!(
            mm1.laplace_exponent(c(1.0, 0.0)).re,
            2.0 / 3.0,
            epsilon = 1e-15
        );
        // phi(a) = a(a+1)/(a+2) for this fixture
        for &a in &[0.1, 0.5, 1.0, 3.0, 20.0] {
            assert_relative_eq!(
                mm1.laplace_exponent(c(a, 0.0)).re,
                a * (a + 1.0) / (a + 2.0),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn drift_and_curvature_values() {
        let mm1 = mm1_fixture();
        assert_relative_eq!(mm1.drift(), 0.5);
        assert_relative_eq!(mm1.curvature(), 0.5);

        let bm = LevyModel::Brownian {
            drift: -1.0,
            volatility: 1.0,
        };
        assert_relative_eq!(bm.drift(), -1.0);
        assert_relative_eq!(bm.curvature(), 1.0);

        let det = LevyModel::CompoundPoisson {
            rate: 2.0,
            jumps: JumpLaw::Deterministic { size: 0.25 },
            service: 1.0,
        };
        assert_relative_eq!(det.drift(), 0.5);
        assert_relative_eq!(det.curvature(), 2.0 * 0.0625);
    }

    #[test]
    fn stability_margins() {
        let q = |d: f64| LevyModel::Brownian {
            drift: d,
            volatility: 1.0,
        };
        let s = CoupledSystem::new(q(1.0), q(1.0), 0.0, 0.0).unwrap();
        assert_eq!(s.stability().margins, (1.0, 1.0));
        assert!(s.stability().stable);

        let s = CoupledSystem::new(q(1.0), q(-0.5), 0.3, 0.8).unwrap();
        let m = s.stability().margins;
        assert_relative_eq!(m.0, 0.85);
        assert_relative_eq!(m.1, 0.3, epsilon = 1e-15);
        assert!(s.stability().stable);

        let s = CoupledSystem::new(q(-1.0), q(-1.0), 0.5, 0.5).unwrap();
        assert!(!s.stability().stable);
        assert!(matches!(
            s.require_stable(),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn coupling_product_rejected() {
        let q = LevyModel::PureDrift { rate: 1.0 };
        assert!(matches!(
            CoupledSystem::new(q.clone(), q, 2.0, 0.5),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn network_no_routing_is_identity() {
        let net = FluidNetwork {
            routing: [[0.0, 0.0], [0.0, 0.0]],
            service: [1.0, 1.0],
            inputs: [
                NetworkInput::CompoundPoisson {
                    rate: 1.0,
                    jumps: JumpLaw::Exponential { rate: 2.0 },
                },
                NetworkInput::Fluid { rate: 0.25 },
            ],
        };
        let sys = net.to_coupled().unwrap();
        assert_eq!(sys.r1, 0.0);
        assert_eq!(sys.r2, 0.0);
        assert_eq!(
            sys.x1,
            LevyModel::CompoundPoisson {
                rate: 1.0,
                jumps: JumpLaw::Exponential { rate: 2.0 },
                service: 1.0
            }
        );
        assert_eq!(sys.x2, LevyModel::PureDrift { rate: 0.75 });
    }

    #[test]
    fn network_coupling_fractions() {
        // node 1 feeds itself at 0.5 and node 2 at 0.25: r1 = 0, r2 = 0.25/0.5
        let net = FluidNetwork {
            routing: [[0.5, 0.25], [0.0, 0.0]],
            service: [4.0, 1.0],
            inputs: [
                NetworkInput::CompoundPoisson {
                    rate: 1.0,
                    jumps: JumpLaw::Exponential { rate: 2.0 },
                },
                NetworkInput::Fluid { rate: 0.1 },
            ],
        };
        let (r1, r2) = net.coupling_fractions().unwrap();
        assert_relative_eq!(r1, 0.0);
        assert_relative_eq!(r2, 0.5);
    }

    #[test]
    fn tandem_routing_fractions_and_drift_reduction() {
        // pure tandem: all of node 1 output flows into node 2
        let net = FluidNetwork {
            routing: [[0.0, 1.0], [0.0, 0.0]],
            service: [1.0, 2.0],
            inputs: [
                NetworkInput::CompoundPoisson {
                    rate: 1.0,
                    jumps: JumpLaw::Exponential { rate: 2.0 },
                },
                NetworkInput::CompoundPoisson {
                    rate: 1.0,
                    jumps: JumpLaw::Exponential { rate: 4.0 },
                },
            ],
        };
        let (r1, r2) = net.coupling_fractions().unwrap();
        assert_eq!((r1, r2), (0.0, 1.0));
        // node 2 drains at c2 - p12 c1 = 2 - 1
        assert_relative_eq!(net.effective_service(1), 1.0);
        let sys = net.to_coupled().unwrap();
        match &sys.x2 {
            LevyModel::CompoundPoisson { service, .. } => assert_relative_eq!(*service, 1.0),
            other => panic!("expected CPP, got {other:?}"),
        }
    }

    #[test]
    fn saturated_node_rejected() {
        // with equal service rates the tandem node 2 becomes a subordinator
        let net = FluidNetwork {
            routing: [[0.0, 1.0], [0.0, 0.0]],
            service: [1.0, 1.0],
            inputs: [
                NetworkInput::CompoundPoisson {
                    rate: 1.0,
                    jumps: JumpLaw::Exponential { rate: 2.0 },
                },
                NetworkInput::CompoundPoisson {
                    rate: 1.0,
                    jumps: JumpLaw::Exponential { rate: 4.0 },
                },
            ],
        };
        assert!(matches!(net.to_coupled(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn absorbing_loop_rejected() {
        let net = FluidNetwork {
            routing: [[0.0, 0.0], [0.0, 1.0]],
            service: [1.0, 1.0],
            inputs: [
                NetworkInput::Fluid { rate: 0.0 },
                NetworkInput::Fluid { rate: 0.0 },
            ],
        };
        assert!(net.validate().is_err());
    }
}
