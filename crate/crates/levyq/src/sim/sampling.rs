//! Busy-period sampling and extremes of the auxiliary difference processes.
//!
//! The fundamental subordinator of a compound Poisson input with positive
//! drift is itself compound Poisson: intensity `rho = lambda E B`, jumps
//! distributed as the busy period of the queue started from a residual
//! service time. The auxiliary processes are differences of two such streams
//! (one possibly time-scaled), hence piecewise constant, and their running
//! supremum/infimum over an independent exponential horizon are exact.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::Error;
use crate::models::LevyModel;
use crate::Result;

/// Duration of one busy period of the single queue driven by `model`,
/// started from a residual service time. Requires compound Poisson input
/// with positive drift (the busy period is proper almost surely).
pub fn sample_busy_period<R: Rng + ?Sized>(model: &LevyModel, rng: &mut R) -> Result<f64> {
    let (rate, jumps, service) = match model {
        LevyModel::CompoundPoisson {
            rate,
            jumps,
            service,
        } => (*rate, jumps, *service),
        other => {
            return Err(Error::Unsupported(format!(
                "busy-period sampling needs compound Poisson input, got {}",
                other.describe()
            )))
        }
    };
    if model.drift() <= 0.0 {
        return Err(Error::Unsupported(format!(
            "busy period is improper for drift {} <= 0",
            model.drift()
        )));
    }
    let exp_arr = Exp::new(rate).unwrap();
    let mut workload = jumps.residual().sample(rng);
    let mut elapsed = 0.0;
    loop {
        let gap = exp_arr.sample(rng);
        if workload <= service * gap {
            return Ok(elapsed + workload / service);
        }
        elapsed += gap;
        workload -= service * gap;
        workload += jumps.sample(rng);
    }
}

/// One jump stream of an auxiliary process: busy periods of `model` arriving
/// with the given intensity.
#[derive(Debug, Clone)]
pub struct JumpComponent {
    pub intensity: f64,
    pub model: LevyModel,
}

impl JumpComponent {
    pub fn validate(&self) -> Result<()> {
        if !self.intensity.is_finite() || self.intensity < 0.0 {
            return Err(Error::InvalidModel("component intensity must be >= 0".into()));
        }
        if self.intensity > 0.0 {
            if !self.model.is_compound_poisson() {
                return Err(Error::Unsupported(
                    "sup/inf sampling needs compound Poisson components".into(),
                ));
            }
            if self.model.drift() <= 0.0 {
                return Err(Error::Unsupported(
                    "sup/inf sampling needs positive drift in every component".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Running extremes of a piecewise-constant path over an `Exp(p)` horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupInf {
    pub sup: f64,
    pub inf: f64,
}

/// Sample `(sup, inf)` of `up-stream minus down-stream` over an independent
/// exponential horizon with rate `p`. Either component may be absent.
pub fn sample_sup_inf<R: Rng + ?Sized>(
    up: Option<&JumpComponent>,
    down: Option<&JumpComponent>,
    p: f64,
    rng: &mut R,
) -> Result<SupInf> {
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::InvalidModel("horizon rate p must be positive".into()));
    }
    if let Some(c) = up {
        c.validate()?;
    }
    if let Some(c) = down {
        c.validate()?;
    }
    let up_rate = up.map_or(0.0, |c| c.intensity);
    let down_rate = down.map_or(0.0, |c| c.intensity);
    let total = up_rate + down_rate;
    let horizon = Exp::new(p).unwrap().sample(rng);
    let mut state = SupInf { sup: 0.0, inf: 0.0 };
    if total == 0.0 {
        return Ok(state);
    }
    let exp_event = Exp::new(total).unwrap();
    let mut t = exp_event.sample(rng);
    let mut x = 0.0f64;
    while t <= horizon {
        if rng.gen::<f64>() < up_rate / total {
            x += sample_busy_period(&up.unwrap().model, rng)?;
            state.sup = state.sup.max(x);
        } else {
            x -= sample_busy_period(&down.unwrap().model, rng)?;
            state.inf = state.inf.min(x);
        }
        t += exp_event.sample(rng);
    }
    Ok(state)
}
