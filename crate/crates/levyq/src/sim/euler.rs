//! Discretized simulation for Brownian and mixed input.
//!
//! Each step samples the exact increments of both driving processes (Gaussian
//! for Brownian parts, compound Poisson jumps injected at their exact sampled
//! arrival times, which cut the step grid) and then solves the coupled
//! reflection for the step by Picard iteration of the two one-dimensional
//! Skorokhod maps:
//!
//! ```text
//! dL1 = max(0, -(W1 + dX1 - r1 dL2)),
//! dL2 = max(0, -(W2 + dX2 - r2 dL1)),
//! ```
//!
//! a contraction with factor `r1 r2 < 1`. Statistics use trapezoidal
//! step-level time integration, so they converge at the step order.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;

use super::{assemble_report, BatchAccum, EstimateReport, SimConfig, StatLayout};
use crate::error::Error;
use crate::models::{CoupledSystem, LevyModel};
use crate::Result;

const PICARD_TOL: f64 = 1e-12;
const PICARD_MAX: usize = 10_000;
/// Workload below this is treated as idle when classifying Euler states.
const IDLE_EPS: f64 = 1e-12;

/// Simulate with the Euler/Skorokhod scheme; requires at least one Brownian
/// input (bounded-variation pairs belong to the exact engine).
pub fn simulate_euler(system: &CoupledSystem, config: &SimConfig) -> Result<EstimateReport> {
    config.validate()?;
    system.require_stable()?;
    if system.x1.bounded_variation() && system.x2.bounded_variation() {
        return Err(Error::Unsupported(
            "both inputs have bounded variation; use the exact event-driven mode".into(),
        ));
    }
    let layout = StatLayout {
        n_transform: config.transform_grid.len(),
        n_cdf: config.cdf_points.len(),
    };
    let per_rep: Result<Vec<Vec<BatchAccum>>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| run_replication(system, config, layout, rep))
        .collect();
    let mut batches = Vec::with_capacity(config.replications * config.batches);
    for rep in per_rep? {
        batches.extend(rep);
    }
    Ok(assemble_report(config, layout, batches))
}

enum Driver {
    Brownian { drift: f64, vol: f64 },
    Cpp { service: f64, rate: f64 },
    Drift { rate: f64 },
}

impl Driver {
    fn of(model: &LevyModel) -> Driver {
        match model {
            LevyModel::Brownian { drift, volatility } => Driver::Brownian {
                drift: *drift,
                vol: *volatility,
            },
            LevyModel::CompoundPoisson { rate, service, .. } => Driver::Cpp {
                service: *service,
                rate: *rate,
            },
            LevyModel::PureDrift { rate } => Driver::Drift { rate: *rate },
        }
    }

    fn increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> f64 {
        match self {
            Driver::Brownian { drift, vol } => {
                let n = Normal::new(0.0, 1.0).unwrap();
                -drift * dt + vol * dt.sqrt() * n.sample(rng)
            }
            Driver::Cpp { service, .. } => -service * dt,
            Driver::Drift { rate } => -rate * dt,
        }
    }

    fn arrival_rate(&self) -> Option<f64> {
        match self {
            Driver::Cpp { rate, .. } => Some(*rate),
            _ => None,
        }
    }
}

/// One coupled Skorokhod step: returns `(w1', w2', dl1, dl2)`.
fn reflect_step(w1: f64, w2: f64, dx1: f64, dx2: f64, r1: f64, r2: f64) -> Result<(f64, f64, f64, f64)> {
    let u1 = w1 + dx1;
    let u2 = w2 + dx2;
    let mut dl1 = (-u1).max(0.0);
    let mut dl2 = (-(u2 - r2 * dl1)).max(0.0);
    let tol = PICARD_TOL * (1.0 + u1.abs() + u2.abs());
    let mut converged = false;
    for _ in 0..PICARD_MAX {
        let n1 = (-(u1 - r1 * dl2)).max(0.0);
        let n2 = (-(u2 - r2 * n1)).max(0.0);
        let delta = (n1 - dl1).abs() + (n2 - dl2).abs();
        dl1 = n1;
        dl2 = n2;
        if delta <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        // cannot happen for r1 r2 < 1; a contraction was violated
        return Err(Error::Numerical(
            "coupled Skorokhod fixed point failed to converge".into(),
        ));
    }
    let w1n = (u1 - r1 * dl2 + dl1).max(0.0);
    let w2n = (u2 - r2 * dl1 + dl2).max(0.0);
    Ok((w1n, w2n, dl1, dl2))
}

#[allow(clippy::too_many_arguments)]
fn accumulate_trapezoid(
    batch: &mut BatchAccum,
    layout: StatLayout,
    config: &SimConfig,
    dt: f64,
    start: (f64, f64),
    end: (f64, f64),
    dl: (f64, f64),
) {
    batch.duration += dt;
    let (w1a, w2a) = start;
    let (w1b, w2b) = end;
    for (k, &(a1, a2)) in config.transform_grid.iter().enumerate() {
        let fa = (-a1 * w1a - a2 * w2a).exp();
        let fb = (-a1 * w1b - a2 * w2b).exp();
        batch.sums[layout.transform(k)] += 0.5 * (fa + fb) * dt;
    }
    batch.sums[layout.w1()] += 0.5 * (w1a + w1b) * dt;
    batch.sums[layout.w2()] += 0.5 * (w2a + w2b) * dt;
    batch.sums[layout.w1w2()] += 0.5 * (w1a * w2a + w1b * w2b) * dt;
    if w1b <= IDLE_EPS {
        batch.sums[layout.idle1()] += dt;
    }
    if w2b <= IDLE_EPS {
        batch.sums[layout.idle2()] += dt;
    }
    if w1b <= IDLE_EPS && w2b <= IDLE_EPS {
        batch.sums[layout.idle_both()] += dt;
    }
    batch.sums[layout.reg1()] += dl.0;
    batch.sums[layout.reg2()] += dl.1;
    for (k, &x) in config.cdf_points.iter().enumerate() {
        let ind = |w: f64| if w <= x { 1.0 } else { 0.0 };
        batch.sums[layout.cdf1(k)] += 0.5 * (ind(w1a) + ind(w1b)) * dt;
        batch.sums[layout.cdf2(k)] += 0.5 * (ind(w2a) + ind(w2b)) * dt;
    }
}

fn run_replication(
    system: &CoupledSystem,
    config: &SimConfig,
    layout: StatLayout,
    rep: usize,
) -> Result<Vec<BatchAccum>> {
    let mut rng = config.replication_rng(rep);
    let horizon = config.horizon;
    let warmup_end = config.warmup_frac * horizon;
    let batch_len = (horizon - warmup_end) / config.batches as f64;
    let mut batches = vec![BatchAccum::new(layout); config.batches];

    let d1 = Driver::of(&system.x1);
    let d2 = Driver::of(&system.x2);
    let jumps1 = match &system.x1 {
        LevyModel::CompoundPoisson { jumps, .. } => Some(jumps.clone()),
        _ => None,
    };
    let jumps2 = match &system.x2 {
        LevyModel::CompoundPoisson { jumps, .. } => Some(jumps.clone()),
        _ => None,
    };
    let mut next_arr1 = match d1.arrival_rate() {
        Some(r) => Exp::new(r).unwrap().sample(&mut rng),
        None => f64::INFINITY,
    };
    let mut next_arr2 = match d2.arrival_rate() {
        Some(r) => Exp::new(r).unwrap().sample(&mut rng),
        None => f64::INFINITY,
    };

    let (mut t, mut w1, mut w2) = (0.0f64, 0.0f64, 0.0f64);
    let (mut l1, mut l2) = (0.0f64, 0.0f64);
    let (mut x1_sum, mut x2_sum) = (0.0f64, 0.0f64);
    let mut grid_k: u64 = 0;

    while t < horizon {
        let next_grid = (grid_k + 1) as f64 * config.euler_step;
        let next_edge = if t < warmup_end {
            warmup_end
        } else {
            let k = ((t - warmup_end) / batch_len).floor() as usize;
            warmup_end + batch_len * (k + 1) as f64
        };
        let seg_end = next_grid
            .min(next_arr1)
            .min(next_arr2)
            .min(next_edge)
            .min(horizon);
        let dt = seg_end - t;

        let (start_w1, start_w2) = (w1, w2);
        let (mut new_w1, mut new_w2, mut dl1, mut dl2) = (w1, w2, 0.0, 0.0);
        if dt > 0.0 {
            let dx1 = d1.increment(dt, &mut rng);
            let dx2 = d2.increment(dt, &mut rng);
            x1_sum += dx1;
            x2_sum += dx2;
            let (a, b, c, d) = reflect_step(w1, w2, dx1, dx2, system.r1, system.r2)?;
            new_w1 = a;
            new_w2 = b;
            dl1 = c;
            dl2 = d;
        }

        if dt > 0.0 && t >= warmup_end {
            let k = (((t - warmup_end) / batch_len) as usize).min(config.batches - 1);
            accumulate_trapezoid(
                &mut batches[k],
                layout,
                config,
                dt,
                (start_w1, start_w2),
                (new_w1, new_w2),
                (dl1, dl2),
            );
        }

        w1 = new_w1;
        w2 = new_w2;
        l1 += dl1;
        l2 += dl2;
        t = seg_end;
        if t == next_grid {
            grid_k += 1;
        }
        if t == next_arr1 && t < horizon {
            let b = jumps1.as_ref().unwrap().sample(&mut rng);
            w1 += b;
            x1_sum += b;
            next_arr1 = t + Exp::new(d1.arrival_rate().unwrap()).unwrap().sample(&mut rng);
        }
        if t == next_arr2 && t < horizon {
            let b = jumps2.as_ref().unwrap().sample(&mut rng);
            w2 += b;
            x2_sum += b;
            next_arr2 = t + Exp::new(d2.arrival_rate().unwrap()).unwrap().sample(&mut rng);
        }
    }

    // reflection identity replay (floating-point accumulation only)
    let rhs1 = x1_sum - system.r1 * l2 + l1;
    let rhs2 = x2_sum - system.r2 * l1 + l2;
    let scale1 = 1.0 + x1_sum.abs() + system.r1 * l2 + l1;
    let scale2 = 1.0 + x2_sum.abs() + system.r2 * l1 + l2;
    if (w1 - rhs1).abs() > 1e-7 * scale1 || (w2 - rhs2).abs() > 1e-7 * scale2 {
        return Err(Error::Numerical(format!(
            "reflection identity violated in replication {rep}"
        )));
    }
    Ok(batches)
}
