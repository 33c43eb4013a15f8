//! Exact event-driven simulation of the coupled compound Poisson system.
//!
//! Between arrivals every workload path is piecewise linear, so regime
//! boundaries are crossed at analytically known times and all statistics are
//! exact time integrals; there is no discretization error anywhere. The
//! regulator slopes per regime follow from the defining reflection: `L_i`
//! grows only while `W_i = 0`, and when both queues are empty the slopes
//! solve the pair of drift-cancellation equations.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use super::{assemble_report, BatchAccum, EstimateReport, SimConfig, StatLayout};
use crate::error::Error;
use crate::models::{CoupledSystem, JumpLaw, LevyModel};
use crate::Result;

struct CppSystem {
    lam1: f64,
    lam2: f64,
    s1: f64,
    s2: f64,
    r1: f64,
    r2: f64,
    jumps1: JumpLaw,
    jumps2: JumpLaw,
    // regulator slopes while both queues are empty
    el_both1: f64,
    el_both2: f64,
}

fn cpp_params(system: &CoupledSystem) -> Result<CppSystem> {
    // a pure-drift input is the arrival-free limit: its queue never fills
    let unpack = |m: &LevyModel| match m {
        LevyModel::CompoundPoisson {
            rate,
            jumps,
            service,
        } => Ok((*rate, jumps.clone(), *service)),
        LevyModel::PureDrift { rate } => {
            Ok((0.0, JumpLaw::Deterministic { size: 1.0 }, *rate))
        }
        other => Err(Error::Unsupported(format!(
            "exact event-driven mode needs bounded-variation inputs, got {}",
            other.describe()
        ))),
    };
    let (lam1, jumps1, s1) = unpack(&system.x1)?;
    let (lam2, jumps2, s2) = unpack(&system.x2)?;
    let z = 1.0 - system.r1 * system.r2;
    Ok(CppSystem {
        lam1,
        lam2,
        s1,
        s2,
        r1: system.r1,
        r2: system.r2,
        jumps1,
        jumps2,
        el_both1: (s1 + system.r1 * s2) / z,
        el_both2: (s2 + system.r2 * s1) / z,
    })
}

/// Simulate the coupled system exactly and estimate stationary functionals.
pub fn simulate_cpp(system: &CoupledSystem, config: &SimConfig) -> Result<EstimateReport> {
    config.validate()?;
    system.require_stable()?;
    let params = cpp_params(system)?;
    let layout = StatLayout {
        n_transform: config.transform_grid.len(),
        n_cdf: config.cdf_points.len(),
    };
    let per_rep: Result<Vec<Vec<BatchAccum>>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| run_replication(&params, config, layout, rep))
        .collect();
    let mut batches = Vec::with_capacity(config.replications * config.batches);
    for rep in per_rep? {
        batches.extend(rep);
    }
    Ok(assemble_report(config, layout, batches))
}

#[allow(clippy::too_many_arguments)]
fn accumulate(
    batch: &mut BatchAccum,
    layout: StatLayout,
    config: &SimConfig,
    dt: f64,
    w1: f64,
    w2: f64,
    sig1: f64,
    sig2: f64,
    el1: f64,
    el2: f64,
) {
    batch.duration += dt;
    for (k, &(a1, a2)) in config.transform_grid.iter().enumerate() {
        // int_0^dt exp(-a1 (w1 - sig1 u) - a2 (w2 - sig2 u)) du
        let e0 = (-a1 * w1 - a2 * w2).exp();
        let c = a1 * sig1 + a2 * sig2;
        let integral = if (c * dt).abs() < 1e-9 {
            e0 * dt * (1.0 + 0.5 * c * dt)
        } else {
            e0 * (c * dt).exp_m1() / c
        };
        batch.sums[layout.transform(k)] += integral;
    }
    batch.sums[layout.w1()] += w1 * dt - 0.5 * sig1 * dt * dt;
    batch.sums[layout.w2()] += w2 * dt - 0.5 * sig2 * dt * dt;
    batch.sums[layout.w1w2()] +=
        w1 * w2 * dt - 0.5 * (w1 * sig2 + w2 * sig1) * dt * dt + sig1 * sig2 * dt * dt * dt / 3.0;
    if w1 == 0.0 {
        batch.sums[layout.idle1()] += dt;
    }
    if w2 == 0.0 {
        batch.sums[layout.idle2()] += dt;
    }
    if w1 == 0.0 && w2 == 0.0 {
        batch.sums[layout.idle_both()] += dt;
    }
    batch.sums[layout.reg1()] += el1 * dt;
    batch.sums[layout.reg2()] += el2 * dt;
    for (k, &x) in config.cdf_points.iter().enumerate() {
        batch.sums[layout.cdf1(k)] += time_below(w1, sig1, dt, x);
        batch.sums[layout.cdf2(k)] += time_below(w2, sig2, dt, x);
    }
}

/// Time within `[0, dt]` during which `w - sig u <= x`.
fn time_below(w: f64, sig: f64, dt: f64, x: f64) -> f64 {
    if w <= x {
        dt
    } else if sig > 0.0 {
        (dt - (w - x) / sig).max(0.0)
    } else {
        0.0
    }
}

fn run_replication(
    p: &CppSystem,
    config: &SimConfig,
    layout: StatLayout,
    rep: usize,
) -> Result<Vec<BatchAccum>> {
    let mut rng = config.replication_rng(rep);
    let horizon = config.horizon;
    let warmup_end = config.warmup_frac * horizon;
    let batch_len = (horizon - warmup_end) / config.batches as f64;
    let mut batches = vec![BatchAccum::new(layout); config.batches];

    let lam_tot = p.lam1 + p.lam2;
    let exp_arr = if lam_tot > 0.0 {
        Some(
            Exp::new(lam_tot)
                .map_err(|e| Error::InvalidModel(format!("bad arrival rate: {e}")))?,
        )
    } else {
        None
    };
    let p1 = if lam_tot > 0.0 { p.lam1 / lam_tot } else { 0.0 };

    let (mut t, mut w1, mut w2, mut l1, mut l2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut jsum1, mut jsum2) = (0.0f64, 0.0f64);
    let mut next_arrival = exp_arr
        .as_ref()
        .map_or(f64::INFINITY, |e| e.sample(&mut rng));

    while t < horizon {
        // regime rates: workload depletion and regulator slopes
        let (sig1, sig2, el1, el2) = match (w1 > 0.0, w2 > 0.0) {
            (true, true) => (p.s1, p.s2, 0.0, 0.0),
            (false, true) => (0.0, p.s2 + p.r2 * p.s1, p.s1, 0.0),
            (true, false) => (p.s1 + p.r1 * p.s2, 0.0, 0.0, p.s2),
            (false, false) => (0.0, 0.0, p.el_both1, p.el_both2),
        };
        debug_assert!(el1 == 0.0 || w1 == 0.0);
        debug_assert!(el2 == 0.0 || w2 == 0.0);

        let tb1 = if w1 > 0.0 && sig1 > 0.0 {
            t + w1 / sig1
        } else {
            f64::INFINITY
        };
        let tb2 = if w2 > 0.0 && sig2 > 0.0 {
            t + w2 / sig2
        } else {
            f64::INFINITY
        };
        // next statistics edge (warmup end or batch boundary) after t
        let next_edge = if t < warmup_end {
            warmup_end
        } else {
            let k = ((t - warmup_end) / batch_len).floor() as usize;
            warmup_end + batch_len * (k + 1) as f64
        };
        let seg_end = next_arrival.min(tb1).min(tb2).min(next_edge).min(horizon);
        let dt = seg_end - t;

        if dt > 0.0 && t >= warmup_end {
            let k = (((t - warmup_end) / batch_len) as usize).min(config.batches - 1);
            accumulate(
                &mut batches[k],
                layout,
                config,
                dt,
                w1,
                w2,
                sig1,
                sig2,
                el1,
                el2,
            );
        }

        // advance state; boundary hits land exactly on zero
        w1 = if seg_end == tb1 {
            0.0
        } else {
            (w1 - sig1 * dt).max(0.0)
        };
        w2 = if seg_end == tb2 {
            0.0
        } else {
            (w2 - sig2 * dt).max(0.0)
        };
        l1 += el1 * dt;
        l2 += el2 * dt;
        t = seg_end;

        if t == next_arrival && t < horizon {
            if rng.gen::<f64>() < p1 {
                let b = p.jumps1.sample(&mut rng);
                w1 += b;
                jsum1 += b;
            } else {
                let b = p.jumps2.sample(&mut rng);
                w2 += b;
                jsum2 += b;
            }
            next_arrival = t + exp_arr.as_ref().unwrap().sample(&mut rng);
        }
    }

    // replay the reflection identity W = X - r L_other + L over the full path
    let rhs1 = jsum1 - p.s1 * horizon - p.r1 * l2 + l1;
    let rhs2 = jsum2 - p.s2 * horizon - p.r2 * l1 + l2;
    let scale1 = 1.0 + jsum1 + p.s1 * horizon + p.r1 * l2 + l1;
    let scale2 = 1.0 + jsum2 + p.s2 * horizon + p.r2 * l1 + l2;
    if (w1 - rhs1).abs() > 1e-9 * scale1 || (w2 - rhs2).abs() > 1e-9 * scale2 {
        return Err(Error::Numerical(format!(
            "conservation violated in replication {rep}: residuals ({:e}, {:e})",
            (w1 - rhs1).abs(),
            (w2 - rhs2).abs()
        )));
    }
    Ok(batches)
}
