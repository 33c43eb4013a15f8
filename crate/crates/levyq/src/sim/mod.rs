//! Monte-Carlo engine for the reflected two-queue system.
//!
//! Two path generators are provided. [`simulate_cpp`] runs the coupled
//! compound Poisson dynamics exactly: between arrivals the workloads are
//! piecewise linear with regime-dependent depletion rates
//!
//! * both busy: `(s1, s2)`,
//! * queue 1 empty: queue 2 drains at `s2 + r2 s1` while `L1` grows at `s1`,
//! * queue 2 empty: symmetric,
//! * both empty: workloads pinned at zero, regulators grow at
//!   `(s1 + r1 s2) / (1 - r1 r2)` and `(s2 + r2 s1) / (1 - r1 r2)`,
//!
//! with regime crossings resolved analytically and all statistics collected
//! as exact time integrals of the piecewise-exponential functionals.
//! [`simulate_euler`] handles Brownian (and mixed) input by stepping the pair
//! of one-dimensional reflection maps to their joint fixed point each step;
//! the contraction factor is `r1 r2 < 1`.
//!
//! Estimates carry batch-means standard errors. Replications run in parallel
//! on independent seeded streams and merge in replication order, so a fixed
//! seed and configuration reproduce the report bit for bit.

mod cpp;
mod euler;
mod sampling;

pub use cpp::simulate_cpp;
pub use euler::simulate_euler;
pub use sampling::{sample_busy_period, sample_sup_inf, JumpComponent, SupInf};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::Error;
use crate::Result;

/// Simulation horizon, discretization and output configuration.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Simulated time units per replication.
    pub horizon: f64,
    /// Fraction of the horizon discarded before statistics start.
    pub warmup_frac: f64,
    /// Step for the Euler/Skorokhod integrator (time units).
    pub euler_step: f64,
    /// Independent replications (parallelized, deterministic merge).
    pub replications: usize,
    /// Batch count per replication for batch-means standard errors.
    pub batches: usize,
    /// Root seed; replication `k` derives its own stream from it.
    pub seed: u64,
    /// Points where the joint transform is estimated.
    pub transform_grid: Vec<(f64, f64)>,
    /// Workload levels where the marginal CDFs are estimated.
    pub cdf_points: Vec<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 100_000.0,
            warmup_frac: 0.2,
            euler_step: 1e-3,
            replications: 1,
            batches: 32,
            seed: 1,
            transform_grid: Vec::new(),
            cdf_points: Vec::new(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidModel("horizon must be positive".into()));
        }
        if !(0.0..=0.5).contains(&self.warmup_frac) {
            return Err(Error::InvalidModel(
                "warmup fraction must lie in [0, 0.5]".into(),
            ));
        }
        if self.euler_step <= 0.0 {
            return Err(Error::InvalidModel("euler step must be positive".into()));
        }
        if self.batches < 10 {
            return Err(Error::InvalidModel("need at least 10 batches".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidModel("need at least one replication".into()));
        }
        Ok(())
    }

    pub(crate) fn replication_rng(&self, rep: usize) -> ChaCha12Rng {
        // splitmix-style spacing keeps replication streams decorrelated
        let salt = (rep as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        ChaCha12Rng::seed_from_u64(self.seed ^ salt)
    }
}

/// A point estimate with its batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// |value - reference| in units of the standard error.
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.value - reference).abs() / self.se.max(1e-300)
    }
}

/// Joint transform estimate at one grid point.
#[derive(Debug, Clone, Copy)]
pub struct TransformPoint {
    pub a1: f64,
    pub a2: f64,
    pub est: Estimate,
}

/// Full simulation output: time-average functionals with standard errors.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub transform: Vec<TransformPoint>,
    pub mean_w1: Estimate,
    pub mean_w2: Estimate,
    pub mean_w1w2: Estimate,
    pub idle1: Estimate,
    pub idle2: Estimate,
    pub idle_both: Estimate,
    /// Long-run regulator rates `L_i(T) / T`.
    pub regulator_rate1: Estimate,
    pub regulator_rate2: Estimate,
    pub cdf1: Vec<(f64, Estimate)>,
    pub cdf2: Vec<(f64, Estimate)>,
    /// Post-warmup simulated time aggregated over replications.
    pub observed_time: f64,
    pub batch_count: usize,
}

/// Layout of the per-batch accumulator vector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StatLayout {
    pub n_transform: usize,
    pub n_cdf: usize,
}

impl StatLayout {
    pub fn len(&self) -> usize {
        self.n_transform + 8 + 2 * self.n_cdf
    }
    pub fn transform(&self, k: usize) -> usize {
        k
    }
    pub fn w1(&self) -> usize {
        self.n_transform
    }
    pub fn w2(&self) -> usize {
        self.n_transform + 1
    }
    pub fn w1w2(&self) -> usize {
        self.n_transform + 2
    }
    pub fn idle1(&self) -> usize {
        self.n_transform + 3
    }
    pub fn idle2(&self) -> usize {
        self.n_transform + 4
    }
    pub fn idle_both(&self) -> usize {
        self.n_transform + 5
    }
    pub fn reg1(&self) -> usize {
        self.n_transform + 6
    }
    pub fn reg2(&self) -> usize {
        self.n_transform + 7
    }
    pub fn cdf1(&self, k: usize) -> usize {
        self.n_transform + 8 + k
    }
    pub fn cdf2(&self, k: usize) -> usize {
        self.n_transform + 8 + self.n_cdf + k
    }
}

/// Time-integral sums over one batch window.
#[derive(Debug, Clone)]
pub(crate) struct BatchAccum {
    pub sums: Vec<f64>,
    pub duration: f64,
}

impl BatchAccum {
    pub fn new(layout: StatLayout) -> Self {
        BatchAccum {
            sums: vec![0.0; layout.len()],
            duration: 0.0,
        }
    }
}

pub(crate) fn assemble_report(
    config: &SimConfig,
    layout: StatLayout,
    batches: Vec<BatchAccum>,
) -> EstimateReport {
    let estimate = |idx: usize| -> Estimate {
        let means: Vec<f64> = batches
            .iter()
            .filter(|b| b.duration > 0.0)
            .map(|b| b.sums[idx] / b.duration)
            .collect();
        let n = means.len().max(1) as f64;
        let mean = means.iter().sum::<f64>() / n;
        let var = if means.len() > 1 {
            means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Estimate {
            value: mean,
            se: (var / n).sqrt(),
        }
    };
    let transform = config
        .transform_grid
        .iter()
        .enumerate()
        .map(|(k, &(a1, a2))| TransformPoint {
            a1,
            a2,
            est: estimate(layout.transform(k)),
        })
        .collect();
    let cdf = |base: fn(&StatLayout, usize) -> usize| -> Vec<(f64, Estimate)> {
        config
            .cdf_points
            .iter()
            .enumerate()
            .map(|(k, &x)| (x, estimate(base(&layout, k))))
            .collect()
    };
    EstimateReport {
        transform,
        mean_w1: estimate(layout.w1()),
        mean_w2: estimate(layout.w2()),
        mean_w1w2: estimate(layout.w1w2()),
        idle1: estimate(layout.idle1()),
        idle2: estimate(layout.idle2()),
        idle_both: estimate(layout.idle_both()),
        regulator_rate1: estimate(layout.reg1()),
        regulator_rate2: estimate(layout.reg2()),
        cdf1: cdf(StatLayout::cdf1),
        cdf2: cdf(StatLayout::cdf2),
        observed_time: batches.iter().map(|b| b.duration).sum(),
        batch_count: batches.iter().filter(|b| b.duration > 0.0).count(),
    }
}
