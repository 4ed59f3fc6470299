//! Closed-form makespan and energy prediction for a two-cluster split.
//!
//! Each cluster is an aggregate throughput pool. Elapsed time is the finish
//! time of the slower cluster; packing and barrier costs are not modeled.

use crate::blocked::BlockingParams;
use crate::config::{CoreClass, ParallelConfig, PerfRatio};
use crate::energy::{efficiency, Component, ComponentWatts, PowerModel};
use crate::error::{Error, Result};
use crate::matrix::GemmProblem;
use crate::measurements::reference_peaks;
use crate::partition::plan_coarse;

/// Default tolerance when turning a real ratio into small integers.
pub const RATIO_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterProfile {
    pub fast_gflops: f64,
    pub slow_gflops: f64,
    /// Threads each cluster runs with; only used for power.
    pub fast_threads: usize,
    pub slow_threads: usize,
    pub power: PowerModel,
}

impl ClusterProfile {
    /// Four threads per cluster and the default power model.
    pub fn new(fast_gflops: f64, slow_gflops: f64) -> Result<Self> {
        let p = ClusterProfile {
            fast_gflops,
            slow_gflops,
            fast_threads: 4,
            slow_threads: 4,
            power: PowerModel::default(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Full-cluster peaks of the reference board: 10.374 and 2.086 GFLOPS.
    pub fn reference() -> Self {
        let (f, s) = reference_peaks();
        ClusterProfile {
            fast_gflops: f,
            slow_gflops: s,
            fast_threads: 4,
            slow_threads: 4,
            power: PowerModel::default(),
        }
    }

    pub fn with_threads(mut self, fast: usize, slow: usize) -> Self {
        self.fast_threads = fast;
        self.slow_threads = slow;
        self
    }

    pub fn with_power(mut self, power: PowerModel) -> Self {
        self.power = power;
        self
    }

    pub fn throughput(&self, class: CoreClass) -> f64 {
        match class {
            CoreClass::Fast => self.fast_gflops,
            CoreClass::Slow => self.slow_gflops,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for class in CoreClass::ALL {
            let g = self.throughput(class);
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::Domain(format!(
                    "{class} cluster throughput {g} GFLOPS must be positive"
                )));
            }
        }
        self.power.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub elapsed_s: f64,
    pub gflops: f64,
    /// Busy seconds of the fast and slow cluster.
    pub busy_s: [f64; 2],
    /// Time-averaged watts, idle clusters drawing idle power.
    pub watts: ComponentWatts,
    pub gflops_per_watt: f64,
}

/// Combined throughput of `shares` flops per cluster (fast, slow).
///
/// `elapsed = max(share_c / throughput_c)`, `gflops = total / elapsed`.
pub fn predict_makespan(total_flops: f64, shares: [f64; 2], profile: &ClusterProfile) -> Result<Prediction> {
    profile.validate()?;
    if shares.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) || !(total_flops >= 0.0) {
        return Err(Error::Domain(format!("invalid shares {shares:?} of {total_flops}")));
    }
    let sum = shares[0] + shares[1];
    if (sum - total_flops).abs() > 1e-9 * total_flops.max(1.0) {
        return Err(Error::Domain(format!(
            "shares sum to {sum}, not {total_flops}"
        )));
    }
    let busy = [
        shares[0] / (profile.fast_gflops * 1e9),
        shares[1] / (profile.slow_gflops * 1e9),
    ];
    let elapsed = busy[0].max(busy[1]);
    let gflops = if elapsed > 0.0 { total_flops / elapsed / 1e9 } else { 0.0 };
    let watts = average_watts(profile, busy, elapsed);
    let total = watts.total();
    let gflops_per_watt = if total > 0.0 { efficiency(gflops, total)? } else { 0.0 };
    Ok(Prediction {
        elapsed_s: elapsed,
        gflops,
        busy_s: busy,
        watts,
        gflops_per_watt,
    })
}

fn average_watts(profile: &ClusterProfile, busy: [f64; 2], elapsed: f64) -> ComponentWatts {
    let m = &profile.power;
    let threads = [profile.fast_threads as f64, profile.slow_threads as f64];
    // fraction of the run each cluster is busy
    let duty = |i: usize| if elapsed > 0.0 { busy[i] / elapsed } else { 0.0 };
    let core_load = [threads[0] * duty(0), threads[1] * duty(1)];
    let mut w = ComponentWatts::default();
    let fast = m.get(Component::FastCluster);
    let slow = m.get(Component::SlowCluster);
    let dram = m.get(Component::Dram);
    w.set(Component::FastCluster, fast.idle + fast.per_core * core_load[0]);
    w.set(Component::SlowCluster, slow.idle + slow.per_core * core_load[1]);
    w.set(Component::Dram, dram.idle + dram.per_core * (core_load[0] + core_load[1]));
    w.set(Component::Gpu, m.get(Component::Gpu).idle);
    w
}

/// Sum of the cluster peaks.
pub fn ideal_throughput(profile: &ClusterProfile) -> f64 {
    profile.fast_gflops + profile.slow_gflops
}

/// Flops per cluster when `total_flops` is split exactly by `ratio`.
pub fn ratio_shares(total_flops: f64, ratio: &PerfRatio) -> [f64; 2] {
    let f = ratio.fast() as f64;
    let s = ratio.slow() as f64;
    let fast = total_flops * f / (f + s);
    [fast, total_flops - fast]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEstimate {
    /// fast / slow throughput.
    pub exact: f64,
    pub ratio: PerfRatio,
    /// Relative error of `ratio` against `exact`.
    pub rel_error: f64,
}

/// The ratio that equalizes finish times, as small integers within
/// `tolerance` relative error (the smallest slow term that fits wins).
pub fn optimal_ratio(profile: &ClusterProfile, tolerance: f64) -> Result<RatioEstimate> {
    profile.validate()?;
    rationalize(profile.fast_gflops / profile.slow_gflops, tolerance)
}

pub fn rationalize(exact: f64, tolerance: f64) -> Result<RatioEstimate> {
    if !(exact > 0.0) || !exact.is_finite() {
        return Err(Error::Domain(format!("ratio {exact} must be positive")));
    }
    let tolerance = tolerance.max(0.0);
    let mut best: Option<RatioEstimate> = None;
    for slow in 1..=10_000u64 {
        let fast = ((exact * slow as f64).round() as u64).max(1);
        let rel_error = ((fast as f64 / slow as f64) - exact).abs() / exact;
        let cand = RatioEstimate {
            exact,
            ratio: PerfRatio::new(fast, slow)?,
            rel_error,
        };
        if rel_error <= tolerance {
            return Ok(cand);
        }
        if best.is_none_or(|b| rel_error < b.rel_error) {
            best = Some(cand);
        }
    }
    best.ok_or_else(|| Error::Domain(format!("cannot rationalize {exact}")))
}

/// Like [`predict_makespan`], but with the shares the coarse partition
/// actually produces: whole `mc` (or `nc`) blocks per cluster.
pub fn predict_quantized(
    problem: &GemmProblem,
    params: &BlockingParams,
    config: &ParallelConfig,
    profile: &ClusterProfile,
) -> Result<Prediction> {
    problem.validate()?;
    params.validate()?;
    let plan = plan_coarse(problem, params, config)?;
    let total = problem.flops() as f64;
    let extent = plan.extent.max(1) as f64;
    let fast = total * plan.range(CoreClass::Fast).len() as f64 / extent;
    let shares = [fast, total - fast];
    let profile = profile
        .clone()
        .with_threads(config.topology.fast_threads, config.topology.slow_threads);
    predict_makespan(total, shares, &profile)
}
