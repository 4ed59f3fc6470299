//! Turning shared flags into library configuration.

use anyhow::{Context, Result};

use agemm::{BlockingParams, Calibration, CoreTopology, ParallelConfig, PerfRatio, PowerModel};

use crate::args::SchedArgs;

pub fn calibration(sched: &SchedArgs) -> Result<Option<Calibration>> {
    sched
        .calibration
        .as_deref()
        .map(|p| Calibration::read(p).with_context(|| format!("reading calibration {}", p.display())))
        .transpose()
}

pub fn params(cal: Option<&Calibration>) -> BlockingParams {
    cal.map_or_else(BlockingParams::default, |c| c.params)
}

/// `--ratio`, else the calibration file, else 6:1.
pub fn ratio(sched: &SchedArgs, cal: Option<&Calibration>) -> PerfRatio {
    sched
        .ratio
        .or_else(|| cal.map(|c| c.ratio))
        .unwrap_or(PerfRatio::DEFAULT)
}

pub fn power_model(sched: &SchedArgs) -> Result<PowerModel> {
    match &sched.power_model {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            PowerModel::parse(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(PowerModel::default()),
    }
}

pub fn topology(sched: &SchedArgs, fast: usize, slow: usize) -> CoreTopology {
    let t = CoreTopology::new(fast, slow);
    if sched.pin {
        t.with_sequential_pinning()
    } else {
        t
    }
}

pub fn config(sched: &SchedArgs, fast: usize, slow: usize, ratio: PerfRatio) -> ParallelConfig {
    ParallelConfig::new(topology(sched, fast, slow), ratio)
        .with_loops(sched.coarse_loop, &sched.fine_loops.0)
}
