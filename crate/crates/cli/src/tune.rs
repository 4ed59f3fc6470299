use anyhow::{Context, Result};

use agemm::autotune::{write_atomic, GemmBench, PoolBench};
use agemm::{
    calibrate_ratio, tune_blocking, BlockingBench, BlockingParams, Calibration, ClusterBench, CoreClass,
    GemmProblem, TuneSpace,
};

use crate::args::{SchedArgs, Timer, TuneArgs};
use crate::setup;
use crate::Usage;

pub const DEFAULT_CALIBRATION_PATH: &str = "agemm-calibration.txt";

/// Deterministic cost, cheapest at the default block sizes.
struct ModelBlocking;

impl BlockingBench for ModelBlocking {
    fn run(&mut self, params: &BlockingParams, problem: &GemmProblem) -> agemm::Result<f64> {
        let d = BlockingParams::default();
        let dm = (params.mc as f64 - d.mc as f64) / d.mc as f64;
        let dk = (params.kc as f64 - d.kc as f64) / d.kc as f64;
        Ok(problem.flops() as f64 * 1e-10 * (1.0 + dm * dm + dk * dk))
    }
}

/// Deterministic per-cluster throughputs.
struct ModelClusters(f64, f64);

impl ClusterBench for ModelClusters {
    fn run(&mut self, class: CoreClass, _: usize, problem: &GemmProblem) -> agemm::Result<f64> {
        let g = if class == CoreClass::Fast { self.0 } else { self.1 };
        Ok(problem.flops() as f64 / (g * 1e9))
    }
}

pub fn run(sched: &SchedArgs, args: &TuneArgs) -> Result<()> {
    let cal = setup::calibration(sched)?;
    let base = setup::params(cal.as_ref());
    let mut sizes = Vec::new();
    for &(m, n, k) in &args.sizes.0 {
        if m != n || n != k {
            return Err(Usage(format!("tune takes square sizes, got {m}x{n}x{k}")).into());
        }
        sizes.push(m);
    }
    let mut space = TuneSpace {
        nc: base.nc,
        mr: base.mr,
        nr: base.nr,
        sizes: sizes.clone(),
        reps: args.reps as usize,
        ..TuneSpace::default()
    };
    if let Some(g) = &args.grid {
        space.mc = g.mc.clone();
        space.kc = g.kc.clone();
    }

    let report = match args.timer {
        Timer::Wall => tune_blocking(&space, &mut GemmBench::new(sched.seed))?,
        Timer::Model => tune_blocking(&space, &mut ModelBlocking)?,
    };
    let params = report.best;

    let mut calibration = Calibration {
        params,
        ratio: setup::ratio(sched, cal.as_ref()),
        gflops_fast: None,
        gflops_slow: None,
    };
    let topo = setup::topology(sched, sched.threads_fast, sched.threads_slow);
    if !args.skip_ratio && topo.fast_threads > 0 && topo.slow_threads > 0 {
        let r = match args.timer {
            Timer::Wall => calibrate_ratio(&sizes, &topo, space.reps, &mut PoolBench::new(sched.seed, params, sched.pin))?,
            Timer::Model => {
                let (f, s) = args.profile.ok_or_else(|| {
                    Usage("--timer model needs --profile FAST,SLOW for the ratio (or --skip-ratio)".into())
                })?;
                calibrate_ratio(&sizes, &topo, space.reps, &mut ModelClusters(f, s))?
            }
        };
        calibration.ratio = r.estimate.ratio;
        calibration.gflops_fast = Some(r.fast_gflops);
        calibration.gflops_slow = Some(r.slow_gflops);
    }

    let path = sched
        .out
        .clone()
        .unwrap_or_else(|| DEFAULT_CALIBRATION_PATH.into());
    calibration
        .write(&path)
        .with_context(|| format!("writing calibration {}", path.display()))?;
    match &args.report {
        Some(p) => write_atomic(p, report.to_csv().as_bytes()).with_context(|| format!("writing report {}", p.display()))?,
        None => print!("{}", report.to_csv()),
    }
    for (mc, kc, why) in &report.skipped {
        eprintln!("skipped mc={mc} kc={kc}: {why}");
    }
    eprintln!(
        "mc={} kc={} nc={} mr={} nr={} ratio={} -> {}",
        params.mc,
        params.kc,
        params.nc,
        params.mr,
        params.nr,
        calibration.ratio,
        path.display()
    );
    Ok(())
}
