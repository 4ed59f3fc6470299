use anyhow::Result;

use agemm::simulate::{ratio_shares, RATIO_TOLERANCE};
use agemm::{
    ideal_throughput, optimal_ratio, predict_makespan, predict_quantized, ClusterProfile, GemmProblem, PerfRatio,
    Prediction,
};

use crate::args::{SchedArgs, SimulateArgs};
use crate::output::Output;
use crate::setup;
use crate::Usage;

pub const SIMULATE_CSV_HEADER: &str = "split,m,n,k,ratio,gflops,watts_total,gflops_per_watt,of_ideal";

/// Work size for the unquantized rows; the predictions do not depend on it.
const NOMINAL_FLOPS: f64 = 1e12;

pub fn run(sched: &SchedArgs, args: &SimulateArgs) -> Result<()> {
    let cal = setup::calibration(sched)?;
    let (fast, slow) = match (args.profile, &cal) {
        (Some(p), _) => p,
        (None, Some(c)) if c.gflops_fast.is_some() && c.gflops_slow.is_some() => {
            (c.gflops_fast.unwrap_or_default(), c.gflops_slow.unwrap_or_default())
        }
        _ => {
            return Err(Usage(
                "missing profile: pass --profile FAST,SLOW (or `reference`), or a --calibration file with gflops_fast and gflops_slow".into(),
            )
            .into())
        }
    };
    let profile = ClusterProfile::new(fast, slow)?
        .with_power(setup::power_model(sched)?)
        .with_threads(sched.threads_fast, sched.threads_slow);
    let ratio = setup::ratio(sched, cal.as_ref());
    let ideal = ideal_throughput(&profile);
    let best = optimal_ratio(&profile, RATIO_TOLERANCE)?;

    let mut out = Output::new(sched.out.as_deref());
    out.line(SIMULATE_CSV_HEADER)?;
    let mut row = |split: &str, shape: Option<(usize, usize, usize)>, label: &str, p: &Prediction| {
        let (m, n, k) = shape.map_or((String::new(), String::new(), String::new()), |(m, n, k)| {
            (m.to_string(), n.to_string(), k.to_string())
        });
        out.line(&format!(
            "{split},{m},{n},{k},{label},{:.3},{:.3},{:.3},{:.3}",
            p.gflops,
            p.watts.total(),
            p.gflops_per_watt,
            p.gflops / ideal
        ))
    };

    let t = NOMINAL_FLOPS;
    row("fast-only", None, "1:0", &predict_makespan(t, [t, 0.0], &profile)?)?;
    row("slow-only", None, "0:1", &predict_makespan(t, [0.0, t], &profile)?)?;
    let sym = PerfRatio::SYMMETRIC;
    row("symmetric", None, &sym.to_string(), &predict_makespan(t, ratio_shares(t, &sym), &profile)?)?;
    row("asymmetric", None, &ratio.to_string(), &predict_makespan(t, ratio_shares(t, &ratio), &profile)?)?;
    row(
        "balanced",
        None,
        &best.ratio.to_string(),
        &predict_makespan(t, ratio_shares(t, &best.ratio), &profile)?,
    )?;
    let exact = [t * fast / ideal, t - t * fast / ideal];
    row("ideal", None, &format!("{:.3}:1", best.exact), &predict_makespan(t, exact, &profile)?)?;

    if let Some(sizes) = &args.sizes {
        for &(m, n, k) in &sizes.0 {
            let problem = GemmProblem::new(m, n, k, 1.0, 1.0)?;
            let params = setup::params(cal.as_ref());
            for (split, r) in [("symmetric-quantized", sym), ("asymmetric-quantized", ratio)] {
                let cfg = setup::config(sched, sched.threads_fast, sched.threads_slow, r);
                let p = predict_quantized(&problem, &params, &cfg, &profile)?;
                row(split, Some((m, n, k)), &r.to_string(), &p)?;
            }
        }
    }
    out.finish()
}
