use std::collections::HashMap;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::info;

use agemm::{
    efficiency, gemm_blocked, gemm_reference, gflops, model_power, AsymGemm, ComponentWatts, GemmProblem, Matrix,
    ParallelConfig, PerfRatio, PowerSource, PowerTrace,
};

use crate::args::{BenchArgs, SchedArgs, Variant};
use crate::output::Output;
use crate::setup;
use crate::Usage;

pub const BENCH_CSV_HEADER: &str =
    "variant,m,n,k,threads_fast,threads_slow,ratio,elapsed_s,gflops,watts_total,gflops_per_watt";

struct Run {
    variant: Variant,
    fast: usize,
    slow: usize,
    /// Weights as printed; single-cluster runs show `1:0` or `0:1`.
    label: String,
    config: Option<ParallelConfig>,
}

fn runs(sched: &SchedArgs, args: &BenchArgs, ratio: PerfRatio) -> Result<Vec<Run>> {
    let mut out = Vec::new();
    let mut variants = args.variants.clone();
    variants.dedup();
    for v in variants {
        match v {
            Variant::Fast | Variant::Slow => {
                for &t in &args.threads.0 {
                    let (f, s, label) = if v == Variant::Fast { (t, 0, "1:0") } else { (0, t, "0:1") };
                    out.push(Run {
                        variant: v,
                        fast: f,
                        slow: s,
                        label: label.into(),
                        config: Some(setup::config(sched, f, s, PerfRatio::DEFAULT)),
                    });
                }
            }
            Variant::Symmetric | Variant::Asymmetric => {
                let (f, s) = (sched.threads_fast, sched.threads_slow);
                if f == 0 || s == 0 {
                    bail!(Usage(format!(
                        "the {} variant needs threads on both clusters (got {f}+{s})",
                        v.name()
                    )));
                }
                let r = if v == Variant::Symmetric { PerfRatio::SYMMETRIC } else { ratio };
                out.push(Run {
                    variant: v,
                    fast: f,
                    slow: s,
                    label: r.to_string(),
                    config: Some(setup::config(sched, f, s, r)),
                });
            }
            Variant::Blocked | Variant::Reference => out.push(Run {
                variant: v,
                fast: 1,
                slow: 0,
                label: "1:0".into(),
                config: None,
            }),
        }
    }
    Ok(out)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn run(sched: &SchedArgs, args: &BenchArgs) -> Result<()> {
    let cal = setup::calibration(sched)?;
    let params = setup::params(cal.as_ref());
    let ratio = setup::ratio(sched, cal.as_ref());
    let model = setup::power_model(sched)?;
    let traced: Option<ComponentWatts> = match &args.trace {
        Some(p) => {
            let trace = PowerTrace::read(p, agemm::energy::DEFAULT_PERIOD_MS)
                .with_context(|| format!("reading trace {}", p.display()))?;
            Some(PowerSource::Trace { trace, window: None }.watts()?)
        }
        None => None,
    };
    let runs = runs(sched, args, ratio)?;

    let mut out = Output::new(sched.out.as_deref());
    out.line(BENCH_CSV_HEADER)?;
    let mut engine: Option<AsymGemm> = None;
    let mut reference: HashMap<(usize, usize, usize), Matrix> = HashMap::new();

    for r in &runs {
        if let Some(cfg) = &r.config {
            if engine.as_ref().is_none_or(|e| e.config().topology != cfg.topology) {
                // one pool at a time
                drop(engine.take());
                engine = Some(AsymGemm::new(cfg.clone())?);
            }
        }
        for &(m, n, k) in &args.sizes.0 {
            let problem = GemmProblem::new(m, n, k, 1.0, 1.0)?;
            let a = Matrix::random(m, k, sched.seed);
            let b = Matrix::random(k, n, sched.seed.wrapping_add(1));
            let c0 = Matrix::random(m, n, sched.seed.wrapping_add(2));
            let mut times = Vec::new();
            let mut result = None;
            for _ in 0..args.reps {
                let mut c = c0.clone();
                let t = Instant::now();
                match (r.variant, &r.config) {
                    (Variant::Reference, _) => gemm_reference(&problem, &a, &b, &mut c)?,
                    (Variant::Blocked, _) => gemm_blocked(&problem, &a, &b, &mut c, &params)?,
                    (_, Some(cfg)) => {
                        let e = engine.as_ref().expect("engine built above");
                        e.gemm_with_config(&problem, &a, &b, &mut c, &params, cfg)?;
                    }
                    (_, None) => unreachable!("parallel variants carry a config"),
                }
                times.push(t.elapsed().as_secs_f64());
                result.get_or_insert(c);
            }
            if args.verify {
                let want = reference.entry((m, n, k)).or_insert_with(|| {
                    let mut w = c0.clone();
                    gemm_reference(&problem, &a, &b, &mut w).expect("operands are conformable");
                    w
                });
                let got = result.as_ref().expect("at least one repetition");
                if !got.bitwise_eq(want) {
                    bail!(
                        "verification failed: {} {m}x{n}x{k} with {}+{} threads differs from the reference (max |diff| {:e})",
                        r.variant.name(),
                        r.fast,
                        r.slow,
                        got.max_abs_diff(want)
                    );
                }
                info!("verified {} {m}x{n}x{k}", r.variant.name());
            }
            let elapsed = median(times).max(f64::MIN_POSITIVE);
            let g = gflops(problem.flops(), elapsed)?;
            let watts = traced.unwrap_or_else(|| model_power(&model, r.fast, r.slow)).total();
            let eff = if watts > 0.0 { efficiency(g, watts)? } else { 0.0 };
            out.line(&format!(
                "{},{m},{n},{k},{},{},{},{elapsed:.6},{g:.3},{watts:.3},{eff:.3}",
                r.variant.name(),
                r.fast,
                r.slow,
                r.label
            ))?;
        }
    }
    out.finish()
}
