use agemm::simulate::{ratio_shares, RATIO_TOLERANCE};
use agemm::{
    ideal_throughput, optimal_ratio, predict_makespan, predict_quantized, BlockingParams, ClusterProfile,
    CoreTopology, GemmProblem, LoopId, ParallelConfig, PerfRatio,
};
use proptest::prelude::*;

fn profile() -> impl Strategy<Value = ClusterProfile> {
    (0.1f64..50.0, 0.1f64..50.0).prop_map(|(f, s)| ClusterProfile::new(f, s).unwrap())
}

proptest! {
    #[test]
    fn never_beats_ideal(p in profile(), frac in 0.0f64..=1.0) {
        let t = 1e12;
        let shares = [t * frac, t - t * frac];
        let pred = predict_makespan(t, shares, &p).unwrap();
        prop_assert!(pred.gflops <= ideal_throughput(&p) * (1.0 + 1e-12));
    }

    #[test]
    fn proportional_shares_reach_ideal(p in profile()) {
        let t = 1e12;
        let f = t * p.fast_gflops / ideal_throughput(&p);
        let pred = predict_makespan(t, [f, t - f], &p).unwrap();
        prop_assert!((pred.gflops - ideal_throughput(&p)).abs() <= 1e-9 * ideal_throughput(&p));
    }

    #[test]
    fn balanced_ratio_wins_integer_sweep(p in profile()) {
        let t = 1e12;
        let best = optimal_ratio(&p, RATIO_TOLERANCE).unwrap();
        let exact = [t * best.exact / (best.exact + 1.0), t / (best.exact + 1.0)];
        let top = predict_makespan(t, exact, &p).unwrap().gflops;
        for r in 1..=12u64 {
            let g = predict_makespan(t, ratio_shares(t, &PerfRatio::new(r, 1).unwrap()), &p).unwrap().gflops;
            prop_assert!(g <= top * (1.0 + 1e-12));
        }
    }
}

fn cfg(ratio: PerfRatio) -> ParallelConfig {
    ParallelConfig::new(CoreTopology::new(4, 4), ratio).with_loops(LoopId::Ic, &[LoopId::Jr])
}

#[test]
fn quantized_prediction_converges() {
    let p = ClusterProfile::reference();
    let params = BlockingParams::default();
    let unq = predict_makespan(1e12, ratio_shares(1e12, &PerfRatio::DEFAULT), &p).unwrap().gflops;
    for units in [700usize, 1000, 5000] {
        let problem = GemmProblem::new(units * params.mc, 4, 4, 1.0, 1.0).unwrap();
        let q = predict_quantized(&problem, &params, &cfg(PerfRatio::DEFAULT), &p).unwrap().gflops;
        assert!((q - unq).abs() <= 0.01 * unq, "{units} units: {q} vs {unq}");
    }
}

#[test]
fn small_mc_multiples_lose_to_ideal_split() {
    let p = ClusterProfile::reference();
    let params = BlockingParams::default();
    let unq = predict_makespan(1e12, ratio_shares(1e12, &PerfRatio::DEFAULT), &p).unwrap().gflops;
    for m in [176, 352, 528, 704] {
        let q = predict_quantized(&GemmProblem::square(m).unwrap(), &params, &cfg(PerfRatio::DEFAULT), &p)
            .unwrap()
            .gflops;
        assert!(q < unq, "m={m}: {q}");
    }
}

#[test]
fn single_cluster_topology_gets_everything() {
    let p = ClusterProfile::reference();
    let c = ParallelConfig::new(CoreTopology::new(4, 0), PerfRatio::DEFAULT);
    let q = predict_quantized(&GemmProblem::square(1000).unwrap(), &BlockingParams::default(), &c, &p).unwrap();
    assert!((q.gflops - 10.374).abs() < 1e-9);
}
