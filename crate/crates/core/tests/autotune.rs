use agemm::autotune::write_atomic;
use agemm::{
    calibrate_ratio, tune_blocking, BlockingBench, BlockingParams, Calibration, ClusterBench, CoreClass,
    CoreTopology, GemmProblem, PerfRatio, Result, TuneSpace,
};
use proptest::prelude::*;

/// Seconds from a smooth surface over `(mc, kc)` with a single peak.
struct Surface {
    peak: (usize, usize),
}

impl BlockingBench for Surface {
    fn run(&mut self, p: &BlockingParams, problem: &GemmProblem) -> Result<f64> {
        let dm = (p.mc as f64 - self.peak.0 as f64) / 64.0;
        let dk = (p.kc as f64 - self.peak.1 as f64) / 64.0;
        let gflops = 10.0 / (1.0 + dm * dm + dk * dk);
        Ok(problem.flops() as f64 / (gflops * 1e9))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tuning_is_deterministic_and_order_free(
        mc in prop::collection::vec(1usize..600, 1..8),
        kc in prop::collection::vec(1usize..1100, 1..8),
        pm in 1usize..600, pk in 1usize..1100,
    ) {
        let space = TuneSpace { mc: mc.clone(), kc: kc.clone(), sizes: vec![64], ..TuneSpace::default() };
        let a = tune_blocking(&space, &mut Surface { peak: (pm, pk) }).unwrap();
        let b = tune_blocking(&space, &mut Surface { peak: (pm, pk) }).unwrap();
        prop_assert_eq!(&a, &b);
        let mut rev = space.clone();
        rev.mc.reverse();
        rev.kc.reverse();
        let c = tune_blocking(&rev, &mut Surface { peak: (pm, pk) }).unwrap();
        prop_assert_eq!(a.best, c.best);
        // brute-force oracle over the same grid
        let best = a.rows.iter().map(|r| r.gflops_median).fold(f64::MIN, f64::max);
        let want = a.rows.iter().filter(|r| r.gflops_median == best).map(|r| (r.mc, r.kc)).min().unwrap();
        prop_assert_eq!((a.best.mc, a.best.kc), want);
    }
}

#[test]
fn grid_search_finds_the_surface_peak() {
    let space = TuneSpace { sizes: vec![128], ..TuneSpace::default() };
    let report = tune_blocking(&space, &mut Surface { peak: (176, 368) }).unwrap();
    assert_eq!((report.best.mc, report.best.kc), (176, 368));
    assert_eq!(report.rows.len(), 31 * 61);
}

struct Clusters([f64; 2]);

impl ClusterBench for Clusters {
    fn run(&mut self, class: CoreClass, _threads: usize, problem: &GemmProblem) -> Result<f64> {
        Ok(problem.flops() as f64 / (self.0[class.index()] * 1e9))
    }
}

#[test]
fn calibration_survives_a_file_round_trip() {
    let ratio = calibrate_ratio(&[256], &CoreTopology::new(4, 4), 3, &mut Clusters([10.374, 2.086])).unwrap();
    assert_eq!(ratio.estimate.ratio, PerfRatio::new(5, 1).unwrap());
    let cal = Calibration {
        params: BlockingParams { mc: 160, kc: 320, ..BlockingParams::default() },
        ratio: ratio.estimate.ratio,
        gflops_fast: Some(ratio.fast_gflops),
        gflops_slow: Some(ratio.slow_gflops),
    };
    let dir = std::env::temp_dir().join(format!("agemm-cal-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("cal.txt");
    cal.write(&path).unwrap();
    assert_eq!(Calibration::read(&path).unwrap(), cal);
    write_atomic(&path, b"mc=1\n").unwrap();
    assert!(Calibration::read(&path).is_ok_and(|c| c.params.mc == 1));
    std::fs::remove_dir_all(&dir).unwrap();
}
