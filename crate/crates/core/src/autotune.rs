//! Empirical search for block sizes and the fast:slow ratio.
//!
//! Timing is behind the [`BlockingBench`] and [`ClusterBench`] traits so
//! that searches can run against a synthetic cost function.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::blocked::{default_params, gemm_blocked, BlockingParams};
use crate::config::{CoreClass, CoreTopology, ParallelConfig, PerfRatio};
use crate::error::{Error, LoopId, Result};
use crate::matrix::{GemmProblem, Matrix};
use crate::parallel::AsymGemm;
use crate::simulate::{rationalize, RatioEstimate, RATIO_TOLERANCE};

pub const TUNE_CSV_HEADER: &str = "mc,kc,gflops_median,gflops_min,gflops_max";

/// Times one blocked GEMM; returns elapsed seconds.
pub trait BlockingBench {
    fn run(&mut self, params: &BlockingParams, problem: &GemmProblem) -> Result<f64>;
}

/// Times one GEMM on `threads` cores of a single class; returns seconds.
pub trait ClusterBench {
    fn run(&mut self, class: CoreClass, threads: usize, problem: &GemmProblem) -> Result<f64>;
}

type Operands = HashMap<(usize, usize, usize), (Matrix, Matrix, Matrix)>;

fn operands<'a>(cache: &'a mut Operands, p: &GemmProblem, seed: u64) -> &'a mut (Matrix, Matrix, Matrix) {
    cache.entry((p.m, p.n, p.k)).or_insert_with(|| {
        (
            Matrix::random(p.m, p.k, seed),
            Matrix::random(p.k, p.n, seed.wrapping_add(1)),
            Matrix::random(p.m, p.n, seed.wrapping_add(2)),
        )
    })
}

/// Wall-clock timing of [`gemm_blocked`] on seeded random operands.
#[derive(Default)]
pub struct GemmBench {
    seed: u64,
    cache: Operands,
}

impl GemmBench {
    pub fn new(seed: u64) -> Self {
        GemmBench {
            seed,
            cache: HashMap::new(),
        }
    }
}

impl BlockingBench for GemmBench {
    fn run(&mut self, params: &BlockingParams, problem: &GemmProblem) -> Result<f64> {
        let (a, b, c) = operands(&mut self.cache, problem, self.seed);
        let t = Instant::now();
        gemm_blocked(problem, a, b, c, params)?;
        Ok(t.elapsed().as_secs_f64())
    }
}

/// Wall-clock timing of the parallel driver with one cluster idle.
pub struct PoolBench {
    seed: u64,
    params: BlockingParams,
    pin: bool,
    cache: Operands,
    engines: HashMap<(CoreClass, usize), AsymGemm>,
}

impl PoolBench {
    pub fn new(seed: u64, params: BlockingParams, pin: bool) -> Self {
        PoolBench {
            seed,
            params,
            pin,
            cache: HashMap::new(),
            engines: HashMap::new(),
        }
    }
}

impl ClusterBench for PoolBench {
    fn run(&mut self, class: CoreClass, threads: usize, problem: &GemmProblem) -> Result<f64> {
        if !self.engines.contains_key(&(class, threads)) {
            let mut topo = match class {
                CoreClass::Fast => CoreTopology::new(threads, 0),
                CoreClass::Slow => CoreTopology::new(0, threads),
            };
            if self.pin {
                topo = topo.with_sequential_pinning();
            }
            let cfg = ParallelConfig::new(topo, PerfRatio::DEFAULT).with_loops(LoopId::Ic, &[LoopId::Jr]);
            self.engines.insert((class, threads), AsymGemm::new(cfg)?);
        }
        let engine = &self.engines[&(class, threads)];
        let (a, b, c) = operands(&mut self.cache, problem, self.seed);
        let t = Instant::now();
        engine.gemm(problem, a, b, c, &self.params)?;
        Ok(t.elapsed().as_secs_f64())
    }
}

/// Grid and protocol for [`tune_blocking`].
#[derive(Debug, Clone, PartialEq)]
pub struct TuneSpace {
    pub mc: Vec<usize>,
    pub kc: Vec<usize>,
    pub nc: usize,
    pub mr: usize,
    pub nr: usize,
    /// Square problem sizes timed at each point.
    pub sizes: Vec<usize>,
    pub reps: usize,
}

impl Default for TuneSpace {
    /// `mc` in 32..=512 and `kc` in 64..=1024, both in steps of 16.
    fn default() -> Self {
        let d = default_params();
        TuneSpace {
            mc: (32..=512).step_by(16).collect(),
            kc: (64..=1024).step_by(16).collect(),
            nc: d.nc,
            mr: d.mr,
            nr: d.nr,
            sizes: vec![1024],
            reps: 3,
        }
    }
}

impl TuneSpace {
    pub fn singleton(mc: usize, kc: usize) -> Self {
        TuneSpace {
            mc: vec![mc],
            kc: vec![kc],
            ..TuneSpace::default()
        }
    }

    /// Grid points sorted by `(mc, kc)`, duplicates removed.
    pub fn points(&self) -> Vec<(usize, usize)> {
        let mcs: BTreeSet<usize> = self.mc.iter().copied().collect();
        let kcs: BTreeSet<usize> = self.kc.iter().copied().collect();
        mcs.iter().flat_map(|&m| kcs.iter().map(move |&k| (m, k))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneRow {
    pub mc: usize,
    pub kc: usize,
    pub gflops_median: f64,
    pub gflops_min: f64,
    pub gflops_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneReport {
    pub best: BlockingParams,
    pub rows: Vec<TuneRow>,
    /// Points that failed, with the reason.
    pub skipped: Vec<(usize, usize, String)>,
}

impl TuneReport {
    pub fn best_row(&self) -> Option<&TuneRow> {
        self.rows
            .iter()
            .find(|r| r.mc == self.best.mc && r.kc == self.best.kc)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{TUNE_CSV_HEADER}\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                r.mc, r.kc, r.gflops_median, r.gflops_min, r.gflops_max
            ));
        }
        s
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn check_reps(reps: usize) -> Result<()> {
    if reps < 3 {
        return Err(Error::Domain(format!("need at least 3 repetitions, got {reps}")));
    }
    Ok(())
}

fn problems(sizes: &[usize]) -> Result<Vec<GemmProblem>> {
    if sizes.is_empty() {
        return Err(Error::Domain("no problem sizes".into()));
    }
    sizes.iter().map(|&n| GemmProblem::square(n)).collect()
}

/// GFLOPS of one repetition over all problems.
fn rep_gflops(problems: &[GemmProblem], mut time: impl FnMut(&GemmProblem) -> Result<f64>) -> Result<f64> {
    let mut secs = 0.0;
    let mut flops = 0.0;
    for p in problems {
        secs += time(p)?;
        flops += p.flops() as f64;
    }
    Ok(if secs > 0.0 { flops / secs / 1e9 } else { f64::INFINITY })
}

/// Exhaustive grid search for the `(mc, kc)` with the best median GFLOPS.
///
/// Each point gets one discarded warm-up and `reps` timed repetitions.
/// Ties go to the smaller `mc`, then the smaller `kc`. Points whose run
/// fails are skipped and listed in the report.
pub fn tune_blocking(space: &TuneSpace, bench: &mut dyn BlockingBench) -> Result<TuneReport> {
    check_reps(space.reps)?;
    let points = space.points();
    if points.is_empty() {
        return Err(Error::Domain("empty tuning grid".into()));
    }
    let problems = problems(&space.sizes)?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut best: Option<TuneRow> = None;

    for (mc, kc) in points {
        let params = BlockingParams {
            nc: space.nc,
            kc,
            mc,
            nr: space.nr,
            mr: space.mr,
        };
        let result = params.validate().and_then(|_| {
            rep_gflops(&problems, |p| bench.run(&params, p))?;
            let mut g = (0..space.reps)
                .map(|_| rep_gflops(&problems, |p| bench.run(&params, p)))
                .collect::<Result<Vec<f64>>>()?;
            let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(TuneRow {
                mc,
                kc,
                gflops_median: median(&mut g),
                gflops_min: lo,
                gflops_max: hi,
            })
        });
        match result {
            Ok(row) => {
                log::debug!("mc={mc} kc={kc}: {:.3} GFLOPS", row.gflops_median);
                if best.is_none_or(|b| row.gflops_median > b.gflops_median) {
                    best = Some(row);
                }
                rows.push(row);
            }
            Err(e) => {
                log::warn!("skipping mc={mc} kc={kc}: {e}");
                skipped.push((mc, kc, e.to_string()));
            }
        }
    }
    let best = best.ok_or_else(|| Error::Calibration("every grid point failed".into()))?;
    Ok(TuneReport {
        best: BlockingParams {
            nc: space.nc,
            kc: best.kc,
            mc: best.mc,
            nr: space.nr,
            mr: space.mr,
        },
        rows,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioReport {
    pub fast_gflops: f64,
    pub slow_gflops: f64,
    pub estimate: RatioEstimate,
}

/// Measures each cluster alone with all its threads and derives the ratio
/// that balances them, rationalized within [`RATIO_TOLERANCE`].
pub fn calibrate_ratio(
    sizes: &[usize],
    topology: &CoreTopology,
    reps: usize,
    bench: &mut dyn ClusterBench,
) -> Result<RatioReport> {
    calibrate_ratio_with_tolerance(sizes, topology, reps, RATIO_TOLERANCE, bench)
}

pub fn calibrate_ratio_with_tolerance(
    sizes: &[usize],
    topology: &CoreTopology,
    reps: usize,
    tolerance: f64,
    bench: &mut dyn ClusterBench,
) -> Result<RatioReport> {
    check_reps(reps)?;
    if topology.fast_threads == 0 || topology.slow_threads == 0 {
        return Err(Error::Config(
            "ratio calibration needs at least one thread of each class".into(),
        ));
    }
    let problems = problems(sizes)?;
    let mut g = [0.0; 2];
    for class in CoreClass::ALL {
        let threads = topology.threads(class);
        rep_gflops(&problems, |p| bench.run(class, threads, p))?;
        let mut reps_g = (0..reps)
            .map(|_| rep_gflops(&problems, |p| bench.run(class, threads, p)))
            .collect::<Result<Vec<f64>>>()?;
        let med = median(&mut reps_g);
        if !(med > 0.0) || !med.is_finite() {
            return Err(Error::Calibration(format!("{class} cluster measured {med} GFLOPS")));
        }
        g[class.index()] = med;
    }
    Ok(RatioReport {
        fast_gflops: g[0],
        slow_gflops: g[1],
        estimate: rationalize(g[0] / g[1], tolerance)?,
    })
}

/// Tuned block sizes and ratio, stored as `key=value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub params: BlockingParams,
    pub ratio: PerfRatio,
    pub gflops_fast: Option<f64>,
    pub gflops_slow: Option<f64>,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            params: default_params(),
            ratio: PerfRatio::DEFAULT,
            gflops_fast: None,
            gflops_slow: None,
        }
    }
}

impl fmt::Display for Calibration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.params;
        writeln!(f, "mc={}", p.mc)?;
        writeln!(f, "kc={}", p.kc)?;
        writeln!(f, "nc={}", p.nc)?;
        writeln!(f, "mr={}", p.mr)?;
        writeln!(f, "nr={}", p.nr)?;
        writeln!(f, "ratio_fast={}", self.ratio.fast())?;
        writeln!(f, "ratio_slow={}", self.ratio.slow())?;
        if let Some(g) = self.gflops_fast {
            writeln!(f, "gflops_fast={g}")?;
        }
        if let Some(g) = self.gflops_slow {
            writeln!(f, "gflops_slow={g}")?;
        }
        Ok(())
    }
}

impl Calibration {
    /// Missing keys keep their defaults; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cal = Calibration::default();
        let (mut rf, mut rs) = (cal.ratio.fast(), cal.ratio.slow());
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Parse { line: i + 1, reason };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let int = || {
                value
                    .parse::<usize>()
                    .map_err(|e| err(format!("{key}: bad integer {value:?}: {e}")))
            };
            let real = || {
                value
                    .parse::<f64>()
                    .map_err(|e| err(format!("{key}: bad number {value:?}: {e}")))
            };
            match key {
                "mc" => cal.params.mc = int()?,
                "kc" => cal.params.kc = int()?,
                "nc" => cal.params.nc = int()?,
                "mr" => cal.params.mr = int()?,
                "nr" => cal.params.nr = int()?,
                "ratio_fast" => rf = int()? as u64,
                "ratio_slow" => rs = int()? as u64,
                "gflops_fast" => cal.gflops_fast = Some(real()?),
                "gflops_slow" => cal.gflops_slow = Some(real()?),
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        cal.params.validate()?;
        cal.ratio = PerfRatio::new(rf, rs)?;
        Ok(cal)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Calibration::parse(&std::fs::read_to_string(path)?)
    }

    /// Writes through a sibling temporary file and a rename, so `path` is
    /// either left untouched or fully written.
    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_string().as_bytes())
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::Io(format!("{}: {e}", path.display())));
    }
    Ok(())
}
