//! Core classes, performance ratio and parallel-loop configuration.
//!
//! The defaults reproduce the best big.LITTLE setup: Loop 3 split 6:1
//! between a 4-thread fast cluster and a 4-thread slow cluster, Loop 4
//! split evenly inside each cluster.
//!
//! All of it can be overridden from the environment:
//!
//! | variable              | format                  |
//! |-----------------------|-------------------------|
//! | `AGEMM_THREADS_FAST`  | thread count            |
//! | `AGEMM_THREADS_SLOW`  | thread count            |
//! | `AGEMM_RATIO`         | `F:S`, e.g. `6:1`       |
//! | `AGEMM_COARSE_LOOP`   | `jc` or `ic`            |
//! | `AGEMM_FINE_LOOPS`    | `jr`, `ir` or `jr,ir`   |
//! | `AGEMM_PIN`           | `0` or `1`              |

use std::fmt;
use std::str::FromStr;

use crate::blocked::BlockingParams;
use crate::error::{Error, LoopId, Result};
use crate::matrix::GemmProblem;

pub const ENV_THREADS_FAST: &str = "AGEMM_THREADS_FAST";
pub const ENV_THREADS_SLOW: &str = "AGEMM_THREADS_SLOW";
pub const ENV_RATIO: &str = "AGEMM_RATIO";
pub const ENV_COARSE_LOOP: &str = "AGEMM_COARSE_LOOP";
pub const ENV_FINE_LOOPS: &str = "AGEMM_FINE_LOOPS";
pub const ENV_PIN: &str = "AGEMM_PIN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoreClass {
    Fast,
    Slow,
}

impl CoreClass {
    pub const ALL: [CoreClass; 2] = [CoreClass::Fast, CoreClass::Slow];

    pub fn index(self) -> usize {
        match self {
            CoreClass::Fast => 0,
            CoreClass::Slow => 1,
        }
    }
}

impl fmt::Display for CoreClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoreClass::Fast => "fast",
            CoreClass::Slow => "slow",
        })
    }
}

/// Thread counts per class and, optionally, the physical cores to bind them to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreTopology {
    pub fast_threads: usize,
    pub slow_threads: usize,
    pub fast_core_ids: Option<Vec<usize>>,
    pub slow_core_ids: Option<Vec<usize>>,
}

impl CoreTopology {
    pub fn new(fast_threads: usize, slow_threads: usize) -> Self {
        CoreTopology {
            fast_threads,
            slow_threads,
            fast_core_ids: None,
            slow_core_ids: None,
        }
    }

    pub fn with_core_ids(mut self, fast: Vec<usize>, slow: Vec<usize>) -> Self {
        self.fast_core_ids = Some(fast);
        self.slow_core_ids = Some(slow);
        self
    }

    /// Binds fast threads to cores `0..F` and slow threads to `F..F+S`.
    pub fn with_sequential_pinning(self) -> Self {
        let f = self.fast_threads;
        let s = self.slow_threads;
        self.with_core_ids((0..f).collect(), (f..f + s).collect())
    }

    pub fn total_threads(&self) -> usize {
        self.fast_threads + self.slow_threads
    }

    pub fn threads(&self, class: CoreClass) -> usize {
        match class {
            CoreClass::Fast => self.fast_threads,
            CoreClass::Slow => self.slow_threads,
        }
    }

    pub fn core_id(&self, class: CoreClass, idx: usize) -> Option<usize> {
        let ids = match class {
            CoreClass::Fast => self.fast_core_ids.as_ref(),
            CoreClass::Slow => self.slow_core_ids.as_ref(),
        };
        ids.and_then(|v| v.get(idx).copied())
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_threads() == 0 {
            return Err(Error::Config("at least one thread is required".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for (class, ids) in [
            (CoreClass::Fast, &self.fast_core_ids),
            (CoreClass::Slow, &self.slow_core_ids),
        ] {
            let Some(ids) = ids else { continue };
            if ids.len() != self.threads(class) {
                return Err(Error::Config(format!(
                    "{class} cluster has {} threads but {} core ids",
                    self.threads(class),
                    ids.len()
                )));
            }
            for id in ids {
                if !seen.insert(*id) {
                    return Err(Error::Config(format!("core id {id} listed twice")));
                }
            }
        }
        Ok(())
    }
}

/// Relative speed of a fast core class versus a slow one, kept gcd-reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PerfRatio {
    fast: u64,
    slow: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl PerfRatio {
    /// The 6:1 split tuned for Cortex-A15 versus Cortex-A7 clusters.
    pub const DEFAULT: PerfRatio = PerfRatio { fast: 6, slow: 1 };
    pub const SYMMETRIC: PerfRatio = PerfRatio { fast: 1, slow: 1 };

    pub fn new(fast: u64, slow: u64) -> Result<Self> {
        if fast == 0 || slow == 0 {
            return Err(Error::Config(format!(
                "ratio weights must be positive, got {fast}:{slow}"
            )));
        }
        let g = gcd(fast, slow);
        Ok(PerfRatio {
            fast: fast / g,
            slow: slow / g,
        })
    }

    pub fn fast(&self) -> u64 {
        self.fast
    }

    pub fn slow(&self) -> u64 {
        self.slow
    }

    pub fn as_f64(&self) -> f64 {
        self.fast as f64 / self.slow as f64
    }
}

impl Default for PerfRatio {
    fn default() -> Self {
        PerfRatio::DEFAULT
    }
}

impl fmt::Display for PerfRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.fast, self.slow)
    }
}

impl FromStr for PerfRatio {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (f, sl) = s
            .split_once(':')
            .ok_or_else(|| "expected F:S, e.g. 6:1".to_string())?;
        let f: u64 = f.trim().parse().map_err(|e| format!("fast weight: {e}"))?;
        let sl: u64 = sl.trim().parse().map_err(|e| format!("slow weight: {e}"))?;
        PerfRatio::new(f, sl).map_err(|e| e.to_string())
    }
}

/// Which micro-tile loops are split among the threads of a cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FineLoops {
    Jr,
    Ir,
    Both,
}

impl FineLoops {
    pub fn loops(self) -> Vec<LoopId> {
        match self {
            FineLoops::Jr => vec![LoopId::Jr],
            FineLoops::Ir => vec![LoopId::Ir],
            FineLoops::Both => vec![LoopId::Jr, LoopId::Ir],
        }
    }
}

/// Tiles handed out per scheduling unit along each fine loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FineChunk {
    pub jr: usize,
    pub ir: usize,
}

impl Default for FineChunk {
    fn default() -> Self {
        FineChunk { jr: 1, ir: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelConfig {
    /// Loop split between clusters: `Jc` (Loop 1) or `Ic` (Loop 3).
    pub coarse_loop: LoopId,
    /// Loops split inside a cluster: a non-empty subset of `{Jr, Ir}`.
    pub fine_loops: Vec<LoopId>,
    pub topology: CoreTopology,
    pub ratio: PerfRatio,
    pub fine_chunk: FineChunk,
}

impl Default for ParallelConfig {
    fn default() -> Self {
        ParallelConfig {
            coarse_loop: LoopId::Ic,
            fine_loops: vec![LoopId::Jr],
            topology: CoreTopology::new(4, 4),
            ratio: PerfRatio::DEFAULT,
            fine_chunk: FineChunk::default(),
        }
    }
}

impl ParallelConfig {
    pub fn new(topology: CoreTopology, ratio: PerfRatio) -> Self {
        ParallelConfig {
            topology,
            ratio,
            ..ParallelConfig::default()
        }
    }

    pub fn with_loops(mut self, coarse: LoopId, fine: &[LoopId]) -> Self {
        self.coarse_loop = coarse;
        self.fine_loops = fine.to_vec();
        self
    }

    /// Interprets `fine_loops`; fails on anything but a subset of `{Jr, Ir}`.
    pub fn fine_mode(&self) -> Result<FineLoops> {
        if self.fine_loops.contains(&LoopId::Pc) {
            return Err(Error::IllegalLoop(LoopId::Pc));
        }
        if let Some(bad) = self
            .fine_loops
            .iter()
            .find(|l| !matches!(l, LoopId::Jr | LoopId::Ir))
        {
            return Err(Error::Config(format!(
                "fine loops must be jr and/or ir, got {bad}"
            )));
        }
        let jr = self.fine_loops.contains(&LoopId::Jr);
        let ir = self.fine_loops.contains(&LoopId::Ir);
        match (jr, ir) {
            (true, true) => Ok(FineLoops::Both),
            (true, false) => Ok(FineLoops::Jr),
            (false, true) => Ok(FineLoops::Ir),
            (false, false) => Err(Error::Config("at least one fine loop is required".into())),
        }
    }
}

/// Non-fatal findings from [`validate_config`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigWarning {
    /// Loop 1 offers fewer than two `nc` column blocks, so at most one
    /// cluster gets work.
    CoarseGranularity { loop_id: LoopId, units: usize },
}

impl fmt::Display for ConfigWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigWarning::CoarseGranularity { loop_id, units } => write!(
                f,
                "coarse loop {loop_id} has only {units} block(s); one cluster will idle"
            ),
        }
    }
}

/// Checks loop legality and topology; problem-dependent checks run when a
/// problem is supplied.
pub fn validate_config(
    config: &ParallelConfig,
    problem: Option<&GemmProblem>,
    params: &BlockingParams,
) -> Result<Vec<ConfigWarning>> {
    if config.coarse_loop == LoopId::Pc {
        return Err(Error::IllegalLoop(LoopId::Pc));
    }
    if !matches!(config.coarse_loop, LoopId::Jc | LoopId::Ic) {
        return Err(Error::Config(format!(
            "coarse loop must be jc or ic, got {}",
            config.coarse_loop
        )));
    }
    config.fine_mode()?;
    config.topology.validate()?;
    if config.fine_chunk.jr == 0 || config.fine_chunk.ir == 0 {
        return Err(Error::Config("fine chunk sizes must be >= 1".into()));
    }
    params.validate()?;

    let mut warnings = Vec::new();
    if let Some(p) = problem {
        if config.coarse_loop == LoopId::Jc && p.n < 2 * params.nc {
            warnings.push(ConfigWarning::CoarseGranularity {
                loop_id: LoopId::Jc,
                units: p.n.div_ceil(params.nc),
            });
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(warnings)
}

/// Settings read from `AGEMM_*` variables; `None` leaves the default.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EnvOverrides {
    pub threads_fast: Option<usize>,
    pub threads_slow: Option<usize>,
    pub ratio: Option<PerfRatio>,
    pub coarse_loop: Option<LoopId>,
    pub fine_loops: Option<Vec<LoopId>>,
    pub pin: Option<bool>,
}

fn parse_err(var: &str, value: &str, reason: impl Into<String>) -> Error {
    Error::ConfigParse {
        var: var.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

fn parse_loop(var: &str, raw: &str) -> Result<LoopId> {
    LoopId::parse(raw).ok_or_else(|| parse_err(var, raw, "expected one of jc, pc, ic, jr, ir"))
}

impl EnvOverrides {
    pub fn from_env() -> Result<Self> {
        Self::from_lookup(|name| std::env::var(name).ok())
    }

    /// Same as [`from_env`](Self::from_env) with an injectable variable source.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let mut out = EnvOverrides::default();
        let count = |var: &str| -> Result<Option<usize>> {
            lookup(var)
                .map(|raw| {
                    raw.trim()
                        .parse::<usize>()
                        .map_err(|e| parse_err(var, &raw, e.to_string()))
                })
                .transpose()
        };
        out.threads_fast = count(ENV_THREADS_FAST)?;
        out.threads_slow = count(ENV_THREADS_SLOW)?;
        if let Some(raw) = lookup(ENV_RATIO) {
            out.ratio = Some(raw.parse().map_err(|e: String| parse_err(ENV_RATIO, &raw, e))?);
        }
        if let Some(raw) = lookup(ENV_COARSE_LOOP) {
            out.coarse_loop = Some(parse_loop(ENV_COARSE_LOOP, &raw)?);
        }
        if let Some(raw) = lookup(ENV_FINE_LOOPS) {
            let loops = raw
                .split(',')
                .map(|t| parse_loop(ENV_FINE_LOOPS, t).map_err(|_| parse_err(ENV_FINE_LOOPS, &raw, format!("bad loop name {t:?}"))))
                .collect::<Result<Vec<_>>>()?;
            out.fine_loops = Some(loops);
        }
        if let Some(raw) = lookup(ENV_PIN) {
            out.pin = Some(match raw.trim() {
                "0" => false,
                "1" => true,
                _ => return Err(parse_err(ENV_PIN, &raw, "expected 0 or 1")),
            });
        }
        Ok(out)
    }

    pub fn apply(&self, mut config: ParallelConfig) -> ParallelConfig {
        if let Some(f) = self.threads_fast {
            config.topology.fast_threads = f;
            config.topology.fast_core_ids = None;
        }
        if let Some(s) = self.threads_slow {
            config.topology.slow_threads = s;
            config.topology.slow_core_ids = None;
        }
        if let Some(r) = self.ratio {
            config.ratio = r;
        }
        if let Some(l) = self.coarse_loop {
            config.coarse_loop = l;
        }
        if let Some(l) = &self.fine_loops {
            config.fine_loops = l.clone();
        }
        match self.pin {
            Some(true) if config.topology.fast_core_ids.is_none() => {
                config.topology = config.topology.with_sequential_pinning();
            }
            Some(false) => {
                config.topology.fast_core_ids = None;
                config.topology.slow_core_ids = None;
            }
            _ => {}
        }
        config
    }
}

/// Default configuration with `AGEMM_*` overrides applied.
pub fn env_overrides() -> Result<ParallelConfig> {
    Ok(EnvOverrides::from_env()?.apply(ParallelConfig::default()))
}
