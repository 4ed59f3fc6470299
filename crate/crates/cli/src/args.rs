use std::path::PathBuf;

use agemm::{LoopId, PerfRatio};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "agemm", version, about = "Asymmetric-aware blocked GEMM: benchmarks, predictions and tuning")]
pub struct Cli {
    #[command(flatten)]
    pub sched: SchedArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time GEMM variants over a size sweep and print CSV rows.
    Bench(BenchArgs),
    /// Predict throughput and power of symmetric and asymmetric splits.
    Simulate(SimulateArgs),
    /// Search block sizes and calibrate the fast:slow ratio.
    Tune(TuneArgs),
    /// Print an aligned table from a bench CSV, or the reference measurements.
    Report(ReportArgs),
}

/// Pool settings shared by every sub-command.
#[derive(Debug, Clone, Args)]
pub struct SchedArgs {
    /// Fast-cluster threads for the symmetric and asymmetric variants.
    #[arg(long, global = true, env = "AGEMM_THREADS_FAST", default_value_t = 4)]
    pub threads_fast: usize,

    /// Slow-cluster threads for the symmetric and asymmetric variants.
    #[arg(long, global = true, env = "AGEMM_THREADS_SLOW", default_value_t = 4)]
    pub threads_slow: usize,

    /// Fast:slow work ratio of the asymmetric variant [default: 6:1].
    #[arg(long, global = true, env = "AGEMM_RATIO", value_parser = parse_ratio)]
    pub ratio: Option<PerfRatio>,

    /// Loop split between clusters: jc or ic.
    #[arg(long, global = true, env = "AGEMM_COARSE_LOOP", default_value = "ic", value_parser = parse_loop)]
    pub coarse_loop: LoopId,

    /// Loops split inside a cluster: jr, ir or jr,ir.
    #[arg(long, global = true, env = "AGEMM_FINE_LOOPS", default_value = "jr", value_parser = parse_loops)]
    pub fine_loops: Loops,

    /// Pin worker threads to cores 0, 1, ... (fast cluster first).
    #[arg(long, global = true, env = "AGEMM_PIN")]
    pub pin: bool,

    /// Block sizes and ratio from a file written by `tune`.
    #[arg(long, global = true, env = "AGEMM_CALIBRATION")]
    pub calibration: Option<PathBuf>,

    /// Power model file of `component.idle=` / `component.per_core=` lines.
    #[arg(long, global = true, env = "AGEMM_POWER_MODEL")]
    pub power_model: Option<PathBuf>,

    /// Output file instead of standard output.
    #[arg(long, global = true, env = "AGEMM_OUT")]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, env = "AGEMM_SEED", default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, ValueEnum)]
pub enum Variant {
    /// Fast cluster only, for each count in --threads.
    #[value(alias = "a15only", alias = "fast-only")]
    Fast,
    /// Slow cluster only, for each count in --threads.
    #[value(alias = "a7only", alias = "slow-only")]
    Slow,
    /// Both clusters with equal shares (1:1).
    Symmetric,
    /// Both clusters split by --ratio.
    Asymmetric,
    /// Sequential blocked GEMM.
    Blocked,
    /// Unblocked triple loop.
    Reference,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Fast => "fast",
            Variant::Slow => "slow",
            Variant::Symmetric => "symmetric",
            Variant::Asymmetric => "asymmetric",
            Variant::Blocked => "blocked",
            Variant::Reference => "reference",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Square sizes as start:end:step, a comma list, or MxNxK items.
    #[arg(long, env = "AGEMM_SIZES", default_value = "512:2048:512", value_parser = parse_sizes)]
    pub sizes: Sizes,

    #[arg(long, env = "AGEMM_VARIANTS", value_delimiter = ',', default_value = "fast,slow,symmetric,asymmetric")]
    pub variants: Vec<Variant>,

    /// Thread counts for the single-cluster variants, as a:b or a list.
    #[arg(long, env = "AGEMM_THREADS", default_value = "1:4", value_parser = parse_counts)]
    pub threads: Counts,

    /// Check every result against the unblocked reference.
    #[arg(long, env = "AGEMM_VERIFY")]
    pub verify: bool,

    /// Timed repetitions per run; the median is reported.
    #[arg(long, env = "AGEMM_REPS", default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub reps: u32,

    /// Replay power from a trace file (`timestamp_ms component watts`).
    #[arg(long, env = "AGEMM_TRACE")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Cluster throughputs as FAST,SLOW GFLOPS, or `reference`.
    #[arg(long, env = "AGEMM_PROFILE", value_parser = parse_profile)]
    pub profile: Option<(f64, f64)>,

    /// Also predict the quantized split for these sizes.
    #[arg(long, env = "AGEMM_SIZES", value_parser = parse_sizes)]
    pub sizes: Option<Sizes>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Timer {
    /// Wall-clock timing of real runs.
    Wall,
    /// Deterministic synthetic costs; for testing the pipeline.
    Model,
}

#[derive(Debug, Clone, Args)]
pub struct TuneArgs {
    /// Grid as mc=LIST,kc=LIST where LIST is a:b:step or comma values
    /// separated by `/`, e.g. mc=32:512:16,kc=64:1024:16 or mc=176,kc=368.
    #[arg(long, env = "AGEMM_GRID", value_parser = parse_grid)]
    pub grid: Option<Grid>,

    #[arg(long, env = "AGEMM_SIZES", default_value = "512", value_parser = parse_sizes)]
    pub sizes: Sizes,

    #[arg(long, env = "AGEMM_REPS", default_value_t = 3, value_parser = clap::value_parser!(u32).range(3..))]
    pub reps: u32,

    /// Keep --ratio instead of measuring each cluster.
    #[arg(long, env = "AGEMM_SKIP_RATIO")]
    pub skip_ratio: bool,

    #[arg(long, env = "AGEMM_TIMER", value_enum, default_value_t = Timer::Wall)]
    pub timer: Timer,

    /// Throughputs used by `--timer model` for ratio calibration.
    #[arg(long, env = "AGEMM_PROFILE", value_parser = parse_profile)]
    pub profile: Option<(f64, f64)>,

    /// Write the per-point CSV report here.
    #[arg(long, env = "AGEMM_REPORT")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Bench CSV to tabulate; without it the reference measurements are shown.
    #[arg(long, env = "AGEMM_INPUT")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Loops(pub Vec<LoopId>);

/// Problem shapes `(m, n, k)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sizes(pub Vec<(usize, usize, usize)>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counts(pub Vec<usize>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    pub mc: Vec<usize>,
    pub kc: Vec<usize>,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(0) => Err("values must be >= 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(format!("{s:?}: {e}")),
    }
}

/// `a:b:step`, `a:b` (step 1) or a single value.
fn range(s: &str) -> Result<Vec<usize>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let (lo, hi, step) = match parts[..] {
        [one] => return positive(one).map(|v| vec![v]),
        [a, b] => (positive(a)?, positive(b)?, 1),
        [a, b, c] => (positive(a)?, positive(b)?, positive(c)?),
        _ => return Err(format!("{s:?}: expected a, a:b or a:b:step")),
    };
    if hi < lo {
        return Err(format!("{s:?}: end is below start"));
    }
    Ok((lo..=hi).step_by(step).collect())
}

fn list(s: &str, sep: char) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for item in s.split(sep).filter(|t| !t.trim().is_empty()) {
        out.extend(range(item.trim())?);
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

pub fn parse_sizes(s: &str) -> Result<Sizes, String> {
    let mut out = Vec::new();
    for item in s.split(',').filter(|t| !t.trim().is_empty()) {
        let item = item.trim();
        if item.contains('x') {
            let dims = item.split('x').map(positive).collect::<Result<Vec<_>, _>>()?;
            let [m, n, k] = dims[..] else {
                return Err(format!("{item:?}: expected MxNxK"));
            };
            out.push((m, n, k));
        } else {
            out.extend(range(item)?.into_iter().map(|n| (n, n, n)));
        }
    }
    if out.is_empty() {
        return Err("no sizes given".into());
    }
    Ok(Sizes(out))
}

pub fn parse_counts(s: &str) -> Result<Counts, String> {
    list(s, ',').map(Counts)
}

pub fn parse_ratio(s: &str) -> Result<PerfRatio, String> {
    s.parse()
}

pub fn parse_loop(s: &str) -> Result<LoopId, String> {
    LoopId::parse(s).ok_or_else(|| format!("{s:?}: expected jc, pc, ic, jr or ir"))
}

pub fn parse_loops(s: &str) -> Result<Loops, String> {
    s.split(',').map(parse_loop).collect::<Result<Vec<_>, _>>().map(Loops)
}

pub fn parse_profile(s: &str) -> Result<(f64, f64), String> {
    if s.trim().eq_ignore_ascii_case("reference") {
        return Ok(agemm::measurements::reference_peaks());
    }
    let (f, sl) = s.split_once(',').ok_or("expected FAST,SLOW")?;
    let num = |t: &str| -> Result<f64, String> {
        let v: f64 = t.trim().parse().map_err(|e| format!("{t:?}: {e}"))?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(format!("{t:?}: throughput must be positive"))
        }
    };
    Ok((num(f)?, num(sl)?))
}

pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let mut mc = None;
    let mut kc = None;
    for part in s.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("{part:?}: expected mc=... or kc=..."))?;
        let values = list(value, '/')?;
        match key.trim() {
            "mc" => mc = Some(values),
            "kc" => kc = Some(values),
            other => return Err(format!("unknown grid key {other:?}")),
        }
    }
    let default = agemm::TuneSpace::default();
    Ok(Grid {
        mc: mc.unwrap_or(default.mc),
        kc: kc.unwrap_or(default.kc),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(parse_sizes("64").unwrap(), Sizes(vec![(64, 64, 64)]));
        let s = parse_sizes("512:2048:512").unwrap();
        assert_eq!(s.0.iter().map(|t| t.0).collect::<Vec<_>>(), vec![512, 1024, 1536, 2048]);
        assert_eq!(parse_sizes("8,10x20x30").unwrap().0, vec![(8, 8, 8), (10, 20, 30)]);
        assert!(parse_sizes("0").is_err());
        assert!(parse_sizes("0:64:8").is_err());
        assert!(parse_sizes("64:8").is_err());
        assert!(parse_sizes("1x2").is_err());
        assert!(parse_sizes("").is_err());
    }

    #[test]
    fn counts_and_loops() {
        assert_eq!(parse_counts("1:4").unwrap().0, vec![1, 2, 3, 4]);
        assert_eq!(parse_counts("2,8").unwrap().0, vec![2, 8]);
        assert_eq!(parse_loops("jr,ir").unwrap().0, vec![LoopId::Jr, LoopId::Ir]);
        assert!(parse_loop("kk").is_err());
    }

    #[test]
    fn profile_and_grid() {
        assert_eq!(parse_profile("10.374,2.086").unwrap(), (10.374, 2.086));
        assert_eq!(parse_profile("reference").unwrap(), (10.374, 2.086));
        assert!(parse_profile("1,0").is_err());
        assert!(parse_profile("3").is_err());
        let g = parse_grid("mc=176,kc=368").unwrap();
        assert_eq!((g.mc, g.kc), (vec![176], vec![368]));
        let g = parse_grid("mc=32:64:16/100").unwrap();
        assert_eq!(g.mc, vec![32, 48, 64, 100]);
        assert_eq!(g.kc.len(), 61);
        assert!(parse_grid("nc=4").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
