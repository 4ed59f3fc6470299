//! Timing, power accounting and the GFLOPS / GFLOPS-per-watt metrics.
//!
//! Power comes either from a linear [`PowerModel`] or from a [`PowerTrace`]
//! of sensor readings, recorded live by a [`Sampler`] or read from a file.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::measurements::{ReferenceRow, REFERENCE_ROWS};

/// Sensor period of the reference board, in milliseconds.
pub const DEFAULT_PERIOD_MS: f64 = 200.0;

/// Power domains with their own sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    SlowCluster,
    FastCluster,
    Dram,
    Gpu,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::SlowCluster,
        Component::FastCluster,
        Component::Dram,
        Component::Gpu,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::SlowCluster => "A7",
            Component::FastCluster => "A15",
            Component::Dram => "DRAM",
            Component::Gpu => "GPU",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A7" | "SLOW" => Ok(Component::SlowCluster),
            "A15" | "FAST" => Ok(Component::FastCluster),
            "DRAM" => Ok(Component::Dram),
            "GPU" => Ok(Component::Gpu),
            _ => Err(Error::Domain(format!("unknown power component {s:?}"))),
        }
    }
}

/// Watts per component.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ComponentWatts(pub [f64; 4]);

impl ComponentWatts {
    pub fn get(&self, c: Component) -> f64 {
        self.0[c.index()]
    }

    pub fn set(&mut self, c: Component, w: f64) {
        self.0[c.index()] = w;
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn of_row(r: &ReferenceRow) -> Self {
        ComponentWatts([r.slow_watts, r.fast_watts, r.dram_watts, r.gpu_watts])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ComponentPower {
    pub idle: f64,
    pub per_core: f64,
}

/// Linear power model: `idle + active_cores · per_core` for each component.
///
/// The cluster terms count that cluster's active cores, DRAM counts all
/// active cores and the GPU term is idle-only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerModel {
    pub components: [ComponentPower; 4],
}

impl Default for PowerModel {
    /// The calibration from the reference measurements; see [`PowerModel::calibrated`].
    fn default() -> Self {
        PowerModel::calibrated(&REFERENCE_ROWS)
    }
}

fn least_squares(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    if points.is_empty() {
        return (0.0, 0.0);
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

impl PowerModel {
    pub fn zero() -> Self {
        PowerModel {
            components: [ComponentPower::default(); 4],
        }
    }

    /// Derives a model from single-cluster rows.
    ///
    /// A cluster's idle power is its smallest reading among rows where it
    /// runs nothing; its per-core rate is the slope from idle to the row
    /// with the most cores of that class. DRAM is a least-squares line in
    /// the active core count; GPU is the mean reading.
    pub fn calibrated(rows: &[ReferenceRow]) -> Self {
        let single: Vec<&ReferenceRow> = rows
            .iter()
            .filter(|r| r.is_fast_only() != r.is_slow_only())
            .collect();

        let cluster = |threads: fn(&ReferenceRow) -> usize, watts: fn(&ReferenceRow) -> f64| {
            let idle = single
                .iter()
                .filter(|r| threads(r) == 0)
                .map(|r| watts(r))
                .fold(f64::INFINITY, f64::min);
            let idle = if idle.is_finite() { idle } else { 0.0 };
            let per_core = single
                .iter()
                .filter(|r| threads(r) > 0)
                .max_by_key(|r| threads(r))
                .map_or(0.0, |r| ((watts(r) - idle) / threads(r) as f64).max(0.0));
            ComponentPower { idle, per_core }
        };
        let slow = cluster(|r| r.slow_threads, |r| r.slow_watts);
        let fast = cluster(|r| r.fast_threads, |r| r.fast_watts);

        let dram_pts: Vec<(f64, f64)> = single
            .iter()
            .map(|r| ((r.fast_threads + r.slow_threads) as f64, r.dram_watts))
            .collect();
        let (d0, d1) = least_squares(&dram_pts);
        let gpu = if single.is_empty() {
            0.0
        } else {
            single.iter().map(|r| r.gpu_watts).sum::<f64>() / single.len() as f64
        };

        PowerModel {
            components: [
                slow,
                fast,
                ComponentPower {
                    idle: d0.max(0.0),
                    per_core: d1.max(0.0),
                },
                ComponentPower {
                    idle: gpu,
                    per_core: 0.0,
                },
            ],
        }
    }

    pub fn get(&self, c: Component) -> ComponentPower {
        self.components[c.index()]
    }

    pub fn validate(&self) -> Result<()> {
        for c in Component::ALL {
            let p = self.get(c);
            for (what, v) in [("idle", p.idle), ("per_core", p.per_core)] {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Domain(format!("{c}.{what} = {v} must be finite and >= 0")));
                }
            }
        }
        Ok(())
    }

    /// Parses `component.idle=<w>` / `component.per_core=<w>` lines over
    /// the default model. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut model = PowerModel::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Parse { line: i + 1, reason };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            let (comp, field) = key
                .trim()
                .split_once('.')
                .ok_or_else(|| err(format!("expected component.field, got {key:?}")))?;
            let comp: Component = comp.parse().map_err(|e: Error| err(e.to_string()))?;
            let w: f64 = value
                .trim()
                .parse()
                .map_err(|e| err(format!("bad watts {value:?}: {e}")))?;
            let slot = &mut model.components[comp.index()];
            match field.trim() {
                "idle" => slot.idle = w,
                "per_core" => slot.per_core = w,
                other => return Err(err(format!("unknown field {other:?}"))),
            }
        }
        model.validate()?;
        Ok(model)
    }

    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        for c in Component::ALL {
            let p = self.get(c);
            s.push_str(&format!("{c}.idle={}\n{c}.per_core={}\n", p.idle, p.per_core));
        }
        s
    }
}

/// Predicted watts with `active_fast` and `active_slow` busy cores.
pub fn model_power(model: &PowerModel, active_fast: usize, active_slow: usize) -> ComponentWatts {
    let mut w = ComponentWatts::default();
    for c in Component::ALL {
        let p = model.get(c);
        let cores = match c {
            Component::SlowCluster => active_slow,
            Component::FastCluster => active_fast,
            Component::Dram => active_fast + active_slow,
            Component::Gpu => 0,
        };
        w.set(c, p.idle + cores as f64 * p.per_core);
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSample {
    pub ts_ms: f64,
    pub component: Component,
    pub watts: f64,
}

/// Sensor readings, each holding until the next reading of its component.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    period_ms: f64,
    samples: Vec<PowerSample>,
}

impl Default for PowerTrace {
    fn default() -> Self {
        PowerTrace::new(DEFAULT_PERIOD_MS)
    }
}

impl PowerTrace {
    pub fn new(period_ms: f64) -> Self {
        PowerTrace {
            period_ms,
            samples: Vec::new(),
        }
    }

    pub fn period_ms(&self) -> f64 {
        self.period_ms
    }

    pub fn samples(&self) -> &[PowerSample] {
        &self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn last_ts(&self, c: Component) -> Option<f64> {
        self.samples.iter().rev().find(|s| s.component == c).map(|s| s.ts_ms)
    }

    /// Appends a reading; timestamps must not go backwards per component.
    pub fn push(&mut self, ts_ms: f64, component: Component, watts: f64) -> Result<()> {
        if !ts_ms.is_finite() || !watts.is_finite() {
            return Err(Error::Domain(format!("non-finite sample {ts_ms} {component} {watts}")));
        }
        if let Some(prev) = self.last_ts(component) {
            if ts_ms < prev {
                return Err(Error::Domain(format!(
                    "{component} timestamp {ts_ms} ms goes back from {prev} ms"
                )));
            }
        }
        self.samples.push(PowerSample {
            ts_ms,
            component,
            watts,
        });
        Ok(())
    }

    /// Components with at least one sample.
    pub fn components(&self) -> Vec<Component> {
        Component::ALL
            .into_iter()
            .filter(|c| self.samples.iter().any(|s| s.component == *c))
            .collect()
    }

    /// First and last timestamp over all components.
    pub fn span(&self) -> Option<(f64, f64)> {
        let lo = self.samples.iter().map(|s| s.ts_ms).reduce(f64::min)?;
        let hi = self.samples.iter().map(|s| s.ts_ms).reduce(f64::max)?;
        Some((lo, hi))
    }

    /// Reads `timestamp_ms component watts` lines.
    pub fn parse(text: &str, period_ms: f64) -> Result<Self> {
        let mut trace = PowerTrace::new(period_ms);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Parse { line: i + 1, reason };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [ts, comp, watts] = fields[..] else {
                return Err(err(format!("expected 3 fields, got {}", fields.len())));
            };
            let ts: f64 = ts.parse().map_err(|e| err(format!("bad timestamp {ts:?}: {e}")))?;
            let comp: Component = comp.parse().map_err(|e: Error| err(e.to_string()))?;
            let watts: f64 = watts.parse().map_err(|e| err(format!("bad watts {watts:?}: {e}")))?;
            trace.push(ts, comp, watts).map_err(|e| err(e.to_string()))?;
        }
        Ok(trace)
    }

    pub fn read(path: &std::path::Path, period_ms: f64) -> Result<Self> {
        PowerTrace::parse(&std::fs::read_to_string(path)?, period_ms)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for p in &self.samples {
            s.push_str(&format!("{} {} {}\n", p.ts_ms, p.component, p.watts));
        }
        s
    }
}

/// Time-weighted mean watts of every traced component over `[t0, t1)`.
///
/// A reading holds until the next reading of the same component; the last
/// one holds to the end of the window. Time before a component's first
/// reading is not covered and is left out of that component's mean.
/// Components absent from the trace report 0 W.
pub fn trace_average(trace: &PowerTrace, t0: f64, t1: f64) -> Result<ComponentWatts> {
    if !(t1 > t0) {
        return Err(Error::EmptyWindow(format!("[{t0}, {t1}) ms")));
    }
    let present = trace.components();
    if present.is_empty() {
        return Err(Error::EmptyWindow("trace has no samples".into()));
    }
    let mut out = ComponentWatts::default();
    for c in present {
        let pts: Vec<&PowerSample> = trace.samples.iter().filter(|s| s.component == c).collect();
        // deviations from the first reading keep constant traces exact
        let base = pts[0].watts;
        let mut energy = 0.0;
        let mut covered = 0.0;
        for (i, s) in pts.iter().enumerate() {
            let end = pts.get(i + 1).map_or(f64::INFINITY, |n| n.ts_ms);
            let lo = s.ts_ms.max(t0);
            let hi = end.min(t1);
            if hi > lo {
                energy += (s.watts - base) * (hi - lo);
                covered += hi - lo;
            }
        }
        if covered <= 0.0 {
            return Err(Error::EmptyWindow(format!(
                "no {c} reading covers [{t0}, {t1}) ms"
            )));
        }
        out.set(c, base + energy / covered);
    }
    Ok(out)
}

/// `flops / elapsed_s / 1e9`.
pub fn gflops(flops: u64, elapsed_s: f64) -> Result<f64> {
    if !(elapsed_s > 0.0) || !elapsed_s.is_finite() {
        return Err(Error::Domain(format!("elapsed time {elapsed_s} s must be positive")));
    }
    Ok(flops as f64 / elapsed_s / 1e9)
}

/// GFLOPS per watt, i.e. billions of flops per joule.
pub fn efficiency(gflops: f64, total_watts: f64) -> Result<f64> {
    if !(total_watts > 0.0) || !total_watts.is_finite() {
        return Err(Error::Domain(format!("power {total_watts} W must be positive")));
    }
    Ok(gflops / total_watts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub elapsed_s: f64,
    pub flops: u64,
    pub gflops: f64,
    pub watts: ComponentWatts,
    pub total_watts: f64,
    /// 0 when no power was drawn.
    pub gflops_per_watt: f64,
}

pub fn assemble_metrics(elapsed_s: f64, flops: u64, watts: ComponentWatts) -> Result<RunMetrics> {
    let g = gflops(flops, elapsed_s)?;
    let total_watts = watts.total();
    let gflops_per_watt = if total_watts > 0.0 {
        efficiency(g, total_watts)?
    } else {
        0.0
    };
    Ok(RunMetrics {
        elapsed_s,
        flops,
        gflops: g,
        watts,
        total_watts,
        gflops_per_watt,
    })
}

/// Where [`measure`] gets its watts from.
#[derive(Debug, Clone)]
pub enum PowerSource {
    Model {
        model: PowerModel,
        active_fast: usize,
        active_slow: usize,
    },
    /// Already known per-component averages.
    Fixed(ComponentWatts),
    /// Averages over `window` (ms), or over the whole trace when `None`.
    Trace {
        trace: PowerTrace,
        window: Option<(f64, f64)>,
    },
}

impl PowerSource {
    pub fn watts(&self) -> Result<ComponentWatts> {
        match self {
            PowerSource::Model {
                model,
                active_fast,
                active_slow,
            } => {
                model.validate()?;
                Ok(model_power(model, *active_fast, *active_slow))
            }
            PowerSource::Fixed(w) => Ok(*w),
            PowerSource::Trace { trace, window } => {
                let (t0, t1) = match window {
                    Some(w) => *w,
                    None => trace
                        .span()
                        .ok_or_else(|| Error::EmptyWindow("trace has no samples".into()))?,
                };
                trace_average(trace, t0, t1)
            }
        }
    }
}

/// Wall-clocks `run` and combines it with power from `source`.
pub fn measure<F>(run: F, flops: u64, source: &PowerSource) -> Result<RunMetrics>
where
    F: FnOnce() -> Result<()>,
{
    let start = Instant::now();
    run()?;
    let elapsed = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    assemble_metrics(elapsed, flops, source.watts()?)
}

/// Anything that can report instantaneous per-component watts.
pub trait PowerSensor: Send {
    fn read(&mut self) -> Result<Vec<(Component, f64)>>;
}

/// Reports [`model_power`] for a fixed active-core count.
#[derive(Debug, Clone)]
pub struct ModelSensor {
    pub model: PowerModel,
    pub active_fast: usize,
    pub active_slow: usize,
}

impl PowerSensor for ModelSensor {
    fn read(&mut self) -> Result<Vec<(Component, f64)>> {
        let w = model_power(&self.model, self.active_fast, self.active_slow);
        Ok(Component::ALL.into_iter().map(|c| (c, w.get(c))).collect())
    }
}

/// hwmon-style sensor files holding one number each, multiplied by `scale`
/// (1e-6 for microwatt files).
#[derive(Debug, Clone)]
pub struct FileSensor {
    pub files: Vec<(Component, PathBuf)>,
    pub scale: f64,
}

impl PowerSensor for FileSensor {
    fn read(&mut self) -> Result<Vec<(Component, f64)>> {
        self.files
            .iter()
            .map(|(c, path)| {
                let text = std::fs::read_to_string(path)?;
                let v: f64 = text.trim().parse().map_err(|e| {
                    Error::Io(format!("{}: bad reading {:?}: {e}", path.display(), text.trim()))
                })?;
                Ok((*c, v * self.scale))
            })
            .collect()
    }
}

/// Background thread polling a sensor every period into a trace.
///
/// Timestamps are milliseconds since [`Sampler::start`]. The first reading
/// is taken immediately.
pub struct Sampler {
    trace: Arc<Mutex<PowerTrace>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<Result<()>>>,
}

impl Sampler {
    pub fn start(mut sensor: Box<dyn PowerSensor>, period: Duration) -> Self {
        let period_ms = period.as_secs_f64() * 1e3;
        let trace = Arc::new(Mutex::new(PowerTrace::new(period_ms)));
        let stop = Arc::new(AtomicBool::new(false));
        let (t, s) = (Arc::clone(&trace), Arc::clone(&stop));
        let handle = std::thread::spawn(move || -> Result<()> {
            let t0 = Instant::now();
            let mut next = t0;
            loop {
                let ts = t0.elapsed().as_secs_f64() * 1e3;
                let readings = sensor.read()?;
                {
                    let mut trace = t.lock().unwrap_or_else(|e| e.into_inner());
                    for (c, w) in readings {
                        trace.push(ts, c, w)?;
                    }
                }
                next += period;
                while !s.load(Ordering::Acquire) {
                    let now = Instant::now();
                    if now >= next {
                        break;
                    }
                    std::thread::park_timeout(next - now);
                }
                if s.load(Ordering::Acquire) {
                    return Ok(());
                }
            }
        });
        Sampler {
            trace,
            stop,
            handle: Some(handle),
        }
    }

    /// Completed samples so far.
    pub fn snapshot(&self) -> PowerTrace {
        self.trace.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Stops the thread and returns the trace, or the sensor's error.
    pub fn stop(mut self) -> Result<PowerTrace> {
        self.halt()?;
        Ok(self.snapshot())
    }

    fn halt(&mut self) -> Result<()> {
        self.stop.store(true, Ordering::Release);
        match self.handle.take() {
            Some(h) => {
                h.thread().unpark();
                h.join()
                    .map_err(|_| Error::Io("power sampler thread panicked".into()))?
            }
            None => Ok(()),
        }
    }
}

impl Drop for Sampler {
    fn drop(&mut self) {
        let _ = self.halt();
    }
}

/// [`measure`] with a live sampler running for the duration of `run`.
pub fn measure_sampled<F>(run: F, flops: u64, sensor: Box<dyn PowerSensor>, period: Duration) -> Result<RunMetrics>
where
    F: FnOnce() -> Result<()>,
{
    let sampler = Sampler::start(sensor, period);
    let start = Instant::now();
    let outcome = run();
    let elapsed = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    let trace = sampler.stop()?;
    outcome?;
    let watts = trace_average(&trace, 0.0, elapsed * 1e3)?;
    assemble_metrics(elapsed, flops, watts)
}
