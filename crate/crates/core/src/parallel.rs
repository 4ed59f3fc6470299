//! Parallel driver with asymmetric coarse split and even fine split.
//!
//! Loop 2 always runs sequentially. With the coarse split on Loop 3 all
//! workers pack the shared `B_c` together and meet at a global barrier;
//! each cluster then walks its own row range, packing a private `A_c`
//! cooperatively behind a cluster barrier. With the split on Loop 1 each
//! cluster owns a column range and keeps its own `B_c` and `A_c`, so only
//! cluster barriers are needed. Macro-kernel tiles are disjoint per
//! thread, which makes the C updates lock-free.
//!
//! Partitioning never changes the per-element operation sequence, so the
//! output is bit-identical to [`gemm_blocked`](crate::blocked::gemm_blocked).

use std::ops::Range;
use std::sync::Barrier;

use crate::blocked::{partial_buffer, BlockingParams, GemmStats};
use crate::config::{validate_config, ConfigWarning, CoreClass, FineChunk, FineLoops, ParallelConfig};
use crate::error::{Error, LoopId, Result};
use crate::kernel::{macro_kernel_raw, BlockOut, MicroKernel, PanelPhase};
use crate::matrix::{scale, GemmProblem, Matrix};
use crate::pack::{pack_a_panels, pack_b_panels, packed_a_len, packed_b_len};
use crate::partition::{equal_share, fine_share, plan_coarse, PartitionPlan};
use crate::pool::{AsymPool, WorkerInfo};

#[derive(Clone, Copy)]
struct SyncPtr(*mut f64);

// SAFETY: the driver hands out disjoint regions per thread and separates
// writes from reads of shared buffers with barriers.
unsafe impl Send for SyncPtr {}
unsafe impl Sync for SyncPtr {}

impl SyncPtr {
    fn null() -> Self {
        SyncPtr(std::ptr::null_mut())
    }

    fn of(v: &mut [f64]) -> Self {
        if v.is_empty() {
            SyncPtr::null()
        } else {
            SyncPtr(v.as_mut_ptr())
        }
    }

    /// # Safety
    /// `start..start+len` must be inside the allocation and not accessed by
    /// anyone else while the slice lives.
    unsafe fn slice_mut<'a>(self, start: usize, len: usize) -> &'a mut [f64] {
        if len == 0 {
            return &mut [];
        }
        std::slice::from_raw_parts_mut(self.0.add(start), len)
    }

    /// # Safety
    /// No thread may write `0..len` while the slice lives.
    unsafe fn slice<'a>(self, len: usize) -> &'a [f64] {
        if len == 0 {
            return &[];
        }
        std::slice::from_raw_parts(self.0, len)
    }
}

/// Statistics of one parallel call.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelStats {
    pub plan: PartitionPlan,
    pub warnings: Vec<ConfigWarning>,
    pub buffers: GemmStats,
}

/// A configured pool: the "library initialization" step.
///
/// Creating it spawns and pins the workers; every [`gemm`](Self::gemm)
/// call reuses them.
#[derive(Debug)]
pub struct AsymGemm {
    pool: AsymPool,
    config: ParallelConfig,
}

struct Shared<'a> {
    a: &'a Matrix,
    b: &'a Matrix,
    c: SyncPtr,
    ldc: usize,
    partial: SyncPtr,
    problem: GemmProblem,
    params: BlockingParams,
    coarse: [Range<usize>; 2],
    threads: [usize; 2],
    total_threads: usize,
    fine: FineLoops,
    chunk: FineChunk,
    bc: [SyncPtr; 2],
    ac: [SyncPtr; 2],
    global: Barrier,
    cluster: [Barrier; 2],
}

impl AsymGemm {
    pub fn new(config: ParallelConfig) -> Result<Self> {
        validate_config(&config, None, &BlockingParams::default())?;
        let pool = AsymPool::new(config.topology.clone())?;
        Ok(AsymGemm { pool, config })
    }

    pub fn config(&self) -> &ParallelConfig {
        &self.config
    }

    pub fn pool(&self) -> &AsymPool {
        &self.pool
    }

    /// Same as [`gemm_with_stats`](Self::gemm_with_stats) with a different
    /// ratio, loop choice or chunking on the same workers. The topology
    /// must match the pool.
    pub fn gemm_with_config(
        &self,
        problem: &GemmProblem,
        a: &Matrix,
        b: &Matrix,
        c: &mut Matrix,
        params: &BlockingParams,
        config: &ParallelConfig,
    ) -> Result<ParallelStats> {
        if config.topology.fast_threads != self.pool.topology().fast_threads
            || config.topology.slow_threads != self.pool.topology().slow_threads
        {
            return Err(Error::Config(format!(
                "config wants {}+{} threads but the pool has {}+{}",
                config.topology.fast_threads,
                config.topology.slow_threads,
                self.pool.topology().fast_threads,
                self.pool.topology().slow_threads
            )));
        }
        run(&self.pool, problem, a, b, c, params, config)
    }

    pub fn gemm_with_stats(
        &self,
        problem: &GemmProblem,
        a: &Matrix,
        b: &Matrix,
        c: &mut Matrix,
        params: &BlockingParams,
    ) -> Result<ParallelStats> {
        run(&self.pool, problem, a, b, c, params, &self.config)
    }

    pub fn gemm(
        &self,
        problem: &GemmProblem,
        a: &Matrix,
        b: &Matrix,
        c: &mut Matrix,
        params: &BlockingParams,
    ) -> Result<()> {
        self.gemm_with_stats(problem, a, b, c, params).map(|_| ())
    }
}

/// One-shot parallel GEMM: builds a pool for `config`, runs, tears it down.
///
/// Prefer [`AsymGemm`] when calling repeatedly.
pub fn gemm_parallel(
    problem: &GemmProblem,
    a: &Matrix,
    b: &Matrix,
    c: &mut Matrix,
    params: &BlockingParams,
    config: &ParallelConfig,
) -> Result<()> {
    AsymGemm::new(config.clone())?.gemm(problem, a, b, c, params)
}

fn run(
    pool: &AsymPool,
    problem: &GemmProblem,
    a: &Matrix,
    b: &Matrix,
    c: &mut Matrix,
    params: &BlockingParams,
    config: &ParallelConfig,
) -> Result<ParallelStats> {
    problem.check_operands(a, b, c)?;
    let warnings = validate_config(config, Some(problem), params)?;
    let fine = config.fine_mode()?;
    let plan = plan_coarse(problem, params, config)?;
    let mut buffers = GemmStats::default();
    if problem.alpha == 0.0 {
        scale(c, problem.beta);
        return Ok(ParallelStats {
            plan,
            warnings,
            buffers,
        });
    }

    let BlockingParams { nc, kc, mc, nr, mr } = *params;
    let (m, n, k) = (problem.m, problem.n, problem.k);
    let topo = &config.topology;
    let threads = [topo.fast_threads, topo.slow_threads];
    let coarse = [plan.ranges[0].clone(), plan.ranges[1].clone()];
    let active = |ci: usize| threads[ci] > 0 && !coarse[ci].is_empty();

    // B_c is shared under a row split and per cluster under a column split.
    let mut bc_store: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut ac_store: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for ci in 0..2 {
        if !active(ci) {
            continue;
        }
        let (rows, cols) = match config.coarse_loop {
            LoopId::Ic => (coarse[ci].len(), n),
            _ => (m, coarse[ci].len()),
        };
        ac_store[ci] = vec![0.0; packed_a_len(mc.min(rows), kc.min(k), mr)];
        buffers.a_buffers += 1;
        if config.coarse_loop == LoopId::Jc {
            bc_store[ci] = vec![0.0; packed_b_len(kc.min(k), nc.min(cols), nr)];
            buffers.b_buffers += 1;
        }
    }
    if config.coarse_loop == LoopId::Ic {
        bc_store[0] = vec![0.0; packed_b_len(kc.min(k), nc.min(n), nr)];
        buffers.b_buffers += 1;
    }
    let mut partial = partial_buffer(problem, params);
    buffers.partial_buffers = usize::from(!partial.is_empty());

    let shared = Shared {
        a,
        b,
        ldc: c.ld(),
        c: SyncPtr(c.as_mut_slice().as_mut_ptr()),
        partial: SyncPtr::of(&mut partial),
        problem: *problem,
        params: *params,
        coarse: coarse.clone(),
        threads,
        total_threads: topo.total_threads(),
        fine,
        chunk: config.fine_chunk,
        bc: [SyncPtr::of(&mut bc_store[0]), SyncPtr::of(&mut bc_store[1])],
        ac: [SyncPtr::of(&mut ac_store[0]), SyncPtr::of(&mut ac_store[1])],
        global: Barrier::new(topo.total_threads()),
        cluster: [
            Barrier::new(threads[0].max(1)),
            Barrier::new(threads[1].max(1)),
        ],
    };

    let coarse_loop = config.coarse_loop;
    pool.broadcast(&|w: WorkerInfo| match coarse_loop {
        LoopId::Ic => worker_rows(&shared, w),
        _ => worker_cols(&shared, w),
    });

    // pack and macro-kernel counts follow from the loop structure
    let k_panels = k.div_ceil(kc);
    for ci in 0..2 {
        if !active(ci) {
            continue;
        }
        let r = &shared.coarse[ci];
        match coarse_loop {
            LoopId::Ic => {
                buffers.a_packs += n.div_ceil(nc) * k_panels * r.len().div_ceil(mc);
            }
            _ => {
                buffers.b_packs += r.len().div_ceil(nc) * k_panels;
                buffers.a_packs += r.len().div_ceil(nc) * k_panels * m.div_ceil(mc);
            }
        }
    }
    if coarse_loop == LoopId::Ic {
        buffers.b_packs = n.div_ceil(nc) * k_panels;
    }
    buffers.macro_kernels = buffers.a_packs;

    Ok(ParallelStats {
        plan,
        warnings,
        buffers,
    })
}

fn cluster_wait(s: &Shared<'_>, ci: usize) {
    if s.threads[ci] > 1 {
        s.cluster[ci].wait();
    }
}

/// Packs this thread's share of `A(ic.., pc..)` into the cluster's `A_c`,
/// waits for the rest of the cluster, then runs its macro-kernel tiles.
#[allow(clippy::too_many_arguments)]
fn pack_a_and_compute(
    s: &Shared<'_>,
    w: WorkerInfo,
    kernel: &mut MicroKernel,
    bc: &[f64],
    (ic, mc_eff): (usize, usize),
    (jc, nc_eff): (usize, usize),
    (pc, kc_eff): (usize, usize),
    phase: PanelPhase,
) {
    let ci = w.class.index();
    let BlockingParams { nr, mr, .. } = s.params;
    let a_panels = mc_eff.div_ceil(mr);
    let a_len = packed_a_len(mc_eff, kc_eff, mr);
    let mine = equal_share(a_panels, s.threads[ci], w.class_index);
    let panel = mr * kc_eff;
    // SAFETY: panel ranges are disjoint across the cluster's threads.
    let dst = unsafe { s.ac[ci].slice_mut(mine.start * panel, mine.len() * panel) };
    pack_a_panels(s.a, ic, pc, mc_eff, kc_eff, mr, mine, dst);
    cluster_wait(s, ci);

    // SAFETY: A_c is read-only until the barrier after the macro-kernel.
    let ac = unsafe { s.ac[ci].slice(a_len) };
    let tiles = fine_share(
        nc_eff.div_ceil(nr),
        a_panels,
        s.fine,
        s.chunk,
        s.threads[ci],
        w.class_index,
    );
    let m = s.problem.m;
    let out = BlockOut {
        // SAFETY: (ic, jc) lies inside C and inside the m × n partial buffer.
        c: unsafe { s.c.0.add(ic + jc * s.ldc) },
        ldc: s.ldc,
        partial: if s.partial.0.is_null() {
            std::ptr::null_mut()
        } else {
            unsafe { s.partial.0.add(ic + jc * m) }
        },
        ld_partial: m,
        rows: mc_eff,
        cols: nc_eff,
        alpha: s.problem.alpha,
        beta: s.problem.beta,
    };
    // SAFETY: fine shares of one cluster are disjoint, and clusters work on
    // disjoint rows (Loop 3 split) or columns (Loop 1 split).
    unsafe { macro_kernel_raw(kernel, ac, bc, kc_eff, &out, phase, &tiles) };
    cluster_wait(s, ci);
}

/// Coarse split on Loop 3: shared `B_c`, per-cluster row ranges.
fn worker_rows(s: &Shared<'_>, w: WorkerInfo) {
    let ci = w.class.index();
    let GemmProblem { n, k, .. } = s.problem;
    let BlockingParams { nc, kc, mc, nr, mr } = s.params;
    let rows = s.coarse[ci].clone();
    let k_panels = k.div_ceil(kc);
    let mut kernel = MicroKernel::new(mr, nr);

    for jc in (0..n).step_by(nc) {
        let nc_eff = nc.min(n - jc);
        let b_panels = nc_eff.div_ceil(nr);
        for (pi, pc) in (0..k).step_by(kc).enumerate() {
            let kc_eff = kc.min(k - pc);
            let phase = PanelPhase::of(pi, k_panels);
            let b_len = packed_b_len(kc_eff, nc_eff, nr);
            let mine = equal_share(b_panels, s.total_threads, w.index);
            let panel = nr * kc_eff;
            // SAFETY: every worker fills a disjoint panel range of B_c.
            let dst = unsafe { s.bc[0].slice_mut(mine.start * panel, mine.len() * panel) };
            pack_b_panels(s.b, pc, jc, kc_eff, nc_eff, nr, mine, dst);
            s.global.wait();

            // SAFETY: B_c is read-only until the next global barrier.
            let bc = unsafe { s.bc[0].slice(b_len) };
            for ic in rows.clone().step_by(mc) {
                let mc_eff = mc.min(rows.end - ic);
                pack_a_and_compute(
                    s,
                    w,
                    &mut kernel,
                    bc,
                    (ic, mc_eff),
                    (jc, nc_eff),
                    (pc, kc_eff),
                    phase,
                );
            }
            s.global.wait();
        }
    }
}

/// Coarse split on Loop 1: each cluster owns a column range and its buffers.
fn worker_cols(s: &Shared<'_>, w: WorkerInfo) {
    let ci = w.class.index();
    let GemmProblem { m, k, .. } = s.problem;
    let BlockingParams { nc, kc, mc, nr, mr } = s.params;
    let cols = s.coarse[ci].clone();
    let k_panels = k.div_ceil(kc);
    let mut kernel = MicroKernel::new(mr, nr);

    for jc in cols.clone().step_by(nc) {
        let nc_eff = nc.min(cols.end - jc);
        let b_panels = nc_eff.div_ceil(nr);
        for (pi, pc) in (0..k).step_by(kc).enumerate() {
            let kc_eff = kc.min(k - pc);
            let phase = PanelPhase::of(pi, k_panels);
            let b_len = packed_b_len(kc_eff, nc_eff, nr);
            let mine = equal_share(b_panels, s.threads[ci], w.class_index);
            let panel = nr * kc_eff;
            // SAFETY: disjoint panel ranges within the cluster's own B_c.
            let dst = unsafe { s.bc[ci].slice_mut(mine.start * panel, mine.len() * panel) };
            pack_b_panels(s.b, pc, jc, kc_eff, nc_eff, nr, mine, dst);
            cluster_wait(s, ci);

            // SAFETY: the barrier closing each macro-kernel keeps B_c
            // read-only until the next pack.
            let bc = unsafe { s.bc[ci].slice(b_len) };
            for ic in (0..m).step_by(mc) {
                let mc_eff = mc.min(m - ic);
                pack_a_and_compute(
                    s,
                    w,
                    &mut kernel,
                    bc,
                    (ic, mc_eff),
                    (jc, nc_eff),
                    (pc, kc_eff),
                    phase,
                );
            }
        }
    }
}

/// Cores of `class` that a plan keeps busy; handy for power accounting.
pub fn active_threads(plan: &PartitionPlan, config: &ParallelConfig, class: CoreClass) -> usize {
    if plan.range(class).is_empty() {
        0
    } else {
        config.topology.threads(class)
    }
}
