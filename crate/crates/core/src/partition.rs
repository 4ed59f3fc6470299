//! Static weighted partitioning of loop iteration spaces.
//!
//! Coarse plans split Loop 1 (columns, `nc` steps) or Loop 3 (rows, `mc`
//! steps) between the fast and slow clusters in proportion to their
//! performance ratio. Fine plans split the micro-tile grid of one
//! macro-kernel evenly among the threads of a cluster.

use std::ops::Range;

use crate::blocked::BlockingParams;
use crate::config::{CoreClass, FineChunk, FineLoops, ParallelConfig};
use crate::error::{Error, LoopId, Result};
use crate::kernel::TileRange;
use crate::matrix::GemmProblem;

/// Largest-remainder apportionment of `total` units by integer `weights`.
///
/// Every entry gets `floor(total·w/Σw)`; the leftover units go one each to
/// the largest fractional remainders, ties broken toward the larger weight
/// and then the lower index. Zero weights are allowed and receive nothing.
/// Remainders are compared exactly in integer arithmetic.
///
/// # Panics
/// If `weights` is empty or sums to zero.
pub fn partition_weighted(total: usize, weights: &[u64]) -> Vec<usize> {
    assert!(!weights.is_empty(), "at least one weight is required");
    let sum: u128 = weights.iter().map(|&w| u128::from(w)).sum();
    assert!(sum > 0, "weights must not all be zero");
    let total_wide = total as u128;

    let mut counts = Vec::with_capacity(weights.len());
    let mut remainders = Vec::with_capacity(weights.len());
    for &w in weights {
        let scaled = total_wide * u128::from(w);
        counts.push((scaled / sum) as usize);
        remainders.push(scaled % sum);
    }
    let assigned: usize = counts.iter().sum();
    let leftover = total - assigned;
    if leftover > 0 {
        let mut order: Vec<usize> = (0..weights.len()).collect();
        order.sort_by(|&x, &y| {
            remainders[y]
                .cmp(&remainders[x])
                .then(weights[y].cmp(&weights[x]))
                .then(x.cmp(&y))
        });
        for &i in &order[..leftover] {
            counts[i] += 1;
        }
    }
    counts
}

/// Share of thread `idx` when `total` units are split evenly over `parts`:
/// the first `total % parts` threads get one extra unit.
///
/// Agrees with `partition_weighted(total, &[1; parts])` laid out contiguously.
pub fn equal_share(total: usize, parts: usize, idx: usize) -> Range<usize> {
    debug_assert!(parts > 0 && idx < parts);
    let base = total / parts;
    let extra = total % parts;
    let start = idx * base + idx.min(extra);
    let len = base + usize::from(idx < extra);
    start..start + len
}

/// Contiguous, step-aligned sub-ranges of one loop, one per executor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub loop_id: LoopId,
    /// Iteration extent of the loop (`n` for Loop 1, `m` for Loop 3, ...).
    pub extent: usize,
    /// Step size in elements; every range starts on a multiple of it.
    pub step: usize,
    /// Step-units per executor, as returned by the apportionment.
    pub units: Vec<usize>,
    /// Element ranges per executor; together an exact cover of `0..extent`.
    pub ranges: Vec<Range<usize>>,
}

impl PartitionPlan {
    /// Lays `units` out contiguously over `0..extent`; the final unit may be short.
    pub fn from_units(loop_id: LoopId, extent: usize, step: usize, units: Vec<usize>) -> Self {
        let mut ranges = Vec::with_capacity(units.len());
        let mut at = 0usize;
        for &u in &units {
            let start = (at * step).min(extent);
            at += u;
            ranges.push(start..(at * step).min(extent));
        }
        PartitionPlan {
            loop_id,
            extent,
            step,
            units,
            ranges,
        }
    }

    pub fn total_units(&self) -> usize {
        self.units.iter().sum()
    }

    pub fn range(&self, class: CoreClass) -> Range<usize> {
        self.ranges[class.index()].clone()
    }
}

/// Splits the coarse loop between the fast (first) and slow clusters.
///
/// The range is cut into `step`-sized units (`mc` rows or `nc` columns) and
/// apportioned by the performance ratio. A class without threads gets a
/// zero weight, so the whole range goes to the other cluster.
pub fn plan_coarse(
    problem: &GemmProblem,
    params: &BlockingParams,
    config: &ParallelConfig,
) -> Result<PartitionPlan> {
    let (extent, step) = match config.coarse_loop {
        LoopId::Jc => (problem.n, params.nc),
        LoopId::Ic => (problem.m, params.mc),
        other => {
            return Err(Error::Config(format!(
                "coarse loop must be jc or ic, got {other}"
            )))
        }
    };
    if step == 0 {
        return Err(Error::InvalidParams("coarse step must be >= 1".into()));
    }
    let topo = &config.topology;
    if topo.total_threads() == 0 {
        return Err(Error::Config("topology has no threads".into()));
    }
    let weights = [
        if topo.fast_threads > 0 {
            config.ratio.fast()
        } else {
            0
        },
        if topo.slow_threads > 0 {
            config.ratio.slow()
        } else {
            0
        },
    ];
    let units = partition_weighted(extent.div_ceil(step), &weights);
    Ok(PartitionPlan::from_units(config.coarse_loop, extent, step, units))
}

/// Thread grid `(along jr, along ir)` for a two-dimensional fine split:
/// the most square factorization, with the larger factor on Loop 4.
pub fn fine_grid(threads: usize) -> (usize, usize) {
    let mut ti = 1;
    let mut d = 1;
    while d * d <= threads {
        if threads.is_multiple_of(d) {
            ti = d;
        }
        d += 1;
    }
    (threads / ti, ti)
}

fn chunked_share(tiles: usize, chunk: usize, parts: usize, idx: usize) -> Range<usize> {
    let units = tiles.div_ceil(chunk);
    let r = equal_share(units, parts, idx);
    (r.start * chunk).min(tiles)..(r.end * chunk).min(tiles)
}

/// Tiles of one macro-kernel owned by thread `thread` of `threads`.
pub fn fine_share(
    jr_tiles: usize,
    ir_tiles: usize,
    loops: FineLoops,
    chunk: FineChunk,
    threads: usize,
    thread: usize,
) -> TileRange {
    match loops {
        FineLoops::Jr => TileRange {
            jr: chunked_share(jr_tiles, chunk.jr, threads, thread),
            ir: 0..ir_tiles,
        },
        FineLoops::Ir => TileRange {
            jr: 0..jr_tiles,
            ir: chunked_share(ir_tiles, chunk.ir, threads, thread),
        },
        FineLoops::Both => {
            let (tj, ti) = fine_grid(threads);
            TileRange {
                jr: chunked_share(jr_tiles, chunk.jr, tj, thread / ti),
                ir: chunked_share(ir_tiles, chunk.ir, ti, thread % ti),
            }
        }
    }
}

/// Fine plan for a `jr_tiles × ir_tiles` grid: one tile rectangle per thread.
pub fn plan_fine(
    jr_tiles: usize,
    ir_tiles: usize,
    loops: FineLoops,
    chunk: FineChunk,
    threads_in_cluster: usize,
) -> Vec<TileRange> {
    assert!(threads_in_cluster >= 1);
    (0..threads_in_cluster)
        .map(|t| fine_share(jr_tiles, ir_tiles, loops, chunk, threads_in_cluster, t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocked::default_params;
    use crate::config::{CoreTopology, PerfRatio};

    #[test]
    fn six_to_one_over_24() {
        assert_eq!(partition_weighted(24, &[6, 1]), vec![21, 3]);
    }

    #[test]
    fn symmetric_and_empty() {
        assert_eq!(partition_weighted(12, &[1, 1]), vec![6, 6]);
        assert_eq!(partition_weighted(0, &[6, 1]), vec![0, 0]);
    }

    #[test]
    fn remainder_ties_prefer_larger_weight_then_lower_index() {
        // 3·1/4 and 3·3/4: remainders 3 and 1 out of 4 -> larger remainder wins
        assert_eq!(partition_weighted(3, &[1, 3]), vec![1, 2]);
        // equal remainders, larger weight first
        assert_eq!(partition_weighted(1, &[1, 1, 2]), vec![0, 0, 1]);
        assert_eq!(partition_weighted(2, &[1, 1, 1, 1]), vec![1, 1, 0, 0]);
    }

    #[test]
    fn zero_weight_gets_nothing() {
        assert_eq!(partition_weighted(7, &[6, 0]), vec![7, 0]);
    }

    #[test]
    fn equal_share_matches_apportionment() {
        for total in 0..40 {
            for parts in 1..9 {
                let counts = partition_weighted(total, &vec![1; parts]);
                let mut at = 0;
                for (i, c) in counts.iter().enumerate() {
                    assert_eq!(equal_share(total, parts, i), at..at + c);
                    at += c;
                }
            }
        }
    }

    fn config(coarse: LoopId, fast: usize, slow: usize, ratio: (u64, u64)) -> ParallelConfig {
        ParallelConfig {
            coarse_loop: coarse,
            topology: CoreTopology::new(fast, slow),
            ratio: PerfRatio::new(ratio.0, ratio.1).unwrap(),
            ..ParallelConfig::default()
        }
    }

    #[test]
    fn coarse_rows_4096() {
        let p = GemmProblem::square(4096).unwrap();
        let plan = plan_coarse(&p, &default_params(), &config(LoopId::Ic, 4, 4, (6, 1))).unwrap();
        assert_eq!(plan.units, vec![21, 3]);
        assert_eq!(plan.ranges, vec![0..3696, 3696..4096]);
    }

    #[test]
    fn coarse_without_slow_threads() {
        let p = GemmProblem::square(1000).unwrap();
        let plan = plan_coarse(&p, &default_params(), &config(LoopId::Ic, 4, 0, (6, 1))).unwrap();
        assert_eq!(plan.ranges, vec![0..1000, 1000..1000]);
    }

    #[test]
    fn coarse_columns_two_units_leave_slow_idle() {
        let p = GemmProblem::accumulate(64, 8192, 64).unwrap();
        let plan = plan_coarse(&p, &default_params(), &config(LoopId::Jc, 4, 4, (6, 1))).unwrap();
        assert_eq!(plan.units, vec![2, 0]);
        assert_eq!(plan.ranges, vec![0..8192, 8192..8192]);
    }

    #[test]
    fn coarse_rejects_other_loops() {
        let p = GemmProblem::square(10).unwrap();
        assert!(plan_coarse(&p, &default_params(), &config(LoopId::Jr, 1, 1, (1, 1))).is_err());
    }

    #[test]
    fn fine_even_and_uneven() {
        let c = FineChunk::default();
        let lens = |tiles| -> Vec<usize> {
            plan_fine(tiles, 3, FineLoops::Jr, c, 4)
                .iter()
                .map(|t| t.jr.len())
                .collect()
        };
        assert_eq!(lens(20), vec![5, 5, 5, 5]);
        assert_eq!(lens(22), vec![6, 6, 5, 5]);
    }

    #[test]
    fn fine_two_dimensional_quadrants() {
        let plan = plan_fine(8, 6, FineLoops::Both, FineChunk::default(), 4);
        assert_eq!(
            plan,
            vec![
                TileRange { jr: 0..4, ir: 0..3 },
                TileRange { jr: 0..4, ir: 3..6 },
                TileRange { jr: 4..8, ir: 0..3 },
                TileRange { jr: 4..8, ir: 3..6 },
            ]
        );
    }

    #[test]
    fn fine_chunks_group_tiles() {
        let chunk = FineChunk { jr: 2, ir: 4 };
        let jr: Vec<_> = plan_fine(9, 1, FineLoops::Jr, chunk, 4)
            .into_iter()
            .map(|t| t.jr)
            .collect();
        assert_eq!(jr, vec![0..4, 4..6, 6..8, 8..9]);
        let ir: Vec<_> = plan_fine(1, 10, FineLoops::Ir, chunk, 2)
            .into_iter()
            .map(|t| t.ir)
            .collect();
        assert_eq!(ir, vec![0..8, 8..10]);
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(fine_grid(1), (1, 1));
        assert_eq!(fine_grid(4), (2, 2));
        assert_eq!(fine_grid(8), (4, 2));
        assert_eq!(fine_grid(6), (3, 2));
        assert_eq!(fine_grid(7), (7, 1));
    }
}
