//! Register-blocked micro-kernel and the macro-kernel (Loops 4 and 5).
//!
//! The micro-kernel keeps an `mr × nr` accumulator in locals and applies
//! `kc` rank-1 updates in ascending k order. Every accumulator element sees
//! exactly the sequence `s = 0; s = s + a·b; ...`, the same sequence the
//! reference triple loop performs, so blocked and reference results agree
//! bit for bit.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::pack::{PackedBlockA, PackedBlockB};

/// Rectangle of micro-tiles: `jr` indexes `nr`-wide columns (Loop 4), `ir`
/// indexes `mr`-tall rows (Loop 5).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TileRange {
    pub jr: Range<usize>,
    pub ir: Range<usize>,
}

impl TileRange {
    pub fn full(jr_tiles: usize, ir_tiles: usize) -> Self {
        TileRange {
            jr: 0..jr_tiles,
            ir: 0..ir_tiles,
        }
    }

    pub fn empty() -> Self {
        TileRange { jr: 0..0, ir: 0..0 }
    }

    pub fn is_empty(&self) -> bool {
        self.jr.is_empty() || self.ir.is_empty()
    }

    pub fn len(&self) -> usize {
        self.jr.len() * self.ir.len()
    }

    pub fn contains(&self, jr: usize, ir: usize) -> bool {
        self.jr.contains(&jr) && self.ir.contains(&ir)
    }
}

/// Where a k-panel sits in Loop 2; decides how the accumulator starts and ends.
///
/// A tile's raw sum is carried across k-panels in a scratch buffer and
/// merged into C once, on the last panel: `C = beta·C + alpha·sum`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PanelPhase {
    /// k fits in one panel: start from zero, merge into C.
    Only,
    /// Start from zero, store the raw sum.
    First,
    /// Load the raw sum, store it back.
    Middle,
    /// Load the raw sum, merge into C.
    Last,
}

impl PanelPhase {
    pub(crate) fn of(panel: usize, panels: usize) -> Self {
        match (panel == 0, panel + 1 == panels) {
            (true, true) => PanelPhase::Only,
            (true, false) => PanelPhase::First,
            (false, false) => PanelPhase::Middle,
            (false, true) => PanelPhase::Last,
        }
    }

    #[inline]
    fn loads_partial(self) -> bool {
        matches!(self, PanelPhase::Middle | PanelPhase::Last)
    }

    #[inline]
    fn merges(self) -> bool {
        matches!(self, PanelPhase::Only | PanelPhase::Last)
    }
}

/// Output side of one macro-kernel call: the C block and, when k spans
/// several panels, the matching block of the partial-sum scratch.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BlockOut {
    pub c: *mut f64,
    pub ldc: usize,
    pub partial: *mut f64,
    pub ld_partial: usize,
    pub rows: usize,
    pub cols: usize,
    pub alpha: f64,
    pub beta: f64,
}

/// Rank-1 updates over a fixed-size accumulator, `acc[j][i]`.
#[inline(always)]
fn rank1_fixed<const MR: usize, const NR: usize>(
    kc: usize,
    a: &[f64],
    b: &[f64],
    acc: &mut [[f64; MR]; NR],
) {
    let a = &a[..kc * MR];
    let b = &b[..kc * NR];
    for (ap, bp) in a.chunks_exact(MR).zip(b.chunks_exact(NR)) {
        for j in 0..NR {
            let bj = bp[j];
            for i in 0..MR {
                acc[j][i] += ap[i] * bj;
            }
        }
    }
}

/// Same update for run-time `mr × nr`; `acc` is column-major `mr × nr`.
fn rank1_dyn(mr: usize, nr: usize, kc: usize, a: &[f64], b: &[f64], acc: &mut [f64]) {
    let a = &a[..kc * mr];
    let b = &b[..kc * nr];
    for (ap, bp) in a.chunks_exact(mr).zip(b.chunks_exact(nr)) {
        for (col, &bj) in acc.chunks_exact_mut(mr).zip(bp) {
            for (s, &ai) in col.iter_mut().zip(ap) {
                *s += ai * bj;
            }
        }
    }
}

/// Loads the starting accumulator, runs the rank-1 updates, writes the tile.
///
/// # Safety
/// `c` (and `partial` when the phase touches it) must be valid for the
/// `rows × cols` tile at the given leading dimensions, and no other thread
/// may access that tile concurrently.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
unsafe fn tile_fixed<const MR: usize, const NR: usize>(
    kc: usize,
    a: &[f64],
    b: &[f64],
    c: *mut f64,
    ldc: usize,
    partial: *mut f64,
    ld_partial: usize,
    rows: usize,
    cols: usize,
    alpha: f64,
    beta: f64,
    phase: PanelPhase,
) {
    let mut acc = [[0.0f64; MR]; NR];
    if phase.loads_partial() {
        for (j, col) in acc.iter_mut().enumerate().take(cols) {
            for (i, v) in col.iter_mut().enumerate().take(rows) {
                *v = *partial.add(i + j * ld_partial);
            }
        }
    }
    rank1_fixed::<MR, NR>(kc, a, b, &mut acc);
    store_tile(
        |i, j| acc[j][i],
        c,
        ldc,
        partial,
        ld_partial,
        rows,
        cols,
        alpha,
        beta,
        phase,
    );
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
unsafe fn store_tile(
    acc: impl Fn(usize, usize) -> f64,
    c: *mut f64,
    ldc: usize,
    partial: *mut f64,
    ld_partial: usize,
    rows: usize,
    cols: usize,
    alpha: f64,
    beta: f64,
    phase: PanelPhase,
) {
    if phase.merges() {
        for j in 0..cols {
            for i in 0..rows {
                let dst = c.add(i + j * ldc);
                *dst = beta * *dst + alpha * acc(i, j);
            }
        }
    } else {
        for j in 0..cols {
            for i in 0..rows {
                *partial.add(i + j * ld_partial) = acc(i, j);
            }
        }
    }
}

/// Register-block shapes with a const-generic fast path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    R1x1,
    R2x2,
    R4x4,
    R8x4,
    R4x8,
    R8x8,
    Dyn,
}

impl Shape {
    fn of(mr: usize, nr: usize) -> Self {
        match (mr, nr) {
            (1, 1) => Shape::R1x1,
            (2, 2) => Shape::R2x2,
            (4, 4) => Shape::R4x4,
            (8, 4) => Shape::R8x4,
            (4, 8) => Shape::R4x8,
            (8, 8) => Shape::R8x8,
            _ => Shape::Dyn,
        }
    }
}

/// Per-call micro-kernel dispatcher; owns scratch for run-time shapes.
pub(crate) struct MicroKernel {
    mr: usize,
    nr: usize,
    shape: Shape,
    scratch: Vec<f64>,
}

impl MicroKernel {
    pub(crate) fn new(mr: usize, nr: usize) -> Self {
        let shape = Shape::of(mr, nr);
        let scratch = if shape == Shape::Dyn {
            vec![0.0; mr * nr]
        } else {
            Vec::new()
        };
        MicroKernel {
            mr,
            nr,
            shape,
            scratch,
        }
    }

    /// # Safety
    /// See [`tile_fixed`].
    #[allow(clippy::too_many_arguments)]
    pub(crate) unsafe fn run(
        &mut self,
        kc: usize,
        a: &[f64],
        b: &[f64],
        c: *mut f64,
        ldc: usize,
        partial: *mut f64,
        ld_partial: usize,
        rows: usize,
        cols: usize,
        alpha: f64,
        beta: f64,
        phase: PanelPhase,
    ) {
        debug_assert!(rows <= self.mr && cols <= self.nr);
        macro_rules! fixed {
            ($mr:literal, $nr:literal) => {
                tile_fixed::<$mr, $nr>(
                    kc, a, b, c, ldc, partial, ld_partial, rows, cols, alpha, beta, phase,
                )
            };
        }
        match self.shape {
            Shape::R1x1 => fixed!(1, 1),
            Shape::R2x2 => fixed!(2, 2),
            Shape::R4x4 => fixed!(4, 4),
            Shape::R8x4 => fixed!(8, 4),
            Shape::R4x8 => fixed!(4, 8),
            Shape::R8x8 => fixed!(8, 8),
            Shape::Dyn => {
                let mr = self.mr;
                let acc = &mut self.scratch;
                acc.fill(0.0);
                if phase.loads_partial() {
                    for j in 0..cols {
                        for i in 0..rows {
                            acc[i + j * mr] = *partial.add(i + j * ld_partial);
                        }
                    }
                }
                rank1_dyn(mr, self.nr, kc, a, b, acc);
                let acc = &*acc;
                store_tile(
                    |i, j| acc[i + j * mr],
                    c,
                    ldc,
                    partial,
                    ld_partial,
                    rows,
                    cols,
                    alpha,
                    beta,
                    phase,
                );
            }
        }
    }
}

/// One `mr × nr` update: `C_tile = beta_panel·C_tile + alpha·(a_panel · b_panel)`.
///
/// `a_panel` is an `A_c` panel (`kc_eff` steps of `mr` values), `b_panel` a
/// `B_c` panel (`kc_eff` steps of `nr` values). `c_tile` starts at the tile's
/// top-left element with leading dimension `ldc`; only the leading
/// `rows × cols` corner is written, the rest of the accumulator is padding.
#[allow(clippy::too_many_arguments)]
pub fn micro_kernel(
    a_panel: &[f64],
    b_panel: &[f64],
    kc_eff: usize,
    mr: usize,
    nr: usize,
    c_tile: &mut [f64],
    ldc: usize,
    rows: usize,
    cols: usize,
    alpha: f64,
    beta_panel: f64,
) {
    assert!(mr >= 1 && nr >= 1, "register block must be at least 1x1");
    assert!(rows <= mr && cols <= nr, "tile {rows}x{cols} exceeds {mr}x{nr}");
    assert!(a_panel.len() >= kc_eff * mr && b_panel.len() >= kc_eff * nr);
    if rows == 0 || cols == 0 {
        return;
    }
    assert!(ldc >= rows && c_tile.len() >= (cols - 1) * ldc + rows);
    let mut kernel = MicroKernel::new(mr, nr);
    // SAFETY: the assertions above bound every write inside `c_tile`, which
    // is exclusively borrowed.
    unsafe {
        kernel.run(
            kc_eff,
            a_panel,
            b_panel,
            c_tile.as_mut_ptr(),
            ldc,
            std::ptr::null_mut(),
            0,
            rows,
            cols,
            alpha,
            beta_panel,
            PanelPhase::Only,
        );
    }
}

/// Runs Loops 4 and 5 over the tiles in `tiles`.
///
/// # Safety
/// `out` must describe valid storage for the whole block and no tile in
/// `tiles` may be touched by another thread during the call.
pub(crate) unsafe fn macro_kernel_raw(
    kernel: &mut MicroKernel,
    ac: &[f64],
    bc: &[f64],
    kc: usize,
    out: &BlockOut,
    phase: PanelPhase,
    tiles: &TileRange,
) {
    let (mr, nr) = (kernel.mr, kernel.nr);
    let a_len = mr * kc;
    let b_len = nr * kc;
    for jt in tiles.jr.clone() {
        let j0 = jt * nr;
        let cols = nr.min(out.cols - j0);
        let b_panel = &bc[jt * b_len..(jt + 1) * b_len];
        for it in tiles.ir.clone() {
            let i0 = it * mr;
            let rows = mr.min(out.rows - i0);
            let a_panel = &ac[it * a_len..(it + 1) * a_len];
            let partial = if out.partial.is_null() {
                out.partial
            } else {
                out.partial.add(i0 + j0 * out.ld_partial)
            };
            kernel.run(
                kc,
                a_panel,
                b_panel,
                out.c.add(i0 + j0 * out.ldc),
                out.ldc,
                partial,
                out.ld_partial,
                rows,
                cols,
                out.alpha,
                out.beta,
                phase,
            );
        }
    }
}

/// Multiplies packed `A_c · B_c` into the C block whose top-left corner is
/// `(row, col)`, visiting only the micro-tiles in `tiles`.
///
/// Tile `(jr, ir)` covers rows `row + ir·mr ..` and columns `col + jr·nr ..`
/// of `c`, clipped to the packed block's `mc_eff × nc_eff` extent.
#[allow(clippy::too_many_arguments)]
pub fn macro_kernel(
    ac: &PackedBlockA,
    bc: &PackedBlockB,
    c: &mut Matrix,
    row: usize,
    col: usize,
    alpha: f64,
    beta_panel: f64,
    tiles: &TileRange,
) -> Result<()> {
    if ac.kc_eff() != bc.kc_eff() {
        return Err(Error::Conformability(format!(
            "A_c has kc={} but B_c has kc={}",
            ac.kc_eff(),
            bc.kc_eff()
        )));
    }
    if row + ac.mc_eff() > c.rows() || col + bc.nc_eff() > c.cols() {
        return Err(Error::Bounds(format!(
            "block at ({row},{col}) of size {}x{} exceeds C {}x{}",
            ac.mc_eff(),
            bc.nc_eff(),
            c.rows(),
            c.cols()
        )));
    }
    if tiles.is_empty() {
        return Ok(());
    }
    if tiles.jr.end > bc.panels() || tiles.ir.end > ac.panels() {
        return Err(Error::Bounds(format!(
            "tile range {:?}x{:?} outside the {}x{} tile grid",
            tiles.jr,
            tiles.ir,
            bc.panels(),
            ac.panels()
        )));
    }
    let ldc = c.ld();
    let out = BlockOut {
        // SAFETY: (row, col) is inside C per the check above.
        c: unsafe { c.as_mut_slice().as_mut_ptr().add(row + col * ldc) },
        ldc,
        partial: std::ptr::null_mut(),
        ld_partial: 0,
        rows: ac.mc_eff(),
        cols: bc.nc_eff(),
        alpha,
        beta: beta_panel,
    };
    let mut kernel = MicroKernel::new(ac.mr(), bc.nr());
    // SAFETY: the block lies inside `c`, which is exclusively borrowed.
    unsafe {
        macro_kernel_raw(
            &mut kernel,
            ac.data(),
            bc.data(),
            ac.kc_eff(),
            &out,
            PanelPhase::Only,
            tiles,
        );
    }
    Ok(())
}
