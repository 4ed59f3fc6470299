//! Packing of `A_c` row panels and `B_c` column panels.
//!
//! `A_c` holds `ceil(mc/mr)` panels of `mr × kc`, stored so that one
//! k-step of a panel (`mr` values) is contiguous. `B_c` holds
//! `ceil(nc/nr)` panels of `kc × nr`, one k-step (`nr` values) contiguous.
//! Rows or columns past the edge of the source block are zero.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct PackedBlockA {
    pub(crate) mc_eff: usize,
    pub(crate) kc_eff: usize,
    pub(crate) mr: usize,
    pub(crate) data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackedBlockB {
    pub(crate) kc_eff: usize,
    pub(crate) nc_eff: usize,
    pub(crate) nr: usize,
    pub(crate) data: Vec<f64>,
}

impl PackedBlockA {
    pub fn mc_eff(&self) -> usize {
        self.mc_eff
    }
    pub fn kc_eff(&self) -> usize {
        self.kc_eff
    }
    pub fn mr(&self) -> usize {
        self.mr
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn panels(&self) -> usize {
        self.mc_eff.div_ceil(self.mr)
    }
    /// The `q`-th `mr × kc` panel.
    pub fn panel(&self, q: usize) -> &[f64] {
        let len = self.mr * self.kc_eff;
        &self.data[q * len..(q + 1) * len]
    }
}

impl PackedBlockB {
    pub fn kc_eff(&self) -> usize {
        self.kc_eff
    }
    pub fn nc_eff(&self) -> usize {
        self.nc_eff
    }
    pub fn nr(&self) -> usize {
        self.nr
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn panels(&self) -> usize {
        self.nc_eff.div_ceil(self.nr)
    }
    pub fn panel(&self, q: usize) -> &[f64] {
        let len = self.nr * self.kc_eff;
        &self.data[q * len..(q + 1) * len]
    }
}

pub(crate) fn packed_a_len(mc_eff: usize, kc_eff: usize, mr: usize) -> usize {
    mc_eff.div_ceil(mr) * mr * kc_eff
}

pub(crate) fn packed_b_len(kc_eff: usize, nc_eff: usize, nr: usize) -> usize {
    nc_eff.div_ceil(nr) * nr * kc_eff
}

fn check_block(
    what: &str,
    m: &Matrix,
    row: usize,
    col: usize,
    rows: usize,
    cols: usize,
    step: usize,
) -> Result<()> {
    if step == 0 {
        return Err(Error::InvalidParams(format!("{what}: register block must be >= 1")));
    }
    if row + rows > m.rows() || col + cols > m.cols() {
        return Err(Error::Bounds(format!(
            "{what}: block [{row}..{}) x [{col}..{}) exceeds {}x{} matrix",
            row + rows,
            col + cols,
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

/// Packs `A(row..row+mc_eff, col..col+kc_eff)` into `mr`-row panels.
pub fn pack_a(
    a: &Matrix,
    row_offset: usize,
    col_offset: usize,
    mc_eff: usize,
    kc_eff: usize,
    mr: usize,
) -> Result<PackedBlockA> {
    check_block("pack_a", a, row_offset, col_offset, mc_eff, kc_eff, mr)?;
    let mut data = vec![0.0; packed_a_len(mc_eff, kc_eff, mr)];
    let panels = mc_eff.div_ceil(mr);
    pack_a_panels(a, row_offset, col_offset, mc_eff, kc_eff, mr, 0..panels, &mut data);
    Ok(PackedBlockA {
        mc_eff,
        kc_eff,
        mr,
        data,
    })
}

/// Packs `B(row..row+kc_eff, col..col+nc_eff)` into `nr`-column panels.
pub fn pack_b(
    b: &Matrix,
    row_offset: usize,
    col_offset: usize,
    kc_eff: usize,
    nc_eff: usize,
    nr: usize,
) -> Result<PackedBlockB> {
    check_block("pack_b", b, row_offset, col_offset, kc_eff, nc_eff, nr)?;
    let mut data = vec![0.0; packed_b_len(kc_eff, nc_eff, nr)];
    let panels = nc_eff.div_ceil(nr);
    pack_b_panels(b, row_offset, col_offset, kc_eff, nc_eff, nr, 0..panels, &mut data);
    Ok(PackedBlockB {
        kc_eff,
        nc_eff,
        nr,
        data,
    })
}

/// Writes panels `panels` of a packed `A_c` into `dst`, which holds exactly
/// those panels. Lets several threads fill disjoint parts of one buffer.
#[allow(clippy::too_many_arguments)]
pub(crate) fn pack_a_panels(
    a: &Matrix,
    row0: usize,
    col0: usize,
    mc_eff: usize,
    kc_eff: usize,
    mr: usize,
    panels: Range<usize>,
    dst: &mut [f64],
) {
    let panel_len = mr * kc_eff;
    debug_assert_eq!(dst.len(), panels.len() * panel_len);
    let src = a.as_slice();
    let ld = a.ld();
    for (q, out) in panels.zip(dst.chunks_exact_mut(panel_len.max(1))) {
        let first = q * mr;
        let valid = mr.min(mc_eff - first);
        for (p, step) in out.chunks_exact_mut(mr).enumerate() {
            let base = row0 + first + (col0 + p) * ld;
            step[..valid].copy_from_slice(&src[base..base + valid]);
            step[valid..].fill(0.0);
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn pack_b_panels(
    b: &Matrix,
    row0: usize,
    col0: usize,
    kc_eff: usize,
    nc_eff: usize,
    nr: usize,
    panels: Range<usize>,
    dst: &mut [f64],
) {
    let panel_len = nr * kc_eff;
    debug_assert_eq!(dst.len(), panels.len() * panel_len);
    let src = b.as_slice();
    let ld = b.ld();
    for (q, out) in panels.zip(dst.chunks_exact_mut(panel_len.max(1))) {
        let first = q * nr;
        let valid = nr.min(nc_eff - first);
        for (p, step) in out.chunks_exact_mut(nr).enumerate() {
            let base = row0 + p + (col0 + first) * ld;
            for (jj, v) in step[..valid].iter_mut().enumerate() {
                *v = src[base + jj * ld];
            }
            step[valid..].fill(0.0);
        }
    }
}
