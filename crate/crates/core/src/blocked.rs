//! Sequential five-loop driver: Loops 1–3 around the macro-kernel.

use crate::error::{Error, Result};
use crate::kernel::{macro_kernel_raw, BlockOut, MicroKernel, PanelPhase, TileRange};
use crate::matrix::{scale, GemmProblem, Matrix};
use crate::pack::{pack_a_panels, pack_b_panels, packed_a_len, packed_b_len};

/// Cache (`nc`, `kc`, `mc`) and register (`nr`, `mr`) blocking sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockingParams {
    pub nc: usize,
    pub kc: usize,
    pub mc: usize,
    pub nr: usize,
    pub mr: usize,
}

/// Block sizes found for the Cortex-A15 in double precision, used on both
/// core classes: `mc = 176`, `kc = 368`, `nc = 4096`, `4 × 4` micro-tiles.
pub const fn default_params() -> BlockingParams {
    BlockingParams {
        nc: 4096,
        kc: 368,
        mc: 176,
        nr: 4,
        mr: 4,
    }
}

impl Default for BlockingParams {
    fn default() -> Self {
        default_params()
    }
}

impl BlockingParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("nc", self.nc),
            ("kc", self.kc),
            ("mc", self.mc),
            ("nr", self.nr),
            ("mr", self.mr),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidParams(format!("{name} must be >= 1")));
        }
        Ok(())
    }

    /// Whether `mc` and `nc` are multiples of the register block, the usual
    /// choice; other values are legal and handled by edge padding.
    pub fn is_aligned(&self) -> bool {
        self.mc.is_multiple_of(self.mr) && self.nc.is_multiple_of(self.nr)
    }
}

/// Buffers allocated and packing work done by one GEMM call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GemmStats {
    pub a_buffers: usize,
    pub b_buffers: usize,
    /// Partial-sum scratch for k spanning several panels (0 or 1).
    pub partial_buffers: usize,
    pub a_packs: usize,
    pub b_packs: usize,
    pub macro_kernels: usize,
}

/// Partial-sum scratch: an `m × n` column-major buffer when `k > kc`.
pub(crate) fn partial_buffer(problem: &GemmProblem, params: &BlockingParams) -> Vec<f64> {
    if problem.k > params.kc {
        vec![0.0; problem.m * problem.n]
    } else {
        Vec::new()
    }
}

/// Blocked `C := beta·C + alpha·A·B`, bitwise identical to
/// [`gemm_reference`](crate::matrix::gemm_reference) for any blocking.
pub fn gemm_blocked(
    problem: &GemmProblem,
    a: &Matrix,
    b: &Matrix,
    c: &mut Matrix,
    params: &BlockingParams,
) -> Result<()> {
    gemm_blocked_with_stats(problem, a, b, c, params).map(|_| ())
}

pub fn gemm_blocked_with_stats(
    problem: &GemmProblem,
    a: &Matrix,
    b: &Matrix,
    c: &mut Matrix,
    params: &BlockingParams,
) -> Result<GemmStats> {
    problem.check_operands(a, b, c)?;
    params.validate()?;
    let mut stats = GemmStats::default();
    let GemmProblem {
        m,
        n,
        k,
        alpha,
        beta,
    } = *problem;
    if alpha == 0.0 {
        scale(c, beta);
        return Ok(stats);
    }
    let BlockingParams { nc, kc, mc, nr, mr } = *params;

    let mut bc = vec![0.0; packed_b_len(kc.min(k), nc.min(n), nr)];
    let mut ac = vec![0.0; packed_a_len(mc.min(m), kc.min(k), mr)];
    let mut partial = partial_buffer(problem, params);
    stats.b_buffers = 1;
    stats.a_buffers = 1;
    stats.partial_buffers = usize::from(!partial.is_empty());

    let mut kernel = MicroKernel::new(mr, nr);
    let ldc = c.ld();
    let c_ptr = c.as_mut_slice().as_mut_ptr();
    let partial_ptr = partial.as_mut_ptr();
    let k_panels = k.div_ceil(kc);

    for jc in (0..n).step_by(nc) {
        let nc_eff = nc.min(n - jc);
        let b_panels = nc_eff.div_ceil(nr);
        for (pi, pc) in (0..k).step_by(kc).enumerate() {
            let kc_eff = kc.min(k - pc);
            let phase = PanelPhase::of(pi, k_panels);
            let b_len = packed_b_len(kc_eff, nc_eff, nr);
            pack_b_panels(b, pc, jc, kc_eff, nc_eff, nr, 0..b_panels, &mut bc[..b_len]);
            stats.b_packs += 1;
            for ic in (0..m).step_by(mc) {
                let mc_eff = mc.min(m - ic);
                let a_panels = mc_eff.div_ceil(mr);
                let a_len = packed_a_len(mc_eff, kc_eff, mr);
                pack_a_panels(a, ic, pc, mc_eff, kc_eff, mr, 0..a_panels, &mut ac[..a_len]);
                stats.a_packs += 1;
                let out = BlockOut {
                    // SAFETY: (ic, jc) is inside C; the partial buffer, when
                    // present, is m × n with leading dimension m.
                    c: unsafe { c_ptr.add(ic + jc * ldc) },
                    ldc,
                    partial: if partial.is_empty() {
                        std::ptr::null_mut()
                    } else {
                        unsafe { partial_ptr.add(ic + jc * m) }
                    },
                    ld_partial: m,
                    rows: mc_eff,
                    cols: nc_eff,
                    alpha,
                    beta,
                };
                // SAFETY: single-threaded; the block lies inside C and the
                // partial buffer.
                unsafe {
                    macro_kernel_raw(
                        &mut kernel,
                        &ac[..a_len],
                        &bc[..b_len],
                        kc_eff,
                        &out,
                        phase,
                        &TileRange::full(b_panels, a_panels),
                    );
                }
                stats.macro_kernels += 1;
            }
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::gemm_reference;

    fn check(m: usize, n: usize, k: usize, alpha: f64, beta: f64, params: BlockingParams, seed: u64) {
        let p = GemmProblem::new(m, n, k, alpha, beta).unwrap();
        let a = Matrix::random(m, k, seed);
        let b = Matrix::random(k, n, seed + 1);
        let c0 = Matrix::random(m, n, seed + 2);
        let mut want = c0.clone();
        gemm_reference(&p, &a, &b, &mut want).unwrap();
        let mut got = c0;
        gemm_blocked(&p, &a, &b, &mut got, &params).unwrap();
        assert!(got.bitwise_eq(&want), "m={m} n={n} k={k} {params:?}");
    }

    #[test]
    fn defaults() {
        let d = default_params();
        assert_eq!((d.mc, d.kc), (176, 368));
        assert_eq!(d.nc, 4096);
        assert_eq!((d.mr, d.nr), (4, 4));
        assert!(d.is_aligned());
    }

    #[test]
    fn single_element() {
        let p = GemmProblem::accumulate(1, 1, 1).unwrap();
        let mut c = Matrix::from_rows(&[&[2.0]]);
        gemm_blocked(
            &p,
            &Matrix::from_rows(&[&[3.0]]),
            &Matrix::from_rows(&[&[4.0]]),
            &mut c,
            &default_params(),
        )
        .unwrap();
        assert_eq!(c.get(0, 0), 14.0);
    }

    #[test]
    fn defaults_with_edge_blocks() {
        check(300, 300, 300, 1.0, 1.0, default_params(), 11);
    }

    #[test]
    fn awkward_sizes() {
        check(503, 129, 371, 1.0, 1.0, default_params(), 12);
        check(503, 129, 371, -0.75, 0.25, default_params(), 13);
    }

    #[test]
    fn multi_panel_k_with_scalars() {
        let params = BlockingParams {
            nc: 8,
            kc: 5,
            mc: 7,
            nr: 3,
            mr: 2,
        };
        check(23, 19, 31, 1.5, -2.0, params, 14);
    }

    #[test]
    fn zero_params_rejected() {
        let p = GemmProblem::accumulate(2, 2, 2).unwrap();
        let a = Matrix::zeros(2, 2);
        let mut c = Matrix::zeros(2, 2);
        let bad = BlockingParams { kc: 0, ..default_params() };
        assert!(matches!(
            gemm_blocked(&p, &a, &a, &mut c, &bad),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn one_buffer_each_and_pack_counts() {
        let params = BlockingParams {
            nc: 16,
            kc: 8,
            mc: 12,
            nr: 4,
            mr: 4,
        };
        let p = GemmProblem::accumulate(30, 40, 20).unwrap();
        let a = Matrix::random(30, 20, 1);
        let b = Matrix::random(20, 40, 2);
        let mut c = Matrix::zeros(30, 40);
        let s = gemm_blocked_with_stats(&p, &a, &b, &mut c, &params).unwrap();
        assert_eq!((s.a_buffers, s.b_buffers, s.partial_buffers), (1, 1, 1));
        // 3 column blocks x 3 k-panels, each with 3 row blocks
        assert_eq!(s.b_packs, 9);
        assert_eq!(s.a_packs, 27);
        assert_eq!(s.macro_kernels, 27);

        let p = GemmProblem::accumulate(30, 40, 8).unwrap();
        let a = Matrix::random(30, 8, 1);
        let b = Matrix::random(8, 40, 2);
        let s = gemm_blocked_with_stats(&p, &a, &b, &mut c, &params).unwrap();
        assert_eq!(s.partial_buffers, 0);
    }
}
