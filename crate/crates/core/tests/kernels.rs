#![allow(clippy::needless_range_loop)]

use agemm::partition::fine_share;
use agemm::{
    macro_kernel, micro_kernel, pack_a, pack_b, FineChunk, FineLoops, Matrix, PackedBlockA, PackedBlockB,
    TileRange,
};
use proptest::prelude::*;

/// Rebuilds the source block from a packed `A_c` by the inverse index map.
fn unpack_a(p: &PackedBlockA) -> Vec<Vec<f64>> {
    let (mc, kc, mr) = (p.mc_eff(), p.kc_eff(), p.mr());
    let mut out = vec![vec![f64::NAN; kc]; mc];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = p.data()[(i / mr) * mr * kc + j * mr + i % mr];
        }
    }
    out
}

fn unpack_b(p: &PackedBlockB) -> Vec<Vec<f64>> {
    let (kc, nc, nr) = (p.kc_eff(), p.nc_eff(), p.nr());
    let mut out = vec![vec![f64::NAN; nc]; kc];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = p.data()[(j / nr) * nr * kc + i * nr + j % nr];
        }
    }
    out
}

fn padding_a(p: &PackedBlockA) -> Vec<f64> {
    let (mc, kc, mr) = (p.mc_eff(), p.kc_eff(), p.mr());
    let mut pad = Vec::new();
    for q in 0..p.panels() {
        for j in 0..kc {
            for r in 0..mr {
                if q * mr + r >= mc {
                    pad.push(p.data()[q * mr * kc + j * mr + r]);
                }
            }
        }
    }
    pad
}

fn same_bits(x: f64, y: f64) -> bool {
    x.to_bits() == y.to_bits()
}

#[test]
fn pack_a_round_trip_176x368() {
    let a = Matrix::random(200, 400, 7);
    let p = pack_a(&a, 11, 5, 176, 368, 4).unwrap();
    let u = unpack_a(&p);
    for (i, row) in u.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert!(same_bits(*v, a.get(11 + i, 5 + j)));
        }
    }
}

#[test]
fn pack_b_round_trip_368x512() {
    let b = Matrix::random(368, 515, 8);
    let p = pack_b(&b, 0, 3, 368, 512, 4).unwrap();
    let u = unpack_b(&p);
    for (i, row) in u.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert!(same_bits(*v, b.get(i, 3 + j)));
        }
    }
}

proptest! {
    #[test]
    fn pack_round_trip_any_register_block(
        rows in 1usize..40, cols in 1usize..40, r in prop::sample::select(vec![1usize, 2, 4, 8]), seed in any::<u64>()
    ) {
        let m = Matrix::random(rows + 3, cols + 2, seed);
        let pa = pack_a(&m, 3, 2, rows, cols, r).unwrap();
        let ua = unpack_a(&pa);
        for i in 0..rows {
            for j in 0..cols {
                prop_assert!(same_bits(ua[i][j], m.get(3 + i, 2 + j)));
            }
        }
        prop_assert!(padding_a(&pa).iter().all(|v| *v == 0.0));
        let pb = pack_b(&m, 3, 2, rows, cols, r).unwrap();
        let ub = unpack_b(&pb);
        for i in 0..rows {
            for j in 0..cols {
                prop_assert!(same_bits(ub[i][j], m.get(3 + i, 2 + j)));
            }
        }
    }
}

/// Dense tile product with the accumulation order the kernel must follow.
#[allow(clippy::too_many_arguments)]
fn tile_oracle(a: &[f64], b: &[f64], kc: usize, mr: usize, nr: usize, c: &mut [f64], ldc: usize, rows: usize, cols: usize, alpha: f64, beta: f64) {
    for j in 0..cols {
        for i in 0..rows {
            let mut s = 0.0;
            for p in 0..kc {
                s += a[p * mr + i] * b[p * nr + j];
            }
            c[j * ldc + i] = beta * c[j * ldc + i] + alpha * s;
        }
    }
}

#[test]
fn micro_kernel_4x4x368_matches_oracle() {
    let a = Matrix::random(4, 368, 1);
    let b = Matrix::random(368, 4, 2);
    let pa = pack_a(&a, 0, 0, 4, 368, 4).unwrap();
    let pb = pack_b(&b, 0, 0, 368, 4, 4).unwrap();
    let c0 = Matrix::random(6, 4, 3);
    for (alpha, beta) in [(1.0, 1.0), (-0.5, 2.0), (1.25, 0.0)] {
        let mut got = c0.as_slice().to_vec();
        let mut want = got.clone();
        micro_kernel(pa.data(), pb.data(), 368, 4, 4, &mut got, 6, 4, 4, alpha, beta);
        tile_oracle(pa.data(), pb.data(), 368, 4, 4, &mut want, 6, 4, 4, alpha, beta);
        assert!(got.iter().zip(&want).all(|(x, y)| same_bits(*x, *y)));
    }
}

proptest! {
    #[test]
    fn padded_edge_tiles_match_unpadded_oracle(
        mr in 1usize..9, nr in 1usize..9, kc in 0usize..30, seed in any::<u64>(),
        rows_frac in 0.0f64..1.0, cols_frac in 0.0f64..1.0,
    ) {
        let rows = 1 + ((mr - 1) as f64 * rows_frac) as usize;
        let cols = 1 + ((nr - 1) as f64 * cols_frac) as usize;
        let a = Matrix::random(rows, kc.max(1), seed);
        let b = Matrix::random(kc.max(1), cols, seed ^ 1);
        let pa = pack_a(&a, 0, 0, rows, kc, mr).unwrap();
        let pb = pack_b(&b, 0, 0, kc, cols, nr).unwrap();
        let ldc = rows + 1;
        let c0: Vec<f64> = Matrix::random(ldc, cols, seed ^ 2).as_slice().to_vec();
        let mut got = c0.clone();
        micro_kernel(pa.data(), pb.data(), kc, mr, nr, &mut got, ldc, rows, cols, 0.75, 1.5);
        // oracle straight from the unpacked source, no padding involved
        let mut want = c0.clone();
        for j in 0..cols {
            for i in 0..rows {
                let mut s = 0.0;
                for p in 0..kc {
                    s += a.get(i, p) * b.get(p, j);
                }
                want[j * ldc + i] = 1.5 * want[j * ldc + i] + 0.75 * s;
            }
        }
        prop_assert!(got.iter().zip(&want).all(|(x, y)| same_bits(*x, *y)));
    }
}

fn region_oracle(a: &Matrix, b: &Matrix, c: &mut Matrix, row: usize, col: usize, alpha: f64, beta: f64) {
    for j in 0..b.cols() {
        for i in 0..a.rows() {
            let mut s = 0.0;
            for p in 0..a.cols() {
                s += a.get(i, p) * b.get(p, j);
            }
            let v = beta * c.get(row + i, col + j) + alpha * s;
            c.set(row + i, col + j, v);
        }
    }
}

#[test]
fn macro_kernel_8x8_matches_oracle() {
    let a = Matrix::random(8, 8, 4);
    let b = Matrix::random(8, 8, 5);
    let pa = pack_a(&a, 0, 0, 8, 8, 4).unwrap();
    let pb = pack_b(&b, 0, 0, 8, 8, 4).unwrap();
    let c0 = Matrix::random(10, 11, 6);
    let mut got = c0.clone();
    macro_kernel(&pa, &pb, &mut got, 1, 2, 1.0, 1.0, &TileRange::full(2, 2)).unwrap();
    let mut want = c0.clone();
    region_oracle(&a, &b, &mut want, 1, 2, 1.0, 1.0);
    assert!(got.bitwise_eq(&want));

    let mut untouched = c0.clone();
    macro_kernel(&pa, &pb, &mut untouched, 1, 2, 1.0, 1.0, &TileRange::empty()).unwrap();
    assert!(untouched.bitwise_eq(&c0));
}

#[test]
fn macro_kernel_halves_in_either_order() {
    let (mc, kc, nc, mr, nr) = (23, 17, 29, 4, 3);
    let a = Matrix::random(mc, kc, 9);
    let b = Matrix::random(kc, nc, 10);
    let pa = pack_a(&a, 0, 0, mc, kc, mr).unwrap();
    let pb = pack_b(&b, 0, 0, kc, nc, nr).unwrap();
    let (jt, it) = (pb.panels(), pa.panels());
    let c0 = Matrix::random(mc, nc, 11);
    let mut whole = c0.clone();
    macro_kernel(&pa, &pb, &mut whole, 0, 0, 2.0, -1.0, &TileRange::full(jt, it)).unwrap();
    let left = TileRange { jr: 0..jt / 2, ir: 0..it };
    let right = TileRange { jr: jt / 2..jt, ir: 0..it };
    let mut lr = c0.clone();
    macro_kernel(&pa, &pb, &mut lr, 0, 0, 2.0, -1.0, &left).unwrap();
    macro_kernel(&pa, &pb, &mut lr, 0, 0, 2.0, -1.0, &right).unwrap();
    let mut rl = c0.clone();
    macro_kernel(&pa, &pb, &mut rl, 0, 0, 2.0, -1.0, &right).unwrap();
    macro_kernel(&pa, &pb, &mut rl, 0, 0, 2.0, -1.0, &left).unwrap();
    assert!(whole.bitwise_eq(&lr) && whole.bitwise_eq(&rl));
}

#[test]
fn macro_kernel_rejects_tiles_outside_grid() {
    let a = Matrix::random(8, 4, 1);
    let pa = pack_a(&a, 0, 0, 8, 4, 4).unwrap();
    let pb = pack_b(&Matrix::random(4, 8, 2), 0, 0, 4, 8, 4).unwrap();
    let mut c = Matrix::zeros(8, 8);
    assert!(macro_kernel(&pa, &pb, &mut c, 0, 0, 1.0, 1.0, &TileRange::full(3, 2)).is_err());
    assert!(macro_kernel(&pa, &pb, &mut c, 1, 0, 1.0, 1.0, &TileRange::full(2, 2)).is_err());
}

const SENTINEL: f64 = -1.0e300;

proptest! {
    // every C element is written by exactly one thread's tiles
    #[test]
    fn fine_split_writes_are_disjoint(
        mc in 1usize..40, nc in 1usize..40, mr in 1usize..6, nr in 1usize..6, threads in 1usize..9,
        mode in prop::sample::select(vec![FineLoops::Jr, FineLoops::Ir, FineLoops::Both]),
        cj in 1usize..4, ci in 1usize..4,
    ) {
        let a = Matrix::from_fn(mc, 3, |_, _| 1.0);
        let b = Matrix::from_fn(3, nc, |_, _| 1.0);
        let pa = pack_a(&a, 0, 0, mc, 3, mr).unwrap();
        let pb = pack_b(&b, 0, 0, 3, nc, nr).unwrap();
        let chunk = FineChunk { jr: cj, ir: ci };
        let mut shadow = vec![0u32; mc * nc];
        for t in 0..threads {
            let tiles = fine_share(pb.panels(), pa.panels(), mode, chunk, threads, t);
            let mut c = Matrix::from_fn(mc, nc, |_, _| SENTINEL);
            macro_kernel(&pa, &pb, &mut c, 0, 0, 1.0, 0.0, &tiles).unwrap();
            for j in 0..nc {
                for i in 0..mc {
                    if c.get(i, j) != SENTINEL {
                        shadow[j * mc + i] += 1;
                    }
                }
            }
        }
        prop_assert!(shadow.iter().all(|&n| n == 1), "{shadow:?}");
    }
}
