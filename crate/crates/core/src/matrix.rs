//! Dense column-major storage, the reference multiplication and flop accounting.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Dense column-major matrix of `f64` with an explicit leading dimension.
///
/// Element `(i, j)` lives at `data[i + j * ld]`. Rows `rows..ld` of each
/// column are padding and never read by the multiplication routines.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    ld: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::zeros_with_ld(rows, cols, rows.max(1))
    }

    pub fn zeros_with_ld(rows: usize, cols: usize, ld: usize) -> Self {
        assert!(ld >= rows.max(1), "leading dimension {ld} < rows {rows}");
        Matrix {
            rows,
            cols,
            ld,
            data: vec![0.0; ld * cols],
        }
    }

    /// Wraps existing column-major storage.
    pub fn from_col_major(rows: usize, cols: usize, ld: usize, data: Vec<f64>) -> Result<Self> {
        if ld < rows.max(1) {
            return Err(Error::Bounds(format!(
                "leading dimension {ld} smaller than row count {rows}"
            )));
        }
        if data.len() < ld * cols {
            return Err(Error::Bounds(format!(
                "storage holds {} values, need at least {}",
                data.len(),
                ld * cols
            )));
        }
        Ok(Matrix {
            rows,
            cols,
            ld,
            data,
        })
    }

    /// Builds a matrix from row-major nested rows; convenient in tests.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut m = Matrix::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// Uniform values in `[-1, 1)` from a seeded ChaCha stream.
    pub fn random(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::random_with(rows, cols, &mut rng)
    }

    pub fn random_with<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.set(i, j, rng.random_range(-1.0..1.0));
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn ld(&self) -> usize {
        self.ld
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i + j * self.ld]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i + j * self.ld] = v;
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.ld..j * self.ld + self.rows]
    }

    /// Bitwise comparison of the logical `rows × cols` region (padding ignored).
    pub fn bitwise_eq(&self, other: &Matrix) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && (0..self.cols).all(|j| {
                self.col(j)
                    .iter()
                    .zip(other.col(j))
                    .all(|(a, b)| a.to_bits() == b.to_bits())
            })
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut worst = 0.0f64;
        for j in 0..self.cols {
            for (a, b) in self.col(j).iter().zip(other.col(j)) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    /// Plain-text form: a `rows cols` header, then one line per column.
    ///
    /// Values use Rust's shortest round-trip formatting, so
    /// `from_text(to_text(m))` reproduces every bit.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.rows, self.cols);
        for j in 0..self.cols {
            let mut first = true;
            for &v in self.col(j) {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            reason: "missing header".into(),
        })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: hline + 1,
                reason: format!("bad header: {e}"),
            })?;
        let [rows, cols] = dims[..] else {
            return Err(Error::Parse {
                line: hline + 1,
                reason: "header must be \"rows cols\"".into(),
            });
        };
        let mut m = Matrix::zeros(rows, cols);
        for j in 0..cols {
            let (lno, line) = lines.next().ok_or(Error::Parse {
                line: hline + 2 + j,
                reason: format!("missing column {j}"),
            })?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: lno + 1,
                    reason: e.to_string(),
                })?;
            if vals.len() != rows {
                return Err(Error::Parse {
                    line: lno + 1,
                    reason: format!("expected {rows} values, found {}", vals.len()),
                });
            }
            for (i, v) in vals.into_iter().enumerate() {
                m.set(i, j, v);
            }
        }
        if let Some((lno, _)) = lines.next() {
            return Err(Error::Parse {
                line: lno + 1,
                reason: "trailing data after last column".into(),
            });
        }
        Ok(m)
    }
}

/// Shape and scalars of `C := beta·C + alpha·A·B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GemmProblem {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl GemmProblem {
    pub fn new(m: usize, n: usize, k: usize, alpha: f64, beta: f64) -> Result<Self> {
        let p = GemmProblem {
            m,
            n,
            k,
            alpha,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    /// `C += A·B`.
    pub fn accumulate(m: usize, n: usize, k: usize) -> Result<Self> {
        GemmProblem::new(m, n, k, 1.0, 1.0)
    }

    pub fn square(n: usize) -> Result<Self> {
        GemmProblem::accumulate(n, n, n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.k == 0 {
            return Err(Error::InvalidProblem(format!(
                "dimensions must be positive, got m={} n={} k={}",
                self.m, self.n, self.k
            )));
        }
        Ok(())
    }

    /// Checks `A: m×k`, `B: k×n`, `C: m×n`.
    pub fn check_operands(&self, a: &Matrix, b: &Matrix, c: &Matrix) -> Result<()> {
        self.validate()?;
        let want = [
            ("A", a, self.m, self.k),
            ("B", b, self.k, self.n),
            ("C", c, self.m, self.n),
        ];
        for (name, mat, r, cc) in want {
            if mat.rows() != r || mat.cols() != cc {
                return Err(Error::Conformability(format!(
                    "{name} is {}x{}, expected {r}x{cc} for m={} n={} k={}",
                    mat.rows(),
                    mat.cols(),
                    self.m,
                    self.n,
                    self.k
                )));
            }
        }
        Ok(())
    }

    pub fn flops(&self) -> u64 {
        flop_count(self)
    }
}

/// `2·m·n·k`: one multiply and one add per inner-product step.
pub fn flop_count(problem: &GemmProblem) -> u64 {
    2 * problem.m as u64 * problem.n as u64 * problem.k as u64
}

/// Straightforward triple loop; the oracle every optimized path is checked against.
///
/// Each element is `beta·C(i,j) + alpha·s` where `s` accumulates `A(i,p)·B(p,j)`
/// from zero in ascending `p`, one multiply and one add per step. When
/// `alpha == 0` the product is not formed and `C := beta·C`.
pub fn gemm_reference(problem: &GemmProblem, a: &Matrix, b: &Matrix, c: &mut Matrix) -> Result<()> {
    problem.check_operands(a, b, c)?;
    let GemmProblem {
        m,
        n,
        k,
        alpha,
        beta,
    } = *problem;
    if alpha == 0.0 {
        scale(c, beta);
        return Ok(());
    }
    for j in 0..n {
        for i in 0..m {
            let mut sum = 0.0f64;
            for p in 0..k {
                sum += a.get(i, p) * b.get(p, j);
            }
            let merged = beta * c.get(i, j) + alpha * sum;
            c.set(i, j, merged);
        }
    }
    Ok(())
}

/// `C := beta·C` over the logical region.
pub(crate) fn scale(c: &mut Matrix, beta: f64) {
    let (rows, ld) = (c.rows(), c.ld());
    for col in c.as_mut_slice().chunks_mut(ld) {
        for v in &mut col[..rows] {
            *v *= beta;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_element() {
        let p = GemmProblem::accumulate(1, 1, 1).unwrap();
        let a = Matrix::from_rows(&[&[3.0]]);
        let b = Matrix::from_rows(&[&[4.0]]);
        let mut c = Matrix::from_rows(&[&[2.0]]);
        gemm_reference(&p, &a, &b, &mut c).unwrap();
        assert_eq!(c.get(0, 0), 14.0);
    }

    #[test]
    fn identity_left_operand_adds_b() {
        let n = 7;
        let p = GemmProblem::accumulate(n, 5, n).unwrap();
        let a = Matrix::identity(n);
        let b = Matrix::random(n, 5, 1);
        let c0 = Matrix::random(n, 5, 2);
        let mut c = c0.clone();
        gemm_reference(&p, &a, &b, &mut c).unwrap();
        for j in 0..5 {
            for i in 0..n {
                assert_eq!(c.get(i, j), c0.get(i, j) + b.get(i, j));
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = GemmProblem::accumulate(2, 3, 4).unwrap();
        let a = Matrix::zeros(2, 4);
        let b = Matrix::zeros(3, 3);
        let mut c = Matrix::zeros(2, 3);
        let err = gemm_reference(&p, &a, &b, &mut c).unwrap_err();
        assert!(matches!(err, Error::Conformability(_)), "{err}");
    }

    #[test]
    fn zero_dimension_problem_is_invalid() {
        assert!(GemmProblem::accumulate(0, 1, 1).is_err());
        assert!(GemmProblem::accumulate(1, 1, 0).is_err());
    }

    #[test]
    fn alpha_zero_leaves_c_untouched_even_with_non_finite_operands() {
        let p = GemmProblem::new(3, 3, 3, 0.0, 1.0).unwrap();
        let a = Matrix::from_fn(3, 3, |_, _| f64::INFINITY);
        let b = Matrix::from_fn(3, 3, |_, _| f64::NAN);
        let mut c = Matrix::from_fn(3, 3, |i, j| if i == j { -0.0 } else { (i + j) as f64 });
        let before = c.clone();
        gemm_reference(&p, &a, &b, &mut c).unwrap();
        assert!(c.bitwise_eq(&before));
    }

    #[test]
    fn flop_counts() {
        let f = |m, n, k| flop_count(&GemmProblem::accumulate(m, n, k).unwrap());
        assert_eq!(f(1, 1, 1), 2);
        assert_eq!(f(4096, 4096, 4096), 137_438_953_472);
        assert_eq!(f(2, 3, 4), 48);
    }

    #[test]
    fn leading_dimension_padding_is_ignored() {
        let mut a = Matrix::zeros_with_ld(2, 2, 5);
        a.as_mut_slice().fill(f64::NAN);
        a.set(0, 0, 1.0);
        a.set(1, 0, 0.0);
        a.set(0, 1, 0.0);
        a.set(1, 1, 1.0);
        let b = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let mut c = Matrix::zeros(2, 2);
        let p = GemmProblem::accumulate(2, 2, 2).unwrap();
        gemm_reference(&p, &a, &b, &mut c).unwrap();
        assert!(c.bitwise_eq(&b));
    }

    #[test]
    fn from_col_major_checks_storage() {
        assert!(Matrix::from_col_major(3, 2, 2, vec![0.0; 6]).is_err());
        assert!(Matrix::from_col_major(3, 2, 4, vec![0.0; 7]).is_err());
        assert!(Matrix::from_col_major(3, 2, 4, vec![0.0; 8]).is_ok());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mut m = Matrix::random(4, 3, 9);
        m.set(0, 0, 0.1);
        m.set(1, 0, -0.0);
        m.set(2, 0, 1e-310);
        m.set(3, 0, f64::MAX);
        let text = m.to_text();
        assert!(text.starts_with("4 3\n"));
        assert_eq!(text.lines().count(), 4);
        let back = Matrix::from_text(&text).unwrap();
        assert!(back.bitwise_eq(&m));
    }

    #[test]
    fn text_errors_name_the_line() {
        let err = Matrix::from_text("2 2\n1 2\n3\n").unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                line: 3,
                reason: "expected 2 values, found 1".into()
            }
        );
        assert!(Matrix::from_text("2\n").is_err());
        assert!(Matrix::from_text("1 1\n1\n2\n").is_err());
    }
}
