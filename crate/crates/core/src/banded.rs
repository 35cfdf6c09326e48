//! Banded Cholesky factorization for the interior operator.
//!
//! With the y-major node ordering the 3/5-point stencils (including the
//! periodic wrap in x) stay within a half-bandwidth of `nx`, so the band
//! holds all the fill and the factor is computed once per assembly.

use sprs::CsMatView;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    /// Row `i` stores columns `i - bw ..= i` at offsets `0 ..= bw`.
    lower: Vec<f64>,
}

impl BandedCholesky {
    /// Factor the symmetric matrix `a`, reading only its lower triangle.
    pub fn factor(a: CsMatView<'_, f64>, bw: usize) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::SolveFailure("matrix is not square".into()));
        }
        let w = bw + 1;
        let mut lower = vec![0.0; n * w];
        for (row, vec) in a.outer_iterator().enumerate() {
            for (col, &v) in vec.iter() {
                if col > row {
                    continue;
                }
                if row - col > bw {
                    return Err(Error::SolveFailure(format!(
                        "entry ({row}, {col}) lies outside the band {bw}"
                    )));
                }
                lower[row * w + (col + bw - row)] += v;
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = lower[i * w + (j + bw - i)];
                for k in k0..j {
                    s -= lower[i * w + (k + bw - i)] * lower[j * w + (k + bw - j)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::SolveFailure(format!(
                            "matrix not positive definite at pivot {i} ({s:e})"
                        )));
                    }
                    lower[i * w + bw] = s.sqrt();
                } else {
                    lower[i * w + (j + bw - i)] = s / lower[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, lower })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let k0 = i.saturating_sub(bw);
            let row = &self.lower[i * w..(i + 1) * w];
            let mut s = b[i];
            for k in k0..i {
                s -= row[k + bw - i] * b[k];
            }
            b[i] = s / row[bw];
        }
        for i in (0..n).rev() {
            let k1 = (i + bw).min(n - 1);
            let mut s = b[i];
            for k in i + 1..=k1 {
                s -= self.lower[k * w + (i + bw - k)] * b[k];
            }
            b[i] = s / self.lower[i * w + bw];
        }
    }
}
