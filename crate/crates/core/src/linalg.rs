//! Dense lower-triangular Cholesky factorization, enough for field simulation.

use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods whenever std is linked
use num_traits::Float;

use crate::{Error, Result};

/// `L` with `A = L Lᵀ`, stored as full row-major `n × n` (upper part zero).
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn dot4(rows: [&[f64]; 4], b: &[f64]) -> [f64; 4] {
    let mut acc = [[0.0f64; 2]; 4];
    let len = b.len();
    let pairs = len / 2;
    for c in 0..pairs {
        let k = 2 * c;
        let (b0, b1) = (b[k], b[k + 1]);
        for r in 0..4 {
            acc[r][0] += rows[r][k] * b0;
            acc[r][1] += rows[r][k + 1] * b1;
        }
    }
    let mut out = [0.0; 4];
    for r in 0..4 {
        out[r] = acc[r][0] + acc[r][1];
        for k in 2 * pairs..len {
            out[r] += rows[r][k] * b[k];
        }
    }
    out
}

impl Cholesky {
    /// Factor the symmetric positive definite row-major matrix `a` (only the
    /// lower triangle is read).
    pub fn factor(mut a: Vec<f64>, n: usize) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::ShapeMismatch {
                expected: n * n,
                got: a.len(),
            });
        }
        // Rows are finished four at a time so that each earlier row is loaded
        // once per block.
        let mut i0 = 0;
        while i0 < n {
            let nb = (n - i0).min(4);
            let (done, rest) = a.split_at_mut(i0 * n);
            for j in 0..i0 {
                let row_j = &done[j * n..j * n + j + 1];
                let d = row_j[j];
                if nb == 4 {
                    let (r0, t) = rest.split_at_mut(n);
                    let (r1, t) = t.split_at_mut(n);
                    let (r2, r3) = t.split_at_mut(n);
                    let s = dot4([&r0[..j], &r1[..j], &r2[..j], &r3[..j]], &row_j[..j]);
                    r0[j] = (r0[j] - s[0]) / d;
                    r1[j] = (r1[j] - s[1]) / d;
                    r2[j] = (r2[j] - s[2]) / d;
                    r3[j] = (r3[j] - s[3]) / d;
                } else {
                    for b in 0..nb {
                        let row = &mut rest[b * n..(b + 1) * n];
                        row[j] = (row[j] - dot(&row[..j], &row_j[..j])) / d;
                    }
                }
            }
            for b in 0..nb {
                let i = i0 + b;
                let (blk_done, blk_rest) = rest.split_at_mut(b * n);
                let row_i = &mut blk_rest[..n];
                for j in i0..i {
                    let row_j = &blk_done[(j - i0) * n..(j - i0) * n + j + 1];
                    row_i[j] = (row_i[j] - dot(&row_i[..j], &row_j[..j])) / row_j[j];
                }
                let d = row_i[i] - dot(&row_i[..i], &row_i[..i]);
                if !(d > 0.0) || !d.is_finite() {
                    return Err(Error::NotPositiveDefinite { pivot: i });
                }
                row_i[i] = d.sqrt();
                for v in &mut row_i[i + 1..] {
                    *v = 0.0;
                }
            }
            i0 += nb;
        }
        Ok(Self { n, lower: a })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.n + j]
    }

    /// `out = L z`.
    pub fn mul_vec(&self, z: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            out[i] = dot(&self.lower[i * n..i * n + i + 1], &z[..i + 1]);
        }
    }
}
