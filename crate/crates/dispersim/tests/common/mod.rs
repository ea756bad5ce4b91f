//! Shared oracles for the integration tests: a dense Gaussian-elimination
//! solver kept deliberately independent of the crate's sparse LU, plus a tiny
//! deterministic RNG so "random" inputs are reproducible across runs.

// Each integration test binary compiles this module but uses only a subset.
#![allow(dead_code)]

use dispersim::sparse::CsrMatrix;

/// Dense Gaussian elimination with partial pivoting. Returns `None` when a
/// pivot column is numerically empty.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    assert!(a.len() == n && a.iter().all(|r| r.len() == n), "square system expected");
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for k in col..n {
                    a[row][k] -= factor * a[col][k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Expands a CSR matrix into dense rows.
pub fn csr_to_dense(m: &CsrMatrix) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; m.n_cols()]; m.n_rows()];
    for (r, row) in a.iter_mut().enumerate() {
        let (cols, vals) = m.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            row[c] = v;
        }
    }
    a
}

/// SplitMix64: tiny deterministic generator for reproducible test data.
pub struct SplitMix64(pub u64);

impl SplitMix64 {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [-1, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 52) as f64 * 2.0 - 1.0
    }
}
