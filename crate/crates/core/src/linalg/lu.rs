use alloc::vec::Vec;

use super::DenseMatrix;
use crate::error::{Error, Result};

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: DenseMatrix,
    perm: Vec<usize>,
    /// Smallest |pivot| relative to the largest; a cheap conditioning hint.
    pub pivot_ratio: f64,
}

impl Lu {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Dimension { expected: n, found: a.cols() });
        }
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut pmin = f64::INFINITY;
        let mut pmax = 0.0f64;
        for col in 0..n {
            let mut p = col;
            let mut best = lu[(col, col)].abs();
            for r in (col + 1)..n {
                let v = lu[(r, col)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return Err(Error::IllPosed(alloc::format!("singular matrix at column {col}")));
            }
            pmin = pmin.min(best);
            pmax = pmax.max(best);
            if p != col {
                perm.swap(p, col);
                for j in 0..n {
                    let tmp = lu[(p, j)];
                    lu[(p, j)] = lu[(col, j)];
                    lu[(col, j)] = tmp;
                }
            }
            let piv = lu[(col, col)];
            for r in (col + 1)..n {
                let f = lu[(r, col)] / piv;
                lu[(r, col)] = f;
                if f != 0.0 {
                    for j in (col + 1)..n {
                        lu[(r, j)] -= f * lu[(col, j)];
                    }
                }
            }
        }
        let pivot_ratio = if n == 0 { 1.0 } else { pmin / pmax };
        Ok(Self { lu, perm, pivot_ratio })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }
}
