//! Frobenius-loss NMF `B ≈ W H` of a 0/1 incidence matrix by multiplicative
//! updates, with argmax-of-row clustering of the physical nodes.
//!
//! `W` starts uniform random in `(0, 1]`. `H` starts at `α WᵀB` with the
//! least-squares scale `α`, so every column of `H` depends only on its own
//! column of `B`; permuting the columns of `B` then permutes `H` and leaves `W`
//! and the partition unchanged (up to summation order).

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{IncidenceMatrix, Partition};
use crate::linalg::DenseMatrix;
use crate::rng;

/// Denominator guard of the multiplicative updates.
pub const ZERO_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NmfResult {
    /// `N × K`.
    pub w: DenseMatrix,
    /// `K × M`.
    pub h_factor: DenseMatrix,
    /// `‖B − W H‖²_F` after each iteration.
    pub loss_trace: Vec<f64>,
    pub partition: Partition,
}

impl NmfResult {
    pub fn final_loss(&self) -> f64 {
        self.loss_trace.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// Single NMF run with `iters` multiplicative updates.
pub fn nmf_cluster(b: &IncidenceMatrix, k: usize, iters: usize, seed: u64) -> Result<NmfResult> {
    let n = b.n_rows();
    let m = b.n_cols();
    if k == 0 || k > n {
        return Err(Error::Parameter(alloc::format!("rank {k} invalid for {n} rows")));
    }
    if m == 0 {
        return Err(Error::Parameter("incidence matrix has no columns".into()));
    }
    let mut rng = rng::seeded(seed);
    // Row-major N × K and column-major H (column j at h[j*k..]).
    let mut w: Vec<f64> = (0..n * k).map(|_| 1.0 - rng.random::<f64>()).collect();
    let mut h = wt_b(b, &w, k);
    let wtw = gram_w(&w, n, k);
    let g2: f64 = h.iter().map(|x| x * x).sum();
    let quad = quad_form(&h, &wtw, k);
    let alpha = if quad > 0.0 { g2 / quad } else { 1.0 };
    h.iter_mut().for_each(|x| *x *= alpha);

    let nnz = b.nnz() as f64;
    let mut trace = Vec::with_capacity(iters);
    for _ in 0..iters {
        // H ← H ⊙ WᵀB / (WᵀW H + ε)
        let wtb = wt_b(b, &w, k);
        let wtw = gram_w(&w, n, k);
        let mut col = vec![0.0; k];
        for j in 0..m {
            let hj = &mut h[j * k..(j + 1) * k];
            for a in 0..k {
                col[a] = (0..k).map(|c| wtw[a * k + c] * hj[c]).sum();
            }
            for a in 0..k {
                hj[a] *= wtb[j * k + a] / (col[a] + ZERO_GUARD);
            }
        }
        // W ← W ⊙ B Hᵀ / (W H Hᵀ + ε)
        let bht = b_ht(b, &h, n, k);
        let hht = gram_h(&h, m, k);
        for i in 0..n {
            let wi = &mut w[i * k..(i + 1) * k];
            for a in 0..k {
                col[a] = (0..k).map(|c| wi[c] * hht[c * k + a]).sum();
            }
            for a in 0..k {
                wi[a] *= bht[i * k + a] / (col[a] + ZERO_GUARD);
            }
        }
        trace.push(loss(b, &w, &h, n, k, nnz));
    }

    let labels: Vec<usize> = (0..n)
        .map(|i| {
            let row = &w[i * k..(i + 1) * k];
            let mut best = 0;
            for a in 1..k {
                if row[a] > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    let mut h_factor = DenseMatrix::zeros(k, m);
    for j in 0..m {
        for a in 0..k {
            h_factor[(a, j)] = h[j * k + a];
        }
    }
    let mut w_mat = DenseMatrix::zeros(n, k);
    for i in 0..n {
        for a in 0..k {
            w_mat[(i, a)] = w[i * k + a];
        }
    }
    Ok(NmfResult { w: w_mat, h_factor, loss_trace: trace, partition: Partition::new(labels, k)? })
}

/// Best of `restarts` runs (lowest final loss); restart `t` uses seed
/// `derive_seed(seed, t)`. Ties go to the earliest restart.
pub fn nmf_cluster_restarts(b: &IncidenceMatrix, k: usize, iters: usize, restarts: usize, seed: u64) -> Result<NmfResult> {
    if restarts == 0 {
        return Err(Error::Parameter("at least one restart is required".into()));
    }
    let mut best: Option<NmfResult> = None;
    for t in 0..restarts {
        let res = nmf_cluster(b, k, iters, rng::derive_seed(seed, t as u64))?;
        if best.as_ref().is_none_or(|b| res.final_loss() < b.final_loss()) {
            best = Some(res);
        }
    }
    Ok(best.expect("restarts > 0"))
}

/// `WᵀB`, column-major `K × M`.
fn wt_b(b: &IncidenceMatrix, w: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; b.n_cols() * k];
    for (j, rows) in b.columns().enumerate() {
        let oj = &mut out[j * k..(j + 1) * k];
        for &i in rows {
            for a in 0..k {
                oj[a] += w[i * k + a];
            }
        }
    }
    out
}

/// `BHᵀ`, row-major `N × K`.
fn b_ht(b: &IncidenceMatrix, h: &[f64], n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * k];
    for (j, rows) in b.columns().enumerate() {
        let hj = &h[j * k..(j + 1) * k];
        for &i in rows {
            for a in 0..k {
                out[i * k + a] += hj[a];
            }
        }
    }
    out
}

fn gram_w(w: &[f64], n: usize, k: usize) -> Vec<f64> {
    let mut g = vec![0.0; k * k];
    for i in 0..n {
        let wi = &w[i * k..(i + 1) * k];
        for a in 0..k {
            for c in 0..k {
                g[a * k + c] += wi[a] * wi[c];
            }
        }
    }
    g
}

fn gram_h(h: &[f64], m: usize, k: usize) -> Vec<f64> {
    gram_w(h, m, k)
}

/// `Σ_j h_jᵀ G h_j`.
fn quad_form(h: &[f64], g: &[f64], k: usize) -> f64 {
    h.chunks_exact(k)
        .map(|hj| (0..k).map(|a| hj[a] * (0..k).map(|c| g[a * k + c] * hj[c]).sum::<f64>()).sum::<f64>())
        .sum()
}

/// `‖B‖² − 2 tr(Hᵀ WᵀB) + tr((WᵀW)(HHᵀ))`, using that `B` is 0/1.
fn loss(b: &IncidenceMatrix, w: &[f64], h: &[f64], n: usize, k: usize, nnz: f64) -> f64 {
    let wtb = wt_b(b, w, k);
    let cross: f64 = wtb.iter().zip(h).map(|(x, y)| x * y).sum();
    let wtw = gram_w(w, n, k);
    let hht = gram_h(h, b.n_cols(), k);
    let fit: f64 = wtw.iter().zip(&hht).map(|(x, y)| x * y).sum();
    (nnz - 2.0 * cross + fit).max(0.0)
}
