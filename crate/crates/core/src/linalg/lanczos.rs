use alloc::vec;
use alloc::vec::Vec;
use rand::Rng as _;

use super::{axpy, dot, normalize, symmetric_eigen, DenseMatrix, SymmetricOperator};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LanczosOptions {
    /// Residual tolerance `|A v - theta v|` for a Ritz pair to count as converged.
    pub tol: f64,
    /// Largest Krylov basis kept before a thick restart.
    pub max_basis: usize,
    pub max_restarts: usize,
    /// Seed for the random start vector.
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_basis: 160, max_restarts: 400, seed: 0x5eed }
    }
}

/// Output of [`lanczos_largest`]: eigenpairs in descending order plus their
/// explicit residual norms.
#[derive(Debug, Clone)]
pub struct LanczosResult {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub matvecs: usize,
}

/// Largest `k` eigenpairs of a symmetric operator by thick-restart Lanczos
/// with full reorthogonalization.
///
/// `locked` vectors (orthonormal) are projected out of the search space, so
/// the returned pairs are the largest of `A` restricted to their complement.
pub fn lanczos_largest<A: SymmetricOperator + ?Sized>(
    op: &A,
    k: usize,
    locked: &[Vec<f64>],
    opts: &LanczosOptions,
) -> Result<LanczosResult> {
    let n = op.dim();
    let free = n.saturating_sub(locked.len());
    if k == 0 || k > free {
        return Err(Error::Parameter(alloc::format!(
            "requested {k} eigenpairs from a {free}-dimensional space"
        )));
    }
    let max_basis = opts.max_basis.max(2 * k + 8).min(free);

    let mut rng = crate::rng::seeded(opts.seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_basis + 1);
    let mut start: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    orthogonalize(&mut start, locked, &[]);
    if normalize(&mut start) == 0.0 {
        return Err(Error::Parameter("start vector lies in the locked span".into()));
    }
    basis.push(start);

    // Projected matrix T = V^T A V, kept dense so that thick restarts are plain.
    let mut t = DenseMatrix::zeros(max_basis, max_basis);
    let mut w = vec![0.0; n];
    let mut matvecs = 0usize;
    let mut best = f64::INFINITY;

    for _restart in 0..=opts.max_restarts {
        // Extend the basis to max_basis vectors.
        let mut j = basis.len() - 1;
        loop {
            op.apply(&basis[j], &mut w);
            matvecs += 1;
            for (i, v) in basis.iter().enumerate() {
                let h = dot(v, &w);
                t[(i, j)] = h;
                t[(j, i)] = h;
            }
            // Two passes of Gram-Schmidt against locked and current basis.
            orthogonalize(&mut w, locked, &basis);
            orthogonalize(&mut w, locked, &basis);
            let beta = normalize(&mut w);
            if j + 1 == max_basis || beta < 1e-14 {
                // Either full, or an invariant subspace was found.
                if beta < 1e-14 && j + 1 < max_basis {
                    // Try to continue with a fresh random direction.
                    let mut fresh: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                    orthogonalize(&mut fresh, locked, &basis);
                    orthogonalize(&mut fresh, locked, &basis);
                    if normalize(&mut fresh) > 1e-10 {
                        basis.push(fresh);
                        j += 1;
                        continue;
                    }
                }
                if beta >= 1e-14 {
                    basis.push(core::mem::take(&mut w));
                    w = vec![0.0; n];
                }
                break;
            }
            basis.push(core::mem::take(&mut w));
            w = vec![0.0; n];
            j += 1;
        }

        // Rayleigh-Ritz on the first m basis vectors; basis[m] (if present)
        // is the residual direction.
        let m = basis.len().min(max_basis);
        let mut tm = DenseMatrix::zeros(m, m);
        for i in 0..m {
            for l in 0..m {
                tm[(i, l)] = t[(i, l)];
            }
        }
        let eig = symmetric_eigen(&tm)?;
        let ritz: Vec<Vec<f64>> = eig
            .vectors
            .iter()
            .map(|s| combine(&basis[..m], s, n))
            .collect();

        // Explicit residuals of the top k Ritz pairs.
        let mut residuals = Vec::with_capacity(k);
        for (theta, y) in eig.values.iter().zip(&ritz).take(k) {
            op.apply(y, &mut w);
            matvecs += 1;
            axpy(-theta, y, &mut w);
            residuals.push(super::norm(&w));
        }
        let worst = residuals.iter().cloned().fold(0.0, f64::max);
        best = best.min(worst);
        let exhausted = basis.len() <= m;
        if worst <= opts.tol || (exhausted && m == free) {
            return Ok(LanczosResult {
                values: eig.values[..k].to_vec(),
                vectors: ritz.into_iter().take(k).collect(),
                residuals,
                matvecs,
            });
        }

        // Thick restart: keep the leading `keep` Ritz vectors plus the residual direction.
        let keep = (m / 2).max(k + 4).min(m - 1);
        let mut new_basis: Vec<Vec<f64>> = ritz.into_iter().take(keep).collect();
        t = DenseMatrix::zeros(max_basis, max_basis);
        for (i, v) in eig.values.iter().take(keep).enumerate() {
            t[(i, i)] = *v;
        }
        let tail = if exhausted {
            let mut fresh: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            orthogonalize(&mut fresh, locked, &new_basis);
            orthogonalize(&mut fresh, locked, &new_basis);
            normalize(&mut fresh);
            fresh
        } else {
            let mut r = basis.pop().unwrap_or_default();
            orthogonalize(&mut r, locked, &new_basis);
            normalize(&mut r);
            r
        };
        new_basis.push(tail);
        basis = new_basis;
    }
    Err(Error::Convergence { best_residual: best })
}

fn orthogonalize(v: &mut [f64], locked: &[Vec<f64>], basis: &[Vec<f64>]) {
    for q in locked.iter().chain(basis) {
        let h = dot(q, v);
        axpy(-h, q, v);
    }
}

fn combine(basis: &[Vec<f64>], coeffs: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (v, &c) in basis.iter().zip(coeffs) {
        if c != 0.0 {
            axpy(c, v, &mut out);
        }
    }
    let nrm = super::norm(&out);
    if nrm > 0.0 && (nrm - 1.0).abs() > 1e-14 {
        out.iter_mut().for_each(|x| *x /= nrm);
    }
    out
}
