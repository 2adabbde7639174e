//! Formal solutions of the taped eigenproblem around the untaped one.
//!
//! Writing `M = (2 − λ⁰_k) D⁰ − L`, the taped generalized equation becomes
//! `M φ = H̃ φ` with `H̃ = λ_k Dʰ + Δλ_k D⁰ − Σ_r (2/d_r) h hᵀ`. `M` is
//! singular along the untaped eigenvector `ϕ_k`, so the Green's function is
//! taken on the `D⁰`-orthogonal complement of `ϕ_k`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::graph::{laplacian, projection_operator, Graph, ScotchTapedGraph, DENSE_THRESHOLD};
use crate::linalg::{self, symmetric_eigen, DenseMatrix, Lu, SymmetricOperator};

/// Pseudo-inverse of `(2 − λ⁰_k) D⁰ − L` on the complement of `ϕ_k`,
/// via the bordered system `[M, D⁰ϕ; ϕᵀD⁰, 0]`.
#[derive(Debug, Clone)]
pub struct GreensFunction {
    lu: Lu,
    varphi: Vec<f64>,
    d0_varphi: Vec<f64>,
    varphi_d0_norm2: f64,
    d0: Vec<f64>,
    m: DenseMatrix,
}

impl GreensFunction {
    pub fn new(graph: &Graph, lambda0_k: f64, varphi_k: &[f64]) -> Result<Self> {
        let n = graph.n_nodes();
        if varphi_k.len() != n {
            return Err(Error::Dimension { expected: n, found: varphi_k.len() });
        }
        if n > DENSE_THRESHOLD {
            return Err(Error::TooLargeForDense { dim: n, limit: DENSE_THRESHOLD });
        }
        let d0: Vec<f64> = graph.degrees().into_iter().map(|d| d as f64).collect();
        let lap = laplacian(graph).to_dense()?;
        let mut m = DenseMatrix::from_diagonal(&d0.iter().map(|d| (2.0 - lambda0_k) * d).collect::<Vec<_>>());
        m = m.sub(&lap);

        let kernel = linalg::norm(&m.mul_vec(varphi_k)) / linalg::norm(varphi_k).max(1e-300);
        if !(kernel <= 1e-6) {
            return Err(Error::IllPosed(format!(
                "varphi is not a null vector of (2 - lambda0) D0 - L (residual {kernel:e})"
            )));
        }
        let d0_varphi: Vec<f64> = d0.iter().zip(varphi_k).map(|(d, v)| d * v).collect();
        let mut bordered = DenseMatrix::zeros(n + 1, n + 1);
        for i in 0..n {
            bordered.row_mut(i)[..n].copy_from_slice(m.row(i));
            bordered[(i, n)] = d0_varphi[i];
            bordered[(n, i)] = d0_varphi[i];
        }
        let lu = Lu::factor(&bordered)?;
        let varphi_d0_norm2 = linalg::dot(varphi_k, &d0_varphi);
        Ok(Self { lu, varphi: varphi_k.to_vec(), d0_varphi, varphi_d0_norm2, d0, m })
    }

    /// `P y = y − D⁰ϕ ⟨ϕ, y⟩ / ⟨ϕ, D⁰ϕ⟩`.
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        let t = linalg::dot(&self.varphi, y) / self.varphi_d0_norm2;
        y.iter().zip(&self.d0_varphi).map(|(a, b)| a - t * b).collect()
    }

    /// `x` with `M x = P y` and `⟨ϕ, D⁰ x⟩ = 0`.
    pub fn apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        let n = self.varphi.len();
        let py = self.project(y);
        let mut rhs = py.clone();
        rhs.push(0.0);
        let mut x = self.lu.solve(&rhs);
        let mu = x.pop().unwrap_or(0.0);
        let scale = linalg::norm(&py).max(linalg::norm(&x)).max(1e-300);
        if !(mu.abs() <= 1e-6 * scale) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::IllPosed(format!("singular-direction multiplier {mu:e} for a {n}-node system")));
        }
        Ok(x)
    }

    /// `G D⁰ y`: the convention under which `ϕ_j ↦ ϕ_j / (λ⁰_j − λ⁰_k)`.
    pub fn apply_weighted(&self, y: &[f64]) -> Result<Vec<f64>> {
        let d0y: Vec<f64> = y.iter().zip(&self.d0).map(|(a, d)| a * d).collect();
        self.apply(&d0y)
    }

    /// `M x`, for checking the pseudo-inverse identity.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.m.mul_vec(x)
    }
}

pub fn greens_apply(graph: &Graph, lambda0_k: f64, varphi_k: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    GreensFunction::new(graph, lambda0_k, varphi_k)?.apply(rhs)
}

/// `H̃ x = λ_k Dʰ x + Δλ_k D⁰ x − Σ_r (2/d_r) h^r ⟨h^r, x⟩`.
#[derive(Debug, Clone)]
pub struct PerturbationOperator {
    pub lambda_k: f64,
    pub delta_lambda: f64,
    labels: Vec<Vec<usize>>,
    label_degrees: Vec<f64>,
    d_uh: Vec<f64>,
    d_u0: Vec<f64>,
}

impl PerturbationOperator {
    pub fn new(stg: &ScotchTapedGraph, lambda_k: f64, lambda0_k: f64) -> Self {
        let m0 = stg.n_edges();
        Self {
            lambda_k,
            delta_lambda: lambda_k - lambda0_k,
            labels: stg.annotations.labels().to_vec(),
            label_degrees: stg.d_v[m0..].to_vec(),
            d_uh: stg.d_uh.clone(),
            d_u0: stg.d_u0.clone(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = (0..x.len())
            .map(|i| (self.lambda_k * self.d_uh[i] + self.delta_lambda * self.d_u0[i]) * x[i])
            .collect();
        for (set, &d) in self.labels.iter().zip(&self.label_degrees) {
            let s: f64 = set.iter().map(|&i| x[i]).sum::<f64>() * 2.0 / d;
            for &i in set {
                y[i] -= s;
            }
        }
        y
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.d_u0.len();
        let mut m = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.apply(&e);
            for i in 0..n {
                m[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct SeriesResult {
    pub order: usize,
    /// `approximations[p]` is the partial sum through order `p`.
    pub approximations: Vec<Vec<f64>>,
    /// Eigen-residual of each partial sum divided by its norm.
    pub residuals: Vec<f64>,
    pub norms: Vec<f64>,
    pub lambda_k: f64,
    pub lambda0_k: f64,
}

/// Exact eigenpairs of the taped and untaped operators used as series inputs.
struct Inputs {
    lambda_k: f64,
    lambda0_k: f64,
    /// Unit eigenvectors of `H′₀` (untaped `2B̂₀B̂₀ᵀ`), descending.
    raw_values: Vec<f64>,
    raw_vectors: Vec<Vec<f64>>,
}

fn inputs(stg: &ScotchTapedGraph, k: usize) -> Result<Inputs> {
    let n = stg.n_nodes();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("eigen index k must lie in 1..={n}, got {k}")));
    }
    let raw = stg.untaped()?;
    let raw_eig = symmetric_eigen(&projection_operator(&raw)?.to_dense()?)?;
    let taped_eig = symmetric_eigen(&projection_operator(stg)?.to_dense()?)?;
    let lambda0_k = raw_eig.values[k - 1];
    let tol = 1e-10;
    let gap = raw_eig
        .values
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != k - 1)
        .map(|(_, v)| (v - lambda0_k).abs())
        .fold(f64::INFINITY, f64::min);
    if gap < 10.0 * tol {
        return Err(Error::Unsupported(format!("untaped eigenvalue {k} is degenerate (gap {gap:e})")));
    }
    Ok(Inputs {
        lambda_k: taped_eig.values[k - 1],
        lambda0_k,
        raw_values: raw_eig.values,
        raw_vectors: raw_eig.vectors,
    })
}

/// Partial sums of `Σ_q (G₀ₖ H̃)^q ϕ_k` in the unprimed convention.
pub fn lippmann_schwinger_series(stg: &ScotchTapedGraph, k: usize, order: usize) -> Result<SeriesResult> {
    let inp = inputs(stg, k)?;
    lippmann_schwinger_with(stg, k, order, inp.lambda_k, &inp)
}

fn lippmann_schwinger_with(stg: &ScotchTapedGraph, k: usize, order: usize, lambda_k: f64, inp: &Inputs) -> Result<SeriesResult> {
    let inv_sqrt_d0: Vec<f64> = stg.d_u0.iter().map(|d| 1.0 / d.sqrt()).collect();
    let varphi: Vec<f64> = inp.raw_vectors[k - 1].iter().zip(&inv_sqrt_d0).map(|(a, b)| a * b).collect();
    let green = GreensFunction::new(&stg.graph, inp.lambda0_k, &varphi)?;
    let pert = PerturbationOperator::new(stg, lambda_k, inp.lambda0_k);

    let mut approximations = vec![varphi.clone()];
    for _ in 0..order {
        let prev = approximations.last().expect("non-empty");
        let mut next = green.apply(&pert.apply(prev))?;
        linalg::axpy(1.0, &varphi, &mut next);
        approximations.push(next);
    }
    let norms: Vec<f64> = approximations.iter().map(|v| linalg::norm(v)).collect();
    let residuals = approximations
        .iter()
        .zip(&norms)
        .map(|(v, nrm)| stg.generalized_residual(lambda_k, v) / nrm.max(1e-300))
        .collect();
    Ok(SeriesResult { order, approximations, residuals, norms, lambda_k, lambda0_k: inp.lambda0_k })
}

/// Partial sums of `Σ_q [(λ_k − H′₀)⁻¹ Θ H̃′]^q ϕ′_k` in the primed convention.
pub fn brillouin_wigner_series(stg: &ScotchTapedGraph, k: usize, order: usize) -> Result<SeriesResult> {
    let inp = inputs(stg, k)?;
    let n = stg.n_nodes();
    let lambda_k = inp.lambda_k;
    let mut min_gap = f64::INFINITY;
    for (j, &v) in inp.raw_values.iter().enumerate() {
        if j != k - 1 {
            min_gap = min_gap.min((lambda_k - v).abs());
        }
    }
    if min_gap < 1e-10 {
        return Err(Error::ResolventSingular { lambda: lambda_k, gap: min_gap });
    }
    let taped_op = projection_operator(stg)?;
    let raw = stg.untaped()?;
    let h0 = projection_operator(&raw)?.to_dense()?;
    let htilde = taped_op.to_dense()?.sub(&h0);
    let varphi_p = inp.raw_vectors[k - 1].clone();

    // (λ_k − H′₀)⁻¹ Θ via the eigenbasis of H′₀; the k-th direction is dropped.
    let resolvent = |y: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (j, (u, &mu)) in inp.raw_vectors.iter().zip(&inp.raw_values).enumerate() {
            if j == k - 1 {
                continue;
            }
            let c = linalg::dot(u, y) / (lambda_k - mu);
            linalg::axpy(c, u, &mut out);
        }
        out
    };

    let mut approximations = vec![varphi_p.clone()];
    for _ in 0..order {
        let prev = approximations.last().expect("non-empty");
        let mut next = resolvent(&htilde.mul_vec(prev));
        linalg::axpy(1.0, &varphi_p, &mut next);
        approximations.push(next);
    }
    let norms: Vec<f64> = approximations.iter().map(|v| linalg::norm(v)).collect();
    let mut w = vec![0.0; n];
    let residuals = approximations
        .iter()
        .zip(&norms)
        .map(|(v, nrm)| {
            taped_op.apply(v, &mut w);
            linalg::axpy(-lambda_k, v, &mut w);
            linalg::norm(&w) / nrm.max(1e-300)
        })
        .collect();
    Ok(SeriesResult { order, approximations, residuals, norms, lambda_k, lambda0_k: inp.lambda0_k })
}

/// `Θ = I − ϕ′ϕ′ᵀ` applied to `y`.
pub fn theta_project(varphi_primed: &[f64], y: &[f64]) -> Vec<f64> {
    let nn = linalg::dot(varphi_primed, varphi_primed);
    let t = linalg::dot(varphi_primed, y) / nn;
    y.iter().zip(varphi_primed).map(|(a, b)| a - t * b).collect()
}

/// LS series with a caller-supplied `λ_k` (e.g. `λ⁰_k` for the unperturbed limit).
pub fn lippmann_schwinger_series_at(stg: &ScotchTapedGraph, k: usize, order: usize, lambda_k: f64) -> Result<SeriesResult> {
    let inp = inputs(stg, k)?;
    lippmann_schwinger_with(stg, k, order, lambda_k, &inp)
}
