//! Numerical core for scotch-taped graphs.
//!
//! A graph `G = (U, E)` together with node annotations is encoded as a single
//! factor graph whose incidence matrix is `B = [B⁰, H]`: one factor node per
//! original edge followed by one "external hyperedge" per annotation label.
//! Spectral clustering then works on the monopartite projection `2 B̂ B̂ᵀ`,
//! `B̂ = D_U^{-1/2} B D_V^{-1/2}`.
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. Modules:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`graph`] | graphs, annotation sets, incidence matrices, taping, Laplacian, projection operator |
//! | [`sbm`] | microcanonical stochastic block model sampler and annotation generators |
//! | [`spectral`] | leading eigenpairs, sign bipartition, accuracy, histograms, band edge |
//! | [`perturbation`] | Green's function, Lippmann–Schwinger and Brillouin–Wigner series |
//! | [`reduced`] | group-constant (crude) reduced eigenproblems and Type-1/Type-2 shifts |
//! | [`cavity`] | population dynamics for the eigenvector-element distribution |
//! | [`nmf`] | multiplicative-update NMF on incidence matrices |
//! | [`linalg`] | dense symmetric eigensolver, Lanczos, small dense helpers |
#![no_std]
// `num_traits::Float` supplies f64 math without std. Builds that pull in std
// through dev-dependencies resolve those calls to inherent methods instead.
#![allow(unused_imports)]
// NaN-rejecting `!(x > 0.0)` checks and index loops over coupled arrays are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cavity;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod nmf;
pub mod perturbation;
pub mod reduced;
pub mod rng;
pub mod sbm;
pub mod spectral;

pub use error::{Error, Result};
pub use graph::{tape, AnnotationSet, Graph, IncidenceMatrix, Partition, ScotchTapedGraph};
