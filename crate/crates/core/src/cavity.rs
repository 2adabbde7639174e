//! Population dynamics for the distribution of second-eigenvector elements.
//!
//! Each physical node in group σ is described by a Gaussian with precision
//! `A` and mean `H`; the distribution `q_σ(A, H)` is represented by a sample
//! population and updated with
//!
//! ```text
//! A = λ (d + s) − Σ_ℓ (λ + A_ℓ) / (λ + A_ℓ − 1)
//! H = [ Σ_r h^r m̂_r + Σ_ℓ A_ℓ H_ℓ / (λ + A_ℓ − 1) ] / A
//! ```
//!
//! where `d ~ Poisson(c_σ)`, the `d` neighbours are drawn from group σ' with
//! probability `f_σσ'`, `h` is an annotation pattern with `s = Σ_r h^r`, and
//! `m̂_r = 2 N m_r / d_r`. The Lagrange multiplier `γ` is fixed at 0.
//!
//! The `H` update is linear in `(H, m)`, so `λ` is located by the per-sweep
//! growth of the degree-weighted norm `Σ_σ (N_σ/N) ⟨(d + s) H²⟩_σ`: the
//! population decays for `λ` above the eigenvalue and grows below it (or
//! inside the spectral band, where the `A` recursion itself breaks down).
//!
//! The module also contains the effective-medium closed form for `a` and the
//! small-fluctuation (`A → ∞`) equation for the group means `⟨H⟩_σ`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;
use rand::Rng as _;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::graph::{AnnotationSet, Partition};
use crate::linalg::DenseMatrix;
use crate::reduced::ReducedModel;
use crate::rng::{self, Rng};
use crate::sbm::BlockSpec;

/// Members whose updated precision falls below this are redrawn.
pub const EPS_A: f64 = 1e-9;
/// A sweep whose rejection rate exceeds this fails with [`Error::Instability`].
pub const MAX_REJECTION_RATE: f64 = 0.1;
const MAX_REDRAWS: usize = 64;

/// One annotation pattern `h` (the labels it switches on) and its probability.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProfileEntry {
    pub labels: Vec<usize>,
    pub prob: f64,
}

/// Per-group distribution of annotation patterns, label degrees `d_r` and `N`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnnotationProfileDist {
    pub groups: Vec<Vec<ProfileEntry>>,
    pub label_degrees: Vec<f64>,
    pub n_nodes: f64,
}

impl AnnotationProfileDist {
    pub fn new(groups: Vec<Vec<ProfileEntry>>, label_degrees: Vec<f64>, n_nodes: f64) -> Result<Self> {
        let mut groups = groups;
        let r = label_degrees.len();
        if !(n_nodes > 0.0) {
            return Err(Error::Parameter(format!("profile needs N > 0, got {n_nodes}")));
        }
        if let Some(d) = label_degrees.iter().find(|&&d| !(d > 0.0)) {
            return Err(Error::Parameter(format!("label degree {d} is not positive")));
        }
        for (g, entries) in groups.iter_mut().enumerate() {
            if entries.is_empty() {
                return Err(Error::Parameter(format!("group {g} has no annotation patterns")));
            }
            for e in entries.iter_mut() {
                e.labels.sort_unstable();
                if e.labels.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::Parameter(format!("group {g}: repeated label in a pattern")));
                }
                if e.labels.iter().any(|&l| l >= r) {
                    return Err(Error::Parameter(format!("group {g}: label index out of range (R = {r})")));
                }
                if !(e.prob >= 0.0) {
                    return Err(Error::Parameter(format!("group {g}: negative pattern probability")));
                }
            }
            let total: f64 = entries.iter().map(|e| e.prob).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Parameter(format!("group {g}: probabilities sum to {total}")));
            }
            let mut sorted: Vec<&Vec<usize>> = entries.iter().map(|e| &e.labels).collect();
            sorted.sort();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Parameter(format!("group {g}: duplicate patterns")));
            }
        }
        Ok(Self { groups, label_degrees, n_nodes })
    }

    /// Exact empirical pattern distribution of a sampled annotation set.
    pub fn from_annotations(annotations: &AnnotationSet, partition: &Partition) -> Result<Self> {
        let n = partition.n_nodes();
        if annotations.n_nodes() != n {
            return Err(Error::Dimension { expected: n, found: annotations.n_nodes() });
        }
        let mut per_node: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (r, set) in annotations.labels().iter().enumerate() {
            for &i in set {
                per_node[i].push(r);
            }
        }
        let k = partition.n_groups();
        let sizes = partition.group_sizes();
        let mut counts: Vec<Vec<(Vec<usize>, usize)>> = vec![Vec::new(); k];
        for (i, labels) in per_node.into_iter().enumerate() {
            let g = partition.labels()[i];
            match counts[g].binary_search_by(|(p, _)| p.cmp(&labels)) {
                Ok(pos) => counts[g][pos].1 += 1,
                Err(pos) => counts[g].insert(pos, (labels, 1)),
            }
        }
        let groups = counts
            .into_iter()
            .enumerate()
            .map(|(g, c)| {
                c.into_iter()
                    .map(|(labels, cnt)| ProfileEntry { labels, prob: cnt as f64 / sizes[g] as f64 })
                    .collect()
            })
            .collect();
        let degrees = annotations.labels().iter().map(|s| s.len() as f64).collect();
        Self::new(groups, degrees, n as f64)
    }

    /// No annotations at all.
    pub fn none(k_groups: usize, n_nodes: f64) -> Self {
        let groups = (0..k_groups).map(|_| vec![ProfileEntry { labels: Vec::new(), prob: 1.0 }]).collect();
        Self { groups, label_degrees: Vec::new(), n_nodes }
    }

    /// `r` labels, each attached to every node.
    pub fn uniform(k_groups: usize, r: usize, n_nodes: f64) -> Self {
        let all: Vec<usize> = (0..r).collect();
        let groups = (0..k_groups).map(|_| vec![ProfileEntry { labels: all.clone(), prob: 1.0 }]).collect();
        Self { groups, label_degrees: vec![n_nodes; r], n_nodes }
    }

    /// `r_per_group` labels per group, each attached to all members of that group.
    pub fn group_aligned(group_sizes: &[f64], r_per_group: usize) -> Self {
        let n: f64 = group_sizes.iter().sum();
        let groups = (0..group_sizes.len())
            .map(|g| {
                let labels = (g * r_per_group..(g + 1) * r_per_group).collect();
                vec![ProfileEntry { labels, prob: 1.0 }]
            })
            .collect();
        let degrees = group_sizes.iter().flat_map(|&s| core::iter::repeat_n(s, r_per_group)).collect();
        Self { groups, label_degrees: degrees, n_nodes: n }
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_labels(&self) -> usize {
        self.label_degrees.len()
    }

    /// `s̄_σ = E_σ[Σ_r h^r]`.
    pub fn mean_load(&self, group: usize) -> f64 {
        self.groups[group].iter().map(|e| e.prob * e.labels.len() as f64).sum()
    }
}

/// Block-level parameters the cavity equations need.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CavityModel {
    /// Row-stochastic neighbour-group distribution `f_σσ'`.
    pub f: Vec<Vec<f64>>,
    pub c_sigma: Vec<f64>,
    pub group_sizes: Vec<f64>,
}

impl CavityModel {
    pub fn from_spec(spec: &BlockSpec) -> Result<Self> {
        spec.validate()?;
        let k = spec.n_groups();
        let c = spec.mean_degrees();
        let sizes: Vec<f64> = spec.group_sizes.iter().map(|&n| n as f64).collect();
        let mut f = vec![vec![0.0; k]; k];
        for a in 0..k {
            if c[a] == 0.0 {
                continue;
            }
            for b in 0..k {
                let mult = if a == b { 2.0 } else { 1.0 };
                f[a][b] = mult * spec.edge_counts[a][b] as f64 / (c[a] * sizes[a]);
            }
        }
        Ok(Self { f, c_sigma: c, group_sizes: sizes })
    }

    pub fn from_reduced(model: &ReducedModel) -> Self {
        Self { f: model.f.clone(), c_sigma: model.c_sigma.clone(), group_sizes: model.group_sizes.clone() }
    }

    pub fn n_groups(&self) -> usize {
        self.c_sigma.len()
    }

    pub fn n_nodes(&self) -> f64 {
        self.group_sizes.iter().sum()
    }
}

/// One population sample: the Gaussian parameters plus the degree and
/// pattern it was drawn with (needed for the field and norm estimates).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationMember {
    pub precision_a: f64,
    pub mean_h: f64,
    pub degree: u32,
    /// Index into the group's pattern list of the profile.
    pub pattern: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Init {
    /// `H = +1` in even groups and `−1` in odd groups.
    Polarized,
    /// `H` standard normal, independent of the group.
    Symmetric,
}

/// Result of one trial `λ` during [`solve_lambda`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaTrial {
    pub lambda: f64,
    /// Mean per-sweep growth of the norm; `None` if the population was unstable.
    pub growth: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepStats {
    pub rejected: usize,
    pub members: usize,
}

impl SweepStats {
    pub fn rate(&self) -> f64 {
        if self.members == 0 {
            0.0
        } else {
            self.rejected as f64 / self.members as f64
        }
    }
}

#[derive(Debug, Clone)]
struct Sampler {
    pattern_cdf: Vec<Vec<f64>>,
    pattern_fields: Vec<Vec<f64>>,
    neighbour_cdf: Vec<Vec<f64>>,
    poisson: Vec<Option<Poisson<f64>>>,
}

fn cdf(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = f64::INFINITY;
    }
    out
}

fn pick(cdf: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Population state for fixed `λ`.
#[derive(Debug, Clone)]
pub struct CavityState {
    pub populations: Vec<Vec<PopulationMember>>,
    pub lambda: f64,
    /// Structurally zero.
    pub gamma: f64,
    pub m: Vec<f64>,
    pub m_hat: Vec<f64>,
    pub model: CavityModel,
    pub profile: AnnotationProfileDist,
    /// Damping `θ` of the field update.
    pub damping: f64,
    /// Set by [`solve_lambda`] when no polarized solution was found.
    pub undetectable: bool,
    /// Per-sweep norm growth at `lambda` measured by the last solve.
    pub growth: f64,
    pub trials: Vec<LambdaTrial>,
    pub rejections: usize,
    sampler: Sampler,
}

impl CavityState {
    pub fn new(
        model: CavityModel,
        profile: AnnotationProfileDist,
        population: usize,
        lambda: f64,
        init: Init,
        seed: u64,
    ) -> Result<Self> {
        let k = model.n_groups();
        if profile.n_groups() != k {
            return Err(Error::Dimension { expected: k, found: profile.n_groups() });
        }
        if population == 0 {
            return Err(Error::Parameter("population size must be positive".into()));
        }
        if model.f.len() != k || model.f.iter().any(|row| row.len() != k) {
            return Err(Error::Parameter("f must be K x K".into()));
        }
        let pattern_cdf = profile.groups.iter().map(|g| cdf(g.iter().map(|e| e.prob))).collect();
        let neighbour_cdf = model.f.iter().map(|row| cdf(row.iter().cloned())).collect();
        let poisson = model
            .c_sigma
            .iter()
            .map(|&c| if c > 0.0 { Poisson::new(c).ok() } else { None })
            .collect();
        let r = profile.n_labels();
        let sampler = Sampler {
            pattern_cdf,
            pattern_fields: profile.groups.iter().map(|g| vec![0.0; g.len()]).collect(),
            neighbour_cdf,
            poisson,
        };
        let mut state = Self {
            populations: Vec::new(),
            lambda,
            gamma: 0.0,
            m: vec![0.0; r],
            m_hat: vec![0.0; r],
            model,
            profile,
            damping: 0.5,
            undetectable: false,
            growth: f64::NAN,
            trials: Vec::new(),
            rejections: 0,
            sampler,
        };
        let mut rng = rng::stream(seed, 0);
        let mut normal_pair = None::<f64>;
        for g in 0..k {
            let s_bar = state.profile.mean_load(g);
            let a0 = (state.model.c_sigma[g] * (lambda - 1.0) + lambda * s_bar).max(1.0);
            let mut pop = Vec::with_capacity(population);
            for _ in 0..population {
                let pattern = pick(&state.sampler.pattern_cdf[g], &mut rng) as u32;
                let degree = state.draw_degree(g, &mut rng);
                let h = match init {
                    Init::Polarized => {
                        if g % 2 == 0 {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    Init::Symmetric => standard_normal(&mut rng, &mut normal_pair),
                };
                pop.push(PopulationMember { precision_a: a0, mean_h: h, degree, pattern });
            }
            state.populations.push(pop);
        }
        state.refresh_fields();
        Ok(state)
    }

    pub fn population_size(&self) -> usize {
        self.populations.first().map_or(0, |p| p.len())
    }

    fn draw_degree(&self, g: usize, rng: &mut Rng) -> u32 {
        match &self.sampler.poisson[g] {
            Some(p) => p.sample(rng) as u32,
            None => 0,
        }
    }

    /// Recomputes `m̂_r = 2 N m_r / d_r` and the per-pattern fields `Σ_r h^r m̂_r`.
    fn refresh_fields(&mut self) {
        let n = self.profile.n_nodes;
        for (r, &mr) in self.m.iter().enumerate() {
            self.m_hat[r] = 2.0 * n * mr / self.profile.label_degrees[r];
        }
        for (g, entries) in self.profile.groups.iter().enumerate() {
            for (p, e) in entries.iter().enumerate() {
                self.sampler.pattern_fields[g][p] = e.labels.iter().map(|&r| self.m_hat[r]).sum();
            }
        }
    }

    /// Replaces every member by a fresh draw from the message-passing update,
    /// reading only the pre-sweep population. On error the state is unchanged.
    pub fn sweep(&mut self, rng: &mut Rng) -> Result<SweepStats> {
        let lambda = self.lambda;
        let k = self.populations.len();
        let p = self.population_size();
        let mut next: Vec<Vec<PopulationMember>> = Vec::with_capacity(k);
        let mut stats = SweepStats::default();
        let mut neighbours: Vec<(f64, f64)> = Vec::with_capacity(64);
        for g in 0..k {
            let mut pop = Vec::with_capacity(p);
            for _ in 0..p {
                let mut tries = 0;
                loop {
                    let pattern = pick(&self.sampler.pattern_cdf[g], rng);
                    let degree = self.draw_degree(g, rng);
                    neighbours.clear();
                    for _ in 0..degree {
                        let h = pick(&self.sampler.neighbour_cdf[g], rng);
                        let j = rng.random_range(0..p);
                        let m = &self.populations[h][j];
                        neighbours.push((m.precision_a, m.mean_h));
                    }
                    let s = self.profile.groups[g][pattern].labels.len() as f64;
                    let field = self.sampler.pattern_fields[g][pattern];
                    let (a, h) = cavity_update(lambda, degree as f64, s, field, &neighbours);
                    if a > EPS_A && a.is_finite() && h.is_finite() {
                        pop.push(PopulationMember { precision_a: a, mean_h: h, degree, pattern: pattern as u32 });
                        break;
                    }
                    stats.rejected += 1;
                    tries += 1;
                    if tries >= MAX_REDRAWS {
                        return Err(Error::Instability { lambda, rate: 1.0 });
                    }
                }
            }
            next.push(pop);
        }
        stats.members = k * p;
        self.rejections += stats.rejected;
        if stats.rate() > MAX_REJECTION_RATE {
            return Err(Error::Instability { lambda, rate: stats.rate() });
        }
        self.populations = next;
        Ok(stats)
    }

    /// Population estimate of `m_r = Σ_σ (N_σ/N) E_σ[h^r H]`.
    pub fn estimate_fields(&self) -> Vec<f64> {
        let n = self.profile.n_nodes;
        let mut est = vec![0.0; self.m.len()];
        if est.is_empty() {
            return est;
        }
        for (g, pop) in self.populations.iter().enumerate() {
            let w = self.model.group_sizes[g] / n / pop.len() as f64;
            for m in pop {
                for &r in &self.profile.groups[g][m.pattern as usize].labels {
                    est[r] += w * m.mean_h;
                }
            }
        }
        est
    }

    /// Damped update of `m` from the population, followed by `m̂ = 2 N m / d_r`.
    pub fn update_fields(&mut self) {
        if self.m.is_empty() {
            return;
        }
        let est = self.estimate_fields();
        let theta = self.damping;
        for (m, e) in self.m.iter_mut().zip(est) {
            *m = (1.0 - theta) * *m + theta * e;
        }
        self.refresh_fields();
    }

    fn weight(&self, g: usize, m: &PopulationMember) -> f64 {
        m.degree as f64 + self.profile.groups[g][m.pattern as usize].labels.len() as f64
    }

    fn weighted_moment(&self, power: i32) -> f64 {
        let n = self.profile.n_nodes;
        self.populations
            .iter()
            .enumerate()
            .map(|(g, pop)| {
                let s: f64 = pop.iter().map(|m| self.weight(g, m) * m.mean_h.powi(power)).sum();
                self.model.group_sizes[g] / n * s / pop.len() as f64
            })
            .sum()
    }

    /// `Σ_σ (N_σ/N) E_σ[(d + s) H]`, the analogue of `Σ_i d_i φ_i / N`.
    pub fn orthogonality(&self) -> f64 {
        self.weighted_moment(1)
    }

    /// `Σ_σ (N_σ/N) E_σ[(d + s) H²]`, the analogue of `Σ_i d_i φ_i² / N`.
    pub fn normalization(&self) -> f64 {
        self.weighted_moment(2)
    }

    /// Shifts all `H` by a constant so that [`orthogonality`](Self::orthogonality) vanishes.
    pub fn project(&mut self) {
        let mass = self.weighted_moment(0);
        if mass <= 0.0 {
            return;
        }
        let t = self.orthogonality() / mass;
        for pop in &mut self.populations {
            for m in pop {
                m.mean_h -= t;
            }
        }
    }

    /// Rescales `H` and `m` jointly to unit [`normalization`](Self::normalization);
    /// returns the norm before rescaling.
    pub fn normalize(&mut self) -> f64 {
        let q = self.normalization();
        if q > 0.0 && q.is_finite() {
            let s = 1.0 / q.sqrt();
            for pop in &mut self.populations {
                for m in pop {
                    m.mean_h *= s;
                }
            }
            self.m.iter_mut().for_each(|x| *x *= s);
            self.refresh_fields();
        }
        q
    }

    /// Negates every `H` and every `m_r`.
    pub fn negate(&mut self) {
        for pop in &mut self.populations {
            for m in pop {
                m.mean_h = -m.mean_h;
            }
        }
        self.m.iter_mut().for_each(|x| *x = -*x);
        self.refresh_fields();
    }

    /// `⟨H⟩_σ` per group.
    pub fn group_means(&self) -> Vec<f64> {
        self.populations.iter().map(|p| p.iter().map(|m| m.mean_h).sum::<f64>() / p.len() as f64).collect()
    }

    /// `⟨H²⟩_σ` per group.
    pub fn group_second_moments(&self) -> Vec<f64> {
        self.populations
            .iter()
            .map(|p| p.iter().map(|m| m.mean_h * m.mean_h).sum::<f64>() / p.len() as f64)
            .collect()
    }

    /// `Σ_σ (c_σ N_σ/N) ⟨H⟩_σ` and `Σ_σ (c_σ N_σ/N) ⟨H²⟩_σ`.
    pub fn degree_sums(&self) -> (f64, f64) {
        let n = self.profile.n_nodes;
        let means = self.group_means();
        let second = self.group_second_moments();
        let mut o = 0.0;
        let mut q = 0.0;
        for g in 0..means.len() {
            let w = self.model.c_sigma[g] * self.model.group_sizes[g] / n;
            o += w * means[g];
            q += w * second[g];
        }
        (o, q)
    }

    /// Separation of the two largest group means in units of their standard error.
    pub fn separation_z(&self) -> f64 {
        let means = self.group_means();
        if means.len() < 2 {
            return 0.0;
        }
        let p = self.population_size() as f64;
        let var: Vec<f64> = self
            .group_second_moments()
            .iter()
            .zip(&means)
            .map(|(s, m)| (s - m * m).max(0.0))
            .collect();
        let mut best = 0.0f64;
        for a in 0..means.len() {
            for b in a + 1..means.len() {
                let se = ((var[a] + var[b]) / p).sqrt();
                let z = if se > 0.0 { (means[a] - means[b]).abs() / se } else { 0.0 };
                best = best.max(z);
            }
        }
        best
    }

    /// Largest difference of group means divided by the pooled within-group
    /// standard deviation.
    pub fn separation_ratio(&self) -> f64 {
        let means = self.group_means();
        let second = self.group_second_moments();
        let var: f64 = second.iter().zip(&means).map(|(s, m)| (s - m * m).max(0.0)).sum::<f64>() / means.len() as f64;
        let mut best = 0.0f64;
        for a in 0..means.len() {
            for b in a + 1..means.len() {
                best = best.max((means[a] - means[b]).abs());
            }
        }
        if var > 0.0 {
            best / var.sqrt()
        } else if best > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }

    /// Runs `burn + measure` sweeps with projection and normalization after
    /// each and returns the geometric-mean norm growth over the last `measure`.
    pub fn measure_growth(&mut self, rng: &mut Rng, burn: usize, measure: usize) -> Result<f64> {
        self.project();
        self.normalize();
        let mut log_sum = 0.0;
        for t in 0..burn + measure.max(1) {
            self.sweep(rng)?;
            self.project();
            self.update_fields();
            let q = self.normalize();
            if t >= burn {
                log_sum += q.ln();
            }
        }
        Ok((log_sum / measure.max(1) as f64).exp())
    }
}

fn standard_normal(rng: &mut Rng, spare: &mut Option<f64>) -> f64 {
    if let Some(z) = spare.take() {
        return z;
    }
    loop {
        let u: f64 = rng.random_range(-1.0..1.0);
        let v: f64 = rng.random_range(-1.0..1.0);
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            let k = (-2.0 * s.ln() / s).sqrt();
            *spare = Some(v * k);
            return u * k;
        }
    }
}

/// The single-member update for degree `d`, pattern load `s`, pattern field
/// `Σ_r h^r m̂_r`, and neighbour parameters `(A_ℓ, H_ℓ)`.
pub fn cavity_update(lambda: f64, d: f64, s: f64, field: f64, neighbours: &[(f64, f64)]) -> (f64, f64) {
    let mut a = lambda * (d + s);
    let mut num = field;
    for &(al, hl) in neighbours {
        let den = lambda + al - 1.0;
        a -= (lambda + al) / den;
        num += al * hl / den;
    }
    (a, num / a)
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CavityOptions {
    pub population: usize,
    /// Sweeps at the final `λ`.
    pub sweeps: usize,
    /// Sweeps discarded after each change of `λ`.
    pub trial_burn: usize,
    /// Sweeps averaged for the growth estimate at each trial `λ`.
    pub trial_measure: usize,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    /// Bisection stops when the bracket is narrower than this.
    pub tol: f64,
    pub damping: f64,
    pub init: Init,
    /// The final state counts as collapsed when its group-mean separation is
    /// below `collapse_z` standard errors or below `collapse_ratio` pooled
    /// standard deviations.
    pub collapse_z: f64,
    pub collapse_ratio: f64,
    pub seed: u64,
}

impl Default for CavityOptions {
    fn default() -> Self {
        Self {
            population: 10_000,
            sweeps: 200,
            trial_burn: 20,
            trial_measure: 40,
            lambda_lo: 0.05,
            lambda_hi: 2.0,
            tol: 2e-3,
            damping: 0.5,
            init: Init::Polarized,
            collapse_z: 6.0,
            collapse_ratio: 0.2,
            seed: 0,
        }
    }
}

/// Locates `λ` by bisection on the norm growth (growth 1 at the root).
///
/// Trials where the population is unstable count as lying below the root.
/// If no trial `λ` produced a stable growing population, or the final state
/// has no significant group separation, the state is flagged `undetectable`.
pub fn solve_lambda(spec: &BlockSpec, profile: &AnnotationProfileDist, opts: &CavityOptions) -> Result<CavityState> {
    solve_lambda_model(CavityModel::from_spec(spec)?, profile, opts)
}

pub fn solve_lambda_model(
    model: CavityModel,
    profile: &AnnotationProfileDist,
    opts: &CavityOptions,
) -> Result<CavityState> {
    let (mut lo, mut hi) = (opts.lambda_lo, opts.lambda_hi);
    if !(lo < hi) {
        return Err(Error::Parameter(format!("empty lambda bracket [{lo}, {hi}]")));
    }
    if opts.population < 2 {
        return Err(Error::Parameter("population size must be at least 2".into()));
    }
    let mut state = CavityState::new(model, profile.clone(), opts.population, hi, opts.init, opts.seed)?;
    state.damping = opts.damping;
    let mut rng = rng::stream(opts.seed, 1);
    let mut trials = Vec::new();

    // First trial equilibrates from scratch.
    let g_hi = trial(&mut state, &mut rng, hi, opts.sweeps.max(opts.trial_burn), opts.trial_measure);
    trials.push(LambdaTrial { lambda: hi, growth: g_hi });
    let g_lo = trial(&mut state, &mut rng, lo, opts.trial_burn, opts.trial_measure);
    trials.push(LambdaTrial { lambda: lo, growth: g_lo });
    let above = |g: Option<f64>| matches!(g, Some(x) if x < 1.0);
    if !above(g_hi) || above(g_lo) {
        return Err(Error::NoSolution {
            lo,
            hi,
            f_lo: g_lo.unwrap_or(f64::INFINITY),
            f_hi: g_hi.unwrap_or(f64::INFINITY),
        });
    }
    let mut saw_growth = matches!(g_lo, Some(x) if x >= 1.0);
    while hi - lo > opts.tol {
        let mid = 0.5 * (lo + hi);
        let g = trial(&mut state, &mut rng, mid, opts.trial_burn, opts.trial_measure);
        trials.push(LambdaTrial { lambda: mid, growth: g });
        if above(g) {
            hi = mid;
        } else {
            saw_growth |= g.is_some();
            lo = mid;
        }
    }

    // Final run at the midpoint, falling back to the stable upper end.
    let mid = 0.5 * (lo + hi);
    let mut final_lambda = mid;
    let mut g = trial(&mut state, &mut rng, mid, opts.sweeps / 2, opts.sweeps - opts.sweeps / 2);
    if g.is_none() {
        final_lambda = hi;
        g = trial(&mut state, &mut rng, hi, opts.sweeps / 2, opts.sweeps - opts.sweeps / 2);
    }
    let growth = g.ok_or(Error::Instability { lambda: final_lambda, rate: f64::NAN })?;
    trials.push(LambdaTrial { lambda: final_lambda, growth: Some(growth) });
    state.lambda = final_lambda;
    state.growth = growth;
    state.undetectable = !saw_growth || state.separation_z() < opts.collapse_z
        || state.separation_ratio() < opts.collapse_ratio;
    state.trials = trials;
    Ok(state)
}

/// Growth at `lambda`, or `None` (state restored) if the population is unstable.
fn trial(state: &mut CavityState, rng: &mut Rng, lambda: f64, burn: usize, measure: usize) -> Option<f64> {
    let snapshot = (state.populations.clone(), state.m.clone(), state.lambda);
    state.lambda = lambda;
    match state.measure_growth(rng, burn, measure) {
        Ok(g) if g.is_finite() => Some(g),
        _ => {
            state.populations = snapshot.0;
            state.m = snapshot.1;
            state.lambda = snapshot.2;
            state.refresh_fields();
            None
        }
    }
}

/// Fraction of members whose sign of `H` matches the sign assigned to their
/// group, weighted by `N_σ / N`; members with `H = 0` count one half.
///
/// With two groups the assignment is (+, −) or its flip, whichever scores
/// higher. With more groups each group is assigned the sign of its mean.
pub fn predicted_accuracy(state: &CavityState) -> f64 {
    if state.undetectable {
        return 0.5;
    }
    let n = state.profile.n_nodes;
    let means = state.group_means();
    let k = state.populations.len();
    let score = |signs: &[f64]| -> f64 {
        state
            .populations
            .iter()
            .enumerate()
            .map(|(g, pop)| {
                let hits: f64 = pop
                    .iter()
                    .map(|m| {
                        if m.mean_h == 0.0 {
                            0.5
                        } else if m.mean_h.signum() == signs[g] {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .sum();
                state.model.group_sizes[g] / n * hits / pop.len() as f64
            })
            .sum()
    };
    if k == 2 {
        let acc = score(&[1.0, -1.0]);
        acc.max(1.0 - acc)
    } else {
        let signs: Vec<f64> = means.iter().map(|m| if *m >= 0.0 { 1.0 } else { -1.0 }).collect();
        score(&signs)
    }
}

/// Effective-medium precision: the larger root of
/// `a + c / (λ − 1 + a) = c (λ − 1) + λ R`, found by safeguarded Newton.
pub fn ema_solve(c: f64, r: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 1.0 && lambda <= 2.0) {
        return Err(Error::Parameter(format!("lambda {lambda} outside (1, 2]")));
    }
    if !(c > 0.0) || !(r >= 0.0) {
        return Err(Error::Parameter(format!("need c > 0 and R >= 0, got c = {c}, R = {r}")));
    }
    let b = lambda - 1.0;
    let q = c * b + lambda * r;
    let g = |a: f64| a + c / (b + a) - q;
    // g is convex on a > -b with its minimum at a = sqrt(c) - b.
    let a_min = c.sqrt() - b;
    if g(a_min) > 0.0 {
        return Err(Error::Parameter(format!(
            "no real effective-medium solution for c = {c}, R = {r}, lambda = {lambda}"
        )));
    }
    // Start right of the larger root; Newton then decreases monotonically.
    let mut lo = a_min;
    let mut hi = q.max(a_min) + 1.0;
    let mut a = hi;
    for _ in 0..200 {
        let ga = g(a);
        if ga.abs() <= 1e-15 * q.abs().max(1.0) {
            break;
        }
        if ga > 0.0 {
            hi = a;
        } else {
            lo = a;
        }
        let slope = 1.0 - c / ((b + a) * (b + a));
        let mut next = a - ga / slope;
        if !(next > lo && next < hi) || slope <= 0.0 {
            next = 0.5 * (lo + hi);
        }
        if (next - a).abs() <= 1e-16 * a.abs().max(1.0) {
            a = next;
            break;
        }
        a = next;
    }
    if a <= 0.0 {
        return Err(Error::Parameter(format!(
            "effective-medium root {a} is not positive for c = {c}, R = {r}, lambda = {lambda}"
        )));
    }
    Ok(a)
}

/// Truncated Poisson pmf covering `d ≤ c + 10√c` and tail mass below 1e-10.
fn poisson_pmf(c: f64) -> Vec<f64> {
    if c <= 0.0 {
        return vec![1.0];
    }
    let d_max = (c + 10.0 * c.sqrt()).ceil() as usize;
    let mut pmf = Vec::with_capacity(d_max + 1);
    let mut p = (-c).exp();
    let mut total = 0.0;
    let mut d = 0usize;
    loop {
        pmf.push(p);
        total += p;
        if d >= d_max && 1.0 - total < 1e-10 {
            break;
        }
        d += 1;
        p *= c / d as f64;
        if d > 100 * d_max + 1000 {
            break;
        }
    }
    pmf
}

/// Coefficients `(u_σ, w_σ)` of the affine map `⟨H⟩_σ ↦ u_σ + w_σ Σ_σ' f_σσ' ⟨H⟩_σ'`.
/// `shrink(d)` is the factor multiplying the neighbour sum and `offset` the
/// per-link correction to the denominator; both are 1 and 0 as `a → ∞`.
fn mean_map_coeffs(
    model: &ReducedModel,
    profile: &AnnotationProfileDist,
    lambda: f64,
    m: &[f64],
    shrink: f64,
    offset: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = model.k_groups;
    if profile.n_groups() != k {
        return Err(Error::Dimension { expected: k, found: profile.n_groups() });
    }
    if m.len() != profile.n_labels() {
        return Err(Error::Dimension { expected: profile.n_labels(), found: m.len() });
    }
    let n = profile.n_nodes;
    let per_link = lambda - 1.0 - offset;
    let mut u = vec![0.0; k];
    let mut w = vec![0.0; k];
    for g in 0..k {
        let pmf = poisson_pmf(model.c_sigma[g]);
        for e in &profile.groups[g] {
            let s = e.labels.len() as f64;
            let field: f64 = e.labels.iter().map(|&r| 2.0 * n * m[r] / profile.label_degrees[r]).sum();
            if s == 0.0 {
                // d cancels between numerator and denominator.
                if per_link.abs() < 1e-14 {
                    return Err(Error::Parameter(format!("singular mean map at lambda {lambda}")));
                }
                w[g] += e.prob * shrink / per_link;
                continue;
            }
            for (d, &pd) in pmf.iter().enumerate() {
                let d = d as f64;
                let den = lambda * s + d * per_link;
                if den.abs() < 1e-14 {
                    return Err(Error::Parameter(format!("singular mean map at lambda {lambda}")));
                }
                u[g] += e.prob * pd * field / den;
                w[g] += e.prob * pd * d * shrink / den;
            }
        }
    }
    Ok((u, w))
}

fn apply_affine(model: &ReducedModel, u: &[f64], w: &[f64], h: &[f64]) -> Vec<f64> {
    (0..model.k_groups)
        .map(|g| {
            let fh: f64 = model.f[g].iter().zip(h).map(|(f, x)| f * x).sum();
            u[g] + w[g] * fh
        })
        .collect()
}

/// One application of the small-fluctuation map to group means `h`.
pub fn small_fluct_map(
    model: &ReducedModel,
    profile: &AnnotationProfileDist,
    lambda: f64,
    m: &[f64],
    h: &[f64],
) -> Result<Vec<f64>> {
    let (u, w) = mean_map_coeffs(model, profile, lambda, m, 1.0, 0.0)?;
    Ok(apply_affine(model, &u, &w, h))
}

/// One application of the constant-precision (effective-medium) mean map
/// with finite `a`; tends to [`small_fluct_map`] as `a → ∞`.
pub fn ema_mean_map(
    model: &ReducedModel,
    profile: &AnnotationProfileDist,
    lambda: f64,
    a: f64,
    m: &[f64],
    h: &[f64],
) -> Result<Vec<f64>> {
    let den = lambda - 1.0 + a;
    let (u, w) = mean_map_coeffs(model, profile, lambda, m, a / den, 1.0 / den)?;
    Ok(apply_affine(model, &u, &w, h))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallFluctSolution {
    /// `⟨H⟩_σ`.
    pub means: Vec<f64>,
    /// With `m = 0` the map is linear and the solution is its leading
    /// non-trivial eigenvector; this is the eigenvalue (1 at a true fixed point).
    pub growth: Option<f64>,
    pub iterations: usize,
}

/// Solves the small-fluctuation equation for the group means.
///
/// With `m = 0` the map is homogeneous: power iteration with the trivial
/// direction projected out (`Σ_σ N_σ (c_σ + s̄_σ) ⟨H⟩_σ = 0`) and
/// normalization `Σ_σ (N_σ/N)(c_σ + s̄_σ) ⟨H⟩_σ² = 1`. Otherwise a damped
/// fixed-point iteration (`θ = 0.5`) to relative change 1e-10.
pub fn small_fluct_solve(
    model: &ReducedModel,
    profile: &AnnotationProfileDist,
    lambda: f64,
    m: &[f64],
) -> Result<SmallFluctSolution> {
    const MAX_ITER: usize = 10_000;
    const TOL: f64 = 1e-10;
    let k = model.k_groups;
    let (u, w) = mean_map_coeffs(model, profile, lambda, m, 1.0, 0.0)?;
    let n = profile.n_nodes;
    let weight: Vec<f64> = (0..k)
        .map(|g| model.group_sizes[g] / n * (model.c_sigma[g] + profile.mean_load(g)))
        .collect();
    let homogeneous = m.iter().all(|&x| x == 0.0);
    let mut h: Vec<f64> = (0..k).map(|g| if g % 2 == 0 { 1.0 } else { -1.0 }).collect();
    if k == 1 {
        h[0] = 1.0;
    }
    let mut last_change = f64::INFINITY;
    if homogeneous {
        if k < 2 {
            return Err(Error::Parameter("a single group has no non-trivial mean solution".into()));
        }
        let project_norm = |v: &mut Vec<f64>| -> f64 {
            let mass: f64 = weight.iter().sum();
            let t: f64 = weight.iter().zip(v.iter()).map(|(w, x)| w * x).sum::<f64>() / mass;
            v.iter_mut().for_each(|x| *x -= t);
            let q: f64 = weight.iter().zip(v.iter()).map(|(w, x)| w * x * x).sum();
            let s = q.sqrt();
            if s > 0.0 {
                v.iter_mut().for_each(|x| *x /= s);
            }
            // Largest entry positive so that sign flips do not stall convergence.
            let big = v.iter().cloned().fold(0.0, |acc: f64, x| if x.abs() > acc.abs() { x } else { acc });
            if big < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            s
        };
        project_norm(&mut h);
        for it in 1..=MAX_ITER {
            let mut next = apply_affine(model, &u, &w, &h);
            project_norm(&mut next);
            last_change = next.iter().zip(&h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            h = next;
            if last_change < TOL {
                // Eigenvalue from the (unprojected) image of the converged vector.
                let image = apply_affine(model, &u, &w, &h);
                let num: f64 = weight.iter().zip(&image).zip(&h).map(|((w, a), b)| w * a * b).sum();
                let den: f64 = weight.iter().zip(&h).map(|(w, b)| w * b * b).sum();
                return Ok(SmallFluctSolution { means: h, growth: Some(num / den), iterations: it });
            }
        }
    } else {
        let theta = 0.5;
        for it in 1..=MAX_ITER {
            let image = apply_affine(model, &u, &w, &h);
            let next: Vec<f64> = h.iter().zip(&image).map(|(x, y)| (1.0 - theta) * x + theta * y).collect();
            let scale = next.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
            last_change = next.iter().zip(&h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
            h = next;
            if !last_change.is_finite() {
                break;
            }
            if last_change < TOL {
                return Ok(SmallFluctSolution { means: h, growth: None, iterations: it });
            }
        }
    }
    Err(Error::FixedPoint { iterations: MAX_ITER, last_change })
}

/// Matrix of the linear part of the small-fluctuation map, `diag(w) f`.
pub fn small_fluct_matrix(model: &ReducedModel, profile: &AnnotationProfileDist, lambda: f64) -> Result<DenseMatrix> {
    let zeros = vec![0.0; profile.n_labels()];
    let (_, w) = mean_map_coeffs(model, profile, lambda, &zeros, 1.0, 0.0)?;
    let k = model.k_groups;
    let mut out = DenseMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            out[(a, b)] = w[a] * model.f[a][b];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbm::{symmetric_to_block, SymmetricSpec};
    use proptest::prelude::*;

    fn sym_model(eps: f64, c: f64, n: usize) -> (BlockSpec, ReducedModel) {
        let (spec, _) = symmetric_to_block(&SymmetricSpec { n_per_group: n, mean_degree: c, epsilon: eps }).unwrap();
        let cm = CavityModel::from_spec(&spec).unwrap();
        let model = ReducedModel {
            k_groups: 2,
            f: cm.f.clone(),
            c_sigma: cm.c_sigma.clone(),
            hbar: Vec::new(),
            group_sizes: cm.group_sizes.clone(),
            label_degrees: Vec::new(),
        };
        (spec, model)
    }

    fn quadratic_root(c: f64, r: f64, lambda: f64) -> f64 {
        // a² + (b − q) a + (c − q b) = 0, larger root.
        let b = lambda - 1.0;
        let q = c * b + lambda * r;
        let p = b - q;
        let disc = p * p - 4.0 * (c - q * b);
        (-p + disc.sqrt()) / 2.0
    }

    #[test]
    fn ema_matches_quadratic_formula() {
        for &(c, r, lambda) in &[(12.0, 0.0, 1.6), (12.0, 12.0, 1.6), (12.0, 48.0, 1.6), (8.0, 4.0, 1.9), (3.0, 1.0, 2.0)] {
            let a = ema_solve(c, r, lambda).unwrap();
            let oracle = quadratic_root(c, r, lambda);
            assert!((a - oracle).abs() <= 1e-12 * oracle.max(1.0), "{a} vs {oracle}");
        }
        // c = 12, R = 0, λ = 0.5 + 1: the quadratic has no real root.
        assert!(matches!(ema_solve(12.0, 0.0, 1.5), Err(Error::Parameter(_))));
        assert!(matches!(ema_solve(12.0, 0.0, 0.9), Err(Error::Parameter(_))));
    }

    #[test]
    fn ema_monotone_and_asymptotic() {
        let a0 = ema_solve(12.0, 0.0, 1.6).unwrap();
        let a12 = ema_solve(12.0, 12.0, 1.6).unwrap();
        let a48 = ema_solve(12.0, 48.0, 1.6).unwrap();
        assert!(a48 > a12 && a12 > a0);
        let big = ema_solve(12.0, 1e7, 1.6).unwrap();
        assert!((big / (1.6 * 1e7) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn constant_degree_update_reproduces_ema() {
        let (c, lambda) = (12.0, 1.7);
        let a = ema_solve(c, 0.0, lambda).unwrap();
        let nb = vec![(a, 0.0); 12];
        let (a_new, h_new) = cavity_update(lambda, c, 0.0, 0.0, &nb);
        assert!((a_new - a).abs() < 1e-12);
        assert_eq!(h_new, 0.0);
        let lhs = c * (lambda - 1.0) - c / (lambda - 1.0 + a);
        assert!((a_new - lhs).abs() < 1e-12);
    }

    #[test]
    fn type1_update_is_global_shrinkage() {
        let (lambda, a) = (1.4, 5.0);
        let hs = [0.3, -0.2, 0.7, 0.1];
        let nb: Vec<(f64, f64)> = hs.iter().map(|&h| (a, h)).collect();
        let (aa, h) = cavity_update(lambda, 4.0, 3.0, 0.0, &nb);
        let expected = a / (lambda - 1.0 + a) * hs.iter().sum::<f64>() / aa;
        assert!((h - expected).abs() < 1e-14);
    }

    #[test]
    fn zero_h_is_fixed_without_fields() {
        let (spec, _) = sym_model(0.3, 12.0, 100);
        let model = CavityModel::from_spec(&spec).unwrap();
        let profile = AnnotationProfileDist::none(2, 200.0);
        let mut st = CavityState::new(model, profile, 500, 1.7, Init::Polarized, 1).unwrap();
        for pop in &mut st.populations {
            for m in pop {
                m.mean_h = 0.0;
            }
        }
        let mut rng = rng::seeded(2);
        st.sweep(&mut rng).unwrap();
        st.update_fields();
        assert!(st.populations.iter().flatten().all(|m| m.mean_h == 0.0));
        assert!(st.m.is_empty());
    }

    #[test]
    fn m_hat_identity_after_update() {
        let (spec, _) = sym_model(0.3, 12.0, 100);
        let model = CavityModel::from_spec(&spec).unwrap();
        let profile = AnnotationProfileDist::group_aligned(&[100.0, 100.0], 2);
        let mut st = CavityState::new(model, profile, 400, 1.7, Init::Polarized, 3).unwrap();
        let mut rng = rng::seeded(4);
        st.sweep(&mut rng).unwrap();
        st.update_fields();
        for r in 0..4 {
            let expect = 2.0 * 200.0 * st.m[r] / 100.0;
            assert_eq!(st.m_hat[r], expect);
        }
        // Group-aligned labels with polarized start: (1, r') positive, (2, r') negative.
        assert!(st.m[0] > 0.0 && st.m[1] > 0.0 && st.m[2] < 0.0 && st.m[3] < 0.0);
        assert_eq!(st.gamma, 0.0);
    }

    #[test]
    fn uniform_labels_keep_fields_near_zero() {
        let (spec, _) = sym_model(0.3, 12.0, 1000);
        let model = CavityModel::from_spec(&spec).unwrap();
        let profile = AnnotationProfileDist::uniform(2, 3, 2000.0);
        let p = 2000;
        let mut st = CavityState::new(model, profile, p, 1.6, Init::Polarized, 5).unwrap();
        let mut rng = rng::seeded(6);
        for _ in 0..10 {
            st.sweep(&mut rng).unwrap();
            st.update_fields();
            st.project();
            st.normalize();
        }
        let bound = 3.0 / (p as f64).sqrt();
        assert!(st.m.iter().all(|m| m.abs() <= bound), "{:?}", st.m);
    }

    #[test]
    fn profile_from_annotations_is_empirical() {
        let part = Partition::contiguous(&[2, 2]);
        let ann = AnnotationSet::new(4, vec![vec![0, 1], vec![1, 2]]).unwrap();
        let prof = AnnotationProfileDist::from_annotations(&ann, &part).unwrap();
        assert_eq!(prof.groups[0].len(), 2);
        assert_eq!(prof.groups[1].len(), 2);
        let find = |g: usize, pat: &[usize]| prof.groups[g].iter().find(|e| e.labels == pat).map(|e| e.prob);
        assert_eq!(find(0, &[0]), Some(0.5));
        assert_eq!(find(0, &[0, 1]), Some(0.5));
        assert_eq!(find(1, &[1]), Some(0.5));
        assert_eq!(find(1, &[]), Some(0.5));
        assert_eq!(prof.label_degrees, vec![2.0, 2.0]);
        // Probabilities must sum to one and patterns be distinct.
        let bad = vec![vec![ProfileEntry { labels: vec![], prob: 0.6 }]];
        assert!(AnnotationProfileDist::new(bad, vec![], 1.0).is_err());
        let dup = vec![vec![
            ProfileEntry { labels: vec![0], prob: 0.5 },
            ProfileEntry { labels: vec![0], prob: 0.5 },
        ]];
        assert!(AnnotationProfileDist::new(dup, vec![1.0], 1.0).is_err());
    }

    #[test]
    fn predicted_accuracy_limits() {
        let (spec, _) = sym_model(0.3, 12.0, 100);
        let model = CavityModel::from_spec(&spec).unwrap();
        let profile = AnnotationProfileDist::none(2, 200.0);
        let mut st = CavityState::new(model, profile, 100, 1.7, Init::Polarized, 1).unwrap();
        assert_eq!(predicted_accuracy(&st), 1.0);
        for pop in &mut st.populations {
            for m in pop {
                m.mean_h = 0.0;
            }
        }
        assert_eq!(predicted_accuracy(&st), 0.5);
    }

    #[test]
    fn small_fluct_recovers_crude_equation() {
        let (_, model) = sym_model(0.3, 12.0, 1000);
        let profile = AnnotationProfileDist::none(2, 2000.0);
        // λ − 1 equal to the antisymmetric eigenvalue of the (rounded) f.
        let lambda = 1.0 + model.f[0][0] - model.f[0][1];
        let sol = small_fluct_solve(&model, &profile, lambda, &[]).unwrap();
        for g in 0..2 {
            let fh: f64 = model.f[g].iter().zip(&sol.means).map(|(f, h)| f * h).sum();
            assert!((fh - (lambda - 1.0) * sol.means[g]).abs() <= 1e-8);
        }
        assert!((sol.growth.unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn uniform_labels_rescale_but_keep_direction() {
        let (_, model) = sym_model(0.3, 12.0, 1000);
        let bare = AnnotationProfileDist::none(2, 2000.0);
        let taped = AnnotationProfileDist::uniform(2, 4, 2000.0);
        let lambda = 1.3;
        let a = small_fluct_solve(&model, &bare, lambda, &[]).unwrap();
        let b = small_fluct_solve(&model, &taped, lambda, &[0.0; 4]).unwrap();
        let cos = a.means.iter().zip(&b.means).map(|(x, y)| x * y).sum::<f64>()
            / (crate::linalg::norm(&a.means) * crate::linalg::norm(&b.means));
        assert!((cos - 1.0).abs() < 1e-12);
        assert!(b.growth.unwrap() < a.growth.unwrap());
    }

    #[test]
    fn small_fluct_with_pinned_fields_matches_linear_solve() {
        let (_, model) = sym_model(0.5, 12.0, 1000);
        let profile = AnnotationProfileDist::group_aligned(&[1000.0, 1000.0], 1);
        let lambda = 1.7;
        let m = [0.01, -0.01];
        let sol = small_fluct_solve(&model, &profile, lambda, &m).unwrap();
        assert!(sol.means[0] > 0.0 && sol.means[1] < 0.0);
        // Independent route: (I − M) H = u with u = map(0) and M = diag(w) f.
        let u = small_fluct_map(&model, &profile, lambda, &m, &[0.0, 0.0]).unwrap();
        let mm = small_fluct_matrix(&model, &profile, lambda).unwrap();
        let mut sys = DenseMatrix::identity(2);
        for a in 0..2 {
            for b in 0..2 {
                sys[(a, b)] -= mm[(a, b)];
            }
        }
        let x = crate::linalg::Lu::factor(&sys).unwrap().solve(&u);
        for g in 0..2 {
            assert!((x[g] - sol.means[g]).abs() < 1e-8, "{x:?} vs {:?}", sol.means);
        }
        // The finite-a map approaches the small-fluctuation map.
        let img = ema_mean_map(&model, &profile, lambda, 1e12, &m, &sol.means).unwrap();
        for g in 0..2 {
            assert!((img[g] - sol.means[g]).abs() < 1e-8);
        }
    }

    #[test]
    fn poisson_tail_is_small() {
        for &c in &[0.5, 8.0, 12.0, 60.0] {
            let pmf = poisson_pmf(c);
            assert!(pmf.len() as f64 >= c + 10.0 * c.sqrt());
            assert!(1.0 - pmf.iter().sum::<f64>() < 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn sweep_commutes_with_negation(seed in 0u64..1000, eps in 0.1f64..0.9) {
            let (spec, _) = sym_model(eps, 8.0, 50);
            let model = CavityModel::from_spec(&spec).unwrap();
            let profile = AnnotationProfileDist::group_aligned(&[50.0, 50.0], 1);
            let mut a = CavityState::new(model, profile, 200, 1.8, Init::Symmetric, seed).unwrap();
            a.m = vec![0.05, -0.02];
            a.refresh_fields();
            let mut b = a.clone();
            b.negate();
            a.sweep(&mut rng::seeded(seed)).unwrap();
            a.update_fields();
            b.sweep(&mut rng::seeded(seed)).unwrap();
            b.update_fields();
            for (x, y) in a.populations.iter().flatten().zip(b.populations.iter().flatten()) {
                prop_assert_eq!(x.precision_a, y.precision_a);
                prop_assert_eq!(x.mean_h, -y.mean_h);
            }
            for (x, y) in a.m.iter().zip(&b.m) {
                prop_assert_eq!(*x, -*y);
            }
        }

        #[test]
        fn ema_root_satisfies_equation(c in 1.0f64..30.0, r in 0.0f64..60.0, lambda in 1.05f64..2.0) {
            if let Ok(a) = ema_solve(c, r, lambda) {
                let lhs = a + c / (lambda - 1.0 + a);
                let rhs = c * (lambda - 1.0) + lambda * r;
                prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.max(1.0));
                prop_assert!(a > 0.0);
            }
        }
    }
}
