//! Deterministic experiment harness: parameter grid × seeds → records,
//! `records.csv`, `plots/*.svg` and `meta.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use scotchtape_core::graph::{AnnotationSet, Graph, Partition};
use scotchtape_core::nmf::nmf_cluster_restarts;
use scotchtape_core::reduced::{build_reduced, eigenvalue_shift, reduced_spectrum, ShiftKind};
use scotchtape_core::rng::derive_seed;
use scotchtape_core::sbm::{make_annotations, sample_sbm, symmetric_to_block, AnnotationKind, BlockSpec, SymmetricSpec};
use scotchtape_core::spectral::{accuracy, bipartition, element_histogram, group_elements, leading_spectrum, SpectralOptions};
use scotchtape_core::tape;

/// Per (eps, xi) panel: `(R, d★, mean accuracy)` cells.
type Panels = BTreeMap<(i64, i64), Vec<(f64, f64, f64)>>;
use serde::{Deserialize, Serialize};

use crate::io::{csv_string, num, write_json, write_text};
use crate::plot::{heatmap_plot, histogram_plot, line_plot, scatter_plot, Heatmap, Series};
use crate::stats::welch_t_test;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    EigenAccuracy,
    UniformScatter,
    Histograms,
    DensityGrid,
    NmfCompare,
}

impl ExperimentKind {
    pub fn id(&self) -> &'static str {
        match self {
            ExperimentKind::EigenAccuracy => "eigen_accuracy",
            ExperimentKind::UniformScatter => "uniform_scatter",
            ExperimentKind::Histograms => "histograms",
            ExperimentKind::DensityGrid => "density_grid",
            ExperimentKind::NmfCompare => "nmf_compare",
        }
    }
}

fn default_r_per_group() -> usize {
    1
}
fn default_bins() -> usize {
    40
}
fn default_nmf_iters() -> usize {
    500
}
fn default_nmf_restarts() -> usize {
    5
}
fn default_max_attempts() -> u64 {
    20
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Base model; `epsilon` is used when `eps_values` is empty.
    pub sbm: SymmetricSpec,
    #[serde(default)]
    pub eps_values: Vec<f64>,
    /// Uniform label counts (uniform_scatter, histograms, nmf_compare) or
    /// noisy label counts (density_grid).
    #[serde(default)]
    pub r_values: Vec<usize>,
    /// Labels per group for the group-aligned taping in eigen_accuracy.
    #[serde(default = "default_r_per_group")]
    pub r_per_group: usize,
    #[serde(default)]
    pub d_star_values: Vec<usize>,
    #[serde(default)]
    pub xi_values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_nmf_iters")]
    pub nmf_iters: usize,
    #[serde(default = "default_nmf_restarts")]
    pub nmf_restarts: usize,
    /// Graph resamples allowed per replicate when a connected instance is required.
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u64,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, sbm: SymmetricSpec, seeds: Vec<u64>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            experiment,
            sbm,
            eps_values: Vec::new(),
            r_values: Vec::new(),
            r_per_group: 1,
            d_star_values: Vec::new(),
            xi_values: Vec::new(),
            seeds,
            output_dir: output_dir.into(),
            bins: default_bins(),
            nmf_iters: default_nmf_iters(),
            nmf_restarts: default_nmf_restarts(),
            max_attempts: default_max_attempts(),
        }
    }

    pub fn eps_grid(&self) -> Vec<f64> {
        if self.eps_values.is_empty() {
            vec![self.sbm.epsilon]
        } else {
            self.eps_values.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("config has an empty seeds list");
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        if s.windows(2).any(|w| w[0] == w[1]) {
            bail!("config seeds are not distinct");
        }
        if let Some(e) = self.eps_grid().iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            bail!("epsilon {e} outside (0, 1]");
        }
        if self.sbm.n_per_group < 2 || !(self.sbm.mean_degree > 0.0) {
            bail!("sbm needs n_per_group >= 2 and a positive mean degree");
        }
        let need = |name: &str, empty: bool| -> Result<()> {
            if empty {
                bail!("{} requires a non-empty {name} list", self.experiment.id());
            }
            Ok(())
        };
        match self.experiment {
            ExperimentKind::EigenAccuracy => {
                if self.r_per_group == 0 {
                    bail!("r_per_group must be positive");
                }
            }
            ExperimentKind::UniformScatter | ExperimentKind::Histograms | ExperimentKind::NmfCompare => {
                need("r_values", self.r_values.is_empty())?;
            }
            ExperimentKind::DensityGrid => {
                need("r_values", self.r_values.is_empty())?;
                need("d_star_values", self.d_star_values.is_empty())?;
                need("xi_values", self.xi_values.is_empty())?;
                if let Some(r) = self.r_values.iter().find(|r| **r == 0 || **r % 2 == 1) {
                    bail!("noisy label count {r} must be even and positive");
                }
                if let Some(x) = self.xi_values.iter().find(|x| !(**x >= 0.0 && **x <= 1.0)) {
                    bail!("xi {x} outside [0, 1]");
                }
            }
        }
        if self.experiment == ExperimentKind::Histograms && self.bins == 0 {
            bail!("bins must be positive");
        }
        Ok(())
    }
}

/// One measured row: the full parameter tuple, the replicate seed and the
/// measured quantities, both in a fixed per-experiment order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub params: Vec<(String, f64)>,
    pub seed: u64,
    pub values: Vec<(String, f64)>,
}

impl ResultRecord {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == name).map(|p| p.1)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(k, _)| k == name).map(|p| p.1)
    }
}

#[derive(Debug, Clone)]
struct Task {
    params: Vec<(String, f64)>,
    seed: u64,
}

fn tasks(cfg: &ExperimentConfig) -> Vec<Task> {
    let mut out = Vec::new();
    let p = |k: &str, v: f64| (k.to_string(), v);
    for &eps in &cfg.eps_grid() {
        match cfg.experiment {
            ExperimentKind::EigenAccuracy => {
                for &s in &cfg.seeds {
                    out.push(Task { params: vec![p("eps", eps)], seed: s });
                }
            }
            ExperimentKind::UniformScatter | ExperimentKind::Histograms | ExperimentKind::NmfCompare => {
                for &r in &cfg.r_values {
                    for &s in &cfg.seeds {
                        out.push(Task { params: vec![p("eps", eps), p("r", r as f64)], seed: s });
                    }
                }
            }
            ExperimentKind::DensityGrid => {
                for &xi in &cfg.xi_values {
                    for &r in &cfg.r_values {
                        for &d in &cfg.d_star_values {
                            for &s in &cfg.seeds {
                                out.push(Task {
                                    params: vec![p("eps", eps), p("xi", xi), p("r", r as f64), p("d_star", d as f64)],
                                    seed: s,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn param(t: &Task, name: &str) -> f64 {
    t.params.iter().find(|(k, _)| k == name).map(|p| p.1).unwrap_or(f64::NAN)
}

/// A sampled instance: graph, planted partition and block spec.
pub struct Instance {
    pub spec: BlockSpec,
    pub partition: Partition,
    pub graph: Graph,
    /// Number of graph draws used (1 if the first was acceptable).
    pub attempts: u64,
}

/// Samples a symmetric SBM, redrawing (seed `derive_seed(seed, attempt)`)
/// until the graph is connected when `connected` is set.
pub fn sample_instance(sbm: &SymmetricSpec, seed: u64, connected: bool, max_attempts: u64) -> Result<Instance> {
    let (spec, partition) = symmetric_to_block(sbm)?;
    for attempt in 0..max_attempts.max(1) {
        let graph = sample_sbm(&spec, derive_seed(seed, attempt))?;
        if !connected || graph.is_connected() {
            return Ok(Instance { spec, partition, graph, attempts: attempt + 1 });
        }
    }
    bail!("no connected instance in {max_attempts} attempts (seed {seed})")
}

struct Measured {
    lambda2: f64,
    acc: f64,
    elements: Vec<Vec<f64>>,
    spectrum: scotchtape_core::spectral::Spectrum,
}

fn spectral_measure(graph: &Graph, annotations: &AnnotationSet, planted: &Partition) -> Result<Measured> {
    let stg = tape(graph, annotations)?;
    let sp = leading_spectrum(&stg, 2, &SpectralOptions::default())?;
    let (part, _) = bipartition(&sp)?;
    let acc = accuracy(&part, planted)?;
    let elements = group_elements(&sp, planted, 2)?;
    Ok(Measured { lambda2: sp.eigenvalues[1], acc, elements, spectrum: sp })
}

fn noisy_seed(seed: u64) -> u64 {
    derive_seed(seed, 1 << 20)
}

fn run_task(cfg: &ExperimentConfig, t: &Task) -> Result<Vec<ResultRecord>> {
    let eps = param(t, "eps");
    let sbm = SymmetricSpec { epsilon: eps, ..cfg.sbm };
    let id = cfg.experiment.id().to_string();
    let v = |k: &str, x: f64| (k.to_string(), x);
    let rec = |params: Vec<(String, f64)>, values: Vec<(String, f64)>| ResultRecord {
        experiment: id.clone(),
        params,
        seed: t.seed,
        values,
    };
    let n = 2 * sbm.n_per_group;
    match cfg.experiment {
        ExperimentKind::EigenAccuracy => {
            let inst = sample_instance(&sbm, t.seed, true, cfg.max_attempts)?;
            let part = &inst.partition;
            let none = AnnotationSet::empty(n);
            let t1 = make_annotations(&AnnotationKind::Uniform { r: 1 }, part)?;
            let t2 = make_annotations(&AnnotationKind::Group { r_per_group: vec![cfg.r_per_group; 2] }, part)?;
            let raw = spectral_measure(&inst.graph, &none, part)?;
            let m1 = spectral_measure(&inst.graph, &t1, part)?;
            let m2 = spectral_measure(&inst.graph, &t2, part)?;
            let model0 = build_reduced(&inst.spec, &none, part)?;
            let crude_raw = reduced_spectrum(&model0, false)?.values[1];
            let kappa = |ann: &AnnotationSet| -> Result<f64> {
                let m = build_reduced(&inst.spec, ann, part)?;
                Ok(m.label_load()[0] / m.c_sigma[0])
            };
            let crude_t1 = eigenvalue_shift(ShiftKind::Type1, crude_raw, kappa(&t1)?);
            let crude_t2 = eigenvalue_shift(ShiftKind::Type2, crude_raw, kappa(&t2)?);
            Ok(vec![rec(
                t.params.clone(),
                vec![
                    v("lambda2_raw", raw.lambda2),
                    v("lambda2_type1", m1.lambda2),
                    v("lambda2_type2", m2.lambda2),
                    v("crude_raw", crude_raw),
                    v("crude_t1", crude_t1),
                    v("crude_t2", crude_t2),
                    v("acc_raw", raw.acc),
                    v("acc_t1", m1.acc),
                    v("acc_t2", m2.acc),
                    v("attempts", inst.attempts as f64),
                ],
            )])
        }
        ExperimentKind::UniformScatter => {
            let r = param(t, "r") as usize;
            let inst = sample_instance(&sbm, t.seed, true, cfg.max_attempts)?;
            let none = AnnotationSet::empty(n);
            let raw = spectral_measure(&inst.graph, &none, &inst.partition)?;
            let taped = if r == 0 {
                Measured { elements: Vec::new(), ..raw_clone(&raw) }
            } else {
                let ann = make_annotations(&AnnotationKind::Uniform { r }, &inst.partition)?;
                spectral_measure(&inst.graph, &ann, &inst.partition)?
            };
            Ok(vec![rec(
                t.params.clone(),
                vec![
                    v("lambda2_raw", raw.lambda2),
                    v("lambda2_taped", taped.lambda2),
                    v("acc_raw", raw.acc),
                    v("acc_taped", taped.acc),
                    v("attempts", inst.attempts as f64),
                ],
            )])
        }
        ExperimentKind::Histograms => {
            let r = param(t, "r") as usize;
            let inst = sample_instance(&sbm, t.seed, true, cfg.max_attempts)?;
            let ann = if r == 0 {
                AnnotationSet::empty(n)
            } else {
                make_annotations(&AnnotationKind::Uniform { r }, &inst.partition)?
            };
            let m = spectral_measure(&inst.graph, &ann, &inst.partition)?;
            let tt = welch_t_test(&m.elements[0], &m.elements[1])?;
            let hist = element_histogram(&m.spectrum, &inst.partition, 2, cfg.bins)?;
            let mut out = Vec::new();
            for (g, counts) in hist.counts.iter().enumerate() {
                for (b, &c) in counts.iter().enumerate() {
                    let mut params = t.params.clone();
                    params.push(v("group", g as f64));
                    params.push(v("bin", b as f64));
                    out.push(rec(
                        params,
                        vec![
                            v("bin_lo", hist.bin_edges[b]),
                            v("bin_hi", hist.bin_edges[b + 1]),
                            v("count", c as f64),
                            v("t_stat", tt.t),
                            v("t_pvalue", tt.p),
                            v("lambda2", m.lambda2),
                            v("acc", m.acc),
                            v("attempts", inst.attempts as f64),
                        ],
                    ));
                }
            }
            Ok(out)
        }
        ExperimentKind::DensityGrid => {
            let (xi, r, d_star) = (param(t, "xi"), param(t, "r") as usize, param(t, "d_star") as usize);
            let inst = sample_instance(&sbm, t.seed, true, cfg.max_attempts)?;
            let ann = make_annotations(&AnnotationKind::Noisy { r, d_star, xi, seed: noisy_seed(t.seed) }, &inst.partition)?;
            let none = AnnotationSet::empty(n);
            let raw = spectral_measure(&inst.graph, &none, &inst.partition)?;
            let m = spectral_measure(&inst.graph, &ann, &inst.partition)?;
            Ok(vec![rec(
                t.params.clone(),
                vec![
                    v("d_star_r", (d_star * r) as f64),
                    v("lambda2_raw", raw.lambda2),
                    v("lambda2_taped", m.lambda2),
                    v("acc_raw", raw.acc),
                    v("acc_taped", m.acc),
                    v("attempts", inst.attempts as f64),
                ],
            )])
        }
        ExperimentKind::NmfCompare => {
            let r = param(t, "r") as usize;
            let inst = sample_instance(&sbm, t.seed, false, cfg.max_attempts)?;
            let ann = if r == 0 {
                AnnotationSet::empty(n)
            } else {
                make_annotations(&AnnotationKind::Uniform { r }, &inst.partition)?
            };
            let stg = tape(&inst.graph, &ann)?;
            let raw = nmf_cluster_restarts(&stg.b0, 2, cfg.nmf_iters, cfg.nmf_restarts, t.seed)?;
            let taped = nmf_cluster_restarts(&stg.b, 2, cfg.nmf_iters, cfg.nmf_restarts, t.seed)?;
            Ok(vec![rec(
                t.params.clone(),
                vec![
                    v("acc_nmf_raw", accuracy(&raw.partition, &inst.partition)?),
                    v("acc_nmf_taped", accuracy(&taped.partition, &inst.partition)?),
                    v("loss_raw", raw.final_loss()),
                    v("loss_taped", taped.final_loss()),
                    v("attempts", inst.attempts as f64),
                ],
            )])
        }
    }
}

fn raw_clone(m: &Measured) -> Measured {
    Measured { lambda2: m.lambda2, acc: m.acc, elements: m.elements.clone(), spectrum: m.spectrum.clone() }
}

fn describe(t: &Task) -> String {
    let mut s: Vec<String> = t.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
    s.push(format!("seed={}", t.seed));
    s.join(", ")
}

/// Runs every parameter tuple × seed (in parallel) and returns the records in
/// task order. Nothing is written.
pub fn compute_records(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let list = tasks(cfg);
    let results: Vec<Result<Vec<ResultRecord>>> = list
        .par_iter()
        .map(|t| run_task(cfg, t).with_context(|| format!("{} at {}", cfg.experiment.id(), describe(t))))
        .collect();
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

pub fn records_csv(records: &[ResultRecord]) -> Result<String> {
    let first = records.first().ok_or_else(|| anyhow!("no records"))?;
    let mut header: Vec<&str> = first.params.iter().map(|p| p.0.as_str()).collect();
    header.push("seed");
    header.extend(first.values.iter().map(|p| p.0.as_str()));
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row: Vec<String> = r.params.iter().map(|p| num(p.1)).collect();
            row.push(r.seed.to_string());
            row.extend(r.values.iter().map(|p| num(p.1)));
            row
        })
        .collect();
    csv_string(&header, &rows)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Groups `value` by the rounded parameter tuple selected by `keys`
/// (averaging over seeds), in ascending key order.
fn averaged(records: &[ResultRecord], keys: &[&str], value: &str) -> Vec<(Vec<f64>, f64)> {
    let mut groups: BTreeMap<Vec<i64>, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let k: Vec<f64> = keys.iter().map(|k| r.param(k).unwrap_or(f64::NAN)).collect();
        let ik: Vec<i64> = k.iter().map(|x| (x * 1e9).round() as i64).collect();
        if let Some(x) = r.value(value) {
            groups.entry(ik).or_insert_with(|| (k, Vec::new())).1.push(x);
        }
    }
    groups.into_values().map(|(k, xs)| (k, mean(&xs))).collect()
}

/// SVG plots for a homogeneous record set, as `(file name, svg)` pairs.
pub fn emit_plots(records: &[ResultRecord], kind: ExperimentKind) -> Result<Vec<(String, String)>> {
    if records.is_empty() {
        bail!("no records to plot");
    }
    if let Some(r) = records.iter().find(|r| r.experiment != kind.id()) {
        bail!("mixed experiment ids: {} and {}", kind.id(), r.experiment);
    }
    let line = |keys: &[&str], value: &str| -> Vec<(f64, f64)> {
        averaged(records, keys, value).into_iter().map(|(k, v)| (k[0], v)).collect()
    };
    let mut out = Vec::new();
    match kind {
        ExperimentKind::EigenAccuracy => {
            let series: Vec<Series> = [
                ("lambda2_raw", "measured raw"),
                ("lambda2_type1", "measured type-1"),
                ("lambda2_type2", "measured type-2"),
                ("crude_raw", "crude raw"),
                ("crude_t1", "crude type-1"),
                ("crude_t2", "crude type-2"),
            ]
            .iter()
            .map(|(k, name)| Series::new(*name, line(&["eps"], k)))
            .collect();
            out.push(("eigenvalues.svg".into(), line_plot("Second eigenvalue", "epsilon", "lambda_2", &series)));
            let acc: Vec<Series> = [("acc_raw", "raw"), ("acc_t1", "type-1"), ("acc_t2", "type-2")]
                .iter()
                .map(|(k, name)| Series::new(*name, line(&["eps"], k)))
                .collect();
            out.push(("accuracy.svg".into(), line_plot("Accuracy", "epsilon", "accuracy", &acc)));
        }
        ExperimentKind::UniformScatter => {
            let mut by_r: BTreeMap<i64, Vec<(f64, f64)>> = BTreeMap::new();
            for r in records {
                let key = r.param("r").unwrap_or(0.0) as i64;
                by_r.entry(key)
                    .or_default()
                    .push((r.value("acc_raw").unwrap_or(f64::NAN), r.value("acc_taped").unwrap_or(f64::NAN)));
            }
            let series: Vec<Series> = by_r.into_iter().map(|(r, pts)| Series::new(format!("R = {r}"), pts)).collect();
            out.push((
                "scatter.svg".into(),
                scatter_plot("Accuracy with uniform hyperedges", "accuracy (original)", "accuracy (scotch-taped)", &series, true),
            ));
        }
        ExperimentKind::Histograms => {
            // One plot per (eps, r) using the first seed present.
            let mut panels: BTreeMap<(i64, i64), (f64, f64, u64)> = BTreeMap::new();
            for r in records {
                let eps = r.param("eps").unwrap_or(f64::NAN);
                let rr = r.param("r").unwrap_or(f64::NAN);
                let key = ((eps * 1e6).round() as i64, rr as i64);
                let e = panels.entry(key).or_insert((eps, rr, r.seed));
                if records.iter().position(|x| x.seed == r.seed) < records.iter().position(|x| x.seed == e.2) {
                    e.2 = r.seed;
                }
            }
            for (_, (eps, rr, seed)) in panels {
                let sel: Vec<&ResultRecord> = records
                    .iter()
                    .filter(|r| r.seed == seed && r.param("eps") == Some(eps) && r.param("r") == Some(rr))
                    .collect();
                let n_bins = sel.iter().filter_map(|r| r.param("bin")).fold(0.0f64, f64::max) as usize + 1;
                let n_groups = sel.iter().filter_map(|r| r.param("group")).fold(0.0f64, f64::max) as usize + 1;
                let mut edges = vec![0.0; n_bins + 1];
                let mut counts = vec![vec![0usize; n_bins]; n_groups];
                for r in &sel {
                    let (g, b) = (r.param("group").unwrap() as usize, r.param("bin").unwrap() as usize);
                    counts[g][b] = r.value("count").unwrap_or(0.0) as usize;
                    edges[b] = r.value("bin_lo").unwrap_or(0.0);
                    edges[b + 1] = r.value("bin_hi").unwrap_or(0.0);
                }
                let groups: Vec<(String, Vec<usize>)> =
                    counts.into_iter().enumerate().map(|(g, c)| (format!("group {}", g + 1), c)).collect();
                let title = format!("Second eigenvector elements, eps = {eps}, R = {rr}, seed {seed}");
                out.push((format!("hist_eps{eps}_r{rr}.svg"), histogram_plot(&title, "phi'_2 element", &edges, &groups)));
            }
        }
        ExperimentKind::DensityGrid => {
            let cells = averaged(records, &["eps", "xi", "r", "d_star"], "acc_taped");
            let mut panels: Panels = BTreeMap::new();
            for (k, v) in cells {
                panels
                    .entry(((k[0] * 1e6).round() as i64, (k[1] * 1e6).round() as i64))
                    .or_default()
                    .push((k[2], k[3], v));
            }
            for ((ek, xk), pts) in panels {
                let (eps, xi) = (ek as f64 / 1e6, xk as f64 / 1e6);
                let mut rs: Vec<f64> = pts.iter().map(|p| p.0).collect();
                let mut ds: Vec<f64> = pts.iter().map(|p| p.1).collect();
                rs.sort_by(f64::total_cmp);
                rs.dedup();
                ds.sort_by(f64::total_cmp);
                ds.dedup();
                let mut grid = vec![vec![f64::NAN; ds.len()]; rs.len()];
                for &(r, d, v) in &pts {
                    let ri = rs.iter().position(|x| *x == r).unwrap();
                    let di = ds.iter().position(|x| *x == d).unwrap();
                    grid[ri][di] = v;
                }
                // Iso-d★R curves through every product shared by at least two cells.
                let mut products: BTreeMap<i64, Vec<(f64, f64)>> = BTreeMap::new();
                for &r in &rs {
                    for &d in &ds {
                        products.entry((r * d).round() as i64).or_default().push((d, r));
                    }
                }
                let overlay = products
                    .into_iter()
                    .filter(|(_, c)| c.len() >= 2)
                    .map(|(p, mut c)| {
                        c.sort_by(|a, b| a.0.total_cmp(&b.0));
                        Series::new(format!("d*R = {p}"), c)
                    })
                    .collect();
                let hm = Heatmap { x_values: ds, y_values: rs, cells: grid, overlay, vmin: 0.5, vmax: 1.0 };
                let title = format!("Accuracy with noisy hyperedges, eps = {eps}, xi = {xi}");
                out.push((format!("density_eps{eps}_xi{xi}.svg"), heatmap_plot(&title, "d*", "R", &hm)));
            }
        }
        ExperimentKind::NmfCompare => {
            let mut series = Vec::new();
            let raw = averaged(records, &["eps", "r"], "acc_nmf_raw");
            let taped = averaged(records, &["eps", "r"], "acc_nmf_taped");
            let mut by_r: BTreeMap<i64, Vec<(f64, f64)>> = BTreeMap::new();
            for (k, v) in &taped {
                by_r.entry(k[1] as i64).or_default().push((k[0], *v));
            }
            let mut raw_by_eps: BTreeMap<i64, (f64, Vec<f64>)> = BTreeMap::new();
            for (k, v) in &raw {
                raw_by_eps.entry((k[0] * 1e6).round() as i64).or_insert((k[0], Vec::new())).1.push(*v);
            }
            series.push(Series::new("original", raw_by_eps.into_values().map(|(e, v)| (e, mean(&v))).collect()));
            for (r, pts) in by_r {
                series.push(Series::new(format!("R = {r}"), pts));
            }
            out.push(("nmf_accuracy.svg".into(), line_plot("NMF accuracy", "epsilon", "accuracy", &series)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    experiment: &'static str,
    seeds: &'a [u64],
    sbm: &'a SymmetricSpec,
    grids: BTreeMap<&'static str, serde_json::Value>,
    color_scale: &'static str,
    records: usize,
}

/// Runs the experiment and writes `<output_dir>/<experiment>/records.csv`,
/// `plots/*.svg` and `meta.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let records = compute_records(cfg)?;
    write_outputs(cfg, &records)?;
    Ok(records)
}

pub fn experiment_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join(cfg.experiment.id())
}

pub fn write_outputs(cfg: &ExperimentConfig, records: &[ResultRecord]) -> Result<()> {
    let dir = experiment_dir(cfg);
    std::fs::create_dir_all(dir.join("plots")).with_context(|| format!("creating {}", dir.display()))?;
    write_text(&dir.join("records.csv"), &records_csv(records)?)?;
    for (name, svg) in emit_plots(records, cfg.experiment)? {
        write_text(&dir.join("plots").join(name), &svg)?;
    }
    let mut grids = BTreeMap::new();
    grids.insert("eps", serde_json::json!(cfg.eps_grid()));
    if !cfg.r_values.is_empty() {
        grids.insert("r", serde_json::json!(cfg.r_values));
    }
    if !cfg.d_star_values.is_empty() {
        grids.insert("d_star", serde_json::json!(cfg.d_star_values));
    }
    if !cfg.xi_values.is_empty() {
        grids.insert("xi", serde_json::json!(cfg.xi_values));
    }
    let meta = Meta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        experiment: cfg.experiment.id(),
        seeds: &cfg.seeds,
        sbm: &cfg.sbm,
        grids,
        color_scale: if cfg.experiment == ExperimentKind::DensityGrid { "linear 0.5-1.0" } else { "none" },
        records: records.len(),
    };
    write_json(&dir.join("meta.json"), &meta)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = crate::io::read_json(path)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig::new(kind, SymmetricSpec { n_per_group: 60, mean_degree: 8.0, epsilon: 0.2 }, vec![1, 2], "unused")
    }

    #[test]
    fn empty_seeds_rejected() {
        let mut c = small(ExperimentKind::EigenAccuracy);
        c.seeds.clear();
        assert!(c.validate().is_err());
        c.seeds = vec![3, 3];
        assert!(c.validate().is_err());
    }

    #[test]
    fn grid_lists_required() {
        let c = small(ExperimentKind::DensityGrid);
        assert!(c.validate().is_err());
        let mut c = small(ExperimentKind::UniformScatter);
        assert!(c.validate().is_err());
        c.r_values = vec![0, 2];
        c.validate().unwrap();
    }

    #[test]
    fn mixed_records_rejected_by_plots() {
        let a = ResultRecord { experiment: "uniform_scatter".into(), params: vec![], seed: 0, values: vec![] };
        let b = ResultRecord { experiment: "nmf_compare".into(), ..a.clone() };
        assert!(emit_plots(&[a, b], ExperimentKind::UniformScatter).is_err());
    }

    #[test]
    fn density_grid_heatmap_shape() {
        let mut c = small(ExperimentKind::DensityGrid);
        c.r_values = vec![2, 4];
        c.d_star_values = vec![20, 40, 80];
        c.xi_values = vec![0.1];
        c.seeds = vec![5];
        let recs = compute_records(&c).unwrap();
        assert_eq!(recs.len(), 6);
        let plots = emit_plots(&recs, ExperimentKind::DensityGrid).unwrap();
        assert_eq!(plots.len(), 1);
        assert_eq!(plots[0].1.matches(r#"class="cell""#).count(), 6);
        // 2·40 = 4·20 and 2·80 = 4·40.
        assert_eq!(plots[0].1.matches(r#"class="iso""#).count(), 2);
    }

    #[test]
    fn histogram_counts_sum_to_group_sizes() {
        let mut c = small(ExperimentKind::Histograms);
        c.r_values = vec![0];
        c.seeds = vec![4];
        c.bins = 12;
        let recs = compute_records(&c).unwrap();
        for g in 0..2 {
            let total: f64 = recs.iter().filter(|r| r.param("group") == Some(g as f64)).filter_map(|r| r.value("count")).sum();
            assert_eq!(total, 60.0);
        }
    }
}
