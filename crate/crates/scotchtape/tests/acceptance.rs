//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use scotchtape::experiment::{compute_records, ExperimentConfig, ExperimentKind, ResultRecord};
use scotchtape_core::cavity::{
    ema_solve, predicted_accuracy, small_fluct_solve, solve_lambda, AnnotationProfileDist, CavityOptions, CavityState,
};
use scotchtape_core::graph::{projection_operator, tape, AnnotationSet, Graph};
use scotchtape_core::linalg::{abs_cosine, symmetric_eigen};
use scotchtape_core::perturbation::{brillouin_wigner_series, lippmann_schwinger_series};
use scotchtape_core::reduced::build_reduced;
use scotchtape_core::rng::derive_seed;
use scotchtape_core::sbm::{make_annotations, sample_sbm, symmetric_to_block, AnnotationKind, SymmetricSpec};
use scotchtape_core::spectral::{leading_spectrum, SpectralOptions};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Outcome {
    id: &'static str,
    name: &'static str,
    pass: bool,
    detail: String,
    secs: f64,
}

fn sbm(c: f64, eps: f64) -> SymmetricSpec {
    SymmetricSpec { n_per_group: 1000, mean_degree: c, epsilon: eps }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Records with parameter `key` equal to `x`.
fn at<'a>(recs: &'a [ResultRecord], key: &str, x: f64) -> Vec<&'a ResultRecord> {
    recs.iter().filter(|r| r.param(key).is_some_and(|v| (v - x).abs() < 1e-12)).collect()
}

fn values(recs: &[&ResultRecord], name: &str) -> Vec<f64> {
    recs.iter().map(|r| r.value(name).unwrap()).collect()
}

fn criterion_1() -> (bool, String) {
    let opts = SpectralOptions { deflate_trivial: false, ..SpectralOptions::default() };
    let kinds = [
        AnnotationKind::Uniform { r: 1 },
        AnnotationKind::Uniform { r: 6 },
        AnnotationKind::Group { r_per_group: vec![1, 2] },
        AnnotationKind::Noisy { r: 4, d_star: 0, xi: 0.2, seed: 0 },
        AnnotationKind::Group { r_per_group: vec![0, 0] },
    ];
    let (mut worst_lambda, mut worst_cos) = (0.0f64, 1.0f64);
    let mut done = 0;
    let mut attempt = 0u64;
    while done < 20 {
        let i = done as u64;
        let n_per_group = 50 * (1 + (i as usize * 7) % 20);
        let eps = 0.1 + 0.04 * (i % 20) as f64;
        let (spec, part) = symmetric_to_block(&SymmetricSpec { n_per_group, mean_degree: 10.0, epsilon: eps }).unwrap();
        let g = sample_sbm(&spec, derive_seed(100 + i, attempt)).unwrap();
        attempt += 1;
        if !g.is_connected() {
            continue;
        }
        let kind = match &kinds[(i % 5) as usize] {
            AnnotationKind::Noisy { r, xi, .. } => {
                AnnotationKind::Noisy { r: *r, d_star: n_per_group / 2, xi: *xi, seed: 7 + i }
            }
            k => k.clone(),
        };
        let ann = match &kind {
            AnnotationKind::Group { r_per_group } if r_per_group.iter().all(|&r| r == 0) => AnnotationSet::empty(2 * n_per_group),
            k => make_annotations(k, &part).unwrap(),
        };
        let stg = tape(&g, &ann).unwrap();
        let sp = leading_spectrum(&stg, 2, &opts).unwrap();
        worst_lambda = worst_lambda.max((sp.eigenvalues[0] - 2.0).abs());
        worst_cos = worst_cos.min(abs_cosine(&sp.primed_vectors[0], &stg.trivial_vector()));
        done += 1;
        attempt = 0;
    }
    let pass = worst_lambda <= 1e-8 && worst_cos >= 1.0 - 1e-10;
    (pass, format!("max |lambda1 - 2| = {worst_lambda:.2e}, min cosine = 1 - {:.2e}", 1.0 - worst_cos))
}

fn eigen_records() -> Vec<ResultRecord> {
    let mut cfg = ExperimentConfig::new(ExperimentKind::EigenAccuracy, sbm(12.0, 0.1), SEEDS.to_vec(), "unused");
    cfg.eps_values = vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.9];
    compute_records(&cfg).unwrap()
}

fn criterion_2(recs: &[ResultRecord]) -> (bool, String) {
    let strong = values(&at(recs, "eps", 0.05), "lambda2_raw");
    let crude = 2.0 / 1.05;
    let dev = strong.iter().map(|l| (l - crude).abs()).fold(0.0, f64::max);
    let weak = values(&at(recs, "eps", 0.9), "lambda2_raw");
    let excess = weak.iter().map(|l| l - 2.0 / 1.9).fold(f64::INFINITY, f64::min);
    (dev <= 0.05 && excess >= 0.1, format!("eps=0.05 max |lambda2 - 2/(1+eps)| = {dev:.4}; eps=0.9 min excess = {excess:.4}"))
}

fn criterion_3(recs: &[ResultRecord]) -> (bool, String) {
    let mut worst = 0.0f64;
    for eps in [0.05, 0.1, 0.2] {
        for r in at(recs, "eps", eps) {
            let pred = r.value("lambda2_raw").unwrap() / (1.0 + 1.0 / 12.0);
            worst = worst.max((r.value("lambda2_type1").unwrap() - pred).abs());
        }
    }
    (worst <= 0.05, format!("max |lambda2_t1 - lambda2_raw/(1+1/12)| = {worst:.4} over eps <= 0.2"))
}

fn criterion_4(recs: &[ResultRecord]) -> (bool, String) {
    let mut diffs = Vec::new();
    for eps in [0.1, 0.2, 0.3, 0.4, 0.5] {
        for r in at(recs, "eps", eps) {
            diffs.push((r.value("acc_raw").unwrap() - r.value("acc_t1").unwrap()).abs());
        }
    }
    let m = mean(&diffs);
    (m <= 0.03, format!("mean |acc_raw - acc_t1| = {m:.4}"))
}

fn criterion_5(recs: &[ResultRecord]) -> (bool, String) {
    let gain = |eps: f64| {
        let rs = at(recs, "eps", eps);
        mean(&values(&rs, "acc_t2")) - mean(&values(&rs, "acc_raw"))
    };
    let weak: Vec<f64> = [0.5, 0.6, 0.7].iter().map(|&e| gain(e)).collect();
    let strong = gain(0.05);
    let pass = weak.iter().all(|&g| g >= 0.1) && strong <= 0.03;
    (pass, format!("gain at eps 0.5/0.6/0.7 = {:.3}/{:.3}/{:.3}, at 0.05 = {strong:.4}", weak[0], weak[1], weak[2]))
}

/// Per-seed (acc, t-test p) from histogram records.
fn hist_summary(recs: &[&ResultRecord]) -> (Vec<f64>, Vec<f64>) {
    let mut per_seed: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for r in recs {
        per_seed.insert(r.seed, (r.value("acc").unwrap(), r.value("t_pvalue").unwrap()));
    }
    per_seed.values().copied().unzip()
}

fn criterion_6() -> Vec<(bool, String)> {
    let t = Instant::now();
    let mut cfg = ExperimentConfig::new(ExperimentKind::Histograms, sbm(12.0, 0.3), SEEDS.to_vec(), "unused");
    cfg.r_values = vec![0, 48];
    let recs = compute_records(&cfg).unwrap();
    let (acc0, p0) = hist_summary(&at(&recs, "r", 0.0));
    let (acc48, p48) = hist_summary(&at(&recs, "r", 48.0));
    let (a0, a48) = (mean(&acc0), mean(&acc48));
    let p0_max = p0.iter().copied().fold(0.0, f64::max);
    let p48_min = p48.iter().copied().fold(f64::INFINITY, f64::min);
    let secs = t.elapsed().as_secs_f64();
    vec![
        (
            a48 <= a0 - 0.1 && p0_max < 1e-6 && secs < 180.0,
            format!("mean acc R=0 {a0:.4}, R=48 {a48:.4}; R=0 max t-test p = {p0_max:.2e}; {secs:.1} s"),
        ),
        (p48_min > 0.01, format!("R=48 t-test p per seed = {}", p48.iter().map(|p| format!("{p:.2e}")).collect::<Vec<_>>().join(", "))),
    ]
}

fn criterion_7() -> (bool, String) {
    let mut cfg = ExperimentConfig::new(ExperimentKind::DensityGrid, sbm(12.0, 0.6), SEEDS.to_vec(), "unused");
    cfg.xi_values = vec![0.1];
    let pairs = [(1000usize, 8usize), (500, 16), (250, 32)];
    let mut accs = Vec::new();
    for (d, r) in pairs {
        cfg.d_star_values = vec![d];
        cfg.r_values = vec![r];
        let recs = compute_records(&cfg).unwrap();
        accs.push(mean(&recs.iter().map(|x| x.value("acc_taped").unwrap()).collect::<Vec<_>>()));
    }
    let spread = accs.iter().copied().fold(f64::MIN, f64::max) - accs.iter().copied().fold(f64::MAX, f64::min);
    (spread <= 0.05, format!("mean acc (1000,8)/(500,16)/(250,32) = {:.4}/{:.4}/{:.4}, spread {spread:.4}", accs[0], accs[1], accs[2]))
}

fn two_cliques() -> Graph {
    let mut edges = Vec::new();
    for base in [0, 6] {
        for i in 0..6 {
            for j in (i + 1)..6 {
                edges.push((base + i, base + j));
            }
        }
    }
    edges.push((5, 6));
    Graph::new(12, edges).unwrap()
}

fn criterion_8() -> (bool, String) {
    let stg = tape(&two_cliques(), &AnnotationSet::new(12, vec![vec![0]]).unwrap()).unwrap();
    let eig = symmetric_eigen(&projection_operator(&stg).unwrap().to_dense().unwrap()).unwrap();
    let primed = eig.vectors[1].clone();
    let unprimed: Vec<f64> = primed.iter().zip(&stg.d_u).map(|(a, d)| a / d.sqrt()).collect();
    let ls = lippmann_schwinger_series(&stg, 2, 8).unwrap();
    let bw = brillouin_wigner_series(&stg, 2, 8).unwrap();
    let cos_ls = abs_cosine(&ls.approximations[8], &unprimed);
    let cos_bw = abs_cosine(&bw.approximations[8], &primed);
    let dec = ls.residuals[8] < ls.residuals[0] && bw.residuals[8] < bw.residuals[0];
    (
        cos_ls >= 0.99 && cos_bw >= 0.99 && dec,
        format!(
            "cosine LS {cos_ls:.6}, BW {cos_bw:.6}; residual LS {:.2e} -> {:.2e}, BW {:.2e} -> {:.2e}",
            ls.residuals[0], ls.residuals[8], bw.residuals[0], bw.residuals[8]
        ),
    )
}

fn criterion_9(recs: &[ResultRecord]) -> ((bool, String), Vec<CavityState>, f64) {
    let mut lines = Vec::new();
    let mut pass = true;
    let mut states = Vec::new();
    let mut slowest = 0.0f64;
    for eps in [0.2, 0.3, 0.4] {
        let t = Instant::now();
        let (spec, _) = symmetric_to_block(&sbm(12.0, eps)).unwrap();
        let state = solve_lambda(&spec, &AnnotationProfileDist::none(2, 2000.0), &CavityOptions::default()).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let rs = at(recs, "eps", eps);
        let lam = mean(&values(&rs, "lambda2_raw"));
        let acc = mean(&values(&rs, "acc_raw"));
        let pa = predicted_accuracy(&state);
        let ok = !state.undetectable && (state.lambda - lam).abs() <= 0.05 && (pa - acc).abs() <= 0.05;
        pass &= ok;
        lines.push(format!("eps {eps}: lambda {:.4} vs {lam:.4}, acc {pa:.4} vs {acc:.4}", state.lambda));
        states.push(state);
    }
    let detail = format!("{}; slowest point {slowest:.1} s", lines.join("; "));
    ((pass && slowest < 300.0, detail), states, slowest)
}

fn criterion_10(states: &[CavityState]) -> (bool, String) {
    // (a) closed form a² + (b − q)a + (c − qb) = 0, b = λ − 1, q = cb + λR.
    let quad = |c: f64, r: f64, lambda: f64| {
        let b = lambda - 1.0;
        let q = c * b + lambda * r;
        let p = b - q;
        (-p + (p * p - 4.0 * (c - q * b)).sqrt()) / 2.0
    };
    let mut err_a = 0.0f64;
    let mut monotone = true;
    for lambda in [1.6, 1.8, 2.0] {
        let mut prev = f64::NEG_INFINITY;
        for r in 0..=48 {
            let a = ema_solve(12.0, r as f64, lambda).unwrap();
            let o = quad(12.0, r as f64, lambda);
            err_a = err_a.max((a - o).abs() / o.max(1.0));
            monotone &= a > prev;
            prev = a;
        }
    }
    // (b) crude eigenrelation Σ f h = (λ−1) h at R = 0.
    let mut err_b = 0.0f64;
    for eps in [0.1, 0.3, 0.6] {
        let (spec, part) = symmetric_to_block(&sbm(12.0, eps)).unwrap();
        let model = build_reduced(&spec, &AnnotationSet::empty(2000), &part).unwrap();
        let lambda = 1.0 + model.f[0][0] - model.f[0][1];
        let sol = small_fluct_solve(&model, &AnnotationProfileDist::none(2, 2000.0), lambda, &[]).unwrap();
        for g in 0..2 {
            let fh: f64 = model.f[g].iter().zip(&sol.means).map(|(f, h)| f * h).sum();
            err_b = err_b.max((fh - (lambda - 1.0) * sol.means[g]).abs());
        }
    }
    // (c) sums on the converged cavity states.
    let mut worst_c = 0.0f64;
    let mut tol = 0.0;
    for s in states {
        tol = 3.0 / (s.population_size() as f64).sqrt();
        worst_c = worst_c.max(s.orthogonality().abs()).max((s.normalization() - 1.0).abs());
    }
    let pass = err_a <= 1e-12 && monotone && err_b <= 1e-8 && worst_c <= tol;
    (
        pass,
        format!(
            "(a) rel err {err_a:.1e}, monotone {monotone}; (b) residual {err_b:.1e}; (c) max deviation {worst_c:.4} (tol {tol:.4})"
        ),
    )
}

fn criterion_11() -> (bool, String) {
    let mut cfg = ExperimentConfig::new(ExperimentKind::NmfCompare, sbm(8.0, 0.05), SEEDS.to_vec(), "unused");
    cfg.r_values = vec![4];
    let recs = compute_records(&cfg).unwrap();
    let refs: Vec<&ResultRecord> = recs.iter().collect();
    let raw = mean(&values(&refs, "acc_nmf_raw"));
    let taped = mean(&values(&refs, "acc_nmf_taped"));
    (raw - taped >= 0.2, format!("mean acc raw {raw:.4}, taped {taped:.4}, difference {:.4}", raw - taped))
}

fn cli(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_scotchtape")).current_dir(dir).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn cli_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::write(
        dir.join("config.json"),
        r#"{"experiment": "uniform_scatter", "sbm": {"n_per_group": 100, "mean_degree": 10.0, "epsilon": 0.3},
            "eps_values": [0.2, 0.4], "r_values": [0, 2], "seeds": [1, 2], "output_dir": "exp"}"#,
    )
    .unwrap();
    let steps: &[&[&str]] = &[
        &["generate", "--n", "100", "--c", "10", "--eps", "0.3", "--seed", "9", "--out", "g.tsv", "--partition", "p.tsv", "--spec", "spec.json"],
        &["annotate", "--kind", "noisy", "-R", "4", "--dstar", "60", "--xi", "0.2", "--seed", "3", "--partition", "p.tsv", "--out", "a.tsv"],
        &["spectral", "--graph", "g.tsv", "--annotations", "a.tsv", "--k", "3", "--out", "spectral.csv"],
        &["perturb", "--graph", "g.tsv", "--annotations", "a.tsv", "--method", "bw", "--order", "4", "--out", "perturb.csv"],
        &["reduced", "--spec", "spec.json", "--annotations", "a.tsv", "--out", "reduced.json"],
        &["cavity", "--spec", "spec.json", "--annotations", "a.tsv", "--pop", "500", "--sweeps", "20", "--seed", "4", "--out", "cavity.csv"],
        &["nmf", "--graph", "g.tsv", "--annotations", "a.tsv", "--iters", "50", "--restarts", "2", "--seed", "5", "--out", "nmf.tsv"],
        &["experiment", "--config", "config.json"],
    ];
    for s in steps {
        cli(dir, s);
    }
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

fn criterion_12() -> (bool, String) {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = cli_outputs(a.path());
    let fb = cli_outputs(b.path());
    let differing: Vec<&String> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    let csv = fa.keys().filter(|k| k.ends_with(".csv")).count();
    (
        differing.is_empty() && fa.len() == fb.len() && csv >= 4,
        format!("{} files ({csv} CSV) compared, differing: {differing:?}", fa.len()),
    )
}

fn main() {
    let mut results: Vec<Outcome> = Vec::new();
    let mut run = |id: &'static str, name: &'static str, limit: Option<f64>, f: &mut dyn FnMut() -> (bool, String)| {
        let t = Instant::now();
        let (pass, detail) = f();
        let secs = t.elapsed().as_secs_f64();
        let pass = pass && limit.is_none_or(|l| secs < l);
        let o = Outcome { id, name, pass, detail, secs };
        println!("criterion {:<3} {:<4} {} ({:.1} s): {}", o.id, if o.pass { "PASS" } else { "FAIL" }, o.name, o.secs, o.detail);
        results.push(o);
    };

    run("1", "trivial eigenpair", Some(60.0), &mut criterion_1);
    let t = Instant::now();
    let eigen = eigen_records();
    println!("(eigen_accuracy grid: {} records in {:.1} s)", eigen.len(), t.elapsed().as_secs_f64());
    run("2", "crude eigenvalue at strong and weak structure", Some(120.0), &mut || criterion_2(&eigen));
    run("3", "type-1 shift formula", None, &mut || criterion_3(&eigen));
    run("4", "type-1 accuracy invariance", None, &mut || criterion_4(&eigen));
    run("5", "type-2 improvement", None, &mut || criterion_5(&eigen));
    let mut c6 = criterion_6().into_iter();
    let mut first = c6.next();
    let mut second = c6.next();
    run("6a", "large-R degradation, bimodal R=0", None, &mut || first.take().unwrap());
    run("6b", "large-R unimodal histogram at R=48", None, &mut || second.take().unwrap());
    run("7", "d*R invariance", None, &mut criterion_7);
    run("8", "perturbation-series oracle", Some(1.0), &mut criterion_8);
    let mut states = Vec::new();
    run("9", "cavity-spectral agreement", None, &mut || {
        let (o, s, _) = criterion_9(&eigen);
        states = s;
        o
    });
    run("10", "cavity limits", None, &mut || criterion_10(&states));
    run("11", "NMF disruption", Some(300.0), &mut criterion_11);
    run("12", "CLI determinism", None, &mut criterion_12);

    let failed: Vec<&str> = results.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!("acceptance: {} of {} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failing: {}", failed.join(", "));
        std::process::exit(1);
    }
}
