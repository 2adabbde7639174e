use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use scotchtape::experiment::{load_config, run_experiment};
use scotchtape::io::{self, num, SpecFile};
use scotchtape_core::cavity::{predicted_accuracy, solve_lambda, AnnotationProfileDist, CavityOptions};
use scotchtape_core::graph::{tape, AnnotationSet, Partition};
use scotchtape_core::nmf::nmf_cluster_restarts;
use scotchtape_core::perturbation::{brillouin_wigner_series, lippmann_schwinger_series};
use scotchtape_core::reduced::{build_reduced, classify_taping, reduced_spectrum, ClassifyMode};
use scotchtape_core::sbm::{make_annotations, sample_sbm, symmetric_to_block, AnnotationKind, SymmetricSpec};
use scotchtape_core::spectral::{accuracy, leading_spectrum, SpectralOptions};
use serde_json::json;

#[derive(Parser)]
#[command(name = "scotchtape", version, about = "Spectral clustering of graphs with annotation hyperedges")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Uniform,
    Group,
    Noisy,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Ls,
    Bw,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a two-group symmetric SBM.
    Generate {
        /// Nodes per group.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        c: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Edge list output.
        #[arg(long)]
        out: PathBuf,
        /// Planted partition output.
        #[arg(long)]
        partition: Option<PathBuf>,
        /// Block spec (JSON) output.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Generate annotations for a planted partition.
    Annotate {
        #[arg(long, value_enum)]
        kind: Kind,
        /// Label count (per group for `group`).
        #[arg(long = "R", short = 'R')]
        r: usize,
        #[arg(long, default_value_t = 0)]
        dstar: usize,
        #[arg(long, default_value_t = 0.0)]
        xi: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leading eigenpairs of the projection operator.
    Spectral {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        /// Planted partition; prints the sign-bipartition accuracy.
        #[arg(long)]
        partition: Option<PathBuf>,
    },
    /// Perturbation series for the k-th eigenvector.
    Perturb {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, value_enum, default_value = "ls")]
        method: Method,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 8)]
        order: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reduced (group-constant) eigenproblems.
    Reduced {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Required when the annotations refer to an explicit block spec.
        #[arg(long)]
        partition: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Population dynamics for the eigenvector-element distribution.
    Cavity {
        #[arg(long)]
        spec: PathBuf,
        /// Annotation profile distribution (JSON).
        #[arg(long, conflicts_with = "annotations")]
        profile: Option<PathBuf>,
        /// Annotations from which the empirical profile is built.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        partition: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        pop: usize,
        #[arg(long, default_value_t = 200)]
        sweeps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// NMF clustering of the incidence matrix.
    Nmf {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 500)]
        iters: usize,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Inferred partition output.
        #[arg(long)]
        out: PathBuf,
        /// Planted partition; prints the accuracy.
        #[arg(long = "truth")]
        truth: Option<PathBuf>,
    },
    /// Run an experiment described by a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn annotations_or_empty(path: Option<&Path>, n: usize) -> Result<AnnotationSet> {
    match path {
        Some(p) => io::read_annotations(p, n),
        None => Ok(AnnotationSet::empty(n)),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { n, c, eps, seed, out, partition, spec } => {
            let sym = SymmetricSpec { n_per_group: n, mean_degree: c, epsilon: eps };
            let (block, part) = symmetric_to_block(&sym)?;
            let graph = sample_sbm(&block, seed)?;
            io::write_graph(&out, &graph)?;
            if let Some(p) = partition {
                io::write_partition(&p, &part)?;
            }
            if let Some(p) = spec {
                io::write_json(&p, &SpecFile::Block(block))?;
            }
            eprintln!("{} nodes, {} edges", graph.n_nodes(), graph.n_edges());
        }
        Command::Annotate { kind, r, dstar, xi, seed, partition, out } => {
            let part = io::read_partition(&partition)?;
            let kind = match kind {
                Kind::Uniform => AnnotationKind::Uniform { r },
                Kind::Group => AnnotationKind::Group { r_per_group: vec![r; part.n_groups()] },
                Kind::Noisy => AnnotationKind::Noisy { r, d_star: dstar, xi, seed },
            };
            io::write_annotations(&out, &make_annotations(&kind, &part)?)?;
        }
        Command::Spectral { graph, annotations, k, out, partition } => {
            let g = io::read_graph(&graph)?;
            let ann = annotations_or_empty(annotations.as_deref(), g.n_nodes())?;
            let stg = tape(&g, &ann)?;
            let sp = leading_spectrum(&stg, k, &SpectralOptions::default())?;
            let mut rows = Vec::new();
            for (j, lambda) in sp.eigenvalues.iter().enumerate() {
                for i in 0..g.n_nodes() {
                    rows.push(vec![
                        (j + 1).to_string(),
                        num(*lambda),
                        i.to_string(),
                        num(sp.unprimed_vectors[j][i]),
                        num(sp.primed_vectors[j][i]),
                    ]);
                }
            }
            io::write_csv(&out, &["k", "eigenvalue", "node", "phi", "phi_primed"], &rows)?;
            for w in &sp.warnings {
                eprintln!("warning: {w:?}");
            }
            if let Some(p) = partition {
                if sp.eigenvalues.len() < 2 {
                    bail!("accuracy needs k >= 2");
                }
                let (inferred, _) = scotchtape_core::spectral::bipartition(&sp)?;
                println!("accuracy {}", num(accuracy(&inferred, &io::read_partition(&p)?)?));
            }
        }
        Command::Perturb { graph, annotations, method, k, order, out } => {
            let g = io::read_graph(&graph)?;
            let ann = io::read_annotations(&annotations, g.n_nodes())?;
            let stg = tape(&g, &ann)?;
            let res = match method {
                Method::Ls => lippmann_schwinger_series(&stg, k, order)?,
                Method::Bw => brillouin_wigner_series(&stg, k, order)?,
            };
            let rows: Vec<Vec<String>> = (0..res.residuals.len())
                .map(|p| vec![p.to_string(), num(res.residuals[p]), num(res.norms[p])])
                .collect();
            io::write_csv(&out, &["order", "residual", "norm"], &rows)?;
            println!("lambda_k {} lambda0_k {}", num(res.lambda_k), num(res.lambda0_k));
        }
        Command::Reduced { spec, annotations, partition, out } => {
            let sf: SpecFile = io::read_json(&spec)?;
            let (block, mut part) = sf.to_block()?;
            if let Some(p) = partition {
                part = io::read_partition(&p)?;
            }
            let ann = annotations_or_empty(annotations.as_deref(), block.n_nodes())?;
            let model = build_reduced(&block, &ann, &part)?;
            let raw = reduced_spectrum(&model, false)?;
            let taped = reduced_spectrum(&model, true)?;
            let classes: Vec<String> = taped
                .vectors
                .iter()
                .map(|v| format!("{:?}", classify_taping(&model, v, ClassifyMode::Exact)))
                .collect();
            let doc = json!({
                "model": model,
                "raw": { "values": raw.values, "vectors": raw.vectors },
                "taped": { "values": taped.values, "vectors": taped.vectors, "taping": classes },
            });
            let text = serde_json::to_string_pretty(&doc)?;
            match out {
                Some(p) => io::write_text(&p, &(text + "\n"))?,
                None => println!("{text}"),
            }
        }
        Command::Cavity { spec, profile, annotations, partition, pop, sweeps, seed, out } => {
            let sf: SpecFile = io::read_json(&spec)?;
            let (block, mut part) = sf.to_block()?;
            if let Some(p) = partition {
                part = io::read_partition(&p)?;
            }
            let prof = match (profile, annotations) {
                (Some(p), _) => io::read_json::<AnnotationProfileDist>(&p)?,
                (None, Some(a)) => AnnotationProfileDist::from_annotations(&io::read_annotations(&a, block.n_nodes())?, &part)?,
                (None, None) => AnnotationProfileDist::none(block.n_groups(), block.n_nodes() as f64),
            };
            let opts = CavityOptions { population: pop, sweeps, seed, ..CavityOptions::default() };
            let state = solve_lambda(&block, &prof, &opts).context("cavity solve")?;
            let mut rows = vec![
                vec!["lambda".into(), String::new(), String::new(), num(state.lambda)],
                vec!["gamma".into(), String::new(), String::new(), num(state.gamma)],
                vec!["undetectable".into(), String::new(), String::new(), num(state.undetectable as u8 as f64)],
                vec!["growth".into(), String::new(), String::new(), num(state.growth)],
                vec!["predicted_accuracy".into(), String::new(), String::new(), num(predicted_accuracy(&state))],
            ];
            for (r, m) in state.m.iter().enumerate() {
                rows.push(vec!["m".into(), String::new(), r.to_string(), num(*m)]);
            }
            for (g, h) in state.group_means().iter().enumerate() {
                rows.push(vec!["mean_h".into(), g.to_string(), String::new(), num(*h)]);
            }
            for (g, h) in state.group_second_moments().iter().enumerate() {
                rows.push(vec!["second_moment_h".into(), g.to_string(), String::new(), num(*h)]);
            }
            for (i, t) in state.trials.iter().enumerate() {
                rows.push(vec!["trial_lambda".into(), String::new(), i.to_string(), num(t.lambda)]);
                rows.push(vec!["trial_growth".into(), String::new(), i.to_string(), num(t.growth.unwrap_or(f64::NAN))]);
            }
            io::write_csv(&out, &["quantity", "group", "index", "value"], &rows)?;
            println!(
                "lambda {} predicted_accuracy {}{}",
                num(state.lambda),
                num(predicted_accuracy(&state)),
                if state.undetectable { " (undetectable)" } else { "" }
            );
        }
        Command::Nmf { graph, annotations, k, iters, restarts, seed, out, truth } => {
            let g = io::read_graph(&graph)?;
            let ann = annotations_or_empty(annotations.as_deref(), g.n_nodes())?;
            let stg = tape(&g, &ann)?;
            let res = nmf_cluster_restarts(&stg.b, k, iters, restarts, seed)?;
            io::write_partition(&out, &res.partition)?;
            println!("loss {}", num(res.final_loss()));
            if let Some(p) = truth {
                let planted: Partition = io::read_partition(&p)?;
                println!("accuracy {}", num(accuracy(&res.partition, &planted)?));
            }
        }
        Command::Experiment { config, output_dir } => {
            let mut cfg = load_config(&config)?;
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            let recs = run_experiment(&cfg)?;
            println!("{} records written to {}", recs.len(), scotchtape::experiment::experiment_dir(&cfg).display());
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
