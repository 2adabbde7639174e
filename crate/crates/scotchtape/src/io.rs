use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use scotchtape_core::sbm::{symmetric_to_block, BlockSpec, SymmetricSpec};
use scotchtape_core::{AnnotationSet, Graph, Partition};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

fn header_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    line.strip_prefix('#')?.trim().strip_prefix(key)?.strip_prefix('=')
}

pub fn parse_graph(text: &str) -> Result<Graph> {
    let mut n = None;
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(v) = header_value(line, "nodes") {
                n = Some(v.trim().parse::<usize>().with_context(|| format!("line {}: bad node count", lineno + 1))?);
            }
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            bail!("line {}: expected two node indices", lineno + 1);
        };
        let a: usize = a.parse().with_context(|| format!("line {}: bad index {a:?}", lineno + 1))?;
        let b: usize = b.parse().with_context(|| format!("line {}: bad index {b:?}", lineno + 1))?;
        edges.push((a, b));
    }
    let n = n.ok_or_else(|| anyhow!("missing #nodes=N header"))?;
    Ok(Graph::new(n, edges)?)
}

pub fn format_graph(graph: &Graph) -> String {
    let mut out = format!("#nodes={}\n", graph.n_nodes());
    for &(a, b) in graph.edges() {
        let _ = writeln!(out, "{a}\t{b}");
    }
    out
}

pub fn parse_annotations(text: &str, n_nodes: usize) -> Result<AnnotationSet> {
    let mut names = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, members) = line
            .split_once('\t')
            .ok_or_else(|| anyhow!("line {}: expected name<TAB>members", lineno + 1))?;
        let members = members
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<usize>().with_context(|| format!("line {}: bad member {s:?}", lineno + 1)))
            .collect::<Result<Vec<_>>>()?;
        names.push(name.to_string());
        labels.push(members);
    }
    Ok(AnnotationSet::with_names(n_nodes, labels, names)?)
}

pub fn format_annotations(annotations: &AnnotationSet) -> String {
    let mut out = String::new();
    for (name, set) in annotations.names().iter().zip(annotations.labels()) {
        let members: Vec<String> = set.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(out, "{name}\t{}", members.join(","));
    }
    out
}

pub fn parse_partition(text: &str) -> Result<Partition> {
    let mut k = None;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(v) = header_value(line, "groups") {
                k = Some(v.trim().parse::<usize>().context("bad group count")?);
            }
            continue;
        }
        let (i, g) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| anyhow!("line {}: expected node<TAB>group", lineno + 1))?;
        let i: usize = i.trim().parse().with_context(|| format!("line {}: bad node", lineno + 1))?;
        let g: usize = g.trim().parse().with_context(|| format!("line {}: bad group", lineno + 1))?;
        rows.push((i, g));
    }
    rows.sort_unstable();
    for (pos, &(i, _)) in rows.iter().enumerate() {
        if i != pos {
            bail!("partition must list nodes 0..N exactly once (problem at node {pos})");
        }
    }
    let labels: Vec<usize> = rows.into_iter().map(|(_, g)| g).collect();
    let k = k.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    Ok(Partition::new(labels, k)?)
}

pub fn format_partition(partition: &Partition) -> String {
    let mut out = format!("#groups={}\n", partition.n_groups());
    for (i, g) in partition.labels().iter().enumerate() {
        let _ = writeln!(out, "{i}\t{g}");
    }
    out
}

/// A block spec file holds either explicit `(group_sizes, edge_counts)` or
/// a two-group symmetric spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpecFile {
    Block(BlockSpec),
    Symmetric(SymmetricSpec),
}

impl SpecFile {
    pub fn to_block(&self) -> Result<(BlockSpec, Partition)> {
        match self {
            SpecFile::Block(b) => {
                b.validate()?;
                Ok((b.clone(), b.partition()))
            }
            SpecFile::Symmetric(s) => Ok(symmetric_to_block(s)?),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_graph(path: &Path) -> Result<Graph> {
    parse_graph(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_graph(path: &Path, graph: &Graph) -> Result<()> {
    write_text(path, &format_graph(graph))
}

pub fn read_annotations(path: &Path, n_nodes: usize) -> Result<AnnotationSet> {
    parse_annotations(&read(path)?, n_nodes).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_annotations(path: &Path, annotations: &AnnotationSet) -> Result<()> {
    write_text(path, &format_annotations(annotations))
}

pub fn read_partition(path: &Path) -> Result<Partition> {
    parse_partition(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_partition(path: &Path, partition: &Partition) -> Result<()> {
    write_text(path, &format_partition(partition))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Writes rows as CSV with a header.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_text(path, &csv_string(header, rows)?)
}

pub fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        if r.len() != header.len() {
            bail!("csv row has {} fields, header has {}", r.len(), header.len());
        }
        w.write_record(r)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?)?)
}

/// Shortest round-trip representation; NaN and infinities spelled out.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}
