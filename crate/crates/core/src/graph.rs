//! Directed weighted edge-list graphs and their TSV / DOT export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

/// Read-only view shared by the NFT graph, the collection graph and plain fixtures.
pub trait DirectedGraph {
    fn node_count(&self) -> usize;
    fn node_label(&self, node: usize) -> &str;
    fn edges(&self) -> &[Edge];

    fn edge_count(&self) -> usize {
        self.edges().len()
    }

    fn in_degrees(&self) -> Vec<u64> {
        let mut deg = vec![0u64; self.node_count()];
        for e in self.edges() {
            deg[e.target] += 1;
        }
        deg
    }

    fn out_degrees(&self) -> Vec<u64> {
        let mut deg = vec![0u64; self.node_count()];
        for e in self.edges() {
            deg[e.source] += 1;
        }
        deg
    }
}

/// Plain labelled digraph.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Digraph {
    labels: Vec<String>,
    edges: Vec<Edge>,
}

impl Digraph {
    pub fn new(labels: Vec<String>, edges: Vec<Edge>) -> Result<Self> {
        let n = labels.len();
        if let Some(e) = edges.iter().find(|e| e.source >= n || e.target >= n) {
            return Err(Error::InvalidArgument(format!(
                "edge {} -> {} out of range for {n} nodes",
                e.source, e.target
            )));
        }
        Ok(Digraph { labels, edges })
    }

    /// Nodes labelled `0..n`, unit weights.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let labels = (0..n).map(|i| i.to_string()).collect();
        let edges = pairs
            .iter()
            .map(|&(source, target)| Edge {
                source,
                target,
                weight: 1.0,
            })
            .collect();
        Digraph::new(labels, edges)
    }

    pub fn from_view<G: DirectedGraph + ?Sized>(g: &G) -> Self {
        Digraph {
            labels: (0..g.node_count()).map(|i| g.node_label(i).to_string()).collect(),
            edges: g.edges().to_vec(),
        }
    }
}

impl DirectedGraph for Digraph {
    fn node_count(&self) -> usize {
        self.labels.len()
    }

    fn node_label(&self, node: usize) -> &str {
        &self.labels[node]
    }

    fn edges(&self) -> &[Edge] {
        &self.edges
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeListFormat {
    #[default]
    Tsv,
    Dot,
}

impl FromStr for EdgeListFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(EdgeListFormat::Tsv),
            "dot" => Ok(EdgeListFormat::Dot),
            other => Err(Error::Config(format!("unsupported edge-list format `{other}`"))),
        }
    }
}

/// Fixed six-decimal rendering used by every exported weight.
pub fn format_weight(w: f64) -> String {
    format!("{w:.6}")
}

fn dot_id(label: &str) -> String {
    let escaped = label.replace('\\', "\\\\").replace('"', "\\\"");
    format!("\"{escaped}\"")
}

pub fn render_edge_list<G: DirectedGraph + ?Sized>(graph: &G, format: EdgeListFormat) -> String {
    let mut out = String::new();
    match format {
        EdgeListFormat::Tsv => {
            out.push_str("source\ttarget\tweight\n");
            for e in graph.edges() {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}",
                    graph.node_label(e.source),
                    graph.node_label(e.target),
                    format_weight(e.weight)
                );
            }
        }
        EdgeListFormat::Dot => {
            out.push_str("digraph inspiration {\n");
            for i in 0..graph.node_count() {
                let _ = writeln!(out, "  {};", dot_id(graph.node_label(i)));
            }
            for e in graph.edges() {
                let _ = writeln!(
                    out,
                    "  {} -> {} [weight={}];",
                    dot_id(graph.node_label(e.source)),
                    dot_id(graph.node_label(e.target)),
                    format_weight(e.weight)
                );
            }
            out.push_str("}\n");
        }
    }
    out
}

/// Writes the edge list and returns the number of edge rows written.
pub fn export_edge_list<G: DirectedGraph + ?Sized>(
    graph: &G,
    path: &Path,
    format: EdgeListFormat,
) -> Result<usize> {
    fs::write(path, render_edge_list(graph, format)).map_err(|e| Error::io(path, e))?;
    Ok(graph.edge_count())
}

/// One node label per line, in node order.
pub fn render_node_list<G: DirectedGraph + ?Sized>(graph: &G) -> String {
    let mut out = String::new();
    for i in 0..graph.node_count() {
        out.push_str(graph.node_label(i));
        out.push('\n');
    }
    out
}

/// Reads a TSV edge list written by [`export_edge_list`].
///
/// Nodes come from `nodes_path` (one label per line, which keeps isolated
/// nodes) or, without it, from the edge endpoints in ascending order.
pub fn load_edge_list(edges_path: &Path, nodes_path: Option<&Path>) -> Result<Digraph> {
    let text = fs::read_to_string(edges_path).map_err(|e| Error::io(edges_path, e))?;
    let bad = |line: usize, message: String| Error::MalformedRow {
        path: edges_path.to_path_buf(),
        line: line as u64,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == "source\ttarget\tweight" => {}
        _ => return Err(bad(1, "expected header `source<TAB>target<TAB>weight`".into())),
    }
    let mut raw = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(bad(i + 1, format!("expected 3 columns, found {}", cols.len())));
        }
        let w: f64 = cols[2]
            .parse()
            .map_err(|_| bad(i + 1, format!("bad weight `{}`", cols[2])))?;
        raw.push((cols[0].to_string(), cols[1].to_string(), w, i + 1));
    }
    let labels: Vec<String> = match nodes_path {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| Error::io(p, e))?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim_end().to_string())
            .collect(),
        None => {
            let set: std::collections::BTreeSet<&String> =
                raw.iter().flat_map(|(s, t, _, _)| [s, t]).collect();
            set.into_iter().cloned().collect()
        }
    };
    let index: std::collections::HashMap<&str, usize> =
        labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut edges = Vec::with_capacity(raw.len());
    for (s, t, weight, line) in &raw {
        let lookup = |id: &str| {
            index.get(id).copied().ok_or_else(|| Error::UnknownAsset {
                asset_id: id.to_string(),
                line: *line as u64,
            })
        };
        edges.push(Edge {
            source: lookup(s)?,
            target: lookup(t)?,
            weight: *weight,
        });
    }
    edges.sort_by_key(|e| (e.source, e.target));
    Digraph::new(labels, edges)
}
