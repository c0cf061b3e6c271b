//! Undirected social graph: nodes are individuals, edges are relationships.
//!
//! Each undirected edge is stored exactly once as an ordered pair
//! `(lo, hi)` with `lo < hi`; the edge list is kept sorted and deduplicated
//! so serialization round-trips are byte-exact.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SocialGraph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl SocialGraph {
    /// Builds a graph from raw edge pairs. Pairs may appear in either
    /// orientation and with duplicates; they are normalized, sorted and
    /// deduplicated. Self-loops are rejected.
    pub fn new(num_nodes: usize, raw_edges: &[(usize, usize)]) -> Result<Self> {
        let mut edges = Vec::with_capacity(raw_edges.len());
        for &(u, v) in raw_edges {
            if u == v {
                return Err(Error::validation(format!("self-loop at node {u}")));
            }
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::validation(format!(
                    "edge ({u},{v}) references a node outside [0,{num_nodes})"
                )));
            }
            edges.push((u.min(v), u.max(v)));
        }
        edges.sort_unstable();
        edges.dedup();

        let mut adjacency = vec![Vec::new(); num_nodes];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Ok(Self {
            num_nodes,
            edges,
            adjacency,
        })
    }

    /// Graph with no edges.
    pub fn edgeless(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            edges: Vec::new(),
            adjacency: vec![Vec::new(); num_nodes],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Normalized `(lo, hi)` edge pairs, sorted lexicographically.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    /// Loads an edge list: one edge per line, two whitespace-separated
    /// nonnegative integers. Lines starting with `#` are comments; a
    /// `# nodes <N>` comment overrides the node count inferred from the
    /// maximum node id. A third column is rejected (weighted graphs are
    /// unsupported).
    pub fn from_edge_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);

        let mut raw_edges = Vec::new();
        let mut max_id = None::<usize>;
        let mut header_nodes = None::<usize>;

        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                let mut parts = comment.split_whitespace();
                if parts.next() == Some("nodes") {
                    if let Some(tok) = parts.next() {
                        header_nodes =
                            Some(tok.parse::<usize>().map_err(|e| Error::Parse {
                                path: path.to_path_buf(),
                                line: line_no,
                                msg: format!("bad node count {tok:?}: {e}"),
                            })?);
                    }
                }
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    msg: format!(
                        "expected two node ids, found {} fields (weighted edges are unsupported)",
                        fields.len()
                    ),
                });
            }
            let mut ids = [0usize; 2];
            for (slot, tok) in ids.iter_mut().zip(&fields) {
                *slot = tok.parse::<usize>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    msg: format!("bad node id {tok:?}: {e}"),
                })?;
            }
            if ids[0] == ids[1] {
                return Err(Error::validation(format!(
                    "{}:{}: self-loop at node {}",
                    path.display(),
                    line_no,
                    ids[0]
                )));
            }
            max_id = Some(max_id.map_or(ids[0].max(ids[1]), |m| m.max(ids[0]).max(ids[1])));
            raw_edges.push((ids[0], ids[1]));
        }

        let inferred = max_id.map_or(0, |m| m + 1);
        let num_nodes = match header_nodes {
            Some(n) if n < inferred => {
                return Err(Error::dimension(format!(
                    "header declares {n} nodes but edges reference node {}",
                    inferred - 1
                )))
            }
            Some(n) => n,
            None => inferred,
        };
        Self::new(num_nodes, &raw_edges)
    }

    /// Writes the edge list in the format accepted by [`from_edge_file`],
    /// including the `# nodes` header so isolated trailing nodes survive a
    /// round-trip.
    pub fn write_edge_list(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# nodes {}", self.num_nodes)?;
        for &(u, v) in &self.edges {
            writeln!(w, "{u}\t{v}")?;
        }
        Ok(())
    }
}
