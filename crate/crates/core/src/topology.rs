//! Directed communication graphs with mandatory self-loops.
//!
//! An edge `(i, j)` means agent `j` can send its state to agent `i`, so the
//! in-neighborhood `N_i` is `{j : (i, j) ∈ E}`.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    // in_adj[i] = sorted N_i, out_adj[j] = sorted {i : (i, j) ∈ E}
    in_adj: Vec<Vec<usize>>,
    out_adj: Vec<Vec<usize>>,
}

impl CommGraph {
    /// Builds a graph from ordered pairs; missing self-loops are added.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one agent".into()));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::BadAgent { id: i.max(j), n });
            }
            set.insert((i, j));
        }
        let missing = (0..n).filter(|i| !set.contains(&(*i, *i))).count();
        if missing > 0 {
            log::warn!("added {missing} missing self-loop(s)");
            set.extend((0..n).map(|i| (i, i)));
        }
        let mut in_adj = vec![Vec::new(); n];
        let mut out_adj = vec![Vec::new(); n];
        for &(i, j) in &set {
            in_adj[i].push(j);
            out_adj[j].push(i);
        }
        Ok(Self { n, edges: set, in_adj, out_adj })
    }

    /// Each agent talks to every agent within circular distance `hops`, both ways.
    pub fn ring(n: usize, hops: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!("ring needs N >= 2, got {n}")));
        }
        if hops == 0 || 2 * hops >= n {
            return Err(Error::InvalidGraph(format!("ring hops must satisfy 1 <= hops < N/2, got hops={hops} N={n}")));
        }
        let edges = (0..n).flat_map(|i| (0..=hops).flat_map(move |h| [(i, (i + h) % n), (i, (i + n - h) % n)]));
        Self::from_edges(n, edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::from_edges(n, (0..n).flat_map(|i| (0..n).map(move |j| (i, j))))
    }

    /// Parses an edge list: one `i j` pair per line, 0-indexed, `#` comments.
    /// The agent count is one more than the largest id unless `n` is given.
    pub fn parse_edge_list(text: &str, n: Option<usize>, origin: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { path: origin.to_string(), line: lineno + 1, msg };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(parse_err(format!("expected two agent ids, found {} fields", fields.len())));
            }
            let id = |s: &str| s.parse::<usize>().map_err(|e| parse_err(format!("bad agent id {s:?}: {e}")));
            edges.push((id(fields[0])?, id(fields[1])?));
        }
        let inferred = edges.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0);
        let n = n.unwrap_or(inferred);
        Self::from_edges(n, edges)
    }

    pub fn load_edge_list(path: &Path, n: Option<usize>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_edge_list(&text, n, &path.display().to_string())
    }

    pub fn agent_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j))
    }

    /// `N_i`, sorted, including `i` itself.
    pub fn in_neighbors(&self, i: usize) -> Result<&[usize]> {
        self.in_adj.get(i).map(Vec::as_slice).ok_or(Error::BadAgent { id: i, n: self.n })
    }

    /// `{i : (i, j) ∈ E}`, sorted, including `j` itself.
    pub fn out_neighbors(&self, j: usize) -> Result<&[usize]> {
        self.out_adj.get(j).map(Vec::as_slice).ok_or(Error::BadAgent { id: j, n: self.n })
    }

    pub fn is_strongly_connected(&self) -> bool {
        let reaches_all = |adj: &Vec<Vec<usize>>| {
            let mut seen = vec![false; self.n];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(v) = stack.pop() {
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reaches_all(&self.in_adj) && reaches_all(&self.out_adj)
    }
}
