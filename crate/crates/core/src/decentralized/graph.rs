use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Undirected simple graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkGraph {
    nodes: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl NetworkGraph {
    pub fn new(nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::usage("graph needs at least one node"));
        }
        let mut neighbors = vec![Vec::new(); nodes];
        for &(i, j) in &edges {
            if i >= nodes || j >= nodes {
                return Err(Error::usage(format!("edge ({i}, {j}) has a node outside [0, {nodes})")));
            }
            if i == j {
                return Err(Error::usage(format!("self-loop at node {i}")));
            }
            if neighbors[i].contains(&j) {
                return Err(Error::usage(format!("duplicate edge ({i}, {j})")));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Ok(NetworkGraph { nodes, edges, neighbors })
    }

    /// Cycle `0 - 1 - ... - (n-1) - 0`; a single edge for `n = 2`.
    pub fn ring(nodes: usize) -> Result<Self> {
        let edges = match nodes {
            0 | 1 => Vec::new(),
            2 => vec![(0, 1)],
            n => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        };
        Self::new(nodes, edges)
    }

    /// Parses `V E` followed by `E` lines `i j`. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let pair = |n: usize, l: &str| -> Result<(usize, usize)> {
            let v: Vec<&str> = l.split_whitespace().collect();
            if v.len() != 2 {
                return Err(Error::parse(format!("graph line {n}"), "expected two integers"));
            }
            let p = |s: &str| s.parse::<usize>().map_err(|e| Error::parse(format!("graph line {n}"), e.to_string()));
            Ok((p(v[0])?, p(v[1])?))
        };
        let (n, head) = lines.next().ok_or_else(|| Error::parse("graph", "empty file"))?;
        let (v, e) = pair(n, head)?;
        let mut edges = Vec::with_capacity(e);
        for (n, l) in lines {
            edges.push(pair(n, l)?);
        }
        if edges.len() != e {
            return Err(Error::parse("graph", format!("header declares {e} edges, found {}", edges.len())));
        }
        Self::new(v, edges)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.nodes, self.edges.len());
        for (i, j) in &self.edges {
            s.push_str(&format!("{i} {j}\n"));
        }
        s
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Both orientations of every edge: `(i, j), (j, i)` in edge order.
    pub fn directed(&self) -> Vec<(usize, usize)> {
        self.edges.iter().flat_map(|&(i, j)| [(i, j), (j, i)]).collect()
    }
}
