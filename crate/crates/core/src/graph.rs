//! Undirected pre-treatment network stored as sorted adjacency (CSR).

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Immutable undirected simple graph on dense node ids `0..n_nodes`.
///
/// Neighbor lists are strictly ascending, symmetric and free of self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

/// The 1-hop ego network of a node: its alters and the edges among them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EgoView<'g> {
    pub ego: usize,
    pub alters: &'g [u32],
    /// Adjacent alter pairs `(a, b)` with `a < b`, ordered lexicographically.
    pub alter_edges: Vec<(u32, u32)>,
}

impl Graph {
    /// Builds a graph from an edge iterator. Both orientations and repeated
    /// edges collapse to a single undirected edge.
    pub fn from_edges<I>(n_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n_nodes > u32::MAX as usize {
            return Err(Error::InvalidParameter(format!(
                "n_nodes {n_nodes} exceeds u32 id space"
            )));
        }
        let mut pairs = Vec::new();
        for (u, v) in edges {
            check_edge(u, v, n_nodes)?;
            pairs.push((u as u32, v as u32));
            pairs.push((v as u32, u as u32));
        }
        Ok(Self::from_directed_pairs(n_nodes, pairs))
    }

    fn from_directed_pairs(n_nodes: usize, mut pairs: Vec<(u32, u32)>) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        let mut offsets = vec![0usize; n_nodes + 1];
        for &(u, _) in &pairs {
            offsets[u as usize + 1] += 1;
        }
        for i in 0..n_nodes {
            offsets[i + 1] += offsets[i];
        }
        let targets = pairs.into_iter().map(|(_, v)| v).collect();
        Graph { offsets, targets }
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_edges(&self) -> usize {
        self.targets.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n_nodes() && self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    /// Undirected edges `(u, v)` with `u < v` in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .map(|&v| v as usize)
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    pub fn ego_view(&self, i: usize) -> Result<EgoView<'_>> {
        if i >= self.n_nodes() {
            return Err(Error::NodeOutOfRange {
                id: i,
                n: self.n_nodes(),
            });
        }
        let alters = self.neighbors(i);
        let mut alter_edges = Vec::new();
        self.for_each_alter_edge(alters, |a, b| {
            alter_edges.push((alters[a], alters[b]));
        });
        Ok(EgoView {
            ego: i,
            alters,
            alter_edges,
        })
    }

    /// Calls `f(a, b)` with local alter positions `a < b` for every adjacent
    /// alter pair. Each alter's sorted neighbor list is merged against the
    /// tail of the (sorted) alter list.
    pub(crate) fn for_each_alter_edge<F: FnMut(usize, usize)>(&self, alters: &[u32], mut f: F) {
        for (a, &u) in alters.iter().enumerate() {
            let nu = self.neighbors(u as usize);
            let rest = &alters[a + 1..];
            let (mut p, mut q) = (0usize, 0usize);
            while p < nu.len() && q < rest.len() {
                match nu[p].cmp(&rest[q]) {
                    std::cmp::Ordering::Less => p += 1,
                    std::cmp::Ordering::Greater => q += 1,
                    std::cmp::Ordering::Equal => {
                        f(a, a + 1 + q);
                        p += 1;
                        q += 1;
                    }
                }
            }
        }
    }

    /// Writes one `u v` line per undirected edge.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for (u, v) in self.edges() {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }
}

fn check_edge(u: usize, v: usize, n: usize) -> Result<()> {
    if u >= n {
        return Err(Error::NodeOutOfRange { id: u, n });
    }
    if v >= n {
        return Err(Error::NodeOutOfRange { id: v, n });
    }
    if u == v {
        return Err(Error::SelfLoop(u));
    }
    Ok(())
}

/// Reads a whitespace-separated integer edge list. Blank lines and lines
/// starting with `#` are skipped; every other line must hold exactly two ids.
pub fn load_edge_list<R: BufRead>(source: R, n_nodes: usize) -> Result<Graph> {
    let mut pairs = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut toks = trimmed.split_whitespace();
        let (Some(a), Some(b), None) = (toks.next(), toks.next(), toks.next()) else {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected two node ids, got {trimmed:?}"),
            });
        };
        let parse = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid node id {s:?}"),
            })
        };
        let (u, v) = (parse(a)?, parse(b)?);
        check_edge(u, v, n_nodes).map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        pairs.push((u, v));
    }
    Graph::from_edges(n_nodes, pairs)
}
