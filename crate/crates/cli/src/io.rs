//! Ingestion of observed experiments: string node ids, edge lists, CSVs.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use causal_motifs::assignment::{AssignmentVector, Design};
use causal_motifs::graph::Graph;

/// Node ids as they appear in input files, in assignment-file order.
#[derive(Debug, Clone)]
pub struct NodeIndex {
    pub names: Vec<String>,
    index: HashMap<String, usize>,
}

impl NodeIndex {
    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).with_context(|| format!("{}: cannot open", path.display()))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(file))
}

fn records(path: &Path, expect: &[&str]) -> Result<Vec<(u64, Vec<String>)>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().with_context(|| format!("{}: unreadable header", path.display()))?.clone();
    let mut cols = Vec::new();
    for want in expect {
        let c = headers
            .iter()
            .position(|h| h == *want)
            .ok_or_else(|| anyhow!("{}: header lacks column '{}'", path.display(), want))?;
        cols.push(c);
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("{}: malformed CSV", path.display()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let fields = cols
            .iter()
            .map(|&c| {
                rec.get(c)
                    .map(str::to_string)
                    .ok_or_else(|| anyhow!("{}:{}: missing field", path.display(), line))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push((line, fields));
    }
    Ok(out)
}

/// Reads `node,z` rows; the file fixes the node set and its order.
pub fn read_assignment(path: &Path) -> Result<(NodeIndex, AssignmentVector)> {
    let mut names = Vec::new();
    let mut index = HashMap::new();
    let mut z = Vec::new();
    for (line, f) in records(path, &["node", "z"])? {
        let v = match f[1].as_str() {
            "0" => 0,
            "1" => 1,
            other => bail!("{}:{}: z must be 0 or 1, got '{}'", path.display(), line, other),
        };
        if index.insert(f[0].clone(), names.len()).is_some() {
            bail!("{}:{}: duplicate node '{}'", path.display(), line, f[0]);
        }
        names.push(f[0].clone());
        z.push(v);
    }
    if names.is_empty() {
        bail!("{}: no nodes", path.display());
    }
    Ok((NodeIndex { names, index }, AssignmentVector(z)))
}

/// Reads `node,y` rows into a vector aligned with `nodes`; every node needs
/// exactly one outcome.
pub fn read_outcomes(path: &Path, nodes: &NodeIndex) -> Result<Vec<f64>> {
    let mut y = vec![f64::NAN; nodes.len()];
    let mut seen = vec![false; nodes.len()];
    for (line, f) in records(path, &["node", "y"])? {
        let i = nodes
            .get(&f[0])
            .ok_or_else(|| anyhow!("{}:{}: unknown node '{}'", path.display(), line, f[0]))?;
        if seen[i] {
            bail!("{}:{}: duplicate node '{}'", path.display(), line, f[0]);
        }
        let v: f64 = f[1]
            .parse()
            .map_err(|_| anyhow!("{}:{}: outcome '{}' is not a number", path.display(), line, f[1]))?;
        if !v.is_finite() {
            bail!("{}:{}: outcome must be finite", path.display(), line);
        }
        y[i] = v;
        seen[i] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        bail!("{}: no outcome for node '{}'", path.display(), nodes.names[i]);
    }
    Ok(y)
}

/// Reads a whitespace-separated edge list over the ids of `nodes`. Blank
/// lines and `#` comments are skipped.
pub fn read_graph(path: &Path, nodes: &NodeIndex) -> Result<Graph> {
    let file = File::open(path).with_context(|| format!("{}: cannot open", path.display()))?;
    let mut edges = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("{}:{}: unreadable line", path.display(), k + 1))?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let parts: Vec<&str> = body.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
        if parts.len() != 2 {
            bail!("{}:{}: expected two node ids", path.display(), k + 1);
        }
        let lookup = |s: &str| {
            nodes
                .get(s)
                .ok_or_else(|| anyhow!("{}:{}: node '{}' not in assignment file", path.display(), k + 1, s))
        };
        let (u, v) = (lookup(parts[0])?, lookup(parts[1])?);
        if u == v {
            bail!("{}:{}: self-loop on '{}'", path.display(), k + 1, parts[0]);
        }
        edges.push((u, v));
    }
    Ok(Graph::from_edges(nodes.len(), edges)?)
}

/// Parses `bernoulli:p` or `cluster:path,p`; cluster files hold `node,cluster`.
pub fn parse_design(spec: &str, nodes: &NodeIndex) -> Result<Design> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| anyhow!("design '{spec}' must look like bernoulli:p or cluster:path,p"))?;
    let parse_p = |s: &str| -> Result<f64> {
        let p: f64 = s.trim().parse().map_err(|_| anyhow!("design probability '{s}' is not a number"))?;
        if !(p > 0.0 && p < 1.0) {
            bail!("design probability {p} outside (0,1)");
        }
        Ok(p)
    };
    match kind {
        "bernoulli" => Ok(Design::IndependentBernoulli { p: parse_p(rest)? }),
        "cluster" => {
            let (file, p) = rest
                .rsplit_once(',')
                .ok_or_else(|| anyhow!("cluster design needs 'cluster:path,p'"))?;
            let path = Path::new(file);
            let mut labels: HashMap<String, u32> = HashMap::new();
            let mut cluster_of = vec![u32::MAX; nodes.len()];
            for (line, f) in records(path, &["node", "cluster"])? {
                let i = nodes
                    .get(&f[0])
                    .ok_or_else(|| anyhow!("{}:{}: unknown node '{}'", path.display(), line, f[0]))?;
                let next = labels.len() as u32;
                cluster_of[i] = *labels.entry(f[1].clone()).or_insert(next);
            }
            if let Some(i) = cluster_of.iter().position(|&c| c == u32::MAX) {
                bail!("{}: node '{}' has no cluster", path.display(), nodes.names[i]);
            }
            Ok(Design::ClusterBernoulli { cluster_of, p: parse_p(p)? })
        }
        other => bail!("unknown design kind '{other}'"),
    }
}
