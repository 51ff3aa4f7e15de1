#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use causal_motifs::assignment::ring_clusters;
use causal_motifs::simlab::{simulate_data, Dgp, ExperimentConfig};

pub struct Files {
    pub graph: PathBuf,
    pub assign: PathBuf,
    pub outcomes: PathBuf,
    pub clusters: PathBuf,
}

impl Files {
    pub fn design(&self) -> String {
        format!("cluster:{},0.5", self.clusters.display())
    }
}

/// Writes a simulated cluster-randomized experiment as CLI input files.
pub fn write_experiment(dir: &Path, n: usize, seed: u64, dgp: Dgp) -> Files {
    let cfg = ExperimentConfig { n, seed, dgp, reps: 10, ..ExperimentConfig::default() };
    let d = simulate_data(&cfg).unwrap();
    let files = Files {
        graph: dir.join("edges.txt"),
        assign: dir.join("assign.csv"),
        outcomes: dir.join("outcomes.csv"),
        clusters: dir.join("clusters.csv"),
    };
    let mut edges = Vec::new();
    d.graph.write_edge_list(&mut edges).unwrap();
    fs::write(&files.graph, edges).unwrap();
    let mut a = String::from("node,z\n");
    let mut y = String::from("node,y\n");
    let mut c = String::from("node,cluster\n");
    let clusters = ring_clusters(n, cfg.cluster_size);
    for i in 0..n {
        a.push_str(&format!("{i},{}\n", d.z.0[i]));
        y.push_str(&format!("{i},{}\n", d.outcomes.y[i]));
        c.push_str(&format!("{i},{}\n", clusters[i]));
    }
    fs::write(&files.assign, a).unwrap();
    fs::write(&files.outcomes, y).unwrap();
    fs::write(&files.clusters, c).unwrap();
    files
}

pub fn cnm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cnm")).args(args).output().expect("run cnm")
}

pub fn analyze_args<'a>(f: &'a Files, design: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "analyze",
        "--graph",
        f.graph.to_str().unwrap(),
        "--assign",
        f.assign.to_str().unwrap(),
        "--outcomes",
        f.outcomes.to_str().unwrap(),
        "--design",
        design,
        "--out",
        out,
    ]
}
