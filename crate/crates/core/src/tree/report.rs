//! Versioned JSON report of a fitted tree, its inverse import, and DOT output.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ExposureTree, HyperParams, Mode, Split, TreeNode};
use crate::error::{Error, Result};
use crate::estimators::Estimate;
use crate::exposure::{Constraint, Partition, Quantization, Side};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub axis_name: String,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub id: usize,
    pub parent: Option<usize>,
    /// `"le"` or `"gt"` relative to the parent split; `None` at the root.
    pub side: Option<Side>,
    pub depth: usize,
    pub split: Option<SplitReport>,
    pub children: Option<[usize; 2]>,
    pub n_train: usize,
    pub n_est: usize,
    pub estimate: Option<f64>,
    pub std_error: Option<f64>,
    pub effective_weight: Option<f64>,
    pub train_value: f64,
    pub wsse_train: f64,
    pub condition: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeReport {
    pub version: u32,
    pub mode: Mode,
    pub columns: Vec<String>,
    pub quantization: Quantization,
    pub n_reps: usize,
    pub hyperparams: HyperParams,
    pub n_leaves: usize,
    pub nodes: Vec<NodeReport>,
}

impl ExposureTree {
    pub fn to_report(&self) -> TreeReport {
        let nodes = self
            .nodes
            .iter()
            .map(|n| NodeReport {
                id: n.id,
                parent: n.parent,
                side: n.parent.map(|p| match self.nodes[p].children {
                    Some((l, _)) if l == n.id => Side::Le,
                    _ => Side::Gt,
                }),
                depth: n.depth,
                split: n.split.map(|s| SplitReport {
                    axis_name: self.columns[s.axis].clone(),
                    theta: s.theta,
                }),
                children: n.children.map(|(l, r)| [l, r]),
                n_train: n.n_train,
                n_est: n.n_est,
                estimate: n.estimate.as_ref().map(|e| e.value),
                std_error: n.estimate.as_ref().map(|e| e.std_error),
                effective_weight: n.estimate.as_ref().map(|e| e.effective_weight),
                train_value: n.train_value,
                wsse_train: n.wsse_train,
                condition: n.condition,
            })
            .collect();
        TreeReport {
            version: REPORT_VERSION,
            mode: self.mode,
            columns: self.columns.clone(),
            quantization: self.quantization,
            n_reps: self.n_reps,
            hyperparams: self.params.clone(),
            n_leaves: self.n_leaves(),
            nodes,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_report())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let report: TreeReport = serde_json::from_str(s)?;
        ExposureTree::from_report(&report)
    }

    /// Rebuilds a tree from its report, checking structural consistency.
    pub fn from_report(report: &TreeReport) -> Result<Self> {
        let bad = |msg: String| Error::MalformedTree(msg);
        if report.version != REPORT_VERSION {
            return Err(bad(format!("unsupported report version {}", report.version)));
        }
        if report.nodes.is_empty() {
            return Err(bad("no nodes".into()));
        }
        let mut nodes: Vec<TreeNode> = Vec::with_capacity(report.nodes.len());
        for (k, n) in report.nodes.iter().enumerate() {
            if n.id != k {
                return Err(bad(format!("node at position {k} has id {}", n.id)));
            }
            let split = match &n.split {
                None => None,
                Some(s) => {
                    let axis = report
                        .columns
                        .iter()
                        .position(|c| *c == s.axis_name)
                        .ok_or_else(|| Error::UnknownAxis(s.axis_name.clone()))?;
                    Some(Split { axis, theta: s.theta })
                }
            };
            if split.is_some() != n.children.is_some() {
                return Err(bad(format!("node {k} has a split without children or vice versa")));
            }
            let estimate = match (n.estimate, n.std_error) {
                (Some(value), Some(std_error)) => Some(Estimate {
                    value,
                    std_error,
                    n_members: n.n_est,
                    effective_weight: n.effective_weight.unwrap_or(f64::NAN),
                }),
                _ => None,
            };
            nodes.push(TreeNode {
                id: k,
                parent: n.parent,
                depth: n.depth,
                partition: Partition::full(),
                split,
                children: n.children.map(|[l, r]| (l, r)),
                n_train: n.n_train,
                train_value: n.train_value,
                wsse_train: n.wsse_train,
                n_est: n.n_est,
                estimate,
                condition: n.condition,
            });
        }
        // Children must point forward and name this node as parent; partitions
        // are rebuilt top-down from the splits.
        for k in 0..nodes.len() {
            let (Some(s), Some((l, r))) = (nodes[k].split, nodes[k].children) else {
                continue;
            };
            for (c, side) in [(l, Side::Le), (r, Side::Gt)] {
                if c <= k || c >= nodes.len() || nodes[c].parent != Some(k) {
                    return Err(bad(format!("node {k} has inconsistent child {c}")));
                }
                nodes[c].partition = nodes[k].partition.with(Constraint {
                    axis: s.axis,
                    threshold: s.theta,
                    side,
                })?;
            }
        }
        Ok(ExposureTree {
            columns: report.columns.clone(),
            mode: report.mode,
            params: report.hyperparams.clone(),
            n_reps: report.n_reps,
            quantization: report.quantization,
            nodes,
        })
    }

    /// Graphviz rendering; one box per node labeled `dₖ: v̂ ± SE (n)`.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph exposure_tree {\n  node [shape=box];\n");
        for n in &self.nodes {
            let name = match n.condition {
                Some(c) => format!("d{c}"),
                None => format!("n{}", n.id),
            };
            let est = match &n.estimate {
                Some(e) => format!("{:.4} ± {:.4}", e.value, e.std_error),
                None => "NA".to_string(),
            };
            let mut label = format!("{name}: {est} ({})", n.n_est);
            if let Some(s) = n.split {
                let _ = write!(label, "\\n{} <= {:.4}", self.columns[s.axis], s.theta);
            }
            let _ = writeln!(out, "  {} [label=\"{}\"];", n.id, label);
        }
        for n in &self.nodes {
            if let Some((l, r)) = n.children {
                let _ = writeln!(out, "  {} -> {} [label=\"yes\"];", n.id, l);
                let _ = writeln!(out, "  {} -> {} [label=\"no\"];", n.id, r);
            }
        }
        out.push_str("}\n");
        out
    }
}
