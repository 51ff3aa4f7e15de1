use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use causal_motifs::assignment::{self, Design};
use causal_motifs::estimators::{self, Estimate};
use causal_motifs::exposure::{observed_features, Quantization, ReplicateFeatures, Side};
use causal_motifs::graph::Graph;
use causal_motifs::motifs::{
    label_counts_with, normalize, Census, FeatureMatrix, MissingPolicy, MotifCatalog, Retention,
};
use causal_motifs::simlab::{self, Dgp, ExperimentConfig, RecoveryReport, RunSeeds, FULL_SCALE_N};
use causal_motifs::tree::{self, ExposureTree, HyperParams, Mode, TreeReport};
use serde::Serialize;

use crate::io::{self, NodeIndex};
use crate::{
    AnalyzeArgs, CatalogArg, DataArgs, DgpArg, ModeArg, MotifsArgs, PolicyArg, QuantArg, SimulateArgs, TreeArgs,
    TuneArgs,
};

const REPORT_VERSION: u32 = 1;

fn catalog(c: CatalogArg) -> MotifCatalog {
    match c {
        CatalogArg::Full => MotifCatalog::full(),
        CatalogArg::Dyad => MotifCatalog::dyad_only(),
        CatalogArg::DyadTriad => MotifCatalog::dyad_triad(),
    }
}

fn policy(p: PolicyArg, threshold: f64) -> MissingPolicy {
    match p {
        PolicyArg::Auto => MissingPolicy::Auto { threshold },
        PolicyArg::DropFeature => MissingPolicy::DropFeature,
        PolicyArg::DropNodes => MissingPolicy::DropNodes,
    }
}

fn quantization(q: QuantArg) -> Quantization {
    match q {
        QuantArg::Fixed16 => Quantization::Fixed16,
        QuantArg::Full => Quantization::Full,
    }
}

fn apply_overrides(mut p: HyperParams, t: &TreeArgs) -> HyperParams {
    if let Some(v) = t.gamma {
        p.gamma = v;
    }
    if let Some(v) = t.kappa {
        p.kappa = v;
    }
    if let Some(v) = t.delta {
        p.delta = v;
    }
    if t.epsilon.is_some() {
        p.epsilon = t.epsilon;
    }
    if let Some(v) = t.eta {
        p.eta = v;
    }
    if t.phi.is_some() {
        p.phi = t.phi;
    }
    if let Some(v) = t.max_depth {
        p.max_depth = v;
    }
    p
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("{}: cannot write", path.display()))
}

/// Everything `analyze` and `tune` need, loaded and aligned.
struct Loaded {
    nodes: NodeIndex,
    graph: Graph,
    retention: Retention,
    features: FeatureMatrix,
    repl: ReplicateFeatures,
    /// Outcomes of retained observations, in row order.
    y: Vec<f64>,
    seeds: RunSeeds,
    params: HyperParams,
}

fn load(d: &DataArgs, cache: Option<&Path>) -> Result<Loaded> {
    let (nodes, z) = io::read_assignment(&d.assignment)?;
    let graph = io::read_graph(&d.graph, &nodes)?;
    let raw_y = io::read_outcomes(&d.outcomes, &nodes)?;
    let design: Design = io::parse_design(&d.design, &nodes)?;
    design.validate(nodes.len())?;
    let cat = catalog(d.catalog);
    let quant = quantization(d.quantization);
    let seeds = RunSeeds::derive(d.seed);

    let census = Census::new(&graph, &cat);
    let unlabeled: Vec<[u64; 4]> = (0..graph.n_nodes()).map(|i| *census.unlabeled(i)).collect();
    let retention = Retention::decide(&unlabeled, &cat, policy(d.policy, d.auto_threshold))?;
    let features = observed_features(&graph, &census, &retention, &z, quant)?;

    let cached = match cache {
        Some(path) if path.exists() => {
            let f = fs::File::open(path).with_context(|| format!("{}: cannot open", path.display()))?;
            let t = ReplicateFeatures::read_cache(BufReader::new(f))
                .with_context(|| format!("{}: bad tensor cache", path.display()))?;
            if t.columns() != features.columns.as_slice()
                || t.nodes() != features.nodes.as_slice()
                || t.n_reps() != d.reps
                || t.quantization() != quant
            {
                bail!("{}: cached tensor does not match this analysis", path.display());
            }
            Some(t)
        }
        _ => None,
    };
    let repl = match cached {
        Some(t) => t,
        None => {
            let zs = assignment::draw_replicates(&design, graph.n_nodes(), d.reps, seeds.replicates)?;
            let t = ReplicateFeatures::from_assignments(&graph, &census, &retention, &zs, quant)?;
            if let Some(path) = cache {
                let f = fs::File::create(path).with_context(|| format!("{}: cannot create", path.display()))?;
                let mut w = BufWriter::new(f);
                t.write_cache(&mut w)?;
                w.flush()?;
            }
            t
        }
    };

    let mut y: Vec<f64> = retention.nodes.iter().map(|&i| raw_y[i]).collect();
    if d.log1p {
        for (k, v) in y.iter_mut().enumerate() {
            if *v <= -1.0 {
                bail!("log1p needs outcomes > -1; node '{}' has {}", nodes.names[retention.nodes[k]], v);
            }
            *v = (*v + 1.0).log10();
        }
    }
    let mut params = apply_overrides(HyperParams::defaults_for(retention.nodes.len()), &d.tree);
    params.seed = seeds.tree;
    params.validate()?;
    Ok(Loaded { nodes, graph, retention, features, repl, y, seeds, params })
}

#[derive(Serialize)]
struct RetentionSummary {
    n_nodes: usize,
    n_obs: usize,
    columns: Vec<String>,
    dropped_kinds: Vec<String>,
    dropped_nodes: usize,
    undefined_fraction: Vec<(String, f64)>,
}

impl RetentionSummary {
    fn new(r: &Retention, n_nodes: usize) -> Self {
        RetentionSummary {
            n_nodes,
            n_obs: r.nodes.len(),
            columns: r.column_names(),
            dropped_kinds: r.dropped_kinds.iter().map(|k| k.tag().to_string()).collect(),
            dropped_nodes: r.dropped_nodes.len(),
            undefined_fraction: r.undefined_fraction.iter().map(|(k, f)| (k.tag().to_string(), *f)).collect(),
        }
    }
}

#[derive(Serialize)]
struct LeafRow {
    condition: usize,
    node: usize,
    rule: String,
    n_train: usize,
    n_est: usize,
    estimate: Option<f64>,
    std_error: Option<f64>,
}

#[derive(Serialize)]
struct AnalysisConfig<'a> {
    data: &'a DataArgs,
    mode: ModeArg,
    seeds: RunSeeds,
    hyperparams: &'a HyperParams,
}

#[derive(Serialize)]
struct AnalysisReport<'a> {
    version: u32,
    config: AnalysisConfig<'a>,
    retention: RetentionSummary,
    gate: Option<Estimate>,
    gate_note: Option<String>,
    degenerate_leaves: Vec<usize>,
    positivity_violations: usize,
    leaves: Vec<LeafRow>,
    tree: TreeReport,
}

fn leaf_rule(t: &ExposureTree, id: usize) -> String {
    let parts: Vec<String> = t
        .node(id)
        .partition
        .constraints()
        .iter()
        .map(|c| {
            let op = match c.side {
                Side::Le => "<=",
                Side::Gt => ">",
            };
            format!("{} {} {}", t.axis_name(c.axis), op, c.threshold)
        })
        .collect();
    if parts.is_empty() {
        "all".to_string()
    } else {
        parts.join(" & ")
    }
}

pub fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let l = load(&a.data, a.cache.as_deref())?;
    let mode = match a.mode {
        ModeArg::Potential => Mode::PotentialOutcome,
        ModeArg::Direct => Mode::DirectEffect,
    };
    let (train, est) = tree::honest_split(l.y.len(), l.seeds.honest_split);
    let fitted = tree::fit(&l.features, &l.y, &l.repl, &train, &l.params, mode)?;
    let fitted = tree::honest_estimate(fitted, &l.features, &l.y, &l.repl, &est)?;
    let (gate, gate_note) = match mode {
        Mode::PotentialOutcome => match estimators::gate(&fitted) {
            Ok(g) => (Some(g), None),
            Err(e) => (None, Some(e.to_string())),
        },
        Mode::DirectEffect => (None, Some("not defined for direct-effect trees".into())),
    };
    let positivity_violations = fitted.verify_positivity(&l.repl)?.iter().filter(|(_, r)| !r.pass).count();
    let leaves: Vec<LeafRow> = fitted
        .leaves()
        .map(|n| LeafRow {
            condition: n.condition.unwrap_or(0),
            node: n.id,
            rule: leaf_rule(&fitted, n.id),
            n_train: n.n_train,
            n_est: n.n_est,
            estimate: n.estimate.map(|e| e.value),
            std_error: n.estimate.map(|e| e.std_error),
        })
        .collect();

    fs::create_dir_all(&a.out).with_context(|| format!("{}: cannot create", a.out.display()))?;
    let report = AnalysisReport {
        version: REPORT_VERSION,
        config: AnalysisConfig { data: &a.data, mode: a.mode, seeds: l.seeds, hyperparams: &l.params },
        retention: RetentionSummary::new(&l.retention, l.graph.n_nodes()),
        gate,
        gate_note,
        degenerate_leaves: tree::degenerate_leaves(&fitted),
        positivity_violations,
        leaves,
        tree: fitted.to_report(),
    };
    write_json(&a.out.join("report.json"), &report)?;
    write_json(&a.out.join("tree.json"), &report.tree)?;
    fs::write(a.out.join("tree.dot"), fitted.to_dot())?;
    let mut w = csv::Writer::from_path(a.out.join("leaves.csv"))?;
    for row in &report.leaves {
        w.serialize(row)?;
    }
    w.flush()?;

    println!("observations: {} of {} nodes", report.retention.n_obs, l.nodes.len());
    println!("columns: {}", report.retention.columns.join(","));
    println!("{:>4}  {:>10}  {:>10}  {:>7}  rule", "d", "estimate", "se", "n_est");
    for r in &report.leaves {
        let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v:.4}"));
        println!("{:>4}  {:>10}  {:>10}  {:>7}  {}", r.condition, fmt(r.estimate), fmt(r.std_error), r.n_est, r.rule);
    }
    match (&report.gate, &report.gate_note) {
        (Some(g), _) => println!("GATE: {:.4} ± {:.4}", g.value, g.std_error),
        (None, Some(note)) => println!("GATE: unavailable ({note})"),
        _ => {}
    }
    Ok(())
}

#[derive(Serialize)]
struct TuneReport<'a> {
    version: u32,
    config: &'a DataArgs,
    folds: usize,
    scores: Vec<tree::CvScore>,
    best: Option<tree::CvScore>,
}

pub fn tune(a: &TuneArgs) -> Result<()> {
    let l = load(&a.data, None)?;
    let (train, _) = tree::honest_split(l.y.len(), l.seeds.honest_split);
    let scores = tree::cross_validate(&l.features, &l.y, &l.repl, &train, &l.params, &a.gammas, &a.kappas, a.folds)?;
    let best = scores
        .iter()
        .min_by(|x, y| x.wsse.total_cmp(&y.wsse))
        .cloned();
    let report = TuneReport { version: REPORT_VERSION, config: &a.data, folds: a.folds, scores, best };
    match &a.out {
        Some(p) => write_json(p, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

pub fn motifs(a: &MotifsArgs) -> Result<()> {
    let (nodes, z) = io::read_assignment(&a.assignment)?;
    let graph = io::read_graph(&a.graph, &nodes)?;
    let cat = catalog(a.catalog);
    let census = Census::new(&graph, &cat);
    let counts = label_counts_with(&census, &graph, &z)?;
    let features = cat.features();

    let mut header = vec!["node".to_string(), "deg".to_string()];
    header.extend(features.iter().map(|f| f.to_string()));
    header.extend(cat.kinds().iter().map(|k| format!("u_{}", k.tag())));
    header.extend(features.iter().map(|f| format!("x_{f}")));
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("{}: cannot create", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(BufWriter::new(sink));
    w.write_record(&header)?;
    for (i, ego) in counts.egos.iter().enumerate() {
        let mut rec = vec![nodes.names[i].clone(), ego.degree().to_string()];
        rec.extend(features.iter().map(|&f| ego.labeled(f).to_string()));
        rec.extend(cat.kinds().iter().map(|&k| ego.unlabeled(k).to_string()));
        let v = normalize(ego, &features);
        rec.extend(v.x.iter().zip(&v.defined).map(|(x, d)| if *d { x.to_string() } else { String::new() }));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn dgp(d: DgpArg) -> Dgp {
    match d {
        DgpArg::Cutoff => Dgp::Cutoff,
        DgpArg::CausalSd => Dgp::CausalSd,
        DgpArg::CorrSd => Dgp::CorrSd,
        DgpArg::Null => Dgp::Null,
    }
}

fn experiment_config(a: &SimulateArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("{}: cannot read", p.display()))?;
            toml::from_str(&text).with_context(|| format!("{}: invalid experiment config", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if a.paper_scale {
        cfg.n = FULL_SCALE_N;
    }
    macro_rules! set {
        ($($field:ident <- $arg:expr),*) => { $(if let Some(v) = $arg { cfg.$field = v; })* };
    }
    set!(n <- a.n, k <- a.k, beta <- a.beta, cluster_size <- a.cluster_size, p <- a.p,
         reps <- a.reps, sigma <- a.sigma, seed <- a.seed);
    if let Some(d) = a.dgp {
        cfg.dgp = dgp(d);
    }
    if a.no_dyad {
        cfg.dyad_baseline = false;
    }
    if a.no_direct {
        cfg.direct_effects = false;
    }
    let t = &a.tree;
    if t.gamma.is_some() {
        cfg.gamma_fraction = None;
    }
    if a.gamma_fraction.is_some() {
        cfg.gamma_fraction = a.gamma_fraction;
    }
    let any_override = t.gamma.is_some()
        || t.kappa.is_some()
        || t.delta.is_some()
        || t.epsilon.is_some()
        || t.eta.is_some()
        || t.phi.is_some()
        || t.max_depth.is_some();
    if any_override {
        let base = cfg.hyperparams.clone().unwrap_or_else(|| HyperParams::defaults_for(cfg.n));
        cfg.hyperparams = Some(apply_overrides(base, t));
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct SimulationSummary {
    runs: usize,
    recovered: usize,
    required_rate: f64,
    pass: bool,
    positivity_violations: usize,
}

#[derive(Serialize)]
struct SimulationReport {
    version: u32,
    config: ExperimentConfig,
    summary: SimulationSummary,
    runs: Vec<RecoveryReport>,
}

fn fmt_est(e: &Option<Estimate>) -> String {
    e.map_or("NA".to_string(), |e| format!("{:.4}±{:.4}", e.value, e.std_error))
}

fn fmt_split(s: &Option<(String, f64)>) -> String {
    s.as_ref().map_or("-".to_string(), |(a, t)| format!("{a}@{t:.3}"))
}

fn table(runs: &[RecoveryReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>6}  {:>14}  {:>14}  {:>5}  {:>17}  {:>17}  {:>17}  {:>14}  ok",
        "seed", "treated-split", "dyad-split", "sig-X", "GATE full", "GATE dyad", "SUTVA diff", "direct-split"
    );
    for r in runs {
        let _ = writeln!(
            out,
            "{:>6}  {:>14}  {:>14}  {:>5}  {:>17}  {:>17}  {:>17}  {:>14}  {}",
            r.config.seed,
            fmt_split(&r.treated_branch_split),
            fmt_split(&r.dyad_treated_branch_split),
            r.significant_interference_splits(),
            fmt_est(&r.gate_full),
            fmt_est(&r.gate_dyad),
            fmt_est(&Some(r.sutva_diff)),
            fmt_split(&r.direct.as_ref().and_then(|d| d.root_split.clone())),
            if r.recovered() { "yes" } else { "no" },
        );
    }
    out
}

pub fn simulate(a: &SimulateArgs) -> Result<bool> {
    let cfg = experiment_config(a)?;
    if a.runs == 0 {
        return Err(anyhow!("--runs must be >= 1"));
    }
    eprintln!(
        "simulating {} run(s): dgp={} n={} k={} beta={} R={}",
        a.runs,
        cfg.dgp.name(),
        cfg.n,
        cfg.k,
        cfg.beta,
        cfg.reps
    );
    let runs = if a.paper_scale {
        let mut v = Vec::with_capacity(a.runs);
        for k in 0..a.runs as u64 {
            let c = ExperimentConfig { seed: cfg.seed.wrapping_add(k), ..cfg.clone() };
            v.push(simlab::run_experiment(&c)?);
            eprintln!("finished run {}/{}", k + 1, a.runs);
        }
        v
    } else {
        simlab::run_many(&cfg, a.runs)?
    };
    let recovered = runs.iter().filter(|r| r.recovered()).count();
    let required_rate = cfg.dgp.required_recovery_rate();
    let summary = SimulationSummary {
        runs: runs.len(),
        recovered,
        required_rate,
        pass: recovered as f64 >= required_rate * runs.len() as f64 - 1e-9,
        positivity_violations: runs.iter().map(|r| r.positivity_violations).sum(),
    };
    print!("{}", table(&runs));
    println!(
        "recovered {}/{} (required {:.0}%): {}",
        summary.recovered,
        summary.runs,
        100.0 * required_rate,
        if summary.pass { "pass" } else { "fail" }
    );
    let pass = summary.pass;
    let report = SimulationReport { version: REPORT_VERSION, config: cfg, summary, runs };
    if let Some(p) = &a.out {
        write_json(p, &report)?;
    }
    Ok(!a.assert_recovery || pass)
}
