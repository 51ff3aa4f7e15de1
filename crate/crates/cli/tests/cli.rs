mod common;

use std::fs;

use causal_motifs::simlab::Dgp;
use common::{analyze_args, cnm, write_experiment};
use serde_json::Value;

const EDGES: &str = "# ten nodes\na b\na c\nb c\nc d\nd e\ne f\nf g\ng h\nh i\ni j\nj a\nb e\n";
const ASSIGN: &str = "node,z\na,1\nb,0\nc,1\nd,1\ne,0\nf,0\ng,1\nh,0\ni,1\nj,0\n";
const OUTCOMES: &str = "node,y\na,1.5\nb,0.2\nc,2.0\nd,1.1\ne,0.3\nf,0.1\ng,1.9\nh,0.0\ni,1.7\nj,0.4\n";

fn tiny(dir: &std::path::Path) -> (String, String, String) {
    let p = |name: &str, body: &str| {
        let path = dir.join(name);
        fs::write(&path, body).unwrap();
        path.to_str().unwrap().to_string()
    };
    (p("edges.txt", EDGES), p("assign.csv", ASSIGN), p("outcomes.csv", OUTCOMES))
}

fn stderr(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn analyze_smoke_on_ten_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let (g, a, y) = tiny(dir.path());
    let out = dir.path().join("out");
    let o = cnm(&[
        "analyze", "--graph", &g, "--assign", &a, "--outcomes", &y, "--design", "bernoulli:0.5",
        "--catalog", "dyad", "--R", "50", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["report.json", "tree.json", "tree.dot", "leaves.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["tree"]["n_leaves"], 1);
    assert_eq!(report["tree"]["columns"], serde_json::json!(["Z", "2-0", "2-1"]));
}

#[test]
fn motifs_dump_has_one_row_per_node() {
    let dir = tempfile::tempdir().unwrap();
    let (g, a, _) = tiny(dir.path());
    let out = dir.path().join("motifs.csv");
    let o = cnm(&["motifs", "--graph", &g, "--assign", &a, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("node,deg"));
    assert!(header.contains("x_3c-2"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10);
    // a: neighbors b, c, j; b-c adjacent, so one closed triad with c treated
    assert!(rows[0].starts_with("a,3,"), "{}", rows[0]);
}

#[test]
fn malformed_input_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let (_, a, y) = tiny(dir.path());
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "a b\nb\n").unwrap();
    let o = cnm(&[
        "analyze", "--graph", bad.to_str().unwrap(), "--assign", &a, "--outcomes", &y, "--design",
        "bernoulli:0.5", "--out", dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.txt:2"), "{}", stderr(&o));

    let o = cnm(&[
        "analyze", "--graph", bad.to_str().unwrap(), "--assign", &a, "--outcomes", &y, "--design", "coin:0.5",
        "--out", dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn dyad_catalog_restricts_split_axes() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_experiment(dir.path(), 4000, 3, Dgp::Cutoff);
    let design = f.design();
    let out = dir.path().join("out");
    let mut args = analyze_args(&f, &design, out.to_str().unwrap());
    args.extend(["--catalog", "dyad", "--R", "50", "--kappa", "50"]);
    let o = cnm(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let tree: Value = serde_json::from_str(&fs::read_to_string(out.join("tree.json")).unwrap()).unwrap();
    let mut splits = 0;
    for node in tree["nodes"].as_array().unwrap() {
        if let Some(s) = node["split"].as_object() {
            splits += 1;
            let axis = s["axis_name"].as_str().unwrap();
            assert!(["Z", "2-0", "2-1"].contains(&axis), "{axis}");
        }
    }
    assert!(splits > 0);
}

#[test]
fn analyze_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_experiment(dir.path(), 3000, 5, Dgp::Cutoff);
    let design = f.design();
    let mut reports = Vec::new();
    for (k, threads) in ["1", "1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("out{k}"));
        let mut args = analyze_args(&f, &design, out.to_str().unwrap());
        args.extend(["--R", "40", "--threads", threads]);
        let o = cnm(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        reports.push((fs::read(out.join("report.json")).unwrap(), fs::read(out.join("tree.dot")).unwrap()));
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);
}

#[test]
fn replicate_cache_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_experiment(dir.path(), 2000, 8, Dgp::Null);
    let design = f.design();
    let cache = dir.path().join("repl.bin");
    let mut reports = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("out{k}"));
        let mut args = analyze_args(&f, &design, out.to_str().unwrap());
        args.extend(["--R", "30", "--cache", cache.to_str().unwrap()]);
        let o = cnm(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        reports.push(fs::read(out.join("tree.json")).unwrap());
    }
    assert!(cache.exists());
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn direct_mode_and_tune_run() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_experiment(dir.path(), 3000, 2, Dgp::Cutoff);
    let design = f.design();
    let out = dir.path().join("direct");
    let mut args = analyze_args(&f, &design, out.to_str().unwrap());
    args.extend(["--R", "30", "--mode", "direct"]);
    let o = cnm(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let tree: Value = serde_json::from_str(&fs::read_to_string(out.join("tree.json")).unwrap()).unwrap();
    assert_eq!(tree["mode"], "direct-effect");
    for node in tree["nodes"].as_array().unwrap() {
        if let Some(s) = node["split"].as_object() {
            assert_ne!(s["axis_name"], "Z");
        }
    }

    let scores = dir.path().join("tune.json");
    let o = cnm(&[
        "tune", "--graph", f.graph.to_str().unwrap(), "--assign", f.assign.to_str().unwrap(), "--outcomes",
        f.outcomes.to_str().unwrap(), "--design", &design, "--R", "30", "--gammas", "0,50", "--kappas", "50,200",
        "--folds", "3", "--out", scores.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(scores).unwrap()).unwrap();
    assert_eq!(v["scores"].as_array().unwrap().len(), 4);
}

#[test]
fn simulate_writes_report_and_honours_assert_recovery() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim.json");
    let o = cnm(&[
        "simulate", "--dgp", "cutoff", "--n", "3000", "--R", "30", "--runs", "2", "--no-direct", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["runs"].as_array().unwrap().len(), 2);
    assert_eq!(v["config"]["n"], 3000);

    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "n = 2000\nR = 20\ndgp = \"null\"\ndirect_effects = false\ndyad_baseline = false\n").unwrap();
    let o = cnm(&["simulate", "--config", cfg.to_str().unwrap(), "--runs", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    fs::write(&cfg, "n = 2000\nbogus = 1\n").unwrap();
    let o = cnm(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
