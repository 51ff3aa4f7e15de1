use super::*;
use crate::assignment::{draw, Design};
use crate::exposure::{observed_features, replicate_features};
use crate::motifs::{Census, MissingPolicy, MotifCatalog, Retention};
use crate::simlab::{watts_strogatz, WsConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Fixture {
    features: FeatureMatrix,
    repl: ReplicateFeatures,
}

fn fixture(n: usize, catalog: MotifCatalog) -> Fixture {
    let g = watts_strogatz(&WsConfig { n, k: 10, beta: 0.5, seed: 3 }).unwrap();
    let design = Design::IndependentBernoulli { p: 0.5 };
    let (repl, retention) =
        replicate_features(&g, &design, &catalog, MissingPolicy::DropNodes, 60, 17, Quantization::Fixed16).unwrap();
    let census = Census::new(&g, &catalog);
    let z = draw(&design, n, 5).unwrap();
    let features = observed_features(&g, &census, &retention, &z, Quantization::Fixed16).unwrap();
    let _: &Retention = &retention;
    Fixture { features, repl }
}

fn small_params() -> HyperParams {
    HyperParams { kappa: 20, ..HyperParams::defaults_for(0) }
}

#[test]
fn constant_outcome_gives_single_leaf() {
    let f = fixture(400, MotifCatalog::dyad_triad());
    let y = vec![3.0; f.features.n_rows()];
    let all: Vec<usize> = (0..y.len()).collect();
    let t = fit(&f.features, &y, &f.repl, &all, &small_params(), Mode::PotentialOutcome).unwrap();
    assert_eq!(t.nodes().len(), 1);
    assert_eq!(t.n_leaves(), 1);
    assert_eq!(t.assign_condition(&vec![0.3; t.columns().len()]).unwrap(), 0);
}

#[test]
fn dominant_direct_effect_splits_on_z_first() {
    let f = fixture(600, MotifCatalog::dyad_triad());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let y: Vec<f64> = (0..f.features.n_rows())
        .map(|i| 10.0 * f.features.value(i, 0) + 0.1 * (rng.random::<f64>() - 0.5))
        .collect();
    let all: Vec<usize> = (0..y.len()).collect();
    let t = fit(&f.features, &y, &f.repl, &all, &small_params(), Mode::PotentialOutcome).unwrap();
    let s = t.root().split.unwrap();
    assert_eq!((s.axis, s.theta), (0, 0.0));
}

#[test]
fn empty_training_set_is_an_error() {
    let f = fixture(200, MotifCatalog::dyad_only());
    let y = vec![0.0; f.features.n_rows()];
    assert!(matches!(
        fit(&f.features, &y, &f.repl, &[], &small_params(), Mode::PotentialOutcome),
        Err(Error::NoMembers)
    ));
}

fn signal_tree(seed: u64) -> (Fixture, Vec<f64>, ExposureTree) {
    let f = fixture(800, MotifCatalog::dyad_triad());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let col = f.features.column_index("2-1").unwrap();
    let y: Vec<f64> = (0..f.features.n_rows())
        .map(|i| {
            let x = f.features.row(i);
            x[0] * (1.0 + 2.0 * (x[col] > 0.5) as u8 as f64) + rng.random::<f64>()
        })
        .collect();
    let (train, est) = honest_split(y.len(), seed);
    let t = fit(&f.features, &y, &f.repl, &train, &small_params(), Mode::PotentialOutcome).unwrap();
    let t = honest_estimate(t, &f.features, &y, &f.repl, &est).unwrap();
    (f, y, t)
}

#[test]
fn leaves_cover_rows_exactly_once() {
    let (f, _, t) = signal_tree(2);
    assert!(t.n_leaves() > 1);
    let mut counts = vec![0usize; t.nodes().len()];
    for i in 0..f.features.n_rows() {
        let leaf = t.assign_condition(f.features.row(i)).unwrap();
        assert!(t.node(leaf).is_leaf());
        assert!(t.node(leaf).partition.contains(f.features.row(i)));
        counts[leaf] += 1;
    }
    assert_eq!(counts.iter().sum::<usize>(), f.features.n_rows());
    let conditions: Vec<usize> = t.leaves().map(|l| l.condition.unwrap()).collect();
    assert_eq!(conditions, (1..=t.n_leaves()).collect::<Vec<_>>());
}

#[test]
fn accepted_splits_reduce_objective_by_more_than_gamma() {
    let (_, _, t) = signal_tree(4);
    for n in t.nodes() {
        if let Some((l, r)) = n.children {
            let (a, b) = (t.node(l), t.node(r));
            let total = (a.n_train + b.n_train) as f64;
            let obj = a.n_train as f64 / total * a.wsse_train + b.n_train as f64 / total * b.wsse_train;
            assert!(obj < n.wsse_train - t.params().gamma + 1e-9 * n.wsse_train.abs());
            assert!(a.n_train >= t.params().kappa && b.n_train >= t.params().kappa);
        }
    }
}

#[test]
fn every_leaf_passes_positivity() {
    let (f, _, t) = signal_tree(5);
    for (_, res) in t.verify_positivity(&f.repl).unwrap() {
        assert!(res.pass, "{res:?}");
    }
}

#[test]
fn boundary_goes_left() {
    let (_, _, t) = signal_tree(6);
    let root = t.root();
    let (s, (l, _)) = (root.split.unwrap(), root.children.unwrap());
    let mut row = vec![0.0; t.columns().len()];
    row[s.axis] = s.theta;
    let leaf = t.assign_condition(&row).unwrap();
    assert!(t.node(leaf).partition.contains(&row));
    let mut id = leaf;
    while t.node(id).parent != Some(0) {
        id = t.node(id).parent.unwrap();
    }
    assert_eq!(id, l);
}

#[test]
fn same_half_reproduces_training_values() {
    let f = fixture(600, MotifCatalog::dyad_only());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let y: Vec<f64> = (0..f.features.n_rows()).map(|i| 2.0 * f.features.value(i, 0) + rng.random::<f64>()).collect();
    let all: Vec<usize> = (0..y.len()).collect();
    let t = fit(&f.features, &y, &f.repl, &all, &small_params(), Mode::PotentialOutcome).unwrap();
    let t = honest_estimate(t, &f.features, &y, &f.repl, &all).unwrap();
    for n in t.nodes() {
        let e = n.estimate.unwrap();
        assert!((e.value - n.train_value).abs() < 1e-9, "{} vs {}", e.value, n.train_value);
        assert_eq!(n.n_est, n.n_train);
    }
}

#[test]
fn report_round_trip_preserves_routing() {
    let (f, _, t) = signal_tree(7);
    let json = t.to_json().unwrap();
    let back = ExposureTree::from_json(&json).unwrap();
    assert_eq!(back.to_json().unwrap(), json);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..1000 {
        let row: Vec<f64> = (0..t.columns().len()).map(|_| rng.random::<f64>()).collect();
        assert_eq!(t.assign_condition(&row).unwrap(), back.assign_condition(&row).unwrap());
    }
    assert_eq!(back.to_report().n_leaves, t.n_leaves());
    for n in t.nodes() {
        assert_eq!(back.node(n.id).partition, n.partition);
    }
    let _ = f;
}

#[test]
fn dot_has_one_box_per_node() {
    let (_, _, t) = signal_tree(8);
    let dot = t.to_dot();
    assert_eq!(dot.matches("[label=\"").count() - 2 * (t.nodes().len() - t.n_leaves()), t.nodes().len());
    assert!(dot.contains("d1: ") && dot.contains(" ± "));
}

#[test]
fn malformed_reports_are_rejected() {
    let (_, _, t) = signal_tree(10);
    let mut r = t.to_report();
    r.nodes[0].children = None;
    assert!(matches!(ExposureTree::from_report(&r), Err(Error::MalformedTree(_))));
    let mut r = t.to_report();
    r.nodes[0].split.as_mut().unwrap().axis_name = "9z-9".into();
    assert!(matches!(ExposureTree::from_report(&r), Err(Error::UnknownAxis(_))));
}

#[test]
fn honest_split_is_disjoint_and_balanced() {
    let (a, b) = honest_split(101, 3);
    assert_eq!(a.len(), 50);
    assert_eq!(b.len(), 51);
    let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..101).collect::<Vec<_>>());
    assert_eq!(honest_split(101, 3), (a, b));
}

#[test]
fn direct_mode_never_splits_on_z() {
    let f = fixture(800, MotifCatalog::dyad_triad());
    let col = f.features.column_index("2-1").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let y: Vec<f64> = (0..f.features.n_rows())
        .map(|i| {
            let x = f.features.row(i);
            3.0 * x[0] * (x[col] > 0.5) as u8 as f64 + rng.random::<f64>()
        })
        .collect();
    let (train, est) = honest_split(y.len(), 1);
    let t = fit(&f.features, &y, &f.repl, &train, &small_params(), Mode::DirectEffect).unwrap();
    let t = honest_estimate(t, &f.features, &y, &f.repl, &est).unwrap();
    assert!(t.nodes().iter().all(|n| n.split.is_none_or(|s| s.axis != 0)));
    assert!(t.root().split.is_some());
}
