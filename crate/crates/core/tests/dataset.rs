use std::fs;
use std::path::{Path, PathBuf};

use snowflake_gnn::dataset::{import_linqs, load_dataset, make_split, synth_sbm, write_dataset, DatasetError, FeatureMode};
use snowflake_gnn::graph::homophily_ratio;

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn toy(dir: &Path) {
    write(dir, "meta.json", r#"{"directed": false, "num_classes": 2, "name": "toy"}"#);
    write(dir, "labels.csv", "0\n1\n1\n0\n");
    write(dir, "features.csv", "1,0\n0,1\n0.5,0.25\n-1,2\n");
    write(dir, "edges.tsv", "# comment\n0\t1\n1\t2\n2\t3\n");
}

fn cora_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/cora-linqs")
}

#[test]
fn canonical_round_trip_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    toy(a.path());
    write(a.path(), "edges.tsv", "3 2\n1\t0\n0\t1\n2\t1\n");
    write(a.path(), "splits.json", r#"{"train":[0,1],"val":[2],"test":[3]}"#);
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    write_dataset(&load_dataset(a.path()).unwrap(), b.path()).unwrap();
    write_dataset(&load_dataset(b.path()).unwrap(), c.path()).unwrap();
    for f in ["edges.tsv", "features.csv", "labels.csv", "meta.json", "splits.json"] {
        assert_eq!(fs::read(b.path().join(f)).unwrap(), fs::read(c.path().join(f)).unwrap(), "{f}");
    }
    assert_eq!(fs::read_to_string(b.path().join("edges.tsv")).unwrap(), "0\t1\n1\t2\n2\t3\n");
}

fn expect_error(setup: impl Fn(&Path), check: impl Fn(&DatasetError) -> bool) {
    let d = tempfile::tempdir().unwrap();
    toy(d.path());
    setup(d.path());
    let err = load_dataset(d.path()).expect_err("malformed fixture accepted");
    assert!(check(&err), "unexpected error: {err}");
}

#[test]
fn malformed_corpus_is_rejected() {
    expect_error(|d| fs::remove_file(d.join("labels.csv")).unwrap(), |e| {
        matches!(e, DatasetError::MissingFile(p) if p.ends_with("labels.csv"))
    });
    expect_error(|d| fs::remove_file(d.join("meta.json")).unwrap(), |e| matches!(e, DatasetError::MissingFile(_)));
    expect_error(|d| write(d, "features.csv", "1,0\n0,x\n0,0\n1,1\n"), |e| {
        matches!(e, DatasetError::Parse { line: 2, .. })
    });
    expect_error(|d| write(d, "features.csv", "1,0\n0,1\n0,0,3\n1,1\n"), |e| {
        matches!(e, DatasetError::Parse { line: 3, .. })
    });
    expect_error(|d| write(d, "features.csv", "1,0\nNaN,1\n0,0\n1,1\n"), |e| {
        matches!(e, DatasetError::Parse { line: 2, .. })
    });
    expect_error(|d| write(d, "features.csv", "1,0\n0,1\n"), |e| matches!(e, DatasetError::Invalid { .. }));
    expect_error(|d| write(d, "labels.csv", "0\n1\n-1\n0\n"), |e| matches!(e, DatasetError::Parse { line: 3, .. }));
    expect_error(|d| write(d, "labels.csv", "0\n1\n\n5\n0\n"), |e| {
        matches!(e, DatasetError::LabelOutOfRange { line: 4, label: 5, .. })
    });
    expect_error(|d| write(d, "edges.tsv", "0\t1\n# c\n1\t9\n"), |e| {
        matches!(e, DatasetError::DanglingEdge { line: 3, dst: 9, .. })
    });
    expect_error(|d| write(d, "edges.tsv", "0\t1\t2\n"), |e| matches!(e, DatasetError::Parse { line: 1, .. }));
    expect_error(|d| write(d, "edges.tsv", "0\tone\n"), |e| matches!(e, DatasetError::Parse { line: 1, .. }));
    expect_error(|d| write(d, "meta.json", "{\"directed\": false}"), |e| matches!(e, DatasetError::Parse { .. }));
    expect_error(|d| write(d, "splits.json", r#"{"train":[0,1],"val":[1],"test":[3]}"#), |e| {
        matches!(e, DatasetError::Graph(_))
    });
}

#[test]
fn self_loop_and_duplicate_lines_are_counted() {
    let d = tempfile::tempdir().unwrap();
    toy(d.path());
    write(d.path(), "edges.tsv", "0\t1\n1\t0\n0\t1\n2\t2\n");
    let b = load_dataset(d.path()).unwrap();
    assert_eq!(b.num_edges(), 1);
    assert_eq!(b.duplicate_edges, 2);
    assert_eq!(b.self_loop_lines, 1);
}

#[test]
fn directed_flag_keeps_direction() {
    let d = tempfile::tempdir().unwrap();
    toy(d.path());
    write(d.path(), "meta.json", r#"{"directed": true, "num_classes": 2, "name": "toy"}"#);
    let b = load_dataset(d.path()).unwrap();
    assert_eq!(b.num_edges(), 3);
    assert!(b.graph.edge_list().contains(&(0, 1)) && !b.graph.edge_list().contains(&(1, 0)));
}

#[test]
fn cora_import_has_expected_shape() {
    let dir = cora_dir();
    let b = import_linqs(&dir.join("cora.content.gz"), &dir.join("cora.cites.gz"), "cora").unwrap();
    assert_eq!(b.graph.num_nodes(), 2708);
    assert_eq!(b.num_edges(), 5278);
    assert_eq!(b.num_classes(), 7);
    assert_eq!(b.num_features(), 1433);

    let out = tempfile::tempdir().unwrap();
    write_dataset(&b, out.path()).unwrap();
    let back = load_dataset(out.path()).unwrap();
    assert_eq!(back.num_edges(), 5278);
    assert_eq!(back.graph.features(), b.graph.features());
    assert_eq!(back.graph.labels(), b.graph.labels());
}

#[test]
fn split_partition_properties() {
    let s = make_split(10, (0.6, 0.2, 0.2), 4).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (6, 2, 2));
    assert_eq!(s, make_split(10, (0.6, 0.2, 0.2), 4).unwrap());
    let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..10).collect::<Vec<_>>());
    assert!(make_split(2, (0.6, 0.2, 0.2), 0).is_err());
    assert!(make_split(10, (0.6, 0.2, 0.3), 0).is_err());
    // 2708 * 0.2 = 541.6 -> 541, remainder to train
    let c = make_split(2708, (0.6, 0.2, 0.2), 0).unwrap();
    assert_eq!((c.train.len(), c.val.len(), c.test.len()), (1626, 541, 541));
}

#[test]
fn sbm_edge_count_matches_binomial_expectation() {
    let blocks = [30, 20, 25];
    let (p_in, p_out) = (0.3, 0.05);
    let n: usize = blocks.iter().sum();
    let within: usize = blocks.iter().map(|b| b * (b - 1) / 2).sum();
    let between = n * (n - 1) / 2 - within;
    let mean = within as f64 * p_in + between as f64 * p_out;
    let var = within as f64 * p_in * (1.0 - p_in) + between as f64 * p_out * (1.0 - p_out);
    for seed in 0..5 {
        let b = synth_sbm(&blocks, p_in, p_out, FeatureMode::OneHotPlusNoise { noise: 0.1 }, seed).unwrap();
        let m = b.num_edges() as f64;
        assert!((m - mean).abs() <= 3.0 * var.sqrt(), "seed {seed}: {m} vs {mean}");
    }
}

#[test]
fn sbm_homophily_extremes() {
    let pure = synth_sbm(&[10, 10, 10], 0.5, 0.0, FeatureMode::Noise { dims: 3 }, 1).unwrap();
    assert_eq!(homophily_ratio(&pure.graph).unwrap().ratio, 1.0);
    let cross = synth_sbm(&[10, 10], 0.0, 0.5, FeatureMode::Noise { dims: 3 }, 1).unwrap();
    assert_eq!(homophily_ratio(&cross.graph).unwrap().ratio, 0.0);
}
