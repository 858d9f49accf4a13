//! End-to-end pipeline tests driving the CLI entry point against temp dirs.

use std::fs;
use std::path::Path;

use gocart::cli::run;
use gocart::io::{read_dataset, read_risk_report, write_dataset};

fn p(path: &Path) -> String {
    path.to_str().unwrap().to_owned()
}

fn generate_small(dir: &Path, seed: &str) -> i32 {
    run([
        "gocart",
        "generate",
        "--kind",
        "regions22",
        "--out",
        &p(dir),
        "--seed",
        seed,
        "--n",
        "600",
        "--d",
        "3",
        "--p",
        "5",
    ])
}

#[test]
fn generate_fit_eval_export_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    let export = tmp.path().join("export");

    assert_eq!(generate_small(&data, "11"), 0);
    for f in ["train.csv", "heldout.csv", "truth.json", "layout.json"] {
        assert!(data.join(f).exists(), "{f} missing");
    }

    assert_eq!(
        run([
            "gocart",
            "fit",
            "--method",
            "greedy",
            "--train",
            &p(&data.join("train.csv")),
            "--heldout",
            &p(&data.join("heldout.csv")),
            "--out",
            &p(&model),
            "--k-max",
            "4",
        ]),
        0
    );
    for f in ["tree.json", "leaf_000.json", "risk.csv", "trace.csv"] {
        assert!(model.join(f).exists(), "{f} missing");
    }

    let metrics = tmp.path().join("metrics.csv");
    assert_eq!(
        run([
            "gocart",
            "eval",
            "--model",
            &p(&model),
            "--truth",
            &p(&data),
            "--out",
            &p(&metrics),
        ]),
        0
    );
    let text = fs::read_to_string(&metrics).unwrap();
    // Header plus one row per truth region.
    assert_eq!(text.lines().count(), 23);

    for format in ["dot", "json", "plotdata"] {
        assert_eq!(
            run([
                "gocart",
                "export",
                "--model",
                &p(&model),
                "--format",
                format,
                "--out",
                &p(&export),
            ]),
            0
        );
    }
    assert!(export.join("tree.dot").exists());
    assert!(export.join("leaf_000.dot").exists());
    assert!(export.join("model.json").exists());
    assert!(export.join("partition.csv").exists());
    assert!(export.join("risk_per_split.csv").exists());
    let dot = fs::read_to_string(export.join("tree.dot")).unwrap();
    assert!(dot.starts_with("digraph tree {"));
    assert!(dot.trim_end().ends_with('}'));
}

#[test]
fn generated_csv_rewrites_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(generate_small(&data, "5"), 0);
    let original = fs::read(data.join("train.csv")).unwrap();
    let ds = read_dataset(&data.join("train.csv")).unwrap();
    let copy = tmp.path().join("copy.csv");
    write_dataset(&copy, &ds).unwrap();
    assert_eq!(original, fs::read(&copy).unwrap());
}

#[test]
fn same_seed_reproduces_generation() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(generate_small(&a, "77"), 0);
    assert_eq!(generate_small(&b, "77"), 0);
    for f in ["train.csv", "heldout.csv", "truth.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn malformed_csv_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "x1,y1\n0.5,not_a_number\n").unwrap();
    let code = run([
        "gocart",
        "fit",
        "--method",
        "greedy",
        "--train",
        &p(&bad),
        "--heldout",
        &p(&bad),
        "--out",
        &p(&tmp.path().join("m")),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn kernel_without_point_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let code = run([
        "gocart",
        "fit",
        "--method",
        "kernel",
        "--train",
        &p(&tmp.path().join("absent.csv")),
        "--out",
        &p(&tmp.path().join("m")),
    ]);
    assert_eq!(code, 1);
}

#[test]
fn pooled_without_heldout_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(generate_small(&data, "3"), 0);
    let code = run([
        "gocart",
        "fit",
        "--method",
        "glasso-pooled",
        "--train",
        &p(&data.join("train.csv")),
        "--out",
        &p(&tmp.path().join("m")),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn exact_heldout_logs_two_candidates_for_d1_k1() {
    let tmp = tempfile::tempdir().unwrap();
    // d = 1 dataset written by hand through the io layer.
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..80 {
        let x = (i as f64 + 0.5) / 80.0;
        xs.push(x);
        ys.extend([x.sin(), x.cos()]);
    }
    let ds = gocart::dataset::Dataset::new(1, 2, xs, ys).unwrap();
    let train = tmp.path().join("train.csv");
    let heldout = tmp.path().join("heldout.csv");
    write_dataset(&train, &ds).unwrap();
    write_dataset(&heldout, &ds).unwrap();
    let model = tmp.path().join("m");
    assert_eq!(
        run([
            "gocart",
            "fit",
            "--method",
            "exact-heldout",
            "--train",
            &p(&train),
            "--heldout",
            &p(&heldout),
            "--out",
            &p(&model),
            "--k-max",
            "1",
        ]),
        0
    );
    let report = read_risk_report(&model.join("risk.csv")).unwrap();
    assert_eq!(report.rows.len(), 2);
}

#[test]
fn rescaled_fit_records_the_transform() {
    let tmp = tempfile::tempdir().unwrap();
    // Covariates far outside the unit interval, climate-style.
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..60 {
        xs.push(-120.0 + i as f64);
        ys.extend([(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()]);
    }
    let ds = gocart::dataset::Dataset::new(1, 2, xs, ys).unwrap();
    let train = tmp.path().join("train.csv");
    write_dataset(&train, &ds).unwrap();
    let model = tmp.path().join("m");
    assert_eq!(
        run([
            "gocart",
            "fit",
            "--method",
            "greedy",
            "--train",
            &p(&train),
            "--heldout",
            &p(&train),
            "--out",
            &p(&model),
            "--rescale",
            "minmax",
            "--k-max",
            "2",
        ]),
        0
    );
    let tree = fs::read_to_string(model.join("tree.json")).unwrap();
    assert!(tree.contains("rescale"));
    let (_, rescale) = gocart::io::read_model(&model).unwrap();
    let rs = rescale.expect("transform recorded");
    assert_eq!(rs.min, vec![-120.0]);
    assert_eq!(rs.max, vec![-61.0]);
}

#[test]
fn config_file_settings_are_honored() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(generate_small(&data, "9"), 0);
    let config = tmp.path().join("run.conf");
    // min_leaf larger than n forces a root-only tree.
    fs::write(&config, "k_max = 3\nmin_leaf = 100000\n").unwrap();
    let model = tmp.path().join("m");
    assert_eq!(
        run([
            "gocart",
            "fit",
            "--method",
            "greedy",
            "--train",
            &p(&data.join("train.csv")),
            "--heldout",
            &p(&data.join("heldout.csv")),
            "--out",
            &p(&model),
            "--config",
            &p(&config),
        ]),
        0
    );
    let (ft, _) = gocart::io::read_model(&model).unwrap();
    assert_eq!(ft.partition.len(), 1);
    assert_eq!(ft.tree.k_max, 3);
}

#[test]
fn chain_generation_writes_chain_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(
        run([
            "gocart",
            "generate",
            "--kind",
            "chain",
            "--out",
            &p(&data),
            "--seed",
            "2",
            "--n",
            "50",
            "--p",
            "6",
        ]),
        0
    );
    let text = fs::read_to_string(data.join("truth.json")).unwrap();
    assert!(text.contains("\"kind\": \"chain\""));
    let ds = read_dataset(&data.join("train.csv")).unwrap();
    assert_eq!(ds.len(), 50);
    assert_eq!(ds.covariate_dim(), 1);
    assert_eq!(ds.response_dim(), 6);
}
