use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ses(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ses"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn ses")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_graph(dir: &Path) -> std::path::PathBuf {
    let out = dir.join("g");
    let o = ses(&[
        "generate",
        "--kind",
        "tree_cycle",
        "--seed",
        "3",
        "--motifs",
        "6",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("graph.json")
}

const QUICK: [&str; 6] = [
    "--set",
    "epochs_explainable=20",
    "--set",
    "epochs_epl=3",
    "--set",
    "hidden=16",
];

fn train(data: &Path, out: &Path, seed: &str) -> Output {
    let mut args = vec!["train", "--data", p(data), "--seed", seed, "--out", p(out)];
    args.extend(QUICK);
    ses(&args)
}

#[test]
fn generate_writes_graph_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let graph = small_graph(dir.path());
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&graph).unwrap()).unwrap();
    assert_eq!(v["num_classes"], 2);
    assert!(!v["ground_truth_edges"].as_array().unwrap().is_empty());
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("g/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "generate");
    assert_eq!(m["dataset_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn train_outputs_are_complete_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let graph = small_graph(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = train(&graph, out, "7");
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in [
        "metrics.json",
        "loss_log.csv",
        "explanations.json",
        "pairs.json",
        "manifest.json",
        "checkpoint/checkpoint.json",
        "checkpoint/checkpoint.bin",
        "checkpoint/split.json",
    ] {
        assert!(a.join(name).is_file(), "missing {name}");
    }
    for name in [
        "metrics.json",
        "loss_log.csv",
        "pairs.json",
        "checkpoint/checkpoint.bin",
    ] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs"
        );
    }
    let csv = fs::read_to_string(a.join("loss_log.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 20 + 3);
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 7);
    assert_eq!(m["threads"], 1);
    assert_eq!(m["config"]["hidden"], 16);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn explain_and_evaluate_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let graph = small_graph(dir.path());
    let run = dir.path().join("run");
    assert!(train(&graph, &run, "0").status.success());
    let ckpt = run.join("checkpoint");
    let ex = dir.path().join("ex");

    let o = ses(&[
        "explain",
        "--checkpoint",
        p(&ckpt),
        "--data",
        p(&graph),
        "--node",
        "0",
        "--out",
        p(&ex),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rec: serde_json::Value =
        serde_json::from_slice(&fs::read(ex.join("node_0.json")).unwrap()).unwrap();
    assert!(!rec["neighbors"].as_array().unwrap().is_empty());
    assert!(fs::read_to_string(ex.join("node_0.dot"))
        .unwrap()
        .contains("graph"));

    let ev = dir.path().join("ev");
    let o = ses(&[
        "evaluate",
        "--checkpoint",
        p(&ckpt),
        "--data",
        p(&graph),
        "--metrics",
        "accuracy,auc",
        "--out",
        p(&ev),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let got: serde_json::Value =
        serde_json::from_slice(&fs::read(ev.join("metrics.json")).unwrap()).unwrap();
    let trained: serde_json::Value =
        serde_json::from_slice(&fs::read(run.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(got["test_accuracy"], trained["test_accuracy"]);
    assert_eq!(got["explanation_auc"], trained["explanation_auc"]);
    assert!(got.get("fidelity_plus").is_none());
}

#[test]
fn usage_and_validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let graph = small_graph(dir.path());
    let out = dir.path().join("x");
    assert_eq!(ses(&["generate", "--out", p(&out)]).status.code(), Some(2));
    assert_eq!(
        ses(&["generate", "--kind", "hexagon", "--out", p(&out)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ses(&[
            "train",
            "--data",
            p(&graph),
            "--set",
            "alpha=1.5",
            "--out",
            p(&out)
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        ses(&[
            "train",
            "--data",
            p(&graph),
            "--set",
            "no_such_key=1",
            "--out",
            p(&out)
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        ses(&[
            "ablate",
            "--variant",
            "no_gnn",
            "--data",
            p(&graph),
            "--out",
            p(&out)
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn evaluate_auc_without_ground_truth_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let graph = small_graph(dir.path());
    let run = dir.path().join("run");
    assert!(train(&graph, &run, "0").status.success());

    // Same graph as an edge list loses its ground truth.
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&graph).unwrap()).unwrap();
    let edges: String = v["edges"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| format!("{} {}\n", e[0], e[1]))
        .collect();
    let labels: String = v["labels"]
        .as_array()
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, l)| format!("{i} {l}\n"))
        .collect();
    let features: String = v["features"]
        .as_array()
        .unwrap()
        .iter()
        .map(|row| {
            let cells: Vec<String> = row
                .as_array()
                .unwrap()
                .iter()
                .map(|c| c.to_string())
                .collect();
            cells.join(" ") + "\n"
        })
        .collect();
    let (e, l, f) = (
        dir.path().join("g.edges"),
        dir.path().join("g.labels"),
        dir.path().join("g.feat"),
    );
    fs::write(&e, edges).unwrap();
    fs::write(&l, labels).unwrap();
    fs::write(&f, features).unwrap();
    let ckpt = run.join("checkpoint");
    let base = [
        "evaluate",
        "--checkpoint",
        p(&ckpt),
        "--data",
        p(&e),
        "--labels",
        p(&l),
        "--features",
        p(&f),
    ];

    let mut args = base.to_vec();
    args.extend(["--metrics", "auc"]);
    let o = ses(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ground-truth"));

    let mut args = base.to_vec();
    args.extend(["--metrics", "accuracy"]);
    let o = ses(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = ses(&[
        "train",
        "--data",
        "/nonexistent/graph.json",
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert!(matches!(o.status.code(), Some(2) | Some(3)));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
}

#[test]
fn ablate_single_variant() {
    let dir = tempfile::tempdir().unwrap();
    let graph = small_graph(dir.path());
    let out = dir.path().join("ab");
    let mut args = vec![
        "ablate",
        "--variant",
        "no_ms",
        "--include-full",
        "--data",
        p(&graph),
        "--out",
        p(&out),
    ];
    args.extend(QUICK);
    let o = ses(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("ablation.json")).unwrap()).unwrap();
    assert!(v.get("full").is_some() && v.get("no_ms").is_some());
    assert!(out.join("no_ms/loss_log.csv").is_file());
}

#[test]
fn gradcheck_passes() {
    let o = ses(&["gradcheck", "--seed", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(!String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}
