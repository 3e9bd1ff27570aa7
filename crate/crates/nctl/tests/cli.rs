mod common;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn nctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nctl"))
        .args(args)
        .env_remove("NCTL_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A data root whose `mnist/` holds the vendored subset as both splits.
fn mnist_root() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let mnist = dir.path().join("mnist");
    std::fs::create_dir(&mnist).unwrap();
    for split in ["train", "t10k"] {
        for (kind, idx) in [("images", "idx3"), ("labels", "idx1")] {
            std::fs::copy(
                common::testdata(&format!("mnist-subset-{kind}-{idx}-ubyte.gz")),
                mnist.join(format!("{split}-{kind}-{idx}-ubyte.gz")),
            )
            .unwrap();
        }
    }
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL_MODEL: &str =
    "[model]\nlayers = [4, 2, 1]\ncontext_bits = 2\npool_capacity = 2\nlearning_rate = 0.01\n";

fn files_matching(dir: &Path, prefix: &str, suffix: &str) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with(prefix) && n.ends_with(suffix))
        .collect();
    v.sort();
    v
}

/// Metrics rows minus the trailing wall-clock column.
fn without_timing(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("step,task,logloss,correct,ms"));
    text.lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn missing_dataset_exits_2_and_names_the_path() {
    let empty = tempfile::tempdir().unwrap();
    let out = empty.path().join("out");
    let o = nctl(&[
        "bench",
        "split-mnist",
        "--data-dir",
        p(empty.path()),
        "--output",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let expected = empty.path().join("mnist");
    assert!(stderr(&o).contains(p(&expected)), "{}", stderr(&o));

    let o = nctl(&[
        "bench",
        "electricity",
        "--data-dir",
        p(empty.path()),
        "--output",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("electricity.csv"), "{}", stderr(&o));
}

#[test]
fn bad_arguments_exit_2() {
    assert_eq!(
        nctl(&["transfer", "backward", "--counts", "0,x"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(nctl(&["bench", "no-such-protocol"]).status.code(), Some(2));
    assert_eq!(
        nctl(&["bench", "free-split", "--seeds", "2", "--seed-list", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(nctl(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[model]\nlayer = [3]\n");
    let o = nctl(&["bench", "free-split", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("layer"), "{}", stderr(&o));

    let root = mnist_root();
    let o = nctl(&[
        "transfer",
        "forward",
        "--counts",
        "0",
        "--data-dir",
        p(root.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn split_mnist_bench_over_three_seeds() {
    let root = mnist_root();
    let out = root.path().join("out");
    let cfg = write_config(
        root.path(),
        &format!("{SMALL_MODEL}[split]\nadaptation = 20\neval_limit = 100\n"),
    );
    let o = nctl(&[
        "bench",
        "split-mnist",
        "--seeds",
        "3",
        "--config",
        p(&cfg),
        "--data-dir",
        p(root.path()),
        "--output",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(files_matching(&out, "metrics-seed", ".csv").len(), 3);
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["seeds"], serde_json::json!([0, 1, 2]));
    let acc = summary["overall_accuracy"].as_f64().unwrap();
    assert!((0.5..=1.0).contains(&acc), "{acc}");
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(
        manifest["datasets"][0]["sha256"].as_str().unwrap().len(),
        64
    );
}

#[test]
fn electricity_bench_and_flat_saliency() {
    let root = tempfile::tempdir().unwrap();
    let mut csv =
        String::from("date,day,period,nswprice,nswdemand,vicprice,vicdemand,transfer,class\n");
    for i in 0..nctl::data::ELECTRICITY_ROWS {
        let period = (i % 48) as f64 / 47.0;
        let demand = 0.5 + 0.4 * (i as f64 / 300.0).sin();
        let class = if demand + 0.1 * period > 0.55 {
            "UP"
        } else {
            "DOWN"
        };
        let _ = writeln!(
            csv,
            "0,{},{period:.4},0.05,{demand:.4},0.003,0.42,0.41,{class}",
            i / 48 % 7 + 1
        );
    }
    std::fs::write(root.path().join("electricity.csv"), csv).unwrap();
    let out = root.path().join("out");
    let cfg = write_config(
        root.path(),
        "[model]\nlayers = [4, 1]\ncontext_bits = 2\npool_capacity = 2\n",
    );
    let o = nctl(&[
        "bench",
        "electricity",
        "--config",
        p(&cfg),
        "--data-dir",
        p(root.path()),
        "--output",
        p(&out),
        "--save-checkpoint",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let acc = json(&out.join("summary.json"))["overall_accuracy"]
        .as_f64()
        .unwrap();
    assert!(acc > 0.6, "{acc}");

    let ck = out.join("checkpoint-seed0.json");
    let sal = root.path().join("sal");
    let o = nctl(&[
        "saliency",
        "--checkpoint",
        p(&ck),
        "--pgm",
        "--output",
        p(&sal),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("28x28"), "{}", stderr(&o));
    let o = nctl(&["saliency", "--checkpoint", p(&ck), "--output", p(&sal)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(sal.join("saliency-0.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 5 + 1);
}

#[test]
fn free_split_checkpoints_feed_saliency_and_config_reproduces() {
    let root = mnist_root();
    let out = root.path().join("run1");
    let cfg = write_config(
        root.path(),
        &format!("{SMALL_MODEL}[free_split]\nn_tasks = 3\n"),
    );
    let args = |out: &Path, cfg: &Path| {
        nctl(&[
            "bench",
            "free-split",
            "--seed-list",
            "4,9",
            "--config",
            p(cfg),
            "--data-dir",
            p(root.path()),
            "--output",
            p(out),
            "--save-checkpoint",
        ])
    };
    let o = args(&out, &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    // Re-running from the resolved config gives identical logs.
    let out2 = root.path().join("run2");
    let o = args(&out2, &out.join("config.toml"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["metrics-seed4.csv", "metrics-seed9.csv"] {
        assert_eq!(without_timing(&out.join(f)), without_timing(&out2.join(f)));
    }

    let (a, b) = (
        out.join("checkpoint-seed4.json"),
        out.join("checkpoint-seed9.json"),
    );
    let sal = root.path().join("sal");
    let o = nctl(&[
        "saliency",
        "--checkpoint",
        p(&a),
        "--pgm",
        "--digit",
        "3",
        "--data-dir",
        p(root.path()),
        "--output",
        p(&sal),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let img = std::fs::read(sal.join("saliency-0.pgm")).unwrap();
    assert!(img.starts_with(b"P5\n28 28\n255\n"));
    assert_eq!(img.len(), 13 + 784);

    let ens = root.path().join("ens");
    let o = nctl(&[
        "saliency",
        "--checkpoint",
        p(&a),
        p(&b),
        "--ensemble",
        "--samples",
        "8",
        "--pgm",
        "--output",
        p(&ens),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(files_matching(&ens, "ensemble-", ".pgm").len(), 8);
    // Averaging needs shared gates, which differently seeded runs lack.
    let o = nctl(&[
        "saliency",
        "--checkpoint",
        p(&a),
        p(&b),
        "--ensemble-average",
        "--output",
        p(&ens),
    ]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("gates"), "{}", stderr(&o));
    let o = nctl(&[
        "saliency",
        "--checkpoint",
        p(&a),
        p(&a),
        "--ensemble-average",
        "--raw-space",
        "--output",
        p(&ens),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(ens.join("ensemble-average.csv").exists());
}

#[test]
fn transfer_curves() {
    let root = mnist_root();
    let cfg = write_config(
        root.path(),
        &format!("{SMALL_MODEL}[transfer]\ntarget_steps = 40\n"),
    );
    let out = root.path().join("back");
    let o = nctl(&[
        "transfer",
        "backward",
        "--counts",
        "0,5,15",
        "--seeds",
        "1",
        "--config",
        p(&cfg),
        "--data-dir",
        p(root.path()),
        "--output",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let curves = files_matching(&out, "curve-backward-n", ".csv");
    assert_eq!(
        curves,
        [
            "curve-backward-n0.csv",
            "curve-backward-n15.csv",
            "curve-backward-n5.csv"
        ]
    );
    let text = std::fs::read_to_string(out.join("curve-backward-n5.csv")).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "step,mean_logloss,stderr,smoothed"
    );
    assert_eq!(text.lines().count(), 41);

    let run = |name: &str| {
        let out = root.path().join(name);
        let o = nctl(&[
            "transfer",
            "forward",
            "--counts",
            "2",
            "--seed-list",
            "7",
            "--config",
            p(&cfg),
            "--data-dir",
            p(root.path()),
            "--output",
            p(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read(out.join("curve-forward-n2.csv")).unwrap()
    };
    assert_eq!(run("f1"), run("f2"));
}

#[test]
fn selftest_passes_and_catches_an_injected_fault() {
    let o = nctl(&["selftest"]);
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(!text.contains("FAIL"), "{text}");
    assert!(
        text.lines().filter(|l| l.starts_with("PASS")).count() >= 7,
        "{text}"
    );
    let o = nctl(&["selftest", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL gradient"));
}
