use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use aimle_core::bench::records::{
    read_bias, read_records, read_trajectory, BENCH_HEADER, BIAS_HEADER, TRAJECTORY_HEADER,
};
use tempfile::TempDir;

fn aimle(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aimle"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = aimle(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap_or_default()
        .to_string()
}

const BENCH: &[&str] = &[
    "bench-cosine",
    "--spec",
    "categorical:10",
    "--estimators",
    "sfe,ste,imle-forward:0.5,aimle-central",
    "--warmup-steps",
    "20",
    "--warmup-samples",
    "5",
];

#[test]
fn bench_cosine_schema_and_cardinality() {
    let dir = TempDir::new().unwrap();
    let mut args = BENCH.to_vec();
    args.extend(["--seed", "5", "--seeds", "1", "--S", "1", "--out", "b.csv"]);
    ok(dir.path(), &args);
    let csv = dir.path().join("b.csv");
    assert_eq!(first_line(&csv), BENCH_HEADER);
    let rows = read_records(fs::File::open(&csv).unwrap()).unwrap();
    let ids: Vec<&str> = rows.iter().map(|r| r.estimator.as_str()).collect();
    assert_eq!(ids, ["sfe", "ste", "imle-forward", "aimle-central"]);
    assert!(rows
        .iter()
        .all(|r| (-1.0..=1.0).contains(&r.cosine) && (0.0..=1.0).contains(&r.zero_fraction)));
    assert!(dir.path().join("b.aggregate.csv").exists());
    assert!(dir.path().join("b.run.json").exists());
}

#[test]
fn bench_cosine_rerun_from_config_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "spec = \"ksubset:6:2\"\nestimators = [\"sfe\", \"imle-central:1\"]\nS = [1, 10]\nseeds = 3\nseed = 77\n",
    )
    .unwrap();
    ok(
        dir.path(),
        &["bench-cosine", "--config", "run.toml", "--out", "a.csv"],
    );
    ok(
        dir.path(),
        &[
            "bench-cosine",
            "--config",
            "run.toml",
            "--out",
            "b.csv",
            "--jobs",
            "1",
        ],
    );
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 1 + 2 * 2 * 3);
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "spec = \"categorical:4\"\nestimators = [\"exact\"]\nS = [3]\nseeds = 4\nseed = 1\n",
    )
    .unwrap();
    ok(
        dir.path(),
        &[
            "bench-cosine",
            "--config",
            "run.toml",
            "--seeds",
            "2",
            "--out",
            "o.csv",
        ],
    );
    let rows = read_records(fs::File::open(dir.path().join("o.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows.iter().map(|r| r.seed).collect::<Vec<_>>(), [1, 2]);
    assert!(rows
        .iter()
        .all(|r| r.spec == "categorical:4" && r.samples == 3));
}

#[test]
fn sweep_lambda_schema_cardinality_determinism() {
    let dir = TempDir::new().unwrap();
    let base = [
        "sweep-lambda",
        "--spec",
        "categorical:8",
        "--lambda-points",
        "6",
        "--S",
        "20",
        "--seeds",
        "1",
        "--seed",
        "3",
        "--warmup-steps",
        "30",
    ];
    for name in ["a.csv", "b.csv"] {
        let mut args = base.to_vec();
        args.extend(["--out", name]);
        ok(dir.path(), &args);
    }
    let a = dir.path().join("a.csv");
    assert_eq!(first_line(&a), BENCH_HEADER);
    assert_eq!(
        fs::read(&a).unwrap(),
        fs::read(dir.path().join("b.csv")).unwrap()
    );
    let rows = read_records(fs::File::open(&a).unwrap()).unwrap();
    let lambdas: Vec<&str> = rows.iter().map(|r| r.lambda.as_str()).collect();
    assert_eq!(lambdas, ["0", "1", "2", "3", "4", "5", "adaptive"]);
}

#[test]
fn optimize_toy_schema_cardinality_determinism() {
    let dir = TempDir::new().unwrap();
    let base = [
        "optimize-toy",
        "--spec",
        "categorical:6",
        "--steps",
        "40",
        "--S",
        "2",
        "--seed",
        "11",
        "--eta",
        "0.01",
    ];
    for name in ["a.csv", "b.csv"] {
        let mut args = base.to_vec();
        args.extend(["--out", name]);
        ok(dir.path(), &args);
    }
    let a = dir.path().join("a.csv");
    assert_eq!(first_line(&a), TRAJECTORY_HEADER);
    assert_eq!(
        fs::read(&a).unwrap(),
        fs::read(dir.path().join("b.csv")).unwrap()
    );
    let traj = read_trajectory(fs::File::open(&a).unwrap()).unwrap();
    assert_eq!(traj.len(), 40);
    assert_eq!(traj[0].lambda, 0.0);
    assert!(traj.iter().all(|p| p.alpha >= 0.0));
}

#[test]
fn optimize_toy_resume_matches_single_run() {
    let dir = TempDir::new().unwrap();
    let common = [
        "optimize-toy",
        "--spec",
        "ksubset:6:2",
        "--S",
        "3",
        "--eta",
        "0.01",
        "--lr",
        "0.05",
    ];
    let mut full = common.to_vec();
    full.extend(["--seed", "4", "--steps", "60", "--out", "full.csv"]);
    ok(dir.path(), &full);
    let mut first = common.to_vec();
    first.extend(["--seed", "4", "--steps", "25", "--out", "first.csv"]);
    ok(dir.path(), &first);
    let mut rest = common.to_vec();
    rest.extend([
        "--steps",
        "35",
        "--resume",
        "first.checkpoint.json",
        "--out",
        "rest.csv",
    ]);
    ok(dir.path(), &rest);

    let read = |n: &str| read_trajectory(fs::File::open(dir.path().join(n)).unwrap()).unwrap();
    let stitched: Vec<_> = read("first.csv")
        .into_iter()
        .chain(read("rest.csv"))
        .collect();
    assert_eq!(stitched, read("full.csv"));
    assert_eq!(
        fs::read(dir.path().join("full.checkpoint.json")).unwrap(),
        fs::read(dir.path().join("rest.checkpoint.json")).unwrap()
    );
}

#[test]
fn bias_enum_schema_cardinality_determinism() {
    let dir = TempDir::new().unwrap();
    for name in ["a.csv", "b.csv"] {
        ok(
            dir.path(),
            &[
                "bias-enum",
                "--seed",
                "2",
                "--lambdas",
                "1,0.1",
                "--seeds",
                "2",
                "--out",
                name,
            ],
        );
    }
    let a = dir.path().join("a.csv");
    assert_eq!(first_line(&a), BIAS_HEADER);
    assert_eq!(
        fs::read(&a).unwrap(),
        fs::read(dir.path().join("b.csv")).unwrap()
    );
    let rows = read_bias(fs::File::open(&a).unwrap()).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 3);
    assert!(rows
        .iter()
        .all(|r| (r.bias - (r.imle_scaled - r.exact_grad)).abs() < 1e-12));
}

#[test]
fn missing_seed_is_chosen_and_logged() {
    let dir = TempDir::new().unwrap();
    let out = ok(dir.path(), &["bias-enum", "--out", "x.csv"]);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("using seed"), "{stderr}");
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("x.run.json")).unwrap()).unwrap();
    let logged: u64 = stderr.trim().rsplit(' ').next().unwrap().parse().unwrap();
    assert_eq!(run["root_seed"].as_u64(), Some(logged));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("bad.toml"),
        "spec = \"categorical:5\"\nlearning_rate = 0.1\n",
    )
    .unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["optimize-toy", "--config", "bad.toml"],
        vec!["optimize-toy", "--config", "missing.toml"],
        vec!["bench-cosine", "--spec", "categorical:0"],
        vec!["bench-cosine", "--spec", "tree:20"],
        vec!["bench-cosine", "--estimators", "reinforce"],
        vec!["bench-cosine", "--S", "0"],
        vec!["sweep-lambda", "--mode", "sideways"],
        vec!["sweep-lambda", "--lambda-min", "3", "--lambda-max", "1"],
        vec!["optimize-toy", "--optimizer", "rmsprop"],
        vec!["optimize-toy", "--noise", "gumbel:-1"],
        vec!["bias-enum", "--lambdas", "0"],
        vec!["bias-enum", "--jobs", "0"],
        vec!["no-such-command"],
        vec!["bench-cosine", "--seeds", "many"],
    ];
    for args in cases {
        let out = aimle(dir.path(), &args);
        assert_eq!(
            out.status.code(),
            Some(1),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert!(!dir.path().join("optimize_toy.csv").exists());
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("blocker"), "").unwrap();
    let out = aimle(
        dir.path(),
        &["bias-enum", "--seed", "1", "--out", "blocker/x.csv"],
    );
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // Gumbel-Softmax has no relaxation for k-subsets.
    let out = aimle(
        dir.path(),
        &[
            "bench-cosine",
            "--seed",
            "1",
            "--seeds",
            "1",
            "--S",
            "1",
            "--spec",
            "ksubset:5:2",
            "--estimators",
            "gumbel-softmax",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn help_exits_zero() {
    let dir = TempDir::new().unwrap();
    let out = aimle(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["bench-cosine", "sweep-lambda", "optimize-toy", "bias-enum"] {
        assert!(text.contains(cmd));
    }
}
