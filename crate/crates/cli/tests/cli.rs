use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "--n",
    "60",
    "--p",
    "12",
    "--sparsity",
    "0.25",
    "--draws",
    "3",
    "--b",
    "400",
    "--b_prime",
    "40",
];

fn kopi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kopi"))
        .args(args)
        .env_remove("KOPI_CACHE_DIR")
        .env("KOPI_THREADS", "1")
        .output()
        .expect("run kopi")
}

fn ok(args: &[&str]) -> String {
    let out = kopi(args);
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(out.status.success(), "kopi {args:?} failed: {stderr}");
    stderr
}

fn with(cmd: &str, out: &Path, extra: &[&str]) -> Vec<String> {
    let mut v = vec![cmd.to_string(), "-o".into(), out.display().to_string()];
    v.extend(TINY.iter().map(|s| s.to_string()));
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run(cmd: &str, out: &Path, extra: &[&str]) -> String {
    let args = with(cmd, out, extra);
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

/// Every regular file under `dir`, relative path and contents, cache excluded.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_writes_dataset_and_support() {
    let dir = tempfile::tempdir().unwrap();
    run("simulate", dir.path(), &[]);
    let csv = fs::read_to_string(dir.path().join("dataset.csv")).unwrap();
    assert!(csv.starts_with("x1,x2,"));
    assert_eq!(csv.lines().count(), 61);
    let support: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("dataset.support.json")).unwrap()).unwrap();
    assert_eq!(support["support"].as_array().unwrap().len(), 3);
    assert!(dir.path().join("resolved_config.toml").exists());
}

#[test]
fn infer_is_deterministic_and_names_selections() {
    let dir = tempfile::tempdir().unwrap();
    run("simulate", &dir.path().join("sim"), &[]);
    let data = dir.path().join("sim/dataset.csv").display().to_string();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run("infer", &a, &["--dataset", &data, "--seed", "4"]);
    run("infer", &b, &["--dataset", &data, "--seed", "4"]);
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    let names: Vec<&str> = sa.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "resolved_config.toml",
            "selection_ako.json",
            "selection_evalues.json",
            "selection_kopi_harmonic.json",
            "selection_vanilla.json"
        ]
    );
    for ((na, ca), (_, cb)) in sa.iter().zip(&sb) {
        if na != "resolved_config.toml" {
            assert_eq!(ca, cb, "{na} differs");
        }
    }
    let sel: serde_json::Value = serde_json::from_str(&String::from_utf8_lossy(&sa[3].1)).unwrap();
    assert_eq!(sel["method"], "kopi_harmonic");
    assert_eq!(sel["sizes"]["D"], 3);
    assert_eq!(
        sel["names"].as_array().unwrap().len(),
        sel["selected"].as_array().unwrap().len()
    );
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    run("infer", &first, &["--seed", "9", "--methods", "kopi,vanilla"]);
    let resolved = first.join("resolved_config.toml");
    let text = fs::read_to_string(&resolved).unwrap();
    assert!(text.contains("covariance = \"oracle\""));
    assert!(text.contains("pairing = \"sorted\""));
    let second = dir.path().join("second");
    ok(&[
        "infer",
        "--config",
        resolved.to_str().unwrap(),
        "-o",
        second.to_str().unwrap(),
    ]);
    for name in ["selection_kopi_harmonic.json", "selection_vanilla.json"] {
        assert_eq!(
            fs::read(first.join(name)).unwrap(),
            fs::read(second.join(name)).unwrap()
        );
    }
}

#[test]
fn calibrate_fills_then_hits_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache").display().to_string();
    let first = run("calibrate", &dir.path().join("a"), &["--cache_dir", &cache]);
    assert!(first.contains("0 hits, 1 misses"), "{first}");
    let second = run("calibrate", &dir.path().join("b"), &["--cache_dir", &cache]);
    assert!(second.contains("1 hits, 0 misses"), "{second}");
    assert_eq!(
        fs::read(dir.path().join("a/calibration.json")).unwrap(),
        fs::read(dir.path().join("b/calibration.json")).unwrap()
    );
    let files: Vec<_> = fs::read_dir(&cache).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 1);
    assert_eq!(&fs::read(&files[0]).unwrap()[..5], b"KOPI0");
}

#[test]
fn cache_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let env_cache = dir.path().join("env-cache");
    let args = with("calibrate", &dir.path().join("out"), &[]);
    let out = Command::new(env!("CARGO_BIN_EXE_kopi"))
        .args(&args)
        .env("KOPI_CACHE_DIR", &env_cache)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read_dir(&env_cache).unwrap().count(), 1);
}

#[test]
fn bench_smoke_has_one_row_per_run_and_method() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    run(
        "bench",
        &out,
        &["--runs", "2", "--sweep_param", "rho", "--sweep_values", "0.5"],
    );
    let runs = fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 2 * 4);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4);
    assert!(out.join("report.json").exists());
    assert!(fs::read_to_string(out.join("long.csv"))
        .unwrap()
        .starts_with("param,value,method,metric,mean,band"));
}

#[test]
fn stability_table_counts_selections() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("stab");
    run("infer", &out, &["--stability_runs", "3", "--methods", "vanilla"]);
    let table = fs::read_to_string(out.join("stability.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("method,index,name,count,frequency,in_support"));
    for line in lines {
        let count: usize = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!((1..=3).contains(&count));
    }
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    assert_eq!(kopi(&["infer", "-o", &out, "--alpha", "1.5"]).status.code(), Some(2));
    assert_eq!(
        kopi(&["infer", "-o", &out, "--methods", "lasso"]).status.code(),
        Some(2)
    );
    assert_eq!(kopi(&["infer", "--no_such_flag"]).status.code(), Some(2));

    let config = dir.path().join("bad.toml");
    fs::write(&config, "colour = 1\n").unwrap();
    assert_eq!(
        kopi(&["infer", "--config", config.to_str().unwrap()]).status.code(),
        Some(2)
    );

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "x1,y\n").unwrap();
    assert_eq!(
        kopi(&["infer", "-o", &out, "--dataset", empty.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "x1,x2,y\n1,2,3\n4,5\n").unwrap();
    let res = kopi(&["infer", "-o", &out, "--dataset", ragged.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("row 3"));
}

#[test]
fn global_null_infer_never_reports_a_bound_above_q() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("null");
    run("infer", &out, &["--sparsity", "0", "--methods", "kopi"]);
    let sel: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("selection_kopi_harmonic.json")).unwrap()).unwrap();
    if let Some(b) = sel["fdp_bound"].as_f64() {
        assert!(b <= 0.1);
    }
}
