use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_faas-sched"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

const WAIT_EXAMPLE: &str = r#"{
  "families": [
    {"id": 1, "duration": 10, "size": 1, "setup": 1},
    {"id": 2, "duration": 10, "size": 1, "setup": 100}
  ],
  "jobs": [
    {"id": 1, "tasks": [{"id": 1, "family": 2}]},
    {"id": 2, "tasks": [{"id": 2, "family": 1}, {"id": 3, "family": 2, "preds": [2]}]}
  ]
}"#;

#[test]
fn simulate_prints_the_mean() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("wait.json");
    fs::write(&inst, WAIT_EXAMPLE).unwrap();
    let out = dir.path().join("result.json");
    let o = run(&[
        "simulate", "--in", arg(&inst), "--machines", "1", "--capacity", "2",
        "--policy", "EF,LRU,wait,start", "--validate", "--out", arg(&out),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).trim(), "mean=115 p95=120");
    let result: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(result["job_latencies"]["1"], 110);
    assert_eq!(result["job_latencies"]["2"], 120);

    let o = run(&[
        "simulate", "--in", arg(&inst), "--machines", "1", "--capacity", "2", "--policy", "FIFO,LRU,nowait,def",
    ]);
    assert_eq!(stdout(&o).trim(), "mean=115.5 p95=121");
}

#[test]
fn generate_writes_one_file_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "generate", "--families", "50", "--setup", "10:20", "--chain", "10:20", "--tasks", "1000",
        "--seed", "7", "--count", "20", "--out", arg(dir.path()),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).lines().count(), 20);
    for seed in 7..27 {
        let p = dir.path().join(format!("chain_nf50_s10-20_l10-20_seed{seed}.json"));
        let o = run(&["validate", "--in", arg(&p)]);
        assert!(o.status.success(), "{o:?}");
        assert!(stdout(&o).contains("n=1000 "), "{}", stdout(&o));
    }
}

#[test]
fn dag_generation_and_ow_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "generate", "--families", "10", "--setup", "10:20", "--chain", "2:10", "--tasks", "200",
        "--seed", "3", "--dag", "--out", arg(dir.path()),
    ]);
    assert!(o.status.success(), "{o:?}");
    let inst = dir.path().join("dag_nf10_s10-20_l2-10_seed3.json");
    let text = fs::read_to_string(&inst).unwrap();
    assert!(text.contains("\"kind\": \"out-tree\""));

    let mut lines = Vec::new();
    for seed in ["1", "2"] {
        let o = run(&[
            "simulate", "--in", arg(&inst), "--machines", "5", "--capacity", "10", "--policy", "OW",
            "--seed", seed, "--validate",
        ]);
        assert!(o.status.success(), "{o:?}");
        lines.push(stdout(&o));
    }
    let again = run(&[
        "simulate", "--in", arg(&inst), "--machines", "5", "--capacity", "10", "--policy", "OW", "--seed", "1",
    ]);
    assert_eq!(stdout(&again), lines[0]);
}

#[test]
fn dagify_command_rewires_chains() {
    let dir = tempfile::tempdir().unwrap();
    run(&[
        "generate", "--families", "5", "--setup", "0:0", "--chain", "5:5", "--tasks", "50", "--out",
        arg(dir.path()),
    ]);
    let chain = dir.path().join("chain_nf5_s0-0_l5-5_seed0.json");
    let dag = dir.path().join("tree.json");
    let o = run(&["dagify", "--in", arg(&chain), "--seed", "9", "--out", arg(&dag)]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("n=50 N=10 n_f=5"));
    // a tree is not a chain
    let o = run(&["dagify", "--in", arg(&dag), "--out", arg(&dir.path().join("x.json"))]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("wait.json");
    fs::write(&inst, WAIT_EXAMPLE).unwrap();
    let sim = |extra: &[&str]| {
        let mut a = vec!["simulate", "--in", arg(&inst)];
        a.extend_from_slice(extra);
        run(&a).status.code()
    };
    assert_eq!(sim(&["--machines", "1", "--capacity", "2", "--policy", "EF,LRU,maybe,def"]), Some(2));
    assert_eq!(sim(&["--machines", "1", "--policy", "OW"]), Some(2));
    assert_eq!(run(&["simulate", "--in", "/no/such/file", "--machines", "1", "--capacity", "2", "--policy", "OW"]).status.code(), Some(3));
    assert_eq!(sim(&["--machines", "1", "--capacity", "0", "--policy", "OW"]), Some(4));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"families":[{"id":1,"duration":0,"size":1,"setup":0}],"jobs":[{"id":1,"tasks":[{"id":1,"family":1}]}]}"#).unwrap();
    assert_eq!(run(&["validate", "--in", arg(&bad)]).status.code(), Some(5));
    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(run(&["validate", "--in", arg(&bad)]).status.code(), Some(3));
    assert_eq!(run(&["sweep", "--preset", "nope", "--out", arg(&dir.path().join("a.csv"))]).status.code(), Some(2));
    assert_eq!(run(&["report", "--in", "/no/such.csv", "--vary", "ordering"]).status.code(), Some(3));
}

#[test]
fn sweep_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"families":[5],"setups":["10:20"],"chains":["2:6"],"machines":[2],"capacities":[10],
            "instances":2,"policies":["tuples","OW"],"tasks":40,"base_seed":5}"#,
    )
    .unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let o = run(&["sweep", "--spec", arg(&spec), "--out", arg(&a), "--jobs", "1"]);
    assert!(o.status.success(), "{o:?}");
    assert!(run(&["sweep", "--spec", arg(&spec), "--out", arg(&b), "--jobs", "3"]).status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 1 + 2 * 91);

    let o = run(&["report", "--in", arg(&a), "--vary", "removal"]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "group,q1,median,q3,whisker_lo,whisker_hi,n_outliers");
    assert_eq!(lines.len(), 4);

    let box_csv = dir.path().join("box.csv");
    let o = run(&["report", "--in", arg(&a), "--vary", "policy", "--out", arg(&box_csv)]);
    assert!(o.status.success(), "{o:?}");
    let text = fs::read_to_string(&box_csv).unwrap();
    assert_eq!(text.lines().count(), 92);
    assert!(text.contains("\"EF,LRU,wait,start\","));
    assert_eq!(run(&["report", "--in", arg(&a), "--vary", "colour"]).status.code(), Some(2));
}
