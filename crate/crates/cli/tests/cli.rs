use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn graft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graft"))
        .args(args)
        .env("GRAFT_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = graft(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, seed: &str) {
    ok(&[
        "synth", "--n-source", "100", "--n-target", "60", "--dynamic-factor", "0.1", "--maturity", "0.5",
        "--seed", seed, "--out", p(dir),
    ]);
}

#[test]
fn synth_writes_instance_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d");
    synth(&dir, "7");
    let mut names: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["meta.json", "source.graph", "target_partial.graph", "target_truth.graph"]
    );
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["spec"]["seed"], 7);
    assert!(meta["measured_dynamic_factor"].as_f64().unwrap() > 0.09);
}

#[test]
fn eval_of_identical_graphs_is_one() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "1");
    let g = tmp.path().join("target_truth.graph");
    let out = ok(&["eval", "--estimate", p(&g), "--truth", p(&g)]);
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["combined_f1"], 1.0);
}

fn pipeline(dir: &Path) {
    synth(dir, "3");
    let (s, t) = (dir.join("source.graph"), dir.join("target_partial.graph"));
    ok(&[
        "transfer", "--source", p(&s), "--target", p(&t), "--out", p(&dir.join("acret.graph")),
        "--report", p(&dir.join("report.json")), "--trace-csv", p(&dir.join("trace.csv")),
        "--dump-similarity", p(&dir.join("sim")), "--seed", "5", "--d1", "8", "--d2", "8",
    ]);
    for m in ["nt", "dt", "rw-dcm"] {
        ok(&[
            "baseline", "--method", m, "--source", p(&s), "--target", p(&t),
            "--out", p(&dir.join(format!("{m}.graph"))), "--d2", "8",
        ]);
    }
    ok(&[
        "eval", "--estimate", p(&dir.join("acret.graph")), "--truth", p(&dir.join("target_truth.graph")),
        "--out", p(&dir.join("eval.json")),
    ]);
    ok(&[
        "sweep", "--axis", "maturity", "--values", "0.3,0.7", "--methods", "nt,acret", "--seeds", "1,2",
        "--n-source", "80", "--n-target", "40", "--d1", "8", "--d2", "8", "--jobs", "2",
        "--out", p(&dir.join("sweep.csv")),
    ]);
}

#[test]
fn full_pipeline_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());
    let files = [
        "source.graph", "target_truth.graph", "target_partial.graph", "meta.json", "acret.graph",
        "report.json", "trace.csv", "nt.graph", "dt.graph", "rw-dcm.graph", "eval.json", "sweep.csv",
    ];
    for f in files {
        let x = fs::read(a.path().join(f)).unwrap();
        assert!(!x.is_empty(), "{f} is empty");
        assert_eq!(x, fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
    let sims: Vec<_> = fs::read_dir(a.path().join("sim")).unwrap().collect();
    assert!(!sims.is_empty());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema"], "report_v1");
    assert!(report.get("timings").is_none());
    let sweep = fs::read_to_string(a.path().join("sweep.csv")).unwrap();
    assert!(sweep.starts_with("# graft-sweep v1\n"));
    assert_eq!(sweep.lines().count(), 2 + 8);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(graft(&["synth", "--bogus"]).status.code(), Some(2));
    assert_eq!(graft(&["frobnicate"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let out = p(tmp.path()).to_string() + "/s.csv";
    for methods in ["", ","] {
        let r = graft(&["sweep", "--axis", "maturity", "--values", "0.5", "--methods", methods, "--out", &out]);
        assert_eq!(r.status.code(), Some(2), "{methods:?}");
    }
    let r = graft(&["sweep", "--axis", "maturity", "--values", "0.5", "--out", &out]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn module_errors_exit_one_with_stage() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "2");
    let other = tmp.path().join("other.graph");
    fs::write(&other, "graphfmt 1\nv zz t0\nv zy t0\ne zy zz 1\n").unwrap();
    let r = graft(&[
        "transfer", "--source", p(&tmp.path().join("source.graph")), "--target", p(&other),
        "--out", p(&tmp.path().join("x.graph")),
    ]);
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("entity selection"), "{err}");
    assert!(err.contains("no overlap"), "{err}");

    let bad = tmp.path().join("bad.graph");
    fs::write(&bad, "graphfmt 1\nv a t0\ne a b 1\n").unwrap();
    let r = graft(&["eval", "--estimate", p(&bad), "--truth", p(&bad)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("line 3"));
}

#[test]
fn config_file_is_applied() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "4");
    let conf = tmp.path().join("run.conf");
    fs::write(&conf, "# settings\nd1 = 6\nd2 = 6\nmu = 0.4\n").unwrap();
    ok(&[
        "transfer", "--source", p(&tmp.path().join("source.graph")),
        "--target", p(&tmp.path().join("target_partial.graph")), "--out", p(&tmp.path().join("o.graph")),
        "--report", p(&tmp.path().join("r.json")), "--config", p(&conf), "--d2", "7",
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["d1"], 6);
    assert_eq!(report["config"]["d2"], 7);
    assert_eq!(report["mu_used"], 0.4);

    fs::write(&conf, "nonsense = 1\n").unwrap();
    let r = graft(&[
        "transfer", "--source", p(&tmp.path().join("source.graph")),
        "--target", p(&tmp.path().join("target_partial.graph")), "--out", p(&tmp.path().join("o.graph")),
        "--config", p(&conf),
    ]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("line 1"));
}

#[test]
fn ingest_builds_graph_and_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let events = tmp.path().join("events.jsonl");
    fs::write(
        &events,
        concat!(
            "{\"ts\": 0, \"attrs\": {\"process\": \"p1\", \"file\": \"f1\"}}\n",
            "{\"ts\": 5, \"attrs\": {\"process\": \"p1\", \"file\": \"f1\"}}\n",
            "{\"ts\": 12, \"attrs\": {\"process\": \"p2\", \"socket\": \"s1\"}}\n",
        ),
    )
    .unwrap();
    let g = tmp.path().join("g.graph");
    ok(&[
        "ingest", "--events", p(&events), "--out", p(&g), "--window-ms", "10",
        "--snapshot-dir", p(&tmp.path().join("snap")),
    ]);
    let text = fs::read_to_string(&g).unwrap();
    assert!(text.contains("e f1 p1 2"), "{text}");
    assert_eq!(fs::read_dir(tmp.path().join("snap")).unwrap().count(), 2);
}
