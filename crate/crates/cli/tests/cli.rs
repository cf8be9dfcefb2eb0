use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use loopgate::io::{tables, tum};
use loopgate::LoopCandidate;
use tempfile::TempDir;

fn loopgate(args: &[&str]) -> Output {
    loopgate_env(args, &[])
}

fn loopgate_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_loopgate"));
    cmd.args(args).env_remove("LOOPGATE_THREADS").env_remove("RUST_LOG");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Asserts failure and returns the single stderr line.
fn fails(out: Output) -> (i32, String) {
    assert!(!out.status.success(), "expected failure, stdout: {}", String::from_utf8_lossy(&out.stdout));
    let err = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "stderr should be one line: {err:?}");
    assert!(lines[0].starts_with("error: "), "{err}");
    (out.status.code().unwrap(), lines[0].to_string())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["simulate", "--out", p(dir)];
    args.extend_from_slice(extra);
    ok(loopgate(&args));
    dir.to_path_buf()
}

/// File name to contents, skipping lines that legitimately vary between runs.
fn tree(dir: &Path) -> BTreeMap<String, String> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let text = fs::read_to_string(&path).unwrap();
        let kept: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with("duration_seconds") && !l.starts_with("threads") && !l.starts_with("out ="))
            .filter(|l| !l.contains(p(dir)))
            .collect();
        files.insert(name, kept.join("\n"));
    }
    files
}

fn manifest(path: &Path) -> toml::Table {
    fs::read_to_string(path).unwrap().parse().unwrap()
}

fn verdicts(path: &Path) -> Vec<tables::VerdictRow> {
    tables::read_verdicts(path).unwrap()
}

#[test]
fn simulate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let flags = ["--sigma", "0.05", "--seed", "11", "--shape", "figure_eight", "--keyframes", "300"];
    let a = tree(&simulate(&tmp.path().join("a"), &flags));
    let b = tree(&simulate(&tmp.path().join("b"), &flags));
    assert_eq!(
        a.keys().collect::<Vec<_>>(),
        ["candidates.csv", "ground_truth.tum", "manifest.toml", "odometry.g2o", "odometry.tum"]
    );
    assert_eq!(a, b);
    let c = tree(&simulate(&tmp.path().join("c"), &["--sigma", "0.05", "--seed", "12", "--shape", "figure_eight", "--keyframes", "300"]));
    assert_ne!(a["odometry.tum"], c["odometry.tum"]);
}

#[test]
fn manifest_records_parameters_and_reruns_identically() {
    let tmp = TempDir::new().unwrap();
    let first = simulate(&tmp.path().join("first"), &["--sigma", "0.03", "--seed", "4", "--true-loops", "7"]);
    let m = manifest(&first.join("manifest.toml"));
    assert_eq!(m["status"].as_str(), Some("ok"));
    assert_eq!(m["shape"].as_str(), Some("grid_loop"));
    assert_eq!(m["sigma"].as_float(), Some(0.03));
    assert_eq!(m["seed"].as_integer(), Some(4));
    assert_eq!(m["true_loops_written"].as_integer(), Some(7));
    assert_eq!(m["false_loops_written"].as_integer(), Some(20));
    assert_eq!(m["keyframes_written"].as_integer(), Some(200));
    assert_eq!(m["tool_version"].as_str(), Some(env!("CARGO_PKG_VERSION")));
    assert!(m["duration_seconds"].as_float().unwrap() >= 0.0);
    assert!(m["outputs"]["candidates"].as_str().unwrap().ends_with("candidates.csv"));

    let second = tmp.path().join("second");
    let mut args: Vec<String> = m["args"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let out = args.iter().position(|a| a == "--out").unwrap();
    args[out + 1] = p(&second).to_string();
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(loopgate(&args));
    for f in ["candidates.csv", "ground_truth.tum", "odometry.g2o", "odometry.tum"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn zero_noise_accepts_every_true_loop_and_carries_labels() {
    let tmp = TempDir::new().unwrap();
    let run = simulate(&tmp.path().join("run"), &["--sigma", "0", "--seed", "2"]);
    let out = tmp.path().join("v.csv");
    ok(loopgate(&[
        "verify",
        "--trajectory",
        p(&run.join("odometry.tum")),
        "--candidates",
        p(&run.join("candidates.csv")),
        "--tau",
        "0.1",
        "--out",
        p(&out),
    ]));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("query_id,match_id,score,converged,accepted,label\n"));

    let cands = tables::read_candidates(&run.join("candidates.csv")).unwrap();
    let rows = verdicts(&out);
    assert_eq!(rows.len(), cands.len());
    for (c, r) in cands.iter().zip(&rows) {
        assert_eq!((c.query_id, c.match_id, c.label), (r.query_id, r.match_id, r.label));
        if c.label == Some(true) {
            assert!(r.accepted, "true loop {}->{} rejected, score {:?}", r.query_id, r.match_id, r.score);
            assert!(r.score.unwrap() < 1e-6);
        } else {
            assert!(!r.accepted, "false loop {}->{} accepted", r.query_id, r.match_id);
        }
    }
    assert!(manifest(&tmp.path().join("v.csv.manifest.toml"))["accepted"].as_integer() == Some(20));

    let g2o_out = tmp.path().join("v2.csv");
    ok(loopgate(&[
        "verify",
        "--trajectory",
        p(&run.join("odometry.g2o")),
        "--candidates",
        p(&run.join("candidates.csv")),
        "--tau",
        "0.1",
        "--out",
        p(&g2o_out),
    ]));
    assert_eq!(fs::read(&out).unwrap(), fs::read(&g2o_out).unwrap());

    let stdout = ok(loopgate(&["eval", "--verdicts", p(&out)]));
    assert_eq!(stdout, "AP,100.00\nMR,100.00\n");
}

#[test]
fn sequential_mode_accepts_what_batch_rejects() {
    let tmp = TempDir::new().unwrap();
    let run = simulate(&tmp.path().join("run"), &["--sigma", "0.02", "--seed", "5"]);
    let gt = tum::read(&run.join("ground_truth.tum")).unwrap();
    let pts = gt.points();
    let cands: Vec<LoopCandidate> = [(150, 0), (190, 40)]
        .iter()
        .map(|&(q, m)| {
            LoopCandidate::with_identity_information(q, m, pts[q].pose.between(&pts[m].pose), Some(true)).unwrap()
        })
        .collect();
    let cfile = tmp.path().join("stream.csv");
    tables::write_candidates(&cfile, &cands).unwrap();

    let odometry = run.join("odometry.tum");
    let run_mode = |name: &str, extra: &[&str]| {
        let out = tmp.path().join(name);
        let mut args = vec![
            "verify",
            "--trajectory",
            p(&odometry),
            "--candidates",
            p(&cfile),
            "--tau",
            "0.2",
            "--out",
            p(&out),
        ];
        args.extend_from_slice(extra);
        ok(loopgate(&args));
        verdicts(&out)
    };
    let batch = run_mode("batch.csv", &[]);
    let seq = run_mode("seq.csv", &["--sequential"]);
    let raw = run_mode("raw.csv", &["--sequential", "--prior", "raw"]);
    assert!(seq[0].accepted && seq[1].accepted, "{seq:?}");
    assert!(!batch[1].accepted, "{batch:?}");
    // same first decision; only the second sees the correction
    assert_eq!(raw[0].accepted, seq[0].accepted);
    assert!((raw[0].score.unwrap() - seq[0].score.unwrap()).abs() < 1e-6);
    assert!(raw[1].score.unwrap() > seq[1].score.unwrap(), "{raw:?} {seq:?}");
}

#[test]
fn failed_solve_leaves_score_empty() {
    let tmp = TempDir::new().unwrap();
    let traj = tmp.path().join("t.tum");
    // yaw 0, 90, 180 degrees: closing 2 -> 0 with identity sits on the rotation cut
    fs::write(
        &traj,
        "# timestamp tx ty tz qx qy qz qw\n\
         0 0 0 0 0 0 0 1\n\
         1 1 0 0 0 0 0.7071067811865476 0.7071067811865476\n\
         2 1 1 0 0 0 1 0\n",
    )
    .unwrap();
    let cands = tmp.path().join("c.csv");
    fs::write(&cands, "query_id,match_id,tx,ty,tz,qx,qy,qz,qw,label\n2,0,0,0,0,0,0,0,1,0\n").unwrap();
    let out = tmp.path().join("v.csv");
    ok(loopgate(&[
        "verify",
        "--trajectory",
        p(&traj),
        "--candidates",
        p(&cands),
        "--tau",
        "1",
        "--out",
        p(&out),
    ]));
    assert_eq!(
        fs::read_to_string(&out).unwrap(),
        "query_id,match_id,score,converged,accepted,label\n2,0,,0,0,0\n"
    );
}

#[test]
fn eval_reports_ate_and_temporal_columns() {
    let tmp = TempDir::new().unwrap();
    let run = simulate(&tmp.path().join("run"), &["--sigma", "0.05", "--seed", "1"]);
    let metrics = tmp.path().join("m.csv");
    let stdout = ok(loopgate(&[
        "eval",
        "--est",
        p(&run.join("odometry.tum")),
        "--gt",
        p(&run.join("ground_truth.tum")),
        "--k",
        "5",
        "--out",
        p(&metrics),
    ]));
    let lines: Vec<&str> = stdout.lines().collect();
    assert!(lines[0].starts_with("ATE,"));
    assert_eq!(lines[1], "t0,t1,t2,t3,t4,tATE");
    assert_eq!(lines[2].split(',').count(), 6);

    let text = fs::read_to_string(&metrics).unwrap();
    let names: Vec<&str> = text.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["metric", "ATE", "t0", "t1", "t2", "t3", "t4", "tATE"]);
    let value = |name: &str| -> f64 {
        text.lines().find(|l| l.starts_with(&format!("{name},"))).unwrap().split(',').nth(1).unwrap().parse().unwrap()
    };
    // the last checkpoint covers the whole trajectory
    assert_eq!(value("t4"), value("ATE"));
    assert!(value("ATE") > 0.0);

    let se3 = ok(loopgate(&[
        "eval",
        "--est",
        p(&run.join("odometry.tum")),
        "--gt",
        p(&run.join("ground_truth.tum")),
        "--align",
        "se3",
    ]));
    let ate = |s: &str| -> f64 { s.lines().next().unwrap()[4..].parse().unwrap() };
    assert!(ate(&se3) >= ate(&stdout) - 1e-9);

    let self_ate = ok(loopgate(&[
        "eval",
        "--est",
        p(&run.join("ground_truth.tum")),
        "--gt",
        p(&run.join("ground_truth.tum")),
    ]));
    assert!(ate(&self_ate) < 1e-6);
    let tate: f64 = self_ate.lines().nth(2).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(tate < 1e-6, "{self_ate}");
}

#[test]
fn zero_noise_small_run_passes_at_a_tiny_threshold() {
    let tmp = TempDir::new().unwrap();
    let run = simulate(&tmp.path().join("run"), &["--sigma", "0", "--true-loops", "5", "--false-loops", "5"]);
    let out = tmp.path().join("v.csv");
    ok(loopgate(&[
        "verify",
        "--trajectory",
        p(&run.join("odometry.tum")),
        "--candidates",
        p(&run.join("candidates.csv")),
        "--tau",
        "2e-6",
        "--out",
        p(&out),
    ]));
    let rows = verdicts(&out);
    assert_eq!(rows.len(), 10);
    assert_eq!(rows.iter().filter(|r| r.label == Some(true) && r.accepted).count(), 5);
    assert!(rows.iter().all(|r| r.accepted == (r.label == Some(true))));
}

#[test]
fn noisy_odometry_drifts_beyond_one_spacing() {
    let tmp = TempDir::new().unwrap();
    let run = simulate(&tmp.path().join("run"), &["--sigma", "0.1", "--seed", "3"]);
    let gt = tum::read(&run.join("ground_truth.tum")).unwrap();
    let odo = tum::read(&run.join("odometry.tum")).unwrap();
    let (a, b) = (gt.positions(), odo.positions());
    assert_eq!(a.len(), b.len());
    let end = (a.last().unwrap() - b.last().unwrap()).norm();
    assert!(end > 0.5, "endpoint error {end}");
}

#[test]
fn sweep_writes_curves_table_and_plot() {
    let tmp = TempDir::new().unwrap();
    let flags = |out: &Path| -> Vec<String> {
        [
            "sweep", "--sigmas", "0.01,0.1", "--seeds", "3", "--keyframes", "120", "--true-loops", "5", "--false-loops",
            "5", "--seed", "8", "--out",
        ]
        .iter()
        .map(|s| s.to_string())
        .chain([p(out).to_string()])
        .collect()
    };
    let one = tmp.path().join("one");
    let three = tmp.path().join("three");
    let args_one = flags(&one);
    let args_three = flags(&three);
    let stdout = ok(loopgate_env(&args_one.iter().map(String::as_str).collect::<Vec<_>>(), &[("LOOPGATE_THREADS", "1")]));
    ok(loopgate_env(&args_three.iter().map(String::as_str).collect::<Vec<_>>(), &[("LOOPGATE_THREADS", "3")]));

    let a = tree(&one);
    assert_eq!(
        a.keys().collect::<Vec<_>>(),
        ["manifest.toml", "pr.svg", "pr_sigma_0.01.csv", "pr_sigma_0.1.csv", "summary.csv"]
    );
    assert_eq!(a, tree(&three), "thread count must not change results");
    assert_eq!(manifest(&one.join("manifest.toml"))["threads"].as_integer(), Some(1));

    let summary = &a["summary.csv"];
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("sigma,AP,MR,mean_AP,stderr_AP,positives,negatives,calibrated_tau"));
    for (line, sigma) in lines.zip(["0.01", "0.1"]) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0], sigma);
        for pct in &f[1..5] {
            let (_, decimals) = pct.split_once('.').expect("percentage has decimals");
            assert_eq!(decimals.len(), 2, "{pct}");
        }
        assert_eq!((f[5], f[6]), ("15", "15"));
    }
    assert!(stdout.contains("AP") && stdout.contains("MR"));

    let curve = &a["pr_sigma_0.01.csv"];
    assert!(curve.starts_with("score,precision,recall"));
    let last_recall: f64 = curve.lines().last().unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(last_recall, 1.0);

    let svg = &a["pr.svg"];
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains("σ = 0.01<") && svg.contains("σ = 0.1<"));

    let leftovers: Vec<_> = fs::read_dir(&one)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with('.'))
        .collect();
    assert!(leftovers.is_empty(), "temporary files left: {leftovers:?}");
}

#[test]
fn bad_thread_count_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("s");
    let (code, line) = fails(loopgate_env(&["sweep", "--seeds", "1", "--out", p(&out)], &[("LOOPGATE_THREADS", "0")]));
    assert_eq!(code, 1);
    assert!(line.starts_with("error: invalid_config: LOOPGATE_THREADS"), "{line}");
    let m = manifest(&out.join("manifest.toml"));
    assert_eq!(m["status"].as_str(), Some("failed"));
    assert_eq!(m["error_kind"].as_str(), Some("invalid_config"));
}

#[test]
fn verify_requires_tau() {
    let (code, line) = fails(loopgate(&["verify", "--trajectory", "t.tum", "--candidates", "c.csv", "--out", "v.csv"]));
    assert_eq!(code, 2);
    assert!(line.starts_with("error: usage: ") && line.contains("--tau"), "{line}");
    let (_, line) = fails(loopgate(&[
        "verify", "--trajectory", "t.tum", "--candidates", "c.csv", "--out", "v.csv", "--tau", "-1",
    ]));
    assert!(line.starts_with("error: "), "{line}");
}

#[test]
fn parse_errors_name_file_and_line() {
    let tmp = TempDir::new().unwrap();
    let traj = tmp.path().join("t.tum");
    fs::write(&traj, "# header\n0 0 0 0 0 0 0 1\n1 0 0 zero 0 0 0 1\n").unwrap();
    let cands = tmp.path().join("c.csv");
    fs::write(&cands, "query_id,match_id,tx,ty,tz,qx,qy,qz,qw,label\n").unwrap();
    let out = tmp.path().join("v.csv");
    let (code, line) = fails(loopgate(&[
        "verify",
        "--trajectory",
        p(&traj),
        "--candidates",
        p(&cands),
        "--tau",
        "0.1",
        "--out",
        p(&out),
    ]));
    assert_eq!(code, 1);
    assert!(line.starts_with("error: parse: "), "{line}");
    assert!(line.contains("t.tum") && line.contains("line 3"), "{line}");
    assert!(!out.exists());
    let m = manifest(&tmp.path().join("v.csv.manifest.toml"));
    assert_eq!(m["status"].as_str(), Some("failed"));

    let verdict_file = tmp.path().join("bad.csv");
    fs::write(&verdict_file, "query_id,match_id,score,converged,accepted,label\n3,1,0.1,1,1,1\n4,1,x,1,0,0\n").unwrap();
    let (_, line) = fails(loopgate(&["eval", "--verdicts", p(&verdict_file)]));
    assert!(line.starts_with("error: parse: ") && line.contains("line 3"), "{line}");
}

#[test]
fn single_class_verdicts_cannot_be_scored() {
    let tmp = TempDir::new().unwrap();
    let v = tmp.path().join("v.csv");
    fs::write(&v, "query_id,match_id,score,converged,accepted,label\n3,1,0.1,1,1,1\n5,1,0.2,1,0,1\n").unwrap();
    let (_, line) = fails(loopgate(&["eval", "--verdicts", p(&v)]));
    assert!(line.starts_with("error: single_class: "), "{line}");
}

#[test]
fn unsatisfiable_scenario_fails_cleanly() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("line");
    let (code, line) = fails(loopgate(&["simulate", "--shape", "line", "--out", p(&out)]));
    assert_eq!(code, 1);
    assert!(line.starts_with("error: unsatisfiable: "), "{line}");
    assert!(!out.join("candidates.csv").exists());
    assert_eq!(manifest(&out.join("manifest.toml"))["status"].as_str(), Some("failed"));

    let (code, line) = fails(loopgate(&["simulate", "--shape", "hexagon", "--out", p(&out)]));
    assert_eq!(code, 2);
    assert!(line.contains("hexagon"), "{line}");
}

#[test]
fn help_and_version_succeed() {
    assert!(ok(loopgate(&["--help"])).contains("simulate"));
    assert!(ok(loopgate(&["--version"])).contains(env!("CARGO_PKG_VERSION")));
}
