use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn model(name: &str) -> String {
    root().join("models").join(name).to_string_lossy().into_owned()
}

fn pscale<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_pscale"))
        .args(args)
        .current_dir(root())
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pscale-cli-{}-{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn validates_every_bundled_model() {
    for entry in fs::read_dir(root().join("models")).unwrap() {
        let path = entry.unwrap().path();
        let name = path.to_string_lossy();
        if name.ends_with(".scenario.yaml") {
            continue;
        }
        let out = pscale([Path::new("validate"), &path]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", stderr(&out));
        assert!(stdout(&out).contains(": ok ("));
    }
}

#[test]
fn unknown_agent_names_the_promise() {
    let dir = scratch("unknown");
    let path = dir.join("bad.yaml");
    fs::write(
        &path,
        "version: 1\nagents: [{id: A}, {id: B}]\npromises:\n  - {id: ok, promiser: A, promisees: [B], polarity: offer, body: [x]}\n  - {id: broken, promiser: A, promisees: [B, Q], polarity: offer, body: [y]}\n",
    )
    .unwrap();
    let out = pscale([Path::new("validate"), &path]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("promises[1].promisees[1]") && err.contains("Q"), "{err}");
}

#[test]
fn syntax_errors_carry_a_line() {
    let dir = scratch("syntax");
    let path = dir.join("bad.yaml");
    fs::write(&path, "version: 1\nagents: [{id: A}\n").unwrap();
    let out = pscale([Path::new("validate"), &path]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line "), "{}", stderr(&out));
}

#[test]
fn unreadable_input_is_exit_two() {
    let out = pscale(["validate", "/definitely/not/here.yaml"]);
    assert_eq!(out.status.code(), Some(2));
    let out = pscale(["simulate", &model("cond1.yaml")]);
    assert_eq!(out.status.code(), Some(2), "missing arguments are a usage error");
}

#[test]
fn analyze_reports_single_points_of_failure() {
    let out = pscale(["analyze", &model("cond1.yaml")]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("single points of failure: D, S"), "{}", stdout(&out));
    let out = pscale(["analyze", &model("cond3.yaml")]);
    assert!(stdout(&out).contains("single points of failure: none"), "{}", stdout(&out));
}

#[test]
fn analyze_shows_the_mediator_at_two_scales() {
    let dir = scratch("mediator");
    let report = dir.join("report.yaml");
    let out = pscale([
        "analyze".as_ref(),
        model("stateless-mediator.yaml").as_ref(),
        "--scale".as_ref(),
        "entity".as_ref(),
        "--out".as_ref(),
        report.as_os_str(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("M: weakly_stateless"), "{text}");
    assert!(text.contains("{B,M}: stateful"), "{text}");
    let yaml: serde_yaml::Value = serde_yaml::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(yaml["version"], serde_yaml::Value::from(1));
    assert!(yaml["scales"].as_sequence().is_some_and(|s| s.len() == 2));
}

#[test]
fn analyze_handles_an_empty_model_and_bad_partitions() {
    let dir = scratch("empty");
    let path = dir.join("empty.yaml");
    fs::write(&path, "version: 1\n").unwrap();
    let out = pscale([Path::new("analyze"), &path]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out = pscale(["analyze", &model("cond1.yaml"), "--scale", "nope"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("nope"));
}

#[test]
fn same_seed_gives_identical_traces() {
    let dir = scratch("determinism");
    let args = |trace: &Path| {
        vec![
            "simulate".to_string(),
            model("cond3.yaml"),
            model("cond3.scenario.yaml"),
            "--seeds".into(),
            "4..6".into(),
            "--steps".into(),
            "300".into(),
            "--trace".into(),
            trace.to_string_lossy().into_owned(),
        ]
    };
    let a = pscale(args(&dir.join("a-{seed}.jsonl")));
    let b = pscale(args(&dir.join("b-{seed}.jsonl")));
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&b));
    for seed in 4..=6 {
        let ta = fs::read(dir.join(format!("a-{seed}.jsonl"))).unwrap();
        let tb = fs::read(dir.join(format!("b-{seed}.jsonl"))).unwrap();
        assert!(!ta.is_empty());
        assert_eq!(ta, tb, "seed {seed}");
    }
    assert_ne!(
        fs::read(dir.join("a-4.jsonl")).unwrap(),
        fs::read(dir.join("a-5.jsonl")).unwrap()
    );
}

#[test]
fn redundant_dependency_survives_a_kill() {
    let out = pscale([
        "simulate",
        &model("cond3.yaml"),
        &model("cond3-kill-d1.scenario.yaml"),
        "--seed",
        "2",
        "--steps",
        "300",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let line = text.lines().find(|l| l.contains("promise r-accepts-service")).unwrap();
    assert!(line.contains("not kept 0") && !line.contains("sampled 0,"), "{line}");
}

#[test]
fn transaction_replays_match() {
    let dir = scratch("tx");
    let report = dir.join("runs.yaml");
    let out = pscale([
        "simulate".as_ref(),
        model("transaction.yaml").as_ref(),
        model("transaction.scenario.yaml").as_ref(),
        "--seeds".as_ref(),
        "0..3".as_ref(),
        "--steps".as_ref(),
        "400".as_ref(),
        "--out".as_ref(),
        report.as_os_str(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(stdout(&out).matches("replay_equivalent true").count(), 4, "{}", stdout(&out));
    let yaml: serde_yaml::Value = serde_yaml::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let runs = yaml["runs"].as_sequence().unwrap();
    assert_eq!(runs.len(), 4);
    assert_eq!(runs[3]["seed"], serde_yaml::Value::from(3));
}

#[test]
fn markov_recovers_the_declared_order() {
    let dir = scratch("markov");
    let trace = dir.join("chain.jsonl");
    let report = dir.join("markov.yaml");
    let out = pscale([
        "simulate".as_ref(),
        model("markov-chain.yaml").as_ref(),
        model("markov-chain.scenario.yaml").as_ref(),
        "--seed".as_ref(),
        "9".as_ref(),
        "--steps".as_ref(),
        "5000".as_ref(),
        "--trace".as_ref(),
        trace.as_os_str(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out = pscale([
        "markov".as_ref(),
        trace.as_os_str(),
        "--agent".as_ref(),
        "G".as_ref(),
        "--variable".as_ref(),
        "s".as_ref(),
        "--model".as_ref(),
        model("markov-chain.yaml").as_ref(),
        "--out".as_ref(),
        report.as_os_str(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("estimated order 1"), "{}", stdout(&out));
    let yaml: serde_yaml::Value = serde_yaml::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(yaml["estimate"]["order"], serde_yaml::Value::from(1));
    assert_eq!(yaml["consistent_with_declaration"], serde_yaml::Value::from(true));

    let out = pscale([
        "markov".as_ref(),
        trace.as_os_str(),
        "--agent".as_ref(),
        "G".as_ref(),
        "--variable".as_ref(),
        "s".as_ref(),
        "--min-length".as_ref(),
        "1000000".as_ref(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("insufficient data"), "{}", stderr(&out));
}

#[test]
fn readme_commands_run() {
    let readme = fs::read_to_string(root().join("README.md")).unwrap();
    let mut in_block = false;
    let mut ran = 0;
    for line in readme.lines() {
        if line.starts_with("```") {
            in_block = !in_block;
            continue;
        }
        let Some(cmd) = line.strip_prefix("pscale ").filter(|_| in_block) else {
            continue;
        };
        let args: Vec<&str> = cmd.split_whitespace().collect();
        let out = pscale(&args);
        assert_eq!(out.status.code(), Some(0), "`{line}` failed: {}", stderr(&out));
        ran += 1;
    }
    assert!(ran >= 4, "only {ran} commands found");
}
