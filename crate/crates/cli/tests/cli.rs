use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn zeitgeist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zeitgeist"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn example1(dir: &Path) -> [String; 3] {
    let o = zeitgeist(&["build-example1", "--out", s(dir)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    ["env.toml", "model-a.toml", "model-b.toml"].map(|f| dir.join(f).to_str().unwrap().to_string())
}

#[test]
fn solve_ez_on_example1_writes_report_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let [env, a, b] = example1(&tmp.path().join("ex1"));
    let out = tmp.path().join("solve");
    let o = zeitgeist(&[
        "solve-ez",
        "--env",
        &env,
        "--model-a",
        &a,
        "--model-b",
        &b,
        "--shares",
        "0.5,0.5",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0);
    let report = json(&out.join("ez.json"));
    let zs = report["zeitgeists"].as_array().unwrap();
    assert!(!zs.is_empty());
    assert!(zs.iter().all(|z| z["plays"].as_array().unwrap().len() == 2));
    assert_eq!(report["fitness"].as_array().unwrap().len(), zs.len());
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["command"], "solve-ez");
    assert_eq!(m["configs"].as_array().unwrap().len(), 3);
    let outputs: Vec<&str> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(outputs.len(), 2);
    assert!(outputs.iter().all(|p| Path::new(p).exists()));
}

#[test]
fn missing_file_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let o = zeitgeist(&[
        "solve-ez",
        "--env",
        "nope.toml",
        "--model-a",
        "a",
        "--model-b",
        "b",
        "--shares",
        "1,0",
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn malformed_config_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    let [env, a, b] = example1(tmp.path());
    let text = std::fs::read_to_string(&env)
        .unwrap()
        .replace("utility = [1.0, 0.0]", "utility = [1.0, 0.0");
    std::fs::write(&env, text).unwrap();
    let o = zeitgeist(&[
        "solve-ez",
        "--env",
        &env,
        "--model-a",
        &a,
        "--model-b",
        &b,
        "--shares",
        "1,0",
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&zeitgeist(&["solve-ez", "--shares", "0.5"])), 1);
    assert_eq!(code(&zeitgeist(&["no-such-command"])), 1);
    assert_eq!(code(&zeitgeist(&["--help"])), 0);
}

#[test]
fn no_ez_exits_2_with_empty_list() {
    let tmp = tempfile::tempdir().unwrap();
    let game = tmp.path().join("inv");
    assert_eq!(code(&zeitgeist(&["build-investment", "--out", s(&game)])), 0);
    let out = tmp.path().join("solve");
    let f = |n: &str| game.join(n).to_str().unwrap().to_string();
    let o = zeitgeist(&[
        "solve-ez",
        "--env",
        &f("env.toml"),
        "--model-a",
        &f("model-a.toml"),
        "--model-b",
        &f("model-b.toml"),
        "--shares",
        "0.5,0.5",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 2);
    assert!(json(&out.join("ez.json"))["zeitgeists"].as_array().unwrap().is_empty());
}

#[test]
fn reproduce_only_centipede() {
    let tmp = tempfile::tempdir().unwrap();
    let o = zeitgeist(&["reproduce", "--only", "centipede", "--out", s(tmp.path())]);
    assert_eq!(code(&o), 0);
    let rows = json(&tmp.path().join("reproduce.json"));
    let rows = rows.as_array().unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r["group"] == "centipede" && r["pass"] == true));
}

#[test]
fn reproduce_flags_a_tampered_table() {
    let tmp = tempfile::tempdir().unwrap();
    let [env, _, _] = example1(tmp.path());
    let text = std::fs::read_to_string(&env).unwrap();
    assert!(text.contains("[0.3, 0.7]"));
    std::fs::write(&env, text.replacen("[0.3, 0.7]", "[0.35, 0.65]", 1)).unwrap();
    let out = tmp.path().join("rep");
    let o = zeitgeist(&["reproduce", "--only", "example1", "--env", &env, "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    let rows = json(&out.join("reproduce.json"));
    let failed: Vec<&Value> = rows.as_array().unwrap().iter().filter(|r| r["pass"] == false).collect();
    assert!(failed
        .iter()
        .any(|r| r["check"] == "v_NE in G_A" && r["actual"] == "Some(0.35)"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn learn_is_deterministic_and_handles_empty_horizon() {
    let tmp = tempfile::tempdir().unwrap();
    let [env, a, b] = example1(tmp.path());
    let sim = tmp.path().join("sim.toml");
    std::fs::write(
        &sim,
        "n_agents = 40\nshares = [0.5, 0.5]\nhorizon = 30\ntau = 0.99\nsituation = 0\nseed = 3\n",
    )
    .unwrap();
    let run = |name: &str, extra: &[&str]| {
        let out = tmp.path().join(name);
        let mut args = vec![
            "learn",
            "--env",
            &env,
            "--model-a",
            &a,
            "--model-b",
            &b,
            "--sim",
            s(&sim),
            "--window",
            "10",
            "--out",
            s(&out),
        ];
        args.extend_from_slice(extra);
        let o = zeitgeist(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let one = run("one", &[]);
    let two = run("two", &[]);
    let t1 = std::fs::read(one.join("trajectory.tsv")).unwrap();
    assert_eq!(t1, std::fs::read(two.join("trajectory.tsv")).unwrap());
    assert_eq!(json(&one.join("manifest.json"))["seed"], 3);
    let other = run("other", &["--seed", "4"]);
    assert_ne!(t1, std::fs::read(other.join("trajectory.tsv")).unwrap());

    std::fs::write(&sim, "n_agents = 40\nshares = [0.5, 0.5]\nhorizon = 0\n").unwrap();
    let empty = run("empty", &[]);
    let tsv = std::fs::read_to_string(empty.join("trajectory.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 1);
    assert_eq!(json(&empty.join("comparison.json"))["comparison"]["converged"], false);
}

#[test]
fn thread_count_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = Command::new(env!("CARGO_BIN_EXE_zeitgeist"))
        .args(["dollar", "--out", s(tmp.path())])
        .env("EZ_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&bad), 1);
    let ok = Command::new(env!("CARGO_BIN_EXE_zeitgeist"))
        .args(["dollar", "--k", "8", "--out", s(tmp.path())])
        .env("EZ_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&ok), 0);
}

#[test]
fn builders_round_trip_through_solver() {
    let tmp = tempfile::tempdir().unwrap();
    let game = tmp.path().join("cournot");
    let o = zeitgeist(&["build-cournot", "--out", s(&game)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let f = |n: &str| game.join(n).to_str().unwrap().to_string();
    let out = tmp.path().join("solve");
    let o = zeitgeist(&[
        "solve-ez",
        "--env",
        &f("env.toml"),
        "--model-a",
        &f("model-a.toml"),
        "--model-b",
        &f("model-b.toml"),
        "--shares",
        "1,0",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(
        json(&game.join("cournot.json"))["closed_form"]["a_aa"]
            .as_f64()
            .unwrap()
            > 2.6
    );
}
