use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn mgpi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgpi")).env_remove("MGPI_SEED").args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.path().join(name);
    let mut args = vec!["gen", "--out", path_str(&path)];
    args.extend_from_slice(extra);
    let out = mgpi(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    path
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn gen_is_deterministic_and_recorded() {
    let dir = TempDir::new().unwrap();
    let a = gen(&dir, "a.json", &["--states", "5", "--actions", "3", "--seed", "7"]);
    let b = gen(&dir, "b.json", &["--states", "5", "--actions", "3", "--seed", "7"]);
    let c = gen(&dir, "c.json", &["--states", "5", "--actions", "3", "--seed", "8"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    let man = read_json(&dir.path().join("a.json.manifest.json"));
    assert_eq!(man["command"], "gen");
    assert_eq!(man["seed"], 7);
    assert_eq!(man["outputs"][0], path_str(&a));
}

#[test]
fn manifest_records_input_digests() {
    let dir = TempDir::new().unwrap();
    let game = gen(&dir, "g.json", &["--states", "3", "--seed", "1"]);
    let report = dir.path().join("r.json");
    let out = mgpi(&["solve", path_str(&game), "--out", path_str(&report)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(read_json(&report)["manifest"], "r.json.manifest.json");
    let man = read_json(&dir.path().join("r.json.manifest.json"));
    let digest = man["inputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    let again = mgpi(&["solve", path_str(&game), "--out", path_str(&report)]);
    assert_eq!(code(&again), 0);
    assert_eq!(read_json(&dir.path().join("r.json.manifest.json"))["inputs"][0]["sha256"], digest);
}

#[test]
fn sparsity_extremes() {
    let dir = TempDir::new().unwrap();
    for (sparsity, support) in [("0", 1usize), ("1", 4)] {
        let p = gen(&dir, &format!("s{sparsity}.json"), &["--states", "4", "--sparsity", sparsity]);
        let file = read_json(&p);
        let triples = file["rewards"].as_array().unwrap().len();
        assert_eq!(file["transitions"].as_array().unwrap().len(), triples * support);
    }
}

#[test]
fn solve_reports_a_converged_value() {
    let dir = TempDir::new().unwrap();
    let game = gen(&dir, "g.json", &["--states", "6", "--actions", "3", "--seed", "3", "--discount", "0.8"]);
    let trace = dir.path().join("t.csv");
    let report = dir.path().join("r.json");
    let mut values = Vec::new();
    for algo in ["gpi", "vi", "hk"] {
        let out = mgpi(&[
            "solve", path_str(&game), "--algo", algo, "--reference", "--trace", path_str(&trace), "--out", path_str(&report),
        ]);
        assert_eq!(code(&out), 0, "{algo}: {}", stderr(&out));
        let r = read_json(&report);
        assert_eq!(r["status"], "converged");
        assert!(r["final_residual"].as_f64().unwrap() <= 1e-9);
        values.push(r["value"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect::<Vec<_>>());
        let csv = fs::read_to_string(&trace).unwrap();
        assert!(csv.starts_with("iter,sup_error,bellman_residual,ratio\n"));
    }
    for v in &values[1..] {
        for (a, b) in v.iter().zip(&values[0]) {
            assert!((a - b).abs() <= 1e-7);
        }
    }
}

#[test]
fn naive_converges_on_an_mdp() {
    let dir = TempDir::new().unwrap();
    let game = gen(&dir, "g.json", &["--states", "5", "--actions", "3", "--mdp", "--seed", "4"]);
    let out = mgpi(&["solve", path_str(&game), "--algo", "naive", "--omit-timing"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["status"], "converged");
}

#[test]
fn exhausted_budget_exits_3() {
    let dir = TempDir::new().unwrap();
    let game = gen(&dir, "g.json", &["--states", "4", "--seed", "2"]);
    let out = mgpi(&["solve", path_str(&game), "--algo", "vi", "--max-iters", "3", "--omit-timing"]);
    assert_eq!(code(&out), 3);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["status"], "max_iters");
    assert_eq!(r["iterations"], 3);
}

#[test]
fn malformed_and_missing_inputs_exit_1() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"num_states\": 2,\n  \"discount\": oops\n}\n").unwrap();
    let out = mgpi(&["solve", path_str(&bad)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
    assert!(stderr(&out).contains("bad.json"));

    let out = mgpi(&["solve", path_str(&dir.path().join("absent.json"))]);
    assert_eq!(code(&out), 1);

    let invalid = dir.path().join("invalid.json");
    fs::write(
        &invalid,
        r#"{"num_states":1,"discount":0.9,"actions_max":[1],"actions_min":[1],
            "rewards":[[0,0,0,2.0]],"transitions":[[0,0,0,0,0.5]]}"#,
    )
    .unwrap();
    let out = mgpi(&["solve", path_str(&invalid)]);
    assert_eq!(code(&out), 1);
    let msg = stderr(&out);
    assert!(msg.contains("2 violation(s)") && msg.contains("RewardOutOfRange"), "{msg}");
}

#[test]
fn usage_errors_exit_64() {
    let dir = TempDir::new().unwrap();
    let game = gen(&dir, "g.json", &["--states", "2"]);
    assert_eq!(code(&mgpi(&["compare", path_str(&game)])), 64);
    assert_eq!(code(&mgpi(&["compare", path_str(&game), "bogus"])), 64);
    assert_eq!(code(&mgpi(&["solve", path_str(&game), "--m", "x"])), 64);
    assert_eq!(code(&mgpi(&["--threads", "0", "solve", path_str(&game)])), 64);
    assert_eq!(code(&mgpi(&["frobnicate"])), 64);
}

#[test]
fn help_lists_exit_codes() {
    let out = mgpi(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    for needle in ["Exit codes", "64", "MGPI_SEED"] {
        assert!(text.contains(needle), "{needle}");
    }
}

#[test]
fn compare_rows_follow_the_configurations() {
    let dir = TempDir::new().unwrap();
    let game = gen(&dir, "g.json", &["--states", "4", "--seed", "9", "--discount", "0.7"]);
    let out = mgpi(&["compare", path_str(&game), "gpi:m=2,H=3", "gpi:m=2,H=3", "vi", "--omit-timing"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mut reader = csv::Reader::from_reader(&out.stdout[..]);
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["algo", "iters", "operator_applications", "matrix_games_solved", "wall_ms", "final_residual"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0], rows[1]);
    assert_eq!(&rows[2][0], "vi");
    assert_eq!(&rows[0][4], "");
}

#[test]
fn timing_free_output_is_reproducible_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let game = gen(&dir, "g.json", &["--states", "5", "--actions", "2", "--seed", "11", "--discount", "0.6"]);
    let run = |threads: &str| {
        let out = mgpi(&["--threads", threads, "--omit-timing", "rl", path_str(&game), "--N", "50,500", "--seed", "4"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        out.stdout
    };
    let one = run("1");
    assert_eq!(one, run("1"));
    assert_eq!(one, run("4"));
}

#[test]
fn rl_sweep_reports_every_sample_size() {
    let dir = TempDir::new().unwrap();
    let game = gen(&dir, "g.json", &["--states", "4", "--actions", "2", "--min-actions", "2", "--seed", "6", "--discount", "0.5"]);
    let out = mgpi(&["rl", path_str(&game), "--N", "10,100,1000", "--omit-timing"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    let runs = r["runs"].as_array().unwrap();
    assert_eq!(runs.iter().map(|x| x["n"].as_u64().unwrap()).collect::<Vec<_>>(), [10, 100, 1000]);
    assert!(runs.iter().all(|x| x.get("wall_ms").is_none()));
    assert!(r["sample_bound"]["n_required"].as_u64().unwrap() >= 1);
}

#[test]
fn rl_on_a_deterministic_game_is_exact() {
    let dir = TempDir::new().unwrap();
    let game = gen(&dir, "g.json", &["--states", "5", "--actions", "3", "--sparsity", "0", "--seed", "12", "--discount", "0.6"]);
    let out = mgpi(&["rl", path_str(&game), "--N", "1", "--eps-opt", "1e-8", "--omit-timing"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["runs"][0]["v_error"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn seed_variable_overrides_the_flag() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = gen(&dir, "b.json", &["--states", "4", "--seed", "21"]);
    let out = Command::new(env!("CARGO_BIN_EXE_mgpi"))
        .env("MGPI_SEED", "21")
        .args(["gen", "--states", "4", "--seed", "3", "--out", path_str(&a)])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(read_json(&dir.path().join("a.json.manifest.json"))["seed"], 21);

    let out = Command::new(env!("CARGO_BIN_EXE_mgpi"))
        .env("MGPI_SEED", "-1")
        .args(["gen", "--states", "4", "--out", path_str(&a)])
        .output()
        .unwrap();
    assert_eq!(code(&out), 64);
}

#[test]
fn search_naive_archives_what_it_finds() {
    let dir = TempDir::new().unwrap();
    let archive = dir.path().join("cycles.jsonl");
    let out = mgpi(&["search-naive", "--first-seed", "831", "--games", "1", "--archive", path_str(&archive), "--omit-timing"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["cycling"], 1);
    assert_eq!(fs::read_to_string(&archive).unwrap().lines().count(), 1);

    let out = mgpi(&["search-naive", "--first-seed", "0", "--games", "5", "--archive", path_str(&archive), "--omit-timing"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read_to_string(&archive).unwrap(), "");
}

#[test]
fn archived_game_cycles_under_solve() {
    let dir = TempDir::new().unwrap();
    let archive = dir.path().join("cycles.jsonl");
    mgpi(&["search-naive", "--first-seed", "831", "--games", "1", "--archive", path_str(&archive)]);
    let line: Value = serde_json::from_str(fs::read_to_string(&archive).unwrap().lines().next().unwrap()).unwrap();
    let game = dir.path().join("g.json");
    fs::write(&game, line["game"].to_string()).unwrap();
    let out = mgpi(&["solve", path_str(&game), "--algo", "naive", "--max-iters", "200", "--tol", "1e-10", "--omit-timing"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["cycle"]["period"], line["period"]);
    let out = mgpi(&["solve", path_str(&game), "--algo", "gpi", "--omit-timing"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn feature_and_linear_planners_run() {
    let dir = TempDir::new().unwrap();
    let game = gen(&dir, "g.json", &["--states", "4", "--seed", "5", "--discount", "0.6"]);
    let features = dir.path().join("f.json");
    fs::write(&features, r#"{"d":2,"phi":[[1,0],[1,0.5],[0,1],[1,1]],"anchors":[0,2]}"#).unwrap();
    let trace = dir.path().join("fa.csv");
    let out = mgpi(&["fa", path_str(&game), "--features", path_str(&features), "--iters", "4", "--trace", path_str(&trace)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["bound"]["kappa_fa"].as_f64().unwrap() < 1.0);
    assert_eq!(fs::read_to_string(&trace).unwrap().lines().count(), 1 + r["iterations"].as_u64().unwrap() as usize);

    let out = mgpi(&["stochastic", path_str(&game), "--features", path_str(&features), "--iters", "20", "--starts", "3"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let model = dir.path().join("lin.json");
    fs::write(
        &model,
        r#"{"d":2,"features":[[0,0,0,[1.0,0.0]],[0,1,0,[0.5,0.5]],[1,0,0,[0.0,1.0]]],
            "theta":[0.5,0.25],"eta":[[0.5,0.2],[0.5,0.8]]}"#,
    )
    .unwrap();
    let out = mgpi(&["linear", path_str(&model), "--discount", "0.8", "--m", "2", "--H", "2", "--iters", "60", "--tol", "1e-9"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["status"], "converged");
    assert_eq!(r["cost_per_iteration"]["matrix_game_count"], 8);
    let out = mgpi(&["linear", path_str(&model), "--discount", "0.8", "--iters", "2", "--tol", "1e-14"]);
    assert_eq!(code(&out), 3);
}
