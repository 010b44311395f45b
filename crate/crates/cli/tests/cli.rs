use std::fs;
use std::process::{Command, Output};

use tempfile::TempDir;

fn outage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_outage"))
        .args(args)
        .env_remove("OUTAGE_ITERATIONS")
        .output()
        .expect("binary runs")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn generate(dir: &TempDir, seed: &str) -> (String, String) {
    let (inst, wit) = (path(dir, "inst.json"), path(dir, "witness.json"));
    let out = outage(&[
        "generate",
        "--seed",
        seed,
        "--plants",
        "3",
        "-o",
        &inst,
        "--witness",
        &wit,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    (inst, wit)
}

#[test]
fn witness_validates() {
    let dir = TempDir::new().unwrap();
    let (inst, wit) = generate(&dir, "4");
    let report = path(&dir, "report.json");
    let out = outage(&["validate", &inst, &wit, "-o", &report]);
    assert_eq!(out.status.code(), Some(0));
    let value: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(value["feasible"], true);
    assert_eq!(value["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn broken_solution_exits_2() {
    let dir = TempDir::new().unwrap();
    let (inst, wit) = generate(&dir, "5");
    let mut value: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&wit).unwrap()).unwrap();
    let row = &mut value["production"][0][0][0];
    *row = serde_json::json!(row.as_f64().unwrap() + 50.0);
    fs::write(&wit, value.to_string()).unwrap();
    let out = outage(&["validate", &inst, &wit]);
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["feasible"], false);
}

#[test]
fn deterministic_solve_is_repeatable_and_feasible() {
    let dir = TempDir::new().unwrap();
    let (inst, _) = generate(&dir, "6");
    let runs: Vec<String> = (0..2)
        .map(|n| {
            let sol = path(&dir, &format!("sol{n}.json"));
            let out = outage(&[
                "solve",
                &inst,
                "--iterations",
                "2000",
                "--cp-nodes",
                "20000",
                "--seed",
                "9",
                "-o",
                &sol,
            ]);
            assert_eq!(
                out.status.code(),
                Some(0),
                "{}",
                String::from_utf8_lossy(&out.stderr)
            );
            let stderr = String::from_utf8_lossy(&out.stderr);
            assert!(
                stderr.contains("objective") && stderr.contains("modulation"),
                "{stderr}"
            );
            fs::read_to_string(sol).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    let out = outage(&["validate", &inst, &path(&dir, "sol0.json")]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn iterations_from_environment() {
    let dir = TempDir::new().unwrap();
    let (inst, _) = generate(&dir, "7");
    let out = Command::new(env!("CARGO_BIN_EXE_outage"))
        .args(["solve", &inst, "--cp-nodes", "20000"])
        .env("OUTAGE_ITERATIONS", "300")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap();
}

#[test]
fn unsatisfiable_formula_exits_3() {
    let dir = TempDir::new().unwrap();
    let cnf = path(&dir, "f.cnf");
    fs::write(&cnf, "p cnf 2 2\n1 2 2 0\n-1 -2 -2 0\n1 -2 -2 0\n").unwrap();
    let inst = path(&dir, "f.json");
    let out = outage(&["encode-sat", &cnf, "-o", &inst]);
    assert_eq!(out.status.code(), Some(0));
    let out = outage(&["solve", &inst, "--iterations", "100"]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn satisfiable_formula_solves() {
    let dir = TempDir::new().unwrap();
    let cnf = path(&dir, "f.cnf");
    fs::write(&cnf, "c example\np cnf 4 2\n1 2 -3 0\n-1 2 4 0\n").unwrap();
    let inst = path(&dir, "f.json");
    assert!(outage(&["encode-sat", &cnf, "-o", &inst]).status.success());
    let out = outage(&["solve", &inst, "--iterations", "100"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn io_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    let missing = path(&dir, "nope.json");
    assert_eq!(outage(&["solve", &missing]).status.code(), Some(1));
    assert_eq!(outage(&["stats", &missing]).status.code(), Some(1));
    let garbage = path(&dir, "bad.json");
    fs::write(&garbage, "{\"grid\": 3}").unwrap();
    let out = outage(&["validate", &garbage, &garbage]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid"));
}

#[test]
fn bad_parameters_exit_1() {
    let dir = TempDir::new().unwrap();
    let (inst, _) = generate(&dir, "8");
    let out = outage(&["solve", &inst, "--sa-cooling-ratio", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cooling"));
}

#[test]
fn stats_lists_sizes() {
    let dir = TempDir::new().unwrap();
    let (inst, _) = generate(&dir, "9");
    let out = outage(&["stats", &inst]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("type-2 plants       3"), "{text}");
}
