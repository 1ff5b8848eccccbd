use std::path::Path;
use std::process::{Command, Output};

use entity_kinetics::cli::emit::{parse_csv, Cell};
use entity_kinetics::model::InteractionModel;
use entity_kinetics::state_space::StateSpace;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entity-kinetics"))
        .args(args)
        .env("ENTITY_KINETICS_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn floats(cells: Vec<&Cell>) -> Vec<f64> {
    cells
        .into_iter()
        .map(|c| match c {
            Cell::Float(v) => *v,
            Cell::Int(v) => *v as f64,
            Cell::Text(s) => panic!("text cell {s}"),
        })
        .collect()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn validate_builtin_prints_ok() {
    let out = run(&["validate", "--builtin", "imitation"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["bogus"]).status.code(), Some(1));
    assert_eq!(run(&["validate"]).status.code(), Some(1));
    assert_eq!(run(&["validate", "--builtin", "nope"]).status.code(), Some(1));
    assert_eq!(run(&["hierarchy", "--builtin", "mixed", "--dt", "-1"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn invalid_model_file_reports_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut file = InteractionModel::builtin("imitation", StateSpace::new(1, 2).unwrap(), 0.1)
        .unwrap()
        .to_file();
    file.rates.get_mut("2").unwrap()[1] = -1.0;
    std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
    let out = run(&["validate", "--model", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("negative"));
}

#[test]
fn model_file_round_trips_through_validate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let file = InteractionModel::builtin("mixed", StateSpace::new(2, 2).unwrap(), 0.2)
        .unwrap()
        .to_file();
    std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
    let out = run(&["validate", "--model", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn invariant_violation_exits_two() {
    let out = run(&["vlasov", "--builtin", "mixed", "--t", "10", "--dt", "5", "--samples", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn meanfield_error_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("conv.csv");
    let chaos_path = dir.path().join("chaos.csv");
    let out = run(&[
        "meanfield",
        "--builtin",
        "imitation",
        "--epsilons",
        "0.1,0.05,0.025",
        "--t",
        "0.5",
        "--smax",
        "3",
        "--chaos-smax",
        "3",
        "--out",
        out_path.to_str().unwrap(),
        "--chaos-out",
        chaos_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (config, table) = parse_csv(&read(&out_path)).unwrap();
    assert_eq!(config["command"]["meanfield"]["smax"], 3);
    assert_eq!(config["version"], env!("CARGO_PKG_VERSION"));
    let err = floats(table.column("err").unwrap());
    assert_eq!(err.len(), 3);
    assert!(err[0] > err[1] && err[1] > err[2], "{err:?}");
    let (_, chaos) = parse_csv(&read(&chaos_path)).unwrap();
    assert_eq!(chaos.columns, ["k", "smax", "lhs", "rhs", "residual", "series_error"]);
    assert_eq!(chaos.rows.len(), 5);
}

#[test]
fn ssa_single_entity_matches_relaxation() {
    let out = run(&[
        "ssa",
        "--builtin",
        "uniform-drift",
        "--N",
        "1",
        "--t",
        "1",
        "--replicas",
        "100000",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let (_, table) = parse_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let emp = floats(table.column("empirical").unwrap());
    let se = floats(table.column("stderr").unwrap());
    // f(t) = e^{-t} f0 + (1 - e^{-t}) / S with f0 ∝ (S - x)
    let decay = (-1.0f64).exp();
    for x in 0..4 {
        let f0 = (4 - x) as f64 / 10.0;
        let exact = decay * f0 + (1.0 - decay) / 4.0;
        assert!((emp[x] - exact).abs() <= 3.0 * se[x], "state {x}");
    }
}

#[test]
fn artifacts_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for run_id in 0..2 {
        let main = dir.path().join(format!("m{run_id}.csv"));
        let reps = dir.path().join(format!("r{run_id}.csv"));
        let out = run(&[
            "ssa",
            "--builtin",
            "mixed",
            "--N",
            "8",
            "--replicas",
            "200",
            "--seed",
            "11",
            "--out",
            main.to_str().unwrap(),
            "--replicas-out",
            reps.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        texts.push((read(&main), read(&reps)));
    }
    assert_eq!(texts[0], texts[1]);
    let (_, reps) = parse_csv(&texts[0].1).unwrap();
    assert_eq!(reps.rows.len(), 200);
    assert_eq!(reps.columns, ["replica", "events", "p0", "p1", "p2", "p3"]);
}

#[test]
fn json_output_mirrors_columns() {
    let out = run(&["functionals", "--builtin", "mixed", "--samples", "3", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["columns"]["t"].as_array().unwrap().len(), 4);
    for r in v["columns"]["residual"].as_array().unwrap() {
        assert!(r.as_f64().unwrap() <= 1e-10);
    }
    assert_eq!(v["config"]["command"]["functionals"]["report"], "duality");
}

#[test]
fn generator_dump_has_zero_row_sums() {
    let out = run(&["validate", "--builtin", "imitation", "--M", "1", "--K", "3", "--dump-generator", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let (_, table) = parse_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 9);
    for row in &table.rows {
        let sum: f64 = row[1..]
            .iter()
            .map(|c| match c {
                Cell::Float(v) => *v,
                _ => panic!("non-float entry"),
            })
            .sum();
        assert!(sum.abs() < 1e-14);
    }
}

#[test]
fn hierarchy_expansion_tracks_rk4() {
    let out = run(&["hierarchy", "--builtin", "imitation", "--smax", "2", "--samples", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let (_, table) = parse_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 10);
    for e in floats(table.column("expansion_vs_rk4_error").unwrap()) {
        assert!(e <= 1e-6);
    }
}
