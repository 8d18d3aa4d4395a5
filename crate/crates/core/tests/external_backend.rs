//! End-to-end exercise of the external solver contract: the backend writes
//! an LP file, invokes the configured executable with
//! `<model.lp> solve solu <solution file>`, and ingests the written file.
//! A scripted stand-in solver plays the external side.

#![cfg(unix)]

use std::io::Write;
use std::os::unix::fs::PermissionsExt;
use std::time::Duration;

use ndarray::{array, Array2};

use helio_aim::milp::{encode, solve, ExternalLpBackend, SolveStatus, TrustRegion};
use helio_aim::surrogate::{InputScaler, SurrogateModel, TargetScaler};

fn tiny_model() -> helio_aim::milp::MilpModel {
    let model = SurrogateModel::from_parts(
        vec![array![[1.0]], array![[1.0]]],
        vec![array![0.0], array![0.0]],
        InputScaler { min: vec![0.0], max: vec![1.0] },
        TargetScaler { mean: 0.0, std: 1.0 },
    )
    .unwrap();
    let mut points = Array2::zeros((1, 1));
    points[[0, 0]] = 0.4;
    let tr = TrustRegion::from_scaled_points(points, 0.0).unwrap();
    encode(&model, &tr, (0.0, 1.0)).unwrap()
}

fn fake_solver(dir: &std::path::Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("fake-solver.sh");
    let mut file = std::fs::File::create(&path).unwrap();
    writeln!(file, "#!/bin/sh").unwrap();
    writeln!(file, "# args: <model.lp> solve solu <solution file>").unwrap();
    writeln!(file, "test -f \"$1\" || exit 9").unwrap();
    writeln!(file, "grep -q '^Maximize' \"$1\" || exit 9").unwrap();
    write!(file, "{body}").unwrap();
    drop(file);
    let mut perms = std::fs::metadata(&path).unwrap().permissions();
    perms.set_mode(0o755);
    std::fs::set_permissions(&path, perms).unwrap();
    path
}

#[test]
fn external_round_trip_with_scripted_solver() {
    let dir = tempfile::tempdir().unwrap();
    // The scripted solver returns the known optimum of the tiny model.
    let body = r#"cat > "$4" <<'SOL'
Optimal - objective value 0.4
 0 x_1     0.4  0
 1 z_1_1   0.4  0
 2 a_1_1   0.4  0
 3 sig_1_1 1    0
 4 z_2_1   0.4  0
 5 qs      0.4  0
 6 beta_1  1    0
 7 s_1     0    0
SOL
"#;
    let solver = fake_solver(dir.path(), body);
    let backend = ExternalLpBackend {
        solver_path: solver,
        work_dir: Some(dir.path().join("work")),
    };
    let encoded = tiny_model();
    let sol = solve(&encoded, &backend, Duration::from_secs(5)).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.aim.unwrap().k[0] - 0.4).abs() < 1e-9);
    assert!((sol.objective.unwrap() - 0.4).abs() < 1e-9);

    // The LP file really was written where the backend said.
    let lp = std::fs::read_to_string(dir.path().join("work").join("model.lp")).unwrap();
    assert!(lp.contains("hull_1:"));
    assert!(lp.contains("Binaries"));
}

#[test]
fn external_reports_infeasible_as_status() {
    let dir = tempfile::tempdir().unwrap();
    let body = "printf 'Infeasible - objective value 0\\n' > \"$4\"\n";
    let solver = fake_solver(dir.path(), body);
    let backend = ExternalLpBackend { solver_path: solver, work_dir: None };
    let sol = solve(&tiny_model(), &backend, Duration::from_secs(5)).unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible);
    assert!(!sol.has_solution());
}

#[test]
fn inconsistent_external_assignment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    // sigma says active but the activity does not match the preactivation.
    let body = r#"cat > "$4" <<'SOL'
Optimal - objective value 0.4
 0 x_1     0.4  0
 1 z_1_1   0.4  0
 2 a_1_1   0.1  0
 3 sig_1_1 1    0
 4 z_2_1   0.4  0
 5 qs      0.4  0
 6 beta_1  1    0
SOL
"#;
    let solver = fake_solver(dir.path(), body);
    let backend = ExternalLpBackend { solver_path: solver, work_dir: None };
    let err = solve(&tiny_model(), &backend, Duration::from_secs(5));
    assert!(matches!(err, Err(helio_aim::Error::Backend(_))), "{err:?}");
}
