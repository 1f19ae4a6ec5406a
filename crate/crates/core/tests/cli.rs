use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn goafem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_goafem"))
        .args(args)
        .output()
        .expect("spawn goafem")
}

fn run_into(dir: &Path, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec![
        "run",
        "--example",
        "ex1",
        "--preset",
        "433",
        "--target-elements",
        "400",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    goafem(&args)
}

#[test]
fn identical_runs_write_identical_records() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_into(&a, &[]).status.success());
    assert!(run_into(&b, &[]).status.success());
    let ra = fs::read(a.join("record.csv")).unwrap();
    assert_eq!(ra, fs::read(b.join("record.csv")).unwrap());
    assert_eq!(
        fs::read(a.join("config.json")).unwrap(),
        fs::read(b.join("config.json")).unwrap()
    );
    let text = String::from_utf8(ra).unwrap();
    assert!(text.starts_with("iter,n_elements,n_dofs,eta_sq,zeta_sq,dwr_est,goal_error,newton_iters,wall_ms\n"));
    // empty dwr_est and wall_ms columns for HPZ without wall-time recording
    let first = text.lines().nth(1).unwrap();
    let fields: Vec<&str> = first.split(',').collect();
    assert_eq!(fields.len(), 9);
    assert!(fields[5].is_empty() && fields[8].is_empty());
    assert_eq!(
        fs::read_to_string(a.join("timing.csv")).unwrap().lines().count(),
        text.lines().count()
    );
}

#[test]
fn wall_time_is_opt_in() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_into(tmp.path(), &["--record-wall-time", "--strategy", "dwr"])
        .status
        .success());
    let text = fs::read_to_string(tmp.path().join("record.csv")).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert!(!row[8].is_empty() && !row[5].is_empty());
}

#[test]
fn verify_writes_probe_table() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    assert!(run_into(&run_dir, &[]).status.success());
    let out = tmp.path().join("verify");
    let status = goafem(&[
        "verify",
        "--run",
        run_dir.to_str().unwrap(),
        "--refine-extra",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let text = fs::read_to_string(out.join("verify.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iter,Qbar_sq,ratio,lambda_g_est,goal_over_Qbar,effectivity"
    );
    let records = fs::read_to_string(run_dir.join("record.csv")).unwrap().lines().count();
    assert_eq!(lines.count(), records - 1);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let bad_preset = goafem(&["run", "--example", "ex2", "--preset", "266", "--out", out]);
    assert_eq!(bad_preset.status.code(), Some(2));
    let bad_theta = goafem(&[
        "run",
        "--example",
        "ex1",
        "--preset",
        "266",
        "--theta",
        "1.5",
        "--out",
        out,
    ]);
    assert_eq!(bad_theta.status.code(), Some(2));
    let newton = goafem(&[
        "run",
        "--example",
        "ex1",
        "--preset",
        "266",
        "--newton-tol",
        "1e-30",
        "--out",
        out,
    ]);
    assert_eq!(newton.status.code(), Some(3));
    // a regular file where the output directory should go
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let io = goafem(&[
        "run",
        "--example",
        "ex1",
        "--preset",
        "266",
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(io.status.code(), Some(4));
    let missing = goafem(&[
        "verify",
        "--run",
        tmp.path().join("nope").to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(missing.status.code(), Some(4));
}
