use std::process::Command;

fn hho() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hho"));
    c.env("HHO_NUM_THREADS", "2");
    c
}

#[test]
fn convergence_run_writes_table_and_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out = hho()
        .args(["convergence", "--case", "manufactured", "--method", "uhho", "--order", "1", "--levels", "3"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("manufactured_uhho_k1_2.csv")).unwrap();
    let report = hho_core::postproc::ErrorReport::read_csv(&csv).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(report.rows.windows(2).all(|w| w[1].err_g < w[0].err_g));
    for level in 0..3 {
        assert!(dir.path().join(format!("manufactured_uhho_k1_{level}.vtk")).exists());
    }
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[run]\ncase = \"manufactured\"\n[method]\nmethod = \"shho\"\nbeta0 = 5.0\n[newton]\nrel_tol = 1e-9\n",
    )
    .unwrap();
    let out = hho()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .args(["--lambda", "20", "--order", "2"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("manufactured_shho_k2_0.csv").exists());
}

#[test]
fn bad_input_fails_with_a_message() {
    let out = hho().args(["run", "--case", "torus"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown case"));

    let out = hho().args(["convergence", "--case", "block"]).output().unwrap();
    assert!(!out.status.success());

    let out = hho().args(["run", "--case", "manufactured", "--order", "0"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn verify_passes() {
    let out = hho().args(["verify", "--cells", "4"]).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 8);
    assert!(!text.contains("FAIL"));
}
