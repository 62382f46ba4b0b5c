//! The subcommands compose through the output directory; this drives the
//! whole chain on trivial flat data and checks the documented exit codes and
//! report contents.

use rdtf_core::report::NormReport;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_rdtf")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("exp.toml");
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(bin()).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn report(dir: &Path, stage: &str) -> NormReport {
    let p = dir.join(format!("{stage}_report.json"));
    NormReport::from_json(&std::fs::read_to_string(&p).unwrap()).unwrap()
}

#[test]
fn subcommand_chain_on_flat_data() {
    let dir = std::env::temp_dir().join("rdtf_subcommands");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let out = dir.join("out");
    let cfg = write_config(
        &dir,
        &format!(
            r#"
seed = 3
[grid]
dim = 2
res = 32
period = 3.141592653589793
[initial]
kind = "rough"
alpha = 2.5
amplitude = 0.0
[flow]
t_final = 0.3
snapshots = 6
[scalar_test]
b = 1.0
expect_lower_bound = true
[output]
dir = "{}"
"#,
            out.display()
        ),
    );
    let cfgs = cfg.to_str().unwrap();

    let (code, _, err) = run(&["gen-data", "--config", cfgs]);
    assert_eq!(code, 0, "{err}");
    assert!(out.join("g0.rdtl").exists());
    assert!(out.join("config_echo.toml").exists());

    let (code, _, err) = run(&["run-flow", "--config", cfgs]);
    assert_eq!(code, 0, "{err}");
    assert!(out.join("flow.rdtl").exists());

    let (code, _, err) = run(&["related-flow", "--config", cfgs]);
    assert_eq!(code, 0, "{err}");
    assert!(out.join("related.rdtl").exists());

    let (code, _, err) = run(&["check-scalar", "--config", cfgs]);
    assert_eq!(code, 0, "{err}");
    let scalar = report(&out, "scalar");
    // flat data with b = 1: distributional verdict positive and the smooth
    // minimum of R + b equals 1 everywhere
    assert!(scalar.verdicts["distributional_lower_bound"]);
    assert!(scalar.scalars["min_pairing_over_family"] > 0.0);
    for v in &scalar.series["min_r_plus_b"].v {
        assert!((v - 1.0).abs() < 1e-10, "min R + b = {v}");
    }

    let (code, _, err) = run(&["verify-estimates", "--config", cfgs]);
    assert_eq!(code, 0, "{err}");
    let verify = report(&out, "verify");
    // a flat trajectory has (numerically) zero energies: the fitted linear
    // coefficients carry no excess
    for (k, v) in &verify.scalars {
        if k.ends_with("fit_slope") || k.ends_with("fit_intercept") {
            assert!(v.abs() < 1e-12, "{k} = {v:e}");
        }
    }
    let (code, stdout, _) = run(&["report", "--config", cfgs]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("PASS flow.completed"));
    assert!(!stdout.contains("FAIL"));

    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn missing_inputs_give_config_error_exit() {
    let dir = std::env::temp_dir().join("rdtf_subcommands_missing");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let out = dir.join("out");
    let cfg = write_config(
        &dir,
        &format!("[grid]\nres = 32\n[output]\ndir = \"{}\"\n", out.display()),
    );
    // related-flow without run-flow: exit 2 (missing inputs)
    let (code, _, err) = run(&["related-flow", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 2, "{err}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn bad_config_rejected_with_exit_2() {
    let dir = std::env::temp_dir().join("rdtf_subcommands_bad");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = write_config(&dir, "[grid]\nres = 100\n");
    let (code, _, err) = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("config"), "{err}");
    // unknown keys are schema errors too
    let cfg = write_config(&dir, "mystery = 1\n");
    let (code, _, _) = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn blow_up_gives_exit_3_with_partial_artifacts() {
    let dir = std::env::temp_dir().join("rdtf_subcommands_blowup");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let out = dir.join("out");
    // forward Euler at c_cfl = 1 sits beyond the real-axis stability limit of
    // the fourth-order stencil, so near-Nyquist content amplifies until the
    // pinning budget trips
    let cfg = write_config(
        &dir,
        &format!(
            r#"
[grid]
res = 32
period = 3.141592653589793
[initial]
kind = "rough"
amplitude = 0.05
[flow]
t_final = 0.3
scheme = "euler"
c_cfl = 1.0
[output]
dir = "{}"
"#,
            out.display()
        ),
    );
    let (code, _, err) = run(&["run-flow", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 3, "{err}");
    assert!(out.join("flow_report.json").exists(), "partial artifacts retained");
    let rep = report(&out, "flow");
    assert!(!rep.verdicts["completed"]);
    assert!(rep.meta.contains_key("stop_reason"));
    let _ = std::fs::remove_dir_all(&dir);
}
