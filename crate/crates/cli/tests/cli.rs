use std::fs;
use std::path::Path;
use std::process::Command;

fn slod(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_slod"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(
        &path,
        format!(
            r#"
name = "tiny"
dim = 2
epsilon = 0.125
coarse_sizes = [2, 4]
fine_size = 16
levels = [1, 2]
methods = ["slod", "slod_galerkin", "fem", "supg"]
output_dir = "{}"
{extra}

[velocity]
kind = "angle"
angle = 0.7

[f]
kind = "one"
"#,
            dir.join("out").display()
        ),
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn study_writes_manifested_tables() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let (code, err) = slod(&["study", "--config", &config]);
    assert_eq!(code, 0, "{err}");
    let out = dir.path().join("out");
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    for file in ["results.csv", "rates.csv", "config.toml"] {
        assert!(out.join(file).exists());
        assert!(manifest.contains(&format!("\"{file}\"")), "{file} missing from manifest");
    }
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(results.lines().any(|l| l.starts_with("slod_galerkin,2,")));
}

#[test]
fn rerun_hits_the_cache_and_reproduces_results() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let out = dir.path().join("out");
    let strip = |s: String| -> Vec<String> {
        s.lines().map(|l| l.rsplit_once(',').map_or(l, |(a, _)| a).to_string()).collect()
    };
    assert_eq!(slod(&["basis", "--config", &config]).0, 0);
    let summary = fs::read_to_string(out.join("basis.csv")).unwrap();
    assert!(summary.lines().skip(1).all(|l| l.ends_with(",built")));
    assert_eq!(slod(&["basis", "--config", &config]).0, 0);
    let summary = fs::read_to_string(out.join("basis.csv")).unwrap();
    assert!(summary.lines().skip(1).all(|l| l.ends_with(",hit")));

    assert_eq!(slod(&["study", "--config", &config]).0, 0);
    let cached = strip(fs::read_to_string(out.join("results.csv")).unwrap());
    assert_eq!(slod(&["study", "--config", &config, "--no-cache", "--workers", "3"]).0, 0);
    let fresh = strip(fs::read_to_string(out.join("results.csv")).unwrap());
    assert_eq!(cached, fresh);
}

#[test]
fn report_and_decay_emit_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    assert_eq!(slod(&["report", "--config", &config, "--coarse-sizes", "4", "--levels", "1,2,3"]).0, 0);
    let out = dir.path().join("out");
    for file in ["sigma.csv", "riesz.csv", "eigen.csv", "basis.csv"] {
        assert!(out.join(file).exists(), "{file}");
    }
    let eigen = fs::read_to_string(out.join("eigen.csv")).unwrap();
    assert!(eigen.starts_with("H,ell,center,index,lambda,ratio,selected\n"));

    assert_eq!(slod(&["decay", "--config", &config, "--coarse-sizes", "4", "--levels", "1,2,3"]).0, 0);
    let decay = fs::read_to_string(out.join("decay.csv")).unwrap();
    assert_eq!(decay.lines().count(), 2);
    assert!(decay.starts_with("dim,epsilon,H,C1,C2,exponent,fit_residual,non_decaying\n"));
}

#[test]
fn solve_dumps_the_fine_solution() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let (code, err) = slod(&["solve", "--config", &config, "--method", "fem", "--coarse", "4"]);
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(dir.path().join("out/solution_fem.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 17 * 17);
}

#[test]
fn config_errors_name_the_key_and_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "p = -1.0");
    let (code, err) = slod(&["study", "--config", &config]);
    assert_eq!(code, 1);
    assert!(err.contains("p"), "{err}");

    let config = write_config(dir.path(), "");
    let (code, err) = slod(&["study", "--config", &config, "--coarse-sizes", "3"]);
    assert_eq!(code, 1);
    assert!(err.contains("coarse_sizes"), "{err}");

    let (code, err) = slod(&["study", "--preset", "fig7"]);
    assert_eq!(code, 1);
    assert!(err.contains("fig7"), "{err}");

    let (code, _) = slod(&["study"]);
    assert_eq!(code, 1);
}

#[test]
fn partial_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    // two levels cannot be fitted
    let (code, _) = slod(&["decay", "--config", &config, "--coarse-sizes", "4", "--levels", "1,2"]);
    assert_eq!(code, 2);
    let manifest = fs::read_to_string(dir.path().join("out/manifest.json")).unwrap();
    assert!(manifest.contains("decay fit"));
}
