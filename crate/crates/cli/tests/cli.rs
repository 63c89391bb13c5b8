use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
[model]
drift = "x^2"
diffusion = "linear"

[domain]
epsilon = 0.0625

[solver]
t_end = 0.2

[noise]
master_seed = 4
replicas = 3

[initial]
kind = "indicator"
lo = 0.25
hi = 0.75
height = 4.0
"#;

fn shelab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shelab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn data_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn osgood_quadratic_is_convergent_with_unit_time() {
    let dir = tempfile::tempdir().unwrap();
    let o = shelab(dir.path(), &["osgood", "--drift", "x^2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("sum verdict: convergent"), "{text}");
    assert!(text.contains("integral verdict: convergent"), "{text}");
    let t: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("T*(1) = "))
        .expect("blowup time line")
        .parse()
        .unwrap();
    assert!((t - 1.0).abs() < 1e-9, "{t}");
}

#[test]
fn osgood_linear_is_divergent() {
    let dir = tempfile::tempdir().unwrap();
    let o = shelab(dir.path(), &["osgood", "--drift", "x", "--diffusion", "linear"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(
        text.contains("sum verdict: divergent") && text.contains("T*(1) = inf"),
        "{text}"
    );
}

#[test]
fn simulate_twice_gives_identical_files() {
    let a = setup(CONFIG);
    let b = setup(CONFIG);
    let oa = shelab(
        a.path(),
        &["simulate", "--config", "run.toml", "--out", "out", "--workers", "1"],
    );
    let ob = shelab(
        b.path(),
        &["simulate", "--config", "run.toml", "--out", "out", "--workers", "3"],
    );
    assert_eq!(oa.status.code(), Some(0), "{}", String::from_utf8_lossy(&oa.stderr));
    assert_eq!(ob.status.code(), Some(0));
    let fa = data_files(&a.path().join("out"));
    assert!(fa.iter().any(|(n, _)| n == "trajectory.tsv"));
    assert!(fa.iter().any(|(n, _)| n == "replicas.tsv"));
    assert_eq!(fa, data_files(&b.path().join("out")));
}

#[test]
fn every_output_file_starts_with_the_digest() {
    let d = setup(CONFIG);
    let o = shelab(d.path(), &["simulate", "--config", "run.toml", "--out", "res"]);
    assert_eq!(o.status.code(), Some(0));
    let mut names = Vec::new();
    for e in fs::read_dir(d.path()).unwrap() {
        names.push(e.unwrap().file_name().into_string().unwrap());
    }
    names.sort();
    assert_eq!(
        names,
        vec!["res", "run.toml"],
        "nothing written outside the output directory"
    );
    for (name, bytes) in data_files(&d.path().join("res")) {
        assert!(bytes.starts_with(b"# config_digest: "), "{name}");
    }
    let manifest = fs::read_to_string(d.path().join("res/manifest.json")).unwrap();
    assert!(
        manifest.trim_start().starts_with("{\n  \"config_digest\""),
        "{manifest}"
    );
}

#[test]
fn compare_rejects_support_outside_the_interval() {
    let d = setup(&CONFIG.replace("lo = 0.25", "lo = -0.5"));
    let o = shelab(d.path(), &["compare", "--config", "run.toml", "--out", "out"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hypothesis violation"));
}

#[test]
fn invalid_config_exits_one_with_every_error() {
    let bad = CONFIG.replace("t_end = 0.2", "t_end = 0.2\ndt = 0.01\nbogus = 1");
    let d = setup(&bad);
    let o = shelab(d.path(), &["simulate", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("[stability]") && err.contains("[unknown_key]"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(shelab(d.path(), &["bogus"]).status.code(), Some(1));
    assert_eq!(shelab(d.path(), &["simulate"]).status.code(), Some(1));
}

#[test]
fn help_lists_consumed_keys() {
    let d = tempfile::tempdir().unwrap();
    let help = stdout(&shelab(d.path(), &["compare", "--help"]));
    for key in [
        "model.drift",
        "domain.epsilon",
        "solver.dt",
        "noise.master_seed",
        "experiment.dt_halvings",
        "output.directory",
    ] {
        assert!(help.contains(key), "{key} missing from help");
    }
    let help = stdout(&shelab(d.path(), &["osgood", "--help"]));
    assert!(help.contains("model.drift") && !help.contains("solver.dt"));
}

#[test]
fn kernel_dump_writes_full_matrix() {
    let d = setup(CONFIG);
    let o = shelab(
        d.path(),
        &["kernel-dump", "--config", "run.toml", "--t", "0.01", "--out", "k"],
    );
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(d.path().join("k/kernel.tsv")).unwrap();
    let rows = text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 1 + 17 * 17);
}
