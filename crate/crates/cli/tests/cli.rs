use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_asyncadmm"));
    c.env_remove("ASYNCADMM_OUTPUT_DIR");
    c
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

// x_1 carries a slope of 1e22; with beta = 1e9 the first x-update lands near
// -1e13, past the divergence threshold.
const STRESS: &str = r#"
T = 100
beta = 1e9

[problem.inline]
n = 1
N = 2
W = 2
H_diag = [-1.0, -1.0]
terms = [
    { kind = "quadratic", a = [0.0] },
    { kind = "custom", function = "linear", scale = 1e22 },
]
x_sets = [{ kind = "free" }, { kind = "free" }]
z_set = { kind = "sum_zero_pairs", pairs = [[0, 1]] }
D_rows = [
    { row = 0, block = 0, coeff = 1.0 },
    { row = 1, block = 1, coeff = -1.0 },
]

[partition]
blocks = [[0, 1]]
"#;

#[test]
fn pathological_problem_exits_with_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "stress.toml", STRESS);
    let out = bin()
        .args(["run", cfg.to_str().unwrap(), "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(stderr(&out).contains("diverged at iteration 1"), "{}", stderr(&out));
}

#[test]
fn validate_reports_ok_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(
        dir.path(),
        "good.toml",
        "T = 10\n[problem]\ngenerator = \"consensus-lad\"\ngraph = \"ring.txt\"\na = [0.0, 0.0, 10.0]\n",
    );
    write(dir.path(), "ring.txt", "3 3\n0 1\n1 2\n2 0\n");
    let out = bin().arg("validate").arg(&good).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("3 blocks"));

    let bad = write(dir.path(), "bad.toml", "T = 10\nspeed = 2\n[problem]\ngenerator = \"consensus-lad\"\n");
    let out = bin().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bad.toml:2"), "{}", stderr(&out));
    assert!(stderr(&out).contains("speed"), "{}", stderr(&out));

    let unknown = write(dir.path(), "u.toml", "T = 10\n[problem]\ngenerator = \"ridge\"\n");
    let out = bin().arg("validate").arg(&unknown).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unknown benchmark"), "{}", stderr(&out));

    let out = bin().arg("validate").arg(dir.path().join("missing.toml")).output().unwrap();
    assert_eq!(code(&out), 3);
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = write(dir.path(), "file", "");
    let out = bin()
        .args(["bench", "consensus-quadratic", "--graph", "cycle:3", "--T", "10", "--out"])
        .arg(blocker.join("sub"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn bench_writes_files_and_slope_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "bench", "consensus-quadratic", "--graph", "cycle:5", "--seeds", "0..2", "--T", "2000",
            "--stride", "10", "--beta", "1", "--ergodic",
        ])
        .env("ASYNCADMM_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["seed_0.csv", "seed_1.csv", "seed_2.csv", "mean.csv", "summary.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["T"], 2000);
    assert_eq!(summary["runs"].as_array().unwrap().len(), 3);
    assert_eq!(summary["optimal_value"], 10.0);

    let out = bin()
        .arg("slope")
        .arg(dir.path().join("mean.csv"))
        .args(["--column", "ergodic_feasibility", "--from", "100"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    let slope: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("slope "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(slope < -0.5, "{text}");

    let out = bin()
        .arg("slope")
        .arg(dir.path().join("mean.csv"))
        .args(["--column", "nonsense"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn bench_rejects_unknown_names_and_bad_ranges() {
    let out = bin().args(["bench", "ridge", "--T", "5"]).output().unwrap();
    assert_eq!(code(&out), 2);
    let out = bin()
        .args(["bench", "consensus-lad", "--T", "5", "--seeds", "4..1"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn config_output_is_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "T = 20\noutput = \"results\"\n[problem]\ngenerator = \"lasso-toy\"\nw = [1.0, 2.0]\nb = [1.0, 1.0]\npi = 2.0\n",
    );
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.path().join("results/seed_0.csv").is_file());
}
