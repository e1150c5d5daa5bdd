use std::fs;
use std::path::Path;
use std::process::Command;

use egan::formats;
use egan_core::eval::energy_grid;

const SMALL: [&str; 12] = [
    "--set", "hidden=16",
    "--set", "batch_size=32",
    "--set", "train_samples=2000",
    "--set", "eval_samples=2000",
    "--set", "nx=40",
    "--set", "ny=40",
];

fn run(args: &[&str]) -> u8 {
    egan::run(std::iter::once("egan").chain(args.iter().copied()))
}

fn train_small(dir: &Path, extra: &[&str]) -> u8 {
    let mut args = vec!["train", "--quiet", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    run(&args)
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_egan"))
}

#[test]
fn tabular_entropy_certifies_three_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(&["tabular", "--k", "neg-entropy", "--n", "8", "--seeds", "3", "--out", out]), 0);
    let report: serde_json::Value = formats::read_json(&dir.path().join("certification.json")).unwrap();
    assert_eq!(report["certifications"].as_array().unwrap().len(), 3);
    assert_eq!(report["passed"], true);
    assert!(dir.path().join("meta.json").is_file());
}

#[test]
fn tabular_constant_reports_under_determined_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["tabular", "--k", "constant", "--n", "4", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("not applicable (under-determined)"), "{stdout}");
    assert!(stdout.contains("PASS"));
}

#[test]
fn malformed_inputs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "n = [1, 2]\n").unwrap();
    assert_eq!(run(&["tabular", "--config", cfg.to_str().unwrap()]), 1);
    fs::write(&cfg, "this is not toml").unwrap();
    assert_eq!(run(&["train", "--config", cfg.to_str().unwrap()]), 1);
    assert_eq!(run(&["train", "--model", "wgan", "--iterations", "0"]), 1);
    assert_eq!(run(&["train", "--set", "colour=blue"]), 1);
    assert_eq!(run(&["frobnicate"]), 1);
    assert_eq!(run(&["eval", "--run", dir.path().to_str().unwrap()]), 1);
    assert_eq!(run(&["export", "truth"]), 1);
    assert_eq!(run(&["export", "energy"]), 1);
    assert_eq!(run(&["--help"]), 0);
}

#[test]
fn binary_exit_code_for_unknown_model() {
    let out = bin().args(["train", "--model", "wgan"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn zero_iterations_writes_a_complete_run() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(train_small(dir.path(), &["--iterations", "0"]), 0);
    for f in ["config.toml", "report.json", "checkpoint.bin", "checkpoint.json", "energy.csv", "energy.pgm", "samples.csv", "kl.txt", "kl.json", "meta.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let report: serde_json::Value = formats::read_json(&dir.path().join("report.json")).unwrap();
    assert_eq!(report["iterations_completed"], 0);
}

#[test]
fn train_eval_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let r = run_dir.to_str().unwrap();
    assert_eq!(
        train_small(&run_dir, &["--model", "egan-ent-nn", "--data", "biased-mog2", "--seed", "7", "--iterations", "30"]),
        0
    );
    let report: serde_json::Value = formats::read_json(&run_dir.join("report.json")).unwrap();
    assert_eq!(report["iterations_completed"], 30);
    assert_eq!(report["config"]["seed"], 7);
    assert_eq!(report["energy_grid"]["values"].as_array().unwrap().len(), 1600);
    let samples = formats::parse_points_csv(&fs::read_to_string(run_dir.join("samples.csv")).unwrap()).unwrap();
    assert_eq!(samples.len(), 2000);

    // checkpoint restores the exact network
    let (_, bundle) = egan::commands::load_run(&run_dir).unwrap();
    let cfg: egan_core::trainer::TrainConfig = serde_json::from_value(report["config"].clone()).unwrap();
    let grid = energy_grid(&bundle.critic, &bundle.params, cfg.grid).unwrap();
    assert_eq!(fs::read_to_string(run_dir.join("energy.csv")).unwrap(), formats::grid_csv(&grid));

    // eval is deterministic
    let e1 = dir.path().join("e1");
    let e2 = dir.path().join("e2");
    assert_eq!(run(&["eval", "--run", r, "--samples", "5000", "--out", e1.to_str().unwrap()]), 0);
    assert_eq!(run(&["eval", "--run", r, "--samples", "5000", "--out", e2.to_str().unwrap()]), 0);
    assert_eq!(fs::read(e1.join("kl.json")).unwrap(), fs::read(e2.join("kl.json")).unwrap());
    assert_eq!(run(&["eval", "--run", r, "--set", "lr=1.0"]), 1);

    // export energy shares the evaluation code path
    let ex = dir.path().join("ex");
    let ex_s = ex.to_str().unwrap();
    assert_eq!(run(&["export", "energy", "--run", r, "--out", ex_s]), 0);
    assert_eq!(fs::read(ex.join("energy.csv")).unwrap(), fs::read(run_dir.join("energy.csv")).unwrap());
    assert_eq!(fs::read(ex.join("energy.pgm")).unwrap(), fs::read(run_dir.join("energy.pgm")).unwrap());

    assert_eq!(run(&["export", "samples", "--run", r, "--samples", "100", "--out", ex_s]), 0);
    let pts = formats::parse_points_csv(&fs::read_to_string(ex.join("samples.csv")).unwrap()).unwrap();
    assert_eq!(pts.len(), 100);

    assert_eq!(run(&["export", "gradfield", "--run", r, "--samples", "64", "--out", ex_s]), 0);
    let text = fs::read_to_string(ex.join("gradfield.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 64);
    for row in &rows {
        assert_eq!(row[6], row[2] + row[4]);
        assert_eq!(row[7], row[3] + row[5]);
        // unit directions scaled by alpha = 1
        let norm = row[4].hypot(row[5]);
        assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-9);
    }
}

#[test]
fn gradfield_of_constant_model_has_zero_entropy_columns() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    assert_eq!(train_small(&run_dir, &["--model", "egan-const", "--iterations", "10"]), 0);
    let ex = dir.path().join("ex");
    assert_eq!(
        run(&["export", "gradfield", "--run", run_dir.to_str().unwrap(), "--out", ex.to_str().unwrap()]),
        0
    );
    let text = fs::read_to_string(ex.join("gradfield.csv")).unwrap();
    assert_eq!(text.lines().count(), 513);
    for line in text.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!((cols[4], cols[5]), (0.0, 0.0));
    }
}

#[test]
fn reruns_are_byte_identical_apart_from_the_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(train_small(&a, &["--model", "gan", "--iterations", "20"]), 0);
    assert_eq!(train_small(&b, &["--model", "gan", "--iterations", "20"]), 0);
    for f in ["report.json", "checkpoint.bin", "energy.pgm", "kl.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_fan_out_writes_one_directory_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let status = train_small(dir.path(), &["--model", "egan-ent-vi", "--seed", "3", "--seeds", "2", "--iterations", "5"]);
    assert_eq!(status, 0);
    for s in [3, 4] {
        let report: serde_json::Value = formats::read_json(&dir.path().join(format!("seed-{s}/report.json"))).unwrap();
        assert_eq!(report["config"]["seed"], s);
    }
}

#[test]
fn divergence_exits_with_two_and_dumps_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let status = train_small(dir.path(), &["--iterations", "20", "--set", "alpha=1e308", "--set", "lr=1e300"]);
    assert_eq!(status, 2);
    let dump: serde_json::Value = formats::read_json(&dir.path().join("diverged.json")).unwrap();
    assert!(dump["error"].as_str().unwrap().contains("non-finite"));
}

#[test]
fn truth_export_and_output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["export", "truth", "--data", "mog4"])
        .env("EGAN_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let truth = dir.path().join("truth-mog4");
    let grid = formats::parse_grid_csv(&fs::read_to_string(truth.join("truth.csv")).unwrap()).unwrap();
    assert_eq!((grid.spec.nx, grid.spec.ny), (100, 100));
    let pgm = fs::read(truth.join("truth.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n100 100\n255\n"));
    assert_eq!(pgm.len(), b"P5\n100 100\n255\n".len() + 10_000);
}
