//! The four subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use egan_core::data::{make_dataset, true_energy_grid, DatasetKind};
use egan_core::eval::{self, EntropySettings};
use egan_core::seed::{self, Stream};
use egan_core::tabular::{certify, Certification, CertifyTolerances, Simplex, SolverOptions};
use egan_core::trainer::{self, noise, LossPoint, ModelBundle, RunReport, TrainConfig};
use serde::{Deserialize, Serialize};
use toml::Value;

use crate::cli::{out_root, EvalArgs, ExportArgs, ExportKind, TabularArgs, TrainArgs};
use crate::config::{self, regularizer_name};
use crate::error::{CliError, CliResult};
use crate::formats::{self, Manifest};

pub const CONFIG_FILE: &str = "config.toml";
pub const REPORT_FILE: &str = "report.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const MANIFEST_FILE: &str = "checkpoint.json";
pub const META_FILE: &str = "meta.json";
pub const DIVERGED_FILE: &str = "diverged.json";

/// Smallest entry of the random data distributions certified by `tabular`.
const TABULAR_FLOOR: f64 = 1e-3;

/// Gradient-field batch size when `--samples` is not given.
const GRADFIELD_BATCH: usize = 512;

/// Timing sidecar. Everything nondeterministic about a command lives here so
/// that the other outputs are byte-identical across reruns.
#[derive(Debug, Serialize, Deserialize)]
pub struct Meta {
    pub command: String,
    pub version: String,
    pub started_unix_secs: u64,
    pub wall_clock_secs: f64,
}

fn write_meta(dir: &Path, command: &str, started: SystemTime, clock: Instant) -> CliResult<()> {
    let meta = Meta {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_secs: started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        wall_clock_secs: clock.elapsed().as_secs_f64(),
    };
    formats::write_json(&dir.join(META_FILE), &meta)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn overrides(set: &[String]) -> CliResult<Vec<(String, Value)>> {
    set.iter().map(|s| config::parse_override(s)).collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TabularReport {
    pub kind: String,
    pub n: usize,
    pub seed: u64,
    pub tolerances: CertifyTolerances,
    pub certifications: Vec<Certification>,
    pub passed: bool,
}

pub fn tabular(args: &TabularArgs) -> CliResult<()> {
    let (started, clock) = (SystemTime::now(), Instant::now());
    let mut o = overrides(&args.common.set)?;
    if let Some(k) = &args.k {
        o.push(("k".into(), Value::String(k.clone())));
    }
    if let Some(n) = args.n {
        o.push(("n".into(), Value::Integer(n as i64)));
    }
    if let Some(s) = args.seeds {
        o.push(("seeds".into(), Value::Integer(s as i64)));
    }
    if let Some(s) = args.seed {
        o.push(("seed".into(), Value::Integer(s as i64)));
    }
    let cfg = config::load_tabular(args.common.config.as_deref(), &o)?;
    let name = regularizer_name(cfg.kind);
    let dir = args
        .common
        .out
        .clone()
        .unwrap_or_else(|| out_root().join(format!("tabular-{name}-n{}", cfg.n)));
    create_dir(&dir)?;

    let tol = CertifyTolerances::default();
    let mut certs = Vec::new();
    for i in 0..cfg.seeds {
        let mut rng = seed::rng_indexed(cfg.seed, Stream::TabularData, i as u32);
        let p_data = Simplex::random_full_support(cfg.n, TABULAR_FLOOR, &mut rng)?;
        let mut opts = SolverOptions::for_kind(cfg.kind, cfg.seed.wrapping_add(i as u64));
        opts.steps = cfg.steps;
        let c = certify(cfg.kind, &p_data, &opts, tol)?;
        let form = match (c.form_deviation, c.form_pass) {
            (Some(d), Some(pass)) => format!("{d:.2e} {}", if pass { "pass" } else { "FAIL" }),
            _ => "not applicable (under-determined)".to_string(),
        };
        println!(
            "{name} n={} seed {i}: p_gen error {:.2e} {}, discriminator form {form}, kkt {:.2e} {} => {}",
            cfg.n,
            c.p_gen_error,
            if c.p_gen_pass { "pass" } else { "FAIL" },
            c.kkt.max_residual(),
            if c.kkt_pass { "pass" } else { "FAIL" },
            if c.passed { "PASS" } else { "FAIL" },
        );
        certs.push(c);
    }
    let passed = certs.iter().all(|c| c.passed);
    let report = TabularReport { kind: name.into(), n: cfg.n, seed: cfg.seed, tolerances: tol, certifications: certs, passed };
    formats::write_json(&dir.join("certification.json"), &report)?;
    write_meta(&dir, "tabular", started, clock)?;
    if passed {
        Ok(())
    } else {
        let failed = report.certifications.iter().filter(|c| !c.passed).count();
        Err(CliError::CheckFailed(format!("{failed} of {} certifications failed", cfg.seeds)))
    }
}

/// Written next to a run that hit a non-finite value.
#[derive(Debug, Serialize, Deserialize)]
pub struct DivergenceDump {
    pub error: String,
    pub config: TrainConfig,
    pub losses: Vec<LossPoint>,
}

pub fn train(args: &TrainArgs) -> CliResult<()> {
    let mut o = overrides(&args.common.set)?;
    if let Some(m) = &args.model {
        o.push(("model".into(), Value::String(m.clone())));
    }
    if let Some(d) = &args.data {
        o.push(("dataset".into(), Value::String(d.clone())));
    }
    if let Some(s) = args.seed {
        o.push(("seed".into(), Value::Integer(s as i64)));
    }
    if let Some(n) = args.iterations {
        o.push(("iterations".into(), Value::Integer(n as i64)));
    }
    let cfg = config::load_train(args.common.config.as_deref(), &o)?;
    if args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let base = args.common.out.clone().unwrap_or_else(|| {
        let stem = format!("{}-{}", cfg.model.name(), cfg.dataset.name());
        if args.seeds == 1 {
            out_root().join(format!("{stem}-seed{}", cfg.seed))
        } else {
            out_root().join(stem)
        }
    });
    if args.seeds == 1 {
        return train_one(&cfg, &base, args.quiet);
    }
    let results: Mutex<Vec<(u64, CliResult<()>)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for i in 0..args.seeds as u64 {
            let run_cfg = TrainConfig { seed: cfg.seed + i, ..cfg.clone() };
            let dir = base.join(format!("seed-{}", run_cfg.seed));
            let results = &results;
            scope.spawn(move || {
                let r = train_one(&run_cfg, &dir, args.quiet);
                results.lock().expect("results lock").push((run_cfg.seed, r));
            });
        }
    });
    let mut results = results.into_inner().expect("results lock");
    results.sort_by_key(|(s, _)| *s);
    let mut worst: Option<CliError> = None;
    for (s, r) in results {
        if let Err(e) = r {
            eprintln!("seed {s}: {e}");
            if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                worst = Some(e);
            }
        }
    }
    worst.map_or(Ok(()), Err)
}

fn train_one(cfg: &TrainConfig, dir: &Path, quiet: bool) -> CliResult<()> {
    let (started, clock) = (SystemTime::now(), Instant::now());
    create_dir(dir)?;
    formats::write(&dir.join(CONFIG_FILE), config::train_to_string(cfg))?;
    let tag = format!("{} {} seed {}", cfg.model.name(), cfg.dataset.name(), cfg.seed);
    let mut seen = Vec::new();
    let outcome = trainer::train_full(cfg, |it, p| {
        seen.push(p.clone());
        if !quiet {
            eprintln!("{tag}: iteration {it} disc {:.4} gen {:.4}", p.disc_loss, p.gen_loss);
        }
    });
    let outcome = match outcome {
        Ok(o) => o,
        Err(e @ egan_core::Error::NonFinite { .. }) => {
            let dump = DivergenceDump { error: e.to_string(), config: cfg.clone(), losses: seen };
            formats::write_json(&dir.join(DIVERGED_FILE), &dump)?;
            write_meta(dir, "train", started, clock)?;
            return Err(CliError::Diverged { source: e });
        }
        Err(e) => return Err(e.into()),
    };
    write_run(dir, &outcome.report, &outcome.bundle)?;
    write_meta(dir, "train", started, clock)?;
    let kl = &outcome.report.kl;
    println!(
        "{tag}: {} (KL p_disc||p_data {:.4}, p_data||p_disc {:.4}, p_gen||p_data {:.4})",
        dir.display(),
        kl.disc_data,
        kl.data_disc,
        kl.gen_data
    );
    Ok(())
}

fn write_run(dir: &Path, report: &RunReport, bundle: &ModelBundle) -> CliResult<()> {
    formats::write_json(&dir.join(REPORT_FILE), report)?;
    let (bytes, manifest) = formats::checkpoint(&bundle.params);
    formats::write(&dir.join(CHECKPOINT_FILE), bytes)?;
    formats::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    formats::write_grid(dir, "energy", &report.energy_grid)?;
    formats::write(&dir.join("samples.csv"), formats::points_csv(&report.samples))?;
    formats::write(&dir.join("kl.txt"), formats::kl_text(&report.kl))?;
    formats::write_json(&dir.join("kl.json"), &report.kl)
}

/// Rebuilds the trained bundle of a run directory.
pub fn load_run(dir: &Path) -> CliResult<(TrainConfig, ModelBundle)> {
    for f in [CONFIG_FILE, CHECKPOINT_FILE, MANIFEST_FILE] {
        if !dir.join(f).is_file() {
            return Err(CliError::Usage(format!("{} is not a complete run directory (missing {f})", dir.display())));
        }
    }
    let cfg = config::load_train(Some(&dir.join(CONFIG_FILE)), &[])?;
    let mut bundle = ModelBundle::new(&cfg)?;
    let bytes = fs::read(dir.join(CHECKPOINT_FILE)).map_err(|e| CliError::io(&dir.join(CHECKPOINT_FILE), e))?;
    let manifest: Manifest = formats::read_json(&dir.join(MANIFEST_FILE))?;
    formats::restore(&mut bundle.params, &bytes, &manifest)?;
    Ok((cfg, bundle))
}

/// Applies grid-only overrides to a run's config.
fn with_grid(mut cfg: TrainConfig, set: &[String]) -> CliResult<TrainConfig> {
    for (k, v) in overrides(set)? {
        if !matches!(k.as_str(), "x_min" | "x_max" | "y_min" | "y_max" | "nx" | "ny") {
            return Err(CliError::Config(format!("only grid keys can be overridden here, got `{k}`")));
        }
        config::apply_train(&mut cfg, &k, &v)?;
    }
    cfg.grid.validate()?;
    Ok(cfg)
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    let (started, clock) = (SystemTime::now(), Instant::now());
    let (cfg, bundle) = load_run(&args.run)?;
    let cfg = with_grid(cfg, &args.set)?;
    if args.samples == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    let out = args.out.clone().unwrap_or_else(|| args.run.join("eval"));
    create_dir(&out)?;
    let ev = trainer::evaluate(&bundle, cfg.dataset, cfg.seed, cfg.grid, args.samples)?;
    formats::write_json(&out.join("kl.json"), &ev)?;
    formats::write(&out.join("kl.txt"), formats::kl_text(&ev.kl))?;
    write_meta(&out, "eval", started, clock)?;
    print!("{}", formats::kl_text(&ev.kl));
    Ok(())
}

pub fn export(args: &ExportArgs) -> CliResult<()> {
    let (started, clock) = (SystemTime::now(), Instant::now());
    let out: PathBuf;
    match args.what {
        ExportKind::Truth => {
            let name = args
                .data
                .as_deref()
                .ok_or_else(|| CliError::Usage("export truth needs --data".into()))?;
            let kind: DatasetKind = name.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
            let cfg = with_grid(TrainConfig { dataset: kind, ..TrainConfig::default() }, &args.set)?;
            out = args.out.clone().unwrap_or_else(|| out_root().join(format!("truth-{}", kind.name())));
            create_dir(&out)?;
            let m = make_dataset(kind);
            formats::write_grid(&out, "truth", &true_energy_grid(&m, cfg.grid)?)?;
            let n = args.samples.unwrap_or(cfg.report_samples);
            let pts = m.sample_with(n, &mut seed::rng(cfg.seed, Stream::EvalData));
            formats::write(&out.join("truth_samples.csv"), formats::points_csv(&pts))?;
        }
        kind => {
            let run = args
                .run
                .as_deref()
                .ok_or_else(|| CliError::Usage("this export needs --run".into()))?;
            let (cfg, bundle) = load_run(run)?;
            let cfg = with_grid(cfg, &args.set)?;
            out = args.out.clone().unwrap_or_else(|| run.join("export"));
            create_dir(&out)?;
            match kind {
                ExportKind::Energy => {
                    let grid = eval::energy_grid(&bundle.critic, &bundle.params, cfg.grid)?;
                    formats::write_grid(&out, "energy", &grid)?;
                }
                ExportKind::Samples => {
                    let n = args.samples.unwrap_or(cfg.report_samples).max(1);
                    let pts = bundle.sample(n, &mut seed::rng_indexed(cfg.seed, Stream::EvalNoise, 1))?;
                    formats::write(&out.join("samples.csv"), formats::points_csv(&pts))?;
                }
                ExportKind::Gradfield => {
                    let n = args.samples.unwrap_or(GRADFIELD_BATCH);
                    let z = noise(n, cfg.z_dim, &mut seed::rng_indexed(cfg.seed, Stream::EvalNoise, 2));
                    let settings = EntropySettings { k: cfg.k, alpha: cfg.alpha, weight: cfg.entropy_weight };
                    let records = eval::gradient_field_report(&bundle, &z, settings)?;
                    formats::write(&out.join("gradfield.csv"), formats::gradfield_csv(&records))?;
                }
                ExportKind::Truth => unreachable!(),
            }
        }
    }
    write_meta(&out, "export", started, clock)?;
    println!("{}", out.display());
    Ok(())
}
