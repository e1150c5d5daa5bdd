//! Flat `key = value` configuration files (TOML syntax, no tables) and
//! `--set key=value` overrides.

use std::fmt::Write as _;
use std::path::Path;

use egan_core::tabular::RegularizerKind;
use egan_core::trainer::TrainConfig;
use toml::Value;

use crate::error::{CliError, CliResult};
use crate::formats;

/// Keys accepted by the train, eval and export commands, in file order.
pub const TRAIN_KEYS: [&str; 24] = [
    "model",
    "dataset",
    "seed",
    "z_dim",
    "hidden",
    "batch_size",
    "iterations",
    "train_samples",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "k",
    "alpha",
    "entropy_weight",
    "eval_every",
    "eval_samples",
    "report_samples",
    "x_min",
    "x_max",
    "y_min",
    "y_max",
    "nx",
    "ny",
];

/// Reads a flat config file into `(key, value)` pairs, in file order.
pub fn read_pairs(path: &Path) -> CliResult<Vec<(String, Value)>> {
    let text = formats::read_string(path)?;
    parse_pairs(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn parse_pairs(text: &str) -> Result<Vec<(String, Value)>, String> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.message().to_string())?;
    let mut pairs = Vec::new();
    for (k, v) in table {
        if matches!(v, Value::Table(_) | Value::Array(_)) {
            return Err(format!("`{k}`: only scalar values are allowed"));
        }
        pairs.push((k, v));
    }
    Ok(pairs)
}

/// Parses a `key=value` override. The value is read as a TOML scalar and falls
/// back to a bare string, so `model=gan` and `lr=1e-3` both work.
pub fn parse_override(s: &str) -> CliResult<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{s}` is not of the form key=value")))?;
    let k = k.trim();
    let v = v.trim();
    let value = format!("v = {v}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .filter(|v| !matches!(v, Value::Table(_) | Value::Array(_)))
        .unwrap_or_else(|| Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

fn as_count(key: &str, v: &Value) -> CliResult<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(CliError::Config(format!("`{key}` must be a non-negative integer, got {v}"))),
    }
}

fn as_u64(key: &str, v: &Value) -> CliResult<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(CliError::Config(format!("`{key}` must be a non-negative integer, got {v}"))),
    }
}

fn as_real(key: &str, v: &Value) -> CliResult<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(CliError::Config(format!("`{key}` must be a number, got {v}"))),
    }
}

fn as_str<'a>(key: &str, v: &'a Value) -> CliResult<&'a str> {
    v.as_str()
        .ok_or_else(|| CliError::Config(format!("`{key}` must be a string, got {v}")))
}

fn parse_named<T: std::str::FromStr>(key: &str, v: &Value) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    as_str(key, v)?
        .parse()
        .map_err(|e: T::Err| CliError::Config(format!("`{key}`: {e}")))
}

/// Sets one training key.
pub fn apply_train(cfg: &mut TrainConfig, key: &str, v: &Value) -> CliResult<()> {
    match key {
        "model" => cfg.model = parse_named(key, v)?,
        "dataset" | "data" => cfg.dataset = parse_named(key, v)?,
        "seed" => cfg.seed = as_u64(key, v)?,
        "z_dim" => cfg.z_dim = as_count(key, v)?,
        "hidden" => cfg.hidden = as_count(key, v)?,
        "batch_size" => cfg.batch_size = as_count(key, v)?,
        "iterations" => cfg.iterations = as_count(key, v)?,
        "train_samples" => cfg.train_samples = as_count(key, v)?,
        "lr" => cfg.adam.lr = as_real(key, v)?,
        "beta1" => cfg.adam.beta1 = as_real(key, v)?,
        "beta2" => cfg.adam.beta2 = as_real(key, v)?,
        "eps" => cfg.adam.eps = as_real(key, v)?,
        "k" => cfg.k = as_count(key, v)?,
        "alpha" => cfg.alpha = as_real(key, v)?,
        "entropy_weight" => cfg.entropy_weight = as_real(key, v)?,
        "eval_every" => cfg.eval_every = as_count(key, v)?,
        "eval_samples" => cfg.eval_samples = as_count(key, v)?,
        "report_samples" => cfg.report_samples = as_count(key, v)?,
        "x_min" => cfg.grid.x_min = as_real(key, v)?,
        "x_max" => cfg.grid.x_max = as_real(key, v)?,
        "y_min" => cfg.grid.y_min = as_real(key, v)?,
        "y_max" => cfg.grid.y_max = as_real(key, v)?,
        "nx" => cfg.grid.nx = as_count(key, v)?,
        "ny" => cfg.grid.ny = as_count(key, v)?,
        _ => return Err(CliError::Config(format!("unknown key `{key}`"))),
    }
    Ok(())
}

/// Defaults, then the file (if any), then the overrides, then validation.
pub fn load_train(path: Option<&Path>, overrides: &[(String, Value)]) -> CliResult<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(p) = path {
        for (k, v) in read_pairs(p)? {
            apply_train(&mut cfg, &k, &v)?;
        }
    }
    for (k, v) in overrides {
        apply_train(&mut cfg, k, v)?;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

/// The config as a flat file that [`load_train`] reads back to the same value.
pub fn train_to_string(cfg: &TrainConfig) -> String {
    let g = &cfg.grid;
    let reals = |x: f64| Value::Float(x).to_string();
    let values = [
        Value::String(cfg.model.name().into()).to_string(),
        Value::String(cfg.dataset.name().into()).to_string(),
        cfg.seed.to_string(),
        cfg.z_dim.to_string(),
        cfg.hidden.to_string(),
        cfg.batch_size.to_string(),
        cfg.iterations.to_string(),
        cfg.train_samples.to_string(),
        reals(cfg.adam.lr),
        reals(cfg.adam.beta1),
        reals(cfg.adam.beta2),
        reals(cfg.adam.eps),
        cfg.k.to_string(),
        reals(cfg.alpha),
        reals(cfg.entropy_weight),
        cfg.eval_every.to_string(),
        cfg.eval_samples.to_string(),
        cfg.report_samples.to_string(),
        reals(g.x_min),
        reals(g.x_max),
        reals(g.y_min),
        reals(g.y_max),
        g.nx.to_string(),
        g.ny.to_string(),
    ];
    let mut out = String::new();
    for (k, v) in TRAIN_KEYS.iter().zip(values) {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

/// Settings of the `tabular` command.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularConfig {
    pub kind: RegularizerKind,
    pub n: usize,
    pub seeds: usize,
    pub seed: u64,
    pub steps: usize,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self { kind: RegularizerKind::NegEntropy, n: 8, seeds: 1, seed: 0, steps: 20_000 }
    }
}

/// `neg-entropy`, `l2` or `constant`.
pub fn parse_regularizer(s: &str) -> CliResult<RegularizerKind> {
    match s {
        "neg-entropy" | "entropy" => Ok(RegularizerKind::NegEntropy),
        "l2" | "half-l2" => Ok(RegularizerKind::HalfL2),
        "constant" | "const" => Ok(RegularizerKind::Constant(0.0)),
        _ => Err(CliError::Config(format!(
            "unknown regularizer `{s}` (expected neg-entropy, l2 or constant)"
        ))),
    }
}

pub fn regularizer_name(kind: RegularizerKind) -> &'static str {
    match kind {
        RegularizerKind::NegEntropy => "neg-entropy",
        RegularizerKind::HalfL2 => "l2",
        RegularizerKind::Constant(_) => "constant",
    }
}

pub fn apply_tabular(cfg: &mut TabularConfig, key: &str, v: &Value) -> CliResult<()> {
    match key {
        "k" | "kind" => cfg.kind = parse_regularizer(as_str(key, v)?)?,
        "n" => cfg.n = as_count(key, v)?,
        "seeds" => cfg.seeds = as_count(key, v)?,
        "seed" => cfg.seed = as_u64(key, v)?,
        "steps" => cfg.steps = as_count(key, v)?,
        _ => return Err(CliError::Config(format!("unknown key `{key}`"))),
    }
    Ok(())
}

pub fn load_tabular(path: Option<&Path>, overrides: &[(String, Value)]) -> CliResult<TabularConfig> {
    let mut cfg = TabularConfig::default();
    if let Some(p) = path {
        for (k, v) in read_pairs(p)? {
            apply_tabular(&mut cfg, &k, &v)?;
        }
    }
    for (k, v) in overrides {
        apply_tabular(&mut cfg, k, v)?;
    }
    if cfg.n < 2 {
        return Err(CliError::Config("`n` must be at least 2".into()));
    }
    if cfg.seeds == 0 || cfg.steps == 0 {
        return Err(CliError::Config("`seeds` and `steps` must be at least 1".into()));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use egan_core::data::DatasetKind;
    use egan_core::trainer::ModelKind;

    #[test]
    fn overrides_parse_scalars_and_bare_strings() {
        assert_eq!(parse_override("lr=1e-3").unwrap().1, Value::Float(1e-3));
        assert_eq!(parse_override("k = 7").unwrap().1, Value::Integer(7));
        assert_eq!(parse_override("model=egan-const").unwrap().1, Value::String("egan-const".into()));
        assert_eq!(parse_override("model=\"gan\"").unwrap().1, Value::String("gan".into()));
        assert!(parse_override("nonsense").is_err());
    }

    #[test]
    fn round_trip_through_text() {
        let mut cfg = TrainConfig { model: ModelKind::Gan, dataset: DatasetKind::TwoSpirals, seed: 9, ..Default::default() };
        cfg.adam.lr = 1e-3;
        cfg.alpha = 0.1 + 0.2;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, train_to_string(&cfg)).unwrap();
        assert_eq!(load_train(Some(&path), &[]).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_keys_tables_and_bad_types() {
        let mut cfg = TrainConfig::default();
        assert!(apply_train(&mut cfg, "colour", &Value::Integer(1)).is_err());
        assert!(apply_train(&mut cfg, "iterations", &Value::Integer(-1)).is_err());
        assert!(apply_train(&mut cfg, "lr", &Value::String("fast".into())).is_err());
        assert!(apply_train(&mut cfg, "model", &Value::String("wgan".into())).is_err());
        assert!(parse_pairs("[adam]\nlr = 1.0").is_err());
        assert!(parse_pairs("lr = ").is_err());
    }

    #[test]
    fn validation_runs_after_overrides() {
        let o = vec![("batch_size".to_string(), Value::Integer(0))];
        assert!(load_train(None, &o).is_err());
    }

    #[test]
    fn tabular_keys() {
        let o = vec![parse_override("k=constant").unwrap(), parse_override("n=4").unwrap()];
        let cfg = load_tabular(None, &o).unwrap();
        assert_eq!(cfg.kind, RegularizerKind::Constant(0.0));
        assert_eq!(cfg.n, 4);
        assert!(load_tabular(None, &[parse_override("n=1").unwrap()]).is_err());
    }
}
