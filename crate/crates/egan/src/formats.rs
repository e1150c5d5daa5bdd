//! On-disk formats: grid CSV, PGM heatmaps, point CSV, gradient fields, KL
//! tables and parameter checkpoints.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use egan_core::data::{Grid2D, GridSpec, Point};
use egan_core::eval::{GradFieldRecord, KlTable};
use egan_core::nn::{ParamSet, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Row-major grid CSV. The first line is a comment carrying the bounds so a
/// file can be read back without a separate spec.
pub fn grid_csv(grid: &Grid2D) -> String {
    let s = &grid.spec;
    let mut out = format!(
        "# x_min={} x_max={} y_min={} y_max={} nx={} ny={}\nix,iy,x,y,value\n",
        s.x_min, s.x_max, s.y_min, s.y_max, s.nx, s.ny
    );
    for iy in 0..s.ny {
        for ix in 0..s.nx {
            let [x, y] = s.center(ix, iy);
            let _ = writeln!(out, "{ix},{iy},{x},{y},{}", grid.at(ix, iy));
        }
    }
    out
}

pub fn parse_grid_csv(text: &str) -> CliResult<Grid2D> {
    let bad = |m: &str| CliError::Format(format!("grid csv: {m}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))?;
    let header = header.strip_prefix("# ").ok_or_else(|| bad("missing bounds line"))?;
    let mut fields = BTreeMap::new();
    for kv in header.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad("malformed bounds line"))?;
        fields.insert(k, v);
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(&format!("missing `{k}`")));
    let num = |k: &str| -> CliResult<f64> { get(k)?.parse().map_err(|_| bad(&format!("bad `{k}`"))) };
    let count = |k: &str| -> CliResult<usize> { get(k)?.parse().map_err(|_| bad(&format!("bad `{k}`"))) };
    let spec = GridSpec::new(num("x_min")?, num("x_max")?, num("y_min")?, num("y_max")?, count("nx")?, count("ny")?)?;
    if lines.next() != Some("ix,iy,x,y,value") {
        return Err(bad("missing column header"));
    }
    let mut values = vec![f64::NAN; spec.len()];
    let mut seen = 0;
    for line in lines.filter(|l| !l.is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(bad("expected 5 columns"));
        }
        let ix: usize = cols[0].parse().map_err(|_| bad("bad ix"))?;
        let iy: usize = cols[1].parse().map_err(|_| bad("bad iy"))?;
        if ix >= spec.nx || iy >= spec.ny {
            return Err(bad("cell index out of range"));
        }
        values[spec.index(ix, iy)] = cols[4].parse().map_err(|_| bad("bad value"))?;
        seen += 1;
    }
    if seen != spec.len() {
        return Err(bad("wrong number of cells"));
    }
    Ok(Grid2D::new(spec, values)?)
}

/// 8-bit binary PGM, min-max normalized (min maps to 0). The top image row is
/// the largest `y`.
pub fn grid_pgm(grid: &Grid2D) -> Vec<u8> {
    let s = &grid.spec;
    let (lo, hi) = grid.min_max();
    let range = hi - lo;
    let mut out = format!("P5\n{} {}\n255\n", s.nx, s.ny).into_bytes();
    for iy in (0..s.ny).rev() {
        for ix in 0..s.nx {
            let v = grid.at(ix, iy);
            let level = if range > 0.0 && range.is_finite() { ((v - lo) / range * 255.0).round() } else { 0.0 };
            out.push(level.clamp(0.0, 255.0) as u8);
        }
    }
    out
}

pub fn points_csv(points: &[Point]) -> String {
    let mut out = String::from("x,y\n");
    for [x, y] in points {
        let _ = writeln!(out, "{x},{y}");
    }
    out
}

pub fn parse_points_csv(text: &str) -> CliResult<Vec<Point>> {
    let bad = |m: &str| CliError::Format(format!("points csv: {m}"));
    let mut lines = text.lines();
    if lines.next() != Some("x,y") {
        return Err(bad("missing header"));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (x, y) = l.split_once(',').ok_or_else(|| bad("expected 2 columns"))?;
            Ok([x.parse().map_err(|_| bad("bad x"))?, y.parse().map_err(|_| bad("bad y"))?])
        })
        .collect()
}

pub fn gradfield_csv(records: &[GradFieldRecord]) -> String {
    let mut out = String::from("x,y,disc_dx,disc_dy,ent_dx,ent_dy,sum_dx,sum_dy\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.x, r.y, r.disc_dx, r.disc_dy, r.ent_dx, r.ent_dy, r.sum_dx, r.sum_dy
        );
    }
    out
}

/// Aligned two-column table, one divergence per line.
pub fn kl_text(table: &KlTable) -> String {
    let entries = table.entries();
    let width = entries.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    let mut out = format!("{:<width$}  {}\n", "divergence", "nats");
    for (name, v) in entries {
        let _ = writeln!(out, "{name:<width$}  {v:.4}");
    }
    out
}

/// Shape manifest entry for one tensor in a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub shape: Vec<usize>,
    /// Offset into the binary file, in f64 elements.
    pub offset: usize,
}

pub type Manifest = BTreeMap<String, ManifestEntry>;

/// Serializes every tensor (trainable or buffer) as little-endian f64 into one
/// flat buffer plus a name → (shape, offset) manifest.
pub fn checkpoint(params: &ParamSet) -> (Vec<u8>, Manifest) {
    let mut bytes = Vec::new();
    let mut manifest = Manifest::new();
    let mut offset = 0;
    for (name, t) in params.iter() {
        manifest.insert(name.to_string(), ManifestEntry { shape: t.shape().to_vec(), offset });
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        offset += t.len();
    }
    (bytes, manifest)
}

/// Loads checkpointed values into `params`. Every parameter must be present
/// with a matching shape.
pub fn restore(params: &mut ParamSet, bytes: &[u8], manifest: &Manifest) -> CliResult<()> {
    if !bytes.len().is_multiple_of(8) {
        return Err(CliError::Format("checkpoint length is not a multiple of 8".into()));
    }
    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    if names.len() != manifest.len() {
        return Err(CliError::Format(format!(
            "checkpoint has {} tensors, model has {}",
            manifest.len(),
            names.len()
        )));
    }
    for name in names {
        let entry = manifest
            .get(&name)
            .ok_or_else(|| CliError::Format(format!("checkpoint lacks `{name}`")))?;
        let len: usize = entry.shape.iter().product();
        let start = entry.offset * 8;
        let end = start + len * 8;
        if end > bytes.len() {
            return Err(CliError::Format(format!("checkpoint truncated at `{name}`")));
        }
        let data = bytes[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params.set(&name, Tensor::new(entry.shape.clone(), data)?)?;
    }
    Ok(())
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn read_string(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Format(e.to_string()))?;
    text.push('\n');
    write(path, text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = read_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

/// Writes `stem.csv` and `stem.pgm`.
pub fn write_grid(dir: &Path, stem: &str, grid: &Grid2D) -> CliResult<()> {
    write(&dir.join(format!("{stem}.csv")), grid_csv(grid))?;
    write(&dir.join(format!("{stem}.pgm")), grid_pgm(grid))
}
