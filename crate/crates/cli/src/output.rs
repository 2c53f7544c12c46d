use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use authalic::mesh::{save_mesh, MeshFormat};
use authalic::pipeline::LogRow;
use authalic::registration::Location;
use authalic::Vec3;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Everything needed to rerun a command: inputs, every parameter value and
/// the seed. Timings are informational.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub subcommand: String,
    pub inputs: Vec<PathBuf>,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub timings: BTreeMap<String, f64>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new<P: Serialize>(subcommand: &str, inputs: Vec<PathBuf>, parameters: &P, seed: Option<u64>) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            inputs,
            parameters: serde_json::to_value(parameters).expect("arguments serialize"),
            seed,
            timings: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| CliError::write(path, e))
    }
}

#[derive(Serialize)]
struct CsvRow {
    iter: usize,
    #[serde(rename = "E_S")]
    stretch: f64,
    #[serde(rename = "E_A")]
    authalic: f64,
    #[serde(rename = "E")]
    normalized: f64,
    sd_over_mean: f64,
    grad_norm: f64,
    alpha: f64,
    folds: usize,
    elapsed_s: f64,
}

pub const CSV_HEADER: [&str; 9] = ["iter", "E_S", "E_A", "E", "sd_over_mean", "grad_norm", "alpha", "folds", "elapsed_s"];

pub fn write_log_csv(path: &Path, rows: &[LogRow]) -> CliResult<()> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.serialize(CsvRow {
            iter: r.iter,
            stretch: r.stretch,
            authalic: r.authalic,
            normalized: r.normalized,
            sd_over_mean: r.sd_over_mean,
            grad_norm: r.grad_norm,
            alpha: r.alpha,
            folds: r.folds,
            elapsed_s: r.elapsed,
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::write(path, e))
}

pub fn write_obj(path: &Path, vertices: &[Vec3], faces: &[[usize; 3]]) -> CliResult<()> {
    save_mesh(path, MeshFormat::Obj, vertices, faces).map_err(|e| match e {
        authalic::MeshError::Io { path, source } => CliError::Write { path, source },
        other => CliError::Input(other),
    })
}

fn write_lines(path: &Path, header: &str, lines: impl Iterator<Item = String>) -> CliResult<()> {
    let err = |e| CliError::write(path, e);
    let mut w = BufWriter::new(fs::File::create(path).map_err(err)?);
    writeln!(w, "{header}").map_err(err)?;
    for line in lines {
        writeln!(w, "{line}").map_err(err)?;
    }
    w.flush().map_err(err)
}

/// Output vertex k is input vertex k; the sidecar records that explicitly.
pub fn write_vertex_ids(path: &Path, n: usize) -> CliResult<()> {
    write_lines(path, "# output_vertex input_vertex (1-based)", (1..=n).map(|i| format!("{i} {i}")))
}

pub fn write_composed_map(path: &Path, locations: &[Location]) -> CliResult<()> {
    write_lines(
        path,
        "# one line per vertex of mesh0: face of mesh1 (0-based) and barycentric weights",
        locations
            .iter()
            .map(|l| format!("{} {} {} {}", l.face, l.weights[0], l.weights[1], l.weights[2])),
    )
}

/// One composed-map record: face index and barycentric weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapRecord {
    pub face: usize,
    pub weights: [f64; 3],
}

pub fn read_composed_map(path: &Path) -> CliResult<Vec<MapRecord>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| CliError::Artifact {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", tokens.len())));
        }
        let face = tokens[0].parse().map_err(|_| bad(format!("bad face index {:?}", tokens[0])))?;
        let mut weights = [0.0; 3];
        for (w, t) in weights.iter_mut().zip(&tokens[1..]) {
            *w = t.parse().map_err(|_| bad(format!("bad weight {t:?}")))?;
        }
        out.push(MapRecord { face, weights });
    }
    Ok(out)
}

pub fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("mesh")
        .to_string()
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))
}
