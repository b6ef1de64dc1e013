//! Loaders for the two UCI classification datasets, with a local cache.
//!
//! Layout of the cache directory (overridable via MPNEWTON_CACHE_DIR):
//!   <name>.raw            raw file exactly as fetched
//!   <name>.sha256         digest the raw file is held to
//!   <name>.preprocessed.csv  numeric matrix after encoding, label last
//!   <name>.provenance.json   source, digest, encoding map, dropped columns
//!
//! The UCI site publishes no checksums, so the digest is recorded on first
//! acquisition and every later fetch or cached copy is verified against it.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{MpError, Result};
use crate::linalg::Mat;

/// Environment variable naming the cache directory.
pub const CACHE_ENV: &str = "MPNEWTON_CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UciName {
    Australian,
    Mush,
}

impl UciName {
    pub fn parse(text: &str) -> Result<UciName> {
        match text.to_ascii_lowercase().as_str() {
            "australian" | "statlog-australian" => Ok(UciName::Australian),
            "mush" | "mushroom" | "agaricus-lepiota" => Ok(UciName::Mush),
            other => Err(MpError::Config(format!(
                "unknown dataset {other:?}, expected australian or mush"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            UciName::Australian => "australian",
            UciName::Mush => "mush",
        }
    }

    pub fn url(&self) -> &'static str {
        match self {
            UciName::Australian => {
                "https://archive.ics.uci.edu/ml/machine-learning-databases/statlog/australian/australian.dat"
            }
            UciName::Mush => {
                "https://archive.ics.uci.edu/ml/machine-learning-databases/mushroom/agaricus-lepiota.data"
            }
        }
    }
}

/// What went into a preprocessed dataset; serialized next to it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub name: String,
    pub source: String,
    pub sha256: String,
    pub raw_rows: usize,
    pub dropped_columns: Vec<String>,
    /// Categorical columns only: category list in one-hot order.
    pub encoding: BTreeMap<String, Vec<String>>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Cache directory resolution: explicit argument, then MPNEWTON_CACHE_DIR,
/// then ~/.cache/mpnewton, then a directory-local fallback.
pub fn cache_dir(explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Ok(p) = std::env::var(CACHE_ENV) {
        if !p.is_empty() {
            return PathBuf::from(p);
        }
    }
    if let Ok(home) = std::env::var("HOME") {
        if !home.is_empty() {
            return Path::new(&home).join(".cache").join("mpnewton");
        }
    }
    PathBuf::from(".mpnewton-cache")
}

fn fetch_url(url: &str) -> Result<Vec<u8>> {
    let agent = ureq::AgentBuilder::new()
        .timeout(std::time::Duration::from_secs(60))
        .build();
    let resp = agent.get(url).call().map_err(|e| MpError::Fetch {
        url: url.to_string(),
        msg: e.to_string(),
    })?;
    let mut bytes = Vec::new();
    resp.into_reader()
        .read_to_end(&mut bytes)
        .map_err(|e| MpError::Fetch {
            url: url.to_string(),
            msg: e.to_string(),
        })?;
    Ok(bytes)
}

fn verify_or_record_digest(cache: &Path, name: UciName, bytes: &[u8]) -> Result<String> {
    let got = sha256_hex(bytes);
    let digest_path = cache.join(format!("{}.sha256", name.label()));
    if digest_path.exists() {
        let expected = fs::read_to_string(&digest_path)?.trim().to_string();
        if expected != got {
            return Err(MpError::DigestMismatch {
                name: name.label().to_string(),
                expected,
                got,
            });
        }
    } else {
        fs::write(&digest_path, format!("{got}\n"))?;
    }
    Ok(got)
}

/// Get the raw dataset bytes, from (in order) a local override path, the
/// cache, or the pinned URL. Returns the bytes, the digest, and a
/// description of where they came from.
pub fn raw_bytes(
    name: UciName,
    source: Option<&str>,
    cache: &Path,
) -> Result<(Vec<u8>, String, String)> {
    fs::create_dir_all(cache)?;
    if let Some(src) = source {
        if Path::new(src).exists() {
            let bytes = fs::read(src)?;
            let digest = verify_or_record_digest(cache, name, &bytes)?;
            return Ok((bytes, digest, format!("file:{src}")));
        }
    }
    let raw_path = cache.join(format!("{}.raw", name.label()));
    if raw_path.exists() {
        let bytes = fs::read(&raw_path)?;
        let digest = verify_or_record_digest(cache, name, &bytes)?;
        return Ok((bytes, digest, format!("cache:{}", raw_path.display())));
    }
    let url = source.unwrap_or_else(|| name.url());
    let bytes = fetch_url(url)?;
    let digest = verify_or_record_digest(cache, name, &bytes)?;
    fs::write(&raw_path, &bytes)?;
    Ok((bytes, digest, url.to_string()))
}

/// `dataset fetch <name>`: pull the raw file into the cache and report its
/// path. No preprocessing.
pub fn fetch_dataset(name: UciName, source: Option<&str>, cache: Option<&Path>) -> Result<PathBuf> {
    let cache = cache_dir(cache);
    raw_bytes(name, source, &cache)?;
    Ok(cache.join(format!("{}.raw", name.label())))
}

const MUSH_COLUMNS: [&str; 22] = [
    "cap-shape",
    "cap-surface",
    "cap-color",
    "bruises",
    "odor",
    "gill-attachment",
    "gill-spacing",
    "gill-size",
    "gill-color",
    "stalk-shape",
    "stalk-root",
    "stalk-surface-above-ring",
    "stalk-surface-below-ring",
    "stalk-color-above-ring",
    "stalk-color-below-ring",
    "veil-type",
    "veil-color",
    "ring-number",
    "ring-type",
    "spore-print-color",
    "population",
    "habitat",
];

/// Australian: 14 numeric/ordinal fields then a {0,1} label, whitespace
/// separated. Everything is standardized; zero-variance columns dropped.
fn parse_australian(text: &str) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<String>)> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 15 {
            return Err(MpError::ParseRow {
                line: line_no,
                msg: format!("expected 15 fields, got {}", fields.len()),
            });
        }
        let mut row = Vec::with_capacity(14);
        for f in &fields[..14] {
            row.push(f.parse::<f64>().map_err(|_| MpError::ParseRow {
                line: line_no,
                msg: format!("bad number {f:?}"),
            })?);
        }
        let label = match fields[14] {
            "0" => 0.0,
            "1" => 1.0,
            other => {
                return Err(MpError::ParseRow {
                    line: line_no,
                    msg: format!("bad label {other:?}"),
                })
            }
        };
        rows.push(row);
        labels.push(label);
    }
    let names = (1..=14).map(|i| format!("a{i}")).collect();
    Ok((rows, labels, names))
}

/// MUSH: label first (e = edible -> 0, p = poisonous -> 1), then 22
/// single-character categorical fields; '?' is a category like any other.
fn parse_mush(text: &str) -> Result<(Vec<Vec<String>>, Vec<f64>)> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 23 {
            return Err(MpError::ParseRow {
                line: line_no,
                msg: format!("expected 23 fields, got {}", fields.len()),
            });
        }
        let label = match fields[0] {
            "e" => 0.0,
            "p" => 1.0,
            other => {
                return Err(MpError::ParseRow {
                    line: line_no,
                    msg: format!("bad label {other:?}, expected e or p"),
                })
            }
        };
        labels.push(label);
        rows.push(fields[1..].iter().map(|s| s.to_string()).collect());
    }
    Ok((rows, labels))
}

fn preprocess_australian(
    rows: Vec<Vec<f64>>,
    labels: Vec<f64>,
    names: Vec<String>,
) -> (Dataset, Vec<String>) {
    let n = rows.len();
    let d = names.len();
    let mut kept_cols: Vec<Vec<f64>> = Vec::new();
    let mut kept_names: Vec<String> = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..d {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        if var == 0.0 {
            dropped.push(names[j].clone());
            continue;
        }
        let sd = var.sqrt();
        kept_cols.push(col.iter().map(|x| (x - mean) / sd).collect());
        kept_names.push(names[j].clone());
    }
    kept_names.push("bias".to_string());
    let features = Mat::from_fn(n, kept_cols.len() + 1, |i, j| {
        if j < kept_cols.len() {
            kept_cols[j][i]
        } else {
            1.0
        }
    });
    (
        Dataset {
            name: "australian".to_string(),
            features,
            labels,
            feature_names: kept_names,
        },
        dropped,
    )
}

fn preprocess_mush(
    rows: Vec<Vec<String>>,
    labels: Vec<f64>,
) -> (Dataset, Vec<String>, BTreeMap<String, Vec<String>>) {
    let n = rows.len();
    let mut encoding = BTreeMap::new();
    let mut dropped = Vec::new();
    let mut col_names = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for (j, col_name) in MUSH_COLUMNS.iter().enumerate() {
        let mut cats: Vec<String> = rows.iter().map(|r| r[j].clone()).collect();
        cats.sort();
        cats.dedup();
        if cats.len() < 2 {
            // A single category one-hot encodes to a constant column, which
            // the bias already provides.
            dropped.push(col_name.to_string());
            continue;
        }
        encoding.insert(col_name.to_string(), cats.clone());
        for cat in &cats {
            col_names.push(format!("{col_name}={cat}"));
            cols.push(rows.iter().map(|r| if &r[j] == cat { 1.0 } else { 0.0 }).collect());
        }
    }
    col_names.push("bias".to_string());
    let features = Mat::from_fn(n, cols.len() + 1, |i, j| {
        if j < cols.len() {
            cols[j][i]
        } else {
            1.0
        }
    });
    (
        Dataset {
            name: "mush".to_string(),
            features,
            labels,
            feature_names: col_names,
        },
        dropped,
        encoding,
    )
}

fn write_preprocessed(cache: &Path, d: &Dataset, prov: &Provenance) -> Result<()> {
    let mut csv = String::new();
    csv.push_str(&d.feature_names.join(","));
    csv.push_str(",label\n");
    for i in 0..d.features.rows() {
        let row = d
            .features
            .row(i)
            .iter()
            .map(|v| format!("{v:?}"))
            .collect::<Vec<_>>()
            .join(",");
        csv.push_str(&format!("{row},{:?}\n", d.labels[i]));
    }
    fs::write(cache.join(format!("{}.preprocessed.csv", d.name)), csv)?;
    let json = serde_json::to_string_pretty(prov)
        .map_err(|e| MpError::Config(format!("provenance serialization: {e}")))?;
    fs::write(cache.join(format!("{}.provenance.json", d.name)), json)?;
    Ok(())
}

/// Load, preprocess and cache a dataset. `source` may be a local file path
/// (used directly) or a URL override; when None the pinned URL is used if
/// the cache is cold.
pub fn load_dataset(name: UciName, source: Option<&str>, cache: Option<&Path>) -> Result<Dataset> {
    let cache = cache_dir(cache);
    let (bytes, digest, origin) = raw_bytes(name, source, &cache)?;
    let text = String::from_utf8_lossy(&bytes);
    let (dataset, dropped, encoding, raw_rows) = match name {
        UciName::Australian => {
            let (rows, labels, names) = parse_australian(&text)?;
            let raw_rows = rows.len();
            let (d, dropped) = preprocess_australian(rows, labels, names);
            (d, dropped, BTreeMap::new(), raw_rows)
        }
        UciName::Mush => {
            let (rows, labels) = parse_mush(&text)?;
            let raw_rows = rows.len();
            let (d, dropped, encoding) = preprocess_mush(rows, labels);
            (d, dropped, encoding, raw_rows)
        }
    };
    let prov = Provenance {
        name: name.label().to_string(),
        source: origin,
        sha256: digest,
        raw_rows,
        dropped_columns: dropped,
        encoding,
    };
    write_preprocessed(&cache, &dataset, &prov)?;
    Ok(dataset)
}
