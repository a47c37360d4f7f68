//! Stage files in the work directory: names, schema headers, atomic writes.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use saccade_core::features::{FeatureVector, GRID_SIZE};
use saccade_core::json;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

pub const TRACES: &str = "traces.jsonl";
pub const SUMMARY: &str = "summary.json";
pub const TRIALS: &str = "trials.jsonl";
pub const GMM: &str = "gmm.json";
pub const GMM_CONTOURS: &str = "gmm_contours.csv";
pub const FEATURES: &str = "features.csv";
pub const SELECTION: &str = "selection.json";
pub const CLASSIFY: &str = "classify.json";
pub const CLASSIFY_TABLE: &str = "classify.csv";
pub const REPORT_DIR: &str = "report";

/// Command that writes a given stage file.
pub fn producer(file: &str) -> &'static str {
    match file {
        TRACES | SUMMARY => "ingest",
        GMM | GMM_CONTOURS => "gmm",
        FEATURES | SELECTION => "features",
        CLASSIFY | CLASSIFY_TABLE => "classify",
        _ => "trials",
    }
}

/// Path of an upstream file, or an error naming the command that makes it.
pub fn upstream(dir: &Path, file: &str) -> Result<PathBuf> {
    let path = dir.join(file);
    if !path.is_file() {
        bail!(
            "missing {}: run `saccade {}` first",
            path.display(),
            producer(file)
        );
    }
    Ok(path)
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| anyhow!("writing {}: {}", path.display(), e.error))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Header<C> {
    pub schema: String,
    pub version: u32,
    pub config: C,
}

fn check_schema(path: &Path, schema: &str, found: &str, version: u32) -> Result<()> {
    if found != schema {
        bail!("{}: expected schema {schema}, found {found}", path.display());
    }
    if version != SCHEMA_VERSION {
        bail!(
            "{}: schema {schema} version {version} is not supported (expected {SCHEMA_VERSION})",
            path.display()
        );
    }
    Ok(())
}

/// JSON Lines: a header line with the schema and resolved config, then one
/// record per line.
pub fn write_jsonl<C: Serialize, R: Serialize>(path: &Path, schema: &str, config: &C, records: &[R]) -> Result<()> {
    let header = Header {
        schema: schema.to_string(),
        version: SCHEMA_VERSION,
        config,
    };
    let mut buf = json::to_string(&header)?;
    buf.push('\n');
    for r in records {
        buf.push_str(&json::to_string(r)?);
        buf.push('\n');
    }
    write_atomic(path, buf.as_bytes())
}

pub fn read_jsonl<C: DeserializeOwned, R: DeserializeOwned>(path: &Path, schema: &str) -> Result<(C, Vec<R>)> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| anyhow!("{}: empty file", path.display()))??;
    let header: Header<C> =
        serde_json::from_str(&first).with_context(|| format!("{}: line 1: bad header", path.display()))?;
    check_schema(path, schema, &header.schema, header.version)?;
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line).with_context(|| format!("{}: line {}", path.display(), idx + 2))?,
        );
    }
    Ok((header.config, records))
}

/// Single JSON document: `schema`, `version`, `config`, then the payload
/// under `data`.
#[derive(Debug, Serialize, Deserialize)]
pub struct Document<C, B> {
    pub schema: String,
    pub version: u32,
    pub config: C,
    pub data: B,
}

pub fn write_document<C: Serialize, B: Serialize>(path: &Path, schema: &str, config: C, body: B) -> Result<()> {
    let doc = Document {
        schema: schema.to_string(),
        version: SCHEMA_VERSION,
        config,
        data: body,
    };
    let mut text = json::to_string(&doc)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_document<C: DeserializeOwned, B: DeserializeOwned>(path: &Path, schema: &str) -> Result<(C, B)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: Document<C, B> = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    check_schema(path, schema, &doc.schema, doc.version)?;
    Ok((doc.config, doc.data))
}

/// Comma-joined CSV row.
pub fn csv_row<I, T>(fields: I) -> String
where
    I: IntoIterator<Item = T>,
    T: std::fmt::Display,
{
    let mut row = String::new();
    for (i, f) in fields.into_iter().enumerate() {
        if i > 0 {
            row.push(',');
        }
        write!(row, "{f}").unwrap();
    }
    row.push('\n');
    row
}

pub const FEATURES_SCHEMA: &str = "saccade.features";

/// Feature matrix: comment lines with schema, config and grid bounds, a
/// header row, then one row per (trial, observer).
pub fn write_features<C: Serialize>(path: &Path, config: &C, lo: f64, hi: f64, vectors: &[FeatureVector]) -> Result<()> {
    let mut buf = String::new();
    writeln!(buf, "# schema={FEATURES_SCHEMA} version={SCHEMA_VERSION}").unwrap();
    writeln!(buf, "# config={}", json::to_string(config)?).unwrap();
    writeln!(buf, "# grid_lo={lo}").unwrap();
    writeln!(buf, "# grid_hi={hi}").unwrap();
    let mut header = vec!["trial_index".to_string(), "observer_id".to_string()];
    header.extend((0..GRID_SIZE).map(|i| format!("v{i:03}")));
    buf.push_str(&csv_row(&header));
    for v in vectors {
        let mut row = String::new();
        write!(row, "{},{}", v.trial_index, v.observer_id).unwrap();
        for x in &v.values {
            write!(row, ",{x}").unwrap();
        }
        row.push('\n');
        buf.push_str(&row);
    }
    write_atomic(path, buf.as_bytes())
}

pub fn read_features(path: &Path) -> Result<(f64, f64, Vec<FeatureVector>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (mut lo, mut hi, mut schema_seen) = (None, None, false);
    let mut vectors = Vec::new();
    let mut header_seen = false;
    for (idx, line) in text.lines().enumerate() {
        let ctx = || format!("{}: line {}", path.display(), idx + 1);
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(rest) = comment.strip_prefix("schema=") {
                let (name, version) = rest
                    .split_once(" version=")
                    .ok_or_else(|| anyhow!("{}: malformed schema line", ctx()))?;
                check_schema(path, FEATURES_SCHEMA, name, version.parse().with_context(ctx)?)?;
                schema_seen = true;
            } else if let Some(v) = comment.strip_prefix("grid_lo=") {
                lo = Some(v.parse::<f64>().with_context(ctx)?);
            } else if let Some(v) = comment.strip_prefix("grid_hi=") {
                hi = Some(v.parse::<f64>().with_context(ctx)?);
            }
            continue;
        }
        if !header_seen {
            header_seen = true;
            continue;
        }
        let mut fields = line.split(',');
        let trial_index = fields.next().unwrap_or_default().parse().with_context(ctx)?;
        let observer_id = fields.next().ok_or_else(|| anyhow!("{}: missing observer", ctx()))?.to_string();
        let values: Vec<f64> = fields.map(|f| f.parse::<f64>()).collect::<Result<_, _>>().with_context(ctx)?;
        if values.len() != GRID_SIZE {
            bail!("{}: expected {GRID_SIZE} values, found {}", ctx(), values.len());
        }
        vectors.push(FeatureVector {
            values,
            grid_lo: 0.0,
            grid_hi: 0.0,
            trial_index,
            observer_id,
        });
    }
    if !schema_seen {
        bail!("{}: missing schema line", path.display());
    }
    let (lo, hi) = match (lo, hi) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => bail!("{}: missing grid_lo/grid_hi lines", path.display()),
    };
    for v in &mut vectors {
        v.grid_lo = lo;
        v.grid_hi = hi;
    }
    Ok((lo, hi, vectors))
}
