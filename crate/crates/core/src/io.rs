//! Dataset manifests, waveform decoding, the feature table format and
//! atomic output files.
//!
//! A manifest is a TOML file:
//!
//! ```toml
//! description = "tetanus cohort"
//! format = "csv"            # or "raw_f64le"
//! csv_timestamp = false     # CSV rows start with a timestamp column
//!
//! [label_merge]
//! "2b1" = "2b"
//!
//! [[records]]
//! path = "p01_ecg.csv"      # relative to the manifest
//! modality = "ecg"
//! fs = 300.0
//! patient_id = "p01"
//! label = "severe"
//! channel = 0               # optional amplitude column
//! ```
//!
//! Feature tables are CSV with a `patient_id,label,start_s,fs` prefix and
//! one `group.name.index` column per feature.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::types::{check_merge_keys, FeatureLayout, FeatureVector, Modality, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    #[default]
    Csv,
    RawF64le,
}

impl DataFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DataFormat::Csv => "csv",
            DataFormat::RawF64le => "f64",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    /// As written in the manifest; see [`DatasetManifest::resolve`].
    pub path: PathBuf,
    pub modality: Modality,
    pub fs: f64,
    pub patient_id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub format: DataFormat,
    #[serde(default)]
    pub csv_timestamp: bool,
    #[serde(default)]
    pub label_merge: BTreeMap<String, String>,
    #[serde(default)]
    pub records: Vec<Record>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut m: DatasetManifest =
            toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {}", one_line(&e.to_string()))))?;
        m.base_dir = base_dir.into();
        m.validate(false)?;
        Ok(m)
    }

    /// Check the record invariants; with `check_files` every path must exist.
    pub fn validate(&self, check_files: bool) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::Config("empty manifest".into()));
        }
        let mut keys = BTreeSet::new();
        for (i, r) in self.records.iter().enumerate() {
            let at = || format!("record {} ({} {} '{}')", i + 1, r.patient_id, r.modality, r.path.display());
            if !(r.fs.is_finite() && r.fs > 0.0) {
                return Err(Error::Config(format!("{}: fs must be > 0, got {}", at(), r.fs)));
            }
            if r.patient_id.is_empty() || r.label.is_empty() {
                return Err(Error::Config(format!("{}: patient_id and label must be non-empty", at())));
            }
            for s in [&r.patient_id, &r.label] {
                if s.contains([',', '\n', '\r', '"']) {
                    return Err(Error::Config(format!("{}: '{s}' contains a comma, quote or newline", at())));
                }
            }
            if self.format == DataFormat::RawF64le && r.channel.is_some_and(|c| c > 0) {
                return Err(Error::Config(format!("{}: raw_f64le files hold a single channel", at())));
            }
            if !keys.insert((r.patient_id.as_str(), r.modality, r.path.as_path())) {
                return Err(Error::Config(format!("{}: duplicate record", at())));
            }
            if check_files && !self.resolve(r).is_file() {
                return Err(Error::Config(format!("{}: file not found", at())));
            }
        }
        let universe: BTreeSet<&str> = self.records.iter().map(|r| r.label.as_str()).collect();
        check_merge_keys(&universe, &self.label_merge)
    }

    pub fn resolve(&self, r: &Record) -> PathBuf {
        if r.path.is_absolute() {
            r.path.clone()
        } else {
            self.base_dir.join(&r.path)
        }
    }

    /// Record label after `label_merge`.
    pub fn label_of(&self, r: &Record) -> String {
        self.label_merge.get(&r.label).unwrap_or(&r.label).clone()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Read and fully validate a manifest, including file existence.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let m = DatasetManifest::parse(&text, base)
        .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_kind(&e))))?;
    m.validate(true)
        .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_kind(&e))))?;
    Ok(m)
}

fn strip_kind(e: &Error) -> String {
    match e {
        Error::Config(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Decode one record's samples; the waveform starts at t = 0.
pub fn load_waveform(m: &DatasetManifest, r: &Record) -> Result<Waveform> {
    let path = m.resolve(r);
    let samples = match m.format {
        DataFormat::Csv => {
            let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            read_csv_samples(file, m.csv_timestamp, r.channel.unwrap_or(0)).map_err(|msg| Error::load(&path, msg))?
        }
        DataFormat::RawF64le => {
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            decode_raw(&bytes).map_err(|msg| Error::load(&path, msg))?
        }
    };
    Waveform::new(samples, r.fs, r.modality, r.patient_id.clone()).map_err(|e| Error::load(&path, e.to_string()))
}

/// Load every record (concurrently under `exec`), in manifest order.
pub fn load_all(m: &DatasetManifest, exec: Execution) -> Result<Vec<Waveform>> {
    exec.map(&m.records, |r| load_waveform(m, r)).into_iter().collect()
}

fn read_csv_samples<R: std::io::Read>(src: R, timestamp: bool, channel: usize) -> std::result::Result<Vec<f64>, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(src);
    let col = channel + usize::from(timestamp);
    let mut out = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let cell = |c: usize| -> std::result::Result<f64, String> {
            let s = rec.get(c).ok_or_else(|| format!("line {line}: missing column {}", c + 1))?;
            s.parse::<f64>()
                .map_err(|_| format!("line {line}: non-numeric value '{s}'"))
        };
        if timestamp {
            let t = cell(0)?;
            if t.is_nan() || t <= last_t {
                return Err(format!("line {line}: timestamps must increase strictly"));
            }
            last_t = t;
        }
        let v = cell(col)?;
        if !v.is_finite() {
            return Err(format!("line {line}: sample {} is not finite", out.len()));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err("no samples".into());
    }
    Ok(out)
}

/// Parse a single-column (optionally timestamped) CSV waveform from text.
pub fn parse_csv_samples(text: &str, timestamp: bool, channel: usize) -> Result<Vec<f64>> {
    read_csv_samples(text.as_bytes(), timestamp, channel).map_err(Error::Data)
}

fn decode_raw(bytes: &[u8]) -> std::result::Result<Vec<f64>, String> {
    if !bytes.len().is_multiple_of(8) {
        return Err(format!("truncated file: {} bytes is not a multiple of 8", bytes.len()));
    }
    let mut out = Vec::with_capacity(bytes.len() / 8);
    for (i, chunk) in bytes.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
        if !v.is_finite() {
            return Err(format!("sample {i} is not finite"));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err("no samples".into());
    }
    Ok(out)
}

pub fn decode_raw_f64le(bytes: &[u8]) -> Result<Vec<f64>> {
    decode_raw(bytes).map_err(Error::Data)
}

pub fn encode_raw_f64le(samples: &[f64]) -> Vec<u8> {
    samples.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// One sample per line, shortest round-trip formatting.
pub fn encode_csv(samples: &[f64]) -> String {
    let mut s = String::with_capacity(samples.len() * 20);
    for v in samples {
        s.push_str(&format!("{v:?}\n"));
    }
    s
}

const FEATURE_PREFIX: [&str; 4] = ["patient_id", "label", "start_s", "fs"];

/// Render vectors as a feature table. Every vector must use `layout`.
pub fn features_to_string(vectors: &[FeatureVector], layout: &FeatureLayout) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    let header: Vec<String> = FEATURE_PREFIX.iter().map(|s| s.to_string()).chain(layout.column_names()).collect();
    w.write_record(&header).map_err(ser)?;
    for (i, v) in vectors.iter().enumerate() {
        if v.layout().as_ref() != layout {
            return Err(Error::Serialization(format!("vector {i} does not use the table layout")));
        }
        if v.patient_id.contains([',', '\n', '"']) || v.label.as_deref().is_some_and(|l| l.contains([',', '\n', '"'])) {
            return Err(Error::Serialization(format!("vector {i}: ids may not contain commas, quotes or newlines")));
        }
        let mut row = vec![
            v.patient_id.clone(),
            v.label.clone().unwrap_or_default(),
            format!("{:?}", v.start_s),
            format!("{:?}", v.fs),
        ];
        row.extend(v.values().iter().map(|x| format!("{x:?}")));
        w.write_record(&row).map_err(ser)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
}

pub fn features_from_str(text: &str) -> Result<(Vec<FeatureVector>, Arc<FeatureLayout>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    let header = rdr.headers().map_err(ser)?.clone();
    if header.len() < FEATURE_PREFIX.len() || header.iter().zip(FEATURE_PREFIX).any(|(a, b)| a != b) {
        return Err(Error::Serialization(format!(
            "feature table must start with columns {}",
            FEATURE_PREFIX.join(",")
        )));
    }
    let names: Vec<&str> = header.iter().skip(FEATURE_PREFIX.len()).collect();
    let layout = Arc::new(FeatureLayout::from_column_names(&names)?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(ser)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Error::Serialization(format!(
                "line {line}: {} feature values for {} columns",
                rec.len().saturating_sub(FEATURE_PREFIX.len()),
                names.len()
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Serialization(format!("line {line}: non-numeric value '{s}'")))
        };
        let values = rec.iter().skip(FEATURE_PREFIX.len()).map(num).collect::<Result<Vec<_>>>()?;
        let label = Some(rec[1].to_owned()).filter(|l| !l.is_empty());
        let mut v = FeatureVector::new(values, Arc::clone(&layout), label, &rec[0])
            .map_err(|e| Error::Serialization(format!("line {line}: {e}")))?;
        v.start_s = num(&rec[2])?;
        v.fs = num(&rec[3])?;
        out.push(v);
    }
    Ok((out, layout))
}

pub fn save_features(vectors: &[FeatureVector], layout: &FeatureLayout, path: &Path) -> Result<()> {
    let text = features_to_string(vectors, layout)?;
    let mut out = OutputSet::new();
    out.write(path, text.as_bytes())?;
    out.commit()
}

pub fn load_features(path: &Path) -> Result<(Vec<FeatureVector>, Arc<FeatureLayout>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    features_from_str(&text).map_err(|e| Error::Serialization(format!("{}: {}", path.display(), e)))
}

/// Files staged next to their destination and renamed into place together
/// on [`commit`](Self::commit). Dropping an uncommitted set removes the
/// staged files.
#[derive(Debug, Default)]
pub struct OutputSet {
    staged: Vec<(PathBuf, PathBuf)>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".partial");
        let tmp = path.with_file_name(format!(".{}", name.to_string_lossy()));
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        self.staged.push((tmp, path.to_path_buf()));
        Ok(())
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.staged.iter().map(|(_, p)| p.as_path())
    }

    pub fn commit(mut self) -> Result<()> {
        let staged = std::mem::take(&mut self.staged);
        for (i, (tmp, dst)) in staged.iter().enumerate() {
            if let Err(e) = fs::rename(tmp, dst) {
                for (t, _) in &staged[i..] {
                    let _ = fs::remove_file(t);
                }
                return Err(Error::io(dst, e));
            }
        }
        Ok(())
    }
}

impl Drop for OutputSet {
    fn drop(&mut self) {
        for (tmp, _) in &self.staged {
            let _ = fs::remove_file(tmp);
        }
    }
}
