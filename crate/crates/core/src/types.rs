//! Domain types shared by every pipeline stage.
//!
//! All types are immutable once built; accessors hand out borrows so values can
//! be shared freely across worker threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Ecg,
    Ppg,
    Ip,
    Other,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Ecg => "ecg",
            Modality::Ppg => "ppg",
            Modality::Ip => "ip",
            Modality::Other => "other",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ecg" => Ok(Modality::Ecg),
            "ppg" => Ok(Modality::Ppg),
            "ip" => Ok(Modality::Ip),
            "other" => Ok(Modality::Other),
            _ => Err(Error::Config(format!("unknown modality '{s}'"))),
        }
    }
}

/// A uniformly sampled single-channel recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    fs: f64,
    modality: Modality,
    patient_id: String,
    start_time: f64,
}

impl Waveform {
    pub fn new(
        samples: Vec<f64>,
        fs: f64,
        modality: Modality,
        patient_id: impl Into<String>,
    ) -> Result<Self> {
        Self::with_start(samples, fs, modality, patient_id, 0.0)
    }

    pub fn with_start(
        samples: Vec<f64>,
        fs: f64,
        modality: Modality,
        patient_id: impl Into<String>,
        start_time: f64,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Data("waveform has no samples".into()));
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::Config(format!("sampling rate must be > 0, got {fs}")));
        }
        if !(start_time.is_finite() && start_time >= 0.0) {
            return Err(Error::Data(format!("start time must be >= 0, got {start_time}")));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            fs,
            modality,
            patient_id: patient_id.into(),
            start_time,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    /// Same metadata, new samples. Used by filters, which preserve length.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        debug_assert_eq!(samples.len(), self.samples.len());
        Self::with_start(
            samples,
            self.fs,
            self.modality,
            self.patient_id.clone(),
            self.start_time,
        )
    }
}

/// A contiguous `L`-sample slice of a waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    samples: Vec<f64>,
    fs: f64,
    modality: Modality,
    patient_id: String,
    label: Option<String>,
    offset: usize,
    start_s: f64,
}

impl Window {
    /// Build a free-standing window (offset 0, start 0 s).
    pub fn new(
        samples: Vec<f64>,
        fs: f64,
        modality: Modality,
        patient_id: impl Into<String>,
        label: Option<String>,
    ) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Data(format!(
                "window needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::Config(format!("sampling rate must be > 0, got {fs}")));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            fs,
            modality,
            patient_id: patient_id.into(),
            label,
            offset: 0,
            start_s: 0.0,
        })
    }

    /// Copy `[offset, offset + len)` out of `w`.
    pub fn from_waveform(
        w: &Waveform,
        offset: usize,
        len: usize,
        label: Option<String>,
    ) -> Result<Self> {
        let end = offset
            .checked_add(len)
            .filter(|&e| e <= w.len())
            .ok_or_else(|| {
                Error::Data(format!(
                    "window [{offset}, {offset}+{len}) exceeds waveform of {} samples",
                    w.len()
                ))
            })?;
        if len < 2 {
            return Err(Error::Data(format!("window needs at least 2 samples, got {len}")));
        }
        Ok(Self {
            samples: w.samples()[offset..end].to_vec(),
            fs: w.fs(),
            modality: w.modality(),
            patient_id: w.patient_id().to_owned(),
            label,
            offset,
            start_s: w.start_time() + offset as f64 / w.fs(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// Index of the first sample in the source waveform.
    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn start_s(&self) -> f64 {
        self.start_s
    }

    /// Returns a copy scaled by `a`; used by scaling-invariance checks.
    pub fn scaled(&self, a: f64) -> Self {
        let mut w = self.clone();
        w.samples.iter_mut().for_each(|x| *x *= a);
        w
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SeverityLabel {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<i32>,
}

impl SeverityLabel {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::Data("severity label must be non-empty".into()));
        }
        Ok(Self {
            name,
            ordinal: None,
        })
    }

    pub fn with_ordinal(mut self, ordinal: i32) -> Self {
        self.ordinal = Some(ordinal);
        self
    }
}

/// Rename labels through `merge_map`. Every key must occur among `labels`.
pub fn merge_labels(
    labels: &[SeverityLabel],
    merge_map: &BTreeMap<String, String>,
) -> Result<Vec<SeverityLabel>> {
    let universe: BTreeSet<&str> = labels.iter().map(|l| l.name.as_str()).collect();
    check_merge_keys(&universe, merge_map)?;
    Ok(labels
        .iter()
        .map(|l| match merge_map.get(&l.name) {
            Some(new) => SeverityLabel {
                name: new.clone(),
                ordinal: l.ordinal,
            },
            None => l.clone(),
        })
        .collect())
}

pub(crate) fn check_merge_keys(
    universe: &BTreeSet<&str>,
    merge_map: &BTreeMap<String, String>,
) -> Result<()> {
    for (old, new) in merge_map {
        if !universe.contains(old.as_str()) {
            return Err(Error::Config(format!(
                "label_merge key '{old}' does not occur in the dataset"
            )));
        }
        if new.is_empty() {
            return Err(Error::Config(format!("label_merge maps '{old}' to an empty label")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub group: String,
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl LayoutEntry {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Maps vector positions to named feature groups.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureLayout {
    entries: Vec<LayoutEntry>,
    total_dim: usize,
}

impl FeatureLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuild from explicit entries, checking they tile `[0, total_dim)`.
    pub fn from_entries(entries: Vec<LayoutEntry>) -> Result<Self> {
        let mut next = 0;
        for e in &entries {
            if e.start != next || e.len == 0 {
                return Err(Error::Serialization(format!(
                    "layout entry {}.{} at {} (len {}) breaks contiguity",
                    e.group, e.name, e.start, e.len
                )));
            }
            validate_name(&e.group, "group")?;
            validate_name(&e.name, "feature")?;
            next += e.len;
        }
        Ok(Self {
            entries,
            total_dim: next,
        })
    }

    pub fn push(&mut self, group: &str, name: &str, len: usize) {
        debug_assert!(len > 0);
        self.entries.push(LayoutEntry {
            group: group.to_owned(),
            name: name.to_owned(),
            start: self.total_dim,
            len,
        });
        self.total_dim += len;
    }

    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn entry(&self, group: &str, name: &str) -> Option<&LayoutEntry> {
        self.entries
            .iter()
            .find(|e| e.group == group && e.name == name)
    }

    /// Total width of all entries belonging to `group`.
    pub fn group_dim(&self, group: &str) -> usize {
        self.entries
            .iter()
            .filter(|e| e.group == group)
            .map(|e| e.len)
            .sum()
    }

    /// Column names, one per position: `group.name.index`.
    pub fn column_names(&self) -> Vec<String> {
        self.entries
            .iter()
            .flat_map(|e| (0..e.len).map(move |i| format!("{}.{}.{}", e.group, e.name, i)))
            .collect()
    }

    /// Inverse of [`column_names`](Self::column_names).
    pub fn from_column_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut layout = FeatureLayout::new();
        let mut current: Option<(String, String, usize)> = None;
        for raw in names {
            let raw = raw.as_ref();
            let (head, idx) = raw
                .rsplit_once('.')
                .ok_or_else(|| Error::Serialization(format!("bad feature column '{raw}'")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::Serialization(format!("bad feature index in '{raw}'")))?;
            let (group, name) = head
                .split_once('.')
                .ok_or_else(|| Error::Serialization(format!("bad feature column '{raw}'")))?;
            match &mut current {
                Some((g, n, len)) if g == group && n == name && *len == idx => *len += 1,
                _ => {
                    if idx != 0 {
                        return Err(Error::Serialization(format!(
                            "feature column '{raw}' does not start at index 0"
                        )));
                    }
                    if let Some((g, n, len)) = current.take() {
                        layout.push(&g, &n, len);
                    }
                    current = Some((group.to_owned(), name.to_owned(), 1));
                }
            }
        }
        if let Some((g, n, len)) = current {
            layout.push(&g, &n, len);
        }
        Self::from_entries(layout.entries)
    }

    /// Same layout with every group renamed `prefix/group`.
    pub fn prefixed(&self, prefix: &str) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|e| LayoutEntry {
                    group: format!("{prefix}/{}", e.group),
                    ..e.clone()
                })
                .collect(),
            total_dim: self.total_dim,
        }
    }

    pub fn append(&mut self, other: &FeatureLayout) {
        for e in &other.entries {
            self.push(&e.group, &e.name, e.len);
        }
    }
}

fn validate_name(s: &str, what: &str) -> Result<()> {
    if s.is_empty() || s.contains(['.', ',', '\n', '\r']) {
        return Err(Error::Serialization(format!("invalid {what} name '{s}'")));
    }
    Ok(())
}

/// Soft conditions raised during extraction. They never make values non-finite.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureFlags {
    /// Constant window: kurtosis reported as 0.
    pub kurtosis_degenerate: bool,
    /// Fewer one-sided bins than requested low-frequency coefficients.
    pub short_window: bool,
}

impl FeatureFlags {
    pub fn union(self, other: Self) -> Self {
        Self {
            kurtosis_degenerate: self.kurtosis_degenerate || other.kurtosis_degenerate,
            short_window: self.short_window || other.short_window,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    layout: Arc<FeatureLayout>,
    pub label: Option<String>,
    pub patient_id: String,
    /// Window start in seconds from the recording origin.
    pub start_s: f64,
    /// Sampling rate of the (slowest) source window.
    pub fs: f64,
    pub flags: FeatureFlags,
}

impl FeatureVector {
    pub fn new(
        values: Vec<f64>,
        layout: Arc<FeatureLayout>,
        label: Option<String>,
        patient_id: impl Into<String>,
    ) -> Result<Self> {
        if values.len() != layout.total_dim() {
            return Err(Error::Dimension {
                expected: layout.total_dim(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite feature at position {i}")));
        }
        Ok(Self {
            values,
            layout,
            label,
            patient_id: patient_id.into(),
            start_s: 0.0,
            fs: 1.0,
            flags: FeatureFlags::default(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn layout(&self) -> &Arc<FeatureLayout> {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Slice of values for one layout entry.
    pub fn get(&self, group: &str, name: &str) -> Option<&[f64]> {
        self.layout
            .entry(group, name)
            .map(|e| &self.values[e.range()])
    }

    pub(crate) fn with_timing(mut self, start_s: f64, fs: f64) -> Self {
        self.start_s = start_s;
        self.fs = fs;
        self
    }
}
