//! Morphology-free feature extraction.
//!
//! A window is described by four groups, always concatenated in this order:
//!
//! | group       | width   | contents                                              |
//! |-------------|---------|-------------------------------------------------------|
//! | `time`      | 8       | min, max, median, mean, std, energy, kurtosis, zero-crossings |
//! | `gradient`  | 4·T     | per chunk: h⁺, h⁻, s⁺, s⁻ of the first differences    |
//! | `lowfreq`   | N_l     | first N_l one-sided FFT magnitudes (DC first)         |
//! | `wholefreq` | N_b     | one-sided magnitudes summed over N_b consecutive bins |
//!
//! With the defaults (T = 2, N_l = N_b = 200) a window maps to 416 values.
//! Vectors from several modalities are joined with [`fuse`].

pub mod gradient;
pub mod spectral;
pub mod time;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::types::{FeatureFlags, FeatureLayout, FeatureVector, Modality, Window};

pub use gradient::{gradient, gradient_pooling, GradientPool};
pub use spectral::{low_freq_features, spectrum, whole_freq_features, SpectrumView};
pub use time::{time_stats, TimeStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureGroup {
    Time,
    Gradient,
    LowFreq,
    WholeFreq,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 4] = [
        FeatureGroup::Time,
        FeatureGroup::Gradient,
        FeatureGroup::LowFreq,
        FeatureGroup::WholeFreq,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureGroup::Time => "time",
            FeatureGroup::Gradient => "gradient",
            FeatureGroup::LowFreq => "lowfreq",
            FeatureGroup::WholeFreq => "wholefreq",
        }
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureGroup::ALL
            .into_iter()
            .find(|g| g.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown feature group '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub n_low: usize,
    pub n_bands: usize,
    pub temporal_resolution: usize,
    pub include_groups: BTreeSet<FeatureGroup>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            n_low: 200,
            n_bands: 200,
            temporal_resolution: 2,
            include_groups: FeatureGroup::ALL.into_iter().collect(),
        }
    }
}

impl FeatureConfig {
    pub fn only(groups: &[FeatureGroup]) -> Self {
        Self {
            include_groups: groups.iter().copied().collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_low == 0 || self.n_bands == 0 || self.temporal_resolution == 0 {
            return Err(Error::Config(
                "n_low, n_bands and temporal_resolution must all be >= 1".into(),
            ));
        }
        if self.include_groups.is_empty() {
            return Err(Error::Config("include_groups is empty".into()));
        }
        Ok(())
    }

    fn has(&self, g: FeatureGroup) -> bool {
        self.include_groups.contains(&g)
    }

    /// Layout of a single-modality vector under this configuration.
    pub fn layout(&self) -> FeatureLayout {
        let mut l = FeatureLayout::new();
        if self.has(FeatureGroup::Time) {
            for name in time::NAMES {
                l.push("time", name, 1);
            }
        }
        if self.has(FeatureGroup::Gradient) {
            for c in 0..self.temporal_resolution {
                for q in gradient::QUANTITIES {
                    l.push("gradient", &format!("c{c}_{q}"), 1);
                }
            }
        }
        if self.has(FeatureGroup::LowFreq) {
            l.push("lowfreq", "magnitude", self.n_low);
        }
        if self.has(FeatureGroup::WholeFreq) {
            l.push("wholefreq", "band_sum", self.n_bands);
        }
        l
    }
}

/// Reusable extractor holding a validated config and its shared layout.
#[derive(Debug, Clone)]
pub struct Extractor {
    cfg: FeatureConfig,
    layout: Arc<FeatureLayout>,
}

impl Extractor {
    pub fn new(cfg: FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = Arc::new(cfg.layout());
        Ok(Self { cfg, layout })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Arc<FeatureLayout> {
        &self.layout
    }

    pub fn extract(&self, win: &Window) -> Result<FeatureVector> {
        let cfg = &self.cfg;
        let x = win.samples();
        let mut values = Vec::with_capacity(self.layout.total_dim());
        let mut flags = FeatureFlags::default();

        if cfg.has(FeatureGroup::Time) {
            let s = time::time_stats_of(x);
            flags.kurtosis_degenerate = s.kurtosis_degenerate;
            values.extend(s.to_array());
        }
        if cfg.has(FeatureGroup::Gradient) {
            for p in gradient::gradient_pooling(x, cfg.temporal_resolution)? {
                values.extend(p.to_array());
            }
        }
        if cfg.has(FeatureGroup::LowFreq) || cfg.has(FeatureGroup::WholeFreq) {
            let sp = spectral::spectrum_of(x, win.fs());
            if cfg.has(FeatureGroup::LowFreq) {
                let (low, short) = spectral::low_freq_features(&sp, cfg.n_low);
                flags.short_window = short;
                values.extend(low);
            }
            if cfg.has(FeatureGroup::WholeFreq) {
                values.extend(spectral::whole_freq_features(&sp, cfg.n_bands));
            }
        }

        let mut v = FeatureVector::new(
            values,
            Arc::clone(&self.layout),
            win.label().map(str::to_owned),
            win.patient_id(),
        )?
        .with_timing(win.start_s(), win.fs());
        v.flags = flags;
        Ok(v)
    }
}

pub fn extract(win: &Window, cfg: &FeatureConfig) -> Result<FeatureVector> {
    Extractor::new(cfg.clone())?.extract(win)
}

/// A window that could not be turned into a vector.
#[derive(Debug)]
pub struct WindowDiagnostic {
    pub patient_id: String,
    pub modality: Modality,
    pub start_s: f64,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct BatchOutput {
    /// Sorted by `(patient_id, start_s)`.
    pub vectors: Vec<FeatureVector>,
    pub skipped: Vec<WindowDiagnostic>,
}

/// Extract every window; failing windows are skipped with a diagnostic.
pub fn extract_batch(windows: &[Window], cfg: &FeatureConfig, exec: Execution) -> Result<BatchOutput> {
    let extractor = Extractor::new(cfg.clone())?;
    let results = exec.map(windows, |w| extractor.extract(w));
    let mut out = BatchOutput::default();
    for (w, r) in windows.iter().zip(results) {
        match r {
            Ok(v) => out.vectors.push(v),
            Err(error) => {
                log::warn!(
                    "{} {} window at {} s skipped: {error}",
                    w.patient_id(),
                    w.modality(),
                    w.start_s()
                );
                out.skipped.push(WindowDiagnostic {
                    patient_id: w.patient_id().to_owned(),
                    modality: w.modality(),
                    start_s: w.start_s(),
                    error,
                });
            }
        }
    }
    sort_vectors(&mut out.vectors);
    Ok(out)
}

pub fn sort_vectors(vs: &mut [FeatureVector]) {
    vs.sort_by(|a, b| {
        a.patient_id
            .cmp(&b.patient_id)
            .then(a.start_s.total_cmp(&b.start_s))
    });
}

/// Concatenate per-modality vectors of one time-aligned window, in the given
/// order. Layout groups are prefixed with the modality name.
pub fn fuse(parts: &[(Modality, &FeatureVector)]) -> Result<FeatureVector> {
    let (_, first) = parts
        .first()
        .ok_or_else(|| Error::Config("fuse needs at least one modality".into()))?;
    let slowest_fs = parts.iter().map(|(_, v)| v.fs).fold(f64::INFINITY, f64::min);
    let tolerance = 1.0 / slowest_fs;
    let mut seen = BTreeSet::new();
    for (m, v) in parts {
        if !seen.insert(*m) {
            return Err(Error::Config(format!("modality {m} listed twice in fusion")));
        }
        if v.patient_id != first.patient_id {
            return Err(Error::Alignment(format!(
                "cannot fuse patient '{}' with '{}'",
                v.patient_id, first.patient_id
            )));
        }
        if (v.start_s - first.start_s).abs() > tolerance {
            return Err(Error::Alignment(format!(
                "{m} window starts at {} s, {} window at {} s",
                v.start_s, parts[0].0, first.start_s
            )));
        }
        if v.label != first.label {
            return Err(Error::Alignment(format!(
                "{m} window label {:?} differs from {:?}",
                v.label, first.label
            )));
        }
    }

    let mut layout = FeatureLayout::new();
    let mut values = Vec::new();
    let mut flags = FeatureFlags::default();
    for (m, v) in parts {
        layout.append(&v.layout().prefixed(m.as_str()));
        values.extend_from_slice(v.values());
        flags = flags.union(v.flags);
    }
    let mut fused = FeatureVector::new(
        values,
        Arc::new(layout),
        first.label.clone(),
        first.patient_id.clone(),
    )?
    .with_timing(first.start_s, slowest_fs);
    fused.flags = flags;
    Ok(fused)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Waveform;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_window(n: usize, seed: u64) -> Window {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Window::new(x, 100.0, Modality::Ppg, "p", Some("a".into())).unwrap()
    }

    #[test]
    fn default_dimension_is_416() {
        let v = extract(&random_window(3000, 1), &FeatureConfig::default()).unwrap();
        assert_eq!(v.dim(), 416);
        let l = v.layout();
        assert_eq!(l.group_dim("time"), 8);
        assert_eq!(l.group_dim("gradient"), 8);
        assert_eq!(l.group_dim("lowfreq"), 200);
        assert_eq!(l.group_dim("wholefreq"), 200);
        assert_eq!(l.entries()[0].name, "min");
        assert_eq!(l.entries()[8].name, "c0_h_pos");
        assert_eq!(l.entries()[15].name, "c1_s_neg");
    }

    #[test]
    fn group_selection() {
        let w = random_window(100, 2);
        let v = extract(&w, &FeatureConfig::only(&[FeatureGroup::Time])).unwrap();
        assert_eq!(v.dim(), 8);
        let cfg = FeatureConfig {
            n_low: 10,
            ..FeatureConfig::only(&[FeatureGroup::LowFreq])
        };
        assert_eq!(extract(&w, &cfg).unwrap().dim(), 10);
        assert!(FeatureConfig::only(&[]).validate().is_err());
    }

    #[test]
    fn time_group_matches_stats() {
        let w = random_window(257, 3);
        let v = extract(&w, &FeatureConfig::default()).unwrap();
        let s = time_stats(&w);
        assert_eq!(&v.values()[..8], &s.to_array());
        assert_eq!(v.get("time", "kurtosis").unwrap(), &[s.kurtosis]);
    }

    #[test]
    fn too_many_chunks_skips_window() {
        let cfg = FeatureConfig {
            temporal_resolution: 4,
            ..FeatureConfig::default()
        };
        let windows = vec![random_window(7, 1), random_window(64, 2)];
        let out = extract_batch(&windows, &cfg, Execution::Sequential).unwrap();
        assert_eq!(out.vectors.len(), 1);
        assert_eq!(out.skipped.len(), 1);
    }

    #[test]
    fn batch_modes_bit_identical() {
        let windows: Vec<_> = (0..16).map(|s| random_window(512, s)).collect();
        let cfg = FeatureConfig::default();
        let a = extract_batch(&windows, &cfg, Execution::Sequential).unwrap();
        let b = extract_batch(&windows, &cfg, Execution::Parallel).unwrap();
        for (x, y) in a.vectors.iter().zip(&b.vectors) {
            let xb: Vec<u64> = x.values().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.values().iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
    }

    #[test]
    fn layout_serialization_is_stable() {
        let a = serde_json::to_string(&FeatureConfig::default().layout()).unwrap();
        let b = serde_json::to_string(&FeatureConfig::default().layout()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fuse_two_modalities() {
        let cfg = FeatureConfig::default();
        let ecg_w = Window::new(vec![0.5; 3000], 300.0, Modality::Ecg, "p", None).unwrap();
        let ppg_w = Window::new(vec![0.5; 1000], 100.0, Modality::Ppg, "p", None).unwrap();
        let ecg = extract(&ecg_w, &cfg).unwrap();
        let ppg = extract(&ppg_w, &cfg).unwrap();
        let f = fuse(&[(Modality::Ecg, &ecg), (Modality::Ppg, &ppg)]).unwrap();
        assert_eq!(f.dim(), 832);
        assert_eq!(f.layout().entries()[0].group, "ecg/time");
        assert_eq!(&f.values()[416..], ppg.values());

        let single = fuse(&[(Modality::Ecg, &ecg)]).unwrap();
        assert_eq!(single.values(), ecg.values());
    }

    #[test]
    fn fuse_rejects_misaligned() {
        let cfg = FeatureConfig::default();
        let w = Waveform::new(vec![0.5; 4000], 100.0, Modality::Ppg, "p").unwrap();
        let a = extract(&Window::from_waveform(&w, 0, 1000, None).unwrap(), &cfg).unwrap();
        let b = extract(&Window::from_waveform(&w, 2, 1000, None).unwrap(), &cfg).unwrap();
        let err = fuse(&[(Modality::Ppg, &a), (Modality::Ecg, &b)]).unwrap_err();
        assert!(matches!(err, Error::Alignment(_)));
        assert!(fuse(&[]).is_err());
    }

}
