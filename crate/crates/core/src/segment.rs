//! Fixed-duration windowing of preprocessed waveforms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{SeverityLabel, Waveform, Window};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentConfig {
    pub duration_s: f64,
    pub overlap_fraction: f64,
    pub drop_partial: bool,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            duration_s: 300.0,
            overlap_fraction: 0.0,
            drop_partial: true,
        }
    }
}

impl SegmentConfig {
    pub fn window_len(&self, fs: f64) -> usize {
        (self.duration_s * fs).round() as usize
    }

    pub fn stride(&self, fs: f64) -> usize {
        let l = self.window_len(fs) as f64;
        ((l * (1.0 - self.overlap_fraction)).round() as usize).max(1)
    }

    /// Checks that do not depend on the sampling rate.
    pub fn validate_params(&self) -> Result<()> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::Config(format!(
                "window duration must be > 0, got {}",
                self.duration_s
            )));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::Config(format!(
                "overlap_fraction must lie in [0, 1), got {}",
                self.overlap_fraction
            )));
        }
        Ok(())
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        self.validate_params()?;
        if self.window_len(fs) < 2 {
            return Err(Error::Config(format!(
                "{} s at {fs} Hz gives fewer than 2 samples per window",
                self.duration_s
            )));
        }
        Ok(())
    }
}

/// Start offsets of every window that [`segment`] would emit.
pub fn window_offsets(n: usize, len: usize, stride: usize, drop_partial: bool) -> Vec<usize> {
    let mut out = Vec::new();
    let mut start = 0;
    while start + len <= n {
        out.push(start);
        start += stride;
    }
    // A trailing partial window is shortened to whatever remains.
    if !drop_partial && start < n && n - start >= 2 {
        out.push(start);
    }
    out
}

/// Cut `w` into labelled windows of `round(duration_s * fs)` samples.
///
/// A waveform shorter than one window yields no windows and a warning.
pub fn segment(
    w: &Waveform,
    cfg: &SegmentConfig,
    label: Option<&SeverityLabel>,
) -> Result<Vec<Window>> {
    cfg.validate(w.fs())?;
    let len = cfg.window_len(w.fs());
    let stride = cfg.stride(w.fs());
    if w.len() < len {
        log::warn!(
            "{} {}: {} samples is shorter than one {}-sample window",
            w.patient_id(),
            w.modality(),
            w.len(),
            len
        );
    }
    let name = label.map(|l| l.name.clone());
    window_offsets(w.len(), len, stride, cfg.drop_partial)
        .into_iter()
        .map(|off| Window::from_waveform(w, off, len.min(w.len() - off), name.clone()))
        .collect()
}
