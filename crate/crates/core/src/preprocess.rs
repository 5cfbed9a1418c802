//! Artefact mitigation: zero-phase high-pass followed by Gaussian smoothing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Waveform;

/// Gaussian σ·f product at which the kernel's response falls to −3 dB.
pub const GAUSSIAN_3DB_SIGMA_HZ: f64 = 0.1325;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub hp_cutoff_hz: f64,
    pub lp_cutoff_hz: f64,
    /// Overrides the σ derived from `lp_cutoff_hz`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gaussian_sigma_s: Option<f64>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            hp_cutoff_hz: 0.05,
            lp_cutoff_hz: 150.0,
            gaussian_sigma_s: None,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hp_cutoff_hz > 0.0 && self.hp_cutoff_hz < self.lp_cutoff_hz) {
            return Err(Error::Config(format!(
                "need 0 < hp_cutoff_hz < lp_cutoff_hz, got {} and {}",
                self.hp_cutoff_hz, self.lp_cutoff_hz
            )));
        }
        if let Some(s) = self.gaussian_sigma_s {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Config(format!("gaussian_sigma_s must be > 0, got {s}")));
            }
        }
        Ok(())
    }

    pub fn sigma_s(&self) -> f64 {
        self.gaussian_sigma_s
            .unwrap_or(GAUSSIAN_3DB_SIGMA_HZ / self.lp_cutoff_hz)
    }
}

/// Second-order section in transposed direct form II, `a0` normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Butterworth high-pass via the bilinear transform with pre-warping.
    pub fn butterworth_high_pass(cutoff_hz: f64, fs: f64) -> Self {
        let k = (std::f64::consts::PI * cutoff_hz / fs).tan();
        let sqrt2 = std::f64::consts::SQRT_2;
        let norm = 1.0 / (1.0 + sqrt2 * k + k * k);
        Self {
            b: [norm, -2.0 * norm, norm],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - sqrt2 * k + k * k) * norm],
        }
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// State that makes a constant unit input a steady state.
    fn steady_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * g;
        [self.b[1] - self.a[0] * g + z2, z2]
    }

    fn run(&self, x: &mut [f64], z: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let [mut z1, mut z2] = z;
        for v in x.iter_mut() {
            let xin = *v;
            let y = b0 * xin + z1;
            z1 = b1 * xin - a1 * y + z2;
            z2 = b2 * xin - a2 * y;
            *v = y;
        }
    }

    /// Forward-backward (zero-phase) application with odd-reflection padding
    /// and steady-state initial conditions.
    pub fn filtfilt(&self, x: &[f64], padlen: usize) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = padlen.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let zi = self.steady_state();
        let x0 = ext[0];
        self.run(&mut ext, [zi[0] * x0, zi[1] * x0]);
        ext.reverse();
        let y0 = ext[0];
        self.run(&mut ext, [zi[0] * y0, zi[1] * y0]);
        ext.reverse();
        ext.drain(..pad);
        ext.truncate(n);
        ext
    }
}

/// Zero-phase second-order Butterworth high-pass of a raw sample slice.
pub fn high_pass_samples(x: &[f64], fs: f64, cutoff_hz: f64) -> Result<Vec<f64>> {
    if !(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0) {
        return Err(Error::Config(format!(
            "high-pass cutoff {cutoff_hz} Hz must lie in (0, {}) for fs = {fs} Hz",
            fs / 2.0
        )));
    }
    let filter = Biquad::butterworth_high_pass(cutoff_hz, fs);
    // One period of the cutoff soaks up most of the start-up transient.
    let padlen = (fs / cutoff_hz).ceil() as usize;
    Ok(filter.filtfilt(x, padlen))
}

pub fn high_pass(w: &Waveform, cutoff_hz: f64) -> Result<Waveform> {
    w.with_samples(high_pass_samples(w.samples(), w.fs(), cutoff_hz)?)
}

/// Symmetric reflection (`d c b a | a b c d | d c b a`) of an arbitrary index.
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// Unit-sum discrete Gaussian truncated at ±4σ.
pub fn gaussian_kernel(sigma_samples: f64) -> Vec<f64> {
    let radius = ((4.0 * sigma_samples).ceil() as usize).max(1);
    let denom = 2.0 * sigma_samples * sigma_samples;
    let mut k: Vec<f64> = (-(radius as isize)..=radius as isize)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

pub fn gaussian_smooth_samples(x: &[f64], sigma_samples: f64) -> Result<Vec<f64>> {
    if !(sigma_samples.is_finite() && sigma_samples > 0.0) {
        return Err(Error::Config(format!(
            "gaussian sigma must be > 0, got {sigma_samples} samples"
        )));
    }
    let n = x.len();
    let kernel = gaussian_kernel(sigma_samples);
    let r = kernel.len() / 2;
    let padded: Vec<f64> = (-(r as isize)..(n + r) as isize)
        .map(|i| x[reflect_index(i, n)])
        .collect();
    Ok(padded
        .windows(kernel.len())
        .map(|w| w.iter().zip(&kernel).map(|(a, b)| a * b).sum())
        .collect())
}

pub fn gaussian_smooth(w: &Waveform, sigma_s: f64) -> Result<Waveform> {
    w.with_samples(gaussian_smooth_samples(w.samples(), sigma_s * w.fs())?)
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub waveform: Waveform,
    /// `lp_cutoff_hz` was above Nyquist, so no smoothing was applied.
    pub smoothing_skipped: bool,
}

pub fn preprocess(w: &Waveform, cfg: &FilterConfig) -> Result<Preprocessed> {
    cfg.validate()?;
    let hp = high_pass(w, cfg.hp_cutoff_hz)?;
    // At exactly Nyquist (150 Hz on 300 Hz ECG) the smoothing still runs.
    if cfg.lp_cutoff_hz > w.fs() / 2.0 {
        log::info!(
            "{} {}: low-pass {} Hz above Nyquist {} Hz, smoothing skipped",
            w.patient_id(),
            w.modality(),
            cfg.lp_cutoff_hz,
            w.fs() / 2.0
        );
        return Ok(Preprocessed {
            waveform: hp,
            smoothing_skipped: true,
        });
    }
    Ok(Preprocessed {
        waveform: gaussian_smooth(&hp, cfg.sigma_s())?,
        smoothing_skipped: false,
    })
}
