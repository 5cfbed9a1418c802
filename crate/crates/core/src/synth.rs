//! Synthetic labelled corpora.
//!
//! Each patient gets a beat train whose intervals follow the class profile;
//! the beat train is rendered as an ECG-like sum of Gaussian bumps, PPG-like
//! smoothed half-sine pulses or an IP-like slow sinusoid, then noise,
//! baseline wander and square-windowed artefact bursts are added.
//! Companion modalities of a patient share its beat train.

pub mod oracle;

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{encode_csv, encode_raw_f64le, DataFormat, DatasetManifest, OutputSet, Record};
use crate::par::Execution;
use crate::preprocess::gaussian_smooth_samples;
use crate::types::{Modality, Waveform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassProfile {
    pub label: String,
    pub base_bpm: f64,
    /// Std of the beat-to-beat interval jitter, seconds.
    pub rate_sigma_s: f64,
    /// Relative std of per-beat amplitude.
    #[serde(default = "default_amplitude_jitter")]
    pub amplitude_jitter: f64,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub artefacts_per_min: f64,
}

fn default_amplitude_jitter() -> f64 {
    0.05
}

fn default_noise() -> f64 {
    0.05
}

impl ClassProfile {
    pub fn new(label: &str, base_bpm: f64, rate_sigma_s: f64) -> Self {
        Self {
            label: label.to_owned(),
            base_bpm,
            rate_sigma_s,
            amplitude_jitter: default_amplitude_jitter(),
            noise_sigma: default_noise(),
            artefacts_per_min: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Companion {
    pub modality: Modality,
    pub fs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub modality: Modality,
    pub fs: f64,
    pub duration_s: f64,
    pub n_patients_per_class: usize,
    pub classes: Vec<ClassProfile>,
    /// Extra modalities recorded alongside the primary one.
    pub companions: Vec<Companion>,
    pub format: DataFormat,
    /// Amplitude of artefact bursts relative to a unit beat.
    pub artefact_amplitude: f64,
    pub baseline_wander: f64,
    /// Relative std of each patient's heart rate around the class base rate.
    pub patient_rate_spread: f64,
    /// Taken from the pipeline's top-level seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let mut slow = ClassProfile::new("slow", 60.0, 0.02);
        let mut fast = ClassProfile::new("fast", 120.0, 0.04);
        slow.artefacts_per_min = 0.2;
        fast.artefacts_per_min = 0.2;
        Self {
            modality: Modality::Ecg,
            fs: 300.0,
            duration_s: 1800.0,
            n_patients_per_class: 5,
            classes: vec![slow, fast],
            companions: Vec::new(),
            format: DataFormat::RawF64le,
            artefact_amplitude: 3.0,
            baseline_wander: 0.1,
            patient_rate_spread: 0.05,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("synth {what} must be > 0, got {v}")))
            }
        };
        let non_neg = |v: f64, what: &str| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("synth {what} must be >= 0, got {v}")))
            }
        };
        pos(self.fs, "fs")?;
        pos(self.duration_s, "duration_s")?;
        non_neg(self.artefact_amplitude, "artefact_amplitude")?;
        non_neg(self.baseline_wander, "baseline_wander")?;
        non_neg(self.patient_rate_spread, "patient_rate_spread")?;
        if self.n_patients_per_class == 0 {
            return Err(Error::Config("synth n_patients_per_class must be >= 1".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::Config("synth needs at least one class profile".into()));
        }
        let mut labels = BTreeSet::new();
        for c in &self.classes {
            if c.label.is_empty() || c.label.contains([',', '"', '\n', '_']) {
                return Err(Error::Config(format!(
                    "synth class label '{}' must be non-empty without commas, quotes or underscores",
                    c.label
                )));
            }
            if !labels.insert(&c.label) {
                return Err(Error::Config(format!("synth class '{}' defined twice", c.label)));
            }
            pos(c.base_bpm, "base_bpm")?;
            non_neg(c.rate_sigma_s, "rate_sigma_s")?;
            non_neg(c.amplitude_jitter, "amplitude_jitter")?;
            non_neg(c.noise_sigma, "noise_sigma")?;
            non_neg(c.artefacts_per_min, "artefacts_per_min")?;
        }
        for (i, a) in self.classes.iter().enumerate() {
            for b in &self.classes[i + 1..] {
                let same = a.base_bpm == b.base_bpm
                    && a.rate_sigma_s == b.rate_sigma_s
                    && a.amplitude_jitter == b.amplitude_jitter
                    && a.noise_sigma == b.noise_sigma
                    && a.artefacts_per_min == b.artefacts_per_min;
                if same {
                    return Err(Error::Config(format!(
                        "synth classes '{}' and '{}' have identical profiles",
                        a.label, b.label
                    )));
                }
            }
        }
        let mut mods = BTreeSet::from([self.modality]);
        for c in &self.companions {
            pos(c.fs, "companion fs")?;
            if !mods.insert(c.modality) {
                return Err(Error::Config(format!("synth modality {} listed twice", c.modality)));
            }
        }
        Ok(())
    }

    fn channels(&self) -> Vec<(Modality, f64)> {
        std::iter::once((self.modality, self.fs))
            .chain(self.companions.iter().map(|c| (c.modality, c.fs)))
            .collect()
    }
}

/// One generated recording.
#[derive(Debug, Clone)]
pub struct Recording {
    pub record: Record,
    pub waveform: Waveform,
}

/// Beat onset times (s) and per-beat amplitudes.
struct BeatTrain {
    times: Vec<f64>,
    amplitudes: Vec<f64>,
}

impl BeatTrain {
    fn interval_at(&self, k: usize) -> f64 {
        match (self.times.get(k), self.times.get(k + 1)) {
            (Some(a), Some(b)) => b - a,
            _ if k > 0 && k < self.times.len() => self.times[k] - self.times[k - 1],
            _ => 1.0,
        }
    }
}

fn beat_train(rng: &mut ChaCha8Rng, profile: &ClassProfile, bpm: f64, duration_s: f64) -> BeatTrain {
    let mean_rr = 60.0 / bpm;
    let jitter = Normal::new(0.0, profile.rate_sigma_s).expect("sigma validated");
    let amp = Normal::new(1.0, profile.amplitude_jitter).expect("jitter validated");
    let mut t = rng.random_range(0.0..mean_rr);
    let (mut times, mut amplitudes) = (Vec::new(), Vec::new());
    // Start one beat early so the first samples are not empty.
    t -= mean_rr;
    while t < duration_s + mean_rr {
        times.push(t);
        amplitudes.push(amp.sample(rng).max(0.1));
        t += (mean_rr + jitter.sample(rng)).max(0.25 * mean_rr);
    }
    BeatTrain { times, amplitudes }
}

/// (offset from the R peak in s, amplitude, width in s)
const ECG_WAVES: [(f64, f64, f64); 5] = [
    (-0.20, 0.12, 0.025),
    (-0.035, -0.12, 0.010),
    (0.0, 1.0, 0.012),
    (0.035, -0.22, 0.010),
    (0.28, 0.30, 0.045),
];

fn add_bump(x: &mut [f64], fs: f64, centre: f64, amp: f64, width: f64) {
    let lo = ((centre - 4.0 * width) * fs).floor().max(0.0) as usize;
    let hi = (((centre + 4.0 * width) * fs).ceil().max(0.0) as usize).min(x.len());
    for (n, v) in x.iter_mut().enumerate().take(hi).skip(lo) {
        let d = (n as f64 / fs - centre) / width;
        *v += amp * (-0.5 * d * d).exp();
    }
}

fn render_ecg(beats: &BeatTrain, fs: f64, n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for (k, (&t, &a)) in beats.times.iter().zip(&beats.amplitudes).enumerate() {
        // P and T waves move with the interval, QRS does not.
        let stretch = beats.interval_at(k).sqrt().clamp(0.5, 1.2);
        for (i, &(off, amp, width)) in ECG_WAVES.iter().enumerate() {
            let off = if i == 0 || i == 4 { off * stretch } else { off };
            add_bump(&mut x, fs, t + off, a * amp, width);
        }
    }
    x
}

fn render_ppg(beats: &BeatTrain, fs: f64, n: usize) -> Result<Vec<f64>> {
    let mut x = vec![0.0; n];
    for (k, (&t, &a)) in beats.times.iter().zip(&beats.amplitudes).enumerate() {
        let onset = t + 0.15;
        let len = 0.55 * beats.interval_at(k);
        let lo = (onset * fs).ceil().max(0.0) as usize;
        let hi = (((onset + len) * fs).floor().max(0.0) as usize).min(n.saturating_sub(1));
        for (m, v) in x.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let u = (m as f64 / fs - onset) / len;
            if (0.0..=1.0).contains(&u) {
                *v += a * (PI * u).sin();
            }
        }
    }
    gaussian_smooth_samples(&x, 0.03 * fs)
}

fn render_ip(beats: &BeatTrain, fs: f64, n: usize) -> Vec<f64> {
    // One breath per four beats: the phase advances by a quarter cycle per beat.
    let mut x = Vec::with_capacity(n);
    let mut k = 0;
    for m in 0..n {
        let t = m as f64 / fs;
        while k + 1 < beats.times.len() && beats.times[k + 1] <= t {
            k += 1;
        }
        let frac = ((t - beats.times[k]) / beats.interval_at(k)).clamp(0.0, 1.0);
        let phase = 0.25 * (k as f64 + frac);
        x.push(beats.amplitudes[k] * (2.0 * PI * phase).sin());
    }
    x
}

fn add_disturbances(x: &mut [f64], fs: f64, profile: &ClassProfile, cfg: &SynthConfig, rng: &mut ChaCha8Rng) {
    let phase = rng.random_range(0.0..2.0 * PI);
    let wander_hz = rng.random_range(0.1..0.3);
    for (m, v) in x.iter_mut().enumerate() {
        let t = m as f64 / fs;
        let e: f64 = rng.sample(StandardNormal);
        *v += profile.noise_sigma * e + cfg.baseline_wander * (2.0 * PI * wander_hz * t + phase).sin();
    }
    let expected = profile.artefacts_per_min * cfg.duration_s / 60.0;
    if expected > 0.0 && cfg.artefact_amplitude > 0.0 {
        let count = Poisson::new(expected).expect("positive rate").sample(rng) as usize;
        for _ in 0..count {
            let start = rng.random_range(0.0..cfg.duration_s);
            let len = rng.random_range(0.5..2.0);
            let lo = (start * fs) as usize;
            let hi = (((start + len) * fs) as usize).min(x.len());
            for v in &mut x[lo.min(hi)..hi] {
                let e: f64 = rng.sample(StandardNormal);
                *v += cfg.artefact_amplitude * e;
            }
        }
    }
}

fn patient_id(label: &str, index: usize) -> String {
    format!("{label}_{index:02}")
}

fn generate_patient(cfg: &SynthConfig, class: usize, index: usize) -> Result<Vec<Recording>> {
    let profile = &cfg.classes[class];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream((class * cfg.n_patients_per_class + index) as u64);
    let spread: f64 = rng.sample(StandardNormal);
    let bpm = profile.base_bpm * (1.0 + cfg.patient_rate_spread * spread.clamp(-2.5, 2.5));
    let beats = beat_train(&mut rng, profile, bpm, cfg.duration_s);
    let pid = patient_id(&profile.label, index);

    let mut out = Vec::new();
    for (modality, fs) in cfg.channels() {
        let n = (cfg.duration_s * fs).round() as usize;
        if n == 0 {
            return Err(Error::Config(format!("synth {modality} at {fs} Hz yields no samples")));
        }
        let mut x = match modality {
            Modality::Ecg | Modality::Other => render_ecg(&beats, fs, n),
            Modality::Ppg => render_ppg(&beats, fs, n)?,
            Modality::Ip => render_ip(&beats, fs, n),
        };
        add_disturbances(&mut x, fs, profile, cfg, &mut rng);
        let record = Record {
            path: format!("{pid}_{modality}.{}", cfg.format.extension()).into(),
            modality,
            fs,
            patient_id: pid.clone(),
            label: profile.label.clone(),
            channel: None,
        };
        out.push(Recording {
            record,
            waveform: Waveform::new(x, fs, modality, pid.clone())?,
        });
    }
    Ok(out)
}

/// Generate every recording in memory, patients in (class, index) order.
pub fn generate_recordings(cfg: &SynthConfig, exec: Execution) -> Result<Vec<Recording>> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.classes.len())
        .flat_map(|c| (0..cfg.n_patients_per_class).map(move |i| (c, i)))
        .collect();
    let per_patient = exec.map(&jobs, |&(c, i)| generate_patient(cfg, c, i));
    let mut out = Vec::new();
    for r in per_patient {
        out.extend(r?);
    }
    Ok(out)
}

pub fn manifest_for(cfg: &SynthConfig, recordings: &[Recording]) -> DatasetManifest {
    DatasetManifest {
        description: format!(
            "synthetic corpus: {} classes x {} patients, {} s, seed {}",
            cfg.classes.len(),
            cfg.n_patients_per_class,
            cfg.duration_s,
            cfg.seed
        ),
        format: cfg.format,
        csv_timestamp: false,
        label_merge: Default::default(),
        records: recordings.iter().map(|r| r.record.clone()).collect(),
        base_dir: Default::default(),
    }
}

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Write waveform files plus `manifest.toml` into `out_dir`, atomically.
pub fn generate(cfg: &SynthConfig, out_dir: &Path, exec: Execution) -> Result<DatasetManifest> {
    let mut out = OutputSet::new();
    let m = generate_into(cfg, out_dir, exec, &mut out)?;
    out.commit()?;
    Ok(m)
}

/// Stage the corpus files in `out`; nothing is visible until it commits.
pub fn generate_into(cfg: &SynthConfig, out_dir: &Path, exec: Execution, out: &mut OutputSet) -> Result<DatasetManifest> {
    let recordings = generate_recordings(cfg, exec)?;
    let mut manifest = manifest_for(cfg, &recordings);
    let encoded = exec.map(&recordings, |r| match cfg.format {
        DataFormat::Csv => encode_csv(r.waveform.samples()).into_bytes(),
        DataFormat::RawF64le => encode_raw_f64le(r.waveform.samples()),
    });
    for (r, bytes) in recordings.iter().zip(encoded) {
        out.write(&out_dir.join(&r.record.path), &bytes)?;
    }
    out.write(&out_dir.join(MANIFEST_FILE), manifest.to_toml()?.as_bytes())?;
    manifest.base_dir = out_dir.to_path_buf();
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::{segment, SegmentConfig};
    use crate::types::SeverityLabel;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            duration_s: 120.0,
            n_patients_per_class: 2,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn thirty_minute_corpus_gives_sixty_windows() {
        let cfg = SynthConfig {
            n_patients_per_class: 5,
            ..SynthConfig::default()
        };
        let recs = generate_recordings(&cfg, Execution::Parallel).unwrap();
        assert_eq!(recs.len(), 10);
        let seg = SegmentConfig::default();
        let n: usize = recs
            .iter()
            .map(|r| {
                let label = SeverityLabel::new(r.record.label.clone()).unwrap();
                segment(&r.waveform, &seg, Some(&label)).unwrap().len()
            })
            .sum();
        assert_eq!(n, 60);
    }

    #[test]
    fn files_are_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            companions: vec![Companion { modality: Modality::Ppg, fs: 100.0 }],
            ..small(4)
        };
        let m = generate(&cfg, a.path(), Execution::Parallel).unwrap();
        generate(&cfg, b.path(), Execution::Sequential).unwrap();
        assert_eq!(m.records.len(), 8);
        for name in m.records.iter().map(|r| r.path.clone()).chain([MANIFEST_FILE.into()]) {
            let x = std::fs::read(a.path().join(&name)).unwrap();
            let y = std::fs::read(b.path().join(&name)).unwrap();
            assert_eq!(x, y, "{}", name.display());
        }
        let loaded = crate::io::load_manifest(&a.path().join(MANIFEST_FILE)).unwrap();
        let w = crate::io::load_waveform(&loaded, &loaded.records[1]).unwrap();
        assert_eq!(w.modality(), Modality::Ppg);
        assert_eq!(w.len(), 12_000);
    }

    #[test]
    fn seeds_differ() {
        let a = generate_recordings(&small(1), Execution::Sequential).unwrap();
        let b = generate_recordings(&small(2), Execution::Sequential).unwrap();
        assert_ne!(a[0].waveform.samples(), b[0].waveform.samples());
    }

    fn r_peak_intervals(x: &[f64], fs: f64) -> Vec<f64> {
        let mut peaks = Vec::new();
        for n in 1..x.len() - 1 {
            if x[n] > 0.5 && x[n] >= x[n - 1] && x[n] > x[n + 1] {
                peaks.push(n as f64 / fs);
            }
        }
        peaks.windows(2).map(|w| w[1] - w[0]).collect()
    }

    fn interval_std(sigma: f64) -> f64 {
        let mut profile = ClassProfile::new("a", 75.0, sigma);
        profile.noise_sigma = 0.0;
        profile.amplitude_jitter = 0.0;
        let cfg = SynthConfig {
            classes: vec![profile],
            n_patients_per_class: 1,
            duration_s: 300.0,
            baseline_wander: 0.0,
            seed: 9,
            ..SynthConfig::default()
        };
        let rec = generate_recordings(&cfg, Execution::Sequential).unwrap();
        let rr = r_peak_intervals(rec[0].waveform.samples(), cfg.fs);
        crate::features::time::std(&rr)
    }

    #[test]
    fn variability_is_monotone() {
        let s: Vec<f64> = [0.005, 0.02, 0.06].iter().map(|&v| interval_std(v)).collect();
        assert!(s[0] < s[1] && s[1] < s[2], "{s:?}");
    }

    #[test]
    fn ip_and_ppg_render() {
        for modality in [Modality::Ip, Modality::Ppg] {
            let cfg = SynthConfig {
                modality,
                fs: 25.0,
                ..small(3)
            };
            let recs = generate_recordings(&cfg, Execution::Sequential).unwrap();
            let x = recs[0].waveform.samples();
            assert_eq!(x.len(), 3000);
            assert!(crate::features::time::std(x) > 0.1);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = SynthConfig::default();
        cfg.classes[1] = ClassProfile { label: "fast".into(), ..cfg.classes[0].clone() };
        assert!(cfg.validate().unwrap_err().to_string().contains("identical"));
        let cfg = SynthConfig { fs: 0.0, ..SynthConfig::default() };
        assert!(cfg.validate().is_err());
        let mut cfg = SynthConfig::default();
        cfg.classes[1].label = "slow".into();
        assert!(cfg.validate().is_err());
    }
}
