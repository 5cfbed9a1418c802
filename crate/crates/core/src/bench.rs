//! Wall-clock timing of the individual features and their scaling in L.
//!
//! Each measurement runs the closure enough times per sample to make the
//! sample at least [`BenchConfig::min_sample_ms`] long, warms up, then takes
//! `min_runs` samples and reports the per-call median and mean.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{self, gradient, spectral, time, Extractor, FeatureConfig};
use crate::par::Execution;
use crate::synth::{self, ClassProfile, SynthConfig};
use crate::types::{Modality, Window};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub fs: f64,
    pub duration_s: f64,
    pub min_runs: usize,
    pub min_sample_ms: f64,
    /// Signal lengths of the scaling sweep; empty skips it.
    pub sweep_lengths: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            fs: 100.0,
            duration_s: 300.0,
            min_runs: 30,
            min_sample_ms: 1.0,
            sweep_lengths: (10..=20).map(|e| 1usize << e).collect(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fs > 0.0 && self.duration_s > 0.0 && self.min_sample_ms >= 0.0) {
            return Err(Error::Config("benchmark fs, duration_s must be > 0".into()));
        }
        if self.min_runs < 30 {
            return Err(Error::Config(format!(
                "benchmark min_runs must be >= 30, got {}",
                self.min_runs
            )));
        }
        if let Some(&l) = self.sweep_lengths.iter().find(|&&l| l < 16) {
            return Err(Error::Config(format!("sweep length {l} is too short (minimum 16)")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub median_ms: f64,
    pub mean_ms: f64,
    pub runs: usize,
    /// Calls per timed sample.
    pub inner: usize,
}

/// Time `f` per call: adaptive batching, two warm-up samples, then `runs`
/// measured samples.
pub fn time_it<R>(mut f: impl FnMut() -> R, runs: usize, min_sample: Duration) -> Timing {
    let mut inner = 1usize;
    loop {
        let t = Instant::now();
        for _ in 0..inner {
            black_box(f());
        }
        if t.elapsed() >= min_sample || inner >= 1 << 24 {
            break;
        }
        inner *= 2;
    }
    let mut sample = || {
        let t = Instant::now();
        for _ in 0..inner {
            black_box(f());
        }
        t.elapsed().as_secs_f64() * 1e3 / inner as f64
    };
    sample();
    sample();
    let mut xs: Vec<f64> = (0..runs).map(|_| sample()).collect();
    let mean_ms = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    let median_ms = if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        (xs[mid - 1] + xs[mid]) / 2.0
    };
    Timing {
        median_ms,
        mean_ms,
        runs,
        inner,
    }
}

/// One row of the timing table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTiming {
    pub group: String,
    pub feature: String,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSeries {
    pub group: String,
    pub feature: String,
    pub lengths: Vec<usize>,
    pub median_ms: Vec<f64>,
    /// Least-squares slope of ln(time) against ln(L).
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub fs: f64,
    pub signal_len: usize,
    pub rows: Vec<FeatureTiming>,
    /// The whole default extraction of one window.
    pub full_extraction: Timing,
    pub sweep: Vec<SweepSeries>,
    pub threads: usize,
}

type FeatureFn = Box<dyn Fn(&[f64]) -> f64>;

/// The table rows in order: nine time-domain, two frequency-domain.
fn feature_fns(fs: f64, cfg: &FeatureConfig) -> Vec<(&'static str, &'static str, FeatureFn)> {
    let (t, n_low, n_bands) = (cfg.temporal_resolution, cfg.n_low, cfg.n_bands);
    vec![
        ("Time", "Mean", Box::new(time::mean)),
        ("Time", "STD", Box::new(time::std)),
        ("Time", "Zero-crossing", Box::new(|x| time::zero_crossings(x) as f64)),
        ("Time", "Minimum", Box::new(time::min)),
        ("Time", "Maximum", Box::new(time::max)),
        ("Time", "Median", Box::new(time::median)),
        ("Time", "Energy", Box::new(time::energy)),
        ("Time", "Kurtosis", Box::new(|x| time::kurtosis(x).0)),
        (
            "Time",
            "Gradient",
            Box::new(move |x| gradient::gradient_pooling(x, t).map_or(f64::NAN, |p| p[0].s_pos)),
        ),
        (
            "Frequency",
            "Low Freq.",
            Box::new(move |x| spectral::low_freq_features(&spectral::spectrum_of(x, fs), n_low).0[0]),
        ),
        (
            "Frequency",
            "Whole Freq.",
            Box::new(move |x| spectral::whole_freq_features(&spectral::spectrum_of(x, fs), n_bands)[0]),
        ),
    ]
}

/// A PPG-like test signal of `len` samples.
pub fn bench_signal(fs: f64, len: usize) -> Result<Vec<f64>> {
    let mut profile = ClassProfile::new("bench", 80.0, 0.03);
    profile.artefacts_per_min = 0.5;
    let cfg = SynthConfig {
        modality: Modality::Ppg,
        fs,
        duration_s: len as f64 / fs,
        n_patients_per_class: 1,
        classes: vec![profile],
        seed: 2017,
        ..SynthConfig::default()
    };
    let rec = synth::generate_recordings(&cfg, Execution::Sequential)?;
    let mut x = rec[0].waveform.samples().to_vec();
    x.resize(len, 0.0);
    Ok(x)
}

pub fn loglog_slope(lengths: &[usize], times: &[f64]) -> f64 {
    let xs: Vec<f64> = lengths.iter().map(|&l| (l as f64).ln()).collect();
    let ys: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn run(cfg: &BenchConfig, features_cfg: &FeatureConfig) -> Result<BenchReport> {
    cfg.validate()?;
    features_cfg.validate()?;
    let min_sample = Duration::from_secs_f64(cfg.min_sample_ms / 1e3);
    let len = (cfg.duration_s * cfg.fs).round() as usize;
    let x = bench_signal(cfg.fs, len.max(*cfg.sweep_lengths.iter().max().unwrap_or(&0)))?;
    let window_x = &x[..len];
    let fns = feature_fns(cfg.fs, features_cfg);

    let rows = fns
        .iter()
        .map(|(group, feature, f)| FeatureTiming {
            group: group.to_string(),
            feature: feature.to_string(),
            timing: time_it(|| f(window_x), cfg.min_runs, min_sample),
        })
        .collect();

    let extractor = Extractor::new(FeatureConfig {
        include_groups: features::FeatureGroup::ALL.into_iter().collect(),
        ..features_cfg.clone()
    })?;
    let win = Window::new(window_x.to_vec(), cfg.fs, Modality::Ppg, "bench", None)?;
    extractor.extract(&win)?;
    let full_extraction = time_it(|| extractor.extract(&win), cfg.min_runs, min_sample);

    let mut sweep = Vec::new();
    if !cfg.sweep_lengths.is_empty() {
        for (group, feature, f) in &fns {
            let median_ms: Vec<f64> = cfg
                .sweep_lengths
                .iter()
                .map(|&l| time_it(|| f(&x[..l]), cfg.min_runs, min_sample).median_ms)
                .collect();
            sweep.push(SweepSeries {
                group: group.to_string(),
                feature: feature.to_string(),
                slope: loglog_slope(&cfg.sweep_lengths, &median_ms),
                lengths: cfg.sweep_lengths.clone(),
                median_ms,
            });
        }
    }
    Ok(BenchReport {
        fs: cfg.fs,
        signal_len: len,
        rows,
        full_extraction,
        sweep,
        threads: 1,
    })
}

impl BenchReport {
    /// The timing table (median per call) followed by the sweep slopes.
    pub fn table(&self) -> String {
        let mut s = format!(
            "signal: {} samples at {} Hz ({:.1} s)\n\n",
            self.signal_len,
            self.fs,
            self.signal_len as f64 / self.fs
        );
        let _ = writeln!(s, "{:<14}{:<16}{:>18}{:>14}", "Feature group", "Feature", "Elapsed time (ms)", "mean (ms)");
        let mut last = "";
        for r in &self.rows {
            let g = if r.group == last { "" } else { r.group.as_str() };
            last = &r.group;
            let _ = writeln!(s, "{:<14}{:<16}{:>18.4}{:>14.4}", g, r.feature, r.timing.median_ms, r.timing.mean_ms);
        }
        let sum: f64 = self.rows.iter().map(|r| r.timing.median_ms).sum();
        let _ = writeln!(s, "{:<30}{:>18.4}", "Sum of rows", sum);
        let _ = writeln!(
            s,
            "{:<30}{:>18.4}{:>14.4}",
            "Full extraction", self.full_extraction.median_ms, self.full_extraction.mean_ms
        );
        if !self.sweep.is_empty() {
            let _ = writeln!(s, "\nscaling over L = {:?}", self.sweep[0].lengths);
            let _ = writeln!(s, "{:<14}{:<16}{:>10}", "Feature group", "Feature", "slope");
            for r in &self.sweep {
                let _ = writeln!(s, "{:<14}{:<16}{:>10.3}", r.group, r.feature, r.slope);
            }
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| Error::Serialization(e.to_string()))
    }
}
