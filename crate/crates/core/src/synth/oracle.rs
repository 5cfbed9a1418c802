//! Slow reference implementations of the feature definitions.
//!
//! Written straight from the formulas with plain loops and a direct DFT, and
//! independent of the `features` module. Used by the equivalence tests.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureGroup};
use crate::types::{FeatureLayout, FeatureVector, Window};

pub const MAX_LEN: usize = 4096;

fn check_len(len: usize) -> Result<()> {
    if len > MAX_LEN {
        return Err(Error::Data(format!(
            "oracle refuses L = {len} (limit {MAX_LEN})"
        )));
    }
    Ok(())
}

/// |X_k| for k = 0 ..= L/2 from `X_k = Σ x_n e^{-2πi nk/L}`.
pub fn oracle_dft(x: &[f64]) -> Result<Vec<f64>> {
    let l = x.len();
    check_len(l)?;
    let cos: Vec<f64> = (0..l).map(|m| (2.0 * PI * m as f64 / l as f64).cos()).collect();
    let sin: Vec<f64> = (0..l).map(|m| (2.0 * PI * m as f64 / l as f64).sin()).collect();
    let mut out = Vec::with_capacity(l / 2 + 1);
    for k in 0..=l / 2 {
        let (mut re, mut im) = (0.0, 0.0);
        for (n, &v) in x.iter().enumerate() {
            let m = (n * k) % l;
            re += v * cos[m];
            im -= v * sin[m];
        }
        out.push(re.hypot(im));
    }
    Ok(out)
}

/// (min, max, median, mean, std, energy, kurtosis, zero crossings) and the
/// degenerate-kurtosis flag.
pub fn oracle_time_stats(x: &[f64]) -> ([f64; 8], bool) {
    let l = x.len() as f64;
    let mut lo = x[0];
    let mut hi = x[0];
    for &v in x {
        if v < lo {
            lo = v;
        }
        if v > hi {
            hi = v;
        }
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    };
    let mut sum = 0.0;
    for &v in x {
        sum += v;
    }
    let mu = sum / l;
    let mut s2 = 0.0;
    let mut s4 = 0.0;
    let mut energy = 0.0;
    for &v in x {
        let d = v - mu;
        s2 += d * d;
        s4 += d * d * d * d;
        energy += v * v;
    }
    let degenerate = lo == hi;
    let (mean, std, kurt) = if degenerate {
        (lo, 0.0, 0.0)
    } else {
        (mu, (s2 / l).sqrt(), l * s4 / (s2 * s2))
    };
    let mut zc = 0usize;
    for n in 0..x.len() - 1 {
        if x[n] * x[n + 1] < 0.0 {
            zc += 1;
        }
    }
    ([lo, hi, median, mean, std, energy, kurt, zc as f64], degenerate)
}

/// Per chunk `[h⁺, h⁻, s⁺, s⁻]`, chunk-major.
pub fn oracle_gradient_pooling(x: &[f64], t: usize) -> Result<Vec<f64>> {
    check_len(x.len())?;
    if t == 0 {
        return Err(Error::Config("temporal resolution must be >= 1".into()));
    }
    let l = x.len();
    let mut out = Vec::new();
    let mut start = 0;
    for c in 0..t {
        let len = l / t + usize::from(c < l % t);
        if len < 2 {
            return Err(Error::Config(format!("chunk {c} has {len} sample(s)")));
        }
        let chunk = &x[start..start + len];
        let (mut hp, mut hn, mut sp, mut sn) = (0.0, 0.0, 0.0, 0.0);
        for n in 0..len - 1 {
            let g = chunk[n + 1] - chunk[n];
            if g >= 0.0 {
                hp += 1.0;
                sp += g;
            } else {
                hn += 1.0;
                sn += g;
            }
        }
        out.extend([hp, hn, sp, sn]);
        start += len;
    }
    Ok(out)
}

/// Band sums over 1-based indices c with σ_i ≤ c < σ_f, the last band closed
/// at L/2 + 1, using `σ_i = 1 + (j−1)L/(2N_b)` and `σ_f = 1 + jL/(2N_b)`.
pub fn oracle_band_sums(mags: &[f64], l: usize, nb: usize) -> Vec<f64> {
    let mut out = vec![0.0; nb];
    for (j, band) in out.iter_mut().enumerate() {
        let j = j + 1;
        for (i, &m) in mags.iter().enumerate() {
            let c = i + 1;
            // c ≥ σ_i  ⇔  2N_b(c − 1) ≥ (j − 1)L, and likewise for σ_f.
            let above = 2 * nb * (c - 1) >= (j - 1) * l;
            let below = j == nb || 2 * nb * (c - 1) < j * l;
            if above && below {
                *band += m;
            }
        }
    }
    out
}

fn oracle_layout(cfg: &FeatureConfig) -> FeatureLayout {
    let mut l = FeatureLayout::new();
    let has = |g| cfg.include_groups.contains(&g);
    if has(FeatureGroup::Time) {
        for n in ["min", "max", "median", "mean", "std", "energy", "kurtosis", "zero_crossing"] {
            l.push("time", n, 1);
        }
    }
    if has(FeatureGroup::Gradient) {
        for c in 0..cfg.temporal_resolution {
            for q in ["h_pos", "h_neg", "s_pos", "s_neg"] {
                l.push("gradient", &format!("c{c}_{q}"), 1);
            }
        }
    }
    if has(FeatureGroup::LowFreq) {
        l.push("lowfreq", "magnitude", cfg.n_low);
    }
    if has(FeatureGroup::WholeFreq) {
        l.push("wholefreq", "band_sum", cfg.n_bands);
    }
    l
}

pub fn oracle_features(win: &Window, cfg: &FeatureConfig) -> Result<FeatureVector> {
    let x = win.samples();
    check_len(x.len())?;
    let has = |g| cfg.include_groups.contains(&g);
    let mut values = Vec::new();
    if has(FeatureGroup::Time) {
        values.extend(oracle_time_stats(x).0);
    }
    if has(FeatureGroup::Gradient) {
        values.extend(oracle_gradient_pooling(x, cfg.temporal_resolution)?);
    }
    let mags = oracle_dft(x)?;
    if has(FeatureGroup::LowFreq) {
        for c in 0..cfg.n_low {
            values.push(mags.get(c).copied().unwrap_or(0.0));
        }
    }
    if has(FeatureGroup::WholeFreq) {
        values.extend(oracle_band_sums(&mags, x.len(), cfg.n_bands));
    }
    FeatureVector::new(
        values,
        Arc::new(oracle_layout(cfg)),
        win.label().map(str::to_owned),
        win.patient_id(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dft_of_constant() {
        let m = oracle_dft(&[1.0; 8]).unwrap();
        assert_eq!(m.len(), 5);
        assert_eq!(m[0], 8.0);
        assert!(m[1..].iter().all(|v| v.abs() < 1e-12), "{m:?}");
        assert!(oracle_dft(&vec![0.0; MAX_LEN + 1]).is_err());
    }

    #[test]
    fn pooling_hand_example() {
        let p = oracle_gradient_pooling(&[1.0, 3.0, 2.0, 2.0, 0.0, 5.0], 2).unwrap();
        assert_eq!(p, vec![1.0, 1.0, 2.0, -1.0, 1.0, 1.0, 5.0, -2.0]);
        assert_eq!(oracle_gradient_pooling(&[0.0; 3], 1).unwrap(), vec![2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn time_stats_hand_example() {
        let (s, flag) = oracle_time_stats(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s[..4], [1.0, 4.0, 2.5, 2.5]);
        assert!((s[4] - 1.25f64.sqrt()).abs() < 1e-15);
        assert_eq!(s[5], 30.0);
        assert!((s[6] - 1.64).abs() < 1e-12);
        assert!(!flag);
    }

    #[test]
    fn band_bounds_for_64_samples() {
        // L = 64, N_b = 4: bands of 8 bins, the last one closed at index 33.
        let mags: Vec<f64> = (0..33).map(|i| (1u64 << (i % 20)) as f64).collect();
        let b = oracle_band_sums(&mags, 64, 4);
        let want: Vec<f64> = [0..8, 8..16, 16..24, 24..33]
            .into_iter()
            .map(|r| mags[r].iter().sum())
            .collect();
        assert_eq!(b, want);
    }
}
