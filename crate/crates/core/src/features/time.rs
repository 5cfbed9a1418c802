//! Non-gradient time-domain statistics.
//!
//! Each statistic is exposed on its own so the benchmark can time them
//! individually; [`time_stats`] computes all eight with shared passes.

use crate::types::Window;

pub const NAMES: [&str; 8] = [
    "min",
    "max",
    "median",
    "mean",
    "std",
    "energy",
    "kurtosis",
    "zero_crossing",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeStats {
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub energy: f64,
    /// Non-excess kurtosis, `L·Σ(x-μ)⁴ / (Σ(x-μ)²)²`.
    pub kurtosis: f64,
    pub zero_crossing: f64,
    /// Constant input: kurtosis undefined and reported as 0.
    pub kurtosis_degenerate: bool,
}

impl TimeStats {
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.min,
            self.max,
            self.median,
            self.mean,
            self.std,
            self.energy,
            self.kurtosis,
            self.zero_crossing,
        ]
    }
}

pub fn min(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn max(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Median via selection; mean of the two central order statistics for even `L`.
pub fn median(x: &[f64]) -> f64 {
    let mut buf = x.to_vec();
    median_in_place(&mut buf)
}

fn median_in_place(buf: &mut [f64]) -> f64 {
    let n = buf.len();
    let mid = n / 2;
    let (lower, upper, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lower + upper) / 2.0
    }
}

pub fn std(x: &[f64]) -> f64 {
    let mu = mean(x);
    (x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Returns `(kurtosis, degenerate)`.
pub fn kurtosis(x: &[f64]) -> (f64, bool) {
    let mu = mean(x);
    let (m2, m4) = central_moments(x, mu);
    kurtosis_from(x.len(), m2, m4, min(x) == max(x))
}

fn central_moments(x: &[f64], mu: f64) -> (f64, f64) {
    x.iter().fold((0.0, 0.0), |(m2, m4), v| {
        let d = v - mu;
        let d2 = d * d;
        (m2 + d2, m4 + d2 * d2)
    })
}

fn kurtosis_from(n: usize, m2: f64, m4: f64, constant: bool) -> (f64, bool) {
    if constant || m2 == 0.0 {
        (0.0, true)
    } else {
        (n as f64 * m4 / (m2 * m2), false)
    }
}

/// Adjacent pairs with a strict sign change; exact zeros never count.
pub fn zero_crossings(x: &[f64]) -> usize {
    x.windows(2).filter(|p| p[0] * p[1] < 0.0).count()
}

pub fn time_stats(win: &Window) -> TimeStats {
    time_stats_of(win.samples())
}

pub fn time_stats_of(x: &[f64]) -> TimeStats {
    let n = x.len();
    let (mut lo, mut hi, mut sum, mut energy) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0.0);
    for &v in x {
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
        energy += v * v;
    }
    let constant = lo == hi;
    let mean = if constant { lo } else { sum / n as f64 };
    let (m2, m4) = if constant { (0.0, 0.0) } else { central_moments(x, mean) };
    let (kurtosis, kurtosis_degenerate) = kurtosis_from(n, m2, m4, constant);
    TimeStats {
        min: lo,
        max: hi,
        median: median(x),
        mean,
        std: (m2 / n as f64).sqrt(),
        energy,
        kurtosis,
        zero_crossing: zero_crossings(x) as f64,
        kurtosis_degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_to_four() {
        let s = time_stats_of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 4.0);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - 1.25f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.energy, 30.0);
        // Σd⁴ = 2·(1.5⁴ + 0.5⁴) = 10.25, Σd² = 5.
        assert!((s.kurtosis - 4.0 * 10.25 / 25.0).abs() < 1e-15);
        assert!((s.kurtosis - 1.64).abs() < 1e-12);
        assert_eq!(s.zero_crossing, 0.0);
        assert!(!s.kurtosis_degenerate);
    }

    #[test]
    fn constant_window() {
        for c in [0.0, 0.1, -7.25] {
            let x = vec![c; 33];
            let s = time_stats_of(&x);
            assert_eq!(s.std, 0.0);
            assert_eq!(s.kurtosis, 0.0);
            assert!(s.kurtosis_degenerate);
            assert_eq!(s.zero_crossing, 0.0);
            assert_eq!(s.mean, c);
            assert!((s.energy - 33.0 * c * c).abs() <= 1e-12 * (1.0 + c * c));
            assert_eq!(kurtosis(&x), (0.0, true));
        }
    }

    #[test]
    fn zero_crossing_is_strict() {
        assert_eq!(zero_crossings(&[1.0, -1.0, 1.0]), 2);
        assert_eq!(zero_crossings(&[1.0, 0.0, -1.0]), 0);
        assert_eq!(zero_crossings(&[0.0, 0.0, 0.0]), 0);
    }

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&[5.0, 1.0, 3.0]), 3.0);
        assert_eq!(median(&[5.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&[-1.0, -1.0]), -1.0);
    }

    #[test]
    fn individual_functions_agree_with_batch() {
        let x: Vec<f64> = (0..101).map(|i| ((i * 37) % 17) as f64 - 8.3).collect();
        let s = time_stats_of(&x);
        assert_eq!(s.min, min(&x));
        assert_eq!(s.max, max(&x));
        assert_eq!(s.median, median(&x));
        assert_eq!(s.mean, mean(&x));
        assert_eq!(s.std, std(&x));
        assert_eq!(s.energy, energy(&x));
        assert_eq!(s.kurtosis, kurtosis(&x).0);
        assert_eq!(s.zero_crossing, zero_crossings(&x) as f64);
    }
}
