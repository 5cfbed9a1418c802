//! First differences and count/sum pooling over temporal chunks.

use std::ops::Range;

use crate::error::{Error, Result};

pub const QUANTITIES: [&str; 4] = ["h_pos", "h_neg", "s_pos", "s_neg"];

pub fn gradient(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|p| p[1] - p[0]).collect()
}

/// Pooled gradient statistics of one chunk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientPool {
    /// Non-negative gradients (zero counts as positive).
    pub h_pos: f64,
    pub h_neg: f64,
    pub s_pos: f64,
    /// Signed sum of negative gradients, always `<= 0`.
    pub s_neg: f64,
}

impl GradientPool {
    pub fn to_array(&self) -> [f64; 4] {
        [self.h_pos, self.h_neg, self.s_pos, self.s_neg]
    }
}

/// `T` contiguous chunks; the first `L mod T` are one sample longer.
pub fn chunk_ranges(len: usize, chunks: usize) -> Result<Vec<Range<usize>>> {
    if chunks == 0 {
        return Err(Error::Config("temporal resolution must be >= 1".into()));
    }
    let base = len / chunks;
    if base < 2 {
        return Err(Error::Config(format!(
            "temporal resolution {chunks} leaves chunks under 2 samples for a {len}-sample window"
        )));
    }
    let extra = len % chunks;
    let mut start = 0;
    Ok((0..chunks)
        .map(|k| {
            let end = start + base + usize::from(k < extra);
            let r = start..end;
            start = end;
            r
        })
        .collect())
}

/// Compensated running sum; each step's rounding error comes from a
/// branch-free TwoSum.
#[derive(Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        let vv = t - self.sum;
        self.comp += (self.sum - (t - vv)) + (v - vv);
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

/// Pool one chunk. Gradients never straddle chunk boundaries.
/// Branch-free: the cost per sample does not depend on the slope pattern.
pub fn pool_chunk(x: &[f64]) -> GradientPool {
    let mut h_pos = 0usize;
    let mut s_pos = CompensatedSum::default();
    let mut s_neg = CompensatedSum::default();
    for p in x.windows(2) {
        let d = p[1] - p[0];
        let pos = d >= 0.0;
        h_pos += usize::from(pos);
        s_pos.add(if pos { d } else { 0.0 });
        s_neg.add(if pos { 0.0 } else { d });
    }
    let count = x.len().saturating_sub(1);
    GradientPool {
        h_pos: h_pos as f64,
        h_neg: (count - h_pos) as f64,
        s_pos: s_pos.value(),
        s_neg: s_neg.value(),
    }
}

/// Chunk-major pooled features, `4·T` values.
pub fn gradient_pooling(x: &[f64], temporal_resolution: usize) -> Result<Vec<GradientPool>> {
    Ok(chunk_ranges(x.len(), temporal_resolution)?
        .into_iter()
        .map(|r| pool_chunk(&x[r]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_differences() {
        assert_eq!(gradient(&[1.0, 3.0, 2.0]), [2.0, -1.0]);
        assert!(gradient(&[4.0; 5]).iter().all(|&d| d == 0.0));
        let ramp: Vec<f64> = (0..10).map(|i| 0.5 * i as f64).collect();
        assert!(gradient(&ramp).iter().all(|&d| d == 0.5));
    }

    #[test]
    fn flat_counts_positive() {
        let p = gradient_pooling(&[0.0, 0.0, 0.0], 1).unwrap();
        assert_eq!(p[0].to_array(), [2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn increasing_signal() {
        let x: Vec<f64> = (0..57).map(|i| (i as f64).powf(1.3)).collect();
        let p = gradient_pooling(&x, 1).unwrap();
        assert_eq!(p[0].h_pos, 56.0);
        assert_eq!(p[0].h_neg, 0.0);
    }

    #[test]
    fn two_chunks_worked_example() {
        let p = gradient_pooling(&[1.0, 3.0, 2.0, 2.0, 0.0, 5.0], 2).unwrap();
        assert_eq!(p[0].to_array(), [1.0, 1.0, 2.0, -1.0]);
        assert_eq!(p[1].to_array(), [1.0, 1.0, 5.0, -2.0]);
    }

    #[test]
    fn chunk_layout() {
        let r = chunk_ranges(11, 3).unwrap();
        assert_eq!(r, [0..4, 4..8, 8..11]);
        assert!(chunk_ranges(5, 3).is_err());
        assert!(chunk_ranges(3, 2).is_err());
        assert!(chunk_ranges(4, 2).is_ok());
        assert!(chunk_ranges(10, 0).is_err());
    }

    proptest! {
        #[test]
        fn telescoping_identities(
            x in prop::collection::vec(-100.0f64..100.0, 2..600),
            t in 1usize..6,
        ) {
            prop_assume!(x.len() / t >= 2);
            let ranges = chunk_ranges(x.len(), t).unwrap();
            let pools = gradient_pooling(&x, t).unwrap();
            for (r, p) in ranges.iter().zip(&pools) {
                prop_assert_eq!(p.h_pos + p.h_neg, (r.len() - 1) as f64);
                let tele = x[r.end - 1] - x[r.start];
                // Amplitudes are O(100), so 1e-12 relative to that scale.
                prop_assert!((p.s_pos + p.s_neg - tele).abs() <= 1e-10);
                prop_assert!(p.s_neg <= 0.0 && p.s_pos >= 0.0);
            }
        }
    }
}
