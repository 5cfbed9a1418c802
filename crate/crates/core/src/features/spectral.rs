//! One-sided FFT magnitudes, low-frequency coefficients and binned band sums.

use std::cell::RefCell;
use std::ops::Range;

use realfft::num_complex::Complex;
use realfft::RealFftPlanner;

use crate::types::Window;

/// Per-thread planner plus reusable input, output and scratch buffers, so
/// repeated transforms of large windows do not fault in fresh pages.
struct FftState {
    planner: RealFftPlanner<f64>,
    input: Vec<f64>,
    output: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

thread_local! {
    static FFT: RefCell<FftState> = RefCell::new(FftState {
        planner: RealFftPlanner::new(),
        input: Vec::new(),
        output: Vec::new(),
        scratch: Vec::new(),
    });
}

/// One-sided magnitude spectrum; index 0 is DC, the last index is Nyquist
/// (or just below it for odd `L`).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumView {
    magnitudes: Vec<f64>,
    len: usize,
    fs: f64,
}

impl SpectrumView {
    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    /// Length of the source window.
    pub fn source_len(&self) -> usize {
        self.len
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    /// Frequency in Hz of magnitude index `i` (0-based).
    pub fn frequency(&self, i: usize) -> f64 {
        i as f64 * self.fs / self.len as f64
    }
}

pub fn one_sided_len(len: usize) -> usize {
    len / 2 + 1
}

/// Magnitudes of the untapered DFT of `x`.
pub fn spectrum_of(x: &[f64], fs: f64) -> SpectrumView {
    let n = x.len();
    let magnitudes = FFT.with(|st| {
        let st = &mut *st.borrow_mut();
        let fft = st.planner.plan_fft_forward(n);
        st.input.clear();
        st.input.extend_from_slice(x);
        st.output.resize(one_sided_len(n), Complex::default());
        st.scratch.resize(fft.get_scratch_len(), Complex::default());
        fft.process_with_scratch(&mut st.input, &mut st.output, &mut st.scratch)
            .expect("buffer lengths match the plan");
        st.output.iter().map(|c| c.norm()).collect()
    });
    SpectrumView {
        magnitudes,
        len: n,
        fs,
    }
}

pub fn spectrum(win: &Window) -> SpectrumView {
    spectrum_of(win.samples(), win.fs())
}

/// First `n_low` magnitudes including DC, zero-padded when the spectrum is
/// shorter. The flag reports padding.
pub fn low_freq_features(sp: &SpectrumView, n_low: usize) -> (Vec<f64>, bool) {
    let m = sp.magnitudes.len();
    let mut out = Vec::with_capacity(n_low);
    out.extend_from_slice(&sp.magnitudes[..n_low.min(m)]);
    out.resize(n_low, 0.0);
    (out, n_low > m)
}

fn ceil_div(a: u128, b: u128) -> usize {
    a.div_ceil(b) as usize
}

/// Magnitude index ranges (0-based) for each of the `n_bands` bins.
///
/// Bin `j` (1-based) starts at `ceil(1 + (j-1)·L/(2·N_b))`, interior bins are
/// half-open at `ceil(1 + j·L/(2·N_b))`, and the last bin closes at Nyquist.
/// The ranges partition `0..floor(L/2)+1` exactly; some may be empty.
pub fn band_ranges(len: usize, n_bands: usize) -> Vec<Range<usize>> {
    let m = one_sided_len(len);
    let denom = 2 * n_bands as u128;
    (1..=n_bands)
        .map(|j| {
            let lo = ceil_div((j as u128 - 1) * len as u128, denom).min(m);
            let hi = if j == n_bands {
                m
            } else {
                ceil_div(j as u128 * len as u128, denom).min(m)
            };
            lo..hi.max(lo)
        })
        .collect()
}

pub fn whole_freq_features(sp: &SpectrumView, n_bands: usize) -> Vec<f64> {
    band_ranges(sp.len, n_bands)
        .into_iter()
        .map(|r| sp.magnitudes[r].iter().sum())
        .collect()
}
