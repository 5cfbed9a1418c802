//! Severity classification of physiological waveforms from morphology-free
//! time- and frequency-domain features.
//!
//! The pipeline is preprocess → segment → extract → classify:
//!
//! * [`preprocess`]: zero-phase Butterworth high-pass, then Gaussian smoothing.
//! * [`segment`]: fixed-duration labelled windows.
//! * [`features`]: time statistics, gradient pooling, low-frequency FFT
//!   magnitudes and binned whole-spectrum sums, concatenated per window and
//!   optionally fused across modalities.
//! * [`svm`]: linear / Gaussian kernel SVM trained with SMO, one-vs-all for
//!   more than two classes.
//! * [`eval`]: confusion matrices, macro-averaged metrics and the repeated
//!   80/20 holdout harness.
//!
//! [`io`] and [`synth`] handle datasets on disk and synthetic corpora;
//! [`pipeline`] wires everything into the commands exposed by the CLI and
//! [`bench`] times individual features.

pub mod bench;
pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod par;
pub mod pipeline;
pub mod preprocess;
pub mod segment;
pub mod svm;
pub mod synth;
pub mod types;

pub use error::{Error, ErrorKind, Result};
pub use par::Execution;
pub use types::{FeatureLayout, FeatureVector, Modality, SeverityLabel, Waveform, Window};
