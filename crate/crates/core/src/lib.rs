//! Line-of-sight MIMO links with low-precision analog-to-digital conversion.
//!
//! The crate is organised bottom-up:
//!
//! - [`stats`]: Gaussian kernels and cell probabilities/centroids.
//! - [`constellation`]: QPSK/16QAM alphabets with Gray labels and slicing.
//! - [`channel`]: LoS geometry, channel matrices and the AWGN model.
//! - [`quantizer`]: phase-only, amplitude/phase and I/Q quantizers, their
//!   equal-probability and Lloyd-Max designs, and virtual refinements.
//! - [`infotheory`]: transition tables and quantized/unquantized mutual
//!   information, plus noiseless confusability analysis.
//! - [`detection`]: quantized ML, centroid zero-forcing and the
//!   virtual-quantization detector.
//! - [`harness`]: sweep configuration, the seeded Monte Carlo engine and
//!   CSV/JSON output.

pub mod channel;
pub mod constellation;
pub mod detection;
pub mod harness;
pub mod infotheory;
pub mod linalg;
pub mod quantizer;
pub mod stats;
