//! Per-stream symbol alphabets with Gray labels.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstellationError {
    #[error("expected {expected} bits, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite sample {0}")]
    InvalidInput(Complex64),
    #[error("bit value {0} is not 0 or 1")]
    Bit(u8),
    #[error("unknown modulation `{0}` (expected qpsk or 16qam)")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modulation {
    #[serde(rename = "qpsk")]
    Qpsk,
    #[serde(rename = "16qam")]
    Qam16,
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "16qam",
        })
    }
}

impl FromStr for Modulation {
    type Err = ConstellationError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "qpsk" => Ok(Modulation::Qpsk),
            "16qam" | "qam16" => Ok(Modulation::Qam16),
            other => Err(ConstellationError::UnknownKind(other.to_string())),
        }
    }
}

/// Symbol alphabet with unit average energy.
///
/// `labels[k]` is the Gray label of point `k`, most significant bit first
/// in the transmitted bit order.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    kind: Modulation,
    points: Vec<Complex64>,
    bits_per_symbol: usize,
    labels: Vec<u32>,
    index_of_label: Vec<usize>,
    // Per-axis amplitude levels (ascending) for the fast slicer.
    axis_levels: Vec<f64>,
}

/// Gray code for a per-axis level index: levels ascending in amplitude.
fn gray(i: u32) -> u32 {
    i ^ (i >> 1)
}

impl Constellation {
    pub fn new(kind: Modulation) -> Self {
        match kind {
            Modulation::Qpsk => {
                // Labels: first bit selects the sign of the real part,
                // second bit the sign of the imaginary part (0 = positive).
                let a = FRAC_1_SQRT_2;
                let points = vec![
                    Complex64::new(a, a),
                    Complex64::new(-a, a),
                    Complex64::new(-a, -a),
                    Complex64::new(a, -a),
                ];
                let labels = vec![0b00, 0b10, 0b11, 0b01];
                Self::assemble(kind, points, 2, labels, vec![-a, a])
            }
            Modulation::Qam16 => {
                let s = 1.0 / 10f64.sqrt();
                let levels = [-3.0 * s, -s, s, 3.0 * s];
                let mut points = Vec::with_capacity(16);
                let mut labels = Vec::with_capacity(16);
                for (ir, re) in levels.iter().enumerate() {
                    for (ii, im) in levels.iter().enumerate() {
                        points.push(Complex64::new(*re, *im));
                        labels.push((gray(ir as u32) << 2) | gray(ii as u32));
                    }
                }
                Self::assemble(kind, points, 4, labels, levels.to_vec())
            }
        }
    }

    fn assemble(
        kind: Modulation,
        points: Vec<Complex64>,
        bits_per_symbol: usize,
        labels: Vec<u32>,
        axis_levels: Vec<f64>,
    ) -> Self {
        let mut index_of_label = vec![0; points.len()];
        for (k, &l) in labels.iter().enumerate() {
            index_of_label[l as usize] = k;
        }
        Self { kind, points, bits_per_symbol, labels, index_of_label, axis_levels }
    }

    pub fn kind(&self) -> Modulation {
        self.kind
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, k: usize) -> Complex64 {
        self.points[k]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn label(&self, k: usize) -> u32 {
        self.labels[k]
    }

    pub fn index_of_label(&self, label: u32) -> usize {
        self.index_of_label[label as usize]
    }

    pub fn mean_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.len() as f64
    }

    /// Maps `n_streams × bits_per_symbol` bits (each 0 or 1) to point indices.
    pub fn map_bits(&self, bits: &[u8], n_streams: usize) -> Result<Vec<usize>, ConstellationError> {
        let k = self.bits_per_symbol;
        if bits.len() != n_streams * k {
            return Err(ConstellationError::Shape { expected: n_streams * k, got: bits.len() });
        }
        bits.chunks(k)
            .map(|chunk| {
                let mut label = 0u32;
                for &b in chunk {
                    if b > 1 {
                        return Err(ConstellationError::Bit(b));
                    }
                    label = (label << 1) | b as u32;
                }
                Ok(self.index_of_label(label))
            })
            .collect()
    }

    pub fn map_bits_to_points(&self, bits: &[u8], n_streams: usize) -> Result<Vec<Complex64>, ConstellationError> {
        Ok(self.map_bits(bits, n_streams)?.into_iter().map(|k| self.points[k]).collect())
    }

    pub fn demap_bits(&self, indices: &[usize]) -> Vec<u8> {
        let k = self.bits_per_symbol;
        let mut out = Vec::with_capacity(indices.len() * k);
        for &idx in indices {
            let label = self.labels[idx];
            for b in (0..k).rev() {
                out.push(((label >> b) & 1) as u8);
            }
        }
        out
    }

    /// Number of differing label bits between two point indices.
    pub fn bit_distance(&self, a: usize, b: usize) -> u32 {
        (self.labels[a] ^ self.labels[b]).count_ones()
    }

    /// Index of a minimum-distance point; ties go to the lowest index.
    pub fn slice(&self, z: Complex64) -> Result<usize, ConstellationError> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(ConstellationError::InvalidInput(z));
        }
        Ok(self.slice_unchecked(z))
    }

    /// Exhaustive minimum-distance search.
    pub fn slice_exhaustive(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }

    /// Per-axis decision on the square grid, falling back to the exhaustive
    /// search when a coordinate lies exactly on a decision boundary so the
    /// lowest-index tie rule holds. The input must be finite.
    #[inline]
    pub fn slice_unchecked(&self, z: Complex64) -> usize {
        let levels = &self.axis_levels;
        let axis = |x: f64| -> Option<usize> {
            let mut i = 0;
            for w in levels.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                if x == mid {
                    return None;
                }
                if x > mid {
                    i += 1;
                }
            }
            Some(i)
        };
        match (axis(z.re), axis(z.im)) {
            (Some(ir), Some(ii)) => match self.kind {
                Modulation::Qpsk => match (ir, ii) {
                    (1, 1) => 0,
                    (0, 1) => 1,
                    (0, 0) => 2,
                    _ => 3,
                },
                Modulation::Qam16 => ir * 4 + ii,
            },
            _ => self.slice_exhaustive(z),
        }
    }

    /// True when multiplying every point by `j` permutes the alphabet.
    pub fn quarter_turn_invariant(&self) -> bool {
        let j = Complex64::new(0.0, 1.0);
        self.points.iter().all(|p| {
            let q = p * j;
            self.points.iter().any(|r| (r - q).norm() < 1e-12)
        })
    }
}

/// Decodes input-vector index `x` into per-stream point indices.
/// Stream 0 is the most significant digit.
pub fn input_digits(x: usize, alphabet: usize, n: usize, out: &mut [usize]) {
    let mut v = x;
    for k in (0..n).rev() {
        out[k] = v % alphabet;
        v /= alphabet;
    }
}

/// Inverse of [`input_digits`].
pub fn input_index(digits: &[usize], alphabet: usize) -> usize {
    digits.iter().fold(0, |acc, &d| acc * alphabet + d)
}
