//! Seeded Monte Carlo BER engine.
//!
//! Frames are produced in fixed-size batches. Batch `b` of sweep point `p`
//! draws from a ChaCha8 stream keyed by `(seed, p)` with stream number `b`,
//! so its content does not depend on how batches are spread over workers.
//! Batches run in parallel in fixed groups and are merged in batch order;
//! early stopping is only checked between groups.

use super::HarnessError;
use crate::channel::{self, PhiPolicy};
use crate::constellation::Constellation;
use crate::detection::{self, DetectionContext, VqDetector};
use crate::quantizer::{Quantizer, VirtualQuantizer};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

pub const BATCH_FRAMES: u64 = 1024;
pub const GROUP_BATCHES: u64 = 16;
/// Largest `n · T · |𝒮|ⁿ` for which ML uses a precomputed log table.
const ML_TABLE_LIMIT: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Ml,
    Zf,
    Vq,
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectorKind::Ml => "ml",
            DetectorKind::Zf => "zf",
            DetectorKind::Vq => "vq",
        })
    }
}

impl FromStr for DetectorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ml" => Ok(DetectorKind::Ml),
            "zf" => Ok(DetectorKind::Zf),
            "vq" => Ok(DetectorKind::Vq),
            other => Err(format!("unknown detector `{other}` (expected ml, zf or vq)")),
        }
    }
}

/// Stop a detector once it has at least `min_errors` bit errors over at
/// least `min_frames` frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStop {
    pub min_errors: u64,
    pub min_frames: u64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self { min_errors: 200, min_frames: 10_000 }
    }
}

/// One BER operating point.
#[derive(Debug, Clone)]
pub struct BerPoint<'a> {
    pub n: usize,
    pub theta: f64,
    pub sigma2: f64,
    pub phi: PhiPolicy,
    pub constellation: &'a Constellation,
    /// Physical quantizer with centroid codebook.
    pub quantizer: &'a Quantizer,
    /// Required when `detectors` contains [`DetectorKind::Vq`].
    pub virtual_q: Option<&'a VirtualQuantizer>,
    pub detectors: Vec<DetectorKind>,
    pub frames: u64,
    pub early_stop: Option<EarlyStop>,
    pub seed: u64,
    /// Index of the point within its sweep; keys the random stream.
    pub stream: u64,
    pub allow_large_ml: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BerTally {
    pub detector: DetectorKind,
    pub frames: u64,
    pub bit_errors: u64,
    pub bits: u64,
}

impl BerTally {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            return 0.0;
        }
        self.bit_errors as f64 / self.bits as f64
    }

    /// Binomial standard error `√(p(1−p)/bits)`.
    pub fn stderr(&self) -> f64 {
        if self.bits == 0 {
            return 0.0;
        }
        let p = self.ber();
        (p * (1.0 - p) / self.bits as f64).sqrt()
    }
}

fn point_rng(seed: u64, stream: u64, batch: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(batch);
    rng
}

/// Runs every requested detector on a common frame stream.
pub fn simulate_ber(point: &BerPoint) -> Result<Vec<BerTally>, HarnessError> {
    if point.detectors.contains(&DetectorKind::Vq) && point.virtual_q.is_none() {
        return Err(HarnessError::Config("vq detector needs a virtual quantizer".into()));
    }
    channel::NoiseSpec::new(point.sigma2).map_err(|e| HarnessError::Config(e.to_string()))?;
    let h = channel::los_channel(point.n, point.theta, 0.0).map_err(|e| HarnessError::Config(e.to_string()))?;
    // Validate the context once so configuration errors surface before the run.
    DetectionContext::new(&h, point.constellation, point.quantizer, point.sigma2)?;

    let k = point.detectors.len();
    let bits_per_frame = (point.n * point.constellation.bits_per_symbol()) as u64;
    let mut tallies: Vec<BerTally> = point
        .detectors
        .iter()
        .map(|&d| BerTally { detector: d, frames: 0, bit_errors: 0, bits: 0 })
        .collect();
    let mut active = vec![true; k];
    let total_batches = point.frames.div_ceil(BATCH_FRAMES);
    let mut next = 0;
    while next < total_batches && active.iter().any(|a| *a) {
        let end = (next + GROUP_BATCHES).min(total_batches);
        let results = (next..end)
            .into_par_iter()
            .map(|b| {
                let frames = BATCH_FRAMES.min(point.frames - b * BATCH_FRAMES);
                run_batch(point, b, frames, &active)
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        for (frames, errors) in results {
            for d in 0..k {
                if active[d] {
                    tallies[d].frames += frames;
                    tallies[d].bit_errors += errors[d];
                    tallies[d].bits += frames * bits_per_frame;
                }
            }
        }
        if let Some(stop) = point.early_stop {
            for d in 0..k {
                if tallies[d].bit_errors >= stop.min_errors && tallies[d].frames >= stop.min_frames {
                    active[d] = false;
                }
            }
        }
        next = end;
    }
    Ok(tallies)
}

fn run_batch(point: &BerPoint, batch: u64, frames: u64, active: &[bool]) -> Result<(u64, Vec<u64>), HarnessError> {
    let c = point.constellation;
    let q = point.quantizer;
    let n = point.n;
    let mut rng = point_rng(point.seed, point.stream, batch);
    let h = channel::los_channel(n, point.theta, 0.0).map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut ctx = DetectionContext::new(&h, c, q, point.sigma2)?.allow_large_ml(point.allow_large_ml);
    let grid = match point.phi {
        PhiPolicy::Grid(_) => point.phi.grid(),
        _ => Vec::new(),
    };
    let wants_ml = point.detectors.iter().zip(active).any(|(d, a)| *a && *d == DetectorKind::Ml);
    if let PhiPolicy::Fixed(phi) = point.phi {
        ctx.set_phi(phi);
        if wants_ml && n * q.bin_count() * ctx.inputs() <= ML_TABLE_LIMIT {
            ctx = ctx.with_ml_table()?;
        }
    }
    let mut vq_det = VqDetector::new(ctx.inputs(), n);
    let mut errors = vec![0u64; point.detectors.len()];
    let mask = (1u32 << c.bits_per_symbol()) - 1;
    let mut sent = vec![0usize; n];
    let mut sym = vec![Complex64::new(0.0, 0.0); n];
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    let mut yq = vec![0usize; n];
    for f in 0..frames {
        match point.phi {
            PhiPolicy::Fixed(_) => {}
            PhiPolicy::Uniform => ctx.set_phi(rng.random::<f64>() * TAU),
            PhiPolicy::Grid(_) => ctx.set_phi(grid[((batch * BATCH_FRAMES + f) % grid.len() as u64) as usize]),
        }
        for s in 0..n {
            sent[s] = c.index_of_label(rng.random::<u32>() & mask);
            sym[s] = c.point(sent[s]);
        }
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for s in 0..n {
                acc += h.entry(i, s) * sym[s];
            }
            *yi = acc * Complex64::from_polar(1.0, -ctx.phi()) + channel::complex_noise(&mut rng, point.sigma2);
        }
        for (b, v) in yq.iter_mut().zip(&y) {
            *b = q.bin(*v);
        }
        for (d, kind) in point.detectors.iter().enumerate() {
            if !active[d] {
                continue;
            }
            let decided = match kind {
                DetectorKind::Ml => detection::ml_detect(&yq, &ctx)?,
                DetectorKind::Zf => detection::zf_detect(&yq, &ctx)?,
                DetectorKind::Vq => vq_det.detect(&yq, &ctx, point.virtual_q.expect("checked above"))?.0,
            };
            errors[d] += sent.iter().zip(&decided).map(|(a, b)| c.bit_distance(*a, *b) as u64).sum::<u64>();
        }
    }
    Ok((frames, errors))
}
