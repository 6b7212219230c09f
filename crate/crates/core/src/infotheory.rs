//! Mutual information of the quantized and unquantized LoS channel, and the
//! noiseless confusability analysis behind the high-SNR limits.

use crate::channel::{self, ChannelError, ChannelMatrix, PhiPolicy};
use crate::constellation::{input_digits, Constellation};
use crate::quantizer::{Family, Quantizer, QuantizerError};
use crate::stats::{self, Cell, StatsError};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::f64::consts::LN_2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfoError {
    #[error("exact enumeration needs {inputs} x {outputs} terms and Monte Carlo fallback is disabled")]
    Infeasible { inputs: usize, outputs: f64 },
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("input enumeration too large: {0} vectors")]
    TooManyInputs(usize),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Largest `|𝒮|ⁿ · Tⁿ` evaluated by exact enumeration.
pub const ENUMERATION_LIMIT: f64 = (1u64 << 26) as f64;
/// Minimum sample count for the unquantized Monte Carlo estimator.
pub const MIN_UNQUANTIZED_SAMPLES: usize = 100_000;
/// Floor applied to bin probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-300;
const CHUNK: usize = 1024;

/// Per-antenna bin probabilities `P[i][x][j]`.
#[derive(Debug, Clone)]
pub struct TransitionTable {
    n: usize,
    inputs: usize,
    bins: usize,
    data: Vec<f64>,
}

impl TransitionTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn prob(&self, antenna: usize, x: usize, bin: usize) -> f64 {
        self.data[(antenna * self.inputs + x) * self.bins + bin]
    }

    pub fn row(&self, antenna: usize, x: usize) -> &[f64] {
        let start = (antenna * self.inputs + x) * self.bins;
        &self.data[start..start + self.bins]
    }
}

/// Noiseless outputs `H x` for every input vector, indexed `[x][antenna]`.
pub fn noiseless_outputs(h: &ChannelMatrix, c: &Constellation) -> Vec<Vec<Complex64>> {
    let n = h.n();
    let inputs = c.len().pow(n as u32);
    let mut digits = vec![0; n];
    (0..inputs)
        .map(|x| {
            input_digits(x, c.len(), n, &mut digits);
            let sym: Vec<Complex64> = digits.iter().map(|&d| c.point(d)).collect();
            h.apply(&sym)
        })
        .collect()
}

/// Probability of every bin of `q` under `CN(mean, sigma2)`.
pub fn bin_probabilities(q: &Quantizer, mean: Complex64, sigma2: f64, out: &mut [f64]) -> Result<(), InfoError> {
    debug_assert_eq!(out.len(), q.bin_count());
    match q.family() {
        Family::Iq { .. } => {
            let levels = q.iq_levels().unwrap();
            let s = (0.5 * sigma2).sqrt();
            let mut re = vec![0.0; levels];
            let mut im = vec![0.0; levels];
            iq_axis_probs(q.thresholds(), mean.re, s, &mut re);
            iq_axis_probs(q.thresholds(), mean.im, s, &mut im);
            for (a, pa) in re.iter().enumerate() {
                for (b, pb) in im.iter().enumerate() {
                    out[b + levels * a] = pa * pb;
                }
            }
        }
        _ => {
            for (j, o) in out.iter_mut().enumerate() {
                *o = match q.cell(j) {
                    Cell::Sector(cell) => stats::polar_prob(mean, sigma2, &cell)?,
                    Cell::Rect(cell) => stats::rect_prob(mean, sigma2, &cell),
                };
            }
        }
    }
    Ok(())
}

/// Per-level probabilities of one I/Q axis of `N(mean, s²)`.
pub(crate) fn iq_axis_probs(thresholds: &[f64], mean: f64, s: f64, out: &mut [f64]) {
    for (l, o) in out.iter_mut().enumerate() {
        let lo = if l == 0 { f64::NEG_INFINITY } else { thresholds[l - 1] };
        let hi = thresholds.get(l).copied().unwrap_or(f64::INFINITY);
        *o = stats::normal_interval_prob((lo - mean) / s, (hi - mean) / s);
    }
}

pub fn transition_table(
    q: &Quantizer,
    h: &ChannelMatrix,
    c: &Constellation,
    sigma2: f64,
) -> Result<TransitionTable, InfoError> {
    let n = h.n();
    let inputs = c.len().pow(n as u32);
    let bins = q.bin_count();
    let outputs = noiseless_outputs(h, c);
    let mut data = vec![0.0; n * inputs * bins];
    for i in 0..n {
        for (x, y) in outputs.iter().enumerate() {
            let start = (i * inputs + x) * bins;
            bin_probabilities(q, y[i], sigma2, &mut data[start..start + bins])?;
        }
    }
    Ok(TransitionTable { n, inputs, bins, data })
}

fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter().filter(|v| **v > 0.0).map(|v| v * v.log2()).sum::<f64>()
}

/// `I(X; Y_Q)` in bits for equiprobable inputs by exact enumeration of the
/// output space. The output tuple is split into two halves so that
/// `p(y) = (1/N) Σ_x A[x][y_front] · B[x][y_back]`.
pub fn mi_from_table(t: &TransitionTable) -> f64 {
    let (n, inputs, bins) = (t.n, t.inputs, t.bins);
    let h_cond: f64 =
        (0..inputs).map(|x| (0..n).map(|i| entropy_bits(t.row(i, x))).sum::<f64>()).sum::<f64>() / inputs as f64;

    let front = n / 2;
    let half = |antennas: std::ops::Range<usize>| -> Vec<f64> {
        let width = bins.pow(antennas.len() as u32);
        let mut out = vec![0.0; inputs * width];
        for x in 0..inputs {
            let row = &mut out[x * width..(x + 1) * width];
            row[0] = 1.0;
            let mut filled = 1;
            for i in antennas.clone() {
                let p = t.row(i, x);
                // Expand in place: new index = old * bins + j.
                for k in (0..filled).rev() {
                    let base = row[k];
                    for j in (0..bins).rev() {
                        row[k * bins + j] = base * p[j];
                    }
                }
                filled *= bins;
            }
        }
        out
    };
    let a = half(0..front);
    let b = half(front..n);
    let wa = bins.pow(front as u32);
    let wb = bins.pow((n - front) as u32);
    let scale = 1.0 / inputs as f64;

    let h_out: f64 = (0..wa)
        .into_par_iter()
        .map(|ya| {
            let mut row = vec![0.0; wb];
            for x in 0..inputs {
                let w = a[x * wa + ya];
                if w == 0.0 {
                    continue;
                }
                for (r, bv) in row.iter_mut().zip(&b[x * wb..(x + 1) * wb]) {
                    *r += w * bv;
                }
            }
            row.iter().map(|v| v * scale).filter(|p| *p > 0.0).map(|p| -p * p.log2()).sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    let mi = h_out - h_cond;
    assert!(mi.is_finite(), "non-finite mutual information from a transition table");
    mi.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiResult {
    pub mi_bits: f64,
    /// Standard error of the estimate; zero for exact enumeration.
    pub stderr: f64,
    pub method: MiMethod,
    /// Number of distinct `Φ` values evaluated.
    pub phi_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiOptions {
    pub mc_samples: usize,
    pub seed: u64,
    pub allow_monte_carlo: bool,
}

impl Default for MiOptions {
    fn default() -> Self {
        Self { mc_samples: 200_000, seed: 1, allow_monte_carlo: true }
    }
}

/// `Φ` values at which to evaluate a `Φ`-average.
///
/// `H(Φ + π/2) x = H(Φ)(−j x)`, and `x ↦ −j x` permutes the input set of a
/// quarter-turn invariant alphabet, so the per-`Φ` mutual information has
/// period `π/2`. A uniform grid whose size is a multiple of four is folded
/// onto its first quarter without changing the average.
pub fn phi_points(policy: &PhiPolicy, c: &Constellation) -> Vec<f64> {
    let grid = policy.grid();
    let g = grid.len();
    if matches!(policy, PhiPolicy::Fixed(_)) || g % 4 != 0 || !c.quarter_turn_invariant() {
        return grid;
    }
    grid[..g / 4].to_vec()
}

/// `E_Φ I(X; Y_Q | Φ, θ)` in bits per channel use.
pub fn mi_quantized(
    q: &Quantizer,
    theta: f64,
    n: usize,
    sigma2: f64,
    c: &Constellation,
    phi: &PhiPolicy,
    opts: &MiOptions,
) -> Result<MiResult, InfoError> {
    channel::NoiseSpec::new(sigma2)?;
    let phis = phi_points(phi, c);
    let inputs = c.len().pow(n as u32);
    let outputs = (q.bin_count() as f64).powi(n as i32);
    if inputs as f64 * outputs <= ENUMERATION_LIMIT {
        let per_phi = phis
            .par_iter()
            .map(|&p| {
                let h = channel::los_channel(n, theta, p)?;
                Ok(mi_from_table(&transition_table(q, &h, c, sigma2)?))
            })
            .collect::<Result<Vec<f64>, InfoError>>()?;
        let mi = per_phi.iter().sum::<f64>() / per_phi.len() as f64;
        return Ok(MiResult { mi_bits: mi, stderr: 0.0, method: MiMethod::Exact, phi_points: phis.len() });
    }
    if !opts.allow_monte_carlo {
        return Err(InfoError::Infeasible { inputs, outputs });
    }
    mi_quantized_monte_carlo(q, theta, n, sigma2, c, &phis, opts)
}

/// Monte Carlo estimate of `E log₂ p(y_Q | x) / p(y_Q)` with output bins drawn
/// through the noisy channel and likelihoods evaluated from cell integrals.
fn mi_quantized_monte_carlo(
    q: &Quantizer,
    theta: f64,
    n: usize,
    sigma2: f64,
    c: &Constellation,
    phis: &[f64],
    opts: &MiOptions,
) -> Result<MiResult, InfoError> {
    let h0 = channel::los_channel(n, theta, 0.0)?;
    let base = noiseless_outputs(&h0, c);
    let inputs = base.len();
    let chunks = opts.mc_samples.div_ceil(CHUNK);
    let per_chunk = (0..chunks)
        .into_par_iter()
        .map(|ck| -> Result<(f64, f64, usize), InfoError> {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(ck as u64);
            let (mut s1, mut s2) = (0.0, 0.0);
            let count = CHUNK.min(opts.mc_samples - ck * CHUNK);
            let mut logp = vec![0.0; inputs];
            let mut bins = vec![0usize; n];
            for k in 0..count {
                let idx = ck * CHUNK + k;
                let rot = Complex64::from_polar(1.0, -phis[idx % phis.len()]);
                let x = rng.random_range(0..inputs);
                for i in 0..n {
                    let y = base[x][i] * rot + channel::complex_noise(&mut rng, sigma2);
                    bins[i] = q.bin(y);
                }
                for (xp, lp) in logp.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for i in 0..n {
                        acc += cell_prob(q, bins[i], base[xp][i] * rot, sigma2)?.max(PROB_FLOOR).ln();
                    }
                    *lp = acc;
                }
                let v = (logp[x] - log_sum_exp(&logp) + (inputs as f64).ln()) / LN_2;
                s1 += v;
                s2 += v * v;
            }
            Ok((s1, s2, count))
        })
        .collect::<Result<Vec<_>, InfoError>>()?;
    let (mi, stderr) = mean_and_stderr(&per_chunk);
    Ok(MiResult { mi_bits: mi, stderr, method: MiMethod::MonteCarlo, phi_points: phis.len() })
}

fn cell_prob(q: &Quantizer, bin: usize, mean: Complex64, sigma2: f64) -> Result<f64, InfoError> {
    Ok(match q.cell(bin) {
        Cell::Rect(r) => stats::rect_prob(mean, sigma2, &r),
        Cell::Sector(s) => stats::polar_prob(mean, sigma2, &s)?,
    })
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn mean_and_stderr(parts: &[(f64, f64, usize)]) -> (f64, f64) {
    let (s1, s2, n) = parts.iter().fold((0.0, 0.0, 0usize), |a, p| (a.0 + p.0, a.1 + p.1, a.2 + p.2));
    let nf = n as f64;
    let mean = s1 / nf;
    let var = ((s2 / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

/// Monte Carlo `E_Φ I(X; Y | Φ, θ)` for the unquantized discrete-input channel.
pub fn mi_unquantized(
    theta: f64,
    n: usize,
    sigma2: f64,
    c: &Constellation,
    phi: &PhiPolicy,
    samples: usize,
    seed: u64,
) -> Result<MiResult, InfoError> {
    channel::NoiseSpec::new(sigma2)?;
    if samples < MIN_UNQUANTIZED_SAMPLES {
        return Err(InfoError::TooFewSamples { min: MIN_UNQUANTIZED_SAMPLES, got: samples });
    }
    let phis = phi_points(phi, c);
    let h0 = channel::los_channel(n, theta, 0.0)?;
    let base = noiseless_outputs(&h0, c);
    let inputs = base.len();
    let chunks = samples.div_ceil(CHUNK);
    let per_chunk: Vec<(f64, f64, usize)> = (0..chunks)
        .into_par_iter()
        .map(|ck| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(ck as u64);
            let (mut s1, mut s2) = (0.0, 0.0);
            let count = CHUNK.min(samples - ck * CHUNK);
            let mut logp = vec![0.0; inputs];
            let mut y = vec![Complex64::new(0.0, 0.0); n];
            for k in 0..count {
                let idx = ck * CHUNK + k;
                // Derotating the observation by e^{jΦ} leaves circular noise unchanged.
                let derot = Complex64::from_polar(1.0, phis[idx % phis.len()]);
                let x = rng.random_range(0..inputs);
                for i in 0..n {
                    y[i] = (base[x][i] * derot.conj() + channel::complex_noise(&mut rng, sigma2)) * derot;
                }
                for (xp, lp) in logp.iter_mut().enumerate() {
                    let d: f64 = (0..n).map(|i| (y[i] - base[xp][i]).norm_sqr()).sum();
                    *lp = -d / sigma2;
                }
                let v = (logp[x] - log_sum_exp(&logp) + (inputs as f64).ln()) / LN_2;
                s1 += v;
                s2 += v * v;
            }
            (s1, s2, count)
        })
        .collect();
    let (mi, stderr) = mean_and_stderr(&per_chunk);
    Ok(MiResult { mi_bits: mi, stderr, method: MiMethod::MonteCarlo, phi_points: phis.len() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiGap {
    pub gap_bits: f64,
    pub stderr: f64,
    pub quantized: MiResult,
    pub unquantized: MiResult,
}

/// `D(X, Y_Q, θ)`: unquantized minus quantized mutual information, clipped
/// at minus the combined estimator error.
pub fn mi_gap(
    q: &Quantizer,
    theta: f64,
    n: usize,
    sigma2: f64,
    c: &Constellation,
    phi: &PhiPolicy,
    opts: &MiOptions,
) -> Result<MiGap, InfoError> {
    let quantized = mi_quantized(q, theta, n, sigma2, c, phi, opts)?;
    let samples = opts.mc_samples.max(MIN_UNQUANTIZED_SAMPLES);
    let unquantized = mi_unquantized(theta, n, sigma2, c, phi, samples, opts.seed)?;
    let stderr = quantized.stderr.hypot(unquantized.stderr);
    let gap_bits = (unquantized.mi_bits - quantized.mi_bits).max(-stderr);
    Ok(MiGap { gap_bits, stderr, quantized, unquantized })
}

/// Inputs grouped by their noiseless quantized outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Confusability {
    /// Ambiguity classes, each ascending, ordered by first member.
    pub classes: Vec<Vec<usize>>,
    /// Inputs with at least one noiseless output within `1e-9` of a bin
    /// boundary (including zero amplitude under phase quantization). Their
    /// class follows the lower-inclusive rule but is not robust to noise.
    pub boundary_degenerate: Vec<usize>,
    /// `H(X) − Σ_c (|c|/N) log₂|c|` in bits.
    pub asymptotic_mi: f64,
}

impl Confusability {
    pub fn singletons(&self) -> usize {
        self.classes.iter().filter(|c| c.len() == 1).count()
    }

    pub fn class_sizes(&self) -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for c in &self.classes {
            *m.entry(c.len()).or_insert(0) += 1;
        }
        m
    }
}

pub const BOUNDARY_TOL: f64 = 1e-9;
const MAX_CONFUSABILITY_INPUTS: usize = 1 << 16;

pub fn noiseless_confusability(q: &Quantizer, h: &ChannelMatrix, c: &Constellation) -> Result<Confusability, InfoError> {
    let inputs = c.len().pow(h.n() as u32);
    if inputs > MAX_CONFUSABILITY_INPUTS {
        return Err(InfoError::TooManyInputs(inputs));
    }
    let outputs = noiseless_outputs(h, c);
    let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    let mut degenerate = Vec::new();
    for (x, y) in outputs.iter().enumerate() {
        if y.iter().any(|v| q.boundary_distance(*v) < BOUNDARY_TOL) {
            degenerate.push(x);
        }
        groups.entry(y.iter().map(|v| q.bin(*v)).collect()).or_default().push(x);
    }
    Ok(classes_to_result(groups.into_values().collect(), degenerate, inputs))
}

fn classes_to_result(mut classes: Vec<Vec<usize>>, degenerate: Vec<usize>, inputs: usize) -> Confusability {
    classes.sort_by_key(|c| c[0]);
    let nf = inputs as f64;
    let loss: f64 = classes.iter().map(|c| c.len() as f64 / nf * (c.len() as f64).log2()).sum();
    Confusability { classes, boundary_degenerate: degenerate, asymptotic_mi: nf.log2() - loss }
}

/// High-SNR limit for a receiver that sees each antenna's noiseless output
/// exactly (the per-antenna ML/Voronoi partition): only inputs with
/// coincident noiseless output vectors remain confusable.
pub fn voronoi_asymptote(h: &ChannelMatrix, c: &Constellation) -> Result<Confusability, InfoError> {
    let inputs = c.len().pow(h.n() as u32);
    if inputs > MAX_CONFUSABILITY_INPUTS {
        return Err(InfoError::TooManyInputs(inputs));
    }
    let outputs = noiseless_outputs(h, c);
    let mut classes: Vec<Vec<usize>> = Vec::new();
    'outer: for (x, y) in outputs.iter().enumerate() {
        for class in classes.iter_mut() {
            let r = &outputs[class[0]];
            if y.iter().zip(r).all(|(a, b)| (a - b).norm() < BOUNDARY_TOL) {
                class.push(x);
                continue 'outer;
            }
        }
        classes.push(vec![x]);
    }
    Ok(classes_to_result(classes, Vec::new(), inputs))
}

/// One family of input pairs with identical noiseless phases at both
/// antennas of the 2×2 link, as QPSK point indices `(stream 1, stream 2)`.
///
/// `base` is `(e^{jπ(2i−1)/4}, e^{jπ(2i+1)/4})`; `swapped` exchanges the two
/// symbols and `negated` exchanges and negates them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwapPair {
    pub base: [usize; 2],
    pub swapped: [usize; 2],
    pub negated: [usize; 2],
}

/// The four swap pairs for the QPSK ordering `e^{jπ/4}, e^{j3π/4}, …`.
pub fn swap_pairs() -> Vec<SwapPair> {
    (0..4)
        .map(|i| {
            let (a, b) = (i, (i + 1) % 4);
            SwapPair { base: [a, b], swapped: [b, a], negated: [(b + 2) % 4, (a + 2) % 4] }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::Modulation;
    use crate::quantizer::{design_equal_prob_iq, design_phase_only, Quantizer};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn qpsk() -> Constellation {
        Constellation::new(Modulation::Qpsk)
    }

    #[test]
    fn table_rows_normalized() {
        let c = qpsk();
        let h = channel::los_channel(2, 1.1, 0.3).unwrap();
        for q in [
            design_phase_only(8).unwrap(),
            Quantizer::amplitude_phase(8, vec![1.0]).unwrap(),
            design_equal_prob_iq(4, 0.1).unwrap(),
        ] {
            for sigma2 in [1e-4, 0.1, 3.0] {
                let t = transition_table(&q, &h, &c, sigma2).unwrap();
                for i in 0..2 {
                    for x in 0..16 {
                        let s: f64 = t.row(i, x).iter().sum();
                        assert!((s - 1.0).abs() < 1e-8, "{s}");
                        assert!(t.row(i, x).iter().all(|p| *p >= 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn table_becomes_one_hot() {
        let c = qpsk();
        let h = channel::los_channel(2, 1.0, 0.2).unwrap();
        let q = design_phase_only(8).unwrap();
        let t = transition_table(&q, &h, &c, 1e-10).unwrap();
        let y = noiseless_outputs(&h, &c);
        for x in 0..16 {
            for i in 0..2 {
                if q.boundary_distance(y[x][i]) > 1e-3 {
                    assert!((t.prob(i, x, q.bin(y[x][i])) - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn table_matches_sampled_frequencies() {
        let c = qpsk();
        let h = channel::los_channel(2, FRAC_PI_2, 0.0).unwrap();
        let q = design_phase_only(8).unwrap();
        let sigma2 = 0.3;
        let t = transition_table(&q, &h, &c, sigma2).unwrap();
        let y = noiseless_outputs(&h, &c);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 200_000;
        for x in [0usize, 6, 13] {
            let mut counts = [0usize; 8];
            for _ in 0..draws {
                counts[q.bin(y[x][0] + channel::complex_noise(&mut rng, sigma2))] += 1;
            }
            for j in 0..8 {
                let p = t.prob(0, x, j);
                let se = (p * (1.0 - p) / draws as f64).sqrt().max(1e-12);
                assert!((counts[j] as f64 / draws as f64 - p).abs() < 4.0 * se, "x={x} j={j}");
            }
        }
    }

    #[test]
    fn mi_limits() {
        let c = qpsk();
        let q = design_phase_only(8).unwrap();
        let opts = MiOptions::default();
        let low = mi_quantized(&q, 1.0, 2, 1e4, &c, &PhiPolicy::Fixed(0.0), &opts).unwrap();
        assert!(low.mi_bits < 0.01 && low.method == MiMethod::Exact);
        let iq = design_equal_prob_iq(4, 1e-4).unwrap();
        let high = mi_quantized(&iq, FRAC_PI_2, 2, 1e-4, &c, &PhiPolicy::Fixed(0.0), &opts).unwrap();
        assert!(high.mi_bits <= 4.0 + 1e-9 && high.mi_bits > 3.99, "{}", high.mi_bits);
    }

    /// Direct sum over every output tuple as the oracle for the split product.
    #[test]
    fn split_enumeration_matches_direct_sum() {
        let c = qpsk();
        let h = channel::los_channel(2, 0.9, 0.4).unwrap();
        let q = design_equal_prob_iq(2, 0.5).unwrap();
        let t = transition_table(&q, &h, &c, 0.5).unwrap();
        let mut hy = 0.0;
        for y1 in 0..4 {
            for y2 in 0..4 {
                let p: f64 = (0..16).map(|x| t.prob(0, x, y1) * t.prob(1, x, y2)).sum::<f64>() / 16.0;
                hy -= p * p.log2();
            }
        }
        let mut hyx = 0.0;
        for x in 0..16 {
            for y1 in 0..4 {
                for y2 in 0..4 {
                    let p = t.prob(0, x, y1) * t.prob(1, x, y2);
                    if p > 0.0 {
                        hyx -= p * p.log2() / 16.0;
                    }
                }
            }
        }
        assert!((mi_from_table(&t) - (hy - hyx)).abs() < 1e-12);
    }

    #[test]
    fn folding_preserves_average() {
        let c = qpsk();
        let q = Quantizer::amplitude_phase(8, vec![1.0]).unwrap();
        let opts = MiOptions::default();
        let folded = mi_quantized(&q, 1.2, 2, 0.05, &c, &PhiPolicy::Grid(16), &opts).unwrap();
        assert_eq!(folded.phi_points, 4);
        let full: f64 = (0..16)
            .map(|k| {
                let h = channel::los_channel(2, 1.2, TAU_16 * k as f64).unwrap();
                mi_from_table(&transition_table(&q, &h, &c, 0.05).unwrap())
            })
            .sum::<f64>()
            / 16.0;
        assert!((folded.mi_bits - full).abs() < 1e-8, "{} {full}", folded.mi_bits);
    }
    const TAU_16: f64 = 2.0 * PI / 16.0;

    #[test]
    fn monte_carlo_matches_exact() {
        let c = qpsk();
        let q = design_equal_prob_iq(4, 0.2).unwrap();
        let phi = PhiPolicy::Fixed(0.3);
        let exact = mi_quantized(&q, 1.3, 2, 0.2, &c, &phi, &MiOptions::default()).unwrap();
        let phis = phi_points(&phi, &c);
        let opts = MiOptions { mc_samples: 40_000, seed: 11, allow_monte_carlo: true };
        let mc = mi_quantized_monte_carlo(&q, 1.3, 2, 0.2, &c, &phis, &opts).unwrap();
        assert!((mc.mi_bits - exact.mi_bits).abs() < 4.0 * mc.stderr, "{} {} {}", mc.mi_bits, exact.mi_bits, mc.stderr);
    }

    #[test]
    fn infeasible_without_fallback() {
        let c = Constellation::new(Modulation::Qam16);
        let q = design_equal_prob_iq(16, 0.01).unwrap();
        let opts = MiOptions { allow_monte_carlo: false, ..MiOptions::default() };
        assert!(matches!(
            mi_quantized(&q, FRAC_PI_2, 4, 0.01, &c, &PhiPolicy::Fixed(0.0), &opts),
            Err(InfoError::Infeasible { .. })
        ));
    }

    /// Per-axis BPSK mutual information by trapezoid quadrature.
    fn bpsk_mi(amplitude: f64, var: f64) -> f64 {
        let s = var.sqrt();
        let steps = 20_000;
        let (lo, hi) = (-amplitude - 12.0 * s, amplitude + 12.0 * s);
        let dx = (hi - lo) / steps as f64;
        let g = |y: f64, m: f64| (-(y - m) * (y - m) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
        let mut acc = 0.0;
        for k in 0..=steps {
            let y = lo + k as f64 * dx;
            let (p1, p2) = (g(y, amplitude), g(y, -amplitude));
            let py = 0.5 * (p1 + p2);
            let mut term = 0.0;
            for p in [p1, p2] {
                if p > 0.0 {
                    term += 0.5 * p * (p / py).log2();
                }
            }
            acc += if k == 0 || k == steps { 0.5 * term } else { term };
        }
        acc * dx
    }

    #[test]
    fn unquantized_matches_quadrature_oracle() {
        // θ = π/2 makes the 2×2 channel unitary: four independent BPSK axes.
        let c = qpsk();
        let sigma2 = 10f64.powf(-0.5);
        let oracle = 4.0 * bpsk_mi(std::f64::consts::FRAC_1_SQRT_2, sigma2 / 2.0);
        let r = mi_unquantized(FRAC_PI_2, 2, sigma2, &c, &PhiPolicy::Fixed(0.0), 100_000, 3).unwrap();
        assert!((r.mi_bits - oracle).abs() < 3.0 * r.stderr, "{} {oracle} {}", r.mi_bits, r.stderr);
    }

    #[test]
    fn unquantized_phi_invariance_and_limits() {
        let c = qpsk();
        let a = mi_unquantized(1.0, 2, 0.3, &c, &PhiPolicy::Fixed(0.0), 100_000, 8).unwrap();
        let b = mi_unquantized(1.0, 2, 0.3, &c, &PhiPolicy::Fixed(PI / 3.0), 100_000, 9).unwrap();
        assert!((a.mi_bits - b.mi_bits).abs() < 3.0 * a.stderr.hypot(b.stderr));
        let z = mi_unquantized(1.0, 2, 1e4, &c, &PhiPolicy::Fixed(0.0), 100_000, 8).unwrap();
        assert!(z.mi_bits.abs() < 0.01);
        assert!(mi_unquantized(1.0, 2, 0.3, &c, &PhiPolicy::Fixed(0.0), 10, 8).is_err());
    }

    #[test]
    fn seeded_estimates_are_reproducible() {
        let c = qpsk();
        let a = mi_unquantized(1.0, 2, 0.3, &c, &PhiPolicy::Uniform, 100_000, 8).unwrap();
        let b = mi_unquantized(1.0, 2, 0.3, &c, &PhiPolicy::Uniform, 100_000, 8).unwrap();
        assert_eq!(a.mi_bits.to_bits(), b.mi_bits.to_bits());
    }

    #[test]
    fn phase_only_class_count() {
        let c = qpsk();
        let h = channel::los_channel(2, 5.0 * PI / 12.0, FRAC_PI_4).unwrap();
        let conf = noiseless_confusability(&design_phase_only(8).unwrap(), &h, &c).unwrap();
        assert_eq!(conf.class_sizes(), BTreeMap::from([(1, 8), (2, 4)]));
        assert!((conf.asymptotic_mi - 3.5).abs() < 1e-12);
        // Swap pairs are exactly the colliding classes.
        for p in swap_pairs() {
            let a = p.base[0] * 4 + p.base[1];
            let b = p.swapped[0] * 4 + p.swapped[1];
            assert!(conf.classes.contains(&vec![a.min(b), a.max(b)]));
        }
        let ap = Quantizer::amplitude_phase(8, vec![1.0]).unwrap();
        assert_eq!(noiseless_confusability(&ap, &h, &c).unwrap().singletons(), 16);
    }

    #[test]
    fn zero_amplitude_is_flagged() {
        let c = qpsk();
        let h = channel::los_channel(2, FRAC_PI_2, 0.1).unwrap();
        let conf = noiseless_confusability(&design_phase_only(8).unwrap(), &h, &c).unwrap();
        assert!(!conf.boundary_degenerate.is_empty());
    }

    #[test]
    fn voronoi_has_no_loss_on_invertible_channel() {
        let c = qpsk();
        let h = channel::los_channel(2, 1.0, 0.0).unwrap();
        assert!((voronoi_asymptote(&h, &c).unwrap().asymptotic_mi - 4.0).abs() < 1e-12);
        let rank1 = channel::los_channel(2, 0.0, 0.0).unwrap();
        assert!(voronoi_asymptote(&rank1, &c).unwrap().asymptotic_mi < 4.0);
    }
}
