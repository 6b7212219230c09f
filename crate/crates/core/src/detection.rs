//! Spatial demultiplexers over quantized observations: quantized maximum
//! likelihood, zero forcing on centroids, and virtual quantization.
//!
//! All detectors return per-stream constellation point indices.

use crate::channel::ChannelMatrix;
use crate::constellation::{input_digits, Constellation};
use crate::infotheory::{self, noiseless_outputs, InfoError, PROB_FLOOR};
use crate::linalg::CMatrix;
use crate::quantizer::{Family, Quantizer, VirtualQuantizer};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("channel matrix is singular at theta = {0}")]
    Singular(f64),
    #[error("quantizer has no centroid codebook")]
    MissingCodebook,
    #[error("virtual quantizer does not refine the detection quantizer")]
    QuantizerMismatch,
    #[error("observation has {got} entries, expected {expected}")]
    Shape { expected: usize, got: usize },
    #[error("16QAM maximum likelihood detection is disabled; enable it explicitly")]
    MlGated,
    #[error(transparent)]
    Info(#[from] InfoError),
}

/// Largest input alphabet `|𝒮|ⁿ` for which ML is allowed without opting in.
pub const ML_DEFAULT_LIMIT: usize = 256;

/// Everything a detector needs for one channel realization.
///
/// Holds the `Φ = 0` filter and noiseless outputs and rotates them when the
/// common phase changes: `H(Φ) = e^{-jΦ} H(0)`, so the pseudoinverse picks
/// up `e^{jΦ}`.
#[derive(Debug, Clone)]
pub struct DetectionContext<'a> {
    c: &'a Constellation,
    q: &'a Quantizer,
    sigma2: f64,
    n: usize,
    theta: f64,
    phi: f64,
    h0: CMatrix,
    zf0: CMatrix,
    /// Noiseless outputs at `Φ = 0`, laid out `[x · n + antenna]`.
    means0: Vec<Complex64>,
    inputs: usize,
    /// `e^{-jΦ}`.
    rot: Complex64,
    zf: CMatrix,
    /// `ln P(bin | x)` laid out `[(antenna · T + bin) · N + x]`.
    ml_table: Option<Vec<f64>>,
    allow_large_ml: bool,
}

impl<'a> DetectionContext<'a> {
    pub fn new(h: &ChannelMatrix, c: &'a Constellation, q: &'a Quantizer, sigma2: f64) -> Result<Self, DetectionError> {
        if q.codebook().is_none() {
            return Err(DetectionError::MissingCodebook);
        }
        let h0 = h.with_phi(0.0);
        let zf0 = zf_filter(h0.matrix()).ok_or(DetectionError::Singular(h.theta))?;
        let outputs = noiseless_outputs(&h0, c);
        let inputs = outputs.len();
        let means0: Vec<Complex64> = outputs.into_iter().flatten().collect();
        let mut ctx = Self {
            c,
            q,
            sigma2,
            n: h.n(),
            theta: h.theta,
            phi: 0.0,
            h0: h0.matrix().clone(),
            zf: zf0.clone(),
            zf0,
            means0,
            inputs,
            rot: Complex64::new(1.0, 0.0),
            ml_table: None,
            allow_large_ml: false,
        };
        ctx.set_phi(h.phi);
        Ok(ctx)
    }

    /// Moves the context to another common phase; drops any ML table.
    pub fn set_phi(&mut self, phi: f64) {
        self.phi = phi;
        self.ml_table = None;
        self.rot = Complex64::from_polar(1.0, -phi);
        for row in 0..self.n {
            for col in 0..self.n {
                self.zf[(row, col)] = self.zf0[(row, col)] * self.rot.conj();
            }
        }
    }

    /// Opts in to maximum likelihood over more than [`ML_DEFAULT_LIMIT`] inputs.
    pub fn allow_large_ml(mut self, allow: bool) -> Self {
        self.allow_large_ml = allow;
        self
    }

    /// Precomputes `ln P(bin | x)` for every antenna, bin and input at the
    /// current phase.
    pub fn with_ml_table(mut self) -> Result<Self, DetectionError> {
        let (n, t, inputs) = (self.n, self.q.bin_count(), self.inputs());
        let mut table = vec![0.0; n * t * inputs];
        let mut probs = vec![0.0; t];
        for x in 0..inputs {
            for i in 0..n {
                infotheory::bin_probabilities(self.q, self.mean(x, i), self.sigma2, &mut probs)?;
                for (b, p) in probs.iter().enumerate() {
                    table[(i * t + b) * inputs + x] = p.max(PROB_FLOOR).ln();
                }
            }
        }
        self.ml_table = Some(table);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn constellation(&self) -> &Constellation {
        self.c
    }

    pub fn quantizer(&self) -> &Quantizer {
        self.q
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// `(H†H)⁻¹H†` at the current phase.
    pub fn zf_filter(&self) -> &CMatrix {
        &self.zf
    }

    /// Noiseless output of input vector `x` at the current phase.
    pub fn noiseless(&self, x: usize) -> Vec<Complex64> {
        (0..self.n).map(|i| self.mean(x, i)).collect()
    }

    /// Component `i` of `H x` at the current phase.
    #[inline]
    pub fn mean(&self, x: usize, i: usize) -> Complex64 {
        self.means0[x * self.n + i] * self.rot
    }

    fn check_shape(&self, yq: &[usize]) -> Result<(), DetectionError> {
        if yq.len() != self.n {
            return Err(DetectionError::Shape { expected: self.n, got: yq.len() });
        }
        Ok(())
    }
}

/// Left pseudoinverse `(H†H)⁻¹H†`.
pub fn zf_filter(h: &CMatrix) -> Option<CMatrix> {
    let ht = h.conj_transpose();
    Some(ht.matmul(h).inverse()?.matmul(&ht))
}

/// Log-likelihood `Σ_i ln max(P(yq_i | (Hx)_i), 1e-300)` of every input.
pub fn ml_scores(yq: &[usize], ctx: &DetectionContext) -> Result<Vec<f64>, DetectionError> {
    ctx.check_shape(yq)?;
    let inputs = ctx.inputs();
    if inputs > ML_DEFAULT_LIMIT && !ctx.allow_large_ml {
        return Err(DetectionError::MlGated);
    }
    let mut scores = vec![0.0; inputs];
    if let Some(table) = &ctx.ml_table {
        let t = ctx.q.bin_count();
        for (i, &b) in yq.iter().enumerate() {
            let row = &table[(i * t + b) * inputs..(i * t + b + 1) * inputs];
            for (s, l) in scores.iter_mut().zip(row) {
                *s += l;
            }
        }
        return Ok(scores);
    }
    match ctx.q.family() {
        Family::Iq { thresholds } => {
            // Only the observed level on each axis is needed.
            let levels = thresholds.len() + 1;
            let s = (0.5 * ctx.sigma2).sqrt();
            let cells: Vec<(usize, usize)> = yq.iter().map(|b| (b / levels, b % levels)).collect();
            for (x, score) in scores.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (i, &(a, b)) in cells.iter().enumerate() {
                    let m = ctx.mean(x, i);
                    let pa = axis_level_prob(thresholds, m.re, s, a);
                    let pb = axis_level_prob(thresholds, m.im, s, b);
                    acc += (pa * pb).max(PROB_FLOOR).ln();
                }
                *score = acc;
            }
        }
        _ => {
            let mut probs = vec![0.0; ctx.q.bin_count()];
            for (x, score) in scores.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (i, &b) in yq.iter().enumerate() {
                    infotheory::bin_probabilities(ctx.q, ctx.mean(x, i), ctx.sigma2, &mut probs)?;
                    acc += probs[b].max(PROB_FLOOR).ln();
                }
                *score = acc;
            }
        }
    }
    Ok(scores)
}

fn axis_level_prob(thresholds: &[f64], mean: f64, s: f64, level: usize) -> f64 {
    let lo = if level == 0 { f64::NEG_INFINITY } else { thresholds[level - 1] };
    let hi = thresholds.get(level).copied().unwrap_or(f64::INFINITY);
    crate::stats::normal_interval_prob((lo - mean) / s, (hi - mean) / s)
}

/// Index of the largest score; ties go to the lowest index.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = k;
        }
    }
    best
}

fn digits_of(x: usize, ctx: &DetectionContext) -> Vec<usize> {
    let mut d = vec![0; ctx.n];
    input_digits(x, ctx.c.len(), ctx.n, &mut d);
    d
}

/// Quantized maximum likelihood: `argmax_x Π_i P(yq_i | (Hx)_i)`.
pub fn ml_detect(yq: &[usize], ctx: &DetectionContext) -> Result<Vec<usize>, DetectionError> {
    let scores = ml_scores(yq, ctx)?;
    Ok(digits_of(argmax(&scores), ctx))
}

/// Centroid reconstruction, pseudoinverse, per-stream slicing.
pub fn zf_detect(yq: &[usize], ctx: &DetectionContext) -> Result<Vec<usize>, DetectionError> {
    ctx.check_shape(yq)?;
    let y: Vec<Complex64> = yq.iter().map(|&b| ctx.q.centroid(b)).collect();
    Ok(zf_slice(&y, ctx))
}

/// Zero forcing on the unquantized observation.
pub fn zf_detect_unquantized(y: &[Complex64], ctx: &DetectionContext) -> Result<Vec<usize>, DetectionError> {
    if y.len() != ctx.n {
        return Err(DetectionError::Shape { expected: ctx.n, got: y.len() });
    }
    Ok(zf_slice(y, ctx))
}

fn zf_slice(y: &[Complex64], ctx: &DetectionContext) -> Vec<usize> {
    ctx.zf.mul_vec(y).into_iter().map(|z| ctx.c.slice_unchecked(z)).collect()
}

/// Candidate virtual observations compatible with a physical observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    /// Virtual bins inside each antenna's observed physical bin, ascending.
    pub per_antenna: Vec<Vec<usize>>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.per_antenna.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Tuple number `t`, antenna 0 most significant.
    pub fn tuple(&self, t: usize) -> Vec<usize> {
        let mut out = vec![0; self.per_antenna.len()];
        let mut v = t;
        for (i, cells) in self.per_antenna.iter().enumerate().rev() {
            out[i] = cells[v % cells.len()];
            v /= cells.len();
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.len()).map(move |t| self.tuple(t))
    }
}

pub fn build_candidate_set(yq: &[usize], vq: &VirtualQuantizer) -> CandidateSet {
    CandidateSet { per_antenna: yq.iter().map(|&b| vq.children(b).to_vec()).collect() }
}

/// Bookkeeping of one virtual-quantization detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VqTrace {
    pub candidates: usize,
    pub slice_calls: usize,
    /// Winning candidate number (antenna 0 most significant).
    pub best_t: usize,
    pub best_score: f64,
}

/// Reusable scratch space for [`vq_detect`].
#[derive(Debug, Clone)]
pub struct VqDetector {
    /// Generation stamp per input vector for the `Q_v(H x̂)` memo.
    stamp: Vec<u64>,
    generation: u64,
    memo: Vec<Complex64>,
}

impl VqDetector {
    pub fn new(inputs: usize, n: usize) -> Self {
        Self { stamp: vec![0; inputs], generation: 0, memo: vec![Complex64::new(0.0, 0.0); inputs * n] }
    }

    /// For every `t` in the candidate set: virtual centroids `ŷ_V(t)`,
    /// zero-forcing estimate `x̂(t)`, and score `‖ŷ_V(t) − Q_v(H x̂(t))‖²`
    /// where `Q_v` replaces each noiseless component by the centroid of its
    /// virtual cell. The lowest score wins; ties go to the lowest `t`.
    pub fn detect(
        &mut self,
        yq: &[usize],
        ctx: &DetectionContext,
        vq: &VirtualQuantizer,
    ) -> Result<(Vec<usize>, VqTrace), DetectionError> {
        ctx.check_shape(yq)?;
        if vq.physical().thresholds() != ctx.q.thresholds() || vq.physical().bin_count() != ctx.q.bin_count() {
            return Err(DetectionError::QuantizerMismatch);
        }
        let n = ctx.n;
        let vqz = vq.virtual_quantizer();
        let alphabet = ctx.c.len();
        if self.stamp.len() != ctx.inputs() || self.memo.len() != ctx.inputs() * n {
            *self = Self::new(ctx.inputs(), n);
        }
        self.generation += 1;

        // Per antenna and candidate cell: the centroid and its contribution
        // W[:, i] · centroid to the zero-forcing output.
        let cells: Vec<&[usize]> = yq.iter().map(|&b| vq.children(b)).collect();
        let centroids: Vec<Vec<Complex64>> =
            cells.iter().map(|cs| cs.iter().map(|&v| vqz.centroid(v)).collect()).collect();
        let contrib: Vec<Vec<Vec<Complex64>>> = (0..n)
            .map(|i| centroids[i].iter().map(|c| (0..n).map(|s| ctx.zf[(s, i)] * c).collect()).collect())
            .collect();

        let mut state = VqSearch {
            n,
            alphabet,
            best_score: f64::INFINITY,
            best_x: 0,
            best_t: 0,
            t: 0,
            slice_calls: 0,
            choice: vec![0; n],
            partial: vec![vec![Complex64::new(0.0, 0.0); n]; n + 1],
        };
        self.search(0, &mut state, ctx, vqz, &cells, &centroids, &contrib);
        let mut digits = vec![0; n];
        input_digits(state.best_x, alphabet, n, &mut digits);
        let trace = VqTrace {
            candidates: state.t,
            slice_calls: state.slice_calls,
            best_t: state.best_t,
            best_score: state.best_score,
        };
        Ok((digits, trace))
    }

    #[allow(clippy::too_many_arguments)]
    fn search(
        &mut self,
        level: usize,
        st: &mut VqSearch,
        ctx: &DetectionContext,
        vqz: &Quantizer,
        cells: &[&[usize]],
        centroids: &[Vec<Complex64>],
        contrib: &[Vec<Vec<Complex64>>],
    ) {
        if level == st.n {
            let z = &st.partial[st.n];
            let mut x = 0;
            for zs in z.iter() {
                x = x * st.alphabet + ctx.c.slice_unchecked(*zs);
            }
            st.slice_calls += st.n;
            let base = x * st.n;
            if self.stamp[x] != self.generation {
                self.stamp[x] = self.generation;
                for i in 0..st.n {
                    self.memo[base + i] = vqz.centroid(vqz.bin(ctx.mean(x, i)));
                }
            }
            let mut score = 0.0;
            for i in 0..st.n {
                score += (centroids[i][st.choice[i]] - self.memo[base + i]).norm_sqr();
            }
            if score < st.best_score {
                st.best_score = score;
                st.best_x = x;
                st.best_t = st.t;
            }
            st.t += 1;
            return;
        }
        for k in 0..cells[level].len() {
            st.choice[level] = k;
            for s in 0..st.n {
                st.partial[level + 1][s] = st.partial[level][s] + contrib[level][k][s];
            }
            self.search(level + 1, st, ctx, vqz, cells, centroids, contrib);
        }
    }
}

struct VqSearch {
    n: usize,
    alphabet: usize,
    best_score: f64,
    best_x: usize,
    best_t: usize,
    t: usize,
    slice_calls: usize,
    choice: Vec<usize>,
    partial: Vec<Vec<Complex64>>,
}

/// Virtual-quantization detection with fresh scratch space.
pub fn vq_detect(yq: &[usize], ctx: &DetectionContext, vq: &VirtualQuantizer) -> Result<Vec<usize>, DetectionError> {
    Ok(vq_detect_traced(yq, ctx, vq)?.0)
}

pub fn vq_detect_traced(
    yq: &[usize],
    ctx: &DetectionContext,
    vq: &VirtualQuantizer,
) -> Result<(Vec<usize>, VqTrace), DetectionError> {
    VqDetector::new(ctx.inputs(), ctx.n).detect(yq, ctx, vq)
}

/// Straightforward candidate-by-candidate evaluation, kept as the reference
/// for [`VqDetector`].
pub fn vq_detect_reference(
    yq: &[usize],
    ctx: &DetectionContext,
    vq: &VirtualQuantizer,
) -> Result<(Vec<usize>, f64), DetectionError> {
    let set = build_candidate_set(yq, vq);
    let vqz = vq.virtual_quantizer();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for t in set.iter() {
        let yv: Vec<Complex64> = t.iter().map(|&b| vqz.centroid(b)).collect();
        let xhat = zf_slice(&yv, ctx);
        let sym: Vec<Complex64> = xhat.iter().map(|&k| ctx.c.point(k)).collect();
        let rot = Complex64::from_polar(1.0, -ctx.phi);
        let hx: Vec<Complex64> = ctx.h0.mul_vec(&sym).into_iter().map(|v| v * rot).collect();
        let score: f64 = yv.iter().zip(&hx).map(|(a, m)| (a - vqz.centroid(vqz.bin(*m))).norm_sqr()).sum();
        if best.as_ref().is_none_or(|b| score < b.1) {
            best = Some((xhat, score));
        }
    }
    Ok(best.expect("candidate set is never empty"))
}
