//! Per-antenna quantizers: phase-only sectors, amplitude/phase annular
//! sectors and I/Q rectangles.
//!
//! Bin numbering (zero-based):
//! - phase-only: sector `m`, counted counter-clockwise from angle 0;
//! - amplitude/phase: `m + M·k` for sector `m` and ring `k`;
//! - I/Q: `j + S·i` for in-phase level `i` and quadrature level `j`.
//!
//! Every boundary is lower-inclusive, upper-exclusive.

use crate::stats::{self, Cell, GaussianApprox, Interval, RectCell, SectorCell, StatsError};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantizerError {
    #[error("non-finite input {0}")]
    InvalidInput(Complex64),
    #[error("invalid quantizer: {0}")]
    Invalid(String),
    #[error("refinement needs an equal-probability I/Q quantizer, got {0}")]
    UnsupportedFamily(String),
    #[error("Lloyd-Max did not converge after {iterations} iterations; last max threshold changes {trace:?}")]
    NonConvergence { iterations: usize, trace: Vec<f64> },
    #[error("codebook has not been computed")]
    MissingCodebook,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    PhaseOnly { sectors: usize },
    /// `amplitudes` holds `A_1 < … < A_{K-1}`; `K = amplitudes.len() + 1`.
    AmplitudePhase { sectors: usize, amplitudes: Vec<f64> },
    /// `thresholds` holds `I_1 < … < I_{S-1}`, shared by both axes.
    Iq { thresholds: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Equal-probability cells under the Gaussian approximation.
    Eqprob,
    /// Minimum mean squared quantization error (Lloyd-Max).
    Mmsqe,
    /// Thresholds supplied by the caller.
    Fixed,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Eqprob => "eqprob",
            Metric::Mmsqe => "mmsqe",
            Metric::Fixed => "fixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quantizer {
    family: Family,
    metric: Metric,
    /// Noise variance the design (and codebook) refers to.
    sigma2: Option<f64>,
    codebook: Option<Vec<Complex64>>,
}

fn check_increasing(v: &[f64], what: &str) -> Result<(), QuantizerError> {
    if v.iter().any(|t| !t.is_finite()) {
        return Err(QuantizerError::Invalid(format!("{what} must be finite")));
    }
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(QuantizerError::Invalid(format!("{what} must be strictly increasing: {v:?}")));
    }
    Ok(())
}

impl Quantizer {
    pub fn phase_only(sectors: usize) -> Result<Self, QuantizerError> {
        if sectors < 2 {
            return Err(QuantizerError::Invalid(format!("need at least 2 sectors, got {sectors}")));
        }
        Ok(Self { family: Family::PhaseOnly { sectors }, metric: Metric::Fixed, sigma2: None, codebook: None })
    }

    pub fn amplitude_phase(sectors: usize, amplitudes: Vec<f64>) -> Result<Self, QuantizerError> {
        if sectors < 2 {
            return Err(QuantizerError::Invalid(format!("need at least 2 sectors, got {sectors}")));
        }
        check_increasing(&amplitudes, "amplitude thresholds")?;
        if amplitudes.first().is_some_and(|a| *a <= 0.0) {
            return Err(QuantizerError::Invalid("amplitude thresholds must be positive".into()));
        }
        if amplitudes.is_empty() {
            return Self::phase_only(sectors);
        }
        Ok(Self {
            family: Family::AmplitudePhase { sectors, amplitudes },
            metric: Metric::Fixed,
            sigma2: None,
            codebook: None,
        })
    }

    pub fn iq(thresholds: Vec<f64>) -> Result<Self, QuantizerError> {
        if thresholds.is_empty() {
            return Err(QuantizerError::Invalid("I/Q quantizer needs at least one threshold".into()));
        }
        check_increasing(&thresholds, "I/Q thresholds")?;
        Ok(Self { family: Family::Iq { thresholds }, metric: Metric::Fixed, sigma2: None, codebook: None })
    }

    fn designed(mut self, metric: Metric, sigma2: f64) -> Self {
        self.metric = metric;
        self.sigma2 = Some(sigma2);
        self
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn design_sigma2(&self) -> Option<f64> {
        self.sigma2
    }

    pub fn is_iq(&self) -> bool {
        matches!(self.family, Family::Iq { .. })
    }

    /// I/Q levels per axis (`S`), for I/Q quantizers.
    pub fn iq_levels(&self) -> Option<usize> {
        match &self.family {
            Family::Iq { thresholds } => Some(thresholds.len() + 1),
            _ => None,
        }
    }

    pub fn thresholds(&self) -> &[f64] {
        match &self.family {
            Family::PhaseOnly { .. } => &[],
            Family::AmplitudePhase { amplitudes, .. } => amplitudes,
            Family::Iq { thresholds } => thresholds,
        }
    }

    /// Number of bins `T`.
    pub fn bin_count(&self) -> usize {
        match &self.family {
            Family::PhaseOnly { sectors } => *sectors,
            Family::AmplitudePhase { sectors, amplitudes } => sectors * (amplitudes.len() + 1),
            Family::Iq { thresholds } => (thresholds.len() + 1).pow(2),
        }
    }

    /// Bin index of `y`; the input must be finite.
    #[inline]
    pub fn bin(&self, y: Complex64) -> usize {
        match &self.family {
            Family::PhaseOnly { sectors } => sector_of(y, *sectors),
            Family::AmplitudePhase { sectors, amplitudes } => {
                let ring = amplitudes.partition_point(|a| *a <= y.norm());
                sector_of(y, *sectors) + sectors * ring
            }
            Family::Iq { thresholds } => {
                let s = thresholds.len() + 1;
                let i = thresholds.partition_point(|t| *t <= y.re);
                let j = thresholds.partition_point(|t| *t <= y.im);
                j + s * i
            }
        }
    }

    pub fn quantize_index(&self, y: Complex64) -> Result<usize, QuantizerError> {
        if !(y.re.is_finite() && y.im.is_finite()) {
            return Err(QuantizerError::InvalidInput(y));
        }
        Ok(self.bin(y))
    }

    /// Region of bin `j` in the complex plane.
    pub fn cell(&self, j: usize) -> Cell {
        match &self.family {
            Family::PhaseOnly { sectors } => Cell::Sector(sector_cell(*sectors, j, 0.0, f64::INFINITY)),
            Family::AmplitudePhase { sectors, amplitudes } => {
                let (ring, m) = (j / sectors, j % sectors);
                let lo = if ring == 0 { 0.0 } else { amplitudes[ring - 1] };
                let hi = amplitudes.get(ring).copied().unwrap_or(f64::INFINITY);
                Cell::Sector(sector_cell(*sectors, m, lo, hi))
            }
            Family::Iq { thresholds } => {
                let s = thresholds.len() + 1;
                Cell::Rect(RectCell { re: axis_interval(thresholds, j / s), im: axis_interval(thresholds, j % s) })
            }
        }
    }

    /// Distance from `y` to the nearest cell boundary. Phase boundaries are
    /// measured along the arc, so a zero-amplitude input reports zero.
    pub fn boundary_distance(&self, y: Complex64) -> f64 {
        let axis = |t: &[f64], x: f64| t.iter().map(|b| (x - b).abs()).fold(f64::INFINITY, f64::min);
        let arc = |sectors: usize| {
            let w = TAU / sectors as f64;
            let a = stats::wrap_angle(y.arg());
            let off = a.rem_euclid(w);
            y.norm() * off.min(w - off).min(PI / 2.0).sin()
        };
        match &self.family {
            Family::PhaseOnly { sectors } => arc(*sectors),
            Family::AmplitudePhase { sectors, amplitudes } => arc(*sectors).min(axis(amplitudes, y.norm())),
            Family::Iq { thresholds } => axis(thresholds, y.re).min(axis(thresholds, y.im)),
        }
    }

    /// Attaches the centroid codebook under the approximation `CN(0, 1 + σ²)`.
    pub fn with_codebook(mut self, sigma2: f64) -> Result<Self, QuantizerError> {
        self.codebook = Some(centroid_codebook(&self, sigma2)?);
        if self.sigma2.is_none() {
            self.sigma2 = Some(sigma2);
        }
        Ok(self)
    }

    pub fn codebook(&self) -> Option<&[Complex64]> {
        self.codebook.as_deref()
    }

    /// Reconstruction value of bin `j`.
    #[inline]
    pub fn centroid(&self, j: usize) -> Complex64 {
        self.codebook.as_ref().expect("codebook not computed")[j]
    }

    /// Short scheme name used in result files.
    pub fn descriptor(&self) -> String {
        match &self.family {
            Family::PhaseOnly { sectors } => format!("phase-m{sectors}"),
            Family::AmplitudePhase { sectors, amplitudes } => {
                format!("ap-{}-k{}m{}", self.metric, amplitudes.len() + 1, sectors)
            }
            Family::Iq { thresholds } => format!("iq-{}-s{}", self.metric, thresholds.len() + 1),
        }
    }

    /// Mean squared quantization error of a centroid codebook under the
    /// design approximation: `E|Y|² − Σ_j P_j |c_j|²`.
    pub fn msqe(&self, sigma2: f64) -> Result<f64, QuantizerError> {
        let approx = GaussianApprox::received(sigma2)?;
        let book = match &self.codebook {
            Some(b) => b.clone(),
            None => centroid_codebook(self, sigma2)?,
        };
        let mut captured = 0.0;
        for (j, c) in book.iter().enumerate() {
            captured += approx.prob(&self.cell(j))? * c.norm_sqr();
        }
        Ok(approx.var - captured)
    }

    pub fn to_document(&self) -> QuantizerDocument {
        let (family, s, k, m) = match &self.family {
            Family::PhaseOnly { sectors } => ("phase", None, None, Some(*sectors)),
            Family::AmplitudePhase { sectors, amplitudes } => ("ap", None, Some(amplitudes.len() + 1), Some(*sectors)),
            Family::Iq { thresholds } => ("iq", Some(thresholds.len() + 1), None, None),
        };
        QuantizerDocument {
            family: family.to_string(),
            metric: self.metric,
            s,
            k,
            m,
            thresholds: self.thresholds().to_vec(),
            codebook: self.codebook.as_ref().map(|b| b.iter().map(|c| [c.re, c.im]).collect()),
            sigma2: self.sigma2,
        }
    }
}

/// Serialized form of a quantizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerDocument {
    pub family: String,
    pub metric: Metric,
    #[serde(rename = "S", skip_serializing_if = "Option::is_none", default)]
    pub s: Option<usize>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none", default)]
    pub k: Option<usize>,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none", default)]
    pub m: Option<usize>,
    pub thresholds: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub codebook: Option<Vec<[f64; 2]>>,
    pub sigma2: Option<f64>,
}

impl QuantizerDocument {
    pub fn to_quantizer(&self) -> Result<Quantizer, QuantizerError> {
        let mut q = match self.family.as_str() {
            "phase" => Quantizer::phase_only(self.m.unwrap_or(0))?,
            "ap" => Quantizer::amplitude_phase(self.m.unwrap_or(0), self.thresholds.clone())?,
            "iq" => Quantizer::iq(self.thresholds.clone())?,
            other => return Err(QuantizerError::Invalid(format!("unknown family `{other}`"))),
        };
        q.metric = self.metric;
        q.sigma2 = self.sigma2;
        if let Some(book) = &self.codebook {
            if book.len() != q.bin_count() {
                return Err(QuantizerError::Invalid(format!(
                    "codebook has {} entries, quantizer has {} bins",
                    book.len(),
                    q.bin_count()
                )));
            }
            q.codebook = Some(book.iter().map(|c| Complex64::new(c[0], c[1])).collect());
        }
        Ok(q)
    }
}

#[inline]
fn sector_of(y: Complex64, sectors: usize) -> usize {
    let mut a = y.im.atan2(y.re);
    if a < 0.0 {
        a += TAU;
    }
    let s = (a * sectors as f64 / TAU) as usize;
    s.min(sectors - 1)
}

fn sector_cell(sectors: usize, m: usize, r_lo: f64, r_hi: f64) -> SectorCell {
    let w = TAU / sectors as f64;
    SectorCell { r_lo, r_hi, angle_lo: w * m as f64, angle_hi: w * (m + 1) as f64 }
}

fn axis_interval(thresholds: &[f64], level: usize) -> Interval {
    let lo = if level == 0 { f64::NEG_INFINITY } else { thresholds[level - 1] };
    let hi = thresholds.get(level).copied().unwrap_or(f64::INFINITY);
    Interval::new(lo, hi)
}

/// Equal-probability I/Q thresholds `√((1+σ²)/2)·Φ⁻¹(i/S)`.
pub fn design_equal_prob_iq(levels: usize, sigma2: f64) -> Result<Quantizer, QuantizerError> {
    check_design(sigma2)?;
    if levels < 2 {
        return Err(QuantizerError::Invalid(format!("need S >= 2, got {levels}")));
    }
    let scale = ((1.0 + sigma2) / 2.0).sqrt();
    let thresholds = (1..levels)
        .map(|i| Ok(scale * stats::std_normal_quantile(i as f64 / levels as f64)?))
        .collect::<Result<Vec<_>, StatsError>>()?;
    Ok(Quantizer::iq(thresholds)?.designed(Metric::Eqprob, sigma2))
}

/// Equal-probability amplitude/phase design: uniform sectors and Rayleigh
/// quantiles `A_i = √((1+σ²)·ln(K/(K−i)))`.
pub fn design_equal_prob_ap(rings: usize, sectors: usize, sigma2: f64) -> Result<Quantizer, QuantizerError> {
    check_design(sigma2)?;
    if rings < 1 {
        return Err(QuantizerError::Invalid("need K >= 1".into()));
    }
    let k = rings as f64;
    let amplitudes = (1..rings).map(|i| ((1.0 + sigma2) * (k / (k - i as f64)).ln()).sqrt()).collect();
    Ok(Quantizer::amplitude_phase(sectors, amplitudes)?.designed(Metric::Eqprob, sigma2))
}

pub fn design_phase_only(sectors: usize) -> Result<Quantizer, QuantizerError> {
    Quantizer::phase_only(sectors)
}

fn check_design(sigma2: f64) -> Result<(), QuantizerError> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(QuantizerError::Invalid(format!("noise variance must be positive, got {sigma2}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmsqeFamily {
    Iq { levels: usize },
    AmplitudePhase { rings: usize, sectors: usize },
}

pub const LLOYD_TOL: f64 = 1e-10;
pub const LLOYD_MAX_ITER: usize = 10_000;

/// Lloyd-Max design under the Gaussian approximation.
///
/// I/Q: both axes solve the scalar problem for `N(0, (1+σ²)/2)`.
/// Amplitude/phase: sectors stay uniform and the ring radii solve the scalar
/// problem for the Rayleigh amplitude density. With a centroid codebook the
/// angular average of the 2-D error reduces exactly to that scalar problem.
pub fn design_mmsqe(family: MmsqeFamily, sigma2: f64) -> Result<Quantizer, QuantizerError> {
    check_design(sigma2)?;
    match family {
        MmsqeFamily::Iq { levels } => {
            let init = design_equal_prob_iq(levels, sigma2)?;
            let s = ((1.0 + sigma2) / 2.0).sqrt();
            let unit: Vec<f64> = init.thresholds().iter().map(|t| t / s).collect();
            let t = lloyd_max(&unit, gaussian_cell_mean)?;
            Ok(Quantizer::iq(t.iter().map(|x| x * s).collect())?.designed(Metric::Mmsqe, sigma2))
        }
        MmsqeFamily::AmplitudePhase { rings, sectors } => {
            let init = design_equal_prob_ap(rings, sectors, sigma2)?;
            let v = (1.0 + sigma2).sqrt();
            let unit: Vec<f64> = init.thresholds().iter().map(|a| a / v).collect();
            let a = if unit.is_empty() { unit } else { lloyd_max(&unit, rayleigh_cell_mean)? };
            Ok(Quantizer::amplitude_phase(sectors, a.iter().map(|x| x * v).collect())?.designed(Metric::Mmsqe, sigma2))
        }
    }
}

/// `E[Z | a <= Z < b]`, `Z ~ N(0, 1)`.
fn gaussian_cell_mean(a: f64, b: f64) -> Result<f64, StatsError> {
    stats::truncated_normal_mean(a, b)
}

/// `E[R | a <= R < b]` for the Rayleigh density `2r e^{−r²}` (unit second moment).
pub fn rayleigh_cell_mean(a: f64, b: f64) -> Result<f64, StatsError> {
    let a = a.max(0.0);
    let tail = |r: f64| if r.is_infinite() { 0.0 } else { (-r * r).exp() };
    // ∫ 2r² e^{−r²} dr = −r e^{−r²} + (√π/2) erf(r)
    let moment = |r: f64| if r.is_infinite() { 0.0 } else { r * (-r * r).exp() };
    let prob = tail(a) - tail(b);
    if !(prob > 0.0) {
        return Err(StatsError::DegenerateInterval { lo: a, hi: b });
    }
    let erf_part = 0.5 * PI.sqrt() * (libm::erfc(a) - if b.is_infinite() { 0.0 } else { libm::erfc(b) });
    Ok((moment(a) - moment(b) + erf_part) / prob)
}

/// Scalar Lloyd-Max iteration from `init` thresholds: reconstruction levels
/// are cell means, thresholds are midpoints of adjacent levels.
fn lloyd_max(
    init: &[f64],
    cell_mean: impl Fn(f64, f64) -> Result<f64, StatsError>,
) -> Result<Vec<f64>, QuantizerError> {
    let mut t = init.to_vec();
    let mut trace = Vec::new();
    for _ in 0..LLOYD_MAX_ITER {
        let levels = lloyd_levels(&t, &cell_mean)?;
        let next: Vec<f64> = levels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let change = t.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        t = next;
        trace.push(change);
        if trace.len() > 8 {
            trace.remove(0);
        }
        if change < LLOYD_TOL {
            return Ok(t);
        }
    }
    Err(QuantizerError::NonConvergence { iterations: LLOYD_MAX_ITER, trace })
}

fn lloyd_levels(t: &[f64], cell_mean: &impl Fn(f64, f64) -> Result<f64, StatsError>) -> Result<Vec<f64>, StatsError> {
    (0..=t.len())
        .map(|i| {
            let lo = if i == 0 { f64::NEG_INFINITY } else { t[i - 1] };
            let hi = t.get(i).copied().unwrap_or(f64::INFINITY);
            cell_mean(lo, hi)
        })
        .collect()
}

/// Centroids of every bin under `CN(0, 1 + σ²)`.
pub fn centroid_codebook(q: &Quantizer, sigma2: f64) -> Result<Vec<Complex64>, QuantizerError> {
    let approx = GaussianApprox::received(sigma2)?;
    match &q.family {
        // Separable: per-axis truncated means.
        Family::Iq { thresholds } => {
            let s = (0.5 * approx.var).sqrt();
            let axis = (0..=thresholds.len())
                .map(|l| {
                    let iv = axis_interval(thresholds, l);
                    Ok(s * stats::truncated_normal_mean(iv.lo / s, iv.hi / s)?)
                })
                .collect::<Result<Vec<_>, StatsError>>()?;
            let n = axis.len();
            Ok((0..n * n).map(|j| Complex64::new(axis[j / n], axis[j % n])).collect())
        }
        _ => (0..q.bin_count())
            .map(|j| stats::cell_centroid(&approx, &q.cell(j)).map_err(QuantizerError::from))
            .collect(),
    }
}

/// Physical I/Q quantizer together with an exact refinement.
#[derive(Debug, Clone)]
pub struct VirtualQuantizer {
    physical: Quantizer,
    virtual_q: Quantizer,
    coarsen: Vec<usize>,
    children: Vec<Vec<usize>>,
}

/// Builds the virtual quantizer `design_equal_prob_iq(factor·S, σ²)` over an
/// equal-probability physical quantizer. Both carry centroid codebooks.
pub fn refine(physical: &Quantizer, factor: usize) -> Result<VirtualQuantizer, QuantizerError> {
    let (Family::Iq { thresholds }, Metric::Eqprob, Some(sigma2)) = (&physical.family, physical.metric, physical.sigma2)
    else {
        return Err(QuantizerError::UnsupportedFamily(physical.descriptor()));
    };
    if factor < 2 {
        return Err(QuantizerError::Invalid(format!("refinement factor must be >= 2, got {factor}")));
    }
    let s = thresholds.len() + 1;
    let virtual_q = design_equal_prob_iq(s * factor, sigma2)?.with_codebook(sigma2)?;
    let vt = virtual_q.thresholds();
    for (i, t) in thresholds.iter().enumerate() {
        if vt[(i + 1) * factor - 1].to_bits() != t.to_bits() {
            return Err(QuantizerError::Invalid(format!("physical threshold {t} is not a virtual threshold")));
        }
    }
    let physical = if physical.codebook.is_some() { physical.clone() } else { physical.clone().with_codebook(sigma2)? };
    let vs = s * factor;
    // Level containment along one axis: count physical thresholds at or
    // below the lower edge of the virtual interval.
    let parent_level = |vl: usize| {
        let lo = axis_interval(vt, vl).lo;
        thresholds.partition_point(|t| *t <= lo)
    };
    let mut coarsen = vec![0; vs * vs];
    let mut children = vec![Vec::new(); s * s];
    for (vb, slot) in coarsen.iter_mut().enumerate() {
        let pb = parent_level(vb % vs) + s * parent_level(vb / vs);
        *slot = pb;
        children[pb].push(vb);
    }
    Ok(VirtualQuantizer { physical, virtual_q, coarsen, children })
}

impl VirtualQuantizer {
    pub fn physical(&self) -> &Quantizer {
        &self.physical
    }

    pub fn virtual_quantizer(&self) -> &Quantizer {
        &self.virtual_q
    }

    pub fn coarsen(&self, virtual_bin: usize) -> usize {
        self.coarsen[virtual_bin]
    }

    /// Virtual bins inside physical bin `p`, ascending.
    pub fn children(&self, physical_bin: usize) -> &[usize] {
        &self.children[physical_bin]
    }

    pub fn descriptor(&self) -> String {
        format!("{}+v{}", self.physical.descriptor(), self.virtual_q.iq_levels().unwrap_or(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_prob_iq_thresholds() {
        let q = design_equal_prob_iq(4, 0.1).unwrap();
        let t = q.thresholds();
        assert_eq!(t.len(), 3);
        assert!((t[0] + 0.5002).abs() < 1e-4 && t[1] == 0.0 && (t[2] - 0.5002).abs() < 1e-4, "{t:?}");
        assert!((t[2] - (1.1f64 / 2.0).sqrt() * 0.674_489_750_196_081_7).abs() < 1e-12);
        for s2 in [0.01, 1.0, 10.0] {
            assert_eq!(design_equal_prob_iq(2, s2).unwrap().thresholds(), &[0.0]);
        }
    }

    #[test]
    fn equal_prob_iq_cells_are_equiprobable() {
        let q = design_equal_prob_iq(4, 0.1).unwrap();
        let approx = GaussianApprox::received(0.1).unwrap();
        for j in 0..16 {
            assert!((approx.prob(&q.cell(j)).unwrap() - 1.0 / 16.0).abs() < 1e-8);
        }
    }

    #[test]
    fn equal_prob_ap_thresholds() {
        let q = design_equal_prob_ap(2, 8, 0.1).unwrap();
        assert!((q.thresholds()[0] - (1.1 * 2f64.ln()).sqrt()).abs() < 1e-15);
        assert!((q.thresholds()[0] - 0.8732).abs() < 1e-4);
        assert!(matches!(design_equal_prob_ap(1, 8, 0.1).unwrap().family(), Family::PhaseOnly { sectors: 8 }));
        // σ² → 0 limit evaluated directly (design requires σ² > 0).
        let a: Vec<f64> = (1..3).map(|i| (3f64 / (3.0 - i as f64)).ln().sqrt()).collect();
        assert!((a[0] - 0.6368).abs() < 1e-4 && (a[1] - 1.0481).abs() < 1e-4);
        let q = design_equal_prob_ap(3, 8, 1e-12).unwrap();
        let approx = GaussianApprox::received(1e-12).unwrap();
        let radii = [0.0, q.thresholds()[0], q.thresholds()[1], f64::INFINITY];
        for k in 0..3 {
            // Rayleigh cdf oracle 1 − e^{−A²/(1+σ²)}
            let cdf = |r: f64| 1.0 - (-r * r / approx.var).exp();
            assert!((cdf(radii[k + 1]) - cdf(radii[k]) - 1.0 / 3.0).abs() < 1e-12);
        }
        for j in 0..q.bin_count() {
            assert!((approx.prob(&q.cell(j)).unwrap() - 1.0 / 24.0).abs() < 1e-8);
        }
    }

    #[test]
    fn phase_only_regions() {
        let q = design_phase_only(8).unwrap();
        assert_eq!(q.bin(Complex64::from_polar(1.0, PI / 8.0)), 0);
        for r in [1e-3, 1.0, 50.0] {
            assert_eq!(q.bin(Complex64::from_polar(r, 3.0)), q.bin(Complex64::from_polar(1.0, 3.0)));
        }
        match q.cell(2) {
            Cell::Sector(c) => {
                assert!((c.angle_lo - PI / 2.0).abs() < 1e-15 && (c.angle_hi - 3.0 * PI / 4.0).abs() < 1e-15)
            }
            _ => panic!(),
        }
        assert!(design_phase_only(1).is_err());
    }

    #[test]
    fn quantize_index_examples() {
        let q = design_equal_prob_iq(4, 0.1).unwrap();
        // Re, Im ∈ [0, 0.5002) → level 2 on both axes
        assert_eq!(q.quantize_index(Complex64::new(0.3, 0.3)).unwrap(), 2 + 4 * 2);
        let t1 = q.thresholds()[0];
        assert_eq!(q.bin(Complex64::new(t1, -5.0)), 4);
        assert!(q.quantize_index(Complex64::new(f64::INFINITY, 0.0)).is_err());

        let ap = Quantizer::amplitude_phase(8, vec![1.0]).unwrap();
        assert_eq!(ap.bin(Complex64::from_polar(1.5, PI / 8.0)), 8);
        assert_eq!(ap.bin(Complex64::from_polar(0.5, PI / 8.0)), 0);
        assert_eq!(ap.bin(Complex64::new(1.0, 0.0)), 8);
    }

    #[test]
    fn lloyd_max_unit_gaussian_four_levels() {
        let q = design_mmsqe(MmsqeFamily::Iq { levels: 4 }, 1.0).unwrap();
        // σ² = 1 → per-axis variance exactly 1.
        let t = q.thresholds();
        assert!(t[1].abs() < 1e-9);
        assert!((t[2] - 0.9816).abs() < 1e-4, "{t:?}");
        assert!((t[0] + t[2]).abs() < 1e-9);
        let q2 = design_mmsqe(MmsqeFamily::Iq { levels: 2 }, 0.3).unwrap();
        assert!(q2.thresholds()[0].abs() < 1e-12);
    }

    /// Independent fixed-point iteration on a fine quadrature grid from
    /// random starts, compared with the Lloyd-Max design.
    #[test]
    fn lloyd_max_matches_independent_iteration() {
        let grid: Vec<f64> = (0..40001).map(|i| -8.0 + 16.0 * i as f64 / 40000.0).collect();
        let pdf: Vec<f64> = grid.iter().map(|x| stats::std_normal_pdf(*x)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..3 {
            let mut t: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            t.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for _ in 0..3000 {
                let mut num = [0.0; 4];
                let mut den = [0.0; 4];
                for (x, p) in grid.iter().zip(&pdf) {
                    let c = t.partition_point(|b| b <= x);
                    num[c] += x * p;
                    den[c] += p;
                }
                let lv: Vec<f64> = (0..4).map(|c| num[c] / den[c]).collect();
                t = lv.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
            }
            assert!((t[2] - 0.9816).abs() < 2e-3, "{t:?}");
        }
    }

    #[test]
    fn lloyd_fixed_point_consistency() {
        let sigma2 = 0.2;
        let q = design_mmsqe(MmsqeFamily::Iq { levels: 4 }, sigma2).unwrap().with_codebook(sigma2).unwrap();
        let s = 4;
        let axis: Vec<f64> = (0..s).map(|l| q.centroid(l * s).re).collect();
        for (i, t) in q.thresholds().iter().enumerate() {
            assert!((t - 0.5 * (axis[i] + axis[i + 1])).abs() < 1e-8);
        }
    }

    #[test]
    fn mmsqe_beats_equal_probability() {
        for sigma2 in [0.01, 0.1, 1.0] {
            let iq_m = design_mmsqe(MmsqeFamily::Iq { levels: 4 }, sigma2).unwrap().msqe(sigma2).unwrap();
            let iq_e = design_equal_prob_iq(4, sigma2).unwrap().msqe(sigma2).unwrap();
            assert!(iq_m <= iq_e + 1e-12, "{iq_m} {iq_e}");
            let ap_m = design_mmsqe(MmsqeFamily::AmplitudePhase { rings: 2, sectors: 8 }, sigma2)
                .unwrap()
                .msqe(sigma2)
                .unwrap();
            let ap_e = design_equal_prob_ap(2, 8, sigma2).unwrap().msqe(sigma2).unwrap();
            assert!(ap_m <= ap_e + 1e-12, "{ap_m} {ap_e}");
        }
    }

    #[test]
    fn rayleigh_lloyd_fixed_point() {
        let q = design_mmsqe(MmsqeFamily::AmplitudePhase { rings: 3, sectors: 8 }, 0.1).unwrap();
        let v = 1.1f64.sqrt();
        let a: Vec<f64> = q.thresholds().iter().map(|x| x / v).collect();
        let bounds = [0.0, a[0], a[1], f64::INFINITY];
        let lv: Vec<f64> = (0..3).map(|k| rayleigh_cell_mean(bounds[k], bounds[k + 1]).unwrap()).collect();
        assert!((a[0] - 0.5 * (lv[0] + lv[1])).abs() < 1e-8);
        assert!((a[1] - 0.5 * (lv[1] + lv[2])).abs() < 1e-8);
        // Whole-line Rayleigh mean √π/2.
        assert!((rayleigh_cell_mean(0.0, f64::INFINITY).unwrap() - PI.sqrt() / 2.0).abs() < 1e-14);
    }

    #[test]
    fn codebook_properties() {
        let sigma2 = 0.1;
        let q = design_equal_prob_iq(4, sigma2).unwrap().with_codebook(sigma2).unwrap();
        let approx = GaussianApprox::received(sigma2).unwrap();
        let total: Complex64 = (0..16).map(|j| q.centroid(j) * approx.prob(&q.cell(j)).unwrap()).sum();
        assert!(total.norm() < 1e-8);
        let s = (1.1f64 / 2.0).sqrt();
        // inner cell [0, t): s·E[Z | 0 <= Z < 0.67449]
        let inner = q.centroid(2 + 4 * 2);
        assert!((inner.re - s * 0.324_662_830_869_303).abs() < 1e-9, "{inner}");
        assert!((q.centroid(3 + 4 * 3).re - 0.9427).abs() < 1e-4);
        // closed under multiplication by j
        let j = Complex64::new(0.0, 1.0);
        for b in 0..16 {
            let rotated = q.centroid(b) * j;
            assert!((0..16).any(|k| (q.centroid(k) - rotated).norm() < 1e-12));
        }
        let ap = design_equal_prob_ap(2, 8, sigma2).unwrap().with_codebook(sigma2).unwrap();
        let total: Complex64 = (0..16).map(|b| ap.centroid(b) * approx.prob(&ap.cell(b)).unwrap()).sum();
        assert!(total.norm() < 1e-8);
    }

    #[test]
    fn refinement_structure() {
        let sigma2 = 0.05;
        let phys = design_equal_prob_iq(4, sigma2).unwrap();
        let vq = refine(&phys, 2).unwrap();
        assert_eq!(vq.virtual_quantizer().bin_count(), 64);
        for p in 0..16 {
            assert_eq!(vq.children(p).len(), 4);
        }
        for t in phys.thresholds() {
            assert!(vq.virtual_quantizer().thresholds().iter().any(|v| v.to_bits() == t.to_bits()));
        }
        let vq16 = refine(&design_equal_prob_iq(8, sigma2).unwrap(), 2).unwrap();
        assert_eq!(vq16.virtual_quantizer().bin_count(), 256);
        assert!((0..64).all(|p| vq16.children(p).len() == 4));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100_000 {
            let y = Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            assert_eq!(vq.coarsen(vq.virtual_quantizer().bin(y)), phys.bin(y));
        }
        assert!(matches!(
            refine(&design_equal_prob_ap(2, 8, 0.1).unwrap(), 2),
            Err(QuantizerError::UnsupportedFamily(_))
        ));
        assert!(refine(&design_mmsqe(MmsqeFamily::Iq { levels: 4 }, 0.1).unwrap(), 2).is_err());
    }

    #[test]
    fn document_round_trip() {
        let q = design_equal_prob_ap(2, 8, 0.1).unwrap().with_codebook(0.1).unwrap();
        let doc = q.to_document();
        let text = serde_json::to_string(&doc).unwrap();
        assert!(text.contains("\"K\":2") && text.contains("\"M\":8"));
        let back: QuantizerDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_quantizer().unwrap(), q);
    }

    #[test]
    fn invalid_constructions() {
        assert!(Quantizer::iq(vec![0.5, 0.1]).is_err());
        assert!(Quantizer::amplitude_phase(8, vec![-1.0]).is_err());
        assert!(Quantizer::iq(vec![]).is_err());
        assert!(design_equal_prob_iq(4, 0.0).is_err());
    }

    /// Region predicates written directly from the inequalities.
    fn predicate_member(q: &Quantizer, y: Complex64, j: usize) -> bool {
        match q.cell(j) {
            Cell::Rect(r) => r.re.contains(y.re) && r.im.contains(y.im),
            Cell::Sector(s) => {
                let a = stats::wrap_angle(y.arg());
                s.r_lo <= y.norm() && y.norm() < s.r_hi && s.angle_lo <= a && a < s.angle_hi
            }
        }
    }

    #[test]
    fn tiling_matches_predicates() {
        let qs = [
            design_equal_prob_iq(4, 0.1).unwrap(),
            design_equal_prob_ap(3, 8, 0.1).unwrap(),
            design_phase_only(16).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1_000_000 / qs.len() {
            let y = Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            for q in &qs {
                let members: Vec<usize> = (0..q.bin_count()).filter(|&j| predicate_member(q, y, j)).collect();
                assert_eq!(members, vec![q.bin(y)], "{y}");
            }
        }
    }

    proptest! {
        #[test]
        fn iq_bin_respects_lower_inclusive(level in 0usize..3, im in -2.0f64..2.0) {
            let q = design_equal_prob_iq(4, 0.1).unwrap();
            let t = q.thresholds()[level];
            let b = q.bin(Complex64::new(t, im));
            prop_assert_eq!(b / 4, level + 1);
        }
    }
}
