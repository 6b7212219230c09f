//! LoS MIMO channel matrices built from array geometry, and the AWGN model.

use crate::linalg::CMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("unsupported array size {0} (expected 2 or 4)")]
    UnsupportedSize(usize),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("input has {got} entries, channel expects {expected}")]
    Shape { expected: usize, got: usize },
    #[error("planar degrees-of-freedom estimate needs both aperture areas")]
    MissingAreas,
    #[error("noise variance must be positive and finite, got {0}")]
    Noise(f64),
    #[error("non-finite phase")]
    Phase,
    #[error("invalid phase policy `{0}` (expected fixed:<rad>, uniform, grid:<n> or avg)")]
    PhiPolicy(String),
}

/// Symmetric LoS link geometry. All lengths in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct LosGeometry {
    pub range_m: f64,
    pub spacing_m: f64,
    pub wavelength_m: f64,
    pub array_size: usize,
    pub nominal_range_m: Option<f64>,
    /// Transmit and receive aperture areas in m², for the planar DoF estimate.
    pub apertures_m2: Option<(f64, f64)>,
}

impl LosGeometry {
    pub fn new(range_m: f64, spacing_m: f64, wavelength_m: f64, array_size: usize) -> Result<Self, ChannelError> {
        let g = Self { range_m, spacing_m, wavelength_m, array_size, nominal_range_m: None, apertures_m2: None };
        g.validate()?;
        Ok(g)
    }

    pub fn from_carrier_ghz(range_m: f64, spacing_m: f64, carrier_ghz: f64, array_size: usize) -> Result<Self, ChannelError> {
        if !(carrier_ghz > 0.0) {
            return Err(ChannelError::Geometry(format!("carrier frequency {carrier_ghz} GHz")));
        }
        Self::new(range_m, spacing_m, wavelength_from_ghz(carrier_ghz), array_size)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        for (name, v) in [("range", self.range_m), ("spacing", self.spacing_m), ("wavelength", self.wavelength_m)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ChannelError::Geometry(format!("{name} must be positive, got {v}")));
            }
        }
        if !matches!(self.array_size, 2 | 4) {
            return Err(ChannelError::UnsupportedSize(self.array_size));
        }
        Ok(())
    }

    pub fn with_range(&self, range_m: f64) -> Self {
        Self { range_m, ..self.clone() }
    }
}

pub fn wavelength_from_ghz(carrier_ghz: f64) -> f64 {
    SPEED_OF_LIGHT / (carrier_ghz * 1e9)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseMode {
    Exact,
    Approximate,
}

/// Cross-over phase reduced to `[0, 2π)`.
pub fn crossover_phase(g: &LosGeometry, mode: PhaseMode) -> f64 {
    let (r, d, lambda) = (g.range_m, g.spacing_m, g.wavelength_m);
    let theta = match mode {
        // sqrt(R² + d²) − R, written to avoid cancellation for R ≫ d
        PhaseMode::Exact => TAU / lambda * (d * d / ((r * r + d * d).sqrt() + r)),
        PhaseMode::Approximate => PI * d * d / (lambda * r),
    };
    crate::stats::wrap_angle(theta)
}

/// Unreduced exact cross-over phase, monotone in `d`.
fn exact_phase_unreduced(r: f64, d: f64, lambda: f64) -> f64 {
    TAU / lambda * (d * d / ((r * r + d * d).sqrt() + r))
}

/// Spacing `d` at which the exact cross-over phase at `range_m` equals
/// `target` (in `(0, 2π)`), found by bisection to `1e-12` relative width.
pub fn calibrate_spacing(range_m: f64, wavelength_m: f64, target: f64) -> Result<f64, ChannelError> {
    if !(target > 0.0 && target < TAU) {
        return Err(ChannelError::Geometry(format!("target phase {target} outside (0, 2π)")));
    }
    if !(range_m > 0.0 && wavelength_m > 0.0) {
        return Err(ChannelError::Geometry("range and wavelength must be positive".into()));
    }
    let mut lo = 0.0;
    let mut hi = (target * wavelength_m * range_m / PI).sqrt() * 2.0 + wavelength_m;
    while exact_phase_unreduced(range_m, hi, wavelength_m) < target {
        hi *= 2.0;
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if exact_phase_unreduced(range_m, mid, wavelength_m) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofKind {
    Linear1D,
    Planar2D,
}

/// Spatial degrees-of-freedom estimate.
pub fn dof_estimate(g: &LosGeometry, kind: DofKind) -> Result<f64, ChannelError> {
    let (r, lambda) = (g.range_m, g.wavelength_m);
    match kind {
        DofKind::Linear1D => {
            let len = (g.array_size as f64 - 1.0) * g.spacing_m;
            Ok(len * len / (r * lambda) + 1.0)
        }
        DofKind::Planar2D => {
            let (at, ar) = g.apertures_m2.ok_or(ChannelError::MissingAreas)?;
            Ok(at * ar / (r * r * lambda * lambda) + 1.0)
        }
    }
}

/// Path-length pattern `m(i, k)` of the symmetric 2×2 planar array: the
/// number of cross-over phase increments between transmit `k` and receive `i`.
const PATTERN_4: [[u8; 4]; 4] = [[0, 1, 2, 1], [1, 0, 1, 2], [2, 1, 0, 1], [1, 2, 1, 0]];
const PATTERN_2: [[u8; 2]; 2] = [[0, 1], [1, 0]];

/// Normalized LoS channel matrix with unit-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub theta: f64,
    pub phi: f64,
    matrix: CMatrix,
}

impl ChannelMatrix {
    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn entry(&self, i: usize, k: usize) -> Complex64 {
        self.matrix[(i, k)]
    }

    pub fn gram(&self) -> CMatrix {
        self.matrix.conj_transpose().matmul(&self.matrix)
    }

    /// Noiseless output `H x`.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.matrix.mul_vec(x)
    }

    /// Same geometry with a different common phase.
    pub fn with_phi(&self, phi: f64) -> Self {
        los_channel(self.n(), self.theta, phi).expect("size already validated")
    }
}

pub fn los_channel(n: usize, theta: f64, phi: f64) -> Result<ChannelMatrix, ChannelError> {
    if !(theta.is_finite() && phi.is_finite()) {
        return Err(ChannelError::Phase);
    }
    let (norm, pattern): (f64, &dyn Fn(usize, usize) -> u8) = match n {
        2 => (FRAC_1_SQRT_2, &|i, k| PATTERN_2[i][k]),
        4 => (0.5, &|i, k| PATTERN_4[i][k]),
        other => return Err(ChannelError::UnsupportedSize(other)),
    };
    let common = Complex64::from_polar(norm, -phi);
    let matrix = CMatrix::from_fn(n, n, |i, k| common * Complex64::from_polar(1.0, -theta * pattern(i, k) as f64));
    Ok(ChannelMatrix { theta, phi, matrix })
}

/// Default number of grid points for averages over the common phase.
pub const PHI_GRID_DEFAULT: usize = 256;

/// How the common phase `Φ` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhiPolicy {
    Fixed(f64),
    /// Fresh `Φ ~ U[0, 2π)` per frame; expectations use the default grid.
    Uniform,
    /// Uniform grid `2πk/n`, `k = 0..n`.
    Grid(usize),
}

impl PhiPolicy {
    /// Points of the deterministic grid used for expectations over `Φ`.
    pub fn grid(&self) -> Vec<f64> {
        match *self {
            PhiPolicy::Fixed(phi) => vec![phi],
            PhiPolicy::Uniform => uniform_grid(PHI_GRID_DEFAULT),
            PhiPolicy::Grid(n) => uniform_grid(n),
        }
    }
}

fn uniform_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| TAU * k as f64 / n as f64).collect()
}

impl fmt::Display for PhiPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhiPolicy::Fixed(phi) => write!(f, "fixed:{phi}"),
            PhiPolicy::Uniform => f.write_str("uniform"),
            PhiPolicy::Grid(n) => write!(f, "grid:{n}"),
        }
    }
}

impl FromStr for PhiPolicy {
    type Err = ChannelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ChannelError::PhiPolicy(s.to_string());
        match s.split_once(':') {
            None if s == "uniform" || s == "uniform-random" => Ok(PhiPolicy::Uniform),
            None if s == "avg" => Ok(PhiPolicy::Grid(PHI_GRID_DEFAULT)),
            Some(("fixed", v)) => {
                let phi: f64 = v.trim().parse().map_err(|_| bad())?;
                if phi.is_finite() {
                    Ok(PhiPolicy::Fixed(phi))
                } else {
                    Err(bad())
                }
            }
            Some(("grid", v)) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(PhiPolicy::Grid(n)),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

/// AWGN level for unit-energy symbols: `SNR = 1 / σ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Total complex variance per receive antenna.
    pub sigma2: f64,
}

impl NoiseSpec {
    pub fn new(sigma2: f64) -> Result<Self, ChannelError> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(ChannelError::Noise(sigma2));
        }
        Ok(Self { sigma2 })
    }

    pub fn from_snr_db(snr_db: f64) -> Result<Self, ChannelError> {
        Self::new(10f64.powf(-snr_db / 10.0))
    }

    pub fn snr_db(&self) -> f64 {
        -10.0 * self.sigma2.log10()
    }
}

/// Draws one circular complex Gaussian sample of total variance `sigma2`.
#[inline]
pub fn complex_noise<R: Rng + ?Sized>(rng: &mut R, sigma2: f64) -> Complex64 {
    let s = (0.5 * sigma2).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// `Y = H x + N` with `N ~ CN(0, σ² I)`.
pub fn apply_channel<R: Rng + ?Sized>(
    h: &ChannelMatrix,
    x: &[Complex64],
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<Vec<Complex64>, ChannelError> {
    if x.len() != h.n() {
        return Err(ChannelError::Shape { expected: h.n(), got: x.len() });
    }
    let mut y = h.apply(x);
    for v in y.iter_mut() {
        *v += complex_noise(rng, noise.sigma2);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn nominal_geometry() -> LosGeometry {
        LosGeometry::from_carrier_ghz(100.0, 0.33, 140.0, 4).unwrap()
    }

    #[test]
    fn crossover_at_140ghz() {
        let g = nominal_geometry();
        assert!((g.wavelength_m - 2.1414e-3).abs() < 1e-7);
        let exact = crossover_phase(&g, PhaseMode::Exact);
        let approx = crossover_phase(&g, PhaseMode::Approximate);
        assert!((exact - 1.597).abs() < 1e-3, "{exact}");
        assert!((exact - approx).abs() < 1e-5, "{exact} {approx}");
    }

    #[test]
    fn crossover_vanishes_with_spacing() {
        let g = LosGeometry::new(100.0, 1e-9, 2e-3, 4).unwrap();
        assert!(crossover_phase(&g, PhaseMode::Exact) < 1e-12);
        assert!(crossover_phase(&g, PhaseMode::Approximate) < 1e-12);
    }

    #[test]
    fn calibration_hits_target() {
        let lambda = wavelength_from_ghz(140.0);
        let d = calibrate_spacing(100.0, lambda, FRAC_PI_2).unwrap();
        let g = LosGeometry::new(100.0, d, lambda, 4).unwrap();
        assert!((crossover_phase(&g, PhaseMode::Exact) - FRAC_PI_2).abs() < 1e-10);
        assert!((d - 0.3273).abs() < 1e-3, "{d}");
    }

    #[test]
    fn dof_examples() {
        let mut g = LosGeometry::new(100.0, 0.1, 2.1414e-3, 2).unwrap();
        // L_T L_R = R λ
        g.spacing_m = (100.0f64 * 2.1414e-3).sqrt();
        assert!((dof_estimate(&g, DofKind::Linear1D).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(dof_estimate(&g, DofKind::Planar2D), Err(ChannelError::MissingAreas)));
        g.apertures_m2 = Some((1.0, 1.0));
        let d = dof_estimate(&g, DofKind::Planar2D).unwrap();
        assert!((d - 1.0 - 1.0 / (1e4 * 2.1414e-3f64.powi(2))).abs() < 1e-9);
        assert!((d - 22.8).abs() < 0.1, "{d}");
        let mut half = g.clone();
        half.wavelength_m /= 2.0;
        let d2 = dof_estimate(&half, DofKind::Planar2D).unwrap();
        assert!(((d2 - 1.0) / (d - 1.0) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn unit_columns_and_gram_structure() {
        for n in [2, 4] {
            for t in 0..=16 {
                let theta = t as f64 * PI / 8.0;
                for p in 0..5 {
                    let phi = p as f64 * PI / 7.0;
                    let h = los_channel(n, theta, phi).unwrap();
                    for c in 0..n {
                        let norm: f64 = h.matrix().column(c).iter().map(|v| v.norm_sqr()).sum();
                        assert!((norm - 1.0).abs() < 1e-12);
                    }
                    let g = h.gram();
                    if n == 4 {
                        // adjacent pairs: cos θ; diagonal pairs: (1 + cos 2θ) / 2
                        assert!((g[(0, 1)] - Complex64::new(theta.cos(), 0.0)).norm() < 1e-12);
                        let diag = (1.0 + (2.0 * theta).cos()) / 2.0;
                        assert!((g[(0, 2)] - Complex64::new(diag, 0.0)).norm() < 1e-12);
                    } else {
                        assert!((g[(0, 1)] - Complex64::new(theta.cos(), 0.0)).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn orthogonal_at_quarter_turn() {
        for n in [2, 4] {
            let h = los_channel(n, FRAC_PI_2, 0.7).unwrap();
            assert!(h.gram().max_abs_diff(&CMatrix::identity(n)) < 1e-12);
        }
    }

    #[test]
    fn rank_one_at_zero() {
        let h = los_channel(2, 0.0, 0.0).unwrap();
        let v = FRAC_1_SQRT_2;
        for i in 0..2 {
            for k in 0..2 {
                assert!((h.entry(i, k) - Complex64::new(v, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn common_phase_is_global_factor() {
        let h0 = los_channel(4, 1.1, 0.0).unwrap();
        let h1 = los_channel(4, 1.1, 2.3).unwrap();
        let rot = Complex64::from_polar(1.0, -2.3);
        assert!(h0.matrix().scale(rot).max_abs_diff(h1.matrix()) < 1e-14);
    }

    #[test]
    fn unsupported_size() {
        assert!(matches!(los_channel(3, 0.1, 0.0), Err(ChannelError::UnsupportedSize(3))));
    }

    #[test]
    fn noise_statistics_and_determinism() {
        let h = los_channel(4, FRAC_PI_2, 0.3).unwrap();
        let x = vec![Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2); 4];
        let noise = NoiseSpec::new(0.2).unwrap();
        let clean = h.apply(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 250_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let y = apply_channel(&h, &x, &noise, &mut rng).unwrap();
            acc += y.iter().zip(&clean).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
        }
        let var = acc / (draws as f64 * 4.0);
        assert!((var / 0.2 - 1.0).abs() < 0.01, "{var}");

        let a = apply_channel(&h, &x, &noise, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = apply_channel(&h, &x, &noise, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert!(apply_channel(&h, &x[..3], &noise, &mut rng).is_err());
    }

    #[test]
    fn snr_conversion() {
        let n = NoiseSpec::from_snr_db(10.0).unwrap();
        assert!((n.sigma2 - 0.1).abs() < 1e-15);
        assert!((n.snr_db() - 10.0).abs() < 1e-12);
        assert!(NoiseSpec::new(0.0).is_err());
    }

    #[test]
    fn phi_policy_parsing() {
        assert_eq!("fixed:0.5".parse::<PhiPolicy>().unwrap(), PhiPolicy::Fixed(0.5));
        assert_eq!("uniform".parse::<PhiPolicy>().unwrap(), PhiPolicy::Uniform);
        assert_eq!("avg".parse::<PhiPolicy>().unwrap(), PhiPolicy::Grid(256));
        assert_eq!("grid:64".parse::<PhiPolicy>().unwrap().grid().len(), 64);
        for bad in ["fixed:x", "grid:0", "sometimes", "fixed:inf"] {
            assert!(bad.parse::<PhiPolicy>().is_err(), "{bad}");
        }
        let p = PhiPolicy::Fixed(1.25);
        assert_eq!(p.to_string().parse::<PhiPolicy>().unwrap(), p);
    }
}
