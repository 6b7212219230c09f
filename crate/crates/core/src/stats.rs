//! Scalar Gaussian kernels and complex-Gaussian probabilities over quantizer cells.
//!
//! All complex variances are *total* variances: a circular complex Gaussian
//! with variance `var` has `var / 2` per real dimension. Cells are half-open,
//! lower-inclusive and upper-exclusive on every coordinate.

use num_complex::Complex64;
use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("probability {0} outside the open interval (0, 1)")]
    Domain(f64),
    #[error("interval [{lo}, {hi}) carries zero probability")]
    DegenerateInterval { lo: f64, hi: f64 },
    #[error("cell probability {prob:e} is below 1e-12, centroid undefined")]
    DegenerateCell { prob: f64 },
    #[error("quadrature did not converge: estimated error {achieved:e} > tolerance {tolerance:e}")]
    NumericalAccuracy { achieved: f64, tolerance: f64 },
    #[error("invalid variance {0}")]
    Variance(f64),
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `P(Z >= x)`, accurate far into the right tail.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Standard normal quantile.
///
/// Wichura's AS241 rational approximation followed by one Newton step
/// against [`std_normal_cdf`].
pub fn std_normal_quantile(p: f64) -> Result<f64, StatsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::Domain(p));
    }
    let x = as241(p);
    // Newton refinement, measured against whichever tail is smaller.
    let residual = if p < 0.5 {
        std_normal_cdf(x) - p
    } else {
        (1.0 - p) - std_normal_sf(x)
    };
    let pdf = std_normal_pdf(x);
    if pdf > 0.0 {
        Ok(x - residual / pdf)
    } else {
        Ok(x)
    }
}

fn as241(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.080_928_730_122_7 * r + 33430.575_583_588_128) * r
                + 67265.770_927_008_7)
                * r
                + 45921.953_931_549_87)
                * r
                + 13731.693_765_509_461)
                * r
                + 1971.590_950_306_551_3)
                * r
                + 133.141_667_891_784_38)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((5226.495_278_852_545 * r + 28729.085_735_721_943) * r
                + 39307.895_800_092_71)
                * r
                + 21213.794_301_586_597)
                * r
                + 5394.196_021_424_751)
                * r
                + 687.187_007_492_057_9)
                * r
                + 42.313_330_701_600_91)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        (((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r
            + 0.241_780_725_177_450_6)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
                + 0.015_198_666_563_616_457)
                * r
                + 0.148_103_976_427_480_08)
                * r
                + 0.689_767_334_985_1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0)
    } else {
        let r = r - 5.0;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
                + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 0.014_875_361_290_850_615)
                * r
                + 0.136_929_880_922_735_8)
                * r
                + 0.599_832_206_555_888)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// `P(a <= Z < b)` for a standard normal `Z`, computed from the tail that
/// avoids cancellation.
pub fn normal_interval_prob(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a >= 0.0 {
        std_normal_sf(a) - std_normal_sf(b)
    } else if b <= 0.0 {
        std_normal_cdf(b) - std_normal_cdf(a)
    } else {
        1.0 - std_normal_cdf(a) - std_normal_sf(b)
    }
}

/// `E[Z | a <= Z < b]` for a standard normal `Z`.
pub fn truncated_normal_mean(a: f64, b: f64) -> Result<f64, StatsError> {
    let prob = normal_interval_prob(a, b);
    if !(prob > 0.0) {
        return Err(StatsError::DegenerateInterval { lo: a, hi: b });
    }
    Ok((std_normal_pdf(a) - std_normal_pdf(b)) / prob)
}

/// Half-open real interval `[lo, hi)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn full() -> Self {
        Self::new(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x < self.hi
    }
}

/// I/Q rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectCell {
    pub re: Interval,
    pub im: Interval,
}

/// Annular sector `r_lo <= |y| < r_hi`, `angle_lo <= arg y < angle_hi`, with
/// angles measured in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorCell {
    pub r_lo: f64,
    pub r_hi: f64,
    pub angle_lo: f64,
    pub angle_hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Rect(RectCell),
    Sector(SectorCell),
}

/// Circular complex Gaussian `CN(mean, var)`.
///
/// For the received-sample approximation used in quantizer design, the
/// moments of the per-antenna mixture are matched: zero mean and variance
/// `1 + σ²` for unit-energy symbols and unit-norm channel columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianApprox {
    pub mean: Complex64,
    pub var: f64,
}

impl GaussianApprox {
    pub fn new(mean: Complex64, var: f64) -> Result<Self, StatsError> {
        if !(var > 0.0 && var.is_finite()) {
            return Err(StatsError::Variance(var));
        }
        Ok(Self { mean, var })
    }

    /// Moment-matched approximation of a received sample at noise variance `sigma2`.
    pub fn received(sigma2: f64) -> Result<Self, StatsError> {
        Self::new(Complex64::new(0.0, 0.0), 1.0 + sigma2)
    }

    pub fn prob(&self, cell: &Cell) -> Result<f64, StatsError> {
        match cell {
            Cell::Rect(r) => Ok(rect_prob(self.mean, self.var, r)),
            Cell::Sector(s) => polar_prob(self.mean, self.var, s),
        }
    }
}

/// Probability of an I/Q rectangle under `CN(mean, var)`.
pub fn rect_prob(mean: Complex64, var: f64, cell: &RectCell) -> f64 {
    let s = (0.5 * var).sqrt();
    axis_prob(mean.re, s, &cell.re) * axis_prob(mean.im, s, &cell.im)
}

/// Probability of one real coordinate of `N(mean, s²)` landing in `iv`.
pub fn axis_prob(mean: f64, s: f64, iv: &Interval) -> f64 {
    normal_interval_prob((iv.lo - mean) / s, (iv.hi - mean) / s)
}

/// Absolute tolerance of the angular quadrature.
pub const POLAR_TOL: f64 = 1e-9;

/// Probability of an annular sector under `CN(mean, var)`.
///
/// The radial integral is evaluated in closed form along each ray, leaving a
/// smooth one-dimensional integral over the angle which is done with
/// adaptive Gauss-Kronrod (7/15) at absolute tolerance [`POLAR_TOL`].
pub fn polar_prob(mean: Complex64, var: f64, cell: &SectorCell) -> Result<f64, StatsError> {
    let ray = |alpha: f64| ray_mass(mean, var, cell.r_lo, cell.r_hi, alpha);
    let breaks = angular_breakpoints(mean, var, cell);
    let p = integrate_adaptive(&ray, &breaks, POLAR_TOL)?;
    Ok(p.clamp(0.0, 1.0))
}

/// Conditional mean of `approx` over `cell`.
pub fn cell_centroid(approx: &GaussianApprox, cell: &Cell) -> Result<Complex64, StatsError> {
    match cell {
        Cell::Rect(r) => {
            let s = (0.5 * approx.var).sqrt();
            let p = rect_prob(approx.mean, approx.var, r);
            if !(p > 1e-12) {
                return Err(StatsError::DegenerateCell { prob: p });
            }
            let m = approx.mean;
            let re = m.re
                + s * truncated_normal_mean((r.re.lo - m.re) / s, (r.re.hi - m.re) / s)?;
            let im = m.im
                + s * truncated_normal_mean((r.im.lo - m.im) / s, (r.im.hi - m.im) / s)?;
            Ok(Complex64::new(re, im))
        }
        Cell::Sector(c) => {
            let (mean, var) = (approx.mean, approx.var);
            let breaks = angular_breakpoints(mean, var, c);
            let p = integrate_adaptive(&|a| ray_mass(mean, var, c.r_lo, c.r_hi, a), &breaks, POLAR_TOL)?;
            if !(p > 1e-12) {
                return Err(StatsError::DegenerateCell { prob: p });
            }
            let tol = POLAR_TOL * p.max(1e-3);
            let first = |a: f64| ray_first_moment(mean, var, c.r_lo, c.r_hi, a);
            let re = integrate_adaptive(&|a| first(a) * a.cos(), &breaks, tol)?;
            let im = integrate_adaptive(&|a| first(a) * a.sin(), &breaks, tol)?;
            Ok(Complex64::new(re / p, im / p))
        }
    }
}

/// `erf(u1) - erf(u0)` for `u0 <= u1` without cancellation in the tails.
fn erf_diff(u0: f64, u1: f64) -> f64 {
    if u0 >= 0.0 {
        libm::erfc(u0) - libm::erfc(u1)
    } else if u1 <= 0.0 {
        libm::erfc(-u1) - libm::erfc(-u0)
    } else {
        2.0 - libm::erfc(u1) - libm::erfc(-u0)
    }
}

/// `∫_{r0}^{r1} r f(r e^{jα}) dr` for the `CN(mean, var)` density `f`.
fn ray_mass(mean: Complex64, var: f64, r0: f64, r1: f64, alpha: f64) -> f64 {
    let (s, c) = alpha.sin_cos();
    let b = mean.re * c + mean.im * s;
    let perp = mean.im * c - mean.re * s;
    let perp2 = perp * perp;
    let sv = var.sqrt();
    let edge = |r: f64| {
        if r.is_infinite() {
            0.0
        } else {
            (-(perp2 + (r - b) * (r - b)) / var).exp()
        }
    };
    let term1 = (edge(r0) - edge(r1)) / TAU;
    let u0 = (r0 - b) / sv;
    let u1 = if r1.is_infinite() { f64::INFINITY } else { (r1 - b) / sv };
    let term2 = b / (2.0 * (PI * var).sqrt()) * (-perp2 / var).exp() * erf_diff(u0, u1);
    term1 + term2
}

/// `∫_{r0}^{r1} r² f(r e^{jα}) dr`.
fn ray_first_moment(mean: Complex64, var: f64, r0: f64, r1: f64, alpha: f64) -> f64 {
    let (s, c) = alpha.sin_cos();
    let b = mean.re * c + mean.im * s;
    let perp = mean.im * c - mean.re * s;
    let perp2 = perp * perp;
    let sv = var.sqrt();
    let u0 = (r0 - b) / sv;
    let u1 = if r1.is_infinite() { f64::INFINITY } else { (r1 - b) / sv };
    // r = b + sv·u:  r² e^{-u²} sv du,  r² = b² + 2 b sv u + var u²
    let g = |u: f64| if u.is_infinite() { 0.0 } else { (-u * u).exp() };
    let ue = |u: f64| if u.is_infinite() { 0.0 } else { u * (-u * u).exp() };
    let e0 = 0.5 * PI.sqrt() * erf_diff(u0, u1); // ∫ e^{-u²}
    let e1 = 0.5 * (g(u0) - g(u1)); // ∫ u e^{-u²}
    let e2 = 0.5 * e0 - 0.5 * (ue(u1) - ue(u0)); // ∫ u² e^{-u²}
    let radial = sv * (b * b * e0 + 2.0 * b * sv * e1 + var * e2);
    radial * (-perp2 / var).exp() / (PI * var)
}

/// Split points for the angular integral: the sector ends plus a geometric
/// ladder around the direction of the mean, where the integrand peaks with
/// angular width about `sqrt(var) / |mean|`.
fn angular_breakpoints(mean: Complex64, var: f64, cell: &SectorCell) -> Vec<f64> {
    let (a0, a1) = (cell.angle_lo, cell.angle_hi);
    let mut pts = vec![a0, a1];
    let width = (a1 - a0).max(0.0);
    let n_uniform = ((width / (PI / 8.0)).ceil() as usize).max(1);
    for k in 1..n_uniform {
        pts.push(a0 + width * k as f64 / n_uniform as f64);
    }
    let amp = mean.norm();
    if amp > 0.0 {
        let centre = 0.5 * (a0 + a1);
        let mut peak = mean.arg();
        while peak < centre - PI {
            peak += TAU;
        }
        while peak >= centre + PI {
            peak -= TAU;
        }
        let w = var.sqrt() / amp;
        pts.push(peak);
        let mut step = 0.5 * w;
        while step < width {
            pts.push(peak - step);
            pts.push(peak + step);
            step *= 3.0;
        }
    }
    pts.retain(|p| *p >= a0 && *p <= a1);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    pts
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Globally adaptive Gauss-Kronrod over consecutive breakpoints.
pub(crate) fn integrate_adaptive(
    f: &dyn Fn(f64) -> f64,
    breaks: &[f64],
    tol: f64,
) -> Result<f64, StatsError> {
    const MAX_INTERVALS: usize = 4000;
    let mut segs: Vec<(f64, f64, f64, f64)> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, e) = gk15(f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    loop {
        let err: f64 = segs.iter().map(|s| s.3).sum();
        if err <= tol {
            break;
        }
        if segs.len() >= MAX_INTERVALS {
            return Err(StatsError::NumericalAccuracy { achieved: err, tolerance: tol });
        }
        let (idx, worst) = segs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .3.partial_cmp(&b.1 .3).unwrap())
            .map(|(i, s)| (i, *s))
            .unwrap();
        let (a, b) = (worst.0, worst.1);
        let m = 0.5 * (a + b);
        if !(m > a && m < b) {
            return Err(StatsError::NumericalAccuracy { achieved: err, tolerance: tol });
        }
        let (v1, e1) = gk15(f, a, m);
        let (v2, e2) = gk15(f, m, b);
        segs[idx] = (a, m, v1, e1);
        segs.push((m, b, v2, e2));
    }
    Ok(segs.iter().map(|s| s.2).sum())
}

/// Reduce an angle to `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bisection on the cdf, independent of the rational approximation.
    fn quantile_oracle(p: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0, 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if std_normal_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quantile_known_values() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        let q = std_normal_quantile(0.25).unwrap();
        assert!((q + 0.674_489_750_196_081_7).abs() < 1e-12, "{q}");
        assert!((q - quantile_oracle(0.25)).abs() < 1e-12);
        let p = std_normal_cdf(std_normal_quantile(0.975).unwrap());
        assert!((p - 0.975).abs() < 1e-10);
    }

    #[test]
    fn quantile_domain() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(std_normal_quantile(p), Err(StatsError::Domain(_))));
        }
    }

    #[test]
    fn quantile_matches_bisection() {
        for k in 1..200 {
            let p = k as f64 / 200.0;
            let q = std_normal_quantile(p).unwrap();
            assert!((q - quantile_oracle(p)).abs() < 1e-10, "p={p}");
        }
        for p in [1e-8, 1e-6, 1e-3, 1.0 - 1e-3, 1.0 - 1e-6, 1.0 - 1e-8] {
            let q = std_normal_quantile(p).unwrap();
            assert!((q - quantile_oracle(p)).abs() < 1e-9, "p={p}");
        }
    }

    #[test]
    fn truncated_means() {
        assert_eq!(truncated_normal_mean(f64::NEG_INFINITY, f64::INFINITY).unwrap(), 0.0);
        // φ(0.67449)/0.25
        let m = truncated_normal_mean(0.674_489_750_196_081_7, f64::INFINITY).unwrap();
        assert!((m - 1.271_106_290_736_428).abs() < 1e-8, "{m}");
        for b in [0.1, 1.0, 3.0] {
            assert!(truncated_normal_mean(-b, b).unwrap().abs() < 1e-15);
        }
        assert!(matches!(
            truncated_normal_mean(1.0, 1.0),
            Err(StatsError::DegenerateInterval { .. })
        ));
        assert!(truncated_normal_mean(50.0, 60.0).is_err());
    }

    #[test]
    fn rect_quadrant_and_plane() {
        let z = Complex64::new(0.0, 0.0);
        let full = RectCell { re: Interval::full(), im: Interval::full() };
        assert!((rect_prob(Complex64::new(3.0, -2.0), 0.3, &full) - 1.0).abs() < 1e-15);
        let quad = RectCell {
            re: Interval::new(0.0, f64::INFINITY),
            im: Interval::new(0.0, f64::INFINITY),
        };
        assert!((rect_prob(z, 1.0, &quad) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rect_reflection_symmetry() {
        let cell = RectCell { re: Interval::new(-0.5, 0.5), im: Interval::new(-1.0, 1.0) };
        let m = Complex64::new(0.2, -0.3);
        let a = rect_prob(m, 0.4, &cell);
        let b = rect_prob(-m, 0.4, &cell);
        assert!((a - b).abs() < 1e-15);
    }

    fn sector(r_lo: f64, r_hi: f64, a0: f64, a1: f64) -> SectorCell {
        SectorCell { r_lo, r_hi, angle_lo: a0, angle_hi: a1 }
    }

    #[test]
    fn polar_normalization() {
        for m in [Complex64::new(0.0, 0.0), Complex64::new(0.7, -0.4), Complex64::new(-2.0, 0.1)] {
            let p = polar_prob(m, 0.5, &sector(0.0, f64::INFINITY, 0.0, TAU)).unwrap();
            assert!((p - 1.0).abs() < 1e-9, "{m} {p}");
        }
    }

    #[test]
    fn polar_rayleigh_closed_form() {
        let z = Complex64::new(0.0, 0.0);
        let p = polar_prob(z, 1.0, &sector(0.0, 1.0, 0.0, TAU)).unwrap();
        assert!((p - (1.0 - (-1.0f64).exp())).abs() < 1e-9, "{p}");
        assert!((p - 0.632_120_558_8).abs() < 1e-9);
        for m in [4usize, 8, 16] {
            let w = TAU / m as f64;
            let p = polar_prob(z, 0.7, &sector(0.0, f64::INFINITY, w, 2.0 * w)).unwrap();
            assert!((p - 1.0 / m as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn polar_sums_to_one_over_partition() {
        let m = Complex64::new(0.3, 0.9);
        let radii = [0.0, 0.6, 1.1, f64::INFINITY];
        let mut total = 0.0;
        for k in 0..3 {
            for s in 0..8 {
                let w = TAU / 8.0;
                total += polar_prob(m, 0.05, &sector(radii[k], radii[k + 1], s as f64 * w, (s + 1) as f64 * w))
                    .unwrap();
            }
        }
        assert!((total - 1.0).abs() < 1e-8, "{total}");
    }

    #[test]
    fn polar_sharp_peak_is_not_missed() {
        // Mean deep inside a narrow sector at very low variance.
        let m = Complex64::from_polar(1.0, 0.3);
        let p = polar_prob(m, 1e-8, &sector(0.5, 2.0, 0.0, PI / 4.0)).unwrap();
        assert!((p - 1.0).abs() < 1e-9, "{p}");
        // Mean near the wrap-around boundary.
        let m = Complex64::from_polar(1.0, -0.01);
        let p = polar_prob(m, 1e-6, &sector(0.0, f64::INFINITY, 7.0 * PI / 4.0, TAU)).unwrap();
        assert!((p - 1.0).abs() < 1e-9, "{p}");
    }

    #[test]
    fn rect_centroid_matches_truncated_mean() {
        let approx = GaussianApprox::received(0.1).unwrap();
        let s = (1.1f64 / 2.0).sqrt();
        let t = s * 0.674_489_750_196_081_7;
        let cell = Cell::Rect(RectCell { re: Interval::new(t, f64::INFINITY), im: Interval::new(0.0, t) });
        let c = cell_centroid(&approx, &cell).unwrap();
        assert!((c.re - 0.942_7).abs() < 1e-4, "{c}");
        assert!((c.re - s * 1.271_106_290_736_428).abs() < 1e-8);
    }

    #[test]
    fn sector_centroid_zero_mean_closed_form() {
        // Zero mean: radial and angular parts separate.
        let approx = GaussianApprox::received(0.0).unwrap();
        let (r0, r1, a0, a1) = (0.3, 1.2, 0.0, TAU / 8.0);
        let c = cell_centroid(&approx, &Cell::Sector(sector(r0, r1, a0, a1))).unwrap();
        // E[r | r0 <= r < r1] for Rayleigh with E r² = 1
        let num = |r: f64| -r * (-r * r).exp() + 0.5 * PI.sqrt() * libm::erf(r);
        let mean_r = (num(r1) - num(r0)) / ((-r0 * r0).exp() - (-r1 * r1).exp());
        let dir = Complex64::new(a1.sin() - a0.sin(), a0.cos() - a1.cos()) / (a1 - a0);
        let expect = dir * mean_r;
        assert!((c - expect).norm() < 1e-8, "{c} vs {expect}");
        // Lies on the bisector.
        assert!((c.arg() - (a0 + a1) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn sector_centroid_general_mean_total_expectation() {
        let approx = GaussianApprox::new(Complex64::new(0.4, -0.2), 0.3).unwrap();
        let radii = [0.0, 0.5, f64::INFINITY];
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..2 {
            for s in 0..4 {
                let w = TAU / 4.0;
                let cell = Cell::Sector(sector(radii[k], radii[k + 1], s as f64 * w, (s + 1) as f64 * w));
                acc += cell_centroid(&approx, &cell).unwrap() * approx.prob(&cell).unwrap();
            }
        }
        assert!((acc - approx.mean).norm() < 1e-8, "{acc}");
    }

    #[test]
    fn degenerate_cell() {
        let approx = GaussianApprox::received(0.1).unwrap();
        let cell = Cell::Rect(RectCell { re: Interval::new(40.0, 41.0), im: Interval::full() });
        assert!(matches!(cell_centroid(&approx, &cell), Err(StatsError::DegenerateCell { .. })));
    }

    #[test]
    fn wrap() {
        assert_eq!(wrap_angle(-0.0), 0.0);
        assert!((wrap_angle(-PI / 2.0) - 1.5 * PI).abs() < 1e-15);
        assert!(wrap_angle(TAU) < 1e-15);
    }
}
