//! BER, mutual information, range and quantizer-design sweeps.

use super::config::{Experiment, GeometryConfig, Scheme, SweepConfig};
use super::engine::{simulate_ber, BerPoint, DetectorKind};
use super::output::{BerRow, DesignRow, Metadata, MiRow, Rows, SweepResult};
use super::HarnessError;
use crate::channel::{self, LosGeometry, NoiseSpec, PhaseMode};
use crate::constellation::Constellation;
use crate::infotheory::{mi_quantized, mi_unquantized, MiOptions};
use crate::quantizer::refine;
use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

/// Geometry with its spacing resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedGeometry {
    pub nominal_range_m: f64,
    pub spacing_m: f64,
    pub wavelength_m: f64,
    pub array_size: usize,
}

impl ResolvedGeometry {
    /// Exact cross-over phase at range `range_m`.
    pub fn theta_at(&self, range_m: f64) -> f64 {
        let g = LosGeometry {
            range_m,
            spacing_m: self.spacing_m,
            wavelength_m: self.wavelength_m,
            array_size: self.array_size,
            nominal_range_m: Some(self.nominal_range_m),
            apertures_m2: None,
        };
        channel::crossover_phase(&g, PhaseMode::Exact)
    }
}

pub fn resolve_geometry(g: &GeometryConfig, array_size: usize) -> Result<ResolvedGeometry, HarnessError> {
    let cfg_err = |e: channel::ChannelError| HarnessError::Config(format!("geometry: {e}"));
    if !(g.carrier_ghz > 0.0 && g.carrier_ghz.is_finite()) {
        return Err(HarnessError::Config(format!("geometry: carrier_ghz {} must be positive", g.carrier_ghz)));
    }
    let wavelength_m = channel::wavelength_from_ghz(g.carrier_ghz);
    let spacing_m = match g.spacing_m {
        Some(d) => d,
        None => channel::calibrate_spacing(g.nominal_range_m, wavelength_m, FRAC_PI_2).map_err(cfg_err)?,
    };
    LosGeometry::new(g.range_m.unwrap_or(g.nominal_range_m), spacing_m, wavelength_m, array_size).map_err(cfg_err)?;
    Ok(ResolvedGeometry { nominal_range_m: g.nominal_range_m, spacing_m, wavelength_m, array_size })
}

/// Evenly spaced range ratios, endpoints included.
pub fn range_ratios(g: &GeometryConfig) -> Vec<f64> {
    let step = (g.ratio_max - g.ratio_min) / (g.points - 1) as f64;
    (0..g.points).map(|k| if k + 1 == g.points { g.ratio_max } else { g.ratio_min + step * k as f64 }).collect()
}

fn sigma2(snr_db: f64) -> Result<f64, HarnessError> {
    NoiseSpec::from_snr_db(snr_db).map(|n| n.sigma2).map_err(|e| HarnessError::Config(e.to_string()))
}

fn expect(cfg: &SweepConfig, want: Experiment) -> Result<(), HarnessError> {
    if cfg.experiment != want {
        return Err(HarnessError::Config(format!("config experiment is {}, expected {want}", cfg.experiment)));
    }
    cfg.validate()
}

/// Runs one BER operating point and appends a row per detector.
fn ber_rows(
    cfg: &SweepConfig,
    theta: f64,
    snr_db: f64,
    stream: u64,
    range_ratio: Option<f64>,
    rows: &mut Vec<BerRow>,
) -> Result<(), HarnessError> {
    let c = Constellation::new(cfg.modulation);
    let s2 = sigma2(snr_db)?;
    let q = cfg.quantizer.design(s2)?;
    let vq = if cfg.detectors.contains(&DetectorKind::Vq) {
        Some(refine(&q, 1 << cfg.virtual_extra_bits)?)
    } else {
        None
    };
    let point = BerPoint {
        n: cfg.array_size,
        theta,
        sigma2: s2,
        phi: cfg.phi_policy()?,
        constellation: &c,
        quantizer: &q,
        virtual_q: vq.as_ref(),
        detectors: cfg.detectors.clone(),
        frames: cfg.frames,
        early_stop: cfg.early_stop,
        seed: cfg.seed,
        stream,
        allow_large_ml: cfg.allow_large_ml,
    };
    for t in simulate_ber(&point)? {
        let quantizer = match (t.detector, &vq) {
            (DetectorKind::Vq, Some(v)) => v.descriptor(),
            _ => q.descriptor(),
        };
        rows.push(BerRow {
            experiment: cfg.experiment.to_string(),
            modulation: cfg.modulation.to_string(),
            n: cfg.array_size,
            theta_rad: theta,
            phi_policy: point.phi.to_string(),
            detector: t.detector.to_string(),
            quantizer,
            snr_db,
            frames: t.frames,
            bit_errors: t.bit_errors,
            ber: t.ber(),
            stderr: t.stderr(),
            range_ratio,
        });
    }
    Ok(())
}

pub fn run_ber_sweep(cfg: &SweepConfig) -> Result<SweepResult, HarnessError> {
    expect(cfg, Experiment::BerSweep)?;
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut stream = 0;
    for theta in cfg.thetas()? {
        for &snr in &cfg.snr_db {
            ber_rows(cfg, theta, snr, stream, None, &mut rows)?;
            stream += 1;
        }
    }
    Ok(SweepResult { metadata: Metadata::new(cfg, start), rows: Rows::Ber(rows) })
}

pub fn run_range_sweep(cfg: &SweepConfig) -> Result<SweepResult, HarnessError> {
    expect(cfg, Experiment::RangeSweep)?;
    let start = Instant::now();
    let g = cfg.geometry.clone().unwrap_or_default();
    let geo = resolve_geometry(&g, cfg.array_size)?;
    let mut rows = Vec::new();
    let mut stream = 0;
    for ratio in range_ratios(&g) {
        let theta = geo.theta_at(ratio * g.nominal_range_m);
        for &snr in &cfg.snr_db {
            ber_rows(cfg, theta, snr, stream, Some(ratio), &mut rows)?;
            stream += 1;
        }
    }
    Ok(SweepResult { metadata: Metadata::new(cfg, start), rows: Rows::Ber(rows) })
}

pub fn run_mi_sweep(cfg: &SweepConfig) -> Result<SweepResult, HarnessError> {
    expect(cfg, Experiment::MiSweep)?;
    let start = Instant::now();
    let c = Constellation::new(cfg.modulation);
    let phi = cfg.phi_policy()?;
    let opts = MiOptions { mc_samples: cfg.mi_samples, seed: cfg.seed, allow_monte_carlo: true };
    let mut rows = Vec::new();
    for (scheme_text, scheme) in scheme_labels(cfg).into_iter().zip(cfg.parsed_schemes()?) {
        for theta in cfg.thetas()? {
            for &snr in &cfg.snr_db {
                let s2 = sigma2(snr)?;
                let r = match &scheme {
                    Scheme::Unquantized => {
                        mi_unquantized(theta, cfg.array_size, s2, &c, &phi, cfg.mi_samples, cfg.seed)?
                    }
                    Scheme::Quantized(spec) => {
                        let q = spec.design(s2)?;
                        mi_quantized(&q, theta, cfg.array_size, s2, &c, &phi, &opts)?
                    }
                };
                if !r.mi_bits.is_finite() {
                    return Err(HarnessError::Numerical(format!("non-finite MI for {scheme_text} at {snr} dB")));
                }
                rows.push(MiRow {
                    experiment: cfg.experiment.to_string(),
                    modulation: cfg.modulation.to_string(),
                    n: cfg.array_size,
                    theta_rad: theta,
                    phi_policy: phi.to_string(),
                    scheme: scheme_text.clone(),
                    snr_db: snr,
                    mi_bits: r.mi_bits,
                    stderr: r.stderr,
                });
            }
        }
    }
    Ok(SweepResult { metadata: Metadata::new(cfg, start), rows: Rows::Mi(rows) })
}

fn scheme_labels(cfg: &SweepConfig) -> Vec<String> {
    if cfg.schemes.is_empty() {
        let q = &cfg.quantizer;
        let label = match q.family {
            super::config::FamilyKind::Iq => format!("iq:{}:{}", q.levels.unwrap_or(0), q.metric),
            super::config::FamilyKind::Ap => {
                format!("ap:{}:{}:{}", q.rings.unwrap_or(0), q.sectors.unwrap_or(0), q.metric)
            }
            super::config::FamilyKind::Phase => format!("phase:{}", q.sectors.unwrap_or(0)),
        };
        vec![label]
    } else {
        cfg.schemes.clone()
    }
}

pub fn run_design(cfg: &SweepConfig) -> Result<SweepResult, HarnessError> {
    expect(cfg, Experiment::DesignQuantizer)?;
    let start = Instant::now();
    let mut rows = Vec::new();
    for &snr in &cfg.snr_db {
        let s2 = sigma2(snr)?;
        let q = cfg.quantizer.design(s2)?;
        rows.push(DesignRow { snr_db: snr, descriptor: q.descriptor(), msqe: q.msqe(s2)?, document: q.to_document() });
    }
    Ok(SweepResult { metadata: Metadata::new(cfg, start), rows: Rows::Design(rows) })
}

/// Dispatches on the configured experiment.
pub fn run(cfg: &SweepConfig) -> Result<SweepResult, HarnessError> {
    match cfg.experiment {
        Experiment::BerSweep => run_ber_sweep(cfg),
        Experiment::RangeSweep => run_range_sweep(cfg),
        Experiment::MiSweep => run_mi_sweep(cfg),
        Experiment::DesignQuantizer => run_design(cfg),
    }
}
