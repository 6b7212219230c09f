//! Sweep configuration: JSON schema, scheme grammar and validation.

use super::engine::{DetectorKind, EarlyStop};
use super::HarnessError;
use crate::channel::PhiPolicy;
use crate::constellation::Modulation;
use crate::quantizer::{
    design_equal_prob_ap, design_equal_prob_iq, design_mmsqe, design_phase_only, Metric, MmsqeFamily, Quantizer,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

pub const DEFAULT_FRAMES: u64 = 1_000_000;
pub const MIN_BER_FRAMES: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    MiSweep,
    BerSweep,
    RangeSweep,
    DesignQuantizer,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::MiSweep => "mi_sweep",
            Experiment::BerSweep => "ber_sweep",
            Experiment::RangeSweep => "range_sweep",
            Experiment::DesignQuantizer => "design_quantizer",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Iq,
    Ap,
    Phase,
}

/// Quantizer description; thresholds are designed per SNR point unless
/// `metric` is `fixed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerSpec {
    pub family: FamilyKind,
    /// Levels per I/Q axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    /// Amplitude rings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rings: Option<usize>,
    /// Phase sectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sectors: Option<usize>,
    #[serde(default = "default_metric")]
    pub metric: Metric,
    /// Per-axis thresholds (IQ) or amplitude thresholds (AP) for `fixed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
}

fn default_metric() -> Metric {
    Metric::Eqprob
}

impl Default for QuantizerSpec {
    fn default() -> Self {
        Self { family: FamilyKind::Iq, levels: Some(4), rings: None, sectors: None, metric: Metric::Eqprob, thresholds: None }
    }
}

impl QuantizerSpec {
    pub fn iq_bits(bits: u32) -> Self {
        Self { levels: Some(1 << bits), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let need = |v: Option<usize>, key: &str| -> Result<usize, HarnessError> {
            match v {
                Some(x) if x >= 1 => Ok(x),
                Some(_) => Err(HarnessError::Config(format!("quantizer.{key} must be at least 1"))),
                None => Err(HarnessError::Config(format!("quantizer.{key} is required for this family"))),
            }
        };
        match (self.family, self.metric) {
            (FamilyKind::Phase, Metric::Eqprob | Metric::Fixed) => {
                need(self.sectors, "sectors")?;
            }
            (FamilyKind::Phase, Metric::Mmsqe) => {
                return Err(HarnessError::Config("phase-only quantizers have no mmsqe design".into()));
            }
            (FamilyKind::Iq, Metric::Fixed) | (FamilyKind::Ap, Metric::Fixed) => {
                if self.thresholds.is_none() {
                    return Err(HarnessError::Config("quantizer.thresholds is required for metric fixed".into()));
                }
                if self.family == FamilyKind::Ap {
                    need(self.sectors, "sectors")?;
                }
            }
            (FamilyKind::Iq, _) => {
                if need(self.levels, "levels")? < 2 {
                    return Err(HarnessError::Config("quantizer.levels must be at least 2".into()));
                }
            }
            (FamilyKind::Ap, _) => {
                need(self.rings, "rings")?;
                need(self.sectors, "sectors")?;
            }
        }
        if self.thresholds.is_some() && self.metric != Metric::Fixed {
            return Err(HarnessError::Config("quantizer.thresholds is only valid with metric fixed".into()));
        }
        Ok(())
    }

    /// Designs the quantizer for noise level `sigma2` and attaches its
    /// centroid codebook.
    pub fn design(&self, sigma2: f64) -> Result<Quantizer, HarnessError> {
        self.validate()?;
        let q = match (self.family, self.metric) {
            (FamilyKind::Phase, _) => design_phase_only(self.sectors.unwrap_or(0))?,
            (FamilyKind::Iq, Metric::Eqprob) => design_equal_prob_iq(self.levels.unwrap_or(0), sigma2)?,
            (FamilyKind::Iq, Metric::Mmsqe) => {
                design_mmsqe(MmsqeFamily::Iq { levels: self.levels.unwrap_or(0) }, sigma2)?
            }
            (FamilyKind::Iq, Metric::Fixed) => Quantizer::iq(self.thresholds.clone().unwrap_or_default())?,
            (FamilyKind::Ap, Metric::Eqprob) => {
                design_equal_prob_ap(self.rings.unwrap_or(0), self.sectors.unwrap_or(0), sigma2)?
            }
            (FamilyKind::Ap, Metric::Mmsqe) => design_mmsqe(
                MmsqeFamily::AmplitudePhase { rings: self.rings.unwrap_or(0), sectors: self.sectors.unwrap_or(0) },
                sigma2,
            )?,
            (FamilyKind::Ap, Metric::Fixed) => {
                Quantizer::amplitude_phase(self.sectors.unwrap_or(0), self.thresholds.clone().unwrap_or_default())?
            }
        };
        Ok(q.with_codebook(sigma2)?)
    }
}

/// A mutual information scheme: `unquantized`, `phase:M`,
/// `iq:S:eqprob|mmsqe`, `iq:fixed:t1,t2,…`, `ap:K:M:eqprob|mmsqe` or
/// `ap:fixed:M:A1,A2,…`.
#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    Unquantized,
    Quantized(QuantizerSpec),
}

impl FromStr for Scheme {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| HarnessError::Config(format!("invalid scheme `{s}`: {why}"));
        let int = |v: &str| v.parse::<usize>().map_err(|_| bad(&format!("`{v}` is not a count")));
        let list = |v: &str| -> Result<Vec<f64>, HarnessError> {
            v.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| bad(&format!("`{t}` is not a number")))).collect()
        };
        let metric = |v: &str| match v {
            "eqprob" => Ok(Metric::Eqprob),
            "mmsqe" => Ok(Metric::Mmsqe),
            _ => Err(bad("metric must be eqprob or mmsqe")),
        };
        let parts: Vec<&str> = s.split(':').collect();
        let spec = match parts.as_slice() {
            ["unquantized"] => return Ok(Scheme::Unquantized),
            ["phase", m] => QuantizerSpec { family: FamilyKind::Phase, levels: None, sectors: Some(int(m)?), ..Default::default() },
            ["iq", "fixed", t] => QuantizerSpec { levels: None, metric: Metric::Fixed, thresholds: Some(list(t)?), ..Default::default() },
            ["iq", lv, m] => QuantizerSpec { levels: Some(int(lv)?), metric: metric(m)?, ..Default::default() },
            ["ap", "fixed", m, a] => QuantizerSpec {
                family: FamilyKind::Ap,
                levels: None,
                sectors: Some(int(m)?),
                metric: Metric::Fixed,
                thresholds: Some(list(a)?),
                ..Default::default()
            },
            ["ap", k, m, met] => QuantizerSpec {
                family: FamilyKind::Ap,
                levels: None,
                rings: Some(int(k)?),
                sectors: Some(int(m)?),
                metric: metric(met)?,
                thresholds: None,
            },
            _ => return Err(bad("unrecognised form")),
        };
        spec.validate().map_err(|e| bad(&e.to_string()))?;
        Ok(Scheme::Quantized(spec))
    }
}

/// Link geometry. Spacing is calibrated so that θ = π/2 at the nominal range
/// unless given explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default = "default_nominal_range")]
    pub nominal_range_m: f64,
    #[serde(default = "default_carrier")]
    pub carrier_ghz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_m: Option<f64>,
    /// Operating range for fixed-geometry sweeps; defaults to the nominal range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range_m: Option<f64>,
    #[serde(default = "default_ratio_min")]
    pub ratio_min: f64,
    #[serde(default = "default_ratio_max")]
    pub ratio_max: f64,
    #[serde(default = "default_ratio_points")]
    pub points: usize,
}

fn default_nominal_range() -> f64 {
    100.0
}
fn default_carrier() -> f64 {
    140.0
}
fn default_ratio_min() -> f64 {
    0.8
}
fn default_ratio_max() -> f64 {
    1.2
}
fn default_ratio_points() -> usize {
    21
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            nominal_range_m: default_nominal_range(),
            carrier_ghz: default_carrier(),
            spacing_m: None,
            range_m: None,
            ratio_min: default_ratio_min(),
            ratio_max: default_ratio_max(),
            points: default_ratio_points(),
        }
    }
}

/// One value or a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub experiment: Experiment,
    #[serde(default = "default_modulation")]
    pub modulation: Modulation,
    #[serde(default = "default_array_size")]
    pub array_size: usize,
    /// Cross-over phase(s) in radians; exclusive with `geometry` outside
    /// range sweeps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<OneOrMany>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryConfig>,
    pub snr_db: Vec<f64>,
    /// `fixed:<rad>`, `uniform`, `uniform-random` or `grid:<n>`.
    #[serde(default = "default_phi")]
    pub phi: String,
    #[serde(default = "default_detectors")]
    pub detectors: Vec<DetectorKind>,
    #[serde(default)]
    pub quantizer: QuantizerSpec,
    /// Extra bits per I/Q axis of the virtual quantizer used by `vq`.
    #[serde(default = "default_virtual_bits")]
    pub virtual_extra_bits: u32,
    /// Mutual information schemes; empty means the `quantizer` entry alone.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schemes: Vec<String>,
    #[serde(default = "default_frames")]
    pub frames: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop: Option<EarlyStop>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default = "default_mi_samples")]
    pub mi_samples: usize,
    #[serde(default)]
    pub allow_large_ml: bool,
}

fn default_modulation() -> Modulation {
    Modulation::Qpsk
}
fn default_array_size() -> usize {
    4
}
fn default_phi() -> String {
    "uniform".into()
}
fn default_detectors() -> Vec<DetectorKind> {
    vec![DetectorKind::Zf]
}
fn default_virtual_bits() -> u32 {
    1
}
fn default_frames() -> u64 {
    DEFAULT_FRAMES
}
fn default_seed() -> u64 {
    1
}
fn default_mi_samples() -> usize {
    200_000
}

impl SweepConfig {
    /// Defaults for `experiment` with the given SNR list.
    pub fn new(experiment: Experiment, snr_db: Vec<f64>) -> Self {
        let mut cfg: SweepConfig = serde_json::from_value(serde_json::json!({
            "experiment": experiment,
            "snr_db": snr_db,
        }))
        .expect("defaults deserialize");
        if experiment == Experiment::RangeSweep {
            cfg.detectors = vec![DetectorKind::Zf, DetectorKind::Vq];
        }
        cfg
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("config: {e}")))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    pub fn phi_policy(&self) -> Result<PhiPolicy, HarnessError> {
        self.phi.parse().map_err(|_| HarnessError::Config(format!("phi: invalid policy `{}`", self.phi)))
    }

    pub fn parsed_schemes(&self) -> Result<Vec<Scheme>, HarnessError> {
        if self.schemes.is_empty() {
            return Ok(vec![Scheme::Quantized(self.quantizer.clone())]);
        }
        self.schemes.iter().map(|s| s.parse()).collect()
    }

    /// Cross-over phases for fixed-geometry sweeps.
    pub fn thetas(&self) -> Result<Vec<f64>, HarnessError> {
        match (&self.theta, &self.geometry) {
            (Some(t), None) => Ok(t.values()),
            (None, Some(g)) => {
                let geo = super::sweeps::resolve_geometry(g, self.array_size)?;
                let range = g.range_m.unwrap_or(g.nominal_range_m);
                Ok(vec![geo.theta_at(range)])
            }
            (None, None) => Ok(vec![FRAC_PI_2]),
            (Some(_), Some(_)) => Err(HarnessError::Config("theta and geometry are mutually exclusive".into())),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let err = |m: String| Err(HarnessError::Config(m));
        if self.snr_db.is_empty() {
            return err("snr_db must not be empty".into());
        }
        if let Some(s) = self.snr_db.iter().find(|s| !s.is_finite()) {
            return err(format!("snr_db: {s} is not finite"));
        }
        if !matches!(self.array_size, 2 | 4) {
            return err(format!("array_size must be 2 or 4, got {}", self.array_size));
        }
        self.phi_policy()?;
        match self.experiment {
            Experiment::MiSweep => {
                self.parsed_schemes()?;
                self.thetas()?;
            }
            Experiment::DesignQuantizer => self.quantizer.validate()?,
            Experiment::BerSweep | Experiment::RangeSweep => {
                self.quantizer.validate()?;
                if self.frames < MIN_BER_FRAMES {
                    return err(format!("frames must be at least {MIN_BER_FRAMES}, got {}", self.frames));
                }
                if self.detectors.is_empty() {
                    return err("detectors must not be empty".into());
                }
                if self.detectors.contains(&DetectorKind::Vq) {
                    if self.quantizer.family != FamilyKind::Iq || self.quantizer.metric != Metric::Eqprob {
                        return err("vq detector needs an eqprob iq quantizer".into());
                    }
                    if !(1..=4).contains(&self.virtual_extra_bits) {
                        return err("virtual_extra_bits must be between 1 and 4".into());
                    }
                }
                if self.experiment == Experiment::BerSweep {
                    self.thetas()?;
                } else {
                    if self.theta.is_some() {
                        return err("range_sweep derives theta from geometry; remove theta".into());
                    }
                    let g = self.geometry.clone().unwrap_or_default();
                    if g.points < 2 || !(g.ratio_min > 0.0 && g.ratio_max > g.ratio_min) {
                        return err("geometry: need points ≥ 2 and 0 < ratio_min < ratio_max".into());
                    }
                    super::sweeps::resolve_geometry(&g, self.array_size)?;
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, lowercase hex.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        format!("{:x}", Sha256::digest(text.as_bytes()))
    }
}
