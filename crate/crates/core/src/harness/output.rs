//! Result rows, CSV and JSON emission.

use super::config::SweepConfig;
use super::HarnessError;
use crate::quantizer::QuantizerDocument;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const BER_HEADER: &str = "experiment,modulation,n,theta_rad,phi_policy,detector,quantizer,snr_db,frames,bit_errors,ber,stderr";
pub const RANGE_HEADER: &str =
    "experiment,modulation,n,theta_rad,phi_policy,detector,quantizer,snr_db,frames,bit_errors,ber,stderr,range_ratio";
pub const MI_HEADER: &str = "experiment,modulation,n,theta_rad,phi_policy,scheme,snr_db,mi_bits,stderr";
pub const DESIGN_HEADER: &str = "snr_db,descriptor,msqe";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerRow {
    pub experiment: String,
    pub modulation: String,
    pub n: usize,
    pub theta_rad: f64,
    pub phi_policy: String,
    pub detector: String,
    pub quantizer: String,
    pub snr_db: f64,
    pub frames: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub stderr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiRow {
    pub experiment: String,
    pub modulation: String,
    pub n: usize,
    pub theta_rad: f64,
    pub phi_policy: String,
    pub scheme: String,
    pub snr_db: f64,
    pub mi_bits: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub snr_db: f64,
    pub descriptor: String,
    pub msqe: f64,
    pub document: QuantizerDocument,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "rows", rename_all = "lowercase")]
pub enum Rows {
    Ber(Vec<BerRow>),
    Mi(Vec<MiRow>),
    Design(Vec<DesignRow>),
}

impl Rows {
    pub fn len(&self) -> usize {
        match self {
            Rows::Ber(r) => r.len(),
            Rows::Mi(r) => r.len(),
            Rows::Design(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub wall_time_s: f64,
    pub config: SweepConfig,
}

impl Metadata {
    pub fn new(cfg: &SweepConfig, start: Instant) -> Self {
        Self {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: start.elapsed().as_secs_f64(),
            config: cfg.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub metadata: Metadata,
    #[serde(flatten)]
    pub rows: Rows,
}

/// CSV text escaping for fields that may contain separators.
fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn emit_csv<W: Write>(result: &SweepResult, mut w: W) -> Result<(), HarnessError> {
    match &result.rows {
        Rows::Ber(rows) => {
            let ranged = rows.iter().any(|r| r.range_ratio.is_some());
            writeln!(w, "{}", if ranged { RANGE_HEADER } else { BER_HEADER })?;
            for r in rows {
                write!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    field(&r.experiment),
                    field(&r.modulation),
                    r.n,
                    r.theta_rad,
                    field(&r.phi_policy),
                    field(&r.detector),
                    field(&r.quantizer),
                    r.snr_db,
                    r.frames,
                    r.bit_errors,
                    r.ber,
                    r.stderr
                )?;
                match (ranged, r.range_ratio) {
                    (true, Some(x)) => writeln!(w, ",{x}")?,
                    (true, None) => writeln!(w, ",")?,
                    _ => writeln!(w)?,
                }
            }
        }
        Rows::Mi(rows) => {
            writeln!(w, "{MI_HEADER}")?;
            for r in rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    field(&r.experiment),
                    field(&r.modulation),
                    r.n,
                    r.theta_rad,
                    field(&r.phi_policy),
                    field(&r.scheme),
                    r.snr_db,
                    r.mi_bits,
                    r.stderr
                )?;
            }
        }
        Rows::Design(rows) => {
            writeln!(w, "{DESIGN_HEADER}")?;
            for r in rows {
                writeln!(w, "{},{},{}", r.snr_db, field(&r.descriptor), r.msqe)?;
            }
        }
    }
    Ok(())
}

pub fn emit_json<W: Write>(result: &SweepResult, mut w: W) -> Result<(), HarnessError> {
    serde_json::to_writer_pretty(&mut w, result).map_err(std::io::Error::from)?;
    writeln!(w)?;
    Ok(())
}

pub fn parse_json(text: &str) -> Result<SweepResult, HarnessError> {
    serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("result json: {e}")))
}

/// Writes `<path>.csv` and `<path>.json`, replacing any extension.
pub fn write_outputs(result: &SweepResult, path: &Path) -> Result<(PathBuf, PathBuf), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let csv = path.with_extension("csv");
    let json = path.with_extension("json");
    emit_csv(result, std::io::BufWriter::new(std::fs::File::create(&csv)?))?;
    emit_json(result, std::io::BufWriter::new(std::fs::File::create(&json)?))?;
    Ok((csv, json))
}
