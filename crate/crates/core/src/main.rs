use clap::{Args, Parser, Subcommand};
use qlos::constellation::Modulation;
use qlos::harness::{self, DetectorKind, Experiment, FamilyKind, HarnessError, QuantizerSpec, SweepConfig};
use qlos::quantizer::Metric;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qlos", version, about = "Quantized line-of-sight MIMO sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design a quantizer per SNR point and print its thresholds.
    DesignQuantizer(Common),
    /// Mutual information versus SNR.
    MiSweep(Common),
    /// Bit error rate versus SNR.
    BerSweep(Common),
    /// Bit error rate versus link range around the nominal range.
    RangeSweep(Common),
}

#[derive(Args)]
struct Common {
    /// JSON sweep configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; `.csv` and `.json` files are written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Quantizer family: iq, ap or phase.
    #[arg(long, value_parser = parse_family)]
    family: Option<FamilyKind>,
    /// Levels per axis (iq) or sectors (phase).
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    rings: Option<usize>,
    #[arg(long)]
    sectors: Option<usize>,
    #[arg(long, value_parser = parse_metric)]
    metric: Option<Metric>,
    /// Physical I/Q bits per axis; selects an eqprob iq quantizer.
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..=4))]
    physical_bits: Option<u32>,
    #[arg(long)]
    virtual_extra_bits: Option<u32>,
    /// SNR points in dB, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Option<Vec<f64>>,
    /// SNR range `start:stop:step` in dB, stop included.
    #[arg(long, allow_hyphen_values = true)]
    snr_db_range: Option<String>,
    /// Cross-over phase(s) in radians, comma separated.
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<f64>>,
    /// `fixed:<rad>`, `uniform` or `grid:<n>`.
    #[arg(long)]
    phi: Option<String>,
    #[arg(long, value_delimiter = ',')]
    detector: Option<Vec<DetectorKind>>,
    /// Mutual information scheme, repeatable.
    #[arg(long)]
    scheme: Vec<String>,
    #[arg(long = "mod")]
    modulation: Option<Modulation>,
    #[arg(long)]
    array_size: Option<usize>,
    #[arg(long)]
    frames: Option<u64>,
    /// Enable early stopping (200 errors, 10⁴ frames).
    #[arg(long)]
    early_stop: bool,
}

fn parse_family(s: &str) -> Result<FamilyKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown family `{s}`"))
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown metric `{s}`"))
}

fn parse_range(s: &str) -> Result<Vec<f64>, HarnessError> {
    let bad = || HarnessError::Config(format!("--snr-db-range `{s}` must be start:stop:step"));
    let v: Vec<f64> = s.split(':').map(|t| t.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let [a, b, step] = v[..] else { return Err(bad()) };
    if !(step > 0.0 && b >= a && a.is_finite() && b.is_finite()) {
        return Err(bad());
    }
    let count = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| a + step * k as f64).collect())
}

fn build_config(experiment: Experiment, o: Common) -> Result<SweepConfig, HarnessError> {
    let mut cfg = match &o.config {
        Some(p) => SweepConfig::from_path(p)?,
        None => SweepConfig::new(experiment, vec![if experiment == Experiment::RangeSweep { 40.0 } else { 10.0 }]),
    };
    if cfg.experiment != experiment {
        return Err(HarnessError::Config(format!("config experiment is {}, but subcommand is {experiment}", cfg.experiment)));
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(p) = o.out {
        cfg.output = Some(p);
    }
    if let Some(b) = o.physical_bits {
        cfg.quantizer = QuantizerSpec::iq_bits(b);
    }
    if let Some(f) = o.family {
        if f != cfg.quantizer.family {
            cfg.quantizer = QuantizerSpec { family: f, levels: None, ..QuantizerSpec::default() };
        }
    }
    let q = &mut cfg.quantizer;
    if let Some(b) = o.bins {
        match q.family {
            FamilyKind::Phase => q.sectors = Some(b),
            _ => q.levels = Some(b),
        }
    }
    if o.rings.is_some() {
        q.rings = o.rings;
    }
    if o.sectors.is_some() {
        q.sectors = o.sectors;
    }
    if let Some(m) = o.metric {
        q.metric = m;
    }
    if let Some(v) = o.virtual_extra_bits {
        cfg.virtual_extra_bits = v;
    }
    match (o.snr_db, o.snr_db_range) {
        (Some(_), Some(_)) => return Err(HarnessError::Config("use either --snr-db or --snr-db-range".into())),
        (Some(v), None) => cfg.snr_db = v,
        (None, Some(r)) => cfg.snr_db = parse_range(&r)?,
        (None, None) => {}
    }
    if let Some(t) = o.theta {
        cfg.theta = Some(harness::config::OneOrMany::Many(t));
        cfg.geometry = None;
    }
    if let Some(p) = o.phi {
        cfg.phi = p;
    }
    if let Some(d) = o.detector {
        cfg.detectors = d;
    }
    if !o.scheme.is_empty() {
        cfg.schemes = o.scheme;
    }
    if let Some(m) = o.modulation {
        cfg.modulation = m;
    }
    if let Some(n) = o.array_size {
        cfg.array_size = n;
    }
    if let Some(f) = o.frames {
        cfg.frames = f;
    }
    if o.early_stop {
        cfg.early_stop = Some(harness::EarlyStop::default());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    let (experiment, common) = match cli.command {
        Command::DesignQuantizer(c) => (Experiment::DesignQuantizer, c),
        Command::MiSweep(c) => (Experiment::MiSweep, c),
        Command::BerSweep(c) => (Experiment::BerSweep, c),
        Command::RangeSweep(c) => (Experiment::RangeSweep, c),
    };
    let cfg = build_config(experiment, common)?;
    let result = harness::run(&cfg)?;
    match &cfg.output {
        Some(path) => {
            let (csv, json) = harness::write_outputs(&result, path)?;
            eprintln!("wrote {} and {}", csv.display(), json.display());
        }
        None if experiment == Experiment::DesignQuantizer => harness::emit_json(&result, std::io::stdout().lock())?,
        None => harness::emit_csv(&result, std::io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
