use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Beamspace,
    Widths,
    Gaussian,
    Psp,
    Train,
    Track,
    Estimate,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Beamspace => "beamspace",
            Kind::Widths => "widths",
            Kind::Gaussian => "gaussian",
            Kind::Psp => "psp",
            Kind::Train => "train",
            Kind::Track => "track",
            Kind::Estimate => "estimate",
        }
    }

    /// Kinds that draw random users or noise and therefore need a seed.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Kind::Train | Kind::Track | Kind::Estimate)
    }
}

/// Config file as written by the user. Every field but `kind` is optional.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: Kind,
    n: Option<usize>,
    wavelength: Option<f64>,
    spacing: Option<f64>,
    angles: Option<usize>,
    surrogates: Option<usize>,
    s_max: Option<f64>,
    theta: Option<f64>,
    range: Option<f64>,
    threshold: Option<f64>,
    ds_list: Option<Vec<f64>>,
    snr_db: Option<f64>,
    k1: Option<usize>,
    s: Option<usize>,
    trials: Option<usize>,
    paths: Option<usize>,
    gamma: Option<f64>,
    slots: Option<usize>,
    speed: Option<f64>,
    seed: Option<u64>,
    out: Option<String>,
}

/// Fully resolved experiment configuration. Serialized as the effective
/// config echo next to the outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub n: usize,
    /// Carrier wavelength in metres.
    pub wavelength: f64,
    /// Element spacing in metres.
    pub spacing: f64,
    /// Beamspace grid: angle samples, surrogate rows and the top row.
    pub angles: usize,
    pub surrogates: usize,
    pub s_max: f64,
    /// Focus point (direction sine, range in metres) for the single-point kinds
    /// and the start of the tracking walk.
    pub theta: f64,
    pub range: f64,
    /// Power level bounding the Gaussian fit region.
    pub threshold: f64,
    /// Surrogate offsets for the low-mainlobe sweep, in units of `1 / N^2`.
    pub ds_list: Vec<f64>,
    pub snr_db: f64,
    pub k1: usize,
    pub s: usize,
    pub trials: usize,
    pub paths: usize,
    pub gamma: f64,
    pub slots: usize,
    /// User speed in angle beamwidths (`2 / N`) per slot.
    pub speed: f64,
    pub seed: Option<u64>,
    pub out: Option<String>,
}

/// Parses a JSON config and fills in the defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    parse_config_with(text, None, None)
}

/// Like [`parse_config`], with the kind and seed given on the command line.
/// A command-line seed overrides the file; a kind that disagrees with the
/// file is an error.
pub fn parse_config_with(text: &str, kind: Option<Kind>, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| CliError::config(None, e.to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::config(None, "config must be a JSON object".into()))?;
    if let Some(k) = kind {
        match obj.get("kind") {
            Some(v) if v.as_str() != Some(k.name()) => {
                return Err(CliError::config(
                    Some("kind"),
                    format!("config kind {v} does not match command-line kind \"{}\"", k.name()),
                ))
            }
            _ => {
                obj.insert("kind".into(), Value::from(k.name()));
            }
        }
    }
    if let Some(s) = seed {
        obj.insert("seed".into(), Value::from(s));
    }
    let raw: RawConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        // unknown and missing fields carry the key in the message; type errors
        // carry it in the path
        let key = if path == "." { quoted_key(&inner) } else { Some(path) };
        CliError::Config { key, message: inner }
    })?;
    resolve(raw)
}

fn quoted_key(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

fn resolve(raw: RawConfig) -> Result<ExperimentConfig, CliError> {
    let kind = raw.kind;
    if kind.is_stochastic() && raw.seed.is_none() {
        return Err(CliError::config(Some("seed"), format!("kind \"{}\" needs a seed", kind.name())));
    }
    let n = raw.n.unwrap_or(512);
    let wavelength = raw.wavelength.unwrap_or(0.01);
    let nf = n as f64;
    let ds_list = raw.ds_list.unwrap_or_else(|| vec![50.0, 100.0, 200.0]);
    if ds_list.is_empty() {
        return Err(CliError::config(Some("ds_list"), "ds_list must not be empty".into()));
    }
    Ok(ExperimentConfig {
        kind,
        n,
        wavelength,
        spacing: raw.spacing.unwrap_or(wavelength / 2.0),
        angles: raw.angles.unwrap_or(512.max(n)),
        surrogates: raw.surrogates.unwrap_or(11),
        s_max: raw.s_max.unwrap_or(176.0 / (nf * nf)),
        theta: raw.theta.unwrap_or(0.3),
        range: raw.range.unwrap_or(50.0),
        threshold: raw.threshold.unwrap_or(0.5),
        ds_list,
        snr_db: raw.snr_db.unwrap_or(if kind == Kind::Estimate { 20.0 } else { 10.0 }),
        k1: raw.k1.unwrap_or(8),
        s: raw.s.unwrap_or(7),
        trials: raw.trials.unwrap_or(if kind == Kind::Estimate { 200 } else { 100 }),
        paths: raw.paths.unwrap_or(3),
        gamma: raw.gamma.unwrap_or(std::f64::consts::FRAC_1_SQRT_2),
        slots: raw.slots.unwrap_or(200),
        speed: raw.speed.unwrap_or(0.1),
        seed: raw.seed,
        out: raw.out,
    })
}
