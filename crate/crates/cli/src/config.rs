//! Run configuration file. Every key is optional; command-line flags take
//! precedence over the file, and the file over built-in defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer};
use tirank::rda::NegativeRule;
use tirank::thi::{AnchorPin, LocalizationMode};

use crate::error::CliError;

/// Environment variable holding the oracle service's API key.
pub const API_KEY_ENV: &str = "TIRANK_API_KEY";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub paths: PathsConfig,
    pub synthetic: SyntheticConfig,
    pub thi: ThiSection,
    pub oracle: OracleSection,
    pub rda: RdaSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Directory holding `annotations.json`, `images.icle` and `texts.icle`.
    pub data: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub image_embeddings: Option<PathBuf>,
    pub text_embeddings: Option<PathBuf>,
    pub rankings: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Parent of generated run directories.
    pub runs: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub identities: Option<usize>,
    pub images_per_identity: Option<usize>,
    pub texts_per_identity: Option<usize>,
    pub dim: Option<usize>,
    pub sigma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThiSection {
    pub rounds: Option<usize>,
    pub xi: Option<Threshold>,
    pub lambda: Option<f32>,
    pub candidate_size: Option<usize>,
    pub max_inflight: Option<usize>,
    pub anchor_pin: Option<AnchorPin>,
    pub localization: Option<LocalizationMode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub backend: Option<Backend>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub template_dir: Option<PathBuf>,
    pub script: Option<PathBuf>,
    /// Root that relative image paths are resolved against.
    pub image_root: Option<PathBuf>,
    pub max_retries: Option<u32>,
    pub timeout_secs: Option<u64>,
    pub word_cap: Option<usize>,
    /// Simulated backend: probability of a correct localization verdict.
    pub accuracy: Option<f64>,
    /// Simulated backend: interpolation weight toward the anchor.
    pub refinement_strength: Option<f64>,
    pub embedder_endpoint: Option<String>,
    pub embedder_model: Option<String>,
    pub refined_embeddings: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RdaSection {
    pub m: Option<usize>,
    pub per_text_count: Option<usize>,
    pub n_l: Option<usize>,
    pub negative_rule: Option<NegativeRule>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Simulated,
    Scripted,
    Wire,
}

/// Interaction threshold: a fixed value or the median baseline top-1
/// similarity of the corpus being re-ranked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Fixed(f32),
    Median,
}

impl FromStr for Threshold {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("median") {
            return Ok(Self::Median);
        }
        s.parse::<f32>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Self::Fixed)
            .ok_or_else(|| format!("expected a number or \"median\", got {s:?}"))
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f32),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Self::Fixed(v)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Parses a kebab-case enum value the same way the config file does.
pub fn parse_kebab<T: for<'de> Deserialize<'de>>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|m| CliError::validation(format!("{}: {m}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_file_parses() {
        let c = RunConfig::parse(
            r#"
            seed = 42
            [paths]
            data = "bench"
            [thi]
            rounds = 5
            xi = "median"
            lambda = 0.8
            anchor_pin = "top-candidate"
            localization = "unconditional"
            [oracle]
            backend = "simulated"
            accuracy = 0.9
            [rda]
            m = 2
            negative_rule = "first-ten-different"
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, Some(42));
        assert_eq!(c.thi.xi, Some(Threshold::Median));
        assert_eq!(c.thi.anchor_pin, Some(AnchorPin::TopCandidate));
        assert_eq!(c.oracle.backend, Some(Backend::Simulated));
        assert_eq!(c.rda.negative_rule, Some(NegativeRule::FirstTenDifferent));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("sed = 1").is_err());
        assert!(RunConfig::parse("[thi]\nlamda = 0.5").is_err());
    }

    #[test]
    fn threshold_forms() {
        assert_eq!("0.5".parse::<Threshold>(), Ok(Threshold::Fixed(0.5)));
        assert_eq!("Median".parse::<Threshold>(), Ok(Threshold::Median));
        assert!("high".parse::<Threshold>().is_err());
        assert_eq!(RunConfig::parse("[thi]\nxi = 0.4").unwrap().thi.xi, Some(Threshold::Fixed(0.4)));
    }

    #[test]
    fn kebab_flags() {
        assert_eq!(parse_kebab::<LocalizationMode>("gated"), Ok(LocalizationMode::Gated));
        assert!(parse_kebab::<AnchorPin>("nearest").is_err());
    }
}
