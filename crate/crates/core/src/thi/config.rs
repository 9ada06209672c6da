use serde::{Deserialize, Serialize};

use super::ThiError;

/// Which gallery item receives the pinned auxiliary score of 1 during
/// fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorPin {
    /// The candidate the oracle located (round k's candidate).
    #[default]
    Located,
    /// Always the top-1 baseline candidate.
    TopCandidate,
}

/// When localization calls are issued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalizationMode {
    /// Stop as soon as the session outcome is decided.
    #[default]
    Gated,
    /// Localize every candidate in every round regardless of outcome.
    Unconditional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThiConfig {
    /// Interaction rounds K; one candidate is examined per round.
    pub rounds: usize,
    /// Top-1 similarity threshold ξ separating the two gating branches.
    pub similarity_threshold: f32,
    /// Fusion weight λ of the baseline similarity.
    pub fusion_weight: f32,
    /// Candidate set size; `None` binds it to `rounds`.
    pub candidate_size: Option<usize>,
    pub max_inflight: usize,
    pub anchor_pin: AnchorPin,
    pub localization: LocalizationMode,
}

impl Default for ThiConfig {
    fn default() -> Self {
        Self {
            rounds: 5,
            similarity_threshold: 0.55,
            fusion_weight: 0.8,
            candidate_size: None,
            max_inflight: 4,
            anchor_pin: AnchorPin::Located,
            localization: LocalizationMode::Gated,
        }
    }
}

impl ThiConfig {
    pub fn candidate_size(&self) -> usize {
        self.candidate_size.unwrap_or(self.rounds)
    }

    pub fn validate(&self) -> Result<(), ThiError> {
        if self.rounds == 0 {
            return Err(ThiError::Config("rounds must be at least 1".into()));
        }
        if !self.similarity_threshold.is_finite() {
            return Err(ThiError::Config("similarity threshold must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.fusion_weight) {
            return Err(ThiError::Config(format!("fusion weight {} outside [0, 1]", self.fusion_weight)));
        }
        if self.candidate_size() < self.rounds {
            return Err(ThiError::Config(format!(
                "candidate size {} smaller than rounds {}",
                self.candidate_size(),
                self.rounds
            )));
        }
        if self.max_inflight == 0 {
            return Err(ThiError::Config("max in-flight oracle calls must be at least 1".into()));
        }
        Ok(())
    }
}
