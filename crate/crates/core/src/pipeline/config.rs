use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::corpus::SyntheticCorpusSpec;
use crate::align::DEFAULT_GAP_PENALTY;
use crate::error::{Error, Result};
use crate::model::M2MConfig;
use crate::synth::{SynthParams, SEGMENT_SECONDS};
use crate::trainer::TrainConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Root of a generated corpus: `scores/`, `performances/`, `alignments/`.
    pub corpus_dir: PathBuf,
    pub output_dir: PathBuf,
    pub checkpoint: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            corpus_dir: "data".into(),
            output_dir: "out".into(),
            checkpoint: "out/model.s2a".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub seed: u64,
    /// Used when a score is rendered outside a corpus.
    pub performer_id: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_p: 0.9,
            seed: 0,
            performer_id: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    #[serde(flatten)]
    pub params: SynthParams,
    pub segment_seconds: f64,
    /// Material shared by neighbouring segments; also the crossfade length.
    pub overlap_seconds: f64,
    pub max_lag_seconds: f64,
    pub frame_len: usize,
    pub hop: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            params: SynthParams::default(),
            segment_seconds: SEGMENT_SECONDS,
            overlap_seconds: 0.5,
            max_lag_seconds: 0.05,
            frame_len: 2048,
            hop: 240,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub gap_penalty: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            gap_penalty: DEFAULT_GAP_PENALTY,
        }
    }
}

/// Everything a pipeline run depends on. Every section has defaults, so a
/// config file only needs the fields it overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub paths: PathsConfig,
    pub corpus: SyntheticCorpusSpec,
    pub model: M2MConfig,
    pub train: TrainConfig,
    pub sampling: SamplingConfig,
    pub synthesis: SynthesisConfig,
    pub alignment: AlignConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let corpus = SyntheticCorpusSpec::default();
        Self {
            version: CONFIG_VERSION,
            paths: PathsConfig::default(),
            model: M2MConfig {
                n_performers: corpus.n_performers.max(1),
                ..M2MConfig::default()
            },
            corpus,
            train: TrainConfig::default(),
            sampling: SamplingConfig::default(),
            synthesis: SynthesisConfig::default(),
            alignment: AlignConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::Usage(format!("bad config: {e}")))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Usage(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |e: Error| Error::Usage(e.to_string());
        self.model.validate().map_err(usage)?;
        self.train.validate().map_err(usage)?;
        self.corpus.validate().map_err(usage)?;
        let s = &self.sampling;
        if !(s.top_p > 0.0 && s.top_p <= 1.0) || !(s.temperature >= 0.0) {
            return Err(Error::Usage("top_p must lie in (0, 1] and temperature be non-negative".into()));
        }
        let y = &self.synthesis;
        if !(y.overlap_seconds > 0.0 && y.overlap_seconds < y.segment_seconds) {
            return Err(Error::Usage("overlap must be positive and shorter than a segment".into()));
        }
        if y.hop == 0 || y.frame_len < y.hop || y.max_lag_seconds < 0.0 {
            return Err(Error::Usage("need frame_len >= hop > 0 and max_lag >= 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = PipelineConfig::from_json(r#"{"version": 1, "train": {"max_steps": 5}}"#).unwrap();
        assert_eq!(cfg.train.max_steps, Some(5));
        assert_eq!(cfg.train.learning_rate, 2e-5);
        assert_eq!(cfg.model, PipelineConfig::default().model);
        cfg.validate().unwrap();
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_version() {
        assert!(matches!(
            PipelineConfig::from_json(r#"{"version": 7}"#),
            Err(Error::Usage(_))
        ));
    }
}
