//! Labeled utterances, the manifest file format, the speaker- and
//! text-independent train/test split, and the synthetic corpus generator.

mod manifest;
mod split;
mod synth;

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use manifest::{load_manifest, save_manifest, MANIFEST_MAGIC};
pub use split::{paper_split, SplitSpec};
pub use synth::{generate_synthetic, ConditionVoice, SyntheticSpec};

/// Ordered set of talking-condition labels. The position of a label is the
/// model index used everywhere downstream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionSet {
    name: String,
    labels: Vec<String>,
}

impl ConditionSet {
    pub fn new(name: impl Into<String>, labels: Vec<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::invalid(format!("bad condition set name `{name}`")));
        }
        if labels.is_empty() {
            return Err(Error::invalid("condition set has no labels"));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if l.is_empty() || l.contains(|c: char| c.is_whitespace() || c == ',') {
                return Err(Error::invalid(format!("bad condition label `{l}`")));
            }
            if !seen.insert(l.as_str()) {
                return Err(Error::invalid(format!("duplicate condition label `{l}`")));
            }
        }
        Ok(ConditionSet { name, labels })
    }

    /// Neutral, shouted, slow, loud, soft, fast.
    pub fn stress() -> Self {
        Self::from_static("stress", &["neutral", "shouted", "slow", "loud", "soft", "fast"])
    }

    /// Neutral, angry, sad, happy, disgust, fear.
    pub fn emotion() -> Self {
        Self::from_static("emotion", &["neutral", "angry", "sad", "happy", "disgust", "fear"])
    }

    fn from_static(name: &str, labels: &[&str]) -> Self {
        ConditionSet {
            name: name.to_string(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub(crate) fn require(&self, label: &str) -> Result<usize> {
        self.index_of(label).ok_or_else(|| Error::UnknownLabel {
            label: label.to_string(),
            known: self.labels.join(","),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "male" | "m" => Ok(Gender::Male),
            "female" | "f" => Ok(Gender::Female),
            "unknown" | "" | "-" => Ok(Gender::Unknown),
            other => Err(Error::invalid(format!("unknown gender `{other}`"))),
        }
    }
}

/// One labeled clip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    /// As written in the manifest; relative paths resolve against the manifest root.
    pub audio_path: PathBuf,
    pub speaker_id: String,
    pub gender: Gender,
    pub sentence_id: u32,
    pub condition: String,
    pub repetition: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    condition_set: ConditionSet,
    utterances: Vec<Utterance>,
    sample_rate_hz: u32,
    root: PathBuf,
}

impl CorpusManifest {
    /// Validates labels, repetition numbers and key uniqueness. Audio files are
    /// not touched; [`load_manifest`] adds the existence check.
    pub fn new(
        condition_set: ConditionSet,
        utterances: Vec<Utterance>,
        sample_rate_hz: u32,
        root: impl Into<PathBuf>,
    ) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        let mut keys = HashSet::with_capacity(utterances.len());
        for u in &utterances {
            condition_set.require(&u.condition)?;
            if u.repetition < 1 {
                return Err(Error::invalid(format!(
                    "repetition must be >= 1 ({})",
                    u.audio_path.display()
                )));
            }
            if u.speaker_id.is_empty() || u.speaker_id.contains(char::is_whitespace) {
                return Err(Error::invalid(format!("bad speaker id `{}`", u.speaker_id)));
            }
            let key = (&u.speaker_id, u.sentence_id, &u.condition, u.repetition);
            if !keys.insert(key) {
                return Err(Error::DuplicateUtterance {
                    speaker: u.speaker_id.clone(),
                    sentence: u.sentence_id,
                    condition: u.condition.clone(),
                    repetition: u.repetition,
                });
            }
        }
        Ok(CorpusManifest {
            condition_set,
            utterances,
            sample_rate_hz,
            root: root.into(),
        })
    }

    pub fn condition_set(&self) -> &ConditionSet {
        &self.condition_set
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, utt: &Utterance) -> PathBuf {
        if utt.audio_path.is_absolute() {
            utt.audio_path.clone()
        } else {
            self.root.join(&utt.audio_path)
        }
    }

    /// Condition index of utterance `i`.
    pub fn label_index(&self, i: usize) -> usize {
        self.condition_set
            .index_of(&self.utterances[i].condition)
            .expect("validated at construction")
    }

    pub fn speakers(&self) -> Vec<String> {
        let mut v: Vec<String> = self.utterances.iter().map(|u| u.speaker_id.clone()).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn sentences(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.utterances.iter().map(|u| u.sentence_id).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}
