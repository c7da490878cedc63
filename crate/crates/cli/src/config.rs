//! Run configuration: a TOML file whose values are overridden by flags.
//!
//! ```toml
//! manifest = "corpus/manifest.tsv"
//! output_dir = "runs/hmm"
//! workers = 0            # 0 = all available cores
//! cache_dir = "cache"    # optional feature cache
//!
//! [split]
//! mode = "standard"      # or "explicit" with the four lists below
//! train_speakers = []
//! test_speakers = []
//! train_sentences = []
//! test_sentences = []
//!
//! [model]
//! kind = "hmm"           # hmm | chmm2 | sphmm
//! n_states = 9
//! n_mix = 10
//! max_jump = 2
//! grouping = 3
//! prosodic_mix = 1
//! alpha = 0.5
//! seed = 0
//!
//! [model.train]
//! max_iters = 40
//! tol = 1e-4
//! variance_floor_frac = 1e-4
//!
//! [features.mfcc]
//! # see MfccConfig
//! [features.prosody]
//! # see ProsodyConfig
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use stresshmm_core::classify::{FeatureConfig, ModelConfig, ModelKind};
use stresshmm_core::{paper_split, CorpusManifest, SplitSpec};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    #[default]
    Standard,
    Explicit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub mode: SplitMode,
    pub train_speakers: Vec<String>,
    pub test_speakers: Vec<String>,
    pub train_sentences: Vec<u32>,
    pub test_sentences: Vec<u32>,
}

impl SplitConfig {
    pub fn resolve(&self, manifest: &CorpusManifest) -> Result<SplitSpec> {
        Ok(match self.mode {
            SplitMode::Standard => paper_split(manifest)?,
            SplitMode::Explicit => SplitSpec::new(
                self.train_speakers.iter().cloned().collect(),
                self.test_speakers.iter().cloned().collect(),
                self.train_sentences.iter().copied().collect(),
                self.test_sentences.iter().copied().collect(),
            )?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub workers: usize,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub features: FeatureConfig,
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Corpus manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory for outputs.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Feature cache directory.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Model family: hmm, chmm2 or sphmm.
    #[arg(long)]
    pub kind: Option<ModelKind>,
    /// States per acoustic model.
    #[arg(long)]
    pub states: Option<usize>,
    /// Gaussian components per state.
    #[arg(long)]
    pub mix: Option<usize>,
    /// Acoustic states per suprasegmental state.
    #[arg(long)]
    pub grouping: Option<usize>,
    /// Fusion weight of suprasegmental models.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum Baum-Welch iterations.
    #[arg(long)]
    pub max_iters: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // Relative paths in the file are relative to the file.
        let base = path.parent().unwrap_or(Path::new(""));
        Ok(RunConfig {
            manifest: cfg.manifest.map(|p| base.join(p)),
            output_dir: cfg.output_dir.map(|p| base.join(p)),
            cache_dir: cfg.cache_dir.map(|p| base.join(p)),
            ..cfg
        })
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut cfg = match &o.config {
            Some(p) => Self::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &o.manifest {
            cfg.manifest = Some(v.clone());
        }
        if let Some(v) = &o.out {
            cfg.output_dir = Some(v.clone());
        }
        if let Some(v) = &o.cache_dir {
            cfg.cache_dir = Some(v.clone());
        }
        if let Some(v) = o.workers {
            cfg.workers = v;
        }
        let m = &mut cfg.model;
        if let Some(v) = o.kind {
            m.kind = v;
        }
        if let Some(v) = o.states {
            m.n_states = v;
        }
        if let Some(v) = o.mix {
            m.n_mix = v;
        }
        if let Some(v) = o.grouping {
            m.grouping = v;
        }
        if let Some(v) = o.alpha {
            m.alpha = v;
        }
        if let Some(v) = o.seed {
            m.seed = v;
        }
        if let Some(v) = o.max_iters {
            m.train.max_iters = v;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(manifest) = &self.manifest else {
            bail!("no manifest given (set `manifest` in the config or pass --manifest)");
        };
        if !manifest.is_file() {
            bail!("manifest {} does not exist", manifest.display());
        }
        if self.output_dir.is_none() {
            bail!("no output directory given (set `output_dir` in the config or pass --out)");
        }
        self.model.validate()?;
        self.features.mfcc.validate()?;
        Ok(())
    }

    pub fn manifest_path(&self) -> &Path {
        self.manifest.as_deref().expect("validated")
    }

    pub fn output_dir(&self) -> &Path {
        self.output_dir.as_deref().expect("validated")
    }

    /// Copy with every path made absolute, so the file can be reloaded from anywhere.
    pub fn absolute(&self) -> Result<Self> {
        let abs = |p: &Option<PathBuf>| p.as_deref().map(std::path::absolute).transpose();
        Ok(Self {
            manifest: abs(&self.manifest)?,
            output_dir: abs(&self.output_dir)?,
            cache_dir: abs(&self.cache_dir)?,
            ..self.clone()
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_setup() {
        let c = RunConfig::default();
        assert_eq!(
            (c.model.n_states, c.model.n_mix, c.model.grouping, c.model.alpha),
            (9, 10, 3, 0.5)
        );
        assert_eq!(c.split.mode, SplitMode::Standard);
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "manifest = \"m.tsv\"\n[model]\nkind = \"chmm2\"\nn_mix = 4\nseed = 3\n",
        )
        .unwrap();
        let o = Overrides {
            config: Some(path),
            mix: Some(2),
            ..Overrides::default()
        };
        let c = RunConfig::resolve(&o).unwrap();
        assert_eq!(c.model.kind, ModelKind::Chmm2);
        assert_eq!(c.model.n_mix, 2);
        assert_eq!(c.model.seed, 3);
        assert_eq!(c.model.n_states, 9);
        assert_eq!(c.manifest.unwrap(), dir.path().join("m.tsv"));
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        assert!(toml::from_str::<RunConfig>("[model]\nkind = \"svm\"\n").is_err());
        assert!(toml::from_str::<RunConfig>("[model]\nn_sates = 3\n").is_err());
    }
}
