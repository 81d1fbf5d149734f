//! Pipeline configuration file and the hash that ties outputs to it.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{DateRange, InputFormat};
use crate::error::{Error, Result};
use crate::lda::{self, AlphaRule, KeepModels, SweepConfig};
use crate::signal;
use crate::textprep::{self, StripRule, TokenizerConfig};
use crate::themes::PercentileMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub path: PathBuf,
    /// Inferred from the file extension when absent.
    #[serde(default)]
    pub format: Option<InputFormat>,
    /// Hours added to UTC before cutting days.
    #[serde(default)]
    pub day_offset_hours: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    /// Defaults to the dates spanned by the corpus.
    #[serde(default)]
    pub window: Option<DateRange>,
    #[serde(default)]
    pub anchor_date: Option<NaiveDate>,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    /// Set to false to difference the raw counts.
    #[serde(default = "yes")]
    pub smoothing: bool,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            window: None,
            anchor_date: None,
            cutoff: default_cutoff(),
            smoothing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextConfig {
    #[serde(default)]
    pub stopwords_file: Option<PathBuf>,
    #[serde(default = "default_rules")]
    pub strip_rules: Vec<StripRule>,
    #[serde(default)]
    pub external_tokenizer: Option<Vec<String>>,
    #[serde(default = "yes")]
    pub lowercase: bool,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
    /// Model only the first of several documents with identical text.
    #[serde(default)]
    pub dedup_text: bool,
}

impl Default for TextConfig {
    fn default() -> Self {
        TextConfig {
            stopwords_file: None,
            strip_rules: default_rules(),
            external_tokenizer: None,
            lowercase: true,
            min_count: default_min_count(),
            dedup_text: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdaConfig {
    #[serde(default = "default_k_min")]
    pub k_min: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub alpha: AlphaRule,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub record_timings: bool,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            k_min: default_k_min(),
            k_max: default_k_max(),
            epochs: default_epochs(),
            alpha: AlphaRule::default(),
            beta: default_beta(),
            seed: 0,
            workers: default_workers(),
            record_timings: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThemeConfig {
    #[serde(default)]
    pub percentile_mode: PercentileMode,
    /// `phase,topic,themes` label file read by the report stage.
    #[serde(default)]
    pub labels: Option<PathBuf>,
    /// `country,alias` lexicon read by the report stage.
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputConfig,
    #[serde(default)]
    pub phases: PhaseConfig,
    #[serde(default)]
    pub text: TextConfig,
    #[serde(default)]
    pub lda: LdaConfig,
    #[serde(default)]
    pub themes: ThemeConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn yes() -> bool {
    true
}
fn default_cutoff() -> f64 {
    signal::DEFAULT_CUTOFF
}
fn default_rules() -> Vec<StripRule> {
    StripRule::ALL.to_vec()
}
fn default_min_count() -> usize {
    textprep::DEFAULT_MIN_COUNT
}
fn default_k_min() -> usize {
    lda::DEFAULT_K_MIN
}
fn default_k_max() -> usize {
    lda::DEFAULT_K_MAX
}
fn default_epochs() -> usize {
    lda::DEFAULT_EPOCHS
}
fn default_beta() -> f64 {
    lda::DEFAULT_BETA
}
fn default_workers() -> usize {
    1
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineConfig {
    /// Config with every default and the given input file.
    pub fn for_input(path: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            input: InputConfig {
                path: path.into(),
                format: None,
                day_offset_hours: 0,
            },
            phases: PhaseConfig::default(),
            text: TextConfig::default(),
            lda: LdaConfig::default(),
            themes: ThemeConfig::default(),
            output_dir: default_output(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.input.path);
        fix(&mut self.output_dir);
        if let Some(p) = self.text.stopwords_file.as_mut() {
            fix(p);
        }
        if let Some(p) = self.themes.labels.as_mut() {
            fix(p);
        }
        if let Some(p) = self.themes.lexicon.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.phases.cutoff > 0.0 && self.phases.cutoff < 1.0) {
            return bad(format!(
                "phases.cutoff must lie in (0, 1), got {}",
                self.phases.cutoff
            ));
        }
        if self.text.min_count == 0 {
            return bad("text.min_count must be at least 1".into());
        }
        if self.lda.k_min < 2 || self.lda.k_min > self.lda.k_max {
            return bad(format!(
                "lda.k_min..k_max must satisfy 2 <= k_min <= k_max, got {}..{}",
                self.lda.k_min, self.lda.k_max
            ));
        }
        if self.lda.epochs == 0 {
            return bad("lda.epochs must be at least 1".into());
        }
        let alpha_ok = match self.lda.alpha {
            AlphaRule::Scaled(v) | AlphaRule::Fixed(v) => v > 0.0,
        };
        if !alpha_ok || self.lda.beta <= 0.0 {
            return bad("lda.alpha and lda.beta must be positive".into());
        }
        if self.lda.workers == 0 {
            return bad("lda.workers must be at least 1".into());
        }
        if matches!(&self.text.external_tokenizer, Some(cmd) if cmd.is_empty()) {
            return bad("text.external_tokenizer must name a program".into());
        }
        Ok(())
    }

    pub fn input_format(&self) -> InputFormat {
        self.input
            .format
            .unwrap_or_else(|| InputFormat::from_path(&self.input.path))
    }

    /// The anchor date, or a config error when it is missing.
    pub fn anchor(&self) -> Result<NaiveDate> {
        self.phases
            .anchor_date
            .ok_or_else(|| Error::Config("phases.anchor_date is required".into()))
    }

    pub fn cutoff(&self) -> Option<f64> {
        self.phases.smoothing.then_some(self.phases.cutoff)
    }

    pub fn tokenizer(&self) -> Result<TokenizerConfig> {
        let stopwords = match &self.text.stopwords_file {
            Some(p) => textprep::load_stopwords(p)?,
            None => Default::default(),
        };
        Ok(TokenizerConfig {
            stopwords,
            strip_rules: self.text.strip_rules.clone(),
            external_tokenizer: self.text.external_tokenizer.clone(),
            lowercase: self.text.lowercase,
        })
    }

    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            k_min: self.lda.k_min,
            k_max: self.lda.k_max,
            alpha: self.lda.alpha,
            beta: self.lda.beta,
            epochs: self.lda.epochs,
            seed: self.lda.seed,
            workers: self.lda.workers,
            keep: KeepModels::Best,
            record_timings: self.lda.record_timings,
        }
    }

    /// SHA-256 over every setting that can change a CSV/JSON output, plus the
    /// bytes of the input corpus and stopword file. Worker count, output
    /// directory and the report's label and lexicon paths are left out, so
    /// that those can change without invalidating earlier stages.
    pub fn hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        let mut view = self.clone();
        view.lda.workers = 1;
        view.output_dir = PathBuf::new();
        view.themes.labels = None;
        view.themes.lexicon = None;
        view.input.path = PathBuf::new();
        view.text.stopwords_file = None;
        let canonical = serde_json::to_string(&view).expect("config serialises");
        h.update(canonical.as_bytes());
        h.update(b"\0input\0");
        h.update(digest_file(&self.input.path)?);
        if let Some(p) = &self.text.stopwords_file {
            h.update(b"\0stopwords\0");
            h.update(digest_file(p)?);
        }
        Ok(hex::encode(h.finalize()))
    }
}

fn digest_file(path: &Path) -> Result<[u8; 32]> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    std::io::copy(&mut file, &mut h).map_err(|e| Error::io(path, e))?;
    Ok(h.finalize().into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_documented_constants() {
        let cfg = PipelineConfig::from_toml("[input]\npath = \"x.jsonl\"\n").unwrap();
        assert_eq!(cfg.phases.cutoff, 0.2);
        assert_eq!(cfg.text.min_count, 20);
        assert_eq!((cfg.lda.k_min, cfg.lda.k_max, cfg.lda.epochs), (2, 50, 100));
        assert_eq!(cfg.lda.alpha, AlphaRule::Scaled(50.0));
        assert_eq!(cfg.lda.beta, 0.01);
        assert_eq!(cfg.themes.percentile_mode, PercentileMode::Cumulative75);
        assert!(matches!(cfg.anchor(), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_bad_values_as_config_errors() {
        for bad in [
            "[input]\npath='a'\n[phases]\ncutoff = 1.5\n",
            "[input]\npath='a'\n[lda]\nk_min = 1\n",
            "[input]\npath='a'\n[lda]\nk_min = 9\nk_max = 3\n",
            "[input]\npath='a'\n[text]\nmin_count = 0\n",
            "[input]\npath='a'\nbogus = 1\n",
        ] {
            assert!(
                PipelineConfig::from_toml(bad).unwrap_err().is_usage(),
                "{bad}"
            );
        }
    }

    #[test]
    fn alpha_rule_syntax() {
        let cfg = PipelineConfig::from_toml(
            "[input]\npath='a'\n[lda]\nalpha = { rule = \"fixed\", value = 0.1 }\n",
        )
        .unwrap();
        assert_eq!(cfg.lda.alpha, AlphaRule::Fixed(0.1));
    }

    #[test]
    fn hash_tracks_inputs_but_not_workers() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("c.jsonl");
        std::fs::write(&input, "{}\n").unwrap();
        let mut cfg = PipelineConfig::for_input(&input);
        let h0 = cfg.hash().unwrap();
        assert_eq!(h0.len(), 64);
        cfg.lda.workers = 8;
        cfg.output_dir = "elsewhere".into();
        assert_eq!(cfg.hash().unwrap(), h0);
        cfg.lda.seed = 1;
        assert_ne!(cfg.hash().unwrap(), h0);
        cfg.lda.seed = 0;
        std::fs::write(&input, "{}\n{}\n").unwrap();
        assert_ne!(cfg.hash().unwrap(), h0);
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "output_dir = 'o'\n[input]\npath = 'c.jsonl'\n").unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.input.path, dir.path().join("c.jsonl"));
        assert_eq!(cfg.output_dir, dir.path().join("o"));
    }
}
