use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use han_affect::analysis::{default_categories, AffectCategory};
use han_affect::corpus::View;
use han_affect::training::{ModelKind, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SEED_ENV: &str = "HAN_AFFECT_SEED";

/// A configuration problem; reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(field: &str, message: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("invalid config: {field}: {message}"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub lexica: Vec<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Affect categories used by `analyze`.
    pub categories: Vec<AffectCategory>,
    /// Min-max scale every lexicon column to [-1, 1] before stacking.
    pub scale_lexica: bool,
    pub phq8_threshold: i64,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            embeddings: None,
            lexica: Vec::new(),
            output_dir: None,
            categories: default_categories(),
            scale_lexica: false,
            phq8_threshold: 10,
            train: TrainConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file and environment.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Lexicon TSV; repeat for several. Replaces the configured list.
    #[arg(long = "lexicon")]
    pub lexica: Vec<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// svm, han, han_l, han_s or han_ls.
    #[arg(long)]
    pub model: Option<String>,
    /// client, therapist or both.
    #[arg(long)]
    pub view: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub attn_dim: Option<usize>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
}

fn known_keys() -> BTreeSet<String> {
    match serde_json::to_value(RunConfig::default()) {
        Ok(serde_json::Value::Object(m)) => m.keys().cloned().collect(),
        _ => BTreeSet::new(),
    }
}

/// Parses a config file, rejecting unknown keys by name.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ConfigError(format!("invalid config: not valid JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ConfigError("invalid config: top level must be a JSON object".into()))?;
    let known = known_keys();
    if let Some(k) = obj.keys().find(|k| !known.contains(*k)) {
        return Err(config_error(k, "unknown field"));
    }
    for (k, v) in obj {
        let mut probe = serde_json::Map::new();
        probe.insert(k.clone(), v.clone());
        if let Err(e) = serde_json::from_value::<RunConfig>(serde_json::Value::Object(probe)) {
            return Err(config_error(k, e));
        }
    }
    serde_json::from_value(value).map_err(|e| ConfigError(format!("invalid config: {e}")))
}

/// File, then `HAN_AFFECT_SEED`, then flags; later sources win.
pub fn resolve(overrides: &Overrides, env_seed: Option<&str>) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &overrides.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config_error("config", format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = env_seed {
        cfg.train.seed = s
            .trim()
            .parse()
            .map_err(|_| config_error(SEED_ENV, format!("`{s}` is not a non-negative integer")))?;
    }
    let o = overrides;
    if let Some(p) = &o.corpus {
        cfg.corpus = Some(p.clone());
    }
    if !o.lexica.is_empty() {
        cfg.lexica = o.lexica.clone();
    }
    if let Some(p) = &o.embeddings {
        cfg.embeddings = Some(p.clone());
    }
    if let Some(p) = &o.output {
        cfg.output_dir = Some(p.clone());
    }
    if let Some(m) = &o.model {
        cfg.train.model = m.parse::<ModelKind>().map_err(|e| config_error("model", e))?;
    }
    if let Some(v) = &o.view {
        cfg.train.view = v.parse::<View>().map_err(|e| config_error("view", e))?;
    }
    let t = &mut cfg.train;
    t.seed = o.seed.unwrap_or(t.seed);
    t.max_epochs = o.max_epochs.unwrap_or(t.max_epochs);
    t.patience = o.patience.unwrap_or(t.patience);
    t.folds = o.folds.unwrap_or(t.folds);
    t.hidden = o.hidden.unwrap_or(t.hidden);
    t.attn_dim = o.attn_dim.unwrap_or(t.attn_dim);
    t.embedding_dim = o.embedding_dim.unwrap_or(t.embedding_dim);
    Ok(cfg)
}

fn check_file(field: &str, path: &Path) -> Result<(), ConfigError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(config_error(field, format!("file {} does not exist", path.display())))
    }
}

/// What a command needs from the configuration.
#[derive(Clone, Copy, Debug, Default)]
pub struct Needs {
    pub corpus: bool,
    pub lexica: bool,
    pub output: bool,
}

impl RunConfig {
    pub fn validate(&self, needs: Needs) -> Result<(), ConfigError> {
        self.train.validate().map_err(|e| {
            let msg = e.to_string();
            ConfigError(format!("invalid config: {}", msg.trim_start_matches("invalid argument: ")))
        })?;
        match &self.corpus {
            Some(p) => check_file("corpus", p)?,
            None if needs.corpus => return Err(config_error("corpus", "a corpus path is required")),
            None => {}
        }
        if (needs.lexica || self.train.model.needs_lexica()) && self.lexica.is_empty() {
            let why = if needs.lexica {
                "at least one lexicon path is required".to_string()
            } else {
                format!("model {} requires at least one lexicon path", self.train.model.as_str())
            };
            return Err(config_error("lexica", why));
        }
        for (i, p) in self.lexica.iter().enumerate() {
            check_file(&format!("lexica[{i}]"), p)?;
        }
        if let Some(p) = &self.embeddings {
            check_file("embeddings", p)?;
        }
        if needs.output && self.output_dir.is_none() {
            return Err(config_error("output_dir", "an output directory is required"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialisation.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_named() {
        let err = parse_config(r#"{"seed": 1, "epochz": 3}"#).unwrap_err();
        assert!(err.0.contains("epochz"), "{err}");
        let err = parse_config(r#"{"patience": "five"}"#).unwrap_err();
        assert!(err.0.contains("patience"), "{err}");
    }

    #[test]
    fn flags_beat_env_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 1, "model": "svm"}"#).unwrap();
        let mut o = Overrides {
            config: Some(path),
            ..Overrides::default()
        };
        assert_eq!(resolve(&o, None).unwrap().train.seed, 1);
        assert_eq!(resolve(&o, Some("2")).unwrap().train.seed, 2);
        o.seed = Some(3);
        assert_eq!(resolve(&o, Some("2")).unwrap().train.seed, 3);
        assert!(resolve(&o, Some("x")).is_err());
        assert_eq!(resolve(&o, None).unwrap().train.model, ModelKind::Svm);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.train.seed = 9;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn conditioned_model_needs_lexica() {
        let mut c = RunConfig::default();
        c.train.model = ModelKind::HanL;
        let err = c.validate(Needs::default()).unwrap_err();
        assert!(err.0.contains("lexica"), "{err}");
    }
}
