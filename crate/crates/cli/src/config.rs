//! Run configuration: a sectioned TOML file, schema-validated, with
//! environment overrides under the `VISTA_` prefix
//! (`VISTA_TRAIN__STEPS=100` sets `[train] steps`).

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use vista_core::data::SynthConfig;
use vista_core::model::ModelConfig;
use vista_core::numerics::ActivationKind;
use vista_core::train::TrainOptions;

use crate::CliError;

pub const ENV_PREFIX: &str = "VISTA_";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub model: ModelSection,
    pub optimizer: OptimizerSection,
    pub data: DataSection,
    pub train: TrainSection,
    pub staleness: StalenessSection,
    pub bench: BenchSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub deterministic: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 7, out_dir: PathBuf::from("runs/out"), deterministic: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub seed_count: usize,
    pub dim: usize,
    pub summarize_layers: usize,
    pub target_layers: usize,
    pub decoder_layers: usize,
    pub phi1: String,
    pub phi2: String,
    pub lambda_recon: f64,
    pub include_candidate_self: bool,
    pub causal_summarize: bool,
    pub item_buckets: usize,
    pub cat_buckets: usize,
    pub head_hidden: Vec<usize>,
    pub init_scale: f64,
    pub embed_init_scale: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            seed_count: 32,
            dim: 64,
            summarize_layers: 1,
            target_layers: 1,
            decoder_layers: 1,
            phi1: "shifted_elu".into(),
            phi2: "identity".into(),
            lambda_recon: 1.0,
            include_candidate_self: true,
            causal_summarize: false,
            item_buckets: 8192,
            cat_buckets: 64,
            head_hidden: vec![128, 64],
            init_scale: 1.0,
            embed_init_scale: 0.25,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// "synthetic" or "csv".
    pub source: String,
    pub csv_path: Option<PathBuf>,
    pub users: u64,
    pub items: u64,
    pub categories: u64,
    pub min_history: usize,
    pub max_history: usize,
    pub candidates: usize,
    pub noise: f64,
    pub affinity_gain: f64,
    pub category_stickiness: f64,
    pub item_spread: f64,
    pub pref_sharpness: f64,
    /// Leading fraction of users used for training; the rest evaluate.
    pub train_frac: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            source: "synthetic".into(),
            csv_path: None,
            users: s.users,
            items: s.items,
            categories: s.categories,
            min_history: s.min_history,
            max_history: s.max_history,
            candidates: s.candidates,
            noise: s.noise,
            affinity_gain: s.affinity_gain,
            category_stickiness: s.category_stickiness,
            item_spread: s.item_spread,
            pref_sharpness: s.pref_sharpness,
            train_frac: 0.9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub steps: u64,
    pub publish_every: u64,
    pub eval_every: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { steps: 1000, publish_every: 50, eval_every: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StalenessSection {
    pub max_lag: u64,
    pub strict: bool,
}

impl Default for StalenessSection {
    fn default() -> Self {
        Self { max_lag: u64::MAX, strict: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub grid: Vec<usize>,
    pub reps: usize,
    pub dim: usize,
    pub dtype: String,
    /// Single-user batches scored per timed inference call.
    pub requests: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self { grid: vec![1024, 4096, 16384, 65536], reps: 5, dim: 64, dtype: "f64".into(), requests: 20 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading config {}: {e}", path.display())))?;
        let mut value: toml::Value = text
            .parse()
            .map_err(|e| CliError::Config(format!("parsing {}: {e}", path.display())))?;
        apply_env_overrides(&mut value, std::env::vars())?;
        let cfg: RunConfig = value
            .try_into()
            .map_err(|e| CliError::Config(format!("schema error in {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        parse_activation(&self.model.phi1)?;
        parse_activation(&self.model.phi2)?;
        if !matches!(self.data.source.as_str(), "synthetic" | "csv") {
            return Err(CliError::Config(format!(
                "data.source must be \"synthetic\" or \"csv\", got {:?}",
                self.data.source
            )));
        }
        if self.data.source == "csv" && self.data.csv_path.is_none() {
            return Err(CliError::Config("data.source = \"csv\" requires data.csv_path".into()));
        }
        if !(0.0..=1.0).contains(&self.data.train_frac) {
            return Err(CliError::Config("data.train_frac must lie in [0, 1]".into()));
        }
        if self.model.dim == 0 || self.model.seed_count == 0 {
            return Err(CliError::Config("model.dim and model.seed_count must be positive".into()));
        }
        self.synth_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            users: self.data.users,
            items: self.data.items,
            categories: self.data.categories,
            min_history: self.data.min_history,
            max_history: self.data.max_history,
            candidates: self.data.candidates,
            noise: self.data.noise,
            affinity_gain: self.data.affinity_gain,
            category_stickiness: self.data.category_stickiness,
            item_spread: self.data.item_spread,
            pref_sharpness: self.data.pref_sharpness,
            embed_dim: self.model.dim,
            seed: self.run.seed,
            ..SynthConfig::default()
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig, CliError> {
        Ok(ModelConfig {
            seed_count: self.model.seed_count,
            dim: self.model.dim,
            summarize_layers: self.model.summarize_layers,
            target_layers: self.model.target_layers,
            decoder_layers: self.model.decoder_layers,
            phi1: parse_activation(&self.model.phi1)?,
            phi2: parse_activation(&self.model.phi2)?,
            lambda_recon: self.model.lambda_recon,
            include_candidate_self: self.model.include_candidate_self,
            causal_summarize: self.model.causal_summarize,
            item_buckets: self.model.item_buckets,
            cat_buckets: self.model.cat_buckets,
            head_hidden: self.model.head_hidden.clone(),
            init_seed: self.run.seed ^ 0x51D5,
            init_scale: self.model.init_scale,
            embed_init_scale: self.model.embed_init_scale,
        })
    }

    pub fn train_users(&self) -> (u64, u64) {
        (0, (self.data.users as f64 * self.data.train_frac).round() as u64)
    }

    pub fn eval_users(&self) -> (u64, u64) {
        (self.train_users().1, self.data.users)
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            steps: self.train.steps,
            lr: self.optimizer.lr,
            beta1: self.optimizer.beta1,
            beta2: self.optimizer.beta2,
            eps: self.optimizer.eps,
            publish_every: self.train.publish_every,
            eval_every: self.train.eval_every,
            train_users: self.train_users(),
            eval_users: self.eval_users(),
            ..TrainOptions::default()
        }
    }
}

pub fn parse_activation(name: &str) -> Result<ActivationKind, CliError> {
    match name {
        "identity" => Ok(ActivationKind::Identity),
        "silu" => Ok(ActivationKind::Silu),
        "shifted_elu" => Ok(ActivationKind::ShiftedElu),
        other => Err(CliError::Config(format!(
            "unknown activation {other:?} (expected identity|silu|shifted_elu)"
        ))),
    }
}

/// Applies `VISTA_SECTION__KEY=value` overrides onto the parsed TOML tree.
fn apply_env_overrides(
    root: &mut toml::Value,
    vars: impl Iterator<Item = (String, String)>,
) -> Result<(), CliError> {
    for (key, raw) in vars {
        let Some(path) = key.strip_prefix(ENV_PREFIX) else { continue };
        let parts: Vec<String> = path.split("__").map(|p| p.to_ascii_lowercase()).collect();
        if parts.len() != 2 || parts.iter().any(String::is_empty) {
            continue; // unrelated VISTA_* variable
        }
        let table = root
            .as_table_mut()
            .ok_or_else(|| CliError::Config("config root is not a table".into()))?
            .entry(parts[0].clone())
            .or_insert_with(|| toml::Value::Table(Default::default()));
        let table = table
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("section {} is not a table", parts[0])))?;
        table.insert(parts[1].clone(), parse_scalar(&raw));
    }
    Ok(())
}

fn parse_scalar(raw: &str) -> toml::Value {
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    // Comma lists become arrays of integers when fully numeric.
    if raw.contains(',') {
        if let Ok(ints) = raw.split(',').map(|t| t.trim().parse::<i64>()).collect::<Result<Vec<_>, _>>() {
            return toml::Value::Array(ints.into_iter().map(toml::Value::Integer).collect());
        }
    }
    toml::Value::String(raw.to_string())
}
