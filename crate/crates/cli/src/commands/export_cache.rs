//! `vista export-cache`: summarize every user with a checkpoint, publish
//! through a fresh export log, replay into a cache, and snapshot it.

use crate::config::RunConfig;
use crate::CliError;
use std::path::Path;
use vista_core::data::SyntheticWorld;
use vista_core::delivery::snapshot_save;
use vista_core::model::checkpoint::load_model;
use vista_core::train::export_all;

pub fn run(checkpoint: &Path, data: &Path, out: &Path) -> Result<(), CliError> {
    let model = load_model(checkpoint)?;
    let cfg = RunConfig::load(data)?;
    let world = SyntheticWorld::new(cfg.synth_config()).map_err(|e| CliError::Config(e.to_string()))?;
    let (log, cache) = export_all(&model, &world, (0, cfg.data.users), 2)?;
    snapshot_save(&cache, out)?;
    let log_path = out.with_extension("log");
    log.save(&log_path)?;
    let summary = serde_json::json!({
        "users": cache.user_count(),
        "records": log.len(),
        "snapshot": out,
        "export_log": log_path,
        "state_hash": format!("{:016x}", cache.state_hash()),
    });
    super::write_json(None, &summary)
}
