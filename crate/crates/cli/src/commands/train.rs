//! `vista train`: summarization-stage training with periodic publication of
//! quantized summaries, plus checkpoint and curve outputs.

use crate::config::RunConfig;
use crate::CliError;
use std::io::Write;
use std::path::Path;
use vista_core::data::SyntheticWorld;
use vista_core::model::checkpoint::save_model;
use vista_core::model::VistaModel;
use vista_core::train::train_vista;

pub fn run(config_path: &Path, _deterministic: bool) -> Result<(), CliError> {
    let cfg = RunConfig::load(config_path)?;
    if cfg.data.source == "csv" {
        return Err(CliError::Config(
            "train currently consumes the synthetic source; use data.source = \"synthetic\"".into(),
        ));
    }
    let world = SyntheticWorld::new(cfg.synth_config()).map_err(|e| CliError::Config(e.to_string()))?;
    let mut model = VistaModel::new(cfg.model_config()?);
    let opts = cfg.train_options();

    let out_dir = &cfg.run.out_dir;
    std::fs::create_dir_all(out_dir)?;

    let outcome = train_vista(&mut model, &world, &opts)?;

    let ckpt_path = out_dir.join("checkpoint.vstm");
    save_model(&model, &ckpt_path)?;

    let curve_path = out_dir.join("curve.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&curve_path)?);
    writeln!(f, "step,bce,bce_smooth,recon,recon_smooth,total,eval_ne,eval_auc")?;
    for p in &outcome.curve {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            p.step,
            p.bce,
            p.bce_smooth,
            p.recon,
            p.recon_smooth,
            p.total,
            p.eval_ne.map_or(String::new(), |v| v.to_string()),
            p.eval_auc.map_or(String::new(), |v| v.to_string()),
        )?;
    }
    f.flush()?;

    let log_path = out_dir.join("export.log");
    outcome.log.save(&log_path)?;

    let manifest = world
        .manifest(opts.eval_users.0, opts.eval_users.1)
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    let summary = serde_json::json!({
        "steps": opts.steps,
        "published": outcome.log.len(),
        "checkpoint": ckpt_path,
        "curve": curve_path,
        "export_log": log_path,
        "final_eval": outcome.final_report,
        "world": manifest,
    });
    crate::commands::write_json(Some(&out_dir.join("train_summary.json")), &summary)?;
    Ok(())
}
