//! `vista eval`: NE/AUC (with history-length buckets) of a checkpoint on a
//! synthetic config or a CSV file.

use crate::CliError;
use std::path::Path;
use vista_core::model::checkpoint::load_model;
use vista_core::train::evaluate_vista;

pub fn run(checkpoint: &Path, data: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let model = load_model(checkpoint)?;
    let batches = super::load_eval_batches(data, model.dim())?;
    let report = evaluate_vista(&model, batches, None)?;
    super::write_json(out, &serde_json::to_value(&report).expect("report serializes"))
}
