//! Training and evaluation drivers shared by the CLI and the test suite.
//!
//! The loop walks the training user range in a fixed cyclic order (one user
//! per step), publishes quantized summaries to the export log on a cadence,
//! and tracks EMA-smoothed losses plus periodic held-out NE/AUC.

use crate::data::{DataError, EvalReport, SyntheticWorld};
use crate::delivery::{DeliveryError, ExportLog, SummaryCache};
use crate::model::{Adam, BaselineModel, ModelError, SequenceBatch, SummaryTokens, VistaModel};
use crate::numerics::Matrix;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Delivery(#[from] DeliveryError),
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub steps: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Publish the step's summary tokens every this many steps; 0 disables.
    pub publish_every: u64,
    /// Evaluate on the held-out range every this many steps; 0 = end only.
    pub eval_every: u64,
    pub train_users: (u64, u64),
    pub eval_users: (u64, u64),
    /// EMA coefficient for the smoothed loss curves.
    pub ema: f64,
    /// Learning-rate floor as a fraction of `lr`; the rate stays constant
    /// for the first half of training, then decays linearly to lr * frac.
    pub lr_final_frac: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            steps: 1000,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            publish_every: 0,
            eval_every: 0,
            train_users: (0, 900),
            eval_users: (900, 1000),
            ema: 0.02,
            lr_final_frac: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub step: u64,
    pub bce: f64,
    pub bce_smooth: f64,
    pub recon: f64,
    pub recon_smooth: f64,
    pub total: f64,
    pub eval_ne: Option<f64>,
    pub eval_auc: Option<f64>,
}

pub struct TrainOutcome {
    pub curve: Vec<CurvePoint>,
    pub log: ExportLog,
    pub final_report: Option<EvalReport>,
}

pub fn train_vista(
    model: &mut VistaModel,
    world: &SyntheticWorld,
    opts: &TrainOptions,
) -> Result<TrainOutcome, TrainError> {
    let mut adam = Adam::new(opts.lr, opts.beta1, opts.beta2, opts.eps);
    let mut log = ExportLog::new();
    let mut curve = Vec::with_capacity(opts.steps as usize);
    let (t0, t1) = opts.train_users;
    let train_count = (t1 - t0).max(1);
    let mut bce_s = f64::NAN;
    let mut recon_s = f64::NAN;
    for step in 0..opts.steps {
        adam.lr = opts.lr * lr_schedule(step, opts.steps, opts.lr_final_frac);
        let user = t0 + step % train_count;
        let batch = world.batch_for_user(user);
        let stats = model.train_step(&batch, &mut adam)?;
        if opts.publish_every > 0 && step % opts.publish_every == 0 {
            log.publish(&SummaryTokens { user_id: user, version: model.version, tokens: stats.tokens.clone() })?;
        }
        bce_s = ema(bce_s, stats.bce, opts.ema);
        recon_s = ema(recon_s, stats.recon, opts.ema);
        let evaluate_now = opts.eval_every > 0 && (step + 1) % opts.eval_every == 0;
        let (eval_ne, eval_auc) = if evaluate_now {
            let report = evaluate_vista(model, world.stream(opts.eval_users.0, opts.eval_users.1), None)?;
            (Some(report.ne), Some(report.auc))
        } else {
            (None, None)
        };
        curve.push(CurvePoint {
            step,
            bce: stats.bce,
            bce_smooth: bce_s,
            recon: stats.recon,
            recon_smooth: recon_s,
            total: stats.total,
            eval_ne,
            eval_auc,
        });
    }
    let final_report = if opts.eval_users.1 > opts.eval_users.0 {
        Some(evaluate_vista(model, world.stream(opts.eval_users.0, opts.eval_users.1), None)?)
    } else {
        None
    };
    Ok(TrainOutcome { curve, log, final_report })
}

fn ema(prev: f64, x: f64, alpha: f64) -> f64 {
    if prev.is_nan() {
        x
    } else {
        (1.0 - alpha) * prev + alpha * x
    }
}

/// Constant for the first half, then linear decay to `final_frac`.
fn lr_schedule(step: u64, steps: u64, final_frac: f64) -> f64 {
    let half = steps / 2;
    if step < half || steps <= 1 {
        1.0
    } else {
        let t = (step - half) as f64 / (steps - half).max(1) as f64;
        1.0 + t * (final_frac - 1.0)
    }
}

/// Full-pipeline evaluation (fresh summaries). Bucket bounds default to
/// quartiles of the observed maximum history length.
pub fn evaluate_vista(
    model: &VistaModel,
    batches: impl IntoIterator<Item = SequenceBatch>,
    bucket_bounds: Option<&[usize]>,
) -> Result<EvalReport, TrainError> {
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    let mut lens = Vec::new();
    for batch in batches {
        let p = model.full_predict(&batch)?;
        for (i, prob) in p.into_iter().enumerate() {
            preds.push(prob);
            labels.push(batch.labels[i]);
            lens.push(batch.history_len());
        }
    }
    build_report(&preds, &labels, &lens, bucket_bounds)
}

/// Evaluation that bypasses summarization: tokens come from the cache
/// (dequantized), mirroring the inference deployment path.
pub fn evaluate_vista_cached(
    model: &VistaModel,
    cache: &SummaryCache,
    batches: impl IntoIterator<Item = SequenceBatch>,
    bucket_bounds: Option<&[usize]>,
) -> Result<EvalReport, TrainError> {
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    let mut lens = Vec::new();
    for batch in batches {
        let fetched = crate::delivery::fetch_for_inference(cache, batch.user_id, model.version, u64::MAX, false)?;
        let p = model.predict_from_tokens(&fetched.tokens, &batch.cand_item_ids, &batch.cand_cat_ids);
        for (i, prob) in p.into_iter().enumerate() {
            preds.push(prob);
            labels.push(batch.labels[i]);
            lens.push(batch.history_len());
        }
    }
    build_report(&preds, &labels, &lens, bucket_bounds)
}

pub fn evaluate_baseline(
    model: &BaselineModel,
    batches: impl IntoIterator<Item = SequenceBatch>,
    bucket_bounds: Option<&[usize]>,
) -> Result<EvalReport, TrainError> {
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    let mut lens = Vec::new();
    for batch in batches {
        let p = model.predict(&batch);
        for (i, prob) in p.into_iter().enumerate() {
            preds.push(prob);
            labels.push(batch.labels[i]);
            lens.push(batch.history_len());
        }
    }
    build_report(&preds, &labels, &lens, bucket_bounds)
}

fn build_report(
    preds: &[f64],
    labels: &[u8],
    lens: &[usize],
    bucket_bounds: Option<&[usize]>,
) -> Result<EvalReport, TrainError> {
    let default_bounds;
    let bounds = match bucket_bounds {
        Some(b) => b,
        None => {
            let max_len = lens.iter().copied().max().unwrap_or(0) + 1;
            default_bounds = vec![max_len / 4, max_len / 2, 3 * max_len / 4, max_len];
            &default_bounds
        }
    };
    Ok(EvalReport::build(preds, labels, lens, bounds)?)
}

pub fn train_baseline(
    model: &mut BaselineModel,
    world: &SyntheticWorld,
    opts: &TrainOptions,
) -> Result<Vec<f64>, TrainError> {
    let mut adam = Adam::new(opts.lr, opts.beta1, opts.beta2, opts.eps);
    let (t0, t1) = opts.train_users;
    let train_count = (t1 - t0).max(1);
    let mut curve = Vec::with_capacity(opts.steps as usize);
    for step in 0..opts.steps {
        adam.lr = opts.lr * lr_schedule(step, opts.steps, opts.lr_final_frac);
        let batch = world.batch_for_user(t0 + step % train_count);
        curve.push(model.train_step(&batch, &mut adam)?);
    }
    Ok(curve)
}

/// Summarizes every user in the range with the current model, publishes to
/// a fresh log, and replays it into a cache.
pub fn export_all(
    model: &VistaModel,
    world: &SyntheticWorld,
    users: (u64, u64),
    history_depth: usize,
) -> Result<(ExportLog, SummaryCache), TrainError> {
    let mut log = ExportLog::new();
    for user in users.0..users.1 {
        let batch = world.batch_for_user(user);
        let (uih_emb, _) = model.table.lookup(&batch.uih_item_ids, &batch.uih_cat_ids);
        let tokens = model.summarize_user(user, &uih_emb)?;
        // Stamp version 1 past the model's to satisfy strict monotonicity if
        // training already published this user at the current version.
        let tokens = SummaryTokens { version: tokens.version + 1, ..tokens };
        log.publish(&tokens)?;
    }
    let cache = SummaryCache::new(history_depth);
    crate::delivery::consume(&log, &cache, 0);
    Ok((log, cache))
}

/// Convenience used by inference paths: dequantized tokens for a user, or
/// an error naming the user.
pub fn cached_tokens(cache: &SummaryCache, user: u64) -> Result<Matrix, DeliveryError> {
    Ok(crate::delivery::fetch_for_inference(cache, user, u64::MAX, u64::MAX, false)?.tokens)
}
