//! The assembled two-stage model.
//!
//! Training wiring per step: look up item embeddings from the learned
//! table, summarize [seeds; history] through the QLU/SGLU stack, run the
//! target-attention stack and the MLP head for the BCE loss, run the causal
//! decoder over [seeds; history] for the reconstruction loss, then
//! backpropagate all of it by hand and apply one Adam update. Inference
//! from cached tokens runs only the target stage and head.

use super::decoder::{reconstruction_loss, DecoderBlock, DecoderCache};
use super::embedding::{EmbeddingTable, LookupTrace};
use super::head::{HeadCache, PredictionHead};
use super::layers::{LayerParams, QluCache, QluLayer};
use super::target::{TargetCache, TargetLayer};
use super::{ModelError, SequenceBatch, SummaryTokens, VirtualSeeds};
use crate::model::adam::Adam;
use crate::numerics::{ActivationKind, Matrix};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub seed_count: usize,
    pub dim: usize,
    pub summarize_layers: usize,
    pub target_layers: usize,
    pub decoder_layers: usize,
    pub phi1: ActivationKind,
    pub phi2: ActivationKind,
    pub lambda_recon: f64,
    pub include_candidate_self: bool,
    pub causal_summarize: bool,
    pub item_buckets: usize,
    pub cat_buckets: usize,
    pub head_hidden: Vec<usize>,
    pub init_seed: u64,
    pub init_scale: f64,
    pub embed_init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            seed_count: 128,
            dim: 256,
            summarize_layers: 3,
            target_layers: 3,
            decoder_layers: 1,
            phi1: ActivationKind::ShiftedElu,
            phi2: ActivationKind::Identity,
            lambda_recon: 1.0,
            include_candidate_self: true,
            causal_summarize: false,
            item_buckets: 8192,
            cat_buckets: 64,
            head_hidden: vec![128, 64],
            init_seed: 1234,
            init_scale: 1.0,
            embed_init_scale: 0.02,
        }
    }
}

impl ModelConfig {
    /// Small preset for gradient checks and unit tests.
    pub fn tiny() -> Self {
        Self {
            seed_count: 2,
            dim: 4,
            summarize_layers: 1,
            target_layers: 1,
            decoder_layers: 1,
            phi1: ActivationKind::Silu,
            phi2: ActivationKind::Identity,
            lambda_recon: 0.7,
            item_buckets: 8,
            cat_buckets: 4,
            head_hidden: vec![5],
            init_scale: 0.8,
            embed_init_scale: 0.3,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct VistaModel {
    pub cfg: ModelConfig,
    pub seeds: VirtualSeeds,
    pub table: EmbeddingTable,
    pub summ: Vec<QluLayer>,
    pub dec: Vec<DecoderBlock>,
    pub tatt: Vec<TargetLayer>,
    pub head: PredictionHead,
    /// Training step counter; stamps published summaries.
    pub version: u64,
}

#[derive(Debug, Default)]
pub struct Grads {
    pub dense: BTreeMap<String, Matrix>,
    pub item_rows: BTreeMap<usize, Vec<f64>>,
    pub cat_rows: BTreeMap<usize, Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct StepStats {
    pub bce: f64,
    pub recon: f64,
    pub total: f64,
    /// Summary tokens from this step's forward pass (pre-update params).
    pub tokens: Matrix,
}

struct ForwardPass {
    uih_emb: Matrix,
    trace_u: LookupTrace,
    trace_c: LookupTrace,
    summ_caches: Vec<QluCache>,
    tokens: Matrix,
    tatt_caches: Vec<TargetCache>,
    head_cache: HeadCache,
    dec_caches: Vec<DecoderCache>,
    dec_out: Option<Matrix>,
    bce: f64,
    recon: f64,
}

impl VistaModel {
    pub fn new(cfg: ModelConfig) -> Self {
        let mut rng = StdRng::seed_from_u64(cfg.init_seed);
        let d = cfg.dim;
        // Seeds start at the same scale as the item embeddings: the target
        // stage mixes token values with the candidate, and a scale mismatch
        // starves the token pathway of gradient early in training.
        let scale = cfg.embed_init_scale.max(1e-3);
        let seeds = VirtualSeeds {
            weights: Matrix::from_raw(
                cfg.seed_count,
                d,
                (0..cfg.seed_count * d).map(|_| rng.gen_range(-scale..scale)).collect(),
            ),
        };
        let table = EmbeddingTable::new(cfg.item_buckets, cfg.cat_buckets, d, cfg.embed_init_scale, cfg.init_seed);
        let summ = (0..cfg.summarize_layers)
            .map(|l| {
                let mut p = LayerParams::new(d, cfg.phi1, cfg.phi2, cfg.init_scale, cfg.init_seed ^ (0x100 + l as u64));
                p.causal = cfg.causal_summarize;
                QluLayer::new(p)
            })
            .collect();
        let dec = (0..cfg.decoder_layers)
            .map(|l| DecoderBlock::new(d, cfg.init_scale, cfg.init_seed ^ (0x200 + l as u64)))
            .collect();
        let tatt = (0..cfg.target_layers)
            .map(|l| {
                TargetLayer::new(d, cfg.include_candidate_self, cfg.init_scale, cfg.init_seed ^ (0x300 + l as u64))
            })
            .collect();
        let head = PredictionHead::new(d, &cfg.head_hidden, cfg.init_scale, cfg.init_seed ^ 0x400);
        Self { cfg, seeds, table, summ, dec, tatt, head, version: 0 }
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim
    }

    /// Stage-one summarization: the first k rows of the stack applied to
    /// [seeds; uih]. Pure in the parameters; M = 0 degenerates to the
    /// transformed seeds.
    pub fn summarize_tokens(&self, uih_emb: &Matrix) -> Result<Matrix, ModelError> {
        if uih_emb.rows() > 0 && uih_emb.cols() != self.cfg.dim {
            return Err(ModelError::ShapeMismatch {
                context: "summarize",
                expected: format!("history with {} cols", self.cfg.dim),
                found: uih_emb.shape_str(),
            });
        }
        let mut x = Matrix::concat_rows(&[&self.seeds.weights, uih_emb]);
        for layer in &self.summ {
            x = layer.forward(&x).0;
        }
        Ok(x.slice_rows(0, self.cfg.seed_count))
    }

    pub fn summarize_user(&self, user_id: u64, uih_emb: &Matrix) -> Result<SummaryTokens, ModelError> {
        Ok(SummaryTokens { user_id, version: self.version, tokens: self.summarize_tokens(uih_emb)? })
    }

    /// Stage-two target attention over (cached or fresh) summary tokens.
    pub fn target_attend(&self, tokens: &Matrix, candidates: &Matrix) -> Matrix {
        let mut cands = candidates.clone();
        for layer in &self.tatt {
            cands = layer.forward(tokens, &cands).0;
        }
        cands
    }

    pub fn predict(&self, target_emb: &Matrix) -> Vec<f64> {
        self.head.predict(target_emb)
    }

    /// Inference from tokens: target attention plus head only.
    pub fn predict_from_tokens(&self, tokens: &Matrix, cand_item_ids: &[u64], cand_cat_ids: &[u64]) -> Vec<f64> {
        let (cand_emb, _) = self.table.lookup(cand_item_ids, cand_cat_ids);
        self.predict(&self.target_attend(tokens, &cand_emb))
    }

    /// Full pipeline: embed, summarize, attend, predict.
    pub fn full_predict(&self, batch: &SequenceBatch) -> Result<Vec<f64>, ModelError> {
        let (uih_emb, _) = self.table.lookup(&batch.uih_item_ids, &batch.uih_cat_ids);
        let tokens = self.summarize_tokens(&uih_emb)?;
        Ok(self.predict_from_tokens(&tokens, &batch.cand_item_ids, &batch.cand_cat_ids))
    }

    fn forward(&self, batch: &SequenceBatch) -> Result<ForwardPass, ModelError> {
        let step = self.version;
        let (uih_emb, trace_u) = self.table.lookup(&batch.uih_item_ids, &batch.uih_cat_ids);
        let (cand_emb, trace_c) = self.table.lookup(&batch.cand_item_ids, &batch.cand_cat_ids);
        if !uih_emb.is_finite() || !cand_emb.is_finite() {
            return Err(ModelError::NonFiniteLoss { stage: "embedding", step });
        }

        let mut x = Matrix::concat_rows(&[&self.seeds.weights, &uih_emb]);
        let mut summ_caches = Vec::with_capacity(self.summ.len());
        for layer in &self.summ {
            let (next, cache) = layer.forward(&x);
            summ_caches.push(cache);
            x = next;
        }
        let tokens = x.slice_rows(0, self.cfg.seed_count);
        if !tokens.is_finite() {
            return Err(ModelError::NonFiniteLoss { stage: "summarizer", step });
        }

        let mut cands = cand_emb.clone();
        let mut tatt_caches = Vec::with_capacity(self.tatt.len());
        for layer in &self.tatt {
            let (next, cache) = layer.forward(&tokens, &cands);
            tatt_caches.push(cache);
            cands = next;
        }
        if !cands.is_finite() {
            return Err(ModelError::NonFiniteLoss { stage: "target_attention", step });
        }

        let head_cache = self.head.forward(&cands);
        let bce = PredictionHead::bce(&head_cache.probs, &batch.labels);
        if !bce.is_finite() {
            return Err(ModelError::NonFiniteLoss { stage: "head", step });
        }

        let mut dec_caches = Vec::new();
        let mut dec_out = None;
        let mut recon = 0.0;
        let run_decoder =
            self.cfg.lambda_recon != 0.0 && !self.dec.is_empty() && batch.history_len() >= 2;
        if run_decoder {
            let mut dx = Matrix::concat_rows(&[&self.seeds.weights, &uih_emb]);
            for block in &self.dec {
                let (next, cache) = block.forward(&dx);
                dec_caches.push(cache);
                dx = next;
            }
            recon = reconstruction_loss(&dx, self.cfg.seed_count, &uih_emb).0;
            if !recon.is_finite() {
                return Err(ModelError::NonFiniteLoss { stage: "decoder", step });
            }
            dec_out = Some(dx);
        }

        Ok(ForwardPass {
            uih_emb,
            trace_u,
            trace_c,
            summ_caches,
            tokens,
            tatt_caches,
            head_cache,
            dec_caches,
            dec_out,
            bce,
            recon,
        })
    }

    /// Total loss (BCE + λ·reconstruction) without gradients; the finite
    /// difference oracle drives this.
    pub fn loss_only(&self, batch: &SequenceBatch) -> Result<f64, ModelError> {
        let fwd = self.forward(batch)?;
        Ok(fwd.bce + self.cfg.lambda_recon * fwd.recon)
    }

    pub fn compute_grads(&self, batch: &SequenceBatch) -> Result<(StepStats, Grads), ModelError> {
        let fwd = self.forward(batch)?;
        let k = self.cfg.seed_count;
        let lambda = self.cfg.lambda_recon;
        let mut grads = Grads::default();

        // Head and BCE.
        let d_target = self.head.backward_bce(&fwd.head_cache, &batch.labels, "head", &mut grads.dense);

        // Target-attention stack, newest layer first.
        let mut d_cands = d_target;
        let mut d_tokens = Matrix::zeros(k, self.cfg.dim);
        for (l, layer) in self.tatt.iter().enumerate().rev() {
            let (d_tok_l, d_in, tg) = layer.backward(&fwd.tokens, &fwd.tatt_caches[l], &d_cands);
            d_tokens.add_assign(&d_tok_l);
            d_cands = d_in;
            layer.grads_into(&format!("tatt{l}"), tg, &mut grads.dense);
        }
        let d_cand_emb = d_cands;

        // Summarizer stack: only the first k output rows carry gradient.
        let total_rows = k + batch.history_len();
        let mut d_x = Matrix::zeros(total_rows, self.cfg.dim);
        d_x.data_mut()[..k * self.cfg.dim].copy_from_slice(d_tokens.data());
        for (l, layer) in self.summ.iter().enumerate().rev() {
            let (d_in, qg) = layer.backward(&fwd.summ_caches[l], &d_x);
            d_x = d_in;
            layer.grads_into(&format!("summ{l}"), qg, &mut grads.dense);
        }
        let mut d_seeds = d_x.slice_rows(0, k);
        let mut d_uih_emb = d_x.slice_rows(k, total_rows);

        // Decoder / reconstruction.
        if let Some(dec_out) = &fwd.dec_out {
            let (_, d_dec_out, d_uih_direct) = reconstruction_loss(dec_out, k, &fwd.uih_emb);
            let mut d_dec = d_dec_out.scale(lambda);
            for (l, block) in self.dec.iter().enumerate().rev() {
                d_dec = block.backward(&fwd.dec_caches[l], &d_dec, &format!("dec{l}"), &mut grads.dense);
            }
            d_seeds.add_assign(&d_dec.slice_rows(0, k));
            d_uih_emb.add_assign(&d_dec.slice_rows(k, total_rows));
            d_uih_emb.add_assign(&d_uih_direct.scale(lambda));
        }

        grads.dense.insert("seeds".into(), d_seeds);
        EmbeddingTable::scatter(&fwd.trace_u, &d_uih_emb, &mut grads.item_rows, &mut grads.cat_rows);
        EmbeddingTable::scatter(&fwd.trace_c, &d_cand_emb, &mut grads.item_rows, &mut grads.cat_rows);

        let stats = StepStats {
            bce: fwd.bce,
            recon: fwd.recon,
            total: fwd.bce + lambda * fwd.recon,
            tokens: fwd.tokens,
        };
        Ok((stats, grads))
    }

    pub fn apply_grads(&mut self, adam: &mut Adam, grads: &Grads) {
        adam.begin_step();
        // Split borrows: take the table out while updating dense params.
        let dense = &grads.dense;
        let mut seeds = std::mem::replace(&mut self.seeds.weights, Matrix::zeros(0, 0));
        if let Some(g) = dense.get("seeds") {
            adam.update("seeds", &mut seeds, g);
        }
        self.seeds.weights = seeds;
        for (l, layer) in self.summ.iter_mut().enumerate() {
            layer.visit_params_mut(&format!("summ{l}"), &mut |name, p| {
                if let Some(g) = dense.get(&name) {
                    adam.update(&name, p, g);
                }
            });
        }
        for (l, block) in self.dec.iter_mut().enumerate() {
            block.visit_params_mut(&format!("dec{l}"), &mut |name, p| {
                if let Some(g) = dense.get(&name) {
                    adam.update(&name, p, g);
                }
            });
        }
        for (l, layer) in self.tatt.iter_mut().enumerate() {
            layer.visit_params_mut(&format!("tatt{l}"), &mut |name, p| {
                if let Some(g) = dense.get(&name) {
                    adam.update(&name, p, g);
                }
            });
        }
        self.head.visit_params_mut("head", &mut |name, p| {
            if let Some(g) = dense.get(&name) {
                adam.update(&name, p, g);
            }
        });
        adam.update_rows("table.item", &mut self.table.item_w, &grads.item_rows);
        adam.update_rows("table.cat", &mut self.table.cat_w, &grads.cat_rows);
    }

    /// One optimizer step on one batch. On a non-finite loss the step is
    /// aborted with no parameter change.
    pub fn train_step(&mut self, batch: &SequenceBatch, adam: &mut Adam) -> Result<StepStats, ModelError> {
        let (stats, grads) = self.compute_grads(batch)?;
        self.apply_grads(adam, &grads);
        self.version += 1;
        Ok(stats)
    }

    /// All named parameters, embedding tables included.
    pub fn visit_params(&self, f: &mut impl FnMut(String, &Matrix)) {
        f("seeds".into(), &self.seeds.weights);
        for (l, layer) in self.summ.iter().enumerate() {
            layer.visit_params(&format!("summ{l}"), &mut |n, m| f(n, m));
        }
        for (l, block) in self.dec.iter().enumerate() {
            block.visit_params(&format!("dec{l}"), &mut |n, m| f(n, m));
        }
        for (l, layer) in self.tatt.iter().enumerate() {
            layer.visit_params(&format!("tatt{l}"), &mut |n, m| f(n, m));
        }
        self.head.visit_params("head", &mut |n, m| f(n, m));
        f("table.item".into(), &self.table.item_w);
        f("table.cat".into(), &self.table.cat_w);
    }

    pub fn visit_params_mut(&mut self, f: &mut impl FnMut(String, &mut Matrix)) {
        f("seeds".into(), &mut self.seeds.weights);
        for (l, layer) in self.summ.iter_mut().enumerate() {
            layer.visit_params_mut(&format!("summ{l}"), &mut |n, m| f(n, m));
        }
        for (l, block) in self.dec.iter_mut().enumerate() {
            block.visit_params_mut(&format!("dec{l}"), &mut |n, m| f(n, m));
        }
        for (l, layer) in self.tatt.iter_mut().enumerate() {
            layer.visit_params_mut(&format!("tatt{l}"), &mut |n, m| f(n, m));
        }
        self.head.visit_params_mut("head", &mut |n, m| f(n, m));
        f("table.item".into(), &mut self.table.item_w);
        f("table.cat".into(), &mut self.table.cat_w);
    }

    /// Densified gradient view (sparse table rows expanded) for oracles.
    pub fn densify_grads(&self, grads: &Grads) -> BTreeMap<String, Matrix> {
        let mut out = grads.dense.clone();
        let mut item = Matrix::zeros(self.table.item_w.rows(), self.table.item_w.cols());
        for (&r, g) in &grads.item_rows {
            item.row_mut(r).copy_from_slice(g);
        }
        out.insert("table.item".into(), item);
        let mut cat = Matrix::zeros(self.table.cat_w.rows(), self.table.cat_w.cols());
        for (&r, g) in &grads.cat_rows {
            cat.row_mut(r).copy_from_slice(g);
        }
        out.insert("table.cat".into(), cat);
        out
    }
}
