//! Single-stage softmax baseline: each candidate attends the raw history
//! directly (no summarization), then the same MLP head scores it. This is
//! the O(N²)-per-request reference the two-stage model is compared against.

use super::adam::Adam;
use super::embedding::EmbeddingTable;
use super::head::PredictionHead;
use super::target::TargetLayer;
use super::vista::Grads;
use super::{ModelError, SequenceBatch};
use crate::numerics::Matrix;

#[derive(Debug, Clone)]
pub struct BaselineConfig {
    pub dim: usize,
    pub layers: usize,
    pub item_buckets: usize,
    pub cat_buckets: usize,
    pub head_hidden: Vec<usize>,
    pub init_seed: u64,
    pub init_scale: f64,
    pub embed_init_scale: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            layers: 1,
            item_buckets: 8192,
            cat_buckets: 64,
            head_hidden: vec![128, 64],
            init_seed: 4321,
            init_scale: 1.0,
            embed_init_scale: 0.02,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineModel {
    pub cfg: BaselineConfig,
    pub table: EmbeddingTable,
    pub layers: Vec<TargetLayer>,
    pub head: PredictionHead,
    pub version: u64,
}

impl BaselineModel {
    pub fn new(cfg: BaselineConfig) -> Self {
        let table =
            EmbeddingTable::new(cfg.item_buckets, cfg.cat_buckets, cfg.dim, cfg.embed_init_scale, cfg.init_seed);
        let layers = (0..cfg.layers)
            .map(|l| TargetLayer::new(cfg.dim, true, cfg.init_scale, cfg.init_seed ^ (0x500 + l as u64)))
            .collect();
        let head = PredictionHead::new(cfg.dim, &cfg.head_hidden, cfg.init_scale, cfg.init_seed ^ 0x600);
        Self { cfg, table, layers, head, version: 0 }
    }

    pub fn predict(&self, batch: &SequenceBatch) -> Vec<f64> {
        let (uih_emb, _) = self.table.lookup(&batch.uih_item_ids, &batch.uih_cat_ids);
        let (mut cands, _) = self.table.lookup(&batch.cand_item_ids, &batch.cand_cat_ids);
        for layer in &self.layers {
            cands = layer.forward(&uih_emb, &cands).0;
        }
        self.head.predict(&cands)
    }

    pub fn train_step(&mut self, batch: &SequenceBatch, adam: &mut Adam) -> Result<f64, ModelError> {
        let step = self.version;
        let (uih_emb, trace_u) = self.table.lookup(&batch.uih_item_ids, &batch.uih_cat_ids);
        let (cand_emb, trace_c) = self.table.lookup(&batch.cand_item_ids, &batch.cand_cat_ids);
        let mut cands = cand_emb;
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = layer.forward(&uih_emb, &cands);
            caches.push(cache);
            cands = next;
        }
        let head_cache = self.head.forward(&cands);
        let bce = PredictionHead::bce(&head_cache.probs, &batch.labels);
        if !bce.is_finite() {
            return Err(ModelError::NonFiniteLoss { stage: "baseline_head", step });
        }

        let mut grads = Grads::default();
        let mut d_cands = self.head.backward_bce(&head_cache, &batch.labels, "head", &mut grads.dense);
        let mut d_uih = Matrix::zeros(uih_emb.rows(), uih_emb.cols());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (d_hist, d_in, tg) = layer.backward(&uih_emb, &caches[l], &d_cands);
            d_uih.add_assign(&d_hist);
            d_cands = d_in;
            layer.grads_into(&format!("attn{l}"), tg, &mut grads.dense);
        }
        EmbeddingTable::scatter(&trace_u, &d_uih, &mut grads.item_rows, &mut grads.cat_rows);
        EmbeddingTable::scatter(&trace_c, &d_cands, &mut grads.item_rows, &mut grads.cat_rows);

        adam.begin_step();
        for (l, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_params_mut(&format!("attn{l}"), &mut |name, p| {
                if let Some(g) = grads.dense.get(&name) {
                    adam.update(&name, p, g);
                }
            });
        }
        self.head.visit_params_mut("head", &mut |name, p| {
            if let Some(g) = grads.dense.get(&name) {
                adam.update(&name, p, g);
            }
        });
        adam.update_rows("table.item", &mut self.table.item_w, &grads.item_rows);
        adam.update_rows("table.cat", &mut self.table.cat_w, &grads.cat_rows);
        self.version += 1;
        Ok(bce)
    }
}
