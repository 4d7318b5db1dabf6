//! Learned hash-bucketed embedding table over item and category ids.
//!
//! An item's embedding is the sum of its item-bucket row and its
//! category-bucket row; gradients scatter back into exactly those rows, so
//! the optimizer can update the table sparsely.

use crate::data::splitmix64 as mix;
use crate::numerics::Matrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::BTreeMap;

const ITEM_HASH_SALT: u64 = 0x17E3_B00C;
const CAT_HASH_SALT: u64 = 0xCA7E_B00C;

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub item_w: Matrix,
    pub cat_w: Matrix,
    dim: usize,
}

/// Bucket indices touched by one lookup, kept for the gradient scatter.
#[derive(Debug, Clone)]
pub struct LookupTrace {
    pub item_rows: Vec<usize>,
    pub cat_rows: Vec<usize>,
}

impl EmbeddingTable {
    pub fn new(item_buckets: usize, cat_buckets: usize, dim: usize, init_scale: f64, seed: u64) -> Self {
        let mut rng = StdRng::seed_from_u64(mix(seed ^ 0xE18E_D217));
        let mut init = |rows: usize| {
            Matrix::from_raw(rows, dim, (0..rows * dim).map(|_| rng.gen_range(-init_scale..init_scale)).collect())
        };
        let item_w = init(item_buckets);
        let cat_w = init(cat_buckets);
        Self { item_w, cat_w, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn item_bucket(&self, id: u64) -> usize {
        (mix(id ^ ITEM_HASH_SALT) % self.item_w.rows() as u64) as usize
    }

    pub fn cat_bucket(&self, id: u64) -> usize {
        (mix(id ^ CAT_HASH_SALT) % self.cat_w.rows() as u64) as usize
    }

    pub fn lookup(&self, item_ids: &[u64], cat_ids: &[u64]) -> (Matrix, LookupTrace) {
        assert_eq!(item_ids.len(), cat_ids.len(), "id list lengths");
        let mut out = Matrix::zeros(item_ids.len(), self.dim);
        let mut trace = LookupTrace {
            item_rows: Vec::with_capacity(item_ids.len()),
            cat_rows: Vec::with_capacity(cat_ids.len()),
        };
        for (i, (&item, &cat)) in item_ids.iter().zip(cat_ids).enumerate() {
            let bi = self.item_bucket(item);
            let bc = self.cat_bucket(cat);
            trace.item_rows.push(bi);
            trace.cat_rows.push(bc);
            let row = out.row_mut(i);
            for ((o, &a), &b) in row.iter_mut().zip(self.item_w.row(bi)).zip(self.cat_w.row(bc)) {
                *o = a + b;
            }
        }
        (out, trace)
    }

    /// Accumulates per-position embedding gradients into per-bucket row sums.
    pub fn scatter(
        trace: &LookupTrace,
        d_emb: &Matrix,
        item_acc: &mut BTreeMap<usize, Vec<f64>>,
        cat_acc: &mut BTreeMap<usize, Vec<f64>>,
    ) {
        let dim = d_emb.cols();
        for (i, (&bi, &bc)) in trace.item_rows.iter().zip(&trace.cat_rows).enumerate() {
            let g = d_emb.row(i);
            let ia = item_acc.entry(bi).or_insert_with(|| vec![0.0; dim]);
            for (a, &v) in ia.iter_mut().zip(g) {
                *a += v;
            }
            let ca = cat_acc.entry(bc).or_insert_with(|| vec![0.0; dim]);
            for (a, &v) in ca.iter_mut().zip(g) {
                *a += v;
            }
        }
    }
}
