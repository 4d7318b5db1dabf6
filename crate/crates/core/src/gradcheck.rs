//! Finite-difference validation sweeps for the analytic gradients, shared
//! by the `gradcheck` CLI command and the acceptance suite.
//!
//! Kernel checks compare all six QLA input gradients against central
//! differences of a random linear functional of the outputs; inputs are
//! sampled away from the ShiftedElu knee so the oracle stays on one branch.

use crate::attention::{qla_backward_general, qla_forward, SourceTargetSplit};
use crate::model::{Adam, ModelConfig, SequenceBatch, VistaModel};
use crate::numerics::{finite_diff_grad, ActivationKind, Matrix};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub worst_rel: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckResult {
    fn new(name: String, worst_rel: f64, tolerance: f64) -> Self {
        Self { name, worst_rel, tolerance, pass: worst_rel < tolerance }
    }
}

pub const KERNEL_SHAPES: [(usize, usize, usize); 3] = [(16, 2, 4), (32, 4, 8), (64, 8, 16)];
pub const KERNEL_SEEDS: u64 = 20;

fn smooth_entry(rng: &mut StdRng) -> f64 {
    let v: f64 = rng.gen_range(-1.5..1.5);
    if (v - 1.0).abs() < 0.05 {
        v - 0.1
    } else {
        v
    }
}

fn smooth_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_raw(rows, cols, (0..rows * cols).map(|_| smooth_entry(rng)).collect())
}

const TENSORS: [&str; 6] = ["d_qs", "d_qt", "d_ks", "d_kt", "d_vs", "d_vt"];

/// Worst relative error per gradient tensor for one random instance.
fn kernel_instance(
    seed: u64,
    n: usize,
    m: usize,
    d: usize,
    phi: ActivationKind,
    corrupt: Option<&str>,
) -> [f64; 6] {
    let mut rng = StdRng::seed_from_u64(seed);
    let split = SourceTargetSplit::new(
        smooth_matrix(&mut rng, n, d),
        smooth_matrix(&mut rng, m, d),
        smooth_matrix(&mut rng, n, d),
        smooth_matrix(&mut rng, m, d),
        smooth_matrix(&mut rng, n, d),
        smooth_matrix(&mut rng, m, d),
    )
    .expect("valid shapes");
    let g_s = smooth_matrix(&mut rng, n, d);
    let g_t = smooth_matrix(&mut rng, m, d);

    let (_, _, saved) = qla_forward(&split, phi, ActivationKind::Identity);
    let grads = qla_backward_general(&saved, &split, &g_s, &g_t).expect("identity outer");
    let mut analytic = [grads.d_qs, grads.d_qt, grads.d_ks, grads.d_kt, grads.d_vs, grads.d_vt];
    if let Some(victim) = corrupt {
        if let Some(idx) = TENSORS.iter().position(|t| *t == victim) {
            let v = analytic[idx].get(0, 0);
            analytic[idx].set(0, 0, v + 0.5 + v.abs());
        }
    }

    let loss_with = |field: usize, x: &Matrix| -> f64 {
        let mut s = split.clone();
        match field {
            0 => s.qs = x.clone(),
            1 => s.qt = x.clone(),
            2 => s.ks = x.clone(),
            3 => s.kt = x.clone(),
            4 => s.vs = x.clone(),
            _ => s.vt = x.clone(),
        }
        let (o_s, o_t, _) = qla_forward(&s, phi, ActivationKind::Identity);
        o_s.frob_dot(&g_s) + o_t.frob_dot(&g_t)
    };

    let inputs = [&split.qs, &split.qt, &split.ks, &split.kt, &split.vs, &split.vt];
    let mut worst = [0.0f64; 6];
    // The Identity case is linear in every entry, so central differences are
    // exact at any step; a large h suppresses the f64 cancellation noise that
    // would otherwise dominate the tight 1e-8 tolerance.
    let h = if phi == ActivationKind::Identity { 1e-2 } else { 1e-5 };
    for (field, (x, a)) in inputs.iter().zip(analytic.iter()).enumerate() {
        let fd = finite_diff_grad(|xm| loss_with(field, xm), x, h).expect("positive step");
        // Relative error with a per-tensor scale floor: entries three orders
        // below the tensor's dominant magnitude sit at the oracle's own
        // noise level and are certified absolutely at that scale.
        let floor = 1e-3 * a.max_abs().max(1.0);
        for (av, fv) in a.data().iter().zip(fd.data()) {
            let rel = (av - fv).abs() / (av.abs() + fv.abs()).max(floor);
            worst[field] = worst[field].max(rel);
        }
    }
    worst
}

/// The kernel sweep: shapes × activations × seeds, one result per gradient
/// tensor. Identity is held to a tighter tolerance (the linear case is
/// exact up to oracle noise).
pub fn kernel_suite(corrupt: Option<&str>, seeds: u64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for phi in [ActivationKind::Identity, ActivationKind::ShiftedElu, ActivationKind::Silu] {
        let tol = if phi == ActivationKind::Identity { 1e-8 } else { 1e-6 };
        for &(n, m, d) in &KERNEL_SHAPES {
            let mut worst = [0.0f64; 6];
            for s in 0..seeds {
                let seed = s
                    .wrapping_mul(1_000_003)
                    .wrapping_add((n * 31 + m * 7 + d) as u64)
                    .wrapping_add(phi as u64 * 77);
                let inst = kernel_instance(seed, n, m, d, phi, corrupt);
                for (w, i) in worst.iter_mut().zip(inst) {
                    *w = w.max(i);
                }
            }
            for (t, w) in TENSORS.iter().zip(worst) {
                out.push(CheckResult::new(format!("qla/{phi:?}/{n}x{m}x{d}/{t}"), w, tol));
            }
        }
    }
    out
}

pub fn tiny_batch_for_check(seed: u64) -> SequenceBatch {
    let mut rng = StdRng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(13));
    let m_hist = 6;
    let m_cand = 2;
    let uih_item_ids: Vec<u64> = (0..m_hist).map(|_| rng.gen_range(0..50)).collect();
    let uih_cat_ids: Vec<u64> = uih_item_ids.iter().map(|i| i % 5).collect();
    let cand_item_ids: Vec<u64> = (0..m_cand).map(|_| rng.gen_range(0..50)).collect();
    let cand_cat_ids: Vec<u64> = cand_item_ids.iter().map(|i| i % 5).collect();
    SequenceBatch {
        user_id: seed,
        labels: (0..m_cand).map(|i| (i % 2) as u8).collect(),
        uih: Matrix::zeros(m_hist, 4),
        candidates: Matrix::zeros(m_cand, 4),
        uih_item_ids,
        uih_cat_ids,
        cand_item_ids,
        cand_cat_ids,
    }
}

/// Whole-model check on the tiny preset (d=4, k=2, M=6, m=2, one layer of
/// each stage): every parameter gradient against finite differences.
pub fn model_suite(seeds: u64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for seed in 1..=seeds {
        let model = VistaModel::new(ModelConfig::tiny());
        let batch = tiny_batch_for_check(seed);
        let (_, grads) = model.compute_grads(&batch).expect("finite tiny model");
        let dense = model.densify_grads(&grads);
        let mut names = Vec::new();
        model.visit_params(&mut |n, _| names.push(n));
        let mut worst = 0.0f64;
        for name in &names {
            let mut base = Matrix::zeros(0, 0);
            model.visit_params(&mut |n, m| {
                if &n == name {
                    base = m.clone();
                }
            });
            let fd = finite_diff_grad(
                |pm| {
                    let mut m2 = model.clone();
                    m2.visit_params_mut(&mut |n, p| {
                        if &n == name {
                            *p = pm.clone();
                        }
                    });
                    m2.loss_only(&batch).expect("finite")
                },
                &base,
                1e-5,
            )
            .expect("positive step");
            let got = &dense[name];
            for (a, f) in got.data().iter().zip(fd.data()) {
                let rel = (a - f).abs() / (a.abs() + f.abs()).max(1e-4);
                worst = worst.max(rel);
            }
        }
        out.push(CheckResult::new(format!("model/seed{seed}"), worst, 1e-5));
    }
    out
}

/// Quick convergence self-test used by the gradcheck command: a few Adam
/// steps on one batch must reduce the loss.
pub fn descent_probe() -> CheckResult {
    let mut model = VistaModel::new(ModelConfig::tiny());
    let batch = tiny_batch_for_check(99);
    let mut adam = Adam::new(5e-3, 0.9, 0.999, 1e-8);
    let first = model.loss_only(&batch).expect("finite");
    for _ in 0..30 {
        model.train_step(&batch, &mut adam).expect("finite step");
    }
    let last = model.loss_only(&batch).expect("finite");
    CheckResult::new("model/descent".into(), last / first, 1.0)
}
