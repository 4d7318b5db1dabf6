//! Quick probe of toy-task learning dynamics at reduced scale.
//! Not part of the test suite; used to pick training hyperparameters.

use std::time::Instant;
use vista_core::data::{SynthConfig, SyntheticWorld};
use vista_core::model::{BaselineModel, ModelConfig, VistaModel};
use vista_core::model::baseline::BaselineConfig;
use vista_core::train::{evaluate_baseline, evaluate_vista, train_baseline, train_vista, TrainOptions};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let users: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let max_hist: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(128);
    let lr: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let embed_scale: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0.25);
    let lambda: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let item_spread: f64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let include_self: bool = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(true);
    let phi1 = match args.get(9).map(String::as_str) {
        Some("silu") => vista_core::numerics::ActivationKind::Silu,
        Some("identity") => vista_core::numerics::ActivationKind::Identity,
        _ => vista_core::numerics::ActivationKind::ShiftedElu,
    };

    let world = SyntheticWorld::new(SynthConfig {
        users,
        items: 50_000,
        categories: 16,
        min_history: max_hist / 8,
        max_history: max_hist,
        embed_dim: 64,
        item_spread,
        ..Default::default()
    })
    .unwrap();
    let eval_lo = users * 9 / 10;
    let manifest = world.manifest(eval_lo, users).unwrap();
    println!(
        "bayes_auc={:.4} base_rate={:.4} examples={}",
        manifest.bayes_auc, manifest.base_rate, manifest.example_count
    );

    // Observable ceiling probe: score a candidate by its category's
    // frequency in the user's history.
    {
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for b in world.stream(eval_lo, users) {
            for (i, &cat) in b.cand_cat_ids.iter().enumerate() {
                let count = b.uih_cat_ids.iter().filter(|&&c| c == cat).count();
                scores.push(count as f64 / b.history_len() as f64);
                labels.push(b.labels[i]);
            }
        }
        let h_auc = vista_core::data::auc(&scores, &labels).unwrap();
        println!("cat_frequency_heuristic_auc={h_auc:.4}");
    }

    let cfg = ModelConfig {
        seed_count: 32,
        dim: 64,
        summarize_layers: 1,
        target_layers: 1,
        decoder_layers: 1,
        lambda_recon: lambda,
        item_buckets: 8192,
        cat_buckets: 64,
        head_hidden: vec![128, 64],
        embed_init_scale: embed_scale,
        include_candidate_self: include_self,
        phi1,
        ..ModelConfig::default()
    };
    let mut model = VistaModel::new(cfg);
    let opts = TrainOptions {
        steps,
        lr,
        train_users: (0, eval_lo),
        eval_users: (eval_lo, users),
        publish_every: 0,
        eval_every: (steps / 8).max(1),
        ..Default::default()
    };
    let t = Instant::now();
    let out = train_vista(&mut model, &world, &opts).unwrap();
    let train_secs = t.elapsed().as_secs_f64();
    for p in out.curve.iter().filter(|p| p.eval_auc.is_some()) {
        println!(
            "step={} bce_s={:.4} recon_s={:.2} ne={:.4} auc={:.4}",
            p.step,
            p.bce_smooth,
            p.recon_smooth,
            p.eval_ne.unwrap(),
            p.eval_auc.unwrap()
        );
    }
    let report = out.final_report.unwrap();
    let first_recon = out.curve.get(50).map(|p| p.recon_smooth).unwrap_or(f64::NAN);
    let last_recon = out.curve.last().map(|p| p.recon_smooth).unwrap_or(f64::NAN);
    println!(
        "VISTA: train {:.1}s ({:.1} ms/step) auc={:.4} ne={:.4} recon {:.1} -> {:.1} ({:.0}%)",
        train_secs,
        train_secs / steps as f64 * 1e3,
        report.auc,
        report.ne,
        first_recon,
        last_recon,
        (1.0 - last_recon / first_recon) * 100.0
    );

    let mut base = BaselineModel::new(BaselineConfig { dim: 64, embed_init_scale: embed_scale, ..Default::default() });
    let t = Instant::now();
    train_baseline(&mut base, &world, &opts).unwrap();
    let base_secs = t.elapsed().as_secs_f64();
    let base_report = evaluate_baseline(&base, world.stream(eval_lo, users), None).unwrap();
    println!(
        "BASE : train {:.1}s auc={:.4} ne={:.4}",
        base_secs, base_report.auc, base_report.ne
    );

    let _ = evaluate_vista(&model, world.stream(eval_lo, users), None).unwrap();
}
