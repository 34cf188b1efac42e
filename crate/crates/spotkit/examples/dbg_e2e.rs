use std::time::Instant;

use spotkit::codec::Task;
use spotkit::corpus::{build_vocab, gen_record, rasterize, CorpusConfig, SceneConfig, TableConfig};
use spotkit::geometry::{dequantize, ImageExtent};
use spotkit::metrics::{spotting_e2e, GtInstance, MatchConfig, PredInstance};
use spotkit::model::{
    build_train_example, infer_spot, train, InferResult, LossWeights, ModelConfig,
    OptimizerSettings, SpotPrompts, TrainSettings,
};
use spotkit::prompting::{PrefixWindow, PromptRng, SpatialWindow};

fn main() {
    let n_train: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let steps: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let lr: f64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let patch: usize = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(4);
    let wd: f64 = std::env::args().nth(5).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let d_model: usize = std::env::args().nth(6).and_then(|s| s.parse().ok()).unwrap_or(64);

    let cfg = CorpusConfig {
        task: Task::Spotting,
        scene: SceneConfig {
            extent: ImageExtent { width: 256, height: 256 },
            n_bins: 64,
            words: (1, 6),
            word_len: (1, 4),
            charset: ('a'..='p').collect(),
            char_width_px: 16,
            char_height_px: 16,
            placement_grid_px: 8,
            margin_px: 2,
            max_retries: 300,
            line_band_bins: 8,
            ..SceneConfig::default()
        },
        table: TableConfig::default(),
    };
    let vocab = build_vocab(&cfg).unwrap();
    println!("vocab size {}", vocab.size());
    let mcfg = ModelConfig {
        d_model,
        n_layers: 2,
        n_heads: 4,
        mlp_factor: 4,
        max_len_stage1: 24,
        max_len_stage2: 16,
        vocab_size: vocab.size() as usize,
        grid_g: 32,
        grid_c: cfg.scene.charset.len() + 1,
        patch,
    };
    let spatial = SpatialWindow::full(cfg.scene.n_bins);
    let prefix = PrefixWindow::new('a', 'p').unwrap();
    let weights = LossWeights::default();

    let root = PromptRng::new(42);
    let t0 = Instant::now();
    let examples: Vec<_> = (0..n_train)
        .map(|id| {
            let r = gen_record(&root, id, &cfg, &vocab).unwrap();
            build_train_example(&r, &vocab, spatial, prefix, &weights, mcfg.grid_g).unwrap()
        })
        .collect();
    println!("built {} examples in {:.1}s", examples.len(), t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let settings = TrainSettings {
        seed: 7,
        steps,
        optimizer: OptimizerSettings {
            lr,
            warmup_steps: 300,
            weight_decay: wd,
            grad_clip: Some(5.0),
            ..Default::default()
        },
        trace_every: 500,
    };
    let outcome = train(&examples, &mcfg, &settings).unwrap();
    let train_secs = t0.elapsed().as_secs_f64();
    println!("trained {steps} steps in {train_secs:.1}s ({:.1} ms/step)", 1000.0 * train_secs / steps as f64);
    for row in &outcome.trace {
        println!("  step {:5}  loss {:.4}  acc {:.4}", row.step, row.loss, row.token_accuracy);
    }

    // held-out eval
    let t0 = Instant::now();
    let prompts = SpotPrompts { spatial, prefix };
    let mcfgx = &outcome.params.config;
    let mut tp_pos = 0usize; let mut npred = 0usize; let mut ngt = 0usize; let mut tp_trans = 0usize;
    for id in 1_000_000..1_000_200u64 {
        let r = gen_record(&root, id, &cfg, &vocab).unwrap();
        let grid = rasterize(&r.scene(), mcfgx.grid_g, &cfg.scene.charset);
        let out = infer_spot(&outcome.params, &grid, Task::Spotting, &prompts, &vocab, r.extent, 8).unwrap();
        let gt: Vec<GtInstance> = r.instances.iter().map(|i| GtInstance {
            region: i.geometry.vertices().to_vec(),
            text: i.transcription.clone(),
        }).collect();
        let preds: Vec<PredInstance> = match &out.result {
            InferResult::Spotting(v) => v.iter().map(|s| PredInstance {
                point: Some(dequantize(s.center, r.extent, r.n_bins).unwrap()),
                polygon: Some(s.polygon.clone()),
                text: s.text.clone(),
            }).collect(),
            _ => vec![],
        };
        let rep = spotting_e2e(&gt, &preds, &MatchConfig::default());
        tp_pos += rep.pos.tp; tp_trans += rep.trans.tp;
        npred += preds.len(); ngt += gt.len();
    }
    let pos_p = tp_pos as f64 / npred.max(1) as f64;
    let pos_r = tp_pos as f64 / ngt.max(1) as f64;
    let pos_f1 = 2.0 * pos_p * pos_r / (pos_p + pos_r).max(1e-12);
    let tr_p = tp_trans as f64 / npred.max(1) as f64;
    let tr_r = tp_trans as f64 / ngt.max(1) as f64;
    let tr_f1 = 2.0 * tr_p * tr_r / (tr_p + tr_r).max(1e-12);
    println!("eval 200 scenes in {:.1}s: Pos-F1 {pos_f1:.4}  Trans-F1 {tr_f1:.4} (gt {ngt}, pred {npred})", t0.elapsed().as_secs_f64());
}
