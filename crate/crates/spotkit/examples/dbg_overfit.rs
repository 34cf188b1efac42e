use spotkit::codec::Task;
use spotkit::corpus::{build_vocab, gen_record, rasterize, CorpusConfig, SceneConfig, TableConfig};
use spotkit::geometry::ImageExtent;
use spotkit::model::{
    build_train_example, infer_spot, train, InferResult, LossWeights, ModelConfig,
    OptimizerSettings, SpotPrompts, TrainSettings,
};
use spotkit::prompting::{PrefixWindow, PromptRng, SpatialWindow};

fn main() {
    let cfg = CorpusConfig {
        task: Task::Spotting,
        scene: SceneConfig {
            extent: ImageExtent { width: 256, height: 256 },
            n_bins: 64,
            words: (3, 3),
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
    let mcfg = ModelConfig {
        d_model: 64, n_layers: 2, n_heads: 4, mlp_factor: 4,
        max_len_stage1: 24, max_len_stage2: 16,
        vocab_size: vocab.size() as usize, grid_g: 32,
        grid_c: cfg.scene.charset.len() + 1, patch: 4,
    };
    let spatial = SpatialWindow::full(64);
    let prefix = PrefixWindow::new('a', 'p').unwrap();
    let record = gen_record(&PromptRng::new(42), 0, &cfg, &vocab).unwrap();
    println!("gt stage1: {}", vocab.render(&record.stage1_ids));
    for s2 in &record.stage2_ids { println!("gt stage2: {}", vocab.render(s2)); }
    let example = build_train_example(&record, &vocab, spatial, prefix, &LossWeights::default(), 32).unwrap();

    let settings = TrainSettings {
        seed: 7,
        steps: 1500,
        optimizer: OptimizerSettings { lr: 3e-3, warmup_steps: 50, weight_decay: 0.0, grad_clip: Some(1.0), ..Default::default() },
        trace_every: 250,
    };
    let outcome = train(&[example], &mcfg, &settings).unwrap();
    for row in &outcome.trace { println!("step {:4} loss {:.5} acc {:.4}", row.step, row.loss, row.token_accuracy); }

    let grid = rasterize(&record.scene(), 32, &cfg.scene.charset);
    let out = infer_spot(&outcome.params, &grid, Task::Spotting, &SpotPrompts { spatial, prefix }, &vocab, record.extent, 8).unwrap();
    println!("pred stage1: {}", vocab.render(&out.stage1_ids));
    println!("stage1 == gt: {}", out.stage1_ids == record.stage1_ids);
    if let InferResult::Spotting(v) = &out.result {
        for (s, gt) in v.iter().zip(&record.instances) {
            println!("pred text {:?} vs gt {:?}; center {:?} vs {:?}", s.text, gt.transcription, s.center, gt.center);
        }
    }
}
