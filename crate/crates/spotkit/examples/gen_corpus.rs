//! Synthetic corpus generation for all four tasks, the feature-grid
//! rasterizer, and byte-identical determinism.
//!
//! Run with: cargo run --release --example gen_corpus

use spotkit::codec::Task;
use spotkit::corpus::{
    build_vocab, gen_corpus_jsonl, rasterize, read_corpus_jsonl, write_feature_grid, CorpusConfig,
    SceneConfig, TableConfig,
};
use spotkit::geometry::ImageExtent;

fn main() -> anyhow::Result<()> {
    for task in [Task::Spotting, Task::Kie, Task::Table, Task::Layout] {
        let config = CorpusConfig {
            task,
            scene: SceneConfig {
                extent: ImageExtent::new(512, 512)?,
                n_bins: 128,
                words: (2, 6),
                word_len: (1, 5),
                charset: ('a'..='z').collect(),
                char_width_px: 24,
                char_height_px: 24,
                placement_grid_px: 8,
                margin_px: 4,
                max_retries: 300,
                line_band_bins: 16,
                ..SceneConfig::default()
            },
            table: TableConfig {
                extent: ImageExtent::new(512, 512)?,
                n_bins: 128,
                rows: (2, 5),
                cols: (2, 5),
                span_prob: 0.2,
                ..TableConfig::default()
            },
        };
        let vocab = build_vocab(&config)?;
        let jsonl = gen_corpus_jsonl(42, 5, &config, &vocab)?;
        let again = gen_corpus_jsonl(42, 5, &config, &vocab)?;
        assert_eq!(jsonl, again, "generation must be byte-identical per seed");
        let records = read_corpus_jsonl(&jsonl)?;
        println!(
            "{task}: {} records, vocabulary {} ids, first record {} instances, {} stage-1 tokens",
            records.len(),
            vocab.size(),
            records[0].instances.len(),
            records[0].stage1_ids.len()
        );
        if task == Task::Table {
            println!("  first table html: {}", records[0].html.as_deref().unwrap_or(""));
        }
    }

    // the rasterizer turns a scene into the one-hot grid the encoder eats
    let config = CorpusConfig {
        task: Task::Spotting,
        scene: SceneConfig {
            extent: ImageExtent::new(256, 256)?,
            n_bins: 64,
            words: (3, 3),
            word_len: (2, 4),
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
    let vocab = build_vocab(&config)?;
    let jsonl = gen_corpus_jsonl(7, 1, &config, &vocab)?;
    let record = &read_corpus_jsonl(&jsonl)?[0];
    let charset: Vec<char> = record.charset.chars().collect();
    let grid = rasterize(&record.scene(), 32, &charset);
    let occupied = (0..32)
        .flat_map(|r| (0..32).map(move |c| (r, c)))
        .filter(|&(r, c)| grid.channel_at(r, c) > 0)
        .count();
    println!("\nfeature grid: {}x{}x{}, {} glyph cells", grid.g, grid.g, grid.c, occupied);

    let path = std::env::temp_dir().join("spotkit_example.grid");
    let file = std::fs::File::create(&path)?;
    write_feature_grid(&grid, std::io::BufWriter::new(file))?;
    println!("wrote {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());
    Ok(())
}
