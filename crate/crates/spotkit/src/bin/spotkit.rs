//! Command-line front end for the structured-points toolkit.
//!
//! Thin dispatch only: every subcommand parses arguments, loads the
//! documented file formats, and calls straight into the library. Artifacts
//! go to files, logs to stderr, and machine-readable results to stdout when
//! `--json` is passed. Exit codes: 0 success, 1 validation error, 2 runtime
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use spotkit::codec::{self, Task};
use spotkit::corpus::{
    self, build_vocab, rasterize, read_corpus_jsonl, CorpusConfig, SceneConfig, TableConfig,
};
use spotkit::geometry::ImageExtent;
use spotkit::metrics::MatchConfig;
use spotkit::model::{
    self, build_train_example, grad_check, infer_spot, load_checkpoint, save_checkpoint,
    GradCheckOptions, LossWeights, ModelConfig, OptimizerSettings, SpotPrompts, TrainSettings,
};
use spotkit::prompting::{
    sample_prefix_window, sample_spatial_window_traced, PrefixWindow, PromptRng, SpatialWindow,
};
use spotkit::report::{evaluate_task, prediction_record, report_summary};
use spotkit::sft::{self, SpotVariant, TemplateSet};
use spotkit::table;
use spotkit::vocab::TokenVocabulary;

#[derive(Parser)]
#[command(
    name = "spotkit",
    about = "Structured-points toolkit: corpora, codecs, prompting, training, inference, evaluation",
    version
)]
struct Cli {
    /// Emit machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Seed for all randomness.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Coordinate bins per axis.
    #[arg(long, global = true, default_value_t = 1000)]
    n_bins: u32,
    /// TOML-style key=value config file overriding generator defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus as JSONL (plus a vocabulary manifest).
    GenCorpus(GenCorpusArgs),
    /// Re-encode corpus annotations into stage-1 token streams.
    Encode(EncodeArgs),
    /// Decode stage-1 token text back into centers and labels.
    Decode(DecodeArgs),
    /// Build table ground truth: token stream, per-cell stage-2, HTML.
    BuildTableGt(BuildTableGtArgs),
    /// Sample spatial and prefix prompt windows.
    SamplePrompt(SamplePromptArgs),
    /// Train the desk-scale token-router decoder.
    Train(TrainArgs),
    /// Run two-stage inference over a corpus with a trained checkpoint.
    Infer(InferArgs),
    /// Evaluate predictions against ground truth.
    Eval(EvalArgs),
    /// Build SPOT-style SFT conversation records.
    GenSft(GenSftArgs),
    /// Verify analytic gradients against finite differences.
    GradCheck(GradCheckArgs),
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long)]
    task: Task,
    #[arg(long, default_value_t = 100)]
    count: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write one feature-grid file per record into this directory.
    #[arg(long)]
    grids: Option<PathBuf>,
    /// Feature grid side length for --grids.
    #[arg(long, default_value_t = 32)]
    grid_g: usize,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Vocabulary manifest (defaults to `<input>.vocab`).
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    task: Task,
    /// File of whitespace-separated token names, one sequence per line.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
}

#[derive(Args)]
struct BuildTableGtArgs {
    /// Table-task corpus JSONL.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SamplePromptArgs {
    #[arg(long, default_value_t = 10)]
    count: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Optimizer steps (0 writes the seeded initialization).
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 300)]
    warmup: usize,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    #[arg(long, default_value_t = 64)]
    d_model: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 32)]
    grid_g: usize,
    #[arg(long, default_value_t = 4)]
    patch: usize,
    #[arg(long, default_value_t = 128)]
    max_len_stage1: usize,
    #[arg(long, default_value_t = 64)]
    max_len_stage2: usize,
    /// Write the step,loss,token_accuracy trace CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    /// Corpus records to run on (annotations define the feature grids).
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Stage-2 polygon token count (8 boxes, 32 curved, 0 table cells).
    #[arg(long)]
    poly_tokens: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    task: Task,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenSftArgs {
    /// Spotting corpus JSONL, or an external OCR JSONL with --import-ocr.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "N-SPOT")]
    variant: SpotVariant,
    #[arg(long)]
    out: PathBuf,
    /// Template file (TOML slots); defaults to the bundled wording.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Treat the input as external OCR annotations.
    #[arg(long)]
    import_ocr: bool,
}

#[derive(Args)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 16)]
    d_model: usize,
    /// Scale this tensor's analytic gradient by 2 (negative control).
    #[arg(long)]
    corrupt: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("SPOTKIT_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e.downcast_ref::<clap::Error>().is_some()
                || e.to_string().contains("invalid")
                || e.to_string().contains("config");
            if validation {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

/// Parse the TOML-style key=value config file into generator configs.
fn load_corpus_config(cli: &Cli, task: Task) -> Result<CorpusConfig> {
    let mut scene = SceneConfig {
        n_bins: cli.n_bins,
        ..SceneConfig::default()
    };
    let mut table = TableConfig {
        n_bins: cli.n_bins,
        ..TableConfig::default()
    };
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let values: toml::Table = text.parse().context("invalid config file")?;
        let get_u32 = |v: &toml::Value| -> Option<u32> { v.as_integer().map(|i| i as u32) };
        for (key, value) in &values {
            match key.as_str() {
                "extent_width" => {
                    scene.extent.width = get_u32(value).context("invalid extent_width")?;
                    table.extent.width = scene.extent.width;
                }
                "extent_height" => {
                    scene.extent.height = get_u32(value).context("invalid extent_height")?;
                    table.extent.height = scene.extent.height;
                }
                "words_min" => scene.words.0 = get_u32(value).context("invalid words_min")?,
                "words_max" => scene.words.1 = get_u32(value).context("invalid words_max")?,
                "word_len_min" => scene.word_len.0 = get_u32(value).context("invalid word_len_min")?,
                "word_len_max" => scene.word_len.1 = get_u32(value).context("invalid word_len_max")?,
                "charset" => {
                    let s = value.as_str().context("charset must be a string")?;
                    scene.charset = s.chars().collect();
                    table.charset = s.chars().collect();
                }
                "char_width_px" => scene.char_width_px = get_u32(value).context("invalid char_width_px")?,
                "char_height_px" => scene.char_height_px = get_u32(value).context("invalid char_height_px")?,
                "placement_grid_px" => scene.placement_grid_px = get_u32(value).context("invalid placement_grid_px")?,
                "margin_px" => scene.margin_px = get_u32(value).context("invalid margin_px")?,
                "max_retries" => scene.max_retries = get_u32(value).context("invalid max_retries")?,
                "line_band_bins" => scene.line_band_bins = get_u32(value).context("invalid line_band_bins")?,
                "entity_tags" => {
                    let s = value.as_str().context("entity_tags must be a string")?;
                    scene.entity_tags = s.split(',').map(str::to_string).collect();
                }
                "rows_min" => table.rows.0 = get_u32(value).context("invalid rows_min")?,
                "rows_max" => table.rows.1 = get_u32(value).context("invalid rows_max")?,
                "cols_min" => table.cols.0 = get_u32(value).context("invalid cols_min")?,
                "cols_max" => table.cols.1 = get_u32(value).context("invalid cols_max")?,
                "span_prob" => table.span_prob = value.as_float().context("invalid span_prob")?,
                "empty_prob" => table.empty_prob = value.as_float().context("invalid empty_prob")?,
                "content_len_min" => table.content_len.0 = get_u32(value).context("invalid content_len_min")?,
                "content_len_max" => table.content_len.1 = get_u32(value).context("invalid content_len_max")?,
                "max_span" => table.max_span = get_u32(value).context("invalid max_span")?,
                other => bail!("invalid config key {other:?}"),
            }
        }
    }
    Ok(CorpusConfig { task, scene, table })
}

fn vocab_path_for(input: &Path, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        let mut p = input.as_os_str().to_owned();
        p.push(".vocab");
        PathBuf::from(p)
    })
}

fn load_vocab(path: &Path) -> Result<TokenVocabulary> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading vocabulary manifest {}", path.display()))?;
    Ok(TokenVocabulary::from_manifest(&text)?)
}

fn load_records(path: &Path) -> Result<Vec<corpus::CorpusRecord>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading corpus {}", path.display()))?;
    Ok(read_corpus_jsonl(&text)?)
}

fn full_prompts_for(vocab: &TokenVocabulary) -> SpotPrompts {
    // full spatial range always; the prefix window collapses to the corpus
    // charset's dictionary span when the full-dictionary endpoints are not
    // part of the vocabulary
    let spatial = SpatialWindow::full(vocab.n_bins());
    let prefix = charset_prefix_window(vocab);
    SpotPrompts { spatial, prefix }
}

fn charset_prefix_window(vocab: &TokenVocabulary) -> PrefixWindow {
    let full = PrefixWindow::full();
    if vocab.char_id(full.first_char).is_some() && vocab.char_id(full.last_char).is_some() {
        return full;
    }
    let mut lo: Option<char> = None;
    let mut hi: Option<char> = None;
    for &c in vocab.charset() {
        if spotkit::prompting::prompt_index(c).is_none() {
            continue;
        }
        if lo.is_none_or(|l| c < l) {
            lo = Some(c);
        }
        if hi.is_none_or(|h| c > h) {
            hi = Some(c);
        }
    }
    match (lo, hi) {
        (Some(l), Some(h)) => PrefixWindow::new(l, h).unwrap_or_else(PrefixWindow::full),
        _ => PrefixWindow::full(),
    }
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::GenCorpus(args) => {
            let config = load_corpus_config(&cli, args.task)?;
            config.scene.validate()?;
            config.table.validate()?;
            let vocab = build_vocab(&config)?;
            let jsonl = corpus::gen_corpus_jsonl(cli.seed, args.count, &config, &vocab)?;
            std::fs::write(&args.out, &jsonl)
                .with_context(|| format!("writing {}", args.out.display()))?;
            let vocab_path = vocab_path_for(&args.out, &None);
            std::fs::write(&vocab_path, vocab.to_manifest())?;
            if let Some(dir) = &args.grids {
                std::fs::create_dir_all(dir)?;
                let records = read_corpus_jsonl(&jsonl)?;
                for record in &records {
                    let charset: Vec<char> = record.charset.chars().collect();
                    let grid = rasterize(&record.scene(), args.grid_g, &charset);
                    let path = dir.join(format!("{:06}.grid", record.id));
                    let file = std::fs::File::create(&path)?;
                    corpus::write_feature_grid(&grid, std::io::BufWriter::new(file))?;
                }
            }
            eprintln!(
                "wrote {} {} records to {} (vocabulary: {})",
                args.count,
                args.task,
                args.out.display(),
                vocab_path.display()
            );
            if cli.json {
                println!(
                    "{}",
                    serde_json::json!({
                        "records": args.count,
                        "task": args.task,
                        "out": args.out,
                        "vocab": vocab_path,
                        "vocab_size": vocab.size(),
                    })
                );
            }
            Ok(())
        }
        Command::Encode(args) => {
            let vocab = load_vocab(&vocab_path_for(&args.input, &args.vocab))?;
            let records = load_records(&args.input)?;
            for record in &records {
                let tokens = match record.task {
                    Task::Table => {
                        let doc = record.table.as_ref().context("table record without table")?;
                        table::encode_table_structure(doc, record.extent, &vocab)?.tokens
                    }
                    task => codec::encode_stage1(&record.instances, task, &vocab)?.tokens,
                };
                if cli.json {
                    println!(
                        "{}",
                        serde_json::json!({"id": record.id, "ids": tokens, "text": vocab.render(&tokens)})
                    );
                } else {
                    println!("{}", vocab.render(&tokens));
                }
            }
            Ok(())
        }
        Command::Decode(args) => {
            let vocab = load_vocab(&args.vocab)?;
            let text = std::fs::read_to_string(&args.input)?;
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let ids = codec::parse_stage1_text(line, &vocab)?;
                if args.task == Task::Table {
                    let decoded =
                        table::decode_table_structure(&table::TableTokenStream { tokens: ids }, &vocab);
                    println!(
                        "{}",
                        serde_json::json!({
                            "n_rows": decoded.n_rows,
                            "n_cols": decoded.n_cols,
                            "cells": decoded.cells,
                            "diagnostics": decoded.diagnostics,
                        })
                    );
                } else {
                    let decoded = codec::decode_stage1_ids(&ids, args.task, &vocab);
                    println!(
                        "{}",
                        serde_json::json!({
                            "points": decoded.points,
                            "diagnostics": decoded.diagnostics,
                        })
                    );
                }
            }
            Ok(())
        }
        Command::BuildTableGt(args) => {
            let vocab = load_vocab(&vocab_path_for(&args.input, &args.vocab))?;
            let records = load_records(&args.input)?;
            let mut out_lines = Vec::new();
            for record in &records {
                let doc = record
                    .table
                    .as_ref()
                    .with_context(|| format!("record {} is not a table record", record.id))?;
                let stream = table::encode_table_structure(doc, record.extent, &vocab)?;
                let stage2 = table::build_cell_stage2_gt(doc, &vocab, record.extent)?;
                let line = serde_json::json!({
                    "id": record.id,
                    "stream_ids": stream.tokens,
                    "stream_text": vocab.render(&stream.tokens),
                    "stage2": stage2.iter().map(|s| s.to_ids(&vocab)).collect::<Vec<_>>(),
                    "html": doc.to_canonical_html(),
                });
                out_lines.push(line.to_string());
            }
            let text = out_lines.join("\n") + "\n";
            match &args.out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::SamplePrompt(args) => {
            let mut rng = PromptRng::new(cli.seed);
            for _ in 0..args.count {
                let (window, mode) = sample_spatial_window_traced(&mut rng, cli.n_bins);
                let prefix = sample_prefix_window(&mut rng);
                if cli.json {
                    println!(
                        "{}",
                        serde_json::json!({
                            "spatial": window,
                            "mode": mode,
                            "prefix": {"first": prefix.first_char, "last": prefix.last_char},
                        })
                    );
                } else {
                    println!(
                        "spatial [{}, {}, {}, {}] ({:?})  prefix [{}, {}]",
                        window.start_x,
                        window.start_y,
                        window.end_x,
                        window.end_y,
                        mode,
                        prefix.first_char,
                        prefix.last_char
                    );
                }
            }
            Ok(())
        }
        Command::Train(args) => {
            let vocab = load_vocab(&vocab_path_for(&args.corpus, &args.vocab))?;
            let records = load_records(&args.corpus)?;
            if records.is_empty() {
                bail!("invalid corpus: no records");
            }
            let grid_c = records[0].charset.chars().count() + 1;
            let config = ModelConfig {
                d_model: args.d_model,
                n_layers: args.layers,
                n_heads: args.heads,
                mlp_factor: 4,
                max_len_stage1: args.max_len_stage1,
                max_len_stage2: args.max_len_stage2,
                vocab_size: vocab.size() as usize,
                grid_g: args.grid_g,
                grid_c,
                patch: args.patch,
            };
            config.validate()?;
            let prompts = full_prompts_for(&vocab);
            let weights = LossWeights::default();
            let examples: Vec<_> = records
                .iter()
                .map(|r| {
                    build_train_example(r, &vocab, prompts.spatial, prompts.prefix, &weights, args.grid_g)
                })
                .collect::<Result<_, _>>()?;
            let settings = TrainSettings {
                seed: cli.seed,
                steps: args.steps,
                optimizer: OptimizerSettings {
                    lr: args.lr,
                    warmup_steps: args.warmup,
                    weight_decay: args.weight_decay,
                    grad_clip: Some(5.0),
                    ..Default::default()
                },
                trace_every: 25,
            };
            let outcome = model::train(&examples, &config, &settings)?;
            save_checkpoint(&outcome.params, &args.out)?;
            if let Some(trace_path) = &args.trace {
                std::fs::write(trace_path, model::train::trace_to_csv(&outcome.trace))?;
            }
            let final_loss = outcome.trace.last().map(|r| r.loss);
            eprintln!(
                "trained {} steps on {} records; checkpoint: {}",
                args.steps,
                records.len(),
                args.out.display()
            );
            if cli.json {
                println!(
                    "{}",
                    serde_json::json!({
                        "steps": args.steps,
                        "records": records.len(),
                        "checkpoint": args.out,
                        "final_loss": final_loss,
                        "params": outcome.params.param_count(),
                    })
                );
            }
            Ok(())
        }
        Command::Infer(args) => {
            let vocab = load_vocab(&vocab_path_for(&args.corpus, &args.vocab))?;
            let params = load_checkpoint(&args.model)?;
            let records = load_records(&args.corpus)?;
            let prompts = full_prompts_for(&vocab);
            let mut out_lines = Vec::with_capacity(records.len());
            let mut diagnostics = 0usize;
            for record in &records {
                let charset: Vec<char> = record.charset.chars().collect();
                let grid = rasterize(&record.scene(), params.config.grid_g, &charset);
                let poly_tokens = args.poly_tokens.unwrap_or(match record.task {
                    Task::Table => 0,
                    _ => record
                        .instances
                        .first()
                        .map(|i| i.geometry.kind().vertex_count() * 2)
                        .unwrap_or(8),
                });
                let output = infer_spot(
                    &params,
                    &grid,
                    record.task,
                    &prompts,
                    &vocab,
                    record.extent,
                    poly_tokens,
                )?;
                diagnostics += output.stage1_diagnostics.len() + output.stage2_diagnostics.len();
                let pred = prediction_record(record, &output);
                out_lines.push(serde_json::to_string(&pred)?);
            }
            std::fs::write(&args.out, out_lines.join("\n") + "\n")?;
            eprintln!(
                "inferred {} records ({} parse diagnostics); predictions: {}",
                records.len(),
                diagnostics,
                args.out.display()
            );
            if cli.json {
                println!(
                    "{}",
                    serde_json::json!({
                        "records": records.len(),
                        "diagnostics": diagnostics,
                        "out": args.out,
                    })
                );
            }
            Ok(())
        }
        Command::Eval(args) => {
            let gt = load_records(&args.gt)?;
            let pred = load_records(&args.pred)?;
            let cfg = MatchConfig {
                iou_threshold: args.iou,
                case_insensitive: false,
            };
            let report = evaluate_task(args.task, &gt, &pred, &cfg)?;
            if let Some(path) = &args.out {
                std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
            }
            eprint!("{}", report_summary(&report));
            if cli.json {
                println!("{}", serde_json::to_string(&report)?);
            }
            Ok(())
        }
        Command::GenSft(args) => {
            let templates = match &args.templates {
                Some(path) => TemplateSet::from_toml(&std::fs::read_to_string(path)?)?,
                None => TemplateSet::default_set(),
            };
            let scenes: Vec<(String, corpus::SceneSpec)> = if args.import_ocr {
                let text = std::fs::read_to_string(&args.input)?;
                sft::import_external_ocr(&text, cli.n_bins)?
            } else {
                load_records(&args.input)?
                    .iter()
                    .map(|r| (format!("scene-{:06}", r.id), r.scene()))
                    .collect()
            };
            let mut records = Vec::with_capacity(scenes.len());
            for (i, (image, scene)) in scenes.iter().enumerate() {
                let n_bins = if args.import_ocr { cli.n_bins } else { cli.n_bins };
                records.push(sft::build_record(
                    scene,
                    args.variant,
                    &templates,
                    n_bins,
                    i as u64,
                    image.clone(),
                )?);
            }
            std::fs::write(&args.out, sft::records_to_jsonl(&records)?)?;
            eprintln!(
                "wrote {} {} records to {}",
                records.len(),
                args.variant,
                args.out.display()
            );
            if cli.json {
                println!(
                    "{}",
                    serde_json::json!({"records": records.len(), "variant": args.variant.to_string(), "out": args.out})
                );
            }
            Ok(())
        }
        Command::GradCheck(args) => {
            let scene = SceneConfig {
                extent: ImageExtent { width: 64, height: 64 },
                n_bins: 16,
                words: (2, 2),
                word_len: (1, 2),
                charset: ('a'..='c').collect(),
                char_width_px: 12,
                char_height_px: 12,
                placement_grid_px: 4,
                margin_px: 2,
                max_retries: 100,
                line_band_bins: 4,
                ..SceneConfig::default()
            };
            let config = CorpusConfig {
                task: Task::Spotting,
                scene,
                table: TableConfig::default(),
            };
            let vocab = build_vocab(&config)?;
            let record = corpus::gen_record(&PromptRng::new(cli.seed), 0, &config, &vocab)?;
            let mcfg = ModelConfig {
                d_model: args.d_model.min(16),
                n_layers: 1,
                n_heads: 2,
                mlp_factor: 2,
                max_len_stage1: 24,
                max_len_stage2: 16,
                vocab_size: vocab.size() as usize,
                grid_g: 8,
                grid_c: config.scene.charset.len() + 1,
                patch: 4,
            };
            let example = build_train_example(
                &record,
                &vocab,
                SpatialWindow::full(16),
                PrefixWindow::new('a', 'c').expect("charset window"),
                &LossWeights::default(),
                mcfg.grid_g,
            )?;
            let params = model::ParamSet::init(&mcfg, cli.seed.wrapping_add(1))?;
            let opts = GradCheckOptions {
                corrupt_tensor: args.corrupt.clone(),
                ..Default::default()
            };
            let report = grad_check(&params, &example, &opts)?;
            eprintln!(
                "checked {} parameters; max relative error {:.3e} at {}[{}]",
                report.params_checked,
                report.max_rel_error,
                report.worst_tensor,
                report.worst_index
            );
            if cli.json {
                println!(
                    "{}",
                    serde_json::json!({
                        "params_checked": report.params_checked,
                        "max_rel_error": report.max_rel_error,
                        "worst_tensor": report.worst_tensor,
                    })
                );
            }
            Ok(())
        }
    }
}
