//! Deterministic synthetic corpus generation: desk-scale scenes (spotting,
//! KIE, layout), tables with exhaustive ground truth, and the one-hot
//! feature-grid rasterizer consumed by the toy encoder.
//!
//! Generation is sharded by record id: record `i` draws from the stream
//! `root.derive(i)`, so corpora are byte-identical for a given seed and
//! config regardless of parallelism.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, InstanceRecord, Task};
use crate::geometry::{quantize, GeometryError, ImageExtent, PointF, PolygonGeom};
use crate::prompting::PromptRng;
use crate::table::{self, TableCell, TableDocument, TableError};
use crate::vocab::{TokenId, TokenVocabulary, VocabError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("could not place word {word} after {retries} retries; reduce density or enlarge the extent")]
    Placement { word: usize, retries: u32 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Codec(#[from] codec::CodecError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("feature grid file is malformed: {0}")]
    GridFormat(String),
}

/// Scene generation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneConfig {
    pub extent: ImageExtent,
    pub n_bins: u32,
    /// Words per scene, inclusive range.
    pub words: (u32, u32),
    /// Word length in characters, inclusive range (at most 8).
    pub word_len: (u32, u32),
    /// Word alphabet.
    pub charset: Vec<char>,
    pub char_width_px: u32,
    pub char_height_px: u32,
    /// Placement positions snap to this pixel grid (1 disables snapping).
    pub placement_grid_px: u32,
    /// Minimum gap between word boxes in pixels.
    pub margin_px: u32,
    /// Rejection-sampling retries per word before giving up.
    pub max_retries: u32,
    /// Entity tag set for KIE labels.
    pub entity_tags: Vec<String>,
    /// Height of a layout line band, in bins.
    pub line_band_bins: u32,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            extent: ImageExtent { width: 1000, height: 1000 },
            n_bins: 1000,
            words: (1, 10),
            word_len: (1, 8),
            charset: ('a'..='z').collect(),
            char_width_px: 32,
            char_height_px: 32,
            placement_grid_px: 1,
            margin_px: 2,
            max_retries: 200,
            entity_tags: ["company", "date", "address", "total"]
                .map(String::from)
                .to_vec(),
            line_band_bins: 100,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.words.0 < 1 || self.words.0 > self.words.1 {
            return Err(CorpusError::Config(format!(
                "words range {:?} must satisfy 1 <= min <= max",
                self.words
            )));
        }
        if self.word_len.0 < 1 || self.word_len.0 > self.word_len.1 || self.word_len.1 > 8 {
            return Err(CorpusError::Config(format!(
                "word_len range {:?} must satisfy 1 <= min <= max <= 8",
                self.word_len
            )));
        }
        if self.charset.is_empty() {
            return Err(CorpusError::Config("charset is empty".into()));
        }
        if self.placement_grid_px == 0 {
            return Err(CorpusError::Config("placement_grid_px must be >= 1".into()));
        }
        if self.line_band_bins == 0 {
            return Err(CorpusError::Config("line_band_bins must be >= 1".into()));
        }
        if self.entity_tags.is_empty() {
            return Err(CorpusError::Config("entity tag set is empty".into()));
        }
        Ok(())
    }
}

/// A generated scene: extent plus labeled instances with disjoint boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub extent: ImageExtent,
    pub instances: Vec<InstanceRecord>,
}

fn boxes_overlap(a: &(f64, f64, f64, f64), b: &(f64, f64, f64, f64), margin: f64) -> bool {
    a.0 < b.2 + margin && b.0 < a.2 + margin && a.1 < b.3 + margin && b.1 < a.3 + margin
}

/// Generate one labeled scene. Placement is rejection sampling over snapped
/// positions; layout line/paragraph ids come from vertical banding in bin
/// space; KIE entities are assigned to short consecutive word runs in
/// reading order.
pub fn gen_scene(rng: &mut PromptRng, config: &SceneConfig, task: Task) -> Result<SceneSpec, CorpusError> {
    config.validate()?;
    if task == Task::Table {
        return Err(CorpusError::Config(
            "table documents come from gen_table, not gen_scene".into(),
        ));
    }
    let n_words = rng.range_u32(config.words.0, config.words.1) as usize;
    let grid = config.placement_grid_px as f64;
    let mut boxes: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(n_words);
    let mut texts: Vec<String> = Vec::with_capacity(n_words);

    for word in 0..n_words {
        let len = rng.range_u32(config.word_len.0, config.word_len.1);
        let text: String = (0..len)
            .map(|_| config.charset[rng.range_usize(0, config.charset.len() - 1)])
            .collect();
        let w = (len * config.char_width_px) as f64;
        let h = config.char_height_px as f64;
        if w > config.extent.width as f64 || h > config.extent.height as f64 {
            return Err(CorpusError::Config(format!(
                "a {len}-char word does not fit the extent"
            )));
        }
        let max_x = config.extent.width as f64 - w;
        let max_y = config.extent.height as f64 - h;
        let mut placed = false;
        for _ in 0..config.max_retries {
            let x0 = (rng.uniform() * max_x / grid).floor() * grid;
            let y0 = (rng.uniform() * max_y / grid).floor() * grid;
            let candidate = (x0, y0, x0 + w, y0 + h);
            if boxes
                .iter()
                .all(|b| !boxes_overlap(b, &candidate, config.margin_px as f64))
            {
                boxes.push(candidate);
                texts.push(text.clone());
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(CorpusError::Placement {
                word,
                retries: config.max_retries,
            });
        }
    }

    let mut instances: Vec<InstanceRecord> = boxes
        .iter()
        .zip(&texts)
        .map(|(&(x0, y0, x1, y1), text)| {
            InstanceRecord::from_geometry(
                PolygonGeom::from_box(x0, y0, x1, y1),
                text.clone(),
                config.extent,
                config.n_bins,
            )
        })
        .collect::<Result<_, _>>()?;

    // annotation order is reading order
    instances = codec::raster_order(&instances);

    match task {
        Task::Spotting => {}
        Task::Kie => {
            let mut idx = 0;
            let mut prev_tag: Option<usize> = None;
            while idx < instances.len() {
                let run = (rng.range_usize(1, 2)).min(instances.len() - idx);
                let mut tag_idx = rng.range_usize(0, config.entity_tags.len() - 1);
                if config.entity_tags.len() > 1 {
                    while Some(tag_idx) == prev_tag {
                        tag_idx = rng.range_usize(0, config.entity_tags.len() - 1);
                    }
                }
                for inst in instances.iter_mut().skip(idx).take(run) {
                    inst.entity = Some(config.entity_tags[tag_idx].clone());
                }
                prev_tag = Some(tag_idx);
                idx += run;
            }
        }
        Task::Layout => {
            let mut line_ord = 0u32;
            let mut para_ord = 0u32;
            let mut prev_band: Option<u32> = None;
            for inst in instances.iter_mut() {
                let band = inst.center.y_bin / config.line_band_bins;
                match prev_band {
                    Some(p) if p == band => {}
                    Some(p) => {
                        line_ord += 1;
                        if band > p + 1 {
                            para_ord += 1;
                        }
                    }
                    None => {}
                }
                inst.line_id = Some(line_ord);
                inst.paragraph_id = Some(para_ord);
                prev_band = Some(band);
            }
        }
        Task::Table => unreachable!(),
    }

    Ok(SceneSpec {
        extent: config.extent,
        instances,
    })
}

/// Consecutive-run KIE fields `(entity, joined value)` derived from labeled
/// instances, the same construction the decoder's assembly uses.
pub fn kie_fields(instances: &[InstanceRecord]) -> Vec<(String, String)> {
    let mut fields: Vec<(String, String)> = Vec::new();
    let mut prev_entity: Option<&str> = None;
    for inst in instances {
        let Some(entity) = inst.entity.as_deref() else {
            prev_entity = None;
            continue;
        };
        if prev_entity == Some(entity) {
            fields
                .last_mut()
                .expect("run already opened")
                .1
                .push_str(&inst.transcription);
        } else {
            fields.push((entity.to_string(), inst.transcription.clone()));
        }
        prev_entity = Some(entity);
    }
    fields
}

/// Table generation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableConfig {
    pub extent: ImageExtent,
    pub n_bins: u32,
    pub rows: (u32, u32),
    pub cols: (u32, u32),
    /// Probability a cell anchor grows into a rowspan/colspan.
    pub span_prob: f64,
    /// Probability a cell has empty content.
    pub empty_prob: f64,
    pub content_len: (u32, u32),
    pub charset: Vec<char>,
    pub max_span: u32,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            extent: ImageExtent { width: 1000, height: 1000 },
            n_bins: 1000,
            rows: (1, 8),
            cols: (1, 8),
            span_prob: 0.2,
            empty_prob: 0.15,
            content_len: (1, 6),
            charset: ('a'..='z').chain('0'..='9').collect(),
            max_span: 8,
        }
    }
}

impl TableConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.rows.0 < 1 || self.rows.0 > self.rows.1 || self.rows.1 > 8 {
            return Err(CorpusError::Config(format!(
                "rows range {:?} must satisfy 1 <= min <= max <= 8",
                self.rows
            )));
        }
        if self.cols.0 < 1 || self.cols.0 > self.cols.1 || self.cols.1 > 8 {
            return Err(CorpusError::Config(format!(
                "cols range {:?} must satisfy 1 <= min <= max <= 8",
                self.cols
            )));
        }
        if !(0.0..=1.0).contains(&self.span_prob) || !(0.0..=1.0).contains(&self.empty_prob) {
            return Err(CorpusError::Config("probabilities must be in [0, 1]".into()));
        }
        if self.charset.is_empty() {
            return Err(CorpusError::Config("charset is empty".into()));
        }
        Ok(())
    }
}

/// Generate a random table with a valid span tiling, plus the rendered
/// scene of its cell texts (one instance per non-empty cell).
pub fn gen_table(
    rng: &mut PromptRng,
    config: &TableConfig,
) -> Result<(TableDocument, SceneSpec), CorpusError> {
    config.validate()?;
    let n_rows = rng.range_u32(config.rows.0, config.rows.1);
    let n_cols = rng.range_u32(config.cols.0, config.cols.1);
    let mut occupied = vec![false; (n_rows * n_cols) as usize];
    let at = |r: u32, c: u32| (r * n_cols + c) as usize;
    let mut cells: Vec<TableCell> = Vec::new();

    for r in 0..n_rows {
        for c in 0..n_cols {
            if occupied[at(r, c)] {
                continue;
            }
            let mut rowspan = 1u32;
            let mut colspan = 1u32;
            if rng.uniform() < config.span_prob {
                // room below and to the right, limited by already-claimed cells
                let mut max_cols = 0;
                while c + max_cols < n_cols && !occupied[at(r, c + max_cols)] {
                    max_cols += 1;
                }
                let mut max_rows = 0;
                while r + max_rows < n_rows && !occupied[at(r + max_rows, c)] {
                    max_rows += 1;
                }
                let span_cap = config.max_span.min(3);
                if rng.uniform() < 0.5 {
                    colspan = rng.range_u32(1, max_cols.min(span_cap));
                } else {
                    rowspan = rng.range_u32(1, max_rows.min(span_cap));
                }
                // a rectangular span must be fully free
                'shrink: while rowspan > 1 || colspan > 1 {
                    for rr in r..r + rowspan {
                        for cc in c..c + colspan {
                            if occupied[at(rr, cc)] {
                                if colspan > 1 {
                                    colspan -= 1;
                                } else {
                                    rowspan -= 1;
                                }
                                continue 'shrink;
                            }
                        }
                    }
                    break;
                }
            }
            for rr in r..r + rowspan {
                for cc in c..c + colspan {
                    occupied[at(rr, cc)] = true;
                }
            }
            let content = if rng.uniform() < config.empty_prob {
                String::new()
            } else {
                let len = rng.range_u32(config.content_len.0, config.content_len.1);
                (0..len)
                    .map(|_| config.charset[rng.range_usize(0, config.charset.len() - 1)])
                    .collect()
            };
            // the content box sits centered in the spanned pixel rect
            let cell_w = config.extent.width as f64 / n_cols as f64;
            let cell_h = config.extent.height as f64 / n_rows as f64;
            let x0 = c as f64 * cell_w;
            let y0 = r as f64 * cell_h;
            let x1 = (c + colspan) as f64 * cell_w;
            let y1 = (r + rowspan) as f64 * cell_h;
            let content_center = (!content.is_empty())
                .then(|| PointF::new((x0 + x1) / 2.0, (y0 + y1) / 2.0));
            cells.push(TableCell {
                row: r,
                col: c,
                rowspan,
                colspan,
                content,
                content_center,
            });
        }
    }

    let doc = TableDocument {
        n_rows,
        n_cols,
        cells,
    };
    doc.validate_tiling()?;

    // rendered scene: one instance per non-empty cell, box = content box
    let mut instances = Vec::new();
    for cell in doc.cells_in_order() {
        if cell.content.is_empty() {
            continue;
        }
        let center = cell.content_center.expect("non-empty cells carry centers");
        let w = (cell.content.chars().count() as f64 * 12.0).min(config.extent.width as f64);
        let h = 16.0f64.min(config.extent.height as f64);
        let x0 = (center.x - w / 2.0).max(0.0);
        let y0 = (center.y - h / 2.0).max(0.0);
        let x1 = (x0 + w).min(config.extent.width as f64);
        let y1 = (y0 + h).min(config.extent.height as f64);
        instances.push(InstanceRecord {
            center: quantize(center, config.extent, config.n_bins)?,
            geometry: PolygonGeom::from_box(x0, y0, x1, y1),
            transcription: cell.content.clone(),
            entity: None,
            line_id: None,
            paragraph_id: None,
        });
    }
    Ok((
        doc,
        SceneSpec {
            extent: config.extent,
            instances,
        },
    ))
}

/// One-hot character occupancy grid standing in for image features.
///
/// Shape `g x g x c` where channel 0 is background and channel `1 + i`
/// marks coverage by charset character `i`. Layout is row-major
/// `data[(row * g + col) * c + channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub g: usize,
    pub c: usize,
    pub data: Vec<f32>,
}

impl FeatureGrid {
    pub fn channel_at(&self, row: usize, col: usize) -> usize {
        let base = (row * self.g + col) * self.c;
        (0..self.c)
            .max_by(|&a, &b| {
                self.data[base + a]
                    .partial_cmp(&self.data[base + b])
                    .expect("finite")
            })
            .expect("c >= 1")
    }
}

/// Rasterize a scene into a `g x g` one-hot feature grid. A cell takes the
/// channel of the glyph box (word box subdivided equally per character)
/// covering the cell center, background otherwise.
pub fn rasterize(scene: &SceneSpec, g: usize, charset: &[char]) -> FeatureGrid {
    assert!(g >= 8, "feature grids need g >= 8");
    let c = charset.len() + 1;
    let mut data = vec![0.0f32; g * g * c];
    let cell_w = scene.extent.width as f64 / g as f64;
    let cell_h = scene.extent.height as f64 / g as f64;
    for row in 0..g {
        let cy = (row as f64 + 0.5) * cell_h;
        for col in 0..g {
            let cx = (col as f64 + 0.5) * cell_w;
            let mut channel = 0usize;
            'words: for inst in &scene.instances {
                let verts = inst.geometry.vertices();
                let (x0, y0) = (verts[0].x, verts[0].y);
                let (x1, y1) = (verts[2].x, verts[2].y);
                if cx < x0 || cx >= x1 || cy < y0 || cy >= y1 {
                    continue;
                }
                let chars: Vec<char> = inst.transcription.chars().collect();
                if chars.is_empty() {
                    continue;
                }
                let glyph_w = (x1 - x0) / chars.len() as f64;
                let k = (((cx - x0) / glyph_w) as usize).min(chars.len() - 1);
                if let Some(idx) = charset.iter().position(|&ch| ch == chars[k]) {
                    channel = idx + 1;
                }
                break 'words;
            }
            data[(row * g + col) * c + channel] = 1.0;
        }
    }
    FeatureGrid { g, c, data }
}

/// Write a feature grid: 16-byte header (`g` and `c` as little-endian u64)
/// followed by the flat `f32` payload, little-endian.
pub fn write_feature_grid(grid: &FeatureGrid, mut w: impl Write) -> Result<(), CorpusError> {
    w.write_all(&(grid.g as u64).to_le_bytes())?;
    w.write_all(&(grid.c as u64).to_le_bytes())?;
    for v in &grid.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read a feature grid written by [`write_feature_grid`].
pub fn read_feature_grid(mut r: impl Read) -> Result<FeatureGrid, CorpusError> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    let g = u64::from_le_bytes(header[0..8].try_into().expect("8 bytes")) as usize;
    let c = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes")) as usize;
    let count = g
        .checked_mul(g)
        .and_then(|n| n.checked_mul(c))
        .ok_or_else(|| CorpusError::GridFormat("dimensions overflow".into()))?;
    let mut payload = vec![0u8; count * 4];
    r.read_exact(&mut payload)?;
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    Ok(FeatureGrid { g, c, data })
}

/// One corpus document: annotations plus encoded token ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub schema_version: u32,
    pub id: u64,
    pub task: Task,
    pub extent: ImageExtent,
    pub n_bins: u32,
    /// Word alphabet used for rasterization.
    pub charset: String,
    pub instances: Vec<InstanceRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<TableDocument>,
    /// Canonical HTML for table documents (and reconstructed HTML in
    /// prediction records).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub html: Option<String>,
    /// Stage-1 token ids (no prompt prefix).
    pub stage1_ids: Vec<TokenId>,
    /// Stage-2 token ids per instance / non-empty cell, index-aligned.
    pub stage2_ids: Vec<Vec<TokenId>>,
}

impl CorpusRecord {
    pub fn scene(&self) -> SceneSpec {
        SceneSpec {
            extent: self.extent,
            instances: self.instances.clone(),
        }
    }
}

/// Everything `gen_corpus` needs to label one task-specific corpus.
#[derive(Debug, Clone)]
pub struct CorpusConfig {
    pub task: Task,
    pub scene: SceneConfig,
    pub table: TableConfig,
}

/// Build the vocabulary a corpus config implies: scene charset plus the
/// task's structural tags at the configured bin count.
pub fn build_vocab(config: &CorpusConfig) -> Result<TokenVocabulary, CorpusError> {
    let mut tags = Vec::new();
    match config.task {
        Task::Spotting => {}
        Task::Kie => tags.extend(codec::entity_tags(
            config.scene.entity_tags.iter().map(String::as_str),
        )),
        Task::Layout => tags.extend(codec::layout_tags()),
        Task::Table => tags.extend(table::table_tags(config.table.max_span)),
    }
    let charset = match config.task {
        Task::Table => config.table.charset.clone(),
        _ => config.scene.charset.clone(),
    };
    let n_bins = match config.task {
        Task::Table => config.table.n_bins,
        _ => config.scene.n_bins,
    };
    Ok(TokenVocabulary::build(charset, tags, n_bins)?)
}

/// Generate record `id` of a corpus (deterministic per `(seed, id)`).
pub fn gen_record(
    root: &PromptRng,
    id: u64,
    config: &CorpusConfig,
    vocab: &TokenVocabulary,
) -> Result<CorpusRecord, CorpusError> {
    let mut rng = root.derive(id);
    match config.task {
        Task::Table => {
            let (doc, scene) = gen_table(&mut rng, &config.table)?;
            let stream = table::encode_table_structure(&doc, config.table.extent, vocab)?;
            let stage2 = table::build_cell_stage2_gt(&doc, vocab, config.table.extent)?;
            Ok(CorpusRecord {
                schema_version: SCHEMA_VERSION,
                id,
                task: Task::Table,
                extent: config.table.extent,
                n_bins: config.table.n_bins,
                charset: config.table.charset.iter().collect(),
                instances: scene.instances,
                html: Some(doc.to_canonical_html()),
                table: Some(doc),
                stage1_ids: stream.tokens,
                stage2_ids: stage2.iter().map(|s| s.to_ids(vocab)).collect(),
            })
        }
        task => {
            let scene = gen_scene(&mut rng, &config.scene, task)?;
            let stage1 = codec::encode_stage1(&scene.instances, task, vocab)?;
            // stage-2 targets follow stage-1 point order
            let ordered = match task {
                Task::Spotting => codec::raster_order(&scene.instances),
                _ => scene.instances.clone(),
            };
            let stage2: Vec<Vec<TokenId>> = ordered
                .iter()
                .map(|inst| {
                    codec::encode_stage2(inst, vocab, config.scene.extent)
                        .map(|(seq, _)| seq.to_ids(vocab))
                })
                .collect::<Result<_, _>>()?;
            Ok(CorpusRecord {
                schema_version: SCHEMA_VERSION,
                id,
                task,
                extent: config.scene.extent,
                n_bins: config.scene.n_bins,
                charset: config.scene.charset.iter().collect(),
                instances: ordered,
                table: None,
                html: None,
                stage1_ids: stage1.tokens,
                stage2_ids: stage2,
            })
        }
    }
}

/// Generate `count` records and serialize them as JSONL.
pub fn gen_corpus_jsonl(
    seed: u64,
    count: u64,
    config: &CorpusConfig,
    vocab: &TokenVocabulary,
) -> Result<String, CorpusError> {
    use rayon::prelude::*;
    let root = PromptRng::new(seed);
    let lines: Vec<String> = (0..count)
        .into_par_iter()
        .map(|id| {
            let record = gen_record(&root, id, config, vocab)?;
            Ok(serde_json::to_string(&record)?)
        })
        .collect::<Result<_, CorpusError>>()?;
    let mut out = String::new();
    for line in lines {
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

/// Parse a JSONL corpus.
pub fn read_corpus_jsonl(text: &str) -> Result<Vec<CorpusRecord>, CorpusError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::decode_stage1_ids;

    fn spotting_config() -> CorpusConfig {
        CorpusConfig {
            task: Task::Spotting,
            scene: SceneConfig {
                extent: ImageExtent { width: 256, height: 256 },
                n_bins: 64,
                words: (1, 5),
                word_len: (1, 4),
                charset: ('a'..='p').collect(),
                char_width_px: 16,
                char_height_px: 16,
                placement_grid_px: 8,
                margin_px: 2,
                max_retries: 200,
                line_band_bins: 8,
                ..SceneConfig::default()
            },
            table: TableConfig::default(),
        }
    }

    #[test]
    fn single_word_scene() {
        let mut cfg = spotting_config();
        cfg.scene.words = (1, 1);
        let mut rng = PromptRng::new(1);
        let scene = gen_scene(&mut rng, &cfg.scene, Task::Spotting).unwrap();
        assert_eq!(scene.instances.len(), 1);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = spotting_config();
        let vocab = build_vocab(&cfg).unwrap();
        let a = gen_corpus_jsonl(42, 20, &cfg, &vocab).unwrap();
        let b = gen_corpus_jsonl(42, 20, &cfg, &vocab).unwrap();
        assert_eq!(a, b);
        let c = gen_corpus_jsonl(43, 20, &cfg, &vocab).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn overfull_scene_reports_placement_failure() {
        let mut cfg = spotting_config();
        cfg.scene.extent = ImageExtent { width: 64, height: 32 };
        cfg.scene.words = (40, 40);
        cfg.scene.word_len = (2, 4);
        cfg.scene.max_retries = 20;
        let mut rng = PromptRng::new(0);
        let err = gen_scene(&mut rng, &cfg.scene, Task::Spotting).unwrap_err();
        assert!(matches!(err, CorpusError::Placement { .. }));
    }

    #[test]
    fn zero_rows_is_a_config_error() {
        let mut cfg = TableConfig::default();
        cfg.rows = (0, 4);
        assert!(matches!(cfg.validate(), Err(CorpusError::Config(_))));
    }

    #[test]
    fn labels_round_trip_without_diagnostics() {
        for task in [Task::Spotting, Task::Kie, Task::Layout] {
            let mut cfg = spotting_config();
            cfg.task = task;
            let vocab = build_vocab(&cfg).unwrap();
            let root = PromptRng::new(7);
            for id in 0..50 {
                let record = gen_record(&root, id, &cfg, &vocab).unwrap();
                let decoded = decode_stage1_ids(&record.stage1_ids, task, &vocab);
                assert!(
                    decoded.diagnostics.is_empty(),
                    "{task} record {id}: {:?}",
                    decoded.diagnostics
                );
                assert_eq!(decoded.points.len(), record.instances.len());
                for (p, inst) in decoded.points.iter().zip(&record.instances) {
                    assert_eq!(p.center, inst.center);
                    assert_eq!(p.entity, inst.entity);
                    assert_eq!(p.line_id, inst.line_id);
                    assert_eq!(p.paragraph_id, inst.paragraph_id);
                }
            }
        }
    }

    #[test]
    fn seeded_tables_tile_validly() {
        let mut cfg = TableConfig::default();
        cfg.rows = (4, 4);
        cfg.cols = (4, 4);
        cfg.span_prob = 0.2;
        let mut rng = PromptRng::new(11);
        for _ in 0..100 {
            let (doc, scene) = gen_table(&mut rng, &cfg).unwrap();
            doc.validate_tiling().unwrap();
            // expansion oracle: per-row covered widths all equal n_cols
            let mut widths = vec![0u32; doc.n_rows as usize];
            for cell in &doc.cells {
                for r in cell.row..cell.row + cell.rowspan {
                    widths[r as usize] += cell.colspan;
                }
            }
            assert!(widths.iter().all(|&w| w == doc.n_cols), "{widths:?}");
            let non_empty = doc.cells.iter().filter(|c| !c.content.is_empty()).count();
            assert_eq!(scene.instances.len(), non_empty);
        }
    }

    #[test]
    fn rasterize_empty_scene_is_background() {
        let scene = SceneSpec {
            extent: ImageExtent { width: 256, height: 256 },
            instances: vec![],
        };
        let grid = rasterize(&scene, 8, &['a', 'b']);
        assert!(grid.data.iter().enumerate().all(|(i, &v)| {
            let ch = i % 3;
            (ch == 0) == (v == 1.0)
        }));
    }

    #[test]
    fn rasterize_full_cover_single_char() {
        let extent = ImageExtent { width: 128, height: 128 };
        let inst = InstanceRecord::from_geometry(
            PolygonGeom::from_box(0.0, 0.0, 128.0, 128.0),
            "a",
            extent,
            64,
        )
        .unwrap();
        let scene = SceneSpec { extent, instances: vec![inst] };
        let grid = rasterize(&scene, 8, &['a', 'b']);
        for row in 0..8 {
            for col in 0..8 {
                assert_eq!(grid.channel_at(row, col), 1);
            }
        }
    }

    #[test]
    fn rasterize_splits_word_glyphs() {
        let extent = ImageExtent { width: 128, height: 128 };
        let inst = InstanceRecord::from_geometry(
            PolygonGeom::from_box(0.0, 0.0, 128.0, 128.0),
            "ab",
            extent,
            64,
        )
        .unwrap();
        let scene = SceneSpec { extent, instances: vec![inst] };
        let grid = rasterize(&scene, 8, &['a', 'b']);
        for row in 0..8 {
            for col in 0..8 {
                let want = if col < 4 { 1 } else { 2 };
                assert_eq!(grid.channel_at(row, col), want, "({row},{col})");
            }
        }
    }

    #[test]
    fn rasterization_recovers_character_multisets() {
        let cfg = spotting_config();
        let mut rng = PromptRng::new(3);
        let charset: Vec<char> = cfg.scene.charset.clone();
        for _ in 0..20 {
            let scene = gen_scene(&mut rng, &cfg.scene, Task::Spotting).unwrap();
            // G large enough that every glyph covers at least one cell center
            let g = 128;
            let grid = rasterize(&scene, g, &charset);
            let mut want: Vec<char> = scene
                .instances
                .iter()
                .flat_map(|i| i.transcription.chars())
                .collect();
            want.sort_unstable();
            let mut got: Vec<char> = Vec::new();
            for row in 0..g {
                for col in 0..g {
                    let ch = grid.channel_at(row, col);
                    if ch > 0 {
                        got.push(charset[ch - 1]);
                    }
                }
            }
            got.sort_unstable();
            // every expected character appears somewhere
            for c in want.iter().collect::<std::collections::HashSet<_>>() {
                assert!(got.contains(c), "missing glyph {c}");
            }
        }
    }

    #[test]
    fn feature_grid_file_round_trip() {
        let scene = SceneSpec {
            extent: ImageExtent { width: 64, height: 64 },
            instances: vec![],
        };
        let grid = rasterize(&scene, 8, &['x']);
        let mut buf = Vec::new();
        write_feature_grid(&grid, &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + grid.data.len() * 4);
        let back = read_feature_grid(buf.as_slice()).unwrap();
        assert_eq!(back, grid);
    }

    #[test]
    fn corpus_jsonl_round_trip() {
        let cfg = spotting_config();
        let vocab = build_vocab(&cfg).unwrap();
        let text = gen_corpus_jsonl(5, 10, &cfg, &vocab).unwrap();
        let records = read_corpus_jsonl(&text).unwrap();
        assert_eq!(records.len(), 10);
        assert!(records.iter().all(|r| r.schema_version == SCHEMA_VERSION));
        let again = records
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .collect::<Vec<_>>()
            .join("\n")
            + "\n";
        assert_eq!(text, again);
    }
}
