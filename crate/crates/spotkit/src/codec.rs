//! Stage-1 (structured points) and stage-2 (polygon & content) sequence
//! codecs for the four tasks: text spotting, key information extraction,
//! table recognition, and layout analysis.
//!
//! Stage-1 sequences carry quantized text-center tokens interleaved with
//! task structural tokens between `<S>` and `</S>`. Stage-2 sequences carry
//! a center-point prompt, the quantized polygon, and the char-tokenized
//! transcription terminated by `</S>`. Decoding is best-effort: malformed
//! tails are dropped and reported as positioned diagnostics instead of hard
//! failures, since decoder outputs at inference are not guaranteed well
//! formed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    dequantize, quantize, GeometryError, ImageExtent, PointF, PolyKind, PolygonGeom,
    QuantizedPoint,
};
use crate::vocab::{Special, Token, TokenId, TokenVocabulary};

/// Structural tag spelling for layout lines.
pub const LINE_TAG: &str = "<line>";
/// Structural tag spelling for layout paragraphs.
pub const PARAGRAPH_TAG: &str = "<paragraph>";

/// The four unified tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Spotting,
    Kie,
    Table,
    Layout,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Task::Spotting => "spotting",
            Task::Kie => "kie",
            Task::Table => "table",
            Task::Layout => "layout",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spotting" => Ok(Task::Spotting),
            "kie" => Ok(Task::Kie),
            "table" => Ok(Task::Table),
            "layout" => Ok(Task::Layout),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("instance {index} is missing the {what} label required by the {task} task")]
    MissingLabel {
        index: usize,
        what: &'static str,
        task: Task,
    },
    #[error("entity tag {0:?} is not registered in the vocabulary")]
    UnknownEntityTag(String),
    #[error("structural tag {0:?} is not registered in the vocabulary")]
    MissingStructuralTag(String),
    #[error("table sequences are encoded by the table module, not the point codec")]
    TableDelegated,
    #[error("stage-1/stage-2 count mismatch: {stage1} points but {stage2} sequences")]
    Alignment { stage1: usize, stage2: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("cannot parse token {text:?} at position {position}")]
    TokenText { position: usize, text: String },
}

/// One text instance with full ground-truth labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    /// Quantized centroid of `geometry`.
    pub center: QuantizedPoint,
    pub geometry: PolygonGeom,
    pub transcription: String,
    /// Entity tag name for KIE, e.g. `"address"`.
    pub entity: Option<String>,
    pub line_id: Option<u32>,
    pub paragraph_id: Option<u32>,
}

impl InstanceRecord {
    /// Build a record whose center is the quantized centroid of the geometry.
    pub fn from_geometry(
        geometry: PolygonGeom,
        transcription: impl Into<String>,
        extent: ImageExtent,
        n_bins: u32,
    ) -> Result<Self, GeometryError> {
        let center = quantize(geometry.centroid(), extent, n_bins)?;
        Ok(Self {
            center,
            geometry,
            transcription: transcription.into(),
            entity: None,
            line_id: None,
            paragraph_id: None,
        })
    }

    pub fn with_entity(mut self, entity: impl Into<String>) -> Self {
        self.entity = Some(entity.into());
        self
    }

    pub fn with_layout_ids(mut self, line_id: u32, paragraph_id: u32) -> Self {
        self.line_id = Some(line_id);
        self.paragraph_id = Some(paragraph_id);
        self
    }
}

/// Stage-1 token stream for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredPointsSequence {
    pub tokens: Vec<TokenId>,
    pub task: Task,
}

/// Stage-2 token stream for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyContentSequence {
    pub prompt_point: QuantizedPoint,
    /// 32 or 8 coordinate tokens (16 or 4 vertices x 2 coords).
    pub polygon_tokens: Vec<TokenId>,
    /// Character tokens terminated by `</S>`.
    pub content_tokens: Vec<TokenId>,
}

impl PolyContentSequence {
    /// Flat token stream: prompt point, polygon, then content.
    pub fn to_ids(&self, _vocab: &TokenVocabulary) -> Vec<TokenId> {
        let mut ids = Vec::with_capacity(2 + self.polygon_tokens.len() + self.content_tokens.len());
        ids.push(self.prompt_point.x_bin);
        ids.push(self.prompt_point.y_bin);
        ids.extend_from_slice(&self.polygon_tokens);
        ids.extend_from_slice(&self.content_tokens);
        ids
    }
}

/// Positioned, recoverable decode diagnostic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    pub position: usize,
    pub message: String,
}

impl ParseDiagnostic {
    fn new(position: usize, message: impl Into<String>) -> Self {
        Self {
            position,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} at token {}", self.message, self.position)
    }
}

/// One decoded stage-1 point with its task labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedPoint {
    pub center: QuantizedPoint,
    pub entity: Option<String>,
    /// Ordinal of the entity group this point belongs to (KIE).
    pub entity_group: Option<usize>,
    pub line_id: Option<u32>,
    pub paragraph_id: Option<u32>,
}

/// Best-effort decode result: recovered points plus diagnostics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecodedStage1 {
    pub points: Vec<DecodedPoint>,
    pub diagnostics: Vec<ParseDiagnostic>,
}

fn entity_open_tag(name: &str) -> String {
    format!("<{name}>")
}

fn entity_close_tag(name: &str) -> String {
    format!("</{name}>")
}

/// Structural tags needed by the layout task grammar.
pub fn layout_tags() -> Vec<String> {
    vec![LINE_TAG.to_string(), PARAGRAPH_TAG.to_string()]
}

/// Open/close structural tags for a KIE entity tag set.
pub fn entity_tags<'a>(names: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut tags = Vec::new();
    for name in names {
        tags.push(entity_open_tag(name));
        tags.push(entity_close_tag(name));
    }
    tags
}

/// Sort into raster-scan reading order: by `y_bin`, then `x_bin`, ties by
/// input index.
pub fn raster_order(instances: &[InstanceRecord]) -> Vec<InstanceRecord> {
    let mut keyed: Vec<(usize, &InstanceRecord)> = instances.iter().enumerate().collect();
    keyed.sort_by_key(|(i, inst)| (inst.center.y_bin, inst.center.x_bin, *i));
    keyed.into_iter().map(|(_, inst)| inst.clone()).collect()
}

/// Encode the stage-1 structured points sequence for a point task.
///
/// Spotting sorts instances into raster order and emits bare `(x, y)` pairs;
/// KIE keeps annotation order and wraps each consecutive run of one entity
/// tag in `<tag> ... </tag>`; layout keeps annotation order and separates
/// lines and paragraphs with `<line>` / `<paragraph>` tags. Table encoding
/// is delegated to the table module.
pub fn encode_stage1(
    instances: &[InstanceRecord],
    task: Task,
    vocab: &TokenVocabulary,
) -> Result<StructuredPointsSequence, CodecError> {
    let mut tokens = vec![vocab.special_id(Special::SeqStart)];
    match task {
        Task::Spotting => {
            for inst in raster_order(instances) {
                tokens.push(inst.center.x_bin);
                tokens.push(inst.center.y_bin);
            }
        }
        Task::Kie => {
            let mut idx = 0;
            while idx < instances.len() {
                let entity = instances[idx].entity.clone().ok_or(CodecError::MissingLabel {
                    index: idx,
                    what: "entity",
                    task,
                })?;
                let open = vocab
                    .tag_id(&entity_open_tag(&entity))
                    .ok_or_else(|| CodecError::UnknownEntityTag(entity.clone()))?;
                let close = vocab
                    .tag_id(&entity_close_tag(&entity))
                    .ok_or_else(|| CodecError::UnknownEntityTag(entity.clone()))?;
                tokens.push(open);
                while idx < instances.len() && instances[idx].entity.as_deref() == Some(&entity) {
                    tokens.push(instances[idx].center.x_bin);
                    tokens.push(instances[idx].center.y_bin);
                    idx += 1;
                }
                tokens.push(close);
            }
        }
        Task::Layout => {
            let line_tag = vocab
                .tag_id(LINE_TAG)
                .ok_or_else(|| CodecError::MissingStructuralTag(LINE_TAG.into()))?;
            let para_tag = vocab
                .tag_id(PARAGRAPH_TAG)
                .ok_or_else(|| CodecError::MissingStructuralTag(PARAGRAPH_TAG.into()))?;
            let mut prev: Option<(u32, u32)> = None;
            for (idx, inst) in instances.iter().enumerate() {
                let line = inst.line_id.ok_or(CodecError::MissingLabel {
                    index: idx,
                    what: "line_id",
                    task,
                })?;
                let para = inst.paragraph_id.ok_or(CodecError::MissingLabel {
                    index: idx,
                    what: "paragraph_id",
                    task,
                })?;
                match prev {
                    Some((p, l)) if p == para && l == line => {}
                    Some((p, _)) if p == para => tokens.push(line_tag),
                    _ => {
                        tokens.push(para_tag);
                        tokens.push(line_tag);
                    }
                }
                tokens.push(inst.center.x_bin);
                tokens.push(inst.center.y_bin);
                prev = Some((para, line));
            }
        }
        Task::Table => return Err(CodecError::TableDelegated),
    }
    tokens.push(vocab.special_id(Special::SeqEnd));
    Ok(StructuredPointsSequence { tokens, task })
}

/// Decode a stage-1 sequence back into centers and task labels.
///
/// Layout/KIE group ids are assigned as 0-based ordinals in encounter order.
pub fn decode_stage1(seq: &StructuredPointsSequence, vocab: &TokenVocabulary) -> DecodedStage1 {
    decode_stage1_ids(&seq.tokens, seq.task, vocab)
}

/// Decode a raw stage-1 token id stream (used directly on model output).
pub fn decode_stage1_ids(ids: &[TokenId], task: Task, vocab: &TokenVocabulary) -> DecodedStage1 {
    let mut out = DecodedStage1::default();
    if task == Task::Table {
        out.diagnostics.push(ParseDiagnostic::new(
            0,
            "table sequences must be decoded by the table module",
        ));
        return out;
    }

    let seq_start = vocab.special_id(Special::SeqStart);
    let seq_end = vocab.special_id(Special::SeqEnd);

    let mut pos = 0;
    if ids.first() == Some(&seq_start) {
        pos = 1;
    } else {
        out.diagnostics.push(ParseDiagnostic::new(0, "missing <S>"));
    }

    // current grammar scope
    let mut entity: Option<(String, usize)> = None;
    let mut next_group = 0usize;
    let mut line_id: Option<u32> = None;
    let mut paragraph_id: Option<u32> = None;
    let mut next_line = 0u32;
    let mut next_paragraph = 0u32;
    let mut pending_x: Option<(usize, u32)> = None;
    let mut closed = false;

    while pos < ids.len() {
        let id = ids[pos];
        if id == seq_end {
            closed = true;
            if pos + 1 < ids.len() {
                out.diagnostics
                    .push(ParseDiagnostic::new(pos + 1, "trailing tokens after </S> dropped"));
            }
            break;
        }
        if vocab.is_coord(id) {
            match pending_x.take() {
                None => pending_x = Some((pos, id)),
                Some((_, x)) => {
                    let center = QuantizedPoint::new(x, id);
                    match task {
                        Task::Spotting => out.points.push(DecodedPoint {
                            center,
                            entity: None,
                            entity_group: None,
                            line_id: None,
                            paragraph_id: None,
                        }),
                        Task::Kie => {
                            if entity.is_none() {
                                out.diagnostics.push(ParseDiagnostic::new(
                                    pos,
                                    "point outside any entity group",
                                ));
                            }
                            out.points.push(DecodedPoint {
                                center,
                                entity: entity.as_ref().map(|(n, _)| n.clone()),
                                entity_group: entity.as_ref().map(|(_, g)| *g),
                                line_id: None,
                                paragraph_id: None,
                            });
                        }
                        Task::Layout => {
                            if line_id.is_none() || paragraph_id.is_none() {
                                out.diagnostics.push(ParseDiagnostic::new(
                                    pos,
                                    "point before any <paragraph>/<line> tag",
                                ));
                            }
                            out.points.push(DecodedPoint {
                                center,
                                entity: None,
                                entity_group: None,
                                line_id,
                                paragraph_id,
                            });
                        }
                        Task::Table => unreachable!(),
                    }
                }
            }
            pos += 1;
            continue;
        }
        if let Some((xpos, _)) = pending_x.take() {
            out.diagnostics
                .push(ParseDiagnostic::new(xpos, "dangling x"));
        }
        match vocab.token_of(id) {
            Ok(Token::Tag(tag)) => match task {
                Task::Layout if tag == PARAGRAPH_TAG => {
                    paragraph_id = Some(next_paragraph);
                    next_paragraph += 1;
                    line_id = Some(next_line);
                    next_line += 1;
                    // a fresh paragraph implicitly opens its first line; an
                    // explicit <line> right after simply confirms it
                    if ids.get(pos + 1) == vocab.tag_id(LINE_TAG).as_ref() {
                        pos += 1;
                    }
                }
                Task::Layout if tag == LINE_TAG => {
                    if paragraph_id.is_none() {
                        out.diagnostics
                            .push(ParseDiagnostic::new(pos, "<line> before any <paragraph>"));
                        paragraph_id = Some(next_paragraph);
                        next_paragraph += 1;
                    }
                    line_id = Some(next_line);
                    next_line += 1;
                }
                Task::Kie => {
                    if let Some(name) = tag.strip_prefix("</").and_then(|t| t.strip_suffix('>')) {
                        match entity.take() {
                            Some((open, _)) if open == name => {}
                            Some((open, g)) => {
                                out.diagnostics.push(ParseDiagnostic::new(
                                    pos,
                                    format!("close tag </{name}> does not match open <{open}>"),
                                ));
                                entity = Some((open, g));
                            }
                            None => out.diagnostics.push(ParseDiagnostic::new(
                                pos,
                                format!("close tag </{name}> without open tag"),
                            )),
                        }
                    } else if let Some(name) =
                        tag.strip_prefix('<').and_then(|t| t.strip_suffix('>'))
                    {
                        if let Some((open, _)) = entity.take() {
                            out.diagnostics.push(ParseDiagnostic::new(
                                pos,
                                format!("entity <{open}> not closed before <{name}>"),
                            ));
                        }
                        entity = Some((name.to_string(), next_group));
                        next_group += 1;
                    } else {
                        out.diagnostics
                            .push(ParseDiagnostic::new(pos, format!("unknown tag {tag:?}")));
                    }
                }
                _ => out.diagnostics.push(ParseDiagnostic::new(
                    pos,
                    format!("unexpected tag {tag:?} for {task} task"),
                )),
            },
            Ok(tok) => out.diagnostics.push(ParseDiagnostic::new(
                pos,
                format!("unexpected token {:?}", tok.name()),
            )),
            Err(_) => out
                .diagnostics
                .push(ParseDiagnostic::new(pos, format!("token id {id} out of range"))),
        }
        pos += 1;
    }

    if let Some((xpos, _)) = pending_x {
        out.diagnostics
            .push(ParseDiagnostic::new(xpos, "dangling x"));
    }
    if let Some((open, _)) = entity {
        out.diagnostics.push(ParseDiagnostic::new(
            ids.len().saturating_sub(1),
            format!("entity <{open}> never closed"),
        ));
    }
    if !closed {
        out.diagnostics.push(ParseDiagnostic::new(
            ids.len().saturating_sub(1),
            "missing </S>",
        ));
    }
    out
}

/// Validate a stage-1 sequence against its task grammar: the sequence is
/// sound iff a decode produces no diagnostics.
pub fn validate_stage1(seq: &StructuredPointsSequence, vocab: &TokenVocabulary) -> Result<(), Vec<ParseDiagnostic>> {
    let decoded = decode_stage1(seq, vocab);
    if decoded.diagnostics.is_empty() {
        Ok(())
    } else {
        Err(decoded.diagnostics)
    }
}

/// Encode the stage-2 polygon & content sequence for one instance.
///
/// The prompt is the instance center; polygon vertices are quantized and
/// serialized `x, y` in vertex order; the transcription is char-tokenized
/// with out-of-charset characters mapped to `<UNK>`. Returns the sequence
/// and the number of `<UNK>` substitutions.
pub fn encode_stage2(
    inst: &InstanceRecord,
    vocab: &TokenVocabulary,
    extent: ImageExtent,
) -> Result<(PolyContentSequence, usize), CodecError> {
    let n_bins = vocab.n_bins();
    let mut polygon_tokens = Vec::with_capacity(inst.geometry.vertices().len() * 2);
    for v in inst.geometry.vertices() {
        let q = quantize(*v, extent, n_bins)?;
        polygon_tokens.push(q.x_bin);
        polygon_tokens.push(q.y_bin);
    }
    let unk = vocab.special_id(Special::Unk);
    let mut unknown = 0usize;
    let mut content_tokens: Vec<TokenId> = inst
        .transcription
        .chars()
        .map(|c| {
            let id = vocab.char_id_or_unk(c);
            if id == unk && vocab.char_id(c).is_none() {
                unknown += 1;
            }
            id
        })
        .collect();
    content_tokens.push(vocab.special_id(Special::SeqEnd));
    Ok((
        PolyContentSequence {
            prompt_point: inst.center,
            polygon_tokens,
            content_tokens,
        },
        unknown,
    ))
}

/// Decoded stage-2 payload: continuous polygon (bin centers) and text.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedStage2 {
    pub polygon: Vec<PointF>,
    pub kind: Option<PolyKind>,
    pub text: String,
    pub diagnostics: Vec<ParseDiagnostic>,
}

/// Decode a stage-2 sequence: polygon bins back to bin-center pixels and
/// content tokens back to text (`<UNK>` renders as U+FFFD).
pub fn decode_stage2(
    seq: &PolyContentSequence,
    vocab: &TokenVocabulary,
    extent: ImageExtent,
) -> DecodedStage2 {
    let mut diagnostics = Vec::new();
    let mut polygon = Vec::new();
    let n_bins = vocab.n_bins();
    if seq.polygon_tokens.len() % 2 != 0 {
        diagnostics.push(ParseDiagnostic::new(
            seq.polygon_tokens.len().saturating_sub(1),
            "dangling x",
        ));
    }
    for pair in seq.polygon_tokens.chunks_exact(2) {
        match dequantize(QuantizedPoint::new(pair[0], pair[1]), extent, n_bins) {
            Ok(p) => polygon.push(p),
            Err(e) => diagnostics.push(ParseDiagnostic::new(0, e.to_string())),
        }
    }
    let kind = match polygon.len() {
        4 => Some(PolyKind::Box4),
        16 => Some(PolyKind::Curved16),
        _ => None,
    };
    let seq_end = vocab.special_id(Special::SeqEnd);
    let unk = vocab.special_id(Special::Unk);
    let mut text = String::new();
    let mut terminated = false;
    for (i, &id) in seq.content_tokens.iter().enumerate() {
        if id == seq_end {
            terminated = true;
            if i + 1 < seq.content_tokens.len() {
                diagnostics.push(ParseDiagnostic::new(i + 1, "trailing tokens after </S> dropped"));
            }
            break;
        }
        if id == unk {
            text.push(char::REPLACEMENT_CHARACTER);
        } else if let Ok(Token::Char(c)) = vocab.token_of(id) {
            text.push(c);
        } else {
            diagnostics.push(ParseDiagnostic::new(
                i,
                format!("non-character token id {id} in content"),
            ));
        }
    }
    if !terminated {
        diagnostics.push(ParseDiagnostic::new(
            seq.content_tokens.len().saturating_sub(1),
            "content missing </S>",
        ));
    }
    DecodedStage2 {
        polygon,
        kind,
        text,
        diagnostics,
    }
}

/// Split a raw stage-2 id stream (model output after the 2-token prompt)
/// into polygon and content given the expected polygon token count.
pub fn split_stage2_ids(
    ids: &[TokenId],
    poly_token_count: usize,
    prompt: QuantizedPoint,
) -> PolyContentSequence {
    let split = poly_token_count.min(ids.len());
    PolyContentSequence {
        prompt_point: prompt,
        polygon_tokens: ids[..split].to_vec(),
        content_tokens: ids[split..].to_vec(),
    }
}

/// Resample a simple polygon boundary to exactly 16 vertices equally spaced
/// by arc length, starting at the input's first vertex.
pub fn resample_polygon(vertices: &[PointF], target: usize) -> Result<PolygonGeom, CodecError> {
    if vertices.len() < 3 {
        return Err(GeometryError::TooFewVertices(vertices.len()).into());
    }
    let n = vertices.len();
    let mut edge_len = Vec::with_capacity(n);
    let mut perimeter = 0.0;
    for i in 0..n {
        let len = vertices[i].dist(&vertices[(i + 1) % n]);
        edge_len.push(len);
        perimeter += len;
    }
    if perimeter <= 0.0 {
        return Err(GeometryError::ZeroPerimeter.into());
    }
    let step = perimeter / target as f64;
    let mut out = Vec::with_capacity(target);
    let mut edge = 0usize;
    let mut edge_start = 0.0; // arc-length offset of the current edge start
    for k in 0..target {
        let d = step * k as f64;
        while edge + 1 < n && d >= edge_start + edge_len[edge] && edge_len[edge] >= 0.0 {
            // advance past zero-length and consumed edges
            if d < edge_start + edge_len[edge] {
                break;
            }
            edge_start += edge_len[edge];
            edge += 1;
        }
        let a = vertices[edge];
        let b = vertices[(edge + 1) % n];
        let t = if edge_len[edge] > 0.0 {
            ((d - edge_start) / edge_len[edge]).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(PointF::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t));
    }
    let kind = if target == 4 { PolyKind::Box4 } else { PolyKind::Curved16 };
    Ok(PolygonGeom::new(out, kind)?)
}

/// One assembled spotting result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotInstance {
    pub center: QuantizedPoint,
    pub polygon: Vec<PointF>,
    pub text: String,
}

/// Word-index grouping sets for the layout task.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LayoutGrouping {
    /// Singleton set per word, in decode order.
    pub words: Vec<Vec<usize>>,
    /// Word indices per line.
    pub lines: Vec<Vec<usize>>,
    /// Word indices per paragraph.
    pub paragraphs: Vec<Vec<usize>>,
}

/// Task-shaped assembly of the two decoding stages.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskOutput {
    Spotting(Vec<SpotInstance>),
    /// `(entity, value)` per entity group, in point order; multi-word values
    /// joined with the empty string.
    Kie(Vec<(String, String)>),
    Layout(LayoutGrouping),
}

/// Zip stage-1 points with their index-aligned stage-2 decodes into the
/// task-shaped result.
pub fn assemble_task_output(
    stage1: &DecodedStage1,
    stage2: &[DecodedStage2],
    task: Task,
) -> Result<TaskOutput, CodecError> {
    if stage1.points.len() != stage2.len() {
        return Err(CodecError::Alignment {
            stage1: stage1.points.len(),
            stage2: stage2.len(),
        });
    }
    match task {
        Task::Spotting => Ok(TaskOutput::Spotting(
            stage1
                .points
                .iter()
                .zip(stage2)
                .map(|(p, s2)| SpotInstance {
                    center: p.center,
                    polygon: s2.polygon.clone(),
                    text: s2.text.clone(),
                })
                .collect(),
        )),
        Task::Kie => {
            let mut fields: Vec<(String, String)> = Vec::new();
            let mut last_group: Option<usize> = None;
            for (p, s2) in stage1.points.iter().zip(stage2) {
                let entity = p.entity.clone().unwrap_or_default();
                if p.entity_group.is_some() && p.entity_group == last_group {
                    fields.last_mut().expect("group started").1.push_str(&s2.text);
                } else {
                    fields.push((entity, s2.text.clone()));
                }
                last_group = p.entity_group;
            }
            Ok(TaskOutput::Kie(fields))
        }
        Task::Layout => {
            let mut grouping = LayoutGrouping::default();
            let mut line_map: Vec<(u32, Vec<usize>)> = Vec::new();
            let mut para_map: Vec<(u32, Vec<usize>)> = Vec::new();
            for (w, p) in stage1.points.iter().enumerate() {
                grouping.words.push(vec![w]);
                if let Some(l) = p.line_id {
                    match line_map.last_mut() {
                        Some((id, set)) if *id == l => set.push(w),
                        _ => line_map.push((l, vec![w])),
                    }
                }
                if let Some(pa) = p.paragraph_id {
                    match para_map.last_mut() {
                        Some((id, set)) if *id == pa => set.push(w),
                        _ => para_map.push((pa, vec![w])),
                    }
                }
            }
            grouping.lines = line_map.into_iter().map(|(_, s)| s).collect();
            grouping.paragraphs = para_map.into_iter().map(|(_, s)| s).collect();
            Ok(TaskOutput::Layout(grouping))
        }
        Task::Table => Err(CodecError::TableDelegated),
    }
}

/// Parse a whitespace-separated stage-1 token dump back into ids: decimal
/// tokens are coordinate bins, bracketed names are tags or specials.
pub fn parse_stage1_text(
    text: &str,
    vocab: &TokenVocabulary,
) -> Result<Vec<TokenId>, CodecError> {
    let mut ids = Vec::new();
    for (position, word) in text.split_whitespace().enumerate() {
        let id = if let Ok(bin) = word.parse::<u32>() {
            vocab.coord_id(bin)
        } else if let Some(s) = Special::ALL.iter().find(|s| s.name() == word) {
            Some(vocab.special_id(*s))
        } else {
            vocab.tag_id(word)
        };
        match id {
            Some(id) => ids.push(id),
            None => {
                return Err(CodecError::TokenText {
                    position,
                    text: word.to_string(),
                })
            }
        }
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::TokenVocabulary;

    fn vocab() -> TokenVocabulary {
        let mut tags = layout_tags();
        tags.extend(entity_tags(["address", "total"]));
        TokenVocabulary::build(TokenVocabulary::printable_ascii(), tags, 1000).unwrap()
    }

    fn extent() -> ImageExtent {
        ImageExtent::new(1000, 1000).unwrap()
    }

    fn word_at(x: u32, y: u32, text: &str) -> InstanceRecord {
        let px = x as f64;
        let py = y as f64;
        InstanceRecord {
            center: QuantizedPoint::new(x, y),
            geometry: PolygonGeom::from_box(px - 5.0, py - 5.0, px + 5.0, py + 5.0),
            transcription: text.to_string(),
            entity: None,
            line_id: None,
            paragraph_id: None,
        }
    }

    fn names(v: &TokenVocabulary, ids: &[TokenId]) -> String {
        v.render(ids)
    }

    #[test]
    fn spotting_single_instance() {
        let v = vocab();
        let seq = encode_stage1(&[word_at(500, 250, "w")], Task::Spotting, &v).unwrap();
        assert_eq!(names(&v, &seq.tokens), "<S> 500 250 </S>");
        let dec = decode_stage1(&seq, &v);
        assert!(dec.diagnostics.is_empty());
        assert_eq!(dec.points.len(), 1);
        assert_eq!(dec.points[0].center, QuantizedPoint::new(500, 250));
    }

    #[test]
    fn spotting_raster_order() {
        let v = vocab();
        let seq = encode_stage1(
            &[word_at(10, 500, "b"), word_at(900, 10, "a"), word_at(20, 500, "c")],
            Task::Spotting,
            &v,
        )
        .unwrap();
        assert_eq!(names(&v, &seq.tokens), "<S> 900 10 10 500 20 500 </S>");
    }

    #[test]
    fn kie_entity_grammar() {
        let v = vocab();
        let insts = vec![
            word_at(10, 10, "12").with_entity("address"),
            word_at(20, 10, "Foo").with_entity("address"),
        ];
        let seq = encode_stage1(&insts, Task::Kie, &v).unwrap();
        assert_eq!(
            names(&v, &seq.tokens),
            "<S> <address> 10 10 20 10 </address> </S>"
        );
        let dec = decode_stage1(&seq, &v);
        assert!(dec.diagnostics.is_empty());
        assert_eq!(dec.points.len(), 2);
        for p in &dec.points {
            assert_eq!(p.entity.as_deref(), Some("address"));
            assert_eq!(p.entity_group, Some(0));
        }
    }

    #[test]
    fn kie_requires_entity_labels() {
        let v = vocab();
        let err = encode_stage1(&[word_at(1, 1, "x")], Task::Kie, &v).unwrap_err();
        assert!(matches!(err, CodecError::MissingLabel { what: "entity", .. }));
    }

    #[test]
    fn layout_line_paragraph_tags() {
        let v = vocab();
        let insts = vec![
            word_at(10, 10, "a").with_layout_ids(0, 0),
            word_at(30, 10, "b").with_layout_ids(0, 0),
            word_at(10, 40, "c").with_layout_ids(1, 0),
        ];
        let seq = encode_stage1(&insts, Task::Layout, &v).unwrap();
        assert_eq!(
            names(&v, &seq.tokens),
            "<S> <paragraph> <line> 10 10 30 10 <line> 10 40 </S>"
        );
        let dec = decode_stage1(&seq, &v);
        assert!(dec.diagnostics.is_empty());
        let labels: Vec<(Option<u32>, Option<u32>)> =
            dec.points.iter().map(|p| (p.line_id, p.paragraph_id)).collect();
        assert_eq!(labels, [(Some(0), Some(0)), (Some(0), Some(0)), (Some(1), Some(0))]);
    }

    #[test]
    fn decode_reports_dangling_x() {
        let v = vocab();
        let seq = StructuredPointsSequence {
            tokens: vec![
                v.special_id(Special::SeqStart),
                500,
                v.special_id(Special::SeqEnd),
            ],
            task: Task::Spotting,
        };
        let dec = decode_stage1(&seq, &v);
        assert!(dec.points.is_empty());
        assert_eq!(dec.diagnostics.len(), 1);
        assert_eq!(dec.diagnostics[0].to_string(), "dangling x at token 1");
    }

    #[test]
    fn decode_reports_missing_end() {
        let v = vocab();
        let seq = StructuredPointsSequence {
            tokens: vec![v.special_id(Special::SeqStart), 5, 6],
            task: Task::Spotting,
        };
        let dec = decode_stage1(&seq, &v);
        assert_eq!(dec.points.len(), 1);
        assert!(dec.diagnostics.iter().any(|d| d.message.contains("missing </S>")));
    }

    #[test]
    fn table_is_delegated() {
        let v = vocab();
        assert!(matches!(
            encode_stage1(&[], Task::Table, &v),
            Err(CodecError::TableDelegated)
        ));
    }

    #[test]
    fn stage2_box_example() {
        let v = vocab();
        let inst = InstanceRecord::from_geometry(
            PolygonGeom::from_box(0.0, 0.0, 99.0, 49.0),
            "A",
            extent(),
            1000,
        )
        .unwrap();
        assert_eq!(inst.center, QuantizedPoint::new(49, 24));
        let (seq, unk) = encode_stage2(&inst, &v, extent()).unwrap();
        assert_eq!(unk, 0);
        assert_eq!(seq.prompt_point, QuantizedPoint::new(49, 24));
        assert_eq!(seq.polygon_tokens.len(), 8);
        assert_eq!(
            seq.content_tokens,
            vec![v.char_id('A').unwrap(), v.special_id(Special::SeqEnd)]
        );
    }

    #[test]
    fn stage2_curved_has_32_polygon_tokens() {
        let v = vocab();
        let square: Vec<PointF> = vec![
            PointF::new(100.0, 100.0),
            PointF::new(200.0, 100.0),
            PointF::new(200.0, 200.0),
            PointF::new(100.0, 200.0),
        ];
        let poly = resample_polygon(&square, 16).unwrap();
        let inst = InstanceRecord::from_geometry(poly, "ab", extent(), 1000).unwrap();
        let (seq, _) = encode_stage2(&inst, &v, extent()).unwrap();
        assert_eq!(seq.polygon_tokens.len(), 32);
    }

    #[test]
    fn stage2_empty_transcription() {
        let v = vocab();
        let inst = InstanceRecord::from_geometry(
            PolygonGeom::from_box(0.0, 0.0, 10.0, 10.0),
            "",
            extent(),
            1000,
        )
        .unwrap();
        let (seq, _) = encode_stage2(&inst, &v, extent()).unwrap();
        assert_eq!(seq.content_tokens, vec![v.special_id(Special::SeqEnd)]);
    }

    #[test]
    fn stage2_unknown_chars_counted() {
        let v = vocab();
        let inst = InstanceRecord::from_geometry(
            PolygonGeom::from_box(0.0, 0.0, 10.0, 10.0),
            "a\u{00e9}b\u{00e9}",
            extent(),
            1000,
        )
        .unwrap();
        let (seq, unk) = encode_stage2(&inst, &v, extent()).unwrap();
        assert_eq!(unk, 2);
        assert_eq!(seq.content_tokens[1], v.special_id(Special::Unk));
    }

    #[test]
    fn stage2_round_trip() {
        let v = vocab();
        let inst = InstanceRecord::from_geometry(
            PolygonGeom::from_box(100.0, 200.0, 300.0, 260.0),
            "Hello, 42!",
            extent(),
            1000,
        )
        .unwrap();
        let (seq, _) = encode_stage2(&inst, &v, extent()).unwrap();
        let dec = decode_stage2(&seq, &v, extent());
        assert!(dec.diagnostics.is_empty());
        assert_eq!(dec.text, "Hello, 42!");
        assert_eq!(dec.kind, Some(PolyKind::Box4));
        let half_bin = 1000.0 / 1000.0 / 2.0;
        for (got, want) in dec.polygon.iter().zip(inst.geometry.vertices()) {
            assert!((got.x - want.x).abs() <= half_bin + 1e-9);
            assert!((got.y - want.y).abs() <= half_bin + 1e-9);
        }
    }

    #[test]
    fn resample_square_spacing() {
        let square = vec![
            PointF::new(0.0, 0.0),
            PointF::new(100.0, 0.0),
            PointF::new(100.0, 100.0),
            PointF::new(0.0, 100.0),
        ];
        let poly = resample_polygon(&square, 16).unwrap();
        let pts = poly.vertices();
        assert_eq!(pts.len(), 16);
        assert_eq!(pts[0], PointF::new(0.0, 0.0));
        // equal arc-length spacing: 400 / 16 = 25 between consecutive points
        for i in 0..16 {
            let a = pts[i];
            let b = pts[(i + 1) % 16];
            assert!((a.dist(&b) - 25.0).abs() < 1e-9, "gap {i}");
        }
    }

    #[test]
    fn resample_fixed_point() {
        let square = vec![
            PointF::new(0.0, 0.0),
            PointF::new(100.0, 0.0),
            PointF::new(100.0, 100.0),
            PointF::new(0.0, 100.0),
        ];
        let once = resample_polygon(&square, 16).unwrap();
        let twice = resample_polygon(once.vertices(), 16).unwrap();
        for (a, b) in once.vertices().iter().zip(twice.vertices()) {
            assert!(a.dist(b) < 1e-9);
        }
    }

    #[test]
    fn resample_rejects_degenerate() {
        let err = resample_polygon(&[PointF::new(0.0, 0.0), PointF::new(1.0, 1.0)], 16).unwrap_err();
        assert!(matches!(err, CodecError::Geometry(GeometryError::TooFewVertices(2))));
        let err = resample_polygon(
            &[PointF::new(5.0, 5.0), PointF::new(5.0, 5.0), PointF::new(5.0, 5.0)],
            16,
        )
        .unwrap_err();
        assert!(matches!(err, CodecError::Geometry(GeometryError::ZeroPerimeter)));
    }

    #[test]
    fn assemble_spotting_zip() {
        let v = vocab();
        let insts = vec![word_at(100, 100, "ab"), word_at(300, 100, "cd")];
        let seq = encode_stage1(&insts, Task::Spotting, &v).unwrap();
        let dec1 = decode_stage1(&seq, &v);
        let dec2: Vec<DecodedStage2> = insts
            .iter()
            .map(|i| decode_stage2(&encode_stage2(i, &v, extent()).unwrap().0, &v, extent()))
            .collect();
        match assemble_task_output(&dec1, &dec2, Task::Spotting).unwrap() {
            TaskOutput::Spotting(out) => {
                assert_eq!(out.len(), 2);
                assert_eq!(out[0].text, "ab");
                assert_eq!(out[1].text, "cd");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn assemble_count_mismatch() {
        let v = vocab();
        let seq = encode_stage1(&[word_at(1, 1, "a")], Task::Spotting, &v).unwrap();
        let dec1 = decode_stage1(&seq, &v);
        let err = assemble_task_output(&dec1, &[], Task::Spotting).unwrap_err();
        assert!(matches!(err, CodecError::Alignment { stage1: 1, stage2: 0 }));
    }

    #[test]
    fn assemble_kie_joins_group_values() {
        let v = vocab();
        let insts = vec![
            word_at(10, 10, "12").with_entity("total"),
            word_at(30, 10, ")").with_entity("total"),
        ];
        let seq = encode_stage1(&insts, Task::Kie, &v).unwrap();
        let dec1 = decode_stage1(&seq, &v);
        let dec2: Vec<DecodedStage2> = insts
            .iter()
            .map(|i| decode_stage2(&encode_stage2(i, &v, extent()).unwrap().0, &v, extent()))
            .collect();
        match assemble_task_output(&dec1, &dec2, Task::Kie).unwrap() {
            TaskOutput::Kie(fields) => {
                assert_eq!(fields, vec![("total".to_string(), "12)".to_string())]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn assemble_layout_grouping_sets() {
        let v = vocab();
        let insts = vec![
            word_at(10, 10, "a").with_layout_ids(0, 0),
            word_at(30, 10, "b").with_layout_ids(0, 0),
            word_at(10, 40, "c").with_layout_ids(1, 0),
        ];
        let seq = encode_stage1(&insts, Task::Layout, &v).unwrap();
        let dec1 = decode_stage1(&seq, &v);
        let dec2: Vec<DecodedStage2> = insts
            .iter()
            .map(|i| decode_stage2(&encode_stage2(i, &v, extent()).unwrap().0, &v, extent()))
            .collect();
        match assemble_task_output(&dec1, &dec2, Task::Layout).unwrap() {
            TaskOutput::Layout(g) => {
                assert_eq!(g.words, vec![vec![0], vec![1], vec![2]]);
                assert_eq!(g.lines, vec![vec![0, 1], vec![2]]);
                assert_eq!(g.paragraphs, vec![vec![0, 1, 2]]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stage1_text_round_trip() {
        let v = vocab();
        let insts = vec![
            word_at(10, 10, "a").with_entity("address"),
            word_at(20, 10, "b").with_entity("address"),
        ];
        let seq = encode_stage1(&insts, Task::Kie, &v).unwrap();
        let text = v.render(&seq.tokens);
        let ids = parse_stage1_text(&text, &v).unwrap();
        assert_eq!(ids, seq.tokens);
    }
}
