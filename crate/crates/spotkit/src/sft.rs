//! SPOT-style SFT conversation records (N-SPOT, S-SPOT, L-SPOT) and the
//! parser that turns a two-turn dialogue back into spotting results.
//!
//! Template text is configuration, not code: instruction wording lives in an
//! editable template file with placeholder slots, while response payloads
//! use a fixed machine-parseable line grammar. Coordinates render as decimal
//! integers in bin space: points as `(x,y)`, boxes as `(x1,y1),(x2,y2)`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::ParseDiagnostic;
use crate::corpus::SceneSpec;
use crate::geometry::{quantize, GeometryError, ImageExtent, QuantizedPoint};

/// Conversation length variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpotVariant {
    /// Two turns: points, then per-point coordinates and content.
    NSpot,
    /// One turn asking directly for locations and texts.
    SSpot,
    /// N-SPOT plus separate detection-only and recognition-only turns.
    LSpot,
}

impl std::fmt::Display for SpotVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SpotVariant::NSpot => "N-SPOT",
            SpotVariant::SSpot => "S-SPOT",
            SpotVariant::LSpot => "L-SPOT",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for SpotVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "N-SPOT" | "N" | "NSPOT" => Ok(SpotVariant::NSpot),
            "S-SPOT" | "S" | "SSPOT" => Ok(SpotVariant::SSpot),
            "L-SPOT" | "L" | "LSPOT" => Ok(SpotVariant::LSpot),
            other => Err(format!("unknown SPOT variant {other:?}")),
        }
    }
}

/// Conversation role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Instruction,
    Response,
}

/// One conversation turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub from: Role,
    pub value: String,
}

/// A full SFT record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationRecord {
    pub id: u64,
    pub image: String,
    pub variant: SpotVariant,
    pub conversations: Vec<Turn>,
}

impl ConversationRecord {
    /// Number of instruction/response pairs.
    pub fn pair_count(&self) -> usize {
        self.conversations
            .iter()
            .filter(|t| t.from == Role::Instruction)
            .count()
    }

    /// Response texts in turn order.
    pub fn responses(&self) -> Vec<&str> {
        self.conversations
            .iter()
            .filter(|t| t.from == Role::Response)
            .map(|t| t.value.as_str())
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum SftError {
    #[error("template is missing the {0:?} slot")]
    MissingTemplate(String),
    #[error("template file parse error: {0}")]
    TemplateFile(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Instruction templates keyed by slot name. The `{n_bins_max}` placeholder
/// expands to `n_bins - 1`.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: HashMap<String, String>,
}

/// Template slots a full set must provide.
pub const TEMPLATE_SLOTS: [&str; 5] = [
    "points_instruction",
    "detail_instruction",
    "direct_instruction",
    "detection_instruction",
    "recognition_instruction",
];

/// Default instruction wording, shipped alongside the crate.
pub const DEFAULT_TEMPLATES: &str = include_str!("sft_templates.toml");

impl TemplateSet {
    /// Parse a template file: TOML-style `slot = "text"` lines.
    pub fn from_toml(text: &str) -> Result<Self, SftError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| SftError::TemplateFile(e.to_string()))?;
        let mut templates = HashMap::new();
        for (k, v) in table {
            let s = v
                .as_str()
                .ok_or_else(|| SftError::TemplateFile(format!("slot {k:?} is not a string")))?;
            templates.insert(k, s.to_string());
        }
        for slot in TEMPLATE_SLOTS {
            if !templates.contains_key(slot) {
                return Err(SftError::MissingTemplate(slot.to_string()));
            }
        }
        Ok(Self { templates })
    }

    pub fn default_set() -> Self {
        Self::from_toml(DEFAULT_TEMPLATES).expect("bundled templates are valid")
    }

    fn render(&self, slot: &str, n_bins: u32) -> String {
        self.templates
            .get(slot)
            .expect("slots validated at construction")
            .replace("{n_bins_max}", &(n_bins - 1).to_string())
    }
}

/// The sentinel response for scenes with no text.
pub const NO_TEXT_RESPONSE: &str = "no text";

fn point_str(q: QuantizedPoint) -> String {
    format!("({},{})", q.x_bin, q.y_bin)
}

fn quantized_box(
    inst: &crate::codec::InstanceRecord,
    extent: ImageExtent,
    n_bins: u32,
) -> Result<(QuantizedPoint, QuantizedPoint), GeometryError> {
    let verts = inst.geometry.vertices();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for v in verts {
        x0 = x0.min(v.x);
        y0 = y0.min(v.y);
        x1 = x1.max(v.x);
        y1 = y1.max(v.y);
    }
    Ok((
        quantize(crate::geometry::PointF::new(x0, y0), extent, n_bins)?,
        quantize(crate::geometry::PointF::new(x1, y1), extent, n_bins)?,
    ))
}

/// Build one conversation record from a fully labeled scene.
///
/// N-SPOT asks for the structured points sequence, then for each point's box
/// and text. S-SPOT asks directly for locations and texts. L-SPOT extends
/// N-SPOT with detection-only and recognition-only turns. Coordinates are
/// rendered in the 0..n_bins-1 convention with reading order preserved.
pub fn build_record(
    annotation: &SceneSpec,
    variant: SpotVariant,
    templates: &TemplateSet,
    n_bins: u32,
    id: u64,
    image: impl Into<String>,
) -> Result<ConversationRecord, SftError> {
    let ordered = crate::codec::raster_order(&annotation.instances);
    let empty = ordered.is_empty();

    let points_line = if empty {
        NO_TEXT_RESPONSE.to_string()
    } else {
        ordered
            .iter()
            .map(|i| point_str(i.center))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut detail_lines = Vec::with_capacity(ordered.len());
    let mut det_lines = Vec::with_capacity(ordered.len());
    let mut rec_lines = Vec::with_capacity(ordered.len());
    for inst in &ordered {
        let (tl, br) = quantized_box(inst, annotation.extent, n_bins)?;
        let box_str = format!("{},{}", point_str(tl), point_str(br));
        detail_lines.push(format!(
            "{}: {}: {}",
            point_str(inst.center),
            box_str,
            inst.transcription
        ));
        det_lines.push(format!("{}: {}", point_str(inst.center), box_str));
        rec_lines.push(format!("{}: {}", point_str(inst.center), inst.transcription));
    }
    let detail = if empty { NO_TEXT_RESPONSE.to_string() } else { detail_lines.join("\n") };
    let detect = if empty { NO_TEXT_RESPONSE.to_string() } else { det_lines.join("\n") };
    let recog = if empty { NO_TEXT_RESPONSE.to_string() } else { rec_lines.join("\n") };

    let mut conversations = Vec::new();
    let mut push_pair = |instruction: String, response: String| {
        conversations.push(Turn {
            from: Role::Instruction,
            value: instruction,
        });
        conversations.push(Turn {
            from: Role::Response,
            value: response,
        });
    };

    match variant {
        SpotVariant::NSpot => {
            push_pair(templates.render("points_instruction", n_bins), points_line);
            push_pair(templates.render("detail_instruction", n_bins), detail);
        }
        SpotVariant::SSpot => {
            push_pair(templates.render("direct_instruction", n_bins), detail);
        }
        SpotVariant::LSpot => {
            push_pair(templates.render("points_instruction", n_bins), points_line);
            push_pair(templates.render("detail_instruction", n_bins), detail);
            push_pair(templates.render("detection_instruction", n_bins), detect);
            push_pair(templates.render("recognition_instruction", n_bins), recog);
        }
    }

    Ok(ConversationRecord {
        id,
        image: image.into(),
        variant,
        conversations,
    })
}

/// One parsed dialogue entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotDialogueEntry {
    pub point: QuantizedPoint,
    /// Box corners in bin space: top-left, bottom-right.
    pub box_bins: (QuantizedPoint, QuantizedPoint),
    pub transcription: String,
}

/// Parsed result of a SPOT dialogue.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpotDialogueResult {
    pub entries: Vec<SpotDialogueEntry>,
    pub diagnostics: Vec<ParseDiagnostic>,
}

fn parse_point(s: &str) -> Option<(QuantizedPoint, &str)> {
    let rest = s.trim_start().strip_prefix('(')?;
    let (body, rest) = rest.split_once(')')?;
    let (x, y) = body.split_once(',')?;
    Some((
        QuantizedPoint::new(x.trim().parse().ok()?, y.trim().parse().ok()?),
        rest,
    ))
}

/// Parse the detail line grammar `(x,y): (x1,y1),(x2,y2): text`.
fn parse_detail_line(line: &str) -> Option<SpotDialogueEntry> {
    let (point, rest) = parse_point(line)?;
    let rest = rest.trim_start().strip_prefix(':')?;
    let (tl, rest) = parse_point(rest)?;
    let rest = rest.trim_start().strip_prefix(',')?;
    let (br, rest) = parse_point(rest)?;
    let text = rest.trim_start().strip_prefix(':')?;
    let text = text.strip_prefix(' ').unwrap_or(text);
    Some(SpotDialogueEntry {
        point,
        box_bins: (tl, br),
        transcription: text.to_string(),
    })
}

/// Parse a dialogue's responses back into spotting results.
///
/// The full-detail response (turn 2 for N/L-SPOT, turn 1 for S-SPOT) carries
/// every field; malformed lines are skipped with diagnostics, and a count
/// mismatch against the points turn is reported.
pub fn parse_dialogue(responses: &[&str], variant: SpotVariant) -> SpotDialogueResult {
    let mut out = SpotDialogueResult::default();
    let detail_idx = match variant {
        SpotVariant::SSpot => 0,
        SpotVariant::NSpot | SpotVariant::LSpot => 1,
    };
    let Some(detail) = responses.get(detail_idx) else {
        out.diagnostics.push(ParseDiagnostic {
            position: detail_idx,
            message: format!("{variant} dialogue is missing response {detail_idx}"),
        });
        return out;
    };
    if detail.trim() == NO_TEXT_RESPONSE || detail.trim().is_empty() {
        return out;
    }
    for (lineno, line) in detail.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_detail_line(line) {
            Some(entry) => out.entries.push(entry),
            None => out.diagnostics.push(ParseDiagnostic {
                position: lineno,
                message: format!("malformed detail line {line:?} skipped"),
            }),
        }
    }
    if variant != SpotVariant::SSpot {
        if let Some(points_turn) = responses.first() {
            let expected = if points_turn.trim() == NO_TEXT_RESPONSE {
                0
            } else {
                points_turn.split_whitespace().count()
            };
            if expected != out.entries.len() {
                out.diagnostics.push(ParseDiagnostic {
                    position: 0,
                    message: format!(
                        "points turn lists {expected} points but detail turn parsed {} entries",
                        out.entries.len()
                    ),
                });
            }
        }
    }
    out
}

/// Serialize records as the conversation JSONL format.
pub fn records_to_jsonl(records: &[ConversationRecord]) -> Result<String, serde_json::Error> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Minimal external OCR annotation: one image with word boxes and texts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExternalOcrRecord {
    pub image: String,
    pub extent: ImageExtent,
    pub words: Vec<ExternalOcrWord>,
}

/// One externally annotated word: pixel box corners plus transcription.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExternalOcrWord {
    /// `[x0, y0, x1, y1]` in pixels.
    pub bbox: [f64; 4],
    pub text: String,
}

/// Import an external OCR-annotation JSONL line set into scenes usable by
/// [`build_record`].
pub fn import_external_ocr(
    jsonl: &str,
    n_bins: u32,
) -> Result<Vec<(String, SceneSpec)>, SftError> {
    let mut out = Vec::new();
    for line in jsonl.lines().filter(|l| !l.trim().is_empty()) {
        let rec: ExternalOcrRecord = serde_json::from_str(line)
            .map_err(|e| SftError::TemplateFile(format!("external OCR record: {e}")))?;
        let mut instances = Vec::with_capacity(rec.words.len());
        for w in &rec.words {
            let geom = crate::geometry::PolygonGeom::from_box(w.bbox[0], w.bbox[1], w.bbox[2], w.bbox[3]);
            instances.push(crate::codec::InstanceRecord::from_geometry(
                geom,
                w.text.clone(),
                rec.extent,
                n_bins,
            )?);
        }
        out.push((
            rec.image.clone(),
            SceneSpec {
                extent: rec.extent,
                instances,
            },
        ));
    }
    Ok(out)
}
