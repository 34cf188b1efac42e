//! Table HTML tokenization with merged structural tokens and inserted cell
//! center points, plus HTML reconstruction from structure and recognized
//! cell contents.
//!
//! Non-spanning cells use merged single tokens `<td></td>` (empty) and
//! `<td>[]</td>` (non-empty). A cell spanning rows or columns is broken into
//! four tokens: `<td`, `rowspan="n"` and/or `colspan="n"`, `>`, `</td>`.
//! Every non-empty cell token is followed by its two center-coordinate
//! tokens; empty cells carry no points.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{ParseDiagnostic, PolyContentSequence};
use crate::geometry::{quantize, GeometryError, ImageExtent, PointF, QuantizedPoint};
use crate::html::{self, HtmlToken};
use crate::vocab::{Special, Token, TokenId, TokenVocabulary};

pub const TR_OPEN: &str = "<tr>";
pub const TR_CLOSE: &str = "</tr>";
/// Merged token for a non-spanning empty cell.
pub const TD_EMPTY: &str = "<td></td>";
/// Merged token for a non-spanning non-empty cell; `[]` is the content slot.
pub const TD_NONEMPTY: &str = "<td>[]</td>";
/// First token of the four-token spanning-cell form.
pub const TD_SPAN_OPEN: &str = "<td";
/// Third token of the four-token form.
pub const TD_SPAN_BRACKET: &str = ">";
/// Fourth token of the four-token form.
pub const TD_SPAN_CLOSE: &str = "</td>";

#[derive(Debug, Error)]
pub enum TableError {
    #[error("cell at ({row}, {col}) overlaps another cell")]
    Overlap { row: u32, col: u32 },
    #[error("grid position ({row}, {col}) is not covered by any cell")]
    Hole { row: u32, col: u32 },
    #[error("cell at ({row}, {col}) extends outside the {rows}x{cols} grid")]
    OutOfGrid { row: u32, col: u32, rows: u32, cols: u32 },
    #[error("non-empty cell at ({row}, {col}) has no content center")]
    MissingCenter { row: u32, col: u32 },
    #[error("span {0} exceeds the registered span token range")]
    SpanTooLarge(u32),
    #[error("table must have at least one row and one column")]
    EmptyGrid,
    #[error("content count mismatch: stream has {expected} non-empty cells, got {got} contents")]
    ContentCount { expected: usize, got: usize },
    #[error("html parse error: {0}")]
    Html(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One table cell anchored at its top-left grid position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub row: u32,
    pub col: u32,
    pub rowspan: u32,
    pub colspan: u32,
    pub content: String,
    /// Center of the cell's content box in pixels; empty cells have none.
    pub content_center: Option<PointF>,
}

/// Logical table structure (grid with spans) plus per-cell content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDocument {
    pub n_rows: u32,
    pub n_cols: u32,
    /// Cells in reading order: sorted by anchor `(row, col)`.
    pub cells: Vec<TableCell>,
}

impl TableDocument {
    /// Check the cells tile the grid exactly: in bounds, no overlap, no hole.
    pub fn validate_tiling(&self) -> Result<(), TableError> {
        if self.n_rows == 0 || self.n_cols == 0 {
            return Err(TableError::EmptyGrid);
        }
        let (rows, cols) = (self.n_rows as usize, self.n_cols as usize);
        let mut covered = vec![false; rows * cols];
        for cell in &self.cells {
            if cell.row + cell.rowspan > self.n_rows || cell.col + cell.colspan > self.n_cols {
                return Err(TableError::OutOfGrid {
                    row: cell.row,
                    col: cell.col,
                    rows: self.n_rows,
                    cols: self.n_cols,
                });
            }
            for r in cell.row..cell.row + cell.rowspan {
                for c in cell.col..cell.col + cell.colspan {
                    let slot = &mut covered[r as usize * cols + c as usize];
                    if *slot {
                        return Err(TableError::Overlap {
                            row: cell.row,
                            col: cell.col,
                        });
                    }
                    *slot = true;
                }
            }
        }
        for r in 0..rows {
            for c in 0..cols {
                if !covered[r * cols + c] {
                    return Err(TableError::Hole {
                        row: r as u32,
                        col: c as u32,
                    });
                }
            }
        }
        Ok(())
    }

    /// Cells sorted into stream reading order (anchor row, then column).
    pub fn cells_in_order(&self) -> Vec<&TableCell> {
        let mut cells: Vec<&TableCell> = self.cells.iter().collect();
        cells.sort_by_key(|c| (c.row, c.col));
        cells
    }

    /// Canonical HTML: lowercase tags, no inter-tag whitespace, rowspan
    /// before colspan, contents entity-escaped.
    pub fn to_canonical_html(&self) -> String {
        let mut out = String::from("<table>");
        let cells = self.cells_in_order();
        for r in 0..self.n_rows {
            out.push_str("<tr>");
            for cell in cells.iter().filter(|c| c.row == r) {
                out.push_str("<td");
                if cell.rowspan > 1 {
                    out.push_str(&format!(" rowspan=\"{}\"", cell.rowspan));
                }
                if cell.colspan > 1 {
                    out.push_str(&format!(" colspan=\"{}\"", cell.colspan));
                }
                out.push('>');
                out.push_str(&html::escape_text(&cell.content));
                out.push_str("</td>");
            }
            out.push_str("</tr>");
        }
        out.push_str("</table>");
        out
    }
}

/// Structural tags required by the table grammar for spans up to `max_span`.
pub fn table_tags(max_span: u32) -> Vec<String> {
    let mut tags = vec![
        TR_OPEN.to_string(),
        TR_CLOSE.to_string(),
        TD_EMPTY.to_string(),
        TD_NONEMPTY.to_string(),
        TD_SPAN_OPEN.to_string(),
        TD_SPAN_BRACKET.to_string(),
        TD_SPAN_CLOSE.to_string(),
    ];
    for n in 2..=max_span {
        tags.push(format!("rowspan=\"{n}\""));
    }
    for n in 2..=max_span {
        tags.push(format!("colspan=\"{n}\""));
    }
    tags
}

/// The paper's merged structural-token stream for one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableTokenStream {
    pub tokens: Vec<TokenId>,
}

fn span_tag(vocab: &TokenVocabulary, kind: &str, n: u32) -> Result<TokenId, TableError> {
    vocab
        .tag_id(&format!("{kind}=\"{n}\""))
        .ok_or(TableError::SpanTooLarge(n))
}

fn require_tag(vocab: &TokenVocabulary, tag: &str) -> TokenId {
    vocab
        .tag_id(tag)
        .unwrap_or_else(|| panic!("vocabulary is missing the table tag {tag:?}"))
}

/// Encode a table into the merged token stream with inserted center points.
pub fn encode_table_structure(
    doc: &TableDocument,
    extent: ImageExtent,
    vocab: &TokenVocabulary,
) -> Result<TableTokenStream, TableError> {
    doc.validate_tiling()?;
    let n_bins = vocab.n_bins();
    let mut tokens = vec![vocab.special_id(Special::SeqStart)];
    let cells = doc.cells_in_order();
    for r in 0..doc.n_rows {
        tokens.push(require_tag(vocab, TR_OPEN));
        for cell in cells.iter().filter(|c| c.row == r) {
            let spanning = cell.rowspan > 1 || cell.colspan > 1;
            let non_empty = !cell.content.is_empty();
            let center = if non_empty {
                let center_px = cell.content_center.ok_or(TableError::MissingCenter {
                    row: cell.row,
                    col: cell.col,
                })?;
                Some(quantize(center_px, extent, n_bins)?)
            } else {
                None
            };
            if spanning {
                tokens.push(require_tag(vocab, TD_SPAN_OPEN));
                if cell.rowspan > 1 {
                    tokens.push(span_tag(vocab, "rowspan", cell.rowspan)?);
                }
                if cell.colspan > 1 {
                    tokens.push(span_tag(vocab, "colspan", cell.colspan)?);
                }
                tokens.push(require_tag(vocab, TD_SPAN_BRACKET));
                if let Some(q) = center {
                    tokens.push(q.x_bin);
                    tokens.push(q.y_bin);
                }
                tokens.push(require_tag(vocab, TD_SPAN_CLOSE));
            } else if let Some(q) = center {
                tokens.push(require_tag(vocab, TD_NONEMPTY));
                tokens.push(q.x_bin);
                tokens.push(q.y_bin);
            } else {
                tokens.push(require_tag(vocab, TD_EMPTY));
            }
        }
        tokens.push(require_tag(vocab, TR_CLOSE));
    }
    tokens.push(vocab.special_id(Special::SeqEnd));
    Ok(TableTokenStream { tokens })
}

/// One decoded cell: structure plus center bin, contents blank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedTableCell {
    pub row: u32,
    pub col: u32,
    pub rowspan: u32,
    pub colspan: u32,
    pub empty: bool,
    pub center_bin: Option<QuantizedPoint>,
}

/// Best-effort decode of a table token stream.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecodedTable {
    pub n_rows: u32,
    pub n_cols: u32,
    pub cells: Vec<DecodedTableCell>,
    pub diagnostics: Vec<ParseDiagnostic>,
}

impl DecodedTable {
    /// Compare against a ground-truth document under the given quantization.
    pub fn matches(&self, doc: &TableDocument, extent: ImageExtent, n_bins: u32) -> bool {
        if self.n_rows != doc.n_rows || self.n_cols != doc.n_cols {
            return false;
        }
        let gt = doc.cells_in_order();
        if gt.len() != self.cells.len() {
            return false;
        }
        gt.iter().zip(&self.cells).all(|(g, d)| {
            let gt_center = g
                .content_center
                .filter(|_| !g.content.is_empty())
                .and_then(|c| quantize(c, extent, n_bins).ok());
            g.row == d.row
                && g.col == d.col
                && g.rowspan == d.rowspan
                && g.colspan == d.colspan
                && g.content.is_empty() == d.empty
                && gt_center == d.center_bin
        })
    }
}

enum CellEvent {
    Plain { empty: bool, center: Option<QuantizedPoint> },
    Span {
        rowspan: u32,
        colspan: u32,
        center: Option<QuantizedPoint>,
    },
}

struct StreamCursor<'a> {
    ids: &'a [TokenId],
    pos: usize,
}

impl<'a> StreamCursor<'a> {
    fn peek(&self) -> Option<TokenId> {
        self.ids.get(self.pos).copied()
    }
}

fn parse_span_value(tag: &str, kind: &str) -> Option<u32> {
    tag.strip_prefix(kind)?
        .strip_prefix("=\"")?
        .strip_suffix('"')?
        .parse()
        .ok()
}

fn read_center(
    cursor: &mut StreamCursor<'_>,
    vocab: &TokenVocabulary,
    diagnostics: &mut Vec<ParseDiagnostic>,
) -> Option<QuantizedPoint> {
    let x = cursor.peek().filter(|&id| vocab.is_coord(id))?;
    let x_pos = cursor.pos;
    cursor.pos += 1;
    match cursor.peek().filter(|&id| vocab.is_coord(id)) {
        Some(y) => {
            cursor.pos += 1;
            Some(QuantizedPoint::new(x, y))
        }
        None => {
            diagnostics.push(ParseDiagnostic {
                position: x_pos,
                message: "dangling x".into(),
            });
            None
        }
    }
}

/// Decode a merged token stream back into grid structure, span layout, and
/// per-cell center bins. Contents are blank by construction.
pub fn decode_table_structure(stream: &TableTokenStream, vocab: &TokenVocabulary) -> DecodedTable {
    let mut out = DecodedTable::default();
    let ids = &stream.tokens;
    let seq_start = vocab.special_id(Special::SeqStart);
    let seq_end = vocab.special_id(Special::SeqEnd);
    let mut cursor = StreamCursor { ids, pos: 0 };

    if cursor.peek() == Some(seq_start) {
        cursor.pos += 1;
    } else {
        out.diagnostics.push(ParseDiagnostic {
            position: 0,
            message: "missing <S>".into(),
        });
    }

    // occupancy[r][c] marks grid positions claimed by spans from earlier rows
    let mut occupancy: Vec<Vec<bool>> = Vec::new();
    let mut row: Option<u32> = None;
    let mut next_row = 0u32;
    let mut closed = false;

    let tag_of = |id: TokenId| -> Option<String> {
        match vocab.token_of(id) {
            Ok(Token::Tag(t)) => Some(t),
            _ => None,
        }
    };

    while let Some(id) = cursor.peek() {
        let pos = cursor.pos;
        if id == seq_end {
            closed = true;
            if pos + 1 < ids.len() {
                out.diagnostics.push(ParseDiagnostic {
                    position: pos + 1,
                    message: "trailing tokens after </S> dropped".into(),
                });
            }
            if row.is_some() {
                out.diagnostics.push(ParseDiagnostic {
                    position: pos,
                    message: "missing </tr> before </S>".into(),
                });
            }
            break;
        }
        cursor.pos += 1;
        let Some(tag) = tag_of(id) else {
            out.diagnostics.push(ParseDiagnostic {
                position: pos,
                message: format!("unexpected token id {id} in table stream"),
            });
            continue;
        };
        match tag.as_str() {
            TR_OPEN => {
                if row.is_some() {
                    out.diagnostics.push(ParseDiagnostic {
                        position: pos,
                        message: "nested <tr>".into(),
                    });
                }
                row = Some(next_row);
                next_row += 1;
                // spans from earlier rows may already have claimed this row
                if occupancy.len() < next_row as usize {
                    occupancy.resize(next_row as usize, Vec::new());
                }
            }
            TR_CLOSE => {
                if row.take().is_none() {
                    out.diagnostics.push(ParseDiagnostic {
                        position: pos,
                        message: "</tr> without open row".into(),
                    });
                }
            }
            TD_EMPTY | TD_NONEMPTY | TD_SPAN_OPEN => {
                let Some(r) = row else {
                    out.diagnostics.push(ParseDiagnostic {
                        position: pos,
                        message: format!("cell token {tag:?} outside a row"),
                    });
                    continue;
                };
                let event = if tag == TD_SPAN_OPEN {
                    let mut rowspan = 1u32;
                    let mut colspan = 1u32;
                    if let Some(next) = cursor.peek().and_then(tag_of) {
                        if let Some(n) = parse_span_value(&next, "rowspan") {
                            rowspan = n;
                            cursor.pos += 1;
                        }
                    }
                    if let Some(next) = cursor.peek().and_then(tag_of) {
                        if let Some(n) = parse_span_value(&next, "colspan") {
                            colspan = n;
                            cursor.pos += 1;
                        }
                    }
                    if cursor.peek().and_then(tag_of).as_deref() == Some(TD_SPAN_BRACKET) {
                        cursor.pos += 1;
                    } else {
                        out.diagnostics.push(ParseDiagnostic {
                            position: cursor.pos.min(ids.len() - 1),
                            message: "spanning cell missing `>` token".into(),
                        });
                    }
                    let center = read_center(&mut cursor, vocab, &mut out.diagnostics);
                    if cursor.peek().and_then(tag_of).as_deref() == Some(TD_SPAN_CLOSE) {
                        cursor.pos += 1;
                    } else {
                        out.diagnostics.push(ParseDiagnostic {
                            position: cursor.pos.min(ids.len() - 1),
                            message: "spanning cell missing </td> token".into(),
                        });
                    }
                    CellEvent::Span {
                        rowspan: rowspan.max(1),
                        colspan: colspan.max(1),
                        center,
                    }
                } else {
                    let center = if tag == TD_NONEMPTY {
                        let c = read_center(&mut cursor, vocab, &mut out.diagnostics);
                        if c.is_none() {
                            out.diagnostics.push(ParseDiagnostic {
                                position: pos,
                                message: "non-empty cell missing center point tokens".into(),
                            });
                        }
                        c
                    } else {
                        None
                    };
                    CellEvent::Plain {
                        empty: tag == TD_EMPTY,
                        center,
                    }
                };
                let (rowspan, colspan, empty, center) = match event {
                    CellEvent::Plain { empty, center } => (1, 1, empty, center),
                    CellEvent::Span {
                        rowspan,
                        colspan,
                        center,
                    } => (rowspan, colspan, center.is_none(), center),
                };
                // anchor column: first free slot in this row
                let r_us = r as usize;
                let mut col = 0u32;
                loop {
                    let c_us = col as usize;
                    if occupancy[r_us].len() <= c_us {
                        occupancy[r_us].resize(c_us + 1, false);
                    }
                    if !occupancy[r_us][c_us] {
                        break;
                    }
                    col += 1;
                }
                for rr in r..r + rowspan {
                    let rr_us = rr as usize;
                    if occupancy.len() <= rr_us {
                        occupancy.resize(rr_us + 1, Vec::new());
                    }
                    for cc in col..col + colspan {
                        let cc_us = cc as usize;
                        if occupancy[rr_us].len() <= cc_us {
                            occupancy[rr_us].resize(cc_us + 1, false);
                        }
                        if occupancy[rr_us][cc_us] {
                            out.diagnostics.push(ParseDiagnostic {
                                position: pos,
                                message: format!("cell at ({rr}, {cc}) overlaps another cell"),
                            });
                        }
                        occupancy[rr_us][cc_us] = true;
                    }
                }
                out.cells.push(DecodedTableCell {
                    row: r,
                    col,
                    rowspan,
                    colspan,
                    empty,
                    center_bin: center,
                });
            }
            other => out.diagnostics.push(ParseDiagnostic {
                position: pos,
                message: format!("unexpected tag {other:?} in table stream"),
            }),
        }
    }

    if !closed {
        out.diagnostics.push(ParseDiagnostic {
            position: ids.len().saturating_sub(1),
            message: "missing </S>".into(),
        });
    }
    out.n_rows = next_row;
    out.n_cols = occupancy.iter().map(|r| r.len()).max().unwrap_or(0) as u32;
    for (r, cols) in occupancy.iter().enumerate() {
        let width = cols.iter().filter(|&&v| v).count();
        if width != out.n_cols as usize || cols.iter().any(|&v| !v) {
            out.diagnostics.push(ParseDiagnostic {
                position: 0,
                message: format!("row {r} covers {width} of {} columns", out.n_cols),
            });
        }
    }
    out
}

/// Build the per-cell stage-2 recognition ground truth: one content-only
/// sequence per non-empty cell, prompt = center bins, in stream order.
pub fn build_cell_stage2_gt(
    doc: &TableDocument,
    vocab: &TokenVocabulary,
    extent: ImageExtent,
) -> Result<Vec<PolyContentSequence>, TableError> {
    let n_bins = vocab.n_bins();
    let mut out = Vec::new();
    for cell in doc.cells_in_order() {
        if cell.content.is_empty() {
            continue;
        }
        let center_px = cell.content_center.ok_or(TableError::MissingCenter {
            row: cell.row,
            col: cell.col,
        })?;
        let prompt = quantize(center_px, extent, n_bins)?;
        let mut content_tokens: Vec<TokenId> = cell
            .content
            .chars()
            .map(|c| vocab.char_id_or_unk(c))
            .collect();
        content_tokens.push(vocab.special_id(Special::SeqEnd));
        out.push(PolyContentSequence {
            prompt_point: prompt,
            polygon_tokens: Vec::new(),
            content_tokens,
        });
    }
    Ok(out)
}

/// Number of non-empty cell slots in a token stream (the number of contents
/// [`reconstruct_html`] expects).
pub fn count_nonempty_cells(stream: &TableTokenStream, vocab: &TokenVocabulary) -> usize {
    let decoded = decode_table_structure(stream, vocab);
    decoded.cells.iter().filter(|c| !c.empty).count()
}

/// Reconstruct complete canonical HTML from a structure stream and the
/// recognized cell contents (one string per non-empty cell, stream order).
pub fn reconstruct_html(
    stream: &TableTokenStream,
    cell_contents: &[String],
    vocab: &TokenVocabulary,
) -> Result<String, TableError> {
    let decoded = decode_table_structure(stream, vocab);
    let expected = decoded.cells.iter().filter(|c| !c.empty).count();
    if expected != cell_contents.len() {
        return Err(TableError::ContentCount {
            expected,
            got: cell_contents.len(),
        });
    }
    let mut out = String::from("<table>");
    let mut contents = cell_contents.iter();
    for r in 0..decoded.n_rows {
        out.push_str("<tr>");
        for cell in decoded.cells.iter().filter(|c| c.row == r) {
            out.push_str("<td");
            if cell.rowspan > 1 {
                out.push_str(&format!(" rowspan=\"{}\"", cell.rowspan));
            }
            if cell.colspan > 1 {
                out.push_str(&format!(" colspan=\"{}\"", cell.colspan));
            }
            out.push('>');
            if !cell.empty {
                let content = contents.next().expect("count checked above");
                out.push_str(&html::escape_text(content));
            }
            out.push_str("</td>");
        }
        out.push_str("</tr>");
    }
    out.push_str("</table>");
    Ok(out)
}

/// Parse canonical table HTML back into a [`TableDocument`] (content centers
/// absent; this is the logical structure only).
pub fn parse_table_html(html_text: &str) -> Result<TableDocument, TableError> {
    let tokens = html::scan(html_text).map_err(|e| TableError::Html(e.to_string()))?;
    let mut cells: Vec<TableCell> = Vec::new();
    let mut occupancy: Vec<Vec<bool>> = Vec::new();
    let mut row: i64 = -1;
    let mut in_td = false;
    let mut current: Option<TableCell> = None;
    for tok in tokens {
        match tok {
            HtmlToken::Open { name, attrs } => match name.as_str() {
                "table" => {}
                "tr" => {
                    row += 1;
                    occupancy.push(Vec::new());
                }
                "td" => {
                    if row < 0 {
                        return Err(TableError::Html("<td> outside <tr>".into()));
                    }
                    let mut rowspan = 1u32;
                    let mut colspan = 1u32;
                    for (k, v) in attrs {
                        let n: u32 = v
                            .parse()
                            .map_err(|_| TableError::Html(format!("bad span value {v:?}")))?;
                        match k.as_str() {
                            "rowspan" => rowspan = n.max(1),
                            "colspan" => colspan = n.max(1),
                            other => {
                                return Err(TableError::Html(format!("unknown attribute {other:?}")))
                            }
                        }
                    }
                    let r = row as usize;
                    let mut col = 0usize;
                    while occupancy[r].get(col).copied().unwrap_or(false) {
                        col += 1;
                    }
                    for rr in r..r + rowspan as usize {
                        if occupancy.len() <= rr {
                            occupancy.resize(rr + 1, Vec::new());
                        }
                        for cc in col..col + colspan as usize {
                            if occupancy[rr].len() <= cc {
                                occupancy[rr].resize(cc + 1, false);
                            }
                            occupancy[rr][cc] = true;
                        }
                    }
                    current = Some(TableCell {
                        row: row as u32,
                        col: col as u32,
                        rowspan,
                        colspan,
                        content: String::new(),
                        content_center: None,
                    });
                    in_td = true;
                }
                other => return Err(TableError::Html(format!("unexpected tag <{other}>"))),
            },
            HtmlToken::Close(name) => match name.as_str() {
                "td" => {
                    in_td = false;
                    if let Some(cell) = current.take() {
                        cells.push(cell);
                    }
                }
                "tr" | "table" => {}
                other => return Err(TableError::Html(format!("unexpected tag </{other}>"))),
            },
            HtmlToken::Text(text) => {
                if in_td {
                    if let Some(cell) = current.as_mut() {
                        cell.content.push_str(&text);
                    }
                } else if !text.trim().is_empty() {
                    return Err(TableError::Html(format!("stray text {text:?}")));
                }
            }
        }
    }
    let n_rows = (row + 1).max(0) as u32;
    let n_cols = occupancy.iter().map(|r| r.len()).max().unwrap_or(0) as u32;
    let doc = TableDocument {
        n_rows,
        n_cols,
        cells,
    };
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> TokenVocabulary {
        TokenVocabulary::build(TokenVocabulary::printable_ascii(), table_tags(8), 1000).unwrap()
    }

    fn extent() -> ImageExtent {
        ImageExtent::new(1000, 1000).unwrap()
    }

    fn cell(row: u32, col: u32, content: &str) -> TableCell {
        TableCell {
            row,
            col,
            rowspan: 1,
            colspan: 1,
            content: content.to_string(),
            content_center: (!content.is_empty()).then(|| {
                PointF::new(500.5, 500.5)
            }),
        }
    }

    #[test]
    fn encode_single_nonempty_cell() {
        let v = vocab();
        let doc = TableDocument {
            n_rows: 1,
            n_cols: 1,
            cells: vec![cell(0, 0, "A")],
        };
        let stream = encode_table_structure(&doc, extent(), &v).unwrap();
        assert_eq!(v.render(&stream.tokens), "<S> <tr> <td>[]</td> 500 500 </tr> </S>");
    }

    #[test]
    fn encode_single_empty_cell() {
        let v = vocab();
        let doc = TableDocument {
            n_rows: 1,
            n_cols: 1,
            cells: vec![cell(0, 0, "")],
        };
        let stream = encode_table_structure(&doc, extent(), &v).unwrap();
        assert_eq!(v.render(&stream.tokens), "<S> <tr> <td></td> </tr> </S>");
    }

    #[test]
    fn encode_colspan_four_token_form() {
        let v = vocab();
        let doc = TableDocument {
            n_rows: 1,
            n_cols: 2,
            cells: vec![TableCell {
                row: 0,
                col: 0,
                rowspan: 1,
                colspan: 2,
                content: String::new(),
                content_center: None,
            }],
        };
        let stream = encode_table_structure(&doc, extent(), &v).unwrap();
        assert_eq!(
            v.render(&stream.tokens),
            "<S> <tr> <td colspan=\"2\" > </td> </tr> </S>"
        );
    }

    #[test]
    fn encode_spanning_nonempty_points_before_close() {
        let v = vocab();
        let doc = TableDocument {
            n_rows: 2,
            n_cols: 2,
            cells: vec![
                TableCell {
                    row: 0,
                    col: 0,
                    rowspan: 2,
                    colspan: 1,
                    content: "X".into(),
                    content_center: Some(PointF::new(100.5, 300.5)),
                },
                cell(0, 1, ""),
                cell(1, 1, ""),
            ],
        };
        let stream = encode_table_structure(&doc, extent(), &v).unwrap();
        assert_eq!(
            v.render(&stream.tokens),
            "<S> <tr> <td rowspan=\"2\" > 100 300 </td> <td></td> </tr> <tr> <td></td> </tr> </S>"
        );
    }

    #[test]
    fn overlap_is_rejected_naming_cell() {
        let doc = TableDocument {
            n_rows: 1,
            n_cols: 2,
            cells: vec![
                TableCell {
                    row: 0,
                    col: 0,
                    rowspan: 1,
                    colspan: 2,
                    content: String::new(),
                    content_center: None,
                },
                cell(0, 1, ""),
            ],
        };
        let err = doc.validate_tiling().unwrap_err();
        assert!(matches!(err, TableError::Overlap { row: 0, col: 1 }));
    }

    #[test]
    fn decode_round_trip_simple() {
        let v = vocab();
        let doc = TableDocument {
            n_rows: 1,
            n_cols: 1,
            cells: vec![cell(0, 0, "A")],
        };
        let stream = encode_table_structure(&doc, extent(), &v).unwrap();
        let decoded = decode_table_structure(&stream, &v);
        assert!(decoded.diagnostics.is_empty(), "{:?}", decoded.diagnostics);
        assert!(decoded.matches(&doc, extent(), 1000));
        assert_eq!(decoded.cells[0].center_bin, Some(QuantizedPoint::new(500, 500)));
    }

    #[test]
    fn decode_rowspan_shares_column() {
        let v = vocab();
        let doc = TableDocument {
            n_rows: 2,
            n_cols: 2,
            cells: vec![
                TableCell {
                    row: 0,
                    col: 0,
                    rowspan: 2,
                    colspan: 1,
                    content: String::new(),
                    content_center: None,
                },
                cell(0, 1, ""),
                cell(1, 1, ""),
            ],
        };
        let stream = encode_table_structure(&doc, extent(), &v).unwrap();
        let decoded = decode_table_structure(&stream, &v);
        assert!(decoded.diagnostics.is_empty());
        assert!(decoded.matches(&doc, extent(), 1000));
        // column 0 of row 1 is claimed by the rowspan cell: the second row's
        // only explicit cell decodes at column 1
        let row1: Vec<_> = decoded.cells.iter().filter(|c| c.row == 1).collect();
        assert_eq!(row1.len(), 1);
        assert_eq!(row1[0].col, 1);
    }

    #[test]
    fn decode_missing_tr_close_diagnostic() {
        let v = vocab();
        let tokens = vec![
            v.special_id(Special::SeqStart),
            v.tag_id(TR_OPEN).unwrap(),
            v.tag_id(TD_EMPTY).unwrap(),
            v.special_id(Special::SeqEnd),
        ];
        let decoded = decode_table_structure(&TableTokenStream { tokens }, &v);
        assert!(decoded
            .diagnostics
            .iter()
            .any(|d| d.message.contains("missing </tr>")));
    }

    #[test]
    fn stage2_gt_per_nonempty_cell() {
        let v = vocab();
        let doc = TableDocument {
            n_rows: 1,
            n_cols: 3,
            cells: vec![
                TableCell {
                    row: 0,
                    col: 0,
                    rowspan: 1,
                    colspan: 1,
                    content: "12".into(),
                    content_center: Some(PointF::new(100.5, 100.5)),
                },
                cell(0, 1, ""),
                TableCell {
                    row: 0,
                    col: 2,
                    rowspan: 1,
                    colspan: 1,
                    content: "b".into(),
                    content_center: Some(PointF::new(700.5, 100.5)),
                },
            ],
        };
        let gts = build_cell_stage2_gt(&doc, &v, extent()).unwrap();
        assert_eq!(gts.len(), 2);
        assert_eq!(gts[0].prompt_point, QuantizedPoint::new(100, 100));
        assert_eq!(
            gts[0].content_tokens,
            vec![
                v.char_id('1').unwrap(),
                v.char_id('2').unwrap(),
                v.special_id(Special::SeqEnd)
            ]
        );
        assert!(gts[0].polygon_tokens.is_empty());
        assert_eq!(gts[1].prompt_point, QuantizedPoint::new(700, 100));
    }

    #[test]
    fn reconstruct_html_examples() {
        let v = vocab();
        let doc = TableDocument {
            n_rows: 1,
            n_cols: 1,
            cells: vec![cell(0, 0, "A")],
        };
        let stream = encode_table_structure(&doc, extent(), &v).unwrap();
        let html = reconstruct_html(&stream, &["A".to_string()], &v).unwrap();
        assert_eq!(html, "<table><tr><td>A</td></tr></table>");

        let empty = TableDocument {
            n_rows: 1,
            n_cols: 1,
            cells: vec![cell(0, 0, "")],
        };
        let stream = encode_table_structure(&empty, extent(), &v).unwrap();
        let html = reconstruct_html(&stream, &[], &v).unwrap();
        assert_eq!(html, "<table><tr><td></td></tr></table>");

        let span = TableDocument {
            n_rows: 1,
            n_cols: 2,
            cells: vec![TableCell {
                row: 0,
                col: 0,
                rowspan: 1,
                colspan: 2,
                content: "X".into(),
                content_center: Some(PointF::new(500.5, 500.5)),
            }],
        };
        let stream = encode_table_structure(&span, extent(), &v).unwrap();
        let html = reconstruct_html(&stream, &["X".to_string()], &v).unwrap();
        assert_eq!(html, "<table><tr><td colspan=\"2\">X</td></tr></table>");
    }

    #[test]
    fn reconstruct_count_mismatch() {
        let v = vocab();
        let doc = TableDocument {
            n_rows: 1,
            n_cols: 1,
            cells: vec![cell(0, 0, "A")],
        };
        let stream = encode_table_structure(&doc, extent(), &v).unwrap();
        let err = reconstruct_html(&stream, &[], &v).unwrap_err();
        assert!(matches!(err, TableError::ContentCount { expected: 1, got: 0 }));
    }

    #[test]
    fn html_parse_round_trip() {
        let doc = TableDocument {
            n_rows: 2,
            n_cols: 3,
            cells: vec![
                TableCell {
                    row: 0,
                    col: 0,
                    rowspan: 2,
                    colspan: 1,
                    content: "a&b".into(),
                    content_center: Some(PointF::new(10.0, 10.0)),
                },
                cell(0, 1, "x"),
                cell(0, 2, ""),
                cell(1, 1, "y"),
                cell(1, 2, "z"),
            ],
        };
        doc.validate_tiling().unwrap();
        let html = doc.to_canonical_html();
        let parsed = parse_table_html(&html).unwrap();
        assert_eq!(parsed.n_rows, doc.n_rows);
        assert_eq!(parsed.n_cols, doc.n_cols);
        let want: Vec<(u32, u32, u32, u32, String)> = doc
            .cells_in_order()
            .iter()
            .map(|c| (c.row, c.col, c.rowspan, c.colspan, c.content.clone()))
            .collect();
        let got: Vec<(u32, u32, u32, u32, String)> = parsed
            .cells_in_order()
            .iter()
            .map(|c| (c.row, c.col, c.rowspan, c.colspan, c.content.clone()))
            .collect();
        assert_eq!(want, got);
    }

    #[test]
    fn merged_tokens_compress_vs_naive() {
        let v = vocab();
        let doc = TableDocument {
            n_rows: 2,
            n_cols: 2,
            cells: vec![cell(0, 0, "a"), cell(0, 1, ""), cell(1, 0, ""), cell(1, 1, "b")],
        };
        let stream = encode_table_structure(&doc, extent(), &v).unwrap();
        // naive tokenization spends two tokens (<td> and </td>) per
        // non-spanning cell where the merged form spends one
        let non_spanning = doc
            .cells
            .iter()
            .filter(|c| c.rowspan == 1 && c.colspan == 1)
            .count();
        let naive_len = stream.tokens.len() + non_spanning;
        assert!(stream.tokens.len() < naive_len);
    }
}
