//! Table ground-truth construction: the merged structural-token stream with
//! inserted cell center points, per-cell stage-2 recognition targets, HTML
//! reconstruction, and the TEDS check against the canonical source.
//!
//! Run with: cargo run --release --example table_gt

use spotkit::geometry::{ImageExtent, PointF};
use spotkit::metrics::teds;
use spotkit::table::{
    build_cell_stage2_gt, decode_table_structure, encode_table_structure, parse_table_html,
    reconstruct_html, table_tags, TableCell, TableDocument,
};
use spotkit::vocab::TokenVocabulary;

fn main() -> anyhow::Result<()> {
    let extent = ImageExtent::new(1000, 1000)?;
    let vocab = TokenVocabulary::build(TokenVocabulary::printable_ascii(), table_tags(8), 1000)?;

    // a 3x3 table with one rowspan, one colspan, and one empty cell
    let doc = TableDocument {
        n_rows: 3,
        n_cols: 3,
        cells: vec![
            TableCell {
                row: 0,
                col: 0,
                rowspan: 2,
                colspan: 1,
                content: "Item".into(),
                content_center: Some(PointF::new(166.0, 333.0)),
            },
            TableCell {
                row: 0,
                col: 1,
                rowspan: 1,
                colspan: 2,
                content: "Quarter".into(),
                content_center: Some(PointF::new(666.0, 166.0)),
            },
            TableCell {
                row: 1,
                col: 1,
                rowspan: 1,
                colspan: 1,
                content: "Q1".into(),
                content_center: Some(PointF::new(500.0, 500.0)),
            },
            TableCell {
                row: 1,
                col: 2,
                rowspan: 1,
                colspan: 1,
                content: "Q2".into(),
                content_center: Some(PointF::new(833.0, 500.0)),
            },
            TableCell {
                row: 2,
                col: 0,
                rowspan: 1,
                colspan: 1,
                content: "ore".into(),
                content_center: Some(PointF::new(166.0, 833.0)),
            },
            TableCell {
                row: 2,
                col: 1,
                rowspan: 1,
                colspan: 1,
                content: "12".into(),
                content_center: Some(PointF::new(500.0, 833.0)),
            },
            TableCell {
                row: 2,
                col: 2,
                rowspan: 1,
                colspan: 1,
                content: String::new(),
                content_center: None,
            },
        ],
    };
    doc.validate_tiling()?;

    let stream = encode_table_structure(&doc, extent, &vocab)?;
    println!("token stream ({} tokens):", stream.tokens.len());
    println!("  {}", vocab.render(&stream.tokens));

    // the non-empty cells each get a content-only stage-2 target
    let stage2 = build_cell_stage2_gt(&doc, &vocab, extent)?;
    println!("\nstage-2 recognition targets ({}):", stage2.len());
    for gt in &stage2 {
        println!(
            "  prompt ({:>3}, {:>3}) -> {}",
            gt.prompt_point.x_bin,
            gt.prompt_point.y_bin,
            vocab.render(&gt.content_tokens)
        );
    }

    // structure decode recovers the grid and span layout
    let decoded = decode_table_structure(&stream, &vocab);
    println!(
        "\ndecoded structure: {} rows x {} cols, {} cells, {} diagnostics",
        decoded.n_rows,
        decoded.n_cols,
        decoded.cells.len(),
        decoded.diagnostics.len()
    );

    // reconstruction fuses the four-token spans back into attributes
    let contents: Vec<String> = doc
        .cells_in_order()
        .iter()
        .filter(|c| !c.content.is_empty())
        .map(|c| c.content.clone())
        .collect();
    let html = reconstruct_html(&stream, &contents, &vocab)?;
    println!("\nreconstructed: {html}");

    let canonical = doc.to_canonical_html();
    let score = teds(&canonical, &html, false)?;
    let s_score = teds(&canonical, &html, true)?;
    println!("TEDS vs canonical: {score:.4} (S-TEDS {s_score:.4})");

    let parsed = parse_table_html(&html)?;
    println!(
        "parsed back: {} rows x {} cols, {} cells",
        parsed.n_rows,
        parsed.n_cols,
        parsed.cells.len()
    );
    Ok(())
}
