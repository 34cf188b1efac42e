//! Stage-1 and stage-2 sequence encoding for the point tasks, the decode
//! round trip, and the diagnostics produced by malformed streams.
//!
//! Run with: cargo run --release --example encode_decode

use spotkit::codec::{
    assemble_task_output, decode_stage1, decode_stage2, encode_stage1, encode_stage2,
    entity_tags, layout_tags, resample_polygon, InstanceRecord, StructuredPointsSequence, Task,
    TaskOutput,
};
use spotkit::geometry::{ImageExtent, PointF, PolygonGeom};
use spotkit::vocab::{Special, TokenVocabulary};

fn main() -> anyhow::Result<()> {
    let extent = ImageExtent::new(1000, 1000)?;
    let n_bins = 1000;
    let mut tags = layout_tags();
    tags.extend(entity_tags(["address", "total"]));
    let vocab = TokenVocabulary::build(TokenVocabulary::printable_ascii(), tags, n_bins)?;

    // --- text spotting -----------------------------------------------------
    let words = vec![
        InstanceRecord::from_geometry(
            PolygonGeom::from_box(120.0, 80.0, 360.0, 140.0),
            "Station",
            extent,
            n_bins,
        )?,
        InstanceRecord::from_geometry(
            PolygonGeom::from_box(420.0, 80.0, 560.0, 140.0),
            "Road",
            extent,
            n_bins,
        )?,
        InstanceRecord::from_geometry(
            PolygonGeom::from_box(120.0, 300.0, 240.0, 360.0),
            "1908",
            extent,
            n_bins,
        )?,
    ];
    let seq = encode_stage1(&words, Task::Spotting, &vocab)?;
    println!("spotting stage-1: {}", vocab.render(&seq.tokens));
    let decoded = decode_stage1(&seq, &vocab);
    println!(
        "  decoded {} centers, {} diagnostics",
        decoded.points.len(),
        decoded.diagnostics.len()
    );

    // stage-2 per instance: quantized polygon plus char-tokenized content
    for inst in &words {
        let (s2, unk) = encode_stage2(inst, &vocab, extent)?;
        println!(
            "  stage-2 {:?}: prompt ({}, {}), {} polygon tokens, {} content tokens, {unk} unknown",
            inst.transcription,
            s2.prompt_point.x_bin,
            s2.prompt_point.y_bin,
            s2.polygon_tokens.len(),
            s2.content_tokens.len(),
        );
    }

    // --- key information extraction -----------------------------------------
    let receipt = vec![
        InstanceRecord::from_geometry(
            PolygonGeom::from_box(100.0, 50.0, 300.0, 90.0),
            "ACME",
            extent,
            n_bins,
        )?
        .with_entity("address"),
        InstanceRecord::from_geometry(
            PolygonGeom::from_box(320.0, 50.0, 520.0, 90.0),
            "Mills",
            extent,
            n_bins,
        )?
        .with_entity("address"),
        InstanceRecord::from_geometry(
            PolygonGeom::from_box(100.0, 200.0, 220.0, 240.0),
            "12.80",
            extent,
            n_bins,
        )?
        .with_entity("total"),
    ];
    let seq = encode_stage1(&receipt, Task::Kie, &vocab)?;
    println!("\nkie stage-1: {}", vocab.render(&seq.tokens));
    let decoded1 = decode_stage1(&seq, &vocab);
    let stage2: Vec<_> = receipt
        .iter()
        .map(|inst| {
            let (s2, _) = encode_stage2(inst, &vocab, extent).expect("encode");
            decode_stage2(&s2, &vocab, extent)
        })
        .collect();
    if let TaskOutput::Kie(fields) = assemble_task_output(&decoded1, &stage2, Task::Kie)? {
        println!("  fields: {fields:?}");
    }

    // --- layout analysis -----------------------------------------------------
    let layout = vec![
        InstanceRecord::from_geometry(
            PolygonGeom::from_box(100.0, 100.0, 200.0, 130.0),
            "the",
            extent,
            n_bins,
        )?
        .with_layout_ids(0, 0),
        InstanceRecord::from_geometry(
            PolygonGeom::from_box(220.0, 100.0, 340.0, 130.0),
            "quick",
            extent,
            n_bins,
        )?
        .with_layout_ids(0, 0),
        InstanceRecord::from_geometry(
            PolygonGeom::from_box(100.0, 150.0, 220.0, 180.0),
            "brown",
            extent,
            n_bins,
        )?
        .with_layout_ids(1, 0),
        InstanceRecord::from_geometry(
            PolygonGeom::from_box(100.0, 600.0, 220.0, 630.0),
            "fox",
            extent,
            n_bins,
        )?
        .with_layout_ids(2, 1),
    ];
    let seq = encode_stage1(&layout, Task::Layout, &vocab)?;
    println!("\nlayout stage-1: {}", vocab.render(&seq.tokens));
    let decoded1 = decode_stage1(&seq, &vocab);
    let stage2: Vec<_> = layout
        .iter()
        .map(|inst| {
            let (s2, _) = encode_stage2(inst, &vocab, extent).expect("encode");
            decode_stage2(&s2, &vocab, extent)
        })
        .collect();
    if let TaskOutput::Layout(groups) = assemble_task_output(&decoded1, &stage2, Task::Layout)? {
        println!("  lines: {:?}", groups.lines);
        println!("  paragraphs: {:?}", groups.paragraphs);
    }

    // --- 16-point resampling --------------------------------------------------
    let curved = resample_polygon(
        &[
            PointF::new(100.0, 500.0),
            PointF::new(300.0, 460.0),
            PointF::new(500.0, 500.0),
            PointF::new(500.0, 560.0),
            PointF::new(300.0, 520.0),
            PointF::new(100.0, 560.0),
        ],
        16,
    )?;
    println!("\nresampled curved polygon: {} vertices", curved.vertices().len());

    // --- malformed streams decode with diagnostics, not failures ---------------
    let broken = StructuredPointsSequence {
        tokens: vec![vocab.special_id(Special::SeqStart), 500, vocab.special_id(Special::SeqEnd)],
        task: Task::Spotting,
    };
    let decoded = decode_stage1(&broken, &vocab);
    println!("\nmalformed stream recovered {} points:", decoded.points.len());
    for d in &decoded.diagnostics {
        println!("  diagnostic: {d}");
    }
    Ok(())
}
