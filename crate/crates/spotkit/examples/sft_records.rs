//! SPOT-style SFT conversation records: building all three variants from a
//! labeled scene, parsing a dialogue back, and importing external OCR
//! annotations.
//!
//! Run with: cargo run --release --example sft_records

use spotkit::codec::InstanceRecord;
use spotkit::corpus::SceneSpec;
use spotkit::geometry::{ImageExtent, PolygonGeom};
use spotkit::sft::{
    build_record, import_external_ocr, parse_dialogue, records_to_jsonl, SpotVariant, TemplateSet,
};

fn main() -> anyhow::Result<()> {
    let extent = ImageExtent::new(1000, 1000)?;
    let n_bins = 1000;
    let scene = SceneSpec {
        extent,
        instances: vec![
            InstanceRecord::from_geometry(
                PolygonGeom::from_box(80.0, 60.0, 280.0, 110.0),
                "Harbour",
                extent,
                n_bins,
            )?,
            InstanceRecord::from_geometry(
                PolygonGeom::from_box(320.0, 60.0, 480.0, 110.0),
                "Lights",
                extent,
                n_bins,
            )?,
            InstanceRecord::from_geometry(
                PolygonGeom::from_box(80.0, 400.0, 200.0, 450.0),
                "1897",
                extent,
                n_bins,
            )?,
        ],
    };

    let templates = TemplateSet::default_set();
    for variant in [SpotVariant::NSpot, SpotVariant::SSpot, SpotVariant::LSpot] {
        let record = build_record(&scene, variant, &templates, n_bins, 0, "harbour.png")?;
        println!("--- {variant}: {} instruction/response pairs ---", record.pair_count());
        for turn in &record.conversations {
            let preview: String = turn.value.lines().next().unwrap_or("").chars().take(72).collect();
            println!("  [{:?}] {preview}", turn.from);
        }

        // the dialogue parses back to the annotation
        let parsed = parse_dialogue(&record.responses(), variant);
        println!(
            "  parsed {} entries, {} diagnostics",
            parsed.entries.len(),
            parsed.diagnostics.len()
        );
        for entry in &parsed.entries {
            println!(
                "    ({}, {}) box ({}, {})..({}, {}) {:?}",
                entry.point.x_bin,
                entry.point.y_bin,
                entry.box_bins.0.x_bin,
                entry.box_bins.0.y_bin,
                entry.box_bins.1.x_bin,
                entry.box_bins.1.y_bin,
                entry.transcription
            );
        }
    }

    // records serialize as conversation JSONL
    let record = build_record(&scene, SpotVariant::NSpot, &templates, n_bins, 1, "harbour.png")?;
    let jsonl = records_to_jsonl(&[record])?;
    println!("\njsonl preview: {}", &jsonl[..jsonl.len().min(160)]);

    // external OCR annotations import into the same pipeline
    let external = r#"{"image":"menu.jpg","extent":{"width":640,"height":480},"words":[{"bbox":[12.0,10.0,120.0,42.0],"text":"Soup"},{"bbox":[12.0,60.0,150.0,92.0],"text":"Bread"}]}"#;
    let scenes = import_external_ocr(external, n_bins)?;
    let (image, imported) = &scenes[0];
    let record = build_record(imported, SpotVariant::SSpot, &templates, n_bins, 2, image.clone())?;
    println!(
        "imported {:?}: {} words -> {} pairs",
        image,
        imported.instances.len(),
        record.pair_count()
    );
    Ok(())
}
