//! Window-prompt sampling: branch statistics over seeded draws, the fixed
//! grid-partition table, and the prefix filter on a small scene.
//!
//! Run with: cargo run --release --example prompt_sampling

use spotkit::codec::InstanceRecord;
use spotkit::geometry::{ImageExtent, PolygonGeom};
use spotkit::prompting::{
    filter_by_prefix_window, filter_by_spatial_window, grid_windows, sample_prefix_window,
    sample_spatial_window_traced, PrefixWindow, PromptRng, SpatialWindow, WindowMode,
};

fn main() -> anyhow::Result<()> {
    let n_bins = 1000;

    // branch frequencies over many seeded draws: 40% full, 30% grid, 30% random
    let mut rng = PromptRng::new(2024);
    let mut counts = [0usize; 3];
    let draws = 100_000;
    for _ in 0..draws {
        let (_, mode) = sample_spatial_window_traced(&mut rng, n_bins);
        counts[match mode {
            WindowMode::Full => 0,
            WindowMode::FixedGrid => 1,
            WindowMode::Random => 2,
        }] += 1;
    }
    println!("branch frequencies over {draws} draws:");
    for (name, c) in ["full", "fixed-grid", "random"].iter().zip(counts) {
        println!("  {name:>10}: {:.2}%", 100.0 * c as f64 / draws as f64);
    }

    // the fixed mode chooses uniformly among these partition windows
    let windows = grid_windows(n_bins);
    println!("\nfixed-grid table has {} windows; the 3x3 block:", windows.len());
    for w in &windows[..9] {
        println!("  [{}, {}, {}, {}]", w.start_x, w.start_y, w.end_x, w.end_y);
    }

    // prefix windows restrict targets by first character
    let extent = ImageExtent::new(1000, 1000)?;
    let words = ["Colchester", "and", "Greenstead", "Road"];
    let instances: Vec<InstanceRecord> = words
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let x = 100.0 + i as f64 * 200.0;
            InstanceRecord::from_geometry(
                PolygonGeom::from_box(x, 100.0, x + 150.0, 140.0),
                *text,
                extent,
                n_bins,
            )
            .expect("in extent")
        })
        .collect();
    let window = PrefixWindow::new('B', 'H').expect("valid prefix pair");
    let kept = filter_by_prefix_window(&instances, window);
    println!(
        "\nprefix window [B, H] keeps: {:?}",
        kept.kept
            .iter()
            .map(|i| i.transcription.as_str())
            .collect::<Vec<_>>()
    );

    // spatial windows keep instances whose center bin lies inside
    let left_half = SpatialWindow {
        start_x: 0,
        start_y: 0,
        end_x: 499,
        end_y: 999,
    };
    let kept = filter_by_spatial_window(&instances, left_half);
    println!(
        "left-half window keeps: {:?}",
        kept.iter().map(|i| i.transcription.as_str()).collect::<Vec<_>>()
    );

    // a derived stream replays independently of the parent
    let root = PromptRng::new(7);
    let mut shard0 = root.derive(0);
    let mut shard1 = root.derive(1);
    println!(
        "\nderived streams: shard0 first draw {:?}, shard1 first draw {:?}",
        sample_prefix_window(&mut shard0),
        sample_prefix_window(&mut shard1)
    );
    Ok(())
}
