//! Spatial-window and prefix-window prompt sampling, plus the target filters
//! that restrict training targets to the prompted region or prefix range.
//!
//! Window sampling follows a fixed three-branch scheme over a unit draw `p`:
//! `p < 0.4` yields the full-image window, `0.4 <= p < 0.7` picks uniformly
//! from a fixed grid-partition table, and the rest draws a random window
//! whose sides are at least a third of the bin range per axis.

use serde::{Deserialize, Serialize};

use crate::codec::InstanceRecord;
use crate::vocab::{Special, TokenId, TokenVocabulary};

/// Counter-based 64-bit generator (SplitMix64 over a keyed counter).
///
/// Identical seeds yield identical draw sequences on every platform. Streams
/// are split with [`PromptRng::derive`]: the child seed is the mix of the
/// parent seed xored with the mixed stream index, and the child counter
/// restarts at zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptRng {
    seed: u64,
    counter: u64,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl PromptRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    /// Derive an independent stream, e.g. one per corpus shard.
    pub fn derive(&self, stream: u64) -> Self {
        Self {
            seed: mix(self.seed ^ mix(stream.wrapping_add(GOLDEN))),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[lo, hi]` inclusive, via modulo reduction (bias is
    /// below 2^-40 for every range used here).
    pub fn range_u32(&mut self, lo: u32, hi: u32) -> u32 {
        debug_assert!(lo <= hi);
        let span = (hi - lo) as u64 + 1;
        lo + (self.next_u64() % span) as u32
    }

    pub fn range_usize(&mut self, lo: usize, hi: usize) -> usize {
        debug_assert!(lo <= hi);
        let span = (hi - lo) as u64 + 1;
        lo + (self.next_u64() % span) as usize
    }

    /// Standard normal via Box-Muller.
    pub fn gauss(&mut self) -> f64 {
        let u1 = (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform();
        let u1 = (u1).max(1e-300);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Rectangular prompt window in bin space, all bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialWindow {
    pub start_x: u32,
    pub start_y: u32,
    pub end_x: u32,
    pub end_y: u32,
}

impl SpatialWindow {
    /// Full-image window `[0, 0, n_bins - 1, n_bins - 1]`.
    pub fn full(n_bins: u32) -> Self {
        Self {
            start_x: 0,
            start_y: 0,
            end_x: n_bins - 1,
            end_y: n_bins - 1,
        }
    }

    pub fn contains(&self, x_bin: u32, y_bin: u32) -> bool {
        self.start_x <= x_bin && x_bin <= self.end_x && self.start_y <= y_bin && y_bin <= self.end_y
    }
}

/// Which sampling branch produced a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowMode {
    Full,
    FixedGrid,
    Random,
}

/// Grid partition counts per axis for the fixed mode, paired index-wise.
pub const GRID_NUM_XS: [u32; 8] = [3, 3, 1, 3, 2, 2, 2, 1];
pub const GRID_NUM_YS: [u32; 8] = [3, 1, 3, 2, 3, 2, 1, 2];

/// Enumerate the fixed-mode candidate windows: for each `(num_x, num_y)`
/// pair the axes are partitioned evenly with `inter = min(floor(n_bins /
/// num), n_bins - 1)` and ends clamped to `n_bins - 1`.
pub fn grid_windows(n_bins: u32) -> Vec<SpatialWindow> {
    let mut windows = Vec::new();
    for (&num_x, &num_y) in GRID_NUM_XS.iter().zip(GRID_NUM_YS.iter()) {
        let inter_x = (n_bins / num_x).min(n_bins - 1);
        let inter_y = (n_bins / num_y).min(n_bins - 1);
        for i in 0..num_x {
            for j in 0..num_y {
                let start_x = i * inter_x;
                let start_y = j * inter_y;
                windows.push(SpatialWindow {
                    start_x,
                    start_y,
                    end_x: (start_x + inter_x).min(n_bins - 1),
                    end_y: (start_y + inter_y).min(n_bins - 1),
                });
            }
        }
    }
    windows
}

/// Random-mode window arithmetic given the four raw draws, exposed so the
/// clamping can be tested without a generator.
pub fn random_window_from_draws(
    n_bins: u32,
    start_x: u32,
    start_y: u32,
    rect_w: u32,
    rect_h: u32,
) -> SpatialWindow {
    SpatialWindow {
        start_x,
        start_y,
        end_x: (start_x + rect_w).min(n_bins - 1),
        end_y: (start_y + rect_h).min(n_bins - 1),
    }
}

/// Sample a spatial window: 40% full image, 30% fixed grid, 30% random.
///
/// Draw order per branch: the mode draw, then either one grid-choice draw or
/// the four random draws `start_x, start_y, rect_w, rect_h` with
/// `start ~ U[0, 2 * floor(n_bins / 3)]` and `rect ~ U[floor(n_bins / 3),
/// n_bins - 1]`, ends clamped to `n_bins - 1`.
pub fn sample_spatial_window(rng: &mut PromptRng, n_bins: u32) -> SpatialWindow {
    sample_spatial_window_traced(rng, n_bins).0
}

/// Like [`sample_spatial_window`] but also reports the branch taken.
pub fn sample_spatial_window_traced(rng: &mut PromptRng, n_bins: u32) -> (SpatialWindow, WindowMode) {
    assert!(n_bins >= 9, "spatial windows need n_bins >= 9");
    let prob = rng.uniform();
    if prob < 0.4 {
        (SpatialWindow::full(n_bins), WindowMode::Full)
    } else if prob < 0.7 {
        let windows = grid_windows(n_bins);
        let idx = rng.range_usize(0, windows.len() - 1);
        (windows[idx], WindowMode::FixedGrid)
    } else {
        let inter = n_bins / 3;
        let start_x = rng.range_u32(0, inter * 2);
        let start_y = rng.range_u32(0, inter * 2);
        let rect_w = rng.range_u32(inter, n_bins - 1);
        let rect_h = rng.range_u32(inter, n_bins - 1);
        (
            random_window_from_draws(n_bins, start_x, start_y, rect_w, rect_h),
            WindowMode::Random,
        )
    }
}

/// Keep exactly the instances whose center bin falls inside the window
/// (inclusive on all four edges), order preserved.
pub fn filter_by_spatial_window(
    instances: &[InstanceRecord],
    window: SpatialWindow,
) -> Vec<InstanceRecord> {
    instances
        .iter()
        .filter(|inst| window.contains(inst.center.x_bin, inst.center.y_bin))
        .cloned()
        .collect()
}

/// Ordered prompting dictionary: the 94 printable ASCII characters from `!`
/// through `~` in code order (26 uppercase, 26 lowercase, 10 digits and the
/// ASCII punctuation, interleaved by code point). `(!, ~)` therefore spans
/// the full dictionary, matching the full-range fine-tuning prompt.
pub fn prompt_dictionary() -> &'static [char] {
    use std::sync::OnceLock;
    static DICT: OnceLock<Vec<char>> = OnceLock::new();
    DICT.get_or_init(|| (0x21u8..=0x7e).map(|b| b as char).collect())
}

/// Index of a character in the prompting dictionary.
pub fn prompt_index(c: char) -> Option<usize> {
    let b = u32::from(c);
    (0x21..=0x7e).contains(&b).then(|| (b - 0x21) as usize)
}

/// Inclusive character range over the prompting dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixWindow {
    pub first_char: char,
    pub last_char: char,
}

impl PrefixWindow {
    pub fn new(first_char: char, last_char: char) -> Option<Self> {
        let i = prompt_index(first_char)?;
        let j = prompt_index(last_char)?;
        (i <= j).then_some(Self { first_char, last_char })
    }

    /// Full-range window `(!, ~)` used at fine-tuning and evaluation.
    pub fn full() -> Self {
        Self {
            first_char: '!',
            last_char: '~',
        }
    }

    pub fn contains(&self, c: char) -> bool {
        match (prompt_index(c), prompt_index(self.first_char), prompt_index(self.last_char)) {
            (Some(i), Some(lo), Some(hi)) => lo <= i && i <= hi,
            _ => false,
        }
    }
}

/// Sample a prefix window uniformly over the valid ordered pairs
/// `index(first) <= index(last)`.
pub fn sample_prefix_window(rng: &mut PromptRng) -> PrefixWindow {
    let dict = prompt_dictionary();
    let n = dict.len();
    let total = n * (n + 1) / 2;
    let mut k = rng.range_usize(0, total - 1);
    let mut i = 0;
    while k >= n - i {
        k -= n - i;
        i += 1;
    }
    PrefixWindow {
        first_char: dict[i],
        last_char: dict[i + k],
    }
}

/// Result of a prefix filter pass: the surviving instances plus counts of
/// instances dropped for reasons other than the window itself.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrefixFilterOutcome {
    pub kept: Vec<InstanceRecord>,
    /// Instances with an empty transcription (no prefix to test).
    pub empty_transcriptions: usize,
    /// Instances whose first character is outside the prompting dictionary.
    pub non_dictionary_prefixes: usize,
}

/// Keep instances whose first character's dictionary index lies inside the
/// window. Instances with empty transcriptions are excluded and counted.
pub fn filter_by_prefix_window(
    instances: &[InstanceRecord],
    window: PrefixWindow,
) -> PrefixFilterOutcome {
    let mut out = PrefixFilterOutcome::default();
    for inst in instances {
        match inst.transcription.chars().next() {
            None => out.empty_transcriptions += 1,
            Some(c) => {
                if prompt_index(c).is_none() {
                    out.non_dictionary_prefixes += 1;
                } else if window.contains(c) {
                    out.kept.push(inst.clone());
                }
            }
        }
    }
    out
}

/// Serialize the prompt pair for a stage-1 training record: the spatial
/// window as four coordinate tokens followed by the prefix window as two
/// character tokens.
pub fn stage1_prompt_ids(
    window: SpatialWindow,
    prefix: PrefixWindow,
    vocab: &TokenVocabulary,
) -> Vec<TokenId> {
    vec![
        window.start_x,
        window.start_y,
        window.end_x,
        window.end_y,
        vocab.char_id_or_unk(prefix.first_char),
        vocab.char_id_or_unk(prefix.last_char),
        vocab.special_id(Special::SeqStart),
    ]
}

/// Number of prompt tokens ([`stage1_prompt_ids`] output length): four window
/// coordinates, two prefix characters, and the `<S>` anchor. These positions
/// are excluded from the training loss.
pub const STAGE1_PROMPT_LEN: usize = 7;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::InstanceRecord;
    use crate::geometry::{PolygonGeom, QuantizedPoint};

    fn word(x: u32, y: u32, text: &str) -> InstanceRecord {
        InstanceRecord {
            center: QuantizedPoint::new(x, y),
            geometry: PolygonGeom::from_box(0.0, 0.0, 10.0, 10.0),
            transcription: text.to_string(),
            entity: None,
            line_id: None,
            paragraph_id: None,
        }
    }

    #[test]
    fn rng_is_deterministic_per_seed() {
        let mut a = PromptRng::new(42);
        let mut b = PromptRng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = PromptRng::new(43);
        assert_ne!(a.next_u64(), c.next_u64());
    }

    #[test]
    fn derived_streams_are_independent() {
        let root = PromptRng::new(7);
        let mut s0 = root.derive(0);
        let mut s1 = root.derive(1);
        let d0: Vec<u64> = (0..8).map(|_| s0.next_u64()).collect();
        let d1: Vec<u64> = (0..8).map(|_| s1.next_u64()).collect();
        assert_ne!(d0, d1);
        // re-deriving replays the stream
        let mut s0b = root.derive(0);
        assert_eq!(s0b.next_u64(), d0[0]);
    }

    #[test]
    fn grid_window_table_matches_partition_arithmetic() {
        let windows = grid_windows(1000);
        assert_eq!(
            windows.len(),
            GRID_NUM_XS
                .iter()
                .zip(GRID_NUM_YS.iter())
                .map(|(&x, &y)| (x * y) as usize)
                .sum::<usize>()
        );
        // the 3x3 partition's first cell: inter = floor(1000/3) = 333
        assert_eq!(
            windows[0],
            SpatialWindow {
                start_x: 0,
                start_y: 0,
                end_x: 333,
                end_y: 333
            }
        );
        // final 3x3 cell clamps its end to 999
        assert_eq!(
            windows[8],
            SpatialWindow {
                start_x: 666,
                start_y: 666,
                end_x: 999,
                end_y: 999
            }
        );
    }

    #[test]
    fn random_window_clamp_arithmetic() {
        let w = random_window_from_draws(1000, 100, 200, 400, 500);
        assert_eq!(
            w,
            SpatialWindow {
                start_x: 100,
                start_y: 200,
                end_x: 500,
                end_y: 700
            }
        );
        let w = random_window_from_draws(1000, 600, 600, 999, 999);
        assert_eq!(w.end_x, 999);
        assert_eq!(w.end_y, 999);
    }

    #[test]
    fn sampled_random_windows_satisfy_area_floor() {
        let mut rng = PromptRng::new(3);
        let n_bins = 1000u32;
        let inter = n_bins / 3;
        let mut seen_random = 0;
        while seen_random < 2000 {
            let (w, mode) = sample_spatial_window_traced(&mut rng, n_bins);
            if mode != WindowMode::Random {
                continue;
            }
            seen_random += 1;
            assert!(w.start_x <= 2 * inter && w.start_y <= 2 * inter);
            assert!(w.end_x - w.start_x >= inter.min(n_bins - 1 - w.start_x));
            assert!(w.end_y - w.start_y >= inter.min(n_bins - 1 - w.start_y));
            assert!(w.end_x <= n_bins - 1 && w.end_y <= n_bins - 1);
        }
    }

    #[test]
    fn spatial_filter_bounds_inclusive() {
        let w = SpatialWindow {
            start_x: 0,
            start_y: 0,
            end_x: 333,
            end_y: 333,
        };
        // all four edges are inclusive
        for (x, y, keep) in [
            (0, 0, true),
            (333, 333, true),
            (333, 0, true),
            (0, 333, true),
            (334, 0, false),
            (0, 334, false),
        ] {
            let kept = filter_by_spatial_window(&[word(x, y, "w")], w);
            assert_eq!(kept.len() == 1, keep, "({x},{y})");
        }
    }

    #[test]
    fn full_spatial_window_is_identity() {
        let insts: Vec<_> = (0..20).map(|i| word(i * 50, i * 31 % 1000, "w")).collect();
        let kept = filter_by_spatial_window(&insts, SpatialWindow::full(1000));
        assert_eq!(kept, insts);
    }

    #[test]
    fn spatial_filter_idempotent_and_commutes_with_prefix() {
        let insts = vec![
            word(10, 10, "Colchester"),
            word(600, 600, "and"),
            word(200, 200, "Greenstead"),
            word(900, 100, "Boar"),
        ];
        let sw = SpatialWindow {
            start_x: 0,
            start_y: 0,
            end_x: 500,
            end_y: 500,
        };
        let pw = PrefixWindow::new('B', 'H').unwrap();
        let once = filter_by_spatial_window(&insts, sw);
        let twice = filter_by_spatial_window(&once, sw);
        assert_eq!(once, twice);
        let a = filter_by_prefix_window(&filter_by_spatial_window(&insts, sw), pw).kept;
        let b = filter_by_spatial_window(&filter_by_prefix_window(&insts, pw).kept, sw);
        assert_eq!(a, b);
    }

    #[test]
    fn prompt_dictionary_layout() {
        let dict = prompt_dictionary();
        assert_eq!(dict.len(), 94);
        assert_eq!(dict[0], '!');
        assert_eq!(dict[93], '~');
        assert_eq!(prompt_index('B'), Some(('B' as u32 - 0x21) as usize));
        assert_eq!(prompt_index(' '), None);
    }

    #[test]
    fn prefix_window_examples() {
        // degenerate window contains only its own prefix
        let w = PrefixWindow::new('A', 'A').unwrap();
        assert!(w.contains('A'));
        assert!(!w.contains('B'));

        // full range covers the whole dictionary
        let full = PrefixWindow::full();
        for &c in prompt_dictionary() {
            assert!(full.contains(c));
        }

        // the figure example: B..H keeps C and G prefixes, drops lowercase a
        let w = PrefixWindow::new('B', 'H').unwrap();
        let insts = vec![
            word(0, 0, "Colchester"),
            word(1, 0, "and"),
            word(2, 0, "Greenstead"),
        ];
        let out = filter_by_prefix_window(&insts, w);
        let texts: Vec<&str> = out.kept.iter().map(|i| i.transcription.as_str()).collect();
        assert_eq!(texts, ["Colchester", "Greenstead"]);
    }

    #[test]
    fn digits_form_a_contiguous_run() {
        let w = PrefixWindow::new('0', '9').unwrap();
        let insts = vec![word(0, 0, "9am"), word(1, 0, "x9")];
        let out = filter_by_prefix_window(&insts, w);
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.kept[0].transcription, "9am");
    }

    #[test]
    fn empty_transcriptions_are_counted() {
        let out = filter_by_prefix_window(&[word(0, 0, "")], PrefixWindow::full());
        assert!(out.kept.is_empty());
        assert_eq!(out.empty_transcriptions, 1);
    }

    #[test]
    fn prefix_sampler_respects_order() {
        let mut rng = PromptRng::new(9);
        for _ in 0..5000 {
            let w = sample_prefix_window(&mut rng);
            assert!(prompt_index(w.first_char).unwrap() <= prompt_index(w.last_char).unwrap());
        }
    }
}
