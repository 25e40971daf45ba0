//! Deterministic synthetic videos with planted keyframe events.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::record::{labels_to_original, segments_to_original, VideoRecord};

/// Original frames per subsampled frame.
pub const SUBSAMPLE: usize = 15;
/// Mean shift of frame features inside events, per channel.
pub const EVENT_SHIFT: f32 = 1.5;
const AUDIO_SHIFT: f32 = 0.75;
/// Largest boundary jitter applied to each annotator's events, in original frames.
const USER_JITTER: i64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub frames: usize,
    pub feat_dim: usize,
    pub audio_dim: usize,
    pub captions: usize,
    pub users: usize,
    pub caption_dim: usize,
}

impl SyntheticSpec {
    /// Caption width defaults to the frame feature width.
    pub fn new(frames: usize, feat_dim: usize, audio_dim: usize, captions: usize, users: usize) -> Self {
        Self {
            frames,
            feat_dim,
            audio_dim,
            captions,
            users,
            caption_dim: feat_dim,
        }
    }

    pub fn with_caption_dim(mut self, caption_dim: usize) -> Self {
        self.caption_dim = caption_dim;
        self
    }
}

/// Splits `total` into `parts` pieces, each at least `min`.
fn composition(rng: &mut ChaCha8Rng, total: usize, parts: usize, min: usize) -> Vec<usize> {
    let free = total - parts * min;
    let mut cuts: Vec<usize> = (0..parts - 1).map(|_| rng.random_range(0..=free)).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(free)) {
        out.push(min + c - prev);
        prev = c;
    }
    out
}

/// Background runs are cut into chunks of 4 to 12 frames.
fn chunk_gap(rng: &mut ChaCha8Rng, mut gap: usize) -> Vec<usize> {
    let mut chunks = Vec::new();
    while gap > 12 {
        let c = rng.random_range(4..=(gap - 4).min(12));
        chunks.push(c);
        gap -= c;
    }
    if gap > 0 {
        chunks.push(gap);
    }
    chunks
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f32> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let x: f64 = rng.sample(StandardNormal);
        x as f32
    })
}

/// Builds a pure-function-of-arguments synthetic record.
///
/// Two to four events are planted; their frames get labels of 1 and features
/// drawn around a shifted mean. Change points follow the event boundaries and
/// cut the background into short chunks. Each annotator marks the events with
/// small independent boundary jitter.
pub fn make_synthetic_record(seed: u64, spec: &SyntheticSpec) -> VideoRecord {
    assert!(
        spec.frames >= 2
            && spec.feat_dim >= 1
            && spec.audio_dim >= 1
            && spec.captions >= 1
            && spec.users >= 1
            && spec.caption_dim >= 1,
        "synthetic dimensions must be positive (and at least two frames)"
    );
    let t = spec.frames;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let total = ((0.13 * t as f64).round() as usize).clamp(1, t / 2);
    let n_events = rng.random_range(2..=4usize).min(total);
    let lengths = composition(&mut rng, total, n_events, 1);
    let background = t - total;
    let min_gap = (background / (n_events + 1)).min(4);
    let gaps = composition(&mut rng, background, n_events + 1, min_gap);

    let mut labels = Array1::<u8>::zeros(t);
    let mut segments = Vec::new();
    let mut events = Vec::new();
    let mut pos = 0;
    for (i, &gap) in gaps.iter().enumerate() {
        for c in chunk_gap(&mut rng, gap) {
            segments.push([pos, pos + c - 1]);
            pos += c;
        }
        if let Some(&len) = lengths.get(i) {
            labels.slice_mut(ndarray::s![pos..pos + len]).fill(1);
            segments.push([pos, pos + len - 1]);
            events.push([pos, pos + len - 1]);
            pos += len;
        }
    }
    debug_assert_eq!(pos, t);

    let mut frame_feats = normal_matrix(&mut rng, t, spec.feat_dim);
    let mut audio_feats = normal_matrix(&mut rng, t, spec.audio_dim);
    for (i, &l) in labels.iter().enumerate() {
        if l == 1 {
            frame_feats.row_mut(i).mapv_inplace(|x| x + EVENT_SHIFT);
            audio_feats.row_mut(i).mapv_inplace(|x| x + AUDIO_SHIFT);
        }
    }
    let caption_embeds = normal_matrix(&mut rng, spec.captions, spec.caption_dim);
    let gt_scores: Array1<f32> = labels
        .iter()
        .map(|&l| (0.7 * l as f32 + 0.3 * rng.random::<f32>()).min(1.0))
        .collect();

    let n_frames = SUBSAMPLE * t;
    let picks: Vec<usize> = (0..t).map(|i| i * SUBSAMPLE).collect();
    let change_points = segments_to_original(&segments, &picks, n_frames);
    let orig_events = segments_to_original(&events, &picks, n_frames);
    debug_assert_eq!(
        labels_to_original(labels.as_slice().unwrap(), &picks, n_frames)
            .iter()
            .filter(|&&x| x == 1)
            .count(),
        orig_events.iter().map(|[a, b]| b - a + 1).sum::<usize>()
    );

    let mut user_summaries = Array2::<u8>::zeros((spec.users, n_frames));
    let last = n_frames as i64 - 1;
    for mut row in user_summaries.rows_mut() {
        for &[a, b] in &orig_events {
            let a = (a as i64 + rng.random_range(-USER_JITTER..=USER_JITTER)).clamp(0, last);
            let b = (b as i64 + rng.random_range(-USER_JITTER..=USER_JITTER)).clamp(a, last);
            row.slice_mut(ndarray::s![a as usize..=b as usize]).fill(1);
        }
    }

    VideoRecord {
        video_id: format!("video_{seed}"),
        frame_feats,
        audio_feats,
        caption_embeds,
        labels,
        gt_scores: Some(gt_scores),
        n_frames,
        picks,
        change_points: Some(change_points),
        user_summaries,
    }
}
