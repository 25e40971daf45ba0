use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// One video's precomputed features, labels and annotations.
///
/// All per-frame arrays live on the subsampled timeline of length `T`;
/// `picks` maps each subsampled frame to a frame of the original video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    /// `T x N`
    pub frame_feats: Array2<f32>,
    /// `T x M`
    pub audio_feats: Array2<f32>,
    /// `K x N_c`, one row per generated caption sentence.
    pub caption_embeds: Array2<f32>,
    /// Binary keyframe indicator, length `T`.
    pub labels: Array1<u8>,
    pub gt_scores: Option<Array1<f32>>,
    pub n_frames: usize,
    pub picks: Vec<usize>,
    /// Inclusive `[start, end]` shot bounds over original frames.
    pub change_points: Option<Vec<[usize; 2]>>,
    /// `U x n_frames`, binary.
    pub user_summaries: Array2<u8>,
}

impl VideoRecord {
    pub fn len(&self) -> usize {
        self.frame_feats.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feat_dim(&self) -> usize {
        self.frame_feats.ncols()
    }

    pub fn audio_dim(&self) -> usize {
        self.audio_feats.ncols()
    }

    pub fn caption_dim(&self) -> usize {
        self.caption_embeds.ncols()
    }

    pub fn num_users(&self) -> usize {
        self.user_summaries.nrows()
    }

    /// Checks every structural invariant; errors name the offending keys.
    pub fn validate(&self) -> Result<()> {
        let t = self.len();
        if t == 0 {
            return Err(Error::Format("`features` has no rows".into()));
        }
        let row_check = |key: &str, rows: usize| {
            if rows != t {
                Err(Error::Format(format!(
                    "shape mismatch: `{key}` has {rows} rows but `features` has {t}"
                )))
            } else {
                Ok(())
            }
        };
        row_check("audio_features", self.audio_feats.nrows())?;
        row_check("label", self.labels.len())?;
        row_check("picks", self.picks.len())?;
        if let Some(g) = &self.gt_scores {
            row_check("gtscore", g.len())?;
            if g.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::Format("`gtscore` has values outside [0, 1]".into()));
            }
        }
        if self.caption_embeds.nrows() == 0 {
            return Err(Error::Format("`caption_embeddings` has no rows".into()));
        }
        if self.labels.iter().any(|&l| l > 1) {
            return Err(Error::Format("`label` is not binary".into()));
        }
        if self.n_frames == 0 {
            return Err(Error::Format("`n_frames` must be positive".into()));
        }
        if self.picks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("`picks` is not strictly increasing".into()));
        }
        if self.picks.last().is_some_and(|&p| p >= self.n_frames) {
            return Err(Error::Format(format!(
                "`picks` exceeds `n_frames` ({})",
                self.n_frames
            )));
        }
        if self.user_summaries.ncols() != self.n_frames {
            return Err(Error::Format(format!(
                "shape mismatch: `user_summary` has {} columns but `n_frames` is {}",
                self.user_summaries.ncols(),
                self.n_frames
            )));
        }
        if self.user_summaries.iter().any(|&v| v > 1) {
            return Err(Error::Format("`user_summary` is not binary".into()));
        }
        if let Some(cps) = &self.change_points {
            check_tiling(cps, self.n_frames).map_err(|e| {
                Error::Format(format!("`change_points` {e}"))
            })?;
        }
        let finite = |key: &str, a: &Array2<f32>| {
            if a.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(Error::Format(format!("`{key}` contains non-finite values")))
            }
        };
        finite("features", &self.frame_feats)?;
        finite("audio_features", &self.audio_feats)?;
        finite("caption_embeddings", &self.caption_embeds)?;
        Ok(())
    }
}

/// Segments must cover `[0, n - 1]` contiguously, in order, each nonempty.
pub(crate) fn check_tiling(segs: &[[usize; 2]], n: usize) -> std::result::Result<(), String> {
    let mut next = 0usize;
    for (i, &[a, b]) in segs.iter().enumerate() {
        if a != next {
            return Err(format!("segment {i} starts at {a}, expected {next}"));
        }
        if b < a {
            return Err(format!("segment {i} is empty ([{a}, {b}])"));
        }
        next = b + 1;
    }
    if next != n {
        return Err(format!("cover [0, {}) but the video has {n} frames", next));
    }
    Ok(())
}

/// Original-frame span `[start, end]` owned by each pick.
///
/// Frame `f` belongs to its nearest pick, ties going to the earlier one; frames
/// before the first pick or after the last one belong to those picks.
pub fn pick_spans(picks: &[usize], n_frames: usize) -> Vec<[usize; 2]> {
    let mut spans = Vec::with_capacity(picks.len());
    let mut start = 0;
    for (t, &p) in picks.iter().enumerate() {
        let end = match picks.get(t + 1) {
            Some(&next) => (p + next) / 2,
            None => n_frames - 1,
        };
        spans.push([start, end]);
        start = end + 1;
    }
    spans
}

/// Maps segments on the subsampled timeline to original frames.
pub fn segments_to_original(
    segments: &[[usize; 2]],
    picks: &[usize],
    n_frames: usize,
) -> Vec<[usize; 2]> {
    let spans = pick_spans(picks, n_frames);
    segments
        .iter()
        .map(|&[a, b]| [spans[a][0], spans[b][1]])
        .collect()
}

/// Expands a per-pick binary vector to the original timeline.
pub fn labels_to_original(labels: &[u8], picks: &[usize], n_frames: usize) -> Vec<u8> {
    let mut out = vec![0u8; n_frames];
    for (&l, [a, b]) in labels.iter().zip(pick_spans(picks, n_frames)) {
        out[a..=b].fill(l);
    }
    out
}
