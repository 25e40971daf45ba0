//! Segment scoring and summary assembly.

use ndarray::Array2;
use serde::Serialize;

use super::knapsack::knapsack_select;
use super::kts::{kts_segment, KtsOptions};
use crate::data::record::check_tiling;
use crate::data::{pick_spans, segments_to_original, VideoRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryOptions {
    /// Largest fraction of original frames a summary may keep.
    pub budget_ratio: f64,
    pub kts: KtsOptions,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            budget_ratio: 0.15,
            kts: KtsOptions::default(),
        }
    }
}

/// Step interpolation: each original frame takes the score of its nearest pick.
pub fn frame_scores_to_original(scores: &[f64], picks: &[usize], n_frames: usize) -> Result<Vec<f64>> {
    if scores.len() != picks.len() {
        return Err(Error::dims(
            "frame_scores_to_original",
            format!("{} scores for {} picks", scores.len(), picks.len()),
        ));
    }
    let mut out = vec![0.0; n_frames];
    for (&[a, b], &s) in pick_spans(picks, n_frames).iter().zip(scores) {
        out[a..=b].fill(s);
    }
    Ok(out)
}

/// Mean original-frame score of every segment.
pub fn shot_scores(frame_scores: &[f64], segments: &[[usize; 2]], picks: &[usize], n_frames: usize) -> Result<Vec<f64>> {
    check_tiling(segments, n_frames).map_err(Error::InvalidArgument)?;
    let orig = frame_scores_to_original(frame_scores, picks, n_frames)?;
    Ok(segment_means(&orig, segments))
}

fn segment_means(orig: &[f64], segments: &[[usize; 2]]) -> Vec<f64> {
    segments
        .iter()
        .map(|&[a, b]| orig[a..=b].iter().sum::<f64>() / (b - a + 1) as f64)
        .collect()
}

/// Selected segments of one video as a mask over original frames.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub selected: Vec<usize>,
    pub segments: Vec<[usize; 2]>,
    pub mask: Vec<u8>,
    pub budget_ratio: f64,
}

impl Summary {
    pub fn selected_frames(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }
}

pub fn budget_capacity(n_frames: usize, budget_ratio: f64) -> usize {
    (budget_ratio * n_frames as f64).floor() as usize
}

/// Builds the frame mask of a selection, rejecting selections over budget.
pub fn build_summary(selection: &[usize], segments: &[[usize; 2]], n_frames: usize, budget_ratio: f64) -> Result<Summary> {
    check_tiling(segments, n_frames).map_err(Error::InvalidArgument)?;
    let mut mask = vec![0u8; n_frames];
    let mut used = 0;
    for &s in selection {
        let &[a, b] = segments
            .get(s)
            .ok_or_else(|| Error::InvalidArgument(format!("segment {s} out of range")))?;
        mask[a..=b].fill(1);
        used += b - a + 1;
    }
    let cap = budget_capacity(n_frames, budget_ratio);
    if used > cap {
        return Err(Error::InvalidArgument(format!(
            "selection keeps {used} frames, over the budget of {cap}"
        )));
    }
    Ok(Summary {
        selected: selection.to_vec(),
        segments: segments.to_vec(),
        mask,
        budget_ratio,
    })
}

/// Segment scores, knapsack selection and mask for given original-frame segments.
pub fn summarize_segments(
    frame_scores: &[f64],
    segments: &[[usize; 2]],
    picks: &[usize],
    n_frames: usize,
    budget_ratio: f64,
) -> Result<(Summary, Vec<f64>)> {
    let scores = shot_scores(frame_scores, segments, picks, n_frames)?;
    let weights: Vec<usize> = segments.iter().map(|&[a, b]| b - a + 1).collect();
    let (selected, _) = knapsack_select(&scores, &weights, budget_capacity(n_frames, budget_ratio))?;
    Ok((build_summary(&selected, segments, n_frames, budget_ratio)?, scores))
}

/// Segments of a record in original frames: stored change points, or KTS on the frame features.
pub fn record_segments(rec: &VideoRecord, kts: &KtsOptions) -> Result<Vec<[usize; 2]>> {
    if let Some(cps) = &rec.change_points {
        return Ok(cps.clone());
    }
    let t = rec.len();
    if t < 2 {
        return Ok(vec![[0, rec.n_frames - 1]]);
    }
    let x: Array2<f64> = rec.frame_feats.mapv(f64::from);
    let r = kts_segment(x.view(), kts.resolve_max(t), kts.penalty)?;
    Ok(segments_to_original(&r.segments(t), &rec.picks, rec.n_frames))
}

pub fn summarize_record(rec: &VideoRecord, frame_scores: &[f64], opts: &SummaryOptions) -> Result<(Summary, Vec<f64>)> {
    let segments = record_segments(rec, &opts.kts)?;
    summarize_segments(frame_scores, &segments, &rec.picks, rec.n_frames, opts.budget_ratio)
        .map_err(|e| e.in_video(&rec.video_id))
}

/// Run-length encoding as `[value, run]` pairs.
pub fn run_lengths(mask: &[u8]) -> Vec<[usize; 2]> {
    let mut out: Vec<[usize; 2]> = Vec::new();
    for &m in mask {
        match out.last_mut() {
            Some([v, n]) if *v == m as usize => *n += 1,
            _ => out.push([m as usize, 1]),
        }
    }
    out
}

#[derive(Serialize)]
struct SummaryExport<'a> {
    video_id: &'a str,
    n_frames: usize,
    budget_ratio: f64,
    selected_frames: usize,
    segments: &'a [[usize; 2]],
    segment_scores: &'a [f64],
    selected: &'a [usize],
    mask_rle: Vec<[usize; 2]>,
}

/// JSON export with segment list, scores and a run-length encoded mask.
pub fn summary_json(video_id: &str, summary: &Summary, segment_scores: &[f64]) -> Result<String> {
    Ok(serde_json::to_string_pretty(&SummaryExport {
        video_id,
        n_frames: summary.mask.len(),
        budget_ratio: summary.budget_ratio,
        selected_frames: summary.selected_frames(),
        segments: &summary.segments,
        segment_scores,
        selected: &summary.selected,
        mask_rle: run_lengths(&summary.mask),
    })?)
}
