//! HDF5 dataset container: one group per video with fixed dataset names.
//!
//! ```text
//! /video_<k>/features            T x N       f32
//! /video_<k>/audio_features      T x M       f32
//! /video_<k>/caption_embeddings  K x N_c     f32
//! /video_<k>/label               T           u8
//! /video_<k>/gtscore             T           f32   (optional)
//! /video_<k>/n_frames            scalar      i64
//! /video_<k>/picks               T           i64
//! /video_<k>/change_points       n_seg x 2   i64   (optional)
//! /video_<k>/user_summary        U x n_frames u8
//! ```

use std::path::Path;

use log::warn;
use ndarray::{Array1, Array2};

use super::record::VideoRecord;
use crate::error::{Error, Result};

pub const FEATURES: &str = "features";
pub const AUDIO: &str = "audio_features";
pub const CAPTIONS: &str = "caption_embeddings";
pub const LABEL: &str = "label";
pub const GTSCORE: &str = "gtscore";
pub const N_FRAMES: &str = "n_frames";
pub const PICKS: &str = "picks";
pub const CHANGE_POINTS: &str = "change_points";
pub const USER_SUMMARY: &str = "user_summary";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    /// Missing audio or caption keys are an error instead of zero-filled.
    pub strict: bool,
    /// Width of the zero audio features synthesized in lenient mode.
    pub audio_dim: usize,
    /// Width of the single zero caption row synthesized in lenient mode.
    pub caption_dim: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            strict: false,
            audio_dim: 128,
            caption_dim: 512,
        }
    }
}

fn open(path: &Path) -> Result<hdf5::File> {
    if !path.exists() {
        return Err(Error::NotFound(format!("container {}", path.display())));
    }
    Ok(hdf5::File::open(path)?)
}

/// Numeric suffix order for `video_<k>` names, lexical otherwise.
fn video_sort_key(name: &str) -> (u64, String) {
    let num = name
        .rsplit('_')
        .next()
        .and_then(|s| s.parse().ok())
        .unwrap_or(u64::MAX);
    (num, name.to_string())
}

/// Names of all video groups in the container.
pub fn list_videos(path: &Path) -> Result<Vec<String>> {
    let file = open(path)?;
    let mut names = file.member_names()?;
    names.retain(|n| file.group(n).is_ok());
    names.sort_by_key(|n| video_sort_key(n));
    Ok(names)
}

fn required(group: &hdf5::Group, key: &str) -> Result<hdf5::Dataset> {
    if !group.link_exists(key) {
        return Err(Error::Format(format!(
            "missing required key `{key}` in group `{}`",
            group.name()
        )));
    }
    Ok(group.dataset(key)?)
}

fn optional(group: &hdf5::Group, key: &str) -> Result<Option<hdf5::Dataset>> {
    if group.link_exists(key) {
        Ok(Some(group.dataset(key)?))
    } else {
        Ok(None)
    }
}

fn read_f32_2d(ds: &hdf5::Dataset, key: &str) -> Result<Array2<f32>> {
    ds.read_2d::<f32>()
        .map_err(|e| Error::Format(format!("`{key}`: {e}")))
}

/// Reads a non-negative integer vector stored as any numeric type.
fn read_index_vec(ds: &hdf5::Dataset, key: &str) -> Result<Vec<usize>> {
    let raw = ds
        .read_raw::<f64>()
        .map_err(|e| Error::Format(format!("`{key}`: {e}")))?;
    raw.into_iter()
        .map(|x| {
            if x >= 0.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(Error::Format(format!("`{key}` holds non-index value {x}")))
            }
        })
        .collect()
}

fn read_binary(ds: &hdf5::Dataset, key: &str) -> Result<(Vec<usize>, Vec<u8>)> {
    let raw = ds
        .read_dyn::<f64>()
        .map_err(|e| Error::Format(format!("`{key}`: {e}")))?;
    let shape = raw.shape().to_vec();
    let bits = raw
        .iter()
        .map(|&x| {
            if x == 0.0 || x == 1.0 {
                Ok(x as u8)
            } else {
                Err(Error::Format(format!("`{key}` is not binary (found {x})")))
            }
        })
        .collect::<Result<Vec<u8>>>()?;
    Ok((shape, bits))
}

/// Loads and validates one video group.
pub fn load_video_record(path: &Path, video_id: &str, opts: &LoadOptions) -> Result<VideoRecord> {
    let file = open(path)?;
    read_group(&file, video_id, opts).map_err(|e| e.in_video(video_id))
}

fn read_group(file: &hdf5::File, video_id: &str, opts: &LoadOptions) -> Result<VideoRecord> {
    let group = file
        .group(video_id)
        .map_err(|_| Error::NotFound(format!("video group `{video_id}`")))?;
    let frame_feats = read_f32_2d(&required(&group, FEATURES)?, FEATURES)?;
    let t = frame_feats.nrows();

    let audio_feats = match optional(&group, AUDIO)? {
        Some(ds) => read_f32_2d(&ds, AUDIO)?,
        None if opts.strict => {
            return Err(Error::Format(format!("missing required key `{AUDIO}`")))
        }
        None => {
            warn!("`{video_id}` has no `{AUDIO}`; using zeros");
            Array2::zeros((t, opts.audio_dim))
        }
    };
    let caption_embeds = match optional(&group, CAPTIONS)? {
        Some(ds) => read_f32_2d(&ds, CAPTIONS)?,
        None if opts.strict => {
            return Err(Error::Format(format!("missing required key `{CAPTIONS}`")))
        }
        None => {
            warn!("`{video_id}` has no `{CAPTIONS}`; using one zero caption");
            Array2::zeros((1, opts.caption_dim))
        }
    };

    let (label_shape, labels) = read_binary(&required(&group, LABEL)?, LABEL)?;
    if label_shape.len() != 1 {
        return Err(Error::Format(format!("`{LABEL}` must be one-dimensional")));
    }
    let gt_scores = match optional(&group, GTSCORE)? {
        Some(ds) => Some(
            ds.read_1d::<f32>()
                .map_err(|e| Error::Format(format!("`{GTSCORE}`: {e}")))?,
        ),
        None => None,
    };
    let n_frames = {
        let v = read_index_vec(&required(&group, N_FRAMES)?, N_FRAMES)?;
        *v.first()
            .ok_or_else(|| Error::Format(format!("`{N_FRAMES}` is empty")))?
    };
    let picks = read_index_vec(&required(&group, PICKS)?, PICKS)?;
    let change_points = match optional(&group, CHANGE_POINTS)? {
        Some(ds) => {
            if ds.ndim() != 2 || ds.shape()[1] != 2 {
                return Err(Error::Format(format!(
                    "`{CHANGE_POINTS}` must be n x 2, got {:?}",
                    ds.shape()
                )));
            }
            let flat = read_index_vec(&ds, CHANGE_POINTS)?;
            Some(flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
        }
        None => None,
    };
    let (us_shape, us) = read_binary(&required(&group, USER_SUMMARY)?, USER_SUMMARY)?;
    if us_shape.len() != 2 {
        return Err(Error::Format(format!("`{USER_SUMMARY}` must be U x n_frames")));
    }
    let user_summaries = Array2::from_shape_vec((us_shape[0], us_shape[1]), us)
        .map_err(|e| Error::Format(e.to_string()))?;

    let record = VideoRecord {
        video_id: video_id.to_string(),
        frame_feats,
        audio_feats,
        caption_embeds,
        labels: Array1::from(labels),
        gt_scores,
        n_frames,
        picks,
        change_points,
        user_summaries,
    };
    record.validate()?;
    Ok(record)
}

/// Loads every video in container order.
pub fn load_all(path: &Path, opts: &LoadOptions) -> Result<Vec<VideoRecord>> {
    let file = open(path)?;
    let mut names = file.member_names()?;
    names.sort_by_key(|n| video_sort_key(n));
    names
        .iter()
        .map(|n| read_group(&file, n, opts).map_err(|e| e.in_video(n)))
        .collect()
}

fn write_group(file: &hdf5::File, rec: &VideoRecord) -> Result<()> {
    rec.validate().map_err(|e| e.in_video(&rec.video_id))?;
    let g = file.create_group(&rec.video_id)?;
    g.new_dataset_builder()
        .with_data(rec.frame_feats.view())
        .create(FEATURES)?;
    g.new_dataset_builder()
        .with_data(rec.audio_feats.view())
        .create(AUDIO)?;
    g.new_dataset_builder()
        .with_data(rec.caption_embeds.view())
        .create(CAPTIONS)?;
    g.new_dataset_builder()
        .with_data(rec.labels.view())
        .create(LABEL)?;
    if let Some(gt) = &rec.gt_scores {
        g.new_dataset_builder().with_data(gt.view()).create(GTSCORE)?;
    }
    g.new_dataset::<i64>()
        .create(N_FRAMES)?
        .write_scalar(&(rec.n_frames as i64))?;
    let picks: Array1<i64> = rec.picks.iter().map(|&p| p as i64).collect();
    g.new_dataset_builder()
        .with_data(picks.view())
        .create(PICKS)?;
    if let Some(cps) = &rec.change_points {
        let arr = Array2::from_shape_fn((cps.len(), 2), |(i, j)| cps[i][j] as i64);
        g.new_dataset_builder()
            .with_data(arr.view())
            .create(CHANGE_POINTS)?;
    }
    g.new_dataset_builder()
        .with_data(rec.user_summaries.view())
        .create(USER_SUMMARY)?;
    Ok(())
}

/// Writes records into a new container, replacing any existing file.
pub fn write_records(path: &Path, records: &[VideoRecord]) -> Result<()> {
    let file = hdf5::File::create(path)?;
    for rec in records {
        write_group(&file, rec)?;
    }
    file.flush()?;
    Ok(())
}
