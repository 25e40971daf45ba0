//! F-score against annotator summaries and the cross-validation harness.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::data::{SplitPlan, VideoRecord};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::train::{train_with_validation, TrainConfig};

/// How per-annotator F-scores are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FscoreMode {
    Max,
    Avg,
}

impl FscoreMode {
    /// `max` for SumMe-style datasets, `avg` otherwise.
    pub fn for_dataset(name: &str) -> Self {
        if name.to_ascii_lowercase().contains("summe") {
            FscoreMode::Max
        } else {
            FscoreMode::Avg
        }
    }
}

impl fmt::Display for FscoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FscoreMode::Max => "max",
            FscoreMode::Avg => "avg",
        })
    }
}

impl FromStr for FscoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(FscoreMode::Max),
            "avg" => Ok(FscoreMode::Avg),
            other => Err(Error::InvalidArgument(format!("unknown F-score mode `{other}` (expected max or avg)"))),
        }
    }
}

fn harmonic(overlap: usize, predicted: usize, reference: usize) -> f64 {
    let p = if predicted == 0 { 0.0 } else { overlap as f64 / predicted as f64 };
    let r = if reference == 0 { 0.0 } else { overlap as f64 / reference as f64 };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Frame-overlap F-score of a binary mask against every annotator row.
pub fn fscore(pred: &[u8], users: ArrayView2<u8>, mode: FscoreMode) -> Result<f64> {
    if users.ncols() != pred.len() {
        return Err(Error::dims(
            "fscore",
            format!("prediction has {} frames, user summaries have {}", pred.len(), users.ncols()),
        ));
    }
    if users.nrows() == 0 {
        return Err(Error::InvalidArgument("no user summaries".into()));
    }
    let predicted = pred.iter().filter(|&&x| x != 0).count();
    let per_user = users.rows().into_iter().map(|u| {
        let reference = u.iter().filter(|&&x| x != 0).count();
        let overlap = u.iter().zip(pred).filter(|(&a, &b)| a != 0 && b != 0).count();
        harmonic(overlap, predicted, reference)
    });
    Ok(match mode {
        FscoreMode::Max => per_user.fold(0.0, f64::max),
        FscoreMode::Avg => per_user.sum::<f64>() / users.nrows() as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub index: usize,
    pub test_ids: Vec<String>,
    /// Per-video F-score after the last epoch.
    pub final_f: Vec<f64>,
    /// Epoch (1-based) with the best mean test F-score.
    pub best_epoch: usize,
    /// Per-video F-score at `best_epoch`.
    pub best_f: Vec<f64>,
}

impl FoldReport {
    pub fn final_mean(&self) -> f64 {
        mean(&self.final_f)
    }

    pub fn best_mean(&self) -> f64 {
        mean(&self.best_f)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Published reference rows `(setting, SumMe, TVSum)`; not reproduced here.
pub const REFERENCE_ROWS: [(&str, f64, f64); 4] = [
    ("full model (standard)", 55.3, 69.3),
    ("ablation: image only", 52.0, 68.0),
    ("ablation: image + audio", 54.5, 68.2),
    ("ablation: image + caption", 53.8, 68.3),
];

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub target: String,
    pub policy: String,
    pub mode: FscoreMode,
    pub fingerprint: String,
    pub folds: Vec<FoldReport>,
}

impl EvalReport {
    pub fn fold_final_means(&self) -> Vec<f64> {
        self.folds.iter().map(FoldReport::final_mean).collect()
    }

    pub fn fold_best_means(&self) -> Vec<f64> {
        self.folds.iter().map(FoldReport::best_mean).collect()
    }

    /// Headline number: best-epoch test F-score averaged over folds.
    pub fn best_mean(&self) -> f64 {
        mean(&self.fold_best_means())
    }

    pub fn final_mean(&self) -> f64 {
        mean(&self.fold_final_means())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("fold,video_id,final_f,best_f,best_epoch\n");
        for f in &self.folds {
            for (i, id) in f.test_ids.iter().enumerate() {
                let _ = writeln!(out, "{},{},{:.6},{:.6},{}", f.index, id, f.final_f[i], f.best_f[i], f.best_epoch);
            }
        }
        out
    }

    /// Human-readable block with the fold table and the reference rows.
    pub fn summary_block(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "target {}  policy {}  mode {}  config {}", self.target, self.policy, self.mode, self.fingerprint);
        let _ = writeln!(out, "{:<6} {:>6} {:>10} {:>10} {:>10}", "fold", "videos", "best_ep", "best_F", "final_F");
        for f in &self.folds {
            let _ = writeln!(
                out,
                "{:<6} {:>6} {:>10} {:>10.2} {:>10.2}",
                f.index,
                f.test_ids.len(),
                f.best_epoch,
                100.0 * f.best_mean(),
                100.0 * f.final_mean()
            );
        }
        let (b, fi) = (self.fold_best_means(), self.fold_final_means());
        let _ = writeln!(out, "mean best-epoch F  {:.2} (std {:.2})", 100.0 * mean(&b), 100.0 * std_dev(&b));
        let _ = writeln!(out, "mean final F       {:.2} (std {:.2})", 100.0 * mean(&fi), 100.0 * std_dev(&fi));
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<28} {:>7} {:>7}", "published reference", "SumMe", "TVSum");
        for (name, s, t) in REFERENCE_ROWS {
            let _ = writeln!(out, "{name:<28} {s:>7.1} {t:>7.1}");
        }
        out
    }
}

/// Trains and scores every fold of `plan`; folds run on up to `workers` threads.
///
/// Test videos are scored every `eval_every` epochs (or only after the last
/// epoch when that is 0) so both the best and the final epoch are reported.
pub fn run_cv(
    records: &[VideoRecord],
    plan: &SplitPlan,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    workers: usize,
    fingerprint: &str,
) -> Result<EvalReport> {
    let by_id: HashMap<&str, &VideoRecord> = records.iter().map(|r| (r.video_id.as_str(), r)).collect();
    let gather = |ids: &[String]| -> Result<Vec<VideoRecord>> {
        ids.iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|r| (*r).clone())
                    .ok_or_else(|| Error::NotFound(format!("video `{id}` named in the split plan")))
            })
            .collect()
    };
    let mut cfg = train_cfg.clone();
    if cfg.eval_every == 0 {
        cfg.eval_every = cfg.epochs.max(1);
    }
    if cfg.epochs == 0 {
        return Err(Error::Config("cross-validation needs at least one epoch".into()));
    }
    let run_fold = |(index, fold): (usize, &crate::data::Fold)| -> Result<FoldReport> {
        if fold.test.is_empty() {
            return Err(Error::InvalidArgument(format!("fold {index} has no test videos")));
        }
        let train = gather(&fold.train)?;
        let test = gather(&fold.test)?;
        let mut fold_cfg = cfg.clone();
        fold_cfg.checkpoint_dir = cfg.checkpoint_dir.as_ref().map(|d| d.join(format!("fold{index}")));
        let (_, history) = train_with_validation(&train, &test, model_cfg, &fold_cfg)?;
        let last = history.epochs.last().expect("at least one epoch");
        let best = history.best_val_epoch().expect("last epoch is evaluated");
        log::info!("fold {index}: best epoch {} F {:.4}", best.epoch, best.val_f.unwrap_or(0.0));
        Ok(FoldReport {
            index,
            test_ids: fold.test.clone(),
            final_f: last.val_per_video.clone(),
            best_epoch: best.epoch,
            best_f: best.val_per_video.clone(),
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let folds = pool.install(|| plan.folds.par_iter().enumerate().map(run_fold).collect::<Result<Vec<_>>>())?;
    Ok(EvalReport {
        target: plan.target.clone(),
        policy: plan.policy.to_string(),
        mode: cfg.fscore_mode,
        fingerprint: fingerprint.to_string(),
        folds,
    })
}
