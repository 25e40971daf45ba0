//! Scoring head, focal-loss objective and the training loop.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::VideoRecord;
use crate::error::{Error, Result};
use crate::eval::{fscore, FscoreMode};
use crate::model::{Model, ModelConfig, ModelInput};
use crate::nn::affine::affine;
use crate::nn::checkpoint;
use crate::nn::gradcheck::Objective;
use crate::nn::loss::{focal_loss, focal_loss_grad, sigmoid, FocalParams};
use crate::nn::optim::{adam_step, AdamConfig, AdamState};
use crate::nn::params::{ParamSet, Tensors};
use crate::summarize::{summarize_record, SummaryOptions};

#[derive(Clone, Copy)]
pub struct HeadWeights<'a> {
    /// `N x H`
    pub w1: ArrayView2<'a, f64>,
    pub b1: ArrayView1<'a, f64>,
    /// `H x 1`
    pub w2: ArrayView2<'a, f64>,
    pub b2: ArrayView1<'a, f64>,
}

pub struct HeadCache {
    pub hidden_pre: Array2<f64>,
    /// Rectified hidden layer.
    pub hidden: Array2<f64>,
}

/// `p = sigmoid(relu(X W1 + b1) W2 + b2)`, one probability per row.
pub fn score_head(x: ArrayView2<f64>, w: HeadWeights) -> Result<(Array1<f64>, HeadCache)> {
    if w.w2.ncols() != 1 || w.b2.len() != 1 {
        return Err(Error::dims("score_head", format!("second layer is {:?}", w.w2.dim())));
    }
    let hidden_pre = affine(x, w.w1, w.b1)?;
    let hidden = hidden_pre.mapv(|v| v.max(0.0));
    let logits = affine(hidden.view(), w.w2, w.b2)?;
    let p = logits.column(0).mapv(sigmoid);
    Ok((p, HeadCache { hidden_pre, hidden }))
}

pub struct HeadGrads {
    pub dx: Array2<f64>,
    pub dw1: Array2<f64>,
    pub db1: Array1<f64>,
    pub dw2: Array2<f64>,
    pub db2: Array1<f64>,
}

pub fn score_head_backward(
    x: ArrayView2<f64>,
    w: HeadWeights,
    cache: &HeadCache,
    p: &Array1<f64>,
    dp: ArrayView1<f64>,
) -> HeadGrads {
    let dlogit = (&dp * &p.mapv(|v| v * (1.0 - v))).insert_axis(Axis(1));
    let dw2 = cache.hidden.t().dot(&dlogit);
    let db2 = dlogit.sum_axis(Axis(0));
    let mut dh = dlogit.dot(&w.w2.t());
    Zip::from(&mut dh).and(&cache.hidden_pre).for_each(|d, &z| {
        if z <= 0.0 {
            *d = 0.0;
        }
    });
    HeadGrads {
        dx: dh.dot(&w.w1.t()),
        dw1: x.t().dot(&dh),
        db1: dh.sum_axis(Axis(0)),
        dw2,
        db2,
    }
}

/// Focal loss of one video as a function of the parameters.
pub struct VideoObjective<'a> {
    pub model: &'a Model,
    pub input: &'a ModelInput,
    pub labels: ArrayView1<'a, u8>,
    pub focal: FocalParams,
}

impl VideoObjective<'_> {
    fn check(&self) -> Result<()> {
        if self.labels.len() != self.input.len() {
            return Err(Error::dims(
                "video objective",
                format!("{} labels for {} frames", self.labels.len(), self.input.len()),
            ));
        }
        Ok(())
    }

    pub fn try_loss(&self, values: &Tensors) -> Result<f64> {
        self.check()?;
        let pass = self.model.forward(values, self.input, false)?;
        focal_loss(pass.scores.view(), self.labels, self.focal)
    }

    /// Overwrites the gradient slots and returns the loss with forward diagnostics.
    pub fn try_loss_and_grad(&self, params: &mut ParamSet) -> Result<(f64, String)> {
        self.check()?;
        let pass = self.model.forward(params.values(), self.input, false)?;
        let loss = focal_loss(pass.scores.view(), self.labels, self.focal)?;
        if !loss.is_finite() {
            return Ok((loss, pass.diagnostics()));
        }
        let dp = focal_loss_grad(pass.scores.view(), self.labels, self.focal)?;
        params.zero_grads();
        let (values, grads) = params.split_mut();
        self.model.backward(values, self.input, &pass, dp.view(), grads);
        Ok((loss, String::new()))
    }
}

impl Objective for VideoObjective<'_> {
    fn loss(&self, params: &ParamSet) -> f64 {
        self.try_loss(params.values()).expect("objective forward failed")
    }

    fn loss_and_grad(&self, params: &mut ParamSet) -> f64 {
        self.try_loss_and_grad(params).expect("objective forward failed").0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub focal: FocalParams,
    /// Summary F-scores every this many epochs and after the last one; 0 disables them.
    pub eval_every: usize,
    pub summary: SummaryOptions,
    pub fscore_mode: FscoreMode,
    /// Directory for per-epoch checkpoints.
    pub checkpoint_dir: Option<PathBuf>,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            epochs: 300,
            seed: 0,
            focal: FocalParams::default(),
            eval_every: 0,
            summary: SummaryOptions::default(),
            fscore_mode: FscoreMode::Avg,
            checkpoint_dir: None,
            checkpoint_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("`lr` must be positive, got {}", self.lr)));
        }
        if !(self.focal.alpha > 0.0 && self.focal.alpha < 1.0) {
            return Err(Error::Config(format!("`alpha` must lie in (0, 1), got {}", self.focal.alpha)));
        }
        if !(self.focal.gamma >= 0.0) {
            return Err(Error::Config(format!("`gamma` must be non-negative, got {}", self.focal.gamma)));
        }
        if !(self.summary.budget_ratio > 0.0 && self.summary.budget_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "`budget_ratio` must lie in (0, 1], got {}",
                self.summary.budget_ratio
            )));
        }
        Ok(())
    }

    fn evaluates(&self, epoch: usize) -> bool {
        self.eval_every > 0 && ((epoch + 1) % self.eval_every == 0 || epoch + 1 == self.epochs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-video loss, each taken before that video's update.
    pub loss: f64,
    pub train_f: Option<f64>,
    pub val_f: Option<f64>,
    /// Validation F-score of every video, in validation order.
    pub val_per_video: Vec<f64>,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Parameters whose gradient was zero at every step.
    pub never_updated: Vec<String>,
}

impl TrainHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }

    /// Epoch with the highest validation F-score; earliest on ties.
    pub fn best_val_epoch(&self) -> Option<&EpochStats> {
        self.epochs
            .iter()
            .filter(|e| e.val_f.is_some())
            .fold(None, |best: Option<&EpochStats>, e| match best {
                Some(b) if b.val_f >= e.val_f => Some(b),
                _ => Some(e),
            })
    }

    /// Comma-separated table; wall time is left out so the file is reproducible.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.10}"));
        let mut out = String::from("epoch,loss,train_f,val_f\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{:.12e},{},{}", e.epoch, e.loss, opt(e.train_f), opt(e.val_f));
        }
        out
    }
}

/// Scores every frame of a record with the given parameters.
pub fn predict(model: &Model, values: &Tensors, rec: &VideoRecord) -> Result<Array1<f64>> {
    let input = ModelInput::from_record(rec);
    Ok(model
        .forward(values, &input, false)
        .map_err(|e| e.in_video(&rec.video_id))?
        .scores)
}

/// Summary F-score of one record against its annotators.
pub fn summary_fscore(rec: &VideoRecord, scores: &[f64], opts: &SummaryOptions, mode: FscoreMode) -> Result<f64> {
    let (summary, _) = summarize_record(rec, scores, opts)?;
    fscore(&summary.mask, rec.user_summaries.view(), mode).map_err(|e| e.in_video(&rec.video_id))
}

fn mean_fscores(model: &Model, values: &Tensors, inputs: &[(ModelInput, &VideoRecord)], cfg: &TrainConfig) -> Result<Vec<f64>> {
    inputs
        .iter()
        .map(|(input, rec)| {
            let scores = model.forward(values, input, false).map_err(|e| e.in_video(&rec.video_id))?.scores;
            summary_fscore(rec, scores.as_slice().expect("contiguous"), &cfg.summary, cfg.fscore_mode)
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn prepare<'a>(recs: &'a [VideoRecord], model_cfg: &ModelConfig) -> Result<Vec<(ModelInput, &'a VideoRecord)>> {
    recs.iter()
        .map(|r| {
            if r.len() < model_cfg.max_shots() {
                return Err(Error::SequenceTooShort {
                    frames: r.len(),
                    shots: model_cfg.max_shots(),
                }
                .in_video(&r.video_id));
            }
            Ok((ModelInput::from_record(r), r))
        })
        .collect()
}

/// Trains on `records` from the seeded initialization. See [`train_with_validation`].
pub fn train_model(records: &[VideoRecord], model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<(ParamSet, TrainHistory)> {
    train_with_validation(records, &[], model_cfg, cfg)
}

/// One Adam step per video, videos in a freshly shuffled order every epoch.
///
/// Validation records are only scored, on the epochs selected by `eval_every`.
pub fn train_with_validation(
    records: &[VideoRecord],
    validation: &[VideoRecord],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ParamSet, TrainHistory)> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::InvalidArgument("no training videos".into()));
    }
    let (model, mut params) = Model::init(model_cfg, cfg.seed)?;
    let train = prepare(records, model_cfg)?;
    let val = prepare(validation, model_cfg)?;
    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let adam = AdamConfig::with_lr(cfg.lr);
    let mut state = AdamState::new(&params);
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut touched = vec![false; params.len()];
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for &i in &order {
            let (input, rec) = &train[i];
            let obj = VideoObjective {
                model: &model,
                input,
                labels: rec.labels.view(),
                focal: cfg.focal,
            };
            let (loss, diagnostics) = obj.try_loss_and_grad(&mut params).map_err(|e| e.in_video(&rec.video_id))?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    video_id: rec.video_id.clone(),
                    epoch,
                    diagnostics,
                });
            }
            for (t, g) in touched.iter_mut().zip(params.grads().iter()) {
                *t |= g.iter().any(|&x| x != 0.0);
            }
            adam_step(&mut params, &mut state, &adam);
            total += loss;
        }
        let (train_f, val_f, val_per_video) = if cfg.evaluates(epoch) {
            let tf = mean(&mean_fscores(&model, params.values(), &train, cfg)?);
            let per = mean_fscores(&model, params.values(), &val, cfg)?;
            let vf = (!per.is_empty()).then(|| mean(&per));
            (Some(tf), vf, per)
        } else {
            (None, None, Vec::new())
        };
        if let Some(dir) = &cfg.checkpoint_dir {
            if cfg.checkpoint_every > 0 && ((epoch + 1) % cfg.checkpoint_every == 0 || epoch + 1 == cfg.epochs) {
                checkpoint::save(&dir.join(format!("epoch_{:04}.ckpt", epoch + 1)), &params)?;
            }
        }
        let stats = EpochStats {
            epoch: epoch + 1,
            loss: total / train.len() as f64,
            train_f,
            val_f,
            val_per_video,
            wall_secs: started.elapsed().as_secs_f64(),
        };
        log::debug!("epoch {} loss {:.6e}", stats.epoch, stats.loss);
        history.epochs.push(stats);
    }
    if cfg.epochs > 0 {
        history.never_updated = params
            .ids()
            .filter(|id| !touched[id.index()])
            .map(|id| params.name(id).to_string())
            .collect();
    }
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic_record, SyntheticSpec};
    use ndarray::Array2;
    use rand::Rng;

    #[test]
    fn zero_head_gives_one_half() {
        let (w1, b1, w2, b2) = (Array2::zeros((3, 5)), Array1::zeros(5), Array2::zeros((5, 1)), Array1::zeros(1));
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i * j) as f64 - 2.0);
        let (p, _) = score_head(x.view(), HeadWeights { w1: w1.view(), b1: b1.view(), w2: w2.view(), b2: b2.view() }).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn head_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut r = |s: (usize, usize)| Array2::from_shape_fn(s, |_| rng.random_range(-1.0..1.0));
        let (x, w1, w2) = (r((6, 3)), r((3, 5)), r((5, 1)));
        let b1 = r((1, 5)).row(0).to_owned();
        let b2 = Array1::from_elem(1, 0.1);
        let dp = r((6, 1)).column(0).to_owned();
        let loss = |w1: &Array2<f64>| {
            let (p, _) = score_head(x.view(), HeadWeights { w1: w1.view(), b1: b1.view(), w2: w2.view(), b2: b2.view() }).unwrap();
            p.dot(&dp)
        };
        let hw = HeadWeights { w1: w1.view(), b1: b1.view(), w2: w2.view(), b2: b2.view() };
        let (p, cache) = score_head(x.view(), hw).unwrap();
        let g = score_head_backward(x.view(), hw, &cache, &p, dp.view());
        let eps = 1e-6;
        for idx in [(0, 0), (1, 3), (2, 4)] {
            let (mut a, mut b) = (w1.clone(), w1.clone());
            a[idx] += eps;
            b[idx] -= eps;
            let num = (loss(&a) - loss(&b)) / (2.0 * eps);
            assert!((num - g.dw1[idx]).abs() < 1e-6);
        }
    }

    fn tiny_records(n: usize, t: usize) -> Vec<VideoRecord> {
        let cfg = ModelConfig::tiny();
        let spec = SyntheticSpec::new(t, cfg.feat_dim, cfg.audio_dim, 2, 2).with_caption_dim(cfg.caption_dim);
        (0..n as u64).map(|s| make_synthetic_record(s, &spec)).collect()
    }

    #[test]
    fn zero_epochs_return_the_initialization() {
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let (params, history) = train_model(&tiny_records(2, 20), &ModelConfig::tiny(), &cfg).unwrap();
        let (_, init) = Model::init(&ModelConfig::tiny(), cfg.seed).unwrap();
        assert_eq!(params.values(), init.values());
        assert!(history.epochs.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig { epochs: 3, eval_every: 1, lr: 1e-3, ..TrainConfig::default() };
        let recs = tiny_records(3, 24);
        let (pa, ha) = train_model(&recs, &ModelConfig::tiny(), &cfg).unwrap();
        let (pb, hb) = train_model(&recs, &ModelConfig::tiny(), &cfg).unwrap();
        assert_eq!(pa.values(), pb.values());
        assert_eq!(ha.to_csv(), hb.to_csv());
        assert_eq!(ha.losses(), hb.losses());
        assert_eq!(ha.epochs.len(), 3);
        assert!(ha.epochs.iter().all(|e| e.train_f.is_some()));
    }

    #[test]
    fn short_record_is_reported_with_its_id() {
        let recs = tiny_records(1, 5);
        let err = train_model(&recs, &ModelConfig::tiny(), &TrainConfig { epochs: 1, ..TrainConfig::default() }).unwrap_err();
        assert!(err.to_string().contains("video_0"));
        assert!(matches!(err.root(), Error::SequenceTooShort { .. }));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { lr: 0.0, ..TrainConfig::default() }.validate().is_err());
        let mut c = TrainConfig::default();
        c.focal.alpha = 1.0;
        assert!(c.validate().is_err());
    }
}
