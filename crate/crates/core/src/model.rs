//! Model configuration, parameter layout, and the full forward/backward pass.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayD, ArrayView1, Axis, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::VideoRecord;
use crate::error::{Error, Result};
use crate::fusion::{caption_rows, fuse_caption, project_audio, CaptionMode};
use crate::nn::attention::{multihead_cross_attention_backward, AttentionCache, AttentionWeights};
use crate::nn::params::{ParamId, ParamSet, Tensors};
use crate::shotconv::inner::{BRANCH_KERNELS, BRANCH_STRIDE};
use crate::shotconv::layer::{
    forward_network, forward_network_backward, LayerActivations, LayerParams, ScaleParams, ScaleSetting,
};
use crate::train::{score_head, score_head_backward, HeadCache, HeadWeights};

/// Which ShotConv weights are shared between the scales of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sharing {
    /// Lift and branch weights per scale, one reduce map per layer.
    #[default]
    Reduce,
    /// One set of lift, branch and reduce weights per layer.
    All,
    /// Every scale has its own weights.
    None,
}

impl fmt::Display for Sharing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sharing::Reduce => "reduce",
            Sharing::All => "all",
            Sharing::None => "none",
        })
    }
}

impl FromStr for Sharing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reduce" => Ok(Sharing::Reduce),
            "all" => Ok(Sharing::All),
            "none" => Ok(Sharing::None),
            other => Err(Error::InvalidArgument(format!(
                "unknown sharing mode `{other}` (expected reduce, all or none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Frame feature width `N`.
    pub feat_dim: usize,
    /// Audio feature width `M`.
    pub audio_dim: usize,
    /// Caption sentence embedding width.
    pub caption_dim: usize,
    /// Channel multiplier of the lift.
    pub lambda: usize,
    pub heads: usize,
    pub layers: usize,
    /// Shot count per scale, e.g. `[5, 10, 15]`.
    pub shots: Vec<usize>,
    /// Padding ratio `eta`.
    pub pad_ratio: f64,
    pub filters_per_branch: usize,
    pub head_hidden: usize,
    pub caption_mode: CaptionMode,
    pub sharing: Sharing,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            feat_dim: 1024,
            audio_dim: 128,
            caption_dim: 512,
            lambda: 8,
            heads: 32,
            layers: 4,
            shots: vec![5, 10, 15],
            pad_ratio: 0.05,
            filters_per_branch: 1,
            head_hidden: 128,
            caption_mode: CaptionMode::Mean,
            sharing: Sharing::Reduce,
        }
    }
}

impl ModelConfig {
    /// Small configuration used for gradient checks.
    pub fn tiny() -> Self {
        Self {
            feat_dim: 8,
            audio_dim: 4,
            caption_dim: 6,
            lambda: 2,
            heads: 2,
            layers: 2,
            shots: vec![2, 4, 6],
            pad_ratio: 0.25,
            ..Self::default()
        }
    }

    pub fn lifted_dim(&self) -> usize {
        self.lambda * self.feat_dim
    }

    pub fn max_shots(&self) -> usize {
        self.shots.iter().copied().max().unwrap_or(0)
    }

    pub fn scale_settings(&self) -> Vec<ScaleSetting> {
        self.shots
            .iter()
            .map(|&shots| ScaleSetting {
                shots,
                pad_ratio: self.pad_ratio,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("feat_dim", self.feat_dim),
            ("audio_dim", self.audio_dim),
            ("caption_dim", self.caption_dim),
            ("lambda", self.lambda),
            ("heads", self.heads),
            ("layers", self.layers),
            ("filters_per_branch", self.filters_per_branch),
            ("head_hidden", self.head_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("`{name}` must be positive")));
            }
        }
        if self.shots.is_empty() || self.shots.contains(&0) {
            return Err(Error::Config("`shots` must be a non-empty list of positive counts".into()));
        }
        if !(0.0..1.0).contains(&self.pad_ratio) {
            return Err(Error::Config(format!("`pad_ratio` {} is outside [0, 1)", self.pad_ratio)));
        }
        if self.lifted_dim() % BRANCH_STRIDE != 0 {
            return Err(Error::Config(format!(
                "lambda * feat_dim = {} is not divisible by the branch stride {BRANCH_STRIDE}",
                self.lifted_dim()
            )));
        }
        if self.feat_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "feat_dim {} is not divisible by heads {}",
                self.feat_dim, self.heads
            )));
        }
        Ok(())
    }
}

/// Parameter names and shapes in registration order.
pub fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (n, m, nc) = (cfg.feat_dim, cfg.audio_dim, cfg.caption_dim);
    let (c, f) = (cfg.lifted_dim(), cfg.filters_per_branch);
    let mut out: Vec<(String, Vec<usize>)> = vec![
        ("fusion.audio.w".into(), vec![m, n]),
        ("fusion.audio.b".into(), vec![n]),
        ("fusion.caption.w".into(), vec![nc, n]),
    ];
    for p in ["wq", "wk", "wv", "wo"] {
        out.push((format!("fusion.attn.{p}"), vec![n, n]));
    }
    for l in 0..cfg.layers {
        for i in 0..cfg.shots.len() {
            let per_scale = cfg.sharing != Sharing::All;
            if per_scale || i == 0 {
                let tag = scale_tag(l, i, per_scale);
                out.push((format!("{tag}.lift.w"), vec![n, c]));
                out.push((format!("{tag}.lift.b"), vec![c]));
                for (b, &k) in BRANCH_KERNELS.iter().enumerate() {
                    out.push((format!("{tag}.branch{b}.w"), vec![f, k]));
                    out.push((format!("{tag}.branch{b}.b"), vec![f]));
                }
            }
            let reduce_per_scale = cfg.sharing == Sharing::None;
            if reduce_per_scale || i == 0 {
                let tag = scale_tag(l, i, reduce_per_scale);
                out.push((format!("{tag}.reduce.w"), vec![f * c, n]));
                out.push((format!("{tag}.reduce.b"), vec![n]));
            }
        }
    }
    out.push(("head.w1".into(), vec![n, cfg.head_hidden]));
    out.push(("head.b1".into(), vec![cfg.head_hidden]));
    out.push(("head.w2".into(), vec![cfg.head_hidden, 1]));
    out.push(("head.b2".into(), vec![1]));
    out
}

fn scale_tag(layer: usize, scale: usize, per_scale: bool) -> String {
    if per_scale {
        format!("layer{layer}.scale{scale}")
    } else {
        format!("layer{layer}")
    }
}

/// Parameter count with a per-group breakdown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCount {
    pub groups: Vec<(String, usize)>,
    pub total: usize,
}

impl fmt::Display for ParamCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.groups.iter().map(|(g, _)| g.len()).max().unwrap_or(5).max(5);
        for (g, c) in &self.groups {
            writeln!(f, "{g:<width$}  {c:>12}")?;
        }
        writeln!(f, "{:<width$}  {:>12}", "total", self.total)?;
        write!(f, "{:<width$}  {:>12.3} M", "", self.total as f64 / 1e6)
    }
}

/// Counts scalars from shape arithmetic alone, without allocating.
pub fn count_params(cfg: &ModelConfig) -> Result<ParamCount> {
    cfg.validate()?;
    let mut groups: Vec<(String, usize)> = Vec::new();
    for (name, shape) in layout(cfg) {
        let group = match name.split('.').collect::<Vec<_>>().as_slice() {
            ["fusion", "attn", ..] => "fusion.attention".to_string(),
            ["fusion", part, ..] => format!("fusion.{part}"),
            [first, ..] => first.to_string(),
            [] => unreachable!(),
        };
        let size: usize = shape.iter().product();
        match groups.last_mut() {
            Some((g, c)) if *g == group => *c += size,
            _ => groups.push((group, size)),
        }
    }
    let total = groups.iter().map(|(_, c)| c).sum();
    Ok(ParamCount { groups, total })
}

/// Frame, audio and caption tensors of one video in double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub frames: Array2<f64>,
    pub audio: Array2<f64>,
    pub captions: Array2<f64>,
}

impl ModelInput {
    pub fn from_record(rec: &VideoRecord) -> Self {
        Self {
            frames: rec.frame_feats.mapv(f64::from),
            audio: rec.audio_feats.mapv(f64::from),
            captions: rec.caption_embeds.mapv(f64::from),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }
}

/// Every intermediate of a forward pass.
pub struct ForwardPass {
    /// Caption rows before projection (mean row or all sentences).
    pub caption_rows: Array2<f64>,
    pub f_va: Array2<f64>,
    pub f_c: Array2<f64>,
    pub attention: AttentionCache,
    pub f_am: Array2<f64>,
    pub layers: Vec<LayerActivations>,
    pub head: HeadCache,
    /// Keyframe probabilities, one per frame.
    pub scores: Array1<f64>,
}

impl ForwardPass {
    pub fn output(&self) -> &Array2<f64> {
        &self.layers.last().expect("at least one layer").f_asf
    }

    /// Frobenius norms and finiteness of every retained tensor.
    pub fn diagnostics(&self) -> String {
        let describe = |name: &str, a: &Array2<f64>| {
            let finite = a.iter().all(|x| x.is_finite());
            let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            format!("  {name:<24} {:?} norm={norm:.6e} finite={finite}\n", a.dim())
        };
        let mut out = String::new();
        out += &describe("F_VA", &self.f_va);
        out += &describe("F_C", &self.f_c);
        out += &describe("F_AM", &self.f_am);
        for (l, act) in self.layers.iter().enumerate() {
            for (i, s) in act.scales.iter().enumerate() {
                out += &describe(&format!("layer{l}.scale{i}.F_SR"), &s.f_sr);
                out += &describe(&format!("layer{l}.scale{i}.F_EF"), &s.f_ef);
            }
            out += &describe(&format!("layer{l}.F_ASF"), &act.f_asf);
        }
        out += &describe("head.hidden", &self.head.hidden);
        out
    }
}

/// Parameter ids of a model, resolved by name.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub audio_w: ParamId,
    pub audio_b: ParamId,
    pub caption_w: ParamId,
    /// Query, key, value and output projections.
    pub attn: [ParamId; 4],
    pub layers: Vec<LayerParams>,
    pub head_w1: ParamId,
    pub head_b1: ParamId,
    pub head_w2: ParamId,
    pub head_b2: ParamId,
}

impl Model {
    /// Registers every parameter with zeros.
    pub fn zeros(cfg: &ModelConfig) -> Result<(Model, ParamSet)> {
        cfg.validate()?;
        let mut ps = ParamSet::new();
        for (name, shape) in layout(cfg) {
            ps.register(name, ArrayD::zeros(IxDyn(&shape)))?;
        }
        let model = Model::bind(cfg, &ps)?;
        Ok((model, ps))
    }

    /// Matrices are drawn from `N(0, 1 / fan_in)`; biases start at zero.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<(Model, ParamSet)> {
        let (model, mut ps) = Model::zeros(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<ParamId> = ps.ids().collect();
        for id in ids {
            let shape = ps.shape(id).to_vec();
            if shape.len() != 2 {
                continue;
            }
            // branch filters are `f x k` and see `k` inputs; affine maps see their row count
            let fan_in = if ps.name(id).contains(".branch") { shape[1] } else { shape[0] };
            let std = (1.0 / fan_in as f64).sqrt();
            ps.values_mut().get_mut(id).mapv_inplace(|_| {
                let z: f64 = rng.sample(StandardNormal);
                z * std
            });
        }
        Ok((model, ps))
    }

    /// Resolves parameter ids in an existing set, checking names and shapes.
    pub fn bind(cfg: &ModelConfig, ps: &ParamSet) -> Result<Model> {
        cfg.validate()?;
        for (name, shape) in layout(cfg) {
            let id = ps
                .id_of(&name)
                .ok_or_else(|| Error::Format(format!("parameter `{name}` is missing")))?;
            if ps.shape(id) != shape.as_slice() {
                return Err(Error::Format(format!(
                    "parameter `{name}` has shape {:?}, expected {shape:?}",
                    ps.shape(id)
                )));
            }
        }
        let get = |name: String| ps.id_of(&name).expect("checked above");
        let layers = (0..cfg.layers)
            .map(|l| LayerParams {
                scales: (0..cfg.shots.len())
                    .map(|i| {
                        let conv = if cfg.sharing == Sharing::All {
                            scale_tag(l, 0, false)
                        } else {
                            scale_tag(l, i, true)
                        };
                        let reduce = scale_tag(l, i, cfg.sharing == Sharing::None);
                        ScaleParams {
                            lift_w: get(format!("{conv}.lift.w")),
                            lift_b: get(format!("{conv}.lift.b")),
                            branch_w: std::array::from_fn(|b| get(format!("{conv}.branch{b}.w"))),
                            branch_b: std::array::from_fn(|b| get(format!("{conv}.branch{b}.b"))),
                            reduce_w: get(format!("{reduce}.reduce.w")),
                            reduce_b: get(format!("{reduce}.reduce.b")),
                        }
                    })
                    .collect(),
            })
            .collect();
        Ok(Model {
            config: cfg.clone(),
            audio_w: get("fusion.audio.w".into()),
            audio_b: get("fusion.audio.b".into()),
            caption_w: get("fusion.caption.w".into()),
            attn: ["wq", "wk", "wv", "wo"].map(|p| get(format!("fusion.attn.{p}"))),
            layers,
            head_w1: get("head.w1".into()),
            head_b1: get("head.b1".into()),
            head_w2: get("head.w2".into()),
            head_b2: get("head.b2".into()),
        })
    }

    fn attention<'a>(&self, values: &'a Tensors) -> AttentionWeights<'a> {
        AttentionWeights {
            wq: values.mat(self.attn[0]),
            wk: values.mat(self.attn[1]),
            wv: values.mat(self.attn[2]),
            wo: values.mat(self.attn[3]),
        }
    }

    fn head<'a>(&self, values: &'a Tensors) -> HeadWeights<'a> {
        HeadWeights {
            w1: values.mat(self.head_w1),
            b1: values.vector(self.head_b1),
            w2: values.mat(self.head_w2),
            b2: values.vector(self.head_b2),
        }
    }

    fn check_input(&self, input: &ModelInput) -> Result<()> {
        let cfg = &self.config;
        let t = input.len();
        if input.frames.ncols() != cfg.feat_dim
            || input.audio.dim() != (t, cfg.audio_dim)
            || input.captions.ncols() != cfg.caption_dim
        {
            return Err(Error::dims(
                "model input",
                format!(
                    "frames {:?}, audio {:?}, captions {:?} for N={}, M={}, caption width {}",
                    input.frames.dim(),
                    input.audio.dim(),
                    input.captions.dim(),
                    cfg.feat_dim,
                    cfg.audio_dim,
                    cfg.caption_dim
                ),
            ));
        }
        if t < cfg.max_shots() {
            return Err(Error::SequenceTooShort {
                frames: t,
                shots: cfg.max_shots(),
            });
        }
        Ok(())
    }

    /// Fusion, the ShotConv network and the scoring head.
    ///
    /// With `retain` set, the full lifted sequence and shot blocks of every
    /// scale are kept as well.
    pub fn forward(&self, values: &Tensors, input: &ModelInput, retain: bool) -> Result<ForwardPass> {
        self.check_input(input)?;
        let cfg = &self.config;
        let f_va = project_audio(
            input.frames.view(),
            input.audio.view(),
            values.mat(self.audio_w),
            values.vector(self.audio_b),
        )?;
        let rows = caption_rows(input.captions.view(), cfg.caption_mode)?;
        let f_c = rows.dot(&values.mat(self.caption_w));
        let (f_am, attention) = fuse_caption(f_va.view(), f_c.view(), self.attention(values), cfg.heads)?;
        let layers = forward_network(f_am.view(), &cfg.scale_settings(), values, &self.layers, retain)?;
        let x = &layers.last().expect("at least one layer").f_asf;
        let (scores, head) = score_head(x.view(), self.head(values))?;
        Ok(ForwardPass {
            caption_rows: rows,
            f_va,
            f_c,
            attention,
            f_am,
            layers,
            head,
            scores,
        })
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d scores`.
    pub fn backward(&self, values: &Tensors, input: &ModelInput, pass: &ForwardPass, dscores: ArrayView1<f64>, grads: &mut Tensors) {
        let hg = score_head_backward(pass.output().view(), self.head(values), &pass.head, &pass.scores, dscores);
        *grads.get_mut(self.head_w1) += &hg.dw1;
        *grads.get_mut(self.head_b1) += &hg.db1;
        *grads.get_mut(self.head_w2) += &hg.dw2;
        *grads.get_mut(self.head_b2) += &hg.db2;

        let df_am = forward_network_backward(values, &self.layers, &pass.layers, hg.dx.view(), grads);

        let ag = multihead_cross_attention_backward(
            pass.f_va.view(),
            pass.f_c.view(),
            self.attention(values),
            &pass.attention,
            df_am.view(),
        );
        for (id, g) in self.attn.iter().zip([&ag.dwq, &ag.dwk, &ag.dwv, &ag.dwo]) {
            *grads.get_mut(*id) += g;
        }
        *grads.get_mut(self.caption_w) += &pass.caption_rows.t().dot(&ag.dkv);

        let df_va = df_am + &ag.dquery;
        *grads.get_mut(self.audio_w) += &input.audio.t().dot(&df_va);
        *grads.get_mut(self.audio_b) += &df_va.sum_axis(Axis(0));
    }
}
