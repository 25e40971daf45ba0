//! Empirical frame-to-frame influence by forward perturbation.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ModelInput};

/// Output rows whose largest absolute change exceeds this count as influenced.
pub const INFLUENCE_THRESHOLD: f64 = 1e-9;

fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

struct Tracer {
    model: Model,
    params: crate::nn::ParamSet,
    input: ModelInput,
    base: Array2<f64>,
    bump: Vec<f64>,
}

impl Tracer {
    fn new(cfg: &ModelConfig, frames: usize, seed: u64) -> Result<Self> {
        let (model, params) = Model::init(cfg, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let input = ModelInput {
            frames: normal(&mut rng, frames, cfg.feat_dim),
            audio: normal(&mut rng, frames, cfg.audio_dim),
            captions: normal(&mut rng, 2, cfg.caption_dim),
        };
        let bump = (0..cfg.feat_dim).map(|_| rng.sample(StandardNormal)).collect();
        let base = model.forward(params.values(), &input, false)?.output().clone();
        Ok(Self {
            model,
            params,
            input,
            base,
            bump,
        })
    }

    fn mask(&self, source: usize) -> Result<Vec<bool>> {
        let t = self.input.len();
        if source >= t {
            return Err(Error::InvalidArgument(format!("source frame {source} is outside 0..{t}")));
        }
        let mut input = self.input.clone();
        for (x, b) in input.frames.row_mut(source).iter_mut().zip(&self.bump) {
            *x += b;
        }
        let out = self.model.forward(self.params.values(), &input, false)?;
        Ok(out
            .output()
            .rows()
            .into_iter()
            .zip(self.base.rows())
            .map(|(a, b)| a.iter().zip(b).any(|(x, y)| (x - y).abs() > INFLUENCE_THRESHOLD))
            .collect())
    }
}

/// Frames of the network output that change when `source`'s input row is perturbed.
///
/// The model uses random weights drawn from `seed`. Fusion mixes each frame only
/// with the captions, so every frame-to-frame path runs through ShotConv.
pub fn trace_propagation(cfg: &ModelConfig, frames: usize, source: usize, seed: u64) -> Result<Vec<bool>> {
    Tracer::new(cfg, frames, seed)?.mask(source)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceInfluence {
    pub source_frame: usize,
    pub influenced_frames: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationReport {
    pub frames: usize,
    pub layers: usize,
    pub masks: Vec<(usize, Vec<bool>)>,
}

impl PropagationReport {
    /// One row per source; `#` marks influenced frames, `S` the source itself.
    pub fn to_text(&self) -> String {
        let mut out = format!("# influence after {} layer(s), {} frames\n", self.layers, self.frames);
        for (src, mask) in &self.masks {
            let row: String = mask
                .iter()
                .enumerate()
                .map(|(t, &m)| match (t == *src, m) {
                    (true, _) => 'S',
                    (false, true) => '#',
                    (false, false) => '.',
                })
                .collect();
            out.push_str(&format!("{src:>5} {row}\n"));
        }
        out
    }

    pub fn influences(&self) -> Vec<SourceInfluence> {
        self.masks
            .iter()
            .map(|(src, mask)| SourceInfluence {
                source_frame: *src,
                influenced_frames: mask.iter().enumerate().filter(|(_, &m)| m).map(|(t, _)| t).collect(),
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.influences())?)
    }
}

/// Influence masks for several sources sharing one random model and input.
pub fn propagation_report(cfg: &ModelConfig, frames: usize, sources: &[usize], seed: u64) -> Result<PropagationReport> {
    let tracer = Tracer::new(cfg, frames, seed)?;
    let masks = sources
        .iter()
        .map(|&s| tracer.mask(s).map(|m| (s, m)))
        .collect::<Result<_>>()?;
    Ok(PropagationReport {
        frames,
        layers: cfg.layers,
        masks,
    })
}
