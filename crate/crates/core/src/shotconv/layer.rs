//! Multi-scale ShotConv layers and their stacking.
//!
//! Per scale: pad, lift `N -> lambda*N`, split into overlapping blocks, average
//! pool, inner shot convolution, expand back to frames. A layer sums the
//! expanded outputs of all scales with its input.
//!
//! Lifting is affine and pooling is a mean, so the pooled lifted blocks equal
//! the lift of the pooled padded input. The forward pass uses that order and
//! only materializes the full lifted sequence when activations are retained.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use super::inner::{inner_shotconv, inner_shotconv_backward, InnerOutput, InnerWeights};
use super::shots::{
    expand_backward, expand_to_frames, pad_backward, pool_ranges, pool_ranges_backward, shot_blocks,
    split_shots, PadPlan,
};
use crate::error::{Error, Result};
use crate::nn::affine::{affine, affine_backward};
use crate::nn::params::{ParamId, Tensors};

/// Shot count and padding ratio of one scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleSetting {
    pub shots: usize,
    pub pad_ratio: f64,
}

/// Parameter ids used by one scale. Ids may repeat across scales when weights are shared.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaleParams {
    pub lift_w: ParamId,
    pub lift_b: ParamId,
    pub branch_w: [ParamId; 4],
    pub branch_b: [ParamId; 4],
    pub reduce_w: ParamId,
    pub reduce_b: ParamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerParams {
    pub scales: Vec<ScaleParams>,
}

fn inner_weights<'a>(values: &'a Tensors, p: &ScaleParams) -> InnerWeights<'a> {
    InnerWeights {
        branch_w: p.branch_w.map(|id| values.mat(id)),
        branch_b: p.branch_b.map(|id| values.vector(id)),
        reduce_w: values.mat(p.reduce_w),
        reduce_b: values.vector(p.reduce_b),
    }
}

/// Intermediate tensors of one scale inside one layer.
pub struct ScaleActivations {
    pub plan: PadPlan,
    /// Inclusive row ranges of the shot blocks in the padded sequence.
    pub blocks: Vec<(usize, usize)>,
    /// Block means of the padded, unlifted input (`S x N`).
    pub pooled_input: Array2<f64>,
    /// `F_SR`, `S x lambda*N`.
    pub f_sr: Array2<f64>,
    pub inner: InnerOutput,
    /// `F_EF`, `T x N`.
    pub f_ef: Array2<f64>,
    /// `F_CP`, only when activations are retained.
    pub f_cp: Option<Array2<f64>>,
    /// `F_ISR`, only when activations are retained.
    pub f_isr: Option<Vec<Array2<f64>>>,
}

pub struct LayerActivations {
    pub input: Array2<f64>,
    pub scales: Vec<ScaleActivations>,
    /// `F_ASF`, `T x N`.
    pub f_asf: Array2<f64>,
}

fn check_scales(frames: usize, settings: &[ScaleSetting], params: &LayerParams) -> Result<()> {
    if settings.is_empty() || settings.len() != params.scales.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scale settings for {} parameterized scales",
            settings.len(),
            params.scales.len()
        )));
    }
    let largest = settings.iter().map(|s| s.shots).max().unwrap_or(0);
    if frames < largest {
        return Err(Error::SequenceTooShort {
            frames,
            shots: largest,
        });
    }
    Ok(())
}

/// Pointwise affine `N -> lambda*N` applied to every frame.
pub fn lift_channels(x: ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array2<f64>> {
    affine(x, w, b)
}

/// One layer: `F_ASF = X + sum over scales of F_EF`.
pub fn hierarchical_layer(
    x: ArrayView2<f64>,
    settings: &[ScaleSetting],
    values: &Tensors,
    params: &LayerParams,
    retain: bool,
) -> Result<LayerActivations> {
    check_scales(x.nrows(), settings, params)?;
    let mut f_asf = x.to_owned();
    let mut scales = Vec::with_capacity(settings.len());
    for (setting, p) in settings.iter().zip(&params.scales) {
        let plan = PadPlan::new(x.nrows(), setting.shots, setting.pad_ratio)?;
        let padded = x.select(Axis(0), &plan.source);
        let blocks = shot_blocks(padded.nrows(), setting.shots)?;
        let pooled_input = pool_ranges(padded.view(), &blocks);
        let (lw, lb) = (values.mat(p.lift_w), values.vector(p.lift_b));
        let f_sr = lift_channels(pooled_input.view(), lw, lb)?;
        let inner = inner_shotconv(f_sr.view(), &inner_weights(values, p))?;
        let f_ef = expand_to_frames(inner.out.view(), &plan)?;
        if f_ef.ncols() != f_asf.ncols() {
            return Err(Error::dims(
                "hierarchical_layer",
                format!("scale output width {} for input width {}", f_ef.ncols(), f_asf.ncols()),
            ));
        }
        f_asf += &f_ef;
        let (f_cp, f_isr) = if retain {
            let f_cp = lift_channels(padded.view(), lw, lb)?;
            let f_isr = split_shots(f_cp.view(), setting.shots)?;
            (Some(f_cp), Some(f_isr))
        } else {
            (None, None)
        };
        scales.push(ScaleActivations {
            plan,
            blocks,
            pooled_input,
            f_sr,
            inner,
            f_ef,
            f_cp,
            f_isr,
        });
    }
    Ok(LayerActivations {
        input: x.to_owned(),
        scales,
        f_asf,
    })
}

/// Accumulates parameter gradients into `grads` and returns the input gradient.
pub fn hierarchical_layer_backward(
    values: &Tensors,
    params: &LayerParams,
    act: &LayerActivations,
    dout: ArrayView2<f64>,
    grads: &mut Tensors,
) -> Array2<f64> {
    let mut dx = dout.to_owned();
    for (sa, p) in act.scales.iter().zip(&params.scales) {
        let dshots = expand_backward(dout, &sa.plan);
        let w = inner_weights(values, p);
        let g = inner_shotconv_backward(sa.f_sr.view(), &w, &sa.inner, dshots.view());
        for b in 0..4 {
            *grads.get_mut(p.branch_w[b]) += &g.dbranch_w[b];
            *grads.get_mut(p.branch_b[b]) += &g.dbranch_b[b];
        }
        *grads.get_mut(p.reduce_w) += &g.dreduce_w;
        *grads.get_mut(p.reduce_b) += &g.dreduce_b;
        let lift = affine_backward(sa.pooled_input.view(), values.mat(p.lift_w), g.dshot_reps.view());
        *grads.get_mut(p.lift_w) += &lift.dw;
        *grads.get_mut(p.lift_b) += &lift.db;
        let dpadded = pool_ranges_backward(sa.plan.padded_len(), &sa.blocks, lift.dx.view());
        dx += &pad_backward(dpadded.view(), &sa.plan);
    }
    dx
}

/// Stacks layers: `X^0 = input`, `X^l = layer_l(X^{l-1})`.
pub fn forward_network(
    input: ArrayView2<f64>,
    settings: &[ScaleSetting],
    values: &Tensors,
    layers: &[LayerParams],
    retain: bool,
) -> Result<Vec<LayerActivations>> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument("network needs at least one layer".into()));
    }
    let mut acts: Vec<LayerActivations> = Vec::with_capacity(layers.len());
    for p in layers {
        let x = acts.last().map_or(input, |a| a.f_asf.view());
        let act = hierarchical_layer(x, settings, values, p, retain)?;
        acts.push(act);
    }
    Ok(acts)
}

pub fn forward_network_backward(
    values: &Tensors,
    layers: &[LayerParams],
    acts: &[LayerActivations],
    dout: ArrayView2<f64>,
    grads: &mut Tensors,
) -> Array2<f64> {
    let mut d = dout.to_owned();
    for (p, act) in layers.iter().zip(acts).rev() {
        d = hierarchical_layer_backward(values, p, act, d.view(), grads);
    }
    d
}
