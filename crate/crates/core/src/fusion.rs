//! Multimodal frame representation: audio projection, caption pooling and
//! caption-to-frame cross attention.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::nn::attention::{multihead_cross_attention, AttentionCache, AttentionWeights};

/// How multiple caption sentences become attention keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CaptionMode {
    /// Average the projected sentences into one key.
    #[default]
    Mean,
    /// Keep every projected sentence as its own key.
    Tokens,
}

impl fmt::Display for CaptionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaptionMode::Mean => "mean",
            CaptionMode::Tokens => "tokens",
        })
    }
}

impl FromStr for CaptionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(CaptionMode::Mean),
            "tokens" => Ok(CaptionMode::Tokens),
            other => Err(Error::InvalidArgument(format!(
                "unknown caption mode `{other}` (expected mean or tokens)"
            ))),
        }
    }
}

/// `F_VA = F_V + F_A W_audio + b_audio`
pub fn project_audio(
    f_v: ArrayView2<f64>,
    f_a: ArrayView2<f64>,
    w_audio: ArrayView2<f64>,
    b_audio: ArrayView1<f64>,
) -> Result<Array2<f64>> {
    if f_a.nrows() != f_v.nrows() || f_a.ncols() != w_audio.nrows() || w_audio.ncols() != f_v.ncols() || b_audio.len() != f_v.ncols() {
        return Err(Error::dims(
            "project_audio",
            format!(
                "F_V {:?}, F_A {:?}, W_audio {:?}, b_audio {}",
                f_v.dim(),
                f_a.dim(),
                w_audio.dim(),
                b_audio.len()
            ),
        ));
    }
    Ok(&f_v + &f_a.dot(&w_audio) + &b_audio)
}

/// Caption rows fed to the projection: the sentence mean or all sentences.
pub(crate) fn caption_rows(embeds: ArrayView2<f64>, mode: CaptionMode) -> Result<Array2<f64>> {
    if embeds.nrows() == 0 {
        return Err(Error::InvalidArgument("no caption sentences".into()));
    }
    Ok(match mode {
        CaptionMode::Mean => embeds.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0)),
        CaptionMode::Tokens => embeds.to_owned(),
    })
}

/// Projects sentence embeddings to the frame width and pools them per `mode`.
pub fn pool_captions(embeds: ArrayView2<f64>, w_cap: ArrayView2<f64>, mode: CaptionMode) -> Result<Array2<f64>> {
    if embeds.ncols() != w_cap.nrows() {
        return Err(Error::dims(
            "pool_captions",
            format!("embeddings {:?} against W_cap {:?}", embeds.dim(), w_cap.dim()),
        ));
    }
    Ok(caption_rows(embeds, mode)?.dot(&w_cap))
}

/// `F_AM = F_VA + MHA(Q = F_VA, K = V = F_C)`
pub fn fuse_caption(
    f_va: ArrayView2<f64>,
    f_c: ArrayView2<f64>,
    w: AttentionWeights,
    heads: usize,
) -> Result<(Array2<f64>, AttentionCache)> {
    let (att, cache) = multihead_cross_attention(f_va, f_c, w, heads)?;
    Ok((&f_va + &att, cache))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_projection_keeps_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f_v = rand_mat(&mut rng, 5, 3);
        let f_a = rand_mat(&mut rng, 5, 2);
        let y = project_audio(f_v.view(), f_a.view(), Array2::zeros((2, 3)).view(), Array1::zeros(3).view()).unwrap();
        assert_eq!(y, f_v);
    }

    #[test]
    fn audio_hand_example() {
        let y = project_audio(
            array![[1.0, 2.0]].view(),
            array![[3.0]].view(),
            array![[1.0, -1.0]].view(),
            array![0.5, 0.5].view(),
        )
        .unwrap();
        assert_eq!(y, array![[4.5, -0.5]]);
        assert!(project_audio(array![[1.0]].view(), array![[1.0]].view(), array![[1.0, 1.0]].view(), array![0.0].view()).is_err());
    }

    #[test]
    fn caption_pooling() {
        let id = Array2::<f64>::eye(2);
        let e = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(pool_captions(e.view(), id.view(), CaptionMode::Mean).unwrap(), array![[2.0, 3.0]]);
        assert_eq!(pool_captions(e.view(), id.view(), CaptionMode::Tokens).unwrap(), e);
        let one = array![[0.5, -1.0]];
        let w = array![[1.0, 2.0, 0.0], [0.0, 1.0, 1.0]];
        assert_eq!(pool_captions(one.view(), w.view(), CaptionMode::Mean).unwrap(), one.dot(&w));
        assert!(pool_captions(Array2::zeros((0, 2)).view(), id.view(), CaptionMode::Mean).is_err());
        assert_eq!("tokens".parse::<CaptionMode>().unwrap(), CaptionMode::Tokens);
    }

    fn attention(rng: &mut ChaCha8Rng, n: usize) -> [Array2<f64>; 4] {
        std::array::from_fn(|_| rand_mat(rng, n, n))
    }

    fn view(w: &[Array2<f64>; 4]) -> AttentionWeights<'_> {
        AttentionWeights {
            wq: w[0].view(),
            wk: w[1].view(),
            wv: w[2].view(),
            wo: w[3].view(),
        }
    }

    #[test]
    fn zero_output_projection_is_residual_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut w = attention(&mut rng, 4);
        w[3].fill(0.0);
        let f_va = rand_mat(&mut rng, 6, 4);
        let f_c = rand_mat(&mut rng, 2, 4);
        let (f_am, _) = fuse_caption(f_va.view(), f_c.view(), view(&w), 2).unwrap();
        assert_eq!(f_am, f_va);
    }

    #[test]
    fn single_key_adds_the_same_row_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = attention(&mut rng, 4);
        let f_va = rand_mat(&mut rng, 6, 4);
        let f_c = rand_mat(&mut rng, 1, 4);
        let (att, _) = multihead_cross_attention(f_va.view(), f_c.view(), view(&w), 2).unwrap();
        for r in 1..6 {
            assert_eq!(att.row(r), att.row(0));
        }
        let (f_am, _) = fuse_caption(f_va.view(), f_c.view(), view(&w), 2).unwrap();
        let d = &f_am - &f_va;
        for r in 1..6 {
            assert!((&d.row(r) - &d.row(0)).iter().all(|x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn two_keys_make_the_attention_term_query_dependent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = attention(&mut rng, 4);
        let f_va = rand_mat(&mut rng, 6, 4);
        let f_c = rand_mat(&mut rng, 2, 4);
        let (f_am, _) = fuse_caption(f_va.view(), f_c.view(), view(&w), 2).unwrap();
        let d = &f_am - &f_va;
        assert!((1..6).any(|r| (&d.row(r) - &d.row(0)).iter().any(|x| x.abs() > 1e-6)));
    }
}
