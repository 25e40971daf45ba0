//! Multi-head scaled dot-product cross attention with an explicit backward pass.

use ndarray::{s, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Projection matrices, each `N x N`.
#[derive(Clone, Copy)]
pub struct AttentionWeights<'a> {
    pub wq: ArrayView2<'a, f64>,
    pub wk: ArrayView2<'a, f64>,
    pub wv: ArrayView2<'a, f64>,
    pub wo: ArrayView2<'a, f64>,
}

/// Everything the backward pass needs, plus the attention weights for inspection.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub heads: usize,
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// One `T x K` row-stochastic matrix per head.
    pub weights: Vec<Array2<f64>>,
    pub concat: Array2<f64>,
}

pub struct AttentionGrads {
    pub dquery: Array2<f64>,
    pub dkv: Array2<f64>,
    pub dwq: Array2<f64>,
    pub dwk: Array2<f64>,
    pub dwv: Array2<f64>,
    pub dwo: Array2<f64>,
}

/// Softmax over each row, with max subtraction.
pub fn softmax_rows(scores: &Array2<f64>) -> Array2<f64> {
    let mut out = scores.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let z = row.sum();
        row.mapv_inplace(|x| x / z);
    }
    out
}

fn check(query: &ArrayView2<f64>, kv: &ArrayView2<f64>, w: &AttentionWeights, heads: usize) -> Result<()> {
    let n = query.ncols();
    if heads == 0 || n % heads != 0 {
        return Err(Error::InvalidArgument(format!(
            "feature width {n} is not divisible by {heads} heads"
        )));
    }
    if kv.ncols() != n || kv.nrows() == 0 {
        return Err(Error::dims(
            "attention",
            format!("query width {n}, key/value is {}x{}", kv.nrows(), kv.ncols()),
        ));
    }
    for (name, m) in [("W_Q", w.wq), ("W_K", w.wk), ("W_V", w.wv), ("W_O", w.wo)] {
        if m.dim() != (n, n) {
            return Err(Error::dims(
                "attention",
                format!("{name} is {:?}, expected {n}x{n}", m.dim()),
            ));
        }
    }
    Ok(())
}

/// Queries from `query` (`T x N`), keys and values from `kv` (`K x N`).
pub fn multihead_cross_attention(
    query: ArrayView2<f64>,
    kv: ArrayView2<f64>,
    w: AttentionWeights,
    heads: usize,
) -> Result<(Array2<f64>, AttentionCache)> {
    check(&query, &kv, &w, heads)?;
    let n = query.ncols();
    let dh = n / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = query.dot(&w.wq);
    let k = kv.dot(&w.wk);
    let v = kv.dot(&w.wv);
    let mut concat = Array2::zeros((query.nrows(), n));
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        let a = softmax_rows(&scores);
        concat.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
        weights.push(a);
    }
    let out = concat.dot(&w.wo);
    Ok((
        out,
        AttentionCache {
            heads,
            q,
            k,
            v,
            weights,
            concat,
        },
    ))
}

pub fn multihead_cross_attention_backward(
    query: ArrayView2<f64>,
    kv: ArrayView2<f64>,
    w: AttentionWeights,
    cache: &AttentionCache,
    dout: ArrayView2<f64>,
) -> AttentionGrads {
    let n = query.ncols();
    let dh = n / cache.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let dwo = cache.concat.t().dot(&dout);
    let dconcat = dout.dot(&w.wo.t());
    let mut dq = Array2::zeros(cache.q.raw_dim());
    let mut dk = Array2::zeros(cache.k.raw_dim());
    let mut dv = Array2::zeros(cache.v.raw_dim());
    for (h, a) in cache.weights.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let dout_h = dconcat.slice(cols);
        let da = dout_h.dot(&cache.v.slice(cols).t());
        dv.slice_mut(cols).assign(&a.t().dot(&dout_h));
        // softmax backward: dS = A * (dA - rowsum(dA * A))
        let inner = (&da * a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ds = a * &(&da - &inner) * scale;
        dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
    }
    AttentionGrads {
        dquery: dq.dot(&w.wq.t()),
        dkv: dk.dot(&w.wk.t()) + dv.dot(&w.wv.t()),
        dwq: query.t().dot(&dq),
        dwk: kv.t().dot(&dk),
        dwv: kv.t().dot(&dv),
        dwo,
    }
}
