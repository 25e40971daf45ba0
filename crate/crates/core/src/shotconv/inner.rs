//! Per-shot four-branch convolution followed by a channel reduction.
//!
//! Each shot vector of width `C = lambda * N` is treated as a 1-D signal.
//! Branch kernels have sizes 1, 3, 5 and 7 with stride 4; the two larger ones
//! are dilated by 2. Every branch has `f` filters producing `ceil(C / 4)` values
//! each, so the concatenation has width `f * C` when `C` is divisible by 4.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::nn::conv::{strided_conv1d, strided_conv1d_backward, ConvSpec};

pub const BRANCH_KERNELS: [usize; 4] = [1, 3, 5, 7];
pub const BRANCH_DILATIONS: [usize; 4] = [1, 1, 2, 2];
pub const BRANCH_STRIDE: usize = 4;

pub fn branch_spec(branch: usize) -> ConvSpec {
    ConvSpec {
        stride: BRANCH_STRIDE,
        dilation: BRANCH_DILATIONS[branch],
    }
}

/// Borrowed weights of one inner shot convolution.
#[derive(Clone, Copy)]
pub struct InnerWeights<'a> {
    /// `f x k` filters per branch.
    pub branch_w: [ArrayView2<'a, f64>; 4],
    /// `f` biases per branch.
    pub branch_b: [ArrayView1<'a, f64>; 4],
    /// `(f * C) x N`
    pub reduce_w: ArrayView2<'a, f64>,
    pub reduce_b: ArrayView1<'a, f64>,
}

impl InnerWeights<'_> {
    fn filters(&self) -> usize {
        self.branch_w[0].nrows()
    }

    fn check(&self, width: usize) -> Result<()> {
        if width % BRANCH_STRIDE != 0 {
            return Err(Error::InvalidArgument(format!(
                "shot width {width} is not divisible by the stride {BRANCH_STRIDE}"
            )));
        }
        let f = self.filters();
        for b in 0..4 {
            if self.branch_w[b].dim() != (f, BRANCH_KERNELS[b]) || self.branch_b[b].len() != f {
                return Err(Error::dims(
                    "inner_shotconv",
                    format!("branch {b} weights are {:?}", self.branch_w[b].dim()),
                ));
            }
        }
        if self.reduce_w.nrows() != f * width || self.reduce_w.ncols() != self.reduce_b.len() {
            return Err(Error::dims(
                "inner_shotconv",
                format!(
                    "reduce is {:?} for concatenated width {}",
                    self.reduce_w.dim(),
                    f * width
                ),
            ));
        }
        Ok(())
    }
}

/// Output of [`inner_shotconv`] with the concatenated branch features kept.
pub struct InnerOutput {
    /// `S x (f * C)`
    pub concat: Array2<f64>,
    /// `S x N`
    pub out: Array2<f64>,
}

/// Applies the branches and reduction to each shot row independently.
pub fn inner_shotconv(shot_reps: ArrayView2<f64>, w: &InnerWeights) -> Result<InnerOutput> {
    let width = shot_reps.ncols();
    w.check(width)?;
    let f = w.filters();
    let seg = width / BRANCH_STRIDE;
    let mut concat = Array2::zeros((shot_reps.nrows(), f * width));
    for (s, row) in shot_reps.rows().into_iter().enumerate() {
        for b in 0..4 {
            for j in 0..f {
                let y = strided_conv1d(row, w.branch_w[b].row(j), w.branch_b[b][j], branch_spec(b))?;
                let off = (b * f + j) * seg;
                concat.slice_mut(s![s, off..off + seg]).assign(&y);
            }
        }
    }
    let out = concat.dot(&w.reduce_w) + &w.reduce_b;
    Ok(InnerOutput { concat, out })
}

pub struct InnerGrads {
    pub dshot_reps: Array2<f64>,
    pub dbranch_w: [Array2<f64>; 4],
    pub dbranch_b: [Array1<f64>; 4],
    pub dreduce_w: Array2<f64>,
    pub dreduce_b: Array1<f64>,
}

pub fn inner_shotconv_backward(
    shot_reps: ArrayView2<f64>,
    w: &InnerWeights,
    fwd: &InnerOutput,
    dout: ArrayView2<f64>,
) -> InnerGrads {
    let width = shot_reps.ncols();
    let f = w.filters();
    let seg = width / BRANCH_STRIDE;
    let dreduce_w = fwd.concat.t().dot(&dout);
    let dreduce_b = dout.sum_axis(Axis(0));
    let dconcat = dout.dot(&w.reduce_w.t());
    let mut dshot_reps = Array2::zeros(shot_reps.raw_dim());
    let mut dbranch_w = BRANCH_KERNELS.map(|k| Array2::zeros((f, k)));
    let mut dbranch_b = BRANCH_KERNELS.map(|_| Array1::zeros(f));
    for (s, row) in shot_reps.rows().into_iter().enumerate() {
        for b in 0..4 {
            for j in 0..f {
                let off = (b * f + j) * seg;
                let g = strided_conv1d_backward(
                    row,
                    w.branch_w[b].row(j),
                    branch_spec(b),
                    dconcat.slice(s![s, off..off + seg]),
                );
                let mut dw = dbranch_w[b].row_mut(j);
                dw += &g.dkernel;
                dbranch_b[b][j] += g.dbias;
                let mut ds = dshot_reps.row_mut(s);
                ds += &g.dsignal;
            }
        }
    }
    InnerGrads {
        dshot_reps,
        dbranch_w,
        dbranch_b,
        dreduce_w,
        dreduce_b,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Owned {
        bw: [Array2<f64>; 4],
        bb: [Array1<f64>; 4],
        rw: Array2<f64>,
        rb: Array1<f64>,
    }

    impl Owned {
        fn zeros(f: usize, width: usize, n: usize) -> Self {
            Self {
                bw: BRANCH_KERNELS.map(|k| Array2::zeros((f, k))),
                bb: BRANCH_KERNELS.map(|_| Array1::zeros(f)),
                rw: Array2::zeros((f * width, n)),
                rb: Array1::zeros(n),
            }
        }

        fn random(rng: &mut ChaCha8Rng, f: usize, width: usize, n: usize) -> Self {
            let mut o = Self::zeros(f, width, n);
            o.bw.iter_mut().for_each(|a| a.mapv_inplace(|_| rng.random_range(-1.0..1.0)));
            o.bb.iter_mut().for_each(|a| a.mapv_inplace(|_| rng.random_range(-1.0..1.0)));
            o.rw.mapv_inplace(|_| rng.random_range(-1.0..1.0));
            o.rb.mapv_inplace(|_| rng.random_range(-1.0..1.0));
            o
        }

        fn view(&self) -> InnerWeights<'_> {
            InnerWeights {
                branch_w: [self.bw[0].view(), self.bw[1].view(), self.bw[2].view(), self.bw[3].view()],
                branch_b: [self.bb[0].view(), self.bb[1].view(), self.bb[2].view(), self.bb[3].view()],
                reduce_w: self.rw.view(),
                reduce_b: self.rb.view(),
            }
        }
    }

    #[test]
    fn zero_branches_give_reduce_bias() {
        let mut w = Owned::zeros(1, 8, 3);
        w.rb.fill(0.25);
        let x = Array2::from_shape_fn((4, 8), |(i, j)| (i * j) as f64);
        let y = inner_shotconv(x.view(), &w.view()).unwrap();
        assert_eq!(y.out, Array2::from_elem((4, 3), 0.25));
        assert_eq!(y.concat.ncols(), 8);
    }

    #[test]
    fn kernel_one_branch_trace() {
        // width 8, f = 1: branch 0 output occupies concat[0..2] = w * x[0], w * x[4]
        let mut w = Owned::zeros(1, 8, 2);
        w.bw[0][[0, 0]] = 3.0;
        w.rw[[0, 1]] = 1.0;
        let x = Array2::from_shape_fn((2, 8), |(i, j)| (10 * i + j) as f64 + 1.0);
        let y = inner_shotconv(x.view(), &w.view()).unwrap();
        assert_eq!(y.out.column(1).to_vec(), vec![3.0 * 1.0, 3.0 * 11.0]);
        assert_eq!(y.out.column(0).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn shots_do_not_mix() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = Owned::random(&mut rng, 2, 12, 3);
        let x = Array2::from_shape_fn((5, 12), |_| rng.random_range(-1.0..1.0));
        let mut x2 = x.clone();
        x2.row_mut(3).mapv_inplace(|v| v + 1.0);
        let a = inner_shotconv(x.view(), &w.view()).unwrap().out;
        let b = inner_shotconv(x2.view(), &w.view()).unwrap().out;
        for s in 0..5 {
            let changed = a.row(s) != b.row(s);
            assert_eq!(changed, s == 3);
        }
    }

    #[test]
    fn rejects_width_not_divisible_by_stride() {
        let w = Owned::zeros(1, 6, 2);
        let x = Array2::zeros((2, 6));
        assert!(inner_shotconv(x.view(), &w.view()).is_err());
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (f, width, n) = (2, 8, 3);
        let w = Owned::random(&mut rng, f, width, n);
        let x = Array2::from_shape_fn((3, width), |_| rng.random_range(-1.0..1.0));
        let up = Array2::from_shape_fn((3, n), |_| rng.random_range(-1.0..1.0));
        let loss = |x: &Array2<f64>, w: &Owned| (inner_shotconv(x.view(), &w.view()).unwrap().out * &up).sum();
        let fwd = inner_shotconv(x.view(), &w.view()).unwrap();
        let g = inner_shotconv_backward(x.view(), &w.view(), &fwd, up.view());
        let eps = 1e-6;
        for b in 0..4 {
            for j in 0..f {
                for k in 0..BRANCH_KERNELS[b] {
                    let mut wp = Owned { bw: w.bw.clone(), bb: w.bb.clone(), rw: w.rw.clone(), rb: w.rb.clone() };
                    wp.bw[b][[j, k]] += eps;
                    let mut wm = Owned { bw: w.bw.clone(), bb: w.bb.clone(), rw: w.rw.clone(), rb: w.rb.clone() };
                    wm.bw[b][[j, k]] -= eps;
                    let num = (loss(&x, &wp) - loss(&x, &wm)) / (2.0 * eps);
                    assert!((num - g.dbranch_w[b][[j, k]]).abs() < 1e-7);
                }
            }
        }
        for idx in [(0, 0), (1, 5), (2, 7)] {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[idx] += eps;
            xm[idx] -= eps;
            let num = (loss(&xp, &w) - loss(&xm, &w)) / (2.0 * eps);
            assert!((num - g.dshot_reps[idx]).abs() < 1e-7);
        }
    }
}
