//! Timeline bookkeeping: cross-shot padding, shot split, pooling and expansion.

use ndarray::{s, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Equal blocks of `floor(T / S)` frames; the last shot absorbs the remainder.
pub fn original_shot_bounds(frames: usize, shots: usize) -> Vec<(usize, usize)> {
    let d = frames / shots;
    (0..shots)
        .map(|s| {
            let end = if s + 1 == shots { frames - 1 } else { (s + 1) * d - 1 };
            (s * d, end)
        })
        .collect()
}

/// Prefix length per shot: `round(eta * floor(T / S))`, at least 1 when `eta > 0`.
pub fn pad_length(frames: usize, shots: usize, pad_ratio: f64) -> usize {
    if pad_ratio <= 0.0 {
        return 0;
    }
    ((pad_ratio * (frames / shots) as f64).round() as usize).max(1)
}

/// Where every row of a padded sequence comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PadPlan {
    pub frames: usize,
    pub shots: usize,
    /// Prefix length `P` added in front of every shot.
    pub pad: usize,
    /// Inclusive original-timeline bounds of each shot.
    pub shot_bounds: Vec<(usize, usize)>,
    /// Original frame copied into each padded row; length `T + S * P`.
    pub source: Vec<usize>,
}

impl PadPlan {
    pub fn new(frames: usize, shots: usize, pad_ratio: f64) -> Result<Self> {
        if shots == 0 {
            return Err(Error::InvalidArgument("shot count must be positive".into()));
        }
        if frames < shots {
            return Err(Error::SequenceTooShort { frames, shots });
        }
        if !(0.0..1.0).contains(&pad_ratio) {
            return Err(Error::InvalidArgument(format!(
                "padding ratio {pad_ratio} is outside [0, 1)"
            )));
        }
        let pad = pad_length(frames, shots, pad_ratio);
        let shot_bounds = original_shot_bounds(frames, shots);
        let mut source = Vec::with_capacity(frames + shots * pad);
        for s in 0..shots {
            let prev_end = shot_bounds[(s + shots - 1) % shots].1;
            source.extend(prev_end + 1 - pad..=prev_end);
            let (a, b) = shot_bounds[s];
            source.extend(a..=b);
        }
        Ok(Self {
            frames,
            shots,
            pad,
            shot_bounds,
            source,
        })
    }

    pub fn padded_len(&self) -> usize {
        self.source.len()
    }

    /// Shot index of every original frame.
    pub fn frame_shot(&self) -> Vec<usize> {
        let mut out = vec![0; self.frames];
        for (s, &(a, b)) in self.shot_bounds.iter().enumerate() {
            out[a..=b].fill(s);
        }
        out
    }
}

/// Prepends to every shot a copy of the previous shot's last `P` frames; the
/// first shot takes its prefix from the last shot.
pub fn cross_shot_pad(x: ArrayView2<f64>, shots: usize, pad_ratio: f64) -> Result<(Array2<f64>, PadPlan)> {
    let plan = PadPlan::new(x.nrows(), shots, pad_ratio)?;
    Ok((x.select(Axis(0), &plan.source), plan))
}

/// Inclusive row ranges of each shot block over a sequence of `rows` rows.
///
/// Block `s` (0-based) spans rows `s*D ..= s*D + D` with `D = floor(rows / S)`,
/// one row overlapping the next block. The last block runs to the end of the
/// sequence and so absorbs any remainder.
pub fn shot_blocks(rows: usize, shots: usize) -> Result<Vec<(usize, usize)>> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shot count must be positive".into()));
    }
    if rows < shots {
        return Err(Error::SequenceTooShort {
            frames: rows,
            shots,
        });
    }
    let d = rows / shots;
    Ok((0..shots)
        .map(|s| {
            let start = s * d;
            let end = if s + 1 == shots { rows - 1 } else { start + d };
            (start, end)
        })
        .collect())
}

/// Per-shot frame blocks of a padded, lifted sequence.
pub fn split_shots(f_cp: ArrayView2<f64>, shots: usize) -> Result<Vec<Array2<f64>>> {
    Ok(shot_blocks(f_cp.nrows(), shots)?
        .into_iter()
        .map(|(a, b)| f_cp.slice(s![a..=b, ..]).to_owned())
        .collect())
}

/// Mean over the frames of each block.
pub fn pool_shots(blocks: &[Array2<f64>]) -> Result<Array2<f64>> {
    let width = blocks.first().map_or(0, |b| b.ncols());
    let mut out = Array2::zeros((blocks.len(), width));
    for (s, block) in blocks.iter().enumerate() {
        if block.nrows() == 0 || block.ncols() != width {
            return Err(Error::dims("pool_shots", format!("block {s} is {:?}", block.dim())));
        }
        out.row_mut(s).assign(&block.mean_axis(Axis(0)).unwrap());
    }
    Ok(out)
}

/// Block means computed directly from row ranges.
pub(crate) fn pool_ranges(x: ArrayView2<f64>, blocks: &[(usize, usize)]) -> Array2<f64> {
    let mut out = Array2::zeros((blocks.len(), x.ncols()));
    for (s, &(a, b)) in blocks.iter().enumerate() {
        out.row_mut(s)
            .assign(&x.slice(s![a..=b, ..]).mean_axis(Axis(0)).unwrap());
    }
    out
}

/// Adjoint of [`pool_ranges`].
pub(crate) fn pool_ranges_backward(rows: usize, blocks: &[(usize, usize)], dpooled: ArrayView2<f64>) -> Array2<f64> {
    let mut dx = Array2::zeros((rows, dpooled.ncols()));
    for (s, &(a, b)) in blocks.iter().enumerate() {
        let g = &dpooled.row(s) / (b - a + 1) as f64;
        for r in a..=b {
            let mut row = dx.row_mut(r);
            row += &g;
        }
    }
    dx
}

/// Gives every frame the representation of its original-timeline shot.
pub fn expand_to_frames(shot_reps: ArrayView2<f64>, plan: &PadPlan) -> Result<Array2<f64>> {
    if shot_reps.nrows() != plan.shots {
        return Err(Error::dims(
            "expand_to_frames",
            format!("{} shot rows for {} shots", shot_reps.nrows(), plan.shots),
        ));
    }
    Ok(shot_reps.select(Axis(0), &plan.frame_shot()))
}

/// Adjoint of [`expand_to_frames`]: sums frame gradients per shot.
pub(crate) fn expand_backward(dframes: ArrayView2<f64>, plan: &PadPlan) -> Array2<f64> {
    let mut out = Array2::zeros((plan.shots, dframes.ncols()));
    for (s, &(a, b)) in plan.shot_bounds.iter().enumerate() {
        out.row_mut(s)
            .assign(&dframes.slice(s![a..=b, ..]).sum_axis(Axis(0)));
    }
    out
}

/// Adjoint of the padding gather.
pub(crate) fn pad_backward(dpadded: ArrayView2<f64>, plan: &PadPlan) -> Array2<f64> {
    let mut dx = Array2::zeros((plan.frames, dpadded.ncols()));
    for (r, &src) in plan.source.iter().enumerate() {
        let mut row = dx.row_mut(src);
        row += &dpadded.row(r);
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1, Array2};

    fn numbered(t: usize) -> Array2<f64> {
        Array2::from_shape_fn((t, 1), |(i, _)| (i + 1) as f64)
    }

    fn column(x: &Array2<f64>) -> Vec<f64> {
        x.column(0).to_vec()
    }

    #[test]
    fn pad_two_shots() {
        let (p, plan) = cross_shot_pad(numbered(8).view(), 2, 0.25).unwrap();
        assert_eq!(
            column(&p),
            vec![8.0, 1.0, 2.0, 3.0, 4.0, 4.0, 5.0, 6.0, 7.0, 8.0]
        );
        assert_eq!(plan.pad, 1);
        assert_eq!(plan.padded_len(), 10);
    }

    #[test]
    fn zero_ratio_is_identity() {
        let x = numbered(9);
        let (p, plan) = cross_shot_pad(x.view(), 3, 0.0).unwrap();
        assert_eq!(p, x);
        assert_eq!(plan.pad, 0);
    }

    #[test]
    fn single_shot_pads_circularly() {
        let (p, _) = cross_shot_pad(numbered(4).view(), 1, 0.5).unwrap();
        assert_eq!(column(&p), vec![3.0, 4.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn short_ratio_still_pads_one() {
        // 0.05 * 24 rounds to 1; 0.05 * 6 rounds to 0 and is lifted to 1
        assert_eq!(pad_length(120, 5, 0.05), 1);
        assert_eq!(pad_length(30, 5, 0.05), 1);
        assert_eq!(pad_length(30, 5, 0.0), 0);
    }

    #[test]
    fn pad_errors() {
        assert!(matches!(
            cross_shot_pad(numbered(3).view(), 4, 0.1),
            Err(Error::SequenceTooShort { .. })
        ));
        assert!(cross_shot_pad(numbered(3).view(), 1, 1.0).is_err());
    }

    #[test]
    fn blocks_follow_overlap_rule() {
        assert_eq!(shot_blocks(10, 2).unwrap(), vec![(0, 5), (5, 9)]);
        assert_eq!(shot_blocks(11, 2).unwrap(), vec![(0, 5), (5, 10)]);
        assert_eq!(shot_blocks(4, 4).unwrap(), vec![(0, 1), (1, 2), (2, 3), (3, 3)]);
        assert!(shot_blocks(3, 4).is_err());
    }

    #[test]
    fn pooling() {
        let blocks = vec![array![[1.0, 3.0], [3.0, 5.0]], Array2::from_elem((3, 2), 7.0)];
        assert_eq!(pool_shots(&blocks).unwrap(), array![[2.0, 4.0], [7.0, 7.0]]);
    }

    #[test]
    fn weighted_pool_mean_matches_multiplicity_mean() {
        let x = Array2::from_shape_fn((11, 3), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 1.3);
        let blocks = shot_blocks(11, 3).unwrap();
        let pooled = pool_ranges(x.view(), &blocks);
        let sizes: Vec<f64> = blocks.iter().map(|&(a, b)| (b - a + 1) as f64).collect();
        let total: f64 = sizes.iter().sum();
        let weighted = pooled
            .rows()
            .into_iter()
            .zip(&sizes)
            .fold(Array1::<f64>::zeros(3), |acc, (r, &w)| acc + &r * w)
            / total;
        let mut mult = Array1::<f64>::zeros(3);
        for &(a, b) in &blocks {
            for r in a..=b {
                mult += &x.row(r);
            }
        }
        mult /= total;
        for (a, b) in weighted.iter().zip(mult.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn expansion_assigns_remainder_to_last_shot() {
        let plan = PadPlan::new(5, 2, 0.0).unwrap();
        let reps = array![[1.0], [2.0]];
        let f = expand_to_frames(reps.view(), &plan).unwrap();
        assert_eq!(column(&f), vec![1.0, 1.0, 2.0, 2.0, 2.0]);
        let plan = PadPlan::new(6, 1, 0.0).unwrap();
        let f = expand_to_frames(array![[4.0]].view(), &plan).unwrap();
        assert_eq!(column(&f), vec![4.0; 6]);
    }

    #[test]
    fn adjoints_are_transposes() {
        // <A x, y> == <x, A^T y> for the gather, pooling and expansion maps
        let plan = PadPlan::new(13, 3, 0.3).unwrap();
        let x = Array2::from_shape_fn((13, 2), |(i, j)| (i as f64 * 0.37 + j as f64).sin());
        let y = Array2::from_shape_fn((plan.padded_len(), 2), |(i, j)| (i as f64 * 0.11 - j as f64).cos());
        let lhs = (&x.select(Axis(0), &plan.source) * &y).sum();
        let rhs = (&x * &pad_backward(y.view(), &plan)).sum();
        assert!((lhs - rhs).abs() < 1e-12);

        let blocks = shot_blocks(plan.padded_len(), 3).unwrap();
        let z = Array2::from_shape_fn((3, 2), |(i, j)| (i + 2 * j) as f64 - 1.5);
        let lhs = (&pool_ranges(y.view(), &blocks) * &z).sum();
        let rhs = (&y * &pool_ranges_backward(plan.padded_len(), &blocks, z.view())).sum();
        assert!((lhs - rhs).abs() < 1e-12);

        let lhs = (&expand_to_frames(z.view(), &plan).unwrap() * &x).sum();
        let rhs = (&z * &expand_backward(x.view(), &plan)).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
