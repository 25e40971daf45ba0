//! Kernel temporal segmentation with a linear kernel.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Segmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KtsOptions {
    /// Largest number of change points; `None` picks `max(1, T / 4)`, capped at `T - 1`.
    pub max_change_points: Option<usize>,
    /// Weight of the `m * (ln(T / m) + 1)` penalty.
    pub penalty: f64,
}

impl Default for KtsOptions {
    fn default() -> Self {
        Self {
            max_change_points: None,
            penalty: 1.0,
        }
    }
}

impl KtsOptions {
    pub fn resolve_max(&self, frames: usize) -> usize {
        self.max_change_points
            .unwrap_or((frames / 4).max(1))
            .min(frames.saturating_sub(1))
    }
}

/// Within-segment scatter `J(a, b)` in O(1) from 2-D prefix sums of the Gram matrix.
pub struct Scatter {
    diag: Vec<f64>,
    block: Array2<f64>,
}

impl Scatter {
    pub fn new(x: ArrayView2<f64>) -> Self {
        let t = x.nrows();
        let gram = x.dot(&x.t());
        let mut diag = vec![0.0; t + 1];
        for i in 0..t {
            diag[i + 1] = diag[i] + gram[[i, i]];
        }
        let mut block = Array2::zeros((t + 1, t + 1));
        for i in 0..t {
            for j in 0..t {
                block[[i + 1, j + 1]] = gram[[i, j]] + block[[i, j + 1]] + block[[i + 1, j]] - block[[i, j]];
            }
        }
        Self { diag, block }
    }

    pub fn len(&self) -> usize {
        self.diag.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Scatter of the inclusive segment `[a, b]`.
    pub fn cost(&self, a: usize, b: usize) -> f64 {
        let (lo, hi) = (a, b + 1);
        let within = self.block[[hi, hi]] - self.block[[lo, hi]] - self.block[[hi, lo]] + self.block[[lo, lo]];
        self.diag[hi] - self.diag[lo] - within / (hi - lo) as f64
    }
}

/// Optimal segmentations for every change-point count up to `max_cp`.
///
/// Returns, for each `m`, the start indices of segments 2..=m+1 and the total scatter.
fn solve_all(scatter: &Scatter, max_cp: usize) -> Vec<(Vec<usize>, f64)> {
    let t = scatter.len();
    // best[k][b]: cost of covering 0..=b with k+1 segments; from[k][b]: start of the last one
    let mut best = vec![vec![f64::INFINITY; t]; max_cp + 1];
    let mut from = vec![vec![0usize; t]; max_cp + 1];
    for b in 0..t {
        best[0][b] = scatter.cost(0, b);
    }
    for k in 1..=max_cp {
        for b in k..t {
            let (mut v, mut arg) = (f64::INFINITY, k);
            for a in k..=b {
                let c = best[k - 1][a - 1] + scatter.cost(a, b);
                if c < v {
                    v = c;
                    arg = a;
                }
            }
            best[k][b] = v;
            from[k][b] = arg;
        }
    }
    (0..=max_cp)
        .map(|m| {
            let mut cps = Vec::with_capacity(m);
            let mut b = t - 1;
            for k in (1..=m).rev() {
                let a = from[k][b];
                cps.push(a);
                b = a - 1;
            }
            cps.reverse();
            (cps, best[m][t - 1])
        })
        .collect()
}

fn check(frames: usize, max_cp: usize) -> Result<()> {
    if frames < 2 {
        return Err(Error::InvalidArgument(format!("segmentation needs at least 2 frames, got {frames}")));
    }
    if max_cp >= frames {
        return Err(Error::InvalidArgument(format!(
            "{max_cp} change points requested for {frames} frames"
        )));
    }
    Ok(())
}

/// Best placement of exactly `m` change points. Change points are the first
/// frame of each segment after the first.
pub fn kts_fixed(x: ArrayView2<f64>, m: usize) -> Result<(Vec<usize>, f64)> {
    check(x.nrows(), m)?;
    Ok(solve_all(&Scatter::new(x), m).pop().expect("m + 1 entries"))
}

pub fn kts_penalty(frames: usize, m: usize, weight: f64) -> f64 {
    if m == 0 {
        0.0
    } else {
        weight * m as f64 * ((frames as f64 / m as f64).ln() + 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KtsResult {
    pub change_points: Vec<usize>,
    /// Total scatter of the chosen segmentation.
    pub cost: f64,
    /// Scatter plus penalty.
    pub objective: f64,
}

impl KtsResult {
    /// Inclusive segments over `0..frames`.
    pub fn segments(&self, frames: usize) -> Vec<[usize; 2]> {
        change_points_to_segments(&self.change_points, frames)
    }
}

pub fn change_points_to_segments(change_points: &[usize], frames: usize) -> Vec<[usize; 2]> {
    let mut out = Vec::with_capacity(change_points.len() + 1);
    let mut start = 0;
    for &c in change_points {
        out.push([start, c - 1]);
        start = c;
    }
    out.push([start, frames - 1]);
    out
}

/// Chooses the change-point count minimizing scatter plus penalty; ties go to fewer points.
pub fn kts_segment(x: ArrayView2<f64>, max_change_points: usize, penalty_weight: f64) -> Result<KtsResult> {
    let t = x.nrows();
    check(t, max_change_points)?;
    let mut best: Option<KtsResult> = None;
    for (m, (change_points, cost)) in solve_all(&Scatter::new(x), max_change_points).into_iter().enumerate() {
        let objective = cost + kts_penalty(t, m, penalty_weight);
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(KtsResult {
                change_points,
                cost,
                objective,
            });
        }
    }
    Ok(best.expect("at least m = 0"))
}
