//! Exact 0/1 knapsack by dynamic programming.

use crate::error::{Error, Result};

/// Maximizes the summed value of a subset whose summed weight fits `capacity`.
///
/// Among optimal subsets the reconstruction walks items in ascending order and
/// includes an item whenever an optimal completion still exists with it, which
/// yields the lexicographically smallest optimal index set.
pub fn knapsack_select(values: &[f64], weights: &[usize], capacity: usize) -> Result<(Vec<usize>, f64)> {
    if values.len() != weights.len() {
        return Err(Error::dims(
            "knapsack_select",
            format!("{} values for {} weights", values.len(), weights.len()),
        ));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("knapsack value {v} is not finite")));
    }
    let n = values.len();
    let width = capacity + 1;
    // suffix[i * width + c]: best value from items i.. with capacity c
    let mut suffix = vec![0.0f64; (n + 1) * width];
    for i in (0..n).rev() {
        for c in 0..width {
            let skip = suffix[(i + 1) * width + c];
            suffix[i * width + c] = if weights[i] <= c {
                skip.max(values[i] + suffix[(i + 1) * width + c - weights[i]])
            } else {
                skip
            };
        }
    }
    let mut chosen = Vec::new();
    let mut c = capacity;
    for i in 0..n {
        if weights[i] <= c && values[i] + suffix[(i + 1) * width + c - weights[i]] == suffix[i * width + c] {
            chosen.push(i);
            c -= weights[i];
        }
    }
    Ok((chosen, suffix[capacity]))
}
