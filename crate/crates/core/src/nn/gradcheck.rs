//! Central finite-difference verification of analytic gradients.

use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ParamSet;

/// A scalar objective over a parameter set.
pub trait Objective {
    fn loss(&self, params: &ParamSet) -> f64;

    /// Overwrites the gradient slots of `params` and returns the loss.
    fn loss_and_grad(&self, params: &mut ParamSet) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub tol: f64,
    /// Coordinates checked per tensor; smaller tensors are checked exhaustively.
    pub coords_per_tensor: usize,
    /// Denominator floor of the relative error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tol: 1e-4,
            coords_per_tensor: 128,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub shape: Vec<usize>,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
    /// Analytic gradient is identically zero over the whole tensor.
    pub zero_grad: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub loss: f64,
    pub tol: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &TensorCheck> {
        self.tensors.iter().filter(|t| !t.passed)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "loss = {:.12e}, tolerance = {:e}", self.loss, self.tol)?;
        writeln!(
            f,
            "{:<36} {:>14} {:>8} {:>12}  status",
            "tensor", "shape", "checked", "max_rel_err"
        )?;
        for t in &self.tensors {
            let status = match (t.passed, t.zero_grad) {
                (true, _) => "ok",
                (false, true) => "ZERO-GRADIENT",
                (false, false) => "FAIL",
            };
            writeln!(
                f,
                "{:<36} {:>14} {:>8} {:>12.3e}  {}",
                t.name,
                format!("{:?}", t.shape),
                t.checked,
                t.max_rel_err,
                status
            )?;
        }
        write!(
            f,
            "overall: {}",
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Compares analytic gradients against `(f(x + eps) - f(x - eps)) / (2 eps)`.
///
/// Parameter values are restored after every perturbation; the gradient slots
/// hold the analytic gradient on return.
pub fn grad_check<O: Objective + ?Sized>(
    objective: &O,
    params: &mut ParamSet,
    opts: &GradCheckOptions,
) -> GradCheckReport {
    let loss = objective.loss_and_grad(params);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let ids: Vec<_> = params.ids().collect();
    let mut tensors = Vec::with_capacity(ids.len());
    for id in ids {
        let len = params.values().get(id).len();
        let coords: Vec<usize> = if len <= opts.coords_per_tensor {
            (0..len).collect()
        } else {
            let mut picked = sample(&mut rng, len, opts.coords_per_tensor).into_vec();
            picked.sort_unstable();
            picked
        };
        let analytic: Vec<f64> = {
            let g = params.grads().get(id);
            let flat = g.as_slice().expect("contiguous gradient");
            coords.iter().map(|&c| flat[c]).collect()
        };
        let zero_grad = params.grads().get(id).iter().all(|&g| g == 0.0);
        let mut max_rel_err = 0.0f64;
        let mut worst_index = 0;
        for (&c, &a) in coords.iter().zip(&analytic) {
            let orig = flat_get(params, id, c);
            flat_set(params, id, c, orig + opts.eps);
            let up = objective.loss(params);
            flat_set(params, id, c, orig - opts.eps);
            let down = objective.loss(params);
            flat_set(params, id, c, orig);
            let numeric = (up - down) / (2.0 * opts.eps);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            if rel > max_rel_err || !rel.is_finite() {
                max_rel_err = if rel.is_finite() { rel } else { f64::INFINITY };
                worst_index = c;
            }
        }
        tensors.push(TensorCheck {
            name: params.name(id).to_string(),
            shape: params.shape(id).to_vec(),
            checked: coords.len(),
            max_rel_err,
            worst_index,
            zero_grad,
            passed: !zero_grad && max_rel_err < opts.tol,
        });
    }
    GradCheckReport {
        loss,
        tol: opts.tol,
        tensors,
    }
}

fn flat_get(params: &ParamSet, id: super::ParamId, c: usize) -> f64 {
    params.values().get(id).as_slice().expect("contiguous parameter")[c]
}

fn flat_set(params: &mut ParamSet, id: super::ParamId, c: usize, v: f64) {
    params
        .values_mut()
        .get_mut(id)
        .as_slice_mut()
        .expect("contiguous parameter")[c] = v;
}
