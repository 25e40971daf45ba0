use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// `y = x W + b`, rowwise.
pub fn affine(x: ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array2<f64>> {
    if x.ncols() != w.nrows() || w.ncols() != b.len() {
        return Err(Error::dims(
            "affine",
            format!(
                "x is {}x{}, W is {}x{}, b has {}",
                x.nrows(),
                x.ncols(),
                w.nrows(),
                w.ncols(),
                b.len()
            ),
        ));
    }
    Ok(x.dot(&w) + &b)
}

/// Gradients of [`affine`] given the upstream gradient `dy`.
pub struct AffineGrads {
    pub dx: Array2<f64>,
    pub dw: Array2<f64>,
    pub db: Array1<f64>,
}

pub fn affine_backward(x: ArrayView2<f64>, w: ArrayView2<f64>, dy: ArrayView2<f64>) -> AffineGrads {
    AffineGrads {
        dx: dy.dot(&w.t()),
        dw: x.t().dot(&dy),
        db: dy.sum_axis(Axis(0)),
    }
}
