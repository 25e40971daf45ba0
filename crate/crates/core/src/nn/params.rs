//! Named learnable tensors with parallel gradient slots.

use ndarray::{ArrayD, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Ix1, Ix2, IxDyn};

use crate::error::{Error, Result};

/// Index of a tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A list of dense tensors addressed by [`ParamId`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tensors(Vec<ArrayD<f64>>);

impl Tensors {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &ArrayD<f64> {
        &self.0[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ArrayD<f64> {
        &mut self.0[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ArrayD<f64>> {
        self.0.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ArrayD<f64>> {
        self.0.iter_mut()
    }

    pub fn mat(&self, id: ParamId) -> ArrayView2<'_, f64> {
        self.0[id.0]
            .view()
            .into_dimensionality::<Ix2>()
            .expect("parameter is not a matrix")
    }

    pub fn vector(&self, id: ParamId) -> ArrayView1<'_, f64> {
        self.0[id.0]
            .view()
            .into_dimensionality::<Ix1>()
            .expect("parameter is not a vector")
    }

    pub fn mat_mut(&mut self, id: ParamId) -> ArrayViewMut2<'_, f64> {
        self.0[id.0]
            .view_mut()
            .into_dimensionality::<Ix2>()
            .expect("parameter is not a matrix")
    }

    pub fn vector_mut(&mut self, id: ParamId) -> ArrayViewMut1<'_, f64> {
        self.0[id.0]
            .view_mut()
            .into_dimensionality::<Ix1>()
            .expect("parameter is not a vector")
    }

    pub(crate) fn zeros_like(other: &Tensors) -> Tensors {
        Tensors(
            other
                .0
                .iter()
                .map(|t| ArrayD::zeros(t.raw_dim()))
                .collect(),
        )
    }

    pub(crate) fn fill_zero(&mut self) {
        for t in &mut self.0 {
            t.fill(0.0);
        }
    }
}

/// Every learnable tensor of a model, with a gradient tensor of identical shape.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    values: Tensors,
    grads: Tensors,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor under a unique name.
    pub fn register(&mut self, name: impl Into<String>, value: ArrayD<f64>) -> Result<ParamId> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::InvalidArgument(format!(
                "duplicate parameter name `{name}`"
            )));
        }
        let id = ParamId(self.names.len());
        self.grads.0.push(ArrayD::zeros(value.raw_dim()));
        self.values.0.push(value);
        self.names.push(name);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        self.values.0[id.0].shape()
    }

    pub fn values(&self) -> &Tensors {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Tensors {
        &mut self.values
    }

    pub fn grads(&self) -> &Tensors {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut Tensors {
        &mut self.grads
    }

    /// Read-only values alongside writable gradients, for backward passes.
    pub fn split_mut(&mut self) -> (&Tensors, &mut Tensors) {
        (&self.values, &mut self.grads)
    }

    pub fn zero_grads(&mut self) {
        self.grads.fill_zero();
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.values.0.iter().map(|t| t.len()).sum()
    }

    /// Replaces the value of `name`, checking the shape.
    pub fn set_value(&mut self, name: &str, value: ArrayD<f64>) -> Result<()> {
        let id = self
            .id_of(name)
            .ok_or_else(|| Error::NotFound(format!("parameter `{name}`")))?;
        if self.values.0[id.0].shape() != value.shape() {
            return Err(Error::dims(
                "set_value",
                format!(
                    "`{name}` has shape {:?}, got {:?}",
                    self.values.0[id.0].shape(),
                    value.shape()
                ),
            ));
        }
        self.values.0[id.0] = value;
        Ok(())
    }

    pub(crate) fn entries(&self) -> impl Iterator<Item = (&str, &ArrayD<f64>)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.values.0.iter())
    }
}

pub(crate) fn dyn_shape(shape: &[usize]) -> IxDyn {
    IxDyn(shape)
}
