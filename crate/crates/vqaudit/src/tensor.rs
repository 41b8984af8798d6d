//! Dense row-major f64 tensors and named parameter sets.
//!
//! This is deliberately not a general tensor library: the model architecture
//! is fixed, so only the handful of accessors and elementwise helpers the
//! layers and optimizer need are provided. All training and analysis math is
//! f64; 32-bit floats appear only in the checkpoint file.

use crate::error::{Error, Result};

/// Row-major dense tensor. Invariant: `shape.iter().product() == data.len()`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; len] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Config(format!(
                "tensor shape {:?} implies {} elements, got {}",
                shape,
                len,
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    /// Fills a new tensor from `f(flat_index)`.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Tensor {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: (0..len).map(|i| f(i)).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Reinterprets the buffer under a new shape of equal volume.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Tensor> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(Error::Config(format!(
                "cannot reshape {:?} ({} elements) to {:?} ({} elements)",
                self.shape,
                self.data.len(),
                shape,
                len
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Errors with `name` if any entry is NaN or infinite.
    pub fn check_finite(&self, name: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(name.to_string()))
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// `self += other`, shapes must match.
    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }
}

// ---------------------------------------------------------------------------
// Parameters and optimizer state
// ---------------------------------------------------------------------------

/// One named parameter tensor with its gradient and Adam moments.
///
/// Invariant: `grad`, `m`, and `v` always have exactly the parameter's shape;
/// `step` counts completed optimizer updates for this parameter.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub(crate) m: Tensor,
    pub(crate) v: Tensor,
    pub(crate) step: u64,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Param {
        let shape = value.shape().to_vec();
        Param {
            name: name.into(),
            value,
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Ordered collection of parameters; order defines checkpoint layout.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet { params: Vec::new() }
    }

    pub fn push(&mut self, param: Param) {
        debug_assert!(
            self.params.iter().all(|p| p.name != param.name),
            "duplicate parameter name {}",
            param.name
        );
        self.params.push(param);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    /// Sets every gradient to zero (start of a training step).
    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }
}
