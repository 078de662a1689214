//! Shared-handle tensors: shape, row-major values, optional gradient.

use super::AdError;
use std::cell::{Ref, RefCell};
use std::rc::Rc;

struct TensorData {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

/// A cheaply cloneable handle to one tensor. Values are written once by the
/// op that produces them; gradients accumulate during the backward pass.
#[derive(Clone)]
pub struct Tensor {
    data: Rc<RefCell<TensorData>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, AdError> {
        let numel: usize = shape.iter().product();
        if values.len() != numel {
            return Err(AdError::ShapeMismatch(format!(
                "{} values for shape {:?} ({} elements)",
                values.len(),
                shape,
                numel
            )));
        }
        Ok(Self::raw(shape, values, false))
    }

    /// Trainable tensor: participates in gradient accumulation.
    pub fn param(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, AdError> {
        let t = Self::new(shape, values)?;
        t.data.borrow_mut().requires_grad = true;
        Ok(t)
    }

    pub fn scalar(value: f64) -> Self {
        Self::raw(vec![1], vec![value], false)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self::raw(shape, vec![0.0; numel], false)
    }

    pub(crate) fn raw(shape: Vec<usize>, values: Vec<f64>, requires_grad: bool) -> Self {
        Self {
            data: Rc::new(RefCell::new(TensorData {
                shape,
                values,
                grad: None,
                requires_grad,
            })),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.data.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.data.borrow().values.len()
    }

    pub fn values(&self) -> Ref<'_, [f64]> {
        Ref::map(self.data.borrow(), |d| d.values.as_slice())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.borrow().values.clone()
    }

    pub fn item(&self) -> Result<f64, AdError> {
        let d = self.data.borrow();
        if d.values.len() != 1 {
            return Err(AdError::NotScalar(d.shape.clone()));
        }
        Ok(d.values[0])
    }

    pub fn requires_grad(&self) -> bool {
        self.data.borrow().requires_grad
    }

    /// Toggles gradient tracking, e.g. to freeze one network while the other
    /// trains through it.
    pub fn set_requires_grad(&self, on: bool) {
        self.data.borrow_mut().requires_grad = on;
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.data.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        self.data.borrow_mut().grad = None;
    }

    pub(crate) fn seed_grad_ones(&self) {
        let mut d = self.data.borrow_mut();
        let n = d.values.len();
        d.grad = Some(vec![1.0; n]);
    }

    pub(crate) fn accumulate_grad(&self, delta: &[f64]) {
        let mut d = self.data.borrow_mut();
        match &mut d.grad {
            Some(g) => {
                for (gi, &di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => d.grad = Some(delta.to_vec()),
        }
    }

    /// In-place update of the values, e.g. an optimizer step or weight clamp.
    pub fn update_values(&self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.data.borrow_mut().values);
    }

    /// Identity of the underlying storage; two handles to one tensor compare equal.
    pub fn ptr_eq(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.data, &other.data)
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let d = self.data.borrow();
        f.debug_struct("Tensor")
            .field("shape", &d.shape)
            .field("requires_grad", &d.requires_grad)
            .finish_non_exhaustive()
    }
}
