use std::cell::{Ref, RefCell};
use std::fmt;
use std::rc::Rc;

use crate::tensor::NdArray;
use crate::Scalar;

struct ParamState {
    name: String,
    value: NdArray,
    grad: NdArray,
}

/// A trainable array with persistent identity across graphs.
///
/// Cloning a `Parameter` clones the handle, not the data.
#[derive(Clone)]
pub struct Parameter(Rc<RefCell<ParamState>>);

impl Parameter {
    pub fn new(name: impl Into<String>, value: NdArray) -> Self {
        let grad = NdArray::zeros(value.shape());
        Parameter(Rc::new(RefCell::new(ParamState {
            name: name.into(),
            value,
            grad,
        })))
    }

    pub fn name(&self) -> String {
        self.0.borrow().name.clone()
    }

    pub fn value(&self) -> Ref<'_, NdArray> {
        Ref::map(self.0.borrow(), |s| &s.value)
    }

    pub fn grad(&self) -> Ref<'_, NdArray> {
        Ref::map(self.0.borrow(), |s| &s.grad)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.0.borrow().value.shape().to_vec()
    }

    pub fn len(&self) -> usize {
        self.0.borrow().value.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn set_value(&self, value: NdArray) {
        let mut s = self.0.borrow_mut();
        assert_eq!(s.value.shape(), value.shape(), "parameter shape is fixed");
        s.value = value;
    }

    /// Overwrite one element of the value (used by finite differences).
    pub fn set_element(&self, index: usize, v: Scalar) {
        self.0.borrow_mut().value.data_mut()[index] = v;
    }

    pub fn zero_grad(&self) {
        self.0.borrow_mut().grad.fill(0.0);
    }

    pub(crate) fn accumulate_grad(&self, g: &NdArray) {
        self.0.borrow_mut().grad.add_assign(g);
    }

    /// `p ← p − lr·(∇p + wd·p)`, then zero the accumulator.
    pub fn sgd_update(&self, lr: Scalar, weight_decay: Scalar) {
        let mut s = self.0.borrow_mut();
        let ParamState { value, grad, .. } = &mut *s;
        for (p, g) in value.data_mut().iter_mut().zip(grad.data_mut().iter_mut()) {
            *p -= lr * (*g + weight_decay * *p);
            *g = 0.0;
        }
    }

    pub fn same_as(&self, other: &Parameter) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }
}

impl fmt::Debug for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.0.borrow();
        f.debug_struct("Parameter")
            .field("name", &s.name)
            .field("shape", &s.value.shape())
            .finish()
    }
}
