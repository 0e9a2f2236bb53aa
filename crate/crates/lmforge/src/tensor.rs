//! Dense f64 tensors and named trainable parameters.
//!
//! A [`Tensor`] is a row-major value array plus an optional gradient of the
//! same shape. Gradients accumulate across `backward` calls until an
//! optimizer step clears them. All training arithmetic is f64; checkpoints
//! narrow to f32 on disk.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::seeding::Rng;

#[derive(Debug, Clone)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    /// Present after a backward pass touched this tensor; same shape as values.
    pub grad: Option<Vec<f64>>,
    pub requires_grad: bool,
}

pub type SharedTensor = Rc<RefCell<Tensor>>;

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>, requires_grad: bool) -> Result<Self> {
        if numel(&shape) != values.len() {
            return Err(Error::Dimension {
                op: "tensor",
                detail: format!("shape {:?} does not hold {} values", shape, values.len()),
            });
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Dimension {
                op: "tensor",
                detail: format!("zero-sized dimension in {:?}", shape),
            });
        }
        Ok(Tensor { shape, values, grad: None, requires_grad })
    }

    pub fn zeros(shape: Vec<usize>, requires_grad: bool) -> Self {
        let n = numel(&shape);
        Tensor { shape, values: vec![0.0; n], grad: None, requires_grad }
    }

    /// Adds `delta` into the gradient, allocating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[f64]) {
        let g = self
            .grad
            .get_or_insert_with(|| vec![0.0; self.values.len()]);
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }
}

/// A named trainable tensor. Models hold `Param`s; the same underlying
/// storage is leased to every forward tape as a leaf, so gradients land back
/// here and optimizers update in place.
#[derive(Clone)]
pub struct Param {
    name: String,
    tensor: SharedTensor,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let t = Tensor::new(shape, values, true)?;
        Ok(Param { name: name.into(), tensor: Rc::new(RefCell::new(t)) })
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        Param {
            name: name.into(),
            tensor: Rc::new(RefCell::new(Tensor::zeros(shape, true))),
        }
    }

    pub fn constant(name: impl Into<String>, shape: Vec<usize>, value: f64) -> Self {
        let n = numel(&shape);
        Param {
            name: name.into(),
            tensor: Rc::new(RefCell::new(Tensor {
                shape,
                values: vec![value; n],
                grad: None,
                requires_grad: true,
            })),
        }
    }

    /// Uniform(-bound, bound) initialization.
    pub fn uniform(name: impl Into<String>, shape: Vec<usize>, bound: f64, rng: &mut Rng) -> Self {
        let n = numel(&shape);
        let values = (0..n).map(|_| rng.uniform_in(-bound, bound)).collect();
        Param {
            name: name.into(),
            tensor: Rc::new(RefCell::new(Tensor { shape, values, grad: None, requires_grad: true })),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tensor(&self) -> &SharedTensor {
        &self.tensor
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tensor.borrow().shape.clone()
    }

    pub fn values(&self) -> Vec<f64> {
        self.tensor.borrow().values.clone()
    }

    pub fn set_values(&self, values: Vec<f64>) -> Result<()> {
        let mut t = self.tensor.borrow_mut();
        if values.len() != t.values.len() {
            return Err(Error::Dimension {
                op: "set_values",
                detail: format!("expected {} values, got {}", t.values.len(), values.len()),
            });
        }
        t.values = values;
        Ok(())
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.tensor.borrow().grad.clone()
    }

    pub fn clear_grad(&self) {
        self.tensor.borrow_mut().grad = None;
    }
}

impl std::fmt::Debug for Param {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let t = self.tensor.borrow();
        write!(f, "Param({} {:?})", self.name, t.shape)
    }
}
