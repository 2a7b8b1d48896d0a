use std::sync::Arc;

use crate::error::{Error, Result};
use crate::real::Real;

use super::tape::NodeId;

/// Dense row-major tensor of `Real` scalars.
///
/// Data is shared behind an `Arc`, so clones are cheap and a finished
/// tensor's values can cross threads. A tensor is *tracked* when it was
/// produced on (or registered with) a [`super::Tape`]; `node` then holds
/// its tape handle. Gradients live on the tape side — query them from the
/// [`super::Gradients`] returned by `Tape::backward`.
#[derive(Clone, Debug)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Arc<Vec<F>>,
    node: Option<NodeId>,
}

impl<F: Real> Tensor<F> {
    /// Untracked tensor from owned data. Fails unless the data length
    /// equals the product of the shape extents.
    pub fn constant(data: Vec<F>, shape: &[usize]) -> Result<Self> {
        Self::from_arc(Arc::new(data), shape, None)
    }

    pub(crate) fn from_arc(data: Arc<Vec<F>>, shape: &[usize], node: Option<NodeId>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(Error::contract(format!(
                "tensor data length {} does not match shape {:?} (numel {})",
                data.len(),
                shape,
                numel
            )));
        }
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::contract(format!(
                "tensor shape {shape:?} has a zero extent"
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            node,
        })
    }

    pub fn scalar(v: F) -> Self {
        Tensor {
            shape: vec![1],
            data: Arc::new(vec![v]),
            node: None,
        }
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        Self::constant(vec![F::zero(); numel], shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub(crate) fn data_arc(&self) -> Arc<Vec<F>> {
        Arc::clone(&self.data)
    }

    pub fn node(&self) -> Option<NodeId> {
        self.node
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<F> {
        if !self.is_scalar() {
            return Err(Error::contract(format!(
                "item() needs a scalar tensor, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn to_vec(&self) -> Vec<F> {
        self.data.as_ref().clone()
    }
}
