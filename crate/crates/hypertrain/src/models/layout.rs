use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::real::Real;

/// One named, shaped run of a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub start: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len()
    }
}

/// Describes how a flat parameter vector decomposes into named tensors.
///
/// All trainable state in this crate — generator parameters, a baseline
/// network's point weights, the input-noise scale — lives in one flat
/// vector addressed through a layout. That keeps the optimizer, the
/// gradient oracle, and per-dimension diagnostics trivially aligned.
/// The layer convention is fixed: per layer, weights row-major `(in,out)`
/// then biases `(out)`, layers in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    segments: Vec<Segment>,
    total: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        ParamLayout {
            segments: Vec::new(),
            total: 0,
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize]) -> &Segment {
        let seg = Segment {
            name: name.into(),
            shape: shape.to_vec(),
            start: self.total,
        };
        self.total += seg.len();
        self.segments.push(seg);
        self.segments.last().unwrap()
    }

    /// Weight/bias segments (`w0, b0, w1, b1, …`) for consecutive layer
    /// sizes, in the crate-wide flat layout convention.
    pub fn of_layers(sizes: &[usize]) -> Self {
        let mut layout = ParamLayout::new();
        for (i, pair) in sizes.windows(2).enumerate() {
            layout.push(format!("w{i}"), &[pair[0], pair[1]]);
            layout.push(format!("b{i}"), &[pair[1]]);
        }
        layout
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Result<&Segment> {
        self.segments
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::contract(format!("no parameter segment named {name:?}")))
    }

    /// Slice a segment out of a flat rank-1 tensor, reshaped to the
    /// segment's shape. Stays on the tape when `flat` is tracked.
    pub fn slice_segment<F: Real>(
        &self,
        tape: &Tape<F>,
        flat: &Tensor<F>,
        name: &str,
    ) -> Result<Tensor<F>> {
        let seg = self.segment(name)?;
        let t = tape.slice(flat, seg.start, seg.len())?;
        if seg.shape.len() == 1 {
            Ok(t)
        } else {
            tape.reshape(&t, &seg.shape)
        }
    }
}

impl Default for ParamLayout {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_layout_matches_count_formula() {
        let layout = ParamLayout::of_layers(&[13, 50, 1]);
        assert_eq!(layout.total(), 13 * 50 + 50 + 50 + 1);
        assert_eq!(layout.segments().len(), 4);
        assert_eq!(layout.segment("w0").unwrap().shape, vec![13, 50]);
        assert_eq!(layout.segment("b1").unwrap().start, 13 * 50 + 50 + 50);
    }

    #[test]
    fn unknown_segment_is_an_error() {
        let layout = ParamLayout::of_layers(&[2, 3]);
        assert!(layout.segment("w7").is_err());
    }
}
