use std::sync::Arc;

use crate::array::DenseArray;
use crate::error::{Error, Result};

/// Inputs of shape `(n, d)` with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    inputs: DenseArray,
    labels: Arc<[usize]>,
}

impl SampleSet {
    pub fn new(inputs: DenseArray, labels: Vec<usize>) -> Result<Self> {
        if inputs.shape().len() != 2 {
            return Err(Error::config(format!(
                "sample inputs must be 2-D, got shape {:?}",
                inputs.shape()
            )));
        }
        if labels.len() != inputs.rows() {
            return Err(Error::LengthMismatch {
                expected: inputs.rows(),
                found: labels.len(),
            });
        }
        Ok(Self {
            inputs,
            labels: labels.into(),
        })
    }

    pub fn inputs(&self) -> &DenseArray {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub(crate) fn shared_labels(&self) -> Arc<[usize]> {
        Arc::clone(&self.labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Rows at `indices`, in that order. Panics on an empty index list since a
    /// sample set always holds at least one row.
    pub fn subset(&self, indices: &[usize]) -> Self {
        assert!(!indices.is_empty(), "a sample set needs at least one row");
        Self {
            inputs: self.inputs.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.input_dim() != other.input_dim() {
            return Err(Error::config("cannot concatenate sets with different input widths"));
        }
        let mut data = self.inputs.data().to_vec();
        data.extend_from_slice(other.inputs.data());
        let labels: Vec<usize> = self.labels.iter().chain(other.labels.iter()).copied().collect();
        let inputs = DenseArray::from_raw(vec![labels.len(), self.input_dim()], data);
        Ok(Self {
            inputs,
            labels: labels.into(),
        })
    }

    pub fn sample(&self, i: usize) -> Self {
        self.subset(&[i])
    }
}
