use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// One named tensor inside a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSlot {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl ParamSlot {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.numel()
    }
}

/// Ordered list of slots that tile a flat vector without gaps or overlap.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    slots: Vec<ParamSlot>,
}

impl Manifest {
    /// Lays out `(name, shape)` pairs back to back.
    pub fn from_shapes<'a>(entries: impl IntoIterator<Item = (&'a str, Vec<usize>)>) -> Self {
        let mut offset = 0;
        let slots = entries
            .into_iter()
            .map(|(name, shape)| {
                let slot = ParamSlot {
                    name: name.to_string(),
                    offset,
                    shape,
                };
                offset += slot.numel();
                slot
            })
            .collect();
        Self { slots }
    }

    /// Accepts an explicit slot list, checking that it tiles `0..total`.
    pub fn from_slots(slots: Vec<ParamSlot>) -> Result<Self> {
        let mut expected = 0;
        for slot in &slots {
            if slot.offset != expected {
                return Err(Error::Format(format!(
                    "slot {} starts at {} but the previous slot ends at {expected}",
                    slot.name, slot.offset
                )));
            }
            expected += slot.numel();
        }
        Ok(Self { slots })
    }

    pub fn slots(&self) -> &[ParamSlot] {
        &self.slots
    }

    pub fn total_len(&self) -> usize {
        self.slots.last().map_or(0, |s| s.offset + s.numel())
    }

    pub fn get(&self, name: &str) -> Option<&ParamSlot> {
        self.slots.iter().find(|s| s.name == name)
    }
}

/// Flat parameter vector with a manifest mapping names to slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    manifest: Manifest,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, manifest: Manifest) -> Result<Self> {
        check_len(manifest.total_len(), values.len())?;
        Ok(Self { values, manifest })
    }

    pub fn zeros(manifest: Manifest) -> Self {
        Self {
            values: vec![0.0; manifest.total_len()],
            manifest,
        }
    }

    /// A vector sharing this one's manifest.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(values, self.manifest.clone())
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.manifest.get(name).map(|s| &self.values[s.range()])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}
