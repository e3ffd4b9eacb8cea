//! MLP classifiers: architecture, deterministic initialization, forward pass
//! and greedy prediction.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::DenseArray;
use crate::autodiff::{Tape, Var};
use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::params::{Manifest, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

/// Fully connected classifier `input_dim -> hidden... -> classes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelArch {
    pub input_dim: usize,
    #[serde(default)]
    pub hidden: Vec<usize>,
    pub classes: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

fn default_activation() -> Activation {
    Activation::Tanh
}

impl ModelArch {
    pub fn new(input_dim: usize, hidden: Vec<usize>, classes: usize, activation: Activation) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden,
            classes,
            activation,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("input_dim must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden widths must be positive"));
        }
        if self.classes < 2 {
            return Err(Error::config("a classifier needs at least 2 classes"));
        }
        Ok(())
    }

    /// Widths of every layer boundary, input first, classes last.
    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.classes);
        w
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    /// Layer `l` contributes `layer{l}.weight` of shape `(fan_in, fan_out)`
    /// followed by `layer{l}.bias` of shape `(fan_out)`.
    pub fn manifest(&self) -> Manifest {
        let widths = self.widths();
        let names: Vec<(String, Vec<usize>)> = widths
            .windows(2)
            .enumerate()
            .flat_map(|(l, w)| {
                [
                    (format!("layer{l}.weight"), vec![w[0], w[1]]),
                    (format!("layer{l}.bias"), vec![w[1]]),
                ]
            })
            .collect();
        Manifest::from_shapes(names.iter().map(|(n, s)| (n.as_str(), s.clone())))
    }

    pub fn num_params(&self) -> usize {
        self.manifest().total_len()
    }

    pub(crate) fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.manifest() != &self.manifest() {
            return Err(Error::config(format!(
                "parameter manifest does not match architecture {}",
                self.describe()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_inputs(&self, inputs: &DenseArray) -> Result<()> {
        if inputs.shape().len() != 2 || inputs.cols() != self.input_dim {
            return Err(Error::config(format!(
                "inputs of shape {:?} do not fit input_dim {}",
                inputs.shape(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Compact `2-16-3/tanh` style description.
    pub fn describe(&self) -> String {
        let dims: Vec<String> = self.widths().iter().map(usize::to_string).collect();
        let act = match self.activation {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        };
        format!("{}/{act}", dims.join("-"))
    }

    /// Records the forward pass on `tape` and returns the logits node together
    /// with one leaf per manifest slot, in manifest order.
    pub fn forward(&self, tape: &mut Tape, params: &ParamVector, inputs: &DenseArray) -> (Var, Vec<Var>) {
        let manifest = params.manifest();
        let values = params.as_slice();
        let mut leaves = Vec::with_capacity(manifest.slots().len());
        let mut h = tape.leaf(inputs.clone());
        let last = self.num_layers() - 1;
        for (l, pair) in manifest.slots().chunks(2).enumerate() {
            let (ws, bs) = (&pair[0], &pair[1]);
            let w = tape.leaf(DenseArray::from_raw(ws.shape.clone(), values[ws.range()].to_vec()));
            let b = tape.leaf(DenseArray::from_raw(bs.shape.clone(), values[bs.range()].to_vec()));
            leaves.push(w);
            leaves.push(b);
            let z = tape.matmul(h, w);
            let z = tape.add_row(z, b);
            h = if l == last {
                z
            } else {
                match self.activation {
                    Activation::Relu => tape.relu(z),
                    Activation::Tanh => tape.tanh(z),
                }
            };
        }
        (h, leaves)
    }
}

/// Weights uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
pub fn init_model(arch: &ModelArch, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamVector::zeros(arch.manifest());
    let slots = params.manifest().slots().to_vec();
    let values = params.as_mut_slice();
    for slot in slots.iter().filter(|s| s.name.ends_with(".weight")) {
        let bound = 1.0 / (slot.shape[0] as f64).sqrt();
        for v in &mut values[slot.range()] {
            *v = rng.gen_range(-bound..=bound);
        }
    }
    params
}

/// Class scores, shape `(n, classes)`.
pub fn logits(params: &ParamVector, inputs: &DenseArray, arch: &ModelArch) -> Result<DenseArray> {
    arch.check_params(params)?;
    arch.check_inputs(inputs)?;
    let mut tape = Tape::new();
    let (out, _) = arch.forward(&mut tape, params, inputs);
    Ok(tape.value(out).clone())
}

/// Greedy argmax per row; ties go to the lowest class index.
pub fn predict(params: &ParamVector, inputs: &DenseArray, arch: &ModelArch) -> Result<Vec<usize>> {
    let scores = logits(params, inputs, arch)?;
    Ok((0..scores.rows()).map(|i| argmax(scores.row(i))).collect())
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Per-sample correctness flags aligned with a [`SampleSet`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectnessMask {
    pub flags: Vec<bool>,
}

impl CorrectnessMask {
    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn count_correct(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn accuracy(&self) -> f64 {
        self.count_correct() as f64 / self.flags.len() as f64
    }
}

pub fn evaluate_correctness(params: &ParamVector, set: &SampleSet, arch: &ModelArch) -> Result<CorrectnessMask> {
    let labels = predict(params, set.inputs(), arch)?;
    let flags = labels.iter().zip(set.labels()).map(|(p, y)| p == y).collect();
    Ok(CorrectnessMask { flags })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch(hidden: Vec<usize>) -> ModelArch {
        ModelArch::new(2, hidden, 3, Activation::Tanh).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = arch(vec![8]);
        assert_eq!(init_model(&a, 7), init_model(&a, 7));
        assert_ne!(init_model(&a, 7).as_slice(), init_model(&a, 8).as_slice());
    }

    #[test]
    fn init_respects_fan_in_bound_and_zero_bias() {
        let a = arch(vec![16]);
        let p = init_model(&a, 1);
        let bound = 1.0 / 2f64.sqrt();
        assert!(p.get("layer0.weight").unwrap().iter().all(|w| w.abs() <= bound));
        assert!(p.get("layer0.bias").unwrap().iter().all(|&b| b == 0.0));
        assert!(p.get("layer1.bias").unwrap().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn linear_arch_has_one_weight_and_one_bias() {
        let m = arch(vec![]).manifest();
        let names: Vec<&str> = m.slots().iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["layer0.weight", "layer0.bias"]);
        assert_eq!(m.total_len(), 2 * 3 + 3);
    }

    #[test]
    fn zero_model_predicts_class_zero() {
        let a = arch(vec![]);
        let p = ParamVector::zeros(a.manifest());
        let x = DenseArray::from_rows(&[vec![1.0, -3.0], vec![0.2, 9.0]]).unwrap();
        assert_eq!(predict(&p, &x, &a).unwrap(), vec![0, 0]);
    }

    #[test]
    fn single_row_gives_single_label() {
        let a = arch(vec![4]);
        let p = init_model(&a, 3);
        let x = DenseArray::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert_eq!(predict(&p, &x, &a).unwrap().len(), 1);
    }

    #[test]
    fn rejects_wrong_input_width_and_manifest() {
        let a = arch(vec![4]);
        let p = init_model(&a, 3);
        let x = DenseArray::from_rows(&[vec![0.5, 0.5, 1.0]]).unwrap();
        assert!(predict(&p, &x, &a).is_err());
        let other = init_model(&arch(vec![5]), 3);
        let x = DenseArray::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert!(predict(&other, &x, &a).is_err());
    }

    #[test]
    fn invalid_arch() {
        assert!(ModelArch::new(2, vec![], 1, Activation::Relu).is_err());
        assert!(ModelArch::new(0, vec![], 2, Activation::Relu).is_err());
        assert!(ModelArch::new(2, vec![0], 2, Activation::Relu).is_err());
    }

    #[test]
    fn describe_format() {
        assert_eq!(arch(vec![16]).describe(), "2-16-3/tanh");
    }
}
