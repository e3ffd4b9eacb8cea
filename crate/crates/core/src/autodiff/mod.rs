//! Reverse-mode differentiation and the set-mean loss used everywhere else.

mod tape;

pub use tape::{Gradients, Tape, Var};

use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::models::ModelArch;
use crate::params::ParamVector;

/// Mean softmax cross-entropy over `set` and its gradient with respect to
/// `params`. The gradient carries the same manifest as `params`.
pub fn loss_and_grad(params: &ParamVector, set: &SampleSet, arch: &ModelArch) -> Result<(f64, ParamVector)> {
    arch.check_params(params)?;
    arch.check_inputs(set.inputs())?;
    if set.is_empty() {
        return Err(Error::config("loss over an empty sample set"));
    }
    if let Some(&y) = set.labels().iter().find(|&&y| y >= arch.classes) {
        return Err(Error::config(format!("label {y} out of range for {} classes", arch.classes)));
    }

    let mut tape = Tape::new();
    let (logits, leaves) = arch.forward(&mut tape, params, set.inputs());
    let loss_var = tape.softmax_cross_entropy(logits, set.shared_labels());
    let loss = tape.value(loss_var).data()[0];
    if !loss.is_finite() {
        let index = tape
            .sample_losses()
            .iter()
            .position(|l| !l.is_finite())
            .unwrap_or(0);
        return Err(Error::NonFiniteLoss { index });
    }

    let grads = tape.backward(loss_var);
    let mut grad = Vec::with_capacity(params.len());
    for (&leaf, slot) in leaves.iter().zip(params.manifest().slots()) {
        match grads.get(leaf) {
            Some(g) => grad.extend_from_slice(g.data()),
            None => grad.extend(std::iter::repeat_n(0.0, slot.numel())),
        }
    }
    if let Some(j) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!("gradient entry {j} is not finite")));
    }
    Ok((loss, params.with_values(grad)?))
}

/// Mean loss only.
pub fn loss(params: &ParamVector, set: &SampleSet, arch: &ModelArch) -> Result<f64> {
    arch.check_params(params)?;
    arch.check_inputs(set.inputs())?;
    let mut tape = Tape::new();
    let (logits, _) = arch.forward(&mut tape, params, set.inputs());
    let loss_var = tape.softmax_cross_entropy(logits, set.shared_labels());
    let loss = tape.value(loss_var).data()[0];
    if !loss.is_finite() {
        let index = tape.sample_losses().iter().position(|l| !l.is_finite()).unwrap_or(0);
        return Err(Error::NonFiniteLoss { index });
    }
    Ok(loss)
}

/// Largest `|analytic - central difference| / max(1, |analytic|)` over every
/// coordinate of `theta`, for any function returning `(value, gradient)`.
/// Returns 0 for an empty `theta`.
pub fn grad_check_fn<F>(mut f: F, theta: &[f64], step: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(step > 0.0) {
        return Err(Error::Precondition(format!("finite-difference step must be positive, got {step}")));
    }
    let (_, analytic) = f(theta)?;
    let mut probe = theta.to_vec();
    let mut worst = 0.0_f64;
    for j in 0..theta.len() {
        probe[j] = theta[j] + step;
        let (up, _) = f(&probe)?;
        probe[j] = theta[j] - step;
        let (down, _) = f(&probe)?;
        probe[j] = theta[j];
        let numeric = (up - down) / (2.0 * step);
        let err = (analytic[j] - numeric).abs() / analytic[j].abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// [`grad_check_fn`] applied to [`loss_and_grad`].
pub fn grad_check(params: &ParamVector, set: &SampleSet, arch: &ModelArch, step: f64) -> Result<f64> {
    arch.check_params(params)?;
    grad_check_fn(
        |theta| {
            let p = params.with_values(theta.to_vec())?;
            let (l, g) = loss_and_grad(&p, set, arch)?;
            Ok((l, g.into_values()))
        },
        params.as_slice(),
        step,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::DenseArray;
    use crate::models::{init_model, Activation};
    use crate::params::ParamVector;

    fn toy_set() -> SampleSet {
        let x = DenseArray::from_rows(&[
            vec![0.3, -1.2],
            vec![1.1, 0.4],
            vec![-0.7, 0.9],
            vec![0.05, 0.0],
            vec![-1.5, -0.2],
        ])
        .unwrap();
        SampleSet::new(x, vec![0, 1, 2, 1, 0]).unwrap()
    }

    #[test]
    fn quadratic_grad_check() {
        let theta = [0.3, -1.7, 4.0, 1e-3];
        let err = grad_check_fn(
            |t| Ok((0.5 * t.iter().map(|x| x * x).sum::<f64>(), t.to_vec())),
            &theta,
            1e-4,
        )
        .unwrap();
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn empty_theta_grad_check_is_zero() {
        let err = grad_check_fn(|_| Ok((0.0, vec![])), &[], 1e-6).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn nonpositive_step_rejected() {
        assert!(grad_check_fn(|_| Ok((0.0, vec![])), &[], 0.0).is_err());
    }

    #[test]
    fn perfect_fit_gives_zero_loss_and_grad() {
        // Linear model whose logit gap saturates the softmax exactly.
        let arch = ModelArch::new(1, vec![], 2, Activation::Relu).unwrap();
        let params = ParamVector::new(vec![0.0, 0.0, 1000.0, 0.0], arch.manifest()).unwrap();
        let set = SampleSet::new(DenseArray::from_rows(&[vec![1.0]]).unwrap(), vec![0]).unwrap();
        let (l, g) = loss_and_grad(&params, &set, &arch).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn manifest_mismatch_is_config_error() {
        let arch = ModelArch::new(2, vec![8], 3, Activation::Tanh).unwrap();
        let other = ModelArch::new(2, vec![4], 3, Activation::Tanh).unwrap();
        let err = loss_and_grad(&init_model(&other, 0), &toy_set(), &arch).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn label_out_of_range() {
        let arch = ModelArch::new(2, vec![], 2, Activation::Tanh).unwrap();
        assert!(loss_and_grad(&init_model(&arch, 0), &toy_set(), &arch).is_err());
    }

    #[test]
    fn overflowing_inputs_report_sample() {
        let arch = ModelArch::new(2, vec![], 3, Activation::Relu).unwrap();
        let mut p = init_model(&arch, 0);
        p.as_mut_slice()[0] = 1e300;
        let x = DenseArray::from_rows(&[vec![0.0, 0.0], vec![1e300, 0.0]]).unwrap();
        let set = SampleSet::new(x, vec![0, 1]).unwrap();
        match loss_and_grad(&p, &set, &arch) {
            Err(Error::NonFiniteLoss { index }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn repeated_calls_are_bit_identical() {
        let arch = ModelArch::new(2, vec![8], 3, Activation::Tanh).unwrap();
        let p = init_model(&arch, 11);
        let a = loss_and_grad(&p, &toy_set(), &arch).unwrap();
        let b = loss_and_grad(&p, &toy_set(), &arch).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1, b.1);
    }
}
