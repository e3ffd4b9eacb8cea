//! SGD, Momentum, Adam and AdamW behind one update-direction interface.
//!
//! Every optimizer reduces to `theta -= eta * u` for some direction `u`. The
//! masked (collaborative-neuron) variant scores each coordinate with
//! `g_M[j] * u[j]` and only moves coordinates whose score is nonnegative, so
//! the first-order change of the mastered loss is never positive. Moment
//! accumulators always see the unmasked injection gradient; the mask only
//! enters when the direction is applied.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::gradsim::{classify_neurons, per_param_similarity, NeuronMask};
use crate::params::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Adam,
    AdamW,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [Self::Sgd, Self::Momentum, Self::Adam, Self::AdamW];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sgd => "sgd",
            Self::Momentum => "momentum",
            Self::Adam => "adam",
            Self::AdamW => "adamw",
        }
    }
}

/// Optimizer hyperparameters. Fields that do not apply to a kind are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub lr: f64,
    /// Momentum coefficient.
    pub beta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay (AdamW).
    pub weight_decay: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.1,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must lie in [0, 1), got {v}")))
            }
        };
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::config(format!("learning rate must be finite and >= 0, got {}", self.lr)));
        }
        unit("beta", self.beta)?;
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        if !(self.eps > 0.0) {
            return Err(Error::config("eps must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be >= 0"));
        }
        Ok(())
    }
}

/// Step counter and moment accumulators of one optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub hyper: Hyper,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, hyper: Hyper, num_params: usize) -> Self {
        Self {
            kind,
            t: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            hyper,
        }
    }
}

/// Direction `u` in `theta -= eta * u`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateDirection {
    pub u: Vec<f64>,
}

/// Computes the update direction for the current step and advances the
/// accumulators. `state.t` must already count this step. `params` is only
/// read by AdamW, whose direction includes `weight_decay * theta`.
pub fn update_direction(state: &mut OptimizerState, grad: &[f64], params: &[f64]) -> Result<UpdateDirection> {
    check_len(state.m.len(), grad.len())?;
    let h = state.hyper;
    let u = match state.kind {
        OptimizerKind::Sgd => grad.to_vec(),
        OptimizerKind::Momentum => {
            for (m, &g) in state.m.iter_mut().zip(grad) {
                *m = h.beta * *m + g;
            }
            state.m.clone()
        }
        OptimizerKind::Adam | OptimizerKind::AdamW => {
            if state.t == 0 {
                return Err(Error::Precondition(
                    "adaptive optimizers need the step counter incremented before computing a direction".into(),
                ));
            }
            let decay = if state.kind == OptimizerKind::AdamW {
                check_len(grad.len(), params.len())?;
                h.weight_decay
            } else {
                0.0
            };
            let t = i32::try_from(state.t).unwrap_or(i32::MAX);
            let c1 = 1.0 - h.beta1.powi(t);
            let c2 = 1.0 - h.beta2.powi(t);
            let mut u = Vec::with_capacity(grad.len());
            for (j, &g) in grad.iter().enumerate() {
                let m = &mut state.m[j];
                let v = &mut state.v[j];
                *m = h.beta1 * *m + (1.0 - h.beta1) * g;
                *v = h.beta2 * *v + (1.0 - h.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                let mut dir = m_hat / (v_hat.sqrt() + h.eps);
                if decay != 0.0 {
                    dir += decay * params[j];
                }
                u.push(dir);
            }
            u
        }
    };
    if let Some(j) = u.iter().position(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!("update direction entry {j} is not finite")));
    }
    Ok(UpdateDirection { u })
}

/// Keeps coordinates where `g_M[j] * u[j] >= 0`.
pub fn cnl_mask(g_mastered: &[f64], u: &UpdateDirection) -> Result<NeuronMask> {
    Ok(classify_neurons(&per_param_similarity(g_mastered, &u.u)?))
}

/// `theta - eta * u`, restricted to kept coordinates when a mask is given.
pub fn apply_update(params: &ParamVector, u: &UpdateDirection, eta: f64, mask: Option<&NeuronMask>) -> Result<ParamVector> {
    check_len(params.len(), u.u.len())?;
    let mut out = params.clone();
    let values = out.as_mut_slice();
    match mask {
        None => {
            for (p, d) in values.iter_mut().zip(&u.u) {
                *p -= eta * d;
            }
        }
        Some(mask) => {
            check_len(params.len(), mask.len())?;
            for ((p, d), &keep) in values.iter_mut().zip(&u.u).zip(&mask.keep) {
                if keep {
                    *p -= eta * d;
                }
            }
        }
    }
    Ok(out)
}

/// What one step did, for the per-step diagnostics file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: u64,
    /// `<g_M, u>`, when a mastered gradient was supplied.
    pub s_opt: Option<f64>,
    /// Sum of the kept terms of `g_M * u`.
    pub masked_sum: Option<f64>,
    pub mask_density: f64,
    pub eta: f64,
}

impl StepDiagnostics {
    pub const CSV_HEADER: &'static str = "t,S_opt,masked_sum,mask_density,eta";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.t,
            opt(self.s_opt),
            opt(self.masked_sum),
            self.mask_density,
            self.eta
        )
    }
}

pub fn write_diagnostics_csv<W: Write>(mut out: W, steps: &[StepDiagnostics]) -> std::io::Result<()> {
    writeln!(out, "{}", StepDiagnostics::CSV_HEADER)?;
    for s in steps {
        writeln!(out, "{}", s.csv_row())?;
    }
    Ok(())
}

/// One full optimizer step: advance the counter, compute the direction, mask
/// it against `g_mastered` when present, and apply it.
pub fn step(
    state: &mut OptimizerState,
    params: &ParamVector,
    g_mastered: Option<&[f64]>,
    g_injection: &[f64],
) -> Result<(ParamVector, StepDiagnostics)> {
    check_len(params.len(), g_injection.len())?;
    if let Some(gm) = g_mastered {
        check_len(params.len(), gm.len())?;
    }
    state.t += 1;
    let eta = state.hyper.lr;
    let u = update_direction(state, g_injection, params.as_slice())?;
    let (next, diag) = match g_mastered {
        None => (
            apply_update(params, &u, eta, None)?,
            StepDiagnostics {
                t: state.t,
                s_opt: None,
                masked_sum: None,
                mask_density: 1.0,
                eta,
            },
        ),
        Some(gm) => {
            let s = per_param_similarity(gm, &u.u)?;
            let mask = classify_neurons(&s);
            let masked_sum = s.s.iter().zip(&mask.keep).filter(|(_, &k)| k).map(|(v, _)| v).sum();
            (
                apply_update(params, &u, eta, Some(&mask))?,
                StepDiagnostics {
                    t: state.t,
                    s_opt: Some(s.total()),
                    masked_sum: Some(masked_sum),
                    mask_density: mask.density(),
                    eta,
                },
            )
        }
    };
    Ok((next, diag))
}
