//! Library results checked against independent implementations written
//! here with plain loops.

use cnl::autodiff::{loss, loss_and_grad};
use cnl::gradsim::{global_similarity, per_sample_similarities, sim_dissim_groups};
use cnl::harness::{pretrain_reference, synth_dataset, PretrainConfig, TaskSpec};
use cnl::models::{evaluate_correctness, init_model, predict};
use cnl::optim::{step, update_direction, Hyper, OptimizerKind, OptimizerState};
use cnl::{Activation, DenseArray, ModelArch, ParamVector, SampleSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_set(rng: &mut ChaCha8Rng, n: usize, dim: usize, classes: usize) -> SampleSet {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect();
    let labels = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    SampleSet::new(DenseArray::from_rows(&rows).unwrap(), labels).unwrap()
}

fn perturbed(params: &ParamVector, rng: &mut ChaCha8Rng, scale: f64) -> ParamVector {
    let values = params.as_slice().iter().map(|v| v + rng.gen_range(-scale..scale)).collect();
    params.with_values(values).unwrap()
}

/// Forward pass with explicit loops over the manifest layout.
fn reference_logits(params: &ParamVector, x: &[f64], arch: &ModelArch) -> Vec<f64> {
    let mut widths = vec![arch.input_dim];
    widths.extend(&arch.hidden);
    widths.push(arch.classes);
    let theta = params.as_slice();
    let mut offset = 0;
    let mut h = x.to_vec();
    for l in 0..widths.len() - 1 {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let w = &theta[offset..offset + fan_in * fan_out];
        offset += fan_in * fan_out;
        let b = &theta[offset..offset + fan_out];
        offset += fan_out;
        let mut z: Vec<f64> = b.to_vec();
        for (i, hi) in h.iter().enumerate() {
            for k in 0..fan_out {
                z[k] += hi * w[i * fan_out + k];
            }
        }
        if l + 2 < widths.len() {
            for v in &mut z {
                *v = match arch.activation {
                    Activation::Tanh => v.tanh(),
                    Activation::Relu => v.max(0.0),
                };
            }
        }
        h = z;
    }
    assert_eq!(offset, theta.len());
    h
}

fn reference_loss(params: &ParamVector, set: &SampleSet, arch: &ModelArch) -> f64 {
    let total: f64 = (0..set.len())
        .map(|i| {
            let z = reference_logits(params, set.inputs().row(i), arch);
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - z[set.labels()[i]]
        })
        .sum();
    total / set.len() as f64
}

#[test]
fn gradient_matches_central_differences_on_small_mlp() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let arch = ModelArch::new(2, vec![8], 3, Activation::Tanh).unwrap();
    let set = random_set(&mut rng, 5, 2, 3);
    let params = perturbed(&init_model(&arch, 3), &mut rng, 0.3);
    let (_, grad) = loss_and_grad(&params, &set, &arch).unwrap();
    let h = 1e-5;
    for j in 0..params.len() {
        let mut plus = params.as_slice().to_vec();
        let mut minus = plus.clone();
        plus[j] += h;
        minus[j] -= h;
        let fd = (reference_loss(&params.with_values(plus).unwrap(), &set, &arch)
            - reference_loss(&params.with_values(minus).unwrap(), &set, &arch))
            / (2.0 * h);
        let a = grad.as_slice()[j];
        assert!((a - fd).abs() / a.abs().max(1.0) <= 1e-6, "param {j}: analytic {a}, numeric {fd}");
    }
}

#[test]
fn forward_pass_and_loss_match_loop_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for act in [Activation::Tanh, Activation::Relu] {
        let arch = ModelArch::new(3, vec![6, 4], 4, act).unwrap();
        let set = random_set(&mut rng, 20, 3, 4);
        let params = perturbed(&init_model(&arch, 9), &mut rng, 0.5);
        let lib = loss(&params, &set, &arch).unwrap();
        let reference = reference_loss(&params, &set, &arch);
        assert!((lib - reference).abs() <= 1e-12 * reference.abs().max(1.0));

        let predicted = predict(&params, set.inputs(), &arch).unwrap();
        for (i, &p) in predicted.iter().enumerate() {
            let z = reference_logits(&params, set.inputs().row(i), &arch);
            let best = (0..z.len()).fold(0, |b, k| if z[k] > z[b] { k } else { b });
            assert_eq!(p, best, "row {i}");
        }
    }
}

/// Textbook Adam/AdamW/momentum, one scalar at a time.
struct ScalarReference {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl ScalarReference {
    fn direction(&mut self, kind: OptimizerKind, h: &Hyper, g: &[f64], theta: &[f64]) -> Vec<f64> {
        self.t += 1;
        let mut out = vec![0.0; g.len()];
        for j in 0..g.len() {
            out[j] = match kind {
                OptimizerKind::Sgd => g[j],
                OptimizerKind::Momentum => {
                    self.m[j] = h.beta * self.m[j] + g[j];
                    self.m[j]
                }
                OptimizerKind::Adam | OptimizerKind::AdamW => {
                    self.m[j] = h.beta1 * self.m[j] + (1.0 - h.beta1) * g[j];
                    self.v[j] = h.beta2 * self.v[j] + (1.0 - h.beta2) * g[j] * g[j];
                    let m_hat = self.m[j] / (1.0 - h.beta1.powi(self.t));
                    let v_hat = self.v[j] / (1.0 - h.beta2.powi(self.t));
                    let d = m_hat / (v_hat.sqrt() + h.eps);
                    if kind == OptimizerKind::AdamW {
                        d + h.weight_decay * theta[j]
                    } else {
                        d
                    }
                }
            };
        }
        out
    }
}

#[test]
fn optimizer_directions_match_scalar_reference_over_50_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 37;
    for kind in OptimizerKind::ALL {
        let hyper = Hyper {
            lr: 1e-2,
            ..Hyper::default()
        };
        let mut state = OptimizerState::new(kind, hyper, n);
        let mut reference = ScalarReference {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        };
        let mut theta: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut worst = 0.0_f64;
        for _ in 0..50 {
            let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            state.t += 1;
            let lib = update_direction(&mut state, &g, &theta).unwrap();
            let expect = reference.direction(kind, &hyper, &g, &theta);
            for (a, b) in lib.u.iter().zip(&expect) {
                worst = worst.max((a - b).abs());
            }
            for (p, d) in theta.iter_mut().zip(&expect) {
                *p -= hyper.lr * d;
            }
        }
        assert!(worst <= 1e-12, "{}: max diff {worst:e}", kind.name());
    }
}

#[test]
fn first_order_law_with_quadratic_remainder() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let arch = ModelArch::new(2, vec![16], 3, Activation::Tanh).unwrap();
    let mastered = random_set(&mut rng, 50, 2, 3);
    let injection = random_set(&mut rng, 50, 2, 3);
    let params = init_model(&arch, 4);
    let (l0, g_m) = loss_and_grad(&params, &mastered, &arch).unwrap();
    let (_, g_i) = loss_and_grad(&params, &injection, &arch).unwrap();
    let s = global_similarity(g_m.as_slice(), g_i.as_slice()).unwrap();

    let mut discrepancies = Vec::new();
    for eta in [1e-4, 5e-5, 2.5e-5] {
        let hyper = Hyper {
            lr: eta,
            ..Hyper::default()
        };
        let mut state = OptimizerState::new(OptimizerKind::Sgd, hyper, params.len());
        let (next, _) = step(&mut state, &params, None, g_i.as_slice()).unwrap();
        let measured = loss(&next, &mastered, &arch).unwrap() - l0;
        let err = (measured + eta * s).abs();
        if eta == 1e-4 {
            assert!(err / measured.abs() <= 0.05, "relative error {}", err / measured.abs());
        }
        discrepancies.push(err);
    }
    for w in discrepancies.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.0..=5.0).contains(&ratio), "shrink ratio {ratio}");
    }
}

#[test]
fn per_sample_similarities_average_to_global() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let arch = ModelArch::new(2, vec![8], 3, Activation::Tanh).unwrap();
    let mastered = random_set(&mut rng, 30, 2, 3);
    let injection = random_set(&mut rng, 10, 2, 3);
    let params = init_model(&arch, 1);
    let (_, g_m) = loss_and_grad(&params, &mastered, &arch).unwrap();
    let (_, g_i) = loss_and_grad(&params, &injection, &arch).unwrap();
    let global = global_similarity(g_m.as_slice(), g_i.as_slice()).unwrap();
    let per = per_sample_similarities(&params, &mastered, g_i.as_slice(), &arch).unwrap();
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    assert!((mean - global).abs() <= 1e-10 * global.abs().max(1.0));
}

#[test]
fn groups_match_sort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let n = rng.gen_range(3..60);
        // coarse values so ties are common
        let sims: Vec<f64> = (0..n).map(|_| rng.gen_range(-6..4) as f64 * 0.5).collect();
        let mut negatives: Vec<usize> = (0..n).filter(|&i| sims[i] < 0.0).collect();
        let got = sim_dissim_groups(&sims);
        if negatives.len() < 3 {
            assert!(got.is_err());
            continue;
        }
        let got = got.unwrap();
        // insertion sort by descending magnitude keeps equal keys in index order
        for i in 1..negatives.len() {
            let mut k = i;
            while k > 0 && sims[negatives[k - 1]].abs() < sims[negatives[k]].abs() {
                negatives.swap(k - 1, k);
                k -= 1;
            }
        }
        let third = negatives.len() / 3;
        assert_eq!(got.sim_indices, negatives[..third]);
        assert_eq!(got.middle_indices, negatives[third..negatives.len() - third]);
        assert_eq!(got.dissim_indices, negatives[negatives.len() - third..]);
        let excluded: Vec<usize> = (0..n).filter(|&i| sims[i] >= 0.0).collect();
        assert_eq!(got.excluded_indices, excluded);
    }
}

#[test]
fn full_batch_pretraining_loss_never_increases_at_small_step() {
    let arch = ModelArch::new(2, vec![16], 3, Activation::Tanh).unwrap();
    let set = synth_dataset(&TaskSpec::gaussian(300, 2, 3, 0.3, 4)).unwrap();
    let config = PretrainConfig {
        epochs: 40,
        lr: 0.05,
        batch_size: None,
    };
    let trace = pretrain_reference(&set, &arch, &config, 4).unwrap().loss_trace;
    assert_eq!(trace.len(), 41);
    for w in trace.windows(2) {
        assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn reference_model_is_partially_correct() {
    let arch = ModelArch::new(2, vec![16], 3, Activation::Tanh).unwrap();
    for seed in 0..3 {
        let set = synth_dataset(&TaskSpec::gaussian(600, 2, 3, 0.3, seed)).unwrap();
        let params = pretrain_reference(&set, &arch, &PretrainConfig::default(), seed).unwrap().params;
        let acc = evaluate_correctness(&params, &set, &arch).unwrap().accuracy();
        assert!(acc > 0.2 && acc < 0.95, "seed {seed}: accuracy {acc}");
    }
}

#[test]
fn separable_task_is_fit_exactly_by_linear_model() {
    let arch = ModelArch::new(2, vec![], 2, Activation::Tanh).unwrap();
    let set = synth_dataset(&TaskSpec::gaussian(200, 2, 2, 0.0, 3)).unwrap();
    let config = PretrainConfig {
        epochs: 50,
        lr: 0.5,
        batch_size: Some(16),
    };
    let params = pretrain_reference(&set, &arch, &config, 3).unwrap().params;
    assert_eq!(evaluate_correctness(&params, &set, &arch).unwrap().accuracy(), 1.0);
}
