//! A small define-by-run tape over [`DenseArray`] values.
//!
//! Every operation appends a node holding its forward value and the indices of
//! its inputs. [`Tape::backward`] walks the nodes in reverse insertion order,
//! which is a valid reverse topological order because a node can only refer to
//! nodes created before it. All reductions run in a fixed index order, so a
//! given graph always produces bit-identical gradients.

use std::sync::Arc;

use crate::array::DenseArray;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Relu(Var),
    Tanh(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Arc<[usize]>,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: DenseArray,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    // per-sample losses of the most recent cross-entropy node
    sample_losses: Vec<f64>,
}

/// Gradients of a scalar root with respect to every node on the tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<DenseArray>>,
}

impl Gradients {
    /// Gradient for `var`, or `None` when the root does not depend on it.
    pub fn get(&self, var: Var) -> Option<&DenseArray> {
        self.grads[var.0].as_ref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: DenseArray, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &DenseArray {
        &self.nodes[var.0].value
    }

    /// Per-sample losses recorded by the last [`Tape::softmax_cross_entropy`].
    pub fn sample_losses(&self) -> &[f64] {
        &self.sample_losses
    }

    pub fn leaf(&mut self, value: DenseArray) -> Var {
        self.push(value, Op::Leaf)
    }

    /// `(n, k) x (k, m) -> (n, m)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let (n, k, m) = (av.rows(), av.cols(), bv.cols());
        assert_eq!(bv.rows(), k, "matmul inner dimensions differ");
        let mut out = vec![0.0; n * m];
        let (ad, bd) = (av.data(), bv.data());
        for i in 0..n {
            let row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a_ip = ad[i * k + p];
                let b_row = &bd[p * m..(p + 1) * m];
                for (o, &b) in row.iter_mut().zip(b_row) {
                    *o += a_ip * b;
                }
            }
        }
        self.push(DenseArray::from_raw(vec![n, m], out), Op::MatMul(a, b))
    }

    /// Adds a length-`m` vector to every row of an `(n, m)` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(bias));
        let m = av.cols();
        assert_eq!(bv.len(), m, "bias length differs from column count");
        let mut out = av.data().to_vec();
        for row in out.chunks_mut(m) {
            for (o, &b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let shape = av.shape().to_vec();
        self.push(DenseArray::from_raw(shape, out), Op::AddRow(a, bias))
    }

    /// Elementwise product of equally shaped arrays.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "mul shapes differ");
        let out = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let shape = av.shape().to_vec();
        self.push(DenseArray::from_raw(shape, out), Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let av = self.value(a);
        let out = av.data().iter().map(|x| x * factor).collect();
        let shape = av.shape().to_vec();
        self.push(DenseArray::from_raw(shape, out), Op::Scale(a, factor))
    }

    /// Sum of all entries, as a one-element array.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(DenseArray::from_raw(vec![1], vec![s]), Op::Sum(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let out = av.data().iter().map(|&x| x.max(0.0)).collect();
        let shape = av.shape().to_vec();
        self.push(DenseArray::from_raw(shape, out), Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let out = av.data().iter().map(|x| x.tanh()).collect();
        let shape = av.shape().to_vec();
        self.push(DenseArray::from_raw(shape, out), Op::Tanh(a))
    }

    /// Mean softmax cross-entropy of `(n, C)` logits against `n` labels,
    /// using the log-sum-exp shift for stability.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: Arc<[usize]>) -> Var {
        let lv = self.value(logits);
        let (n, c) = (lv.rows(), lv.cols());
        assert_eq!(labels.len(), n, "label count differs from row count");
        let mut probs = vec![0.0; n * c];
        let mut losses = Vec::with_capacity(n);
        for (i, &y) in labels.iter().enumerate() {
            let z = lv.row(i);
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            for (p, &v) in probs[i * c..(i + 1) * c].iter_mut().zip(z) {
                *p = (v - lse).exp();
            }
            losses.push(lse - z[y]);
        }
        let mean = losses.iter().sum::<f64>() / n as f64;
        self.sample_losses = losses;
        self.push(
            DenseArray::from_raw(vec![1], vec![mean]),
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            },
        )
    }

    /// Reverse sweep from a one-element `root`.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).len(), 1, "backward needs a scalar root");
        let mut grads: Vec<Option<DenseArray>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(DenseArray::from_raw(vec![1], vec![1.0]));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                    let (gd, ad, bd) = (g.data(), av.data(), bv.data());
                    // dA = G B^T
                    let mut da = vec![0.0; n * k];
                    for i in 0..n {
                        let g_row = &gd[i * m..(i + 1) * m];
                        for p in 0..k {
                            let b_row = &bd[p * m..(p + 1) * m];
                            da[i * k + p] = g_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
                        }
                    }
                    // dB = A^T G, accumulated over rows in order
                    let mut db = vec![0.0; k * m];
                    for i in 0..n {
                        let g_row = &gd[i * m..(i + 1) * m];
                        for p in 0..k {
                            let a_ip = ad[i * k + p];
                            for (o, &gv) in db[p * m..(p + 1) * m].iter_mut().zip(g_row) {
                                *o += a_ip * gv;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, DenseArray::from_raw(vec![n, k], da));
                    accumulate(&mut grads, *b, DenseArray::from_raw(vec![k, m], db));
                }
                Op::AddRow(a, bias) => {
                    let m = g.cols();
                    let mut db = vec![0.0; m];
                    for row in g.data().chunks(m) {
                        for (o, &v) in db.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    let bias_shape = self.value(*bias).shape().to_vec();
                    accumulate(&mut grads, *bias, DenseArray::from_raw(bias_shape, db));
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let da = g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                    let db = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                    let shape = g.shape().to_vec();
                    accumulate(&mut grads, *a, DenseArray::from_raw(shape.clone(), da));
                    accumulate(&mut grads, *b, DenseArray::from_raw(shape, db));
                }
                Op::Scale(a, factor) => {
                    let d = g.data().iter().map(|x| x * factor).collect();
                    accumulate(&mut grads, *a, DenseArray::from_raw(g.shape().to_vec(), d));
                }
                Op::Sum(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    let n = self.value(*a).len();
                    let d = vec![g.data()[0]; n];
                    accumulate(&mut grads, *a, DenseArray::from_raw(shape, d));
                }
                Op::Relu(a) => {
                    let av = self.value(*a);
                    let d = g
                        .data()
                        .iter()
                        .zip(av.data())
                        .map(|(&gv, &x)| if x > 0.0 { gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, DenseArray::from_raw(g.shape().to_vec(), d));
                }
                Op::Tanh(a) => {
                    let d = g
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .map(|(&gv, &y)| gv * (1.0 - y * y))
                        .collect();
                    accumulate(&mut grads, *a, DenseArray::from_raw(g.shape().to_vec(), d));
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    labels,
                    probs,
                } => {
                    let lv = self.value(*logits);
                    let (n, c) = (lv.rows(), lv.cols());
                    let coef = g.data()[0] / n as f64;
                    let mut d: Vec<f64> = probs.iter().map(|p| p * coef).collect();
                    for (i, &y) in labels.iter().enumerate() {
                        d[i * c + y] -= coef;
                    }
                    accumulate(&mut grads, *logits, DenseArray::from_raw(vec![n, c], d));
                }
            }
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<DenseArray>], var: Var, delta: DenseArray) {
    match &mut grads[var.0] {
        Some(existing) => {
            for (o, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                *o += d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}
