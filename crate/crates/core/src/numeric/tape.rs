use super::{NumericError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRowVec(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    LogSoftmax(Var),
    Clamp { x: Var, lo: f64, hi: f64 },
    Log(Var),
    OneMinus(Var),
    Scale(Var, f64),
    Add(Var, Var),
    Mul(Var, Var),
    Mean(Var),
    WeightedNll {
        log_probs: Var,
        labels: Vec<usize>,
        weights: Vec<f64>,
        denom: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Append-only record of primitive applications for reverse-mode
/// differentiation. One tape per forward pass; it is never shared between
/// training runs.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
    visited: Vec<usize>,
}

impl Gradients {
    /// Gradient with respect to `var`; exactly zero if `var` did not
    /// influence the differentiated output.
    pub fn wrt(&self, var: Var) -> Tensor {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, var: Var) -> Tensor {
        match self.grads[var.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[var.0];
                Tensor::zeros(r, c)
            }
        }
    }

    /// Node indices in the order the backward pass processed them.
    pub fn visit_order(&self) -> &[usize] {
        &self.visited
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Records an input (parameter or constant).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn add_rowvec(&mut self, a: Var, bias: Var) -> Result<Var, NumericError> {
        let value = self.value(a).add_rowvec(self.value(bias))?;
        Ok(self.push(value, Op::AddRowVec(a, bias)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).relu();
        self.push(value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).sigmoid();
        self.push(value, Op::Sigmoid(a))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let value = self.value(a).log_softmax();
        self.push(value, Op::LogSoftmax(a))
    }

    /// Clamps into `[lo, hi]`; the gradient is passed through inside the
    /// interval and zero outside it.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(x).clamp(lo, hi);
        self.push(value, Op::Clamp { x, lo, hi })
    }

    pub fn log(&mut self, a: Var) -> Result<Var, NumericError> {
        let value = self.value(a).map("log", f64::ln)?;
        Ok(self.push(value, Op::Log(a)))
    }

    /// `1 - a`, entrywise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::from_op(
            "one_minus",
            t.rows(),
            t.cols(),
            t.data().iter().map(|v| 1.0 - v).collect(),
        )
        .expect("1 - finite is finite");
        self.push(value, Op::OneMinus(a))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, NumericError> {
        let value = self.value(a).map("scale", |v| v * factor)?;
        Ok(self.push(value, Op::Scale(a, factor)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let value = self.value(a).zip_map("add", self.value(b), |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Entrywise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let value = self.value(a).zip_map("mul", self.value(b), |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    /// Mean of all entries, as a 1x1 tensor.
    pub fn mean(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).mean()).expect("mean of finite values");
        self.push(value, Op::Mean(a))
    }

    /// `-(1/denom) · Σᵢ wᵢ · log_probs[i, labels[i]]`, with the weights held
    /// constant.
    pub fn weighted_nll(
        &mut self,
        log_probs: Var,
        labels: &[usize],
        weights: &[f64],
        denom: f64,
    ) -> Result<Var, NumericError> {
        let lp = self.value(log_probs);
        if labels.len() != lp.rows() || weights.len() != lp.rows() {
            return Err(NumericError::Shape {
                op: "weighted_nll",
                left: lp.shape(),
                right: (labels.len(), weights.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= lp.cols()) {
            return Err(NumericError::Label {
                label: bad,
                num_classes: lp.cols(),
            });
        }
        let total: f64 = labels
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(i, (&y, &w))| -w * lp.get(i, y))
            .sum();
        let value = Tensor::from_op("weighted_nll", 1, 1, vec![total / denom])?;
        Ok(self.push(
            value,
            Op::WeightedNll {
                log_probs,
                labels: labels.to_vec(),
                weights: weights.to_vec(),
                denom,
            },
        ))
    }

    /// Reverse pass from a scalar output. Nodes are processed in exact
    /// reverse order of recording.
    pub fn backward(&self, output: Var) -> Result<Gradients, NumericError> {
        let out_shape = self.value(output).shape();
        if out_shape != (1, 1) {
            return Err(NumericError::NotScalar { shape: out_shape });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::scalar(1.0)?);
        let mut visited = Vec::new();

        for idx in (0..=output.0).rev() {
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            visited.push(idx);
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    // leaves keep their gradient for the caller
                    grads[idx] = Some(upstream);
                }
                Op::MatMul(a, b) => {
                    let ga = upstream.matmul_bt(self.value(*b))?;
                    let gb = self.value(*a).matmul_at(&upstream)?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::AddRowVec(a, bias) => {
                    let gb = upstream.sum_rows();
                    accumulate(&mut grads, *bias, gb)?;
                    accumulate(&mut grads, *a, upstream.clone())?;
                }
                Op::Relu(a) => {
                    let g = upstream.zip_map("relu_backward", self.value(*a), |g, x| {
                        if x > 0.0 {
                            g
                        } else {
                            0.0
                        }
                    })?;
                    accumulate(&mut grads, *a, g)?;
                }
                Op::Sigmoid(a) => {
                    let g = upstream
                        .zip_map("sigmoid_backward", &node.value, |g, y| g * y * (1.0 - y))?;
                    accumulate(&mut grads, *a, g)?;
                }
                Op::LogSoftmax(a) => {
                    let y = &node.value;
                    let mut data = Vec::with_capacity(y.len());
                    for r in 0..y.rows() {
                        let gs: f64 = upstream.row(r).iter().sum();
                        data.extend(
                            upstream
                                .row(r)
                                .iter()
                                .zip(y.row(r))
                                .map(|(&g, &lp)| g - lp.exp() * gs),
                        );
                    }
                    let g = Tensor::from_op("log_softmax_backward", y.rows(), y.cols(), data)?;
                    accumulate(&mut grads, *a, g)?;
                }
                Op::Clamp { x, lo, hi } => {
                    let g = upstream.zip_map("clamp_backward", self.value(*x), |g, v| {
                        if v >= *lo && v <= *hi {
                            g
                        } else {
                            0.0
                        }
                    })?;
                    accumulate(&mut grads, *x, g)?;
                }
                Op::Log(a) => {
                    let g = upstream.zip_map("log_backward", self.value(*a), |g, v| g / v)?;
                    accumulate(&mut grads, *a, g)?;
                }
                Op::OneMinus(a) => {
                    let g = upstream.map("one_minus_backward", |g| -g)?;
                    accumulate(&mut grads, *a, g)?;
                }
                Op::Scale(a, factor) => {
                    let g = upstream.map("scale_backward", |g| g * factor)?;
                    accumulate(&mut grads, *a, g)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, upstream.clone())?;
                    accumulate(&mut grads, *b, upstream)?;
                }
                Op::Mul(a, b) => {
                    let ga = upstream.zip_map("mul_backward", self.value(*b), |g, v| g * v)?;
                    let gb = upstream.zip_map("mul_backward", self.value(*a), |g, v| g * v)?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::Mean(a) => {
                    let (r, c) = self.value(*a).shape();
                    let n = (r * c).max(1) as f64;
                    let g = Tensor::full(r, c, upstream.item()? / n)?;
                    accumulate(&mut grads, *a, g)?;
                }
                Op::WeightedNll {
                    log_probs,
                    labels,
                    weights,
                    denom,
                } => {
                    let (r, c) = self.value(*log_probs).shape();
                    let scale = upstream.item()? / denom;
                    let mut g = Tensor::zeros(r, c);
                    for (i, (&y, &w)) in labels.iter().zip(weights).enumerate() {
                        g.set(i, y, -w * scale)?;
                    }
                    accumulate(&mut grads, *log_probs, g)?;
                }
            }
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
            visited,
        })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], var: Var, g: Tensor) -> Result<(), NumericError> {
    let slot = &mut grads[var.0];
    *slot = Some(match slot.take() {
        None => g,
        Some(prev) => prev.zip_map("accumulate", &g, |a, b| a + b)?,
    });
    Ok(())
}
