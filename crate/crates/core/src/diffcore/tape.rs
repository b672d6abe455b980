use std::rc::Rc;

use thiserror::Error;

use super::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum DiffError {
    #[error("loss must be a 1x1 tensor, got {0}x{1}")]
    NonScalarLoss(usize, usize),
    #[error("non-finite value produced by `{0}`")]
    NonFinite(&'static str),
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(usize),
    #[error("parameter/gradient shape mismatch at index {0}")]
    ShapeMismatch(usize),
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    AddRow(Var, Var),
    Relu(Var),
    GatherRows(Var, Rc<[usize]>),
    SegmentSum(Var, Rc<[usize]>),
    SegmentMean(Var, Rc<[usize]>, Rc<[f64]>),
    ScaleRows(Var, Rc<[f64]>),
    Concat(Var, Var),
    Mse(Var, Var),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    BceWithLogits(Var, Rc<[f64]>),
    Softplus(Var),
    Abs(Var),
    Sqrt(Var),
    StopGradient,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the node list is already
/// topologically sorted and backward is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    non_finite: Option<&'static str>,
    frozen: Option<std::collections::VecDeque<Tensor>>,
}

/// Gradients of a scalar with respect to every node of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`; a zero tensor when `v` does not influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    /// Moves the gradient out, leaving `None` behind.
    pub fn take(&mut self, v: Var) -> Tensor {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn is_connected(&self, v: Var) -> bool {
        self.grads[v.0].is_some()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape whose `stop_gradient` outputs replay `values` in order instead
    /// of copying their inputs. Used to evaluate the function that the
    /// analytic gradient differentiates: stopped quantities held constant.
    pub fn with_frozen_stops(values: Vec<Tensor>) -> Self {
        Self {
            frozen: Some(values.into()),
            ..Self::default()
        }
    }

    /// Values of every `stop_gradient` node, in recording order.
    pub fn stop_values(&self) -> Vec<Tensor> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.op, Op::StopGradient))
            .map(|n| n.value.clone())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, name: &'static str) -> Var {
        if self.non_finite.is_none() && !value.is_finite() {
            self.non_finite = Some(name);
        }
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A differentiable input (parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true, "leaf")
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false, "constant")
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Errors if any recorded value is NaN or infinite.
    pub fn check_finite(&self) -> Result<(), DiffError> {
        match self.non_finite {
            Some(op) => Err(DiffError::NonFinite(op)),
            None => Ok(()),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::MatMul(a, b), rg, "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Add(a, b), rg, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Sub(a, b), rg, "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Mul(a, b), rg, "mul")
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let v = self.value(a).map(|x| x * factor);
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, factor), rg, "scale")
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        let rg = self.rg(a);
        self.push(v, Op::AddScalar(a), rg, "add_scalar")
    }

    /// Adds the `1 x cols` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(bias));
        assert_eq!(bv.rows(), 1, "bias must be a single row");
        assert_eq!(av.cols(), bv.cols(), "bias width mismatch");
        let mut v = av.clone();
        for r in 0..v.rows() {
            for (x, b) in v.row_mut(r).iter_mut().zip(bv.data()) {
                *x += b;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        self.push(v, Op::AddRow(a, bias), rg, "add_row")
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(v, Op::Relu(a), rg, "relu")
    }

    /// Row `r` of the output is row `index[r]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: Rc<[usize]>) -> Var {
        let av = self.value(a);
        let cols = av.cols();
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            data.extend_from_slice(av.row(i));
        }
        let v = Tensor::from_vec(index.len(), cols, data);
        let rg = self.rg(a);
        self.push(v, Op::GatherRows(a, index), rg, "gather_rows")
    }

    /// Row `s` of the output is the sum of the rows `r` of `a` with
    /// `segment[r] == s`.
    pub fn segment_sum(&mut self, a: Var, segment: Rc<[usize]>, n_segments: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.rows(), segment.len(), "one segment id per row");
        let mut v = Tensor::zeros(n_segments, av.cols());
        for (r, &s) in segment.iter().enumerate() {
            for (o, x) in v.row_mut(s).iter_mut().zip(av.row(r)) {
                *o += x;
            }
        }
        let rg = self.rg(a);
        self.push(v, Op::SegmentSum(a, segment), rg, "segment_sum")
    }

    /// Like [`Tape::segment_sum`] but averaged; empty segments give zero rows.
    pub fn segment_mean(&mut self, a: Var, segment: Rc<[usize]>, n_segments: usize) -> Var {
        let av = self.value(a);
        assert_eq!(av.rows(), segment.len(), "one segment id per row");
        let mut counts = vec![0.0; n_segments];
        for &s in segment.iter() {
            counts[s] += 1.0;
        }
        let inv: Rc<[f64]> = counts.iter().map(|&c| if c > 0.0 { 1.0 / c } else { 0.0 }).collect();
        let mut v = Tensor::zeros(n_segments, av.cols());
        for (r, &s) in segment.iter().enumerate() {
            let w = inv[s];
            for (o, x) in v.row_mut(s).iter_mut().zip(av.row(r)) {
                *o += w * x;
            }
        }
        let rg = self.rg(a);
        self.push(v, Op::SegmentMean(a, segment, inv), rg, "segment_mean")
    }

    /// Multiplies row `r` of `a` by `weights[r]`.
    pub fn scale_rows(&mut self, a: Var, weights: Rc<[f64]>) -> Var {
        let mut v = self.value(a).clone();
        assert_eq!(v.rows(), weights.len(), "one weight per row");
        for (r, &w) in weights.iter().enumerate() {
            for x in v.row_mut(r) {
                *x *= w;
            }
        }
        let rg = self.rg(a);
        self.push(v, Op::ScaleRows(a, weights), rg, "scale_rows")
    }

    /// Column-wise concatenation `[a | b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.rows(), bv.rows(), "concat row counts differ");
        let mut data = Vec::with_capacity(av.len() + bv.len());
        for r in 0..av.rows() {
            data.extend_from_slice(av.row(r));
            data.extend_from_slice(bv.row(r));
        }
        let v = Tensor::from_vec(av.rows(), av.cols() + bv.cols(), data);
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Concat(a, b), rg, "concat")
    }

    /// Mean over rows of the squared row-wise distance: `(1/N) sum_i |a_i - b_i|^2`.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "mse shape mismatch");
        let n = av.rows().max(1) as f64;
        let s: f64 = av.data().iter().zip(bv.data()).map(|(x, y)| (x - y) * (x - y)).sum();
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::scalar(s / n), Op::Mse(a, b), rg, "mse")
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg, "sum")
    }

    /// Mean over all elements.
    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let s = av.sum() / av.len().max(1) as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg, "mean")
    }

    /// Sum of each row as an `N x 1` tensor.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = (0..av.rows()).map(|r| av.row(r).iter().sum()).collect();
        let v = Tensor::from_vec(av.rows(), 1, data);
        let rg = self.rg(a);
        self.push(v, Op::RowSum(a), rg, "row_sum")
    }

    /// Identity forward; blocks all gradient flow into `a`.
    pub fn stop_gradient(&mut self, a: Var) -> Var {
        let v = match self.frozen.as_mut().and_then(|q| q.pop_front()) {
            Some(v) => v,
            None => self.value(a).clone(),
        };
        self.push(v, Op::StopGradient, false, "stop_gradient")
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `targets`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Rc<[f64]>) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.len(), targets.len(), "one target per logit");
        let n = lv.len().max(1) as f64;
        let s: f64 = lv.data().iter().zip(targets.iter()).map(|(&z, &y)| softplus(z) - y * z).sum();
        let rg = self.rg(logits);
        self.push(Tensor::scalar(s / n), Op::BceWithLogits(logits, targets), rg, "bce_with_logits")
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        let rg = self.rg(a);
        self.push(v, Op::Softplus(a), rg, "softplus")
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::abs);
        let rg = self.rg(a);
        self.push(v, Op::Abs(a), rg, "abs")
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::sqrt);
        let rg = self.rg(a);
        self.push(v, Op::Sqrt(a), rg, "sqrt")
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, DiffError> {
        self.check_finite()?;
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(DiffError::NonScalarLoss(lv.rows(), lv.cols()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::scalar(1.0));
        }
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let out = Gradients { grads, shapes };
        for (i, g) in out.grads.iter().enumerate() {
            if let Some(g) = g {
                if !g.is_finite() {
                    return Err(DiffError::NonFiniteGradient(i));
                }
            }
        }
        Ok(out)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf | Op::StopGradient => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    self.accumulate(grads, *a, g.matmul_t(self.value(*b)));
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, self.value(*a).t_matmul(g));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    self.accumulate(grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
                }
            }
            Op::Scale(a, f) => self.accumulate(grads, *a, g.map(|x| x * f)),
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone()),
            Op::AddRow(a, bias) => {
                self.accumulate(grads, *a, g.clone());
                if self.rg(*bias) {
                    let gb = g.mean_rows().map(|x| x * g.rows() as f64);
                    self.accumulate(grads, *bias, gb);
                }
            }
            Op::Relu(a) => {
                let ga = g.zip_map(self.value(*a), |x, y| if y > 0.0 { x } else { 0.0 });
                self.accumulate(grads, *a, ga);
            }
            Op::GatherRows(a, index) => {
                let (r, c) = self.value(*a).shape();
                let mut ga = Tensor::zeros(r, c);
                for (out_row, &src) in index.iter().enumerate() {
                    for (o, x) in ga.row_mut(src).iter_mut().zip(g.row(out_row)) {
                        *o += x;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SegmentSum(a, segment) => {
                let c = g.cols();
                let mut data = Vec::with_capacity(segment.len() * c);
                for &s in segment.iter() {
                    data.extend_from_slice(g.row(s));
                }
                self.accumulate(grads, *a, Tensor::from_vec(segment.len(), c, data));
            }
            Op::SegmentMean(a, segment, inv) => {
                let c = g.cols();
                let mut data = Vec::with_capacity(segment.len() * c);
                for &s in segment.iter() {
                    data.extend(g.row(s).iter().map(|x| x * inv[s]));
                }
                self.accumulate(grads, *a, Tensor::from_vec(segment.len(), c, data));
            }
            Op::ScaleRows(a, weights) => {
                let mut ga = g.clone();
                for (r, &w) in weights.iter().enumerate() {
                    for x in ga.row_mut(r) {
                        *x *= w;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Concat(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                let rows = g.rows();
                let mut ga = Vec::with_capacity(rows * ca);
                let mut gb = Vec::with_capacity(rows * cb);
                for r in 0..rows {
                    let row = g.row(r);
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                self.accumulate(grads, *a, Tensor::from_vec(rows, ca, ga));
                self.accumulate(grads, *b, Tensor::from_vec(rows, cb, gb));
            }
            Op::Mse(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let k = 2.0 * g.item() / av.rows().max(1) as f64;
                let diff = av.zip_map(bv, |x, y| k * (x - y));
                if self.rg(*b) {
                    self.accumulate(grads, *b, diff.map(|x| -x));
                }
                self.accumulate(grads, *a, diff);
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                self.accumulate(grads, *a, Tensor::full(r, c, g.item()));
            }
            Op::Mean(a) => {
                let (r, c) = self.value(*a).shape();
                let n = (r * c).max(1) as f64;
                self.accumulate(grads, *a, Tensor::full(r, c, g.item() / n));
            }
            Op::RowSum(a) => {
                let (r, c) = self.value(*a).shape();
                let mut ga = Tensor::zeros(r, c);
                for i in 0..r {
                    let gi = g.get(i, 0);
                    ga.row_mut(i).fill(gi);
                }
                self.accumulate(grads, *a, ga);
            }
            Op::BceWithLogits(logits, targets) => {
                let lv = self.value(*logits);
                let k = g.item() / lv.len().max(1) as f64;
                let data = lv.data().iter().zip(targets.iter()).map(|(&z, &y)| k * (sigmoid(z) - y)).collect();
                self.accumulate(grads, *logits, Tensor::from_vec(lv.rows(), lv.cols(), data));
            }
            Op::Softplus(a) => {
                let ga = g.zip_map(self.value(*a), |x, z| x * sigmoid(z));
                self.accumulate(grads, *a, ga);
            }
            Op::Abs(a) => {
                let ga = g.zip_map(self.value(*a), |x, z| {
                    if z > 0.0 {
                        x
                    } else if z < 0.0 {
                        -x
                    } else {
                        0.0
                    }
                });
                self.accumulate(grads, *a, ga);
            }
            Op::Sqrt(a) => {
                let ga = g.zip_map(&node.value, |x, s| x / (2.0 * s));
                self.accumulate(grads, *a, ga);
            }
        }
    }
}

pub fn logistic(z: f64) -> f64 {
    sigmoid(z)
}
