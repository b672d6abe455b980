use crate::diffcore::{Tape, Tensor, Var};
use crate::seed::Rng;

/// `x -> relu(x W1 + b1) W2 + b2` with a single output column.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl Mlp {
    pub fn init(d_in: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            w1: Tensor::glorot(d_in, hidden, rng),
            b1: Tensor::zeros(1, hidden),
            w2: Tensor::glorot(hidden, 1, rng),
            b2: Tensor::zeros(1, 1),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w1.rows()
    }

    pub fn tensors(&self) -> [&Tensor; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn from_tensors(mut t: Vec<Tensor>) -> Option<Self> {
        if t.len() != 4 {
            return None;
        }
        let b2 = t.pop()?;
        let w2 = t.pop()?;
        let b1 = t.pop()?;
        let w1 = t.pop()?;
        let ok = b1.shape() == (1, w1.cols()) && w2.shape() == (w1.cols(), 1) && b2.shape() == (1, 1);
        ok.then_some(Self { w1, b1, w2, b2 })
    }

    pub fn load_vars(&self, tape: &mut Tape) -> [Var; 4] {
        self.tensors().map(|t| tape.leaf(t.clone()))
    }

    /// Forward on a tape; returns an `N x 1` column.
    pub fn forward(tape: &mut Tape, vars: &[Var; 4], x: Var) -> Var {
        let h = tape.matmul(x, vars[0]);
        let h = tape.add_row(h, vars[1]);
        let h = tape.relu(h);
        let o = tape.matmul(h, vars[2]);
        tape.add_row(o, vars[3])
    }

    /// Forward without a tape.
    pub fn apply(&self, x: &Tensor) -> Vec<f64> {
        let mut h = x.matmul(&self.w1);
        for r in 0..h.rows() {
            for (v, b) in h.row_mut(r).iter_mut().zip(self.b1.data()) {
                *v = (*v + b).max(0.0);
            }
        }
        let o = h.matmul(&self.w2);
        o.data().iter().map(|v| v + self.b2.item()).collect()
    }
}
