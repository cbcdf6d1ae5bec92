//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every primitive appends a node to the [`Tape`]; creation order is a
//! topological order, so [`Tape::backward`] walks the nodes in reverse.
//! A fresh tape is built for each mini-batch.
//!
//! ```
//! use adadrug::numerics::{Matrix, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Matrix::scalar(3.0));
//! let sq = tape.ewmul(x, x).unwrap();
//! let loss = tape.sum_all(sq);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).item(), 6.0);
//! ```

use crate::error::{Error, Result};

use super::Matrix;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    Param,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddBias(Var, Var),
    EwMul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Abs(Var),
    Ln(Var),
    Clamp(Var, f64, f64),
    SumAll(Var),
    MeanAll(Var),
    SumRows(Var),
    GradReverse(Var, f64),
}

#[derive(Debug)]
pub struct Node {
    pub value: Matrix,
    grad: Option<Matrix>,
    pub op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of `v`; zeros if nothing has reached it yet.
    pub fn grad(&self, v: Var) -> Matrix {
        let node = &self.nodes[v.0];
        node.grad
            .clone()
            .unwrap_or_else(|| Matrix::zeros(node.value.rows(), node.value.cols()))
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Param, true)
    }

    /// Leaf that never receives gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, x: Var, value: Matrix, op: Op) -> Var {
        let rg = self.nodes[x.0].requires_grad;
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: Var, b: Var, value: Matrix, op: Op) -> Var {
        let rg = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        self.push(value, op, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.binary(a, b, v, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        Ok(self.binary(a, b, v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        Ok(self.binary(a, b, v, Op::Sub(a, b)))
    }

    /// `x + bias` with the 1×n bias broadcast over the rows of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let v = self.value(x).add_row(self.value(bias))?;
        Ok(self.binary(x, bias, v, Op::AddBias(x, bias)))
    }

    pub fn ewmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self
            .value(a)
            .zip_map(self.value(b), "ewmul", |x, y| x * y)?;
        Ok(self.binary(a, b, v, Op::EwMul(a, b)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x).map(|e| e * c);
        self.unary(x, v, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x).map(|e| e + c);
        self.unary(x, v, Op::AddScalar(x, c))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(relu);
        self.unary(x, v, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(sigmoid);
        self.unary(x, v, Op::Sigmoid(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::abs);
        self.unary(x, v, Op::Abs(x))
    }

    /// Natural log. Callers clamp first; non-positive inputs yield -inf/NaN.
    pub fn ln(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::ln);
        self.unary(x, v, Op::Ln(x))
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(x).map(|e| e.clamp(lo, hi));
        self.unary(x, v, Op::Clamp(x, lo, hi))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let v = Matrix::scalar(self.value(x).sum());
        self.unary(x, v, Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let v = Matrix::scalar(self.value(x).mean());
        self.unary(x, v, Op::MeanAll(x))
    }

    /// Row sums as an n×1 column.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let v = self.value(x).row_sums();
        self.unary(x, v, Op::SumRows(x))
    }

    /// Identity forward; backward multiplies the upstream gradient by `-lambda`.
    pub fn grad_reverse(&mut self, x: Var, lambda: f64) -> Var {
        debug_assert!(lambda >= 0.0);
        let v = self.value(x).clone();
        self.unary(x, v, Op::GradReverse(x, lambda))
    }

    /// Reverse sweep from a scalar `loss`. Each node's gradient is
    /// incremented by its adjoint, so repeated calls accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a 1x1 loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let op = node.op;
            self.propagate(op, i, &g, &mut adj);
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(acc) => acc.add_assign(&g),
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, op: Op, out: usize, g: &Matrix, adj: &mut [Option<Matrix>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let mut send = |v: Var, contrib: Matrix| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut adj[v.0] {
                Some(acc) => acc.add_assign(&contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        let wants = |v: Var| self.nodes[v.0].requires_grad;

        match op {
            Op::Param | Op::Constant => {}
            Op::MatMul(a, b) => {
                if wants(a) {
                    send(a, g.matmul_nt(val(b)).expect("matmul backward shape"));
                }
                if wants(b) {
                    send(b, val(a).matmul_tn(g).expect("matmul backward shape"));
                }
            }
            Op::Add(a, b) => {
                send(a, g.clone());
                send(b, g.clone());
            }
            Op::Sub(a, b) => {
                send(a, g.clone());
                send(b, g.map(|e| -e));
            }
            Op::AddBias(x, bias) => {
                send(x, g.clone());
                if wants(bias) {
                    send(bias, g.col_sums());
                }
            }
            Op::EwMul(a, b) => {
                if wants(a) {
                    send(a, zip(g, val(b), |gi, bi| gi * bi));
                }
                if wants(b) {
                    send(b, zip(g, val(a), |gi, ai| gi * ai));
                }
            }
            Op::Scale(x, c) => send(x, g.map(|e| e * c)),
            Op::AddScalar(x, _) => send(x, g.clone()),
            Op::Relu(x) => send(x, zip(g, val(x), |gi, xi| if xi > 0.0 { gi } else { 0.0 })),
            Op::Sigmoid(x) => {
                let y = &self.nodes[out].value;
                send(x, zip(g, y, |gi, yi| gi * yi * (1.0 - yi)));
            }
            Op::Abs(x) => send(x, zip(g, val(x), |gi, xi| gi * sign(xi))),
            Op::Ln(x) => send(x, zip(g, val(x), |gi, xi| gi / xi)),
            Op::Clamp(x, lo, hi) => send(
                x,
                zip(
                    g,
                    val(x),
                    |gi, xi| if xi >= lo && xi <= hi { gi } else { 0.0 },
                ),
            ),
            Op::SumAll(x) => {
                let (r, c) = val(x).shape();
                send(x, Matrix::filled(r, c, g.item()));
            }
            Op::MeanAll(x) => {
                let (r, c) = val(x).shape();
                send(x, Matrix::filled(r, c, g.item() / (r * c) as f64));
            }
            Op::SumRows(x) => {
                let (r, c) = val(x).shape();
                let mut m = Matrix::zeros(r, c);
                for i in 0..r {
                    let gi = g.get(i, 0);
                    for j in 0..c {
                        m.set(i, j, gi);
                    }
                }
                send(x, m);
            }
            Op::GradReverse(x, lambda) => send(x, g.map(|e| -lambda * e)),
        }
    }
}

fn zip(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    a.zip_map(b, "backward", f).expect("backward shapes agree")
}

#[inline]
pub(crate) fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// Subgradient 0 at the kink.
#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> Matrix {
        Matrix::from_rows(&[v])
    }

    #[test]
    fn relu_sign_cases() {
        let mut t = Tape::new();
        let x = t.constant(row(&[-1.0, 0.0, 2.0]));
        let y = t.relu(x);
        assert_eq!(t.value(y), &row(&[0.0, 0.0, 2.0]));
    }

    #[test]
    fn ewmul_hand_case() {
        let mut t = Tape::new();
        let a = t.constant(row(&[1.0, 2.0]));
        let b = t.constant(row(&[3.0, 4.0]));
        let y = t.ewmul(a, b).unwrap();
        assert_eq!(t.value(y), &row(&[3.0, 8.0]));
    }

    #[test]
    fn abs_backward_negative_side() {
        let mut t = Tape::new();
        let x = t.param(Matrix::scalar(-2.0));
        let y = t.abs(x);
        let l = t.sum_all(y);
        t.backward(l).unwrap();
        assert_eq!(t.grad(x).item(), -1.0);
    }

    #[test]
    fn kinks_have_zero_subgradient() {
        let mut t = Tape::new();
        let x = t.param(row(&[0.0, 0.0]));
        let a = t.abs(x);
        let r = t.relu(x);
        let s = t.add(a, r).unwrap();
        let l = t.sum_all(s);
        t.backward(l).unwrap();
        assert_eq!(t.grad(x), row(&[0.0, 0.0]));
    }

    #[test]
    fn grad_reverse_identity_forward() {
        let mut t = Tape::new();
        let x = t.param(row(&[1.0, 2.0]));
        let y = t.grad_reverse(x, 1.0);
        assert_eq!(t.value(y), &row(&[1.0, 2.0]));
    }

    #[test]
    fn grad_reverse_scales_upstream() {
        for (lambda, expect) in [(1.0, -3.0), (0.0, 0.0), (0.5, -1.5)] {
            let mut t = Tape::new();
            let x = t.param(Matrix::scalar(1.0));
            let y = t.grad_reverse(x, lambda);
            let y3 = t.scale(y, 3.0);
            let l = t.sum_all(y3);
            t.backward(l).unwrap();
            assert_eq!(t.grad(x).item(), expect);
        }
    }

    #[test]
    fn quadratic_gradient() {
        let mut t = Tape::new();
        let x = t.param(row(&[3.0]));
        let sq = t.ewmul(x, x).unwrap();
        let l = t.sum_all(sq);
        t.backward(l).unwrap();
        assert_eq!(t.grad(x).item(), 6.0);
    }

    #[test]
    fn detached_parameter_gets_zero() {
        let mut t = Tape::new();
        let x = t.param(row(&[3.0, 1.0]));
        let other = t.param(row(&[2.0]));
        let l = t.sum_all(other);
        t.backward(l).unwrap();
        assert_eq!(t.grad(x), row(&[0.0, 0.0]));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let x = t.param(row(&[1.0, 2.0]));
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn repeated_backward_accumulates_then_zeroes() {
        let mut t = Tape::new();
        let x = t.param(row(&[1.5, -2.0]));
        let sq = t.ewmul(x, x).unwrap();
        let l = t.sum_all(sq);
        t.backward(l).unwrap();
        let once = t.grad(x);
        t.backward(l).unwrap();
        assert_eq!(t.grad(x), once.map(|v| 2.0 * v));
        t.zero_grads();
        assert!(t.grad(x).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_errors_surface() {
        let mut t = Tape::new();
        let a = t.param(Matrix::zeros(2, 3));
        let b = t.param(Matrix::zeros(2, 3));
        assert!(t.matmul(a, b).is_err());
        let c = t.param(Matrix::zeros(3, 2));
        assert!(t.ewmul(a, c).is_err());
        assert!(t.add_bias(a, c).is_err());
    }

    #[test]
    fn sigmoid_stays_finite_for_large_inputs() {
        let mut t = Tape::new();
        let x = t.param(row(&[-1e6, -800.0, 0.0, 800.0, 1e6]));
        let y = t.sigmoid(x);
        let c = t.clamp(y, 1e-7, 1.0 - 1e-7);
        let l = t.ln(c);
        let s = t.sum_all(l);
        t.backward(s).unwrap();
        assert!(t.value(s).is_finite());
        assert!(t.grad(x).is_finite());
        assert_eq!(t.value(y).get(0, 2), 0.5);
    }
}
