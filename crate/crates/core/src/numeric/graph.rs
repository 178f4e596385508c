//! Recorded computations over matrices with reverse-mode differentiation.
//!
//! Every primitive is evaluated eagerly and appended to a [`Graph`]. Calling
//! [`Graph::gradient`] walks the record backwards and emits the adjoint
//! computation as *new nodes of the same graph*, built from the same set of
//! primitives. The returned gradients are therefore ordinary nodes and can be
//! differentiated again, which is what one-step-lookahead meta-gradients need.
//!
//! Leaves created with [`Graph::input`] are the record's inputs; the whole
//! record can be re-evaluated on new input values with [`Graph::replay`].

use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input(usize),
    Const,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    Relu(Var),
    /// Heaviside step; its derivative is zero wherever it is defined.
    Step(Var),
    Sigmoid(Var),
    Exp(Var),
    LogSumExpRows(Var),
    BroadcastRows(Var, usize),
    BroadcastCols(Var, usize),
    BroadcastScalar(Var, usize, usize),
    SumRows(Var),
    SumCols(Var),
    Sum(Var),
}

impl Op {
    fn operands(&self) -> [Option<Var>; 2] {
        use Op::*;
        match *self {
            Input(_) | Const => [None, None],
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) => [Some(a), Some(b)],
            Transpose(a) | Scale(a, _) | AddScalar(a, _) | Relu(a) | Step(a) | Sigmoid(a)
            | Exp(a) | LogSumExpRows(a) | BroadcastRows(a, _) | BroadcastCols(a, _)
            | BroadcastScalar(a, _, _) | SumRows(a) | SumCols(a) | Sum(a) => [Some(a), None],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Matrix,
}

/// A topologically ordered record of matrix primitives.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    inputs: Vec<Var>,
}

fn eval<'a>(op: &Op, value: impl Fn(Var) -> &'a Matrix) -> Result<Matrix> {
    use Op::*;
    Ok(match *op {
        Input(_) | Const => unreachable!("leaves carry their own values"),
        MatMul(a, b) => value(a).matmul(value(b))?,
        Transpose(a) => value(a).transpose(),
        Add(a, b) => value(a).add(value(b))?,
        Sub(a, b) => value(a).sub(value(b))?,
        Mul(a, b) => value(a).hadamard(value(b))?,
        Scale(a, c) => value(a).scale(c)?,
        AddScalar(a, c) => value(a).add_scalar(c)?,
        Relu(a) => value(a).relu(),
        Step(a) => value(a).step(),
        Sigmoid(a) => value(a).sigmoid(),
        Exp(a) => value(a).exp()?,
        LogSumExpRows(a) => value(a).logsumexp_rows()?,
        BroadcastRows(a, n) => value(a).broadcast_rows(n)?,
        BroadcastCols(a, m) => value(a).broadcast_cols(m)?,
        BroadcastScalar(a, r, c) => value(a).broadcast_scalar(r, c)?,
        SumRows(a) => value(a).sum_rows(),
        SumCols(a) => value(a).sum_cols(),
        Sum(a) => Matrix::scalar(value(a).sum()),
    })
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Declared inputs, in creation order.
    pub fn inputs(&self) -> &[Var] {
        &self.inputs
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// A replayable input (data or parameter).
    pub fn input(&mut self, value: Matrix) -> Var {
        let slot = self.inputs.len();
        let v = self.push_node(Op::Input(slot), value);
        self.inputs.push(v);
        v
    }

    /// A constant baked into the record.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push_node(Op::Const, value)
    }

    fn push_node(&mut self, op: Op, value: Matrix) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op) -> Result<Var> {
        let value = eval(&op, |v| &self.nodes[v.0].value)?;
        Ok(self.push_node(op, value))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.push(Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.push(Op::AddScalar(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Relu(a))
    }

    pub fn step(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Step(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Exp(a))
    }

    pub fn logsumexp_rows(&mut self, a: Var) -> Result<Var> {
        self.push(Op::LogSumExpRows(a))
    }

    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        self.push(Op::BroadcastRows(a, n))
    }

    pub fn broadcast_cols(&mut self, a: Var, m: usize) -> Result<Var> {
        self.push(Op::BroadcastCols(a, m))
    }

    pub fn broadcast_scalar(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        self.push(Op::BroadcastScalar(a, rows, cols))
    }

    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        self.push(Op::SumRows(a))
    }

    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        self.push(Op::SumCols(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Sum(a))
    }

    /// `a + bias` with a `1 x m` bias repeated over the rows of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let n = self.shape(a).0;
        let b = self.broadcast_rows(bias, n)?;
        self.add(a, b)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(Error::shape("mean", "empty matrix"));
        }
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Row-wise `log softmax`.
    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let m = self.shape(a).1;
        let lse = self.logsumexp_rows(a)?;
        let lse = self.broadcast_cols(lse, m)?;
        self.sub(a, lse)
    }

    /// Re-evaluates every node of the record on new input values.
    ///
    /// `inputs` must match the declared inputs in number and shape.
    pub fn replay(&self, inputs: &[Matrix]) -> Result<Vec<Matrix>> {
        if inputs.len() != self.inputs.len() {
            return Err(Error::shape(
                "replay",
                format!("{} inputs for a record with {}", inputs.len(), self.inputs.len()),
            ));
        }
        let mut values: Vec<Matrix> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Input(slot) => {
                    let m = &inputs[slot];
                    if m.shape() != node.value.shape() {
                        return Err(Error::shape(
                            "replay",
                            format!(
                                "input {slot} is {:?}, record declares {:?}",
                                m.shape(),
                                node.value.shape()
                            ),
                        ));
                    }
                    m.clone()
                }
                Op::Const => node.value.clone(),
                ref op => eval(op, |v| &values[v.0])?,
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Replays the record and returns the value of `output`.
    pub fn forward(&self, output: Var, inputs: &[Matrix]) -> Result<Matrix> {
        let mut values = self.replay(inputs)?;
        Ok(values.swap_remove(output.0))
    }

    /// Appends the reverse-mode adjoint of the scalar `output` and returns
    /// `∂output/∂w` for each `w` in `wrt`, as nodes of this graph.
    ///
    /// Parameters the output does not depend on receive a zero constant.
    pub fn gradient(&mut self, output: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        if self.shape(output) != (1, 1) {
            return Err(Error::shape(
                "gradient",
                format!("output is {:?}, expected a scalar", self.shape(output)),
            ));
        }
        for &w in wrt {
            if w.0 >= self.nodes.len() {
                return Err(Error::InvalidArgument(format!(
                    "node {} is not part of this record",
                    w.0
                )));
            }
        }

        // Nodes that (transitively) depend on some requested parameter.
        let end = output.0 + 1;
        let mut live = vec![false; end];
        for &w in wrt {
            if w.0 < end {
                live[w.0] = true;
            }
        }
        for i in 0..end {
            if !live[i] {
                live[i] = self.nodes[i]
                    .op
                    .operands()
                    .iter()
                    .flatten()
                    .any(|a| live[a.0]);
            }
        }

        let mut adjoint: Vec<Option<Var>> = vec![None; end];
        if live[output.0] {
            adjoint[output.0] = Some(self.constant(Matrix::scalar(1.0)));
        }
        for i in (0..end).rev() {
            let Some(grad) = adjoint[i] else { continue };
            let op = self.nodes[i].op.clone();
            for (operand, contribution) in self.vjp(Var(i), &op, grad, &live)? {
                adjoint[operand.0] = Some(match adjoint[operand.0] {
                    None => contribution,
                    Some(acc) => self.add(acc, contribution)?,
                });
            }
        }

        wrt.iter()
            .map(|&w| match adjoint.get(w.0).copied().flatten() {
                Some(g) => Ok(g),
                None => {
                    let (r, c) = self.shape(w);
                    Ok(self.constant(Matrix::zeros(r, c)))
                }
            })
            .collect()
    }

    /// Vector-Jacobian products of one node, restricted to live operands.
    fn vjp(&mut self, node: Var, op: &Op, g: Var, live: &[bool]) -> Result<Vec<(Var, Var)>> {
        use Op::*;
        let want = |v: Var| live[v.0];
        let mut out = Vec::with_capacity(2);
        match *op {
            Input(_) | Const | Step(_) => {}
            MatMul(a, b) => {
                if want(a) {
                    let bt = self.transpose(b)?;
                    out.push((a, self.matmul(g, bt)?));
                }
                if want(b) {
                    let at = self.transpose(a)?;
                    out.push((b, self.matmul(at, g)?));
                }
            }
            Transpose(a) => {
                if want(a) {
                    out.push((a, self.transpose(g)?));
                }
            }
            Add(a, b) => {
                if want(a) {
                    out.push((a, g));
                }
                if want(b) {
                    out.push((b, g));
                }
            }
            Sub(a, b) => {
                if want(a) {
                    out.push((a, g));
                }
                if want(b) {
                    out.push((b, self.scale(g, -1.0)?));
                }
            }
            Mul(a, b) => {
                if want(a) {
                    out.push((a, self.mul(g, b)?));
                }
                if want(b) {
                    out.push((b, self.mul(g, a)?));
                }
            }
            Scale(a, c) => {
                if want(a) {
                    out.push((a, self.scale(g, c)?));
                }
            }
            AddScalar(a, _) => {
                if want(a) {
                    out.push((a, g));
                }
            }
            Relu(a) => {
                if want(a) {
                    let mask = self.step(a)?;
                    out.push((a, self.mul(g, mask)?));
                }
            }
            Sigmoid(a) => {
                if want(a) {
                    // s (1 - s)
                    let neg = self.scale(node, -1.0)?;
                    let one_minus = self.add_scalar(neg, 1.0)?;
                    let ds = self.mul(node, one_minus)?;
                    out.push((a, self.mul(g, ds)?));
                }
            }
            Exp(a) => {
                if want(a) {
                    out.push((a, self.mul(g, node)?));
                }
            }
            LogSumExpRows(a) => {
                if want(a) {
                    let m = self.shape(a).1;
                    let lse = self.broadcast_cols(node, m)?;
                    let shifted = self.sub(a, lse)?;
                    let softmax = self.exp(shifted)?;
                    let gb = self.broadcast_cols(g, m)?;
                    out.push((a, self.mul(gb, softmax)?));
                }
            }
            BroadcastRows(a, _) => {
                if want(a) {
                    out.push((a, self.sum_rows(g)?));
                }
            }
            BroadcastCols(a, _) => {
                if want(a) {
                    out.push((a, self.sum_cols(g)?));
                }
            }
            BroadcastScalar(a, _, _) => {
                if want(a) {
                    out.push((a, self.sum(g)?));
                }
            }
            SumRows(a) => {
                if want(a) {
                    let n = self.shape(a).0;
                    out.push((a, self.broadcast_rows(g, n)?));
                }
            }
            SumCols(a) => {
                if want(a) {
                    let m = self.shape(a).1;
                    out.push((a, self.broadcast_cols(g, m)?));
                }
            }
            Sum(a) => {
                if want(a) {
                    let (r, c) = self.shape(a);
                    out.push((a, self.broadcast_scalar(g, r, c)?));
                }
            }
        }
        Ok(out)
    }
}
