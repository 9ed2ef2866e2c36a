//! Reverse-mode automatic differentiation over a flat operation tape.
//!
//! The op set is a closed enumeration: the models built on top are fixed-shape
//! MLPs, so a small tape beats a generic graph and keeps finite-difference
//! coverage tractable. Node values are computed when an op is recorded, so the
//! tape is always topologically ordered and fully evaluated; `backward` then
//! walks it once in reverse.
//!
//! Numeric floors: `log` and `power` clamp their argument to
//! [`PROB_FLOOR`](super::matrix::PROB_FLOOR) before evaluation (the losses
//! raise probabilities to fractional powers), and `clamp` is a hard interval
//! clamp with pass-through gradient inside the interval.

use super::matrix::{Matrix, NumericsError, PROB_FLOOR};

/// Index of a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Parameter,
    Matmul(NodeId, NodeId),
    AddRowBroadcast(NodeId, NodeId),
    Tanh(NodeId),
    SoftmaxRows(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Power(NodeId, f64),
    Scale(NodeId, f64),
    Add(NodeId, NodeId),
    Subtract(NodeId, NodeId),
    Multiply(NodeId, NodeId),
    SumAll(NodeId),
    SumRows(NodeId),
    MeanAll(NodeId),
    ColumnSlice(NodeId, usize, usize),
    ColumnConcat(NodeId, NodeId),
    Square(NodeId),
    Negate(NodeId),
    Clamp(NodeId, f64, f64),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Parameter => "parameter",
            Op::Matmul(..) => "matmul",
            Op::AddRowBroadcast(..) => "add-row-broadcast",
            Op::Tanh(..) => "tanh",
            Op::SoftmaxRows(..) => "softmax-rows",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Power(..) => "power",
            Op::Scale(..) => "scale",
            Op::Add(..) => "add",
            Op::Subtract(..) => "subtract",
            Op::Multiply(..) => "multiply",
            Op::SumAll(..) => "sum-all",
            Op::SumRows(..) => "sum-rows",
            Op::MeanAll(..) => "mean-all",
            Op::ColumnSlice(..) => "column-slice",
            Op::ColumnConcat(..) => "column-concat",
            Op::Square(..) => "square",
            Op::Negate(..) => "negate",
            Op::Clamp(..) => "clamp",
        }
    }
}

struct Node {
    op: Op,
    value: Matrix,
    grad: Option<Matrix>,
}

/// Single-threaded computation tape. Rebuilt per minibatch during training.
pub struct Tape {
    nodes: Vec<Node>,
    checked: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            checked: false,
        }
    }

    /// A tape that rejects non-finite intermediates as they are produced.
    pub fn checked() -> Self {
        Tape {
            nodes: Vec::new(),
            checked: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` output with respect to `id`.
    /// `None` when the node does not influence the output.
    pub fn gradient(&self, id: NodeId) -> Option<&Matrix> {
        self.nodes[id.0].grad.as_ref()
    }

    fn push(&mut self, op: Op, value: Matrix) -> Result<NodeId, NumericsError> {
        if self.checked && !value.is_finite() {
            return Err(NumericsError::NonFiniteNode {
                op: op.name(),
                node: self.nodes.len(),
            });
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            value,
            grad: None,
        });
        Ok(id)
    }

    fn shape_err(&self, op: &'static str, detail: String) -> NumericsError {
        NumericsError::ShapeMismatch {
            op,
            node: self.nodes.len(),
            detail,
        }
    }

    fn require_same_shape(
        &self,
        op: &'static str,
        a: NodeId,
        b: NodeId,
    ) -> Result<(), NumericsError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(self.shape_err(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn constant(&mut self, value: Matrix) -> Result<NodeId, NumericsError> {
        self.push(Op::Constant, value)
    }

    pub fn parameter(&mut self, value: Matrix) -> Result<NodeId, NumericsError> {
        self.push(Op::Parameter, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(self.shape_err("matmul", format!("{:?} * {:?}", va.shape(), vb.shape())));
        }
        let value = va.matmul(vb);
        self.push(Op::Matmul(a, b), value)
    }

    /// `a (m x n) + bias (1 x n)` broadcast over rows.
    pub fn add_row_broadcast(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, NumericsError> {
        let (va, vb) = (self.value(a), self.value(bias));
        if vb.rows() != 1 || va.cols() != vb.cols() {
            return Err(self.shape_err(
                "add-row-broadcast",
                format!("{:?} + {:?}", va.shape(), vb.shape()),
            ));
        }
        let value = va.add_row_broadcast(vb);
        self.push(Op::AddRowBroadcast(a, bias), value)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let value = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), value)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let value = self.value(a).softmax_rows();
        self.push(Op::SoftmaxRows(a), value)
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let value = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), value)
    }

    /// Elementwise `ln(max(x, PROB_FLOOR))`.
    pub fn log(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let value = self.value(a).map(|v| v.max(PROB_FLOOR).ln());
        self.push(Op::Log(a), value)
    }

    /// Elementwise `max(x, PROB_FLOOR) ^ exponent` for a fixed exponent.
    pub fn power(&mut self, a: NodeId, exponent: f64) -> Result<NodeId, NumericsError> {
        let value = self.value(a).map(|v| v.max(PROB_FLOOR).powf(exponent));
        self.push(Op::Power(a, exponent), value)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId, NumericsError> {
        let value = self.value(a).scale(factor);
        self.push(Op::Scale(a, factor), value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.require_same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), value)
    }

    pub fn subtract(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.require_same_shape("subtract", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(Op::Subtract(a, b), value)
    }

    pub fn multiply(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.require_same_shape("multiply", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(Op::Multiply(a, b), value)
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let value = Matrix::filled(1, 1, self.value(a).sum());
        self.push(Op::SumAll(a), value)
    }

    pub fn sum_rows(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let value = self.value(a).sum_rows();
        self.push(Op::SumRows(a), value)
    }

    pub fn mean_all(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let value = Matrix::filled(1, 1, self.value(a).mean());
        self.push(Op::MeanAll(a), value)
    }

    pub fn column_slice(
        &mut self,
        a: NodeId,
        offset: usize,
        width: usize,
    ) -> Result<NodeId, NumericsError> {
        let va = self.value(a);
        if offset + width > va.cols() {
            return Err(self.shape_err(
                "column-slice",
                format!("slice {offset}..{} of {} cols", offset + width, va.cols()),
            ));
        }
        let value = va.slice_cols(offset, width);
        self.push(Op::ColumnSlice(a, offset, width), value)
    }

    pub fn column_concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(self.shape_err(
                "column-concat",
                format!("{:?} ++ {:?}", va.shape(), vb.shape()),
            ));
        }
        let value = va.concat_cols(vb);
        self.push(Op::ColumnConcat(a, b), value)
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let value = self.value(a).map(|v| v * v);
        self.push(Op::Square(a), value)
    }

    pub fn negate(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let value = self.value(a).map(|v| -v);
        self.push(Op::Negate(a), value)
    }

    /// Hard elementwise clamp to `[low, high]`; gradient passes through
    /// strictly inside the interval and is zero outside.
    pub fn clamp(&mut self, a: NodeId, low: f64, high: f64) -> Result<NodeId, NumericsError> {
        assert!(low < high, "clamp interval");
        let value = self.value(a).map(|v| v.clamp(low, high));
        self.push(Op::Clamp(a, low, high), value)
    }

    fn accumulate(&mut self, id: NodeId, delta: Matrix) {
        let node = &mut self.nodes[id.0];
        match &mut node.grad {
            Some(g) => {
                debug_assert_eq!(g.shape(), delta.shape());
                for (a, b) in g.data_mut().iter_mut().zip(delta.data()) {
                    *a += b;
                }
            }
            None => node.grad = Some(delta),
        }
    }

    /// Reverse pass from a `1 x 1` output node. After it returns, every
    /// parameter node on the path holds the exact derivative of the output,
    /// retrievable via [`Tape::gradient`].
    pub fn backward(&mut self, output: NodeId) -> Result<(), NumericsError> {
        let (rows, cols) = self.value(output).shape();
        if (rows, cols) != (1, 1) {
            return Err(NumericsError::OutputNotScalar { rows, cols });
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[output.0].grad = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=output.0).rev() {
            let grad = match self.nodes[idx].grad.clone() {
                Some(g) => g,
                None => continue,
            };
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Constant | Op::Parameter => {}
                Op::Matmul(a, b) => {
                    let da = grad.matmul_nt(self.value(b));
                    let db = self.value(a).matmul_tn(&grad);
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::AddRowBroadcast(a, bias) => {
                    let cols = grad.cols();
                    let mut db = vec![0.0; cols];
                    for row in grad.data().chunks(cols) {
                        for (acc, &g) in db.iter_mut().zip(row) {
                            *acc += g;
                        }
                    }
                    self.accumulate(a, grad);
                    self.accumulate(bias, Matrix::from_vec_unchecked(1, cols, db));
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[idx].value;
                    let da = grad.zip_map(y, |g, t| g * (1.0 - t * t));
                    self.accumulate(a, da);
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[idx].value;
                    let cols = y.cols();
                    let mut da = Vec::with_capacity(grad.data().len());
                    for (g_row, y_row) in grad.data().chunks(cols).zip(y.data().chunks(cols)) {
                        let dot: f64 = g_row.iter().zip(y_row).map(|(g, y)| g * y).sum();
                        da.extend(g_row.iter().zip(y_row).map(|(g, y)| y * (g - dot)));
                    }
                    self.accumulate(a, Matrix::from_vec_unchecked(y.rows(), cols, da));
                }
                Op::Exp(a) => {
                    let y = &self.nodes[idx].value;
                    let da = grad.zip_map(y, |g, e| g * e);
                    self.accumulate(a, da);
                }
                Op::Log(a) => {
                    let x = self.value(a);
                    let da = grad.zip_map(x, |g, v| if v >= PROB_FLOOR { g / v } else { 0.0 });
                    self.accumulate(a, da);
                }
                Op::Power(a, e) => {
                    let x = self.value(a);
                    let da = grad.zip_map(x, |g, v| {
                        if v >= PROB_FLOOR {
                            g * e * v.powf(e - 1.0)
                        } else {
                            0.0
                        }
                    });
                    self.accumulate(a, da);
                }
                Op::Scale(a, k) => {
                    self.accumulate(a, grad.scale(k));
                }
                Op::Add(a, b) => {
                    self.accumulate(a, grad.clone());
                    self.accumulate(b, grad);
                }
                Op::Subtract(a, b) => {
                    self.accumulate(b, grad.scale(-1.0));
                    self.accumulate(a, grad);
                }
                Op::Multiply(a, b) => {
                    let da = grad.zip_map(self.value(b), |g, v| g * v);
                    let db = grad.zip_map(self.value(a), |g, v| g * v);
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::SumAll(a) => {
                    let (r, c) = self.value(a).shape();
                    self.accumulate(a, Matrix::filled(r, c, grad.get(0, 0)));
                }
                Op::SumRows(a) => {
                    let (r, c) = self.value(a).shape();
                    let mut da = Vec::with_capacity(r * c);
                    for i in 0..r {
                        da.extend(std::iter::repeat_n(grad.get(i, 0), c));
                    }
                    self.accumulate(a, Matrix::from_vec_unchecked(r, c, da));
                }
                Op::MeanAll(a) => {
                    let (r, c) = self.value(a).shape();
                    let g = grad.get(0, 0) / (r * c) as f64;
                    self.accumulate(a, Matrix::filled(r, c, g));
                }
                Op::ColumnSlice(a, offset, width) => {
                    let (r, c) = self.value(a).shape();
                    let mut da = Matrix::zeros(r, c);
                    for i in 0..r {
                        for j in 0..width {
                            da.set(i, offset + j, grad.get(i, j));
                        }
                    }
                    self.accumulate(a, da);
                }
                Op::ColumnConcat(a, b) => {
                    let ca = self.value(a).cols();
                    let cb = self.value(b).cols();
                    self.accumulate(a, grad.slice_cols(0, ca));
                    self.accumulate(b, grad.slice_cols(ca, cb));
                }
                Op::Square(a) => {
                    let x = self.value(a);
                    let da = grad.zip_map(x, |g, v| g * 2.0 * v);
                    self.accumulate(a, da);
                }
                Op::Negate(a) => {
                    self.accumulate(a, grad.scale(-1.0));
                }
                Op::Clamp(a, low, high) => {
                    let x = self.value(a);
                    let da = grad.zip_map(x, |g, v| if v >= low && v <= high { g } else { 0.0 });
                    self.accumulate(a, da);
                }
            }
        }
        Ok(())
    }
}

/// `mu + exp(logvar / 2) * noise`, differentiable through `mu` and `logvar`.
///
/// `noise` is a caller-supplied constant of standard-normal draws so the same
/// graph is reproducible and finite-difference checkable.
pub fn reparameterize(
    tape: &mut Tape,
    mu: NodeId,
    logvar: NodeId,
    noise: NodeId,
) -> Result<NodeId, NumericsError> {
    let half = tape.scale(logvar, 0.5)?;
    let sigma = tape.exp(half)?;
    let scaled = tape.multiply(sigma, noise)?;
    tape.add(mu, scaled)
}
