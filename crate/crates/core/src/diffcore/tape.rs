// Define-by-run reverse-mode tape.
//
// Every forward op appends one node holding its output value and the ids of
// its inputs. Inputs always precede consumers, so a single reverse sweep over
// the node list visits each node exactly once.

use super::tensor::{matmul_into, matmul_nt_into, matmul_tn_into, Tensor};
use super::{DiffError, OpKind};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Log(Var),
    LogSigmoid(Var),
    Sum(Var),
    SumCols(Var),
    GatherRows(Var, Vec<usize>),
    // winner[i] is the position (in the input list) holding the minimum of element i
    Min(Vec<Var>, Vec<u32>),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Constant => OpKind::Constant,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::Concat(..) => OpKind::Concat,
            Op::Slice(..) => OpKind::Slice,
            Op::Sigmoid(..) => OpKind::Sigmoid,
            Op::Tanh(..) => OpKind::Tanh,
            Op::Softmax(..) => OpKind::Softmax,
            Op::LogSoftmax(..) => OpKind::LogSoftmax,
            Op::Log(..) => OpKind::Log,
            Op::LogSigmoid(..) => OpKind::LogSigmoid,
            Op::Sum(..) => OpKind::Sum,
            Op::SumCols(..) => OpKind::SumCols,
            Op::GatherRows(..) => OpKind::GatherRows,
            Op::Min(..) => OpKind::Min,
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients of a scalar loss with respect to the leaves of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`; zeros when `v` does not influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(t) => t.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn collect(&self, vars: &[Var]) -> Vec<Tensor> {
        vars.iter().map(|&v| self.wrt(v)).collect()
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// ln(sigmoid(x)) = -softplus(-x)
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var, DiffError> {
        if !value.is_finite() {
            return Err(DiffError::NonFinite { op: op.kind() });
        }
        let needs_grad = match &op {
            Op::Leaf => true,
            Op::Constant => false,
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad
            }
            Op::Concat(vs) | Op::Min(vs, _) => vs.iter().any(|v| self.nodes[v.0].needs_grad),
            Op::Scale(a, _)
            | Op::Slice(a, ..)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Softmax(a)
            | Op::LogSoftmax(a)
            | Op::Log(a)
            | Op::LogSigmoid(a)
            | Op::Sum(a)
            | Op::SumCols(a)
            | Op::GatherRows(a, _) => self.nodes[a.0].needs_grad,
        };
        let id = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(id))
    }

    fn shape_err(&self, op: OpKind, vars: &[Var]) -> DiffError {
        DiffError::Shape {
            op,
            shapes: vars
                .iter()
                .map(|v| self.nodes[v.0].value.shape().to_vec())
                .collect(),
        }
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.as_matrix()
    }

    /// Differentiable input (a parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
            .expect("leaf values must be finite")
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
            .expect("constant values must be finite")
    }

    pub fn try_leaf(&mut self, value: Tensor) -> Result<Var, DiffError> {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(self.shape_err(OpKind::MatMul, &[a, b]));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(
            self.nodes[a.0].value.data(),
            self.nodes[b.0].value.data(),
            &mut out,
            m,
            k,
            n,
        );
        self.push(Tensor::from_parts(m, n, out), Op::MatMul(a, b))
    }

    /// Elementwise sum; `b` may also be a single row broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (m, n) = self.dims(a);
        let (mb, nb) = self.dims(b);
        if n != nb || (mb != m && mb != 1) {
            return Err(self.shape_err(OpKind::Add, &[a, b]));
        }
        let av = self.nodes[a.0].value.data();
        let bv = self.nodes[b.0].value.data();
        let out: Vec<f64> = if mb == m {
            av.iter().zip(bv).map(|(x, y)| x + y).collect()
        } else {
            av.chunks(n)
                .flat_map(|row| row.iter().zip(bv).map(|(x, y)| x + y))
                .collect()
        };
        self.push(Tensor::from_parts(m, n, out), Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        if self.dims(a) != self.dims(b) {
            return Err(self.shape_err(OpKind::Sub, &[a, b]));
        }
        let (m, n) = self.dims(a);
        let out = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(x, y)| x - y)
            .collect();
        self.push(Tensor::from_parts(m, n, out), Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        if self.dims(a) != self.dims(b) {
            return Err(self.shape_err(OpKind::Mul, &[a, b]));
        }
        let (m, n) = self.dims(a);
        let out = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(x, y)| x * y)
            .collect();
        self.push(Tensor::from_parts(m, n, out), Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, DiffError> {
        let (m, n) = self.dims(a);
        let out = self.nodes[a.0].value.data().iter().map(|x| x * s).collect();
        self.push(Tensor::from_parts(m, n, out), Op::Scale(a, s))
    }

    /// Column-wise concatenation of tensors with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        let Some(&first) = parts.first() else {
            return Err(DiffError::Shape {
                op: OpKind::Concat,
                shapes: vec![],
            });
        };
        let m = self.dims(first).0;
        if parts.iter().any(|&p| self.dims(p).0 != m) {
            return Err(self.shape_err(OpKind::Concat, parts));
        }
        let n: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            for &p in parts {
                out.extend_from_slice(self.nodes[p.0].value.row_slice(r));
            }
        }
        self.push(Tensor::from_parts(m, n, out), Op::Concat(parts.to_vec()))
    }

    /// Columns `start..end`.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var, DiffError> {
        let (m, n) = self.dims(a);
        if start >= end || end > n {
            return Err(self.shape_err(OpKind::Slice, &[a]));
        }
        let src = &self.nodes[a.0].value;
        let mut out = Vec::with_capacity(m * (end - start));
        for r in 0..m {
            out.extend_from_slice(&src.row_slice(r)[start..end]);
        }
        self.push(Tensor::from_parts(m, end - start, out), Op::Slice(a, start))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, DiffError> {
        let v = self.nodes[a.0].value.map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, DiffError> {
        let v = self.nodes[a.0].value.map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var, DiffError> {
        let v = self.nodes[a.0].value.map(f64::ln);
        self.push(v, Op::Log(a))
    }

    pub fn log_sigmoid(&mut self, a: Var) -> Result<Var, DiffError> {
        let v = self.nodes[a.0].value.map(log_sigmoid);
        self.push(v, Op::LogSigmoid(a))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var, DiffError> {
        let (m, n) = self.dims(a);
        let src = self.nodes[a.0].value.data();
        let mut out = vec![0.0; m * n];
        for (row, dst) in src.chunks(n).zip(out.chunks_mut(n)) {
            softmax_row(row, dst);
        }
        self.push(Tensor::from_parts(m, n, out), Op::Softmax(a))
    }

    /// Row-wise log-softmax, finite for finite inputs.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var, DiffError> {
        let (m, n) = self.dims(a);
        let src = self.nodes[a.0].value.data();
        let mut out = vec![0.0; m * n];
        for (row, dst) in src.chunks(n).zip(out.chunks_mut(n)) {
            log_softmax_row(row, dst);
        }
        self.push(Tensor::from_parts(m, n, out), Op::LogSoftmax(a))
    }

    /// Sum of all entries as a `[1, 1]` scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var, DiffError> {
        let s = self.nodes[a.0].value.data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Per-row sums, `[m, n] -> [m, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var, DiffError> {
        let (m, n) = self.dims(a);
        let out = self.nodes[a.0]
            .value
            .data()
            .chunks(n)
            .map(|r| r.iter().sum())
            .collect();
        self.push(Tensor::from_parts(m, 1, out), Op::SumCols(a))
    }

    /// Selects (possibly repeated) rows of `a`.
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var, DiffError> {
        let (m, n) = self.dims(a);
        if rows.iter().any(|&r| r >= m) {
            return Err(self.shape_err(OpKind::GatherRows, &[a]));
        }
        let src = &self.nodes[a.0].value;
        let mut out = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            out.extend_from_slice(src.row_slice(r));
        }
        self.push(
            Tensor::from_parts(rows.len(), n, out),
            Op::GatherRows(a, rows.to_vec()),
        )
    }

    pub fn slice_row(&mut self, a: Var, row: usize) -> Result<Var, DiffError> {
        self.gather_rows(a, &[row])
    }

    /// Elementwise minimum across same-shape tensors; the first minimum wins ties.
    pub fn min(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        let Some(&first) = parts.first() else {
            return Err(DiffError::Shape {
                op: OpKind::Min,
                shapes: vec![],
            });
        };
        let (m, n) = self.dims(first);
        if parts.iter().any(|&p| self.dims(p) != (m, n)) {
            return Err(self.shape_err(OpKind::Min, parts));
        }
        let mut out = self.nodes[first.0].value.data().to_vec();
        let mut winner = vec![0u32; m * n];
        for (k, &p) in parts.iter().enumerate().skip(1) {
            for (i, &v) in self.nodes[p.0].value.data().iter().enumerate() {
                if v < out[i] {
                    out[i] = v;
                    winner[i] = k as u32;
                }
            }
        }
        self.push(Tensor::from_parts(m, n, out), Op::Min(parts.to_vec(), winner))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, DiffError> {
        let lv = &self.nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(DiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }

        let mut out = Vec::with_capacity(self.nodes.len());
        let mut shapes = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let (r, c) = node.value.as_matrix();
            shapes.push((r, c));
            let g = if matches!(node.op, Op::Leaf) {
                grads.get_mut(i).and_then(Option::take)
            } else {
                None
            };
            match g {
                Some(data) => {
                    if data.iter().any(|v| !v.is_finite()) {
                        return Err(DiffError::NonFiniteGradient);
                    }
                    let t = Tensor::new(node.value.shape().to_vec(), data)
                        .expect("gradient matches value shape");
                    out.push(Some(t));
                }
                None => out.push(None),
            }
        }
        Ok(Gradients { grads: out, shapes })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let (m, n) = node.value.as_matrix();
        let val = node.value.data();
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (_, k) = self.dims(*a);
                if let Some(ga) = self.slot(*a, grads) {
                    matmul_nt_into(g, self.nodes[b.0].value.data(), ga, m, k, n);
                }
                if let Some(gb) = self.slot(*b, grads) {
                    matmul_tn_into(self.nodes[a.0].value.data(), g, gb, m, k, n);
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.slot(*a, grads) {
                    axpy(ga, g, 1.0);
                }
                let broadcast = self.dims(*b).0 != m;
                if let Some(gb) = self.slot(*b, grads) {
                    if broadcast {
                        for row in g.chunks(n) {
                            axpy(gb, row, 1.0);
                        }
                    } else {
                        axpy(gb, g, 1.0);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.slot(*a, grads) {
                    axpy(ga, g, 1.0);
                }
                if let Some(gb) = self.slot(*b, grads) {
                    axpy(gb, g, -1.0);
                }
            }
            Op::Mul(a, b) => {
                if let Some(ga) = self.slot(*a, grads) {
                    let bv = self.nodes[b.0].value.data();
                    for ((o, gi), bi) in ga.iter_mut().zip(g).zip(bv) {
                        *o += gi * bi;
                    }
                }
                if let Some(gb) = self.slot(*b, grads) {
                    let av = self.nodes[a.0].value.data();
                    for ((o, gi), ai) in gb.iter_mut().zip(g).zip(av) {
                        *o += gi * ai;
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(ga) = self.slot(*a, grads) {
                    axpy(ga, g, *s);
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.dims(p).1;
                    if let Some(gp) = self.slot(p, grads) {
                        for r in 0..m {
                            axpy(
                                &mut gp[r * w..(r + 1) * w],
                                &g[r * n + offset..r * n + offset + w],
                                1.0,
                            );
                        }
                    }
                    offset += w;
                }
            }
            Op::Slice(a, start) => {
                let src_n = self.dims(*a).1;
                if let Some(ga) = self.slot(*a, grads) {
                    for r in 0..m {
                        axpy(
                            &mut ga[r * src_n + start..r * src_n + start + n],
                            &g[r * n..(r + 1) * n],
                            1.0,
                        );
                    }
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = self.slot(*a, grads) {
                    for ((o, gi), y) in ga.iter_mut().zip(g).zip(val) {
                        *o += gi * y * (1.0 - y);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(ga) = self.slot(*a, grads) {
                    for ((o, gi), y) in ga.iter_mut().zip(g).zip(val) {
                        *o += gi * (1.0 - y * y);
                    }
                }
            }
            Op::Log(a) => {
                let x = self.nodes[a.0].value.data();
                if let Some(ga) = self.slot(*a, grads) {
                    for ((o, gi), xi) in ga.iter_mut().zip(g).zip(x) {
                        *o += gi / xi;
                    }
                }
            }
            Op::LogSigmoid(a) => {
                let x = self.nodes[a.0].value.data();
                if let Some(ga) = self.slot(*a, grads) {
                    for ((o, gi), xi) in ga.iter_mut().zip(g).zip(x) {
                        *o += gi * sigmoid(-xi);
                    }
                }
            }
            Op::Softmax(a) => {
                if let Some(ga) = self.slot(*a, grads) {
                    for ((orow, grow), yrow) in ga.chunks_mut(n).zip(g.chunks(n)).zip(val.chunks(n)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(gi, yi)| gi * yi).sum();
                        for ((o, gi), yi) in orow.iter_mut().zip(grow).zip(yrow) {
                            *o += yi * (gi - dot);
                        }
                    }
                }
            }
            Op::LogSoftmax(a) => {
                if let Some(ga) = self.slot(*a, grads) {
                    for ((orow, grow), yrow) in ga.chunks_mut(n).zip(g.chunks(n)).zip(val.chunks(n)) {
                        let total: f64 = grow.iter().sum();
                        for ((o, gi), yi) in orow.iter_mut().zip(grow).zip(yrow) {
                            *o += gi - yi.exp() * total;
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.slot(*a, grads) {
                    for o in ga.iter_mut() {
                        *o += g[0];
                    }
                }
            }
            Op::SumCols(a) => {
                let src_n = self.dims(*a).1;
                if let Some(ga) = self.slot(*a, grads) {
                    for (orow, gi) in ga.chunks_mut(src_n).zip(g) {
                        for o in orow {
                            *o += gi;
                        }
                    }
                }
            }
            Op::GatherRows(a, rows) => {
                if let Some(ga) = self.slot(*a, grads) {
                    for (k, &r) in rows.iter().enumerate() {
                        axpy(&mut ga[r * n..(r + 1) * n], &g[k * n..(k + 1) * n], 1.0);
                    }
                }
            }
            Op::Min(parts, winner) => {
                for (k, &p) in parts.iter().enumerate() {
                    if let Some(gp) = self.slot(p, grads) {
                        for (i, &w) in winner.iter().enumerate() {
                            if w as usize == k {
                                gp[i] += g[i];
                            }
                        }
                    }
                }
            }
        }
    }

    fn slot<'g>(&self, v: Var, grads: &'g mut [Option<Vec<f64>>]) -> Option<&'g mut [f64]> {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return None;
        }
        let len = node.value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]).as_mut_slice())
    }
}

fn axpy(dst: &mut [f64], src: &[f64], a: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

pub(crate) fn softmax_row(row: &[f64], dst: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (d, &x) in dst.iter_mut().zip(row) {
        *d = (x - max).exp();
        total += *d;
    }
    for d in dst.iter_mut() {
        *d /= total;
    }
}

pub(crate) fn log_softmax_row(row: &[f64], dst: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    for (d, &x) in dst.iter_mut().zip(row) {
        *d = x - lse;
    }
}

/// Softmax of one vector, off-tape.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    softmax_row(values, &mut out);
    out
}
