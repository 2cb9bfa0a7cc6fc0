use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{AutogradError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
}

/// Named trainable tensors. The optimizer is the only writer.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.entries.push(ParamEntry {
            name: name.into(),
            value,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    /// Total number of trainable scalars.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }
}

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatVec(Var, Var),
    VecMat(Var, Var),
    Add(Var, Var),
    AddRowBroadcast(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Concat(Vec<Var>),
    Stack(Vec<Var>),
    Row(Var, usize),
    GatherRows(Var, Vec<usize>),
    Unfold(Var, usize),
    MaxOverRows(Var, Vec<usize>),
    LogSumExp(Var),
    LogVecMat(Var, Var),
    Select(Var, Vec<usize>),
    Sum(Var),
    Mask(Var, Tensor),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::MatVec(..) => "matvec",
            Op::VecMat(..) => "vecmat",
            Op::Add(..) => "add",
            Op::AddRowBroadcast(..) => "add_bias",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::OneMinus(_) => "one_minus",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Concat(_) => "concat",
            Op::Stack(_) => "stack",
            Op::Row(..) => "row",
            Op::GatherRows(..) => "gather",
            Op::Unfold(..) => "unfold",
            Op::MaxOverRows(..) => "max_over",
            Op::LogSumExp(_) => "logsumexp",
            Op::LogVecMat(..) => "log_vecmat",
            Op::Select(..) => "select",
            Op::Sum(_) => "sum",
            Op::Mask(..) => "dropout_apply",
        }
    }
}

struct Node {
    value: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by one backward pass.
#[derive(Debug)]
pub struct Gradients {
    params: HashMap<ParamId, Tensor>,
    nodes: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for a parameter; zero if it did not take part in the loss.
    pub fn param(&self, id: ParamId, store: &ParamStore) -> Tensor {
        self.params
            .get(&id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(store.get(id).shape()))
    }

    pub fn param_ref(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    /// Gradient with respect to any node; zero for nodes that do not require
    /// gradients or do not reach the loss.
    pub fn wrt(&self, var: Var) -> Tensor {
        self.nodes[var.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[var.0]))
    }

    pub fn into_params(self) -> HashMap<ParamId, Tensor> {
        self.params
    }
}

/// Define-by-run tape. Nodes are appended in evaluation order, so creation
/// order is a topological order.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, Var>,
}

fn shape_err(op: &'static str, shapes: &[&[usize]]) -> AutogradError {
    AutogradError::Shape {
        op,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("non-param node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var, AutogradError> {
        if cfg!(debug_assertions) && !value.all_finite() {
            return Err(AutogradError::NonFinite(op.name()));
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::Param(_) => true,
            Op::MatMul(a, b)
            | Op::MatVec(a, b)
            | Op::VecMat(a, b)
            | Op::Add(a, b)
            | Op::AddRowBroadcast(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::LogVecMat(a, b) => self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad,
            Op::Concat(vs) | Op::Stack(vs) => vs.iter().any(|v| self.nodes[v.0].requires_grad),
            Op::Scale(a, _)
            | Op::OneMinus(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Row(a, _)
            | Op::GatherRows(a, _)
            | Op::Unfold(a, _)
            | Op::MaxOverRows(a, _)
            | Op::LogSumExp(a)
            | Op::Select(a, _)
            | Op::Sum(a)
            | Op::Mask(a, _) => self.nodes[a.0].requires_grad,
        };
        self.nodes.push(Node {
            value: Some(value),
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A constant input; receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// An input leaf whose gradient is recorded (see [`Gradients::wrt`]).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// The leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows() {
            return Err(shape_err("matmul", &[ta.shape(), tb.shape()]));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = ta.row(i);
            let orow = &mut out[i * n..(i + 1) * n];
            for (p, &av) in arow.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                for (o, &bv) in orow.iter_mut().zip(tb.row(p)) {
                    *o += av * bv;
                }
            }
        }
        let _ = k;
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b))
    }

    /// `w · x` for a matrix `w` (m×k) and vector `x` (k).
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var, AutogradError> {
        let (tw, tx) = (self.value(w), self.value(x));
        if tw.rank() != 2 || tx.rank() != 1 || tw.cols() != tx.len() {
            return Err(shape_err("matvec", &[tw.shape(), tx.shape()]));
        }
        let out: Vec<f64> = (0..tw.rows())
            .map(|i| tw.row(i).iter().zip(tx.data()).map(|(a, b)| a * b).sum())
            .collect();
        self.push(Tensor::vector(out), Op::MatVec(w, x))
    }

    /// `x · w` for a vector `x` (k) and matrix `w` (k×n).
    pub fn vecmat(&mut self, x: Var, w: Var) -> Result<Var, AutogradError> {
        let (tx, tw) = (self.value(x), self.value(w));
        if tw.rank() != 2 || tx.rank() != 1 || tw.rows() != tx.len() {
            return Err(shape_err("vecmat", &[tx.shape(), tw.shape()]));
        }
        let n = tw.cols();
        let mut out = vec![0.0; n];
        for (p, &xv) in tx.data().iter().enumerate() {
            for (o, &wv) in out.iter_mut().zip(tw.row(p)) {
                *o += xv * wv;
            }
        }
        self.push(Tensor::vector(out), Op::VecMat(x, w))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, AutogradError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, &[ta.shape(), tb.shape()]));
        }
        let out: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor::new(shape, out)?, op)
    }

    /// Elementwise sum of equal shapes, or a matrix plus a bias vector added
    /// to every row. No other broadcasting is performed.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() == 2 && tb.rank() == 1 && ta.cols() == tb.len() {
            let n = ta.cols();
            let out: Vec<f64> = ta
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| x + tb.data()[i % n])
                .collect();
            let shape = ta.shape().to_vec();
            return self.push(Tensor::new(shape, out)?, Op::AddRowBroadcast(a, b));
        }
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutogradError> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var, AutogradError> {
        let ta = self.value(a);
        let out: Vec<f64> = ta.data().iter().map(|&x| f(x)).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor::new(shape, out)?, op)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, AutogradError> {
        self.unary(a, |x| x * factor, Op::Scale(a, factor))
    }

    /// `1 − a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Result<Var, AutogradError> {
        self.unary(a, |x| 1.0 - x, Op::OneMinus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AutogradError> {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AutogradError> {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, AutogradError> {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AutogradError> {
        let mut out = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 1 {
                return Err(shape_err("concat", &[t.shape()]));
            }
            out.extend_from_slice(t.data());
        }
        self.push(Tensor::vector(out), Op::Concat(parts.to_vec()))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var, AutogradError> {
        let width = rows.first().map_or(0, |&r| self.value(r).len());
        let mut out = Vec::with_capacity(width * rows.len());
        for &r in rows {
            let t = self.value(r);
            if t.rank() != 1 || t.len() != width {
                return Err(shape_err("stack", &[t.shape(), &[width]]));
            }
            out.extend_from_slice(t.data());
        }
        self.push(Tensor::new(vec![rows.len(), width], out)?, Op::Stack(rows.to_vec()))
    }

    pub fn row(&mut self, a: Var, index: usize) -> Result<Var, AutogradError> {
        let t = self.value(a);
        if t.rank() != 2 || index >= t.rows() {
            return Err(shape_err("row", &[t.shape(), &[index]]));
        }
        let r = t.row(index).to_vec();
        self.push(Tensor::vector(r), Op::Row(a, index))
    }

    /// Rows of `table` at `indices`, as a matrix (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var, AutogradError> {
        let t = self.value(table);
        if t.rank() != 2 || indices.iter().any(|&i| i >= t.rows()) {
            return Err(shape_err("gather", &[t.shape()]));
        }
        let d = t.cols();
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            out.extend_from_slice(t.row(i));
        }
        self.push(
            Tensor::new(vec![indices.len(), d], out)?,
            Op::GatherRows(table, indices.to_vec()),
        )
    }

    /// Sliding windows of `width` consecutive rows, each flattened into one
    /// row: L×d becomes (L−width+1)×(width·d).
    pub fn unfold(&mut self, a: Var, width: usize) -> Result<Var, AutogradError> {
        let t = self.value(a);
        if t.rank() != 2 || width == 0 || t.rows() < width {
            return Err(shape_err("unfold", &[t.shape(), &[width]]));
        }
        let (l, d) = (t.rows(), t.cols());
        let windows = l - width + 1;
        let mut out = Vec::with_capacity(windows * width * d);
        for p in 0..windows {
            out.extend_from_slice(&t.data()[p * d..(p + width) * d]);
        }
        self.push(Tensor::new(vec![windows, width * d], out)?, Op::Unfold(a, width))
    }

    /// Column-wise maximum of a matrix (max over the row axis).
    pub fn max_over(&mut self, a: Var) -> Result<Var, AutogradError> {
        let t = self.value(a);
        if t.rank() != 2 || t.rows() == 0 {
            return Err(shape_err("max_over", &[t.shape()]));
        }
        let n = t.cols();
        let mut arg = vec![0usize; n];
        let mut out = t.row(0).to_vec();
        for r in 1..t.rows() {
            for (c, &v) in t.row(r).iter().enumerate() {
                if v > out[c] {
                    out[c] = v;
                    arg[c] = r;
                }
            }
        }
        self.push(Tensor::vector(out), Op::MaxOverRows(a, arg))
    }

    /// `log Σ exp(a)` over all elements, as a scalar.
    pub fn logsumexp(&mut self, a: Var) -> Result<Var, AutogradError> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(shape_err("logsumexp", &[t.shape()]));
        }
        let v = logsumexp(t.data().iter().copied());
        self.push(Tensor::scalar(v), Op::LogSumExp(a))
    }

    /// Log-space vector–matrix product: `out[j] = log Σ_i exp(a[i] + m[i][j])`.
    pub fn log_vecmat(&mut self, a: Var, m: Var) -> Result<Var, AutogradError> {
        let (ta, tm) = (self.value(a), self.value(m));
        if ta.rank() != 1 || tm.rank() != 2 || tm.rows() != ta.len() {
            return Err(shape_err("log_vecmat", &[ta.shape(), tm.shape()]));
        }
        let out: Vec<f64> = (0..tm.cols())
            .map(|j| logsumexp((0..ta.len()).map(|i| ta.data()[i] + tm.get2(i, j))))
            .collect();
        self.push(Tensor::vector(out), Op::LogVecMat(a, m))
    }

    /// Elements at the given flat (row-major) indices, as a vector.
    pub fn select(&mut self, a: Var, indices: &[usize]) -> Result<Var, AutogradError> {
        let t = self.value(a);
        if indices.iter().any(|&i| i >= t.len()) {
            return Err(shape_err("select", &[t.shape()]));
        }
        let out: Vec<f64> = indices.iter().map(|&i| t.data()[i]).collect();
        self.push(Tensor::vector(out), Op::Select(a, indices.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AutogradError> {
        let v = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(v), Op::Sum(a))
    }

    /// Multiplies by a constant mask of the same shape (dropout with the
    /// rescaling folded into the mask).
    pub fn dropout_apply(&mut self, a: Var, mask: Tensor) -> Result<Var, AutogradError> {
        let t = self.value(a);
        if t.shape() != mask.shape() {
            return Err(shape_err("dropout_apply", &[t.shape(), mask.shape()]));
        }
        let out: Vec<f64> = t.data().iter().zip(mask.data()).map(|(x, m)| x * m).collect();
        let shape = t.shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::Mask(a, mask))
    }

    /// Reverse pass from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutogradError> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(AutogradError::NonScalarLoss(lt.shape().to_vec()));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[loss.0] = Some(Tensor::full(lt.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let out = node.value.as_ref();
            self.propagate(&node.op, &g, out, &mut grads);
            grads[idx] = Some(g);
        }

        let mut params = HashMap::new();
        for (&id, &v) in &self.param_nodes {
            if let Some(g) = grads[v.0].take() {
                params.insert(id, g);
            }
        }
        let nodes = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.filter(|_| self.nodes[i].requires_grad))
            .collect();
        let shapes = (0..n).map(|i| self.value(Var(i)).shape().to_vec()).collect();
        Ok(Gradients {
            params,
            nodes,
            shapes,
        })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut Tensor)) {
        if !self.wants(v) {
            return;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.value(v).shape()));
        }
        f(slot.as_mut().expect("just set"));
    }

    fn propagate(&self, op: &Op, g: &Tensor, out: Option<&Tensor>, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                self.accumulate(grads, *a, |ga| {
                    let d = ga.data_mut();
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += gd[i * n + j] * tb.data()[p * n + j];
                            }
                            d[i * k + p] += s;
                        }
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    let d = gb.data_mut();
                    for i in 0..m {
                        for p in 0..k {
                            let av = ta.data()[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                d[p * n + j] += av * gd[i * n + j];
                            }
                        }
                    }
                });
            }
            Op::MatVec(w, x) => {
                let (tw, tx) = (self.value(*w), self.value(*x));
                let k = tw.cols();
                self.accumulate(grads, *w, |gw| {
                    let d = gw.data_mut();
                    for (i, &gi) in gd.iter().enumerate() {
                        if gi == 0.0 {
                            continue;
                        }
                        for (dv, &xv) in d[i * k..(i + 1) * k].iter_mut().zip(tx.data()) {
                            *dv += gi * xv;
                        }
                    }
                });
                self.accumulate(grads, *x, |gx| {
                    let d = gx.data_mut();
                    for (i, &gi) in gd.iter().enumerate() {
                        for (dv, &wv) in d.iter_mut().zip(tw.row(i)) {
                            *dv += gi * wv;
                        }
                    }
                });
            }
            Op::VecMat(x, w) => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let n = tw.cols();
                self.accumulate(grads, *w, |gw| {
                    let d = gw.data_mut();
                    for (p, &xv) in tx.data().iter().enumerate() {
                        for (dv, &gj) in d[p * n..(p + 1) * n].iter_mut().zip(gd) {
                            *dv += xv * gj;
                        }
                    }
                });
                self.accumulate(grads, *x, |gx| {
                    let d = gx.data_mut();
                    for (p, dv) in d.iter_mut().enumerate() {
                        *dv += tw.row(p).iter().zip(gd).map(|(w, g)| w * g).sum::<f64>();
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |ga| ga.add_assign(g));
                self.accumulate(grads, *b, |gb| gb.add_assign(g));
            }
            Op::AddRowBroadcast(a, b) => {
                self.accumulate(grads, *a, |ga| ga.add_assign(g));
                self.accumulate(grads, *b, |gb| {
                    let n = gb.len();
                    let d = gb.data_mut();
                    for (i, &gv) in gd.iter().enumerate() {
                        d[i % n] += gv;
                    }
                });
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |ga| ga.add_assign(g));
                self.accumulate(grads, *b, |gb| {
                    for (d, &gv) in gb.data_mut().iter_mut().zip(gd) {
                        *d -= gv;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |ga| {
                    for ((d, &gv), &bv) in ga.data_mut().iter_mut().zip(gd).zip(tb.data()) {
                        *d += gv * bv;
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for ((d, &gv), &av) in gb.data_mut().iter_mut().zip(gd).zip(ta.data()) {
                        *d += gv * av;
                    }
                });
            }
            Op::Scale(a, factor) => {
                self.accumulate(grads, *a, |ga| {
                    for (d, &gv) in ga.data_mut().iter_mut().zip(gd) {
                        *d += gv * factor;
                    }
                });
            }
            Op::OneMinus(a) => {
                self.accumulate(grads, *a, |ga| {
                    for (d, &gv) in ga.data_mut().iter_mut().zip(gd) {
                        *d -= gv;
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = out.expect("op value");
                self.accumulate(grads, *a, |ga| {
                    for ((d, &gv), &s) in ga.data_mut().iter_mut().zip(gd).zip(y.data()) {
                        *d += gv * s * (1.0 - s);
                    }
                });
            }
            Op::Tanh(a) => {
                let y = out.expect("op value");
                self.accumulate(grads, *a, |ga| {
                    for ((d, &gv), &t) in ga.data_mut().iter_mut().zip(gd).zip(y.data()) {
                        *d += gv * (1.0 - t * t);
                    }
                });
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                self.accumulate(grads, *a, |ga| {
                    for ((d, &gv), &xv) in ga.data_mut().iter_mut().zip(gd).zip(x.data()) {
                        if xv > 0.0 {
                            *d += gv;
                        }
                    }
                });
            }
            Op::Concat(parts) | Op::Stack(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    self.accumulate(grads, p, |gp| {
                        for (d, &gv) in gp.data_mut().iter_mut().zip(&gd[offset..offset + len]) {
                            *d += gv;
                        }
                    });
                    offset += len;
                }
            }
            Op::Row(a, index) => {
                self.accumulate(grads, *a, |ga| {
                    let n = ga.cols();
                    for (d, &gv) in ga.data_mut()[index * n..(index + 1) * n].iter_mut().zip(gd) {
                        *d += gv;
                    }
                });
            }
            Op::GatherRows(table, indices) => {
                self.accumulate(grads, *table, |gt| {
                    let d = gt.cols();
                    let data = gt.data_mut();
                    for (r, &i) in indices.iter().enumerate() {
                        for c in 0..d {
                            data[i * d + c] += gd[r * d + c];
                        }
                    }
                });
            }
            Op::Unfold(a, width) => {
                self.accumulate(grads, *a, |ga| {
                    let d = ga.cols();
                    let row_len = width * d;
                    let windows = gd.len() / row_len;
                    let data = ga.data_mut();
                    for p in 0..windows {
                        for (q, &gv) in gd[p * row_len..(p + 1) * row_len].iter().enumerate() {
                            data[p * d + q] += gv;
                        }
                    }
                });
            }
            Op::MaxOverRows(a, arg) => {
                self.accumulate(grads, *a, |ga| {
                    let n = ga.cols();
                    let data = ga.data_mut();
                    for (c, &r) in arg.iter().enumerate() {
                        data[r * n + c] += gd[c];
                    }
                });
            }
            Op::LogSumExp(a) => {
                let lse = out.expect("op value").item();
                let x = self.value(*a);
                self.accumulate(grads, *a, |ga| {
                    for (d, &xv) in ga.data_mut().iter_mut().zip(x.data()) {
                        *d += gd[0] * (xv - lse).exp();
                    }
                });
            }
            Op::LogVecMat(a, m) => {
                let (ta, tm) = (self.value(*a), self.value(*m));
                let y = out.expect("op value");
                let (k, n) = (tm.rows(), tm.cols());
                // weight of (i, j) in out[j]
                let mut w = vec![0.0; k * n];
                for i in 0..k {
                    for j in 0..n {
                        w[i * n + j] = (ta.data()[i] + tm.get2(i, j) - y.data()[j]).exp() * gd[j];
                    }
                }
                self.accumulate(grads, *a, |ga| {
                    for (i, d) in ga.data_mut().iter_mut().enumerate() {
                        *d += w[i * n..(i + 1) * n].iter().sum::<f64>();
                    }
                });
                self.accumulate(grads, *m, |gm| gm.add_assign(&Tensor::new(vec![k, n], w).unwrap()));
            }
            Op::Select(a, indices) => {
                self.accumulate(grads, *a, |ga| {
                    let data = ga.data_mut();
                    for (&i, &gv) in indices.iter().zip(gd) {
                        data[i] += gv;
                    }
                });
            }
            Op::Sum(a) => {
                self.accumulate(grads, *a, |ga| {
                    for d in ga.data_mut() {
                        *d += gd[0];
                    }
                });
            }
            Op::Mask(a, mask) => {
                self.accumulate(grads, *a, |ga| {
                    for ((d, &gv), &m) in ga.data_mut().iter_mut().zip(gd).zip(mask.data()) {
                        *d += gv * m;
                    }
                });
            }
        }
    }
}
