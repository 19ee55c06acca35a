//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A `Tape` records the forward computation eagerly; `backward` walks the
//! nodes in reverse and accumulates parameter gradients straight into a
//! [`Gradients`] buffer aligned with the [`ParamStore`]. Every op keeps its
//! vector-Jacobian product small and local, which is what the finite
//! difference suite exercises coordinate by coordinate.

use std::collections::HashMap;

use super::tensor::{add_matmul, add_matmul_nt, add_matmul_tn, Matrix};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Named parameter tensors with stable indices.
#[derive(Debug, Clone)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Matrix>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Matrix) -> usize {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter {name}"
        );
        let idx = self.tensors.len();
        self.index.insert(name.clone(), idx);
        self.names.push(name);
        self.tensors.push(tensor);
        idx
    }

    pub fn idx(&self, name: &str) -> usize {
        *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get(&self, idx: usize) -> &Matrix {
        &self.tensors[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Matrix {
        &mut self.tensors[idx]
    }

    pub fn by_name(&self, name: &str) -> &Matrix {
        self.get(self.idx(name))
    }

    pub fn by_name_mut(&mut self, name: &str) -> &mut Matrix {
        self.get_mut(self.idx(name))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Matrix::is_finite)
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Per-parameter gradient accumulator aligned with a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub tensors: Vec<Matrix>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            tensors: store
                .iter()
                .map(|(_, t)| Matrix::zeros(t.rows(), t.cols()))
                .collect(),
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors
            .iter()
            .map(Matrix::squared_norm)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_all(&mut self, factor: f64) {
        for t in &mut self.tensors {
            t.scale_assign(factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Matrix::is_finite)
    }
}

pub type NodeId = usize;

enum Source {
    Owned(Matrix),
    Param(usize),
}

enum Op {
    Leaf,
    /// a @ b
    MatMul(NodeId, NodeId),
    /// a @ b^T
    MatMulNT(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// matrix + broadcast row vector
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Gelu(NodeId),
    Tanh(NodeId),
    /// value caches softmax(x) per row
    SoftmaxRows(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
    },
    /// gather rows of a parameter table
    Embed {
        table_param: usize,
        ids: Vec<u32>,
    },
    SliceCols {
        x: NodeId,
        start: usize,
    },
    ConcatCols(Vec<NodeId>),
    /// rows 0..len of x
    SliceRows {
        x: NodeId,
        len: usize,
    },
    /// elementwise product with a fixed mask (dropout)
    MulMask(NodeId, Matrix),
    /// scalar: sum over rows of -log softmax(row)[target]
    NllSum {
        logits: NodeId,
        targets: Vec<u32>,
    },
    /// scalar: sum of binary cross entropy with logits over masked rows
    BceSum {
        logits: NodeId,
        labels: Vec<f64>,
        mask: Vec<bool>,
    },
    /// scalar: wa*a + wb*b
    AddScaled {
        a: NodeId,
        b: NodeId,
        wa: f64,
        wb: f64,
    },
}

struct Node {
    src: Source,
    op: Op,
}

pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        match &self.nodes[id].src {
            Source::Owned(m) => m,
            Source::Param(p) => self.store.get(*p),
        }
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.nodes.push(Node {
            src: Source::Owned(value),
            op,
        });
        self.nodes.len() - 1
    }

    pub fn param(&mut self, idx: usize) -> NodeId {
        self.nodes.push(Node {
            src: Source::Param(idx),
            op: Op::Leaf,
        });
        self.nodes.len() - 1
    }

    pub fn param_by_name(&mut self, name: &str) -> NodeId {
        let idx = self.store.idx(name);
        self.param(idx)
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).matmul_nt(self.value(b));
        self.push(value, Op::MatMulNT(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        self.push(value, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let bias = self.value(row);
        assert_eq!(bias.rows(), 1, "bias must be a row vector");
        let mut value = self.value(a).clone();
        let cols = value.cols();
        assert_eq!(cols, bias.cols(), "bias width mismatch");
        for r in 0..value.rows() {
            let out = value.row_mut(r);
            for (o, b) in out.iter_mut().zip(bias.row(0)) {
                *o += b;
            }
        }
        self.push(value, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let value = self.value(a).map(|v| v * factor);
        self.push(value, Op::Scale(a, factor))
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(gelu);
        self.push(value, Op::Gelu(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mut value = x.clone();
        for r in 0..value.rows() {
            softmax_in_place(value.row_mut(r));
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let input = self.value(x);
        let g = self.value(gamma);
        let b = self.value(beta);
        let mut value = input.clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let (mean, inv_std) = row_moments(row);
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * inv_std * g.get(0, j) + b.get(0, j);
            }
        }
        self.push(value, Op::LayerNorm { x, gamma, beta })
    }

    pub fn embed_by_name(&mut self, name: &str, ids: &[u32]) -> NodeId {
        let idx = self.store.idx(name);
        self.embed(idx, ids)
    }

    pub fn embed(&mut self, table_param: usize, ids: &[u32]) -> NodeId {
        let table = self.store.get(table_param);
        let mut value = Matrix::zeros(ids.len(), table.cols());
        for (r, &id) in ids.iter().enumerate() {
            value.row_mut(r).copy_from_slice(table.row(id as usize));
        }
        self.push(
            value,
            Op::Embed {
                table_param,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, width: usize) -> NodeId {
        let input = self.value(x);
        let mut value = Matrix::zeros(input.rows(), width);
        for r in 0..input.rows() {
            value
                .row_mut(r)
                .copy_from_slice(&input.row(r)[start..start + width]);
        }
        self.push(value, Op::SliceCols { x, start })
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = Matrix::zeros(rows, total);
        let mut offset = 0;
        for &p in parts {
            let part = self.value(p);
            assert_eq!(part.rows(), rows);
            for r in 0..rows {
                value.row_mut(r)[offset..offset + part.cols()].copy_from_slice(part.row(r));
            }
            offset += part.cols();
        }
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, x: NodeId, len: usize) -> NodeId {
        let input = self.value(x);
        let mut value = Matrix::zeros(len, input.cols());
        for r in 0..len {
            value.row_mut(r).copy_from_slice(input.row(r));
        }
        self.push(value, Op::SliceRows { x, len })
    }

    pub fn mul_mask(&mut self, x: NodeId, mask: Matrix) -> NodeId {
        let input = self.value(x);
        assert!(input.same_shape(&mask));
        let mut value = input.clone();
        for (v, m) in value.data_mut().iter_mut().zip(mask.data()) {
            *v *= m;
        }
        self.push(value, Op::MulMask(x, mask))
    }

    pub fn nll_sum(&mut self, logits: NodeId, targets: &[u32]) -> NodeId {
        let rows = self.value(logits);
        assert_eq!(rows.rows(), targets.len(), "one target per logits row");
        let mut total = 0.0;
        for (r, &target) in targets.iter().enumerate() {
            let row = rows.row(r);
            total += logsumexp(row) - row[target as usize];
        }
        self.push(
            Matrix::scalar(total),
            Op::NllSum {
                logits,
                targets: targets.to_vec(),
            },
        )
    }

    pub fn bce_sum(&mut self, logits: NodeId, labels: &[f64], mask: &[bool]) -> NodeId {
        let z = self.value(logits);
        assert_eq!(z.cols(), 1, "classifier logits are a column");
        assert_eq!(z.rows(), labels.len());
        assert_eq!(z.rows(), mask.len());
        let mut total = 0.0;
        for r in 0..z.rows() {
            if mask[r] {
                total += bce_with_logit(z.get(r, 0), labels[r]);
            }
        }
        self.push(
            Matrix::scalar(total),
            Op::BceSum {
                logits,
                labels: labels.to_vec(),
                mask: mask.to_vec(),
            },
        )
    }

    pub fn add_scaled(&mut self, a: NodeId, b: NodeId, wa: f64, wb: f64) -> NodeId {
        let value = wa * self.value(a).item() + wb * self.value(b).item();
        self.push(Matrix::scalar(value), Op::AddScaled { a, b, wa, wb })
    }

    /// Accumulate d(root)/d(param) into `grads` for every parameter leaf.
    pub fn backward(&self, root: NodeId, grads: &mut Gradients) {
        let mut node_grads: Vec<Option<Matrix>> = Vec::with_capacity(self.nodes.len());
        node_grads.resize_with(self.nodes.len(), || None);
        node_grads[root] = Some(Matrix::scalar(1.0));

        for id in (0..=root).rev() {
            let Some(grad) = node_grads[id].take() else {
                continue;
            };
            if let Source::Param(p) = &self.nodes[id].src {
                grads.tensors[*p].add_assign(&grad);
            }
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    // dA += G @ B^T ; dB += A^T @ G
                    let (va, vb) = (self.value(*a), self.value(*b));
                    add_matmul_nt(self.grad_slot(&mut node_grads, *a), &grad, vb);
                    add_matmul_tn(self.grad_slot(&mut node_grads, *b), va, &grad);
                }
                Op::MatMulNT(a, b) => {
                    // C = A @ B^T: dA += G @ B ; dB += G^T @ A
                    let (va, vb) = (self.value(*a), self.value(*b));
                    add_matmul(self.grad_slot(&mut node_grads, *a), &grad, vb);
                    add_matmul_tn(self.grad_slot(&mut node_grads, *b), &grad, va);
                }
                Op::Add(a, b) => {
                    self.grad_slot(&mut node_grads, *a).add_assign(&grad);
                    self.grad_slot(&mut node_grads, *b).add_assign(&grad);
                }
                Op::AddRow(a, row) => {
                    self.grad_slot(&mut node_grads, *a).add_assign(&grad);
                    let drow = self.grad_slot(&mut node_grads, *row);
                    for r in 0..grad.rows() {
                        for (d, g) in drow.row_mut(0).iter_mut().zip(grad.row(r)) {
                            *d += g;
                        }
                    }
                }
                Op::Scale(a, factor) => {
                    let slot = self.grad_slot(&mut node_grads, *a);
                    for (d, g) in slot.data_mut().iter_mut().zip(grad.data()) {
                        *d += factor * g;
                    }
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let slot = self.grad_slot(&mut node_grads, *a);
                    for ((d, g), &xv) in slot.data_mut().iter_mut().zip(grad.data()).zip(x.data()) {
                        *d += g * gelu_derivative(xv);
                    }
                }
                Op::Tanh(a) => {
                    let y = self.value(id);
                    let slot = self.grad_slot(&mut node_grads, *a);
                    for ((d, g), &yv) in slot.data_mut().iter_mut().zip(grad.data()).zip(y.data()) {
                        *d += g * (1.0 - yv * yv);
                    }
                }
                Op::SoftmaxRows(a) => {
                    let y = self.value(id);
                    let slot = self.grad_slot(&mut node_grads, *a);
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = grad.row(r);
                        let dot: f64 = yr.iter().zip(gr).map(|(p, g)| p * g).sum();
                        for (d, (p, g)) in slot.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                            *d += p * (g - dot);
                        }
                    }
                }
                Op::LayerNorm { x, gamma, beta } => {
                    let input = self.value(*x);
                    let g = self.value(*gamma);
                    let cols = input.cols() as f64;
                    // d_beta / d_gamma first, then the input VJP per row.
                    {
                        let dbeta = self.grad_slot(&mut node_grads, *beta);
                        for r in 0..grad.rows() {
                            for (d, gv) in dbeta.row_mut(0).iter_mut().zip(grad.row(r)) {
                                *d += gv;
                            }
                        }
                    }
                    {
                        let dgamma = self.grad_slot(&mut node_grads, *gamma);
                        for r in 0..grad.rows() {
                            let (mean, inv_std) = row_moments(input.row(r));
                            for (j, (d, gv)) in
                                dgamma.row_mut(0).iter_mut().zip(grad.row(r)).enumerate()
                            {
                                let xhat = (input.get(r, j) - mean) * inv_std;
                                *d += gv * xhat;
                            }
                        }
                    }
                    let dx = self.grad_slot(&mut node_grads, *x);
                    for r in 0..grad.rows() {
                        let (mean, inv_std) = row_moments(input.row(r));
                        let row = input.row(r);
                        let gr = grad.row(r);
                        // h = gamma ⊙ dy; dx = inv_std * (h - mean(h) - xhat * mean(h ⊙ xhat))
                        let mut h_mean = 0.0;
                        let mut hx_mean = 0.0;
                        for j in 0..row.len() {
                            let h = g.get(0, j) * gr[j];
                            let xhat = (row[j] - mean) * inv_std;
                            h_mean += h;
                            hx_mean += h * xhat;
                        }
                        h_mean /= cols;
                        hx_mean /= cols;
                        for (j, d) in dx.row_mut(r).iter_mut().enumerate() {
                            let h = g.get(0, j) * gr[j];
                            let xhat = (row[j] - mean) * inv_std;
                            *d += inv_std * (h - h_mean - xhat * hx_mean);
                        }
                    }
                }
                Op::Embed { table_param, ids } => {
                    let table_grad = &mut grads.tensors[*table_param];
                    for (r, &tok) in ids.iter().enumerate() {
                        for (d, g) in table_grad.row_mut(tok as usize).iter_mut().zip(grad.row(r)) {
                            *d += g;
                        }
                    }
                }
                Op::SliceCols { x, start } => {
                    let width = grad.cols();
                    let slot = self.grad_slot(&mut node_grads, *x);
                    for r in 0..grad.rows() {
                        for (d, g) in slot.row_mut(r)[*start..start + width]
                            .iter_mut()
                            .zip(grad.row(r))
                        {
                            *d += g;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let width = self.value(p).cols();
                        let slot = self.grad_slot(&mut node_grads, p);
                        for r in 0..grad.rows() {
                            for (d, g) in slot
                                .row_mut(r)
                                .iter_mut()
                                .zip(&grad.row(r)[offset..offset + width])
                            {
                                *d += g;
                            }
                        }
                        offset += width;
                    }
                }
                Op::SliceRows { x, len } => {
                    let slot = self.grad_slot(&mut node_grads, *x);
                    for r in 0..*len {
                        for (d, g) in slot.row_mut(r).iter_mut().zip(grad.row(r)) {
                            *d += g;
                        }
                    }
                }
                Op::MulMask(x, mask) => {
                    let slot = self.grad_slot(&mut node_grads, *x);
                    for ((d, g), m) in slot.data_mut().iter_mut().zip(grad.data()).zip(mask.data())
                    {
                        *d += g * m;
                    }
                }
                Op::NllSum { logits, targets } => {
                    let g = grad.item();
                    let rows = self.value(*logits);
                    let slot = self.grad_slot(&mut node_grads, *logits);
                    for (r, &target) in targets.iter().enumerate() {
                        let row = rows.row(r);
                        let lse = logsumexp(row);
                        let out = slot.row_mut(r);
                        for (j, (d, &z)) in out.iter_mut().zip(row).enumerate() {
                            let p = (z - lse).exp();
                            let indicator = if j == target as usize { 1.0 } else { 0.0 };
                            *d += g * (p - indicator);
                        }
                    }
                }
                Op::BceSum {
                    logits,
                    labels,
                    mask,
                } => {
                    let g = grad.item();
                    let z = self.value(*logits);
                    let slot = self.grad_slot(&mut node_grads, *logits);
                    for r in 0..labels.len() {
                        if mask[r] {
                            let p = sigmoid(z.get(r, 0));
                            slot.row_mut(r)[0] += g * (p - labels[r]);
                        }
                    }
                }
                Op::AddScaled { a, b, wa, wb } => {
                    let g = grad.item();
                    self.grad_slot(&mut node_grads, *a).row_mut(0)[0] += wa * g;
                    self.grad_slot(&mut node_grads, *b).row_mut(0)[0] += wb * g;
                }
            }
        }
    }

    /// Grad buffer for `id`, allocated lazily with the node's shape.
    #[allow(clippy::mut_from_ref)]
    fn grad_slot<'g>(&self, node_grads: &'g mut [Option<Matrix>], id: NodeId) -> &'g mut Matrix {
        if node_grads[id].is_none() {
            let v = self.value(id);
            node_grads[id] = Some(Matrix::zeros(v.rows(), v.cols()));
        }
        node_grads[id].as_mut().unwrap()
    }
}

/// Numerically stable log(sum(exp(row))).
pub fn logsumexp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Stable binary cross entropy from a logit: max(z,0) - z*e + ln(1 + e^-|z|).
pub fn bce_with_logit(z: f64, label: f64) -> f64 {
    z.max(0.0) - z * label + (-z.abs()).exp().ln_1p()
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// (mean, 1/sqrt(var + eps)) of a row, biased variance.
fn row_moments(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + LAYER_NORM_EPS).sqrt())
}

const GELU_COEF: f64 = 0.044715;

/// tanh-approximation GELU; smooth everywhere, which keeps central finite
/// differences clean.
pub fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + GELU_COEF * x * x * x)).tanh())
}

fn gelu_derivative(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let u = c * (x + GELU_COEF * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * GELU_COEF * x * x)
}
