//! Reverse-mode differentiation over a flat operation tape.
//!
//! Every operation appends a node holding its forward value and the ids of
//! its inputs. [`Tape::backward`] walks the nodes in reverse, applies each
//! node's adjoint rule, and accumulates the gradients of parameter leaves
//! into the [`ParamStore`] they were read from. A tape covers one unit of
//! work (a scene during training) and is dropped afterwards.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    MatVec(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRowVec(Var, Var),
    ScaleRows(Var, Var),
    Act(Var, Activation),
    Prelu(Var, Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    GatherSum(Var, Vec<usize>),
    RowCosine(Var, Var),
    Softmax(Var),
    NegLogPick(Var, usize, f64),
    NormalizeRows(Var),
    Sum(Var),
    SumScalars(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (1, *n),
        [m, n] => (*m, *n),
        _ => (shape[0], shape[1..].iter().product()),
    }
}

fn shape_err(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (dot, na, nb) = a
        .iter()
        .zip(b)
        .fold((0.0, 0.0, 0.0), |(d, x, y), (&u, &v)| (d + u * v, x + u * u, y + v * v));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
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

    /// Drops all recorded nodes.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.params.clear();
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shapes are consistent")
    }

    /// Constant leaf; receives no gradient.
    pub fn input(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Input)
    }

    pub fn input_vec(&mut self, v: Vec<f64>) -> Var {
        self.push(vec![v.len()], v, Op::Input)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node,
    /// so gradients from every use are summed before being written back.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let p = &store.get(id).value;
        let v = self.push(p.shape().to_vec(), p.data().to_vec(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", &sa, &sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x != 0.0 {
                    for (o, &y) in row.iter_mut().zip(&bv[p * n..(p + 1) * n]) {
                        *o += x * y;
                    }
                }
            }
        }
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b)))
    }

    /// Matrix `[m, n]` times vector `[n]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (sw, sx) = (self.shape(w).to_vec(), self.shape(x).to_vec());
        if sw.len() != 2 || sx.len() != 1 || sw[1] != sx[0] {
            return Err(shape_err("matvec", &sw, &sx));
        }
        let (m, n) = (sw[0], sw[1]);
        let (wv, xv) = (self.value(w), self.value(x));
        let out = (0..m)
            .map(|i| wv[i * n..(i + 1) * n].iter().zip(xv).map(|(a, b)| a * b).sum())
            .collect();
        Ok(self.push(vec![m], out, Op::MatVec(w, x)))
    }

    /// `a · bᵀ` for `a: [m, k]`, `b: [n, k]`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(shape_err("matmul_bt", &sa, &sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[0]);
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let ar = &av[i * k..(i + 1) * k];
            for j in 0..n {
                out[i * n + j] = ar.iter().zip(&bv[j * k..(j + 1) * k]).map(|(x, y)| x * y).sum();
            }
        }
        Ok(self.push(vec![m, n], out, Op::MatMulBt(a, b)))
    }

    fn zip_same(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(name, self.shape(a), self.shape(b)));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, out, Op::Scale(a, c))
    }

    /// Adds vector `v: [n]` to every row of `m: [r, n]`.
    pub fn add_row_vec(&mut self, m: Var, v: Var) -> Result<Var> {
        let (sm, sv) = (self.shape(m).to_vec(), self.shape(v).to_vec());
        if sm.len() != 2 || sv.len() != 1 || sm[1] != sv[0] {
            return Err(shape_err("add_row_vec", &sm, &sv));
        }
        let n = sm[1];
        let vv = self.value(v).to_vec();
        let out = self.value(m).iter().enumerate().map(|(i, x)| x + vv[i % n]).collect();
        Ok(self.push(sm, out, Op::AddRowVec(m, v)))
    }

    /// Multiplies row `j` of `m: [r, n]` by `g[j]`.
    pub fn scale_rows(&mut self, m: Var, g: Var) -> Result<Var> {
        let (sm, sg) = (self.shape(m).to_vec(), self.shape(g).to_vec());
        if sm.len() != 2 || sg.len() != 1 || sm[0] != sg[0] {
            return Err(shape_err("scale_rows", &sm, &sg));
        }
        let n = sm[1];
        let gv = self.value(g).to_vec();
        let out = self.value(m).iter().enumerate().map(|(i, x)| x * gv[i / n]).collect();
        Ok(self.push(sm, out, Op::ScaleRows(m, g)))
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        let f: fn(f64) -> f64 = match kind {
            Activation::Tanh => f64::tanh,
            Activation::Sigmoid => sigmoid,
            Activation::Relu => |x| x.max(0.0),
        };
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, out, Op::Act(a, kind))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Relu)
    }

    /// `x` where `x >= 0`, else `slope * x`; `slope` is a one-element node.
    pub fn prelu(&mut self, a: Var, slope: Var) -> Result<Var> {
        if self.value(slope).len() != 1 {
            return Err(shape_err("prelu", self.shape(a), self.shape(slope)));
        }
        let s = self.value(slope)[0];
        let out = self.value(a).iter().map(|&x| if x >= 0.0 { x } else { s * x }).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::Prelu(a, slope)))
    }

    /// Concatenates vectors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        for &p in parts {
            if self.shape(p).len() != 1 {
                return Err(shape_err("concat", self.shape(p), &[]));
            }
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(vec![out.len()], out, Op::Concat(parts.to_vec())))
    }

    /// `a[start..start + len]` of a vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.value(a).len();
        if self.shape(a).len() != 1 || start + len > n || len == 0 {
            return Err(shape_err("slice", self.shape(a), &[start, len]));
        }
        let out = self.value(a)[start..start + len].to_vec();
        Ok(self.push(vec![len], out, Op::Slice(a, start)))
    }

    /// Sum of the selected rows of a matrix; an empty selection yields the
    /// zero vector.
    pub fn gather_sum(&mut self, m: Var, rows: &[usize]) -> Result<Var> {
        let sm = self.shape(m).to_vec();
        if sm.len() != 2 {
            return Err(shape_err("gather_sum", &sm, &[]));
        }
        let (r, c) = (sm[0], sm[1]);
        let mut out = vec![0.0; c];
        let mv = self.value(m);
        for &i in rows {
            if i >= r {
                return Err(Error::Invalid(format!("row {i} out of range for {sm:?}")));
            }
            for (o, x) in out.iter_mut().zip(&mv[i * c..(i + 1) * c]) {
                *o += x;
            }
        }
        Ok(self.push(vec![c], out, Op::GatherSum(m, rows.to_vec())))
    }

    /// Cosine between every row of `m: [r, k]` and `v: [k]`; zero when either
    /// norm is zero.
    pub fn row_cosine(&mut self, m: Var, v: Var) -> Result<Var> {
        let (sm, sv) = (self.shape(m).to_vec(), self.shape(v).to_vec());
        if sm.len() != 2 || sv.len() != 1 || sm[1] != sv[0] {
            return Err(shape_err("row_cosine", &sm, &sv));
        }
        let k = sm[1];
        let (mv, vv) = (self.value(m), self.value(v));
        let out = (0..sm[0]).map(|j| cosine(&mv[j * k..(j + 1) * k], vv)).collect();
        Ok(self.push(vec![sm[0]], out, Op::RowCosine(m, v)))
    }

    pub fn softmax(&mut self, g: Var) -> Var {
        let out = softmax(self.value(g));
        let shape = self.shape(g).to_vec();
        self.push(shape, out, Op::Softmax(g))
    }

    /// `-weight * ln(p[index])` as a scalar.
    pub fn neg_log_pick(&mut self, p: Var, index: usize, weight: f64) -> Result<Var> {
        let pv = self.value(p);
        if index >= pv.len() {
            return Err(Error::Invalid(format!("class {index} out of range for {} outputs", pv.len())));
        }
        let out = -weight * pv[index].ln();
        Ok(self.push(vec![1], vec![out], Op::NegLogPick(p, index, weight)))
    }

    /// Scales every nonzero row to unit L2 norm; zero rows pass through.
    pub fn normalize_rows(&mut self, m: Var) -> Var {
        let shape = self.shape(m).to_vec();
        let (r, c) = rows_cols(&shape);
        let mut out = self.value(m).to_vec();
        for j in 0..r {
            let row = &mut out[j * c..(j + 1) * c];
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter_mut().for_each(|x| *x /= n);
            }
        }
        self.push(shape, out, Op::NormalizeRows(m))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(vec![1], vec![s], Op::Sum(a))
    }

    pub fn sum_scalars(&mut self, xs: &[Var]) -> Var {
        let s = xs.iter().map(|&x| self.scalar(x)).sum();
        self.push(vec![1], vec![s], Op::SumScalars(xs.to_vec()))
    }

    /// Backpropagates from a scalar node and adds parameter gradients into
    /// `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (&pid, &v) in &self.params {
            if let Some(g) = &grads[v.0] {
                let p = store.get_mut(pid);
                for (acc, x) in p.grad.iter_mut().zip(g) {
                    *acc += x;
                }
            }
        }
        Ok(())
    }

    /// Adjoint of every node with respect to the scalar `loss`.
    pub fn gradients(&self, loss: Var) -> Result<Vec<Option<Vec<f64>>>> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(shape_err("backward", &self.nodes[loss.0].shape, &[1]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(grads)
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        macro_rules! acc {
            ($v:expr) => {
                slot(grads, nodes, $v)
            };
        }
        match &node.op {
            Op::Input | Op::Param => {}
            Op::MatMul(a, b) => {
                let (m, k) = rows_cols(&nodes[a.0].shape);
                let n = nodes[b.0].shape[1];
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                let ga = acc!(*a);
                for i in 0..m {
                    for p in 0..k {
                        ga[i * k + p] += (0..n).map(|j| g[i * n + j] * bv[p * n + j]).sum::<f64>();
                    }
                }
                let gb = acc!(*b);
                for i in 0..m {
                    for p in 0..k {
                        let x = av[i * k + p];
                        for j in 0..n {
                            gb[p * n + j] += x * g[i * n + j];
                        }
                    }
                }
            }
            Op::MatVec(w, x) => {
                let n = nodes[w.0].shape[1];
                let (wv, xv) = (&nodes[w.0].value, &nodes[x.0].value);
                let gw = acc!(*w);
                for (i, &gi) in g.iter().enumerate() {
                    if gi != 0.0 {
                        for (o, &xj) in gw[i * n..(i + 1) * n].iter_mut().zip(xv) {
                            *o += gi * xj;
                        }
                    }
                }
                let gx = acc!(*x);
                for (i, &gi) in g.iter().enumerate() {
                    if gi != 0.0 {
                        for (o, &wij) in gx.iter_mut().zip(&wv[i * n..(i + 1) * n]) {
                            *o += gi * wij;
                        }
                    }
                }
            }
            Op::MatMulBt(a, b) => {
                let (m, k) = rows_cols(&nodes[a.0].shape);
                let n = nodes[b.0].shape[0];
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                let ga = acc!(*a);
                for i in 0..m {
                    for j in 0..n {
                        let gij = g[i * n + j];
                        if gij != 0.0 {
                            for p in 0..k {
                                ga[i * k + p] += gij * bv[j * k + p];
                            }
                        }
                    }
                }
                let gb = acc!(*b);
                for i in 0..m {
                    for j in 0..n {
                        let gij = g[i * n + j];
                        if gij != 0.0 {
                            for p in 0..k {
                                gb[j * k + p] += gij * av[i * k + p];
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                add_into(acc!(*a), g);
                add_into(acc!(*b), g);
            }
            Op::Sub(a, b) => {
                add_into(acc!(*a), g);
                let gb = acc!(*b);
                for (o, x) in gb.iter_mut().zip(g) {
                    *o -= x;
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                let ga = acc!(*a);
                for ((o, x), y) in ga.iter_mut().zip(g).zip(bv) {
                    *o += x * y;
                }
                let gb = acc!(*b);
                for ((o, x), y) in gb.iter_mut().zip(g).zip(av) {
                    *o += x * y;
                }
            }
            Op::Scale(a, c) => {
                for (o, x) in acc!(*a).iter_mut().zip(g) {
                    *o += c * x;
                }
            }
            Op::AddRowVec(m, v) => {
                let n = nodes[v.0].value.len();
                add_into(acc!(*m), g);
                let gv = acc!(*v);
                for (i, x) in g.iter().enumerate() {
                    gv[i % n] += x;
                }
            }
            Op::ScaleRows(m, s) => {
                let n = nodes[m.0].shape[1];
                let (mv, sv) = (&nodes[m.0].value, &nodes[s.0].value);
                let gm = acc!(*m);
                for (i, (o, x)) in gm.iter_mut().zip(g).enumerate() {
                    *o += x * sv[i / n];
                }
                let gs = acc!(*s);
                for (i, (x, y)) in g.iter().zip(mv).enumerate() {
                    gs[i / n] += x * y;
                }
            }
            Op::Act(a, kind) => {
                let (xv, yv) = (&nodes[a.0].value, &node.value);
                let ga = acc!(*a);
                for i in 0..g.len() {
                    let d = match kind {
                        Activation::Tanh => 1.0 - yv[i] * yv[i],
                        Activation::Sigmoid => yv[i] * (1.0 - yv[i]),
                        Activation::Relu => {
                            if xv[i] > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    };
                    ga[i] += g[i] * d;
                }
            }
            Op::Prelu(a, s) => {
                let xv = &nodes[a.0].value;
                let slope = nodes[s.0].value[0];
                let ga = acc!(*a);
                let mut gs = 0.0;
                for i in 0..g.len() {
                    if xv[i] >= 0.0 {
                        ga[i] += g[i];
                    } else {
                        ga[i] += slope * g[i];
                        gs += g[i] * xv[i];
                    }
                }
                acc!(*s)[0] += gs;
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = nodes[p.0].value.len();
                    add_into(acc!(*p), &g[off..off + len]);
                    off += len;
                }
            }
            Op::Slice(a, start) => {
                let ga = acc!(*a);
                add_into(&mut ga[*start..*start + g.len()], g);
            }
            Op::GatherSum(m, rows) => {
                let c = g.len();
                let gm = acc!(*m);
                for &r in rows {
                    add_into(&mut gm[r * c..(r + 1) * c], g);
                }
            }
            Op::RowCosine(m, v) => {
                let k = nodes[v.0].value.len();
                let (mv, vv) = (&nodes[m.0].value, &nodes[v.0].value);
                let nv = vv.iter().map(|x| x * x).sum::<f64>().sqrt();
                let mut gv = vec![0.0; k];
                let mut gm_rows = vec![0.0; mv.len()];
                if nv > 0.0 {
                    for (j, &gj) in g.iter().enumerate() {
                        let row = &mv[j * k..(j + 1) * k];
                        let nm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                        if nm == 0.0 || gj == 0.0 {
                            continue;
                        }
                        let c = node.value[j];
                        for p in 0..k {
                            gm_rows[j * k + p] += gj * (vv[p] / (nm * nv) - c * row[p] / (nm * nm));
                            gv[p] += gj * (row[p] / (nm * nv) - c * vv[p] / (nv * nv));
                        }
                    }
                }
                add_into(acc!(*m), &gm_rows);
                add_into(acc!(*v), &gv);
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let dot: f64 = g.iter().zip(y).map(|(x, y)| x * y).sum();
                let ga = acc!(*a);
                for i in 0..g.len() {
                    ga[i] += y[i] * (g[i] - dot);
                }
            }
            Op::NegLogPick(p, idx, w) => {
                let pv = nodes[p.0].value[*idx];
                acc!(*p)[*idx] -= g[0] * w / pv;
            }
            Op::NormalizeRows(m) => {
                let (r, c) = rows_cols(&node.shape);
                let xv = &nodes[m.0].value;
                let y = &node.value;
                let gm = acc!(*m);
                for j in 0..r {
                    let xr = &xv[j * c..(j + 1) * c];
                    let n = xr.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let yr = &y[j * c..(j + 1) * c];
                    let gr = &g[j * c..(j + 1) * c];
                    if n == 0.0 {
                        add_into(&mut gm[j * c..(j + 1) * c], gr);
                        continue;
                    }
                    let yg: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for p in 0..c {
                        gm[j * c + p] += (gr[p] - yr[p] * yg) / n;
                    }
                }
            }
            Op::Sum(a) => {
                acc!(*a).iter_mut().for_each(|o| *o += g[0]);
            }
            Op::SumScalars(xs) => {
                for x in xs {
                    acc!(*x)[0] += g[0];
                }
            }
        }
    }
}

fn slot<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'g mut Vec<f64> {
    let len = nodes[v.0].value.len();
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(g: &[f64]) -> Vec<f64> {
    let max = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = g.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity_and_scalar() {
        let mut tape = Tape::new();
        let a = tape.input(&t(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let b = tape.input(&t(&[vec![3.0], vec![4.0]]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c), &[3.0, 4.0]);
        assert_eq!(tape.shape(c), &[2, 1]);

        let a = tape.input(&t(&[vec![2.0]]));
        let b = tape.input(&t(&[vec![5.0]]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c), &[10.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.input(&Tensor::zeros(&[2, 3]));
        let b = tape.input(&Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn activations() {
        let mut tape = Tape::new();
        let x = tape.input_vec(vec![-0.3, 0.0, -2.0]);
        let r = tape.relu(x);
        assert_eq!(tape.value(r)[0], 0.0);
        let th = tape.tanh(x);
        assert_eq!(tape.value(th)[1], 0.0);
        let s = tape.input_vec(vec![0.25]);
        let p = tape.prelu(x, s).unwrap();
        assert_eq!(tape.value(p)[2], -0.5);
    }

    #[test]
    fn row_cosine_cases() {
        let mut tape = Tape::new();
        let m = tape.input(&t(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]]));
        let v = tape.input_vec(vec![1.0, 0.0]);
        let c = tape.row_cosine(m, v).unwrap();
        assert_eq!(tape.value(c), &[1.0, 0.0, -1.0]);
        let z = tape.input_vec(vec![0.0, 0.0]);
        let c = tape.row_cosine(m, z).unwrap();
        assert_eq!(tape.value(c), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[1.0, 2.0, 3.0]);
        let z = 1f64.exp() + 2f64.exp() + 3f64.exp();
        let want = [1f64.exp() / z, 2f64.exp() / z, 3f64.exp() / z];
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        let shifted = softmax(&[1001.0, 1002.0, 1003.0]);
        for (a, b) in p.iter().zip(&shifted) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_rows_cases() {
        let mut tape = Tape::new();
        let m = tape.input(&t(&[vec![3.0, 4.0], vec![0.0, 0.0], vec![1.0, 0.0]]));
        let n = tape.normalize_rows(m);
        assert_eq!(tape.value(n), &[0.6, 0.8, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn matmul_gradient_of_sum() {
        // d sum(AB) / dA = ones · Bᵀ
        let mut store = ParamStore::new();
        let a = store.insert("a", Tensor::new(vec![3, 4], (0..12).map(|i| i as f64 * 0.1).collect()).unwrap());
        let b = store.insert("b", Tensor::new(vec![4, 2], (0..8).map(|i| 1.0 - i as f64 * 0.3).collect()).unwrap());
        let mut tape = Tape::new();
        let av = tape.param(&store, a);
        let bv = tape.param(&store, b);
        let c = tape.matmul(av, bv).unwrap();
        let s = tape.sum(c);
        tape.backward(s, &mut store).unwrap();
        let bt = store.get(b).value.clone();
        for i in 0..3 {
            for p in 0..4 {
                let want = bt.row(p).iter().sum::<f64>();
                assert!((store.get(a).grad[i * 4 + p] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shared_param_node_accumulates() {
        let mut store = ParamStore::new();
        let x = store.insert("x", Tensor::from_vec(vec![2.0]));
        let mut tape = Tape::new();
        let a = tape.param(&store, x);
        let b = tape.param(&store, x);
        assert_eq!(a, b);
        let y = tape.mul(a, b).unwrap();
        let s = tape.sum(y);
        tape.backward(s, &mut store).unwrap();
        assert_eq!(store.get(x).grad, vec![4.0]);
    }
}
