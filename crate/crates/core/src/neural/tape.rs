//! Reverse-mode differentiation over a linear tape of matrix operations.

use std::collections::HashMap;

use super::params::ParamSet;
use super::Tensor2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Affine(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Transpose(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Row(Var, usize),
    SoftmaxRows(Var),
    LogSoftmaxMasked(Var, Vec<bool>),
    Sum(Var),
    MeanRows(Var),
    Pick(Var, usize),
    Broadcast(Var),
}

struct Node {
    value: Tensor2,
    op: Op,
}

/// A computation record. Values are computed eagerly; [`Tape::backward`]
/// fills the gradient buffers.
pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_vars: HashMap<usize, Var>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self { params, nodes: Vec::new(), param_vars: HashMap::new() }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    fn push(&mut self, value: Tensor2, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        debug_assert_eq!(t.data.len(), 1);
        t.data[0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, t: Tensor2) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn scalar_const(&mut self, v: f64) -> Var {
        self.constant(Tensor2::new(1, 1, vec![v]))
    }

    /// The parameter called `name`; one leaf per parameter per tape.
    pub fn param(&mut self, name: &str) -> Var {
        let idx = self
            .params
            .index_of(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        if let Some(&v) = self.param_vars.get(&idx) {
            return v;
        }
        let spec = &self.params.specs()[idx];
        let t = Tensor2::new(spec.rows, spec.cols, self.params.slice(idx).to_vec());
        let v = self.push(t, Op::Param);
        self.param_vars.insert(idx, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.cols, y.rows, "matmul shape mismatch");
        let mut out = vec![0.0; x.rows * y.cols];
        for i in 0..x.rows {
            for k in 0..x.cols {
                let xik = x.data[i * x.cols + k];
                if xik == 0.0 {
                    continue;
                }
                let yrow = &y.data[k * y.cols..(k + 1) * y.cols];
                let orow = &mut out[i * y.cols..(i + 1) * y.cols];
                for (o, yv) in orow.iter_mut().zip(yrow) {
                    *o += xik * yv;
                }
            }
        }
        let t = Tensor2::new(x.rows, y.cols, out);
        self.push(t, Op::MatMul(a, b))
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!((x.rows, x.cols), (y.rows, y.cols), "elementwise shape mismatch");
        let data = x.data.iter().zip(&y.data).map(|(p, q)| f(*p, *q)).collect();
        let t = Tensor2::new(x.rows, x.cols, data);
        self.push(t, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |p, q| p + q, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |p, q| p - q, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |p, q| p * q, Op::Mul(a, b))
    }

    /// `a + 1·b` with `b` a single row broadcast over the rows of `a`.
    pub fn add_bias(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!((y.rows, y.cols), (1, x.cols), "bias shape mismatch");
        let mut data = x.data.clone();
        for row in data.chunks_mut(x.cols) {
            for (o, bv) in row.iter_mut().zip(&y.data) {
                *o += bv;
            }
        }
        let t = Tensor2::new(x.rows, x.cols, data);
        self.push(t, Op::AddBias(a, b))
    }

    /// `s·a + c`.
    pub fn affine(&mut self, a: Var, s: f64, c: f64) -> Var {
        let x = self.value(a);
        let t = Tensor2::new(x.rows, x.cols, x.data.iter().map(|v| s * v + c).collect());
        self.push(t, Op::Affine(a, s))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let x = self.value(a);
        let t = Tensor2::new(x.rows, x.cols, x.data.iter().map(|v| f(*v)).collect());
        self.push(t, op)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.map(a, softplus, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.map(a, f64::ln, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, |v| v * v, Op::Square(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut data = vec![0.0; x.data.len()];
        for i in 0..x.rows {
            for j in 0..x.cols {
                data[j * x.rows + i] = x.data[i * x.cols + j];
            }
        }
        let t = Tensor2::new(x.cols, x.rows, data);
        self.push(t, Op::Transpose(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols, "column slice out of range");
        let data = x
            .data
            .chunks(x.cols)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let t = Tensor2::new(x.rows, len, data);
        self.push(t, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for p in parts {
                let x = self.value(*p);
                assert_eq!(x.rows, rows, "concat_cols row mismatch");
                data.extend_from_slice(&x.data[i * x.cols..(i + 1) * x.cols]);
            }
        }
        let t = Tensor2::new(rows, cols, data);
        self.push(t, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let x = self.value(*p);
            assert_eq!(x.cols, cols, "concat_rows column mismatch");
            data.extend_from_slice(&x.data);
            rows += x.rows;
        }
        let t = Tensor2::new(rows, cols, data);
        self.push(t, Op::ConcatRows(parts.to_vec()))
    }

    pub fn row(&mut self, a: Var, i: usize) -> Var {
        let x = self.value(a);
        let t = Tensor2::new(1, x.cols, x.data[i * x.cols..(i + 1) * x.cols].to_vec());
        self.push(t, Op::Row(a, i))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut data = x.data.clone();
        for row in data.chunks_mut(x.cols) {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        assert!(data.iter().all(|v| v.is_finite()), "softmax produced a non-finite value");
        let t = Tensor2::new(x.rows, x.cols, data);
        self.push(t, Op::SoftmaxRows(a))
    }

    /// Log-softmax of a single row over the entries where `mask` is false;
    /// masked entries are `−∞` and receive no gradient.
    pub fn log_softmax_masked(&mut self, a: Var, mask: &[bool]) -> Var {
        let x = self.value(a);
        assert_eq!(x.rows, 1, "log_softmax_masked expects a row");
        assert_eq!(mask.len(), x.cols);
        let max = x
            .data
            .iter()
            .zip(mask)
            .filter(|(_, m)| !**m)
            .fold(f64::NEG_INFINITY, |acc, (v, _)| acc.max(*v));
        let lse = max
            + x.data
                .iter()
                .zip(mask)
                .filter(|(_, m)| !**m)
                .map(|(v, _)| (v - max).exp())
                .sum::<f64>()
                .ln();
        let data = x
            .data
            .iter()
            .zip(mask)
            .map(|(v, m)| if *m { f64::NEG_INFINITY } else { v - lse })
            .collect();
        let t = Tensor2::new(1, x.cols, data);
        self.push(t, Op::LogSoftmaxMasked(a, mask.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor2::new(1, 1, vec![s]), Op::Sum(a))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut data = vec![0.0; x.cols];
        for row in x.data.chunks(x.cols) {
            for (o, v) in data.iter_mut().zip(row) {
                *o += v;
            }
        }
        let inv = 1.0 / x.rows as f64;
        data.iter_mut().for_each(|v| *v *= inv);
        let t = Tensor2::new(1, x.cols, data);
        self.push(t, Op::MeanRows(a))
    }

    /// Entry `i` of the flattened tensor as a 1×1 value.
    pub fn pick(&mut self, a: Var, i: usize) -> Var {
        let v = self.value(a).data[i];
        self.push(Tensor2::new(1, 1, vec![v]), Op::Pick(a, i))
    }

    /// A 1×1 value repeated into `rows × cols`.
    pub fn broadcast(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let v = self.scalar(a);
        self.push(Tensor2::new(rows, cols, vec![v; rows * cols]), Op::Broadcast(a))
    }

    /// Accumulate `d loss / d node` for every node reachable from `loss`.
    pub fn backward(&mut self, loss: Var) {
        for n in &mut self.nodes {
            n.value.grad = None;
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0; self.nodes[loss.0].value.data.len()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            self.nodes[i].value.grad = Some(g);
        }
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        let add = |grads: &mut [Option<Vec<f64>>], v: Var, contrib: Vec<f64>| match &mut grads[v.0] {
            Some(slot) => slot.iter_mut().zip(contrib).for_each(|(s, c)| *s += c),
            slot @ None => *slot = Some(contrib),
        };
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (x, w) = (self.value(*a), self.value(*b));
                let (r, k, c) = (x.rows, x.cols, w.cols);
                let mut da = vec![0.0; r * k];
                let mut db = vec![0.0; k * c];
                for ii in 0..r {
                    let grow = &g[ii * c..(ii + 1) * c];
                    for kk in 0..k {
                        let wrow = &w.data[kk * c..(kk + 1) * c];
                        da[ii * k + kk] = grow.iter().zip(wrow).map(|(p, q)| p * q).sum();
                        let xv = x.data[ii * k + kk];
                        if xv != 0.0 {
                            for (d, gv) in db[kk * c..(kk + 1) * c].iter_mut().zip(grow) {
                                *d += xv * gv;
                            }
                        }
                    }
                }
                add(grads, *a, da);
                add(grads, *b, db);
            }
            Op::Add(a, b) => {
                add(grads, *a, g.to_vec());
                add(grads, *b, g.to_vec());
            }
            Op::Sub(a, b) => {
                add(grads, *a, g.to_vec());
                add(grads, *b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (x, z) = (self.value(*a), self.value(*b));
                add(grads, *a, g.iter().zip(&z.data).map(|(p, q)| p * q).collect());
                add(grads, *b, g.iter().zip(&x.data).map(|(p, q)| p * q).collect());
            }
            Op::AddBias(a, b) => {
                add(grads, *a, g.to_vec());
                let mut db = vec![0.0; y.cols];
                for row in g.chunks(y.cols) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                add(grads, *b, db);
            }
            Op::Affine(a, s) => add(grads, *a, g.iter().map(|v| v * s).collect()),
            Op::Tanh(a) => add(grads, *a, g.iter().zip(&y.data).map(|(gv, t)| gv * (1.0 - t * t)).collect()),
            Op::Sigmoid(a) => add(grads, *a, g.iter().zip(&y.data).map(|(gv, s)| gv * s * (1.0 - s)).collect()),
            Op::Softplus(a) => {
                let x = self.value(*a);
                add(grads, *a, g.iter().zip(&x.data).map(|(gv, v)| gv * sigmoid(*v)).collect())
            }
            Op::Exp(a) => add(grads, *a, g.iter().zip(&y.data).map(|(gv, e)| gv * e).collect()),
            Op::Log(a) => {
                let x = self.value(*a);
                add(grads, *a, g.iter().zip(&x.data).map(|(gv, v)| gv / v).collect())
            }
            Op::Square(a) => {
                let x = self.value(*a);
                add(grads, *a, g.iter().zip(&x.data).map(|(gv, v)| 2.0 * gv * v).collect())
            }
            Op::Transpose(a) => {
                let mut d = vec![0.0; g.len()];
                for ii in 0..y.rows {
                    for jj in 0..y.cols {
                        d[jj * y.rows + ii] = g[ii * y.cols + jj];
                    }
                }
                add(grads, *a, d);
            }
            Op::SliceCols(a, start) => {
                let x = self.value(*a);
                let mut d = vec![0.0; x.data.len()];
                for ii in 0..y.rows {
                    d[ii * x.cols + start..ii * x.cols + start + y.cols]
                        .copy_from_slice(&g[ii * y.cols..(ii + 1) * y.cols]);
                }
                add(grads, *a, d);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let x = self.value(*p);
                    let mut d = vec![0.0; x.data.len()];
                    for ii in 0..y.rows {
                        d[ii * x.cols..(ii + 1) * x.cols]
                            .copy_from_slice(&g[ii * y.cols + off..ii * y.cols + off + x.cols]);
                    }
                    off += x.cols;
                    add(grads, *p, d);
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = self.value(*p).data.len();
                    add(grads, *p, g[off..off + len].to_vec());
                    off += len;
                }
            }
            Op::Row(a, r) => {
                let x = self.value(*a);
                let mut d = vec![0.0; x.data.len()];
                d[r * x.cols..(r + 1) * x.cols].copy_from_slice(g);
                add(grads, *a, d);
            }
            Op::SoftmaxRows(a) => {
                let mut d = vec![0.0; g.len()];
                for ii in 0..y.rows {
                    let s = &y.data[ii * y.cols..(ii + 1) * y.cols];
                    let gr = &g[ii * y.cols..(ii + 1) * y.cols];
                    let dot: f64 = s.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for jj in 0..y.cols {
                        d[ii * y.cols + jj] = s[jj] * (gr[jj] - dot);
                    }
                }
                add(grads, *a, d);
            }
            Op::LogSoftmaxMasked(a, mask) => {
                let total: f64 = g.iter().zip(mask).filter(|(_, m)| !**m).map(|(v, _)| v).sum();
                let d = y
                    .data
                    .iter()
                    .zip(g)
                    .zip(mask)
                    .map(|((ly, gv), m)| if *m { 0.0 } else { gv - ly.exp() * total })
                    .collect();
                add(grads, *a, d);
            }
            Op::Sum(a) => {
                let len = self.value(*a).data.len();
                add(grads, *a, vec![g[0]; len]);
            }
            Op::MeanRows(a) => {
                let x = self.value(*a);
                let inv = 1.0 / x.rows as f64;
                let d = (0..x.data.len()).map(|k| g[k % x.cols] * inv).collect();
                add(grads, *a, d);
            }
            Op::Pick(a, k) => {
                let mut d = vec![0.0; self.value(*a).data.len()];
                d[*k] = g[0];
                add(grads, *a, d);
            }
            Op::Broadcast(a) => add(grads, *a, vec![g.iter().sum()]),
        }
    }

    /// Gradient with respect to every parameter entry, laid out like
    /// `ParamSet::data`; parameters not on the tape get zeros.
    pub fn param_grads(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.params.len()];
        for (&idx, &v) in &self.param_vars {
            if let Some(g) = self.grad(v) {
                let off = self.params.specs()[idx].offset;
                out[off..off + g.len()].copy_from_slice(g);
            }
        }
        out
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}
