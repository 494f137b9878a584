//! Dense matrices and a reverse-mode differentiation tape over them.
//!
//! Every operation appends a node holding its value; [`Tape::backward`]
//! walks the nodes in reverse and accumulates gradients into the inputs.
//! Nodes built only from constants carry no gradient.

use std::fmt;

/// Row-major dense matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{}) {:?}", self.rows, self.cols, self.data)
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape {rows}x{cols} does not match data");
        Matrix { rows, cols, data }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::from_vec(1, n, data)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn matmul(&self, b: &Matrix) -> Matrix {
        assert_eq!(self.cols, b.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, b.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &b.data[k * b.cols..(k + 1) * b.cols];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += a * bv;
                }
            }
        }
        out
    }

    /// `self * b^T`.
    pub fn matmul_t(&self, b: &Matrix) -> Matrix {
        assert_eq!(self.cols, b.cols, "matmul_t shape mismatch");
        let mut out = Matrix::zeros(self.rows, b.rows);
        for i in 0..self.rows {
            let arow = self.row(i);
            for j in 0..b.rows {
                out.data[i * b.rows + j] = dot(arow, b.row(j));
            }
        }
        out
    }

    /// `self^T * b`.
    pub fn t_matmul(&self, b: &Matrix) -> Matrix {
        assert_eq!(self.rows, b.rows, "t_matmul shape mismatch");
        let mut out = Matrix::zeros(self.cols, b.cols);
        for k in 0..self.rows {
            let arow = self.row(k);
            let brow = b.row(k);
            for (i, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += a * bv;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    fn add_assign(&mut self, o: &Matrix) {
        debug_assert_eq!(self.shape(), o.shape());
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            *a += b;
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable softmax of a slice.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|&x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
    xs.iter().map(|&x| x - lse).collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    SliceCols(Var, usize, usize),
    Transpose(Var),
    MeanRows(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Log(Var),
    Sum(Var),
    Pick(Var, usize, usize),
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Operation record for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of a leaf; `None` when the leaf does not influence the
    /// output or is a constant. Interior gradients are not retained.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "not a scalar");
        m.data[0]
    }

    /// Trainable leaf.
    pub fn param(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf, false)
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        let rg = self.rg(&[a, b]);
        self.push(v, Op::MatMul(a, b), rg)
    }

    /// `a * b^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        let rg = self.rg(&[a, b]);
        self.push(v, Op::MatMulT(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "add shape mismatch");
        let mut v = x.clone();
        v.add_assign(y);
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Add(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "mul shape mismatch");
        let v = Matrix {
            rows: x.rows,
            cols: x.cols,
            data: x.data.iter().zip(&y.data).map(|(p, q)| p * q).collect(),
        };
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x * k);
        let rg = self.rg(&[a]);
        self.push(v, Op::Scale(a, k), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let m = self.value(p);
                assert_eq!(m.rows, rows, "concat_cols row mismatch");
                out.row_mut(r)[off..off + m.cols].copy_from_slice(m.row(r));
                off += m.cols;
            }
        }
        let rg = self.rg(parts);
        self.push(out, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.cols, cols, "concat_rows column mismatch");
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        let rg = self.rg(parts);
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Var {
        let t = self.value(table);
        let mut data = Vec::with_capacity(idx.len() * t.cols);
        for &i in idx {
            data.extend_from_slice(t.row(i));
        }
        let v = Matrix::from_vec(idx.len(), t.cols, data);
        let rg = self.rg(&[table]);
        self.push(v, Op::GatherRows(table, idx.to_vec()), rg)
    }

    pub fn row(&mut self, a: Var, r: usize) -> Var {
        self.gather_rows(a, &[r])
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        assert!(start + len <= m.cols, "slice out of range");
        let mut data = Vec::with_capacity(m.rows * len);
        for r in 0..m.rows {
            data.extend_from_slice(&m.row(r)[start..start + len]);
        }
        let v = Matrix::from_vec(m.rows, len, data);
        let rg = self.rg(&[a]);
        self.push(v, Op::SliceCols(a, start, len), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        let rg = self.rg(&[a]);
        self.push(v, Op::Transpose(a), rg)
    }

    /// Column means: `m x n -> 1 x n`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut out = vec![0.0; m.cols];
        for r in 0..m.rows {
            for (o, x) in out.iter_mut().zip(m.row(r)) {
                *o += x;
            }
        }
        let n = m.rows as f64;
        out.iter_mut().for_each(|o| *o /= n);
        let rg = self.rg(&[a]);
        self.push(Matrix::row_vector(out), Op::MeanRows(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        let rg = self.rg(&[a]);
        self.push(v, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        let rg = self.rg(&[a]);
        self.push(v, Op::Sigmoid(a), rg)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.rows {
            data.extend(softmax(m.row(r)));
        }
        let v = Matrix::from_vec(m.rows, m.cols, data);
        let rg = self.rg(&[a]);
        self.push(v, Op::Softmax(a), rg)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.rows {
            data.extend(log_softmax(m.row(r)));
        }
        let v = Matrix::from_vec(m.rows, m.cols, data);
        let rg = self.rg(&[a]);
        self.push(v, Op::LogSoftmax(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        let rg = self.rg(&[a]);
        self.push(v, Op::Log(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        let rg = self.rg(&[a]);
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::Sum(a), rg)
    }

    pub fn pick(&mut self, a: Var, r: usize, c: usize) -> Var {
        let s = self.value(a).get(r, c);
        let rg = self.rg(&[a]);
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::Pick(a, r, c), rg)
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, out: Var) -> Gradients {
        assert_eq!(self.value(out).shape(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Matrix>> = vec![None; out.0 + 1];
        grads[out.0] = Some(Matrix::from_vec(1, 1, vec![1.0]));
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(&node.op, &node.value, &g, &mut grads);
        }
        Gradients { grads }
    }

    /// Gradient accumulator of `v`, zero-initialized on first use; `None`
    /// for nodes that carry no gradient.
    fn slot<'g>(&self, grads: &'g mut [Option<Matrix>], v: Var) -> Option<&'g mut Matrix> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let (r, c) = self.value(v).shape();
        Some(grads[v.0].get_or_insert_with(|| Matrix::zeros(r, c)))
    }

    fn propagate(&self, op: &Op, y: &Matrix, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let zip_into = |d: &mut Matrix, f: &dyn Fn(usize) -> f64| {
            for (k, o) in d.data.iter_mut().enumerate() {
                *o += f(k);
            }
        };
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(d) = self.slot(grads, *a) {
                    // da += g b^T
                    for i in 0..g.rows {
                        for j in 0..bv.rows {
                            d.data[i * d.cols + j] += dot(g.row(i), bv.row(j));
                        }
                    }
                }
                if let Some(d) = self.slot(grads, *b) {
                    // db += a^T g
                    add_t_matmul(d, av, g);
                }
            }
            Op::MatMulT(a, b) => {
                // out = a b^T: da += g b, db += g^T a
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(d) = self.slot(grads, *a) {
                    add_matmul(d, g, bv);
                }
                if let Some(d) = self.slot(grads, *b) {
                    add_t_matmul(d, g, av);
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(d) = self.slot(grads, *v) {
                        d.add_assign(g);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(d) = self.slot(grads, *a) {
                    zip_into(d, &|k| g.data[k] * bv.data[k]);
                }
                if let Some(d) = self.slot(grads, *b) {
                    zip_into(d, &|k| g.data[k] * av.data[k]);
                }
            }
            Op::Scale(a, k) => {
                if let Some(d) = self.slot(grads, *a) {
                    zip_into(d, &|i| g.data[i] * k);
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let cols = self.value(p).cols;
                    if let Some(d) = self.slot(grads, p) {
                        for r in 0..g.rows {
                            for (o, x) in d.row_mut(r).iter_mut().zip(&g.row(r)[off..off + cols]) {
                                *o += x;
                            }
                        }
                    }
                    off += cols;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if let Some(d) = self.slot(grads, p) {
                        for (o, x) in d.data.iter_mut().zip(&g.data[off..off + n]) {
                            *o += x;
                        }
                    }
                    off += n;
                }
            }
            Op::GatherRows(t, idx) => {
                if let Some(d) = self.slot(grads, *t) {
                    for (k, &row) in idx.iter().enumerate() {
                        for (o, x) in d.row_mut(row).iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                }
            }
            Op::SliceCols(a, start, len) => {
                if let Some(d) = self.slot(grads, *a) {
                    for r in 0..g.rows {
                        for (o, x) in d.row_mut(r)[*start..start + len].iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                }
            }
            Op::Transpose(a) => {
                if let Some(d) = self.slot(grads, *a) {
                    d.add_assign(&g.transpose());
                }
            }
            Op::MeanRows(a) => {
                if let Some(d) = self.slot(grads, *a) {
                    let n = d.rows as f64;
                    for r in 0..d.rows {
                        for (o, x) in d.row_mut(r).iter_mut().zip(g.row(0)) {
                            *o += x / n;
                        }
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(d) = self.slot(grads, *a) {
                    zip_into(d, &|k| g.data[k] * (1.0 - y.data[k] * y.data[k]));
                }
            }
            Op::Sigmoid(a) => {
                if let Some(d) = self.slot(grads, *a) {
                    zip_into(d, &|k| g.data[k] * y.data[k] * (1.0 - y.data[k]));
                }
            }
            Op::Softmax(a) => {
                if let Some(d) = self.slot(grads, *a) {
                    for r in 0..y.rows {
                        let gy = dot(g.row(r), y.row(r));
                        for ((o, gv), yv) in d.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *o += yv * (gv - gy);
                        }
                    }
                }
            }
            Op::LogSoftmax(a) => {
                if let Some(d) = self.slot(grads, *a) {
                    for r in 0..y.rows {
                        let gs: f64 = g.row(r).iter().sum();
                        for ((o, gv), yv) in d.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *o += gv - yv.exp() * gs;
                        }
                    }
                }
            }
            Op::Log(a) => {
                let x = self.value(*a);
                if let Some(d) = self.slot(grads, *a) {
                    zip_into(d, &|k| g.data[k] / x.data[k]);
                }
            }
            Op::Sum(a) => {
                if let Some(d) = self.slot(grads, *a) {
                    d.data.iter_mut().for_each(|o| *o += g.data[0]);
                }
            }
            Op::Pick(a, r, c) => {
                if let Some(d) = self.slot(grads, *a) {
                    let cols = d.cols;
                    d.data[r * cols + c] += g.data[0];
                }
            }
        }
    }
}

/// `out += a * b`.
fn add_matmul(out: &mut Matrix, a: &Matrix, b: &Matrix) {
    for i in 0..a.rows {
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let x = a.data[i * a.cols + k];
            if x == 0.0 {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(b.row(k)) {
                *o += x * bv;
            }
        }
    }
}

/// `out += a^T * b`.
fn add_t_matmul(out: &mut Matrix, a: &Matrix, b: &Matrix) {
    for k in 0..a.rows {
        let brow = b.row(k);
        for (i, &x) in a.row(k).iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (o, &bv) in out.data[i * b.cols..(i + 1) * b.cols].iter_mut().zip(brow) {
                *o += x * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central differences of `f` with respect to every entry of `x`.
    fn numeric_grad(x: &Matrix, f: &dyn Fn(&mut Tape, Var) -> Var) -> Matrix {
        let h = 1e-6;
        let mut out = Matrix::zeros(x.rows, x.cols);
        for i in 0..x.len() {
            let eval = |delta: f64| {
                let mut xp = x.clone();
                xp.data[i] += delta;
                let mut t = Tape::new();
                let v = t.param(xp);
                let y = f(&mut t, v);
                t.scalar(y)
            };
            out.data[i] = (eval(h) - eval(-h)) / (2.0 * h);
        }
        out
    }

    fn check(x: Matrix, f: &dyn Fn(&mut Tape, Var) -> Var) {
        let mut t = Tape::new();
        let v = t.param(x.clone());
        let y = f(&mut t, v);
        let g = t.backward(y);
        let analytic = g.get(v).cloned().unwrap_or_else(|| Matrix::zeros(x.rows, x.cols));
        let numeric = numeric_grad(&x, f);
        for (a, n) in analytic.data.iter().zip(&numeric.data) {
            assert!((a - n).abs() <= 1e-6 * (1.0 + n.abs()), "analytic {a} vs numeric {n}");
        }
    }

    fn sample(rows: usize, cols: usize, seed: u64) -> Matrix {
        // Small deterministic pseudo-random values in (-1, 1).
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let data = (0..rows * cols)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        Matrix::from_vec(rows, cols, data)
    }

    #[test]
    fn matmul_family() {
        let b = sample(3, 4, 2);
        let c = sample(4, 3, 5);
        check(sample(2, 3, 1), &|t, x| {
            let bv = t.constant(b.clone());
            let y = t.matmul(x, bv);
            let y = t.tanh(y);
            t.sum(y)
        });
        check(sample(2, 3, 3), &|t, x| {
            let cv = t.constant(c.clone());
            let y = t.matmul_t(cv, x);
            let y = t.sigmoid(y);
            t.sum(y)
        });
        check(sample(2, 3, 4), &|t, x| {
            let y = t.matmul_t(x, x);
            let y = t.transpose(y);
            let y = t.scale(y, 0.7);
            t.pick(y, 1, 0)
        });
    }

    #[test]
    fn shaping_ops() {
        check(sample(3, 4, 7), &|t, x| {
            let a = t.slice_cols(x, 1, 2);
            let b = t.gather_rows(x, &[2, 0, 2]);
            let b = t.slice_cols(b, 0, 2);
            let c = t.concat_rows(&[a, b]);
            let d = t.concat_cols(&[c, c]);
            let e = t.mean_rows(d);
            let f = t.mul(e, e);
            t.sum(f)
        });
    }

    #[test]
    fn softmax_family() {
        let w = sample(1, 5, 11);
        check(sample(2, 5, 9), &|t, x| {
            let p = t.softmax(x);
            let wv = t.constant(w.clone());
            let wv = t.concat_rows(&[wv, wv]);
            let y = t.mul(p, wv);
            t.sum(y)
        });
        check(sample(1, 5, 10), &|t, x| {
            let p = t.log_softmax(x);
            t.pick(p, 0, 3)
        });
        check(sample(1, 4, 12), &|t, x| {
            let p = t.softmax(x);
            let l = t.log(p);
            let a = t.add(l, x);
            t.pick(a, 0, 1)
        });
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(sample(2, 2, 1));
        let p = t.param(sample(2, 2, 2));
        let y = t.mul(c, p);
        let s = t.sum(y);
        let g = t.backward(s);
        assert!(g.get(c).is_none());
        assert_eq!(g.get(p).unwrap(), t.value(c));
    }

    #[test]
    fn softmax_is_stable() {
        let p = softmax(&[1000.0, 1000.0, -1000.0]);
        assert!((p[0] - 0.5).abs() < 1e-12 && p[2] == 0.0);
    }
}
