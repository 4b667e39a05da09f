//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! [`Graph::backward`] walks the nodes in reverse and accumulates adjoints.
//! Nodes created from constants (data, noise, masks) never receive
//! gradients, which keeps the backward pass through input layers cheap.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `[n×m] + [1×m]`, broadcasting the row.
    AddRow(Var, Var),
    /// `[n×m] ⊙ [1×m]`, broadcasting the row.
    MulRow(Var, Var),
    /// `[n×m] ⊙ [n×1]`, broadcasting the column.
    MulCol(Var, Var),
    /// Elementwise product with a constant tensor of the same shape.
    MulConst(Var, Tensor),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Exp(Var),
    Log(Var),
    XLogX(Var),
    LeakyRelu(Var, f64),
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        lags: usize,
        dilation: usize,
    },
    LogSoftmax(Var),
    Softmax(Var),
    Sum(Var),
    RowSum(Var),
    SliceRows(Var, usize),
    Column(Var, usize),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Adjoints produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`, or `None` when `v` does not
    /// influence the root or was created as a constant.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A differentiable leaf (a trainable parameter).
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Value of a `[1×1]` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        debug_assert_eq!(t.shape(), (1, 1));
        t.data()[0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::Mul(a, b), ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (n, m) = self.shape(a);
        assert_eq!(self.shape(row), (1, m), "add_row expects a [1×{m}] row");
        let mut out = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..n {
            for (o, x) in out.row_mut(i).iter_mut().zip(&r) {
                *o += x;
            }
        }
        let ng = self.ng(a) || self.ng(row);
        self.push(out, Op::AddRow(a, row), ng)
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (n, m) = self.shape(a);
        assert_eq!(self.shape(row), (1, m), "mul_row expects a [1×{m}] row");
        let mut out = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..n {
            for (o, x) in out.row_mut(i).iter_mut().zip(&r) {
                *o *= x;
            }
        }
        let ng = self.ng(a) || self.ng(row);
        self.push(out, Op::MulRow(a, row), ng)
    }

    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (n, _) = self.shape(a);
        assert_eq!(self.shape(col), (n, 1), "mul_col expects a [{n}×1] column");
        let mut out = self.value(a).clone();
        let c = self.value(col).data().to_vec();
        for (i, &s) in c.iter().enumerate() {
            for o in out.row_mut(i) {
                *o *= s;
            }
        }
        let ng = self.ng(a) || self.ng(col);
        self.push(out, Op::MulCol(a, col), ng)
    }

    pub fn mul_const(&mut self, a: Var, mask: Tensor) -> Var {
        assert_eq!(self.shape(a), mask.shape(), "mul_const shape");
        let out = self.value(a).zip_map(&mask, |x, y| x * y);
        let ng = self.ng(a);
        self.push(out, Op::MulConst(a, mask), ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, c), ng)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x + c);
        let ng = self.ng(a);
        self.push(out, Op::AddScalar(a), ng)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::MatMul(a, b), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(math::exp);
        let ng = self.ng(a);
        self.push(out, Op::Exp(a), ng)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(math::ln);
        let ng = self.ng(a);
        self.push(out, Op::Log(a), ng)
    }

    /// Elementwise `x ln x` with `0 ln 0 = 0` and zero gradient at `x ≤ 0`.
    pub fn xlogx(&mut self, a: Var) -> Var {
        let out = self.value(a).map(math::xlogx);
        let ng = self.ng(a);
        self.push(out, Op::XLogX(a), ng)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self
            .value(a)
            .map(|x| if x > 0.0 { x } else { slope * x });
        let ng = self.ng(a);
        self.push(out, Op::LeakyRelu(a, slope), ng)
    }

    /// Non-causal dilated convolution over time with zero padding.
    ///
    /// `x` is `[T × C_in]`, `w` is `[(2·lags+1)·C_in × C_out]` with tap `j`
    /// reading frame `t + (j − lags)·dilation`, `b` is `[1 × C_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, lags: usize, dilation: usize) -> Var {
        let out = conv1d_forward(self.value(x), self.value(w), self.value(b), lags, dilation);
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(
            out,
            Op::Conv1d {
                x,
                w,
                b,
                lags,
                dilation,
            },
            ng,
        )
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let mut out = v.clone();
        for i in 0..v.rows() {
            let lse = math::log_sum_exp(v.row(i));
            for o in out.row_mut(i) {
                *o -= lse;
            }
        }
        let ng = self.ng(a);
        self.push(out, Op::LogSoftmax(a), ng)
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let mut out = v.clone();
        for i in 0..v.rows() {
            let lse = math::log_sum_exp(v.row(i));
            for o in out.row_mut(i) {
                *o = math::exp(*o - lse);
            }
        }
        let ng = self.ng(a);
        self.push(out, Op::Softmax(a), ng)
    }

    /// Sum of all entries as a `[1×1]` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    /// Per-row sums as a `[n×1]` column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let sums: Vec<f64> = (0..v.rows()).map(|i| v.row(i).iter().sum()).collect();
        let ng = self.ng(a);
        self.push(Tensor::column_vector(&sums), Op::RowSum(a), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).slice_rows(start, end);
        let ng = self.ng(a);
        self.push(out, Op::SliceRows(a, start), ng)
    }

    pub fn column(&mut self, a: Var, c: usize) -> Var {
        let out = Tensor::column_vector(&self.value(a).column(c));
        let ng = self.ng(a);
        self.push(out, Op::Column(a, c), ng)
    }

    /// Sum of several same-shaped nodes.
    pub fn add_all(&mut self, terms: &[Var]) -> Var {
        let mut acc = terms[0];
        for &t in &terms[1..] {
            acc = self.add(acc, t);
        }
        acc
    }

    /// Reverse pass from a `[1×1]` root.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.shape(root), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let acc = |v: Var, d: Tensor, grads: &mut [Option<Tensor>]| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&d),
                slot @ None => *slot = Some(d),
            }
        };
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(a, g.clone(), grads);
                acc(b, g.clone(), grads);
            }
            Op::Sub(a, b) => {
                acc(a, g.clone(), grads);
                acc(b, g.map(|x| -x), grads);
            }
            Op::Mul(a, b) => {
                if self.ng(a) {
                    acc(a, g.zip_map(self.value(b), |x, y| x * y), grads);
                }
                if self.ng(b) {
                    acc(b, g.zip_map(self.value(a), |x, y| x * y), grads);
                }
            }
            Op::AddRow(a, row) => {
                acc(a, g.clone(), grads);
                if self.ng(row) {
                    acc(row, column_sums(g), grads);
                }
            }
            Op::MulRow(a, row) => {
                let r = self.value(row);
                if self.ng(a) {
                    let mut d = g.clone();
                    for i in 0..d.rows() {
                        for (o, x) in d.row_mut(i).iter_mut().zip(r.data()) {
                            *o *= x;
                        }
                    }
                    acc(a, d, grads);
                }
                if self.ng(row) {
                    acc(row, column_sums(&g.zip_map(self.value(a), |x, y| x * y)), grads);
                }
            }
            Op::MulCol(a, col) => {
                let c = self.value(col);
                if self.ng(a) {
                    let mut d = g.clone();
                    for (i, &s) in c.data().iter().enumerate() {
                        for o in d.row_mut(i) {
                            *o *= s;
                        }
                    }
                    acc(a, d, grads);
                }
                if self.ng(col) {
                    let prod = g.zip_map(self.value(a), |x, y| x * y);
                    let sums: Vec<f64> =
                        (0..prod.rows()).map(|i| prod.row(i).iter().sum()).collect();
                    acc(col, Tensor::column_vector(&sums), grads);
                }
            }
            Op::MulConst(a, ref mask) => acc(a, g.zip_map(mask, |x, y| x * y), grads),
            Op::Scale(a, c) => acc(a, g.map(|x| x * c), grads),
            Op::AddScalar(a) => acc(a, g.clone(), grads),
            Op::MatMul(a, b) => {
                if self.ng(a) {
                    acc(a, g.matmul_nt(self.value(b)), grads);
                }
                if self.ng(b) {
                    acc(b, self.value(a).matmul_tn(g), grads);
                }
            }
            Op::Exp(a) => acc(a, g.zip_map(out, |x, y| x * y), grads),
            Op::Log(a) => acc(a, g.zip_map(self.value(a), |x, y| x / y), grads),
            Op::XLogX(a) => acc(
                a,
                g.zip_map(self.value(a), |x, y| {
                    if y > 0.0 {
                        x * (math::ln(y) + 1.0)
                    } else {
                        0.0
                    }
                }),
                grads,
            ),
            Op::LeakyRelu(a, slope) => acc(
                a,
                g.zip_map(self.value(a), |x, y| if y > 0.0 { x } else { slope * x }),
                grads,
            ),
            Op::Conv1d {
                x,
                w,
                b,
                lags,
                dilation,
            } => {
                let (dx, dw) = conv1d_backward(
                    self.value(x),
                    self.value(w),
                    g,
                    lags,
                    dilation,
                    self.ng(x),
                    self.ng(w),
                );
                if let Some(dx) = dx {
                    acc(x, dx, grads);
                }
                if let Some(dw) = dw {
                    acc(w, dw, grads);
                }
                if self.ng(b) {
                    acc(b, column_sums(g), grads);
                }
            }
            Op::LogSoftmax(a) => {
                let mut d = g.clone();
                for i in 0..d.rows() {
                    let s: f64 = g.row(i).iter().sum();
                    for (o, &y) in d.row_mut(i).iter_mut().zip(out.row(i)) {
                        *o -= math::exp(y) * s;
                    }
                }
                acc(a, d, grads);
            }
            Op::Softmax(a) => {
                let mut d = g.clone();
                for i in 0..d.rows() {
                    let s: f64 = g.row(i).iter().zip(out.row(i)).map(|(x, y)| x * y).sum();
                    for (o, &y) in d.row_mut(i).iter_mut().zip(out.row(i)) {
                        *o = y * (*o - s);
                    }
                }
                acc(a, d, grads);
            }
            Op::Sum(a) => {
                let (n, m) = self.shape(a);
                acc(a, Tensor::full(n, m, g.data()[0]), grads);
            }
            Op::RowSum(a) => {
                let (n, m) = self.shape(a);
                let mut d = Tensor::zeros(n, m);
                for i in 0..n {
                    let s = g.data()[i];
                    for o in d.row_mut(i) {
                        *o = s;
                    }
                }
                acc(a, d, grads);
            }
            Op::SliceRows(a, start) => {
                let (n, m) = self.shape(a);
                let mut d = Tensor::zeros(n, m);
                d.data_mut()[start * m..start * m + g.len()].copy_from_slice(g.data());
                acc(a, d, grads);
            }
            Op::Column(a, c) => {
                let (n, m) = self.shape(a);
                let mut d = Tensor::zeros(n, m);
                for i in 0..n {
                    d.set(i, c, g.data()[i]);
                }
                acc(a, d, grads);
            }
        }
    }
}

fn column_sums(g: &Tensor) -> Tensor {
    let mut s = Tensor::zeros(1, g.cols());
    for i in 0..g.rows() {
        for (o, x) in s.data_mut().iter_mut().zip(g.row(i)) {
            *o += x;
        }
    }
    s
}

#[inline]
fn tap_source(t: usize, tap: usize, lags: usize, dilation: usize, len: usize) -> Option<usize> {
    let s = t as isize + (tap as isize - lags as isize) * dilation as isize;
    (s >= 0 && (s as usize) < len).then_some(s as usize)
}

pub(crate) fn conv1d_forward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    lags: usize,
    dilation: usize,
) -> Tensor {
    let (t_len, cin) = x.shape();
    let taps = 2 * lags + 1;
    assert_eq!(w.rows(), taps * cin, "conv1d weight rows");
    let cout = w.cols();
    assert_eq!(b.shape(), (1, cout), "conv1d bias shape");
    let mut out = Tensor::zeros(t_len, cout);
    for t in 0..t_len {
        let orow = out.row_mut(t);
        orow.copy_from_slice(b.data());
        for tap in 0..taps {
            let Some(s) = tap_source(t, tap, lags, dilation, t_len) else {
                continue;
            };
            let xrow = x.row(s);
            for (ci, &a) in xrow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let wrow = w.row(tap * cin + ci);
                for (o, &wv) in orow.iter_mut().zip(wrow) {
                    *o += a * wv;
                }
            }
        }
    }
    out
}

fn conv1d_backward(
    x: &Tensor,
    w: &Tensor,
    g: &Tensor,
    lags: usize,
    dilation: usize,
    want_dx: bool,
    want_dw: bool,
) -> (Option<Tensor>, Option<Tensor>) {
    let (t_len, cin) = x.shape();
    let taps = 2 * lags + 1;
    let mut dx = want_dx.then(|| Tensor::zeros(t_len, cin));
    let mut dw = want_dw.then(|| Tensor::zeros(w.rows(), w.cols()));
    for t in 0..t_len {
        let grow = g.row(t);
        for tap in 0..taps {
            let Some(s) = tap_source(t, tap, lags, dilation, t_len) else {
                continue;
            };
            if let Some(dw) = dw.as_mut() {
                let xrow = x.row(s);
                for (ci, &a) in xrow.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    let drow = dw.row_mut(tap * cin + ci);
                    for (o, &gv) in drow.iter_mut().zip(grow) {
                        *o += a * gv;
                    }
                }
            }
            if let Some(dx) = dx.as_mut() {
                let dxrow = dx.row_mut(s);
                for (ci, o) in dxrow.iter_mut().enumerate() {
                    let wrow = w.row(tap * cin + ci);
                    *o += wrow.iter().zip(grow).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
    }
    (dx, dw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(rows, cols, data).unwrap()
    }

    /// Checks every input coordinate of `f` against central differences.
    fn check(inputs: &[Tensor], f: impl Fn(&mut Graph, &[Var]) -> Var) {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let root = f(&mut g, &vars);
        let grads = g.backward(root);
        let eval = |ins: &[Tensor]| {
            let mut g = Graph::new();
            let vars: Vec<Var> = ins.iter().map(|t| g.param(t.clone())).collect();
            let r = f(&mut g, &vars);
            g.scalar(r)
        };
        let h = 1e-6;
        for (i, t) in inputs.iter().enumerate() {
            let analytic = grads.get(vars[i]).cloned().unwrap_or(Tensor::zeros(t.rows(), t.cols()));
            for j in 0..t.len() {
                let mut plus = inputs.to_vec();
                plus[i].data_mut()[j] += h;
                let mut minus = inputs.to_vec();
                minus[i].data_mut()[j] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = analytic.data()[j];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
                assert!(err < 1e-6, "input {i} coord {j}: analytic {a} numeric {numeric}");
            }
        }
    }

    #[test]
    fn elementwise_and_broadcast_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(4, 3, &mut rng);
        let b = random(4, 3, &mut rng);
        let row = random(1, 3, &mut rng);
        let col = random(4, 1, &mut rng);
        check(&[a, b, row, col], |g, v| {
            let s = g.add(v[0], v[1]);
            let p = g.mul(s, v[1]);
            let r = g.add_row(p, v[2]);
            let m = g.mul_row(r, v[2]);
            let c = g.mul_col(m, v[3]);
            let e = g.exp(c);
            let d = g.sub(e, v[0]);
            let l = g.leaky_relu(d, 0.01);
            let sc = g.scale(l, 0.7);
            let sl = g.slice_rows(sc, 1, 3);
            let cl = g.column(sl, 2);
            let rs = g.row_sum(sl);
            let q = g.mul(cl, rs);
            g.sum(q)
        });
    }

    #[test]
    fn softmax_log_and_entropy_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(5, 4, &mut rng);
        let w = random(4, 4, &mut rng);
        check(&[a, w], |g, v| {
            let z = g.matmul(v[0], v[1]);
            let p = g.softmax(z);
            let lp = g.log_softmax(z);
            let h = g.xlogx(p);
            let pl = g.mul(p, lp);
            let lg = g.log(p);
            let t = g.add(h, pl);
            let t = g.add(t, lg);
            g.sum(t)
        });
    }

    #[test]
    fn conv1d_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (lags, dil, cin, cout) = (2, 2, 3, 2);
        let x = random(11, cin, &mut rng);
        let w = random((2 * lags + 1) * cin, cout, &mut rng);
        let b = random(1, cout, &mut rng);
        check(&[x, w, b], |g, v| {
            let y = g.conv1d(v[0], v[1], v[2], lags, dil);
            let y2 = g.square(y);
            g.sum(y2)
        });
    }

    #[test]
    fn conv1d_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (lags, dil, cin, cout) = (1, 3, 2, 2);
        let x = random(9, cin, &mut rng);
        let w = random((2 * lags + 1) * cin, cout, &mut rng);
        let b = random(1, cout, &mut rng);
        let y = conv1d_forward(&x, &w, &b, lags, dil);
        for t in 0..9isize {
            for co in 0..cout {
                let mut s = b.get(0, co);
                for tap in 0..3isize {
                    let src = t + (tap - 1) * 3;
                    if (0..9).contains(&src) {
                        for ci in 0..cin {
                            s += x.get(src as usize, ci) * w.get(tap as usize * cin + ci, co);
                        }
                    }
                }
                assert!((s - y.get(t as usize, co)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::scalar(2.0));
        let p = g.param(Tensor::scalar(3.0));
        let y = g.mul(c, p);
        let grads = g.backward(y);
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(p).unwrap().data(), &[2.0]);
    }
}
