//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Every operation appends a node holding its value and the recipe for its
//! backward pass. Values are kept in standard (row-major) layout.

use std::rc::Rc;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayD, ArrayView2, Axis, IxDyn};

use crate::stzinb::dist::Zinb;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Relu(Var),
    Softplus(Var),
    MatMul(Var, Var),
    NodeMix(Var, Rc<Array2<f64>>),
    TemporalConv { x: Var, w: Var, kt: usize },
    Reshape(Var),
    Permute(Var, Vec<usize>),
    BatchMatMul(Var, Var),
    SoftmaxLast(Var),
    MeanAxis(Var, usize),
    DotConst(Var, Rc<ArrayD<f64>>),
    HuberMean { pred: Var, target: Rc<ArrayD<f64>>, delta: f64 },
    ZinbNll { n: Var, p: Var, pi: Var, y: Rc<ArrayD<f64>> },
}

#[derive(Debug)]
struct Node {
    value: ArrayD<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of leaf nodes, indexed by [`Var`]; `None` where the loss does
/// not depend on the leaf.
#[derive(Debug)]
pub struct Grads(Vec<Option<ArrayD<f64>>>);

impl Grads {
    pub fn get(&self, v: Var) -> Option<&ArrayD<f64>> {
        self.0[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<ArrayD<f64>> {
        self.0[v.0].take()
    }
}

fn standard(a: ArrayD<f64>) -> ArrayD<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// Sums `g` down to `shape` after numpy-style broadcasting.
fn reduce_to(mut g: ArrayD<f64>, shape: &[usize]) -> ArrayD<f64> {
    while g.ndim() > shape.len() {
        g = g.sum_axis(Axis(0));
    }
    for (ax, &s) in shape.iter().enumerate() {
        if s == 1 && g.shape()[ax] != 1 {
            g = g.sum_axis(Axis(ax)).insert_axis(Axis(ax));
        }
    }
    g
}

fn as_matrix(a: &ArrayD<f64>) -> ArrayView2<'_, f64> {
    let k = *a.shape().last().expect("tensor has at least one axis");
    let rows = if k == 0 { 0 } else { a.len() / k };
    a.view()
        .into_shape_with_order((rows, k))
        .expect("standard layout")
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `y[.., i, c] = sum_j m[i, j] x[.., j, c]` for x of shape `[.., N, C]`.
fn node_mix(m: &Array2<f64>, x: &ArrayD<f64>) -> ArrayD<f64> {
    let sh = x.shape().to_vec();
    let nd = sh.len();
    let (n, c) = (sh[nd - 2], sh[nd - 1]);
    let outer = x.len() / (n * c).max(1);
    // One GEMM over [N, outer * C] instead of many small ones.
    let x3 = x.view().into_shape_with_order((outer, n, c)).expect("standard layout");
    let xt = x3
        .permuted_axes([1, 0, 2])
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((n, outer * c))
        .expect("standard layout");
    let y = m
        .dot(&xt)
        .into_shape_with_order((m.nrows(), outer, c))
        .expect("standard layout");
    let out = y.permuted_axes([1, 0, 2]).as_standard_layout().into_owned();
    let mut osh = sh;
    osh[nd - 2] = m.nrows();
    out.into_shape_with_order(IxDyn(&osh)).expect("contiguous")
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

    fn push(&mut self, value: ArrayD<f64>, op: Op) -> Var {
        self.nodes.push(Node {
            value: standard(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: ArrayD<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &ArrayD<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        assert_eq!(val.len(), 1, "not a scalar");
        val.iter().next().copied().unwrap_or(f64::NAN)
    }

    fn v(&self, v: Var) -> &ArrayD<f64> {
        &self.nodes[v.0].value
    }

    /// Broadcasting sum.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.v(a) + self.v(b);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.v(a) - self.v(b);
        self.push(out, Op::Sub(a, b))
    }

    /// Broadcasting elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.v(a) * self.v(b);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.v(a) * s;
        self.push(out, Op::Scale(a, s))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.v(a).mapv(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.v(a).mapv(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.v(a).mapv(softplus);
        self.push(out, Op::Softplus(a))
    }

    /// Contracts the last axis of `x` with the rows of the matrix `w`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Var {
        let (xv, wv) = (self.v(x), self.v(w));
        assert_eq!(wv.ndim(), 2, "weight must be a matrix");
        let k = *xv.shape().last().expect("non-scalar input");
        assert_eq!(k, wv.shape()[0], "matmul inner dimension");
        let w2 = wv.view().into_dimensionality::<ndarray::Ix2>().expect("2-d");
        let out = as_matrix(xv).dot(&w2);
        let mut sh = xv.shape().to_vec();
        *sh.last_mut().unwrap() = w2.ncols();
        let out = standard(out.into_dyn()).into_shape_with_order(IxDyn(&sh)).expect("contiguous");
        self.push(out, Op::MatMul(x, w))
    }

    /// Applies a fixed `N x N` operator along the node axis (second to last).
    pub fn node_mix(&mut self, x: Var, m: Rc<Array2<f64>>) -> Var {
        let out = node_mix(&m, self.v(x));
        self.push(out, Op::NodeMix(x, m))
    }

    /// Valid convolution along axis 1 of `x: [B, T, N, C]` with
    /// `w: [kt * C, Co]` (tap-major rows), giving `[B, T - kt + 1, N, Co]`.
    pub fn temporal_conv(&mut self, x: Var, w: Var, kt: usize) -> Var {
        let (xv, wv) = (self.v(x), self.v(w));
        let sh = xv.shape();
        assert_eq!(sh.len(), 4, "temporal conv expects [B, T, N, C]");
        let (b, t, n, c) = (sh[0], sh[1], sh[2], sh[3]);
        assert!(t >= kt, "time axis {t} shorter than kernel {kt}");
        assert_eq!(wv.shape()[0], kt * c, "kernel rows");
        let co = wv.shape()[1];
        let to = t - kt + 1;
        let w2 = wv.view().into_dimensionality::<ndarray::Ix2>().expect("2-d");
        let mut out = Array2::<f64>::zeros((b * to * n, co));
        for s in 0..kt {
            let xs = xv
                .slice_each_axis(|ax| match ax.axis.index() {
                    1 => ndarray::Slice::from(s..s + to),
                    _ => ndarray::Slice::from(..),
                })
                .as_standard_layout()
                .into_owned()
                .into_shape_with_order((b * to * n, c))
                .expect("contiguous");
            let ws = w2.slice(ndarray::s![s * c..(s + 1) * c, ..]);
            general_mat_mul(1.0, &xs, &ws, 1.0, &mut out);
        }
        let out = out.into_shape_with_order(IxDyn(&[b, to, n, co])).expect("contiguous");
        self.push(out, Op::TemporalConv { x, w, kt })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let out = self
            .v(x)
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape preserves element count");
        self.push(out, Op::Reshape(x))
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Var {
        let out = self.v(x).clone().permuted_axes(IxDyn(axes));
        self.push(out, Op::Permute(x, axes.to_vec()))
    }

    /// `[G, m, k] x [G, k, n] -> [G, m, n]`.
    pub fn batch_matmul(&mut self, a: Var, b: Var) -> Var {
        let out = bmm(self.v(a), self.v(b), false, false);
        self.push(out, Op::BatchMatMul(a, b))
    }

    pub fn softmax_last(&mut self, x: Var) -> Var {
        let mut out = self.v(x).clone();
        let k = *out.shape().last().expect("non-scalar");
        for mut row in out
            .view_mut()
            .into_shape_with_order((self.v(x).len() / k, k))
            .expect("standard layout")
            .rows_mut()
        {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            row /= s;
        }
        self.push(out, Op::SoftmaxLast(x))
    }

    /// Mean over `axis`, removing it.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Var {
        let out = self.v(x).mean_axis(Axis(axis)).expect("non-empty axis");
        self.push(out, Op::MeanAxis(x, axis))
    }

    /// `sum(x * c)` for a constant tensor `c` of the same shape.
    pub fn dot_const(&mut self, x: Var, c: Rc<ArrayD<f64>>) -> Var {
        assert_eq!(self.v(x).shape(), c.shape());
        let s: f64 = self.v(x).iter().zip(c.iter()).map(|(a, b)| a * b).sum();
        self.push(ArrayD::from_elem(IxDyn(&[]), s), Op::DotConst(x, c))
    }

    /// Mean Huber loss with threshold `delta`.
    pub fn huber_mean(&mut self, pred: Var, target: Rc<ArrayD<f64>>, delta: f64) -> Var {
        let p = self.v(pred);
        assert_eq!(p.shape(), target.shape());
        let total: f64 = p
            .iter()
            .zip(target.iter())
            .map(|(a, y)| huber(y - a, delta))
            .sum();
        let out = total / p.len() as f64;
        self.push(
            ArrayD::from_elem(IxDyn(&[]), out),
            Op::HuberMean {
                pred,
                target,
                delta,
            },
        )
    }

    /// Mean ZINB negative log-likelihood of integer targets `y`. Parameters
    /// are floored first; gradients vanish where a floor is active.
    pub fn zinb_nll(&mut self, n: Var, p: Var, pi: Var, y: Rc<ArrayD<f64>>) -> Var {
        let (nv, pv, piv) = (self.v(n), self.v(p), self.v(pi));
        assert!(nv.shape() == y.shape() && pv.shape() == y.shape() && piv.shape() == y.shape());
        let mut total = 0.0;
        for (((a, b), c), t) in nv.iter().zip(pv.iter()).zip(piv.iter()).zip(y.iter()) {
            total += Zinb::floored(*a, *b, *c).nll(*t as u64);
        }
        let out = total / y.len() as f64;
        self.push(ArrayD::from_elem(IxDyn(&[]), out), Op::ZinbNll { n, p, pi, y })
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Grads {
        let mut g: Vec<Option<ArrayD<f64>>> = vec![None; self.nodes.len()];
        g[loss.0] = Some(ArrayD::ones(self.nodes[loss.0].value.raw_dim()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gi) = g[i].take().map(standard) else { continue };
            let mut acc = |v: Var, d: ArrayD<f64>| match &mut g[v.0] {
                Some(existing) => *existing += &d,
                slot @ None => *slot = Some(d),
            };
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    acc(*a, reduce_to(gi.clone(), self.v(*a).shape()));
                    acc(*b, reduce_to(gi, self.v(*b).shape()));
                }
                Op::Sub(a, b) => {
                    acc(*a, reduce_to(gi.clone(), self.v(*a).shape()));
                    acc(*b, reduce_to(-gi, self.v(*b).shape()));
                }
                Op::Mul(a, b) => {
                    let ga = reduce_to(&gi * self.v(*b), self.v(*a).shape());
                    let gb = reduce_to(&gi * self.v(*a), self.v(*b).shape());
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Scale(a, s) => acc(*a, gi * *s),
                Op::Sigmoid(a) => {
                    let d = ndarray::Zip::from(&gi)
                        .and(&node.value)
                        .map_collect(|g, s| g * s * (1.0 - s));
                    acc(*a, d);
                }
                Op::Relu(a) => {
                    let d = ndarray::Zip::from(&gi)
                        .and(self.v(*a))
                        .map_collect(|g, x| if *x > 0.0 { *g } else { 0.0 });
                    acc(*a, d);
                }
                Op::Softplus(a) => {
                    let d = ndarray::Zip::from(&gi)
                        .and(self.v(*a))
                        .map_collect(|g, x| g * sigmoid(*x));
                    acc(*a, d);
                }
                Op::MatMul(x, w) => {
                    let xv = self.v(*x);
                    let w2 = self.v(*w).view().into_dimensionality::<ndarray::Ix2>().unwrap();
                    let g2 = as_matrix(&gi);
                    let gx = standard(g2.dot(&w2.t()).into_dyn())
                        .into_shape_with_order(IxDyn(xv.shape()))
                        .expect("contiguous");
                    let gw = as_matrix(xv).t().dot(&g2).into_dyn();
                    acc(*x, gx);
                    acc(*w, gw);
                }
                Op::NodeMix(x, m) => {
                    let mt = m.t().to_owned();
                    acc(*x, node_mix(&mt, &gi));
                }
                Op::TemporalConv { x, w, kt } => {
                    let (xv, wv) = (self.v(*x), self.v(*w));
                    let sh = xv.shape();
                    let (b, t, n, c) = (sh[0], sh[1], sh[2], sh[3]);
                    let co = wv.shape()[1];
                    let to = t - kt + 1;
                    let w2 = wv.view().into_dimensionality::<ndarray::Ix2>().unwrap();
                    let g2 = gi.view().into_shape_with_order((b * to * n, co)).unwrap();
                    let mut gx = ArrayD::<f64>::zeros(xv.raw_dim());
                    let mut gw = Array2::<f64>::zeros((kt * c, co));
                    for s in 0..*kt {
                        let win = |ax: ndarray::AxisDescription| match ax.axis.index() {
                            1 => ndarray::Slice::from(s..s + to),
                            _ => ndarray::Slice::from(..),
                        };
                        let xs = xv
                            .slice_each_axis(win)
                            .as_standard_layout()
                            .into_owned()
                            .into_shape_with_order((b * to * n, c))
                            .unwrap();
                        let ws = w2.slice(ndarray::s![s * c..(s + 1) * c, ..]);
                        general_mat_mul(
                            1.0,
                            &xs.t(),
                            &g2,
                            0.0,
                            &mut gw.slice_mut(ndarray::s![s * c..(s + 1) * c, ..]),
                        );
                        let dxs = standard(g2.dot(&ws.t()).into_dyn()).into_shape_with_order(IxDyn(&[b, to, n, c])).unwrap();
                        let mut dst = gx.slice_each_axis_mut(win);
                        dst += &dxs;
                    }
                    acc(*x, gx);
                    acc(*w, gw.into_dyn());
                }
                Op::Reshape(x) => {
                    let sh = self.v(*x).shape().to_vec();
                    acc(*x, gi.into_shape_with_order(IxDyn(&sh)).expect("contiguous"));
                }
                Op::Permute(x, axes) => {
                    let mut inv = vec![0; axes.len()];
                    for (i, &a) in axes.iter().enumerate() {
                        inv[a] = i;
                    }
                    acc(*x, standard(gi.permuted_axes(IxDyn(&inv))));
                }
                Op::BatchMatMul(a, b) => {
                    let ga = bmm(&gi, self.v(*b), false, true);
                    let gb = bmm(self.v(*a), &gi, true, false);
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::SoftmaxLast(x) => {
                    let s = &node.value;
                    let k = *s.shape().last().unwrap();
                    let rows = s.len() / k;
                    let s2 = s.view().into_shape_with_order((rows, k)).unwrap();
                    let g2 = gi.view().into_shape_with_order((rows, k)).unwrap();
                    let mut d = Array2::<f64>::zeros((rows, k));
                    for r in 0..rows {
                        let dot: f64 = (0..k).map(|j| g2[[r, j]] * s2[[r, j]]).sum();
                        for j in 0..k {
                            d[[r, j]] = s2[[r, j]] * (g2[[r, j]] - dot);
                        }
                    }
                    acc(*x, d.into_shape_with_order(IxDyn(s.shape())).unwrap());
                }
                Op::MeanAxis(x, axis) => {
                    let xv = self.v(*x);
                    let len = xv.shape()[*axis] as f64;
                    let d = (gi / len).insert_axis(Axis(*axis));
                    let d = d.broadcast(xv.raw_dim()).expect("broadcast").to_owned();
                    acc(*x, d);
                }
                Op::DotConst(x, c) => {
                    let s = gi.iter().next().copied().unwrap_or(0.0);
                    acc(*x, c.as_ref() * s);
                }
                Op::HuberMean {
                    pred,
                    target,
                    delta,
                } => {
                    let s = gi.iter().next().copied().unwrap_or(0.0);
                    let pv = self.v(*pred);
                    let scale = s / pv.len() as f64;
                    let d = ndarray::Zip::from(pv)
                        .and(target.as_ref())
                        .map_collect(|a, y| (a - y).clamp(-*delta, *delta) * scale);
                    acc(*pred, d);
                }
                Op::ZinbNll { n, p, pi, y } => {
                    let s = gi.iter().next().copied().unwrap_or(0.0);
                    let scale = s / y.len() as f64;
                    let (nv, pv, piv) = (self.v(*n), self.v(*p), self.v(*pi));
                    let mut dn = ArrayD::<f64>::zeros(nv.raw_dim());
                    let mut dp = dn.clone();
                    let mut dpi = dn.clone();
                    for (idx, t) in y.indexed_iter() {
                        let (a, b, c) = (nv[&idx], pv[&idx], piv[&idx]);
                        let z = Zinb::floored(a, b, c);
                        let gr = z.nll_grad(*t as u64);
                        dn[&idx] = if a == z.n { gr[0] * scale } else { 0.0 };
                        dp[&idx] = if b == z.p { gr[1] * scale } else { 0.0 };
                        dpi[&idx] = if c == z.pi { gr[2] * scale } else { 0.0 };
                    }
                    acc(*n, dn);
                    acc(*p, dp);
                    acc(*pi, dpi);
                }
            }
        }
        Grads(g)
    }
}

/// Batched matmul with optional transposes of the last two axes.
fn bmm(a: &ArrayD<f64>, b: &ArrayD<f64>, ta: bool, tb: bool) -> ArrayD<f64> {
    let a3 = a.view().into_dimensionality::<ndarray::Ix3>().expect("3-d");
    let b3 = b.view().into_dimensionality::<ndarray::Ix3>().expect("3-d");
    assert_eq!(a3.shape()[0], b3.shape()[0], "batch size");
    let m = if ta { a3.shape()[2] } else { a3.shape()[1] };
    let n = if tb { b3.shape()[1] } else { b3.shape()[2] };
    let mut out = ndarray::Array3::<f64>::zeros((a3.shape()[0], m, n));
    for ((ai, bi), mut oi) in a3.outer_iter().zip(b3.outer_iter()).zip(out.outer_iter_mut()) {
        let ai = if ta { ai.reversed_axes() } else { ai };
        let bi = if tb { bi.reversed_axes() } else { bi };
        general_mat_mul(1.0, &ai, &bi, 0.0, &mut oi);
    }
    out.into_dyn()
}

/// Elementwise Huber loss of a residual.
pub fn huber(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * a - 0.5 * delta * delta
    }
}
