//! Layers shared by the STGCN and STZINB forecasters, plus the graph
//! operators they consume.

pub mod checkpoint;
pub mod fit;

pub use checkpoint::Checkpoint;
pub use fit::{evaluate, fit, TrainHistory, TrainOptions, Trainable};

use std::rc::Rc;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::Rng;

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;

pub fn check_symmetric(a: &Array2<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!("adjacency is {:?}, not square", a.dim())));
    }
    for i in 0..a.nrows() {
        for j in i + 1..a.ncols() {
            if (a[[i, j]] - a[[j, i]]).abs() > SYMMETRY_TOL * (1.0 + a[[i, j]].abs()) {
                return Err(Error::InvalidParameter(format!(
                    "adjacency is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

pub fn largest_eigenvalue(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    let dm = DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
    SymmetricEigen::new(dm)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `2 L / lambda_max - I` for the symmetric-normalized Laplacian of `A + I`.
pub fn scaled_laplacian(adj: &Array2<f64>) -> Result<Array2<f64>> {
    check_symmetric(adj)?;
    let n = adj.nrows();
    let a = adj + &Array2::<f64>::eye(n);
    let d_inv_sqrt: Vec<f64> = a
        .rows()
        .into_iter()
        .map(|r| {
            let s = r.sum();
            if s > 0.0 {
                1.0 / s.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let l = Array2::from_shape_fn((n, n), |(i, j)| {
        let norm = d_inv_sqrt[i] * a[[i, j]] * d_inv_sqrt[j];
        if i == j {
            1.0 - norm
        } else {
            -norm
        }
    });
    let mut lambda = largest_eigenvalue(&l);
    if lambda.abs() < 1e-12 {
        lambda = 2.0;
    }
    Ok(l * (2.0 / lambda) - Array2::<f64>::eye(n))
}

/// `T_0 .. T_{k-1}` of `m` by the Chebyshev recurrence.
pub fn chebyshev_polys(m: &Array2<f64>, k: usize) -> Vec<Array2<f64>> {
    let n = m.nrows();
    let mut out: Vec<Array2<f64>> = Vec::with_capacity(k);
    for i in 0..k {
        let next = match i {
            0 => Array2::eye(n),
            1 => m.clone(),
            _ => m.dot(&out[i - 1]) * 2.0 - &out[i - 2],
        };
        out.push(next);
    }
    out
}

/// Row-normalized transition matrix `A / rowsum(A)`. Rows without weight
/// stay zero.
pub fn transition_matrix(adj: &Array2<f64>) -> Result<Array2<f64>> {
    if adj.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidParameter("adjacency must be finite and nonnegative".into()));
    }
    let mut w = adj.clone();
    for (i, mut row) in w.rows_mut().into_iter().enumerate() {
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        } else {
            log::info!("node {i} has no neighbors; its transition row is zero");
        }
    }
    Ok(w)
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Dense {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, bias: bool, rng: &mut R) -> Self {
        let w = store.glorot(format!("{name}.w"), &[fan_in, fan_out], rng);
        let b = bias.then(|| store.zeros(format!("{name}.b"), &[fan_out]));
        Self { w, b }
    }

    /// Dense layer with all-zero weights and bias.
    pub fn zeroed(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let w = store.zeros(format!("{name}.w"), &[fan_in, fan_out]);
        let b = Some(store.zeros(format!("{name}.b"), &[fan_out]));
        Self { w, b }
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var) -> Var {
        let y = tape.matmul(x, p[self.w.0]);
        match self.b {
            Some(b) => tape.add(y, p[b.0]),
            None => y,
        }
    }
}

/// `(W_f * h + b_f) . sigmoid(W_g * h + b_g)`, a valid convolution along time
/// over `[B, T, N, C]` inputs.
#[derive(Debug, Clone)]
pub struct TemporalGatedConv {
    pub kt: usize,
    pub wf: ParamId,
    pub bf: ParamId,
    pub wg: ParamId,
    pub bg: ParamId,
}

impl TemporalGatedConv {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, kt: usize, c_in: usize, c_out: usize, rng: &mut R) -> Self {
        Self {
            kt,
            wf: store.glorot(format!("{name}.wf"), &[kt * c_in, c_out], rng),
            bf: store.zeros(format!("{name}.bf"), &[c_out]),
            wg: store.glorot(format!("{name}.wg"), &[kt * c_in, c_out], rng),
            bg: store.zeros(format!("{name}.bg"), &[c_out]),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var) -> Var {
        let f = tape.temporal_conv(x, p[self.wf.0], self.kt);
        let f = tape.add(f, p[self.bf.0]);
        let g = tape.temporal_conv(x, p[self.wg.0], self.kt);
        let g = tape.add(g, p[self.bg.0]);
        let g = tape.sigmoid(g);
        tape.mul(f, g)
    }
}

/// `ReLU(sum_k T_k(L~) h Theta_k)` over the node axis.
#[derive(Debug, Clone)]
pub struct ChebConv {
    pub thetas: Vec<ParamId>,
    pub polys: Vec<Rc<Array2<f64>>>,
}

impl ChebConv {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        polys: Vec<Rc<Array2<f64>>>,
        c_in: usize,
        c_out: usize,
        rng: &mut R,
    ) -> Self {
        let thetas = (0..polys.len())
            .map(|k| store.glorot(format!("{name}.theta{k}"), &[c_in, c_out], rng))
            .collect();
        Self { thetas, polys }
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var) -> Var {
        let mut acc: Option<Var> = None;
        for (k, (theta, poly)) in self.thetas.iter().zip(&self.polys).enumerate() {
            let mixed = if k == 0 { x } else { tape.node_mix(x, poly.clone()) };
            let term = tape.matmul(mixed, p[theta.0]);
            acc = Some(match acc {
                Some(a) => tape.add(a, term),
                None => term,
            });
        }
        let out = acc.expect("at least one Chebyshev term");
        tape.relu(out)
    }
}

/// `ReLU(sum_{k=1..K} T_k(W_f) h Theta_f^k + T_k(W_b) h Theta_b^k)`.
#[derive(Debug, Clone)]
pub struct DiffusionConv {
    pub theta_f: Vec<ParamId>,
    pub theta_b: Vec<ParamId>,
    pub polys_f: Vec<Rc<Array2<f64>>>,
    pub polys_b: Vec<Rc<Array2<f64>>>,
}

impl DiffusionConv {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        polys_f: Vec<Rc<Array2<f64>>>,
        polys_b: Vec<Rc<Array2<f64>>>,
        c_in: usize,
        c_out: usize,
        rng: &mut R,
    ) -> Self {
        assert_eq!(polys_f.len(), polys_b.len());
        let k = polys_f.len();
        let theta_f = (1..=k)
            .map(|i| store.glorot(format!("{name}.theta_f{i}"), &[c_in, c_out], rng))
            .collect();
        let theta_b = (1..=k)
            .map(|i| store.glorot(format!("{name}.theta_b{i}"), &[c_in, c_out], rng))
            .collect();
        Self {
            theta_f,
            theta_b,
            polys_f,
            polys_b,
        }
    }

    /// Polynomials `T_1 .. T_K` of the forward and backward transitions.
    pub fn polys_for(adj: &Array2<f64>, k: usize) -> Result<(Vec<Rc<Array2<f64>>>, Vec<Rc<Array2<f64>>>)> {
        if k == 0 {
            return Err(Error::InvalidParameter("diffusion order must be at least 1".into()));
        }
        let wf = transition_matrix(adj)?;
        let wb = transition_matrix(&adj.t().to_owned())?;
        let pf: Vec<Rc<Array2<f64>>> = chebyshev_polys(&wf, k + 1).into_iter().skip(1).map(Rc::new).collect();
        let pb: Vec<Rc<Array2<f64>>> = if wb == wf {
            pf.clone()
        } else {
            chebyshev_polys(&wb, k + 1).into_iter().skip(1).map(Rc::new).collect()
        };
        Ok((pf, pb))
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var) -> Var {
        let mut acc: Option<Var> = None;
        for k in 0..self.polys_f.len() {
            let hf = tape.node_mix(x, self.polys_f[k].clone());
            let hb = if Rc::ptr_eq(&self.polys_f[k], &self.polys_b[k]) {
                hf
            } else {
                tape.node_mix(x, self.polys_b[k].clone())
            };
            let tf = tape.matmul(hf, p[self.theta_f[k].0]);
            let tb = tape.matmul(hb, p[self.theta_b[k].0]);
            let s = tape.add(tf, tb);
            acc = Some(match acc {
                Some(a) => tape.add(a, s),
                None => s,
            });
        }
        let out = acc.expect("diffusion order >= 1");
        tape.relu(out)
    }
}

/// `ReLU(h Gamma^T + b)`: a dense map over the width axis of `[B, N, w]`.
#[derive(Debug, Clone)]
pub struct TcnLayer {
    pub dense: Dense,
    pub w_in: usize,
}

impl TcnLayer {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, w_in: usize, w_out: usize, rng: &mut R) -> Self {
        Self {
            dense: Dense::new(store, name, w_in, w_out, true, rng),
            w_in,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var) -> Result<Var> {
        let w = *tape.value(x).shape().last().unwrap_or(&0);
        if w != self.w_in {
            return Err(Error::Shape(format!("TCN layer expects width {}, got {w}", self.w_in)));
        }
        let y = self.dense.forward(tape, p, x);
        Ok(tape.relu(y))
    }
}

/// One multi-head cross-attention layer. Queries come from the city-wide
/// series `[B, T, W]`; keys and values from a node embedding `[B, N, d]`.
/// The attended output is averaged over queries, added to every node's
/// embedding, and followed by a residual feed-forward layer.
#[derive(Debug, Clone)]
pub struct CrossAttention {
    pub heads: usize,
    pub dim: usize,
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub ff1: Dense,
    pub ff2: Dense,
}

impl CrossAttention {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        query_dim: usize,
        dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!(
                "embedding dim {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            heads,
            dim,
            wq: store.glorot(format!("{name}.wq"), &[query_dim, dim], rng),
            wk: store.glorot(format!("{name}.wk"), &[dim, dim], rng),
            wv: store.glorot(format!("{name}.wv"), &[dim, dim], rng),
            ff1: Dense::new(store, &format!("{name}.ff1"), dim, 2 * dim, true, rng),
            ff2: Dense::new(store, &format!("{name}.ff2"), 2 * dim, dim, true, rng),
        })
    }

    /// Splits `[B, L, d]` into `[B * h, L, d / h]`.
    fn split_heads(&self, tape: &mut Tape, x: Var) -> Var {
        let sh = tape.value(x).shape().to_vec();
        let (b, l) = (sh[0], sh[1]);
        let dk = self.dim / self.heads;
        let x = tape.reshape(x, &[b, l, self.heads, dk]);
        let x = tape.permute(x, &[0, 2, 1, 3]);
        tape.reshape(x, &[b * self.heads, l, dk])
    }

    /// Raw attention output `softmax(Q K^T / sqrt(d / h)) V` as `[B, T, d]`.
    pub fn attend(&self, tape: &mut Tape, p: &[Var], series: Var, embed: Var) -> Var {
        let sh = tape.value(series).shape().to_vec();
        let (b, t) = (sh[0], sh[1]);
        let dk = self.dim / self.heads;
        let q = tape.matmul(series, p[self.wq.0]);
        let k = tape.matmul(embed, p[self.wk.0]);
        let v = tape.matmul(embed, p[self.wv.0]);
        let q = self.split_heads(tape, q);
        let k = self.split_heads(tape, k);
        let v = self.split_heads(tape, v);
        let kt = tape.permute(k, &[0, 2, 1]);
        let scores = tape.batch_matmul(q, kt);
        let scores = tape.scale(scores, 1.0 / (dk as f64).sqrt());
        let attn = tape.softmax_last(scores);
        let out = tape.batch_matmul(attn, v);
        let out = tape.reshape(out, &[b, self.heads, t, dk]);
        let out = tape.permute(out, &[0, 2, 1, 3]);
        tape.reshape(out, &[b, t, self.dim])
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], series: Var, embed: Var) -> Var {
        let b = tape.value(embed).shape()[0];
        let att = self.attend(tape, p, series, embed);
        let pooled = tape.mean_axis(att, 1);
        let pooled = tape.reshape(pooled, &[b, 1, self.dim]);
        let e = tape.add(embed, pooled);
        let h = self.ff1.forward(tape, p, e);
        let h = tape.relu(h);
        let h = self.ff2.forward(tape, p, h);
        tape.add(e, h)
    }
}
