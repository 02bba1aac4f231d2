//! Reverse-mode gradients against central finite differences. Each check
//! returns the largest per-tensor relative error.

#![allow(dead_code)]

use std::rc::Rc;

use hetgraph::autodiff::{ParamId, ParamStore, Tape, Var};
use hetgraph::ingest::split::Batch;
use hetgraph::nn::{
    chebyshev_polys, scaled_laplacian, ChebConv, CrossAttention, DiffusionConv, TcnLayer, TemporalGatedConv, Trainable,
};
use hetgraph::stgcn::{Stgcn, StgcnConfig};
use hetgraph::stzinb::{Stzinb, StzinbConfig};
use ndarray::{Array2, Array3, Array4, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LAYER_TOL: f64 = 1e-4;
pub const MODEL_TOL: f64 = 1e-3;
const LAYER_STEP: f64 = 1e-6;
// Whole-model losses carry gradients down to ~1e-6 (attention scores),
// where rounding at a 1e-6 step would dominate.
const MODEL_STEP: f64 = 1e-4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random(shape: &[usize], scale: f64, r: &mut ChaCha8Rng) -> ArrayD<f64> {
    ArrayD::from_shape_fn(IxDyn(shape), |_| r.random_range(-scale..scale))
}

/// Largest per-tensor relative error `|g_a - g_n| / max(|g_a|, |g_n|)`
/// between tape gradients and central differences of `loss`.
fn max_rel_error(store: &ParamStore, step: f64, loss: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let eval = |store: &ParamStore| {
        let mut tape = Tape::new();
        let vars = store.bind(&mut tape);
        let l = loss(&mut tape, &vars);
        tape.scalar(l)
    };
    let mut tape = Tape::new();
    let vars = store.bind(&mut tape);
    let l = loss(&mut tape, &vars);
    let mut grads = tape.backward(l);
    let analytic = store.gradients(&vars, &mut grads);

    let mut work = store.clone();
    let mut worst: f64 = 0.0;
    for (k, g) in analytic.iter().enumerate() {
        let id = ParamId(k);
        let base: Vec<f64> = store.get(id).iter().copied().collect();
        let shape = store.get(id).raw_dim();
        let numeric = crate::oracles::numeric_gradient(&base, step, |x| {
            *work.get_mut(id) = ArrayD::from_shape_vec(shape.clone(), x.to_vec()).unwrap();
            eval(&work)
        });
        *work.get_mut(id) = store.get(id).clone();
        let diff: f64 = g.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let na = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let scale = na.max(nn);
        let err = if scale < 1e-10 { diff } else { diff / scale };
        worst = worst.max(err);
    }
    worst
}

/// Random linear read-out, so every output entry carries its own weight.
fn readout(tape: &mut Tape, y: Var, seed: u64) -> Var {
    let shape = tape.value(y).shape().to_vec();
    let c = Rc::new(random(&shape, 1.0, &mut rng(seed)));
    tape.dot_const(y, c)
}

fn ring4() -> Array2<f64> {
    ndarray::array![
        [0.0, 0.8, 0.0, 0.3],
        [0.8, 0.0, 0.6, 0.0],
        [0.0, 0.6, 0.0, 0.9],
        [0.3, 0.0, 0.9, 0.0]
    ]
}

pub fn temporal_gated_conv() -> f64 {
    let mut r = rng(1);
    let mut store = ParamStore::new();
    let layer = TemporalGatedConv::new(&mut store, "tg", 3, 2, 3, &mut r);
    for id in [layer.bf, layer.bg] {
        *store.get_mut(id) = random(&[3], 0.5, &mut r);
    }
    let x = store.add("x", random(&[2, 6, 3, 2], 1.0, &mut r));
    let err = max_rel_error(&store, LAYER_STEP, |t, p| {
        let y = layer.forward(t, p, p[x.0]);
        readout(t, y, 7)
    });
    err
}

pub fn chebyshev_graph_conv() -> f64 {
    let mut r = rng(2);
    let mut store = ParamStore::new();
    let polys = chebyshev_polys(&scaled_laplacian(&ring4()).unwrap(), 3).into_iter().map(Rc::new).collect();
    let layer = ChebConv::new(&mut store, "cheb", polys, 2, 3, &mut r);
    let x = store.add("x", random(&[2, 3, 4, 2], 1.0, &mut r));
    let err = max_rel_error(&store, LAYER_STEP, |t, p| {
        let y = layer.forward(t, p, p[x.0]);
        readout(t, y, 8)
    });
    err
}

pub fn huber_loss_both_branches() -> f64 {
    let mut r = rng(3);
    let mut store = ParamStore::new();
    let target = random(&[3, 4], 5.0, &mut r);
    // Residuals well inside and well outside delta = 1.
    let offsets = ArrayD::from_shape_fn(IxDyn(&[3, 4]), |ix| if (ix[0] + ix[1]) % 2 == 0 { 0.4 } else { -2.5 });
    let pred = store.add("pred", &target + &offsets);
    let target = Rc::new(target);
    let err = max_rel_error(&store, LAYER_STEP, |t, p| t.huber_mean(p[pred.0], target.clone(), 1.0));
    err
}

pub fn diffusion_graph_conv() -> f64 {
    let mut r = rng(4);
    let mut store = ParamStore::new();
    let (pf, pb) = DiffusionConv::polys_for(&ring4(), 2).unwrap();
    let layer = DiffusionConv::new(&mut store, "dgcn", pf, pb, 3, 2, &mut r);
    let x = store.add("x", random(&[2, 4, 3], 1.0, &mut r));
    let err = max_rel_error(&store, LAYER_STEP, |t, p| {
        let y = layer.forward(t, p, p[x.0]);
        readout(t, y, 9)
    });
    err
}

pub fn tcn_layer() -> f64 {
    let mut r = rng(5);
    let mut store = ParamStore::new();
    let layer = TcnLayer::new(&mut store, "tcn", 5, 3, &mut r);
    *store.get_mut(layer.dense.b.unwrap()) = random(&[3], 0.5, &mut r);
    let x = store.add("x", random(&[2, 4, 5], 1.0, &mut r));
    let err = max_rel_error(&store, LAYER_STEP, |t, p| {
        let y = layer.forward(t, p, p[x.0]).unwrap();
        readout(t, y, 10)
    });
    err
}

pub fn cross_attention() -> f64 {
    let mut r = rng(6);
    let mut store = ParamStore::new();
    let layer = CrossAttention::new(&mut store, "attn", 2, 4, 2, &mut r).unwrap();
    let series = store.add("series", random(&[2, 5, 2], 1.0, &mut r));
    let embed = store.add("embed", random(&[2, 3, 4], 1.0, &mut r));
    let err = max_rel_error(&store, LAYER_STEP, |t, p| {
        let y = layer.forward(t, p, p[series.0], p[embed.0]);
        readout(t, y, 11)
    });
    err
}

pub fn zinb_negative_log_likelihood() -> f64 {
    let mut r = rng(7);
    let mut store = ParamStore::new();
    let n = store.add("n", ArrayD::from_shape_fn(IxDyn(&[3, 4]), |_| r.random_range(0.5..6.0)));
    let p = store.add("p", ArrayD::from_shape_fn(IxDyn(&[3, 4]), |_| r.random_range(0.1..0.9)));
    let pi = store.add("pi", ArrayD::from_shape_fn(IxDyn(&[3, 4]), |_| r.random_range(0.05..0.9)));
    let y = Rc::new(ArrayD::from_shape_fn(IxDyn(&[3, 4]), |ix| ((ix[0] * 4 + ix[1]) % 5) as f64));
    assert!(y.iter().any(|v| *v == 0.0) && y.iter().any(|v| *v > 0.0));
    let err = max_rel_error(&store, LAYER_STEP, |t, v| t.zinb_nll(v[n.0], v[p.0], v[pi.0], y.clone()));
    err
}

/// Replaces every parameter with random values so that no gradient path
/// is blocked by zero-initialized heads. Attention projections get a wider
/// range: near-uniform softmax weights leave their gradients around 1e-7,
/// below what finite differences resolve.
fn randomize<M: Trainable>(model: &mut M, scale: f64, seed: u64) {
    let mut r = rng(seed);
    let store = model.params_mut();
    for k in 0..store.len() {
        let id = ParamId(k);
        let shape = store.get(id).shape().to_vec();
        let s = if store.names()[k].contains(".attn.w") { 4.0 * scale } else { scale };
        *store.get_mut(id) = random(&shape, s, &mut r);
    }
}

fn model_batch(t_in: usize, weather: bool, seed: u64) -> Batch {
    let mut r = rng(seed);
    Batch {
        inputs: Array4::from_shape_fn((2, t_in, 4, 1), |_| r.random_range(0.0..4.0f64).round()),
        weather: weather.then(|| Array3::from_shape_fn((2, t_in, 2), |_| r.random_range(-2.0..2.0))),
        targets: Array2::from_shape_fn((2, 4), |(b, n)| ((b * 4 + n) % 4) as f64),
        target_index: vec![t_in, t_in + 1],
    }
}

fn model_rel_error<M: Trainable>(model: &M, batch: &Batch) -> f64 {
    let m: &M = model;
    max_rel_error(m.params(), MODEL_STEP, |t, v| m.batch_loss(t, v, batch).unwrap())
}

pub fn stgcn_end_to_end() -> f64 {
    let cfg = StgcnConfig {
        input_horizon: 8,
        block_channels: vec![[3, 2, 3]],
        ..Default::default()
    };
    let mut m = Stgcn::new(cfg, &ring4(), 0).unwrap();
    randomize(&mut m, 0.6, 12);
    model_rel_error(&m, &model_batch(8, false, 13))
}

pub fn stzinb_end_to_end_with_attention() -> f64 {
    let cfg = StzinbConfig {
        input_horizon: 8,
        spatial_channels: vec![3, 3],
        tcn_widths: vec![4, 3],
        embed_dim: 4,
        heads: 2,
        attention: true,
        ..Default::default()
    };
    let mut m = Stzinb::new(cfg, &ring4(), 2).unwrap();
    randomize(&mut m, 0.4, 14);
    model_rel_error(&m, &model_batch(8, true, 15))
}

pub const LAYERS: [(&str, fn() -> f64); 7] = [
    ("temporal gated conv", temporal_gated_conv),
    ("chebyshev graph conv", chebyshev_graph_conv),
    ("huber loss", huber_loss_both_branches),
    ("diffusion graph conv", diffusion_graph_conv),
    ("tcn layer", tcn_layer),
    ("cross attention", cross_attention),
    ("zinb nll", zinb_negative_log_likelihood),
];

pub const MODELS: [(&str, fn() -> f64); 2] = [
    ("stgcn end to end", stgcn_end_to_end),
    ("stzinb end to end", stzinb_end_to_end_with_attention),
];
