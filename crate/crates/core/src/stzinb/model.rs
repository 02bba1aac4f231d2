use std::rc::Rc;

use ndarray::{Array2, Array3, Array4, ArrayD, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dist::{fit_marginal, Zinb};
use crate::autodiff::{ParamStore, Tape, Var};
use crate::ingest::split::{Batch, Normalizer, WindowSource};
use crate::nn::checkpoint::{CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
use crate::nn::{fit, Checkpoint, CrossAttention, Dense, DiffusionConv, TcnLayer, TrainHistory, TrainOptions, Trainable};
use crate::stgcn::rows_to_matrix;
use crate::{Error, Result};

pub const MODEL_NAME: &str = "stzinb";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StzinbConfig {
    pub input_horizon: usize,
    pub diffusion_order: usize,
    pub spatial_channels: Vec<usize>,
    pub tcn_widths: Vec<usize>,
    /// Parameter-embedding width `d_h`.
    pub embed_dim: usize,
    pub heads: usize,
    /// Cross-attention over the city-wide series.
    pub attention: bool,
    pub train: TrainOptions,
    pub seed: u64,
}

impl Default for StzinbConfig {
    fn default() -> Self {
        Self {
            input_horizon: 12,
            diffusion_order: 2,
            spatial_channels: vec![32, 32, 32],
            tcn_widths: vec![32, 32, 32],
            embed_dim: 32,
            heads: 4,
            attention: false,
            train: TrainOptions {
                learning_rate: 1e-4,
                ..TrainOptions::default()
            },
            seed: 0,
        }
    }
}

impl StzinbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.diffusion_order < 1 {
            return Err(Error::Config("diffusion order must be at least 1".into()));
        }
        if self.input_horizon < 1 || self.embed_dim < 1 {
            return Err(Error::Config("input horizon and embedding width must be positive".into()));
        }
        if self.spatial_channels.is_empty() || self.tcn_widths.is_empty() {
            return Err(Error::Config("need at least one spatial and one temporal layer".into()));
        }
        if self.heads == 0 || self.embed_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "embedding width {} is not divisible by {} heads",
                self.embed_dim, self.heads
            )));
        }
        self.train.validate()
    }
}

/// Which ZINB parameter a head produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    N,
    P,
    Pi,
}

impl Param {
    pub const ALL: [Param; 3] = [Param::N, Param::P, Param::Pi];

    fn name(&self) -> &'static str {
        match self {
            Param::N => "n",
            Param::P => "p",
            Param::Pi => "pi",
        }
    }
}

#[derive(Debug, Clone)]
struct BranchHead {
    embed: Dense,
    out: Dense,
}

#[derive(Debug, Clone)]
struct ParamHeads {
    spatial: BranchHead,
    temporal: BranchHead,
    attention: Option<CrossAttention>,
}

/// Per-node ZINB parameters for a batch of windows, each `[B, N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    pub n: Array2<f64>,
    pub p: Array2<f64>,
    pub pi: Array2<f64>,
}

impl PredictiveDistribution {
    pub fn get(&self, b: usize, node: usize) -> Zinb {
        Zinb::floored(self.n[[b, node]], self.p[[b, node]], self.pi[[b, node]])
    }

    fn map(&self, f: impl Fn(Zinb) -> f64) -> Array2<f64> {
        Array2::from_shape_fn(self.n.dim(), |(b, i)| f(self.get(b, i)))
    }

    pub fn mean(&self) -> Array2<f64> {
        self.map(|d| d.mean())
    }

    pub fn quantile(&self, q: f64) -> Array2<f64> {
        self.map(|d| d.quantile(q) as f64)
    }

    pub fn concat(parts: &[PredictiveDistribution]) -> Self {
        let cat = |f: fn(&PredictiveDistribution) -> &Array2<f64>| {
            let views: Vec<_> = parts.iter().map(|d| f(d).view()).collect();
            ndarray::concatenate(Axis(0), &views).expect("matching node counts")
        };
        Self {
            n: cat(|d| &d.n),
            p: cat(|d| &d.p),
            pi: cat(|d| &d.pi),
        }
    }
}

/// Spatial diffusion branch and temporal width-map branch, each producing
/// three head pre-activations that are fused by elementwise product.
#[derive(Debug, Clone)]
pub struct Stzinb {
    pub config: StzinbConfig,
    pub n_nodes: usize,
    pub weather_dim: usize,
    pub adjacency: Array2<f64>,
    /// Scales the count windows fed to both branches.
    pub input_normalizer: Normalizer,
    pub trained_epochs: usize,
    trained: bool,
    store: ParamStore,
    spatial: Vec<DiffusionConv>,
    temporal: Vec<TcnLayer>,
    heads: Vec<ParamHeads>,
}

/// Inverse of the head activations, for bias initialization.
fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().max(1e-12).ln()
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl Stzinb {
    /// `weather_dim` must be positive exactly when attention is enabled.
    pub fn new(config: StzinbConfig, adjacency: &Array2<f64>, weather_dim: usize) -> Result<Self> {
        config.validate()?;
        if config.attention != (weather_dim > 0) {
            return Err(Error::Config(
                "attention needs a weather series and weather is only used by attention".into(),
            ));
        }
        let n = adjacency.nrows();
        if adjacency.ncols() != n {
            return Err(Error::Shape("adjacency must be square".into()));
        }
        let (pf, pb) = DiffusionConv::polys_for(adjacency, config.diffusion_order)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let mut spatial = Vec::new();
        let mut c = config.input_horizon;
        for (i, &co) in config.spatial_channels.iter().enumerate() {
            spatial.push(DiffusionConv::new(&mut store, &format!("dgcn{i}"), pf.clone(), pb.clone(), c, co, &mut rng));
            c = co;
        }
        let c_spatial = c;
        let mut temporal = Vec::new();
        let mut w = config.input_horizon;
        for (i, &wo) in config.tcn_widths.iter().enumerate() {
            temporal.push(TcnLayer::new(&mut store, &format!("tcn{i}"), w, wo, &mut rng));
            w = wo;
        }
        let d = config.embed_dim;
        let mut heads = Vec::new();
        for param in Param::ALL {
            let name = param.name();
            let spatial_head = BranchHead {
                embed: Dense::new(&mut store, &format!("head.{name}.s.embed"), c_spatial, d, true, &mut rng),
                out: Dense::zeroed(&mut store, &format!("head.{name}.s.out"), d, 1),
            };
            let out_b = spatial_head.out.b.expect("zeroed dense has a bias");
            store.get_mut(out_b).fill(1.0);
            let temporal_head = BranchHead {
                embed: Dense::new(&mut store, &format!("head.{name}.t.embed"), w, d, true, &mut rng),
                out: Dense::zeroed(&mut store, &format!("head.{name}.t.out"), d, 1),
            };
            let attention = if config.attention {
                Some(CrossAttention::new(
                    &mut store,
                    &format!("head.{name}.attn"),
                    weather_dim,
                    d,
                    config.heads,
                    &mut rng,
                )?)
            } else {
                None
            };
            heads.push(ParamHeads {
                spatial: spatial_head,
                temporal: temporal_head,
                attention,
            });
        }
        Ok(Self {
            config,
            n_nodes: n,
            weather_dim,
            adjacency: adjacency.clone(),
            input_normalizer: Normalizer::identity(),
            trained_epochs: 0,
            trained: false,
            store,
            spatial,
            temporal,
            heads,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    /// Starts the fused output at a marginal ZINB fit: spatial factors are
    /// 1 and temporal biases hold the pre-activations of `marginal`.
    pub fn init_from_marginal(&mut self, marginal: Zinb) {
        let pre = [
            softplus_inv(marginal.n),
            logit(marginal.p),
            logit(marginal.pi),
        ];
        for (head, v) in self.heads.iter().zip(pre) {
            let b = head.temporal.out.b.expect("bias");
            self.store.get_mut(b).fill(v);
        }
    }

    /// `[B, N, T_in]` normalized count windows.
    fn node_windows(&self, inputs: &Array4<f64>) -> Result<ArrayD<f64>> {
        let (b, t, n, c) = inputs.dim();
        if c != 1 || n != self.n_nodes || t != self.config.input_horizon {
            return Err(Error::Shape(format!(
                "expected [B, {}, {}, 1] inputs, got {:?}",
                self.config.input_horizon,
                self.n_nodes,
                inputs.dim()
            )));
        }
        let mut x = Array3::<f64>::zeros((b, n, t));
        for bi in 0..b {
            for ti in 0..t {
                for ni in 0..n {
                    x[[bi, ni, ti]] = self.input_normalizer.normalize(inputs[[bi, ti, ni, 0]]);
                }
            }
        }
        Ok(x.into_dyn())
    }

    /// Records the forward pass and returns `(n, p, pi)`, each `[B, N]`.
    pub fn forward(&self, tape: &mut Tape, p: &[Var], batch: &Batch) -> Result<[Var; 3]> {
        let x = tape.leaf(self.node_windows(&batch.inputs)?);
        let weather = if self.config.attention {
            let w = batch
                .weather
                .as_ref()
                .ok_or_else(|| Error::Shape("attention variant needs weather windows".into()))?;
            let (b, t, wd) = w.dim();
            if b != batch.inputs.dim().0 || t != self.config.input_horizon || wd != self.weather_dim {
                return Err(Error::Shape(format!(
                    "weather block {:?} does not match the window clock",
                    w.dim()
                )));
            }
            Some(tape.leaf(w.clone().into_dyn()))
        } else {
            None
        };
        let mut hs = x;
        for layer in &self.spatial {
            hs = layer.forward(tape, p, hs);
        }
        let mut ht = x;
        for layer in &self.temporal {
            ht = layer.forward(tape, p, ht)?;
        }
        let b = batch.inputs.dim().0;
        let mut out = Vec::with_capacity(3);
        for (param, head) in Param::ALL.iter().zip(&self.heads) {
            let es = head.spatial.embed.forward(tape, p, hs);
            let es = tape.relu(es);
            let a_s = head.spatial.out.forward(tape, p, es);
            let et = head.temporal.embed.forward(tape, p, ht);
            let mut et = tape.relu(et);
            if let (Some(att), Some(w)) = (&head.attention, weather) {
                et = att.forward(tape, p, w, et);
            }
            let a_t = head.temporal.out.forward(tape, p, et);
            let fused = tape.mul(a_s, a_t);
            let fused = tape.reshape(fused, &[b, self.n_nodes]);
            if tape.value(fused).iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{} head pre-activation", param.name())));
            }
            out.push(match param {
                Param::N => tape.softplus(fused),
                _ => tape.sigmoid(fused),
            });
        }
        Ok([out[0], out[1], out[2]])
    }

    /// Parameters without the trained-state check.
    pub fn distribution(&self, batch: &Batch) -> Result<PredictiveDistribution> {
        let mut tape = Tape::new();
        let vars = self.store.bind(&mut tape);
        let [n, p, pi] = self.forward(&mut tape, &vars, batch)?;
        let two = |v: Var| -> Array2<f64> { tape.value(v).clone().into_dimensionality().expect("2-d") };
        Ok(PredictiveDistribution {
            n: two(n).mapv(|v| v.max(super::dist::N_FLOOR)),
            p: two(p).mapv(|v| v.clamp(super::dist::P_FLOOR, 1.0 - super::dist::P_FLOOR)),
            pi: two(pi).mapv(|v| v.clamp(super::dist::P_FLOOR, 1.0 - super::dist::P_FLOOR)),
        })
    }

    pub fn predict_distribution(&self, batch: &Batch) -> Result<PredictiveDistribution> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        self.distribution(batch)
    }

    pub fn predict_targets(&self, source: &WindowSource, targets: &[usize]) -> Result<PredictiveDistribution> {
        let bs = self.config.train.batch_size.max(1);
        let parts = targets
            .chunks(bs)
            .map(|c| self.predict_distribution(&source.batch(c)))
            .collect::<Result<Vec<_>>>()?;
        if parts.is_empty() {
            return Err(Error::Data("no target windows to predict".into()));
        }
        Ok(PredictiveDistribution::concat(&parts))
    }

    /// Trains on raw-count targets. Inputs are scaled by `input_normalizer`.
    pub fn train(
        &mut self,
        source: &WindowSource,
        train: &[usize],
        validation: &[usize],
        input_normalizer: Normalizer,
    ) -> Result<TrainHistory> {
        if source.n_nodes() != self.n_nodes {
            return Err(Error::Shape("training data does not match the model's nodes".into()));
        }
        self.input_normalizer = input_normalizer;
        let marginal = fit_marginal(
            train
                .iter()
                .flat_map(|&t| source.targets.row(t).to_vec())
                .map(|v| v.max(0.0).round() as u64),
        );
        log::debug!("initial marginal {marginal:?}");
        self.init_from_marginal(marginal);
        let opts = self.config.train.clone();
        let history = fit(self, source, train, validation, &opts, self.config.seed)?;
        self.trained_epochs = history.epochs();
        self.trained = true;
        Ok(history)
    }

    pub fn to_checkpoint(&self, tract_ids: &[String], extra: serde_json::Value) -> Result<Checkpoint> {
        Ok(Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: MODEL_NAME.into(),
            seed: self.config.seed,
            epoch: self.trained_epochs,
            tract_ids: tract_ids.to_vec(),
            adjacency: self.adjacency.rows().into_iter().map(|r| r.to_vec()).collect(),
            config: serde_json::json!({
                "model": self.config,
                "weather_dim": self.weather_dim,
                "input_normalizer": self.input_normalizer,
                "trained": self.trained,
            }),
            extra,
            tensors: self.store.to_snapshot(),
        })
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let config: StzinbConfig = serde_json::from_value(c.config["model"].clone())?;
        let weather_dim = c.config["weather_dim"].as_u64().unwrap_or(0) as usize;
        let adjacency = rows_to_matrix(&c.adjacency)?;
        let mut model = Self::new(config, &adjacency, weather_dim)?;
        model.store.load_snapshot(&c.tensors)?;
        model.input_normalizer = serde_json::from_value(c.config["input_normalizer"].clone())?;
        model.trained = c.config["trained"].as_bool().unwrap_or(false);
        model.trained_epochs = c.epoch;
        Ok(model)
    }
}

impl Trainable for Stzinb {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn batch_loss(&self, tape: &mut Tape, vars: &[Var], batch: &Batch) -> Result<Var> {
        let [n, p, pi] = self.forward(tape, vars, batch)?;
        let y = Rc::new(batch.targets.mapv(|v| v.max(0.0).round()).into_dyn());
        Ok(tape.zinb_nll(n, p, pi, y))
    }
}
