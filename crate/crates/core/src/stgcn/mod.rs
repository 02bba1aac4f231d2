//! STGCN forecaster: sandwich temporal-spatial-temporal blocks followed by a
//! temporal output convolution and a linear head, trained with Huber loss.

use std::rc::Rc;

use ndarray::{s, Array2, Array3, Array4, ArrayD, Axis, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::ingest::split::{Batch, WindowSource};
use crate::nn::checkpoint::{CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
use crate::nn::{
    chebyshev_polys, fit, scaled_laplacian, ChebConv, Checkpoint, Dense, TemporalGatedConv, TrainHistory,
    TrainOptions, Trainable,
};
use crate::{Error, Result};

pub const MODEL_NAME: &str = "stgcn";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StgcnConfig {
    pub input_horizon: usize,
    pub temporal_kernel: usize,
    /// Number of Chebyshev terms.
    pub cheb_order: usize,
    /// Channel widths (temporal, spatial, temporal) of each block.
    pub block_channels: Vec<[usize; 3]>,
    pub huber_delta: f64,
    pub train: TrainOptions,
    pub seed: u64,
}

impl Default for StgcnConfig {
    fn default() -> Self {
        Self {
            input_horizon: 12,
            temporal_kernel: 3,
            cheb_order: 3,
            block_channels: vec![[64, 16, 64], [64, 16, 64]],
            huber_delta: 10.0,
            train: TrainOptions::default(),
            seed: 0,
        }
    }
}

/// Time length left after one block: two valid convolutions of width `kt`.
pub fn block_output_len(t: usize, kt: usize) -> Option<usize> {
    t.checked_sub(2 * (kt - 1)).filter(|&r| r >= 1)
}

impl StgcnConfig {
    /// Time steps entering the output convolution.
    pub fn head_kernel(&self) -> Option<usize> {
        self.block_channels
            .iter()
            .try_fold(self.input_horizon, |t, _| block_output_len(t, self.temporal_kernel))
    }

    pub fn validate(&self) -> Result<()> {
        if self.temporal_kernel < 1 || self.cheb_order < 1 {
            return Err(Error::Config("temporal kernel and Chebyshev order must be at least 1".into()));
        }
        if !(self.huber_delta > 0.0) {
            return Err(Error::Config(format!("huber_delta must be positive, got {}", self.huber_delta)));
        }
        if self.block_channels.is_empty() || self.block_channels.iter().flatten().any(|c| *c == 0) {
            return Err(Error::Config("need at least one block with nonzero channels".into()));
        }
        if self.head_kernel().is_none() {
            return Err(Error::Config(format!(
                "input horizon {} leaves no time steps after {} blocks with kernel {}",
                self.input_horizon,
                self.block_channels.len(),
                self.temporal_kernel
            )));
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone)]
pub struct StBlock {
    pub temporal_in: TemporalGatedConv,
    pub spatial: ChebConv,
    pub temporal_out: TemporalGatedConv,
}

impl StBlock {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        kt: usize,
        polys: Vec<Rc<Array2<f64>>>,
        c_in: usize,
        channels: [usize; 3],
        rng: &mut R,
    ) -> Self {
        let [c1, c2, c3] = channels;
        Self {
            temporal_in: TemporalGatedConv::new(store, &format!("{name}.t1"), kt, c_in, c1, rng),
            spatial: ChebConv::new(store, &format!("{name}.s"), polys, c1, c2, rng),
            temporal_out: TemporalGatedConv::new(store, &format!("{name}.t2"), kt, c2, c3, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var) -> Var {
        let h = self.temporal_in.forward(tape, p, x);
        let h = self.spatial.forward(tape, p, h);
        self.temporal_out.forward(tape, p, h)
    }
}

#[derive(Debug, Clone)]
pub struct Stgcn {
    pub config: StgcnConfig,
    pub n_nodes: usize,
    pub weather_dim: usize,
    pub adjacency: Array2<f64>,
    pub trained_epochs: usize,
    store: ParamStore,
    blocks: Vec<StBlock>,
    head_w: ParamId,
    head_b: ParamId,
    out: Dense,
}

impl Stgcn {
    pub fn new(config: StgcnConfig, adjacency: &Array2<f64>, weather_dim: usize) -> Result<Self> {
        config.validate()?;
        let n = adjacency.nrows();
        let lap = scaled_laplacian(adjacency)?;
        let polys: Vec<Rc<Array2<f64>>> = chebyshev_polys(&lap, config.cheb_order)
            .into_iter()
            .map(Rc::new)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let mut c_in = 1 + weather_dim;
        let mut blocks = Vec::new();
        for (i, ch) in config.block_channels.iter().enumerate() {
            blocks.push(StBlock::new(
                &mut store,
                &format!("block{i}"),
                config.temporal_kernel,
                polys.clone(),
                c_in,
                *ch,
                &mut rng,
            ));
            c_in = ch[2];
        }
        let tr = config.head_kernel().expect("validated");
        let head_w = store.glorot("head.conv.w", &[tr * c_in, c_in], &mut rng);
        let head_b = store.zeros("head.conv.b", &[c_in]);
        let out = Dense::zeroed(&mut store, "head.out", c_in, 1);
        Ok(Self {
            config,
            n_nodes: n,
            weather_dim,
            adjacency: adjacency.clone(),
            trained_epochs: 0,
            store,
            blocks,
            head_w,
            head_b,
            out,
        })
    }

    /// `[B, T, N, 1 + W]` model input: the series channel followed by the
    /// weather block broadcast to every node.
    pub fn input_tensor(&self, inputs: &Array4<f64>, weather: Option<&Array3<f64>>) -> Result<ArrayD<f64>> {
        let (b, t, n, c) = inputs.dim();
        if c != 1 || n != self.n_nodes || t != self.config.input_horizon {
            return Err(Error::Shape(format!(
                "expected [B, {}, {}, 1] inputs, got {:?}",
                self.config.input_horizon,
                self.n_nodes,
                inputs.dim()
            )));
        }
        let w = self.weather_dim;
        match (weather, w) {
            (None, 0) => return Ok(inputs.clone().into_dyn()),
            (None, _) => return Err(Error::Shape(format!("model expects {w} weather channels"))),
            (Some(x), _) if x.dim() != (b, t, w) => {
                return Err(Error::Shape(format!(
                    "weather block {:?} does not match the window clock ({b}, {t}, {w})",
                    x.dim()
                )))
            }
            _ => {}
        }
        let weather = weather.expect("checked above");
        let mut x = Array4::<f64>::zeros((b, t, n, 1 + w));
        x.slice_mut(s![.., .., .., 0..1]).assign(inputs);
        for node in 0..n {
            x.slice_mut(s![.., .., node, 1..]).assign(weather);
        }
        Ok(x.into_dyn())
    }

    /// Normalized next-step prediction, `[B, N]`.
    pub fn forward(&self, tape: &mut Tape, p: &[Var], x: Var) -> Var {
        let mut h = x;
        for block in &self.blocks {
            h = block.forward(tape, p, h);
        }
        let tr = self.config.head_kernel().expect("validated");
        let h = tape.temporal_conv(h, p[self.head_w.0], tr);
        let h = tape.add(h, p[self.head_b.0]);
        let h = tape.relu(h);
        let y = self.out.forward(tape, p, h);
        let b = tape.value(y).shape()[0];
        tape.reshape(y, &[b, self.n_nodes])
    }

    pub fn predict(&self, batch: &Batch) -> Result<Array2<f64>> {
        let mut tape = Tape::new();
        let vars = self.store.bind(&mut tape);
        let x = tape.leaf(self.input_tensor(&batch.inputs, batch.weather.as_ref())?);
        let y = self.forward(&mut tape, &vars, x);
        Ok(tape
            .value(y)
            .clone()
            .into_dimensionality()
            .expect("prediction is 2-d"))
    }

    /// Predictions for many target indices, batched.
    pub fn predict_targets(&self, source: &WindowSource, targets: &[usize]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((targets.len(), self.n_nodes));
        let bs = self.config.train.batch_size.max(1);
        for (i, chunk) in targets.chunks(bs).enumerate() {
            let pred = self.predict(&source.batch(chunk))?;
            out.slice_mut(s![i * bs..i * bs + chunk.len(), ..]).assign(&pred);
        }
        Ok(out)
    }

    pub fn train(&mut self, source: &WindowSource, train: &[usize], validation: &[usize]) -> Result<TrainHistory> {
        if source.n_nodes() != self.n_nodes || source.weather_dim() != self.weather_dim {
            return Err(Error::Shape("training data does not match the model's nodes or weather".into()));
        }
        let opts = self.config.train.clone();
        let history = fit(self, source, train, validation, &opts, self.config.seed)?;
        self.trained_epochs = history.epochs();
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
            config: serde_json::json!({ "model": self.config, "weather_dim": self.weather_dim }),
            extra,
            tensors: self.store.to_snapshot(),
        })
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let config: StgcnConfig = serde_json::from_value(c.config["model"].clone())?;
        let weather_dim = c.config["weather_dim"].as_u64().unwrap_or(0) as usize;
        let adjacency = rows_to_matrix(&c.adjacency)?;
        let mut model = Self::new(config, &adjacency, weather_dim)?;
        model.store.load_snapshot(&c.tensors)?;
        model.trained_epochs = c.epoch;
        Ok(model)
    }
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let n = rows.len();
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((n, flat.len() / n.max(1)), flat).map_err(|e| Error::Shape(e.to_string()))
}

impl Trainable for Stgcn {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn batch_loss(&self, tape: &mut Tape, vars: &[Var], batch: &Batch) -> Result<Var> {
        let x = tape.leaf(self.input_tensor(&batch.inputs, batch.weather.as_ref())?);
        let y = self.forward(tape, vars, x);
        let target = Rc::new(batch.targets.clone().into_dyn());
        Ok(tape.huber_mean(y, target, self.config.huber_delta))
    }
}

/// Runs one freshly initialized block on a zero input and reports the
/// output time length.
pub fn block_time_reduction(t: usize, kt: usize, n: usize) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let polys = vec![Rc::new(Array2::<f64>::eye(n))];
    let block = StBlock::new(&mut store, "b", kt, polys, 1, [2, 2, 2], &mut rng);
    let mut tape = Tape::new();
    let vars = store.bind(&mut tape);
    if t < 2 * kt - 1 {
        return Err(Error::Shape(format!("time axis {t} too short for two kernels of {kt}")));
    }
    let x = tape.leaf(ArrayD::zeros(IxDyn(&[1, t, n, 1])));
    let y = block.forward(&mut tape, &vars, x);
    Ok(tape.value(y).len_of(Axis(1)))
}
