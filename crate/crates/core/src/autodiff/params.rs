use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Grads, Tape, Var};
use crate::{Error, Result};

/// Named learnable tensors, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<ArrayD<f64>>,
}

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId(pub usize);

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: ArrayD<f64>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        self.add(name, ArrayD::zeros(IxDyn(shape)))
    }

    pub fn filled(&mut self, name: impl Into<String>, shape: &[usize], v: f64) -> ParamId {
        self.add(name, ArrayD::from_elem(IxDyn(shape), v))
    }

    /// Glorot-uniform matrix; `fan_in` and `fan_out` are the first and last
    /// dimensions.
    pub fn glorot<R: Rng>(&mut self, name: impl Into<String>, shape: &[usize], rng: &mut R) -> ParamId {
        let fan_in = shape[0] as f64;
        let fan_out = *shape.last().unwrap() as f64;
        let limit = (6.0 / (fan_in + fan_out)).sqrt();
        let value = ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.random_range(-limit..limit));
        self.add(name, value)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &ArrayD<f64> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ArrayD<f64> {
        &mut self.values[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[ArrayD<f64>] {
        &self.values
    }

    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Registers every tensor as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.values.iter().map(|v| tape.leaf(v.clone())).collect()
    }

    /// Collects gradients for bound leaves, zero where unreached.
    pub fn gradients(&self, vars: &[Var], grads: &mut Grads) -> Vec<ArrayD<f64>> {
        vars.iter()
            .zip(&self.values)
            .map(|(v, val)| grads.take(*v).unwrap_or_else(|| ArrayD::zeros(val.raw_dim())))
            .collect()
    }

    pub fn to_snapshot(&self) -> Vec<TensorSnapshot> {
        self.names
            .iter()
            .zip(&self.values)
            .map(|(name, v)| TensorSnapshot {
                name: name.clone(),
                shape: v.shape().to_vec(),
                data: v.iter().copied().collect(),
            })
            .collect()
    }

    /// Overwrites values from a snapshot with identical names and shapes.
    pub fn load_snapshot(&mut self, snap: &[TensorSnapshot]) -> Result<()> {
        if snap.len() != self.values.len() {
            return Err(Error::Data(format!(
                "checkpoint has {} tensors, model expects {}",
                snap.len(),
                self.values.len()
            )));
        }
        for (i, s) in snap.iter().enumerate() {
            if s.name != self.names[i] || s.shape != self.values[i].shape() {
                return Err(Error::Data(format!(
                    "checkpoint tensor {} {:?} does not match {} {:?}",
                    s.name,
                    s.shape,
                    self.names[i],
                    self.values[i].shape()
                )));
            }
            self.values[i] = ArrayD::from_shape_vec(IxDyn(&s.shape), s.data.clone())
                .map_err(|e| Error::Shape(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSnapshot {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    #[serde(skip)]
    m: Vec<ArrayD<f64>>,
    #[serde(skip)]
    v: Vec<ArrayD<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &[ArrayD<f64>]) {
        if self.m.is_empty() {
            self.m = store.values.iter().map(|v| ArrayD::zeros(v.raw_dim())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in store
            .values
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut store = ParamStore::new();
        let id = store.filled("x", &[1], 5.0);
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            let g = store.get(id).mapv(|x| 2.0 * (x - 1.0));
            opt.update(&mut store, &[g]);
        }
        assert!((store.get(id)[0] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut a = ParamStore::new();
        a.filled("w", &[2, 2], 0.25);
        let snap = a.to_snapshot();
        let mut b = ParamStore::new();
        b.zeros("w", &[2, 2]);
        b.load_snapshot(&snap).unwrap();
        assert_eq!(a, b);
        let mut c = ParamStore::new();
        c.zeros("w", &[3]);
        assert!(c.load_snapshot(&snap).is_err());
    }
}
