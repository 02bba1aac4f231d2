//! Historical Average and per-tract Random Forest baselines.

use std::ops::Range;

use chrono::Timelike;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use smartcore::ensemble::random_forest_regressor::{RandomForestRegressor, RandomForestRegressorParameters};
use smartcore::linalg::basic::matrix::DenseMatrix;

use crate::ingest::events::ObservationCube;
use crate::{Error, Result};

/// Per (time-of-day slot, tract) mean over the training range.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoricalAverage {
    pub interval_hours: u32,
    /// `slots x N`.
    pub slot_means: Array2<f64>,
    pub tract_means: Vec<f64>,
}

/// Slots per day: 24 / interval for sub-daily data, one otherwise.
pub fn slots_per_day(interval_hours: u32) -> usize {
    if interval_hours == 0 || interval_hours >= 24 {
        1
    } else {
        (24 / interval_hours) as usize
    }
}

fn slot_of(cube: &ObservationCube, t: usize) -> usize {
    let slots = slots_per_day(cube.interval_hours);
    if slots == 1 {
        return 0;
    }
    (cube.timestamp(t).hour() / cube.interval_hours) as usize % slots
}

impl HistoricalAverage {
    pub fn fit(cube: &ObservationCube, train: Range<usize>) -> Result<Self> {
        if train.is_empty() || train.end > cube.n_steps() {
            return Err(Error::Data(format!("training range {train:?} is empty or out of bounds")));
        }
        let n = cube.tract_ids.len();
        let slots = slots_per_day(cube.interval_hours);
        let mut sums = Array2::<f64>::zeros((slots, n));
        let mut counts = vec![0usize; slots];
        let mut tract_sums = vec![0.0; n];
        for t in train.clone() {
            let s = slot_of(cube, t);
            counts[s] += 1;
            for i in 0..n {
                let v = cube.counts[[t, i]] as f64;
                sums[[s, i]] += v;
                tract_sums[i] += v;
            }
        }
        let tract_means: Vec<f64> = tract_sums.iter().map(|s| s / train.len() as f64).collect();
        for s in 0..slots {
            if counts[s] == 0 {
                log::info!("slot {s} has no training steps; using tract means");
                for i in 0..n {
                    sums[[s, i]] = tract_means[i];
                }
            } else {
                for i in 0..n {
                    sums[[s, i]] /= counts[s] as f64;
                }
            }
        }
        Ok(Self {
            interval_hours: cube.interval_hours,
            slot_means: sums,
            tract_means,
        })
    }

    /// `targets.len() x N` predictions.
    pub fn predict(&self, cube: &ObservationCube, targets: &[usize]) -> Array2<f64> {
        let n = self.tract_means.len();
        Array2::from_shape_fn((targets.len(), n), |(k, i)| {
            self.slot_means[[slot_of(cube, targets[k]), i]]
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<u16>,
    pub lags: usize,
    pub seed: u64,
}

impl Default for RandomForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            lags: 12,
            seed: 0,
        }
    }
}

/// One forest per tract over that tract's own lagged counts.
pub struct PerTractForest {
    pub config: RandomForestConfig,
    forests: Vec<RandomForestRegressor<f64, f64, DenseMatrix<f64>, Vec<f64>>>,
}

fn lag_row(cube: &ObservationCube, t: usize, tract: usize, lags: usize) -> Vec<f64> {
    (t - lags..t).map(|s| cube.counts[[s, tract]] as f64).collect()
}

fn rf_error(e: smartcore::error::Failed) -> Error {
    Error::Training(format!("random forest: {e}"))
}

impl PerTractForest {
    pub fn fit(cube: &ObservationCube, train: Range<usize>, config: RandomForestConfig) -> Result<Self> {
        let lags = config.lags;
        if lags == 0 || train.len() < lags + 1 || train.end > cube.n_steps() {
            return Err(Error::Data(format!(
                "training range of {} steps is too short for {lags} lags",
                train.len()
            )));
        }
        let n = cube.tract_ids.len();
        let rows: Vec<usize> = (train.start + lags..train.end).collect();
        let mut forests = Vec::with_capacity(n);
        for tract in 0..n {
            let x: Vec<Vec<f64>> = rows.iter().map(|&t| lag_row(cube, t, tract, lags)).collect();
            let y: Vec<f64> = rows.iter().map(|&t| cube.counts[[t, tract]] as f64).collect();
            let params = RandomForestRegressorParameters {
                max_depth: config.max_depth,
                n_trees: config.n_trees,
                seed: config.seed.wrapping_add(tract as u64),
                ..Default::default()
            };
            let xm = DenseMatrix::from_2d_vec(&x).map_err(rf_error)?;
            forests.push(RandomForestRegressor::fit(&xm, &y, params).map_err(rf_error)?);
        }
        Ok(Self { config, forests })
    }

    /// `targets.len() x N` predictions from each target's preceding lags.
    pub fn predict(&self, cube: &ObservationCube, targets: &[usize]) -> Result<Array2<f64>> {
        let lags = self.config.lags;
        if let Some(bad) = targets.iter().find(|&&t| t < lags) {
            return Err(Error::Data(format!("target {bad} has fewer than {lags} preceding steps")));
        }
        let mut out = Array2::zeros((targets.len(), self.forests.len()));
        if targets.is_empty() {
            return Ok(out);
        }
        for (tract, forest) in self.forests.iter().enumerate() {
            let x: Vec<Vec<f64>> = targets.iter().map(|&t| lag_row(cube, t, tract, lags)).collect();
            let pred = forest
                .predict(&DenseMatrix::from_2d_vec(&x).map_err(rf_error)?)
                .map_err(rf_error)?;
            for (k, v) in pred.into_iter().enumerate() {
                out[[k, tract]] = v;
            }
        }
        Ok(out)
    }
}
