//! Chronological train/validation/test splits, train-fitted normalizers, and
//! sliding-window batch assembly shared by all models.

use std::ops::Range;

use ndarray::{s, Array2, Array3, Array4, Axis};
use serde::{Deserialize, Serialize};

use super::events::ObservationCube;
use super::weather::WeatherSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentOrder {
    #[default]
    TrainValidationTest,
    TrainTestValidation,
}

/// Per-dataset z-score over the training counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
}

impl Normalizer {
    pub fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
        for x in values {
            n += 1;
            let d = x - mean;
            mean += d / n as f64;
            m2 += d * (x - mean);
        }
        let var = if n > 0 { m2 / n as f64 } else { 0.0 };
        let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        Self { mean, std }
    }

    pub fn identity() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
        }
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Per-column z-score for weather variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnNormalizer {
    pub columns: Vec<Normalizer>,
}

impl ColumnNormalizer {
    pub fn fit(values: &Array2<f64>, rows: Range<usize>) -> Self {
        let view = values.slice(s![rows, ..]);
        Self {
            columns: view
                .axis_iter(Axis(1))
                .map(|c| Normalizer::fit(c.iter().copied()))
                .collect(),
        }
    }

    pub fn apply(&self, values: &Array2<f64>) -> Array2<f64> {
        let mut out = values.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let n = self.columns[j];
            col.mapv_inplace(|x| n.normalize(x));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
    pub order: SegmentOrder,
    pub normalizer: Normalizer,
}

/// Segment lengths: floor each share, then hand the remainder to the
/// largest fractional parts (earlier segments win ties).
pub fn segment_lengths(total: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(*r >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    let exact: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut lens: [usize; 3] = [0; 3];
    for k in 0..3 {
        // Guard against 0.7 * 100 = 69.999...
        lens[k] = (exact[k] + 1e-9).floor() as usize;
    }
    let mut remaining = total - lens.iter().sum::<usize>();
    let mut by_frac: Vec<usize> = (0..3).collect();
    by_frac.sort_by(|&a, &b| {
        let fa = exact[a] - lens[a] as f64;
        let fb = exact[b] - lens[b] as f64;
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in by_frac.iter().cycle() {
        if remaining == 0 {
            break;
        }
        lens[k] += 1;
        remaining -= 1;
    }
    Ok(lens)
}

/// Splits the cube's time axis into contiguous segments and fits the count
/// normalizer on train only. `ratios` are (train, test, validation) shares;
/// `order` only decides which of test/validation comes first in time.
pub fn chronological_split(
    cube: &ObservationCube,
    ratios: [f64; 3],
    order: SegmentOrder,
    input_horizon: usize,
) -> Result<DatasetSplit> {
    let total = cube.n_steps();
    if total < input_horizon + 1 {
        return Err(Error::Data(format!(
            "{total} time steps cannot host an input window of {input_horizon} plus a target"
        )));
    }
    let [n_train, n_test, n_val] = segment_lengths(total, ratios)?;
    let train = 0..n_train;
    let (validation, test) = match order {
        SegmentOrder::TrainValidationTest => (n_train..n_train + n_val, n_train + n_val..total),
        SegmentOrder::TrainTestValidation => (n_train + n_test..total, n_train..n_train + n_test),
    };
    if train.len() <= input_horizon {
        return Err(Error::Data(format!(
            "training segment of {} steps is too short for an input window of {input_horizon}",
            train.len()
        )));
    }
    let normalizer = Normalizer::fit(
        cube.counts
            .slice(s![train.clone(), ..])
            .iter()
            .map(|&c| c as f64),
    );
    Ok(DatasetSplit {
        train,
        validation,
        test,
        order,
        normalizer,
    })
}

impl DatasetSplit {
    /// Target indices usable for a model with `input_horizon` steps of history.
    pub fn targets(&self, segment: Segment, input_horizon: usize) -> Vec<usize> {
        let r = match segment {
            Segment::Train => &self.train,
            Segment::Validation => &self.validation,
            Segment::Test => &self.test,
        };
        r.clone().filter(|&t| t >= input_horizon).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Train,
    Validation,
    Test,
}

/// Window tensors for one mini-batch.
#[derive(Debug, Clone)]
pub struct Batch {
    /// B x T_in x N x 1 model inputs.
    pub inputs: Array4<f64>,
    /// B x T_in x W weather, when wired.
    pub weather: Option<Array3<f64>>,
    /// B x N targets.
    pub targets: Array2<f64>,
    pub target_index: Vec<usize>,
}

/// Model-ready series from which windows are cut.
#[derive(Debug, Clone)]
pub struct WindowSource {
    /// T x N input values (normalized or raw, per model).
    pub inputs: Array2<f64>,
    /// T x N targets.
    pub targets: Array2<f64>,
    /// T x W normalized weather.
    pub weather: Option<Array2<f64>>,
    pub input_horizon: usize,
}

impl WindowSource {
    pub fn new(
        inputs: Array2<f64>,
        targets: Array2<f64>,
        weather: Option<Array2<f64>>,
        input_horizon: usize,
    ) -> Result<Self> {
        if inputs.dim() != targets.dim() {
            return Err(Error::Shape("inputs and targets differ in shape".into()));
        }
        if let Some(w) = &weather {
            if w.nrows() != inputs.nrows() {
                return Err(Error::Shape(format!(
                    "weather has {} steps, observations have {}",
                    w.nrows(),
                    inputs.nrows()
                )));
            }
        }
        Ok(Self {
            inputs,
            targets,
            weather,
            input_horizon,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn weather_dim(&self) -> usize {
        self.weather.as_ref().map_or(0, |w| w.ncols())
    }

    /// Windows ending just before each target index.
    pub fn batch(&self, targets: &[usize]) -> Batch {
        let (b, h, n) = (targets.len(), self.input_horizon, self.n_nodes());
        let mut inputs = Array4::zeros((b, h, n, 1));
        let mut y = Array2::zeros((b, n));
        let mut weather = self.weather.as_ref().map(|w| Array3::zeros((b, h, w.ncols())));
        for (i, &t) in targets.iter().enumerate() {
            assert!(t >= h, "target {t} has no full input window");
            inputs
                .slice_mut(s![i, .., .., 0])
                .assign(&self.inputs.slice(s![t - h..t, ..]));
            y.row_mut(i).assign(&self.targets.row(t));
            if let (Some(dst), Some(src)) = (weather.as_mut(), self.weather.as_ref()) {
                dst.slice_mut(s![i, .., ..]).assign(&src.slice(s![t - h..t, ..]));
            }
        }
        Batch {
            inputs,
            weather,
            targets: y,
            target_index: targets.to_vec(),
        }
    }
}

/// Normalized weather matrix fitted on the train rows.
pub fn normalized_weather(weather: &WeatherSeries, split: &DatasetSplit) -> Array2<f64> {
    ColumnNormalizer::fit(&weather.values, split.train.clone()).apply(&weather.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::events::parse_timestamp;

    fn cube(t: usize) -> ObservationCube {
        let counts = Array2::from_shape_fn((t, 2), |(i, j)| (i + j) as u32);
        ObservationCube::new(
            parse_timestamp("2019-01-01T00:00:00Z").unwrap(),
            1,
            vec!["a".into(), "b".into()],
            counts,
        )
        .unwrap()
    }

    #[test]
    fn hundred_steps() {
        let s = chronological_split(&cube(100), [0.7, 0.2, 0.1], SegmentOrder::default(), 12).unwrap();
        assert_eq!((s.train.len(), s.test.len(), s.validation.len()), (70, 20, 10));
        assert_eq!((s.validation.start, s.test.start), (70, 80));
    }

    #[test]
    fn ten_steps() {
        assert_eq!(segment_lengths(10, [0.7, 0.2, 0.1]).unwrap(), [7, 2, 1]);
        assert_eq!(segment_lengths(11, [0.7, 0.2, 0.1]).unwrap().iter().sum::<usize>(), 11);
    }

    #[test]
    fn infeasible_window() {
        assert!(chronological_split(&cube(3), [0.7, 0.2, 0.1], SegmentOrder::default(), 12).is_err());
    }

    #[test]
    fn both_orders_cover_everything() {
        for order in [SegmentOrder::TrainValidationTest, SegmentOrder::TrainTestValidation] {
            let s = chronological_split(&cube(57), [0.7, 0.2, 0.1], order, 4).unwrap();
            let mut all: Vec<usize> = s.train.clone().chain(s.validation.clone()).chain(s.test.clone()).collect();
            all.sort();
            assert_eq!(all, (0..57).collect::<Vec<_>>());
            assert_eq!(s.validation.len() + s.test.len(), 57 - s.train.len());
        }
    }

    #[test]
    fn normalizer_roundtrip() {
        let n = Normalizer::fit([1.0, 2.0, 3.0, 10.0].into_iter());
        for x in [1.0, 2.0, 3.0, 10.0] {
            assert!((n.denormalize(n.normalize(x)) - x).abs() < 1e-12);
        }
        assert_eq!(Normalizer::fit([5.0, 5.0].into_iter()).std, 1.0);
    }

    #[test]
    fn batch_cuts_windows() {
        let c = cube(20);
        let src = WindowSource::new(c.as_f64(), c.as_f64(), None, 3).unwrap();
        let b = src.batch(&[3, 10]);
        assert_eq!(b.inputs.dim(), (2, 3, 2, 1));
        assert_eq!(b.inputs[[1, 2, 1, 0]], 10.0); // t=9, node b -> 9 + 1
        assert_eq!(b.targets[[1, 0]], 10.0);
    }
}
