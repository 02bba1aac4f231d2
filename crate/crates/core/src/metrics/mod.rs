//! Evaluation suite over tract-by-time predictions: MAE (all tracts and the
//! downtown subset), per-tract MAPE, KL divergence, interval width and
//! coverage, true-zero rate and F1.

pub mod dump;

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use dump::{read_distributions, read_predictions, write_distributions, write_predictions, DistributionDump, PredictionDump};

/// Guard added to both sides of the KL log ratio.
pub const KL_EPSILON: f64 = 2.2e-16;
pub const DOWNTOWN_SIZE: usize = 5;

fn check_same(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Mean absolute error over every cell of the selected tract columns.
pub fn mae(y: &Array2<f64>, y_hat: &Array2<f64>, columns: Option<&[usize]>) -> Result<f64> {
    check_same(y, y_hat)?;
    let all: Vec<usize> = (0..y.ncols()).collect();
    let cols = columns.unwrap_or(&all);
    if cols.is_empty() || y.nrows() == 0 {
        return Err(Error::Data("MAE over an empty subset".into()));
    }
    let mut total = 0.0;
    for &j in cols {
        for t in 0..y.nrows() {
            total += (y[[t, j]] - y_hat[[t, j]]).abs();
        }
    }
    Ok(total / (cols.len() * y.nrows()) as f64)
}

/// Column indices of the most populated tracts; ties go to the smaller id.
pub fn downtown_columns(tract_ids: &[String], population: &BTreeMap<String, u64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..tract_ids.len()).collect();
    idx.sort_by(|&a, &b| {
        let pa = population.get(&tract_ids[a]).copied().unwrap_or(0);
        let pb = population.get(&tract_ids[b]).copied().unwrap_or(0);
        pb.cmp(&pa).then_with(|| tract_ids[a].cmp(&tract_ids[b]))
    });
    idx.truncate(DOWNTOWN_SIZE);
    idx.sort_unstable();
    idx
}

/// Percent error per tract with a denominator of `max(y, 1)`.
pub fn mape_per_tract(y: &Array2<f64>, y_hat: &Array2<f64>) -> Result<Vec<f64>> {
    check_same(y, y_hat)?;
    let t = y.nrows().max(1) as f64;
    Ok((0..y.ncols())
        .map(|j| {
            y.column(j)
                .iter()
                .zip(y_hat.column(j))
                .map(|(a, b)| (a - b).abs() / a.max(1.0))
                .sum::<f64>()
                / t
                * 100.0
        })
        .collect())
}

/// `mean(y * ln((y + eps) / (y_hat + eps)))` over all cells.
pub fn kl_div(y: &Array2<f64>, y_hat: &Array2<f64>) -> Result<f64> {
    check_same(y, y_hat)?;
    if y.iter().chain(y_hat.iter()).any(|v| *v < 0.0) {
        return Err(Error::InvalidParameter("KL divergence needs nonnegative values".into()));
    }
    if y.is_empty() {
        return Err(Error::Data("KL divergence over no cells".into()));
    }
    let total: f64 = y
        .iter()
        .zip(y_hat.iter())
        .map(|(a, b)| if *a == 0.0 { 0.0 } else { a * ((a + KL_EPSILON) / (b + KL_EPSILON)).ln() })
        .sum();
    Ok(total / y.len() as f64)
}

fn check_interval(lo: &Array2<f64>, hi: &Array2<f64>) -> Result<()> {
    check_same(lo, hi)?;
    if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
        return Err(Error::InvalidParameter("lower quantile exceeds upper quantile".into()));
    }
    if lo.is_empty() {
        return Err(Error::Data("interval metrics over no cells".into()));
    }
    Ok(())
}

pub fn mpiw(lo: &Array2<f64>, hi: &Array2<f64>) -> Result<f64> {
    check_interval(lo, hi)?;
    Ok(lo.iter().zip(hi.iter()).map(|(l, h)| h - l).sum::<f64>() / lo.len() as f64)
}

/// Fraction of observed cells inside the predicted interval.
pub fn picp(y: &Array2<f64>, lo: &Array2<f64>, hi: &Array2<f64>) -> Result<f64> {
    check_interval(lo, hi)?;
    check_same(y, lo)?;
    let inside = ndarray::Zip::from(y)
        .and(lo)
        .and(hi)
        .fold(0usize, |acc, y, l, h| acc + usize::from(l <= y && y <= h));
    Ok(inside as f64 / y.len() as f64)
}

fn class(v: f64) -> i64 {
    v.round() as i64
}

/// Share of zero observations whose rounded prediction is also zero;
/// `None` without zero observations.
pub fn true_zero_rate(y: &Array2<f64>, y_hat: &Array2<f64>) -> Result<Option<f64>> {
    check_same(y, y_hat)?;
    let (mut zeros, mut hits) = (0usize, 0usize);
    for (a, b) in y.iter().zip(y_hat.iter()) {
        if class(*a) == 0 {
            zeros += 1;
            hits += usize::from(class(*b) == 0);
        }
    }
    Ok((zeros > 0).then(|| hits as f64 / zeros as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Average {
    #[default]
    Micro,
    Macro,
}

/// F1 over rounded integer classes. Micro averaging over single-label
/// classes equals accuracy.
pub fn f1(y: &Array2<f64>, y_hat: &Array2<f64>, average: F1Average) -> Result<f64> {
    check_same(y, y_hat)?;
    if y.is_empty() {
        return Err(Error::Data("F1 over no cells".into()));
    }
    let pairs: Vec<(i64, i64)> = y.iter().zip(y_hat.iter()).map(|(a, b)| (class(*a), class(*b))).collect();
    match average {
        F1Average::Micro => {
            let correct = pairs.iter().filter(|(a, b)| a == b).count();
            Ok(correct as f64 / pairs.len() as f64)
        }
        F1Average::Macro => {
            let classes: BTreeSet<i64> = pairs.iter().flat_map(|(a, b)| [*a, *b]).collect();
            let mut total = 0.0;
            for c in &classes {
                let tp = pairs.iter().filter(|(a, b)| a == c && b == c).count() as f64;
                let fp = pairs.iter().filter(|(a, b)| a != c && b == c).count() as f64;
                let fneg = pairs.iter().filter(|(a, b)| a == c && b != c).count() as f64;
                total += 2.0 * tp / (2.0 * tp + fp + fneg);
            }
            Ok(total / classes.len() as f64)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub model: String,
    pub variant: String,
    pub split: String,
    pub converged: bool,
    pub mae_tract: Option<f64>,
    pub mae_downtown: Option<f64>,
    pub mape_mean: Option<f64>,
    pub mape_per_tract: BTreeMap<String, f64>,
    pub kl_div: Option<f64>,
    pub mpiw: Option<f64>,
    pub picp: Option<f64>,
    pub true_zero_rate: Option<f64>,
    pub f1: Option<f64>,
    pub note: Option<String>,
}

/// Interval bounds from a probabilistic model.
pub struct Interval<'a> {
    pub lower: &'a Array2<f64>,
    pub upper: &'a Array2<f64>,
}

impl MetricsReport {
    /// Report of nulls for a run that did not converge.
    pub fn not_converged(dataset: &str, model: &str, variant: &str, split: &str, note: String) -> Self {
        Self {
            dataset: dataset.into(),
            model: model.into(),
            variant: variant.into(),
            split: split.into(),
            converged: false,
            note: Some(note),
            ..Default::default()
        }
    }

    /// Computes every metric. `y_hat` must already be in count units.
    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        dataset: &str,
        model: &str,
        variant: &str,
        split: &str,
        tract_ids: &[String],
        population: &BTreeMap<String, u64>,
        y: &Array2<f64>,
        y_hat: &Array2<f64>,
        interval: Option<Interval<'_>>,
        f1_average: F1Average,
    ) -> Result<Self> {
        check_same(y, y_hat)?;
        if tract_ids.len() != y.ncols() {
            return Err(Error::Shape("tract ids do not match prediction columns".into()));
        }
        if y_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("predictions".into()));
        }
        let mape = mape_per_tract(y, y_hat)?;
        let downtown = downtown_columns(tract_ids, population);
        let (mpiw_v, picp_v) = match interval {
            Some(iv) => (Some(mpiw(iv.lower, iv.upper)?), Some(picp(y, iv.lower, iv.upper)?)),
            None => (None, None),
        };
        Ok(Self {
            dataset: dataset.into(),
            model: model.into(),
            variant: variant.into(),
            split: split.into(),
            converged: true,
            mae_tract: Some(mae(y, y_hat, None)?),
            mae_downtown: Some(mae(y, y_hat, Some(&downtown))?),
            mape_mean: Some(mape.iter().sum::<f64>() / mape.len().max(1) as f64),
            mape_per_tract: tract_ids.iter().cloned().zip(mape).collect(),
            kl_div: Some(kl_div(y, y_hat)?),
            mpiw: mpiw_v,
            picp: picp_v,
            true_zero_rate: true_zero_rate(y, y_hat)?,
            f1: Some(f1(y, y_hat, f1_average)?),
            note: None,
        })
    }
}
