use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::ingest::features::{Category, FeatureTable};
use crate::{Error, Result};

/// Feature groups whose node-to-node correlations weight the graph.
/// `Poi` combines the economy and road categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationGroup {
    Demography,
    Land,
    Poi,
}

impl CorrelationGroup {
    pub const ALL: [CorrelationGroup; 3] = [
        CorrelationGroup::Demography,
        CorrelationGroup::Land,
        CorrelationGroup::Poi,
    ];

    pub fn categories(&self) -> &'static [Category] {
        match self {
            CorrelationGroup::Demography => &[Category::Demography],
            CorrelationGroup::Land => &[Category::Land],
            CorrelationGroup::Poi => &[Category::Economy, Category::Road],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CorrelationGroup::Demography => "demography",
            CorrelationGroup::Land => "land",
            CorrelationGroup::Poi => "poi",
        }
    }
}

impl std::str::FromStr for CorrelationGroup {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "demography" => Ok(Self::Demography),
            "land" => Ok(Self::Land),
            "poi" => Ok(Self::Poi),
            other => Err(Error::Config(format!("unknown correlation group {other:?}"))),
        }
    }
}

/// Pearson correlation; `None` when either vector is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    let den = (va * vb).sqrt();
    if den < 1e-300 || va.sqrt() < 1e-12 * n.sqrt() || vb.sqrt() < 1e-12 * n.sqrt() {
        return None;
    }
    Some((cov / den).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationStack {
    pub tract_ids: Vec<String>,
    pub groups: Vec<CorrelationGroup>,
    /// One N x N matrix of |Pearson| per group.
    pub matrices: Vec<Array2<f64>>,
}

/// Z-scores each feature column across nodes. Constant columns become zero.
fn zscore_columns(values: &Array2<f64>) -> Array2<f64> {
    let mut out = values.clone();
    for mut col in out.columns_mut() {
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let std = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        if std > 1e-12 * mean.abs().max(1.0) {
            col.mapv_inplace(|x| (x - mean) / std);
        } else {
            col.fill(0.0);
        }
    }
    out
}

/// Magnitude of node-to-node Pearson correlation per feature group, over
/// z-scored features. Nodes with a constant group vector get correlation 0.
pub fn node_correlations(
    features: &FeatureTable,
    groups: &[CorrelationGroup],
) -> Result<CorrelationStack> {
    if groups.is_empty() {
        return Err(Error::InvalidParameter("at least one correlation group required".into()));
    }
    if features.missing_cells() > 0 {
        return Err(Error::Data("feature table still has missing cells; impute first".into()));
    }
    let z = zscore_columns(&features.values);
    let n = features.n_tracts();
    let mut matrices = Vec::with_capacity(groups.len());
    for group in groups {
        let cols: Vec<usize> = group
            .categories()
            .iter()
            .flat_map(|c| features.category_columns(*c))
            .collect();
        if cols.len() < 2 {
            return Err(Error::Data(format!(
                "group {} has {} feature columns, need at least 2",
                group.name(),
                cols.len()
            )));
        }
        // Unit-norm centered node vectors; None for constant nodes.
        let units: Vec<Option<Array1<f64>>> = (0..n)
            .map(|i| {
                let v: Array1<f64> = cols.iter().map(|&j| z[[i, j]]).collect();
                let m = v.mean().unwrap_or(0.0);
                let c = v.mapv(|x| x - m);
                let norm = c.dot(&c).sqrt();
                if norm > 1e-12 {
                    Some(c / norm)
                } else {
                    log::warn!(
                        "tract {} has a constant {} vector; correlations set to 0",
                        features.tract_ids[i],
                        group.name()
                    );
                    None
                }
            })
            .collect();
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            let Some(ui) = &units[i] else { continue };
            m[[i, i]] = 1.0;
            for j in i + 1..n {
                if let Some(uj) = &units[j] {
                    let r = ui.dot(uj).abs().min(1.0);
                    m[[i, j]] = r;
                    m[[j, i]] = r;
                }
            }
        }
        matrices.push(m);
    }
    Ok(CorrelationStack {
        tract_ids: features.tract_ids.clone(),
        groups: groups.to_vec(),
        matrices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(pearson(&[1.0, 1.0], &[1.0, 2.0]).is_none());
    }
}
