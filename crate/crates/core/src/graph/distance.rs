use ndarray::Array2;

use crate::ingest::tracts::{haversine_km, TractGeometry};
use crate::{Error, Result};

/// Inter-centroid great-circle distances in kilometers.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub tract_ids: Vec<String>,
    pub km: Array2<f64>,
}

pub fn pairwise_distances(tracts: &[TractGeometry]) -> Result<DistanceMatrix> {
    let n = tracts.len();
    if n < 2 {
        return Err(Error::Data(format!("need at least 2 tracts, got {n}")));
    }
    let mut km = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let d = haversine_km(tracts[i].centroid, tracts[j].centroid);
            if d == 0.0 {
                log::warn!(
                    "tracts {} and {} share a centroid",
                    tracts[i].tract_id,
                    tracts[j].tract_id
                );
            }
            km[[i, j]] = d;
            km[[j, i]] = d;
        }
    }
    Ok(DistanceMatrix {
        tract_ids: tracts.iter().map(|t| t.tract_id.clone()).collect(),
        km,
    })
}

/// Thresholded Gaussian kernel: `exp(-d^2 / sigma^2)` off the diagonal when
/// it reaches `epsilon`, zero otherwise.
pub fn distance_kernel(d: &DistanceMatrix, sigma: f64, epsilon: f64) -> Result<Array2<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in [0, 1], got {epsilon}"
        )));
    }
    let s2 = sigma * sigma;
    Ok(Array2::from_shape_fn(d.km.dim(), |(i, j)| {
        if i == j {
            return 0.0;
        }
        let w = (-d.km[[i, j]].powi(2) / s2).exp();
        if w >= epsilon {
            w
        } else {
            0.0
        }
    }))
}
