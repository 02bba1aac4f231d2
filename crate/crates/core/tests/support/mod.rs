//! Fixture builders shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use hetgraph::ingest::features::{Category, FeatureTable};
use hetgraph::ingest::tracts::{LatLon, TractGeometry};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tract(id: &str, lat: f64, lon: f64) -> TractGeometry {
    TractGeometry {
        tract_id: id.to_string(),
        centroid: LatLon::new(lat, lon),
        polygons: Vec::new(),
        population: 1000,
        area_sqmi: 1.0,
    }
}

/// Degrees of latitude spanning `km` along a meridian.
pub fn lat_deg(km: f64) -> f64 {
    km / (6371.0 * std::f64::consts::PI / 180.0)
}

/// Columns per category for the small random tables.
pub const LAYOUT: [(Category, usize); 4] = [
    (Category::Demography, 4),
    (Category::Economy, 2),
    (Category::Road, 2),
    (Category::Land, 3),
];

/// Column indices of the demography, land and poi (economy + road)
/// groups under [`LAYOUT`].
pub fn layout_groups() -> Vec<Vec<usize>> {
    vec![vec![0, 1, 2, 3], vec![8, 9, 10], vec![4, 5, 6, 7]]
}

pub fn feature_table(ids: &[String], rows: &[Vec<f64>]) -> FeatureTable {
    let mut names = Vec::new();
    let mut cats = BTreeMap::new();
    for (cat, k) in LAYOUT {
        for i in 0..k {
            let name = format!("{cat:?}{i}");
            cats.insert(name.clone(), cat);
            names.push(name);
        }
    }
    let m = names.len();
    let values = Array2::from_shape_fn((ids.len(), m), |(i, j)| rows[i][j]);
    FeatureTable::new(ids.to_vec(), names, values, cats).unwrap()
}

pub fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), rows[0].len()), |(i, j)| rows[i][j])
}

pub fn max_abs_diff(a: &Array2<f64>, b: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, row) in b.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((a[[i, j]] - v).abs());
        }
    }
    worst
}

/// `|a - b| / max(1, |b|)`: absolute near zero, relative for large values.
pub fn scaled_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub struct MetricFixture {
    pub y: Array2<f64>,
    pub y_hat: Array2<f64>,
    pub lo: Array2<f64>,
    pub hi: Array2<f64>,
}

/// Sparse integer observations with real-valued predictions and a
/// prediction interval around them.
pub fn metric_fixture(seed: u64) -> MetricFixture {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let (t, n) = (r.random_range(1..30), r.random_range(1..9));
    let y = Array2::from_shape_fn((t, n), |_| {
        if r.random_bool(0.5) {
            0.0
        } else {
            r.random_range(1..15) as f64
        }
    });
    let y_hat = Array2::from_shape_fn((t, n), |_| {
        if r.random_bool(0.2) {
            0.0
        } else {
            r.random_range(0.0..12.0)
        }
    });
    let lo = y_hat.mapv(|v| (v - 3.0f64).max(0.0).floor());
    let hi = y_hat.mapv(|v| (v + 3.0f64).ceil());
    MetricFixture { y, y_hat, lo, hi }
}
