//! Seeded synthetic cities and count processes for tests and desk-scale
//! experiments.
//!
//! A city is a jittered grid of square tracts around Chicago's loop with
//! features drawn from latent clusters. Count processes range from trivial
//! (constant, i.i.d. ZINB) to signals that need weather, graph diffusion or
//! cluster structure to forecast well.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Utc};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::graph::{distance_kernel, pairwise_distances};
use crate::ingest::features::{
    Category, DEMOGRAPHY_FEATURES, ECONOMY_FEATURES, LAND_FEATURES, ROAD_FEATURES, WALKSCORE,
};
use crate::ingest::tracts::{polygon_area_sqmi, write_tracts};
use crate::ingest::weather::{resample_weather, write_hourly_weather, HourlyWeather};
use crate::ingest::{FeatureTable, LatLon, ObservationCube, Polygon, TractGeometry, WeatherSeries};
use crate::{Error, Result};

pub const ORIGIN: LatLon = LatLon {
    lat: 41.88,
    lon: -87.63,
};
pub const SPACING_KM: f64 = 4.0;
pub const N_CLUSTERS: usize = 3;
/// Std of per-tract feature noise relative to unit-norm cluster centroids.
pub const FEATURE_NOISE: f64 = 0.05;
/// Period of the dominant weather cycle. Not a divisor of 24 so that a
/// time-of-day average cannot absorb it.
pub const WEATHER_PERIOD_HOURS: f64 = 37.0;

#[derive(Debug, Clone)]
pub struct SyntheticCity {
    pub seed: u64,
    pub tracts: Vec<TractGeometry>,
    pub features: FeatureTable,
    /// Latent cluster of each tract, in tract order.
    pub clusters: Vec<usize>,
    pub n_clusters: usize,
}

impl SyntheticCity {
    pub fn n_tracts(&self) -> usize {
        self.tracts.len()
    }

    pub fn tract_ids(&self) -> Vec<String> {
        self.tracts.iter().map(|t| t.tract_id.clone()).collect()
    }

    /// Distance-kernel adjacency at the default parameters.
    pub fn distance_adjacency(&self) -> Result<Array2<f64>> {
        distance_kernel(&pairwise_distances(&self.tracts)?, 10.0, 0.3)
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Zero-mean, mutually orthogonal unit vectors of length `dim`.
fn orthogonal_centroids(k: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut basis: Vec<Vec<f64>> = vec![vec![1.0 / (dim as f64).sqrt(); dim]];
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v.clone());
        out.push(v);
    }
    out
}

fn square(center: LatLon, half_km: f64) -> Polygon {
    let dlat = half_km / 111.0;
    let dlon = half_km / (111.0 * center.lat.to_radians().cos());
    Polygon::new(vec![
        LatLon::new(center.lat - dlat, center.lon - dlon),
        LatLon::new(center.lat - dlat, center.lon + dlon),
        LatLon::new(center.lat + dlat, center.lon + dlon),
        LatLon::new(center.lat + dlat, center.lon - dlon),
    ])
}

/// Grid city of `n` tracts whose features follow [`N_CLUSTERS`] latent
/// clusters, spatially interleaved at random.
pub fn gen_city(n: usize, seed: u64) -> Result<SyntheticCity> {
    gen_city_with(n, seed, N_CLUSTERS, FEATURE_NOISE)
}

pub fn gen_city_with(n: usize, seed: u64, n_clusters: usize, noise: f64) -> Result<SyntheticCity> {
    if n < 4 {
        return Err(Error::InvalidParameter(format!("synthetic city needs at least 4 tracts, got {n}")));
    }
    // Land has four columns, so at most three zero-mean orthogonal centroids.
    if n_clusters == 0 || n_clusters > 3 || n_clusters > n {
        return Err(Error::InvalidParameter(format!("cluster count {n_clusters} must be in 1..=3 and at most N")));
    }
    let mut rng = rng_for(seed, 1);
    let cols = (n as f64).sqrt().ceil() as usize;
    let jitter = Normal::new(0.0, 0.1).unwrap();
    let mut clusters: Vec<usize> = (0..n).map(|i| i % n_clusters).collect();
    clusters.shuffle(&mut rng);

    let mut tracts = Vec::with_capacity(n);
    for i in 0..n {
        let (r, c) = ((i / cols) as f64, (i % cols) as f64);
        let north = r * SPACING_KM + jitter.sample(&mut rng);
        let east = c * SPACING_KM + jitter.sample(&mut rng);
        let centroid = LatLon::new(
            ORIGIN.lat + north / 111.0,
            ORIGIN.lon + east / (111.0 * ORIGIN.lat.to_radians().cos()),
        );
        let polygons = vec![square(centroid, SPACING_KM / 2.0 * 0.95)];
        let area_sqmi = polygon_area_sqmi(&polygons, centroid.lat);
        tracts.push(TractGeometry {
            tract_id: format!("17031{:06}", 100 + i),
            centroid,
            polygons,
            population: rng.random_range(1_000..8_000),
            area_sqmi,
        });
    }

    let mut names: Vec<(String, Category)> = Vec::new();
    names.extend(DEMOGRAPHY_FEATURES.iter().map(|f| (f.to_string(), Category::Demography)));
    names.extend(ECONOMY_FEATURES.iter().map(|f| (f.to_string(), Category::Economy)));
    names.extend(ROAD_FEATURES.iter().map(|f| (f.to_string(), Category::Road)));
    names.push((WALKSCORE.to_string(), Category::Road));
    names.extend(LAND_FEATURES.iter().map(|f| (f.to_string(), Category::Land)));

    let mut values = Array2::<f64>::zeros((n, names.len()));
    let feature_noise = Normal::new(0.0, noise.max(0.0)).unwrap();
    for group in [
        vec![Category::Demography],
        vec![Category::Economy, Category::Road],
        vec![Category::Land],
    ] {
        let idx: Vec<usize> = (0..names.len()).filter(|&j| group.contains(&names[j].1)).collect();
        let centroids = orthogonal_centroids(n_clusters, idx.len(), &mut rng);
        for i in 0..n {
            for (k, &j) in idx.iter().enumerate() {
                let v = centroids[clusters[i]][k] + feature_noise.sample(&mut rng);
                values[[i, j]] = 50.0 + 20.0 * v;
            }
        }
    }
    let categories: BTreeMap<String, Category> = names.iter().cloned().collect();
    let features = FeatureTable::new(
        tracts.iter().map(|t| t.tract_id.clone()).collect(),
        names.into_iter().map(|(f, _)| f).collect(),
        values,
        categories,
    )?;
    Ok(SyntheticCity {
        seed,
        tracts,
        features,
        clusters,
        n_clusters,
    })
}

/// Ground-truth count processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Process {
    /// Poisson with a fixed rate; `lambda = 0` gives an all-zero cube.
    Constant { lambda: f64 },
    /// I.i.d. zero-inflated negative binomial cells.
    Zinb { n: f64, p: f64, pi: f64 },
    /// ZINB whose NB mean is scaled by `exp(coupling * temperature_anomaly)`
    /// and whose zero inflation drifts slowly around `pi`.
    WeatherCoupled {
        mean: f64,
        n: f64,
        pi: f64,
        coupling: f64,
    },
    /// Log-intensity follows `x(t+1) = rho * P x(t) + P^2 e(t)` with `P` the
    /// row-normalized distance kernel (self loops included), so neighbours
    /// carry predictive signal.
    SmoothDiffusion { mean: f64, rho: f64, noise: f64 },
    /// Log-intensity of each tract is its cluster's AR(1) signal plus a
    /// little tract noise; counts are Poisson.
    Clustered { mean: f64, rho: f64, noise: f64 },
}

impl Process {
    pub fn weather_coupled() -> Self {
        Process::WeatherCoupled {
            mean: 15.0,
            n: 8.0,
            pi: 0.08,
            coupling: 0.6,
        }
    }

    pub fn smooth_diffusion() -> Self {
        Process::SmoothDiffusion {
            mean: 20.0,
            rho: 0.97,
            noise: 0.1,
        }
    }

    pub fn clustered() -> Self {
        Process::Clustered {
            mean: 4.0,
            rho: 0.95,
            noise: 0.25,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match *self {
            Process::Constant { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => bad("lambda must be >= 0"),
            Process::Zinb { n, p, pi } | Process::WeatherCoupled { n, mean: p, pi, .. }
                if !(n > 0.0 && p > 0.0 && (0.0..1.0).contains(&pi)) =>
            {
                bad("ZINB process needs n > 0, p (or mean) > 0 and pi in [0, 1)")
            }
            Process::Zinb { p, .. } if p >= 1.0 => bad("p must be below 1"),
            Process::SmoothDiffusion { mean, rho, .. } | Process::Clustered { mean, rho, .. }
                if !(mean > 0.0 && (0.0..1.0).contains(&rho)) =>
            {
                bad("latent processes need mean > 0 and rho in [0, 1)")
            }
            _ => Ok(()),
        }
    }
}

/// Generated counts, weather and the per-cell expected value.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub cube: ObservationCube,
    pub hourly_weather: Vec<HourlyWeather>,
    pub weather: WeatherSeries,
    /// `T x N` expected counts under the process.
    pub expected: Array2<f64>,
    pub record: GenerativeRecord,
}

/// Parameters needed to check recovery against the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeRecord {
    pub city_seed: u64,
    pub n_tracts: usize,
    pub n_steps: usize,
    pub process: Process,
    pub clusters: Vec<usize>,
    /// Per-tract multiplicative base rate, where the process has one.
    pub tract_scale: Vec<f64>,
}

pub fn start_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap()
}

/// Hourly weather: a 37-hour temperature cycle with AR(1) noise, a slower
/// humidity cycle, wind and occasional rain. Returns the rows and the
/// standardized temperature anomaly per hour.
fn gen_weather(hours: usize, rng: &mut ChaCha8Rng) -> (Vec<HourlyWeather>, Vec<f64>) {
    let unit = Normal::new(0.0, 1.0).unwrap();
    let start = start_time();
    let tau = std::f64::consts::TAU;
    let mut ar = 0.0;
    let mut dir: f64 = 180.0;
    let mut rows = Vec::with_capacity(hours);
    let mut anomaly = Vec::with_capacity(hours);
    for h in 0..hours {
        ar = 0.9 * ar + 0.3 * unit.sample(rng);
        let a = (tau * h as f64 / WEATHER_PERIOD_HOURS).sin() + ar;
        anomaly.push(a);
        let temperature = 10.0 + 8.0 * a;
        let humidity = (60.0 + 15.0 * (tau * h as f64 / 53.0).cos() + 3.0 * unit.sample(rng)).clamp(0.0, 100.0);
        let wind = (5.0 + 1.5 * unit.sample(rng)).max(0.0);
        dir = (dir + 15.0 * unit.sample(rng)).rem_euclid(360.0);
        let rain = if rng.random::<f64>() < 0.05 { rng.random::<f64>() * 2.0 } else { 0.0 };
        rows.push(HourlyWeather {
            timestamp: start + Duration::hours(h as i64),
            values: [Some(temperature), Some(humidity), Some(wind), Some(dir), Some(rain), Some(0.0)],
        });
    }
    (rows, anomaly)
}

/// Gamma-Poisson draw with mean `mean` and dispersion `n`, which is the NB
/// of the `p^y (1-p)^n` convention with `p = mean / (mean + n)`.
fn nb_draw(mean: f64, n: f64, rng: &mut ChaCha8Rng) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let lambda = Gamma::new(n, mean / n).unwrap().sample(rng);
    poisson_draw(lambda, rng)
}

fn poisson_draw(lambda: f64, rng: &mut ChaCha8Rng) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).unwrap().sample(rng) as u32
}

fn row_normalized_with_self(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut p = a + &Array2::<f64>::eye(n);
    for mut row in p.rows_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}

/// Draws `t` hourly steps of `process` on `city`.
pub fn gen_counts(city: &SyntheticCity, t: usize, process: &Process) -> Result<SyntheticData> {
    if t < 200 {
        return Err(Error::InvalidParameter(format!("synthetic series needs at least 200 steps, got {t}")));
    }
    process.validate()?;
    let n = city.n_tracts();
    let mut rng = rng_for(city.seed, 2);
    let (hourly_weather, anomaly) = gen_weather(t, &mut rng);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let mut counts = Array2::<u32>::zeros((t, n));
    let mut expected = Array2::<f64>::zeros((t, n));
    let mut tract_scale = vec![1.0; n];

    match *process {
        Process::Constant { lambda } => {
            for v in counts.iter_mut() {
                *v = poisson_draw(lambda, &mut rng);
            }
            expected.fill(lambda);
        }
        Process::Zinb { n: shape, p, pi } => {
            let mean = shape * p / (1.0 - p);
            for v in counts.iter_mut() {
                *v = if rng.random::<f64>() < pi { 0 } else { nb_draw(mean, shape, &mut rng) };
            }
            expected.fill((1.0 - pi) * mean);
        }
        Process::WeatherCoupled {
            mean,
            n: shape,
            pi,
            coupling,
        } => {
            for s in tract_scale.iter_mut() {
                *s = rng.random_range(0.8..1.25);
            }
            let phase: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
            for step in 0..t {
                for i in 0..n {
                    let mu = mean * tract_scale[i] * (coupling * anomaly[step]).exp();
                    let drift = 0.5 * pi * (std::f64::consts::TAU * step as f64 / 500.0 + phase[i]).sin();
                    let pi_t = (pi + drift).clamp(0.0, 0.99);
                    counts[[step, i]] = if rng.random::<f64>() < pi_t { 0 } else { nb_draw(mu, shape, &mut rng) };
                    expected[[step, i]] = (1.0 - pi_t) * mu;
                }
            }
        }
        Process::SmoothDiffusion { mean, rho, noise } => {
            let p = row_normalized_with_self(&city.distance_adjacency()?);
            // Innovations are smoothed twice over the graph, then rescaled so
            // each node's innovation has standard deviation close to `noise`.
            let smooth = p.dot(&p);
            let rms = (smooth.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
            let burn_in = 500;
            let mut x = Array1::<f64>::zeros(n);
            for step in 0..burn_in + t {
                let white = Array1::from_shape_fn(n, |_| unit.sample(&mut rng));
                x = rho * p.dot(&x) + smooth.dot(&white) * (noise / rms);
                if step >= burn_in {
                    let s = step - burn_in;
                    for i in 0..n {
                        let lambda = mean * x[i].exp();
                        expected[[s, i]] = lambda;
                        counts[[s, i]] = poisson_draw(lambda, &mut rng);
                    }
                }
            }
        }
        Process::Clustered { mean, rho, noise } => {
            let innov = (1.0 - rho * rho).sqrt() * 0.6;
            let mut s = vec![0.0; city.n_clusters];
            for c in s.iter_mut() {
                *c = 0.6 * unit.sample(&mut rng);
            }
            for step in 0..t {
                for c in s.iter_mut() {
                    *c = rho * *c + innov * unit.sample(&mut rng);
                }
                for i in 0..n {
                    let lambda = mean * (s[city.clusters[i]] + noise * unit.sample(&mut rng)).exp();
                    expected[[step, i]] = lambda;
                    counts[[step, i]] = poisson_draw(lambda, &mut rng);
                }
            }
        }
    }

    let cube = ObservationCube::new(start_time(), 1, city.tract_ids(), counts)?;
    let weather = resample_weather(&hourly_weather, &cube)?;
    Ok(SyntheticData {
        cube,
        hourly_weather,
        weather,
        expected,
        record: GenerativeRecord {
            city_seed: city.seed,
            n_tracts: n,
            n_steps: t,
            process: process.clone(),
            clusters: city.clusters.clone(),
            tract_scale,
        },
    })
}

/// File names of a written fixture, relative to its directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixturePaths {
    pub tracts: PathBuf,
    pub features: PathBuf,
    pub feature_categories: PathBuf,
    pub counts: PathBuf,
    pub weather: PathBuf,
    pub truth: PathBuf,
}

impl FixturePaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            tracts: dir.join("tracts.geojson"),
            features: dir.join("features.csv"),
            feature_categories: dir.join("feature_categories.json"),
            counts: dir.join("counts.csv"),
            weather: dir.join("weather.csv"),
            truth: dir.join("generative_record.json"),
        }
    }
}

/// Writes the city and data in the ingestion schemas.
pub fn write_fixture(dir: &Path, city: &SyntheticCity, data: &SyntheticData) -> Result<FixturePaths> {
    let paths = FixturePaths::in_dir(dir);
    write_tracts(&paths.tracts, &city.tracts)?;
    city.features.write(&paths.features, &paths.feature_categories)?;
    data.cube.write(&paths.counts, None)?;
    write_hourly_weather(&paths.weather, &data.hourly_weather)?;
    crate::util::write_bytes(&paths.truth, serde_json::to_string_pretty(&data.record)?.as_bytes())?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn city_is_reproducible() {
        let a = gen_city(9, 3).unwrap();
        let b = gen_city(9, 3).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.tracts, b.tracts);
        assert!(gen_city(3, 0).is_err());
    }

    #[test]
    fn constant_zero_is_all_zero() {
        let city = gen_city(4, 0).unwrap();
        let d = gen_counts(&city, 200, &Process::Constant { lambda: 0.0 }).unwrap();
        assert_eq!(d.cube.total(), 0);
        assert!(gen_counts(&city, 199, &Process::Constant { lambda: 0.0 }).is_err());
    }

    #[test]
    fn weather_is_aligned() {
        let city = gen_city(4, 1).unwrap();
        let d = gen_counts(&city, 240, &Process::weather_coupled()).unwrap();
        d.weather.check_aligned(&d.cube).unwrap();
        assert_eq!(d.weather.values.ncols(), 5);
    }
}
