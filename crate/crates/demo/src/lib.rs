//! wasm-bindgen bindings behind `www/index.html`. Every export returns a
//! JSON string so the page needs no generated type glue beyond the loader.

use hetgraph::autodiff::huber;
use hetgraph::graph::{distance_kernel, homophily_embed, node_correlations, pairwise_distances, CorrelationGroup};
use hetgraph::stzinb::Zinb;
use hetgraph::synth::gen_city;
use ndarray::Array2;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct GraphView {
    pub tract_ids: Vec<String>,
    pub clusters: Vec<usize>,
    pub distance: Vec<Vec<f64>>,
    pub homophily: Vec<Vec<f64>>,
    pub nonzero_distance: usize,
    pub nonzero_homophily: usize,
}

#[derive(Debug, Serialize)]
pub struct ZinbView {
    pub pmf: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub zero_mass: f64,
    pub q10: u64,
    pub q90: u64,
}

#[derive(Debug, Serialize)]
pub struct CurveView {
    pub r: Vec<f64>,
    pub huber: Vec<f64>,
    pub squared: Vec<f64>,
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Synthetic city of `n` tracts with both adjacencies at the given kernel
/// parameters.
pub fn graph_view(n: usize, seed: u64, sigma: f64, epsilon: f64) -> hetgraph::Result<GraphView> {
    let city = gen_city(n, seed)?;
    let ids = city.tract_ids();
    let a_d = distance_kernel(&pairwise_distances(&city.tracts)?, sigma, epsilon)?;
    let stack = node_correlations(&city.features, &CorrelationGroup::ALL)?;
    let a_h = homophily_embed(&stack, &a_d, &ids, false)?;
    let nz = |m: &Array2<f64>| m.iter().filter(|&&x| x != 0.0).count();
    Ok(GraphView {
        nonzero_distance: nz(&a_d),
        nonzero_homophily: nz(&a_h),
        distance: rows(&a_d),
        homophily: rows(&a_h),
        clusters: city.clusters,
        tract_ids: ids,
    })
}

pub fn zinb_view(n: f64, p: f64, pi: f64, y_max: u64) -> hetgraph::Result<ZinbView> {
    let z = Zinb::new(n, p, pi)?;
    Ok(ZinbView {
        pmf: (0..=y_max).map(|y| z.pmf(y)).collect(),
        mean: z.mean(),
        variance: z.variance(),
        zero_mass: z.pmf(0),
        q10: z.quantile(0.1),
        q90: z.quantile(0.9),
    })
}

pub fn huber_view(delta: f64, r_max: f64, steps: usize) -> CurveView {
    let steps = steps.max(2);
    let r: Vec<f64> = (0..steps)
        .map(|i| -r_max + 2.0 * r_max * i as f64 / (steps - 1) as f64)
        .collect();
    CurveView {
        huber: r.iter().map(|&x| huber(x, delta)).collect(),
        squared: r.iter().map(|&x| 0.5 * x * x).collect(),
        r,
    }
}

fn to_js<T: Serialize>(v: hetgraph::Result<T>) -> Result<String, JsError> {
    let v = v.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn graph(n: usize, seed: u32, sigma: f64, epsilon: f64) -> Result<String, JsError> {
    to_js(graph_view(n, seed as u64, sigma, epsilon))
}

#[wasm_bindgen]
pub fn zinb(n: f64, p: f64, pi: f64, y_max: u32) -> Result<String, JsError> {
    to_js(zinb_view(n, p, pi, y_max as u64))
}

#[wasm_bindgen]
pub fn huber_curve(delta: f64, r_max: f64, steps: usize) -> Result<String, JsError> {
    to_js(Ok(huber_view(delta, r_max, steps)))
}
