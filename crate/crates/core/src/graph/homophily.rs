use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::correlation::{node_correlations, CorrelationGroup, CorrelationStack};
use super::distance::{distance_kernel, pairwise_distances};
use crate::ingest::features::FeatureTable;
use crate::ingest::tracts::TractGeometry;
use crate::util::{csv_writer, finish_csv, fmt_f64, read_to_string, sha256_hex, write_bytes};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphParams {
    pub sigma: f64,
    pub epsilon: f64,
    pub groups: Vec<CorrelationGroup>,
    pub row_normalize: bool,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            epsilon: 0.3,
            groups: CorrelationGroup::ALL.to_vec(),
            row_normalize: false,
        }
    }
}

/// Distance-kernel adjacency and its homophily-weighted counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct HomophilyGraph {
    pub tract_ids: Vec<String>,
    pub distance_adjacency: Array2<f64>,
    pub adjacency: Array2<f64>,
    pub params: GraphParams,
}

/// Averages the Hadamard products of each correlation matrix with `a_d`.
pub fn homophily_embed(
    stack: &CorrelationStack,
    a_d: &Array2<f64>,
    tract_ids: &[String],
    row_normalize: bool,
) -> Result<Array2<f64>> {
    if stack.tract_ids != tract_ids {
        return Err(Error::Data("correlation and distance node orders differ".into()));
    }
    if stack.matrices.is_empty() {
        return Err(Error::InvalidParameter("empty correlation stack".into()));
    }
    let n = tract_ids.len();
    if a_d.dim() != (n, n) {
        return Err(Error::Shape(format!("adjacency {:?} for {n} nodes", a_d.dim())));
    }
    let mut out = Array2::zeros((n, n));
    for corr in &stack.matrices {
        if corr.dim() != (n, n) {
            return Err(Error::Shape("correlation matrix size mismatch".into()));
        }
        out = out + corr * a_d;
    }
    out /= stack.matrices.len() as f64;
    if row_normalize {
        for mut row in out.rows_mut() {
            let s = row.sum();
            if s > 0.0 {
                row /= s;
            }
        }
    }
    Ok(out)
}

/// Builds both adjacencies for tracts in the given order.
pub fn build_graph(
    tracts: &[TractGeometry],
    features: &FeatureTable,
    params: &GraphParams,
) -> Result<HomophilyGraph> {
    let ids: Vec<String> = tracts.iter().map(|t| t.tract_id.clone()).collect();
    let features = features.aligned_to(&ids)?;
    let d = pairwise_distances(tracts)?;
    let a_d = distance_kernel(&d, params.sigma, params.epsilon)?;
    let stack = node_correlations(&features, &params.groups)?;
    let adjacency = homophily_embed(&stack, &a_d, &ids, params.row_normalize)?;
    Ok(HomophilyGraph {
        tract_ids: ids,
        distance_adjacency: a_d,
        adjacency,
        params: params.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyManifest {
    pub kind: String,
    pub sigma: f64,
    pub epsilon: f64,
    pub groups: Vec<CorrelationGroup>,
    pub row_normalize: bool,
    pub nodes: usize,
    pub nonzero: usize,
    pub content_sha256: String,
}

/// Dense CSV with a header row of tract ids.
pub fn adjacency_csv(tract_ids: &[String], m: &Array2<f64>) -> Result<Vec<u8>> {
    let mut w = csv_writer();
    w.write_record(tract_ids)?;
    for row in m.rows() {
        w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
    }
    finish_csv(w)
}

pub fn parse_adjacency_csv(text: &str) -> Result<(Vec<String>, Array2<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let ids: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let n = ids.len();
    let mut flat = Vec::with_capacity(n * n);
    for rec in rdr.records() {
        for cell in rec?.iter() {
            flat.push(
                cell.parse::<f64>()
                    .map_err(|_| Error::Data(format!("adjacency cell {cell:?} is not a number")))?,
            );
        }
    }
    let m = Array2::from_shape_vec((flat.len() / n.max(1), n), flat)
        .map_err(|e| Error::Shape(e.to_string()))?;
    if m.nrows() != n {
        return Err(Error::Shape(format!("adjacency has {} rows for {n} ids", m.nrows())));
    }
    Ok((ids, m))
}

pub fn load_adjacency(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    parse_adjacency_csv(&read_to_string(path)?)
}

/// Row-major float grid without headers, for heatmap rendering.
pub fn heatmap_csv(m: &Array2<f64>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in m.rows() {
        w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
    }
    finish_csv(w)
}

impl HomophilyGraph {
    fn manifest(&self, kind: &str, m: &Array2<f64>, bytes: &[u8]) -> AdjacencyManifest {
        AdjacencyManifest {
            kind: kind.into(),
            sigma: self.params.sigma,
            epsilon: self.params.epsilon,
            groups: self.params.groups.clone(),
            row_normalize: self.params.row_normalize,
            nodes: self.tract_ids.len(),
            nonzero: m.iter().filter(|v| **v != 0.0).count(),
            content_sha256: sha256_hex(bytes),
        }
    }

    /// Writes both adjacencies, their manifests and heatmap grids into `dir`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        for (name, m) in [
            ("adjacency_distance", &self.distance_adjacency),
            ("adjacency_homophily", &self.adjacency),
        ] {
            let bytes = adjacency_csv(&self.tract_ids, m)?;
            write_bytes(&dir.join(format!("{name}.csv")), &bytes)?;
            let manifest = self.manifest(name, m, &bytes);
            write_bytes(
                &dir.join(format!("{name}.manifest.json")),
                serde_json::to_string_pretty(&manifest)?.as_bytes(),
            )?;
            write_bytes(&dir.join(format!("heatmap_{name}.csv")), &heatmap_csv(m)?)?;
        }
        Ok(())
    }
}
