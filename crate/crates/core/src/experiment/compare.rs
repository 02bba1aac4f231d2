//! Per-tract MAPE differences between two evaluated runs, for choropleths.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{read_json, write_json};
use crate::ingest::tracts::{tracts_to_geojson, TractGeometry};
use crate::metrics::{read_predictions, MetricsReport};
use crate::util::{csv_writer, finish_csv, fmt_f64, write_bytes};
use crate::{Error, Result};

/// Test-period total at or below which a tract is flagged as low activity.
pub const LOW_ACTIVITY_MAX_EVENTS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapeDelta {
    pub tract_id: String,
    pub mape_a: f64,
    pub mape_b: f64,
    /// `mape_b - mape_a`; negative means B improved.
    pub delta: f64,
    pub low_activity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub run_a: String,
    pub run_b: String,
    pub n_tracts: usize,
    pub improved_percent: f64,
    pub n_low_activity: usize,
    pub tracts: Vec<MapeDelta>,
}

fn load(dir: &Path) -> Result<MetricsReport> {
    let r: MetricsReport = read_json(&dir.join("metrics.json"))?;
    if r.mape_per_tract.is_empty() {
        return Err(Error::Data(format!("{} has no per-tract MAPE (run did not converge?)", dir.display())));
    }
    Ok(r)
}

/// Compares column directories `a` and `b` (each holding `metrics.json`
/// and `predictions.csv`).
pub fn compare(a: &Path, b: &Path) -> Result<CompareSummary> {
    let (ra, rb) = (load(a)?, load(b)?);
    let ids_a: Vec<&String> = ra.mape_per_tract.keys().collect();
    let ids_b: Vec<&String> = rb.mape_per_tract.keys().collect();
    if ids_a != ids_b {
        return Err(Error::Data("runs cover different tract sets".into()));
    }
    let pa = read_predictions(&a.join("predictions.csv"))?;
    let pb = read_predictions(&b.join("predictions.csv"))?;
    if pa.timestamps != pb.timestamps || pa.tract_ids != pb.tract_ids {
        return Err(Error::Data("runs were evaluated on different test periods".into()));
    }
    let totals: BTreeMap<&String, f64> = pa.tract_ids.iter().zip(pa.y.sum_axis(ndarray::Axis(0))).collect();
    let tracts: Vec<MapeDelta> = ra
        .mape_per_tract
        .iter()
        .map(|(id, &ma)| {
            let mb = rb.mape_per_tract[id];
            MapeDelta {
                tract_id: id.clone(),
                mape_a: ma,
                mape_b: mb,
                delta: mb - ma,
                low_activity: totals.get(id).is_some_and(|&s| s <= LOW_ACTIVITY_MAX_EVENTS),
            }
        })
        .collect();
    let improved = tracts.iter().filter(|t| t.delta < 0.0).count();
    Ok(CompareSummary {
        run_a: a.display().to_string(),
        run_b: b.display().to_string(),
        n_tracts: tracts.len(),
        improved_percent: 100.0 * improved as f64 / tracts.len().max(1) as f64,
        n_low_activity: tracts.iter().filter(|t| t.low_activity).count(),
        tracts,
    })
}

impl CompareSummary {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv_writer();
        w.write_record(["tract_id", "mape_a", "mape_b", "delta_mape", "low_activity"])?;
        for t in &self.tracts {
            w.write_record([
                t.tract_id.clone(),
                fmt_f64(t.mape_a),
                fmt_f64(t.mape_b),
                fmt_f64(t.delta),
                t.low_activity.to_string(),
            ])?;
        }
        finish_csv(w)
    }

    /// Tract polygons carrying `delta_mape`, `mape_a`, `mape_b` and
    /// `low_activity` properties.
    pub fn to_geojson(&self, tracts: &[TractGeometry]) -> Result<Value> {
        let mut props: BTreeMap<String, Map<String, Value>> = BTreeMap::new();
        for t in &self.tracts {
            let mut m = Map::new();
            m.insert("delta_mape".into(), json!(t.delta));
            m.insert("mape_a".into(), json!(t.mape_a));
            m.insert("mape_b".into(), json!(t.mape_b));
            m.insert("low_activity".into(), json!(t.low_activity));
            props.insert(t.tract_id.clone(), m);
        }
        if let Some(missing) = self.tracts.iter().find(|t| !tracts.iter().any(|g| g.tract_id == t.tract_id)) {
            return Err(Error::Data(format!("tract {} missing from the geometry file", missing.tract_id)));
        }
        Ok(tracts_to_geojson(tracts, Some(&props)))
    }

    /// Writes `mape_diff.csv`, `compare.json` and, with geometry,
    /// `mape_diff.geojson`.
    pub fn write(&self, dir: &Path, tracts: Option<&[TractGeometry]>) -> Result<()> {
        write_bytes(&dir.join("mape_diff.csv"), &self.to_csv()?)?;
        write_json(&dir.join("compare.json"), self)?;
        if let Some(t) = tracts {
            let gj = self.to_geojson(t)?;
            write_bytes(&dir.join("mape_diff.geojson"), serde_json::to_string_pretty(&gj)?.as_bytes())?;
        }
        Ok(())
    }
}
