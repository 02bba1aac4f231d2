//! Long-format CSV dumps shared by every model: one row per
//! (timestamp, tract).

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::ingest::events::parse_timestamp;
use crate::util::{csv_writer, finish_csv, fmt_f64, read_to_string, write_bytes};
use crate::{Error, Result};

/// Point predictions in count units, `T x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDump {
    pub timestamps: Vec<DateTime<Utc>>,
    pub tract_ids: Vec<String>,
    pub y: Array2<f64>,
    pub y_hat: Array2<f64>,
}

/// Per-cell ZINB parameters with derived mean and interval bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionDump {
    pub timestamps: Vec<DateTime<Utc>>,
    pub tract_ids: Vec<String>,
    pub n: Array2<f64>,
    pub p: Array2<f64>,
    pub pi: Array2<f64>,
    pub mean: Array2<f64>,
    pub q10: Array2<f64>,
    pub q90: Array2<f64>,
}

fn ts(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn write_predictions(path: &Path, d: &PredictionDump) -> Result<()> {
    let mut w = csv_writer();
    w.write_record(["timestamp", "tract_id", "y", "y_hat"])?;
    for (t, stamp) in d.timestamps.iter().enumerate() {
        for (i, id) in d.tract_ids.iter().enumerate() {
            w.write_record([ts(stamp), id.clone(), fmt_f64(d.y[[t, i]]), fmt_f64(d.y_hat[[t, i]])])?;
        }
    }
    write_bytes(path, &finish_csv(w)?)
}

pub fn write_distributions(path: &Path, d: &DistributionDump) -> Result<()> {
    let mut w = csv_writer();
    w.write_record(["timestamp", "tract_id", "n", "p", "pi", "mean", "q10", "q90"])?;
    for (t, stamp) in d.timestamps.iter().enumerate() {
        for (i, id) in d.tract_ids.iter().enumerate() {
            w.write_record([
                ts(stamp),
                id.clone(),
                fmt_f64(d.n[[t, i]]),
                fmt_f64(d.p[[t, i]]),
                fmt_f64(d.pi[[t, i]]),
                fmt_f64(d.mean[[t, i]]),
                fmt_f64(d.q10[[t, i]]),
                fmt_f64(d.q90[[t, i]]),
            ])?;
        }
    }
    write_bytes(path, &finish_csv(w)?)
}

/// Reads a long CSV into dense `T x N` matrices for the named value columns.
fn read_long(
    path: &Path,
    columns: &[&str],
) -> Result<(Vec<DateTime<Utc>>, Vec<String>, Vec<Array2<f64>>)> {
    let text = read_to_string(path)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let ti = find("timestamp")?;
    let ii = find("tract_id")?;
    let vi: Vec<usize> = columns.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let mut cells: BTreeMap<(DateTime<Utc>, String), Vec<f64>> = BTreeMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let stamp = parse_timestamp(&rec[ti])
            .ok_or_else(|| Error::Data(format!("row {row}: bad timestamp {:?}", &rec[ti])))?;
        let vals = vi
            .iter()
            .map(|&j| {
                rec[j]
                    .parse::<f64>()
                    .map_err(|_| Error::Data(format!("row {row}: bad number {:?}", &rec[j])))
            })
            .collect::<Result<Vec<f64>>>()?;
        if cells.insert((stamp, rec[ii].to_string()), vals).is_some() {
            return Err(Error::Data(format!("row {row}: duplicate cell")));
        }
    }
    let stamps: Vec<DateTime<Utc>> = cells.keys().map(|k| k.0).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let ids: Vec<String> = cells.keys().map(|k| k.1.clone()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    if stamps.len() * ids.len() != cells.len() {
        return Err(Error::Data("dump is not a complete timestamp x tract grid".into()));
    }
    let mut mats = vec![Array2::zeros((stamps.len(), ids.len())); columns.len()];
    for (t, s) in stamps.iter().enumerate() {
        for (i, id) in ids.iter().enumerate() {
            let v = &cells[&(*s, id.clone())];
            for (k, m) in mats.iter_mut().enumerate() {
                m[[t, i]] = v[k];
            }
        }
    }
    Ok((stamps, ids, mats))
}

pub fn read_predictions(path: &Path) -> Result<PredictionDump> {
    let (timestamps, tract_ids, mut m) = read_long(path, &["y", "y_hat"])?;
    let y_hat = m.pop().expect("two columns");
    let y = m.pop().expect("two columns");
    Ok(PredictionDump {
        timestamps,
        tract_ids,
        y,
        y_hat,
    })
}

pub fn read_distributions(path: &Path) -> Result<DistributionDump> {
    let (timestamps, tract_ids, m) = read_long(path, &["n", "p", "pi", "mean", "q10", "q90"])?;
    let mut it = m.into_iter();
    let mut next = || it.next().expect("six columns");
    Ok(DistributionDump {
        timestamps,
        tract_ids,
        n: next(),
        p: next(),
        pi: next(),
        mean: next(),
        q10: next(),
        q90: next(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapeRow {
    pub tract_id: String,
    pub mape: f64,
}

/// Per-tract MAPE keyed by tract id, for choropleth joins.
pub fn write_mape_csv(path: &Path, mape: &BTreeMap<String, f64>) -> Result<()> {
    let mut w = csv_writer();
    w.write_record(["tract_id", "mape"])?;
    for (id, v) in mape {
        w.write_record([id.clone(), fmt_f64(*v)])?;
    }
    write_bytes(path, &finish_csv(w)?)
}
