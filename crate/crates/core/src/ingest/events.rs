//! Event records and their rasterization into tract-by-time count cubes.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, Timelike, Utc};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::tracts::{LatLon, TractGeometry};
use crate::util::{csv_writer, finish_csv, read_to_string, sha256_hex, write_bytes};
use crate::{Error, Result};

/// Tract-by-time event counts on a fixed clock.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationCube {
    pub start: DateTime<Utc>,
    pub interval_hours: u32,
    pub tract_ids: Vec<String>,
    /// T x N.
    pub counts: Array2<u32>,
}

impl ObservationCube {
    pub fn new(
        start: DateTime<Utc>,
        interval_hours: u32,
        tract_ids: Vec<String>,
        counts: Array2<u32>,
    ) -> Result<Self> {
        if interval_hours == 0 {
            return Err(Error::InvalidParameter("interval must be positive".into()));
        }
        if counts.ncols() != tract_ids.len() {
            return Err(Error::Shape(format!(
                "counts have {} columns for {} tracts",
                counts.ncols(),
                tract_ids.len()
            )));
        }
        Ok(Self {
            start,
            interval_hours,
            tract_ids,
            counts,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.counts.nrows()
    }

    pub fn n_tracts(&self) -> usize {
        self.counts.ncols()
    }

    pub fn interval(&self) -> Duration {
        Duration::hours(self.interval_hours as i64)
    }

    pub fn timestamp(&self, t: usize) -> DateTime<Utc> {
        self.start + self.interval() * t as i32
    }

    pub fn timestamps(&self) -> Vec<DateTime<Utc>> {
        (0..self.n_steps()).map(|t| self.timestamp(t)).collect()
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.timestamp(self.n_steps())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Fraction of zero cells.
    pub fn zero_rate(&self) -> f64 {
        if self.counts.is_empty() {
            return 0.0;
        }
        self.counts.iter().filter(|&&c| c == 0).count() as f64 / self.counts.len() as f64
    }

    pub fn as_f64(&self) -> Array2<f64> {
        self.counts.mapv(|c| c as f64)
    }

    /// Wide CSV: `timestamp,<tract ids...>`.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv_writer();
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.tract_ids.iter().cloned());
        w.write_record(&header)?;
        for t in 0..self.n_steps() {
            let mut rec = vec![self.timestamp(t).to_rfc3339()];
            rec.extend(self.counts.row(t).iter().map(|c| c.to_string()));
            w.write_record(&rec)?;
        }
        finish_csv(w)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("timestamp") {
            return Err(Error::MissingColumn("timestamp".into()));
        }
        let tract_ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut times = Vec::new();
        let mut flat = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            times.push(parse_timestamp(rec.get(0).unwrap_or_default()).ok_or_else(|| {
                Error::Data(format!("cube row {row}: bad timestamp"))
            })?);
            for cell in rec.iter().skip(1) {
                flat.push(cell.parse::<u32>().map_err(|_| {
                    Error::Data(format!("cube row {row}: count {cell:?} is not a non-negative integer"))
                })?);
            }
        }
        let start = *times
            .first()
            .ok_or_else(|| Error::Data("cube has no rows".into()))?;
        let interval_hours = if times.len() > 1 {
            let d = times[1] - times[0];
            if d <= Duration::zero() || d.num_seconds() % 3600 != 0 {
                return Err(Error::Data("cube interval must be a positive whole number of hours".into()));
            }
            (d.num_seconds() / 3600) as u32
        } else {
            1
        };
        for (t, ts) in times.iter().enumerate() {
            if *ts != start + Duration::hours(interval_hours as i64) * t as i32 {
                return Err(Error::Data(format!("cube row {t}: timestamps not evenly spaced")));
            }
        }
        let counts = Array2::from_shape_vec((times.len(), tract_ids.len()), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(start, interval_hours, tract_ids, counts)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_csv(&read_to_string(path)?)
    }

    /// Writes the cube plus a `<name>.manifest.json` sidecar.
    pub fn write(&self, path: &Path, drops: Option<&DropReport>) -> Result<()> {
        let bytes = self.to_csv()?;
        write_bytes(path, &bytes)?;
        let manifest = OutputManifest {
            kind: "observation_cube".into(),
            rows: self.n_steps(),
            columns: self.n_tracts(),
            dropped: drops.map(|d| d.dropped()).unwrap_or(0),
            drop_detail: drops.cloned(),
            zero_rate: Some(self.zero_rate()),
            content_sha256: sha256_hex(&bytes),
        };
        manifest.write(&manifest_path(path))
    }
}

/// Sidecar written next to every exported data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputManifest {
    pub kind: String,
    pub rows: usize,
    pub columns: usize,
    pub dropped: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drop_detail: Option<DropReport>,
    pub zero_rate: Option<f64>,
    pub content_sha256: String,
}

impl OutputManifest {
    pub fn for_bytes(kind: &str, rows: usize, columns: usize, bytes: &[u8]) -> Self {
        Self {
            kind: kind.into(),
            rows,
            columns,
            dropped: 0,
            drop_detail: None,
            zero_rate: None,
            content_sha256: sha256_hex(bytes),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, serde_json::to_string_pretty(self)?.as_bytes())
    }
}

pub fn manifest_path(path: &Path) -> std::path::PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.manifest.json"))
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s.trim())
        .ok()
        .map(|d| d.with_timezone(&Utc))
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventLocation {
    Tract(String),
    Point(LatLon),
}

/// One input row; `None` fields mark values that failed to parse.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub timestamp: Option<DateTime<Utc>>,
    pub location: Option<EventLocation>,
}

impl EventRecord {
    pub fn at_tract(ts: DateTime<Utc>, tract: &str) -> Self {
        Self {
            timestamp: Some(ts),
            location: Some(EventLocation::Tract(tract.to_string())),
        }
    }

    pub fn at_point(ts: DateTime<Utc>, p: LatLon) -> Self {
        Self {
            timestamp: Some(ts),
            location: Some(EventLocation::Point(p)),
        }
    }
}

/// Tally of input rows that did not land in the cube.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReport {
    pub input_rows: u64,
    pub unparseable_timestamp: u64,
    pub invalid_location: u64,
    pub unknown_tract_id: u64,
    pub outside_window: u64,
    pub outside_tracts: u64,
}

impl DropReport {
    pub fn dropped(&self) -> u64 {
        self.unparseable_timestamp
            + self.invalid_location
            + self.unknown_tract_id
            + self.outside_window
            + self.outside_tracts
    }
}

/// Reads an events CSV with `timestamp` and either `tract_id` or `lat,lon`.
/// Unparseable cells become `None` so they are tallied, not lost.
pub fn read_events(path: &Path) -> Result<Vec<EventRecord>> {
    parse_events(&read_to_string(path)?)
}

pub fn parse_events(text: &str) -> Result<Vec<EventRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let ts_col = col("timestamp").ok_or_else(|| Error::MissingColumn("timestamp".into()))?;
    let tract_col = col("tract_id");
    let (lat_col, lon_col) = (col("lat"), col("lon"));
    if tract_col.is_none() && (lat_col.is_none() || lon_col.is_none()) {
        return Err(Error::MissingColumn("tract_id or lat,lon".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let get = |c: Option<usize>| c.and_then(|c| rec.get(c)).filter(|s| !s.is_empty());
        let timestamp = get(Some(ts_col)).and_then(parse_timestamp);
        let location = match get(tract_col) {
            Some(id) => Some(EventLocation::Tract(id.to_string())),
            None => match (
                get(lat_col).and_then(|s| s.parse::<f64>().ok()),
                get(lon_col).and_then(|s| s.parse::<f64>().ok()),
            ) {
                (Some(lat), Some(lon)) => Some(EventLocation::Point(LatLon::new(lat, lon))),
                _ => None,
            },
        };
        out.push(EventRecord {
            timestamp,
            location,
        });
    }
    Ok(out)
}

pub fn write_events(path: &Path, events: &[EventRecord]) -> Result<()> {
    let mut w = csv_writer();
    w.write_record(["timestamp", "tract_id", "lat", "lon"])?;
    for e in events {
        let ts = e.timestamp.map(|t| t.to_rfc3339()).unwrap_or_default();
        match &e.location {
            Some(EventLocation::Tract(id)) => w.write_record([ts, id.clone(), String::new(), String::new()])?,
            Some(EventLocation::Point(p)) => {
                w.write_record([ts, String::new(), p.lat.to_string(), p.lon.to_string()])?
            }
            None => w.write_record([ts, String::new(), String::new(), String::new()])?,
        }
    }
    write_bytes(path, &finish_csv(w)?)
}

/// Half-open time window `[start, end)` on a fixed interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub interval_hours: u32,
}

impl TimeWindow {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>, interval_hours: u32) -> Result<Self> {
        if interval_hours == 0 {
            return Err(Error::InvalidParameter("interval must be positive".into()));
        }
        if end <= start {
            return Err(Error::InvalidParameter("window end must follow start".into()));
        }
        if start.minute() != 0 || start.second() != 0 || start.nanosecond() != 0 {
            return Err(Error::InvalidParameter("window start must fall on a whole hour".into()));
        }
        let span = (end - start).num_seconds();
        let step = interval_hours as i64 * 3600;
        if span % step != 0 {
            return Err(Error::InvalidParameter(format!(
                "interval of {interval_hours}h does not divide the window evenly"
            )));
        }
        Ok(Self {
            start,
            end,
            interval_hours,
        })
    }

    pub fn n_bins(&self) -> usize {
        ((self.end - self.start).num_seconds() / (self.interval_hours as i64 * 3600)) as usize
    }

    pub fn bin(&self, ts: DateTime<Utc>) -> Option<usize> {
        if ts < self.start || ts >= self.end {
            return None;
        }
        Some(((ts - self.start).num_seconds() / (self.interval_hours as i64 * 3600)) as usize)
    }
}

/// Bins events into a cube over `tracts` (node order = tract order).
///
/// Every input row is either counted or recorded in the returned
/// [`DropReport`], so `cube.total() + drops.dropped() == drops.input_rows`.
pub fn rasterize_events<'a>(
    events: impl IntoIterator<Item = &'a EventRecord>,
    tracts: &[TractGeometry],
    window: TimeWindow,
) -> Result<(ObservationCube, DropReport)> {
    let index: BTreeMap<&str, usize> = tracts
        .iter()
        .enumerate()
        .map(|(i, t)| (t.tract_id.as_str(), i))
        .collect();
    let bounds: Vec<_> = tracts.iter().map(|t| t.bounds()).collect();
    let mut counts = Array2::<u32>::zeros((window.n_bins(), tracts.len()));
    let mut drops = DropReport::default();

    for ev in events {
        drops.input_rows += 1;
        let Some(ts) = ev.timestamp else {
            drops.unparseable_timestamp += 1;
            continue;
        };
        let node = match &ev.location {
            None => {
                drops.invalid_location += 1;
                continue;
            }
            Some(EventLocation::Tract(id)) => match index.get(id.as_str()) {
                Some(&n) => n,
                None => {
                    drops.unknown_tract_id += 1;
                    continue;
                }
            },
            Some(EventLocation::Point(p)) => {
                if !p.is_valid() {
                    drops.invalid_location += 1;
                    continue;
                }
                let hit = tracts.iter().enumerate().position(|(i, t)| {
                    bounds[i].is_some_and(|(a, b, c, d)| {
                        p.lat >= a && p.lat <= c && p.lon >= b && p.lon <= d
                    }) && t.contains(*p)
                });
                match hit {
                    Some(n) => n,
                    None => {
                        drops.outside_tracts += 1;
                        continue;
                    }
                }
            }
        };
        match window.bin(ts) {
            Some(t) => counts[[t, node]] += 1,
            None => drops.outside_window += 1,
        }
    }
    if drops.dropped() > 0 {
        log::warn!("rasterize: dropped {} of {} rows: {:?}", drops.dropped(), drops.input_rows, drops);
    }
    let ids = tracts.iter().map(|t| t.tract_id.clone()).collect();
    let cube = ObservationCube::new(window.start, window.interval_hours, ids, counts)?;
    Ok((cube, drops))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::tracts::Polygon;

    fn ts(s: &str) -> DateTime<Utc> {
        parse_timestamp(s).unwrap()
    }

    fn unit_tract(id: &str, lat0: f64) -> TractGeometry {
        TractGeometry {
            tract_id: id.into(),
            centroid: LatLon::new(lat0 + 0.5, 0.5),
            polygons: vec![Polygon::new(vec![
                LatLon::new(lat0, 0.0),
                LatLon::new(lat0 + 1.0, 0.0),
                LatLon::new(lat0 + 1.0, 1.0),
                LatLon::new(lat0, 1.0),
            ])],
            population: 10,
            area_sqmi: 1.0,
        }
    }

    fn day() -> TimeWindow {
        TimeWindow::new(ts("2019-01-01T00:00:00Z"), ts("2019-01-02T00:00:00Z"), 1).unwrap()
    }

    #[test]
    fn empty_input_gives_zero_cube() {
        let tracts = vec![unit_tract("a", 0.0)];
        let (cube, drops) = rasterize_events(&[], &tracts, day()).unwrap();
        assert_eq!(cube.n_steps(), 24);
        assert_eq!(cube.total(), 0);
        assert_eq!(cube.zero_rate(), 1.0);
        assert_eq!(drops.dropped(), 0);
    }

    #[test]
    fn two_events_same_hour() {
        let tracts = vec![unit_tract("a", 0.0), unit_tract("b", 1.0)];
        let ev = vec![
            EventRecord::at_tract(ts("2019-01-01T01:10:00Z"), "b"),
            EventRecord::at_tract(ts("2019-01-01T01:50:00Z"), "b"),
        ];
        let (cube, _) = rasterize_events(&ev, &tracts, day()).unwrap();
        assert_eq!(cube.counts[[1, 1]], 2);
        assert_eq!(cube.total(), 2);
    }

    #[test]
    fn point_assigned_by_containment() {
        let tracts = vec![unit_tract("a", 0.0), unit_tract("b", 1.0)];
        let ev = vec![EventRecord::at_point(ts("2019-01-01T05:00:00Z"), LatLon::new(0.5, 0.5))];
        let (cube, _) = rasterize_events(&ev, &tracts, day()).unwrap();
        assert_eq!(cube.counts[[5, 0]], 1);
    }

    #[test]
    fn drops_are_tallied() {
        let tracts = vec![unit_tract("a", 0.0)];
        let ev = vec![
            EventRecord::at_tract(ts("2019-01-01T01:00:00Z"), "a"),
            EventRecord::at_tract(ts("2019-01-03T01:00:00Z"), "a"),
            EventRecord::at_tract(ts("2019-01-01T01:00:00Z"), "zz"),
            EventRecord::at_point(ts("2019-01-01T01:00:00Z"), LatLon::new(5.0, 5.0)),
            EventRecord {
                timestamp: None,
                location: None,
            },
        ];
        let (cube, drops) = rasterize_events(&ev, &tracts, day()).unwrap();
        assert_eq!(cube.total() + drops.dropped(), ev.len() as u64);
        assert_eq!(drops.outside_window, 1);
        assert_eq!(drops.unknown_tract_id, 1);
        assert_eq!(drops.outside_tracts, 1);
        assert_eq!(drops.unparseable_timestamp, 1);
    }

    #[test]
    fn uneven_interval_rejected() {
        let r = TimeWindow::new(ts("2019-01-01T00:00:00Z"), ts("2019-01-01T10:00:00Z"), 4);
        assert!(r.is_err());
    }

    #[test]
    fn csv_parsing_tallies_bad_rows() {
        let text = "timestamp,tract_id,lat,lon\n2019-01-01T01:00:00Z,a,,\nnot-a-time,a,,\n2019-01-01T02:00:00Z,,0.5,0.5\n";
        let ev = parse_events(text).unwrap();
        assert_eq!(ev.len(), 3);
        assert!(ev[1].timestamp.is_none());
        assert_eq!(ev[2].location, Some(EventLocation::Point(LatLon::new(0.5, 0.5))));
    }

    #[test]
    fn cube_csv_roundtrip() {
        let counts = Array2::from_shape_vec((3, 2), vec![0, 1, 2, 3, 4, 5]).unwrap();
        let cube = ObservationCube::new(ts("2019-01-01T00:00:00Z"), 4, vec!["a".into(), "b".into()], counts).unwrap();
        let back = ObservationCube::parse_csv(std::str::from_utf8(&cube.to_csv().unwrap()).unwrap()).unwrap();
        assert_eq!(cube, back);
    }
}
