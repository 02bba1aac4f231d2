//! City-wide hourly weather, imputed and resampled onto a cube's clock.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, Timelike, Utc};
use ndarray::Array2;

use super::events::{parse_timestamp, ObservationCube};
use crate::util::{csv_writer, finish_csv, fmt_f64, read_to_string, write_bytes};
use crate::{Error, Result};

/// Columns expected in the hourly source file.
pub const SOURCE_COLUMNS: [&str; 6] = [
    "temperature",
    "humidity",
    "wind_speed",
    "wind_direction",
    "rain",
    "snow",
];

/// Output variables; rain and snow are merged into `precipitation`.
pub const WEATHER_VARIABLES: [&str; 5] = [
    "temperature",
    "humidity",
    "wind_speed",
    "wind_direction",
    "precipitation",
];

/// Longest run of missing hours filled by interpolation.
pub const MAX_GAP_HOURS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    pub start: DateTime<Utc>,
    pub interval_hours: u32,
    pub variables: Vec<String>,
    /// T x W.
    pub values: Array2<f64>,
}

impl WeatherSeries {
    pub fn n_steps(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_aligned_to(&self, cube: &ObservationCube) -> bool {
        self.start == cube.start
            && self.interval_hours == cube.interval_hours
            && self.n_steps() == cube.n_steps()
    }

    pub fn check_aligned(&self, cube: &ObservationCube) -> Result<()> {
        if self.is_aligned_to(cube) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "weather clock ({}, {}h, {} steps) differs from cube ({}, {}h, {} steps)",
                self.start,
                self.interval_hours,
                self.n_steps(),
                cube.start,
                cube.interval_hours,
                cube.n_steps()
            )))
        }
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv_writer();
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.variables.iter().cloned());
        w.write_record(&header)?;
        for t in 0..self.n_steps() {
            let ts = self.start + Duration::hours(self.interval_hours as i64 * t as i64);
            let mut rec = vec![ts.to_rfc3339()];
            rec.extend(self.values.row(t).iter().map(|v| fmt_f64(*v)));
            w.write_record(&rec)?;
        }
        finish_csv(w)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_csv()?)
    }
}

/// One hourly source row; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyWeather {
    pub timestamp: DateTime<Utc>,
    pub values: [Option<f64>; 6],
}

pub fn parse_hourly_weather(text: &str) -> Result<Vec<HourlyWeather>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let ts_col = headers
        .iter()
        .position(|h| h == "timestamp")
        .ok_or_else(|| Error::MissingColumn("timestamp".into()))?;
    let cols = SOURCE_COLUMNS
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| Error::MissingColumn((*c).to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let timestamp = rec
            .get(ts_col)
            .and_then(parse_timestamp)
            .ok_or_else(|| Error::Data(format!("weather row {row}: bad timestamp")))?;
        let mut values = [None; 6];
        for (k, &c) in cols.iter().enumerate() {
            values[k] = rec
                .get(c)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite());
        }
        out.push(HourlyWeather { timestamp, values });
    }
    Ok(out)
}

pub fn write_hourly_weather(path: &Path, rows: &[HourlyWeather]) -> Result<()> {
    let mut w = csv_writer();
    let mut header = vec!["timestamp"];
    header.extend(SOURCE_COLUMNS);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.timestamp.to_rfc3339()];
        rec.extend(r.values.iter().map(|v| v.map(fmt_f64).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    write_bytes(path, &finish_csv(w)?)
}

/// Fills missing runs of at most [`MAX_GAP_HOURS`] by linear interpolation
/// (nearest value at the series edges). Longer gaps are an error.
fn fill_gaps(series: &mut [Option<f64>], start: DateTime<Utc>, name: &str) -> Result<Vec<f64>> {
    let n = series.len();
    let mut i = 0;
    while i < n {
        if series[i].is_some() {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < n && series[j].is_none() {
            j += 1;
        }
        let len = j - i;
        if len > MAX_GAP_HOURS || (i == 0 && j == n) {
            return Err(Error::Data(format!(
                "weather {name}: gap of {len} hours starting {} exceeds the {MAX_GAP_HOURS}-hour limit",
                start + Duration::hours(i as i64)
            )));
        }
        let left = if i > 0 { series[i - 1] } else { None };
        let right = if j < n { series[j] } else { None };
        for k in i..j {
            series[k] = Some(match (left, right) {
                (Some(a), Some(b)) => {
                    let w = (k + 1 - i) as f64 / (len + 1) as f64;
                    a + (b - a) * w
                }
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => unreachable!(),
            });
        }
        i = j;
    }
    Ok(series.iter().map(|v| v.unwrap()).collect())
}

/// Imputes and resamples hourly weather onto `target`'s clock.
///
/// Temperature, humidity and wind speed are averaged per bin, wind direction
/// uses a circular mean, and precipitation is the bin sum of rain + snow.
pub fn resample_weather(rows: &[HourlyWeather], target: &ObservationCube) -> Result<WeatherSeries> {
    let hours = target.n_steps() * target.interval_hours as usize;
    let start = target.start;
    // Average duplicate readings that fall in the same hour.
    let mut acc: BTreeMap<i64, ([f64; 6], [u32; 6])> = BTreeMap::new();
    for r in rows {
        let floored = r.timestamp
            .with_minute(0)
            .and_then(|t| t.with_second(0))
            .and_then(|t| t.with_nanosecond(0))
            .unwrap_or(r.timestamp);
        let h = (floored - start).num_hours();
        if h < 0 || h >= hours as i64 {
            continue;
        }
        let e = acc.entry(h).or_insert(([0.0; 6], [0; 6]));
        for k in 0..6 {
            if let Some(v) = r.values[k] {
                e.0[k] += v;
                e.1[k] += 1;
            }
        }
    }
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(6);
    for (k, name) in SOURCE_COLUMNS.iter().enumerate() {
        let mut s: Vec<Option<f64>> = (0..hours as i64)
            .map(|h| {
                acc.get(&h)
                    .filter(|(_, c)| c[k] > 0)
                    .map(|(v, c)| v[k] / c[k] as f64)
            })
            .collect();
        columns.push(fill_gaps(&mut s, start, name)?);
    }

    let step = target.interval_hours as usize;
    let mut values = Array2::zeros((target.n_steps(), WEATHER_VARIABLES.len()));
    for t in 0..target.n_steps() {
        let span = t * step..(t + 1) * step;
        let mean = |c: &Vec<f64>| c[span.clone()].iter().sum::<f64>() / step as f64;
        values[[t, 0]] = mean(&columns[0]);
        values[[t, 1]] = mean(&columns[1]);
        values[[t, 2]] = mean(&columns[2]);
        let (s, c) = columns[3][span.clone()]
            .iter()
            .fold((0.0, 0.0), |(s, c), d| (s + d.to_radians().sin(), c + d.to_radians().cos()));
        values[[t, 3]] = if s.abs() < 1e-12 && c.abs() < 1e-12 {
            mean(&columns[3])
        } else {
            s.atan2(c).to_degrees().rem_euclid(360.0)
        };
        values[[t, 4]] = span.clone().map(|h| columns[4][h] + columns[5][h]).sum();
    }
    Ok(WeatherSeries {
        start,
        interval_hours: target.interval_hours,
        variables: WEATHER_VARIABLES.iter().map(|s| s.to_string()).collect(),
        values,
    })
}

pub fn ingest_weather(path: &Path, target: &ObservationCube) -> Result<WeatherSeries> {
    resample_weather(&parse_hourly_weather(&read_to_string(path)?)?, target)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(hours: usize, interval: u32) -> ObservationCube {
        ObservationCube::new(
            parse_timestamp("2019-01-01T00:00:00Z").unwrap(),
            interval,
            vec!["a".into()],
            Array2::zeros((hours / interval as usize, 1)),
        )
        .unwrap()
    }

    fn rows(hours: usize, f: impl Fn(usize) -> [Option<f64>; 6]) -> Vec<HourlyWeather> {
        let start = parse_timestamp("2019-01-01T00:00:00Z").unwrap();
        (0..hours)
            .map(|h| HourlyWeather {
                timestamp: start + Duration::hours(h as i64),
                values: f(h),
            })
            .collect()
    }

    #[test]
    fn constant_temperature_four_hour_bins() {
        let r = rows(8, |_| [Some(10.0), Some(50.0), Some(3.0), Some(90.0), Some(0.0), Some(0.0)]);
        let w = resample_weather(&r, &cube(8, 4)).unwrap();
        assert_eq!(w.n_steps(), 2);
        assert_eq!(w.values[[0, 0]], 10.0);
        assert_eq!(w.values[[1, 0]], 10.0);
        assert!((w.values[[0, 3]] - 90.0).abs() < 1e-9);
    }

    #[test]
    fn rain_plus_snow_is_precipitation() {
        let r = rows(4, |h| {
            let (rain, snow) = if h == 1 { (1.0, 2.0) } else { (0.0, 0.0) };
            [Some(0.0), Some(0.0), Some(0.0), Some(0.0), Some(rain), Some(snow)]
        });
        let w = resample_weather(&r, &cube(4, 4)).unwrap();
        assert_eq!(w.values[[0, 4]], 3.0);
    }

    #[test]
    fn single_missing_hour_interpolated() {
        let r = rows(3, |h| {
            let t = if h == 1 { None } else { Some(10.0) };
            [t, Some(0.0), Some(0.0), Some(0.0), Some(0.0), Some(0.0)]
        });
        let w = resample_weather(&r, &cube(3, 1)).unwrap();
        assert_eq!(w.values[[1, 0]], 10.0);
    }

    #[test]
    fn linear_interpolation_of_ramp() {
        let mut s = vec![Some(0.0), None, None, Some(3.0)];
        let start = parse_timestamp("2019-01-01T00:00:00Z").unwrap();
        assert_eq!(fill_gaps(&mut s, start, "x").unwrap(), [0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn long_gap_is_error() {
        let r = rows(8, |h| {
            let t = if (2..6).contains(&h) { None } else { Some(1.0) };
            [t, Some(0.0), Some(0.0), Some(0.0), Some(0.0), Some(0.0)]
        });
        let err = resample_weather(&r, &cube(8, 1)).unwrap_err();
        assert!(err.to_string().contains("gap of 4 hours"), "{err}");
    }

    #[test]
    fn circular_mean_wraps() {
        let r = rows(2, |h| {
            let d = if h == 0 { 350.0 } else { 10.0 };
            [Some(0.0), Some(0.0), Some(0.0), Some(d), Some(0.0), Some(0.0)]
        });
        let w = resample_weather(&r, &cube(2, 2)).unwrap();
        let d = w.values[[0, 3]];
        assert!(d < 1e-9 || (360.0 - d) < 1e-9, "{d}");
    }
}
