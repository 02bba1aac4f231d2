mod support;

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use hetgraph::experiment::{self, column_dir, compare, Column, ExperimentConfig, RunManifest};
use hetgraph::ingest::events::{parse_events, rasterize_events, EventRecord, TimeWindow};
use hetgraph::ingest::tracts::{LatLon, Polygon, TractGeometry};
use hetgraph::metrics::{write_predictions, MetricsReport, PredictionDump};
use hetgraph::synth::{gen_city, gen_counts, write_fixture, FixturePaths, Process};
use hetgraph::Error;
use ndarray::Array2;

fn fixture(dir: &Path, process: Process) -> FixturePaths {
    let city = gen_city(6, 3).unwrap();
    let data = gen_counts(&city, 300, &process).unwrap();
    write_fixture(dir, &city, &data).unwrap()
}

fn small_config(paths: &FixturePaths, out: &Path, columns: &[&str], weather: bool) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        name: "small".into(),
        output_dir: out.to_path_buf(),
        columns: Some(columns.iter().map(|s| s.to_string()).collect()),
        ..Default::default()
    };
    cfg.data.tracts = paths.tracts.clone();
    cfg.data.features = paths.features.clone();
    cfg.data.feature_categories = Some(paths.feature_categories.clone());
    cfg.data.counts = Some(paths.counts.clone());
    if weather {
        cfg.data.weather = Some(paths.weather.clone());
    }
    cfg.stgcn.block_channels = vec![[4, 2, 4]];
    cfg.stgcn.train.max_epochs = 4;
    cfg.stgcn.train.learning_rate = 1e-2;
    cfg.stzinb.spatial_channels = vec![4];
    cfg.stzinb.tcn_widths = vec![4];
    cfg.stzinb.embed_dim = 4;
    cfg.stzinb.heads = 2;
    cfg.stzinb.train.max_epochs = 4;
    cfg.stzinb.train.learning_rate = 1e-2;
    cfg.rf.n_trees = 5;
    cfg
}

#[test]
fn identical_config_and_seed_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let paths = fixture(dir.path(), Process::weather_coupled());
    let cols = ["ha", "rf", "stgcn-3d", "stzinb-3d2d1d"];
    let a = small_config(&paths, &dir.path().join("a"), &cols, true);
    let b = small_config(&paths, &dir.path().join("b"), &cols, true);
    experiment::run(&a).unwrap();
    experiment::run(&b).unwrap();
    for c in cols {
        let col: Column = c.parse().unwrap();
        for file in ["metrics.json", "predictions.csv", "train.json"] {
            let x = std::fs::read(column_dir(&a.output_dir, &col).join(file)).ok();
            let y = std::fs::read(column_dir(&b.output_dir, &col).join(file)).ok();
            assert_eq!(x, y, "{c}/{file}");
            if file == "metrics.json" {
                assert!(x.is_some());
            }
        }
    }
}

#[test]
fn manifest_records_adjacency_per_column() {
    let dir = tempfile::tempdir().unwrap();
    let paths = fixture(dir.path(), Process::clustered());
    let cfg = small_config(&paths, &dir.path().join("run"), &["ha", "stgcn-3d", "stgcn-3d2d"], false);
    let out = experiment::run(&cfg).unwrap();
    let m: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(out.output_dir.join("manifest.json")).unwrap()).unwrap();
    let adj: BTreeMap<&str, Option<&str>> =
        m.columns.iter().map(|c| (c.column.as_str(), c.adjacency.as_deref())).collect();
    assert_eq!(adj["HA"], None);
    assert_eq!(adj["STGCN-3d"], Some("distance-only"));
    assert_eq!(adj["STGCN-3d2d"], Some("homophily"));
    assert_eq!(m.completed_stages, ["build-graph", "prepare", "train", "evaluate", "report"]);
    assert_eq!(m.failed_stage, None);
    assert_eq!(m.n_tracts, Some(6));
}

#[test]
fn weather_variant_without_weather_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let paths = fixture(dir.path(), Process::clustered());
    let cfg = small_config(&paths, &dir.path().join("run"), &["stzinb-3d2d1d"], false);
    assert!(matches!(experiment::run(&cfg), Err(Error::Config(_))));
}

fn stamps(n: usize) -> Vec<DateTime<Utc>> {
    let t0 = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    (0..n).map(|k| t0 + Duration::hours(k as i64)).collect()
}

/// Writes a column directory holding only what `compare` reads.
fn column(dir: &Path, mape: &[(&str, f64)], y: &Array2<f64>) {
    let mut r = MetricsReport::not_converged("d", "HA", "", "test", String::new());
    r.converged = true;
    r.note = None;
    r.mape_per_tract = mape.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&r).unwrap()).unwrap();
    let dump = PredictionDump {
        timestamps: stamps(y.nrows()),
        tract_ids: mape.iter().map(|(k, _)| k.to_string()).collect(),
        y: y.clone(),
        y_hat: y.clone(),
    };
    write_predictions(&dir.join("predictions.csv"), &dump).unwrap();
}

#[test]
fn compare_two_tract_example() {
    let dir = tempfile::tempdir().unwrap();
    let y = ndarray::array![[3.0, 0.0], [4.0, 1.0]];
    column(&dir.path().join("a"), &[("t1", 10.0), ("t2", 20.0)], &y);
    column(&dir.path().join("b"), &[("t1", 5.0), ("t2", 25.0)], &y);
    let s = compare(&dir.path().join("a"), &dir.path().join("b")).unwrap();
    let deltas: Vec<f64> = s.tracts.iter().map(|t| t.delta).collect();
    assert_eq!(deltas, [-5.0, 5.0]);
    assert_eq!(s.improved_percent, 50.0);
    // t2 saw a single event over the test period.
    assert!(!s.tracts[0].low_activity);
    assert!(s.tracts[1].low_activity);
    assert_eq!(s.n_low_activity, 1);

    let out = dir.path().join("cmp");
    s.write(&out, None).unwrap();
    let csv = std::fs::read_to_string(out.join("mape_diff.csv")).unwrap();
    assert!(csv.starts_with("tract_id,mape_a,mape_b,delta_mape,low_activity"));
}

#[test]
fn compare_run_with_itself_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let y = ndarray::array![[3.0, 2.0, 0.0], [4.0, 1.0, 6.0]];
    column(&dir.path().join("a"), &[("t1", 12.5), ("t2", 40.0), ("t3", 7.0)], &y);
    let a = dir.path().join("a");
    let s = compare(&a, &a).unwrap();
    assert!(s.tracts.iter().all(|t| t.delta == 0.0));
    assert_eq!(s.improved_percent, 0.0);
}

#[test]
fn compare_rejects_mismatched_tracts() {
    let dir = tempfile::tempdir().unwrap();
    let y = ndarray::array![[1.0, 2.0]];
    column(&dir.path().join("a"), &[("t1", 1.0), ("t2", 2.0)], &y);
    column(&dir.path().join("b"), &[("t1", 1.0), ("t3", 2.0)], &y);
    assert!(compare(&dir.path().join("a"), &dir.path().join("b")).is_err());
}

fn square(id: &str, lat: f64, lon: f64) -> TractGeometry {
    let d = 0.005;
    let ring = vec![
        LatLon::new(lat - d, lon - d),
        LatLon::new(lat - d, lon + d),
        LatLon::new(lat + d, lon + d),
        LatLon::new(lat + d, lon - d),
        LatLon::new(lat - d, lon - d),
    ];
    TractGeometry {
        polygons: vec![Polygon::new(ring)],
        ..support::tract(id, lat, lon)
    }
}

fn three_tracts() -> Vec<TractGeometry> {
    vec![square("a", 41.80, -87.60), square("b", 41.85, -87.60), square("c", 41.90, -87.60)]
}

fn window() -> TimeWindow {
    let t0 = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    TimeWindow::new(t0, t0 + Duration::hours(4), 1).unwrap()
}

#[test]
fn rasterized_zero_rate_matches_hand_count() {
    let text = "timestamp,tract_id,lat,lon
2024-01-01T00:10:00Z,a,,
2024-01-01T00:50:00Z,a,,
2024-01-01T01:00:00Z,b,,
2024-01-01T03:59:59Z,,41.9,-87.6
2024-01-01T02:30:00Z,,41.801,-87.601
";
    let events = parse_events(text).unwrap();
    let (cube, drops) = rasterize_events(&events, &three_tracts(), window()).unwrap();
    assert_eq!(drops.dropped(), 0);
    // Hand count: a has hours 0 and 2, b hour 1, c hour 3; 4 of 12 cells busy.
    let want = ndarray::array![[2, 0, 0], [0, 1, 0], [1, 0, 0], [0, 0, 1]];
    assert_eq!(cube.counts, want);
    assert!((cube.zero_rate() - 8.0 / 12.0).abs() < 1e-15);
}

#[test]
fn every_event_row_is_counted_or_dropped() {
    let text = "timestamp,tract_id,lat,lon
2024-01-01T00:10:00Z,a,,
not-a-time,a,,
2024-01-01T01:00:00Z,zz,,
2023-12-31T23:00:00Z,b,,
2024-01-01T04:00:00Z,b,,
2024-01-01T02:00:00Z,,50.0,-87.6
2024-01-01T02:00:00Z,,,
2024-01-01T02:00:00Z,,41.85,-87.6
2024-01-01T03:00:00Z,c,,
";
    let events = parse_events(text).unwrap();
    assert_eq!(events.len(), 9);
    let (cube, drops) = rasterize_events(&events, &three_tracts(), window()).unwrap();
    assert_eq!(drops.input_rows, 9);
    assert_eq!(cube.total() + drops.dropped(), drops.input_rows);
    assert_eq!(cube.total(), 3);
    assert_eq!(drops.unparseable_timestamp, 1);
    assert_eq!(drops.unknown_tract_id, 1);
    assert_eq!(drops.outside_window, 2);
    assert_eq!(drops.outside_tracts, 1);
    assert_eq!(drops.invalid_location, 1);
}

#[test]
fn events_config_reports_drops_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let paths = fixture(dir.path(), Process::clustered());
    let tracts = hetgraph::ingest::ingest_tracts(&paths.tracts).unwrap();
    let t0 = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let mut events: Vec<EventRecord> = (0..300)
        .map(|k| EventRecord::at_tract(t0 + Duration::hours(k), &tracts[k as usize % tracts.len()].tract_id))
        .collect();
    events.push(EventRecord::at_tract(t0, "missing"));
    events.push(EventRecord { timestamp: None, location: None });
    let ev_path = dir.path().join("events.csv");
    hetgraph::ingest::events::write_events(&ev_path, &events).unwrap();

    let mut cfg = small_config(&paths, &dir.path().join("run"), &["ha"], false);
    cfg.data.counts = None;
    cfg.data.events = Some(ev_path);
    cfg.data.start = Some("2024-01-01T00:00:00Z".into());
    cfg.data.end = Some("2024-01-13T12:00:00Z".into());
    let out = experiment::run(&cfg).unwrap();
    let m: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(out.output_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.dropped_events, Some(2));
    assert_eq!(m.n_steps, Some(300));
}
