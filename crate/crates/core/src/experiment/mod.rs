//! Config-driven workflow: build graph, prepare tensors, train the model
//! columns, evaluate them on a shared test set and export reports.
//!
//! Every stage writes into the configured output directory:
//!
//! ```text
//! manifest.json                 stages completed, per-column wiring
//! config.toml                   resolved config
//! graph/adjacency_*.csv         both adjacencies, manifests, heatmaps
//! data/counts.csv, weather.csv  aligned tensors and split.json
//! <COLUMN>/train.json           training record
//! <COLUMN>/checkpoint.json      neural models
//! <COLUMN>/predictions.csv      timestamp, tract_id, y, y_hat
//! <COLUMN>/distribution.csv     STZINB only
//! <COLUMN>/metrics.json         MetricsReport
//! report.json, table.csv/.md    comparison table
//! ```

pub mod compare;
pub mod config;
pub mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::baselines::{HistoricalAverage, PerTractForest};
use crate::graph::{build_graph, HomophilyGraph};
use crate::ingest::events::{parse_timestamp, read_events, DropReport, TimeWindow};
use crate::ingest::features::{derive_aggregates, FeatureTable, ImputedCell};
use crate::ingest::split::{chronological_split, normalized_weather, DatasetSplit, Segment, WindowSource};
use crate::ingest::tracts::write_tracts;
use crate::ingest::{ingest_tracts, ingest_weather, rasterize_events, ObservationCube, TractGeometry, WeatherSeries};
use crate::metrics::dump::write_mape_csv;
use crate::metrics::{write_distributions, write_predictions, DistributionDump, Interval, MetricsReport, PredictionDump};
use crate::nn::{Checkpoint, TrainHistory};
use crate::stgcn::{self, rows_to_matrix, Stgcn};
use crate::stzinb::{self, Stzinb};
use crate::util::{read_to_string, sha256_hex, write_bytes};
use crate::{Error, Result};

pub use compare::{compare, CompareSummary, MapeDelta};
pub use config::{Column, ExperimentConfig, ModelKind, Variant};
pub use report::{write_table, Table};

pub const INTERVAL_LOWER: f64 = 0.1;
pub const INTERVAL_UPPER: f64 = 0.9;

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    write_bytes(path, &json_bytes(v)?)
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_to_string(path)?)?)
}

pub fn column_dir(out: &Path, col: &Column) -> PathBuf {
    out.join(col.to_string())
}

/// Tracts and model-ready features.
pub struct GraphInputs {
    pub tracts: Vec<TractGeometry>,
    pub features: FeatureTable,
    pub imputed: Vec<ImputedCell>,
}

/// Loads tracts and features, deriving aggregates from raw source columns
/// when the aggregate schema is absent, and imputes missing cells.
pub fn load_graph_inputs(cfg: &ExperimentConfig) -> Result<GraphInputs> {
    let tracts = ingest_tracts(&cfg.data.tracts)?;
    let raw = FeatureTable::load(&cfg.data.features, cfg.data.feature_categories.as_deref())?;
    let mut features = if raw.check_schema().is_ok() {
        raw
    } else {
        derive_aggregates(&raw)?
    };
    let imputed = features.impute_medians();
    for cell in &imputed {
        log::warn!("imputed {} for tract {} with median {}", cell.feature, cell.tract_id, cell.value);
    }
    let ids: Vec<String> = tracts.iter().map(|t| t.tract_id.clone()).collect();
    let features = features.aligned_to(&ids)?;
    Ok(GraphInputs {
        tracts,
        features,
        imputed,
    })
}

/// Builds both adjacencies and exports them under `out/graph`.
pub fn build_graph_stage(cfg: &ExperimentConfig, inputs: &GraphInputs) -> Result<HomophilyGraph> {
    let graph = build_graph(&inputs.tracts, &inputs.features, &cfg.graph)?;
    graph.export(&cfg.output_dir.join("graph"))?;
    Ok(graph)
}

/// Tensors shared by every column.
pub struct Prepared {
    pub tracts: Vec<TractGeometry>,
    pub graph: HomophilyGraph,
    pub cube: ObservationCube,
    pub weather: Option<WeatherSeries>,
    pub split: DatasetSplit,
    pub drops: Option<DropReport>,
    /// Test target indices scored for every column.
    pub test_targets: Vec<usize>,
}

impl Prepared {
    pub fn population(&self) -> BTreeMap<String, u64> {
        self.tracts.iter().map(|t| (t.tract_id.clone(), t.population)).collect()
    }

    pub fn tract_ids(&self) -> &[String] {
        &self.graph.tract_ids
    }

    pub fn timestamps(&self, targets: &[usize]) -> Vec<DateTime<Utc>> {
        targets.iter().map(|&t| self.cube.timestamp(t)).collect()
    }

    pub fn observed(&self, targets: &[usize]) -> Array2<f64> {
        self.cube.as_f64().select(Axis(0), targets)
    }
}

fn parse_time(field: &str, v: &Option<String>) -> Result<DateTime<Utc>> {
    let s = v.as_deref().ok_or_else(|| Error::Config(format!("data.{field} is required")))?;
    parse_timestamp(s).ok_or_else(|| Error::Config(format!("data.{field}: cannot parse {s:?}")))
}

/// Reorders cube columns to the graph's tract order.
fn align_cube(cube: ObservationCube, ids: &[String]) -> Result<ObservationCube> {
    if cube.tract_ids == ids {
        return Ok(cube);
    }
    let index: BTreeMap<&str, usize> = cube.tract_ids.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let order = ids
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Data(format!("observation cube has no column for tract {id}")))
        })
        .collect::<Result<Vec<usize>>>()?;
    if order.len() != cube.tract_ids.len() {
        return Err(Error::Data("observation cube has tracts outside the tract file".into()));
    }
    ObservationCube::new(cube.start, cube.interval_hours, ids.to_vec(), cube.counts.select(Axis(1), &order))
}

/// Loads or bins the counts, aligns weather and splits the time axis.
pub fn prepare(cfg: &ExperimentConfig, tracts: Vec<TractGeometry>, graph: HomophilyGraph) -> Result<Prepared> {
    let (cube, drops) = match (&cfg.data.counts, &cfg.data.events) {
        (Some(path), _) => (ObservationCube::load(path)?, None),
        (None, Some(path)) => {
            let window = TimeWindow::new(
                parse_time("start", &cfg.data.start)?,
                parse_time("end", &cfg.data.end)?,
                cfg.data.interval_hours,
            )?;
            let events = read_events(path)?;
            let (cube, drops) = rasterize_events(&events, &tracts, window)?;
            (cube, Some(drops))
        }
        (None, None) => return Err(Error::Config("data.counts or data.events is required".into())),
    };
    if cube.interval_hours != cfg.data.interval_hours {
        return Err(Error::Data(format!(
            "counts are on a {}h clock, config asks for {}h",
            cube.interval_hours, cfg.data.interval_hours
        )));
    }
    let cube = align_cube(cube, &graph.tract_ids)?;
    let needs_weather = cfg.selected_columns()?.iter().any(Column::uses_weather);
    let weather = match &cfg.data.weather {
        Some(path) => Some(ingest_weather(path, &cube)?),
        None if needs_weather => return Err(Error::Config("weather variant selected without data.weather".into())),
        None => None,
    };
    let history = cfg.history_steps();
    let split = chronological_split(&cube, cfg.split.ratios, cfg.split.order, history)?;
    let test_targets = split.targets(Segment::Test, history);
    if test_targets.is_empty() {
        return Err(Error::Data(format!("test segment has no targets with {history} steps of history")));
    }

    let dir = cfg.output_dir.join("data");
    cube.write(&dir.join("counts.csv"), drops.as_ref())?;
    if let Some(w) = &weather {
        w.write(&dir.join("weather.csv"))?;
    }
    write_tracts(&dir.join("tracts.geojson"), &tracts)?;
    write_json(
        &dir.join("split.json"),
        &serde_json::json!({
            "train": [split.train.start, split.train.end],
            "validation": [split.validation.start, split.validation.end],
            "test": [split.test.start, split.test.end],
            "order": split.order,
            "normalizer": split.normalizer,
            "history_steps": history,
            "test_targets": test_targets.len(),
            "zero_rate": cube.zero_rate(),
        }),
    )?;
    Ok(Prepared {
        tracts,
        graph,
        cube,
        weather,
        split,
        drops,
        test_targets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainStatus {
    /// Baselines without an iterative fit.
    Fitted,
    Converged,
    /// No epoch improved on the initial validation loss.
    NotConverged,
    /// Non-finite loss or parameters.
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub column: String,
    pub status: TrainStatus,
    pub adjacency: Option<String>,
    pub weather: bool,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub initial_validation_loss: Option<f64>,
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub detail: Option<String>,
}

impl TrainRecord {
    fn baseline(col: &Column) -> Self {
        Self {
            column: col.to_string(),
            status: TrainStatus::Fitted,
            adjacency: None,
            weather: false,
            epochs: 0,
            best_epoch: None,
            initial_validation_loss: None,
            train_loss: vec![],
            validation_loss: vec![],
            detail: None,
        }
    }

    fn from_history(col: &Column, h: &TrainHistory) -> Self {
        let converged = h.converged();
        Self {
            column: col.to_string(),
            status: if converged {
                TrainStatus::Converged
            } else {
                TrainStatus::NotConverged
            },
            adjacency: col.variant.map(|v| v.adjacency_kind().to_string()),
            weather: col.uses_weather(),
            epochs: h.epochs(),
            best_epoch: h.best_epoch,
            initial_validation_loss: Some(h.initial_validation_loss),
            train_loss: h.train_loss.clone(),
            validation_loss: h.validation_loss.clone(),
            detail: (!converged).then(|| "no epoch improved on the initial validation loss".to_string()),
        }
    }

    fn diverged(col: &Column, e: &Error) -> Self {
        Self {
            status: TrainStatus::Diverged,
            adjacency: col.variant.map(|v| v.adjacency_kind().to_string()),
            weather: col.uses_weather(),
            detail: Some(e.to_string()),
            ..Self::baseline(col)
        }
    }

    pub fn usable(&self) -> bool {
        matches!(self.status, TrainStatus::Fitted | TrainStatus::Converged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HaSnapshot {
    interval_hours: u32,
    slot_means: Vec<Vec<f64>>,
    tract_means: Vec<f64>,
}

fn adjacency_for(prep: &Prepared, v: Variant) -> &Array2<f64> {
    if v.uses_homophily() {
        &prep.graph.adjacency
    } else {
        &prep.graph.distance_adjacency
    }
}

fn weather_for(prep: &Prepared, v: Variant) -> Option<Array2<f64>> {
    if v.uses_weather() {
        prep.weather.as_ref().map(|w| normalized_weather(w, &prep.split))
    } else {
        None
    }
}

/// Normalized inputs and targets for STGCN.
fn stgcn_source(cfg: &ExperimentConfig, prep: &Prepared, v: Variant) -> Result<WindowSource> {
    let nz = prep.split.normalizer;
    let x = prep.cube.as_f64().mapv(|c| nz.normalize(c));
    WindowSource::new(x.clone(), x, weather_for(prep, v), cfg.stgcn.input_horizon)
}

/// Raw counts for STZINB, which scales its own inputs.
fn stzinb_source(cfg: &ExperimentConfig, prep: &Prepared, v: Variant) -> Result<WindowSource> {
    let x = prep.cube.as_f64();
    WindowSource::new(x.clone(), x, weather_for(prep, v), cfg.stzinb.input_horizon)
}

fn checkpoint_extra(col: &Column) -> serde_json::Value {
    let v = col.variant.expect("neural column");
    serde_json::json!({
        "column": col.to_string(),
        "variant": v,
        "adjacency": v.adjacency_kind(),
        "weather": v.uses_weather(),
    })
}

/// Trains one column and writes its record and checkpoint.
pub fn train_column(cfg: &ExperimentConfig, prep: &Prepared, col: &Column) -> Result<TrainRecord> {
    let dir = column_dir(&cfg.output_dir, col);
    let train_range = prep.split.train.clone();
    let record = match col.model {
        ModelKind::Ha => {
            let ha = HistoricalAverage::fit(&prep.cube, train_range)?;
            write_json(
                &dir.join("ha.json"),
                &HaSnapshot {
                    interval_hours: ha.interval_hours,
                    slot_means: ha.slot_means.rows().into_iter().map(|r| r.to_vec()).collect(),
                    tract_means: ha.tract_means.clone(),
                },
            )?;
            TrainRecord::baseline(col)
        }
        ModelKind::Rf => {
            // The forests are refit deterministically at evaluation.
            PerTractForest::fit(&prep.cube, train_range, cfg.seeded_rf())?;
            TrainRecord {
                detail: Some("refit from the seed at evaluation".into()),
                ..TrainRecord::baseline(col)
            }
        }
        ModelKind::Stgcn => {
            let v = col.variant.expect("neural column");
            let source = stgcn_source(cfg, prep, v)?;
            let h = cfg.stgcn.input_horizon;
            let mut model = Stgcn::new(cfg.seeded_stgcn(), adjacency_for(prep, v), source.weather_dim())?;
            let train = prep.split.targets(Segment::Train, h);
            let val = prep.split.targets(Segment::Validation, h);
            match model.train(&source, &train, &val) {
                Ok(hist) => {
                    model.to_checkpoint(prep.tract_ids(), checkpoint_extra(col))?.save(&dir.join("checkpoint.json"))?;
                    TrainRecord::from_history(col, &hist)
                }
                Err(e @ Error::Diverged { .. }) => TrainRecord::diverged(col, &e),
                Err(e) => return Err(e),
            }
        }
        ModelKind::Stzinb => {
            let v = col.variant.expect("neural column");
            let source = stzinb_source(cfg, prep, v)?;
            let h = cfg.stzinb.input_horizon;
            let mut model = Stzinb::new(cfg.seeded_stzinb(v), adjacency_for(prep, v), source.weather_dim())?;
            let train = prep.split.targets(Segment::Train, h);
            let val = prep.split.targets(Segment::Validation, h);
            match model.train(&source, &train, &val, prep.split.normalizer) {
                Ok(hist) => {
                    model.to_checkpoint(prep.tract_ids(), checkpoint_extra(col))?.save(&dir.join("checkpoint.json"))?;
                    TrainRecord::from_history(col, &hist)
                }
                Err(e @ Error::Diverged { .. }) => TrainRecord::diverged(col, &e),
                Err(e) => return Err(e),
            }
        }
    };
    if !record.usable() {
        log::warn!("{col}: {:?} ({})", record.status, record.detail.as_deref().unwrap_or(""));
    }
    write_json(&dir.join("train.json"), &record)?;
    Ok(record)
}

fn load_record(dir: &Path, col: &Column) -> Result<TrainRecord> {
    let path = dir.join("train.json");
    if !path.exists() {
        return Err(Error::Data(format!("{col} has no training record at {}; run train first", path.display())));
    }
    read_json(&path)
}

/// Scores one column on the shared test targets and writes its dumps and
/// metrics. Columns that did not converge get a report of nulls.
pub fn evaluate_column(cfg: &ExperimentConfig, prep: &Prepared, col: &Column) -> Result<MetricsReport> {
    let dir = column_dir(&cfg.output_dir, col);
    let record = load_record(&dir, col)?;
    let model = format!("{:?}", col.model).to_lowercase();
    let variant = col.variant.map(|v| v.as_str().to_string()).unwrap_or_default();
    let dataset = cfg.dataset_name();
    if !record.usable() {
        let report = MetricsReport::not_converged(
            dataset,
            &model,
            &variant,
            "test",
            format!("{:?}: {}", record.status, record.detail.unwrap_or_default()),
        );
        write_json(&dir.join("metrics.json"), &report)?;
        return Ok(report);
    }
    let targets = &prep.test_targets;
    let y = prep.observed(targets);
    let mut dist: Option<DistributionDump> = None;
    let y_hat = match col.model {
        ModelKind::Ha => {
            let snap: HaSnapshot = read_json(&dir.join("ha.json"))?;
            let ha = HistoricalAverage {
                interval_hours: snap.interval_hours,
                slot_means: rows_to_matrix(&snap.slot_means)?,
                tract_means: snap.tract_means,
            };
            ha.predict(&prep.cube, targets)
        }
        ModelKind::Rf => PerTractForest::fit(&prep.cube, prep.split.train.clone(), cfg.seeded_rf())?
            .predict(&prep.cube, targets)?,
        ModelKind::Stgcn => {
            let v = col.variant.expect("neural column");
            let ckpt = Checkpoint::load(&dir.join("checkpoint.json"), stgcn::MODEL_NAME)?;
            check_checkpoint(&ckpt, prep)?;
            let model = Stgcn::from_checkpoint(&ckpt)?;
            let source = stgcn_source(cfg, prep, v)?;
            let nz = prep.split.normalizer;
            model.predict_targets(&source, targets)?.mapv(|z| nz.denormalize(z))
        }
        ModelKind::Stzinb => {
            let v = col.variant.expect("neural column");
            let ckpt = Checkpoint::load(&dir.join("checkpoint.json"), stzinb::MODEL_NAME)?;
            check_checkpoint(&ckpt, prep)?;
            let model = Stzinb::from_checkpoint(&ckpt)?;
            let source = stzinb_source(cfg, prep, v)?;
            let d = model.predict_targets(&source, targets)?;
            let mean = d.mean();
            dist = Some(DistributionDump {
                timestamps: prep.timestamps(targets),
                tract_ids: prep.tract_ids().to_vec(),
                q10: d.quantile(INTERVAL_LOWER),
                q90: d.quantile(INTERVAL_UPPER),
                n: d.n,
                p: d.p,
                pi: d.pi,
                mean: mean.clone(),
            });
            mean
        }
    };
    // Counts are nonnegative; negative regressions are clipped.
    let y_hat = y_hat.mapv(|v| v.max(0.0));
    write_predictions(
        &dir.join("predictions.csv"),
        &PredictionDump {
            timestamps: prep.timestamps(targets),
            tract_ids: prep.tract_ids().to_vec(),
            y: y.clone(),
            y_hat: y_hat.clone(),
        },
    )?;
    if let Some(d) = &dist {
        write_distributions(&dir.join("distribution.csv"), d)?;
    }
    let interval = dist.as_ref().map(|d| Interval {
        lower: &d.q10,
        upper: &d.q90,
    });
    let report = MetricsReport::compute(
        dataset,
        &model,
        &variant,
        "test",
        prep.tract_ids(),
        &prep.population(),
        &y,
        &y_hat,
        interval,
        cfg.metrics.f1_average,
    )?;
    write_json(&dir.join("metrics.json"), &report)?;
    write_mape_csv(&dir.join("mape.csv"), &report.mape_per_tract)?;
    Ok(report)
}

fn check_checkpoint(c: &Checkpoint, prep: &Prepared) -> Result<()> {
    if c.tract_ids != prep.tract_ids() {
        return Err(Error::Data("checkpoint tracts differ from the prepared data".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnManifest {
    pub column: String,
    pub adjacency: Option<String>,
    pub weather: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub dataset: String,
    pub config_sha256: String,
    pub completed_stages: Vec<String>,
    pub failed_stage: Option<String>,
    pub columns: Vec<ColumnManifest>,
    pub n_tracts: Option<usize>,
    pub n_steps: Option<usize>,
    pub dropped_events: Option<u64>,
}

/// Tracks stage completion and persists the manifest after each stage.
pub struct StageLog {
    path: PathBuf,
    pub manifest: RunManifest,
}

impl StageLog {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let text = cfg.to_toml()?;
        write_bytes(&cfg.output_dir.join("config.toml"), text.as_bytes())?;
        let columns = cfg
            .selected_columns()?
            .iter()
            .map(|c| ColumnManifest {
                column: c.to_string(),
                adjacency: c.variant.map(|v| v.adjacency_kind().to_string()),
                weather: c.uses_weather(),
            })
            .collect();
        Ok(Self {
            path: cfg.output_dir.join("manifest.json"),
            manifest: RunManifest {
                name: cfg.name.clone(),
                dataset: cfg.dataset_name().to_string(),
                config_sha256: sha256_hex(text.as_bytes()),
                columns,
                ..Default::default()
            },
        })
    }

    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        log::info!("stage {name}");
        match f() {
            Ok(v) => {
                self.manifest.completed_stages.push(name.to_string());
                write_json(&self.path, &self.manifest)?;
                Ok(v)
            }
            Err(e) => {
                self.manifest.failed_stage = Some(name.to_string());
                write_json(&self.path, &self.manifest)?;
                Err(Error::Stage {
                    stage: name.to_string(),
                    completed: self.manifest.completed_stages.clone(),
                    source: Box::new(e),
                })
            }
        }
    }
}

/// Result of a full run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub reports: Vec<(Column, MetricsReport)>,
    pub records: Vec<TrainRecord>,
}

impl RunOutcome {
    pub fn report(&self, col: &Column) -> Option<&MetricsReport> {
        self.reports.iter().find(|(c, _)| c == col).map(|(_, r)| r)
    }
}

/// Loads inputs, builds the graph and prepares tensors.
pub fn prepare_all(cfg: &ExperimentConfig, log: &mut StageLog) -> Result<Prepared> {
    let (inputs, graph) = log.stage("build-graph", || {
        let inputs = load_graph_inputs(cfg)?;
        let graph = build_graph_stage(cfg, &inputs)?;
        Ok((inputs, graph))
    })?;
    let prep = log.stage("prepare", || prepare(cfg, inputs.tracts, graph))?;
    log.manifest.n_tracts = Some(prep.cube.n_tracts());
    log.manifest.n_steps = Some(prep.cube.n_steps());
    log.manifest.dropped_events = prep.drops.as_ref().map(DropReport::dropped);
    Ok(prep)
}

/// Runs every stage for the selected columns.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let cols = cfg.selected_columns()?;
    let mut log = StageLog::new(cfg)?;
    let prep = prepare_all(cfg, &mut log)?;
    let records = log.stage("train", || cols.iter().map(|c| train_column(cfg, &prep, c)).collect::<Result<Vec<_>>>())?;
    let reports = log.stage("evaluate", || {
        cols.iter()
            .map(|c| Ok((*c, evaluate_column(cfg, &prep, c)?)))
            .collect::<Result<Vec<_>>>()
    })?;
    log.stage("report", || {
        write_table(&cfg.output_dir, &Table::from_reports(cfg.dataset_name(), &reports))
    })?;
    Ok(RunOutcome {
        output_dir: cfg.output_dir.clone(),
        reports,
        records,
    })
}

/// Collects `metrics.json` of every column present under a run directory.
pub fn collect_reports(run_dir: &Path) -> Result<Vec<(Column, MetricsReport)>> {
    let mut out = Vec::new();
    for col in Column::all() {
        let path = column_dir(run_dir, &col).join("metrics.json");
        if path.exists() {
            out.push((col, read_json(&path)?));
        }
    }
    if out.is_empty() {
        return Err(Error::Data(format!("no metrics.json under {}", run_dir.display())));
    }
    Ok(out)
}
