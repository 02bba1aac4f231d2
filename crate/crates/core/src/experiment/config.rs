//! TOML experiment configuration.
//!
//! ```toml
//! name = "chicago-crime"
//! seed = 0
//! output_dir = "runs/crime"
//! # Optional: restrict to one model and variant, or list columns.
//! # model = "stzinb"
//! # variant = "3d2d1d"
//! # columns = ["ha", "rf", "stgcn-3d", "stzinb-3d2d1d"]
//!
//! [data]
//! tracts = "tracts.geojson"
//! features = "features.csv"
//! counts = "counts.csv"        # or events = "events.csv" with start/end
//! weather = "weather.csv"
//! interval_hours = 1
//!
//! [split]
//! ratios = [0.7, 0.2, 0.1]     # train, test, validation
//!
//! [graph]
//! sigma = 10.0
//! epsilon = 0.3
//!
//! [stgcn.train]
//! max_epochs = 200
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::RandomForestConfig;
use crate::graph::GraphParams;
use crate::ingest::split::SegmentOrder;
use crate::metrics::F1Average;
use crate::stgcn::StgcnConfig;
use crate::stzinb::StzinbConfig;
use crate::util::read_to_string;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ha,
    Rf,
    Stgcn,
    Stzinb,
}

impl ModelKind {
    pub fn is_neural(self) -> bool {
        matches!(self, ModelKind::Stgcn | ModelKind::Stzinb)
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ha" => Ok(ModelKind::Ha),
            "rf" => Ok(ModelKind::Rf),
            "stgcn" => Ok(ModelKind::Stgcn),
            "stzinb" => Ok(ModelKind::Stzinb),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }
}

/// Which modalities a neural model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Counts on the distance-only graph.
    #[serde(rename = "3d")]
    D3,
    /// Counts on the homophily graph.
    #[serde(rename = "3d2d")]
    D3D2,
    /// Counts on the homophily graph plus weather.
    #[serde(rename = "3d2d1d")]
    D3D2D1,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::D3, Variant::D3D2, Variant::D3D2D1];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::D3 => "3d",
            Variant::D3D2 => "3d2d",
            Variant::D3D2D1 => "3d2d1d",
        }
    }

    pub fn uses_homophily(self) -> bool {
        self != Variant::D3
    }

    pub fn uses_weather(self) -> bool {
        self == Variant::D3D2D1
    }

    /// Label written to manifests for the adjacency a variant trains on.
    pub fn adjacency_kind(self) -> &'static str {
        if self.uses_homophily() {
            "homophily"
        } else {
            "distance-only"
        }
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "3d" => Ok(Variant::D3),
            "3d2d" => Ok(Variant::D3D2),
            "3d2d1d" => Ok(Variant::D3D2D1),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

/// One column of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Column {
    pub model: ModelKind,
    pub variant: Option<Variant>,
}

impl Column {
    /// The eight columns in table order.
    pub fn all() -> Vec<Column> {
        let mut out = vec![
            Column {
                model: ModelKind::Ha,
                variant: None,
            },
            Column {
                model: ModelKind::Rf,
                variant: None,
            },
        ];
        for model in [ModelKind::Stgcn, ModelKind::Stzinb] {
            for v in Variant::ALL {
                out.push(Column {
                    model,
                    variant: Some(v),
                });
            }
        }
        out
    }

    pub fn new(model: ModelKind, variant: Option<Variant>) -> Result<Self> {
        match (model.is_neural(), variant) {
            (true, None) => Err(Error::Config(format!("{model:?} needs a variant"))),
            (false, Some(_)) => Ok(Column { model, variant: None }),
            _ => Ok(Column { model, variant }),
        }
    }

    pub fn uses_weather(&self) -> bool {
        self.variant.is_some_and(Variant::uses_weather)
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = match self.model {
            ModelKind::Ha => "HA",
            ModelKind::Rf => "RF",
            ModelKind::Stgcn => "STGCN",
            ModelKind::Stzinb => "STZINB",
        };
        match self.variant {
            Some(v) => write!(f, "{m}-{}", v.as_str()),
            None => write!(f, "{m}"),
        }
    }
}

impl FromStr for Column {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('-') {
            Some((m, v)) => Column::new(m.parse()?, Some(v.parse()?)),
            None => Column::new(s.parse()?, None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub tracts: PathBuf,
    pub features: PathBuf,
    pub feature_categories: Option<PathBuf>,
    /// Pre-aggregated observation cube.
    pub counts: Option<PathBuf>,
    /// Raw events, binned over `[start, end)`.
    pub events: Option<PathBuf>,
    pub start: Option<String>,
    pub end: Option<String>,
    pub weather: Option<PathBuf>,
    pub interval_hours: u32,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            tracts: PathBuf::from("tracts.geojson"),
            features: PathBuf::from("features.csv"),
            feature_categories: None,
            counts: None,
            events: None,
            start: None,
            end: None,
            weather: None,
            interval_hours: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Shares of (train, test, validation).
    pub ratios: [f64; 3],
    pub order: SegmentOrder,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratios: [0.7, 0.2, 0.1],
            order: SegmentOrder::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub f1_average: F1Average,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Dataset label used in reports; defaults to `name`.
    pub dataset: Option<String>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub model: Option<ModelKind>,
    pub variant: Option<Variant>,
    pub columns: Option<Vec<String>>,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub graph: GraphParams,
    pub stgcn: StgcnConfig,
    pub stzinb: StzinbConfig,
    pub rf: RandomForestConfig,
    pub metrics: MetricsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            dataset: None,
            seed: 0,
            output_dir: PathBuf::from("runs/experiment"),
            model: None,
            variant: None,
            columns: None,
            data: DataConfig::default(),
            split: SplitConfig::default(),
            graph: GraphParams::default(),
            stgcn: StgcnConfig::default(),
            stzinb: StzinbConfig::default(),
            rf: RandomForestConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let d = &mut self.data;
        resolve(base, &mut d.tracts);
        resolve(base, &mut d.features);
        for p in [&mut d.feature_categories, &mut d.counts, &mut d.events, &mut d.weather]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        resolve(base, &mut self.output_dir);
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn dataset_name(&self) -> &str {
        self.dataset.as_deref().unwrap_or(&self.name)
    }

    /// Columns to run, in table order.
    pub fn selected_columns(&self) -> Result<Vec<Column>> {
        let mut cols = match (&self.columns, self.model) {
            (Some(list), _) => list.iter().map(|s| s.parse()).collect::<Result<Vec<Column>>>()?,
            (None, Some(m)) if m.is_neural() => match self.variant {
                Some(v) => vec![Column::new(m, Some(v))?],
                None => Variant::ALL.iter().map(|&v| Column::new(m, Some(v))).collect::<Result<_>>()?,
            },
            (None, Some(m)) => vec![Column::new(m, None)?],
            (None, None) => match self.variant {
                Some(v) => Column::all().into_iter().filter(|c| c.variant.is_none_or(|cv| cv == v)).collect(),
                None => Column::all(),
            },
        };
        cols.sort();
        cols.dedup();
        if cols.is_empty() {
            return Err(Error::Config("no model columns selected".into()));
        }
        Ok(cols)
    }

    /// Largest history any selected model needs; all columns are scored on
    /// the same test targets.
    pub fn history_steps(&self) -> usize {
        self.stgcn.input_horizon.max(self.stzinb.input_horizon).max(self.rf.lags)
    }

    /// Model configs with the experiment seed applied.
    pub fn seeded_stgcn(&self) -> StgcnConfig {
        StgcnConfig {
            seed: self.seed,
            ..self.stgcn.clone()
        }
    }

    pub fn seeded_stzinb(&self, variant: Variant) -> StzinbConfig {
        StzinbConfig {
            seed: self.seed,
            attention: variant.uses_weather(),
            ..self.stzinb.clone()
        }
    }

    pub fn seeded_rf(&self) -> RandomForestConfig {
        RandomForestConfig {
            seed: self.seed,
            ..self.rf.clone()
        }
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&self) -> Result<()> {
        let cols = self.selected_columns()?;
        if self.data.interval_hours == 0 {
            return Err(Error::Config("data.interval_hours must be positive".into()));
        }
        match (&self.data.counts, &self.data.events) {
            (None, None) => return Err(Error::Config("data.counts or data.events is required".into())),
            (Some(_), Some(_)) => return Err(Error::Config("give only one of data.counts and data.events".into())),
            (None, Some(_)) if self.data.start.is_none() || self.data.end.is_none() => {
                return Err(Error::Config("data.events needs data.start and data.end".into()))
            }
            _ => {}
        }
        if let Some(c) = cols.iter().find(|c| c.uses_weather()) {
            if self.data.weather.is_none() {
                return Err(Error::Config(format!("{c} needs weather but data.weather is not set")));
            }
        }
        let r = self.split.ratios;
        if r.iter().any(|v| !(*v >= 0.0)) || r[0] <= 0.0 || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios {r:?} must be nonnegative and sum to 1")));
        }
        if cols.iter().any(|c| c.model == ModelKind::Stgcn) {
            self.stgcn.validate()?;
        }
        if let Some(c) = cols.iter().find(|c| c.model == ModelKind::Stzinb) {
            self.seeded_stzinb(c.variant.unwrap_or(Variant::D3)).validate()?;
        }
        if cols.iter().any(|c| c.model == ModelKind::Rf) && (self.rf.lags == 0 || self.rf.n_trees == 0) {
            return Err(Error::Config("rf.lags and rf.n_trees must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_names_roundtrip() {
        let all = Column::all();
        assert_eq!(all.len(), 8);
        let names: Vec<String> = all.iter().map(|c| c.to_string()).collect();
        assert_eq!(names[0], "HA");
        assert_eq!(names[7], "STZINB-3d2d1d");
        for (c, n) in all.iter().zip(&names) {
            assert_eq!(&n.parse::<Column>().unwrap(), c);
        }
    }

    #[test]
    fn weather_variant_needs_weather() {
        let cfg = ExperimentConfig::from_toml(
            "model = \"stzinb\"\nvariant = \"3d2d1d\"\n[data]\ncounts = \"c.csv\"\n",
        )
        .unwrap();
        let e = cfg.validate().unwrap_err();
        assert_eq!(e.kind(), crate::ErrorKind::Config);
    }

    #[test]
    fn defaults_carry_reference_constants() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg.graph.sigma, 10.0);
        assert_eq!(cfg.graph.epsilon, 0.3);
        assert_eq!(cfg.stgcn.huber_delta, 10.0);
        assert_eq!(cfg.split.ratios, [0.7, 0.2, 0.1]);
        assert_eq!(cfg.stzinb.train.learning_rate, 1e-4);
        assert_eq!(cfg.stgcn.train.decay_rate, 0.7);
        assert_eq!(cfg.stgcn.train.decay_every, 5);
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }
}
