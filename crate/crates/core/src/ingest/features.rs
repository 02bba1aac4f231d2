//! Per-tract (2D) feature tables and the aggregate schema used for
//! homophily correlations.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::util::{csv_writer, finish_csv, fmt_f64, median, read_to_string, write_bytes};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Demography,
    Economy,
    Road,
    Land,
}

impl std::str::FromStr for Category {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "demography" | "demo" => Ok(Category::Demography),
            "economy" | "econ" => Ok(Category::Economy),
            "road" => Ok(Category::Road),
            "land" => Ok(Category::Land),
            other => Err(Error::Config(format!("unknown feature category {other:?}"))),
        }
    }
}

/// Demographic columns, in schema order.
pub const DEMOGRAPHY_FEATURES: [&str; 36] = [
    "totpop",
    "popden",
    "pctmale",
    "hhsize",
    "pcthighschool",
    "pctsomecollege",
    "pctbachelor",
    "medage",
    "pctyoung",
    "pctmiddleyoung",
    "pctasian",
    "pctwhite",
    "pctblack",
    "pcthisp",
    "carown",
    "pct2car",
    "timetowork",
    "pcttransit",
    "pctdrialone",
    "numworker",
    "unemploy",
    "medhhinc",
    "incpercap",
    "pctpoverty",
    "pctlowinc",
    "pctmodinc",
    "pctlowmidinc",
    "pcthighmidinc",
    "pctmidinc",
    "pcthighinc",
    "giniindex",
    "pctrentocc",
    "pctdesinfam",
    "pctsinfam",
    "medvalue",
    "medrent",
];

pub const ECONOMY_FEATURES: [&str; 5] = ["Retail", "Office", "Service", "Entertain", "Indus"];
pub const ROAD_FEATURES: [&str; 2] = ["RdNetwkDen", "InterstDen"];
pub const WALKSCORE: &str = "Walkscore";
pub const LAND_FEATURES: [&str; 4] = [
    "usgs_water",
    "usgs_developed",
    "usgs_cultivated",
    "usgs_vegetation",
];

/// LEHD workplace sector shares (`CNS01`..`CNS20`, NAICS order) mapped onto
/// the five economy aggregates.
pub const LEHD_SECTORS: [(&str, &str); 20] = [
    ("CNS01", "Indus"),     // agriculture, forestry, fishing, hunting
    ("CNS02", "Indus"),     // mining, quarrying, oil and gas
    ("CNS03", "Indus"),     // utilities
    ("CNS04", "Indus"),     // construction
    ("CNS05", "Indus"),     // manufacturing
    ("CNS06", "Indus"),     // wholesale trade
    ("CNS07", "Retail"),    // retail trade
    ("CNS08", "Indus"),     // transportation and warehousing
    ("CNS09", "Office"),    // information
    ("CNS10", "Office"),    // finance and insurance
    ("CNS11", "Office"),    // real estate
    ("CNS12", "Service"),   // professional, scientific, technical
    ("CNS13", "Office"),    // management of companies
    ("CNS14", "Service"),   // administrative, support, waste management
    ("CNS15", "Service"),   // educational services
    ("CNS16", "Service"),   // health care and social assistance
    ("CNS17", "Entertain"), // arts, entertainment, recreation
    ("CNS18", "Entertain"), // accommodation and food services
    ("CNS19", "Service"),   // other services
    ("CNS20", "Service"),   // public administration
];

/// NLCD land cover class shares (`nlcd_<code>`) mapped onto four groups.
pub const NLCD_CLASSES: [(&str, &str); 16] = [
    ("nlcd_11", "usgs_water"),
    ("nlcd_12", "usgs_water"),
    ("nlcd_21", "usgs_developed"),
    ("nlcd_22", "usgs_developed"),
    ("nlcd_23", "usgs_developed"),
    ("nlcd_24", "usgs_developed"),
    ("nlcd_31", "usgs_vegetation"),
    ("nlcd_41", "usgs_vegetation"),
    ("nlcd_42", "usgs_vegetation"),
    ("nlcd_43", "usgs_vegetation"),
    ("nlcd_52", "usgs_vegetation"),
    ("nlcd_71", "usgs_vegetation"),
    ("nlcd_81", "usgs_cultivated"),
    ("nlcd_82", "usgs_cultivated"),
    ("nlcd_90", "usgs_water"),
    ("nlcd_95", "usgs_water"),
];

pub const ROAD_MILES: &str = "road_miles";
pub const INTERSECTIONS: &str = "intersections";
pub const AREA_SQMI: &str = "area_sqmi";

/// Allowed deviation of share columns from 100%.
pub const SHARE_TOLERANCE: f64 = 0.5;

/// Default category for a known schema column.
pub fn default_category(name: &str) -> Option<Category> {
    if DEMOGRAPHY_FEATURES.contains(&name) {
        Some(Category::Demography)
    } else if ECONOMY_FEATURES.contains(&name) {
        Some(Category::Economy)
    } else if ROAD_FEATURES.contains(&name) || name == WALKSCORE {
        Some(Category::Road)
    } else if LAND_FEATURES.contains(&name) {
        Some(Category::Land)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputedCell {
    pub tract_id: String,
    pub feature: String,
    pub value: f64,
}

/// Tract-by-feature matrix. Missing cells are stored as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub tract_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub values: Array2<f64>,
    pub categories: BTreeMap<String, Category>,
}

fn is_missing_token(s: &str) -> bool {
    matches!(
        s.trim().to_ascii_lowercase().as_str(),
        "" | "na" | "nan" | "null" | "none"
    )
}

impl FeatureTable {
    pub fn new(
        tract_ids: Vec<String>,
        feature_names: Vec<String>,
        values: Array2<f64>,
        categories: BTreeMap<String, Category>,
    ) -> Result<Self> {
        if values.dim() != (tract_ids.len(), feature_names.len()) {
            return Err(Error::Shape(format!(
                "feature values {:?} vs {} tracts x {} features",
                values.dim(),
                tract_ids.len(),
                feature_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for id in &tract_ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateTract(id.clone()));
            }
        }
        let mut names = HashSet::new();
        for f in &feature_names {
            if !names.insert(f) {
                return Err(Error::Data(format!("duplicate feature column {f:?}")));
            }
        }
        for (j, name) in feature_names.iter().enumerate() {
            if !tract_ids.is_empty() && values.column(j).iter().all(|v| v.is_nan()) {
                return Err(Error::Data(format!("feature column {name:?} is entirely missing")));
            }
        }
        Ok(Self {
            tract_ids,
            feature_names,
            values,
            categories,
        })
    }

    pub fn n_tracts(&self) -> usize {
        self.tract_ids.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    pub fn column(&self, name: &str) -> Result<ndarray::ArrayView1<'_, f64>> {
        let j = self
            .column_index(name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
        Ok(self.values.column(j))
    }

    /// Columns belonging to `category`, in table order.
    pub fn category_columns(&self, category: Category) -> Vec<usize> {
        self.feature_names
            .iter()
            .enumerate()
            .filter(|(_, f)| self.categories.get(*f) == Some(&category))
            .map(|(j, _)| j)
            .collect()
    }

    pub fn missing_cells(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    /// Parses a CSV whose first column is `tract_id`.
    pub fn parse_csv(text: &str, categories: Option<&BTreeMap<String, Category>>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("tract_id") {
            return Err(Error::MissingColumn("tract_id".into()));
        }
        let feature_names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut ids = Vec::new();
        let mut flat = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            ids.push(rec.get(0).unwrap_or_default().to_string());
            for (j, cell) in rec.iter().skip(1).enumerate() {
                let v = if is_missing_token(cell) {
                    f64::NAN
                } else {
                    cell.parse::<f64>().map_err(|_| {
                        Error::Data(format!(
                            "row {row}, column {:?}: not a number: {cell:?}",
                            feature_names[j]
                        ))
                    })?
                };
                flat.push(v);
            }
        }
        let values = Array2::from_shape_vec((ids.len(), feature_names.len()), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        let mut cats = BTreeMap::new();
        for f in &feature_names {
            if let Some(c) = categories.and_then(|m| m.get(f)).copied().or_else(|| default_category(f)) {
                cats.insert(f.clone(), c);
            }
        }
        let mut table = Self::new(ids, feature_names, values, cats)?;
        table.sort_by_tract();
        Ok(table)
    }

    /// Loads `path`, with an optional JSON sidecar `{feature: category}`.
    pub fn load(path: &Path, categories_path: Option<&Path>) -> Result<Self> {
        let cats = match categories_path {
            Some(p) => Some(parse_category_manifest(&read_to_string(p)?)?),
            None => None,
        };
        Self::parse_csv(&read_to_string(path)?, cats.as_ref())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv_writer();
        let mut header = vec!["tract_id".to_string()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header)?;
        for (i, id) in self.tract_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.values.row(i).iter().map(|v| fmt_f64(*v)));
            w.write_record(&rec)?;
        }
        finish_csv(w)
    }

    pub fn category_manifest(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.categories)?)
    }

    pub fn write(&self, path: &Path, categories_path: &Path) -> Result<()> {
        write_bytes(path, &self.to_csv()?)?;
        write_bytes(categories_path, self.category_manifest()?.as_bytes())
    }

    fn sort_by_tract(&mut self) {
        let mut order: Vec<usize> = (0..self.tract_ids.len()).collect();
        order.sort_by(|&a, &b| self.tract_ids[a].cmp(&self.tract_ids[b]));
        self.values = self.values.select(Axis(0), &order);
        self.tract_ids = order.iter().map(|&i| self.tract_ids[i].clone()).collect();
    }

    /// Returns a copy whose rows follow `tract_ids` exactly.
    pub fn aligned_to(&self, tract_ids: &[String]) -> Result<Self> {
        let index: BTreeMap<&str, usize> = self
            .tract_ids
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        let rows = tract_ids
            .iter()
            .map(|t| {
                index
                    .get(t.as_str())
                    .copied()
                    .ok_or_else(|| Error::Data(format!("tract {t:?} has no feature row")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            tract_ids: tract_ids.to_vec(),
            feature_names: self.feature_names.clone(),
            values: self.values.select(Axis(0), &rows),
            categories: self.categories.clone(),
        })
    }

    /// Replaces missing cells with the column median over all tracts.
    pub fn impute_medians(&mut self) -> Vec<ImputedCell> {
        let mut log = Vec::new();
        for j in 0..self.feature_names.len() {
            let Some(med) = median(self.values.column(j).iter().copied()) else {
                continue;
            };
            for i in 0..self.tract_ids.len() {
                if self.values[[i, j]].is_nan() {
                    self.values[[i, j]] = med;
                    log.push(ImputedCell {
                        tract_id: self.tract_ids[i].clone(),
                        feature: self.feature_names[j].clone(),
                        value: med,
                    });
                }
            }
        }
        for cell in &log {
            log::info!(
                "imputed {}/{} with column median {}",
                cell.tract_id,
                cell.feature,
                cell.value
            );
        }
        log
    }

    /// Names of schema columns that are absent (Walkscore is optional).
    pub fn missing_schema_columns(&self) -> Vec<&'static str> {
        DEMOGRAPHY_FEATURES
            .iter()
            .chain(ECONOMY_FEATURES.iter())
            .chain(ROAD_FEATURES.iter())
            .chain(LAND_FEATURES.iter())
            .copied()
            .filter(|f| self.column_index(f).is_none())
            .collect()
    }

    pub fn check_schema(&self) -> Result<()> {
        match self.missing_schema_columns().first() {
            Some(f) => Err(Error::MissingColumn((*f).to_string())),
            None => Ok(()),
        }
    }
}

pub fn parse_category_manifest(text: &str) -> Result<BTreeMap<String, Category>> {
    let raw: BTreeMap<String, String> = serde_json::from_str(text)?;
    raw.into_iter()
        .map(|(k, v)| Ok((k, v.parse::<Category>()?)))
        .collect()
}

/// Groups share columns into aggregates, rescaled to sum to exactly 100.
fn aggregate_shares(
    raw: &FeatureTable,
    mapping: &[(&str, &str)],
    outputs: &[&str],
) -> Result<Array2<f64>> {
    let cols = mapping
        .iter()
        .map(|(src, dst)| {
            let j = raw
                .column_index(src)
                .ok_or_else(|| Error::MissingColumn((*src).to_string()))?;
            let k = outputs.iter().position(|o| o == dst).expect("mapping target");
            Ok((j, k))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Array2::zeros((raw.n_tracts(), outputs.len()));
    for i in 0..raw.n_tracts() {
        let mut total = 0.0;
        let mut missing = false;
        for &(j, k) in &cols {
            let v = raw.values[[i, j]];
            if v.is_nan() {
                missing = true;
                continue;
            }
            out[[i, k]] += v;
            total += v;
        }
        if missing {
            out.row_mut(i).fill(f64::NAN);
            continue;
        }
        if (total - 100.0).abs() > SHARE_TOLERANCE {
            return Err(Error::Data(format!(
                "tract {}: shares of {} sum to {total:.3}, expected 100 +/- {SHARE_TOLERANCE}",
                raw.tract_ids[i],
                mapping.first().map(|m| m.0).unwrap_or_default()
            )));
        }
        out.row_mut(i).mapv_inplace(|v| v * 100.0 / total);
    }
    Ok(out)
}

/// Derives the aggregate feature schema from raw source columns.
///
/// Economy and land groups are built from LEHD sector shares and NLCD
/// class shares; road densities divide `road_miles` and `intersections` by
/// `area_sqmi`. Demographic columns and `Walkscore` pass through, and
/// `popden` is derived from `totpop` when absent.
pub fn derive_aggregates(raw: &FeatureTable) -> Result<FeatureTable> {
    let n = raw.n_tracts();
    let mut names: Vec<String> = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut cats = BTreeMap::new();

    let area = raw.column(AREA_SQMI)?.to_owned();
    if let Some(i) = area.iter().position(|a| !(*a > 0.0)) {
        return Err(Error::Data(format!(
            "tract {}: area_sqmi must be positive",
            raw.tract_ids[i]
        )));
    }

    for f in DEMOGRAPHY_FEATURES {
        let col = match raw.column(f) {
            Ok(c) => Some(c.to_vec()),
            Err(_) if f == "popden" => raw
                .column("totpop")
                .ok()
                .map(|p| p.iter().zip(area.iter()).map(|(p, a)| p / a).collect()),
            Err(_) => None,
        };
        if let Some(col) = col {
            names.push(f.to_string());
            columns.push(col);
            cats.insert(f.to_string(), Category::Demography);
        }
    }

    let econ = aggregate_shares(raw, &LEHD_SECTORS, &ECONOMY_FEATURES)?;
    for (k, f) in ECONOMY_FEATURES.iter().enumerate() {
        names.push(f.to_string());
        columns.push(econ.column(k).to_vec());
        cats.insert(f.to_string(), Category::Economy);
    }

    let miles = raw.column(ROAD_MILES)?;
    let inter = raw.column(INTERSECTIONS)?;
    for (f, src) in ROAD_FEATURES.iter().zip([miles, inter]) {
        names.push(f.to_string());
        columns.push(src.iter().zip(area.iter()).map(|(v, a)| v / a).collect());
        cats.insert(f.to_string(), Category::Road);
    }
    if let Ok(ws) = raw.column(WALKSCORE) {
        names.push(WALKSCORE.to_string());
        columns.push(ws.to_vec());
        cats.insert(WALKSCORE.to_string(), Category::Road);
    }

    let land = aggregate_shares(raw, &NLCD_CLASSES, &LAND_FEATURES)?;
    for (k, f) in LAND_FEATURES.iter().enumerate() {
        names.push(f.to_string());
        columns.push(land.column(k).to_vec());
        cats.insert(f.to_string(), Category::Land);
    }

    let mut values = Array2::zeros((n, names.len()));
    for (j, col) in columns.iter().enumerate() {
        for i in 0..n {
            values[[i, j]] = col[i];
        }
    }
    FeatureTable::new(raw.tract_ids.clone(), names, values, cats)
}
