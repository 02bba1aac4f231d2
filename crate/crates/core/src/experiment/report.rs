//! Comparison table: one row per (dataset, metric), one column per model
//! variant in the fixed HA, RF, STGCN x3, STZINB x3 order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Column;
use super::write_json;
use crate::metrics::MetricsReport;
use crate::util::{csv_writer, finish_csv, write_bytes};
use crate::Result;

pub const METRIC_ROWS: [&str; 8] = [
    "MAE (tract)",
    "MAE (downtown)",
    "MAPE (%)",
    "KL",
    "MPIW",
    "PICP",
    "True zero rate",
    "F1",
];

fn metric(r: &MetricsReport, row: usize) -> Option<f64> {
    match row {
        0 => r.mae_tract,
        1 => r.mae_downtown,
        2 => r.mape_mean,
        3 => r.kl_div,
        4 => r.mpiw,
        5 => r.picp,
        6 => r.true_zero_rate,
        _ => r.f1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub dataset: String,
    pub metric: String,
    /// One cell per column of [`Column::all`]; `None` renders blank.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
    pub reports: Vec<MetricsReport>,
}

impl Table {
    pub fn from_reports(dataset: &str, reports: &[(Column, MetricsReport)]) -> Self {
        let mut t = Table {
            columns: Column::all().iter().map(|c| c.to_string()).collect(),
            ..Default::default()
        };
        t.add_dataset(dataset, reports);
        t
    }

    pub fn add_dataset(&mut self, dataset: &str, reports: &[(Column, MetricsReport)]) {
        let all = Column::all();
        for (row, name) in METRIC_ROWS.iter().enumerate() {
            let values = all
                .iter()
                .map(|c| reports.iter().find(|(rc, _)| rc == c).and_then(|(_, r)| metric(r, row)))
                .collect();
            self.rows.push(TableRow {
                dataset: dataset.to_string(),
                metric: name.to_string(),
                values,
            });
        }
        self.reports.extend(reports.iter().map(|(_, r)| r.clone()));
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv_writer();
        let mut header = vec!["dataset".to_string(), "metric".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.dataset.clone(), r.metric.clone()];
            rec.extend(r.values.iter().map(|v| v.map(|x| format!("{x:.4}")).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        finish_csv(w)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = format!("| Dataset | Metric | {} |\n", self.columns.join(" | "));
        s.push_str(&format!("|{}\n", "---|".repeat(self.columns.len() + 2)));
        for r in &self.rows {
            let cells: Vec<String> = r.values.iter().map(|v| v.map(|x| format!("{x:.4}")).unwrap_or_default()).collect();
            s.push_str(&format!("| {} | {} | {} |\n", r.dataset, r.metric, cells.join(" | ")));
        }
        s
    }
}

/// Writes `report.json`, `table.csv` and `table.md` into `dir`.
pub fn write_table(dir: &Path, table: &Table) -> Result<()> {
    write_json(&dir.join("report.json"), table)?;
    write_bytes(&dir.join("table.csv"), &table.to_csv()?)?;
    write_bytes(&dir.join("table.md"), table.to_markdown().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_columns_are_blank() {
        let r = MetricsReport {
            mae_tract: Some(1.5),
            converged: true,
            ..Default::default()
        };
        let t = Table::from_reports("d", &[(Column::all()[0], r)]);
        assert_eq!(t.rows.len(), METRIC_ROWS.len());
        assert_eq!(t.rows[0].values.len(), 8);
        assert_eq!(t.rows[0].values[0], Some(1.5));
        assert!(t.rows[0].values[1..].iter().all(Option::is_none));
        let csv = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert!(csv.lines().nth(1).unwrap().starts_with("d,MAE (tract),1.5000,,"));
    }
}
