//! Element-level panel data, CSV ingestion, and the metric computed from it.
//!
//! A panel holds one row per (element, period) with K feature columns and M
//! underlying columns. Membership of an element at a period is row presence.
//! The metric series is a per-period ratio of aggregated underlyings; it is
//! never computable element by element, which is the reason the rest of the
//! crate exists.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::link::Link;
use crate::{Error, Result};

/// Aggregation operator applied to an underlying column over P(t).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggOp {
    Sum,
    Mean,
    Count,
    Min,
    Max,
}

impl AggOp {
    pub fn apply(self, values: impl Iterator<Item = f64>) -> f64 {
        match self {
            AggOp::Sum => values.sum(),
            AggOp::Mean => {
                let mut n = 0usize;
                let mut s = 0.0;
                for v in values {
                    n += 1;
                    s += v;
                }
                s / n as f64
            }
            AggOp::Count => values.count() as f64,
            AggOp::Min => values.fold(f64::INFINITY, f64::min),
            AggOp::Max => values.fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// One side of the metric ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnAgg {
    pub column: String,
    pub op: AggOp,
}

/// Recipe for the metric: numerator and denominator aggregates, the link used
/// downstream in fitting, and the metric's valid range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub numerator: ColumnAgg,
    pub denominator: ColumnAgg,
    #[serde(default)]
    pub link: Link,
    #[serde(default)]
    pub bounds: Option<(f64, f64)>,
}

impl MetricSpec {
    /// Loss-to-balance style ratio: sum of `numerator` over sum of
    /// `denominator`, logit link, bounded to [0, 1].
    pub fn ratio(numerator: &str, denominator: &str) -> Self {
        MetricSpec {
            numerator: ColumnAgg { column: numerator.into(), op: AggOp::Sum },
            denominator: ColumnAgg { column: denominator.into(), op: AggOp::Sum },
            link: Link::Logit,
            bounds: Some((0.0, 1.0)),
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: MetricSpec = serde_json::from_str(&text)?;
        spec.validate_shape()?;
        Ok(spec)
    }

    fn validate_shape(&self) -> Result<()> {
        if let Some((lo, hi)) = self.bounds {
            if !(lo < hi) {
                return Err(Error::Config(format!(
                    "metric bounds must satisfy lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Check the spec against a concrete panel.
    pub fn validate(&self, panel: &ElementPanel) -> Result<()> {
        self.validate_shape()?;
        panel.underlying_index(&self.numerator.column)?;
        panel.underlying_index(&self.denominator.column)?;
        Ok(())
    }
}

/// The metric time series Z(t), t = 0..T-1.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub values: Vec<f64>,
}

impl MetricSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Column-name mapping for CSV ingestion. Feature and underlying columns are
/// recognized by prefix; every other column must be the element id or the
/// period index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub element_id: String,
    pub t: String,
    pub feature_prefix: String,
    pub underlying_prefix: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            element_id: "element_id".into(),
            t: "t".into(),
            feature_prefix: "x_".into(),
            underlying_prefix: "y_".into(),
        }
    }
}

/// A single (element, period) observation used to build a panel in memory.
#[derive(Debug, Clone)]
pub struct PanelRow {
    pub element_id: String,
    pub t: u32,
    pub features: Vec<f64>,
    pub underlyings: Vec<f64>,
}

/// Immutable element×time panel. Rows are stored sorted by (element, t), so
/// every output derived from a panel is independent of input row order.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementPanel {
    element_ids: Vec<String>,
    feature_names: Vec<String>,
    underlying_names: Vec<String>,
    row_element: Vec<u32>,
    row_t: Vec<u32>,
    /// Column-major feature values, `features[j][row]`.
    features: Vec<Vec<f64>>,
    /// Column-major underlying values, `underlyings[m][row]`.
    underlyings: Vec<Vec<f64>>,
    /// Row indices per period.
    period_rows: Vec<Vec<u32>>,
    /// Contiguous row span per element.
    element_spans: Vec<(u32, u32)>,
}

impl ElementPanel {
    /// Build and validate a panel from raw rows. Rows may arrive in any
    /// order; each must carry all features and underlyings.
    pub fn from_rows(
        feature_names: Vec<String>,
        underlying_names: Vec<String>,
        mut rows: Vec<PanelRow>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Integrity("panel has no rows".into()));
        }
        for row in &rows {
            if row.features.len() != feature_names.len()
                || row.underlyings.len() != underlying_names.len()
            {
                return Err(Error::Integrity(format!(
                    "row ({}, {}) does not carry all {} feature and {} underlying values",
                    row.element_id,
                    row.t,
                    feature_names.len(),
                    underlying_names.len()
                )));
            }
            for (&v, name) in
                row.features.iter().zip(&feature_names).chain(row.underlyings.iter().zip(&underlying_names))
            {
                if !v.is_finite() {
                    return Err(Error::Integrity(format!(
                        "non-finite value in column '{name}' at ({}, {})",
                        row.element_id, row.t
                    )));
                }
            }
        }
        rows.sort_by(|a, b| a.element_id.cmp(&b.element_id).then(a.t.cmp(&b.t)));
        for pair in rows.windows(2) {
            if pair[0].element_id == pair[1].element_id && pair[0].t == pair[1].t {
                return Err(Error::Integrity(format!(
                    "duplicate key ({}, {})",
                    pair[0].element_id, pair[0].t
                )));
            }
        }

        let n = rows.len();
        let t_max = rows.iter().map(|r| r.t).max().unwrap() as usize;
        let t_len = t_max + 1;

        let mut element_ids = Vec::new();
        let mut element_spans: Vec<(u32, u32)> = Vec::new();
        let mut row_element = Vec::with_capacity(n);
        let mut row_t = Vec::with_capacity(n);
        let mut features = vec![Vec::with_capacity(n); feature_names.len()];
        let mut underlyings = vec![Vec::with_capacity(n); underlying_names.len()];
        let mut period_rows: Vec<Vec<u32>> = vec![Vec::new(); t_len];

        for (idx, row) in rows.into_iter().enumerate() {
            if element_ids.last() != Some(&row.element_id) {
                element_ids.push(row.element_id);
                element_spans.push((idx as u32, idx as u32));
            }
            element_spans.last_mut().unwrap().1 = idx as u32 + 1;
            row_element.push(element_ids.len() as u32 - 1);
            row_t.push(row.t);
            for (j, v) in row.features.into_iter().enumerate() {
                features[j].push(v);
            }
            for (m, v) in row.underlyings.into_iter().enumerate() {
                underlyings[m].push(v);
            }
            period_rows[row.t as usize].push(idx as u32);
        }

        if let Some(empty_t) = period_rows.iter().position(|rows| rows.is_empty()) {
            return Err(Error::Integrity(format!(
                "period t={empty_t} has no elements; t must cover [0, {t_max}] without gaps"
            )));
        }

        Ok(ElementPanel {
            element_ids,
            feature_names,
            underlying_names,
            row_element,
            row_t,
            features,
            underlyings,
            period_rows,
            element_spans,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.row_t.len()
    }

    /// Number of periods T; valid t are 0..T-1.
    pub fn n_periods(&self) -> usize {
        self.period_rows.len()
    }

    pub fn n_elements(&self) -> usize {
        self.element_ids.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn underlying_names(&self) -> &[String] {
        &self.underlying_names
    }

    pub fn element_ids(&self) -> &[String] {
        &self.element_ids
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Contract(format!("unknown feature column '{name}'")))
    }

    pub fn underlying_index(&self, name: &str) -> Result<usize> {
        self.underlying_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Contract(format!("unknown underlying column '{name}'")))
    }

    pub fn feature_column(&self, j: usize) -> &[f64] {
        &self.features[j]
    }

    pub fn underlying_column(&self, m: usize) -> &[f64] {
        &self.underlyings[m]
    }

    /// Row indices of the elements present at period `t`.
    pub fn rows_at(&self, t: usize) -> &[u32] {
        &self.period_rows[t]
    }

    pub fn row_element(&self, row: usize) -> usize {
        self.row_element[row] as usize
    }

    pub fn row_t(&self, row: usize) -> usize {
        self.row_t[row] as usize
    }

    /// Contiguous row range of one element, ordered by t.
    pub fn element_rows(&self, element: usize) -> std::ops::Range<usize> {
        let (a, b) = self.element_spans[element];
        a as usize..b as usize
    }

    /// Feature value of `element` at exactly period `t`, if present.
    pub fn feature_at(&self, element: usize, t: usize, feature: usize) -> Option<f64> {
        let range = self.element_rows(element);
        let rows = &self.row_t[range.clone()];
        let pos = rows.partition_point(|&rt| (rt as usize) < t);
        if pos < rows.len() && rows[pos] as usize == t {
            Some(self.features[feature][range.start + pos])
        } else {
            None
        }
    }

    /// Feature value of `element` at the latest period ≤ `t` where it is
    /// present, falling back to its earliest observation. Used for lagged
    /// evaluation near the start of an element's history.
    pub fn feature_at_or_before(&self, element: usize, t: usize, feature: usize) -> f64 {
        let range = self.element_rows(element);
        let rows = &self.row_t[range.clone()];
        let pos = rows.partition_point(|&rt| rt as usize <= t);
        let idx = if pos == 0 { range.start } else { range.start + pos - 1 };
        self.features[feature][idx]
    }

    /// Restrict the panel to a single element (used by tests and the
    /// element-ratio identity).
    pub fn restrict_to_element(&self, element: usize) -> Result<ElementPanel> {
        let range = self.element_rows(element);
        let t0 = self.row_t[range.start];
        let rows: Vec<PanelRow> = range
            .map(|row| PanelRow {
                element_id: self.element_ids[self.row_element[row] as usize].clone(),
                // re-base so the restricted panel still covers [0, T'-1]
                t: self.row_t[row] - t0,
                features: self.features.iter().map(|c| c[row]).collect(),
                underlyings: self.underlyings.iter().map(|c| c[row]).collect(),
            })
            .collect();
        ElementPanel::from_rows(self.feature_names.clone(), self.underlying_names.clone(), rows)
    }

    /// Write the panel as CSV in canonical order (element_id, then t).
    /// Numbers are written in shortest round-trip form, so a reload
    /// reproduces the panel exactly.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("element_id,t");
        for name in &self.feature_names {
            let _ = write!(out, ",{name}");
        }
        for name in &self.underlying_names {
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        for row in 0..self.n_rows() {
            let _ = write!(out, "{},{}", self.element_ids[self.row_element[row] as usize], self.row_t[row]);
            for col in &self.features {
                let _ = write!(out, ",{}", col[row]);
            }
            for col in &self.underlyings {
                let _ = write!(out, ",{}", col[row]);
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Load and validate a panel from CSV.
pub fn load_panel(path: &Path, schema: &CsvSchema) -> Result<ElementPanel> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();

    let mut id_col = None;
    let mut t_col = None;
    let mut feature_cols: Vec<(usize, String)> = Vec::new();
    let mut underlying_cols: Vec<(usize, String)> = Vec::new();
    for (idx, name) in headers.iter().enumerate() {
        if name == schema.element_id {
            id_col = Some(idx);
        } else if name == schema.t {
            t_col = Some(idx);
        } else if name.starts_with(&schema.feature_prefix) {
            feature_cols.push((idx, name.to_string()));
        } else if name.starts_with(&schema.underlying_prefix) {
            underlying_cols.push((idx, name.to_string()));
        } else {
            return Err(Error::Schema(format!(
                "column '{name}' matches neither '{}', '{}', prefix '{}' nor prefix '{}'",
                schema.element_id, schema.t, schema.feature_prefix, schema.underlying_prefix
            )));
        }
    }
    let id_col = id_col.ok_or_else(|| Error::Schema(format!("missing column '{}'", schema.element_id)))?;
    let t_col = t_col.ok_or_else(|| Error::Schema(format!("missing column '{}'", schema.t)))?;
    if underlying_cols.is_empty() {
        return Err(Error::Schema(format!(
            "no underlying columns with prefix '{}'",
            schema.underlying_prefix
        )));
    }

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let data_row = i + 1;
        let record = record?;
        let parse_cell = |idx: usize, name: &str| -> Result<f64> {
            let raw = record.get(idx).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row: data_row,
                msg: format!("column '{name}': '{raw}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: data_row,
                    msg: format!("column '{name}': value {v} is not finite"),
                });
            }
            Ok(v)
        };
        let t_raw = record.get(t_col).unwrap_or("");
        let t: u32 = t_raw.parse().map_err(|_| Error::Parse {
            row: data_row,
            msg: format!("column '{}': '{}' is not a period index", schema.t, t_raw),
        })?;
        let features = feature_cols
            .iter()
            .map(|(idx, name)| parse_cell(*idx, name))
            .collect::<Result<Vec<_>>>()?;
        let underlyings = underlying_cols
            .iter()
            .map(|(idx, name)| parse_cell(*idx, name))
            .collect::<Result<Vec<_>>>()?;
        rows.push(PanelRow {
            element_id: record.get(id_col).unwrap_or("").to_string(),
            t,
            features,
            underlyings,
        });
    }

    ElementPanel::from_rows(
        feature_cols.into_iter().map(|(_, n)| n).collect(),
        underlying_cols.into_iter().map(|(_, n)| n).collect(),
        rows,
    )
}

/// Z(t) = Agg_num(t) / Agg_den(t) over the elements present at each period.
pub fn compute_metric_series(panel: &ElementPanel, spec: &MetricSpec) -> Result<MetricSeries> {
    spec.validate(panel)?;
    let num_col = panel.underlying_index(&spec.numerator.column)?;
    let den_col = panel.underlying_index(&spec.denominator.column)?;
    let mut values = Vec::with_capacity(panel.n_periods());
    for t in 0..panel.n_periods() {
        let rows = panel.rows_at(t);
        let num = spec
            .numerator
            .op
            .apply(rows.iter().map(|&r| panel.underlying_column(num_col)[r as usize]));
        let den = spec
            .denominator
            .op
            .apply(rows.iter().map(|&r| panel.underlying_column(den_col)[r as usize]));
        if den == 0.0 {
            return Err(Error::DegenerateMetric { t });
        }
        let z = num / den;
        if !z.is_finite() {
            return Err(Error::DegenerateMetric { t });
        }
        values.push(z);
    }
    Ok(MetricSeries { values })
}

/// Descriptive statistics of one panel column.
#[derive(Debug, Clone, Serialize)]
pub struct ColumnSummary {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Shape report of a panel: dimensions, population series, column ranges.
#[derive(Debug, Clone, Serialize)]
pub struct PanelSummary {
    pub n_periods: usize,
    pub n_features: usize,
    pub n_underlyings: usize,
    pub n_elements: usize,
    pub n_rows: usize,
    /// N(t): population size per period.
    pub population: Vec<usize>,
    pub columns: Vec<ColumnSummary>,
}

pub fn panel_summary(panel: &ElementPanel) -> PanelSummary {
    let summarize = |name: &str, col: &[f64]| {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for &v in col {
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        ColumnSummary { name: name.to_string(), min, max, mean: sum / col.len() as f64 }
    };
    let mut columns = Vec::new();
    for (j, name) in panel.feature_names().iter().enumerate() {
        columns.push(summarize(name, panel.feature_column(j)));
    }
    for (m, name) in panel.underlying_names().iter().enumerate() {
        columns.push(summarize(name, panel.underlying_column(m)));
    }
    PanelSummary {
        n_periods: panel.n_periods(),
        n_features: panel.feature_names().len(),
        n_underlyings: panel.underlying_names().len(),
        n_elements: panel.n_elements(),
        n_rows: panel.n_rows(),
        population: (0..panel.n_periods()).map(|t| panel.rows_at(t).len()).collect(),
        columns,
    }
}

/// Convenience constructor used across the test suites: a panel with one
/// feature column `x_f` and underlyings `y_num`, `y_den` built from
/// (element, t, x, num, den) tuples.
pub fn panel_from_tuples(rows: &[(&str, u32, f64, f64, f64)]) -> Result<ElementPanel> {
    ElementPanel::from_rows(
        vec!["x_f".into()],
        vec!["y_num".into(), "y_den".into()],
        rows.iter()
            .map(|&(id, t, x, num, den)| PanelRow {
                element_id: id.to_string(),
                t,
                features: vec![x],
                underlyings: vec![num, den],
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec_sum_ratio() -> MetricSpec {
        MetricSpec {
            numerator: ColumnAgg { column: "y_num".into(), op: AggOp::Sum },
            denominator: ColumnAgg { column: "y_den".into(), op: AggOp::Sum },
            link: Link::Identity,
            bounds: None,
        }
    }

    #[test]
    fn minimal_two_row_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        std::fs::write(&path, "element_id,t,x_a,y_num,y_den\ne1,0,1.5,0,100\ne1,1,2.5,10,100\n")
            .unwrap();
        let panel = load_panel(&path, &CsvSchema::default()).unwrap();
        assert_eq!(panel.n_periods(), 2);
        assert_eq!(panel.rows_at(0).len(), 1);
        assert_eq!(panel.rows_at(1).len(), 1);
        assert_eq!(panel.feature_names(), &["x_a".to_string()]);
    }

    #[test]
    fn duplicate_key_is_rejected_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.csv");
        std::fs::write(&path, "element_id,t,x_a,y_num,y_den\ne1,0,1,0,1\ne1,0,1,0,1\n").unwrap();
        let err = load_panel(&path, &CsvSchema::default()).unwrap_err();
        match err {
            Error::Integrity(msg) => assert!(msg.contains("(e1, 0)"), "{msg}"),
            other => panic!("expected integrity error, got {other}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "element_id,t,x_a,y_num,y_den\ne1,0,1,0,1\ne2,0,oops,0,1\n").unwrap();
        match load_panel(&path, &CsvSchema::default()).unwrap_err() {
            Error::Parse { row, .. } => assert_eq!(row, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn unknown_column_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("extra.csv");
        std::fs::write(&path, "element_id,t,x_a,z_mystery,y_den\ne1,0,1,0,1\n").unwrap();
        assert!(matches!(
            load_panel(&path, &CsvSchema::default()).unwrap_err(),
            Error::Schema(_)
        ));
    }

    #[test]
    fn metric_two_element_arithmetic() {
        let panel = panel_from_tuples(&[("e1", 0, 0.0, 0.0, 100.0), ("e2", 0, 0.0, 10.0, 100.0)])
            .unwrap();
        let z = compute_metric_series(&panel, &spec_sum_ratio()).unwrap();
        assert_abs_diff_eq!(z.values[0], 0.05, epsilon = 1e-15);
    }

    #[test]
    fn zero_numerator_gives_zero_metric() {
        let panel = panel_from_tuples(&[
            ("e1", 0, 0.0, 0.0, 50.0),
            ("e1", 1, 0.0, 0.0, 60.0),
            ("e2", 0, 0.0, 0.0, 10.0),
            ("e2", 1, 0.0, 0.0, 10.0),
        ])
        .unwrap();
        let z = compute_metric_series(&panel, &spec_sum_ratio()).unwrap();
        assert_eq!(z.values, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_denominator_cites_period() {
        let panel =
            panel_from_tuples(&[("e1", 0, 0.0, 1.0, 1.0), ("e1", 1, 0.0, 1.0, 0.0)]).unwrap();
        match compute_metric_series(&panel, &spec_sum_ratio()).unwrap_err() {
            Error::DegenerateMetric { t } => assert_eq!(t, 1),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_period_inside_range_fails_validation() {
        let err = panel_from_tuples(&[("e1", 0, 0.0, 1.0, 1.0), ("e1", 2, 0.0, 1.0, 1.0)])
            .unwrap_err();
        match err {
            Error::Integrity(msg) => assert!(msg.contains("t=1"), "{msg}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn single_element_restriction_matches_own_ratio() {
        let panel = panel_from_tuples(&[
            ("e1", 0, 0.0, 1.0, 10.0),
            ("e1", 1, 0.0, 2.0, 10.0),
            ("e2", 0, 0.0, 5.0, 20.0),
            ("e2", 1, 0.0, 0.0, 20.0),
        ])
        .unwrap();
        let restricted = panel.restrict_to_element(0).unwrap();
        let z = compute_metric_series(&restricted, &spec_sum_ratio()).unwrap();
        assert_abs_diff_eq!(z.values[0], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(z.values[1], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn summary_counts_population() {
        let panel = panel_from_tuples(&[
            ("e1", 0, 1.0, 0.0, 1.0),
            ("e1", 1, 2.0, 0.0, 1.0),
            ("e2", 1, 3.0, 0.0, 1.0),
        ])
        .unwrap();
        let summary = panel_summary(&panel);
        assert_eq!(summary.n_periods, 2);
        assert_eq!(summary.population, vec![1, 2]);
        assert_eq!(summary.n_features, 1);
        assert_eq!(summary.n_underlyings, 2);
        let x = &summary.columns[0];
        assert_eq!((x.min, x.max), (1.0, 3.0));
        assert_abs_diff_eq!(x.mean, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let panel = panel_from_tuples(&[
            ("e1", 0, 0.1234567890123, 0.0, 97.3),
            ("e1", 1, -2.5e-9, 1.0 / 3.0, 100.0),
            ("e2", 0, 42.0, 0.0, 7.0),
            ("e2", 1, 41.5, 0.25, 7.5),
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roundtrip.csv");
        panel.write_csv(&path).unwrap();
        let schema = CsvSchema { feature_prefix: "x_".into(), ..CsvSchema::default() };
        let back = load_panel(&path, &schema).unwrap();
        assert_eq!(panel, back);
    }

    #[test]
    fn row_order_does_not_matter() {
        let a = panel_from_tuples(&[
            ("e1", 0, 1.0, 0.0, 1.0),
            ("e2", 0, 2.0, 1.0, 2.0),
            ("e1", 1, 3.0, 0.0, 1.0),
        ])
        .unwrap();
        let b = panel_from_tuples(&[
            ("e1", 1, 3.0, 0.0, 1.0),
            ("e1", 0, 1.0, 0.0, 1.0),
            ("e2", 0, 2.0, 1.0, 2.0),
        ])
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn feature_at_or_before_falls_back_to_earliest() {
        let panel = panel_from_tuples(&[
            ("e1", 2, 10.0, 0.0, 1.0),
            ("e1", 3, 11.0, 0.0, 1.0),
            ("e2", 0, 1.0, 0.0, 1.0),
            ("e2", 1, 2.0, 0.0, 1.0),
            ("e2", 2, 3.0, 0.0, 1.0),
            ("e2", 3, 4.0, 0.0, 1.0),
        ])
        .unwrap();
        // e1 enters at t=2: asking for t<=1 falls back to the entry value
        assert_eq!(panel.feature_at_or_before(0, 0, 0), 10.0);
        assert_eq!(panel.feature_at_or_before(0, 2, 0), 10.0);
        assert_eq!(panel.feature_at_or_before(0, 3, 0), 11.0);
        assert_eq!(panel.feature_at_or_before(1, 2, 0), 3.0);
    }
}
