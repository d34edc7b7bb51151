//! Aggregation of transformed element values into per-period series, and
//! mean-centering.

use serde::{Deserialize, Serialize};

use crate::panel::ElementPanel;
use crate::pipeline::transform::TransformedSeries;
use crate::{Error, Result};

/// Per-period averaging rule: simple mean over the population, or weighted
/// by a panel column (e.g. balances for a loss-to-balance metric).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Simple,
    Weighted(String),
}

/// A transformed feature aggregated into a time series.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedFeatureSeries {
    pub feature: String,
    /// One value per period; mean-centered once normalized.
    pub values: Vec<f64>,
    pub weighting: Weighting,
    /// Mean subtracted so far; raw series = values + center.
    pub center: f64,
}

impl AggregatedFeatureSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Ĝj(t): per-period (optionally weighted) mean of the transformed values
/// over the elements present at t. Returns the raw, uncentered series.
pub fn aggregate_transformed(
    transformed: &TransformedSeries,
    panel: &ElementPanel,
    weighting: &Weighting,
) -> Result<AggregatedFeatureSeries> {
    if transformed.values.len() != panel.n_rows() {
        return Err(Error::Contract("transformed series does not match the panel".into()));
    }
    let weight_col: Option<&[f64]> = match weighting {
        Weighting::Simple => None,
        Weighting::Weighted(name) => {
            let col = match panel.underlying_index(name) {
                Ok(m) => panel.underlying_column(m),
                Err(_) => panel.feature_column(panel.feature_index(name)?),
            };
            if let Some(row) = col.iter().position(|&w| w < 0.0) {
                return Err(Error::Aggregation {
                    t: panel.row_t(row),
                    msg: format!("negative weight in column '{name}'"),
                });
            }
            Some(col)
        }
    };

    let mut values = Vec::with_capacity(panel.n_periods());
    for t in 0..panel.n_periods() {
        let rows = panel.rows_at(t);
        // weights are normalized by the period maximum, so equal weights
        // reduce to exactly the simple-mean arithmetic
        let w_max = weight_col.map_or(1.0, |col| {
            rows.iter().map(|&r| col[r as usize]).fold(0.0, f64::max)
        });
        if w_max <= 0.0 {
            return Err(Error::Aggregation { t, msg: "zero total weight".into() });
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for &r in rows {
            let w = weight_col.map_or(1.0, |col| col[r as usize] / w_max);
            num += w * transformed.values[r as usize];
            den += w;
        }
        values.push(num / den);
    }
    Ok(AggregatedFeatureSeries {
        feature: transformed.feature.clone(),
        values,
        weighting: weighting.clone(),
        center: 0.0,
    })
}

/// Subtract the mean over the monitoring period, so the series sums to zero
/// and factor levels become comparable across features.
pub fn normalize_series(series: &AggregatedFeatureSeries) -> AggregatedFeatureSeries {
    let mean = series.values.iter().sum::<f64>() / series.values.len() as f64;
    AggregatedFeatureSeries {
        feature: series.feature.clone(),
        values: series.values.iter().map(|v| v - mean).collect(),
        weighting: series.weighting.clone(),
        center: series.center + mean,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::panel_from_tuples;
    use approx::assert_abs_diff_eq;

    fn series(values: Vec<f64>) -> AggregatedFeatureSeries {
        AggregatedFeatureSeries {
            feature: "x_f".into(),
            values,
            weighting: Weighting::Simple,
            center: 0.0,
        }
    }

    #[test]
    fn simple_mean_of_two() {
        let panel =
            panel_from_tuples(&[("e1", 0, 0.0, 0.0, 1.0), ("e2", 0, 0.0, 0.0, 1.0)]).unwrap();
        let transformed =
            TransformedSeries { feature: "x_f".into(), values: vec![2.0, 4.0] };
        let agg = aggregate_transformed(&transformed, &panel, &Weighting::Simple).unwrap();
        assert_eq!(agg.values, vec![3.0]);
    }

    #[test]
    fn weighted_mean_two_terms() {
        let panel = panel_from_tuples(&[
            ("e1", 0, 0.0, 0.0, 100.0),
            ("e2", 0, 0.0, 0.0, 300.0),
        ])
        .unwrap();
        let transformed =
            TransformedSeries { feature: "x_f".into(), values: vec![0.1, 0.3] };
        let agg =
            aggregate_transformed(&transformed, &panel, &Weighting::Weighted("y_den".into()))
                .unwrap();
        assert_abs_diff_eq!(agg.values[0], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn equal_weights_match_simple() {
        let panel = panel_from_tuples(&[
            ("e1", 0, 0.0, 0.0, 7.0),
            ("e2", 0, 0.0, 0.0, 7.0),
            ("e1", 1, 0.0, 0.0, 7.0),
            ("e2", 1, 0.0, 0.0, 7.0),
            ("e3", 1, 0.0, 0.0, 7.0),
        ])
        .unwrap();
        let transformed = TransformedSeries {
            feature: "x_f".into(),
            values: vec![0.4, 0.8, 0.1, 0.5, 0.9],
        };
        let simple = aggregate_transformed(&transformed, &panel, &Weighting::Simple).unwrap();
        let weighted =
            aggregate_transformed(&transformed, &panel, &Weighting::Weighted("y_den".into()))
                .unwrap();
        assert_eq!(simple.values, weighted.values);
    }

    #[test]
    fn zero_total_weight_cites_period() {
        let panel =
            panel_from_tuples(&[("e1", 0, 0.0, 0.0, 1.0), ("e1", 1, 0.0, 0.0, 0.0)]).unwrap();
        let transformed = TransformedSeries { feature: "x_f".into(), values: vec![1.0, 1.0] };
        match aggregate_transformed(&transformed, &panel, &Weighting::Weighted("y_den".into())) {
            Err(Error::Aggregation { t, .. }) => assert_eq!(t, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn centering_hand_example() {
        let out = normalize_series(&series(vec![1.0, 2.0, 3.0]));
        assert_eq!(out.values, vec![-1.0, 0.0, 1.0]);
        assert_eq!(out.center, 2.0);
    }

    #[test]
    fn constant_series_centers_to_zero() {
        let out = normalize_series(&series(vec![0.7, 0.7, 0.7, 0.7]));
        assert!(out.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centering_is_idempotent() {
        let once = normalize_series(&series(vec![0.13, 0.77, 0.21, 0.48]));
        let twice = normalize_series(&once);
        for (a, b) in once.values.iter().zip(&twice.values) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(once.center, twice.center, epsilon = 1e-15);
        let sum: f64 = twice.values.iter().sum();
        assert!(sum.abs() < 1e-10);
    }
}
