//! Fitted per-feature transforms and their application to panel rows.

use serde::{Deserialize, Serialize};

use crate::link::Link;
use crate::panel::ElementPanel;
use crate::stats::interp_clamped;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Monotonicity {
    #[default]
    None,
    Increasing,
    Decreasing,
}

/// Learned univariate map from a feature value to the metric scale: a
/// piecewise-linear curve on the link scale, inverted through the link on
/// evaluation. Inputs outside the knot range clamp to the edge knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTransform {
    pub feature: String,
    /// (x, g) pairs, x strictly increasing, g on the link scale.
    pub knots: Vec<(f64, f64)>,
    pub monotonicity: Monotonicity,
    pub link: Link,
    /// Metric bounds the link maps into; `None` means `[0, 1]` for the
    /// bounded links.
    pub bounds: Option<(f64, f64)>,
    /// Periods the feature leads the metric by; evaluation reads the feature
    /// at t − lag.
    pub lag: usize,
    /// Weighted R² of the fit on the link scale over the segments.
    pub fit_r2: f64,
}

impl FittedTransform {
    /// Evaluate the transform at a raw feature value (metric scale output).
    pub fn evaluate(&self, x: f64) -> f64 {
        self.link.invert(interp_clamped(&self.knots, x), self.bounds)
    }
}

/// Row-aligned transformed values Gj(Xj(i, t − lag)) for one feature.
#[derive(Debug, Clone)]
pub struct TransformedSeries {
    pub feature: String,
    /// One value per panel row, in panel row order.
    pub values: Vec<f64>,
}

/// Populate the transform over every (element, period) observation.
///
/// With a positive lag the feature is read at t − lag; periods before an
/// element's first observation use its earliest available value.
pub fn apply_transform(panel: &ElementPanel, transform: &FittedTransform) -> Result<TransformedSeries> {
    let j = panel.feature_index(&transform.feature)?;
    let mut values = Vec::with_capacity(panel.n_rows());
    if transform.lag == 0 {
        let col = panel.feature_column(j);
        values.extend(col.iter().map(|&x| transform.evaluate(x)));
    } else {
        for row in 0..panel.n_rows() {
            let t = panel.row_t(row);
            let e = panel.row_element(row);
            let x = panel.feature_at_or_before(e, t.saturating_sub(transform.lag), j);
            values.push(transform.evaluate(x));
        }
    }
    Ok(TransformedSeries { feature: transform.feature.clone(), values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::panel_from_tuples;
    use approx::assert_abs_diff_eq;

    fn identity_transform(knots: Vec<(f64, f64)>, lag: usize) -> FittedTransform {
        FittedTransform {
            feature: "x_f".into(),
            knots,
            monotonicity: Monotonicity::None,
            link: Link::Identity,
            bounds: None,
            lag,
            fit_r2: 1.0,
        }
    }

    #[test]
    fn interpolates_and_clamps() {
        let tr = identity_transform(vec![(0.0, 0.0), (10.0, 1.0)], 0);
        assert_abs_diff_eq!(tr.evaluate(5.0), 0.5, epsilon = 1e-15);
        assert_eq!(tr.evaluate(-3.0), 0.0);
        assert_eq!(tr.evaluate(14.0), 1.0);
    }

    #[test]
    fn logit_outputs_stay_inside_bounds() {
        let tr = FittedTransform {
            feature: "x_f".into(),
            knots: vec![(0.0, -30.0), (1.0, 30.0)],
            monotonicity: Monotonicity::Increasing,
            link: Link::Logit,
            bounds: Some((0.0, 1.0)),
            lag: 0,
            fit_r2: 1.0,
        };
        for &x in &[-5.0, 0.0, 0.5, 1.0, 9.0] {
            let v = tr.evaluate(x);
            assert!(v > 0.0 && v < 1.0, "evaluate({x}) = {v}");
        }
    }

    #[test]
    fn lag_reads_earlier_feature_values() {
        let panel = panel_from_tuples(&[
            ("e1", 0, 10.0, 0.0, 1.0),
            ("e1", 1, 20.0, 0.0, 1.0),
            ("e1", 2, 30.0, 0.0, 1.0),
            ("e1", 3, 40.0, 0.0, 1.0),
        ])
        .unwrap();
        let tr = identity_transform(vec![(0.0, 0.0), (100.0, 100.0)], 2);
        let out = apply_transform(&panel, &tr).unwrap();
        // first two periods fall back to the earliest value
        assert_eq!(out.values, vec![10.0, 10.0, 10.0, 20.0]);
    }
}
