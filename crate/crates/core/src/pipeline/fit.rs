//! Univariate and joint fitting of the metric on segment aggregates, the
//! lag search, and feature screening.

use crate::isotonic::pava;
use crate::link::Link;
use crate::nnls::nnls_with_intercept;
use crate::panel::{ElementPanel, MetricSpec};
use crate::pipeline::segment::{segment_values, BinScheme, SegmentAggregates, UNSEGMENTED};
use crate::pipeline::transform::{FittedTransform, Monotonicity};
use crate::stats::weighted_r2;
use crate::{Error, Result};

/// Fitting options for one feature, with the link and bounds already
/// resolved against the metric spec.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub monotonicity: Monotonicity,
    pub link: Link,
    pub bounds: Option<(f64, f64)>,
}

impl FitOptions {
    pub fn for_spec(spec: &MetricSpec, monotonicity: Monotonicity, link: Option<Link>) -> Self {
        let bounds = spec.bounds.map(|(lo, hi)| (lo, hi));
        FitOptions { monotonicity, link: link.unwrap_or(spec.link), bounds }
    }
}

/// Per-segment fitting points: regressor mean, target, weight.
#[derive(Debug, Clone)]
pub(crate) struct FitPoints {
    pub x: Vec<f64>,
    /// Target on the metric scale.
    pub z: Vec<f64>,
    pub w: Vec<f64>,
}

/// Core of the univariate fit: link the target, order by x, merge duplicate
/// x positions, then take segment means as knots — through weighted PAVA if
/// a direction is requested.
pub(crate) fn fit_points(
    feature: &str,
    points: &FitPoints,
    options: &FitOptions,
    lag: usize,
) -> Result<FittedTransform> {
    let mut triples: Vec<(f64, f64, f64)> = points
        .x
        .iter()
        .zip(&points.z)
        .zip(&points.w)
        .map(|((&x, &z), &w)| (x, options.link.apply(z, options.bounds), w))
        .collect();
    triples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // merge duplicate x positions by weighted mean on the link scale
    let mut merged: Vec<(f64, f64, f64)> = Vec::with_capacity(triples.len());
    for (x, g, w) in triples {
        match merged.last_mut() {
            Some(last) if last.0 == x => {
                last.1 = (last.1 * last.2 + g * w) / (last.2 + w);
                last.2 += w;
            }
            _ => merged.push((x, g, w)),
        }
    }
    if merged.len() < 2 {
        return Err(Error::Unfittable {
            feature: feature.to_string(),
            msg: format!("only {} distinct segment mean(s)", merged.len()),
        });
    }

    let g: Vec<f64> = merged.iter().map(|p| p.1).collect();
    let w: Vec<f64> = merged.iter().map(|p| p.2).collect();
    let fitted: Vec<f64> = match options.monotonicity {
        Monotonicity::None => g.clone(),
        Monotonicity::Increasing => pava(&g, &w, true).fitted,
        Monotonicity::Decreasing => pava(&g, &w, false).fitted,
    };
    let fit_r2 = weighted_r2(&g, &fitted, &w);

    Ok(FittedTransform {
        feature: feature.to_string(),
        knots: merged.iter().map(|p| p.0).zip(fitted).collect(),
        monotonicity: options.monotonicity,
        link: options.link,
        bounds: options.bounds,
        lag,
        fit_r2,
    })
}

/// Fit one feature's transform on univariate segment aggregates.
pub fn fit_univariate(
    agg: &SegmentAggregates,
    feature: &str,
    options: &FitOptions,
) -> Result<FittedTransform> {
    let j = agg.feature_index(feature)?;
    if agg.segments.len() < 2 {
        return Err(Error::Unfittable {
            feature: feature.to_string(),
            msg: format!("only {} retained segment(s)", agg.segments.len()),
        });
    }
    let points = FitPoints {
        x: agg.segments.iter().map(|s| s.x_mean[j]).collect(),
        z: agg.segments.iter().map(|s| s.z).collect(),
        w: agg.segments.iter().map(|s| s.n as f64).collect(),
    };
    fit_points(feature, &points, options, 0)
}

/// Search the forward shift Δt ∈ 0..=max_lag that maximizes the univariate
/// fit, pairing the feature at t − Δt with the metric at t. Ties pick the
/// smallest Δt. Observations whose element was absent at t − Δt drop out of
/// that candidate's segmentation.
#[allow(clippy::too_many_arguments)]
pub fn search_lag(
    panel: &ElementPanel,
    feature: &str,
    spec: &MetricSpec,
    options: &FitOptions,
    scheme: BinScheme,
    bins: usize,
    categorical_cap: usize,
    n_min: usize,
    max_lag: usize,
) -> Result<(usize, FittedTransform)> {
    if max_lag * 2 >= panel.n_periods() {
        return Err(Error::Config(format!(
            "max_lag {max_lag} must stay below half the monitoring period {}",
            panel.n_periods()
        )));
    }
    let j = panel.feature_index(feature)?;
    spec.validate(panel)?;
    let num_col = panel.underlying_index(&spec.numerator.column)?;
    let den_col = panel.underlying_index(&spec.denominator.column)?;

    let mut best: Option<(usize, FittedTransform)> = None;
    for lag in 0..=max_lag {
        // lagged view of the feature; rows without a lagged value drop out
        let mut lagged = vec![0.0; panel.n_rows()];
        let mut mask = vec![false; panel.n_rows()];
        if lag == 0 {
            lagged.copy_from_slice(panel.feature_column(j));
            mask.fill(true);
        } else {
            for row in 0..panel.n_rows() {
                let t = panel.row_t(row);
                if t < lag {
                    continue;
                }
                if let Some(x) = panel.feature_at(panel.row_element(row), t - lag, j) {
                    lagged[row] = x;
                    mask[row] = true;
                }
            }
        }
        let table = segment_values(&lagged, Some(&mask), scheme, bins, categorical_cap)?;

        // aggregate the lagged feature and the metric per segment
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); table.n_segments];
        for (row, &seg) in table.assignment.iter().enumerate() {
            if seg != UNSEGMENTED {
                members[seg as usize].push(row as u32);
            }
        }
        let mut points = FitPoints { x: Vec::new(), z: Vec::new(), w: Vec::new() };
        for rows in members.iter().filter(|rows| rows.len() >= n_min.max(1)) {
            let num = spec
                .numerator
                .op
                .apply(rows.iter().map(|&r| panel.underlying_column(num_col)[r as usize]));
            let den = spec
                .denominator
                .op
                .apply(rows.iter().map(|&r| panel.underlying_column(den_col)[r as usize]));
            if den == 0.0 {
                continue;
            }
            let z = num / den;
            if let Some((lo, hi)) = spec.bounds {
                if !(z >= lo && z <= hi) {
                    continue;
                }
            }
            let x = rows.iter().map(|&r| lagged[r as usize]).sum::<f64>() / rows.len() as f64;
            points.x.push(x);
            points.z.push(z);
            points.w.push(rows.len() as f64);
        }
        let fit = fit_points(feature, &points, options, lag)?;
        if best.as_ref().map_or(true, |(_, b)| fit.fit_r2 > b.fit_r2) {
            best = Some((lag, fit));
        }
    }
    Ok(best.expect("at least lag 0 was fitted"))
}

/// Indices of the transforms whose fit reaches `threshold`, ordered by
/// fit quality descending.
pub fn screen_features(fits: &[FittedTransform], threshold: f64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::Config(format!("screen threshold must lie in [0,1), got {threshold}")));
    }
    let mut survivors: Vec<usize> =
        (0..fits.len()).filter(|&i| fits[i].fit_r2 >= threshold).collect();
    if survivors.is_empty() {
        return Err(Error::EmptySurvivors { threshold });
    }
    survivors.sort_by(|&a, &b| {
        fits[b].fit_r2.partial_cmp(&fits[a].fit_r2).unwrap().then(a.cmp(&b))
    });
    Ok(survivors)
}

/// Constrained linear stack of univariate transforms on generalized
/// segments: the metric per segment regressed on the evaluated transforms
/// with non-negative weights and a free intercept, weighted by segment size.
#[derive(Debug, Clone)]
pub struct JointModel {
    pub gamma0: f64,
    /// Non-negative weight per transform, aligned with `features`.
    pub gammas: Vec<f64>,
    pub features: Vec<String>,
    pub fit_r2: f64,
    /// Fitted metric per retained segment, in `agg.segments` order.
    pub fitted: Vec<f64>,
    /// Set when the coefficient split is not unique (collinear columns).
    pub note: Option<String>,
}

pub fn fit_joint(agg: &SegmentAggregates, transforms: &[&FittedTransform]) -> Result<JointModel> {
    if transforms.is_empty() {
        return Err(Error::Contract("fit_joint needs at least one transform".into()));
    }
    if agg.segments.is_empty() {
        return Err(Error::InsufficientData("no retained segments for the joint fit".into()));
    }
    let mut columns = Vec::with_capacity(transforms.len());
    for tr in transforms {
        let j = agg.feature_index(&tr.feature)?;
        columns.push(
            agg.segments.iter().map(|s| tr.evaluate(s.x_mean[j])).collect::<Vec<f64>>(),
        );
    }
    let z: Vec<f64> = agg.segments.iter().map(|s| s.z).collect();
    let w: Vec<f64> = agg.segments.iter().map(|s| s.n as f64).collect();
    let fit = nnls_with_intercept(&columns, &z, Some(&w))?;
    let fit_r2 = weighted_r2(&z, &fit.fitted, &w);

    // a pruned column whose gradient also vanishes signals a non-unique split
    let mut degenerate = Vec::new();
    for (idx, col) in columns.iter().enumerate() {
        if fit.coefficients[idx] > 0.0 {
            continue;
        }
        let grad: f64 = col
            .iter()
            .zip(&fit.fitted)
            .zip(&z)
            .zip(&w)
            .map(|(((&c, &f), &zi), &wi)| -2.0 * wi * c * (zi - f))
            .sum();
        let scale: f64 = col.iter().zip(&w).map(|(&c, &wi)| wi * c * c).sum::<f64>().max(1.0);
        if grad.abs() <= scale * 1e-10 && col.iter().any(|&c| c != col[0]) {
            degenerate.push(transforms[idx].feature.clone());
        }
    }
    let note = if degenerate.is_empty() {
        None
    } else {
        Some(format!(
            "coefficient split is not unique: {} tie(s) with the active set ({}); fitted values are unique",
            degenerate.len(),
            degenerate.join(", ")
        ))
    };

    Ok(JointModel {
        gamma0: fit.intercept,
        gammas: fit.coefficients,
        features: transforms.iter().map(|t| t.feature.clone()).collect(),
        fit_r2,
        fitted: fit.fitted,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::segment::SegmentStat;
    use approx::assert_abs_diff_eq;

    fn identity_options() -> FitOptions {
        FitOptions { monotonicity: Monotonicity::None, link: Link::Identity, bounds: None }
    }

    fn agg_from(points: &[(f64, f64, usize)]) -> SegmentAggregates {
        SegmentAggregates {
            feature_names: vec!["x_f".into()],
            segments: points
                .iter()
                .enumerate()
                .map(|(i, &(x, z, n))| SegmentStat {
                    id: i as u32,
                    n,
                    x_mean: vec![x],
                    numerator: z,
                    denominator: 1.0,
                    z,
                })
                .collect(),
            filtered: Vec::new(),
        }
    }

    #[test]
    fn monotone_fit_pools_violators() {
        let agg = agg_from(&[(1.0, 0.1, 1), (2.0, 0.3, 1), (3.0, 0.2, 1)]);
        let options =
            FitOptions { monotonicity: Monotonicity::Increasing, ..identity_options() };
        let fit = fit_univariate(&agg, "x_f", &options).unwrap();
        let g: Vec<f64> = fit.knots.iter().map(|k| k.1).collect();
        assert_abs_diff_eq!(g[0], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(g[2], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn flat_target_has_zero_fit_r2() {
        let agg = agg_from(&[(1.0, 0.2, 5), (2.0, 0.2, 5), (3.0, 0.2, 5)]);
        let fit = fit_univariate(&agg, "x_f", &identity_options()).unwrap();
        assert!(fit.knots.iter().all(|k| k.1 == 0.2));
        assert_eq!(fit.fit_r2, 0.0);
    }

    #[test]
    fn inactive_constraint_reproduces_target_exactly() {
        let agg = agg_from(&[(1.0, 0.1, 2), (2.0, 0.2, 3), (3.0, 0.5, 4)]);
        let options =
            FitOptions { monotonicity: Monotonicity::Increasing, ..identity_options() };
        let fit = fit_univariate(&agg, "x_f", &options).unwrap();
        for (knot, z) in fit.knots.iter().zip([0.1, 0.2, 0.5]) {
            assert_abs_diff_eq!(knot.1, z, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(fit.fit_r2, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn duplicate_x_positions_merge_by_weight() {
        let agg = agg_from(&[(1.0, 0.1, 1), (1.0, 0.4, 3), (2.0, 0.5, 1)]);
        let fit = fit_univariate(&agg, "x_f", &identity_options()).unwrap();
        assert_eq!(fit.knots.len(), 2);
        assert_abs_diff_eq!(fit.knots[0].1, 0.325, epsilon = 1e-15);
    }

    #[test]
    fn single_distinct_x_is_unfittable() {
        let agg = agg_from(&[(1.0, 0.1, 1), (1.0, 0.2, 1)]);
        assert!(matches!(
            fit_univariate(&agg, "x_f", &identity_options()),
            Err(Error::Unfittable { .. })
        ));
    }

    #[test]
    fn screening_orders_and_filters() {
        let mk = |r2: f64| FittedTransform {
            feature: format!("f{r2}"),
            knots: vec![(0.0, 0.0), (1.0, 1.0)],
            monotonicity: Monotonicity::None,
            link: Link::Identity,
            bounds: None,
            lag: 0,
            fit_r2: r2,
        };
        let fits = vec![mk(0.01), mk(0.9)];
        let survivors = screen_features(&fits, 0.05).unwrap();
        assert_eq!(survivors, vec![1]);
        let all = screen_features(&fits, 0.0).unwrap();
        assert_eq!(all, vec![1, 0]);
        assert!(matches!(
            screen_features(&fits, 0.95),
            Err(Error::EmptySurvivors { .. })
        ));
        assert!(matches!(screen_features(&fits, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn joint_single_exact_column() {
        let agg = agg_from(&[(1.0, 0.1, 1), (2.0, 0.2, 1), (3.0, 0.4, 1)]);
        // transform that reproduces z exactly at the segment means
        let tr = FittedTransform {
            feature: "x_f".into(),
            knots: vec![(1.0, 0.1), (2.0, 0.2), (3.0, 0.4)],
            monotonicity: Monotonicity::None,
            link: Link::Identity,
            bounds: None,
            lag: 0,
            fit_r2: 1.0,
        };
        let joint = fit_joint(&agg, &[&tr]).unwrap();
        assert_abs_diff_eq!(joint.gamma0, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(joint.gammas[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(joint.fit_r2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn joint_duplicate_columns_unique_fitted_values() {
        let agg = agg_from(&[(1.0, 0.1, 2), (2.0, 0.25, 2), (3.0, 0.4, 2)]);
        let tr = FittedTransform {
            feature: "x_f".into(),
            knots: vec![(1.0, 0.1), (2.0, 0.2), (3.0, 0.4)],
            monotonicity: Monotonicity::None,
            link: Link::Identity,
            bounds: None,
            lag: 0,
            fit_r2: 1.0,
        };
        let single = fit_joint(&agg, &[&tr]).unwrap();
        let dup = fit_joint(&agg, &[&tr, &tr]).unwrap();
        for (a, b) in single.fitted.iter().zip(&dup.fitted) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-10);
        }
        assert!(dup.note.is_some());
    }

    #[test]
    fn joint_all_zero_columns_yield_weighted_mean() {
        let agg = agg_from(&[(1.0, 0.1, 1), (2.0, 0.2, 3)]);
        let tr = FittedTransform {
            feature: "x_f".into(),
            knots: vec![(0.0, 0.0), (5.0, 0.0)],
            monotonicity: Monotonicity::None,
            link: Link::Identity,
            bounds: None,
            lag: 0,
            fit_r2: 0.0,
        };
        let joint = fit_joint(&agg, &[&tr]).unwrap();
        assert_eq!(joint.gammas[0], 0.0);
        assert_abs_diff_eq!(joint.gamma0, (0.1 + 0.6) / 4.0, epsilon = 1e-12);
    }
}
