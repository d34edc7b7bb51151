//! Segmentation of (element, period) observations and per-segment aggregates.
//!
//! Univariate segmentation bins observations along one input feature;
//! generalized segmentation crosses quantile bins of the underlying
//! variables, so one shared segmentation serves every feature at once.

use serde::{Deserialize, Serialize};

use crate::panel::{ElementPanel, MetricSpec};
use crate::{Error, Result};

/// Sentinel assignment for rows excluded from a table (e.g. observations
/// with no lagged feature value).
pub const UNSEGMENTED: u32 = u32::MAX;

/// Binning rule requested for a univariate segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinScheme {
    #[default]
    Percentile,
    EqualRange,
}

/// How a table was actually built. Features with few distinct values fall
/// back to one bin per value regardless of the requested rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentScheme {
    Percentile,
    EqualRange,
    DistinctValue,
    GeneralizedGrid,
}

/// Assignment of every panel row to a segment.
#[derive(Debug, Clone)]
pub struct SegmentTable {
    pub scheme: SegmentScheme,
    /// Per panel row; [`UNSEGMENTED`] marks excluded rows.
    pub assignment: Vec<u32>,
    pub n_segments: usize,
    /// Interior bin boundaries per dimension (one entry for univariate
    /// tables, one per underlying for the generalized grid). Strictly
    /// increasing; informational for percentile/distinct schemes.
    pub bin_edges: Vec<Vec<f64>>,
}

/// Default cap under which a feature is treated as categorical.
pub const CATEGORICAL_CAP: usize = 20;

/// Univariate segmentation of one feature.
///
/// Percentile bins hold equal observation counts by pooled rank; equal-range
/// bins split `[min, max]` into equal widths. A feature with at most
/// `categorical_cap` distinct values gets one bin per value instead.
pub fn segment_univariate(
    panel: &ElementPanel,
    feature: &str,
    scheme: BinScheme,
    bins: usize,
    categorical_cap: usize,
) -> Result<SegmentTable> {
    let j = panel.feature_index(feature)?;
    let values = panel.feature_column(j);
    segment_values(values, None, scheme, bins, categorical_cap)
}

/// Segmentation of an arbitrary row-aligned column; `mask`, when given,
/// excludes rows (used by the lag search).
pub(crate) fn segment_values(
    values: &[f64],
    mask: Option<&[bool]>,
    scheme: BinScheme,
    bins: usize,
    categorical_cap: usize,
) -> Result<SegmentTable> {
    if bins < 2 {
        return Err(Error::Config(format!("need at least 2 bins, got {bins}")));
    }
    let included: Vec<u32> = (0..values.len() as u32)
        .filter(|&r| mask.map_or(true, |m| m[r as usize]))
        .collect();
    if included.is_empty() {
        return Err(Error::DegenerateSegmentation("no observations to segment".into()));
    }

    let mut distinct: Vec<f64> = included.iter().map(|&r| values[r as usize]).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateSegmentation(
            "feature is constant over the panel".into(),
        ));
    }

    let mut assignment = vec![UNSEGMENTED; values.len()];
    if distinct.len() <= categorical_cap {
        for &r in &included {
            let bin = distinct.partition_point(|&d| d < values[r as usize]);
            assignment[r as usize] = bin as u32;
        }
        return Ok(SegmentTable {
            scheme: SegmentScheme::DistinctValue,
            assignment,
            n_segments: distinct.len(),
            bin_edges: vec![distinct],
        });
    }

    match scheme {
        BinScheme::Percentile => {
            // equal counts by pooled rank; ties split in canonical row order
            let mut order = included.clone();
            order.sort_by(|&a, &b| {
                values[a as usize].partial_cmp(&values[b as usize]).unwrap().then(a.cmp(&b))
            });
            let n = order.len();
            for (rank, &r) in order.iter().enumerate() {
                assignment[r as usize] = (rank * bins / n) as u32;
            }
            let mut edges = Vec::new();
            for k in 1..bins {
                let v = values[order[k * n / bins] as usize];
                if edges.last().map_or(true, |&e| v > e) {
                    edges.push(v);
                }
            }
            Ok(SegmentTable {
                scheme: SegmentScheme::Percentile,
                assignment,
                n_segments: bins,
                bin_edges: vec![edges],
            })
        }
        BinScheme::EqualRange => {
            let lo = distinct[0];
            let hi = distinct[distinct.len() - 1];
            let width = (hi - lo) / bins as f64;
            for &r in &included {
                let v = values[r as usize];
                let bin = (((v - lo) / width) as usize).min(bins - 1);
                assignment[r as usize] = bin as u32;
            }
            let edges = (1..bins).map(|k| lo + width * k as f64).collect();
            Ok(SegmentTable {
                scheme: SegmentScheme::EqualRange,
                assignment,
                n_segments: bins,
                bin_edges: vec![edges],
            })
        }
    }
}

/// Generalized segmentation: the cross product of per-underlying quantile
/// bins. An underlying whose zeros would fill at least one quantile bin gets
/// a dedicated zero bin plus quantile bins of its positive values; a constant
/// underlying collapses to a single bin.
pub fn segment_generalized(panel: &ElementPanel, grid: &[usize]) -> Result<SegmentTable> {
    let m_count = panel.underlying_names().len();
    if grid.len() != m_count {
        return Err(Error::Config(format!(
            "generalized grid needs one bin count per underlying ({m_count}), got {}",
            grid.len()
        )));
    }
    let n = panel.n_rows();

    struct Dim {
        /// None = zero bin; Some(edges) = quantile edges of (positive) values.
        zero_bin: bool,
        edges: Vec<f64>,
        bins: usize,
    }

    let mut dims = Vec::with_capacity(m_count);
    for (m, &requested) in grid.iter().enumerate() {
        let values = panel.underlying_column(m);
        let mut sorted: Vec<f64> = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let constant = sorted[0] == sorted[n - 1];
        if constant {
            dims.push(Dim { zero_bin: false, edges: Vec::new(), bins: 1 });
            continue;
        }
        if requested < 2 {
            return Err(Error::Config(format!(
                "generalized grid needs at least 2 bins for non-degenerate underlying '{}'",
                panel.underlying_names()[m]
            )));
        }
        let zeros = sorted.iter().take_while(|&&v| v <= 0.0).filter(|&&v| v == 0.0).count();
        let zero_bin = sorted[0] >= 0.0 && zeros * requested >= n;
        let (pool, quantile_bins): (Vec<f64>, usize) = if zero_bin {
            (sorted.iter().copied().filter(|&v| v > 0.0).collect(), requested - 1)
        } else {
            (sorted, requested)
        };
        let edges = quantile_edges(&pool, quantile_bins);
        let bins = edges.len() + 1 + usize::from(zero_bin);
        dims.push(Dim { zero_bin, edges, bins });
    }

    let total: usize = dims.iter().map(|d| d.bins).product();
    if total < 2 {
        return Err(Error::DegenerateSegmentation(
            "all underlyings are constant over the panel".into(),
        ));
    }

    let mut assignment = vec![UNSEGMENTED; n];
    for r in 0..n {
        let mut id = 0usize;
        for (m, dim) in dims.iter().enumerate() {
            let v = panel.underlying_column(m)[r];
            let bin = if dim.bins == 1 {
                0
            } else if dim.zero_bin {
                if v == 0.0 {
                    0
                } else {
                    1 + dim.edges.partition_point(|&e| e <= v)
                }
            } else {
                dim.edges.partition_point(|&e| e <= v)
            };
            id = id * dim.bins + bin;
        }
        assignment[r] = id as u32;
    }

    Ok(SegmentTable {
        scheme: SegmentScheme::GeneralizedGrid,
        assignment,
        n_segments: total,
        bin_edges: dims.into_iter().map(|d| d.edges).collect(),
    })
}

/// Deduplicated quantile edges of a sorted pool; bin(v) = #edges ≤ v.
fn quantile_edges(sorted: &[f64], bins: usize) -> Vec<f64> {
    let n = sorted.len();
    if n == 0 || bins < 2 {
        return Vec::new();
    }
    let mut edges = Vec::with_capacity(bins - 1);
    for k in 1..bins {
        let v = sorted[(n * k / bins).min(n - 1)];
        if edges.last().map_or(true, |&e| v > e) {
            edges.push(v);
        }
    }
    edges
}

/// Per-segment aggregates: feature means, metric numerator/denominator, the
/// segment metric, and the sample size.
#[derive(Debug, Clone)]
pub struct SegmentStat {
    pub id: u32,
    pub n: usize,
    /// Mean of every feature over the segment, aligned with `feature_names`.
    pub x_mean: Vec<f64>,
    pub numerator: f64,
    pub denominator: f64,
    pub z: f64,
}

/// Retained segment statistics plus the list of filtered segments.
#[derive(Debug, Clone)]
pub struct SegmentAggregates {
    pub feature_names: Vec<String>,
    pub segments: Vec<SegmentStat>,
    /// (segment id, reason) for non-empty segments that were dropped.
    pub filtered: Vec<(u32, String)>,
}

impl SegmentAggregates {
    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Contract(format!("unknown feature '{name}' in aggregates")))
    }
}

/// Aggregate a panel over a segment table. Segments smaller than `n_min`,
/// with a zero metric denominator, or with a metric outside the spec bounds
/// are filtered with a reason rather than silently dropped.
pub fn aggregate_segments(
    panel: &ElementPanel,
    table: &SegmentTable,
    spec: &MetricSpec,
    n_min: usize,
) -> Result<SegmentAggregates> {
    if table.assignment.len() != panel.n_rows() {
        return Err(Error::Contract("segment table does not match the panel".into()));
    }
    spec.validate(panel)?;
    let num_col = panel.underlying_index(&spec.numerator.column)?;
    let den_col = panel.underlying_index(&spec.denominator.column)?;

    let mut members: Vec<Vec<u32>> = vec![Vec::new(); table.n_segments];
    for (row, &seg) in table.assignment.iter().enumerate() {
        if seg != UNSEGMENTED {
            members[seg as usize].push(row as u32);
        }
    }

    let k = panel.feature_names().len();
    let mut segments = Vec::new();
    let mut filtered = Vec::new();
    for (id, rows) in members.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let id = id as u32;
        if rows.len() < n_min {
            filtered.push((id, format!("size {} below n_min {}", rows.len(), n_min)));
            continue;
        }
        let numerator = spec
            .numerator
            .op
            .apply(rows.iter().map(|&r| panel.underlying_column(num_col)[r as usize]));
        let denominator = spec
            .denominator
            .op
            .apply(rows.iter().map(|&r| panel.underlying_column(den_col)[r as usize]));
        if denominator == 0.0 {
            filtered.push((id, "zero denominator aggregate".into()));
            continue;
        }
        let z = numerator / denominator;
        if let Some((lo, hi)) = spec.bounds {
            if !(z >= lo && z <= hi) {
                filtered.push((id, format!("metric {z} outside bounds [{lo}, {hi}]")));
                continue;
            }
        }
        let mut x_mean = vec![0.0; k];
        for &r in rows {
            for (j, acc) in x_mean.iter_mut().enumerate() {
                *acc += panel.feature_column(j)[r as usize];
            }
        }
        for acc in &mut x_mean {
            *acc /= rows.len() as f64;
        }
        segments.push(SegmentStat { id, n: rows.len(), x_mean, numerator, denominator, z });
    }

    Ok(SegmentAggregates {
        feature_names: panel.feature_names().to_vec(),
        segments,
        filtered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{panel_from_tuples, AggOp, ColumnAgg};
    use crate::link::Link;

    fn spec() -> MetricSpec {
        MetricSpec {
            numerator: ColumnAgg { column: "y_num".into(), op: AggOp::Sum },
            denominator: ColumnAgg { column: "y_den".into(), op: AggOp::Sum },
            link: Link::Identity,
            bounds: None,
        }
    }

    /// Panel with feature values 1..=n spread over single-element rows.
    fn counting_panel(n: u32) -> crate::panel::ElementPanel {
        let rows: Vec<(String, u32, f64, f64, f64)> = (0..n)
            .map(|i| (format!("e{i:03}"), 0u32, (i + 1) as f64, 0.0, 1.0))
            .collect();
        let tuples: Vec<(&str, u32, f64, f64, f64)> =
            rows.iter().map(|(id, t, x, a, b)| (id.as_str(), *t, *x, *a, *b)).collect();
        panel_from_tuples(&tuples).unwrap()
    }

    #[test]
    fn percentile_bins_hold_equal_counts() {
        let panel = counting_panel(100);
        let table =
            segment_univariate(&panel, "x_f", BinScheme::Percentile, 10, 20).unwrap();
        assert_eq!(table.scheme, SegmentScheme::Percentile);
        let mut counts = vec![0usize; 10];
        for &a in &table.assignment {
            counts[a as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c == 10), "{counts:?}");
    }

    #[test]
    fn equal_range_puts_edge_at_midpoint() {
        let panel = counting_panel(11); // values 1..=11
        let table =
            segment_univariate(&panel, "x_f", BinScheme::EqualRange, 2, 5).unwrap();
        assert_eq!(table.scheme, SegmentScheme::EqualRange);
        assert_eq!(table.bin_edges[0], vec![6.0]); // midpoint of [1, 11]
        for (row, &a) in table.assignment.iter().enumerate() {
            let v = panel.feature_column(0)[row];
            assert_eq!(a, u32::from(v >= 6.0), "value {v}");
        }
    }

    #[test]
    fn few_distinct_values_fall_back_to_categories() {
        let panel = panel_from_tuples(&[
            ("e1", 0, 2.0, 0.0, 1.0),
            ("e2", 0, 0.0, 0.0, 1.0),
            ("e3", 0, 1.0, 0.0, 1.0),
            ("e4", 0, 2.0, 0.0, 1.0),
        ])
        .unwrap();
        let table =
            segment_univariate(&panel, "x_f", BinScheme::Percentile, 10, 20).unwrap();
        assert_eq!(table.scheme, SegmentScheme::DistinctValue);
        assert_eq!(table.n_segments, 3);
    }

    #[test]
    fn constant_feature_is_degenerate() {
        let panel =
            panel_from_tuples(&[("e1", 0, 5.0, 0.0, 1.0), ("e2", 0, 5.0, 0.0, 1.0)]).unwrap();
        assert!(matches!(
            segment_univariate(&panel, "x_f", BinScheme::Percentile, 4, 20),
            Err(Error::DegenerateSegmentation(_))
        ));
    }

    #[test]
    fn generalized_quadrants_are_singletons() {
        let panel = panel_from_tuples(&[
            ("e1", 0, 0.0, 1.0, 1.0),
            ("e2", 0, 0.0, 1.0, 9.0),
            ("e3", 0, 0.0, 9.0, 1.0),
            ("e4", 0, 0.0, 9.0, 9.0),
        ])
        .unwrap();
        let table = segment_generalized(&panel, &[2, 2]).unwrap();
        let mut seen: Vec<u32> = table.assignment.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn zero_inflated_underlying_gets_zero_bin() {
        // y_num zero on 90% of rows, continuous positive elsewhere
        let mut rows = Vec::new();
        for i in 0..200u32 {
            let num = if i % 10 == 0 { 1.0 + i as f64 } else { 0.0 };
            rows.push((format!("e{i:03}"), 0u32, 0.0, num, 1.0 + (i as f64) * 0.01));
        }
        let tuples: Vec<(&str, u32, f64, f64, f64)> =
            rows.iter().map(|(id, t, x, a, b)| (id.as_str(), *t, *x, *a, *b)).collect();
        let panel = panel_from_tuples(&tuples).unwrap();
        let table = segment_generalized(&panel, &[10, 10]).unwrap();
        // dimension 0: zero bin + 9 positive quantile bins → ids stride by 10;
        // every zero-loss row sits in the first block of ids
        for (row, &a) in table.assignment.iter().enumerate() {
            let v = panel.underlying_column(0)[row];
            if v == 0.0 {
                assert!(a < 10, "zero row assigned to {a}");
            } else {
                assert!(a >= 10);
            }
        }
    }

    #[test]
    fn aggregate_filters_small_segments_with_reason() {
        let panel = panel_from_tuples(&[
            ("e1", 0, 1.0, 0.0, 100.0),
            ("e2", 0, 1.0, 10.0, 100.0),
            ("e3", 0, 9.0, 0.0, 100.0),
        ])
        .unwrap();
        let table =
            segment_univariate(&panel, "x_f", BinScheme::Percentile, 4, 20).unwrap();
        let agg = aggregate_segments(&panel, &table, &spec(), 2).unwrap();
        assert_eq!(agg.segments.len(), 1);
        assert_eq!(agg.segments[0].n, 2);
        assert!((agg.segments[0].z - 0.05).abs() < 1e-15);
        assert_eq!(agg.filtered.len(), 1);
        assert!(agg.filtered[0].1.contains("size"));
    }

    #[test]
    fn aggregate_two_row_ratio() {
        let panel = panel_from_tuples(&[
            ("e1", 0, 1.0, 0.0, 100.0),
            ("e2", 0, 1.0, 10.0, 100.0),
        ])
        .unwrap();
        let table = SegmentTable {
            scheme: SegmentScheme::DistinctValue,
            assignment: vec![0, 0],
            n_segments: 1,
            bin_edges: vec![vec![1.0]],
        };
        let agg = aggregate_segments(&panel, &table, &spec(), 1).unwrap();
        assert_eq!(agg.segments[0].z, 0.05);
        assert_eq!(agg.segments[0].x_mean[0], 1.0);
    }

    #[test]
    fn uniform_generalized_grid_has_multinomial_cell_counts() {
        // both underlyings uniform on (0,1): expect ~n/100 per cell
        let mut state = 0xD1B54A32D192ED03u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let n = 20_000u32;
        let rows: Vec<(String, u32, f64, f64, f64)> =
            (0..n).map(|i| (format!("e{i:05}"), 0u32, 0.0, next(), next())).collect();
        let tuples: Vec<(&str, u32, f64, f64, f64)> =
            rows.iter().map(|(id, t, x, a, b)| (id.as_str(), *t, *x, *a, *b)).collect();
        let panel = panel_from_tuples(&tuples).unwrap();
        let table = segment_generalized(&panel, &[10, 10]).unwrap();
        assert_eq!(table.n_segments, 100);
        let mut counts = vec![0usize; 100];
        for &a in &table.assignment {
            counts[a as usize] += 1;
        }
        let expected = n as f64 / 100.0;
        let sigma = (n as f64 * (1.0 / 100.0) * (99.0 / 100.0)).sqrt();
        for (cell, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expected).abs() <= 3.0 * sigma,
                "cell {cell}: count {c} vs expected {expected} (3σ={:.1})",
                3.0 * sigma
            );
        }
    }
}
