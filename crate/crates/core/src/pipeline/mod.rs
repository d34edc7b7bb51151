//! The segmentation → fitting → transformation → aggregation pipeline.
//!
//! Each input feature is processed independently: segment the observations,
//! estimate the metric per segment, fit the per-feature transform (screened
//! by fit quality), populate the transform over the panel, aggregate into a
//! per-period series, and mean-center it. The resulting series feed the
//! constrained final model in [`crate::decomposition`].

pub mod aggregate;
pub mod fit;
pub mod segment;
pub mod transform;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use aggregate::{aggregate_transformed, normalize_series, AggregatedFeatureSeries, Weighting};
pub use fit::{fit_joint, fit_univariate, screen_features, search_lag, FitOptions, JointModel};
pub use segment::{
    aggregate_segments, segment_generalized, segment_univariate, BinScheme, SegmentAggregates,
    SegmentScheme, SegmentStat, SegmentTable, CATEGORICAL_CAP,
};
pub use transform::{apply_transform, FittedTransform, Monotonicity, TransformedSeries};

use crate::link::Link;

/// Per-feature pipeline settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureOptions {
    pub scheme: BinScheme,
    pub bins: usize,
    pub monotonicity: Monotonicity,
    /// Overrides the metric spec's link when set.
    pub link: Option<Link>,
    /// Upper bound of the lag search; 0 fits the feature in place.
    pub max_lag: usize,
    pub weighting: Weighting,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            scheme: BinScheme::Percentile,
            bins: 10,
            monotonicity: Monotonicity::None,
            link: None,
            max_lag: 0,
            weighting: Weighting::Simple,
        }
    }
}

/// Pipeline configuration, read from JSON by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Smallest segment size retained for fitting.
    pub n_min: usize,
    /// fit_r2 cutoff of the screening step.
    pub screen_threshold: f64,
    /// Largest adjusted-R² sacrifice backward elimination accepts per drop.
    pub elim_threshold: f64,
    /// Features with at most this many distinct values are segmented by
    /// value.
    pub categorical_cap: usize,
    /// Per-underlying bin counts of the generalized grid; `None` means 10
    /// per underlying.
    pub generalized_grid: Option<Vec<usize>>,
    /// Per-feature overrides; unlisted features use `default_feature`.
    pub features: BTreeMap<String, FeatureOptions>,
    pub default_feature: FeatureOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_min: 30,
            screen_threshold: 0.05,
            elim_threshold: 0.005,
            categorical_cap: CATEGORICAL_CAP,
            generalized_grid: None,
            features: BTreeMap::new(),
            default_feature: FeatureOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn options_for(&self, feature: &str) -> FeatureOptions {
        self.features.get(feature).cloned().unwrap_or_else(|| self.default_feature.clone())
    }

    pub fn from_json_file(path: &std::path::Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
