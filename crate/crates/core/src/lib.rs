//! Additive decomposition of non-additive metric time series.
//!
//! Many business metrics are ratios of aggregated element-level quantities
//! (loss-to-balance rates, conversion rates, cost-to-revenue). Such metrics
//! cannot be summed over elements, which rules out modeling the metric time
//! series directly as a function of element-level input features. This crate
//! decomposes the metric series into additive, interpretable contributions of
//! the input features:
//!
//! 1. segment the (element, period) observations along each input feature,
//! 2. fit the metric per segment to obtain a per-feature transform (optionally
//!    monotone, optionally through a logit/probit link, optionally lagged),
//! 3. apply the transforms to every element-period observation,
//! 4. aggregate the transformed values into per-period series and mean-center
//!    them,
//! 5. regress the metric series on the centered series with a non-negativity
//!    constraint on the coefficients, with backward elimination.
//!
//! An alternative route linearizes the ratio metric by first differences,
//! giving an element-level linear form that can be fitted directly
//! ([`linearization`]). Residuals of the final model are monitored with
//! individuals & moving-range control charts ([`spc`]). A deterministic
//! synthetic credit-portfolio generator ([`simulator`]) exercises the whole
//! pipeline end to end.
//!
//! Numeric kernels ([`isotonic`], [`nnls`], [`spc`], [`linearization`],
//! transform evaluation) are generic over the scalar type via [`scalar::Real`];
//! panel I/O, the simulator, and the pipeline orchestration are pinned to
//! `f64`. Concrete `f64` aliases for the kernel types live at the crate root.

pub mod decomposition;
pub mod isotonic;
pub mod link;
pub mod linearization;
pub mod nnls;
pub mod panel;
pub mod pipeline;
pub mod scalar;
pub mod simulator;
pub mod spc;
pub mod stats;

pub use decomposition::{adjusted_r2, fit_constrained, DecompositionModel, EffectReport};
pub use link::Link;
pub use linearization::ConstantsMode;
pub use panel::{AggOp, CsvSchema, ElementPanel, MetricSeries, MetricSpec};
pub use pipeline::{
    AggregatedFeatureSeries, BinScheme, FeatureOptions, FittedTransform, JointModel,
    Monotonicity, PipelineConfig, SegmentAggregates, SegmentScheme, SegmentTable, Weighting,
};
pub use simulator::{default_scenario, simulate_portfolio, SimConfig};

/// `f64` control limits, as produced by the pipeline and CLI.
pub type ControlLimits = spc::ControlLimits<f64>;
/// `f64` linearization constants.
pub type LinearizationConstants = linearization::LinearizationConstants<f64>;
/// `f64` isotonic fit.
pub type IsotonicFit = isotonic::IsotonicFit<f64>;
/// `f64` non-negative least-squares fit.
pub type NnlsFit = nnls::NnlsFit<f64>;

/// Errors across loading, fitting, and reporting.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input file header does not match the expected schema.
    #[error("schema error: {0}")]
    Schema(String),
    /// A cell failed to parse as a finite number.
    #[error("parse error at data row {row}: {msg}")]
    Parse { row: usize, msg: String },
    /// Duplicate keys or inconsistent panel structure.
    #[error("integrity error: {0}")]
    Integrity(String),
    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),
    /// Metric denominator aggregate vanished at a period.
    #[error("degenerate metric: denominator aggregate is zero at t={t}")]
    DegenerateMetric { t: usize },
    /// Segmentation cannot produce at least two segments.
    #[error("degenerate segmentation: {0}")]
    DegenerateSegmentation(String),
    /// A univariate fit has too little variation to work with.
    #[error("unfittable feature '{feature}': {msg}")]
    Unfittable { feature: String, msg: String },
    /// Screening removed every candidate feature.
    #[error("no feature passed screening at threshold {threshold}; review the threshold or the inputs")]
    EmptySurvivors { threshold: f64 },
    /// Aggregation weights degenerate at a period.
    #[error("aggregation error at t={t}: {msg}")]
    Aggregation { t: usize, msg: String },
    /// Series too short for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// Caller violated an interface contract (missing column, bad index).
    #[error("contract error: {0}")]
    Contract(String),
    /// A statistic is undefined on the given input.
    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),
    /// Numerical failure inside a solver.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
