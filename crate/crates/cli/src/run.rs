//! End-to-end pipeline runs: simulate or load a panel, fit both decomposition
//! routes, monitor residuals, and write every artifact plus a manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mdecomp::decomposition::{
    effect_vs_reference, element_contribution, fit_constrained, DecompositionModel, EffectReport,
    ElimStep,
};
use mdecomp::linearization::{
    element_linear_form, fit_element_joint, fit_element_transform, linearization_constants,
    reconstruct_metric, ConstantsMode,
};
use mdecomp::panel::{compute_metric_series, load_panel, CsvSchema, ElementPanel, MetricSeries, MetricSpec};
use mdecomp::pipeline::{
    aggregate_segments, aggregate_transformed, apply_transform, fit_joint, fit_univariate,
    normalize_series, screen_features, search_lag, segment_generalized, segment_univariate,
    AggregatedFeatureSeries, FitOptions, FittedTransform, JointModel, PipelineConfig,
    SegmentAggregates, TransformedSeries,
};
use mdecomp::simulator::{self, simulate_portfolio, SimConfig};
use mdecomp::spc::{detect_signals, ix_mr_limits, Side, Signal};
use mdecomp::ControlLimits;

/// Which decomposition route(s) to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathChoice {
    FiveStep,
    Differentiation,
    Both,
}

impl PathChoice {
    fn runs_five_step(self) -> bool {
        matches!(self, PathChoice::FiveStep | PathChoice::Both)
    }
    fn runs_differentiation(self) -> bool {
        matches!(self, PathChoice::Differentiation | PathChoice::Both)
    }
}

/// Inputs of one run. Paths that are `None` fall back to the bundled
/// defaults (simulated panel, loss-to-balance spec, scenario pipeline
/// settings).
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub panel_path: Option<PathBuf>,
    pub metric_spec_path: Option<PathBuf>,
    pub pipeline_config_path: Option<PathBuf>,
    pub sim_config_path: Option<PathBuf>,
    /// Overrides the simulator seed.
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub path: PathChoice,
    pub effects_t_ref: Option<usize>,
    pub effects_t: Option<usize>,
}

impl RunConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            panel_path: None,
            metric_spec_path: None,
            pipeline_config_path: None,
            sim_config_path: None,
            seed: None,
            out_dir: out_dir.into(),
            path: PathChoice::FiveStep,
            effects_t_ref: None,
            effects_t: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub name: String,
    pub ms: u128,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Run manifest: configuration fingerprint, stage timings, and a content
/// hash of every artifact written.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub path: PathChoice,
    pub stages: Vec<StageTiming>,
    pub files: Vec<FileEntry>,
    pub stats: serde_json::Value,
    pub warnings: Vec<String>,
}

/// Everything a route produced, kept in memory for callers (tests, report).
pub struct RouteOutput {
    pub transforms: Vec<FittedTransform>,
    /// Screened features, best fit first.
    pub screened: Vec<String>,
    /// Normalized series per screened feature.
    pub ghat: Vec<AggregatedFeatureSeries>,
    /// Row-level transformed values per screened feature.
    pub transformed: Vec<TransformedSeries>,
    pub model: DecompositionModel,
    pub fitted: MetricSeries,
    pub residual_limits: ControlLimits,
    pub residual_signals: Vec<Signal<f64>>,
    pub joint: Option<JointModel>,
}

pub struct RunOutput {
    pub panel: ElementPanel,
    pub metric: MetricSeries,
    pub raw_limits: ControlLimits,
    pub raw_signals: Vec<Signal<f64>>,
    pub five_step: Option<RouteOutput>,
    pub differentiation: Option<RouteOutput>,
    pub effects: Option<EffectReport>,
    pub manifest: Manifest,
}

/// Collects written artifacts; on failure everything written so far is
/// renamed with a `.partial` suffix.
struct Artifacts {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Artifacts { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        self.files.push(FileEntry {
            name: name.to_string(),
            sha256: format!("{:x}", hasher.finalize()),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn partialize(&self) {
        for file in &self.files {
            let from = self.dir.join(&file.name);
            let to = self.dir.join(format!("{}.partial", file.name));
            let _ = std::fs::rename(&from, &to);
        }
    }
}

struct StageClock {
    stages: Vec<StageTiming>,
    current: Option<(String, Instant)>,
}

impl StageClock {
    fn new() -> Self {
        StageClock { stages: Vec::new(), current: None }
    }

    fn begin(&mut self, name: &str) {
        self.finish();
        self.current = Some((name.to_string(), Instant::now()));
    }

    fn finish(&mut self) {
        if let Some((name, start)) = self.current.take() {
            self.stages.push(StageTiming { name, ms: start.elapsed().as_millis() });
        }
    }

    fn current_name(&self) -> String {
        self.current.as_ref().map_or_else(|| "setup".into(), |(n, _)| n.clone())
    }
}

/// Serialized form of the fitted model (`model.json`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub beta0: f64,
    pub betas: BTreeMap<String, f64>,
    pub survivors: Vec<String>,
    pub r2_adj: f64,
    pub elim_trace: Vec<ElimTraceEntry>,
    #[serde(default)]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElimTraceEntry {
    pub dropped: String,
    pub r2_adj_before: f64,
    pub r2_adj_after: f64,
}

impl ModelFile {
    fn from_model(model: &DecompositionModel) -> Self {
        ModelFile {
            beta0: model.beta0,
            betas: model
                .survivors
                .iter()
                .cloned()
                .zip(model.betas.iter().copied())
                .collect(),
            survivors: model.survivors.clone(),
            r2_adj: model.r2_adj,
            elim_trace: model
                .elim_trace
                .iter()
                .map(|s: &ElimStep| ElimTraceEntry {
                    dropped: s.dropped.clone(),
                    r2_adj_before: s.r2_adj_before,
                    r2_adj_after: s.r2_adj_after,
                })
                .collect(),
            warning: model.warning.clone(),
        }
    }

    /// Rebuild the in-memory model (without residuals/fitted series) for the
    /// `effects` and `scenario` subcommands.
    pub fn into_model(self) -> DecompositionModel {
        let betas = self.survivors.iter().map(|s| self.betas[s]).collect();
        DecompositionModel {
            beta0: self.beta0,
            betas,
            survivors: self.survivors,
            r2_adj: self.r2_adj,
            fitted: Vec::new(),
            residuals: Vec::new(),
            elim_trace: self
                .elim_trace
                .into_iter()
                .map(|s| ElimStep {
                    dropped: s.dropped,
                    r2_adj_before: s.r2_adj_before,
                    r2_adj_after: s.r2_adj_after,
                })
                .collect(),
            warning: self.warning,
        }
    }
}

pub fn load_model_file(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading model file {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Read `ghat.csv` (header `t,<feature>...`) back into centered series.
pub fn load_ghat_csv(path: &Path) -> Result<Vec<AggregatedFeatureSeries>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("{} is empty", path.display()))?;
    let names: Vec<&str> = header.split(',').skip(1).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for line in lines {
        if line.is_empty() {
            continue;
        }
        for (i, cell) in line.split(',').skip(1).enumerate() {
            columns[i].push(cell.parse::<f64>().with_context(|| format!("parsing {cell}"))?);
        }
    }
    Ok(names
        .into_iter()
        .zip(columns)
        .map(|(name, values)| AggregatedFeatureSeries {
            feature: name.to_string(),
            values,
            weighting: mdecomp::Weighting::Simple,
            center: 0.0,
        })
        .collect())
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

fn signal_marker(signals: &[Signal<f64>], t: usize) -> &'static str {
    signals
        .iter()
        .find(|s| s.t == t)
        .map_or("", |s| match s.side {
            Side::Upper => "upper",
            Side::Lower => "lower",
        })
}

fn spc_csv(series: &[f64], limits: &ControlLimits, signals: &[Signal<f64>]) -> String {
    let mut out = String::from("t,value,lcl,ucl,signal\n");
    for (t, v) in series.iter().enumerate() {
        let _ = writeln!(out, "{t},{v},{},{},{}", limits.lcl, limits.ucl, signal_marker(signals, t));
    }
    out
}

fn ghat_csv(ghat: &[AggregatedFeatureSeries]) -> String {
    let mut out = String::from("t");
    for g in ghat {
        let _ = write!(out, ",{}", g.feature);
    }
    out.push('\n');
    let t_len = ghat.first().map_or(0, |g| g.len());
    for t in 0..t_len {
        let _ = write!(out, "{t}");
        for g in ghat {
            let _ = write!(out, ",{}", g.values[t]);
        }
        out.push('\n');
    }
    out
}

fn segments_csv(feature: &str, agg: &SegmentAggregates) -> Result<String> {
    let j = agg
        .feature_index(feature)
        .map_err(|e| anyhow!("segments artifact: {e}"))?;
    let mut out = String::from("segment,n,x_mean,numerator,denominator,z,filtered_reason\n");
    for s in &agg.segments {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},",
            s.id, s.n, s.x_mean[j], s.numerator, s.denominator, s.z
        );
    }
    for (id, reason) in &agg.filtered {
        let _ = writeln!(out, "{id},,,,,,\"{reason}\"");
    }
    Ok(out)
}

fn effects_csv(report: &EffectReport) -> String {
    let mut out = String::from("t_ref,t,feature,effect\n");
    for (name, eff) in &report.effects {
        let _ = writeln!(out, "{},{},{},{}", report.t_ref, report.t, name, eff);
    }
    let _ = writeln!(out, "{},{},total,{}", report.t_ref, report.t, report.total);
    out
}

/// Per-feature products of one route.
struct FeatureRun {
    transform: FittedTransform,
    aggregates: Option<SegmentAggregates>,
    transformed: TransformedSeries,
    ghat: AggregatedFeatureSeries,
}

fn run_five_step_feature(
    panel: &ElementPanel,
    spec: &MetricSpec,
    config: &PipelineConfig,
    feature: &str,
) -> Result<FeatureRun> {
    let options = config.options_for(feature);
    let fit_options = FitOptions::for_spec(spec, options.monotonicity, options.link);
    let table =
        segment_univariate(panel, feature, options.scheme, options.bins, config.categorical_cap)?;
    let aggregates = aggregate_segments(panel, &table, spec, config.n_min)?;
    let transform = if options.max_lag == 0 {
        fit_univariate(&aggregates, feature, &fit_options)?
    } else {
        search_lag(
            panel,
            feature,
            spec,
            &fit_options,
            options.scheme,
            options.bins,
            config.categorical_cap,
            config.n_min,
            options.max_lag,
        )?
        .1
    };
    let transformed = apply_transform(panel, &transform)?;
    let raw = aggregate_transformed(&transformed, panel, &options.weighting)?;
    let ghat = normalize_series(&raw);
    Ok(FeatureRun { transform, aggregates: Some(aggregates), transformed, ghat })
}

fn run_differentiation_feature(
    panel: &ElementPanel,
    lform: &[f64],
    config: &PipelineConfig,
    feature: &str,
) -> Result<FeatureRun> {
    let options = config.options_for(feature);
    let transform = fit_element_transform(
        panel,
        lform,
        feature,
        options.scheme,
        options.bins,
        config.categorical_cap,
        config.n_min,
        options.monotonicity,
    )?;
    let transformed = apply_transform(panel, &transform)?;
    let raw = aggregate_transformed(&transformed, panel, &options.weighting)?;
    let ghat = normalize_series(&raw);
    Ok(FeatureRun { transform, aggregates: None, transformed, ghat })
}

fn fit_route(
    metric: &MetricSeries,
    config: &PipelineConfig,
    runs: Vec<FeatureRun>,
    artifacts: &mut Artifacts,
    prefix: &str,
) -> Result<RouteOutput> {
    let transforms: Vec<FittedTransform> = runs.iter().map(|r| r.transform.clone()).collect();
    for run in &runs {
        artifacts.write_json(&format!("transform_{}{}.json", prefix, run.transform.feature), &run.transform)?;
        if let Some(agg) = &run.aggregates {
            artifacts.write(
                &format!("segments_{}{}.csv", prefix, run.transform.feature),
                segments_csv(&run.transform.feature, agg)?.as_bytes(),
            )?;
        }
    }

    let screened_idx = screen_features(&transforms, config.screen_threshold)?;
    let screened: Vec<String> =
        screened_idx.iter().map(|&i| transforms[i].feature.clone()).collect();
    let ghat: Vec<AggregatedFeatureSeries> =
        screened_idx.iter().map(|&i| runs[i].ghat.clone()).collect();
    let transformed: Vec<TransformedSeries> =
        screened_idx.iter().map(|&i| runs[i].transformed.clone()).collect();
    artifacts.write(&format!("{prefix}ghat.csv"), ghat_csv(&ghat).as_bytes())?;

    let model = fit_constrained(metric, &ghat, config.elim_threshold)?;
    artifacts.write_json(&format!("{prefix}model.json"), &ModelFile::from_model(&model))?;

    let fitted = MetricSeries { values: model.fitted.clone() };
    let mut residuals_csv = String::from("t,actual,fitted,residual\n");
    for t in 0..metric.len() {
        let _ = writeln!(
            residuals_csv,
            "{t},{},{},{}",
            metric.values[t], model.fitted[t], model.residuals[t]
        );
    }
    artifacts.write(&format!("{prefix}residuals.csv"), residuals_csv.as_bytes())?;

    let residual_limits = ix_mr_limits(&model.residuals)?;
    let residual_signals = detect_signals(&model.residuals, &residual_limits);
    artifacts.write(
        &format!("{prefix}spc_residuals.csv"),
        spc_csv(&model.residuals, &residual_limits, &residual_signals).as_bytes(),
    )?;

    Ok(RouteOutput {
        transforms,
        screened,
        ghat,
        transformed,
        model,
        fitted,
        residual_limits,
        residual_signals,
        joint: None,
    })
}

/// Resolved inputs after applying defaults; hashed into the manifest.
#[derive(Serialize)]
struct ResolvedConfig<'a> {
    panel: Option<String>,
    sim: Option<&'a SimConfig>,
    metric_spec: &'a MetricSpec,
    pipeline: &'a PipelineConfig,
    path: PathChoice,
}

/// Execute a full run. On error, artifacts written so far are renamed with a
/// `.partial` suffix and the failing stage is named in the error.
pub fn run_pipeline(run_config: &RunConfig) -> Result<RunOutput> {
    let mut artifacts = Artifacts::new(&run_config.out_dir)?;
    let mut clock = StageClock::new();
    match run_pipeline_inner(run_config, &mut artifacts, &mut clock) {
        Ok(output) => Ok(output),
        Err(err) => {
            artifacts.partialize();
            Err(err.context(format!("stage '{}' failed", clock.current_name())))
        }
    }
}

fn run_pipeline_inner(
    run_config: &RunConfig,
    artifacts: &mut Artifacts,
    clock: &mut StageClock,
) -> Result<RunOutput> {
    let mut warnings: Vec<String> = Vec::new();

    // resolve configs
    let metric_spec = match &run_config.metric_spec_path {
        Some(path) => MetricSpec::from_json_file(path)?,
        None => simulator::default_metric_spec(),
    };
    let pipeline_config = match &run_config.pipeline_config_path {
        Some(path) => PipelineConfig::from_json_file(path)?,
        None => simulator::default_pipeline_config(),
    };

    let mut sim_config: Option<SimConfig> = None;
    let panel = if let Some(path) = &run_config.panel_path {
        clock.begin("load");
        load_panel(path, &CsvSchema::default())?
    } else {
        clock.begin("simulate");
        let mut config = match &run_config.sim_config_path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text)?
            }
            None => simulator::default_scenario(),
        };
        if let Some(seed) = run_config.seed {
            config.seed = seed;
        }
        let panel = simulate_portfolio(&config)?;
        artifacts.write_json("sim_config.json", &config)?;
        // written directly because of its size, then accounted for by hand
        let csv_path = artifacts.dir.join("panel.csv");
        panel.write_csv(&csv_path)?;
        let bytes = std::fs::read(&csv_path)?;
        artifacts.files.push(FileEntry {
            name: "panel.csv".into(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        sim_config = Some(config);
        panel
    };

    let resolved = ResolvedConfig {
        panel: run_config.panel_path.as_ref().map(|p| p.display().to_string()),
        sim: sim_config.as_ref(),
        metric_spec: &metric_spec,
        pipeline: &pipeline_config,
        path: run_config.path,
    };
    let config_hash = sha256_hex(serde_json::to_string(&resolved)?.as_bytes());

    clock.begin("metric");
    let metric = compute_metric_series(&panel, &metric_spec)?;
    let mut metric_csv = String::from("t,z\n");
    for (t, z) in metric.values.iter().enumerate() {
        let _ = writeln!(metric_csv, "{t},{z}");
    }
    artifacts.write("metric.csv", metric_csv.as_bytes())?;

    let raw_limits = ix_mr_limits(&metric.values)?;
    let raw_signals = detect_signals(&metric.values, &raw_limits);
    artifacts.write("spc_raw.csv", spc_csv(&metric.values, &raw_limits, &raw_signals).as_bytes())?;

    let features: Vec<String> = panel.feature_names().to_vec();

    // five-step route
    let mut five_step = None;
    if run_config.path.runs_five_step() {
        clock.begin("univariate");
        let mut runs = Vec::new();
        for feature in &features {
            runs.push(
                run_five_step_feature(&panel, &metric_spec, &pipeline_config, feature)
                    .with_context(|| format!("feature '{feature}'"))?,
            );
        }
        clock.begin("decompose");
        let mut route = fit_route(&metric, &pipeline_config, runs, artifacts, "")?;

        clock.begin("joint");
        let grid = pipeline_config
            .generalized_grid
            .clone()
            .unwrap_or_else(|| vec![10; panel.underlying_names().len()]);
        match segment_generalized(&panel, &grid)
            .and_then(|table| aggregate_segments(&panel, &table, &metric_spec, pipeline_config.n_min))
            .and_then(|agg| {
                let screened: Vec<&FittedTransform> = route
                    .transforms
                    .iter()
                    .filter(|t| route.screened.contains(&t.feature))
                    .collect();
                fit_joint(&agg, &screened)
            }) {
            Ok(joint) => {
                artifacts.write_json("joint_model.json", &JointModelFile::from(&joint))?;
                if let Some(note) = &joint.note {
                    warnings.push(format!("joint fit: {note}"));
                }
                route.joint = Some(joint);
            }
            Err(err) => warnings.push(format!("joint fit skipped: {err}")),
        }

        clock.begin("contributions");
        let survivor_transformed: Vec<TransformedSeries> = route
            .model
            .survivors
            .iter()
            .map(|name| {
                route
                    .transformed
                    .iter()
                    .find(|s| &s.feature == name)
                    .expect("survivor screened")
                    .clone()
            })
            .collect();
        let h = element_contribution(&route.model, &survivor_transformed)?;
        let mut contributions = String::from("element_id,t,h\n");
        for row in 0..panel.n_rows() {
            let _ = writeln!(
                contributions,
                "{},{},{}",
                panel.element_ids()[panel.row_element(row)],
                panel.row_t(row),
                h[row]
            );
        }
        artifacts.write("contributions.csv", contributions.as_bytes())?;

        five_step = Some(route);
    }

    // numerical-differentiation route
    let mut differentiation = None;
    if run_config.path.runs_differentiation() {
        clock.begin("linearize");
        let num_col = panel.underlying_index(&metric_spec.numerator.column)?;
        let den_col = panel.underlying_index(&metric_spec.denominator.column)?;
        let mut y1 = vec![0.0; panel.n_periods()];
        let mut y2 = vec![0.0; panel.n_periods()];
        for t in 0..panel.n_periods() {
            for &r in panel.rows_at(t) {
                y1[t] += panel.underlying_column(num_col)[r as usize];
                y2[t] += panel.underlying_column(den_col)[r as usize];
            }
        }
        let constants = linearization_constants(&y1, &y2, ConstantsMode::MeanBased)?;
        artifacts.write_json("lin_constants.json", &constants)?;

        let lform = element_linear_form(&panel, &metric_spec, &constants)?;
        let mut lform_csv = String::from("element_id,t,l\n");
        for row in 0..panel.n_rows() {
            let _ = writeln!(
                lform_csv,
                "{},{},{}",
                panel.element_ids()[panel.row_element(row)],
                panel.row_t(row),
                lform[row]
            );
        }
        artifacts.write("lform.csv", lform_csv.as_bytes())?;

        let reconstructed = reconstruct_metric(metric.values[0], &y1, &y2, &constants);
        let mut recon_csv = String::from("t,exact,reconstructed,abs_error\n");
        for t in 0..metric.len() {
            let _ = writeln!(
                recon_csv,
                "{t},{},{},{}",
                metric.values[t],
                reconstructed[t],
                (metric.values[t] - reconstructed[t]).abs()
            );
        }
        artifacts.write("reconstruction.csv", recon_csv.as_bytes())?;

        clock.begin("lin_fit");
        let mut runs = Vec::new();
        for feature in &features {
            runs.push(
                run_differentiation_feature(&panel, &lform, &pipeline_config, feature)
                    .with_context(|| format!("feature '{feature}'"))?,
            );
        }
        let mut route = fit_route(&metric, &pipeline_config, runs, artifacts, "lin_")?;

        // element-level joint fit over the final survivors
        let survivor_transformed: Vec<TransformedSeries> = route
            .model
            .survivors
            .iter()
            .map(|name| {
                route
                    .transformed
                    .iter()
                    .find(|s| &s.feature == name)
                    .expect("survivor screened")
                    .clone()
            })
            .collect();
        if !survivor_transformed.is_empty() {
            match fit_element_joint(&lform, &survivor_transformed) {
                Ok(joint) => {
                    artifacts.write_json("lin_joint_model.json", &JointModelFile::from(&joint))?;
                    route.joint = Some(joint);
                }
                Err(err) => warnings.push(format!("element joint fit skipped: {err}")),
            }
        }

        differentiation = Some(route);
    }

    // cross-route comparison
    if let (Some(five), Some(lin)) = (&five_step, &differentiation) {
        clock.begin("compare");
        let mut comparison = String::from("feature,five_step_survivor,differentiation_survivor,ghat_correlation\n");
        let mut all: Vec<String> = five.model.survivors.clone();
        for s in &lin.model.survivors {
            if !all.contains(s) {
                all.push(s.clone());
            }
        }
        for feature in &all {
            let a = five.ghat.iter().find(|g| &g.feature == feature);
            let b = lin.ghat.iter().find(|g| &g.feature == feature);
            let corr = match (a, b) {
                (Some(a), Some(b)) => {
                    format!("{}", mdecomp::stats::pearson(&a.values, &b.values))
                }
                _ => String::new(),
            };
            let _ = writeln!(
                comparison,
                "{feature},{},{},{corr}",
                five.model.survivors.contains(feature),
                lin.model.survivors.contains(feature),
            );
        }
        artifacts.write("comparison.csv", comparison.as_bytes())?;
    }

    // effects against a reference period
    clock.begin("effects");
    let mut effects = None;
    if let Some(route) = five_step.as_ref().or(differentiation.as_ref()) {
        let t_len = metric.len();
        let t_ref = run_config.effects_t_ref.unwrap_or(t_len * 2 / 3);
        let t = run_config.effects_t.unwrap_or(t_len - 1);
        if route.model.survivors.is_empty() {
            warnings.push("effects skipped: intercept-only model".into());
        } else {
            let report = effect_vs_reference(&route.model, &route.ghat, t_ref, t)?;
            artifacts.write("effects.csv", effects_csv(&report).as_bytes())?;
            effects = Some(report);
        }
    }

    clock.begin("manifest");
    let stats = run_stats(&metric, &raw_signals, &five_step, &differentiation);
    clock.finish();

    let manifest = Manifest {
        tool: "mdecomp".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: sim_config.as_ref().map(|c| c.seed),
        config_hash,
        path: run_config.path,
        stages: clock.stages.clone(),
        files: artifacts.files.clone(),
        stats,
        warnings: warnings.clone(),
    };
    let mut manifest_text = serde_json::to_string_pretty(&manifest)?;
    manifest_text.push('\n');
    std::fs::write(artifacts.dir.join("manifest.json"), manifest_text)?;

    let output = RunOutput {
        panel,
        metric,
        raw_limits,
        raw_signals,
        five_step,
        differentiation,
        effects,
        manifest,
    };
    Ok(output)
}

#[derive(Serialize)]
struct JointModelFile {
    gamma0: f64,
    gammas: BTreeMap<String, f64>,
    fit_r2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

impl From<&JointModel> for JointModelFile {
    fn from(joint: &JointModel) -> Self {
        JointModelFile {
            gamma0: joint.gamma0,
            gammas: joint
                .features
                .iter()
                .cloned()
                .zip(joint.gammas.iter().copied())
                .collect(),
            fit_r2: joint.fit_r2,
            note: joint.note.clone(),
        }
    }
}

fn route_stats(route: &RouteOutput) -> serde_json::Value {
    serde_json::json!({
        "screened": route.screened,
        "survivors": route.model.survivors,
        "r2_adj": route.model.r2_adj,
        "residual_signals": route.residual_signals.len(),
        "joint_fit_r2": route.joint.as_ref().map(|j| j.fit_r2),
        "warning": route.model.warning,
    })
}

fn run_stats(
    metric: &MetricSeries,
    raw_signals: &[Signal<f64>],
    five_step: &Option<RouteOutput>,
    differentiation: &Option<RouteOutput>,
) -> serde_json::Value {
    let mut stats = serde_json::Map::new();
    stats.insert("periods".into(), serde_json::json!(metric.len()));
    stats.insert("raw_metric_signals".into(), serde_json::json!(raw_signals.len()));
    if let Some(route) = five_step {
        stats.insert("five_step".into(), route_stats(route));
    }
    if let Some(route) = differentiation {
        stats.insert("differentiation".into(), route_stats(route));
    }
    serde_json::Value::Object(stats)
}
