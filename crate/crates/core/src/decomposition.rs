//! The constrained final model: non-negative regression of the metric series
//! on the aggregated feature series, backward elimination, reference-period
//! effects, element contributions, and scenario evaluation.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::nnls::{kkt_check, nnls_with_intercept, KktReport};
use crate::panel::MetricSeries;
use crate::pipeline::{AggregatedFeatureSeries, TransformedSeries};
use crate::stats::r2;
use crate::{Error, Result};

/// One backward-elimination step.
#[derive(Debug, Clone, Serialize)]
pub struct ElimStep {
    pub dropped: String,
    pub r2_adj_before: f64,
    pub r2_adj_after: f64,
}

/// The fitted decomposition: intercept, non-negative coefficients over the
/// surviving series, fit statistics, and residuals.
#[derive(Debug, Clone)]
pub struct DecompositionModel {
    pub beta0: f64,
    /// Coefficient per survivor, aligned with `survivors`; all ≥ 0.
    pub betas: Vec<f64>,
    pub survivors: Vec<String>,
    pub r2_adj: f64,
    pub fitted: Vec<f64>,
    /// R(t) = Z(t) − Z̃(t); zero-mean because the intercept is free.
    pub residuals: Vec<f64>,
    pub elim_trace: Vec<ElimStep>,
    /// Set when no feature attains a positive coefficient.
    pub warning: Option<String>,
}

impl DecompositionModel {
    pub fn beta_for(&self, feature: &str) -> Option<f64> {
        self.survivors.iter().position(|s| s == feature).map(|i| self.betas[i])
    }
}

/// Adjusted R²: `1 − (1−R²)(T−1)/(T−k−1)`.
pub fn adjusted_r2(actual: &[f64], fitted: &[f64], k: usize) -> Result<f64> {
    let t = actual.len();
    if t <= k + 1 {
        return Err(Error::InsufficientData(format!(
            "adjusted R² needs more than {} observations for {k} regressors, got {t}",
            k + 1
        )));
    }
    let mean = actual.iter().sum::<f64>() / t as f64;
    if actual.iter().all(|&a| a == mean) {
        return Err(Error::UndefinedStatistic(
            "actual series has zero variance".into(),
        ));
    }
    let plain = r2(actual, fitted);
    Ok(1.0 - (1.0 - plain) * (t as f64 - 1.0) / (t as f64 - k as f64 - 1.0))
}

struct CandidateFit {
    fit: crate::nnls::NnlsFit<f64>,
    r2_adj: f64,
}

fn fit_candidates(z: &[f64], columns: &[&[f64]]) -> Result<CandidateFit> {
    let cols: Vec<Vec<f64>> = columns.iter().map(|c| c.to_vec()).collect();
    let fit = nnls_with_intercept(&cols, z, None)?;
    let r2_adj = adjusted_r2(z, &fit.fitted, columns.len())?;
    Ok(CandidateFit { fit, r2_adj })
}

/// Fit the constrained final model with backward elimination.
///
/// The full candidate set is fitted by non-negative least squares with a free
/// intercept; then, repeatedly, the candidate whose removal costs the least
/// adjusted R² is dropped — as long as that cost stays below `elim_threshold`
/// or the candidate's coefficient is already zero — refitting after each
/// drop.
pub fn fit_constrained(
    z: &MetricSeries,
    candidates: &[AggregatedFeatureSeries],
    elim_threshold: f64,
) -> Result<DecompositionModel> {
    let t_len = z.len();
    if candidates.is_empty() {
        return Err(Error::Contract("fit_constrained needs candidate series".into()));
    }
    for c in candidates {
        if c.len() != t_len {
            return Err(Error::Contract(format!(
                "series '{}' has length {}, metric has {t_len}",
                c.feature,
                c.len()
            )));
        }
    }
    if t_len <= candidates.len() + 1 {
        return Err(Error::InsufficientData(format!(
            "T={t_len} must exceed the candidate count {} plus one",
            candidates.len()
        )));
    }

    let mut included: Vec<usize> = (0..candidates.len()).collect();
    let columns = |set: &[usize]| -> Vec<&[f64]> {
        set.iter().map(|&i| candidates[i].values.as_slice()).collect()
    };
    let mut current = fit_candidates(&z.values, &columns(&included))?;
    let mut elim_trace = Vec::new();

    while !included.is_empty() {
        // cheapest removal first
        let mut best: Option<(usize, CandidateFit)> = None;
        for pos in 0..included.len() {
            let mut reduced = included.clone();
            reduced.remove(pos);
            let refit = if reduced.is_empty() {
                intercept_only(&z.values)?
            } else {
                fit_candidates(&z.values, &columns(&reduced))?
            };
            if best.as_ref().map_or(true, |(_, b)| refit.r2_adj > b.r2_adj) {
                best = Some((pos, refit));
            }
        }
        let (pos, refit) = best.unwrap();
        let reduction = current.r2_adj - refit.r2_adj;
        let beta_zero = current.fit.coefficients[pos] == 0.0;
        if reduction < elim_threshold || beta_zero {
            elim_trace.push(ElimStep {
                dropped: candidates[included[pos]].feature.clone(),
                r2_adj_before: current.r2_adj,
                r2_adj_after: refit.r2_adj,
            });
            included.remove(pos);
            current = refit;
        } else {
            break;
        }
    }

    let warning = if included.is_empty() || current.fit.coefficients.iter().all(|&b| b == 0.0) {
        Some("no feature attains a positive coefficient; intercept-only model".into())
    } else {
        None
    };

    let residuals: Vec<f64> =
        z.values.iter().zip(&current.fit.fitted).map(|(&a, &f)| a - f).collect();
    Ok(DecompositionModel {
        beta0: current.fit.intercept,
        betas: current.fit.coefficients.clone(),
        survivors: included.iter().map(|&i| candidates[i].feature.clone()).collect(),
        r2_adj: current.r2_adj,
        fitted: current.fit.fitted.clone(),
        residuals,
        elim_trace,
        warning,
    })
}

fn intercept_only(z: &[f64]) -> Result<CandidateFit> {
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let fitted = vec![mean; z.len()];
    let sse = z.iter().map(|&v| (v - mean) * (v - mean)).sum();
    let r2_adj = adjusted_r2(z, &fitted, 0)?;
    Ok(CandidateFit {
        fit: crate::nnls::NnlsFit { intercept: mean, coefficients: Vec::new(), fitted, sse },
        r2_adj,
    })
}

/// KKT stationarity of the final fit against the survivor columns.
pub fn verify_kkt(
    model: &DecompositionModel,
    z: &MetricSeries,
    ghat: &[AggregatedFeatureSeries],
    tol: f64,
) -> Result<KktReport<f64>> {
    let columns: Vec<Vec<f64>> = model
        .survivors
        .iter()
        .map(|name| {
            ghat.iter()
                .find(|g| &g.feature == name)
                .map(|g| g.values.clone())
                .ok_or_else(|| Error::Contract(format!("missing survivor series '{name}'")))
        })
        .collect::<Result<_>>()?;
    let fit = crate::nnls::NnlsFit {
        intercept: model.beta0,
        coefficients: model.betas.clone(),
        fitted: model.fitted.clone(),
        sse: model.residuals.iter().map(|r| r * r).sum(),
    };
    Ok(kkt_check(&columns, &z.values, None, &fit, tol))
}

/// Z̃(t) = β₀ + Σ βj Ĝj(t) over the given series.
pub fn predict_series(
    model: &DecompositionModel,
    ghat: &[AggregatedFeatureSeries],
) -> Result<MetricSeries> {
    let mut columns = Vec::with_capacity(model.survivors.len());
    let mut t_len = None;
    for name in &model.survivors {
        let series = ghat
            .iter()
            .find(|g| &g.feature == name)
            .ok_or_else(|| Error::Contract(format!("missing survivor series '{name}'")))?;
        if let Some(t) = t_len {
            if series.len() != t {
                return Err(Error::Contract("survivor series lengths differ".into()));
            }
        }
        t_len = Some(series.len());
        columns.push(series.values.as_slice());
    }
    let t_len = t_len.unwrap_or(0);
    let mut values = vec![model.beta0; t_len];
    for (beta, col) in model.betas.iter().zip(&columns) {
        for (v, &g) in values.iter_mut().zip(col.iter()) {
            *v += beta * g;
        }
    }
    Ok(MetricSeries { values })
}

/// H(i,t) = β₀ + Σ βj Gj(Xj(i,t)), per panel row, using the un-normalized
/// transformed values.
pub fn element_contribution(
    model: &DecompositionModel,
    transformed: &[TransformedSeries],
) -> Result<Vec<f64>> {
    let mut columns = Vec::with_capacity(model.survivors.len());
    for name in &model.survivors {
        let series = transformed
            .iter()
            .find(|s| &s.feature == name)
            .ok_or_else(|| Error::Contract(format!("missing transformed series '{name}'")))?;
        columns.push(series.values.as_slice());
    }
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::Contract("transformed series lengths differ".into()));
    }
    let mut values = vec![model.beta0; n];
    for (beta, col) in model.betas.iter().zip(&columns) {
        for (v, &g) in values.iter_mut().zip(col.iter()) {
            *v += beta * g;
        }
    }
    Ok(values)
}

/// Per-feature effects between a reference period and a later period.
#[derive(Debug, Clone, Serialize)]
pub struct EffectReport {
    pub t_ref: usize,
    pub t: usize,
    /// Effj = βj (Ĝj(t) − Ĝj(t_ref)) per survivor.
    pub effects: Vec<(String, f64)>,
    /// Σ effects = Z̃(t) − Z̃(t_ref).
    pub total: f64,
}

/// Decompose the fitted change between `t_ref` and `t` into per-feature
/// effects.
pub fn effect_vs_reference(
    model: &DecompositionModel,
    ghat: &[AggregatedFeatureSeries],
    t_ref: usize,
    t: usize,
) -> Result<EffectReport> {
    let t_len = ghat.first().map_or(0, |g| g.len());
    if !(t_ref < t && t < t_len) {
        return Err(Error::Contract(format!(
            "need 0 ≤ t_ref < t ≤ T−1, got t_ref={t_ref}, t={t}, T={t_len}"
        )));
    }
    let mut effects = Vec::with_capacity(model.survivors.len());
    let mut total = 0.0;
    for (name, &beta) in model.survivors.iter().zip(&model.betas) {
        let series = ghat
            .iter()
            .find(|g| &g.feature == name)
            .ok_or_else(|| Error::Contract(format!("missing survivor series '{name}'")))?;
        let eff = beta * (series.values[t] - series.values[t_ref]);
        total += eff;
        effects.push((name.clone(), eff));
    }
    Ok(EffectReport { t_ref, t, effects, total })
}

/// Forward evaluation of the fitted model on assumed centered feature
/// levels.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioPrediction {
    pub values: Vec<f64>,
    /// The model is a backward-looking explanatory decomposition; levels a
    /// feature never visited historically extrapolate its transform.
    pub warning: String,
}

/// Evaluate Z̃ on supplied per-survivor Ĝ levels (already centered with the
/// historical means). Every survivor must be covered for every period.
pub fn scenario_predict(
    model: &DecompositionModel,
    overrides: &BTreeMap<String, Vec<f64>>,
) -> Result<ScenarioPrediction> {
    let mut horizon = None;
    for name in &model.survivors {
        let series = overrides
            .get(name)
            .ok_or_else(|| Error::Contract(format!("missing override for survivor '{name}'")))?;
        match horizon {
            None => horizon = Some(series.len()),
            Some(h) if h != series.len() => {
                return Err(Error::Contract("override lengths differ".into()))
            }
            _ => {}
        }
    }
    let horizon = horizon.unwrap_or(0);
    let mut values = vec![model.beta0; horizon];
    for (name, &beta) in model.survivors.iter().zip(&model.betas) {
        for (v, &g) in values.iter_mut().zip(&overrides[name]) {
            *v += beta * g;
        }
    }
    Ok(ScenarioPrediction {
        values,
        warning: "backward-looking extrapolation: the decomposition explains the monitoring \
                  period and only extends to levels the transforms have seen"
            .into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Weighting;
    use approx::assert_abs_diff_eq;

    fn ghat(feature: &str, values: Vec<f64>) -> AggregatedFeatureSeries {
        AggregatedFeatureSeries {
            feature: feature.into(),
            values,
            weighting: Weighting::Simple,
            center: 0.0,
        }
    }

    #[test]
    fn ols_oracle_when_constraint_inactive() {
        let z = MetricSeries { values: vec![0.0, 1.0, 2.0] };
        let g = ghat("x_a", vec![-1.0, 0.0, 1.0]);
        let model = fit_constrained(&z, &[g], 0.0).unwrap();
        assert_abs_diff_eq!(model.beta0, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(model.betas[0], 1.0, epsilon = 1e-12);
        assert!(model.residuals.iter().all(|r| r.abs() < 1e-12));
        let mean_resid: f64 = model.residuals.iter().sum::<f64>() / 3.0;
        assert!(mean_resid.abs() < 1e-10);
    }

    #[test]
    fn anticorrelated_candidate_clamps_to_intercept() {
        let z = MetricSeries { values: vec![0.0, 1.0, 2.0] };
        let g = ghat("x_a", vec![1.0, 0.0, -1.0]);
        let model = fit_constrained(&z, &[g], 0.0).unwrap();
        assert!(model.survivors.is_empty() || model.betas.iter().all(|&b| b == 0.0));
        assert_abs_diff_eq!(model.beta0, 1.0, epsilon = 1e-12);
        assert!(model.warning.is_some());
    }

    #[test]
    fn zero_coefficient_features_are_always_dropped() {
        let z = MetricSeries { values: vec![0.0, 1.0, 2.0, 3.0, 4.2, 5.1] };
        let signal = ghat("x_signal", vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let anti = ghat("x_anti", vec![5.0, 4.0, 3.0, 2.0, 1.0, 0.0]);
        let model = fit_constrained(&z, &[signal.clone(), anti], 0.0).unwrap();
        assert_eq!(model.survivors, vec!["x_signal".to_string()]);
        // dropping the zero-β feature does not change fitted values
        let alone = fit_constrained(&z, &[signal], 0.0).unwrap();
        for (a, b) in model.fitted.iter().zip(&alone.fitted) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn elimination_drops_redundant_copy() {
        let z = MetricSeries { values: vec![0.1, 1.1, 1.9, 3.0, 4.1, 4.9, 6.2, 7.0] };
        let base: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let copy: Vec<f64> = base.iter().map(|v| v * 1.0001 + 0.01).collect();
        let model = fit_constrained(
            &z,
            &[ghat("x_a", base), ghat("x_b", copy)],
            0.005,
        )
        .unwrap();
        assert_eq!(model.survivors.len(), 1, "{:?}", model.survivors);
        assert!(!model.elim_trace.is_empty());
    }

    #[test]
    fn adjusted_r2_examples() {
        let actual = vec![1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(adjusted_r2(&actual, &actual, 1).unwrap(), 1.0, epsilon = 1e-15);
        let mean = vec![2.5; 4];
        assert_abs_diff_eq!(adjusted_r2(&actual, &mean, 0).unwrap(), 0.0, epsilon = 1e-15);
        assert!(matches!(
            adjusted_r2(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 0),
            Err(Error::UndefinedStatistic(_))
        ));
        assert!(matches!(
            adjusted_r2(&[1.0, 2.0], &[1.0, 2.0], 1),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn adjusted_r2_matches_two_pass_formula() {
        let mut state = 0xA5A5A5A5DEADBEEFu64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            let t = 6 + (next() * 10.0) as usize;
            let k = 1 + (next() * 3.0) as usize;
            let actual: Vec<f64> = (0..t).map(|_| next()).collect();
            let fitted: Vec<f64> = (0..t).map(|_| next()).collect();
            let got = adjusted_r2(&actual, &fitted, k).unwrap();
            // independent two-pass computation
            let mean = actual.iter().sum::<f64>() / t as f64;
            let sse: f64 = actual.iter().zip(&fitted).map(|(a, f)| (a - f) * (a - f)).sum();
            let sst: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
            let expect = 1.0 - (sse / sst) * (t as f64 - 1.0) / (t as f64 - k as f64 - 1.0);
            assert_abs_diff_eq!(got, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn predict_reproduces_training_fit() {
        let z = MetricSeries { values: vec![0.0, 1.0, 2.0] };
        let g = ghat("x_a", vec![-1.0, 0.0, 1.0]);
        let model = fit_constrained(&z, &[g.clone()], 0.0).unwrap();
        let pred = predict_series(&model, &[g]).unwrap();
        for (p, e) in pred.values.iter().zip([0.0, 1.0, 2.0]) {
            assert_abs_diff_eq!(*p, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn predict_is_linear_in_each_series() {
        let z = MetricSeries { values: vec![0.4, 1.1, 2.2, 2.8, 4.4] };
        let a = ghat("x_a", vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        let b = ghat("x_b", vec![0.5, -0.5, 0.5, -0.5, 0.0]);
        let model = fit_constrained(&z, &[a.clone(), b.clone()], 0.0).unwrap();
        let full = predict_series(&model, &[a.clone(), b.clone()]).unwrap();
        let zeroed = ghat("x_a", vec![0.0; 5]);
        let partial = predict_series(&model, &[zeroed, b]).unwrap();
        let beta_a = model.beta_for("x_a").unwrap_or(0.0);
        for t in 0..5 {
            assert_abs_diff_eq!(
                full.values[t] - partial.values[t],
                beta_a * a.values[t],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn intercept_only_predicts_constant() {
        let model = DecompositionModel {
            beta0: 0.42,
            betas: Vec::new(),
            survivors: Vec::new(),
            r2_adj: 0.0,
            fitted: Vec::new(),
            residuals: Vec::new(),
            elim_trace: Vec::new(),
            warning: None,
        };
        let pred = predict_series(&model, &[]).unwrap();
        assert!(pred.values.is_empty());
        let h = element_contribution(&model, &[]).unwrap();
        assert!(h.is_empty());
    }

    #[test]
    fn effect_substitution_example() {
        let model = DecompositionModel {
            beta0: 0.0,
            betas: vec![2.0],
            survivors: vec!["x_a".into()],
            r2_adj: 1.0,
            fitted: Vec::new(),
            residuals: Vec::new(),
            elim_trace: Vec::new(),
            warning: None,
        };
        let g = ghat("x_a", vec![0.01, 0.02, 0.03]);
        let report = effect_vs_reference(&model, &[g.clone()], 0, 2).unwrap();
        assert_abs_diff_eq!(report.effects[0].1, 0.04, epsilon = 1e-15);
        assert_abs_diff_eq!(report.total, 0.04, epsilon = 1e-15);
        // t == t_ref is rejected
        assert!(effect_vs_reference(&model, &[g.clone()], 1, 1).is_err());
        // identical rows → zero effects
        let flat = ghat("x_a", vec![0.5, 0.5, 0.5]);
        let zero = effect_vs_reference(&model, &[flat], 0, 2).unwrap();
        assert_eq!(zero.effects[0].1, 0.0);
    }

    #[test]
    fn effect_identity_against_prediction() {
        let z = MetricSeries { values: vec![0.0, 0.8, 2.1, 3.2, 3.9, 5.05] };
        let a = ghat("x_a", vec![-2.5, -1.5, -0.5, 0.5, 1.5, 2.5]);
        let b = ghat("x_b", vec![0.3, -0.3, 0.3, -0.3, 0.3, -0.3]);
        let model = fit_constrained(&z, &[a.clone(), b.clone()], 0.0).unwrap();
        let ghats = [a, b];
        let pred = predict_series(&model, &ghats).unwrap();
        for t_ref in 0..5 {
            for t in t_ref + 1..6 {
                let report = effect_vs_reference(&model, &ghats, t_ref, t).unwrap();
                assert_abs_diff_eq!(
                    pred.values[t_ref] + report.total,
                    pred.values[t],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn scenario_reproduces_history_and_shifts_linearly() {
        let z = MetricSeries { values: vec![0.0, 1.0, 2.0, 3.1, 3.9] };
        let a = ghat("x_a", vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        let model = fit_constrained(&z, &[a.clone()], 0.0).unwrap();
        let mut overrides = BTreeMap::new();
        overrides.insert("x_a".to_string(), a.values.clone());
        let scenario = scenario_predict(&model, &overrides).unwrap();
        let pred = predict_series(&model, &[a.clone()]).unwrap();
        for (s, p) in scenario.values.iter().zip(&pred.values) {
            assert_abs_diff_eq!(*s, *p, epsilon = 1e-12);
        }
        // all-zero overrides → constant β0
        let mut zeros = BTreeMap::new();
        zeros.insert("x_a".to_string(), vec![0.0; 3]);
        let flat = scenario_predict(&model, &zeros).unwrap();
        assert!(flat.values.iter().all(|&v| (v - model.beta0).abs() < 1e-15));
        // a +δ shift moves the prediction by exactly β·δ
        let beta = model.betas[0];
        let mut shifted = BTreeMap::new();
        shifted.insert("x_a".to_string(), a.values.iter().map(|v| v + 0.25).collect::<Vec<_>>());
        let up = scenario_predict(&model, &shifted).unwrap();
        for (u, p) in up.values.iter().zip(&pred.values) {
            assert_abs_diff_eq!(*u, p + beta * 0.25, epsilon = 1e-12);
        }
        // missing survivor level is a contract error
        assert!(scenario_predict(&model, &BTreeMap::new()).is_err());
    }

    #[test]
    fn kkt_holds_on_fits() {
        let z = MetricSeries { values: vec![0.1, 0.9, 2.2, 2.7, 4.3, 5.0, 5.8] };
        let a = ghat("x_a", vec![-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]);
        let b = ghat("x_b", vec![0.4, -0.2, 0.4, -0.2, 0.4, -0.2, 0.4]);
        let ghats = vec![a, b];
        let model = fit_constrained(&z, &ghats, 0.0).unwrap();
        let report = verify_kkt(&model, &z, &ghats, 1e-8).unwrap();
        assert!(report.ok, "active {}, bound {}", report.max_active_gradient, report.min_bound_gradient);
    }
}
