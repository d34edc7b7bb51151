//! Deterministic synthetic retail credit portfolio.
//!
//! Generates an element panel of monthly account observations: an outstanding
//! balance and a loss (the balance, in the month an account defaults) as
//! underlyings, and six candidate drivers as features. The bundled scenario
//! tells a simple story: a portfolio grows aggressively in its riskiest
//! segment, management cools that segment's acquisition at `t1`, a downturn
//! arrives late in the window, and a regulator cuts acquisition of the two
//! riskier segments at `t2`.
//!
//! Generation is reproducible: every account draws from its own SplitMix64
//! stream derived from (seed, account index), so the output is independent of
//! generation order and identical across runs with the same config.

use serde::{Deserialize, Serialize};

use crate::panel::{ElementPanel, PanelRow};
use crate::stats::interp_clamped;
use crate::{Error, Result};

pub const SEGMENTS: [char; 3] = ['A', 'B', 'C'];

/// Feature column names produced by the simulator, in panel order.
pub const FEATURES: [&str; 6] = [
    "x_unemployment",
    "x_segment",
    "x_tenure",
    "x_managerial",
    "x_regulatory",
    "x_month",
];

/// Underlying column names produced by the simulator.
pub const UNDERLYINGS: [&str; 2] = ["y_loss", "y_balance"];

/// Monthly acquisition counts: a shared base volume split by `segment_mix`,
/// compounding per segment until that segment's first acquisition
/// intervention (t1 for 'C', t2 for 'B'; 'A' compounds throughout), after
/// which the count holds at the cut level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthConfig {
    /// Total accounts acquired at t=0 across all segments.
    pub base_total: f64,
    /// Per-segment monthly compounding rate (A, B, C).
    pub monthly_rate: [f64; 3],
}

/// National unemployment path, in points:
/// `base + amplitude·sin(2π(t+phase)/period) + downturn(t)`, where the
/// downturn ramps up after `t2` and saturates at `downturn_cap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnemploymentPath {
    pub base: f64,
    pub cycle_amplitude: f64,
    pub cycle_period: f64,
    pub cycle_phase: f64,
    /// Points added per month after t2.
    pub downturn_ramp: f64,
    pub downturn_cap: f64,
}

/// Monthly default hazard: `logistic(intercept[segment] +
/// unemployment_slope·U(t) + tenure_curve(τ))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardParams {
    /// Log-odds intercepts per segment; riskier segments carry larger values.
    pub intercepts: [f64; 3],
    /// Log-odds per unemployment point; positive.
    pub unemployment_slope: f64,
    /// Piecewise-linear log-odds adjustment over tenure. The bundled curve
    /// floors the first month (no same-month defaults), stays neutral for
    /// young accounts, climbs to a hump around one year on book, and settles
    /// onto a plateau.
    pub tenure_curve: Vec<(f64, f64)>,
}

/// Outstanding balance: `base[segment] · tenure_curve(τ) · season(month) ·
/// exp(sigma·ξ)` with ξ a standard normal draw from the account's stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceParams {
    pub base: [f64; 3],
    /// Utilization ramp over tenure (multiplier).
    pub tenure_curve: Vec<(f64, f64)>,
    /// Lognormal noise scale.
    pub sigma: f64,
}

/// Full scenario description. `default_scenario()` documents every choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Monitoring window length T in months.
    pub months: u32,
    /// Acquisition months simulated before the window starts, so the book is
    /// seasoned at t=0. Only periods 0..months are emitted.
    #[serde(default)]
    pub warmup_months: u32,
    /// Managerial intervention month: acquisitions of 'C' are cut for t > t1.
    pub t1: u32,
    /// Regulatory intervention month: acquisitions of 'B' and 'C' are cut
    /// for t > t2; the macro downturn ramps up from here as well.
    pub t2: u32,
    /// Initial acquisition shares of segments A, B, C; positive, sum to 1.
    pub segment_mix: [f64; 3],
    pub growth: GrowthConfig,
    /// Multiplier on 'C' acquisitions after t1, in (0, 1].
    pub c_cut: f64,
    /// Multiplier on 'B' and 'C' acquisitions after t2, in (0, 1].
    pub reg_cut: f64,
    pub unemployment: UnemploymentPath,
    /// Twelve balance multipliers, January first (accounts see month
    /// `t % 12 + 1`).
    pub seasonality: Vec<f64>,
    pub hazard: HazardParams,
    pub balance: BalanceParams,
    pub seed: u64,
}

/// The canonical scenario: T=72 months, ~13k accounts, two interventions.
pub fn default_scenario() -> SimConfig {
    SimConfig {
        months: 72,
        t1: 24,
        t2: 48,
        // 'A' is the prime book, 'B' mainstream, 'C' the small but
        // aggressively growing subprime slice.
        segment_mix: [0.43, 0.39, 0.18],
        growth: GrowthConfig {
            base_total: 140.0,
            // 'C' compounds at 8.5%/month until the managerial cut; the
            // others grow slowly.
            monthly_rate: [0.004, 0.010, 0.085],
        },
        c_cut: 0.30,
        reg_cut: 0.50,
        unemployment: UnemploymentPath {
            base: 5.2,
            cycle_amplitude: 0.8,
            cycle_period: 48.0,
            // phase shifts the trough into the first half of the window
            cycle_phase: 24.0,
            downturn_ramp: 0.4,
            downturn_cap: 3.5,
        },
        // mild retail seasonality with a late-year spending peak
        seasonality: vec![0.97, 0.96, 0.98, 1.00, 1.01, 1.02, 1.01, 1.00, 0.99, 1.01, 1.03, 1.06],
        hazard: HazardParams {
            intercepts: [-7.8, -7.1, -6.4],
            unemployment_slope: 0.22,
            // floor at τ=0 (no same-month defaults), neutral below five
            // months, hump near 14 months, then a slow settle
            tenure_curve: vec![
                (0.0, -30.0),
                (1.0, 0.0),
                (5.0, 0.0),
                (9.0, 1.6),
                (14.0, 2.2),
                (20.0, 1.9),
                (28.0, 1.6),
                (72.0, 1.5),
            ],
        },
        balance: BalanceParams {
            base: [1250.0, 1020.0, 840.0],
            tenure_curve: vec![
                (0.0, 0.55),
                (3.0, 0.80),
                (6.0, 1.00),
                (12.0, 1.18),
                (24.0, 1.32),
                (72.0, 1.38),
            ],
            sigma: 0.25,
        },
        seed: 7,
    }
}

/// Metric spec fitting the simulator output: loss-to-balance under sum/sum,
/// logit link, bounded to [0, 1].
pub fn default_metric_spec() -> crate::panel::MetricSpec {
    crate::panel::MetricSpec::ratio("y_loss", "y_balance")
}

/// Pipeline settings matching the bundled scenario: balance-weighted
/// aggregation for every feature, a monotone increasing fit for the
/// unemployment rate, defaults everywhere else.
pub fn default_pipeline_config() -> crate::pipeline::PipelineConfig {
    use crate::pipeline::{FeatureOptions, Monotonicity, PipelineConfig, Weighting};
    let weighted = Weighting::Weighted("y_balance".into());
    let mut config = PipelineConfig {
        default_feature: FeatureOptions { weighting: weighted.clone(), ..FeatureOptions::default() },
        ..PipelineConfig::default()
    };
    config.features.insert(
        FEATURES[0].to_string(),
        FeatureOptions {
            monotonicity: Monotonicity::Increasing,
            weighting: weighted,
            ..FeatureOptions::default()
        },
    );
    config
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t1 < self.t2 && self.t2 < self.months) {
            return Err(Error::Config(format!(
                "interventions must satisfy t1 < t2 < months, got {} / {} / {}",
                self.t1, self.t2, self.months
            )));
        }
        let share_sum: f64 = self.segment_mix.iter().sum();
        if self.segment_mix.iter().any(|&s| s <= 0.0) || (share_sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config("segment_mix must be positive and sum to 1".into()));
        }
        if self.growth.base_total <= 0.0 {
            return Err(Error::Config("growth.base_total must be positive".into()));
        }
        for (name, cut) in [("c_cut", self.c_cut), ("reg_cut", self.reg_cut)] {
            if !(cut > 0.0 && cut <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1]")));
            }
        }
        if self.seasonality.len() != 12 || self.seasonality.iter().any(|&s| s <= 0.0) {
            return Err(Error::Config("seasonality needs 12 positive multipliers".into()));
        }
        if self.hazard.unemployment_slope < 0.0 {
            return Err(Error::Config("hazard.unemployment_slope must be non-negative".into()));
        }
        for (name, curve) in
            [("hazard.tenure_curve", &self.hazard.tenure_curve), ("balance.tenure_curve", &self.balance.tenure_curve)]
        {
            if curve.is_empty() {
                return Err(Error::Config(format!("{name} needs at least one knot")));
            }
            if curve.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::Config(format!("{name} knot x-values must strictly increase")));
            }
            if curve.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
                return Err(Error::Config(format!("{name} knots must be finite")));
            }
        }
        if self.balance.sigma < 0.0 {
            return Err(Error::Config("balance.sigma must be non-negative".into()));
        }
        if self.balance.base.iter().any(|&b| b <= 0.0) {
            return Err(Error::Config("balance.base must be positive".into()));
        }
        Ok(())
    }

    /// U(t), in points.
    pub fn unemployment_at(&self, t: u32) -> f64 {
        let u = &self.unemployment;
        let cycle = u.cycle_amplitude
            * (2.0 * std::f64::consts::PI * (t as f64 + u.cycle_phase) / u.cycle_period).sin();
        let downturn = if t > self.t2 {
            (u.downturn_ramp * (t - self.t2) as f64).min(u.downturn_cap)
        } else {
            0.0
        };
        u.base + cycle + downturn
    }

    /// Monthly default hazard for a segment at tenure τ and unemployment u.
    pub fn hazard_at(&self, segment: usize, tenure: u32, u: f64) -> f64 {
        let log_odds = self.hazard.intercepts[segment]
            + self.hazard.unemployment_slope * u
            + interp_clamped(&self.hazard.tenure_curve, tenure as f64);
        logistic(log_odds)
    }

    /// Accounts acquired in `segment` at month `t`.
    pub fn acquisitions(&self, segment: usize, t: u32) -> usize {
        // growth compounds until the segment's first intervention, then the
        // count holds at the cut level
        let growth_end = match segment {
            2 => self.t1,
            1 => self.t2,
            _ => self.months,
        };
        let t_eff = t.min(growth_end) as f64;
        let mut raw = self.growth.base_total
            * self.segment_mix[segment]
            * (1.0 + self.growth.monthly_rate[segment]).powf(t_eff);
        if segment == 2 && t > self.t1 {
            raw *= self.c_cut;
        }
        if segment >= 1 && t > self.t2 {
            raw *= self.reg_cut;
        }
        (raw + 0.5).floor() as usize
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// SplitMix64: tiny, cross-platform, and splittable by construction, which
/// keeps every account's draws independent of generation order.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via the polar method (sqrt/ln only).
    pub fn next_normal(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.next_f64() - 1.0;
            let v = 2.0 * self.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }
}

/// Stream seed for one account: the account index is spread by the golden
/// ratio and mixed with the run seed.
fn account_stream(seed: u64, account_index: u64) -> SplitMix64 {
    let mut root = SplitMix64::new(seed ^ account_index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    SplitMix64::new(root.next_u64())
}

/// Generate the panel for `config`.
///
/// Every account carries its static segment and acquisition month; per month
/// it records tenure, the shared unemployment level, the two vintage-era
/// flags, the calendar month, a balance draw, and a loss equal to the balance
/// in its default month. Defaulted accounts leave the population afterwards;
/// nobody else ever leaves.
pub fn simulate_portfolio(config: &SimConfig) -> Result<ElementPanel> {
    config.validate()?;
    let mut rows: Vec<PanelRow> = Vec::new();
    let mut account_index: u64 = 0;
    for t_acq in 0..config.months {
        for segment in 0..3 {
            let count = config.acquisitions(segment, t_acq);
            for _ in 0..count {
                account_index += 1;
                let element_id = format!("a{account_index:06}");
                let mut stream = account_stream(config.seed, account_index);
                let managerial = if t_acq > config.t1 { 1.0 } else { 0.0 };
                let regulatory = if t_acq > config.t2 { 1.0 } else { 0.0 };
                for t in t_acq..config.months {
                    let tenure = t - t_acq;
                    let u = config.unemployment_at(t);
                    let season = config.seasonality[(t % 12) as usize];
                    let noise = stream.next_normal();
                    let balance = config.balance.base[segment]
                        * interp_clamped(&config.balance.tenure_curve, tenure as f64)
                        * season
                        * (config.balance.sigma * noise).exp();
                    let hazard = config.hazard_at(segment, tenure, u);
                    let defaulted = stream.next_f64() < hazard;
                    let loss = if defaulted { balance } else { 0.0 };
                    rows.push(PanelRow {
                        element_id: element_id.clone(),
                        t,
                        features: vec![
                            u,
                            segment as f64,
                            tenure as f64,
                            managerial,
                            regulatory,
                            (t % 12 + 1) as f64,
                        ],
                        underlyings: vec![loss, balance],
                    });
                    if defaulted {
                        break;
                    }
                }
            }
        }
    }
    ElementPanel::from_rows(
        FEATURES.iter().map(|s| s.to_string()).collect(),
        UNDERLYINGS.iter().map(|s| s.to_string()).collect(),
        rows,
    )
}
