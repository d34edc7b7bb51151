use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use mdecomp::decomposition::{effect_vs_reference, scenario_predict};
use mdecomp::simulator::{self, simulate_portfolio};
use mdecomp::spc::{detect_signals, ix_mr_limits};
use mdecomp_cli::report::{emit_report, ReportFormat};
use mdecomp_cli::run::{load_ghat_csv, load_model_file, run_pipeline, PathChoice, RunConfig};

#[derive(Parser)]
#[command(name = "mdecomp", version, about = "Decompose non-additive metric time series into additive feature contributions")]
struct Cli {
    /// Directory artifacts are written to and read from.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Simulator seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Subcommand-specific configuration file (simulator scenario for
    /// `simulate`, pipeline settings for `decompose`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Commands,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PathArg {
    FiveStep,
    Differentiation,
    Both,
}

impl From<PathArg> for PathChoice {
    fn from(arg: PathArg) -> Self {
        match arg {
            PathArg::FiveStep => PathChoice::FiveStep,
            PathArg::Differentiation => PathChoice::Differentiation,
            PathArg::Both => PathChoice::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Svg,
}

#[derive(Subcommand)]
enum Commands {
    /// Generate the synthetic credit-portfolio panel.
    Simulate {
        /// Panel CSV path; defaults to <out-dir>/panel.csv. The scenario
        /// echo is written beside it.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Run the decomposition end to end (simulates the default scenario
    /// when no panel is given).
    Decompose {
        /// Input panel CSV; omit to simulate.
        #[arg(long)]
        panel: Option<PathBuf>,

        /// Metric spec JSON (numerator, denominator, link, bounds).
        #[arg(long)]
        metric_spec: Option<PathBuf>,

        /// Simulator scenario JSON used when no panel is given.
        #[arg(long)]
        sim_config: Option<PathBuf>,

        /// Which decomposition route(s) to run.
        #[arg(long, value_enum, default_value_t = PathArg::FiveStep)]
        path: PathArg,
    },

    /// Individuals & moving-range chart of any single-column-with-t CSV.
    Spc {
        /// Input CSV with a `t` column and one value column.
        #[arg(long)]
        input: PathBuf,

        /// Value column name; defaults to the first non-t column.
        #[arg(long)]
        column: Option<String>,
    },

    /// Per-feature effects between two periods of a completed run.
    Effects {
        #[arg(long)]
        t_ref: usize,

        #[arg(long)]
        t: usize,
    },

    /// Evaluate the fitted model on assumed feature levels.
    Scenario {
        /// JSON object mapping each surviving feature to its assumed
        /// centered series.
        #[arg(long)]
        overrides: PathBuf,
    },

    /// Render charts (SVG) or chart data (CSV) from a completed run.
    Report {
        #[arg(long, value_enum, default_value_t = FormatArg::Svg)]
        format: FormatArg,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 = configuration error, 3 = data error, 4 = numerical failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<mdecomp::Error>() {
            return match e {
                mdecomp::Error::Config(_) | mdecomp::Error::Json(_) => 2,
                mdecomp::Error::Numerical(_) | mdecomp::Error::UndefinedStatistic(_) => 4,
                _ => 3,
            };
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
    }
    3
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Commands::Simulate { out } => {
            let mut config = match &cli.config {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&text)?
                }
                None => simulator::default_scenario(),
            };
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            let panel = simulate_portfolio(&config)?;
            let out = out.unwrap_or_else(|| cli.out_dir.join("panel.csv"));
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            panel.write_csv(&out)?;
            let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("panel");
            let echo = out.with_file_name(format!("{stem}_config.json"));
            let mut text = serde_json::to_string_pretty(&config)?;
            text.push('\n');
            std::fs::write(&echo, text)?;
            println!(
                "wrote {} ({} accounts, {} rows, T={}) and {}",
                out.display(),
                panel.n_elements(),
                panel.n_rows(),
                panel.n_periods(),
                echo.display()
            );
            Ok(())
        }

        Commands::Decompose { panel, metric_spec, sim_config, path } => {
            let run_config = RunConfig {
                panel_path: panel,
                metric_spec_path: metric_spec,
                pipeline_config_path: cli.config.clone(),
                sim_config_path: sim_config,
                seed: cli.seed,
                out_dir: cli.out_dir.clone(),
                path: path.into(),
                effects_t_ref: None,
                effects_t: None,
            };
            let output = run_pipeline(&run_config)?;
            println!(
                "panel: {} rows, {} elements, T={}",
                output.panel.n_rows(),
                output.panel.n_elements(),
                output.panel.n_periods()
            );
            println!("raw metric out-of-control points: {}", output.raw_signals.len());
            for (name, route) in [
                ("five_step", &output.five_step),
                ("differentiation", &output.differentiation),
            ] {
                if let Some(route) = route {
                    println!(
                        "{name}: r2_adj={:.4}, survivors=[{}], residual signals={}",
                        route.model.r2_adj,
                        route.model.survivors.join(", "),
                        route.residual_signals.len()
                    );
                }
            }
            println!("artifacts in {}", cli.out_dir.display());
            Ok(())
        }

        Commands::Spc { input, column } => {
            let (series, name) = read_series_csv(&input, column.as_deref())?;
            let limits = ix_mr_limits(&series)?;
            let signals = detect_signals(&series, &limits);
            std::fs::create_dir_all(&cli.out_dir)?;
            let mut out = String::from("t,value,lcl,ucl,signal\n");
            for (t, v) in series.iter().enumerate() {
                let marker = signals
                    .iter()
                    .find(|s| s.t == t)
                    .map_or("", |s| match s.side {
                        mdecomp::spc::Side::Upper => "upper",
                        mdecomp::spc::Side::Lower => "lower",
                    });
                out.push_str(&format!("{t},{v},{},{},{marker}\n", limits.lcl, limits.ucl));
            }
            let path = cli.out_dir.join("spc.csv");
            std::fs::write(&path, out)?;
            println!(
                "column '{name}': mean={:.6}, mr_bar={:.6}, LCL={:.6}, UCL={:.6}, signals={}",
                limits.r_bar,
                limits.mr_bar,
                limits.lcl,
                limits.ucl,
                signals.len()
            );
            println!("wrote {}", path.display());
            Ok(())
        }

        Commands::Effects { t_ref, t } => {
            let model = load_model_file(&cli.out_dir.join("model.json"))?.into_model();
            let ghat = load_ghat_csv(&cli.out_dir.join("ghat.csv"))?;
            let report = effect_vs_reference(&model, &ghat, t_ref, t)?;
            let mut out = String::from("t_ref,t,feature,effect\n");
            for (name, eff) in &report.effects {
                println!("{name}: {eff:+.6}");
                out.push_str(&format!("{t_ref},{t},{name},{eff}\n"));
            }
            println!("total: {:+.6}", report.total);
            out.push_str(&format!("{t_ref},{t},total,{}\n", report.total));
            std::fs::write(cli.out_dir.join("effects.csv"), out)?;
            Ok(())
        }

        Commands::Scenario { overrides } => {
            let model = load_model_file(&cli.out_dir.join("model.json"))?.into_model();
            let text = std::fs::read_to_string(&overrides)
                .with_context(|| format!("reading {}", overrides.display()))?;
            let levels: BTreeMap<String, Vec<f64>> = serde_json::from_str(&text)?;
            let prediction = scenario_predict(&model, &levels)?;
            let mut out = String::from("t,zhat\n");
            for (t, v) in prediction.values.iter().enumerate() {
                out.push_str(&format!("{t},{v}\n"));
            }
            std::fs::write(cli.out_dir.join("scenario.csv"), out)?;
            let meta = serde_json::json!({
                "warning": prediction.warning,
                "survivors": model.survivors,
                "horizon": prediction.values.len(),
            });
            std::fs::write(
                cli.out_dir.join("scenario_meta.json"),
                serde_json::to_string_pretty(&meta)? + "\n",
            )?;
            println!("note: {}", prediction.warning);
            println!("wrote {}", cli.out_dir.join("scenario.csv").display());
            Ok(())
        }

        Commands::Report { format } => {
            let format = match format {
                FormatArg::Csv => ReportFormat::Csv,
                FormatArg::Svg => ReportFormat::Svg,
            };
            let written = emit_report(&cli.out_dir, format)?;
            for name in &written {
                println!("wrote {}", cli.out_dir.join(name).display());
            }
            Ok(())
        }
    }
}

/// Read a `t` + single-value CSV, returning the values in period order.
fn read_series_csv(path: &PathBuf, column: Option<&str>) -> Result<(Vec<f64>, String)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let t_idx = headers
        .iter()
        .position(|h| h == "t")
        .ok_or_else(|| anyhow!("{} has no 't' column", path.display()))?;
    let value_idx = match column {
        Some(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{} has no '{name}' column", path.display()))?,
        None => (0..headers.len())
            .find(|&i| i != t_idx)
            .ok_or_else(|| anyhow!("{} has no value column", path.display()))?,
    };
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let t: usize = record.get(t_idx).unwrap_or("").parse().context("parsing t")?;
        let v: f64 = record.get(value_idx).unwrap_or("").parse().context("parsing value")?;
        rows.push((t, v));
    }
    rows.sort_by_key(|&(t, _)| t);
    Ok((rows.into_iter().map(|(_, v)| v).collect(), headers[value_idx].to_string()))
}
