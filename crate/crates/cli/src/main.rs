//! `bushel`: county-level crop-yield prediction pipeline.
//!
//! Exit codes: 0 on success, 2 on validation errors, 3 on i/o errors.

use anyhow::{bail, Context, Result};
use bushel::explain::{aggregate_importances, infer_standard_grouping, shap_for_matrix, FeatureGrouping};
use bushel::features::{read_feature_table, write_feature_table};
use bushel::gbrt::{train, Ensemble, TrainParams};
use bushel::harness::{
    featurize_cubes_dir, labeled_dataset, matrix_from_table, walk_forward, Mode, Repr, Tuning,
};
use bushel::synth::{SyntheticWorld, WorldConfig};
use bushel::tuner::{default_space, tune, write_trial_log, SearchSpace};
use clap::{Args, Parser, Subcommand};
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "bushel", version, about = "Gradient-boosted county yield prediction from raster-cube time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic world (raster cubes, yields, truth).
    Generate(GenerateArgs),
    /// Convert raster cubes into a feature table.
    Featurize(FeaturizeArgs),
    /// Train one model on every labeled row of a feature table.
    Train(TrainArgs),
    /// Search hyperparameters with the tree-structured Parzen estimator.
    Tune(TuneArgs),
    /// Predict every row of a feature table with a saved model.
    Predict(PredictArgs),
    /// Per-sample Shapley attributions and grouped importances.
    Explain(ExplainArgs),
    /// Walk-forward per-year evaluation.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// World config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturizeArgs {
    /// Directory holding one cube directory per county-year.
    #[arg(long)]
    cubes: PathBuf,
    #[arg(long)]
    yields: PathBuf,
    #[arg(long)]
    counties: PathBuf,
    /// inyear | endofyear
    #[arg(long)]
    mode: String,
    /// triples | histograms
    #[arg(long, default_value = "triples")]
    repr: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    /// Training parameters JSON; defaults apply when omitted.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Overrides the seed in --params.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: all cores). Any value yields identical models.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    features: PathBuf,
    /// Search space JSON; the default space applies when omitted.
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Base parameters the sampled values are applied onto.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Winning TrainParams JSON.
    #[arg(long)]
    out: PathBuf,
    /// JSON-lines trial log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Attribution CSV: county_id,year,phi_0..phi_{N-1},base,prediction.
    #[arg(long)]
    out: PathBuf,
    /// Grouping JSON (array of {group, indices}); inferred from the feature
    /// width when omitted.
    #[arg(long)]
    groups: Option<PathBuf>,
    /// Grouped importances JSON.
    #[arg(long)]
    importances: Option<PathBuf>,
    /// Bar-chart rendering of the grouped importances.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    features: PathBuf,
    /// Inclusive year range, e.g. 2017:2021, or a single year.
    #[arg(long, value_name = "FIRST:LAST")]
    test_years: String,
    /// inyear | endofyear
    #[arg(long)]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: PathBuf,
    /// Tune per test year instead of using fixed parameters.
    #[arg(long)]
    tune: bool,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Training parameters JSON; defaults apply when omitted.
    #[arg(long)]
    params: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli.command) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}

/// 3 for anything rooted in an i/o failure, 2 for validation failures.
fn exit_code(err: &anyhow::Error) -> i32 {
    let io_rooted = err
        .chain()
        .any(|cause| cause.downcast_ref::<std::io::Error>().is_some());
    if io_rooted {
        3
    } else {
        2
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {what} {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {what} {}", path.display()))
}

fn parse_mode(s: &str) -> Result<Mode> {
    Mode::parse(s).with_context(|| format!("mode must be 'inyear' or 'endofyear', got {s:?}"))
}

fn parse_years(spec: &str) -> Result<Vec<i32>> {
    let (first, last) = match spec.split_once(':') {
        Some((a, b)) => (
            a.parse::<i32>().context("bad first test year")?,
            b.parse::<i32>().context("bad last test year")?,
        ),
        None => {
            let y = spec.parse::<i32>().context("bad test year")?;
            (y, y)
        }
    };
    if last < first {
        bail!("test year range {spec:?} is empty");
    }
    Ok((first..=last).collect())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(args) => {
            let config: WorldConfig = match &args.config {
                Some(path) => read_json(path, "world config")?,
                None => WorldConfig::default(),
            };
            let world = SyntheticWorld::generate(config)?;
            world.write_to_dir(&args.out)?;
            println!(
                "generated {} counties x {} years into {}",
                world.counties.len(),
                world.config.n_years(),
                args.out.display()
            );
        }
        Command::Featurize(args) => {
            let mode = parse_mode(&args.mode)?;
            let repr = Repr::parse(&args.repr)
                .with_context(|| format!("repr must be 'triples' or 'histograms', got {:?}", args.repr))?;
            let table = featurize_cubes_dir(&args.cubes, &args.yields, &args.counties, mode, repr)?;
            write_feature_table(&table, &args.out)?;
            println!(
                "wrote {} rows x {} features to {}",
                table.len(),
                table.n_features,
                args.out.display()
            );
        }
        Command::Train(args) => {
            let mut params: TrainParams = match &args.params {
                Some(path) => read_json(path, "train params")?,
                None => TrainParams::default(),
            };
            if let Some(seed) = args.seed {
                params.seed = seed;
            }
            let (_, dataset) = labeled_dataset(&args.features)?;
            let (model, history) = train(&dataset, None, &[], &params, args.threads)?;
            model.save(&args.out)?;
            println!(
                "trained {} trees (final train RMSE {:.4}) into {}",
                model.trees.len(),
                history.train_rmse.last().copied().unwrap_or(0.0),
                args.out.display()
            );
        }
        Command::Tune(args) => {
            let space: SearchSpace = match &args.space {
                Some(path) => read_json(path, "search space")?,
                None => default_space(),
            };
            let base: TrainParams = match &args.params {
                Some(path) => read_json(path, "train params")?,
                None => TrainParams {
                    max_rounds: 200,
                    early_stop_patience: 25,
                    ..TrainParams::default()
                },
            };
            let (_, dataset) = labeled_dataset(&args.features)?;
            let result = tune(&dataset, &space, &base, args.trials, args.seed)?;
            let json = serde_json::to_vec_pretty(&result.best_params)?;
            std::fs::write(&args.out, json)
                .with_context(|| format!("writing {}", args.out.display()))?;
            if let Some(log) = &args.log {
                write_trial_log(&result.trials, log)?;
            }
            println!(
                "best validation RMSE {:.4} after {} trials; params in {}",
                result.best_objective,
                result.trials.len(),
                args.out.display()
            );
        }
        Command::Predict(args) => {
            let model = Ensemble::load(&args.model)?;
            let table = read_feature_table(&args.features)?;
            if table.n_features != model.n_features {
                bail!(
                    "feature table width {} does not match model width {}",
                    table.n_features,
                    model.n_features
                );
            }
            let file = std::fs::File::create(&args.out)
                .with_context(|| format!("creating {}", args.out.display()))?;
            let mut out = std::io::BufWriter::new(file);
            writeln!(out, "county_id,year,prediction")?;
            for s in &table.samples {
                let pred = model.predict(&s.features)?;
                writeln!(out, "{},{},{}", s.county_id, s.year, pred)?;
            }
            out.flush()?;
            println!("wrote {} predictions to {}", table.len(), args.out.display());
        }
        Command::Explain(args) => {
            let model = Ensemble::load(&args.model)?;
            let table = read_feature_table(&args.features)?;
            let rows: Vec<usize> = (0..table.len()).collect();
            let matrix = matrix_from_table(&table, &rows);
            let attributions = shap_for_matrix(&model, &matrix)?;

            let file = std::fs::File::create(&args.out)
                .with_context(|| format!("creating {}", args.out.display()))?;
            let mut out = std::io::BufWriter::new(file);
            let mut header = String::from("county_id,year");
            for i in 0..model.n_features {
                header.push_str(&format!(",phi_{i}"));
            }
            header.push_str(",base,prediction");
            writeln!(out, "{header}")?;
            for (s, attr) in table.samples.iter().zip(&attributions) {
                let mut line = format!("{},{}", s.county_id, s.year);
                for phi in &attr.phi {
                    line.push_str(&format!(",{phi}"));
                }
                line.push_str(&format!(",{},{}", attr.base_value, attr.prediction));
                writeln!(out, "{line}")?;
            }
            out.flush()?;

            let grouping: FeatureGrouping = match &args.groups {
                Some(path) => read_json(path, "feature grouping")?,
                None => infer_standard_grouping(model.n_features).with_context(|| {
                    format!(
                        "cannot infer a default grouping for width {}; pass --groups",
                        model.n_features
                    )
                })?,
            };
            let importances = aggregate_importances(&model, &matrix, &grouping)?;
            if let Some(path) = &args.importances {
                let json = serde_json::to_vec_pretty(&importances)?;
                std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
            }
            if let Some(path) = &args.svg {
                let svg = render_importances_svg(&importances, 20);
                std::fs::write(path, svg).with_context(|| format!("writing {}", path.display()))?;
            }
            println!(
                "wrote {} attributions to {}; top group: {}",
                attributions.len(),
                args.out.display(),
                importances.first().map(|g| g.group.as_str()).unwrap_or("-")
            );
        }
        Command::Evaluate(args) => {
            let mode = parse_mode(&args.mode)?;
            let years = parse_years(&args.test_years)?;
            let table = read_feature_table(&args.features)?;
            // standard-configuration widths must agree with the declared mode
            match (table.n_features, mode) {
                (1129, Mode::InYear) => bail!("feature width 1129 is end-of-year data, not inyear"),
                (634, Mode::EndOfYear) => bail!("feature width 634 is in-year data, not endofyear"),
                _ => {}
            }
            let params: TrainParams = match &args.params {
                Some(path) => read_json(path, "train params")?,
                None => TrainParams {
                    eta: 0.2,
                    max_depth: 6,
                    lambda: 1.0,
                    subsample: 0.8,
                    colsample: 0.6,
                    max_rounds: 60,
                    ..TrainParams::default()
                },
            };
            let tuning = if args.tune {
                Tuning::On {
                    space: default_space(),
                    n_trials: args.trials,
                }
            } else {
                Tuning::Off
            };
            let mut report = walk_forward(&table, &years, mode, &tuning, &params, args.seed)?;
            report.feature_table_bytes = std::fs::metadata(&args.features).ok().map(|m| m.len());
            let json = serde_json::to_vec_pretty(&report)?;
            std::fs::write(&args.report, json)
                .with_context(|| format!("writing {}", args.report.display()))?;
            for row in &report.years {
                println!(
                    "{}: RMSE {:.3} R2 {} (train n={}, test n={})",
                    row.year,
                    row.rmse,
                    row.r2.map_or("-".to_string(), |v| format!("{v:.3}")),
                    row.n_train,
                    row.n_test
                );
            }
            println!(
                "AVG: RMSE {:.3} bu/ac ({:.2} kg/ha) R2 {} in {:.1}s",
                report.avg_rmse,
                report.avg_rmse * bushel::features::BU_AC_TO_KG_HA,
                report.avg_r2.map_or("-".to_string(), |v| format!("{v:.3}")),
                report.seconds_total
            );
        }
    }
    Ok(())
}

/// Minimal horizontal bar chart of the top groups.
fn render_importances_svg(importances: &[bushel::explain::ImportanceGroup], top: usize) -> String {
    let shown = &importances[..importances.len().min(top)];
    let max = shown.iter().map(|g| g.importance).fold(f64::EPSILON, f64::max);
    let bar_h = 22;
    let gap = 6;
    let label_w = 320;
    let chart_w = 560;
    let height = shown.len() * (bar_h + gap) + gap + 30;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"13\">\n",
        label_w + chart_w + 80
    );
    svg.push_str("<text x=\"8\" y=\"20\" font-weight=\"bold\">Mean |attribution| by band and timeframe</text>\n");
    for (i, g) in shown.iter().enumerate() {
        let y = 30 + gap + i * (bar_h + gap);
        let w = (g.importance / max * chart_w as f64).round() as usize;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            label_w - 8,
            y + bar_h - 6,
            xml_escape(&g.group)
        ));
        svg.push_str(&format!(
            "<rect x=\"{label_w}\" y=\"{y}\" width=\"{w}\" height=\"{bar_h}\" fill=\"#5b8dd9\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{:.3}</text>\n",
            label_w + w + 6,
            y + bar_h - 6,
            g.importance
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
