use std::path::PathBuf;
use std::process::ExitCode;

use cerank::baselines::{BaselineKind, CoordinateAxis, Direction};
use cerank::config::{check_coefficients, Config, ModelSpec};
use cerank::corpus::AmbiguityPolicy;
use cerank::features::FeatureMask;
use cerank::metrics::TauMode;
use cerank::pipeline::{self, EvalCurve, Paths};
use cerank::ranker::{ClassifierKind, ScoreMode};
use cerank::synth;
use cerank::Error;
use clap::{Args, Parser, Subcommand};

/// Rank neighborhoods by collective efficacy from location-tagged tweets.
#[derive(Debug, Parser)]
#[command(name = "cerank", version)]
struct Cli {
    /// TOML configuration; flags given here take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding the input corpus files.
    #[arg(long, global = true, default_value = "data")]
    data: PathBuf,
    /// Directory for stage outputs.
    #[arg(long, global = true, default_value = "work")]
    work: PathBuf,
    /// Master seed; every generator seed is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Share of eligible neighborhoods (by tweet count) that are ranked.
    #[arg(long, global = true)]
    top_percent: Option<f64>,
    /// Tie coefficients, e.g. 0,0.2,0.4,0.6,0.8,1.0.
    #[arg(long, global = true, value_delimiter = ',')]
    coefficients: Option<Vec<f64>>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// logreg, forest or mlp.
    #[arg(long)]
    classifier: Option<ClassifierKind>,
    /// Comma-separated feature families, or `all`.
    #[arg(long)]
    features: Option<FeatureMask>,
    /// hard or soft aggregation of pairwise predictions.
    #[arg(long)]
    score_mode: Option<ScoreMode>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scenario into the data directory.
    Synth {
        /// Output directory (defaults to --data).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        neighborhoods: Option<usize>,
        /// Also write the resolved configuration next to the data.
        #[arg(long)]
        write_config: bool,
    },
    /// Split tweets in time and assign them to neighborhoods.
    Ingest {
        #[arg(long)]
        split_fraction: Option<f64>,
        /// ignore-ambiguous or drop-tweet.
        #[arg(long)]
        ambiguity: Option<AmbiguityPolicy>,
    },
    /// Aggregate survey reports into normalised efficacy.
    GroundTruth {
        #[arg(long)]
        min_reports: Option<usize>,
    },
    /// Fit text models and write per-neighborhood feature blocks.
    Features {
        /// Fixed number of topics.
        #[arg(long)]
        topics: Option<usize>,
        /// Candidate topic counts for selection by perplexity change.
        #[arg(long, value_delimiter = ',')]
        topic_counts: Option<Vec<usize>>,
    },
    /// Fit one pairwise ranker per tie coefficient.
    Train(ModelArgs),
    /// Write the global ranking of the active set.
    Rank {
        #[command(flatten)]
        model: ModelArgs,
        /// Tie coefficient of the model used (defaults to the largest).
        #[arg(long)]
        coefficient: Option<f64>,
        /// Output file (defaults to <work>/ranking.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a non-learned ordering.
    Baseline {
        #[arg(long)]
        kind: BaselineKind,
        #[arg(long)]
        direction: Option<Direction>,
        /// lat-lon, lat or lon.
        #[arg(long)]
        axis: Option<CoordinateAxis>,
    },
    /// τ_x per tie coefficient and AUC-ERC, written to eval.csv.
    Evaluate {
        #[command(flatten)]
        model: ModelArgs,
        /// strict or projected (both are always written).
        #[arg(long)]
        tau_mode: Option<TauMode>,
        /// Add every baseline to the output.
        #[arg(long)]
        baselines: bool,
    },
    /// eval.csv for the report models and baselines plus plot tables.
    Report {
        /// Models as classifier:family+family, comma-separated.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<ModelSpec>>,
        #[arg(long, value_delimiter = ',')]
        topk_percents: Option<Vec<f64>>,
    },
}

fn model_spec(cfg: &mut Config, args: &ModelArgs) -> ModelSpec {
    if let Some(k) = args.classifier {
        cfg.ranker.classifier = k;
    }
    if let Some(m) = &args.features {
        cfg.ranker.features = m.clone();
    }
    if let Some(s) = args.score_mode {
        cfg.ranker.score_mode = s;
    }
    cfg.ranker.spec()
}

fn print_curves(curves: &[EvalCurve], mode: TauMode) {
    println!("model_id\tcoefficient\ttau_x_strict\ttau_x_projected");
    for c in curves {
        for (i, coef) in c.coefficients.iter().enumerate() {
            println!("{}\t{coef}\t{:.4}\t{:.4}", c.model_id, c.strict[i], c.projected[i]);
        }
    }
    let label = match mode {
        TauMode::Strict => "strict",
        TauMode::Projected => "projected",
    };
    for c in curves {
        println!("AUC-ERC ({label}) {}: {:.4}", c.model_id, c.auc(mode));
    }
}

fn run(cli: Cli) -> cerank::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(p) = cli.top_percent {
        cfg.corpus.top_percent = p;
    }
    if let Some(c) = &cli.coefficients {
        check_coefficients(c)?;
        cfg.evaluate.coefficients = c.clone();
    }

    let paths = Paths::new(&cli.data, &cli.work);
    match &cli.command {
        Command::Synth {
            out,
            neighborhoods,
            write_config,
        } => {
            if let Some(n) = neighborhoods {
                cfg.synth.n_neighborhoods = *n;
            }
            let cfg = finish(cfg)?;
            let dir = out.as_deref().unwrap_or(&cli.data);
            let scenario = synth::generate(&cfg.synth)?;
            scenario.write(dir)?;
            if *write_config {
                let path = dir.join("config.toml");
                std::fs::write(&path, cfg.to_toml()?).map_err(|e| Error::io(&path, e))?;
            }
            println!(
                "wrote {} neighborhoods, {} tweets, {} survey reports to {}",
                scenario.neighborhoods.len(),
                scenario.tweets.len(),
                scenario.surveys.len(),
                dir.display()
            );
        }
        Command::Ingest {
            split_fraction,
            ambiguity,
        } => {
            if let Some(f) = split_fraction {
                cfg.corpus.split_fraction = *f;
            }
            if let Some(a) = ambiguity {
                cfg.corpus.ambiguity = *a;
            }
            let s = pipeline::ingest(&finish(cfg)?, &paths)?;
            println!(
                "{} tweets ({} train, {} test); {} placed in {} neighborhoods",
                s.tweets, s.train_tweets, s.test_tweets, s.placed_tweets, s.neighborhoods
            );
        }
        Command::GroundTruth { min_reports } => {
            if let Some(m) = min_reports {
                cfg.corpus.min_reports = *m;
            }
            let t = pipeline::ground_truth(&finish(cfg)?, &paths)?;
            println!("efficacy for {} neighborhoods", t.efficacy.len());
        }
        Command::Features { topics, topic_counts } => {
            if let Some(k) = topics {
                cfg.features.lda.topics = *k;
            }
            if let Some(c) = topic_counts {
                cfg.features.topic_counts = c.clone();
            }
            let s = pipeline::features(&finish(cfg)?, &paths)?;
            println!(
                "features for {} neighborhoods ({} active); {} topics, {} crime terms, {} training documents",
                s.neighborhoods, s.active, s.topics, s.crime_terms, s.training_documents
            );
        }
        Command::Train(args) => {
            let spec = model_spec(&mut cfg, args);
            for m in pipeline::train(&finish(cfg)?, &paths, &spec)? {
                let how = if m.from_cache { "cached" } else { "fitted" };
                println!("{spec} c={} {how}: {}", m.coefficient, m.path.display());
            }
        }
        Command::Rank { model, coefficient, out } => {
            let spec = model_spec(&mut cfg, model);
            let cfg = finish(cfg)?;
            let c = coefficient.unwrap_or(*cfg.evaluate.coefficients.last().expect("validated"));
            let ranking = pipeline::rank(&cfg, &paths, &spec, c, out.as_deref())?;
            let dest = out.clone().unwrap_or_else(|| paths.work_file(pipeline::RANKING_FILE));
            println!("ranked {} neighborhoods with {spec} (c={c}) to {}", ranking.scores.len(), dest.display());
        }
        Command::Baseline { kind, direction, axis } => {
            if let Some(d) = direction {
                cfg.baseline.direction = *d;
            }
            if let Some(a) = axis {
                cfg.baseline.coordinate_axis = *a;
            }
            let cfg = finish(cfg)?;
            let curve = pipeline::baseline(&cfg, &paths, *kind)?;
            print_curves(&[curve], cfg.evaluate.tau_mode);
        }
        Command::Evaluate {
            model,
            tau_mode,
            baselines,
        } => {
            let spec = model_spec(&mut cfg, model);
            if let Some(m) = tau_mode {
                cfg.evaluate.tau_mode = *m;
            }
            let cfg = finish(cfg)?;
            let curves = pipeline::evaluate(&cfg, &paths, &[spec], *baselines)?;
            print_curves(&curves, cfg.evaluate.tau_mode);
        }
        Command::Report { models, topk_percents } => {
            if let Some(m) = models {
                cfg.report.models = m.clone();
            }
            if let Some(p) = topk_percents {
                cfg.report.topk_percents = p.clone();
            }
            let cfg = finish(cfg)?;
            let report = pipeline::report(&cfg, &paths)?;
            print_curves(&report.curves, cfg.evaluate.tau_mode);
            println!(
                "wrote {}, {} and {} to {}",
                pipeline::EVAL_FILE,
                pipeline::TAU_COEFFICIENT_FILE,
                pipeline::TAU_TOPK_FILE,
                paths.work.display()
            );
        }
    }
    Ok(())
}

/// Re-derives nested seeds after flag overrides and validates.
fn finish(mut cfg: Config) -> cerank::Result<Config> {
    cfg.apply_seed();
    cfg.validate()?;
    Ok(cfg)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // --help and --version are not errors
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.verbose);
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
        Err(_) => ExitCode::from(1),
    }
}
