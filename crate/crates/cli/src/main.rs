//! `dyad` — reproducible pipelines over the dyadic behavior models.
//!
//! Subcommands: `ingest` (load/normalize/label), `synth` (sample a corpus
//! from ground truth), `grid` (nested leave-one-couple-out grid search),
//! `outcomes` (histograms and Gaussian fits over best configurations),
//! `train` (one model at a fixed configuration), `classify` (label sessions
//! with a saved model). Exit codes: 0 on success, 2 for input/usage
//! problems, 1 for computation failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use dyad_core::corpus::{
    binarize_by_percentile, group_couples, load_sessions, normalize_session, write_sessions,
    LabeledDataset, Session,
};
use dyad_core::error::{Error, Result};
use dyad_core::experiments::{
    format_summary_table, run_nested_locco, write_predictions_csv, write_selections_csv,
    write_summary_csv, DevAccuracyTable, DevMode, ExperimentResult, ParamGrid, Variant,
};
use dyad_core::hmm::{classify_session, DecodeMode, InfluenceConfig, InfluenceSpan};
use dyad_core::outcomes::{outcome_report, write_fits_csv, write_gamma_csv, write_hist2d_csv};
use dyad_core::synth::{sample_corpus, GroundTruth};
use dyad_core::train::{load_model, save_model, train_full, TrainConfig};

#[derive(Parser)]
#[command(name = "dyad", version, about = "Dyadic-conversation behavior modeling pipelines")]
struct Cli {
    /// Worker threads for fold/grid parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load, normalize and percentile-label a JSON Lines session file.
    Ingest(IngestArgs),
    /// Sample a synthetic corpus from ground-truth parameters.
    Synth(SynthArgs),
    /// Nested leave-one-couple-out evaluation with grid search.
    Grid(GridArgs),
    /// Outcome histograms and Gaussian fits from a dev-accuracy table.
    Outcomes(OutcomesArgs),
    /// Train one model at a fixed (alpha, beta) and save it.
    Train(TrainArgs),
    /// Classify sessions with a saved model directory.
    Classify(ClassifyArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Input session file (JSON Lines).
    #[arg(long)]
    input: PathBuf,
    /// Output labeled session file.
    #[arg(long)]
    output: PathBuf,
    /// Percentile cut for the class labels.
    #[arg(long)]
    pct: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output session file (JSON Lines).
    #[arg(long)]
    output: PathBuf,
    /// Ground-truth TOML file; a built-in separable configuration is used
    /// when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    couples_per_class: Option<usize>,
    #[arg(long)]
    sessions_per_couple: Option<usize>,
    /// Root seed; all sampling streams derive from it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GridArgs {
    /// Input session file (JSON Lines).
    #[arg(long)]
    input: PathBuf,
    /// Output directory for result CSVs and the run manifest.
    #[arg(long)]
    output: PathBuf,
    /// Run configuration TOML; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    pct: Option<f64>,
    /// Model variants to run: influence, ldbm, ldbm-a1.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<String>>,
    /// Language-model orders to run (1, 2, 3).
    #[arg(long, value_delimiter = ',')]
    orders: Option<Vec<usize>>,
    /// Dev scheme: rotating, or split (k random dev couples per fold).
    #[arg(long)]
    dev_mode: Option<String>,
    #[arg(long)]
    dev_k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct OutcomesArgs {
    /// Dev-accuracy table CSV from an influence-model grid run.
    #[arg(long)]
    dev_table: PathBuf,
    /// Session file carrying couple outcomes.
    #[arg(long)]
    couples: PathBuf,
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output model directory.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    pct: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Single-speaker mode: ignore partner turns entirely.
    #[arg(long, default_value_t = false)]
    ldbm: bool,
    /// Influence span: full, or except-final.
    #[arg(long)]
    span: Option<String>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Saved model directory.
    #[arg(long)]
    model: PathBuf,
    /// Session file to classify.
    #[arg(long)]
    input: PathBuf,
    /// Compare classes by total likelihood instead of best path.
    #[arg(long, default_value_t = false)]
    sum_forward: bool,
}

#[derive(Args, Clone)]
struct TrainFlags {
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    converge_frac: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Exclude partner turns from state-model retraining.
    #[arg(long, default_value_t = false)]
    no_partner_lm: bool,
    /// Score turns without sentence boundary markers.
    #[arg(long, default_value_t = false)]
    no_boundaries: bool,
    /// Estimate the initial distribution from decoded first states.
    #[arg(long, default_value_t = false)]
    pi_from_counts: bool,
}

/// Optional run-configuration file; any flag overrides its value. Unknown
/// keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    pct: Option<f64>,
    variants: Option<Vec<String>>,
    orders: Option<Vec<usize>>,
    dev_mode: Option<String>,
    dev_k: Option<usize>,
    seed: Option<u64>,
    alphas: Option<Vec<f64>>,
    betas: Option<Vec<f64>>,
    alpha: Option<f64>,
    beta: Option<f64>,
    span: Option<String>,
    order: Option<usize>,
    max_iters: Option<usize>,
    converge_frac: Option<f64>,
    delta: Option<f64>,
    include_partner_in_lm: Option<bool>,
    boundaries: Option<bool>,
    pi_from_counts: Option<bool>,
}

impl FileConfig {
    fn load(path: &Option<PathBuf>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str(&text).map_err(|e| Error::invalid(format!("run config: {e}")))
            }
        }
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn resolve_train_config(flags: &TrainFlags, file: &FileConfig) -> TrainConfig {
    let defaults = TrainConfig::default();
    TrainConfig {
        max_iters: pick(flags.max_iters, file.max_iters, defaults.max_iters),
        converge_frac: pick(flags.converge_frac, file.converge_frac, defaults.converge_frac),
        include_partner_in_lm: if flags.no_partner_lm {
            false
        } else {
            file.include_partner_in_lm.unwrap_or(defaults.include_partner_in_lm)
        },
        delta: pick(flags.delta, file.delta, defaults.delta),
        lm_order: pick(flags.order, file.order, defaults.lm_order),
        smoothing: defaults.smoothing,
        boundaries: if flags.no_boundaries {
            false
        } else {
            file.boundaries.unwrap_or(defaults.boundaries)
        },
        pi_from_counts: flags.pi_from_counts || file.pi_from_counts.unwrap_or(false),
    }
}

fn parse_span(name: &str) -> Result<InfluenceSpan> {
    match name {
        "full" => Ok(InfluenceSpan::Full),
        "except-final" => Ok(InfluenceSpan::ExceptFinal),
        other => Err(Error::invalid(format!(
            "unknown span {other:?} (expected full or except-final)"
        ))),
    }
}

/// Load, normalize, and percentile-label a session file.
fn ingest_dataset(input: &Path, pct: f64) -> Result<LabeledDataset> {
    let sessions = load_sessions(input)?;
    let normalized: Vec<Session> = sessions
        .iter()
        .map(normalize_session)
        .collect::<Result<_>>()?;
    binarize_by_percentile(&normalized, pct)
}

fn cmd_ingest(args: &IngestArgs) -> Result<()> {
    let pct = args.pct.unwrap_or(20.0);
    let ds = ingest_dataset(&args.input, pct)?;
    let labeled: Vec<Session> = ds.sessions().cloned().collect();
    write_sessions(&args.output, &labeled)?;
    let (c0, c1) = ds.class_counts();
    println!(
        "labeled {} sessions ({} C0, {} C1) across {} couples -> {}",
        labeled.len(),
        c0,
        c1,
        ds.couples.len(),
        args.output.display()
    );
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let gt = match &args.config {
        Some(path) => GroundTruth::read_file(path)?,
        None => GroundTruth::default_separable(),
    };
    let couples = args.couples_per_class.unwrap_or(20);
    let sessions_per_couple = args.sessions_per_couple.unwrap_or(2);
    let seed = args.seed.unwrap_or(1);
    let ds = sample_corpus(&gt, couples, sessions_per_couple, seed)?;
    // The on-disk corpus is unlabeled; labels are re-derived by ingest.
    let sessions: Vec<Session> = ds
        .sessions()
        .map(|s| {
            let mut s = s.clone();
            s.class_label = None;
            s
        })
        .collect();
    write_sessions(&args.output, &sessions)?;
    println!(
        "sampled {} sessions for {} couples (seed {seed}) -> {}",
        sessions.len(),
        ds.couples.len(),
        args.output.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct GridManifest {
    command: String,
    input: String,
    pct: f64,
    variants: Vec<String>,
    orders: Vec<usize>,
    dev_mode: String,
    dev_k: Option<usize>,
    seed: u64,
    alphas: Vec<f64>,
    betas: Vec<f64>,
    train: TrainConfig,
    jobs: usize,
}

fn cmd_grid(args: &GridArgs, jobs: usize) -> Result<()> {
    let file = FileConfig::load(&args.config)?;
    let pct = pick(args.pct, file.pct, 20.0);
    let variant_names = pick(
        args.variants.clone(),
        file.variants.clone(),
        vec!["influence".to_string()],
    );
    let variants = variant_names
        .iter()
        .map(|v| v.parse::<Variant>())
        .collect::<Result<Vec<_>>>()?;
    let orders = pick(args.orders.clone(), file.orders.clone(), vec![2]);
    let dev_mode_name = pick(args.dev_mode.clone(), file.dev_mode.clone(), "split".to_string());
    let dev_k = pick(args.dev_k, file.dev_k, 3);
    let seed = pick(args.seed, file.seed, 17);
    let default_grid = ParamGrid::default_log7();
    let grid = ParamGrid {
        alphas: pick(args.alphas.clone(), file.alphas.clone(), default_grid.alphas),
        betas: pick(args.betas.clone(), file.betas.clone(), default_grid.betas),
    };
    let dev_mode = match dev_mode_name.as_str() {
        "rotating" => DevMode::Rotating,
        "split" => DevMode::Split { k: dev_k, seed },
        other => {
            return Err(Error::invalid(format!(
                "unknown dev mode {other:?} (expected rotating or split)"
            )))
        }
    };
    let base_cfg = resolve_train_config(&args.train, &file);

    let ds = ingest_dataset(&args.input, pct)?;
    std::fs::create_dir_all(&args.output)?;

    let mut results: Vec<ExperimentResult> = Vec::new();
    for &order in &orders {
        for &variant in &variants {
            let cfg = TrainConfig {
                lm_order: order,
                ..base_cfg
            };
            let (result, table) = run_nested_locco(&ds, &grid, variant, &cfg, &dev_mode)?;
            let table_path = args
                .output
                .join(format!("dev_accuracy_{}_{}gram.csv", variant.tag(), order));
            table.write_csv(&table_path)?;
            log::info!(
                "{} {}-gram: accuracy {:.4} over {} sessions",
                variant.tag(),
                order,
                result.accuracy,
                result.predictions.len()
            );
            results.push(result);
        }
    }

    write_predictions_csv(&args.output.join("predictions.csv"), &results)?;
    write_selections_csv(&args.output.join("selections.csv"), &results)?;
    write_summary_csv(&args.output.join("summary.csv"), &results)?;
    let manifest = GridManifest {
        command: "grid".into(),
        input: args.input.display().to_string(),
        pct,
        variants: variant_names,
        orders,
        dev_mode: dev_mode_name,
        dev_k: match dev_mode {
            DevMode::Split { .. } => Some(dev_k),
            DevMode::Rotating => None,
        },
        seed,
        alphas: grid.alphas.clone(),
        betas: grid.betas.clone(),
        train: base_cfg,
        jobs,
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Computation(format!("serialize manifest: {e}")))?;
    std::fs::write(args.output.join("run_manifest.json"), text + "\n")?;

    print!("{}", format_summary_table(&results));
    Ok(())
}

fn cmd_outcomes(args: &OutcomesArgs) -> Result<()> {
    let table = DevAccuracyTable::read_csv(&args.dev_table)?;
    let sessions = load_sessions(&args.couples)?;
    let couples = group_couples(&sessions)?;
    let report = outcome_report(&table, &couples)?;
    std::fs::create_dir_all(&args.output)?;
    write_hist2d_csv(&args.output.join("hist2d.csv"), &report)?;
    write_gamma_csv(&args.output.join("gamma.csv"), &report)?;
    write_fits_csv(&args.output.join("fits.csv"), &report)?;
    let manifest = serde_json::json!({
        "command": "outcomes",
        "dev_table": args.dev_table.display().to_string(),
        "couples": args.couples.display().to_string(),
        "outcomes": report.entries.iter().map(|e| e.fit.outcome).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Computation(format!("serialize manifest: {e}")))?;
    std::fs::write(args.output.join("run_manifest.json"), text + "\n")?;
    println!("{:<10}{:>10}{:>10}{:>10}", "outcome", "mu", "sigma", "couples");
    for e in &report.entries {
        println!(
            "{:<10}{:>10.4}{:>10.4}{:>10}",
            e.fit.outcome, e.fit.mu, e.fit.sigma, e.fit.n_couples
        );
    }
    let ordering = report.mu_ordering();
    println!(
        "outcomes by |mu|, farthest from 0 first: {}",
        ordering
            .iter()
            .map(|o| o.to_string())
            .collect::<Vec<_>>()
            .join(" > ")
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let file = FileConfig::load(&args.config)?;
    let pct = pick(args.pct, file.pct, 20.0);
    let mut cfg = resolve_train_config(&args.train, &file);
    let alpha = pick(args.alpha, file.alpha, 1.0);
    let beta = if args.ldbm {
        0.0
    } else {
        pick(args.beta, file.beta, 1.0)
    };
    if args.ldbm {
        cfg.include_partner_in_lm = false;
    }
    let span = parse_span(&pick(args.span.clone(), file.span.clone(), "full".to_string()))?;
    let inf = InfluenceConfig::new(alpha, beta)?.with_span(span);

    let ds = ingest_dataset(&args.input, pct)?;
    let model = train_full(&ds, &inf, &cfg)?;
    save_model(&args.output, &model, &cfg)?;
    println!(
        "trained {} iterations (final objective {:.4}) -> {}",
        model.log.len(),
        model.final_objective,
        args.output.display()
    );
    for (i, stats) in model.log.iter().enumerate() {
        log::info!(
            "iter {}: objective {:.4}, reassigned {:.4}",
            i + 1,
            stats.objective,
            stats.reassigned_frac
        );
    }
    Ok(())
}

fn cmd_classify(args: &ClassifyArgs) -> Result<()> {
    use std::io::Write;
    let (model, _cfg) = load_model(&args.model)?;
    let mut inf = model.config;
    if args.sum_forward {
        inf = inf.with_decode_mode(DecodeMode::SumForward);
    }
    let sessions = load_sessions(&args.input)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for session in &sessions {
        let normalized = normalize_session(session)?;
        let (label, s0, s1) =
            classify_session(&normalized, &model.states, &model.c0, &model.c1, &inf);
        if let Err(e) = writeln!(out, "{}\t{}\t{}\t{}", normalized.session_id, label, s0, s1) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                return Ok(()); // downstream closed the pipe
            }
            return Err(e.into());
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Grid(args) => cmd_grid(args, cli.jobs),
        Command::Outcomes(args) => cmd_outcomes(args),
        Command::Train(args) => cmd_train(args),
        Command::Classify(args) => cmd_classify(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    #[cfg(feature = "parallel")]
    {
        let threads = cli.jobs; // 0 lets rayon pick the core count
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: failed to build thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    #[cfg(not(feature = "parallel"))]
    if cli.jobs > 1 {
        log::warn!("built without the parallel feature; --jobs ignored");
    }

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
