use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use volcano::blocks::{BlockParams, Budget};
use volcano::meta::RankNetConfig;
use volcano::objective::{benchmark_names, synthetic_suite, Metric, Objective};
use volcano_cli::compare::compare_plans;
use volcano_cli::config::{summary_path, EnsembleConfig, MetaConfig, MetaMode, PlanChoice, RunConfig};
use volcano_cli::run::{load_benchmark, load_dataset_objective, LoadedObjective};
use volcano_cli::{cmd_run, metacmd, CliError};

#[derive(Parser)]
#[command(name = "volcano", version, about = "Black-box optimization over decomposed search spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one objective and write its history and summary.
    Run(RunArgs),
    /// Run every applicable plan on a set of tasks and rank the plans.
    ComparePlans(CompareArgs),
    /// Prior-task store tools.
    #[command(subcommand)]
    Meta(MetaCommand),
    /// List the built-in benchmarks.
    Benchmarks,
}

#[derive(Args)]
struct RunArgs {
    /// Run-configuration document (JSON); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "dataset")]
    benchmark: Option<String>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// balanced_accuracy or mse
    #[arg(long)]
    metric: Option<String>,
    /// J, C, A, AC, CA or CA-progressive
    #[arg(long)]
    plan: Option<String>,
    #[arg(long, conflicts_with = "budget_evals")]
    budget_secs: Option<f64>,
    #[arg(long)]
    budget_evals: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    meta_store: Option<PathBuf>,
    /// rgpe_joint or ranknet_conditioning
    #[arg(long)]
    meta_mode: Option<String>,
    #[arg(long)]
    meta_k: Option<usize>,
    #[arg(long)]
    ensemble_size: Option<usize>,
    #[arg(long)]
    ensemble_n_top: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Use the bundled six-task synthetic suite.
    #[arg(long)]
    suite: bool,
    /// Comma-separated benchmark names.
    #[arg(long, value_delimiter = ',')]
    benchmark: Vec<String>,
    /// Comma-separated dataset paths.
    #[arg(long, value_delimiter = ',')]
    dataset: Vec<PathBuf>,
    #[arg(long, conflicts_with = "budget_evals")]
    budget_secs: Option<f64>,
    #[arg(long)]
    budget_evals: Option<usize>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    /// Report file (JSON); on a run error a `.partial.json` file is written instead.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum MetaCommand {
    /// Add run histories to a store, one task per file.
    Ingest {
        #[arg(long)]
        store: PathBuf,
        #[arg(long = "history", required = true)]
        histories: Vec<PathBuf>,
        #[arg(long)]
        task_id: Option<String>,
        /// Dataset whose meta-features describe the task.
        #[arg(long, conflicts_with = "features")]
        dataset: Option<PathBuf>,
        /// Explicit comma-separated meta-features.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        features: Option<Vec<f64>>,
        #[arg(long)]
        arm: Option<String>,
    },
    /// Print the store's tasks.
    List {
        #[arg(long)]
        store: PathBuf,
    },
    /// Train an arm ranker from the store and save it there.
    TrainRanker {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "algo")]
        algorithm_variable: String,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn budget(secs: Option<f64>, evals: Option<usize>) -> Option<Budget> {
    secs.map(Budget::Seconds).or(evals.map(Budget::Evaluations))
}

fn run_config(args: RunArgs) -> Result<RunConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => Some(RunConfig::load(path)?),
        None => None,
    };
    let budget = budget(args.budget_secs, args.budget_evals);
    let out = args.out.clone();
    let mut c = match config.take() {
        Some(c) => c,
        None => RunConfig {
            benchmark: None,
            dataset: None,
            metric: None,
            command: None,
            plan: PlanChoice::Label("CA".into()),
            budget: budget.ok_or_else(|| CliError::Usage("give --budget-evals or --budget-secs".into()))?,
            seed: 0,
            params: None,
            meta: None,
            ensemble: None,
            out: out.clone().ok_or_else(|| CliError::Usage("give --out".into()))?,
        },
    };
    if args.benchmark.is_some() || args.dataset.is_some() {
        c.benchmark = args.benchmark;
        c.dataset = args.dataset;
        c.command = None;
    }
    if let Some(m) = args.metric {
        c.metric = Some(m.parse::<Metric>().map_err(|e| CliError::Usage(e.to_string()))?);
    }
    if let Some(p) = args.plan {
        c.plan = PlanChoice::Label(p);
    }
    if let Some(b) = budget {
        c.budget = b;
    }
    if let Some(s) = args.seed {
        c.seed = s;
    }
    if let Some(o) = out {
        c.out = o;
    }
    if args.meta_store.is_some() || args.meta_mode.is_some() || args.meta_k.is_some() {
        let prev = c.meta.take();
        let store = args
            .meta_store
            .or(prev.as_ref().map(|m| m.store.clone()))
            .ok_or_else(|| CliError::Usage("--meta-mode and --meta-k need --meta-store".into()))?;
        let mode = match args.meta_mode {
            Some(m) => m.parse::<MetaMode>()?,
            None => prev.as_ref().map_or(MetaMode::RgpeJoint, |m| m.mode),
        };
        let k = args.meta_k.or(prev.as_ref().map(|m| m.k)).unwrap_or(5);
        c.meta = Some(MetaConfig { store, mode, k });
    }
    if args.ensemble_size.is_some() || args.ensemble_n_top.is_some() {
        let prev = c.ensemble.unwrap_or_default();
        c.ensemble = Some(EnsembleConfig {
            size: args.ensemble_size.unwrap_or(prev.size),
            n_top: args.ensemble_n_top.unwrap_or(prev.n_top),
        });
    }
    c.validate()?;
    Ok(c)
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    let budget = budget(args.budget_secs, args.budget_evals)
        .ok_or_else(|| CliError::Usage("give --budget-evals or --budget-secs".into()))?;
    let mut loaded: Vec<LoadedObjective> = Vec::new();
    if args.suite {
        loaded.extend(synthetic_suite().into_iter().map(LoadedObjective::Synthetic));
    }
    for name in &args.benchmark {
        loaded.push(load_benchmark(name)?);
    }
    for (i, path) in args.dataset.iter().enumerate() {
        loaded.push(load_dataset_objective(path, None, i as u64)?);
    }
    let tasks: Vec<&dyn Objective> = loaded.iter().map(|l| l.objective()).collect();
    match compare_plans(&tasks, budget, &args.seeds, BlockParams::default()) {
        Ok(report) => {
            std::fs::write(&args.out, serde_json::to_string_pretty(&report).expect("report serializes"))?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for (plan, rank) in report.plans.iter().zip(&report.average_ranks) {
                println!("{plan:>3}  average rank {rank:.3}");
            }
            Ok(())
        }
        Err(failure) => {
            if !failure.cells.is_empty() {
                let partial = args.out.with_extension("partial.json");
                std::fs::write(&partial, serde_json::to_string_pretty(&failure.cells).expect("cells serialize"))?;
                eprintln!("partial results written to {}", partial.display());
            }
            Err(failure.error)
        }
    }
}

fn cmd_meta(cmd: MetaCommand) -> Result<(), CliError> {
    match cmd {
        MetaCommand::Ingest {
            store,
            histories,
            task_id,
            dataset,
            features,
            arm,
        } => {
            let features = match (dataset, features) {
                (Some(path), _) => match load_dataset_objective(&path, None, 0)? {
                    LoadedObjective::Pipeline { dataset_features, .. } => dataset_features,
                    _ => unreachable!("datasets load as pipelines"),
                },
                (None, Some(f)) => f,
                (None, None) => return Err(CliError::Usage("give --dataset or --features".into())),
            };
            let ids = metacmd::ingest(&store, &histories, task_id.as_deref(), &features, arm.as_deref())?;
            for id in ids {
                println!("{id}");
            }
        }
        MetaCommand::List { store } => {
            for t in metacmd::list(&store)? {
                println!("{}", serde_json::to_string(&t).expect("listing serializes"));
            }
        }
        MetaCommand::TrainRanker {
            store,
            algorithm_variable,
            epochs,
            lr,
            seed,
        } => {
            let mut config = RankNetConfig::default();
            if let Some(e) = epochs {
                config.epochs = e;
            }
            if let Some(l) = lr {
                config.lr = l;
            }
            let trained = metacmd::train_ranker(&store, &algorithm_variable, &config, seed)?;
            for w in &trained.warnings {
                eprintln!("warning: {w}");
            }
            println!("{} triples; ranker written to {}", trained.triples, trained.path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => run_config(args).and_then(|config| {
            let outcome = cmd_run(&config)?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!(
                "{} evaluations; history {}, summary {}",
                outcome.summary.evaluations,
                config.out.display(),
                summary_path(&config.out).display()
            );
            println!("{}", serde_json::to_string(&outcome.summary).expect("summary serializes"));
            Ok(())
        }),
        Command::ComparePlans(args) => cmd_compare(args),
        Command::Meta(cmd) => cmd_meta(cmd),
        Command::Benchmarks => {
            for name in benchmark_names() {
                println!("{name}");
            }
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

