use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use snowflake_gnn::config::{execute, load_for_run, ConfigError, RunConfig, Settings, SweepRow};
use snowflake_gnn::dataset::{import_linqs, load_dataset, make_split, write_dataset, DatasetError};
use snowflake_gnn::gradcheck::{run_gradcheck, GradcheckConfig};
use snowflake_gnn::graph::homophily_ratio;
use snowflake_gnn::RunError;

/// Default output root when neither `--out` nor `out=` is given.
const OUT_ENV: &str = "SNOWFLAKE_OUT";

#[derive(Parser)]
#[command(name = "snowflake", version, about = "Per-node depth control for deep GCNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its report files.
    Train(RunArgs),
    /// Run one configuration over several seeds and aggregate.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated seeds, e.g. 0,1,2,3,4.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Seeds run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compare analytic and finite-difference gradients on random graphs.
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 12)]
        max_nodes: usize,
        #[arg(long, default_value_t = 4)]
        max_depth: usize,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the homophily ratio of a dataset directory.
    Homophily { dataset: PathBuf },
    /// Convert LINQS citation files (plain or .gz) to a dataset directory.
    Convert {
        #[arg(long)]
        content: PathBuf,
        #[arg(long)]
        cites: PathBuf,
        #[arg(long)]
        name: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write a 60/20/20 splits.json drawn with this seed.
        #[arg(long)]
        split_seed: Option<u64>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// `key=value` file or a config.echo.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key; repeatable. Applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Run(r) => r.into(),
            e => Failure::new(2, format!("config error: {e}")),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(_) => Failure::new(2, format!("config error: {e}")),
            RunError::Numerical { .. } => Failure::new(4, format!("numerical abort: {e}")),
            e => Failure::new(1, format!("run failed: {e}")),
        }
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        Failure::new(3, format!("dataset error: {e}"))
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::new(1, format!("{e:#}"))
    }
}

fn resolve(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut settings = match &args.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    for pair in &args.sets {
        settings
            .set_pair(pair)
            .map_err(|_| Failure::new(2, format!("config error: --set expects key=value, got '{pair}'")))?;
    }
    if let Some(seed) = args.seed {
        settings.set("seed", &seed.to_string());
    }
    if args.deterministic {
        settings.set("deterministic", "true");
    }
    let mut cfg = RunConfig::from_settings(&settings)?;
    if cfg.dataset.is_none() {
        return Err(Failure::new(2, "config error: no dataset given (set dataset=DIR)"));
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn output_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| {
        let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        root.join(format!(
            "{}-{}{}-seed{}",
            cfg.method.kind().name().replace('+', "-"),
            cfg.variant,
            cfg.depth,
            cfg.seed
        ))
    })
}

/// Runs `cfg` and writes `config.echo.json` plus the report tables to `dir`.
fn train_into(cfg: &RunConfig, dir: &Path) -> Result<SweepRow, Failure> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.echo.json"), cfg.echo_json()).context("writing config echo")?;
    let bundle = load_for_run(cfg)?;
    let out = execute(cfg, &bundle.graph)?;
    out.report
        .write_csv(dir)
        .with_context(|| format!("writing reports to {}", dir.display()))?;
    Ok(SweepRow::from_output(cfg.seed, &out))
}

fn cmd_train(args: &RunArgs) -> Result<(), Failure> {
    let cfg = resolve(args)?;
    let dir = output_dir(&cfg);
    let row = train_into(&cfg, &dir)?;
    println!(
        "test_acc {:.4} (best val {:.4} at epoch {}), mean edge sparsity {:.4}; reports in {}",
        row.test_acc,
        row.val_acc,
        row.best_epoch.map_or("-".to_string(), |e| e.to_string()),
        row.edge_sparsity,
        dir.display()
    );
    Ok(())
}

fn cmd_sweep(args: &RunArgs, seeds: &[u64], jobs: usize) -> Result<(), Failure> {
    let base = resolve(args)?;
    let root = output_dir(&base);
    fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
    let run_one = |seed: u64| -> SweepRow {
        let cfg = base.with_seed(seed);
        match train_into(&cfg, &root.join(format!("seed-{seed}"))) {
            Ok(row) => row,
            Err(f) => {
                eprintln!("seed {seed}: {}", f.message);
                SweepRow::failed(seed, &f.message)
            }
        }
    };
    let mut rows: Vec<SweepRow> = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(jobs.max(1)) {
        let done: Vec<SweepRow> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|&seed| s.spawn(move || run_one(seed))).collect();
            handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
        });
        rows.extend(done);
    }
    let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
    rows.push(SweepRow::aggregate(&rows));

    let path = root.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    for row in &rows {
        w.serialize(row).context("writing sweep row")?;
    }
    w.flush().context("flushing sweep.csv")?;
    let agg = rows.last().expect("aggregate row");
    println!(
        "{} seeds: test_acc {:.4} ± {:.4}, edge sparsity {:.4} ± {:.4}; table in {}",
        seeds.len(),
        agg.test_acc,
        agg.test_acc_std,
        agg.edge_sparsity,
        agg.edge_sparsity_std,
        path.display()
    );
    if failed > 0 {
        return Err(Failure::new(1, format!("{failed} of {} seeds failed", seeds.len())));
    }
    Ok(())
}

fn cmd_gradcheck(cfg: &GradcheckConfig) -> Result<(), Failure> {
    if !(cfg.tolerance >= 0.0) || !(cfg.step > 0.0) {
        return Err(Failure::new(2, "config error: tolerance must be >= 0 and step > 0"));
    }
    let report = run_gradcheck(cfg).map_err(|e| Failure::new(1, format!("engine error: {e}")))?;
    println!("{:<8} {:<10} {:>8} {:>8} {:>12}", "variant", "target", "checked", "skipped", "max_rel_err");
    for r in &report.rows {
        println!(
            "{:<8} {:<10} {:>8} {:>8} {:>12.3e}",
            r.variant.to_string(),
            format!("{:?}", r.target).to_lowercase(),
            r.checked,
            r.skipped,
            r.max_rel_err
        );
    }
    if report.vacuous() {
        log::warn!("no entries compared; the pass is vacuous");
        eprintln!("warning: no entries compared; the pass is vacuous");
    }
    if report.passed() {
        println!("PASS (tolerance {:e})", cfg.tolerance);
        Ok(())
    } else {
        println!("FAIL (tolerance {:e})", cfg.tolerance);
        Err(Failure::new(1, format!("max relative error {:e} exceeds tolerance", report.max_rel_err())))
    }
}

fn cmd_homophily(dir: &Path) -> Result<(), Failure> {
    let bundle = load_dataset(dir)?;
    let h = homophily_ratio(&bundle.graph).map_err(|e| Failure::new(3, format!("dataset error: {e}")))?;
    println!("{:.4}", h.ratio);
    Ok(())
}

fn cmd_convert(content: &Path, cites: &Path, name: &str, out: &Path, split_seed: Option<u64>) -> Result<(), Failure> {
    let mut bundle = import_linqs(content, cites, name)?;
    if let Some(seed) = split_seed {
        let splits = make_split(bundle.graph.num_nodes(), (0.6, 0.2, 0.2), seed)?;
        bundle.graph = bundle
            .graph
            .with_splits(splits)
            .map_err(|e| Failure::new(3, format!("dataset error: {e}")))?;
    }
    write_dataset(&bundle, out)?;
    println!(
        "{}: {} nodes, {} edges, {} features, {} classes -> {}",
        name,
        bundle.graph.num_nodes(),
        bundle.num_edges(),
        bundle.num_features(),
        bundle.num_classes(),
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Sweep { run, seeds, jobs } => cmd_sweep(run, seeds, *jobs),
        Command::Gradcheck {
            trials,
            max_nodes,
            max_depth,
            tolerance,
            step,
            seed,
        } => cmd_gradcheck(&GradcheckConfig {
            trials: *trials,
            max_nodes: *max_nodes,
            max_depth: *max_depth,
            tolerance: *tolerance,
            step: *step,
            seed: *seed,
        }),
        Command::Homophily { dataset } => cmd_homophily(dataset),
        Command::Convert {
            content,
            cites,
            name,
            out,
            split_seed,
        } => cmd_convert(content, cites, name, out, *split_seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
