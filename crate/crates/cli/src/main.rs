use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use gaitkb_core::analysis::MatchResult;
use gaitkb_core::cohort::{sample_trials, synth_store, CohortConfig};
use gaitkb_core::eks::DemographicFilter;
use gaitkb_core::grf::{process_trial, ProcessedTrial};
use gaitkb_core::persist::{load_store, save_store, FileSink, SharedStore};
use gaitkb_core::report::{match_report, to_wire, tree_report, MatchReport, TreeReport};
use gaitkb_core::trial::{parse_trial, trial_to_string};
use gaitkb_core::{
    EngineConfig, KnowledgeStore, ParamState, PatientRecord, SegmentationConfig, StpId,
    DEFAULT_EPSILON,
};
use gaitkb_service::{router, AppState};

/// Gait knowledge store tooling.
#[derive(Debug, Parser)]
#[command(name = "gaitkb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rank the store's categories against a trial.
    Analyze(AnalyzeArgs),
    /// Inspect and edit a store file.
    #[command(subcommand)]
    Store(StoreCommand),
    /// Write a synthetic store and one sample trial per category.
    SynthCohort(SynthArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct EngineArgs {
    /// Floor of the squared deviation in the matching score.
    #[arg(long, env = "GAITKB_EPSILON", default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// Contact threshold as a fraction of body weight.
    #[arg(long, env = "GAITKB_CONTACT_FRACTION", default_value_t = SegmentationConfig::default().contact_fraction)]
    contact_fraction: f64,
}

impl EngineArgs {
    fn config(&self) -> Result<EngineConfig, Failure> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Failure::config(anyhow!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.contact_fraction.is_finite() && self.contact_fraction > 0.0) {
            return Err(Failure::config(anyhow!(
                "contact fraction must be positive, got {}",
                self.contact_fraction
            )));
        }
        Ok(EngineConfig {
            epsilon: self.epsilon,
            segmentation: SegmentationConfig {
                contact_fraction: self.contact_fraction,
                ..SegmentationConfig::default()
            },
        })
    }
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Trial file (JSON).
    trial: PathBuf,
    #[arg(long, env = "GAITKB_STORE")]
    store: PathBuf,
    /// Demographic clause such as `gender=female`, `age=30..40`, `height=..`, `mass=..`.
    #[arg(long = "filter", value_name = "KEY=VALUE")]
    filters: Vec<String>,
    /// Emit the same JSON document as the service's /match.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Debug, Subcommand)]
enum StoreCommand {
    /// Create a store with the norm category and the default pathology categories.
    Init {
        path: PathBuf,
        /// Only the norm category.
        #[arg(long)]
        empty: bool,
        #[arg(long)]
        force: bool,
    },
    /// Add a trial's patient to a category.
    Apply {
        #[arg(long, env = "GAITKB_STORE")]
        store: PathBuf,
        #[arg(long)]
        category: String,
        trial: PathBuf,
        /// Keep only these STP ids, comma separated.
        #[arg(long, value_delimiter = ',')]
        subset: Option<Vec<u8>>,
        #[arg(long, env = "GAITKB_CONTACT_FRACTION", default_value_t = SegmentationConfig::default().contact_fraction)]
        contact_fraction: f64,
    },
    /// Recompute a category's ranges and clear its manual overrides.
    Reset {
        #[arg(long, env = "GAITKB_STORE")]
        store: PathBuf,
        #[arg(long)]
        category: String,
    },
    /// Set a manual range for one STP of a category.
    Override {
        #[arg(long, env = "GAITKB_STORE")]
        store: PathBuf,
        #[arg(long)]
        category: String,
        #[arg(long)]
        stp: u8,
        #[arg(long, allow_negative_numbers = true)]
        min: f64,
        #[arg(long, allow_negative_numbers = true)]
        max: f64,
    },
    /// Print categories, member counts and override markers.
    ShowTree {
        #[arg(long, env = "GAITKB_STORE")]
        store: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Members of the norm category.
    #[arg(long)]
    norm: Option<usize>,
    /// Members of each pathology category.
    #[arg(long)]
    per_category: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for store.json, cohort.json and trials/.
    #[arg(long)]
    out: PathBuf,
    /// Cohort config (JSON); flags override its counts and seed.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = SegmentationConfig::default().contact_fraction)]
    contact_fraction: f64,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "GAITKB_STORE")]
    store: PathBuf,
    #[arg(long, env = "GAITKB_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn analysis(error: impl Into<anyhow::Error>) -> Failure {
        Failure {
            code: 1,
            error: error.into(),
        }
    }

    fn config(error: impl Into<anyhow::Error>) -> Failure {
        Failure {
            code: 2,
            error: error.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", message(&f.error));
            ExitCode::from(f.code)
        }
    }
}

/// The error chain, skipping causes whose text is already shown.
fn message(error: &anyhow::Error) -> String {
    let mut out = error.to_string();
    for cause in error.chain().skip(1) {
        let text = cause.to_string();
        if !out.contains(&text) {
            out += ": ";
            out += &text;
        }
    }
    out
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Analyze(args) => analyze(args),
        Command::Store(cmd) => store(cmd),
        Command::SynthCohort(args) => synth(args),
        Command::Serve(args) => serve(args),
    }
}

fn open_store(path: &Path) -> Result<KnowledgeStore, Failure> {
    load_store(path)
        .with_context(|| format!("cannot open store {}", path.display()))
        .map_err(Failure::config)
}

fn write_store(store: &KnowledgeStore, path: &Path) -> Result<(), Failure> {
    save_store(store, path)
        .with_context(|| format!("cannot write store {}", path.display()))
        .map_err(Failure::config)
}

fn load_trial(path: &Path, segmentation: &SegmentationConfig) -> Result<ProcessedTrial, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read trial {}", path.display()))
        .map_err(Failure::config)?;
    let trial = parse_trial(&text)
        .with_context(|| format!("trial {}", path.display()))
        .map_err(Failure::analysis)?;
    process_trial(trial, segmentation)
        .with_context(|| format!("trial {}", path.display()))
        .map_err(Failure::analysis)
}

fn analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let config = args.engine.config()?;
    let filter = DemographicFilter::from_clauses(args.filters.iter().map(String::as_str))
        .map_err(Failure::config)?;
    let store = open_store(&args.store)?;
    let processed = load_trial(&args.trial, &config.segmentation)?;
    let report = match_report(
        &processed.trial.patient,
        &processed.stps,
        &store,
        &filter,
        config.epsilon,
    )
    .map_err(Failure::analysis)?;
    if args.json {
        print!("{}", to_wire(&report));
    } else {
        print!("{}", render_report(&report));
    }
    Ok(())
}

fn glyph(state: ParamState) -> char {
    match state {
        ParamState::InRange => '#',
        ParamState::OutOfRange => 'o',
        ParamState::NoData => '.',
    }
}

fn render_report(report: &MatchReport) -> String {
    let mut out = format!(
        "patient {}  epsilon {:e}\n",
        report.patient_id, report.epsilon
    );
    if !report.filter.is_empty() {
        out += &format!(
            "filter {}\n",
            serde_json::to_string(&report.filter).unwrap_or_default()
        );
    }
    let width = report
        .results
        .iter()
        .map(|r| r.category_name.len() + 1)
        .max()
        .unwrap_or(8)
        .max(8);
    out += &format!(
        "{:<4} {:<width$} {:>14} {:>3}  summary (left | right)\n",
        "rank", "category", "score", "n"
    );
    for (i, r) in report.results.iter().enumerate() {
        out += &format!(
            "{:<4} {:<width$} {:>14.4} {:>3}  {}\n",
            i + 1,
            display_name(r),
            r.score,
            r.n_used,
            summary_row(&r.summary)
        );
    }
    out
}

fn display_name(r: &MatchResult) -> String {
    if r.manual_override {
        format!("{}*", r.category_name)
    } else {
        r.category_name.clone()
    }
}

fn summary_row(summary: &[ParamState]) -> String {
    let (left, right) = summary.split_at(summary.len() / 2);
    let left: String = left.iter().map(|s| glyph(*s)).collect();
    let right: String = right.iter().map(|s| glyph(*s)).collect();
    format!("{left} | {right}")
}

fn render_tree(tree: &TreeReport) -> String {
    let mut out = String::new();
    for c in &tree.categories {
        let marker = if c.manual_override { " *" } else { "" };
        out += &format!("{} ({}) [{}]{}\n", c.name, c.id, c.patient_count, marker);
        if !c.manual_stps.is_empty() {
            let ids: Vec<String> = c.manual_stps.iter().map(|s| s.name()).collect();
            out += &format!("  manual: {}\n", ids.join(", "));
        }
        for p in &c.patients {
            out += &format!("  {} {} {}\n", p.id, p.gender, p.age);
        }
    }
    out
}

fn store(cmd: StoreCommand) -> Result<(), Failure> {
    match cmd {
        StoreCommand::Init { path, empty, force } => {
            if path.exists() && !force {
                return Err(Failure::config(anyhow!(
                    "{} exists, pass --force to overwrite",
                    path.display()
                )));
            }
            let store = if empty {
                KnowledgeStore::new()
            } else {
                KnowledgeStore::with_default_categories()
            };
            write_store(&store, &path)
        }
        StoreCommand::Apply {
            store,
            category,
            trial,
            subset,
            contact_fraction,
        } => {
            let mut s = open_store(&store)?;
            let segmentation = SegmentationConfig {
                contact_fraction,
                ..SegmentationConfig::default()
            };
            let processed = load_trial(&trial, &segmentation)?;
            let subset = subset
                .map(|ids| {
                    ids.into_iter()
                        .map(StpId::new)
                        .collect::<Result<Vec<_>, _>>()
                })
                .transpose()
                .map_err(|e| Failure::config(anyhow!("invalid STP id {}", e.0)))?;
            let record = PatientRecord {
                meta: processed.trial.patient.clone(),
                stps: processed.stps.clone(),
                added_at: chrono::Utc::now(),
            };
            s.apply_patient(&category, record, subset.as_deref())
                .map_err(Failure::analysis)?;
            write_store(&s, &store)?;
            println!("added {} to {}", processed.trial.patient.id, category);
            Ok(())
        }
        StoreCommand::Reset { store, category } => {
            let mut s = open_store(&store)?;
            s.reset_category(&category).map_err(Failure::analysis)?;
            write_store(&s, &store)
        }
        StoreCommand::Override {
            store,
            category,
            stp,
            min,
            max,
        } => {
            let mut s = open_store(&store)?;
            let stp_id =
                StpId::new(stp).map_err(|e| Failure::config(anyhow!("invalid STP id {}", e.0)))?;
            s.override_range(&category, stp_id, min, max)
                .map_err(Failure::analysis)?;
            write_store(&s, &store)
        }
        StoreCommand::ShowTree { store, json } => {
            let tree = tree_report(&open_store(&store)?);
            if json {
                print!("{}", to_wire(&tree));
            } else {
                print!("{}", render_tree(&tree));
            }
            Ok(())
        }
    }
}

fn synth(args: SynthArgs) -> Result<(), Failure> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))
                .map_err(Failure::config)?;
            serde_json::from_str::<CohortConfig>(&text)
                .with_context(|| format!("cohort config {}", path.display()))
                .map_err(Failure::config)?
        }
        None => CohortConfig::default(),
    };
    if let Some(n) = args.norm {
        config.norm_count = n;
    }
    if let Some(n) = args.per_category {
        config.per_category = n;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let store = synth_store(&config).map_err(Failure::config)?;

    let trials_dir = args.out.join("trials");
    fs::create_dir_all(&trials_dir)
        .with_context(|| format!("cannot create {}", trials_dir.display()))
        .map_err(Failure::config)?;
    write_store(&store, &args.out.join("store.json"))?;
    write_file(&args.out.join("cohort.json"), &to_wire(&config))?;
    for (category, trial) in sample_trials(&config, args.contact_fraction) {
        write_file(
            &trials_dir.join(format!("{category}.json")),
            &trial_to_string(&trial),
        )?;
    }
    println!(
        "wrote {} patients in {} categories to {}",
        store.patient_count(),
        config.categories.len() + 1,
        args.out.display()
    );
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::config)
}

fn serve(args: ServeArgs) -> Result<(), Failure> {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .init();
    let config = args.engine.config()?;
    let store = open_store(&args.store)?;
    let shared = SharedStore::new(
        store,
        FileSink {
            path: args.store.clone(),
        },
    );
    let app = router(Arc::new(AppState::new(shared, config)));
    let runtime = tokio::runtime::Runtime::new()
        .context("cannot start runtime")
        .map_err(Failure::config)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.listen)
            .await
            .with_context(|| format!("cannot listen on {}", args.listen))
            .map_err(Failure::config)?;
        eprintln!("listening on {}", args.listen);
        axum_serve(listener, app).await.map_err(Failure::config)
    })
}

async fn axum_serve(listener: tokio::net::TcpListener, app: axum::Router) -> anyhow::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
