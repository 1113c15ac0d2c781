//! `soundscape` command line.
//!
//! Exit codes: 0 success, 1 config/bind failure or failed consistency check,
//! 2 usage error or invalid input (project, WAV, CSV), 3 missing or
//! unreadable assets.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use soundscape_core::audio::{RenderError, RenderOptions};
use soundscape_core::catalog::{CatalogStore, Role};
use soundscape_core::gain::Gain;
use soundscape_core::project::{render_project, Project, ProjectError};
use soundscape_core::stats::{
    builtin_table2, read_participants_csv, reliability, summarize, verify_table2, SummaryRow,
    Table2Report, STUDY_PARTICIPANTS,
};
use soundscape_core::store::{to_canonical_json, write_atomic, ProjectStore, StoreError};
use soundscape_server::config::PartialConfig;
use soundscape_server::{build_state, Server};

const EXIT_FAILURE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_MISSING_ASSET: u8 = 3;

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "soundscape", version, about = "Sound memories from images: service, offline renderer and catalog tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Render a stopped project's timeline to a WAV file.
    Render(RenderArgs),
    /// Add a WAV file to the sound catalog and print its id.
    CatalogAdd(CatalogAddArgs),
    /// List catalog assets.
    CatalogList(CatalogListArgs),
    /// Print a stored project as canonical JSON.
    ProjectExport(ExportArgs),
    /// Questionnaire statistics.
    #[command(subcommand)]
    Stats(StatsCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Http,
}

#[derive(Args)]
struct ServeArgs {
    /// Listen address, e.g. 127.0.0.1:8080.
    #[arg(long)]
    addr: Option<String>,
    /// Store root; created if missing.
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// JSON config file with any of: addr, store, backend, describe_url,
    /// generate_url, auth_token.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Path to project.json.
    project: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Scale the mix down to a -1 dBFS peak when it would exceed it.
    #[arg(long)]
    normalize: bool,
    /// Catalog directory. Defaults to the nearest `catalog/` containing a
    /// catalog.json above the project file.
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long, default_value_t = 48_000)]
    rate: u32,
    #[arg(long, default_value_t = 1.0)]
    master_gain: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Music,
    Ambient,
    Effect,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Role {
        match r {
            RoleArg::Music => Role::Music,
            RoleArg::Ambient => Role::Ambient,
            RoleArg::Effect => Role::Effect,
        }
    }
}

#[derive(Args)]
struct StoreArg {
    /// Store root (falls back to SOUNDSCAPE_STORE, then ./soundscape-data).
    #[arg(long)]
    store: Option<PathBuf>,
}

impl StoreArg {
    fn resolve(&self) -> Result<PathBuf, Failure> {
        let flags = PartialConfig {
            store: self.store.clone(),
            ..Default::default()
        };
        let config = PartialConfig::from_env()
            .overlay(flags)
            .resolve()
            .map_err(|e| fail(EXIT_FAILURE, e.to_string()))?;
        Ok(config.store)
    }
}

#[derive(Args)]
struct CatalogAddArgs {
    wav: PathBuf,
    #[arg(long, value_enum)]
    role: RoleArg,
    /// Comma-separated labels; the first is the primary label.
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
    #[arg(long)]
    loopable: bool,
    #[command(flatten)]
    store: StoreArg,
}

#[derive(Args)]
struct CatalogListArgs {
    #[arg(long, value_enum)]
    role: Option<RoleArg>,
    /// Rank by label instead of listing everything.
    #[arg(long)]
    label: Option<String>,
    #[command(flatten)]
    store: StoreArg,
}

#[derive(Args)]
struct ExportArgs {
    project_id: String,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    store: StoreArg,
}

#[derive(Subcommand)]
enum StatsCommand {
    /// Check a paired-comparison table for internal consistency.
    VerifyTable2(VerifyArgs),
    /// Print the published comparison table.
    Table2 {
        #[arg(long, required = true)]
        builtin: bool,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct VerifyArgs {
    /// Raw per-participant scores; the table is derived and then checked.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Check the published table.
    #[arg(long)]
    builtin: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve(args) => serve(args),
        Command::Render(args) => render(args),
        Command::CatalogAdd(args) => catalog_add(args),
        Command::CatalogList(args) => catalog_list(args),
        Command::ProjectExport(args) => project_export(args),
        Command::Stats(StatsCommand::VerifyTable2(args)) => verify(args),
        Command::Stats(StatsCommand::Table2 { .. }) => print_table(&builtin_table2()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn serve(args: ServeArgs) -> CmdResult {
    let file = match &args.config {
        Some(path) => PartialConfig::from_file(path).map_err(|e| fail(EXIT_FAILURE, e.to_string()))?,
        None => PartialConfig::default(),
    };
    let flags = PartialConfig {
        addr: args.addr,
        store: args.store,
        backend: args.backend.map(|b| match b {
            BackendArg::Mock => "mock".to_string(),
            BackendArg::Http => "http".to_string(),
        }),
        ..Default::default()
    };
    let config = file
        .overlay(PartialConfig::from_env())
        .overlay(flags)
        .resolve()
        .map_err(|e| fail(EXIT_FAILURE, e.to_string()))?;
    let state = build_state(&config).map_err(|e| fail(EXIT_FAILURE, e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| fail(EXIT_FAILURE, e.to_string()))?;
    runtime.block_on(async move {
        let server = Server::bind(&config.addr, state)
            .await
            .map_err(|e| fail(EXIT_FAILURE, e.to_string()))?;
        let addr = server.local_addr().map_err(|e| fail(EXIT_FAILURE, e.to_string()))?;
        println!("listening on {addr}");
        let _ = io::stdout().flush();
        server.run().await.map_err(|e| fail(EXIT_FAILURE, e.to_string()))
    })
}

/// Nearest `<ancestor>/catalog` holding a catalog.json.
fn find_catalog(project_file: &Path) -> Option<PathBuf> {
    let start = project_file.canonicalize().ok()?;
    start
        .ancestors()
        .skip(1)
        .map(|dir| dir.join("catalog"))
        .find(|c| c.join(soundscape_core::catalog::MANIFEST_FILE).is_file())
}

fn render(args: RenderArgs) -> CmdResult {
    let bytes = fs::read(&args.project)
        .map_err(|e| fail(EXIT_INVALID, format!("{}: {e}", args.project.display())))?;
    let project: Project = serde_json::from_slice(&bytes)
        .map_err(|e| fail(EXIT_INVALID, format!("{}: {e}", args.project.display())))?;
    project.renderable_timeline().map_err(|e| fail(EXIT_INVALID, e.to_string()))?;
    let master_gain = Gain::new(args.master_gain).map_err(|e| fail(EXIT_FAILURE, e.to_string()))?;
    let options = RenderOptions {
        target_rate: args.rate,
        master_gain,
        normalize: args.normalize,
    };
    let catalog_dir = match args.catalog {
        Some(dir) => dir,
        None => find_catalog(&args.project)
            .ok_or_else(|| fail(EXIT_MISSING_ASSET, "no catalog found next to the project; pass --catalog"))?,
    };
    if !catalog_dir.join(soundscape_core::catalog::MANIFEST_FILE).is_file() {
        return Err(fail(EXIT_MISSING_ASSET, format!("{} holds no catalog", catalog_dir.display())));
    }
    let catalog = CatalogStore::open(&catalog_dir).map_err(|e| fail(EXIT_MISSING_ASSET, e.to_string()))?;
    let mix = render_project(&project, &catalog, &options).map_err(|e| {
        let code = match &e {
            ProjectError::Render(
                RenderError::MissingAsset(_) | RenderError::InvalidAsset { .. } | RenderError::EmptySource(_),
            ) => EXIT_MISSING_ASSET,
            ProjectError::Render(RenderError::UnsupportedRate(_)) => EXIT_FAILURE,
            _ => EXIT_INVALID,
        };
        fail(code, e.to_string())
    })?;
    write_atomic(&args.output, &mix.wav).map_err(|e| fail(EXIT_FAILURE, format!("{}: {e}", args.output.display())))?;
    println!("{}", args.output.display());
    Ok(())
}

fn open_catalog(store: &StoreArg) -> Result<CatalogStore, Failure> {
    let root = store.resolve()?;
    CatalogStore::open(root.join("catalog")).map_err(|e| fail(EXIT_FAILURE, e.to_string()))
}

fn catalog_add(args: CatalogAddArgs) -> CmdResult {
    let bytes = fs::read(&args.wav).map_err(|e| fail(EXIT_INVALID, format!("{}: {e}", args.wav.display())))?;
    let mut catalog = open_catalog(&args.store)?;
    let asset = catalog
        .ingest(&bytes, args.role.into(), &args.labels, args.loopable)
        .map_err(|e| {
            let code = match e {
                soundscape_core::catalog::CatalogError::Io(_)
                | soundscape_core::catalog::CatalogError::Manifest { .. } => EXIT_FAILURE,
                _ => EXIT_INVALID,
            };
            fail(code, format!("{}: {e}", args.wav.display()))
        })?;
    println!("{}", asset.id);
    Ok(())
}

fn catalog_list(args: CatalogListArgs) -> CmdResult {
    let store = open_catalog(&args.store)?;
    let catalog = store.catalog();
    let role = args.role.map(Role::from);
    let assets: Vec<_> = match &args.label {
        Some(raw) => {
            let label = soundscape_core::scene::normalize_label(raw).map_err(|e| fail(EXIT_INVALID, e.to_string()))?;
            catalog.lookup_by_label(&label, role)
        }
        None => catalog.assets().filter(|a| role.is_none_or(|r| a.role == r)).collect(),
    };
    let mut out = io::stdout().lock();
    for a in assets {
        let role = serde_json::to_value(a.role).ok();
        let role = role.as_ref().and_then(|v| v.as_str()).unwrap_or("?");
        let _ = writeln!(out, "{}\t{}\t{}ms\t{}", a.id, role, a.duration_ms, a.labels.join(","));
    }
    Ok(())
}

fn project_export(args: ExportArgs) -> CmdResult {
    let root = args.store.resolve()?;
    let store = ProjectStore::open(&root).map_err(|e| fail(EXIT_FAILURE, e.to_string()))?;
    let project = store.load(&args.project_id).map_err(|e| match e {
        StoreError::NotFound(_) | StoreError::Corrupt { .. } => fail(EXIT_INVALID, e.to_string()),
        StoreError::Io(_) => fail(EXIT_FAILURE, e.to_string()),
    })?;
    let bytes = to_canonical_json(&project).map_err(|e| fail(EXIT_FAILURE, e.to_string()))?;
    match args.output {
        Some(path) => {
            write_atomic(&path, &bytes).map_err(|e| fail(EXIT_FAILURE, format!("{}: {e}", path.display())))?;
            println!("{}", path.display());
        }
        None => {
            let _ = io::stdout().write_all(&bytes);
        }
    }
    Ok(())
}

fn print_table(rows: &[SummaryRow]) -> CmdResult {
    println!(
        "{:<5} {:>13} {:>13} {:>6} {:>7} {:>6}",
        "", "A mean (SD)", "B mean (SD)", "diff", "t", "p"
    );
    for r in rows {
        println!(
            "{:<5} {:>5.2} ({:.2}) {:>5.2} ({:.2}) {:>6.2} {:>7.3} {:>6.3}",
            r.indicator, r.mean_a, r.sd_a, r.mean_b, r.sd_b, r.mean_diff, r.t, r.p
        );
    }
    Ok(())
}

fn print_report(report: &Table2Report) {
    println!("n = {}, df = {}", report.n, report.n - 1);
    for r in &report.rows {
        println!(
            "{:<5} p={:.6} {} mean_gap={:.4} {} implied_sd={} {}",
            r.indicator,
            r.recomputed_p,
            if r.p_ok { "ok" } else { "MISMATCH" },
            r.mean_gap,
            if r.mean_ok { "ok" } else { "MISMATCH" },
            r.implied_sd.map_or("-".to_string(), |s| format!("{s:.3}")),
            if r.sd_ok { "ok" } else { "MISMATCH" },
        );
    }
}

fn verify(args: VerifyArgs) -> CmdResult {
    let (rows, n) = match &args.csv {
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| fail(EXIT_INVALID, format!("{}: {e}", path.display())))?;
            let pairs = read_participants_csv(file).map_err(|e| fail(EXIT_INVALID, format!("{}: {e}", path.display())))?;
            let rows = summarize(&pairs).map_err(|(row, e)| fail(EXIT_INVALID, format!("{row}: {e}")))?;
            print_table(&rows)?;
            match reliability(&pairs) {
                Ok(r) => println!(
                    "alpha: PQ a={:.3} b={:.3}; HQ a={:.3} b={:.3}",
                    r.pq_alpha_a, r.pq_alpha_b, r.hq_alpha_a, r.hq_alpha_b
                ),
                Err(e) => println!("alpha: unavailable ({e})"),
            }
            (rows, pairs.len())
        }
        None => (builtin_table2(), STUDY_PARTICIPANTS),
    };
    if n < 2 {
        return Err(fail(EXIT_INVALID, "need at least two participants"));
    }
    let report = verify_table2(&rows, n);
    print_report(&report);
    if report.all_passed() {
        println!("consistent");
        Ok(())
    } else {
        Err(fail(EXIT_FAILURE, format!("{} row(s) inconsistent", report.failures().count())))
    }
}
