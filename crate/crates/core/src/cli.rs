//! Command-line front end. Exit status: 0 success, 1 domain error, 2 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::catalog::{Capture, CaptureSource, SiteRecord};
use crate::clock::{ManualClock, SharedClock, SystemClock};
use crate::error::ApiError;
use crate::gateway::{BackendKind, BackendProfile, MOCK_IMAGE_PROFILE, MOCK_MESH_PROFILE};
use crate::metrics::{aggregate, emit_report, load_rows_csv, benchmark_rows, BaselineHours, ReportFormat};
use crate::pipeline::{GenerationJob, JobConfig, Stage};
use crate::prompt::{compile_prompt, lint_attributes, AttributeSet, LintIssue};
use crate::service::{self, ServiceConfig, ENV_DATA_DIR};
use crate::workspace::{Workspace, WorkspaceOptions};

#[derive(Debug, Parser)]
#[command(name = "heritage3d", version, about = "Heritage site image-to-3D pipeline")]
pub struct Cli {
    /// Data directory holding assets, catalog, jobs and published models.
    #[arg(long, global = true, env = ENV_DATA_DIR, default_value = "heritage-data")]
    pub data_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Register and inspect heritage sites.
    #[command(subcommand)]
    Site(SiteCommand),
    /// Compile generation prompts.
    #[command(subcommand)]
    Prompt(PromptCommand),
    /// Run and inspect generation jobs.
    #[command(subcommand)]
    Job(JobCommand),
    /// Render a timing report.
    Report(ReportArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum SiteCommand {
    Add(SiteAddArgs),
    /// Ingest one image with its capture azimuth.
    Ingest {
        #[arg(long)]
        site: String,
        #[arg(long, allow_negative_numbers = true)]
        azimuth: f64,
        #[arg(long, value_enum, default_value_t = SourceArg::LocalFile)]
        source: SourceArg,
        file: PathBuf,
    },
    List,
    Show {
        site: String,
    },
}

#[derive(Debug, Args)]
pub struct SiteAddArgs {
    #[arg(long)]
    pub name: String,
    /// Explicit id; derived from the name when omitted.
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long = "type", default_value = "")]
    pub site_type: String,
    #[arg(long, default_value = "")]
    pub material: String,
    #[arg(long = "feature")]
    pub features: Vec<String>,
    #[arg(long, default_value = "")]
    pub location: String,
    #[arg(long = "scale-element")]
    pub scale_elements: Vec<String>,
    #[arg(long, default_value = "")]
    pub illumination: String,
    /// Photogrammetry estimate as `LOW-HIGH` hours, e.g. `4-6`.
    #[arg(long, value_parser = parse_hours)]
    pub baseline_hours: Option<BaselineHours>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SourceArg {
    StreetViewUrl,
    LocalFile,
    RemoteUrl,
}

impl From<SourceArg> for CaptureSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::StreetViewUrl => CaptureSource::StreetViewUrl,
            SourceArg::LocalFile => CaptureSource::LocalFile,
            SourceArg::RemoteUrl => CaptureSource::RemoteUrl,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum PromptCommand {
    Compile {
        #[arg(long)]
        site: String,
        #[arg(long, default_value = crate::prompt::DEFAULT_TEMPLATE_ID)]
        template: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum JobCommand {
    /// Submit a job and run it to completion.
    Run(JobRunArgs),
    /// Continue an interrupted job; `--retry` also restarts a failed stage.
    Resume {
        job: String,
        #[arg(long)]
        retry: bool,
        #[command(flatten)]
        backends: BackendArgs,
    },
    Status {
        job: String,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
pub struct JobRunArgs {
    #[arg(long)]
    pub site: String,
    #[arg(long, default_value = crate::prompt::DEFAULT_TEMPLATE_ID)]
    pub template: String,
    #[arg(long)]
    pub auto_decimate: bool,
    /// Print the final job snapshot as JSON.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub backends: BackendArgs,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    /// Use the built-in offline mock backends.
    #[arg(long, conflicts_with_all = ["image_profile", "mesh_profile"])]
    pub mock: bool,
    #[arg(long)]
    pub image_profile: Option<String>,
    #[arg(long)]
    pub mesh_profile: Option<String>,
    /// Simulated 2D synthesis time in seconds for the mock image backend.
    #[arg(long, value_name = "SECONDS")]
    pub mock_delay_2d: Option<f64>,
    /// Simulated 3D generation time in seconds for the mock mesh backend.
    #[arg(long, value_name = "SECONDS")]
    pub mock_delay_3d: Option<f64>,
    /// Mock delays advance a virtual clock instead of sleeping.
    #[arg(long)]
    pub virtual_clock: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Built-in data set to report on.
    #[arg(long, value_enum, conflicts_with_all = ["csv", "jobs"])]
    pub fixture: Option<FixtureArg>,
    /// Rows from a CSV file with the metrics.csv columns.
    #[arg(long, conflicts_with = "jobs")]
    pub csv: Option<PathBuf>,
    /// Rows from finished jobs in the data directory.
    #[arg(long)]
    pub jobs: bool,
    #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
    pub format: FormatArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FixtureArg {
    /// The bundled eight-site timing table.
    Benchmark,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Markdown,
    Csv,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// `key=value` service config (data_dir, port, bind).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub bind: Option<String>,
}

fn parse_hours(s: &str) -> Result<BaselineHours, String> {
    let (lo, hi) = s
        .split_once(['-', '–'])
        .map_or((s, s), |(a, b)| (a.trim(), b.trim()));
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad hours {s:?}"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad hours {s:?}"))?;
    BaselineHours::new(lo, hi).map_err(|e| e.to_string())
}

/// Parses `argv` and runs the command, writing to the given streams.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error[{}]: {}", e.code, e.message);
            1
        }
    }
}

/// Entry point for the binary. Logs go to stderr at the level named by
/// `RUST_LOG` (`error`, `warn`, `info`, `debug`, `trace`), default `warn`.
pub fn main() -> ! {
    let level = std::env::var("RUST_LOG")
        .ok()
        .and_then(|v| v.parse::<tracing_subscriber::filter::LevelFilter>().ok())
        .unwrap_or(tracing_subscriber::filter::LevelFilter::WARN);
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock());
    std::process::exit(code)
}

fn open(data_dir: &PathBuf, clock: SharedClock, profiles: Vec<BackendProfile>) -> Result<Workspace, ApiError> {
    Ok(Workspace::open_with(
        data_dir,
        clock,
        WorkspaceOptions {
            profiles,
            transport: None,
        },
    )?)
}

fn io(e: std::io::Error) -> ApiError {
    e.into()
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32, ApiError> {
    let data_dir = cli.data_dir;
    match cli.command {
        Command::Site(cmd) => site(&data_dir, cmd, out),
        Command::Prompt(PromptCommand::Compile { site, template }) => {
            let ws = open(&data_dir, SystemClock::shared(), Vec::new())?;
            let record = ws.catalog.site(&site)?;
            let tpl = ws.orchestrator.templates().load(&template)?;
            let attrs = AttributeSet::from_site(&record);
            for issue in lint_attributes(&attrs, &tpl) {
                if !matches!(issue, LintIssue::MissingRequired(_)) {
                    tracing::warn!(?issue, "prompt lint");
                }
            }
            let prompt = compile_prompt(&template, &tpl, &attrs)?;
            writeln!(out, "{}", prompt.text).map_err(io)?;
            Ok(0)
        }
        Command::Job(JobCommand::Run(args)) => {
            let (clock, profiles) = backends(&args.backends);
            let ws = open(&data_dir, clock, profiles)?;
            let mut config = JobConfig {
                template_id: args.template,
                auto_decimate: args.auto_decimate,
                ..JobConfig::default()
            };
            if let Some(p) = args.backends.image_profile {
                config.image_profile = p;
            }
            if let Some(p) = args.backends.mesh_profile {
                config.mesh_profile = p;
            }
            let job_id = ws.orchestrator.submit_job(&args.site, config)?;
            writeln!(out, "job {job_id}").map_err(io)?;
            out.flush().map_err(io)?;
            let job = ws.orchestrator.run_to_completion(&job_id)?;
            print_job(&job, args.json, out)?;
            Ok(if job.stage == Stage::Done { 0 } else { 1 })
        }
        Command::Job(JobCommand::Resume { job, retry, backends: b }) => {
            let (clock, profiles) = backends(&b);
            let ws = open(&data_dir, clock, profiles)?;
            if retry {
                ws.orchestrator.advance(&job, true)?;
            }
            let job = ws.orchestrator.run_to_completion(&job)?;
            print_job(&job, false, out)?;
            Ok(if job.stage == Stage::Done { 0 } else { 1 })
        }
        Command::Job(JobCommand::Status { job, json }) => {
            let ws = open(&data_dir, SystemClock::shared(), Vec::new())?;
            print_job(&ws.orchestrator.job_status(&job)?, json, out)?;
            Ok(0)
        }
        Command::Report(args) => report(&data_dir, args, out),
        Command::Serve(args) => serve(&data_dir, args, out),
    }
}

fn site(data_dir: &PathBuf, cmd: SiteCommand, out: &mut dyn Write) -> Result<i32, ApiError> {
    let ws = open(data_dir, SystemClock::shared(), Vec::new())?;
    match cmd {
        SiteCommand::Add(a) => {
            let record = SiteRecord {
                site_id: a.id.unwrap_or_default(),
                site_type: a.site_type,
                material: a.material,
                features: a.features,
                location: a.location,
                scale_elements: a.scale_elements,
                illumination: a.illumination,
                baseline_hours: a.baseline_hours,
                ..SiteRecord::new(a.name)
            };
            let id = ws.catalog.register_site(record)?;
            writeln!(out, "{id}").map_err(io)?;
        }
        SiteCommand::Ingest {
            site,
            azimuth,
            source,
            file,
        } => {
            let bytes = std::fs::read(&file)
                .map_err(|e| ApiError::bad_request("unreadable_file", format!("{}: {e}", file.display())))?;
            let asset = ws.catalog.ingest_image(&site, &bytes, Capture::new(azimuth, source.into()))?;
            let report = ws.catalog.validate_site_ready(&site)?;
            writeln!(out, "{}", asset.asset_id).map_err(io)?;
            writeln!(
                out,
                "{} image(s), azimuthal coverage {:.1} deg{}",
                report.image_count,
                report.coverage_deg,
                if report.coverage_ok { "" } else { " (below recommended 90)" }
            )
            .map_err(io)?;
        }
        SiteCommand::List => {
            for s in ws.catalog.sites() {
                writeln!(out, "{}\t{}\t{} image(s)", s.site_id, s.name, s.images.len()).map_err(io)?;
            }
        }
        SiteCommand::Show { site } => {
            let view = service::SiteView::from(ws.catalog.site(&site)?);
            let json = serde_json::to_string_pretty(&view).map_err(|e| ApiError::internal(e.to_string()))?;
            writeln!(out, "{json}").map_err(io)?;
        }
    }
    Ok(0)
}

/// Clock and profile overrides implied by the backend flags.
fn backends(b: &BackendArgs) -> (SharedClock, Vec<BackendProfile>) {
    let clock: SharedClock = if b.virtual_clock {
        ManualClock::shared()
    } else {
        SystemClock::shared()
    };
    let mut profiles = Vec::new();
    let delay = |s: f64| Duration::try_from_secs_f64(s).unwrap_or_default();
    if let Some(s) = b.mock_delay_2d {
        profiles.push(BackendProfile::mock(MOCK_IMAGE_PROFILE, BackendKind::ImageSynthesis).with_delay(delay(s)));
    }
    if let Some(s) = b.mock_delay_3d {
        profiles.push(BackendProfile::mock(MOCK_MESH_PROFILE, BackendKind::MeshGeneration).with_delay(delay(s)));
    }
    (clock, profiles)
}

fn print_job(job: &GenerationJob, json: bool, out: &mut dyn Write) -> Result<(), ApiError> {
    if json {
        let text = serde_json::to_string_pretty(job).map_err(|e| ApiError::internal(e.to_string()))?;
        return writeln!(out, "{text}").map_err(io);
    }
    writeln!(out, "job {} site {} stage {}", job.job_id, job.site_id, job.stage).map_err(io)?;
    for t in &job.timings {
        let mark = if t.is_failure() { "  FAILED" } else { "" };
        writeln!(out, "  {:<14}{:>10.3} s{mark}", t.stage.as_str(), t.elapsed_s).map_err(io)?;
    }
    writeln!(out, "  {:<14}{:>10.3} s", "total", job.total_s()).map_err(io)?;
    if let (Some(a), Some(b)) = (job.stage_s(Stage::Synthesize2D), job.stage_s(Stage::Generate3D)) {
        writeln!(out, "  2D + 3D = {:.1} + {:.1} = {:.1} s", a, b, a + b).map_err(io)?;
    }
    if let Some(p) = &job.published {
        writeln!(out, "  published {}", p.dir).map_err(io)?;
    }
    if let Some(e) = &job.error {
        writeln!(out, "  error[{}]: {}", e.code, e.message).map_err(io)?;
    }
    Ok(())
}

fn report(data_dir: &PathBuf, args: ReportArgs, out: &mut dyn Write) -> Result<i32, ApiError> {
    let rows = match (args.fixture, &args.csv, args.jobs) {
        (Some(FixtureArg::Benchmark), _, _) => benchmark_rows(),
        (None, Some(path), _) => {
            let file = std::fs::File::open(path)
                .map_err(|e| ApiError::bad_request("unreadable_file", format!("{}: {e}", path.display())))?;
            load_rows_csv(file)?
        }
        (None, None, true) => {
            let ws = open(data_dir, SystemClock::shared(), Vec::new())?;
            service::job_metrics(&ws)
        }
        (None, None, false) => {
            return Err(ApiError::bad_request("invalid_arguments", "choose --fixture, --csv or --jobs"));
        }
    };
    let summary = aggregate(&rows)?;
    let format = match args.format {
        FormatArg::Markdown => ReportFormat::Markdown,
        FormatArg::Csv => ReportFormat::Csv,
    };
    let bytes = emit_report(&rows, &summary, format)?;
    match args.out {
        Some(path) => std::fs::write(&path, &bytes).map_err(io)?,
        None => out.write_all(&bytes).map_err(io)?,
    }
    Ok(0)
}

fn serve(data_dir: &PathBuf, args: ServeArgs, out: &mut dyn Write) -> Result<i32, ApiError> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ApiError::bad_request("invalid_config", format!("{}: {e}", path.display())))?;
            ServiceConfig::parse(&text)?
        }
        None => ServiceConfig {
            data_dir: data_dir.clone(),
            ..ServiceConfig::default()
        },
    }
    .with_env()?;
    if args.config.is_some() && std::env::var_os(ENV_DATA_DIR).is_none() && data_dir != &PathBuf::from("heritage-data") {
        config.data_dir = data_dir.clone();
    }
    if let Some(p) = args.port {
        config.port = p;
    }
    if let Some(b) = args.bind {
        config.bind = b;
    }
    let ws = Arc::new(open(&config.data_dir, SystemClock::shared(), Vec::new())?);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(io)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(config.addr())
            .await
            .map_err(|e| ApiError::new(500, "port_unavailable", format!("{}: {e}", config.addr())))?;
        let addr = listener.local_addr().map_err(io)?;
        writeln!(out, "listening on http://{addr}").map_err(io)?;
        out.flush().map_err(io)?;
        service::serve(listener, ws, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(io)
    })?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(args.iter().copied(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let (code, _, err) = run_capture(&["heritage3d", "report", "--bogus"]);
        assert_eq!(code, 2);
        assert!(err.contains("Usage"), "{err}");
    }

    #[test]
    fn benchmark_report() {
        let (code, out, _) = run_capture(&["heritage3d", "report", "--fixture", "benchmark", "--format", "markdown"]);
        assert_eq!(code, 0);
        assert!(out.contains("| Ahsan Manzil Museum | 10.2 | 34.0 | 44.2 | 4–6 |"), "{out}");
        assert!(out.contains("**44.6**"));
    }

    #[test]
    fn hours_parser() {
        assert_eq!(parse_hours("4-6").unwrap(), BaselineHours { low: 4.0, high: 6.0 });
        assert_eq!(parse_hours("4–6").unwrap(), BaselineHours { low: 4.0, high: 6.0 });
        assert_eq!(parse_hours("3").unwrap(), BaselineHours { low: 3.0, high: 3.0 });
        assert!(parse_hours("6-4").is_err());
    }

    #[test]
    fn domain_error_exit_code() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().to_str().unwrap();
        let (code, _, err) = run_capture(&["heritage3d", "--data-dir", d, "job", "status", "job-missing"]);
        assert_eq!(code, 1);
        assert!(err.starts_with("error[job_not_found]"), "{err}");
    }
}
