//! `sensolab` command-line tool.
//!
//! Exit codes: 0 success, 1 I/O or session failure, 2 usage or
//! validation error, 3 numerical failure, 4 server port unavailable.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use sensolab_core::conjoint::{ConjointOptions, Structure};
use sensolab_core::dataset::{import_dataset, to_delimited, Dataset, Decimal, Delimiter, Encoding, FileFormat, ImportOptions, Role};
use sensolab_core::inddiff::LikingMode;
use sensolab_core::prefmap::{Direction, Engine};
use sensolab_core::summary::Axis;
use sensolab_service::request::{
    ConjointRequest, IndDiffRequest, PcaRequest, PrefmapRequest, RegressionRequest, SegmentRef, SummaryRequest,
};
use sensolab_service::{Config, FitRequest, RunError, Session, SessionError, SubResult};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Numerical(String),

    #[error("{0}")]
    PortInUse(String),

    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) | CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::PortInUse(_) => 4,
        }
    }
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

/// Print to stdout, ignoring a closed pipe.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "sensolab", version, about = "Sensory and consumer data analysis")]
struct Cli {
    /// Session directory holding imported datasets.
    #[arg(long, global = true, env = "SENSOLAB_SESSION_DIR")]
    session_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Import a delimited text file or workbook into the session.
    Import(ImportArgs),
    /// Write a stored dataset as delimited text.
    Export(ExportArgs),
    /// List the datasets in the session.
    List,
    /// Run an analysis and write its tables and plots.
    Analyze(AnalyzeArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Delimited,
    Workbook,
}

#[derive(Debug, Args)]
struct ImportArgs {
    path: PathBuf,
    #[arg(long, default_value = "other")]
    role: Role,
    /// File format; detected from the extension when omitted.
    #[arg(long)]
    format: Option<FormatArg>,
    #[arg(long, default_value = "tab")]
    delimiter: Delimiter,
    #[arg(long, default_value = "period")]
    decimal: Decimal,
    #[arg(long, default_value = "ascii")]
    encoding: Encoding,
    /// First column holds row names (the default).
    #[arg(long, overrides_with = "no_row_names")]
    row_names: bool,
    #[arg(long)]
    no_row_names: bool,
    /// First row holds column names (the default).
    #[arg(long, overrides_with = "no_col_names")]
    col_names: bool,
    #[arg(long)]
    no_col_names: bool,
    /// Dataset name; defaults to the file stem.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    dataset: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "comma")]
    delimiter: Delimiter,
    #[arg(long, default_value = "period")]
    decimal: Decimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Output directory.
    #[arg(long, default_value = ".", global = true)]
    out: PathBuf,
    /// Output formats, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "json", global = true)]
    format: Vec<OutFormat>,
    #[command(subcommand)]
    method: Method,
}

#[derive(Debug, Args)]
struct LatentFlags {
    #[arg(long, default_value_t = 2)]
    components: usize,
    /// Leave-one-out cross-validation.
    #[arg(long)]
    validate: bool,
}

#[derive(Debug, Args)]
struct RegressionArgs {
    x: String,
    y: String,
    #[arg(long)]
    standardise_x: bool,
    #[arg(long)]
    standardise_y: bool,
    #[command(flatten)]
    latent: LatentFlags,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AxisArg {
    Rows,
    Columns,
}

#[derive(Debug, Subcommand)]
enum Method {
    /// Box plots and rating histograms.
    Summary {
        dataset: String,
        #[arg(long, value_enum, default_value = "rows")]
        axis: AxisArg,
        #[arg(long)]
        percent: bool,
        /// Rating scale as MIN,MAX.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        scale: Option<Vec<i64>>,
    },
    /// Principal component analysis.
    Pca {
        dataset: String,
        #[arg(long)]
        standardise: bool,
        #[command(flatten)]
        latent: LatentFlags,
    },
    /// Partial least squares regression of Y on X.
    Plsr(RegressionArgs),
    /// Principal component regression of Y on X.
    Pcr(RegressionArgs),
    /// Preference mapping of liking and descriptive data.
    Prefmap {
        liking: String,
        descriptive: String,
        #[arg(long, default_value = "internal")]
        direction: DirectionArg,
        #[arg(long, default_value = "plsr")]
        engine: EngineArg,
        #[arg(long)]
        standardise_x: bool,
        #[arg(long)]
        standardise_y: bool,
        /// Split the consumer plane into this many sectors.
        #[arg(long)]
        sectors: Option<usize>,
        /// Components spanning the sector plane, as A,B.
        #[arg(long, value_delimiter = ',', num_args = 2, default_value = "1,2")]
        sector_components: Vec<usize>,
        #[command(flatten)]
        latent: LatentFlags,
    },
    /// Mixed-model conjoint analysis.
    Conjoint {
        /// Liking dataset(s), comma separated for one model per dataset.
        liking: String,
        design: String,
        characteristics: Option<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        factors: Vec<String>,
        /// Model structure 1, 2 or 3.
        #[arg(long, default_value = "1", value_parser = parse_structure)]
        structure: Structure,
        #[arg(long, default_value_t = 0.1)]
        alpha_random: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha_fixed: f64,
        /// Keep every random term.
        #[arg(long)]
        no_reduce_random: bool,
        /// Eliminate non-significant fixed terms (default: structure 3 only).
        #[arg(long)]
        reduce_fixed: Option<bool>,
    },
    /// Individual differences: consumer characteristics against liking.
    Inddiff {
        liking: String,
        characteristics: String,
        /// Characteristics to expand into indicator columns.
        #[arg(long, value_delimiter = ',')]
        categorical: Vec<String>,
        /// Use these liking PCA loadings (1-based) as Y instead of raw liking.
        #[arg(long, value_delimiter = ',')]
        pca_components: Vec<usize>,
        #[arg(long)]
        no_standardise_x: bool,
        #[arg(long)]
        standardise_y: bool,
        /// Colour consumer scores by this characteristic.
        #[arg(long)]
        color_by: Option<String>,
        /// Discriminate segments stored in DATASET:COLUMN.
        #[arg(long)]
        segments: Option<String>,
        #[command(flatten)]
        latent: LatentFlags,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DirectionArg {
    Internal,
    External,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EngineArg {
    Plsr,
    Pcr,
}

fn parse_structure(s: &str) -> Result<Structure, String> {
    match s.to_ascii_lowercase().trim_start_matches("struct") {
        "1" => Ok(Structure::Struct1),
        "2" => Ok(Structure::Struct2),
        "3" => Ok(Structure::Struct3),
        _ => Err(format!("structure must be 1, 2 or 3, got '{s}'")),
    }
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "SENSOLAB_PORT")]
    port: Option<u16>,
}

fn session(dir: &Option<PathBuf>) -> Result<Session, CliError> {
    let dir = dir.clone().unwrap_or_else(|| Config::default().session_dir);
    Ok(Session::open(dir)?)
}

fn detect_format(path: &Path) -> Option<FileFormat> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    match ext.as_str() {
        "xlsx" | "xlsm" | "xlsb" | "xls" | "ods" => Some(FileFormat::Workbook),
        "csv" | "txt" | "tsv" | "tab" | "dat" => Some(FileFormat::Delimited),
        _ => None,
    }
}

fn cmd_import(dir: &Option<PathBuf>, a: ImportArgs) -> Result<(), CliError> {
    let format = match a.format {
        Some(FormatArg::Delimited) => FileFormat::Delimited,
        Some(FormatArg::Workbook) => FileFormat::Workbook,
        None => detect_format(&a.path).unwrap_or(FileFormat::Delimited),
    };
    let name = a.name.clone().unwrap_or_else(|| {
        a.path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_string()
    });
    let opts = ImportOptions {
        format,
        delimiter: a.delimiter,
        decimal_mark: a.decimal,
        encoding: a.encoding,
        has_row_names: !a.no_row_names,
        has_col_names: !a.no_col_names,
        dataset_name: name,
        role: a.role,
    };
    opts.check().map_err(|e| CliError::Usage(e.to_string()))?;
    let raw = fs::read(&a.path).map_err(io(&a.path))?;
    let d = import_dataset(&raw, &opts).map_err(|e| CliError::Validation(format!("{}: {e}", a.path.display())))?;
    let listing = session(dir)?.add_dataset(d)?;
    out!("{}", serde_json::to_string_pretty(&listing).expect("serialisable"));
    Ok(())
}

/// Find a stored dataset by id or name; the newest of equal names wins.
fn resolve(s: &Session, reference: &str) -> Result<String, CliError> {
    let list = s.list_datasets();
    if let Some(d) = list.iter().find(|d| d.id == reference) {
        return Ok(d.id.clone());
    }
    list.iter()
        .rev()
        .find(|d| d.name == reference)
        .map(|d| d.id.clone())
        .ok_or_else(|| CliError::Validation(format!("no dataset named '{reference}' in the session")))
}

fn cmd_export(dir: &Option<PathBuf>, a: ExportArgs) -> Result<(), CliError> {
    let s = session(dir)?;
    let id = resolve(&s, &a.dataset)?;
    let d = s.dataset(&id).expect("resolved");
    let text = to_delimited(&d, a.delimiter, a.decimal).map_err(|e| CliError::Usage(e.to_string()))?;
    fs::write(&a.out, text).map_err(io(&a.out))
}

fn cmd_list(dir: &Option<PathBuf>) -> Result<(), CliError> {
    let s = session(dir)?;
    out!("{}", serde_json::to_string_pretty(&s.list_datasets()).expect("serialisable"));
    Ok(())
}

fn build_request(s: &Session, m: Method) -> Result<FitRequest, CliError> {
    let r = |x: &str| resolve(s, x);
    Ok(match m {
        Method::Summary {
            dataset,
            axis,
            percent,
            scale,
        } => FitRequest::Summary(SummaryRequest {
            dataset: r(&dataset)?,
            axis: match axis {
                AxisArg::Rows => Axis::RowWise,
                AxisArg::Columns => Axis::ColumnWise,
            },
            as_percent: percent,
            scale: scale.map(|v| (v[0], v[1])),
        }),
        Method::Pca {
            dataset,
            standardise,
            latent,
        } => FitRequest::Pca(PcaRequest {
            dataset: r(&dataset)?,
            standardise,
            components: latent.components,
            validate: latent.validate,
        }),
        Method::Plsr(a) => FitRequest::Plsr(regression(s, a)?),
        Method::Pcr(a) => FitRequest::Pcr(regression(s, a)?),
        Method::Prefmap {
            liking,
            descriptive,
            direction,
            engine,
            standardise_x,
            standardise_y,
            sectors,
            sector_components,
            latent,
        } => FitRequest::Prefmap(PrefmapRequest {
            liking: r(&liking)?,
            descriptive: r(&descriptive)?,
            direction: match direction {
                DirectionArg::Internal => Direction::Internal,
                DirectionArg::External => Direction::External,
            },
            engine: match engine {
                EngineArg::Plsr => Engine::Plsr,
                EngineArg::Pcr => Engine::Pcr,
            },
            standardise_x,
            standardise_y,
            components: latent.components,
            validate: latent.validate,
            sectors,
            sector_components: (sector_components[0], sector_components[1]),
        }),
        Method::Conjoint {
            liking,
            design,
            characteristics,
            factors,
            structure,
            alpha_random,
            alpha_fixed,
            no_reduce_random,
            reduce_fixed,
        } => FitRequest::Conjoint(ConjointRequest {
            likings: liking.split(',').map(|l| r(l.trim())).collect::<Result<_, _>>()?,
            design: r(&design)?,
            characteristics: characteristics.as_deref().map(r).transpose()?,
            factors,
            structure,
            options: ConjointOptions {
                alpha_random,
                alpha_fixed,
                reduce_random: !no_reduce_random,
                reduce_fixed,
            },
        }),
        Method::Inddiff {
            liking,
            characteristics,
            categorical,
            pca_components,
            no_standardise_x,
            standardise_y,
            color_by,
            segments,
            latent,
        } => FitRequest::Inddiff(IndDiffRequest {
            liking: r(&liking)?,
            characteristics: r(&characteristics)?,
            mode: if pca_components.is_empty() {
                LikingMode::RawLiking
            } else {
                LikingMode::PcaLoadings {
                    components: pca_components,
                }
            },
            categorical,
            standardise_x: !no_standardise_x,
            standardise_y,
            components: latent.components,
            validate: latent.validate,
            color_by,
            segments: match segments {
                None => None,
                Some(spec) => {
                    let (d, c) = spec
                        .rsplit_once(':')
                        .ok_or_else(|| CliError::Usage(format!("--segments expects DATASET:COLUMN, got '{spec}'")))?;
                    Some(SegmentRef {
                        dataset: r(d)?,
                        column: c.to_string(),
                    })
                }
            },
        }),
    })
}

fn regression(s: &Session, a: RegressionArgs) -> Result<RegressionRequest, CliError> {
    Ok(RegressionRequest {
        x: resolve(s, &a.x)?,
        y: resolve(s, &a.y)?,
        standardise_x: a.standardise_x,
        standardise_y: a.standardise_y,
        components: a.latent.components,
        validate: a.latent.validate,
    })
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn write_result(dir: &Path, method: &str, r: &SubResult, formats: &[OutFormat]) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    let mut put = |name: String, content: String| -> Result<(), CliError> {
        let p = dir.join(name);
        fs::write(&p, content).map_err(io(&p))?;
        written.push(p);
        Ok(())
    };
    for f in formats {
        match f {
            OutFormat::Json => put(
                format!("{method}.json"),
                serde_json::to_string_pretty(r).expect("serialisable") + "\n",
            )?,
            OutFormat::Csv => {
                for t in &r.tables {
                    put(format!("{}.csv", file_safe(&t.name)), t.to_csv())?;
                }
            }
            OutFormat::Svg => {
                for p in &r.plots {
                    put(format!("{}.svg", file_safe(&p.name)), p.plot.to_svg())?;
                }
            }
        }
    }
    Ok(written)
}

fn cmd_analyze(dir: &Option<PathBuf>, a: AnalyzeArgs) -> Result<(), CliError> {
    let s = session(dir)?;
    let request = build_request(&s, a.method)?;
    let bundle = request.run(|id| s.dataset(id).map(|d| Dataset::clone(&d)))?;
    let multi = bundle.results.len() > 1;
    for r in &bundle.results {
        for w in &r.warnings {
            eprintln!("warning: {w}");
        }
        let target = if multi { a.out.join(file_safe(&r.name)) } else { a.out.clone() };
        for p in write_result(&target, &bundle.method, r, &a.format)? {
            out!("{}", p.display());
        }
    }
    Ok(())
}

fn cmd_serve(dir: &Option<PathBuf>, a: ServeArgs) -> Result<(), CliError> {
    let mut config = Config::default();
    if let Some(p) = a.port {
        config.port = p;
    }
    if let Some(d) = dir {
        config.session_dir = d.clone();
    }
    let session = Arc::new(Session::open(&config.session_dir)?);
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    rt.block_on(async move {
        let addr = config.addr();
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| {
            if e.kind() == std::io::ErrorKind::AddrInUse {
                CliError::PortInUse(format!("port {} is already in use", config.port))
            } else {
                CliError::Io(format!("cannot bind {addr}: {e}"))
            }
        })?;
        let bound = listener.local_addr().map_err(|e| CliError::Io(e.to_string()))?;
        out!("listening on http://{bound}");
        out!("session directory: {}", config.session_dir.display());
        sensolab_service::serve(listener, session, config.workers)
            .await
            .map_err(|e| CliError::Io(e.to_string()))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Import(a) => cmd_import(&cli.session_dir, a),
        Command::Export(a) => cmd_export(&cli.session_dir, a),
        Command::List => cmd_list(&cli.session_dir),
        Command::Analyze(a) => cmd_analyze(&cli.session_dir, a),
        Command::Serve(a) => cmd_serve(&cli.session_dir, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
