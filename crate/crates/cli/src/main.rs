use std::fmt::Write as _;
use std::io::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scenario_core::concretize::{self, ConcretizeError};
use scenario_core::exec::{self, ExecError, TickConfig};
use scenario_core::model::{self, ScenarioGraph};
use scenario_core::modules::{self, Catalog, CatalogError, ModuleDef};
use scenario_core::registry::Registry;
use scenario_core::sweep::{self, SweepError};
use scenario_core::validation::{self, Severity};
use scenario_core::xosc::{self, ExportError, ExportOptions};
use scenario_core::fixtures;

/// Environment variable naming the default module catalog directory.
const CATALOG_ENV: &str = "SCENARIO_CATALOG";

#[derive(Parser)]
#[command(name = "scenario", version, about = "Validate, concretize, export and run scenario graphs")]
struct Cli {
    /// TOML file overriding registry bounds, defaults and conflicts.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario against rules R1-R10.
    Validate {
        path: PathBuf,
        /// Treat warnings as errors.
        #[arg(long)]
        strict: bool,
    },
    /// Write a concrete scenario as OpenSCENARIO XML.
    Export {
        path: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated `kind=directory` pairs, e.g. `vehicle=catalogs/vehicles`.
        #[arg(long, value_delimiter = ',')]
        catalog_locations: Vec<String>,
        /// Emit action values as ParameterDeclarations.
        #[arg(long)]
        parameterize: bool,
    },
    /// Execute a scenario and print its outcome.
    Run {
        path: PathBuf,
        #[command(flatten)]
        tick: TickArgs,
        /// Variant of a logical scenario to run.
        #[arg(long, conflicts_with = "seed")]
        index: Option<u64>,
        /// Sample a variant of a logical scenario with this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the full trace as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every variant of a logical scenario.
    Sweep {
        path: PathBuf,
        #[command(flatten)]
        tick: TickArgs,
        /// Directory for the outcome table and the variant files.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// List the free parameters of a logical scenario.
    Plan { path: PathBuf },
    /// Describe a validation rule.
    Explain { rule: String },
    /// Manage the module catalog.
    Lib {
        /// Catalog directory; defaults to $SCENARIO_CATALOG, then ./catalog.
        #[arg(long)]
        catalog_dir: Option<PathBuf>,
        #[command(subcommand)]
        command: LibCommand,
    },
}

#[derive(Args)]
struct TickArgs {
    #[arg(long, default_value_t = TickConfig::default().dt)]
    dt: f64,
    #[arg(long, default_value_t = TickConfig::default().max_time)]
    max_time: f64,
    /// Store every n-th tick in the trace.
    #[arg(long, default_value_t = 1)]
    stride: u64,
}

#[derive(Subcommand)]
enum LibCommand {
    /// Add a module file, or a shipped module by name
    /// (crossing_maneuver, overtaking_maneuver).
    Add { module: String },
    List,
    Show {
        name: String,
        #[arg(long)]
        revision: Option<String>,
    },
}

/// Failure carrying its exit status: 1 for scenario problems, 2 for usage
/// and I/O problems.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn scenario(message: impl ToString) -> Self {
        Failure {
            code: 1,
            message: message.to_string(),
        }
    }

    fn usage(message: impl ToString) -> Self {
        Failure {
            code: 2,
            message: message.to_string(),
        }
    }
}

impl From<ExportError> for Failure {
    fn from(e: ExportError) -> Self {
        Failure::scenario(e)
    }
}

impl From<ExecError> for Failure {
    fn from(e: ExecError) -> Self {
        match e {
            ExecError::InvalidConfig(_) | ExecError::OutOfRange { .. } => Failure::usage(e),
            _ => Failure::scenario(e),
        }
    }
}

impl From<ConcretizeError> for Failure {
    fn from(e: ConcretizeError) -> Self {
        match e {
            ConcretizeError::OutOfRange { .. } => Failure::usage(e),
            _ => Failure::scenario(e),
        }
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Concretize(e) => e.into(),
            SweepError::Exec { source, .. } => source.into(),
            SweepError::Export { source, .. } => source.into(),
        }
    }
}

impl From<CatalogError> for Failure {
    fn from(e: CatalogError) -> Self {
        Failure::usage(e)
    }
}

type Outcome = Result<(String, u8), Failure>;

fn load_registry(config: Option<&Path>) -> Result<Registry, Failure> {
    match config {
        None => Ok(Registry::builtin()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            Registry::from_toml(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
        }
    }
}

/// `path`, or `path.json` when `path` has no extension and does not exist.
fn resolve(path: &Path) -> PathBuf {
    if !path.exists() && path.extension().is_none() {
        let with = path.with_extension("json");
        if with.exists() {
            return with;
        }
    }
    path.to_path_buf()
}

fn load_scenario(path: &Path, reg: &Registry) -> Result<ScenarioGraph, Failure> {
    let path = resolve(path);
    let text = fs::read_to_string(&path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    model::parse(&text, reg).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn tick_config(args: &TickArgs, seed: Option<u64>) -> TickConfig {
    TickConfig {
        dt: args.dt,
        max_time: args.max_time,
        seed: seed.unwrap_or(0),
        sample_stride: args.stride,
    }
}

fn cmd_validate(path: &Path, strict: bool, reg: &Registry, format: Format) -> Outcome {
    let g = load_scenario(path, reg)?;
    let report = validation::validate(&g, reg);
    let code = if report.passes(strict) { 0 } else { 1 };
    let text = match format {
        Format::Json => report.to_json(),
        Format::Human => {
            let mut out = String::new();
            for f in &report.findings {
                let severity = match f.severity {
                    Severity::Error => "error",
                    Severity::Warning => "warning",
                };
                let _ = writeln!(out, "{} {severity}: {}", f.rule_id, f.message);
            }
            let _ = write!(
                out,
                "{}: {} ({} errors, {} warnings)",
                g.name(),
                if code == 0 { "valid" } else { "invalid" },
                report.errors().count(),
                report.warnings().count()
            );
            out
        }
    };
    Ok((text, code))
}

fn parse_catalogs(pairs: &[String]) -> Result<Vec<(String, String)>, Failure> {
    pairs
        .iter()
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Failure::usage(format!("catalog location '{p}' is not kind=path")))
        })
        .collect()
}

fn cmd_export(
    path: &Path,
    out: Option<&Path>,
    catalogs: &[String],
    parameterize: bool,
    reg: &Registry,
) -> Outcome {
    let g = load_scenario(path, reg)?;
    let options = ExportOptions {
        catalog_locations: parse_catalogs(catalogs)?,
        parameterize,
        ..ExportOptions::default()
    };
    let xml = match xosc::export(&g, reg, &options) {
        Err(ExportError::UnknownCatalog(kind)) => {
            return Err(Failure::usage(format!("unknown catalog kind '{kind}'")))
        }
        other => other?,
    };
    match out {
        Some(out) => {
            write_file(out, &xml)?;
            Ok((format!("wrote {}", out.display()), 0))
        }
        None => Ok((xml.trim_end().to_string(), 0)),
    }
}

fn cmd_run(
    path: &Path,
    tick: &TickArgs,
    index: Option<u64>,
    seed: Option<u64>,
    out: Option<&Path>,
    reg: &Registry,
    format: Format,
) -> Outcome {
    let mut g = load_scenario(path, reg)?;
    if index.is_some() || seed.is_some() {
        let plan = concretize::plan(&g, reg)?;
        g = match (index, seed) {
            (Some(i), _) => concretize::enumerate(&g, &plan, i)?,
            (None, Some(s)) => concretize::sample(&g, &plan, s)?,
            (None, None) => unreachable!(),
        };
    }
    let trace = exec::run(&g, reg, &tick_config(tick, seed))?;
    if let Some(out) = out {
        write_file(out, &trace.to_json())?;
    }
    let summary = exec::outcome(&trace);
    let text = match format {
        Format::Json => serde_json::to_string_pretty(&summary).expect("summary serializes"),
        Format::Human => {
            let mut line = format!("{} at {:.2} s", summary.kind, summary.end_time);
            if let Some([a, b]) = &summary.collision {
                let _ = write!(line, " between {a} and {b}");
            }
            if let Some(d) = summary.min_distance {
                let _ = write!(line, ", min distance {d:.3} m");
            }
            line
        }
    };
    Ok((text, 0))
}

fn cmd_sweep(path: &Path, tick: &TickArgs, out_dir: Option<&Path>, reg: &Registry, format: Format) -> Outcome {
    let g = load_scenario(path, reg)?;
    let report = sweep::sweep(&g, reg, &tick_config(tick, None))?;
    let table = report.to_table();
    if let Some(dir) = out_dir {
        write_file(&dir.join("sweep.csv"), &table)?;
        for row in &report.rows {
            let variant = concretize::enumerate(&g, &report.plan, row.index)?;
            write_file(
                &dir.join(format!("variant_{:04}.json", row.index)),
                &model::serialize(&variant),
            )?;
        }
    }
    let text = match format {
        Format::Json => report.to_json(),
        Format::Human => table.trim_end().to_string(),
    };
    Ok((text, 0))
}

fn cmd_plan(path: &Path, reg: &Registry, format: Format) -> Outcome {
    let g = load_scenario(path, reg)?;
    let plan = concretize::plan(&g, reg)?;
    let text = match format {
        Format::Json => plan.to_json(),
        Format::Human => {
            let mut out = String::new();
            for p in &plan.free_params {
                let _ = writeln!(out, "{} {}: {} values", p.owner, p.key, p.cardinality());
            }
            let _ = write!(out, "{} variants", plan.total_count);
            out
        }
    };
    Ok((text, 0))
}

fn catalog_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CATALOG_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("catalog"))
}

fn builtin_module(name: &str, reg: &Registry) -> Option<ModuleDef> {
    match name {
        "crossing_maneuver" | "CrossingManeuver" => Some(fixtures::crossing_maneuver(reg)),
        "overtaking_maneuver" | "OvertakingManeuver" => Some(fixtures::overtaking_maneuver(reg)),
        _ => None,
    }
}

fn cmd_lib(dir: &Path, command: &LibCommand, reg: &Registry, format: Format) -> Outcome {
    let catalog = Catalog::new(dir);
    match command {
        LibCommand::Add { module } => {
            let def = match builtin_module(module, reg) {
                Some(def) => def,
                None => {
                    let path = resolve(Path::new(module));
                    let text = fs::read_to_string(&path)
                        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
                    modules::parse_module(&text, reg)
                        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
                }
            };
            let rev = catalog.save(&def)?;
            Ok((format!("{} {rev}", def.name), 0))
        }
        LibCommand::List => {
            let entries = catalog.list()?;
            let text = match format {
                Format::Json => serde_json::to_string_pretty(
                    &entries.iter().map(|(n, e)| (n, e)).collect::<std::collections::BTreeMap<_, _>>(),
                )
                .expect("index serializes"),
                Format::Human => entries
                    .iter()
                    .map(|(name, e)| format!("{name} {} roles: {}", e.head, e.roles.join(", ")))
                    .collect::<Vec<_>>()
                    .join("\n"),
            };
            Ok((text, 0))
        }
        LibCommand::Show { name, revision } => {
            let def = catalog.load(name, revision.as_deref(), reg)?;
            Ok((modules::module_document(&def).trim_end().to_string(), 0))
        }
    }
}

fn dispatch(cli: &Cli) -> Outcome {
    let reg = load_registry(cli.config.as_deref())?;
    match &cli.command {
        Command::Validate { path, strict } => cmd_validate(path, *strict, &reg, cli.format),
        Command::Export {
            path,
            out,
            catalog_locations,
            parameterize,
        } => cmd_export(path, out.as_deref(), catalog_locations, *parameterize, &reg),
        Command::Run {
            path,
            tick,
            index,
            seed,
            out,
        } => cmd_run(path, tick, *index, *seed, out.as_deref(), &reg, cli.format),
        Command::Sweep { path, tick, out_dir } => cmd_sweep(path, tick, out_dir.as_deref(), &reg, cli.format),
        Command::Plan { path } => cmd_plan(path, &reg, cli.format),
        Command::Explain { rule } => validation::explain(rule)
            .map(|text| (text.to_string(), 0))
            .map_err(Failure::usage),
        Command::Lib {
            catalog_dir: dir,
            command,
        } => cmd_lib(&catalog_dir(dir.as_deref()), command, &reg, cli.format),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok((text, code)) => {
            if !text.is_empty() {
                // A closed pipe (e.g. `| head`) is not an error worth reporting.
                let _ = writeln!(std::io::stdout().lock(), "{}", text.trim_end());
            }
            ExitCode::from(code)
        }
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
