//! The `layf` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::LevelFilter;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::feature_io::{self, Dtype};
use crate::harness::{
    memory_report, per_layer_best_counts, run, universality_fraction, ClassifierKind, LambdaMode,
    Protocol, RunConfig,
};
use crate::lambda_search::LambdaSearchConfig;
use crate::synthgen::{generate_stream, SynthConfig};
use crate::types::TaskStream;

#[derive(Debug, Parser)]
#[command(name = "layf", version, about = "Continual classification from multi-layer feature statistics")]
pub struct Cli {
    /// Seed for generation and lambda-search splits.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory receiving run records.
    #[arg(long, global = true, default_value = ".")]
    pub output_dir: PathBuf,
    /// off, error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-layer stream (train + test files).
    GenSynthetic(GenArgs),
    /// Class-incremental run (per-task lambda search unless --lambda is given).
    RunCil(RunArgs),
    /// Online single-pass run with a fixed lambda.
    RunOcl(RunArgs),
    /// Count, per layer, the classes best recognized by that layer alone.
    DiagnoseLayers(DiagnoseArgs),
    /// Share of classes that do at least as well with k layers as with one.
    Universality(UniversalityArgs),
    /// Gram memory and inversion cost against reference baselines.
    MemoryReport(MemoryArgs),
    /// Dump header and first-record diagnostics of a LAYF file.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierArg {
    Layup,
    Nmc,
    Laynmc,
    EnsembleSeparate,
}

impl From<ClassifierArg> for ClassifierKind {
    fn from(c: ClassifierArg) -> Self {
        match c {
            ClassifierArg::Layup => ClassifierKind::Layup,
            ClassifierArg::Nmc => ClassifierKind::Nmc,
            ClassifierArg::Laynmc => ClassifierKind::Laynmc,
            ClassifierArg::EnsembleSeparate => ClassifierKind::EnsembleSeparate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DtypeArg {
    F32,
    F64,
}

/// Flags shared by `run-cil` and `run-ocl`; a `--config` TOML file may
/// supply any of them, with flags taking precedence.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunArgs {
    /// Training split (LAYF).
    #[arg(long)]
    pub stream: Option<PathBuf>,
    /// Test split; defaults to the `.test.layf` sibling of --stream.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Number of final layers to concatenate (default 6, capped at L).
    #[arg(long, conflicts_with = "k_sweep")]
    pub k: Option<usize>,
    /// Inclusive range of k values, e.g. 1..12, one run record each.
    #[arg(long)]
    pub k_sweep: Option<String>,
    #[arg(long, value_enum)]
    pub classifier: Option<ClassifierArg>,
    /// Fixed ridge parameter; disables the per-task search.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Comma-separated lambda candidates for the search.
    #[arg(long, value_delimiter = ',')]
    pub candidates: Option<Vec<f64>>,
    #[arg(long)]
    pub split_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file with any of the keys above.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl RunArgs {
    fn merged(self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let file: RunArgs =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(Self {
            stream: self.stream.or(file.stream),
            test: self.test.or(file.test),
            k: self.k.or(file.k),
            k_sweep: self.k_sweep.or(file.k_sweep),
            classifier: self.classifier.or(file.classifier),
            lambda: self.lambda.or(file.lambda),
            candidates: self.candidates.or(file.candidates),
            split_fraction: self.split_fraction.or(file.split_fraction),
            seed: self.seed.or(file.seed),
            config: self.config,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    /// Output path of the training split; the test split goes next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file with synthetic-generator settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// Dimension of every layer (with --layers).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Comma-separated per-layer dimensions.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["layers", "dim"])]
    pub dims: Option<Vec<usize>>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub tasks: Option<usize>,
    #[arg(long)]
    pub train_per_class: Option<usize>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Comma-separated per-layer informativeness weights in [0, 1].
    #[arg(long, value_delimiter = ',')]
    pub informativeness: Option<Vec<f64>>,
    #[arg(long)]
    pub coupling: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub task_shift: Option<f64>,
    #[arg(long, value_enum, default_value = "f32")]
    pub dtype: DtypeArg,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub stream: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
}

#[derive(Debug, Clone, Args)]
pub struct UniversalityArgs {
    #[arg(long)]
    pub stream: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Layers compared against the last layer alone.
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    /// Fixed lambda; the per-task search is used when omitted.
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct MemoryArgs {
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    /// Dimension of every layer (with --layers).
    #[arg(long, default_value_t = 768)]
    pub dim: usize,
    #[arg(long, default_value_t = 12)]
    pub layers: usize,
    /// Comma-separated per-layer dimensions, overriding --dim/--layers.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long, default_value_t = 200)]
    pub classes: usize,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    pub path: PathBuf,
}

/// Parses an inclusive `a..b` (or `a..=b`) range.
pub fn parse_k_sweep(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("k sweep {s:?} is not of the form a..b"));
    let (lo, hi) = s.split_once("..").ok_or_else(bad)?;
    let hi = hi.strip_prefix('=').unwrap_or(hi);
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo == 0 || hi < lo {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn io_out(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn load_stream(stream: &Path, test: Option<&Path>) -> Result<TaskStream> {
    feature_io::load_task_stream(stream, test)
}

fn run_command(cli: &Cli, protocol: Protocol, args: RunArgs, out: &mut dyn Write) -> Result<()> {
    let args = args.merged()?;
    let stream_path = args
        .stream
        .clone()
        .ok_or_else(|| Error::Config("--stream is required".into()))?;
    let stream = load_stream(&stream_path, args.test.as_deref())?;
    let layers = stream.manifest.num_layers;
    let classifier: ClassifierKind = args.classifier.unwrap_or(ClassifierArg::Layup).into();

    let ks = match (&args.k_sweep, args.k) {
        (Some(sweep), _) => parse_k_sweep(sweep)?,
        (None, Some(k)) => vec![k],
        (None, None) if classifier == ClassifierKind::Nmc => vec![1],
        (None, None) => vec![6.min(layers)],
    };
    if let Some(&k) = ks.iter().find(|&&k| k > layers) {
        return Err(Error::Config(format!("--k {k} exceeds the stream's {layers} layers")));
    }

    let lambda_mode = match (protocol, args.lambda) {
        (_, Some(l)) => LambdaMode::Fixed(l),
        (Protocol::Ocl, None) => {
            return Err(Error::Config("run-ocl needs --lambda".into()));
        }
        (Protocol::Cil, None) => {
            let mut search = LambdaSearchConfig::default();
            if let Some(c) = args.candidates.clone() {
                search.candidates = c;
            }
            if let Some(f) = args.split_fraction {
                search.split_fraction = f;
            }
            LambdaMode::Search(search)
        }
    };
    let seed = args.seed.or(cli.seed).unwrap_or(0);

    ensure_dir(&cli.output_dir)?;
    for k in ks {
        let cfg = RunConfig {
            protocol,
            k,
            lambda_mode: lambda_mode.clone(),
            classifier,
            seed,
        };
        let report = run(&stream, &cfg)?;
        let stem = format!(
            "{}-{}-k{k}",
            match protocol {
                Protocol::Cil => "cil",
                Protocol::Ocl => "ocl",
            },
            classifier.as_str()
        );
        report.write_json(&cli.output_dir.join(format!("{stem}.json")))?;
        let table = report.summary_table();
        write_file(&cli.output_dir.join(format!("{stem}.txt")), &table)?;
        write!(out, "{table}").map_err(io_out)?;
        writeln!(
            out,
            "final A_T = {:.2}%{}",
            100.0 * report.final_accuracy(),
            report
                .final_forgetting()
                .map_or(String::new(), |f| format!("  F_T = {:.2}%", 100.0 * f))
        )
        .map_err(io_out)?;
    }
    Ok(())
}

fn gen_command(cli: &Cli, args: GenArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str::<SynthConfig>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(dims) = args.dims {
        cfg.layer_dims = dims;
    } else if args.layers.is_some() || args.dim.is_some() {
        let layers = args.layers.unwrap_or(cfg.num_layers());
        let dim = args.dim.unwrap_or(cfg.layer_dims.first().copied().unwrap_or(16));
        cfg.layer_dims = vec![dim; layers];
    }
    if let Some(s) = args.informativeness {
        cfg.informativeness = s;
    } else if cfg.informativeness.len() != cfg.num_layers() {
        cfg.informativeness = vec![1.0; cfg.num_layers()];
    }
    if let Some(v) = args.classes {
        cfg.num_classes = v;
    }
    if let Some(v) = args.tasks {
        cfg.num_tasks = v;
    }
    if let Some(v) = args.train_per_class {
        cfg.train_per_class = v;
    }
    if let Some(v) = args.test_fraction {
        cfg.test_fraction = v;
    }
    if let Some(v) = args.coupling {
        cfg.coupling = v;
    }
    if let Some(v) = args.noise {
        cfg.noise = v;
    }
    if let Some(v) = args.separation {
        cfg.separation = v;
    }
    if let Some(v) = args.task_shift {
        cfg.task_shift = v;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let stream = generate_stream(&cfg)?;
    let path = args.out.unwrap_or_else(|| cli.output_dir.join("synthetic.layf"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let dtype = match args.dtype {
        DtypeArg::F32 => Dtype::F32,
        DtypeArg::F64 => Dtype::F64,
    };
    feature_io::write_task_stream(&stream, &path, dtype)?;
    writeln!(
        out,
        "wrote {} ({}) and {}",
        path.display(),
        stream.manifest,
        feature_io::test_split_path(&path).display()
    )
    .map_err(io_out)
}

fn diagnose_command(cli: &Cli, args: DiagnoseArgs, out: &mut dyn Write) -> Result<()> {
    let stream = load_stream(&args.stream, args.test.as_deref())?;
    let diag = per_layer_best_counts(&stream, args.lambda)?;
    ensure_dir(&cli.output_dir)?;
    let json = serde_json::to_string_pretty(&diag).expect("diagnostics serialize") + "\n";
    write_file(&cli.output_dir.join("diagnose-layers.json"), &json)?;
    writeln!(out, "{:>6} {:>8} {:>10}", "layer", "classes", "accuracy").map_err(io_out)?;
    for (l, (count, acc)) in diag.counts.iter().zip(&diag.layer_accuracy).enumerate() {
        writeln!(out, "{:>6} {:>8} {:>9.2}%", l + 1, count, 100.0 * acc).map_err(io_out)?;
    }
    Ok(())
}

fn universality_command(cli: &Cli, args: UniversalityArgs, out: &mut dyn Write) -> Result<()> {
    let stream = load_stream(&args.stream, args.test.as_deref())?;
    let mut cfg = RunConfig::cil(args.k).with_seed(cli.seed.unwrap_or(0));
    if let Some(l) = args.lambda {
        cfg = cfg.with_lambda(l);
    }
    let fraction = universality_fraction(&stream, args.k, &cfg)?;
    ensure_dir(&cli.output_dir)?;
    let json = serde_json::json!({ "k": args.k, "baseline_k": 1, "fraction": fraction });
    write_file(
        &cli.output_dir.join("universality.json"),
        &(serde_json::to_string_pretty(&json).expect("json") + "\n"),
    )?;
    writeln!(
        out,
        "classes at least as accurate with k={} as with k=1: {:.1}%",
        args.k,
        100.0 * fraction
    )
    .map_err(io_out)
}

fn memory_command(args: MemoryArgs, out: &mut dyn Write) -> Result<()> {
    let dims = args.dims.unwrap_or_else(|| vec![args.dim; args.layers]);
    let report = memory_report(args.k, &dims, args.classes)?;
    write!(out, "{report}").map_err(io_out)
}

fn inspect_command(args: InspectArgs, out: &mut dyn Write) -> Result<()> {
    let report = feature_io::inspect(&args.path)?;
    write!(out, "{report}").map_err(io_out)
}

/// Runs a parsed invocation, writing human-readable output to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let level = LevelFilter::from_str(&cli.log_level)
        .map_err(|_| Error::Config(format!("unknown log level {:?}", cli.log_level)))?;
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match &cli.command {
        Command::GenSynthetic(a) => gen_command(&cli, a.clone(), out),
        Command::RunCil(a) => run_command(&cli, Protocol::Cil, a.clone(), out),
        Command::RunOcl(a) => run_command(&cli, Protocol::Ocl, a.clone(), out),
        Command::DiagnoseLayers(a) => diagnose_command(&cli, a.clone(), out),
        Command::Universality(a) => universality_command(&cli, a.clone(), out),
        Command::MemoryReport(a) => memory_command(a.clone(), out),
        Command::Inspect(a) => inspect_command(a.clone(), out),
    }
}

/// Parses `argv`, runs it, and returns the process exit code: 0 ok,
/// 2 usage, 3 data/format, 4 numeric, 5 I/O.
pub fn dispatch<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let category = e.category();
            let _ = writeln!(err, "error[{}]: {e}", category.as_str());
            category.exit_code()
        }
    }
}
