//! The `merge-spectrum` command line.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use crate::divergence::{
    compute_divergence_with_curve, dare_viability_probe, write_csv, write_report_json,
    DivergenceOptions, ProbeOptions, DEFAULT_BINS, DEFAULT_CURVE_GRID, DEFAULT_THRESHOLD,
};
use crate::merge::{
    MergeMethod, MergeRecipe, DEFAULT_DROP_RATE, DEFAULT_LORE_ITERS, DEFAULT_SVT_THRESHOLD_FRACTION,
};
use crate::pareto::{analyze, ingest_records, write_report, ReportOptions, SummaryOptions};
use crate::store::{open_checkpoint, DType, Role, WriterOptions};
use crate::sweep::{
    copy_sidecars, execute_sweep_with, merge_checkpoint, plan_sweep, DtypePolicy, ExecuteOptions,
    MergeOptions, SweepConfig,
};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Environment variable supplying the default for `--workers`.
pub const WORKERS_ENV: &str = "MERGE_SPECTRUM_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "merge-spectrum",
    version,
    about = "Merge direct and thinking checkpoints, measure their divergence and analyse accuracy/token trade-offs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Delta histogram, relative L2 distance and cumulative squared-delta curve
    Analyze(AnalyzeArgs),
    /// Merge two checkpoints with one method at one strength
    Merge(MergeArgs),
    /// Run (or resume) a strength sweep described by a JSON plan
    Sweep(SweepArgs),
    /// Write base + DARE-pruned deltas of a model for several drop rates
    ProbeDare(ProbeArgs),
    /// Confidence intervals, Pareto fronts, improvements and phase changes
    Pareto(ParetoArgs),
}

#[derive(Debug, Args)]
struct WorkerArgs {
    /// Tensors processed in parallel [default: all cores]
    #[arg(long, env = WORKERS_ENV, value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,
}

impl WorkerArgs {
    fn get(&self) -> Option<usize> {
        self.workers.map(usize::from)
    }
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Direct parent checkpoint (file, index file or directory)
    #[arg(long)]
    direct: PathBuf,
    /// Thinking parent checkpoint
    #[arg(long)]
    think: PathBuf,
    /// Histogram bins over [-max|delta|, max|delta|]
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Reference |delta| for the within-threshold fraction
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Points of the cumulative squared-delta curve; 0 disables it
    #[arg(long, default_value_t = DEFAULT_CURVE_GRID)]
    curve_grid: usize,
    /// Report JSON path
    #[arg(long, default_value = "divergence_report.json")]
    out: PathBuf,
    /// Also write histogram.csv and cumulative_curve.csv here
    #[arg(long)]
    csv_dir: Option<PathBuf>,
    #[command(flatten)]
    workers: WorkerArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    PreserveSource,
    ForceF32,
}

impl From<PolicyArg> for DtypePolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::PreserveSource => DtypePolicy::PreserveSource,
            PolicyArg::ForceF32 => DtypePolicy::ForceF32,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SidecarArg {
    Think,
    Direct,
    None,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DTypeArg {
    Bf16,
    F16,
    F32,
}

impl From<DTypeArg> for DType {
    fn from(d: DTypeArg) -> Self {
        match d {
            DTypeArg::Bf16 => DType::BF16,
            DTypeArg::F16 => DType::F16,
            DTypeArg::F32 => DType::F32,
        }
    }
}

fn method_parser() -> impl TypedValueParser<Value = MergeMethod> {
    PossibleValuesParser::new(MergeMethod::ALL.map(|m| m.as_str()))
        .map(|s| s.parse::<MergeMethod>().expect("listed method"))
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

#[derive(Debug, Args)]
struct MergeArgs {
    #[arg(long, value_parser = method_parser())]
    method: MergeMethod,
    /// Merging strength: 0 is the direct parent, 1 the thinking parent
    #[arg(long, value_parser = unit_interval)]
    strength: f64,
    #[arg(long)]
    direct: PathBuf,
    #[arg(long)]
    think: PathBuf,
    /// Shared base checkpoint; required by dare, ties, emr and twin
    #[arg(long)]
    base: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "merged")]
    out: PathBuf,
    /// Seed of the DARE drop masks
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// DARE drop probability, TIES 1 - density, TWIN mask rate
    #[arg(long, default_value_t = DEFAULT_DROP_RATE)]
    drop_rate: f64,
    /// Selected fraction for the top-k methods [default: the strength]
    #[arg(long)]
    top_k: Option<f64>,
    /// LORE singular-value threshold as a fraction of the largest
    #[arg(long, default_value_t = DEFAULT_SVT_THRESHOLD_FRACTION)]
    svt_threshold: f64,
    /// LORE alternating iterations
    #[arg(long, default_value_t = DEFAULT_LORE_ITERS)]
    lore_iters: usize,
    #[arg(long, value_enum, default_value = "preserve-source")]
    dtype_policy: PolicyArg,
    /// Parent whose tokenizer/config files are copied to the output
    #[arg(long, value_enum, default_value = "think")]
    sidecars: SidecarArg,
    /// Largest shard payload in bytes
    #[arg(long, default_value_t = WriterOptions::default().shard_limit_bytes)]
    shard_limit_bytes: u64,
    #[command(flatten)]
    workers: WorkerArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// JSON sweep plan
    #[arg(long)]
    plan: PathBuf,
    /// Stop after this many merges; run again to resume
    #[arg(long)]
    max_merges: Option<usize>,
    #[command(flatten)]
    workers: WorkerArgs,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    /// Model whose delta against the base is pruned
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    base: PathBuf,
    /// Comma-separated drop rates in [0, 1)
    #[arg(long, value_delimiter = ',', required = true)]
    rates: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output root; each rate goes to p<rate>/
    #[arg(long, default_value = "dare_probe")]
    out: PathBuf,
    /// Storage dtype of the outputs [default: the model's]
    #[arg(long, value_enum)]
    dtype: Option<DTypeArg>,
    #[arg(long, default_value_t = WriterOptions::default().shard_limit_bytes)]
    shard_limit_bytes: u64,
    #[command(flatten)]
    workers: WorkerArgs,
}

#[derive(Debug, Args)]
struct ParetoArgs {
    /// Newline-delimited JSON evaluation records
    #[arg(long)]
    records: PathBuf,
    /// model_id of the thinking parent
    #[arg(long)]
    parent_id: String,
    /// Output directory for the JSON report and CSV tables
    #[arg(long, default_value = "pareto")]
    out: PathBuf,
    #[arg(long, default_value_t = 0.90)]
    ci_level: f64,
    /// Bootstrap resamples per point
    #[arg(long, default_value_t = 10_000)]
    bootstrap_n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    /// Subcommand name and message.
    Usage(&'static str, String),
    Run(Error),
    /// Already reported on stderr.
    Data,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

macro_rules! impl_failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Run(e.into())
            }
        }
    )*};
}

impl_failure_from!(
    crate::store::StoreError,
    crate::divergence::DivergenceError,
    crate::sweep::SweepError,
    crate::pareto::ParetoError
);

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Merge(a) => cmd_merge(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::ProbeDare(a) => cmd_probe(a),
        Command::Pareto(a) => cmd_pareto(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(sub, msg)) => {
            let mut cmd = Cli::command();
            cmd.build();
            let usage = match cmd.find_subcommand_mut(sub) {
                Some(c) => c.render_usage(),
                None => cmd.render_usage(),
            };
            eprintln!("error: {msg}\n\n{usage}\n\nFor more information, try '--help'.");
            EXIT_USAGE
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            if e.is_io() {
                EXIT_IO
            } else {
                EXIT_DATA
            }
        }
        Err(Failure::Data) => EXIT_DATA,
    }
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<(), Failure> {
    if a.bins == 0 || !(a.threshold >= 0.0) {
        return Err(Failure::Usage(
            "analyze",
            "--bins must be positive and --threshold non-negative".into(),
        ));
    }
    let direct = open_checkpoint(&a.direct, Role::Direct)?;
    let think = open_checkpoint(&a.think, Role::Thinking)?;
    let opts = DivergenceOptions {
        bins: a.bins,
        threshold: a.threshold,
        curve_grid: (a.curve_grid > 0).then_some(a.curve_grid),
        workers: a.workers.get(),
        ..Default::default()
    };
    let (report, curve) = compute_divergence_with_curve(&direct, &think, &opts)?;
    write_report_json(&a.out, &report, curve.as_ref())?;
    if let Some(dir) = &a.csv_dir {
        write_csv(dir, &report, curve.as_ref())?;
    }
    println!(
        "relative_l2 {:.6}%  within ±{}: {:.4}%  params {}",
        100.0 * report.relative_l2,
        report.threshold,
        100.0 * report.fraction_within_threshold,
        report.total_params
    );
    if let Some(c) = &curve {
        println!(
            "sup distance to chi-square(1) reference: {:.4}",
            c.sup_distance()
        );
    }
    Ok(())
}

fn cmd_merge(a: MergeArgs) -> Result<(), Failure> {
    if a.method.requires_base() && a.base.is_none() {
        return Err(Failure::Usage(
            "merge",
            format!("--method {} requires --base <BASE>", a.method),
        ));
    }
    let recipe = MergeRecipe {
        top_k_fraction: a.top_k,
        svt_threshold_fraction: a.svt_threshold,
        lore_iters: a.lore_iters,
        ..MergeRecipe::new(a.method, a.strength)
            .with_drop_rate(a.drop_rate)
            .with_seed(a.seed)
    };
    recipe
        .validate(a.base.is_some())
        .map_err(|e| Failure::Usage("merge", e.to_string()))?;

    let direct = open_checkpoint(&a.direct, Role::Direct)?;
    let think = open_checkpoint(&a.think, Role::Thinking)?;
    let base = a
        .base
        .as_ref()
        .map(|p| open_checkpoint(p, Role::Base))
        .transpose()?;
    let opts = MergeOptions {
        dtype_policy: a.dtype_policy.into(),
        shard_limit_bytes: a.shard_limit_bytes,
        workers: a.workers.get(),
    };
    let out = merge_checkpoint(&direct, &think, base.as_ref(), &recipe, &a.out, &opts)?;
    let sidecar_dir = match a.sidecars {
        SidecarArg::Think => Some(think.dir()),
        SidecarArg::Direct => Some(direct.dir()),
        SidecarArg::None => None,
    };
    if let Some(dir) = sidecar_dir {
        copy_sidecars(dir, &a.out)?;
    }
    let fallbacks = out
        .diagnostics
        .iter()
        .filter(|d| d.collinear_fallback)
        .count();
    println!(
        "{} at {:.4}: {} tensors written to {}",
        recipe.method,
        recipe.strength,
        out.checkpoint.tensors().len(),
        a.out.display()
    );
    if fallbacks > 0 {
        println!("{fallbacks} tensors were collinear and interpolated linearly");
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Failure> {
    let mut config = SweepConfig::load(&a.plan)?;
    if let Some(w) = a.workers.get() {
        config.workers = Some(w);
    }
    let plan = plan_sweep(&config)?;
    let report = execute_sweep_with(
        &plan,
        &ExecuteOptions {
            max_merges: a.max_merges,
        },
    )?;
    println!(
        "{} merged, {} already done, {} failed, {} entries total{}",
        report.executed - report.failed,
        report.skipped,
        report.failed,
        report.manifest.entries.len(),
        if report.interrupted {
            " (stopped early)"
        } else {
            ""
        }
    );
    for e in report.manifest.entries.iter().filter(|e| e.error.is_some()) {
        eprintln!(
            "failed: {} at {:.4}: {}",
            e.method,
            e.strength,
            e.error.as_deref().unwrap_or_default()
        );
    }
    if report.failed > 0 {
        return Err(Failure::Data);
    }
    Ok(())
}

fn cmd_probe(a: ProbeArgs) -> Result<(), Failure> {
    if let Some(p) = a.rates.iter().find(|p| !(0.0..1.0).contains(*p)) {
        return Err(Failure::Usage(
            "probe-dare",
            format!("--rates value {p} is outside [0, 1)"),
        ));
    }
    let model = open_checkpoint(&a.model, Role::Thinking)?;
    let base = open_checkpoint(&a.base, Role::Base)?;
    let manifest = dare_viability_probe(
        &model,
        &base,
        &ProbeOptions {
            rates: a.rates,
            seed: a.seed,
            out_root: a.out.clone(),
            dtype: a.dtype.map(DType::from),
            shard_limit_bytes: a.shard_limit_bytes,
            workers: a.workers.get(),
        },
    )?;
    for e in &manifest.entries {
        println!("p={:.4} -> {}", e.drop_rate, e.output_path.display());
    }
    Ok(())
}

fn cmd_pareto(a: ParetoArgs) -> Result<(), Failure> {
    if !(a.ci_level > 0.0 && a.ci_level < 1.0) || a.bootstrap_n == 0 {
        return Err(Failure::Usage(
            "pareto",
            "--ci-level must lie in (0, 1) and --bootstrap-n be positive".into(),
        ));
    }
    let records = ingest_records(&a.records)?;
    let opts = ReportOptions {
        summary: SummaryOptions {
            ci_level: a.ci_level,
            bootstrap_n: a.bootstrap_n,
            seed: a.seed,
        },
    };
    let report = analyze(&records, &a.parent_id, &opts)?;
    write_report(&report, &a.out)?;
    for b in &report.benchmarks {
        println!(
            "{}: {} points, {} on the front, {} improve on {}",
            b.benchmark,
            b.points.len(),
            b.front.len(),
            b.improvements.len(),
            report.parent_id
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_lists_every_flag() {
        Cli::command().debug_assert();
        let mut cmd = Cli::command();
        for sub in cmd.get_subcommands_mut() {
            let help = sub.render_long_help().to_string();
            for arg in sub.get_arguments() {
                if let Some(long) = arg.get_long() {
                    assert!(
                        help.contains(&format!("--{long}")),
                        "{long} missing from help"
                    );
                }
                assert!(!arg.is_hide_set());
            }
        }
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["merge-spectrum", "--help"]), EXIT_OK);
        assert_eq!(run(["merge-spectrum", "bogus"]), EXIT_USAGE);
        assert_eq!(
            run(["merge-spectrum", "analyze", "--direct", "a"]),
            EXIT_USAGE
        );
        assert_eq!(
            run([
                "merge-spectrum",
                "merge",
                "--method",
                "dare",
                "--strength",
                "0.5",
                "--direct",
                "a",
                "--think",
                "b"
            ]),
            EXIT_USAGE
        );
        assert_eq!(
            run([
                "merge-spectrum",
                "merge",
                "--method",
                "slerp",
                "--strength",
                "1.5",
                "--direct",
                "a",
                "--think",
                "b"
            ]),
            EXIT_USAGE
        );
    }

    #[test]
    fn missing_input_is_an_io_error() {
        let tmp = tempfile::tempdir().unwrap();
        let missing = tmp.path().join("nothing");
        let m = missing.to_str().unwrap();
        assert_eq!(
            run(["merge-spectrum", "analyze", "--direct", m, "--think", m]),
            EXIT_IO
        );
        assert_eq!(
            run([
                "merge-spectrum",
                "pareto",
                "--records",
                m,
                "--parent-id",
                "x"
            ]),
            EXIT_IO
        );
    }
}
