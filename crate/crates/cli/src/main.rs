use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tfslab::battery;
use tfslab::io::ArtifactWriter;
use tfslab::{parse, run, CliError, Problem};

#[derive(Debug, Parser)]
#[command(name = "tfslab", version, about = "Time-fractional Schrödinger forward and inverse solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Worker threads for the compute phases.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Noise seed (overrides `noise.seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the forward problem and write the field.
    Forward(ConfigArg),
    /// Recover the initial state from observations on the mask.
    InvertInitial(ConfigArg),
    /// Recover the spatial factor of a separable source.
    InvertSource(ConfigArg),
    /// Recover the fractional order.
    InvertOrder(ConfigArg),
    /// Evaluate the Mittag-Leffler function at listed arguments.
    MlEval(ConfigArg),
    /// Run the acceptance battery and print a pass/fail table.
    Selftest,
}

#[derive(Debug, clap::Args)]
struct ConfigArg {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
}

fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(CliError::config("--threads", "must be >= 1"));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config("--threads", e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    if n > 1 {
        log::warn!("built without the `parallel` feature; --threads {n} ignored");
    }
    Ok(())
}

fn run_config(problem: Problem, path: &Path, cli: &Cli) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut cfg = parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed_override(seed);
    }
    let out = cli
        .output
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("tfslab-out"));
    let report = run(&cfg, problem, &out)?;
    for v in &report.verdicts {
        println!(
            "{} {}: {:e} (tolerance {:e})",
            if v.passed { "ok  " } else { "FAIL" },
            v.name,
            v.value,
            v.tolerance
        );
    }
    println!("wrote {} artifacts and report.json to {}", report.manifest.len(), out.display());
    Ok(())
}

fn selftest(cli: &Cli) -> Result<(), CliError> {
    let mut reports = Vec::new();
    for id in 1..=battery::CRITERIA {
        let r = battery::run_criterion(id);
        println!("{}", r.line());
        reports.push(r);
    }
    let passed = reports.iter().filter(|r| r.passed).count();
    println!("{passed}/{} criteria passed", reports.len());
    if let Some(dir) = &cli.output {
        let mut w = ArtifactWriter::create(dir)?;
        let value = serde_json::to_value(&reports).map_err(|e| CliError::io(dir.join("selftest.json"), e))?;
        w.write_json("selftest.json", &value)?;
    }
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| format!("{} {}", r.id, r.title)).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Selftest { failed: failed.join(", ") })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TFSLAB_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = configure_threads(cli.threads).and_then(|()| match &cli.command {
        Command::Forward(a) => run_config(Problem::Forward, &a.config, &cli),
        Command::InvertInitial(a) => run_config(Problem::InvertInitial, &a.config, &cli),
        Command::InvertSource(a) => run_config(Problem::InvertSource, &a.config, &cli),
        Command::InvertOrder(a) => run_config(Problem::InvertOrder, &a.config, &cli),
        Command::MlEval(a) => run_config(Problem::MlEval, &a.config, &cli),
        Command::Selftest => selftest(&cli),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            println!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
