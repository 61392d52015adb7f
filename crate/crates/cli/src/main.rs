//! Batch experiment runner: every verification pipeline behind one binary
//! with reproducible configs and machine-readable outputs.
//!
//! Exit codes: 0 when all assertions pass, 1 on an assertion failure (the
//! failing assertions are named on stderr), 2 on a config or usage error.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

use commands::CommandOutput;

#[derive(Parser)]
#[command(name = "wparab", version, about = "weighted parabolic solver experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// experiment config (TOML, one experiment per file)
    #[arg(long)]
    config: PathBuf,
    /// output directory for summary.json, meta.json, and data tables
    #[arg(long)]
    out: PathBuf,
    /// worker threads for independent sweep points (0 = all cores)
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// seed for every randomized input
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// solve one problem instance and dump the field
    Solve(RunArgs),
    /// manufactured-solution convergence study
    Mms(RunArgs),
    /// Caccioppoli inequality ratios across an eps sweep
    Caccioppoli(RunArgs),
    /// truncation-energy ledger on a normalized instance
    Degiorgi(RunArgs),
    /// L2 -> Linf bound ratio, scale invariance, eps stability
    Linf(RunArgs),
    /// convergence of regularized solutions away from the hyperplane
    EpsSweep(RunArgs),
    /// Hölder seminorm ratios across the regularization sweep
    Holder(RunArgs),
    /// explicit solution family, asymptotics, growth classification
    Liouville(RunArgs),
    /// conjugate-weight transform and weak residual decay
    Conjugate(RunArgs),
    /// dyadic A2 estimates: stabilization vs divergence
    Muckenhoupt(RunArgs),
    /// curved characteristic manifold flattening pipeline
    Curved(RunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Mms(_) => "mms",
            Command::Caccioppoli(_) => "caccioppoli",
            Command::Degiorgi(_) => "degiorgi",
            Command::Linf(_) => "linf",
            Command::EpsSweep(_) => "eps-sweep",
            Command::Holder(_) => "holder",
            Command::Liouville(_) => "liouville",
            Command::Conjugate(_) => "conjugate",
            Command::Muckenhoupt(_) => "muckenhoupt",
            Command::Curved(_) => "curved",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Solve(a)
            | Command::Mms(a)
            | Command::Caccioppoli(a)
            | Command::Degiorgi(a)
            | Command::Linf(a)
            | Command::EpsSweep(a)
            | Command::Holder(a)
            | Command::Liouville(a)
            | Command::Conjugate(a)
            | Command::Muckenhoupt(a)
            | Command::Curved(a) => a,
        }
    }
}

/// Everything that must be byte-identical across reruns with the same
/// config and seed. Timestamps live in meta.json.
#[derive(Serialize)]
struct Summary {
    subcommand: String,
    seed: u64,
    config_text: String,
    results: serde_json::Value,
    assertions: Vec<commands::Assertion>,
    all_passed: bool,
}

#[derive(Serialize)]
struct Meta {
    timestamp_unix_s: u64,
    version: String,
    workers: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    let args = cli.command.args();

    let config_text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("config error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    if args.workers != 1 {
        let threads = if args.workers == 0 { num_threads() } else { args.workers };
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    } else {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    }

    let run = match name {
        "solve" => commands::run_solve(&config_text, args.seed),
        "mms" => commands::run_mms(&config_text, args.seed),
        "caccioppoli" => commands::run_caccioppoli(&config_text, args.seed),
        "degiorgi" => commands::run_degiorgi(&config_text, args.seed),
        "linf" => commands::run_linf(&config_text, args.seed),
        "eps-sweep" => commands::run_eps_sweep(&config_text, args.seed),
        "holder" => commands::run_holder(&config_text, args.seed),
        "liouville" => commands::run_liouville(&config_text, args.seed),
        "conjugate" => commands::run_conjugate(&config_text, args.seed),
        "muckenhoupt" => commands::run_muckenhoupt(&config_text, args.seed),
        "curved" => commands::run_curved(&config_text, args.seed),
        _ => unreachable!("clap enumerated the subcommands"),
    };

    let output: CommandOutput = match run {
        Ok(o) => o,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(2);
        }
    };

    if let Err(e) = write_outputs(name, args, &config_text, &output) {
        eprintln!("output error: {e:#}");
        return ExitCode::from(2);
    }

    let failed: Vec<&commands::Assertion> =
        output.assertions.iter().filter(|a| !a.passed).collect();
    for a in &output.assertions {
        let tag = if a.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {}: {}", a.name, a.detail);
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!(
            "failed assertions: {}",
            failed.iter().map(|a| a.name.as_str()).collect::<Vec<_>>().join(", ")
        );
        ExitCode::from(1)
    }
}

fn num_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn write_outputs(
    name: &str,
    args: &RunArgs,
    config_text: &str,
    output: &CommandOutput,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let all_passed = output.assertions.iter().all(|a| a.passed);
    let summary = Summary {
        subcommand: name.to_string(),
        seed: args.seed,
        config_text: config_text.to_string(),
        results: output.results.clone(),
        assertions: output.assertions.clone(),
        all_passed,
    };
    let summary_path = args.out.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    let meta = Meta {
        timestamp_unix_s: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        version: env!("CARGO_PKG_VERSION").to_string(),
        workers: args.workers,
    };
    std::fs::write(args.out.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    for (file, content) in &output.artifacts {
        // per-point artifacts are written atomically: full content, then rename
        let tmp = args.out.join(format!("{file}.tmp"));
        std::fs::write(&tmp, content)?;
        std::fs::rename(&tmp, args.out.join(file))?;
    }
    Ok(())
}
