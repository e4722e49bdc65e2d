//! Command-line front end: run scenarios, sweep delays, tabulate frequency
//! responses, and vet gain vectors without writing any Rust.
//!
//! Results go to stdout (report JSON, sweep JSON, CSV tables); progress
//! notes go to stderr. Every failure is a single JSON object on stderr,
//! `{"error": <kind>, "message": <text>}`, with a nonzero exit code, so
//! scripts can branch on `error` without scraping prose.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use undelay::freq;
use undelay::gains::{verify_hurwitz, GainVector};
use undelay::harness::{compare, sweep_delta, Scenario};
use undelay::{Error, Result};

#[derive(Parser)]
#[command(
    name = "undelay",
    version,
    about = "Two-step high-gain differentiation with delay compensation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and print its error report; optionally emit the
    /// trace, report, and figure CSVs to a directory
    Run(RunArgs),
    /// Rerun a scenario across delays and fit each output's error order
    Sweep(SweepArgs),
    /// Tabulate the pair's frequency response on a log grid
    Bode(BodeArgs),
    /// Vet a gain vector: exits nonzero unless the induced polynomial is
    /// Hurwitz
    CheckGains(CheckGainsArgs),
    /// Run two scenarios and tabulate baseline vs corrected errors
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file
    scenario: PathBuf,
    /// Directory for emitted files; nothing is written when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Figure numbers (1-10) to emit alongside the trace, e.g. 1,4,7
    #[arg(long, value_delimiter = ',')]
    figures: Vec<u8>,
}

#[derive(Args)]
struct SweepArgs {
    /// Scenario JSON file whose delay gets overridden per sweep point
    #[arg(long)]
    base: PathBuf,
    /// Delays to sweep, e.g. 0.05,0.1,0.2,0.4 (at least three, each in (0, 1))
    #[arg(long, value_delimiter = ',', required = true)]
    deltas: Vec<f64>,
    /// Also write the sweep JSON here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BodeArgs {
    /// Scenario JSON file supplying the gains, delay, and gain rate
    #[arg(long)]
    spec: PathBuf,
    /// Outputs to tabulate (1-based); defaults to all of them
    #[arg(long, value_delimiter = ',')]
    outputs: Vec<usize>,
    /// Grid endpoints in rad/s and the number of log-spaced points
    #[arg(long, default_value_t = 1e-2)]
    wmin: f64,
    #[arg(long, default_value_t = 1e3)]
    wmax: f64,
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Override the time-scale eps; defaults to 1 / peak gain rate
    #[arg(long)]
    eps: Option<f64>,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckGainsArgs {
    /// Gain vector, highest-order first, e.g. 4,6,4,1
    #[arg(long, value_delimiter = ',', required = true)]
    k: Vec<f64>,
}

#[derive(Args)]
struct CompareArgs {
    /// Scenario whose stage-1 errors form the baseline column
    #[arg(long)]
    baseline: PathBuf,
    /// Scenario whose stage-2 errors form the corrected column
    #[arg(long)]
    candidate: PathBuf,
}

fn main() -> ExitCode {
    env_logger::init();
    if let Err(e) = configure_workers() {
        return fail(&e);
    }
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Bode(args) => cmd_bode(args),
        Command::CheckGains(args) => cmd_check_gains(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!(
        "{}",
        serde_json::json!({ "error": e.kind(), "message": e.to_string() })
    );
    ExitCode::FAILURE
}

/// UNDELAY_WORKERS caps the rayon pool used by `sweep` and `compare`.
fn configure_workers() -> Result<()> {
    let Ok(v) = std::env::var("UNDELAY_WORKERS") else {
        return Ok(());
    };
    let n: usize = v.parse().map_err(|_| Error::Config {
        field: "UNDELAY_WORKERS".into(),
        detail: format!("expected a thread count, got {v:?}"),
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config {
            field: "UNDELAY_WORKERS".into(),
            detail: e.to_string(),
        })
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    if args.out.is_none() && !args.figures.is_empty() {
        return Err(Error::Config {
            field: "--figures".into(),
            detail: "figure output requires --out".into(),
        });
    }
    let scenario = Scenario::from_path(&args.scenario)?;
    let result = scenario.run()?;
    if let Some(dir) = &args.out {
        for path in result.emit_all(dir, &args.figures)? {
            eprintln!("wrote {}", path.display());
        }
    }
    print!("{}", result.report.to_json_string());
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let base = Scenario::from_path(&args.base)?;
    let outcomes = sweep_delta(&base, &args.deltas)?;
    let mut json = serde_json::to_string_pretty(&outcomes)?;
    json.push('\n');
    if let Some(path) = &args.out {
        std::fs::write(path, &json)?;
        eprintln!("wrote {}", path.display());
    }
    print!("{json}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_bode(args: BodeArgs) -> Result<ExitCode> {
    let scenario = Scenario::from_path(&args.spec)?;
    let d = &scenario.differentiator;
    let eps = args.eps.unwrap_or(1.0 / d.schedule.peak_rate());
    let outputs: Vec<usize> = if args.outputs.is_empty() {
        (1..=d.order).collect()
    } else {
        args.outputs.clone()
    };
    let table = freq::bode_grid(
        &d.gains,
        eps,
        d.effective_delay(),
        &outputs,
        args.wmin,
        args.wmax,
        args.points,
    )?;
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path)?;
            table.write_csv(std::io::BufWriter::new(file))?;
            eprintln!("wrote {}", path.display());
        }
        None => table.write_csv(std::io::stdout().lock())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_check_gains(args: CheckGainsArgs) -> Result<ExitCode> {
    let k = GainVector::new(args.k)?;
    let check = verify_hurwitz(&k);
    let roots: Vec<serde_json::Value> = check
        .roots
        .iter()
        .map(|r| serde_json::json!({ "re": r.re, "im": r.im }))
        .collect();
    let payload = serde_json::json!({
        "stable": check.stable,
        "max_real_part": check.max_real_part,
        "roots": roots,
    });
    println!("{}", serde_json::to_string_pretty(&payload)?);
    Ok(if check.stable {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_compare(args: CompareArgs) -> Result<ExitCode> {
    let baseline = Scenario::from_path(&args.baseline)?;
    let candidate = Scenario::from_path(&args.candidate)?;
    let cmp = compare(&baseline, &candidate)?;
    let mut json = serde_json::to_string_pretty(&cmp)?;
    json.push('\n');
    print!("{json}");
    Ok(ExitCode::SUCCESS)
}
