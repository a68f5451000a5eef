//! `ncc-arq`: runs the analytic model and/or the simulator over a sweep and
//! prints a comparison table.
//!
//! Exit status: 0 on success (and all checks passing with `--check`),
//! 1 when a check fails, 2 on a configuration error, 3 when a simulation
//! aborts (partial rows are still written).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use ncc_arq::report::{check, run_comparison, Comparison, ComparisonError};
use ncc_arq::scenario::{
    ConfigError, ModeSelection, OutputFormat, ScenarioConfig, Sweep, VariantSelection,
};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SIM_ABORT: u8 = 3;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Analytic,
    Sim,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    NccArq,
    CArq,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "ncc-arq",
    version,
    about = "NCC-ARQ vs C-ARQ throughput and delay comparison"
)]
struct Args {
    /// Scenario file (flat TOML); flags override its values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Relay transmission counts, `A..B` (inclusive) or a single value.
    #[arg(long, value_name = "A..B", conflicts_with = "per")]
    retx: Option<String>,
    /// Relay→destination PER, one value or a comma-separated list.
    #[arg(long, value_name = "X[,X...]")]
    per: Option<String>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "N")]
    cycles: Option<u64>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Compare results against the built-in tolerances and set the exit status.
    #[arg(long)]
    check: bool,
    /// Print the effective scenario as TOML and exit.
    #[arg(long)]
    dump_config: bool,
    /// Scale simulated delays by 1+FRAC before checking.
    #[arg(long, value_name = "FRAC", hide = true)]
    perturb_sim_delay: Option<f64>,
}

fn parse_retx(text: &str) -> Result<Vec<u32>, ConfigError> {
    let invalid = |message: String| ConfigError::Invalid {
        key: "retx".into(),
        line: None,
        message,
    };
    let num = |s: &str| {
        s.trim()
            .parse::<u32>()
            .map_err(|e| invalid(format!("`{s}`: {e}")))
    };
    match text.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
            if a > b {
                return Err(invalid(format!("empty range {a}..{b}")));
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![num(text)?]),
    }
}

fn parse_per(text: &str) -> Result<Vec<f64>, ConfigError> {
    text.split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|e| ConfigError::Invalid {
                key: "per".into(),
                line: None,
                message: format!("`{s}`: {e}"),
            })
        })
        .collect()
}

fn build_config(args: &Args) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = ScenarioConfig::load(args.config.as_deref())?;
    if let Some(m) = args.mode {
        cfg.mode = match m {
            ModeArg::Analytic => ModeSelection::Analytic,
            ModeArg::Sim => ModeSelection::Sim,
            ModeArg::Both => ModeSelection::Both,
        };
    }
    if let Some(v) = args.variant {
        cfg.variant = match v {
            VariantArg::NccArq => VariantSelection::NccArq,
            VariantArg::CArq => VariantSelection::CArq,
            VariantArg::Both => VariantSelection::Both,
        };
    }
    if let Some(r) = &args.retx {
        cfg.sweep = Sweep::Retx(parse_retx(r)?);
    }
    if let Some(p) = &args.per {
        cfg.sweep = Sweep::PerRd(parse_per(p)?);
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(cycles) = args.cycles {
        cfg.cycles = cycles;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    if let Some(f) = args.format {
        cfg.format = match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(cfg: &ScenarioConfig, cmp: &Comparison) -> io::Result<()> {
    let sink: Box<dyn Write> = match &cfg.out {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut sink = BufWriter::new(sink);
    match cfg.format {
        OutputFormat::Csv => sink.write_all(cmp.to_csv().as_bytes())?,
        OutputFormat::Json => {
            cmp.write_json(&mut sink)?;
            writeln!(sink)?;
        }
    }
    sink.flush()
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match build_config(&args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    if args.dump_config {
        print!("{}", cfg.to_toml_string());
        return ExitCode::SUCCESS;
    }

    let (mut cmp, aborted) = match run_comparison(&cfg) {
        Ok(cmp) => (cmp, false),
        Err(ComparisonError::Sim {
            point,
            variant,
            abort,
            partial,
        }) => {
            eprintln!(
                "error: {variant} simulation at sweep point {point} aborted at {}: {}",
                abort.time, abort.error
            );
            (partial, true)
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    if let Some(frac) = args.perturb_sim_delay {
        cmp.perturb_sim_delay(frac);
    }
    if let Err(e) = emit(&cfg, &cmp) {
        eprintln!("error: writing output: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    if aborted {
        return ExitCode::from(EXIT_SIM_ABORT);
    }

    if args.check {
        let results = check(&cfg, &cmp);
        let failed = results.iter().filter(|r| !r.passed).count();
        for r in &results {
            let tag = if r.passed { "PASS" } else { "FAIL" };
            eprintln!("{tag} {}: {}", r.name, r.detail);
        }
        eprintln!("{} checks, {failed} failed", results.len());
        if failed > 0 {
            return ExitCode::from(EXIT_CHECK_FAILED);
        }
    }
    ExitCode::SUCCESS
}
