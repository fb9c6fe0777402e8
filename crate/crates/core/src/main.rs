use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use egg_bergman::egg_domain::EggDomain;
use egg_bergman::report::{write_jsonl, write_summary_csv};
use egg_bergman::suite::{exit_code, run_suites, solve_and_cache, RunConfig, Suite};

#[derive(Parser)]
#[command(name = "egg-bergman", version, about = "Numerical checks for Gleason's problem in weighted Bergman spaces on egg domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run verification suites and write report.jsonl and summary.csv.
    Verify(VerifyArgs),
    /// Solve the kernel coefficient system and print the record.
    Solve(SolveArgs),
}

/// Flags left unset fall back to the config file, then to built-in defaults.
#[derive(Args)]
struct VerifyArgs {
    /// Suites to run: decomposition multiplier kernel parseval gamma schur lemma1 lemma2 opnorm.
    suites: Vec<String>,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    p: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    d: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    scan_samples: Option<usize>,
    #[arg(long)]
    outer: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    degree: Option<u32>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    h_floor: Option<f64>,
    #[arg(long)]
    family: Option<usize>,
    /// Comma-separated suite list, merged with the positional suites.
    #[arg(long)]
    suites_list: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Polynomial literal checked by the decomposition suite.
    #[arg(long)]
    poly: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    a: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    sigma: f64,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

impl VerifyArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        macro_rules! push {
            ($($field:ident => $key:literal),* $(,)?) => {
                $(if let Some(v) = &self.$field { out.push(($key, v.to_string())); })*
            };
        }
        push!(n => "n", m => "m", a => "a", p => "p", lambda => "lambda", sigma => "sigma", d => "d",
            samples => "samples", scan_samples => "scan-samples", outer => "outer", seed => "seed",
            degree => "degree", grid => "grid", h_floor => "h-floor", family => "family");
        let mut suites: Vec<String> = self.suites.clone();
        if let Some(list) = &self.suites_list {
            suites.extend(list.split(',').map(str::to_string));
        }
        if !suites.is_empty() {
            out.push(("suites", suites.join(",")));
        }
        for (key, path) in [("out", &self.out), ("cache-dir", &self.cache_dir), ("poly", &self.poly)] {
            if let Some(p) = path {
                out.push((key, p.display().to_string()));
            }
        }
        out
    }
}

fn build_config(args: &VerifyArgs) -> egg_bergman::error::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_text(&fs::read_to_string(path)?)?;
    }
    for (key, value) in args.overrides() {
        cfg.set(key, &value)?;
    }
    if cfg.suites.is_empty() {
        cfg.suites = Suite::ALL.to_vec();
    }
    Ok(cfg)
}

fn verify(args: &VerifyArgs) -> ExitCode {
    let (cfg, plan) = match build_config(args).and_then(|cfg| cfg.validate().map(|plan| (cfg, plan))) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("invalid configuration: {e}");
            return ExitCode::from(2);
        }
    };
    let rows = run_suites(&cfg, &plan);
    let written = fs::create_dir_all(&cfg.out)
        .map_err(egg_bergman::error::Error::from)
        .and_then(|_| write_jsonl(&cfg.out.join("report.jsonl"), &rows))
        .and_then(|_| write_summary_csv(&cfg.out.join("summary.csv"), &rows));
    if let Err(e) = written {
        eprintln!("could not write reports to {}: {e}", cfg.out.display());
        return ExitCode::from(1);
    }
    for row in &rows {
        println!(
            "{} {:<40} estimate = {:<14.6e} tolerance = {:.3e}",
            if row.pass { "PASS" } else { "FAIL" },
            row.name(),
            row.estimate,
            row.tolerance
        );
    }
    let code = exit_code(&rows);
    if code != 0 {
        let failing: Vec<String> = rows.iter().filter(|r| !r.pass).map(|r| r.name()).collect();
        eprintln!("failing checks: {}", failing.join(", "));
    }
    ExitCode::from(code as u8)
}

fn solve(args: &SolveArgs) -> ExitCode {
    let result = EggDomain::new(args.n, args.m, args.a)
        .and_then(|d| solve_and_cache(args.cache_dir.as_deref(), &d, args.sigma));
    match result {
        Ok(kp) => {
            print!("{}", kp.to_record());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Verify(args) => verify(args),
        Command::Solve(args) => solve(args),
    }
}
