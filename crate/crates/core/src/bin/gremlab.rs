use std::f64::consts::LN_2;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use gremlab::chains::{enumerate_chains, Chain};
use gremlab::entropy::check_constraints;
use gremlab::gibbs::{build_gibbs, flatten, GibbsStructure};
use gremlab::model::{phi_table, product_measure, unflatten_index, PhiSource};
use gremlab::parisi::{global_parisi_min, minimize_parisi, ParisiResult};
use gremlab::report::{run_verify, series_csv, to_json, Criterion, Format, McPoint, Tolerances, VerifyConfig};
use gremlab::sim::{count_in_ball, free_energy_chain, free_energy_exact, SimResult};
use gremlab::variational::solve_gibbs;
use gremlab::{GremError, ModelSpec, Result};

#[derive(Parser)]
#[command(name = "gremlab", version, about = "Multi-species GREM solvers and exact simulator")]
struct Cli {
    /// Model file (JSON).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Disorder seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the maximal chains on `n` species with their level sets.
    Chains {
        #[arg(long)]
        n: usize,
    },
    /// Inspect the model's φ.
    Phi {
        #[command(subcommand)]
        action: PhiAction,
    },
    /// Minimize the Parisi functional on one chain or on all of them.
    Parisi {
        #[arg(long)]
        chain: Option<String>,
    },
    /// Solve the entropy-capped Gibbs principle.
    Gibbs,
    /// Dump the generalized Gibbs measure of a chain at `m`.
    GibbsMeasure {
        #[arg(long)]
        chain: String,
        #[arg(long, value_delimiter = ',')]
        m: Vec<f64>,
    },
    /// Exact finite-volume free energy.
    Simulate {
        #[arg(long = "N")]
        volume: Option<usize>,
        #[arg(long)]
        chain: Option<String>,
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<usize>,
    },
    /// Count configurations whose empirical measure lies within a TV ball
    /// around the reference measure.
    Count {
        #[arg(long = "N")]
        volume: usize,
        #[arg(long)]
        radius: f64,
    },
    /// Run every check and report pass or fail per criterion.
    Verify {
        /// Volumes for the finite-volume series.
        #[arg(long = "N", value_delimiter = ',')]
        volumes: Vec<usize>,
        /// Criteria to skip.
        #[arg(long, value_enum, value_delimiter = ',')]
        skip: Vec<Criterion>,
        #[arg(long)]
        identity_tol: Option<f64>,
        #[arg(long)]
        mc_gap: Option<f64>,
    },
}

#[derive(Subcommand)]
enum PhiAction {
    /// Tabulate φ and print its range.
    Check,
}

#[derive(Serialize)]
struct PhiSummary {
    source: String,
    variables: Vec<String>,
    cells: usize,
    min: f64,
    max: f64,
    argmin: Vec<usize>,
    argmax: Vec<usize>,
}

#[derive(Serialize)]
struct ParisiOutput<'a> {
    chains: Vec<&'a ParisiResult>,
    best_chain: &'a Chain,
    value: f64,
}

#[derive(Serialize)]
struct GibbsMeasureOutput {
    structure: GibbsStructure,
    flattened: Vec<f64>,
    constraints: gremlab::entropy::ConstraintReport,
}

#[derive(Serialize)]
struct CountOutput {
    #[serde(rename = "N")]
    volume: usize,
    seed: u64,
    radius: f64,
    count: u64,
    /// `(1/N) log count`.
    rate: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("gremlab: {e}");
            ExitCode::from(2)
        }
    }
}

fn load(cli: &Cli) -> Result<ModelSpec> {
    let path = cli
        .model
        .as_ref()
        .ok_or_else(|| GremError::InvalidArgument("--model is required for this command".into()))?;
    ModelSpec::from_path(path)
}

fn write_out(cli: &Cli, text: &str) -> Result<()> {
    match &cli.out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn json_only(cli: &Cli) -> Result<()> {
    match cli.format {
        Some(Format::Csv) => Err(GremError::InvalidArgument("this command only emits JSON".into())),
        _ => Ok(()),
    }
}

fn run(cli: &Cli) -> Result<u8> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| GremError::InvalidArgument(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Chains { n } => {
            let chains = enumerate_chains(*n)?;
            if cli.format == Some(Format::Json) {
                return write_out(cli, &to_json(&chains)?).map(|_| 0);
            }
            if cli.format == Some(Format::Csv) {
                return Err(GremError::InvalidArgument("chains has no CSV form".into()));
            }
            let mut text = String::new();
            for c in &chains {
                let levels: Vec<String> = c
                    .levels()
                    .iter()
                    .enumerate()
                    .map(|(k, set)| {
                        let members: Vec<String> = set.iter().map(|j| j.to_string()).collect();
                        format!("T{}={}", k + 1, members.join(","))
                    })
                    .collect();
                text.push_str(&format!("{}  {}\n", c.label(), levels.join(" ")));
            }
            write_out(cli, &text)?;
        }
        Command::Phi { action: PhiAction::Check } => {
            json_only(cli)?;
            let spec = load(cli)?;
            let table = phi_table(&spec);
            let (mut lo, mut hi) = (0, 0);
            for (i, v) in table.iter().enumerate() {
                if *v < table[lo] {
                    lo = i;
                }
                if *v > table[hi] {
                    hi = i;
                }
            }
            let (source, variables) = match spec.phi_source() {
                PhiSource::Table => ("table".to_string(), Vec::new()),
                PhiSource::Expr { text, expr } => {
                    (text.clone(), expr.variables().iter().map(|j| format!("x{}", j.label())).collect())
                }
            };
            let summary = PhiSummary {
                source,
                variables,
                cells: table.len(),
                min: table[lo],
                max: table[hi],
                argmin: unflatten_index(lo, spec.coords(), spec.alphabet_size()),
                argmax: unflatten_index(hi, spec.coords(), spec.alphabet_size()),
            };
            write_out(cli, &to_json(&summary)?)?;
        }
        Command::Parisi { chain } => {
            json_only(cli)?;
            let spec = load(cli)?;
            let text = match chain {
                Some(c) => to_json(&minimize_parisi(&spec, &Chain::parse(c, spec.n())?)?)?,
                None => {
                    let global = global_parisi_min(&spec)?;
                    let best = global.best();
                    to_json(&ParisiOutput {
                        chains: global.chains.iter().collect(),
                        best_chain: &best.point.chain,
                        value: best.point.value,
                    })?
                }
            };
            write_out(cli, &text)?;
        }
        Command::Gibbs => {
            json_only(cli)?;
            let spec = load(cli)?;
            write_out(cli, &to_json(&solve_gibbs(&spec)?)?)?;
        }
        Command::GibbsMeasure { chain, m } => {
            json_only(cli)?;
            let spec = load(cli)?;
            let gs = build_gibbs(&spec, &Chain::parse(chain, spec.n())?, m)?;
            let flat = flatten(&gs, &spec)?;
            let constraints = check_constraints(&flat, &spec)?;
            let out = GibbsMeasureOutput {
                structure: gs,
                flattened: flat.into_weights(),
                constraints,
            };
            write_out(cli, &to_json(&out)?)?;
        }
        Command::Simulate { volume, chain, sweep } => {
            let spec = load(cli)?;
            let chain = chain.as_deref().map(|c| Chain::parse(c, spec.n())).transpose()?;
            let mut volumes = sweep.clone();
            if let Some(v) = volume {
                if !volumes.contains(v) {
                    volumes.push(*v);
                }
            }
            if volumes.is_empty() {
                return Err(GremError::InvalidArgument("give --N or --sweep".into()));
            }
            let results: Vec<SimResult> = volumes
                .iter()
                .map(|&v| match &chain {
                    Some(c) => free_energy_chain(&spec, c, v, cli.seed),
                    None => free_energy_exact(&spec, v, cli.seed),
                })
                .collect::<Result<_>>()?;
            let text = if cli.format == Some(Format::Csv) {
                let target = match &chain {
                    Some(c) => minimize_parisi(&spec, c)?.point.value - LN_2,
                    None => solve_gibbs(&spec)?.value,
                };
                let points: Vec<McPoint> = results
                    .iter()
                    .map(|r| McPoint {
                        volume: r.volume,
                        free_energy: r.free_energy,
                        target,
                        gap: (r.free_energy - target).abs(),
                    })
                    .collect();
                series_csv(&points)
            } else if results.len() == 1 {
                to_json(&results[0])?
            } else {
                to_json(&results)?
            };
            write_out(cli, &text)?;
        }
        Command::Count { volume, radius } => {
            json_only(cli)?;
            let spec = load(cli)?;
            let count = count_in_ball(&spec, *volume, cli.seed, &product_measure(&spec), *radius)?;
            let out = CountOutput {
                volume: *volume,
                seed: cli.seed,
                radius: *radius,
                count,
                rate: (count as f64).ln() / *volume as f64,
            };
            write_out(cli, &to_json(&out)?)?;
        }
        Command::Verify {
            volumes,
            skip,
            identity_tol,
            mc_gap,
        } => {
            let spec = load(cli)?;
            let mut tolerances = Tolerances::default();
            if let Some(t) = identity_tol {
                tolerances.identity = *t;
            }
            if let Some(t) = mc_gap {
                tolerances.mc_gap = *t;
            }
            let config = VerifyConfig {
                volumes: volumes.clone(),
                seed: cli.seed,
                tolerances,
                disabled: skip.clone(),
                ..VerifyConfig::default()
            };
            let report = run_verify(&spec, &config)?;
            let text = match cli.format.unwrap_or(Format::Json) {
                Format::Json => to_json(&report)?,
                Format::Csv => series_csv(&report.montecarlo),
            };
            write_out(cli, &text)?;
            for c in &report.criteria {
                let status = match (c.enabled, c.passed) {
                    (false, _) => "SKIP",
                    (true, true) => "PASS",
                    (true, false) => "FAIL",
                };
                eprintln!("{status} {:?} measured={:e} tolerance={:e}", c.criterion, c.measured, c.tolerance);
            }
            for e in &report.errors {
                eprintln!("error: {e}");
            }
            return Ok(report.exit_code() as u8);
        }
    }
    Ok(0)
}
