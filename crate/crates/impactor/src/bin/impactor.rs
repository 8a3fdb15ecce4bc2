//! Command-line front end: `analyze`, `batch`, `describe`, `plot-data`.
//!
//! Exit codes: 0 success, 2 validation error, 3 numeric failure, 4 partial
//! batch failure.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use impactor::analysis::{self, AnalysisConfig, BatchSpec, EU15};
use impactor::error::ErrorKind;
use impactor::panel;
use impactor::priors::PriorConfig;
use impactor::report;
use impactor::sampler::McmcConfig;

#[derive(Parser)]
#[command(name = "impactor", version, about = "Bayesian structural time-series causal impact analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Causal impact analysis for a single target country.
    Analyze(AnalyzeArgs),
    /// Run the per-country accession mapping plus a combined aggregate.
    Batch(BatchArgs),
    /// Before/after descriptive statistics and group shares.
    Describe(DescribeArgs),
    /// Run an analysis and write plot-ready CSV files.
    PlotData(PlotDataArgs),
}

#[derive(Args)]
struct McmcArgs {
    /// Total MCMC draws.
    #[arg(long, default_value_t = 20_000)]
    draws: usize,
    /// Burn-in draws discarded from the front of the chain.
    #[arg(long, default_value_t = 2_000)]
    burnin: usize,
    /// RNG seed; falls back to IMPACTOR_SEED.
    #[arg(long, env = "IMPACTOR_SEED", default_value_t = 0)]
    seed: u64,
    /// Keep every n-th retained draw.
    #[arg(long, default_value_t = 1)]
    thin: usize,
}

impl McmcArgs {
    fn to_config(&self) -> McmcConfig {
        McmcConfig { total_draws: self.draws, burn_in: self.burnin, seed: self.seed, thinning: self.thin }
    }
}

#[derive(Args)]
struct PriorArgs {
    /// Level-scale prior degrees of freedom.
    #[arg(long = "nu-level", default_value_t = 32.0)]
    nu_level: f64,
    /// Level prior guess as a fraction of the response scale.
    #[arg(long = "level-scale-factor", default_value_t = 0.1)]
    level_scale_factor: f64,
    /// Level truncation bound as a fraction of the response scale.
    #[arg(long = "level-bound-factor", default_value_t = 1.0)]
    level_bound_factor: f64,
    /// Expected number of included covariates.
    #[arg(long = "expected-model-size", default_value_t = 3.0)]
    expected_model_size: f64,
    /// Expected R-squared of the regression.
    #[arg(long = "expected-r2", default_value_t = 0.8)]
    expected_r2: f64,
    /// Observation-variance prior degrees of freedom.
    #[arg(long = "nu-obs", default_value_t = 50.0)]
    nu_obs: f64,
    /// Pin the intercept into every model.
    #[arg(long = "always-include-intercept", default_value_t = false)]
    always_include_intercept: bool,
}

impl PriorArgs {
    fn to_config(&self) -> PriorConfig {
        PriorConfig {
            nu_level: self.nu_level,
            level_scale_factor: self.level_scale_factor,
            level_bound_factor: self.level_bound_factor,
            expected_model_size: self.expected_model_size,
            expected_r2: self.expected_r2,
            nu_obs: self.nu_obs,
            always_include_intercept: self.always_include_intercept,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Input CSV panel (year column plus one column per country).
    #[arg(long)]
    data: PathBuf,
    /// Target country code.
    #[arg(long)]
    target: String,
    /// Comma-separated control country codes (default: the EU-15).
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// Intervention (accession) year; belongs to the post period.
    #[arg(long)]
    intervention: i32,
    #[command(flatten)]
    mcmc: McmcArgs,
    #[command(flatten)]
    prior: PriorArgs,
    /// Credible level for all intervals.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Output path (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated country=year overrides (default: the EU-13
    /// accession mapping 2004/2007/2013).
    #[arg(long)]
    mapping: Option<String>,
    /// Name for the combined aggregate series.
    #[arg(long, default_value = "EU13")]
    aggregate_name: String,
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    #[command(flatten)]
    mcmc: McmcArgs,
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Concurrent analyses.
    #[arg(long, default_value_t = 4)]
    jobs: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DescribeArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated country=year split overrides (default: EU-13
    /// accession years plus 2004 for the EU-15, filtered to the panel).
    #[arg(long)]
    mapping: Option<String>,
    /// Semicolon-separated NAME=code,code groups (default: EU15 and EU13,
    /// filtered to the panel).
    #[arg(long)]
    groups: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PlotDataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    target: String,
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    #[arg(long)]
    intervention: i32,
    #[command(flatten)]
    mcmc: McmcArgs,
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Directory receiving original.csv, pointwise.csv, cumulative.csv and
    /// metadata.json.
    #[arg(long)]
    output_dir: PathBuf,
}

fn parse_mapping(s: &str) -> Result<BTreeMap<String, i32>, String> {
    let mut out = BTreeMap::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (code, year) = part
            .split_once('=')
            .ok_or_else(|| format!("mapping entry `{part}` is not country=year"))?;
        let year: i32 = year.trim().parse().map_err(|_| format!("bad year in `{part}`"))?;
        out.insert(code.trim().to_owned(), year);
    }
    if out.is_empty() {
        return Err("empty mapping".to_owned());
    }
    Ok(out)
}

fn parse_groups(s: &str) -> Result<BTreeMap<String, Vec<String>>, String> {
    let mut out = BTreeMap::new();
    for part in s.split(';').filter(|p| !p.trim().is_empty()) {
        let (name, members) = part
            .split_once('=')
            .ok_or_else(|| format!("group entry `{part}` is not NAME=code,code"))?;
        let members: Vec<String> =
            members.split(',').map(|m| m.trim().to_owned()).filter(|m| !m.is_empty()).collect();
        if members.is_empty() {
            return Err(format!("group `{name}` has no members"));
        }
        out.insert(name.trim().to_owned(), members);
    }
    if out.is_empty() {
        return Err("empty groups".to_owned());
    }
    Ok(out)
}

fn write_output(output: Option<&PathBuf>, text: &str) -> std::io::Result<()> {
    match output {
        Some(path) => std::fs::write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn exit_for(err: &impactor::Error) -> ExitCode {
    match err.kind() {
        ErrorKind::Validation => ExitCode::from(2),
        ErrorKind::Numeric => ExitCode::from(3),
    }
}

fn run_analyze(args: &AnalyzeArgs) -> ExitCode {
    let mut config = AnalysisConfig::new(&args.data, &args.target, args.intervention);
    if let Some(c) = &args.covariates {
        config.covariates = c.clone();
    }
    config.mcmc = args.mcmc.to_config();
    config.prior = args.prior.to_config();
    config.credible_level = args.level;

    match analysis::analyze(&config) {
        Ok(report) => {
            let rendered = match args.format {
                Format::Text => report::render_report_text(&report),
                Format::Json => match report::render_report_json(&report) {
                    Ok(j) => j,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return exit_for(&e);
                    }
                },
                Format::Csv => report::render_summary_csv(&args.target, &report.summary),
            };
            if let Err(e) = write_output(args.output.as_ref(), &rendered) {
                eprintln!("error: io: {e}");
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}

fn run_batch(args: &BatchArgs) -> ExitCode {
    let panel = match File::open(&args.data).map_err(impactor::Error::from).and_then(panel::load_panel) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };
    let mut spec = BatchSpec::default();
    spec.aggregate_name = args.aggregate_name.clone();
    if let Some(m) = &args.mapping {
        match parse_mapping(m) {
            Ok(map) => spec.interventions = map,
            Err(e) => {
                eprintln!("error: cli: {e}");
                return ExitCode::from(2);
            }
        }
    }
    let covariates: Vec<String> = args
        .covariates
        .clone()
        .unwrap_or_else(|| EU15.iter().map(|s| (*s).to_owned()).collect());

    match analysis::batch(
        &panel,
        &spec,
        &covariates,
        &args.mcmc.to_config(),
        &args.prior.to_config(),
        args.level,
        args.jobs,
    ) {
        Ok(result) => {
            let rendered = match args.format {
                Format::Text | Format::Csv => analysis::render_batch_text(&result),
                Format::Json => {
                    let entries: Vec<serde_json::Value> = result
                        .entries
                        .iter()
                        .chain(result.aggregate.iter())
                        .map(|e| match &e.outcome {
                            Ok(r) => serde_json::json!({
                                "country": e.country,
                                "summary": r.summary,
                                "metadata": r.metadata,
                            }),
                            Err(err) => serde_json::json!({
                                "country": e.country,
                                "error": err.to_string(),
                            }),
                        })
                        .collect();
                    serde_json::to_string_pretty(&entries).unwrap()
                }
            };
            if let Err(e) = write_output(args.output.as_ref(), &rendered) {
                eprintln!("error: io: {e}");
                return ExitCode::from(2);
            }
            if result.has_failures() {
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}

fn run_describe(args: &DescribeArgs) -> ExitCode {
    let panel = match File::open(&args.data).map_err(impactor::Error::from).and_then(panel::load_panel) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };

    let splits = match &args.mapping {
        Some(m) => match parse_mapping(m) {
            Ok(map) => map,
            Err(e) => {
                eprintln!("error: cli: {e}");
                return ExitCode::from(2);
            }
        },
        None => {
            // Default: EU-13 at their accession years, EU-15 at the 2004
            // enlargement, restricted to what the panel actually carries.
            let mut m = analysis::eu13_accession();
            for c in EU15 {
                m.insert(c.to_owned(), 2004);
            }
            m.retain(|c, _| panel.has_country(c));
            m
        }
    };
    let groups = match &args.groups {
        Some(g) => match parse_groups(g) {
            Ok(map) => map,
            Err(e) => {
                eprintln!("error: cli: {e}");
                return ExitCode::from(2);
            }
        },
        None => {
            let eu15: Vec<String> = EU15
                .iter()
                .map(|s| (*s).to_owned())
                .filter(|c| panel.has_country(c))
                .collect();
            let eu13: Vec<String> =
                analysis::eu13_accession().keys().filter(|c| panel.has_country(c)).cloned().collect();
            let mut g = BTreeMap::new();
            if !eu15.is_empty() {
                g.insert("EU-15".to_owned(), eu15);
            }
            if !eu13.is_empty() {
                g.insert("EU-13".to_owned(), eu13);
            }
            g
        }
    };

    match panel::describe_change(&panel, &splits, &groups) {
        Ok(summary) => {
            let rendered = match args.format {
                Format::Text | Format::Csv => report::render_describe_text(&summary),
                Format::Json => serde_json::to_string_pretty(&summary).unwrap(),
            };
            if let Err(e) = write_output(args.output.as_ref(), &rendered) {
                eprintln!("error: io: {e}");
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}

fn run_plot_data(args: &PlotDataArgs) -> ExitCode {
    let mut config = AnalysisConfig::new(&args.data, &args.target, args.intervention);
    if let Some(c) = &args.covariates {
        config.covariates = c.clone();
    }
    config.mcmc = args.mcmc.to_config();
    config.prior = args.prior.to_config();
    config.credible_level = args.level;

    match analysis::analyze(&config)
        .and_then(|report| report::emit_plot_data(&report.series, args.intervention, &args.output_dir))
    {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Analyze(args) => run_analyze(&args),
        Command::Batch(args) => run_batch(&args),
        Command::Describe(args) => run_describe(&args),
        Command::PlotData(args) => run_plot_data(&args),
    }
}
