//! Command-line front end. Exit codes are part of the interface so CI
//! pipelines can gate on a certification: 0 success (including a verdict of
//! Understands), 1 usage or data error, 2 DoesNotUnderstand, 3 NoConclusion.

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use understanding_core::io::{
    criterion_from_parts, read_agent, read_criterion, read_registry, read_transcript,
    transcript_to_jsonl, write_registry, RegistryDoc,
};
use understanding_core::sim::{sample_transcript, sample_transcript_with_registry, validate_coverage};
use understanding_core::tables::{
    compute_table, render_table, RenderedTable, TableFormat, TableId, TableSpec, ALL_TABLES,
};
use understanding_core::{
    certify_explained_transcript, certify_samples, certify_uncertain_application,
    hoeffding_informative, hoeffding_lower, hoeffding_upper, lower_bound, rid_display,
    rid_from_test_length, upper_bound, BoundQuery, Criterion, Outcome, Probability, Procedure,
    Verdict,
};

/// Seed override honored by every simulation subcommand.
const SEED_ENV: &str = "UNDERSTANDING_GATE_SEED";

#[derive(Parser)]
#[command(
    name = "understanding-gate",
    version,
    about = "Decide from scored transcripts whether an agent understands a scope"
)]
struct Cli {
    /// Emit machine-readable JSON instead of text
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Confidence bounds for an empirical mean
    Bound(BoundArgs),
    /// Ridiculousness threshold matched to a reference test length
    Rid(RidArgs),
    /// Render a verdict from a transcript
    Certify(CertifyArgs),
    /// Exercise a synthetic agent
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Reproduce the reference tables
    Tables(TablesArgs),
}

#[derive(Args)]
struct BoundArgs {
    /// Empirical mean in [0,1]
    #[arg(long = "p-hat")]
    p_hat: f64,
    /// Number of samples behind the mean
    #[arg(long)]
    n: u64,
    /// Failure budget in (0,1)
    #[arg(long)]
    delta: f64,
}

#[derive(Args)]
struct RidArgs {
    /// Length of the reference test the agent must survive
    #[arg(long = "test-length")]
    test_length: u64,
    /// Probability that a clean agent may still fail the reference test
    #[arg(long)]
    delta: f64,
}

#[derive(Args, Clone)]
struct CriterionArgs {
    /// Criterion JSON file; exclusive with the individual flags
    #[arg(long)]
    criterion: Option<PathBuf>,
    /// Passing grade in (0,1)
    #[arg(long)]
    pg: Option<f64>,
    /// Maximum ridiculous-answer probability
    #[arg(long)]
    rid: Option<f64>,
    /// Derive rid from a reference test of this length instead
    #[arg(long = "rid-test-length")]
    rid_test_length: Option<u64>,
    /// Failure budget in (0,1)
    #[arg(long)]
    delta: Option<f64>,
}

impl CriterionArgs {
    fn resolve(&self) -> anyhow::Result<Criterion> {
        if let Some(path) = &self.criterion {
            if self.pg.is_some()
                || self.rid.is_some()
                || self.rid_test_length.is_some()
                || self.delta.is_some()
            {
                bail!("--criterion is exclusive with --pg/--rid/--rid-test-length/--delta");
            }
            return read_criterion(path)
                .with_context(|| format!("reading criterion {}", path.display()));
        }
        let (Some(pg), Some(delta)) = (self.pg, self.delta) else {
            bail!("give --criterion FILE, or --pg and --delta with --rid or --rid-test-length");
        };
        Ok(criterion_from_parts(pg, delta, self.rid, self.rid_test_length)?)
    }
}

#[derive(Args)]
struct CertifyArgs {
    /// Testing procedure: 1 samples only, 2 explanations with a residual,
    /// 3 explanations with uncertain adherence
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    procedure: u8,
    /// Scored answers, one JSON object per line
    #[arg(long)]
    transcript: PathBuf,
    /// Explanation registry (procedures 2 and 3)
    #[arg(long)]
    registry: Option<PathBuf>,
    #[command(flatten)]
    criterion: CriterionArgs,
}

#[derive(Subcommand)]
enum SimulateCommand {
    /// Sample a transcript from an agent spec
    Transcript(SimulateTranscriptArgs),
    /// Estimate how often verdicts come out wrong against known truth
    Coverage(SimulateCoverageArgs),
}

#[derive(Args)]
struct SimulateTranscriptArgs {
    /// Agent spec JSON
    #[arg(long)]
    agent: PathBuf,
    /// Number of answers to sample
    #[arg(long)]
    n: u64,
    /// Master seed; beats the agent file, loses to the environment override
    #[arg(long)]
    seed: Option<u64>,
    /// Write the transcript here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the registry with observed adherence counts
    #[arg(long = "registry-out")]
    registry_out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateCoverageArgs {
    /// Agent spec JSON
    #[arg(long)]
    agent: PathBuf,
    /// Testing procedure under measurement
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    procedure: u8,
    /// Transcript length per trial
    #[arg(long)]
    n: u64,
    /// Number of independent certification trials
    #[arg(long)]
    trials: u64,
    /// Master seed; beats the agent file, loses to the environment override
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    criterion: CriterionArgs,
}

#[derive(Copy, Clone, ValueEnum)]
enum FormatArg {
    Text,
    Csv,
    Markdown,
}

impl From<FormatArg> for TableFormat {
    fn from(f: FormatArg) -> TableFormat {
        match f {
            FormatArg::Text => TableFormat::Text,
            FormatArg::Csv => TableFormat::Csv,
            FormatArg::Markdown => TableFormat::Markdown,
        }
    }
}

#[derive(Args)]
struct TablesArgs {
    /// Table to render, e.g. S-Chernoff or CompareBounds
    #[arg(long, conflicts_with = "all")]
    table: Option<TableId>,
    /// Render every table
    #[arg(long)]
    all: bool,
    /// Output syntax
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
    /// Override the sample-size grid, comma separated
    #[arg(long = "n-grid", value_delimiter = ',')]
    n_grid: Option<Vec<u64>>,
    /// Override a column parameter, e.g. --param s_high=0.95 (repeatable)
    #[arg(long = "param")]
    params: Vec<String>,
}

fn main() -> ExitCode {
    // behave like other unix filters when the downstream pipe closes
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Bound(args) => run_bound(args, cli.json),
        Command::Rid(args) => run_rid(args, cli.json),
        Command::Certify(args) => run_certify(args, cli.json),
        Command::Simulate(SimulateCommand::Transcript(args)) => run_sim_transcript(args),
        Command::Simulate(SimulateCommand::Coverage(args)) => run_sim_coverage(args, cli.json),
        Command::Tables(args) => run_tables(args, cli.json),
    }
}

#[derive(Serialize)]
struct BoundOutput {
    p_hat: f64,
    n: u64,
    delta: f64,
    entropy_lower: f64,
    entropy_upper: f64,
    additive_lower: f64,
    additive_upper: f64,
    additive_lower_informative: bool,
    additive_upper_informative: bool,
}

fn run_bound(args: BoundArgs, json: bool) -> anyhow::Result<u8> {
    let p_hat = Probability::new(args.p_hat)?;
    let query = BoundQuery::new(p_hat, args.n, args.delta)?;
    let out = BoundOutput {
        p_hat: args.p_hat,
        n: args.n,
        delta: args.delta,
        entropy_lower: lower_bound(&query).value(),
        entropy_upper: upper_bound(&query).value(),
        additive_lower: hoeffding_lower(p_hat, args.n, args.delta),
        additive_upper: hoeffding_upper(p_hat, args.n, args.delta),
        additive_lower_informative: hoeffding_informative(hoeffding_lower(
            p_hat, args.n, args.delta,
        )),
        additive_upper_informative: hoeffding_informative(hoeffding_upper(
            p_hat, args.n, args.delta,
        )),
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&out)?);
        return Ok(0);
    }
    println!(
        "mean {} over {} answers, failure budget {}",
        out.p_hat, out.n, out.delta
    );
    let note = |informative: bool| if informative { "" } else { "  (uninformative)" };
    println!("  entropy lower   {:.7}", out.entropy_lower);
    println!("  entropy upper   {:.7}", out.entropy_upper);
    println!(
        "  additive lower  {:.7}{}",
        out.additive_lower,
        note(out.additive_lower_informative)
    );
    println!(
        "  additive upper  {:.7}{}",
        out.additive_upper,
        note(out.additive_upper_informative)
    );
    Ok(0)
}

#[derive(Serialize)]
struct RidOutput {
    test_length: u64,
    delta: f64,
    rid: f64,
    display: String,
}

fn run_rid(args: RidArgs, json: bool) -> anyhow::Result<u8> {
    let rid = rid_from_test_length(args.test_length, args.delta)?.value();
    let out = RidOutput {
        test_length: args.test_length,
        delta: args.delta,
        rid,
        display: rid_display(rid),
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&out)?);
        return Ok(0);
    }
    println!(
        "ridiculousness threshold {} (exact {:e}) for a {}-question reference test at failure budget {}",
        out.display, out.rid, out.test_length, out.delta
    );
    Ok(0)
}

fn exit_code_for(outcome: Outcome) -> u8 {
    match outcome {
        Outcome::Understands => 0,
        Outcome::DoesNotUnderstand => 2,
        Outcome::NoConclusion => 3,
    }
}

fn print_verdict(verdict: &Verdict, json: bool) -> anyhow::Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(verdict)?);
        return Ok(());
    }
    println!("verdict: {}", verdict.outcome);
    println!("procedure: {}", verdict.procedure);
    for (name, check) in &verdict.conditions {
        println!(
            "  {name:<16} bound {:.6}  threshold {}  {}",
            check.bound,
            check.threshold,
            if check.satisfied { "satisfied" } else { "not satisfied" }
        );
    }
    Ok(())
}

fn run_certify(args: CertifyArgs, json: bool) -> anyhow::Result<u8> {
    let criterion = args.criterion.resolve()?;
    for advisory in criterion.advisories() {
        eprintln!("advisory: {advisory}");
    }
    let transcript = read_transcript(&args.transcript)
        .with_context(|| format!("reading transcript {}", args.transcript.display()))?;
    let registry = match &args.registry {
        Some(path) => Some(
            read_registry(path)
                .with_context(|| format!("reading registry {}", path.display()))?
                .to_registry()?,
        ),
        None => None,
    };

    let verdict = match (args.procedure, registry) {
        (1, None) => certify_samples(&transcript, &criterion)?,
        (1, Some(_)) => bail!("procedure 1 ignores explanations; drop --registry or use 2 or 3"),
        (2, Some(registry)) => certify_explained_transcript(&transcript, &registry, &criterion)?,
        (3, Some(registry)) => certify_uncertain_application(&transcript, &registry, &criterion)?,
        (2 | 3, None) => bail!("procedures 2 and 3 need --registry"),
        _ => unreachable!("clap range guards the procedure number"),
    };
    print_verdict(&verdict, json)?;
    Ok(exit_code_for(verdict.outcome))
}

/// Environment beats the flag, the flag beats the agent file.
fn resolve_seed(flag: Option<u64>, agent_seed: u64) -> anyhow::Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map_err(|_| anyhow!("{SEED_ENV} must be an unsigned integer, got {text:?}")),
        Err(std::env::VarError::NotPresent) => Ok(flag.unwrap_or(agent_seed)),
        Err(e) => Err(anyhow!("reading {SEED_ENV}: {e}")),
    }
}

fn run_sim_transcript(args: SimulateTranscriptArgs) -> anyhow::Result<u8> {
    let agent = read_agent(&args.agent)
        .with_context(|| format!("reading agent {}", args.agent.display()))?;
    let seed = resolve_seed(args.seed, agent.seed)?;

    let (transcript, registry) = if args.registry_out.is_some() {
        let (t, r) = sample_transcript_with_registry(&agent, args.n, seed)?;
        (t, Some(r))
    } else {
        (sample_transcript(&agent, args.n, seed)?, None)
    };

    let jsonl = transcript_to_jsonl(&transcript);
    match &args.out {
        Some(path) => {
            let mut file = File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            file.write_all(jsonl.as_bytes())?;
        }
        None => print!("{jsonl}"),
    }
    if let (Some(path), Some(registry)) = (&args.registry_out, registry) {
        let file = File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        write_registry(file, &RegistryDoc::from_registry(&registry))?;
    }
    Ok(0)
}

fn procedure_from_number(n: u8) -> Procedure {
    match n {
        1 => Procedure::Samples,
        2 => Procedure::Explanations,
        _ => Procedure::UncertainAdherence,
    }
}

fn run_sim_coverage(args: SimulateCoverageArgs, json: bool) -> anyhow::Result<u8> {
    let criterion = args.criterion.resolve()?;
    let agent = read_agent(&args.agent)
        .with_context(|| format!("reading agent {}", args.agent.display()))?;
    let seed = resolve_seed(args.seed, agent.seed)?;
    let report = validate_coverage(
        &agent,
        &criterion,
        procedure_from_number(args.procedure),
        args.n,
        args.trials,
        seed,
    )?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(0);
    }
    println!(
        "procedure {}: {} trials at n={}",
        report.procedure, report.trials, report.n
    );
    println!(
        "  truth: score {:.6}, ridiculousness {:.6} -> {}",
        report.true_score,
        report.true_ridiculousness,
        if report.truth_understands { "understands" } else { "does not understand" }
    );
    println!(
        "  wrong verdicts {} (rate {}), no-conclusions {}",
        report.wrong_verdicts, report.empirical_failure_rate, report.no_conclusions
    );
    println!("  failure budget {}", report.delta);
    Ok(0)
}

fn build_spec(id: TableId, args: &TablesArgs) -> anyhow::Result<TableSpec> {
    let mut spec = TableSpec::with_defaults(id);
    if let Some(grid) = &args.n_grid {
        spec.n_grid = grid.clone();
    }
    for pair in &args.params {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("--param takes key=value, got {pair:?}"))?;
        let value: f64 = value
            .parse()
            .map_err(|_| anyhow!("--param {key}: {value:?} is not a number"))?;
        spec.parameters.insert(key.to_string(), value);
    }
    Ok(spec)
}

fn run_tables(args: TablesArgs, json: bool) -> anyhow::Result<u8> {
    let ids: Vec<TableId> = match (args.table, args.all) {
        (Some(id), false) => vec![id],
        (None, true) => ALL_TABLES.to_vec(),
        (None, false) => bail!("give --table NAME or --all"),
        (Some(_), true) => unreachable!("clap conflicts_with guards this"),
    };
    let rendered: Vec<RenderedTable> = ids
        .iter()
        .map(|&id| -> anyhow::Result<RenderedTable> {
            Ok(compute_table(&build_spec(id, &args)?)?)
        })
        .collect::<anyhow::Result<_>>()?;
    if json {
        println!("{}", serde_json::to_string_pretty(&rendered)?);
        return Ok(0);
    }
    let blocks: Vec<String> = rendered
        .iter()
        .map(|t| render_table(t, args.format.into()))
        .collect();
    println!("{}", blocks.join("\n"));
    Ok(0)
}
