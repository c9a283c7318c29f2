//! `ehwsn`: generate networks, analyze and allocate harvesting resources,
//! simulate, and run comparison sweeps.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ehwsn_core::allocation::{allocate, Scheme};
use ehwsn_core::experiment::{run_sweep, ExperimentConfig, SWEEP_COLUMNS};
use ehwsn_core::profile::ParameterProfile;
use ehwsn_core::topology::{GenerateError, TopologyIoError};
use ehwsn_core::{
    generate_network, load_topology, network_loss, save_topology, simulate, solve_flow,
    uniform_allocation, GenerationConfig, HarvestingAllocation, NetworkTopology, ResourceBudget,
    SimConfig,
};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "ehwsn", version, about)]
struct Cli {
    /// Master RNG seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    /// Named parameter profile (overrides the config file).
    #[arg(long, global = true)]
    profile: Option<String>,
    /// Experiment config, TOML or JSON (by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Deploy a random network and write its topology as JSON.
    Generate(GenerateArgs),
    /// Solve the flow equations for one allocation.
    Analyze(AnalyzeArgs),
    /// Compute an allocation with one scheme and its predicted loss.
    Allocate(AllocateArgs),
    /// Monte Carlo run next to the analytic prediction.
    Simulate(SimulateArgs),
    /// Compare schemes over networks and budgets; writes CSV.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    disk_radius: Option<f64>,
    #[arg(long)]
    connectivity_radius: Option<f64>,
    #[arg(long)]
    max_retries: Option<usize>,
    #[arg(long)]
    channel_loss: Option<f64>,
}

#[derive(Args)]
struct BudgetArgs {
    /// Average harvest rate; defaults to the profile's.
    #[arg(long)]
    mu: Option<f64>,
    /// Average capacity; defaults to the profile's.
    #[arg(long)]
    cap: Option<f64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    topology: PathBuf,
    /// Allocation JSON (`mu`, `cap`); uniform over the budget when omitted.
    #[arg(long)]
    allocation: Option<PathBuf>,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Args)]
struct AllocateArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long, default_value = "fair")]
    scheme: Scheme,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    allocation: Option<PathBuf>,
    #[command(flatten)]
    budget: BudgetArgs,
    /// Counted reports.
    #[arg(long, default_value_t = 1_000_000)]
    events: u64,
    /// Discarded reports; a tenth of `--events` by default.
    #[arg(long)]
    warmup: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Topology file; networks are generated when omitted.
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    networks: Option<usize>,
    /// Comma-separated average harvest rates.
    #[arg(long, value_delimiter = ',')]
    mu: Option<Vec<f64>>,
    /// Comma-separated average capacities.
    #[arg(long, value_delimiter = ',')]
    cap: Option<Vec<f64>>,
    /// Random log-uniform budgets per network instead of the grid.
    #[arg(long)]
    random_budgets: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    #[arg(long)]
    channel_loss: Option<f64>,
    /// Reports simulated per row; 0 skips simulation.
    #[arg(long)]
    sim_events: Option<u64>,
    /// Append to an existing CSV with the same header.
    #[arg(long)]
    append: bool,
}

enum CliError {
    Input(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn input(e: impl ToString) -> CliError {
    CliError::Input(e.to_string())
}

fn runtime(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}

type Result<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Input(msg) | CliError::Runtime(msg)) = &e;
            eprintln!("error: {msg}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(profile) = &cli.profile {
        config.profile = profile.clone();
    }
    let profile = config.profile().map_err(input)?;
    let out = cli.output.as_deref();
    match cli.command {
        Command::Generate(args) => cmd_generate(&config, profile, args, out),
        Command::Analyze(args) => cmd_analyze(profile, args, out),
        Command::Allocate(args) => cmd_allocate(&config, profile, args, out),
        Command::Simulate(args) => cmd_simulate(&config, profile, args, out),
        Command::Sweep(args) => cmd_sweep(config, args, out),
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|x| x == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    let config: ExperimentConfig = parsed.map_err(|e| input(format!("{}: {e}", path.display())))?;
    config
        .check()
        .map_err(|e| input(format!("{}: {e}", path.display())))?;
    Ok(config)
}

fn read_topology(path: &Path) -> Result<NetworkTopology> {
    let bytes =
        fs::read(path).map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
    load_topology(&bytes).map_err(|e| match e {
        TopologyIoError::Validation(violations) => {
            let list: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
            input(format!(
                "{}: invalid topology\n{}",
                path.display(),
                list.join("\n")
            ))
        }
        other => input(format!("{}: {other}", path.display())),
    })
}

/// Accepts a bare `{mu, cap}` object or the output of `allocate`.
#[derive(Deserialize)]
struct AllocationFile {
    mu: Vec<f64>,
    cap: Vec<f64>,
}

fn resolve_allocation(
    t: &NetworkTopology,
    profile: ParameterProfile,
    file: Option<&Path>,
    budget: &BudgetArgs,
) -> Result<HarvestingAllocation> {
    match file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
            let a: AllocationFile = serde_json::from_str(&text)
                .map_err(|e| input(format!("{}: {e}", path.display())))?;
            Ok(HarvestingAllocation {
                mu: a.mu,
                cap: a.cap,
            })
        }
        None => uniform_allocation(t.node_count, &resolve_budget(profile, budget)?).map_err(input),
    }
}

fn resolve_budget(profile: ParameterProfile, args: &BudgetArgs) -> Result<ResourceBudget> {
    ResourceBudget::new(
        args.mu.unwrap_or(profile.harvest_rate),
        args.cap.unwrap_or(profile.capacity),
    )
    .map_err(input)
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| runtime(format!("cannot write {}: {e}", path.display()))),
        None => io::stdout().write_all(text.as_bytes()).map_err(runtime),
    }
}

fn to_json(value: &impl Serialize) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
    text.push('\n');
    Ok(text)
}

fn cmd_generate(
    config: &ExperimentConfig,
    profile: ParameterProfile,
    args: GenerateArgs,
    out: Option<&Path>,
) -> Result<()> {
    let g = &config.generation;
    let nodes = args.nodes.unwrap_or(g.nodes);
    if nodes < 2 {
        return Err(input("--nodes must be at least 2"));
    }
    let gen = GenerationConfig {
        node_count: nodes,
        disk_radius: args.disk_radius.unwrap_or(g.disk_radius),
        connectivity_radius: args.connectivity_radius.unwrap_or(g.connectivity_radius),
        rng_seed: config.seed,
        max_retries: args.max_retries.unwrap_or(g.max_retries),
        channel_loss: args
            .channel_loss
            .or(config.channel_loss)
            .unwrap_or(profile.channel_loss),
    };
    let t = generate_network(&gen, &profile.generation_rates(nodes)).map_err(|e| match e {
        GenerateError::DisconnectedNetwork { .. } | GenerateError::InvalidConfig(_) => input(e),
        GenerateError::InvalidRates { .. } => runtime(e),
    })?;
    let depth = t
        .hop_depths()
        .map_err(runtime)?
        .into_iter()
        .max()
        .unwrap_or(0);
    let summary = format!(
        "V={} edges={} max_hop_depth={depth}",
        t.node_count,
        t.routing.link_count()
    );
    write_output(out, &save_topology(&t).map_err(runtime)?)?;
    // Keep stdout clean when it carries the topology itself.
    if out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(())
}

#[derive(Serialize)]
struct AnalysisReport<'a> {
    node_count: usize,
    theta: &'a [f64],
    node_loss: &'a [f64],
    network_loss: f64,
    /// `1 - theta_V / sum(lambda)`; loses precision for tiny losses.
    network_loss_direct: f64,
}

fn cmd_analyze(profile: ParameterProfile, args: AnalyzeArgs, out: Option<&Path>) -> Result<()> {
    let t = read_topology(&args.topology)?;
    let alloc = resolve_allocation(&t, profile, args.allocation.as_deref(), &args.budget)?;
    let flow = solve_flow(&t, &alloc).map_err(input)?;
    let report = AnalysisReport {
        node_count: t.node_count,
        theta: &flow.theta,
        node_loss: &flow.node_loss,
        network_loss: flow.network_loss,
        network_loss_direct: network_loss(&t, &flow).map_err(input)?,
    };
    write_output(out, &to_json(&report)?)
}

#[derive(Serialize)]
struct AllocationReport {
    scheme: Scheme,
    budget: ResourceBudget,
    #[serde(rename = "predicted_PL")]
    predicted_pl: f64,
    mu: Vec<f64>,
    cap: Vec<f64>,
}

fn cmd_allocate(
    config: &ExperimentConfig,
    profile: ParameterProfile,
    args: AllocateArgs,
    out: Option<&Path>,
) -> Result<()> {
    let t = read_topology(&args.topology)?;
    let budget = resolve_budget(profile, &args.budget)?;
    let mut optimizer = config.optimizer.clone();
    optimizer.seed = config.seed;
    optimizer.check().map_err(input)?;
    let alloc = allocate(args.scheme, &t, &budget, &optimizer).map_err(input)?;
    let flow = solve_flow(&t, &alloc).map_err(runtime)?;
    let report = AllocationReport {
        scheme: args.scheme,
        budget,
        predicted_pl: flow.network_loss,
        mu: alloc.mu,
        cap: alloc.cap,
    };
    write_output(out, &to_json(&report)?)?;
    if out.is_some() {
        println!(
            "scheme={} predicted_PL={:e}",
            args.scheme, flow.network_loss
        );
    }
    Ok(())
}

fn cmd_simulate(
    config: &ExperimentConfig,
    profile: ParameterProfile,
    args: SimulateArgs,
    out: Option<&Path>,
) -> Result<()> {
    let t = read_topology(&args.topology)?;
    let alloc = resolve_allocation(&t, profile, args.allocation.as_deref(), &args.budget)?;
    if args.events == 0 {
        return Err(input("--events must be at least 1"));
    }
    let mut sim = SimConfig::new(args.events, config.seed);
    if let Some(w) = args.warmup {
        sim.warmup_events = w;
    }
    let analytic = solve_flow(&t, &alloc).map_err(input)?;
    let outcome = simulate(&t, &alloc, &sim).map_err(input)?;
    let report = serde_json::json!({
        "config": sim,
        "simulation": outcome,
        "analytic": analytic,
    });
    write_output(out, &to_json(&report)?)
}

fn cmd_sweep(mut config: ExperimentConfig, args: SweepArgs, out: Option<&Path>) -> Result<()> {
    if let Some(path) = args.topology {
        config.topology_file = Some(path);
    }
    if let Some(n) = args.nodes {
        config.generation.nodes = n;
    }
    if let Some(n) = args.networks {
        config.networks = n;
    }
    if let Some(mu) = args.mu {
        config.mu_grid = mu;
    }
    if let Some(cap) = args.cap {
        config.cap_grid = cap;
    }
    if args.random_budgets.is_some() {
        config.random_budgets = args.random_budgets;
    }
    if let Some(schemes) = args.schemes {
        config.schemes = schemes;
    }
    if args.channel_loss.is_some() {
        config.channel_loss = args.channel_loss;
    }
    if let Some(n) = args.sim_events {
        config.sim_events = n;
    }
    config.check().map_err(input)?;

    let networks = match &config.topology_file {
        Some(path) => vec![read_topology(path)?],
        None => config.generate_networks().map_err(input)?,
    };
    let rows = run_sweep(&config, &networks);

    let default_path = config.output_dir.as_ref().map(|d| d.join("sweep.csv"));
    let path = out.map(Path::to_path_buf).or(default_path);
    let sink: Box<dyn Write> = match &path {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(runtime)?;
            }
            Box::new(open_csv(path, args.append)?)
        }
        None => Box::new(io::stdout().lock()),
    };
    let appending = args.append && path.as_ref().is_some_and(|p| has_content(p));
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(sink);
    if !appending {
        writer.write_record(SWEEP_COLUMNS).map_err(runtime)?;
    }
    for row in &rows {
        writer.serialize(row).map_err(runtime)?;
    }
    writer.flush().map_err(runtime)?;
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        eprintln!(
            "{failed} of {} rows failed; see the status column",
            rows.len()
        );
    }
    Ok(())
}

fn has_content(path: &Path) -> bool {
    fs::metadata(path).is_ok_and(|m| m.len() > 0)
}

/// Opens the CSV for writing. Appending requires the existing header to
/// match the current schema exactly.
fn open_csv(path: &Path, append: bool) -> Result<fs::File> {
    if append && has_content(path) {
        let file = fs::File::open(path).map_err(runtime)?;
        let mut header = String::new();
        io::BufReader::new(file)
            .read_line(&mut header)
            .map_err(runtime)?;
        if header.trim_end() != SWEEP_COLUMNS.join(",") {
            return Err(input(format!(
                "{}: header does not match the sweep schema, refusing to append",
                path.display()
            )));
        }
        return fs::OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(runtime);
    }
    fs::File::create(path).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}
