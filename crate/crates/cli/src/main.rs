use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use taletiles::evolution::TargetPlan;
use taletiles::narrative::NarratorMode;
use taletiles::{
    canonical_generic_set, convergence_experiment, count_solutions_bruteforce, count_solutions_fast, load_tileset,
    EvolutionConfig, NarratorConfig, Objective, RuleNode, TileSet,
};
use taletiles_service::{EvolutionSettings, ServiceConfig};

mod play;

#[derive(Parser)]
#[command(name = "taletiles", version, about = "Adaptive narrative tile puzzles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the rule generator and print one JSON line per run plus a summary.
    Evolve(EvolveArgs),
    /// Count the five-tile sets a rule accepts.
    Count(CountArgs),
    /// Play a narrated game in the terminal.
    Play(PlayArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Evaluator {
    Count,
    Entropy,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Narrator {
    Stub,
    Remote,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Theme {
    Animals,
    Generic,
}

impl Theme {
    fn as_str(self) -> &'static str {
        match self {
            Theme::Animals => "animals",
            Theme::Generic => "generic",
        }
    }
}

#[derive(clap::Args)]
struct GaArgs {
    #[arg(long, default_value_t = 100)]
    pop: usize,
    #[arg(long, default_value_t = 0.5)]
    mutation: f64,
    #[arg(long = "max-gen", default_value_t = 50)]
    max_gen: usize,
    #[arg(long, default_value_t = 10)]
    elite: usize,
    #[arg(long, default_value_t = 2)]
    tournament: usize,
}

impl GaArgs {
    fn settings(&self) -> EvolutionSettings {
        EvolutionSettings {
            population_size: self.pop,
            mutation_rate: self.mutation,
            max_generations: self.max_gen,
            elite_count: self.elite,
            tournament_size: self.tournament,
        }
    }
}

#[derive(clap::Args)]
struct EvolveArgs {
    /// Solution count (or entropy in bits) to aim for, or `random` for a
    /// uniform target per run.
    #[arg(long)]
    target: String,
    #[command(flatten)]
    ga: GaArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tile set JSON; the canonical 30-tile set when omitted.
    #[arg(long)]
    tiles: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[arg(long, value_enum, default_value_t = Evaluator::Count)]
    evaluator: Evaluator,
    /// Worker threads for fitness evaluation. Output does not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(clap::Args)]
struct CountArgs {
    /// Rule JSON file.
    #[arg(long)]
    rules: PathBuf,
    #[arg(long)]
    tiles: Option<PathBuf>,
    /// Use the brute-force enumeration instead of the fast counter.
    #[arg(long)]
    oracle: bool,
}

#[derive(clap::Args)]
struct PlayArgs {
    #[arg(long, value_enum, default_value_t = Theme::Animals)]
    theme: Theme,
    #[arg(long, default_value_t = 20_000)]
    target: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    ga: GaArgs,
    #[arg(long, value_enum, default_value_t = Narrator::Stub)]
    narrator: Narrator,
    /// TOML narrator settings; environment variables override it.
    #[arg(long)]
    narrator_config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "sessions")]
    data_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Narrator::Stub)]
    narrator: Narrator,
    #[arg(long)]
    narrator_config: Option<PathBuf>,
    /// Built play UI to serve at the root.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    /// Browser origin allowed to call the API; repeatable, `*` for any.
    #[arg(long = "cors-origin")]
    cors_origins: Vec<String>,
    #[command(flatten)]
    ga: GaArgs,
    #[arg(long, default_value_t = 0.5)]
    next_target_factor: f64,
    #[arg(long, default_value_t = 50)]
    next_target_floor: u64,
}

fn tiles(path: &Option<PathBuf>) -> Result<TileSet> {
    match path {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            load_tileset(&text).with_context(|| format!("loading {}", path.display()))
        }
        None => Ok(canonical_generic_set()),
    }
}

fn narrator(mode: Narrator, file: &Option<PathBuf>) -> Result<NarratorConfig> {
    let mut config = match file {
        Some(path) => NarratorConfig::from_file(path)?,
        None => NarratorConfig::default(),
    }
    .with_env()?;
    config.mode = match mode {
        Narrator::Stub => NarratorMode::Stub,
        Narrator::Remote => NarratorMode::Remote,
    };
    Ok(config)
}

fn usage_error(message: String) -> ! {
    Cli::command().error(ErrorKind::ValueValidation, message).exit()
}

fn evolve(args: EvolveArgs) -> Result<()> {
    let tiles = tiles(&args.tiles)?;
    let plan = match (args.target.as_str(), args.evaluator) {
        ("random", Evaluator::Count) => TargetPlan::UniformCount,
        ("random", Evaluator::Entropy) => TargetPlan::UniformEntropy,
        (n, Evaluator::Count) => match n.parse() {
            Ok(target) => TargetPlan::Fixed(Objective::Count { target }),
            Err(_) => usage_error(format!("--target expects a solution count or `random`, got {n:?}")),
        },
        (n, Evaluator::Entropy) => match n.parse::<f64>() {
            Ok(target) if target.is_finite() => TargetPlan::Fixed(Objective::Entropy { target }),
            _ => usage_error(format!("--target expects an entropy in bits or `random`, got {n:?}")),
        },
    };
    let placeholder = match plan {
        TargetPlan::Fixed(objective) => objective,
        TargetPlan::UniformCount => Objective::Count { target: 0 },
        TargetPlan::UniformEntropy => Objective::Entropy { target: 0.0 },
    };
    let base = EvolutionConfig { objective: placeholder, ..args.ga.settings().config(0, args.seed) };
    if let Err(e) = base.validate(&tiles) {
        usage_error(e.to_string());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.threads.unwrap_or(0)).build()?;
    let started = Instant::now();
    let report = pool.install(|| convergence_experiment(args.runs, args.seed, plan, &base, &tiles, tiles.tiles()))?;
    let mut stdout = io::stdout().lock();
    stdout.write_all(report.to_json_lines().as_bytes())?;
    stdout.flush()?;
    let s = &report.summary;
    eprintln!(
        "{} runs in {:.1}s: accuracy {:.5} ± {:.5}, generations {:.1} ± {:.1}, {:.0}% of runs at 0.999 or better",
        s.runs,
        started.elapsed().as_secs_f64(),
        s.mean_accuracy,
        s.stddev_accuracy,
        s.mean_generations,
        s.stddev_generations,
        s.share_within_0_999 * 100.0
    );
    Ok(())
}

fn count(args: CountArgs) -> Result<()> {
    let tiles = tiles(&args.tiles)?;
    let text = std::fs::read_to_string(&args.rules).with_context(|| format!("reading {}", args.rules.display()))?;
    let rule = RuleNode::from_json(&text).with_context(|| format!("parsing {}", args.rules.display()))?;
    let started = Instant::now();
    let report =
        if args.oracle { count_solutions_bruteforce(&rule, &tiles)? } else { count_solutions_fast(&rule, &tiles)? };
    println!("{}", report.solution_count);
    eprintln!(
        "{} of {} sets ({}, {:.3}s)",
        report.solution_count,
        report.total_sets,
        if args.oracle { "brute force" } else { "fast" },
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let config = ServiceConfig {
        narrator: narrator(args.narrator, &args.narrator_config)?,
        evolution: args.ga.settings(),
        next_target_factor: args.next_target_factor,
        next_target_floor: args.next_target_floor,
        static_dir: args.static_dir,
        cors_origins: args.cors_origins,
        ..ServiceConfig::new(args.data_dir)
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let address = format!("{}:{}", args.host, args.port);
        let listener = match tokio::net::TcpListener::bind(&address).await {
            Ok(listener) => listener,
            Err(e) if e.kind() == io::ErrorKind::AddrInUse => {
                bail!("cannot listen on {address}: the port is already in use")
            }
            Err(e) => bail!("cannot listen on {address}: {e}"),
        };
        eprintln!("listening on http://{}", listener.local_addr()?);
        taletiles_service::serve(listener, config).await?;
        Ok(())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evolve(args) => evolve(args),
        Command::Count(args) => count(args),
        Command::Play(args) => {
            let config = narrator(args.narrator, &args.narrator_config).map(|narrator| ServiceConfig {
                narrator,
                evolution: args.ga.settings(),
                ..ServiceConfig::new(std::env::temp_dir())
            });
            config.and_then(|config| {
                let stdin = io::stdin().lock();
                play::run(args.theme.as_str(), args.target, args.seed, &config, stdin, io::stdout().lock())
            })
        }
        Command::Serve(args) => serve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
