use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use reveal_core::belief::{self, BuildOptions};
use reveal_core::cassandra::{self, ParseError};
use reveal_core::model::{self, underlying_mdp};
use reveal_core::pipeline::{self, SolveOptions, SupportStrategy};
use reveal_core::sim::{self, UniformRandom};
use reveal_core::{Error, Pomdp, DEFAULT_NODE_CAP};
use serde_json::{json, Value};

const EXIT_INVALID: u8 = 1;
const EXIT_USAGE: u8 = 64;
const EXIT_PARSE: u8 = 65;
const EXIT_CAP: u8 = 70;

/// Qualitative analysis of POMDPs with parity objectives.
#[derive(Parser)]
#[command(name = "reveal", version)]
struct Cli {
    /// Cap on explored belief supports; overrides REVEAL_NODE_CAP.
    #[arg(long, global = true)]
    node_cap: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model invariants.
    Validate { file: PathBuf },
    /// Decide whether the model is strongly / weakly revealing.
    Classify { file: PathBuf },
    /// Decide almost-sure parity via the belief-support MDP.
    Solve {
        file: PathBuf,
        #[arg(long)]
        strategy_out: Option<PathBuf>,
    },
    /// Monte-Carlo runs with the bad-event metric.
    Simulate(SimulateArgs),
    /// Add a revealing signal per state.
    TransformSr {
        file: PathBuf,
        #[arg(long, default_value_t = pipeline::DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(short)]
        o: Option<PathBuf>,
    },
    /// Export derived objects.
    Export(ExportArgs),
    /// Generate the exponential-revelation family member `n`.
    GenExp {
        n: usize,
        #[arg(short)]
        o: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SimulateArgs {
    file: PathBuf,
    /// Strategy JSON; solved internally when absent.
    #[arg(long, conflicts_with = "random")]
    strategy: Option<PathBuf>,
    /// Play uniformly at random instead.
    #[arg(long)]
    random: bool,
    #[arg(long, default_value_t = 500)]
    runs: usize,
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

#[derive(Args)]
#[group(skip)]
#[command(group(ArgGroup::new("what").required(true).args(["belief_mdp", "stats", "underlying_mdp"])))]
struct ExportArgs {
    file: PathBuf,
    /// Belief-support MDP as DOT.
    #[arg(long, requires = "dot")]
    belief_mdp: bool,
    #[arg(long)]
    dot: bool,
    /// Belief-support MDP size and revelation distance as JSON.
    #[arg(long)]
    stats: bool,
    /// Root support for --stats (state names, comma separated).
    #[arg(long, value_delimiter = ',', requires = "stats")]
    from: Option<Vec<String>>,
    /// Underlying MDP in Cassandra format.
    #[arg(long)]
    underlying_mdp: bool,
    #[arg(short)]
    o: Option<PathBuf>,
}

/// A failed command: message for stderr and exit status.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NodeCap { .. } => EXIT_CAP,
            _ => EXIT_USAGE,
        };
        Failure::new(code, e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("reveal: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn node_cap(cli: &Cli) -> Result<usize, Failure> {
    if let Some(cap) = cli.node_cap {
        return Ok(cap);
    }
    match std::env::var("REVEAL_NODE_CAP") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::new(EXIT_USAGE, format!("REVEAL_NODE_CAP: not a count: `{v}`"))),
        Err(_) => Ok(DEFAULT_NODE_CAP),
    }
}

fn run(cli: Cli) -> CmdResult {
    let cap = node_cap(&cli)?;
    let opts = SolveOptions { node_cap: cap };
    match cli.command {
        Command::Validate { file } => validate(&file),
        Command::Classify { file } => {
            let pomdp = load(&file)?;
            let v = pipeline::classify(&pomdp, &opts)?;
            let counterexample = v.strong_counterexample.map(|c| {
                json!({
                    "state": pomdp.state_name(c.state),
                    "action": pomdp.action_name(c.action),
                    "next": pomdp.state_name(c.next),
                })
            });
            let witness = v.weak_witness.as_ref().map(|w| {
                json!({
                    "from": pomdp.support_names(&w.from),
                    "escape": pomdp.support_names(&w.escape),
                })
            });
            print_json(&json!({
                "strongly_revealing": v.strongly,
                "weakly_revealing": v.weakly,
                "strong_counterexample": counterexample,
                "weak_witness": witness,
            }));
            Ok(())
        }
        Command::Solve { file, strategy_out } => {
            let pomdp = load(&file)?;
            let v = pipeline::solve(&pomdp, &opts)?;
            if let Some(path) = strategy_out {
                match &v.strategy {
                    Some(s) => write_file(&path, &s.to_json(&pomdp))?,
                    None => eprintln!("reveal: no trusted strategy; {} not written", path.display()),
                }
            }
            print_json(&json!({
                "answer": v.answer.as_str(),
                "regime": v.regime.as_str(),
                "belief_mdp_winning": v.belief_mdp_winning,
                "belief_mdp_nodes": v.belief_mdp_nodes,
            }));
            Ok(())
        }
        Command::Simulate(args) => simulate(args, &opts),
        Command::TransformSr { file, epsilon, o } => {
            let pomdp = load(&file)?;
            let sr = pipeline::transform_sr(&pomdp, epsilon)?;
            emit(o.as_deref(), &cassandra::serialize_pomdp(&sr))
        }
        Command::Export(args) => export(args, cap),
        Command::GenExp { n, o } => {
            let pomdp = belief::gen_exp_family(n)?;
            emit(o.as_deref(), &cassandra::serialize_pomdp(&pomdp))
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn emit(path: Option<&Path>, text: &str) -> CmdResult {
    match path {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn parse_failure(path: &Path, e: ParseError) -> Failure {
    match e {
        ParseError::Invalid(vs) => {
            for v in &vs {
                eprintln!("{}: {v}", path.display());
            }
            Failure::new(EXIT_INVALID, format!("{}: invalid model", path.display()))
        }
        e => Failure::new(EXIT_PARSE, format!("{}:{e}", path.display())),
    }
}

fn load(path: &Path) -> Result<Pomdp, Failure> {
    cassandra::parse_pomdp(&read(path)?).map_err(|e| parse_failure(path, e))
}

fn validate(path: &Path) -> CmdResult {
    let pomdp = cassandra::parse_pomdp_unchecked(&read(path)?).map_err(|e| parse_failure(path, e))?;
    let violations = model::validate(&pomdp);
    if violations.is_empty() {
        println!("valid");
        return Ok(());
    }
    for v in &violations {
        println!("{v}");
    }
    Err(Failure::new(EXIT_INVALID, ""))
}

fn simulate(args: SimulateArgs, opts: &SolveOptions) -> CmdResult {
    let pomdp = load(&args.file)?;
    let batch = if args.random {
        let m = pomdp.num_actions();
        sim::batch_simulate(
            &pomdp,
            || UniformRandom { num_actions: m },
            args.runs,
            args.steps,
            args.seed,
        )
    } else {
        let strategy = match &args.strategy {
            Some(path) => SupportStrategy::from_json(&pomdp, &read(path)?)
                .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))?,
            None => {
                let v = pipeline::solve(&pomdp, opts)?;
                match (v.strategy, v.abstraction_strategy) {
                    (Some(s), _) => s,
                    (None, Some(s)) => {
                        eprintln!(
                            "reveal: warning: answer is {}; using the untrusted belief-MDP strategy",
                            v.answer.as_str()
                        );
                        s
                    }
                    (None, None) => {
                        return Err(Failure::new(
                            EXIT_USAGE,
                            "the belief-support MDP has no winning strategy; pass --strategy or --random",
                        ))
                    }
                }
            }
        };
        sim::batch_simulate(
            &pomdp,
            || pipeline::lift_strategy(&pomdp, &strategy),
            args.runs,
            args.steps,
            args.seed,
        )
    }
    .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;

    if let Some(path) = &args.csv_out {
        let mut csv = String::from("run,step,metric,priority\n");
        for (run, (trace, metric)) in batch.traces.iter().zip(&batch.metrics).enumerate() {
            for (t, (step, m)) in trace.steps.iter().zip(metric).enumerate() {
                csv.push_str(&format!("{run},{},{m},{}\n", t + 1, pomdp.priority(step.state)));
            }
        }
        write_file(path, &csv)?;
    }
    print_json(&json!({
        "runs": args.runs,
        "reached": batch.reached,
        "mean_final_metric": batch.mean_final_metric,
    }));
    Ok(())
}

fn export(args: ExportArgs, cap: usize) -> CmdResult {
    let pomdp = load(&args.file)?;
    let build = BuildOptions { node_cap: cap };
    if args.underlying_mdp {
        return emit(args.o.as_deref(), &cassandra::serialize_mdp(&underlying_mdp(&pomdp)));
    }
    if args.belief_mdp {
        let bm = belief::build_belief_mdp(&pomdp, &build)?;
        return emit(args.o.as_deref(), &belief::to_dot(&pomdp, &bm));
    }
    let root = match &args.from {
        Some(names) => pomdp.support_from_names(names)?,
        None => pomdp.initial_support().clone(),
    };
    if root.is_empty() {
        return Err(Failure::new(EXIT_USAGE, "--from names no states"));
    }
    let bm = belief::build_belief_mdp_from(&pomdp, root, &build)?;
    let stats = json!({
        "nodes": bm.num_nodes(),
        "singletons": belief::reachable_singletons(&bm).len(),
        "revelation_distance": belief::revelation_distance(&bm, 0, false),
    });
    emit(
        args.o.as_deref(),
        &(serde_json::to_string_pretty(&stats).expect("json") + "\n"),
    )
}
