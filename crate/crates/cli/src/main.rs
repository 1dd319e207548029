use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sar_core::branching::BranchingParams;
use sar_core::exposure::{select_seeds_with, ForumLog, QualityPolicy, SeedRanking};
use sar_core::graph::{regular_graph, tree_graph};
use sar_core::interventions::evaluate_plan;
use sar_core::io::{fmt_num, read_posts, read_views, round_sig, write_summary_json, write_trajectory_csv, write_transitions_csv};
use sar_core::sim::{run, run_replicas};
use thiserror::Error;

mod scenario;

use scenario::{load_plan, Scenario};

/// Exit code 2 for usage/validation problems, 1 for data and runtime ones.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl From<sar_core::Error> for CliError {
    fn from(e: sar_core::Error) -> Self {
        use sar_core::Error as E;
        match e {
            E::Config(_) | E::FanOutTooLarge { .. } | E::ProbabilityOutOfRange(_) | E::NodeLimitExceeded { .. } | E::ZeroK => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "sar", version, about = "Susceptible/Affected/Removed influence diffusion toolkit")]
struct Cli {
    /// Significant digits in printed numbers, or `full`.
    #[arg(long, global = true, default_value = "6", value_parser = parse_precision)]
    precision: Precision,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy)]
struct Precision(Option<usize>);

fn parse_precision(s: &str) -> Result<Precision, String> {
    if s == "full" {
        return Ok(Precision(None));
    }
    match s.parse::<usize>() {
        Ok(d) if (1..=17).contains(&d) => Ok(Precision(Some(d))),
        _ => Err(format!("expected 1..=17 or `full`, got {s:?}")),
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Threshold analysis of the idealised wave process.
    Analyze {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        k: u32,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        /// Last wave index for the expected-size table.
        #[arg(long, default_value_t = 10)]
        waves: u32,
    },
    /// Run a scenario and write trajectory, transitions and summary files.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        par: Parallel,
    },
    /// Exposure index and reputation per student from forum logs.
    Score(ScoreArgs),
    /// Compare a scenario with and without an intervention plan.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's `plan` entry.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[command(flatten)]
        par: Parallel,
    },
    /// Write a synthetic graph in edge-list format.
    Generate {
        #[command(subcommand)]
        kind: GenerateKind,
    },
}

#[derive(Debug, Args)]
struct Parallel {
    /// Worker threads for replicas; results do not depend on it.
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyKind {
    Votes,
    Reputation,
    Label,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RankBy {
    Fraction,
    Count,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    posts: PathBuf,
    #[arg(long)]
    views: PathBuf,
    #[arg(long, value_enum, default_value = "votes")]
    policy: PolicyKind,
    /// Vote or reputation threshold for a Good post (default 1).
    #[arg(long)]
    threshold: Option<f64>,
    /// Also list the top-K seed students.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, value_enum, default_value = "fraction")]
    rank_by: RankBy,
    /// First view week counted (inclusive).
    #[arg(long, requires = "window_hi")]
    window_lo: Option<u32>,
    /// Last view week counted (inclusive).
    #[arg(long, requires = "window_lo")]
    window_hi: Option<u32>,
}

#[derive(Debug, Subcommand)]
enum GenerateKind {
    Regular {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Tree {
        #[arg(long)]
        depth: u32,
        #[arg(long)]
        k: u32,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `sar --help` for usage");
            ExitCode::from(2)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let digits = cli.precision.0;
    match cli.command {
        Command::Analyze { p, k, tol, waves } => analyze(p, k, tol, waves, digits),
        Command::Simulate { scenario, out, par } => with_threads(par, || simulate(&scenario, &out, digits)),
        Command::Score(args) => score(&args, digits),
        Command::Plan { scenario, plan, par } => with_threads(par, || plan_cmd(&scenario, plan.as_deref(), digits)),
        Command::Generate { kind } => generate(kind),
    }
}

fn with_threads<T>(par: Parallel, f: impl FnOnce() -> Result<T, CliError> + Send) -> Result<T, CliError>
where
    T: Send,
{
    match par.parallel {
        None => f(),
        Some(0) => Err(CliError::Usage("--parallel must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Data(e.to_string()))?
            .install(f),
    }
}

fn analyze(p: f64, k: u32, tol: f64, waves: u32, digits: Option<usize>) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(CliError::Usage(format!("--p {p} must lie in [0, 1]")));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(CliError::Usage("--tol must be positive".into()));
    }
    let params = BranchingParams::new(p, k)?;
    let mut out = io::stdout().lock();
    writeln!(out, "R0={}", fmt_num(params.reproduction_number(), digits))?;
    writeln!(out, "criticality={}", params.classify())?;
    writeln!(out, "q={}", fmt_num(params.extinction_probability(tol), digits))?;
    writeln!(out, "wave,expected_size")?;
    for n in 0..=waves {
        writeln!(out, "{n},{}", fmt_num(params.expected_wave_size(n), digits))?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn simulate(scenario: &Path, out: &Path, digits: Option<usize>) -> Result<(), CliError> {
    let sc = Scenario::load(scenario)?;
    let prep = sc.prepare()?;
    let traj = run(&prep.graph, &prep.seeds, &sc.sim)?;
    let summary = run_replicas(&prep.graph, &prep.seeds, &sc.sim)?;
    fs::create_dir_all(out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    let mut w = create(&out.join("trajectory.csv"))?;
    write_trajectory_csv(&traj, &mut w)?;
    w.flush()?;
    let mut w = create(&out.join("transitions.csv"))?;
    write_transitions_csv(&traj, &mut w)?;
    w.flush()?;
    let mut w = create(&out.join("summary.json"))?;
    write_summary_json(&summary, digits, &mut w)?;
    w.flush()?;
    println!(
        "mean_final_removed={} q05={} q50={} q95={} extinct_fraction={} replicas={}",
        fmt_num(summary.mean_final_removed, digits),
        fmt_num(summary.q05, digits),
        fmt_num(summary.q50, digits),
        fmt_num(summary.q95, digits),
        fmt_num(summary.extinct_fraction, digits),
        summary.replicas
    );
    Ok(())
}

fn score(args: &ScoreArgs, digits: Option<usize>) -> Result<(), CliError> {
    let open = |p: &Path| {
        File::open(p)
            .map(BufReader::new)
            .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
    };
    let posts = read_posts(open(&args.posts)?)?;
    let views = read_views(open(&args.views)?)?;
    let policy = match args.policy {
        PolicyKind::Votes => {
            let t = args.threshold.unwrap_or(1.0);
            if t.fract() != 0.0 || !t.is_finite() {
                return Err(CliError::Usage(format!("vote threshold {t} must be an integer")));
            }
            QualityPolicy::ByVotes { threshold: t as i64 }
        }
        PolicyKind::Reputation => QualityPolicy::ByAuthorReputation {
            threshold: args.threshold.unwrap_or(1.0),
        },
        PolicyKind::Label => QualityPolicy::ByLabel,
    };
    let window = args.window_lo.zip(args.window_hi);
    if window.is_some_and(|(lo, hi)| lo > hi) {
        return Err(CliError::Usage("--window-lo must not exceed --window-hi".into()));
    }
    let log = ForumLog::new(posts, views)?;
    let table = log.exposure_table(policy, window)?;
    let mut out = io::stdout().lock();
    writeln!(out, "student,positive,negative,views_counted,reputation")?;
    for row in &table {
        let e = &row.exposure;
        writeln!(
            out,
            "{},{},{},{},{}",
            e.student,
            fmt_num(e.positive, digits),
            fmt_num(e.negative, digits),
            e.views_counted,
            fmt_num(row.reputation, digits)
        )?;
    }
    if let Some(k) = args.seeds {
        let ranking = match args.rank_by {
            RankBy::Fraction => SeedRanking::BadFraction,
            RankBy::Count => SeedRanking::BadCount,
        };
        let seeds = select_seeds_with(&log.posts, policy, k, ranking)?;
        writeln!(out)?;
        writeln!(out, "rank,seed")?;
        for (i, s) in seeds.iter().enumerate() {
            writeln!(out, "{},{s}", i + 1)?;
        }
    }
    Ok(())
}

fn plan_cmd(scenario: &Path, plan: Option<&Path>, digits: Option<usize>) -> Result<(), CliError> {
    let sc = Scenario::load(scenario)?;
    let path = plan
        .map(Path::to_path_buf)
        .or_else(|| sc.plan_path())
        .ok_or_else(|| CliError::Usage("no plan: pass --plan or set `plan` in the scenario".into()))?;
    let plan = load_plan(&path)?;
    let prep = sc.prepare()?;
    let e = evaluate_plan(&prep.graph, &prep.seeds, &sc.sim, &plan)?;
    let value = serde_json::json!({
        "baseline_mean_removed": round_sig(e.baseline_mean_removed, digits),
        "intervened_mean_removed": round_sig(e.intervened_mean_removed, digits),
        "delta": round_sig(e.delta, digits),
        "baseline_R0_estimate": round_sig(e.baseline_r0_estimate, digits),
        "intervened_R0_estimate": round_sig(e.intervened_r0_estimate, digits),
    });
    let text = serde_json::to_string_pretty(&value).map_err(|e| CliError::Data(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn generate(kind: GenerateKind) -> Result<(), CliError> {
    let (g, out, root) = match kind {
        GenerateKind::Regular { n, k, p, seed, out } => (regular_graph(n, k, p, seed)?, out, None),
        GenerateKind::Tree { depth, k, p, out } => {
            let (g, root) = tree_graph(depth, k, p)?;
            (g, out, Some(root))
        }
    };
    let mut w = create(&out)?;
    g.write_edge_list(&mut w)?;
    w.flush()?;
    print!("nodes={} edges={}", g.node_count(), g.edge_count());
    if let Some(r) = root {
        print!(" root={r}");
    }
    println!();
    Ok(())
}
