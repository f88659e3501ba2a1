use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use reassembly_core::diagnostics::{self, TheoryReport};
use reassembly_core::generator::{self, InitScheme, TrainConfig};
use reassembly_core::ordering::{self, Ordering, SeedStrategy};
use reassembly_core::{model, Census, Dataset, Solution, Target, DEFAULT_BLOCKS};
use serde_json::json;

use crate::io::{self, IoError, SEALED_FILE};
use crate::pipeline::{self, SolveOptions, SolveOutcome, EXACT_MSE};

#[derive(Debug, Parser)]
#[command(name = "reassembly", version, about = "Generate and solve shuffled residual MLP puzzles")]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Machine-readable JSON on stdout instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network and write it out as a shuffled instance.
    Generate(GenerateArgs),
    /// Match input projections to output projections.
    Pair(InstanceArgs),
    /// Pair, then produce a seed (and optionally BT) ordering without repair.
    Order(OrderArgs),
    /// Full pipeline down to a verified solution file.
    Solve(SolveArgs),
    /// Score a solution against the recorded predictions.
    Verify(VerifyArgs),
    /// Trace, dominance and isometry diagnostics for an assembly.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output directory; must not exist or be empty.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_BLOCKS)]
    pub blocks: usize,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = 10_000)]
    pub rows: usize,
    #[arg(long, default_value_t = TrainConfig::default().lr)]
    pub lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    pub batch_size: usize,
    /// Seed of the piece relabeling (default: `--seed`).
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = InitArg::NearIdentity)]
    pub init: InitArg,
    /// Mean per-block contraction of the near-identity init.
    #[arg(long, default_value_t = TrainConfig::default().contraction)]
    pub contraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    NearIdentity,
    Gaussian,
}

#[derive(Debug, Args)]
pub struct InstanceArgs {
    /// Instance directory.
    #[arg(long)]
    pub instance: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SeedArg {
    DeltaNorm,
    FrobeniusOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct OrderingArgs {
    #[arg(long, value_enum, default_value_t = SeedArg::DeltaNorm)]
    pub seed_strategy: SeedArg,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub use_bt: Switch,
    /// Rows used for swap-gap comparisons.
    #[arg(long, default_value_t = ordering::DEFAULT_N_CMP)]
    pub n_cmp: usize,
    #[arg(long, default_value_t = ordering::DEFAULT_TEMPERATURE)]
    pub temperature: f64,
}

#[derive(Debug, Args)]
pub struct OrderArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub ordering: OrderingArgs,
    /// Where to write the unrepaired solution.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub ordering: OrderingArgs,
    #[arg(long, default_value_t = ordering::DEFAULT_MAX_ROUNDS)]
    pub max_rounds: usize,
    /// Solution file (default: `<instance>/solution.json`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of repair rounds: round, swaps, mse, cumulative_swaps.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Solution to score.
    #[arg(long)]
    pub solution: Option<PathBuf>,
    /// Use the sealed solution; with `--solution`, also require the two to
    /// describe the same assembly.
    #[arg(long)]
    pub against_sealed: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Assembly to analyse (default: solve the instance first).
    #[arg(long)]
    pub solution: Option<PathBuf>,
    #[arg(long, conflicts_with = "solution")]
    pub against_sealed: bool,
    /// Directory for `theory.json` and `blocks.csv` (default: `<instance>/report`).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Monte-Carlo trials for the random baseline.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    /// Verification failed, or another runtime error.
    Failure,
    /// The solver did not reach an exact reassembly.
    Unconverged,
    /// An input file is malformed or unreadable.
    Format,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::Failure => 1,
            ExitStatus::Unconverged => 2,
            ExitStatus::Format => 3,
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Core(#[from] reassembly_core::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn status(&self) -> ExitStatus {
        use reassembly_core::Error as E;
        match self {
            CliError::Io(_) => ExitStatus::Format,
            CliError::Core(
                E::PieceShape { .. }
                | E::BiasLength { .. }
                | E::Census { .. }
                | E::DuplicateId(_)
                | E::UnknownId(_)
                | E::Solution(_)
                | E::Dataset(_),
            ) => ExitStatus::Format,
            _ => ExitStatus::Failure,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

pub fn run(cli: Cli) -> ExitStatus {
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitStatus::Failure;
        }
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let json = cli.json;
    let result = match cli.command {
        Command::Generate(a) => generate(&a, json),
        Command::Pair(a) => pair(&a, json),
        Command::Order(a) => order(&a, json),
        Command::Solve(a) => solve(&a, json),
        Command::Verify(a) => verify(&a, json),
        Command::Report(a) => report(&a, json),
    };
    match result {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            e.status()
        }
    }
}

/// Writes the result to stdout. A closed pipe (e.g. `| head`) is not an error.
fn emit(json: bool, value: serde_json::Value, text: impl FnOnce() -> String) {
    use std::io::Write;
    let body = if json {
        serde_json::to_string_pretty(&value).expect("json value") + "\n"
    } else {
        text()
    };
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(body.as_bytes()).and_then(|()| out.flush());
}

fn generate(a: &GenerateArgs, json: bool) -> CliResult<ExitStatus> {
    if a.out.exists() && fs::read_dir(&a.out).map(|mut d| d.next().is_some()).unwrap_or(true) {
        return Err(CliError::Usage(format!("{} exists and is not empty", a.out.display())));
    }
    if a.rows == 0 {
        return Err(CliError::Usage(String::from("--rows must be at least 1")));
    }
    let cfg = TrainConfig {
        blocks: a.blocks,
        epochs: a.epochs,
        lr: a.lr,
        batch_size: a.batch_size,
        seed: a.seed,
        init: match a.init {
            InitArg::NearIdentity => InitScheme::NearIdentity,
            InitArg::Gaussian => InitScheme::Gaussian,
        },
        contraction: a.contraction,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    let data = generator::synthesize_dataset(a.rows, a.seed)?;
    let quiet = json;
    let trained = generator::train_with_progress(&cfg, &data, |epoch, loss| {
        if !quiet && (epoch % 10 == 0 || epoch == cfg.epochs) {
            eprintln!("epoch {epoch}/{}: loss {loss:.6e}", cfg.epochs);
        }
    })?;
    let inst = generator::shuffle_and_export(&trained.network, &trained.dataset, a.shuffle_seed.unwrap_or(a.seed))?;
    io::write_instance(&inst, &a.out)?;
    let census = diagnostics::trace_report(trained.network.blocks());
    emit(
        json,
        json!({
            "out": a.out,
            "blocks": a.blocks,
            "rows": a.rows,
            "epochs": a.epochs,
            "train_mse": trained.train_mse,
            "negative_traces": census.negative,
            "traces": census.traces,
        }),
        || {
            format!(
                "wrote {}\ntrain MSE vs truth: {:.6e}\nnegative traces: {}/{}\n",
                a.out.display(),
                trained.train_mse,
                census.negative,
                a.blocks
            )
        },
    );
    Ok(ExitStatus::Success)
}

fn load(args: &InstanceArgs) -> CliResult<io::Instance> {
    Ok(io::read_instance(&args.instance)?)
}

fn options(o: &OrderingArgs) -> CliResult<SolveOptions> {
    if o.n_cmp == 0 {
        return Err(CliError::Usage(String::from("--n-cmp must be at least 1")));
    }
    if !(o.temperature > 0.0) || !o.temperature.is_finite() {
        return Err(CliError::Usage(String::from("--temperature must be positive")));
    }
    Ok(SolveOptions {
        seed_strategy: match o.seed_strategy {
            SeedArg::DeltaNorm => SeedStrategy::DeltaNorm,
            SeedArg::FrobeniusOut => SeedStrategy::FrobeniusOut,
        },
        use_bt: o.use_bt == Switch::On,
        n_cmp: o.n_cmp,
        temperature: o.temperature,
        ..SolveOptions::default()
    })
}

fn pair(a: &InstanceArgs, json: bool) -> CliResult<ExitStatus> {
    let inst = load(a)?;
    let (_, rep) = pipeline::pair(&inst.census)?;
    let pairs: Vec<_> = rep
        .pairs
        .iter()
        .map(|(i, o, s)| json!({"in_id": i.0, "out_id": o.0, "score": s}))
        .collect();
    emit(
        json,
        json!({
            "pairs": pairs,
            "min_matched": rep.min_matched,
            "max_unmatched": rep.max_unmatched,
            "gap": rep.gap,
            "total_score": rep.total_score,
            "greedy_agrees": rep.greedy_agrees,
        }),
        || {
            let mut s = String::new();
            for (i, o, score) in &rep.pairs {
                s += &format!("{:>3} -> {:>3}  {score:.4}\n", i.0, o.0);
            }
            s += &format!(
                "matched >= {:.4}, unmatched <= {:.4}, gap {:.4}, greedy {}\n",
                rep.min_matched,
                rep.max_unmatched,
                rep.gap,
                if rep.greedy_agrees { "agrees" } else { "differs" }
            );
            s
        },
    );
    Ok(ExitStatus::Success)
}

fn order(a: &OrderArgs, json: bool) -> CliResult<ExitStatus> {
    let inst = load(&a.instance)?;
    let opts = options(&a.ordering)?;
    let (blocks, _) = pipeline::pair(&inst.census)?;
    let (seed, seed_mse, start, bt) = pipeline::initial_order(&blocks, &inst.census, &inst.dataset, &opts)?;
    let solution = solution_of(&blocks, &start, &inst.census);
    if let Some(out) = &a.out {
        io::write_solution(&solution, out)?;
    }
    emit(
        json,
        json!({
            "seed": seed.sequence,
            "seed_mse": seed_mse,
            "bt": bt,
            "order": start.sequence,
        }),
        || {
            let mut s = format!("seed MSE: {seed_mse:.6e}\n");
            if let Some(bt) = &bt {
                s += &format!(
                    "BT: {} iterations, MSE {:.6e}, {} violations in {} cycles over {} triples\n",
                    bt.iterations, bt.mse, bt.violations, bt.cycles, bt.triples
                );
            }
            s
        },
    );
    Ok(ExitStatus::Success)
}

fn solution_of(blocks: &[reassembly_core::PairedBlock], order: &Ordering, census: &Census) -> Solution {
    Solution {
        pairs: blocks.iter().map(|b| (b.input().id(), b.output().id())).collect(),
        order: order.sequence.clone(),
        last_id: census.last.id(),
    }
}

fn write_trace(outcome: &SolveOutcome, path: &Path) -> CliResult<()> {
    let csv_err = |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["round", "swaps", "mse", "cumulative_swaps"]).map_err(csv_err)?;
    for r in outcome.rounds() {
        w.write_record([
            r.round.to_string(),
            r.swaps.to_string(),
            format!("{:.16e}", r.mse),
            r.cumulative_swaps.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

fn solve(a: &SolveArgs, json: bool) -> CliResult<ExitStatus> {
    let inst = load(&a.instance)?;
    let opts = SolveOptions {
        max_rounds: a.max_rounds,
        ..options(&a.ordering)?
    };
    let outcome = pipeline::solve(&inst.census, &inst.dataset, &opts)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| a.instance.instance.join("solution.json"));
    io::write_solution(&outcome.solution, &out)?;
    if let Some(trace) = &a.trace {
        write_trace(&outcome, trace)?;
    }
    let exact = outcome.exact();
    let rounds = outcome.rounds();
    emit(
        json,
        json!({
            "solution": out,
            "pairing_gap": outcome.pairing.gap,
            "min_matched": outcome.pairing.min_matched,
            "max_unmatched": outcome.pairing.max_unmatched,
            "seed_mse": outcome.seed_mse,
            "bt": outcome.bt,
            "repairs": outcome.repairs,
            "final_mse": outcome.final_mse,
            "exact": exact,
            "flat": outcome.solution.flat().iter().map(|id| id.0).collect::<Vec<_>>(),
        }),
        || {
            let mut s = format!(
                "pairing: matched >= {:.4}, unmatched <= {:.4}, gap {:.4}\n",
                outcome.pairing.min_matched, outcome.pairing.max_unmatched, outcome.pairing.gap
            );
            s += &format!("seed MSE: {:.6e}\n", outcome.seed_mse);
            if let Some(bt) = &outcome.bt {
                s += &format!(
                    "BT MSE: {:.6e} ({} violations, {} iterations)\n",
                    bt.mse, bt.violations, bt.iterations
                );
            }
            for r in &rounds {
                s += &format!(
                    "round {:>3}: {:>3} swaps, MSE {:.6e}, total {}\n",
                    r.round, r.swaps, r.mse, r.cumulative_swaps
                );
            }
            s += &format!("final MSE: {:.6e} ({})\n", outcome.final_mse, if exact { "exact" } else { "not exact" });
            s += &format!("wrote {}\n", out.display());
            s
        },
    );
    Ok(if exact {
        ExitStatus::Success
    } else {
        ExitStatus::Unconverged
    })
}

fn verify(a: &VerifyArgs, json: bool) -> CliResult<ExitStatus> {
    let sealed_path = a.instance.instance.join(SEALED_FILE);
    let (solution, sealed) = match (&a.solution, a.against_sealed) {
        (Some(p), false) => (io::read_solution(p)?, None),
        (Some(p), true) => (io::read_solution(p)?, Some(io::read_solution(&sealed_path)?)),
        (None, true) => (io::read_solution(&sealed_path)?, None),
        (None, false) => {
            return Err(CliError::Usage(String::from(
                "give --solution, --against-sealed, or both",
            )))
        }
    };
    let inst = load(&a.instance)?;
    let (mse_pred, mse_truth) = score(&solution, &inst.census, &inst.dataset)?;
    let matches = sealed.as_ref().map(|s| s.same_assembly(&solution));
    let ok = mse_pred <= EXACT_MSE && matches.unwrap_or(true);
    emit(
        json,
        json!({
            "mse_pred": mse_pred,
            "mse_truth": mse_truth,
            "matches_sealed": matches,
            "ok": ok,
        }),
        || {
            let mut s = format!("MSE vs pred: {mse_pred:.6e}\nMSE vs true: {mse_truth:.6e}\n");
            if let Some(m) = matches {
                s += &format!("same assembly as sealed: {m}\n");
            }
            s
        },
    );
    Ok(if ok { ExitStatus::Success } else { ExitStatus::Failure })
}

fn all_pieces(census: &Census) -> Vec<reassembly_core::Piece> {
    census
        .inputs
        .iter()
        .chain(&census.outputs)
        .chain(std::iter::once(&census.last))
        .cloned()
        .collect()
}

/// MSE of an assembly against `pred` and against `true`.
pub fn score(solution: &Solution, census: &Census, ds: &Dataset) -> reassembly_core::Result<(f64, f64)> {
    let net = solution.assemble(&all_pieces(census))?;
    Ok((
        model::mse(&net, ds, ds.len(), Target::Pred)?,
        model::mse(&net, ds, ds.len(), Target::Truth)?,
    ))
}

fn report(a: &ReportArgs, json: bool) -> CliResult<ExitStatus> {
    let inst = load(&a.instance)?;
    let solution = if let Some(p) = &a.solution {
        io::read_solution(p)?
    } else if a.against_sealed {
        io::read_solution(&a.instance.instance.join(SEALED_FILE))?
    } else {
        pipeline::solve(&inst.census, &inst.dataset, &SolveOptions::default())?.solution
    };
    let net = solution.assemble(&all_pieces(&inst.census))?;
    let rep = diagnostics::theory_report(net.blocks(), &inst.dataset, a.trials, a.seed)?;
    let dir = a.out_dir.clone().unwrap_or_else(|| a.instance.instance.join("report"));
    fs::create_dir_all(&dir).map_err(|source| IoError::Io {
        path: dir.clone(),
        source,
    })?;
    let value = theory_json(&rep);
    let theory = dir.join("theory.json");
    fs::write(&theory, serde_json::to_string_pretty(&value).expect("json value") + "\n").map_err(|source| {
        IoError::Io {
            path: theory.clone(),
            source,
        }
    })?;
    write_block_table(&rep, &dir.join("blocks.csv"))?;
    emit(json, value, || {
        format!(
            "negative traces: {}/{}\ntrace range: [{:.4}, {:.4}]\nown-pair dominance: [{:.4}, {:.4}]\nseparation gap: {:.4}\nrandom baseline: {:.4} ± {:.4}\nmedian isometry residual: {:.4e}\nwrote {}\n",
            rep.negative_traces,
            rep.traces.len(),
            min(&rep.traces),
            max(&rep.traces),
            min(&rep.dominance),
            max(&rep.dominance),
            rep.separation_gap,
            rep.baseline.mean,
            rep.baseline.std_error,
            rep.median_isometry_residual,
            dir.display()
        )
    });
    Ok(ExitStatus::Success)
}

fn min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn theory_json(rep: &TheoryReport) -> serde_json::Value {
    json!({
        "traces": rep.traces,
        "negative_traces": rep.negative_traces,
        "frobenius": rep.frobenius,
        "dominance": rep.dominance,
        "relu_fraction": rep.relu_fraction,
        "isometry_residual": rep.isometry_residual,
        "median_isometry_residual": rep.median_isometry_residual,
        "max_decomposition_error": rep.max_decomposition_error,
        "separation_gap": rep.separation_gap,
        "baseline": {
            "mean": rep.baseline.mean,
            "std": rep.baseline.std,
            "std_error": rep.baseline.std_error,
            "trials": rep.baseline.trials,
        },
    })
}

fn write_block_table(rep: &TheoryReport, path: &Path) -> CliResult<()> {
    let csv_err = |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["position", "trace", "frobenius", "dominance", "relu_fraction", "isometry_residual"])
        .map_err(csv_err)?;
    for k in 0..rep.traces.len() {
        w.write_record([
            k.to_string(),
            format!("{:.16e}", rep.traces[k]),
            format!("{:.16e}", rep.frobenius[k]),
            format!("{:.16e}", rep.dominance[k]),
            format!("{:.16e}", rep.relu_fraction[k]),
            format!("{:.16e}", rep.isometry_residual[k]),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}
