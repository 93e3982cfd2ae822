//! `qmeas`: batch driver for measurement experiments on infinite qubit states.

mod config;
mod ops;
mod output;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use qmeas::states::StateSpec;
use qmeas::verify::FamilySpec;
use qmeas::{BitString, ClassicalMlt, DenseCap, MeasurementSystem};

use config::*;
use ops::Output;

#[derive(Parser)]
#[command(name = "qmeas", version, about = "Qubit-wise measurement of infinite qubit states")]
struct Cli {
    /// Dense-matrix cap as a power-of-two exponent (overrides QMEAS_DENSE_CAP).
    #[arg(long, global = true)]
    dense_cap: Option<u32>,

    /// Print the resolved config instead of running it.
    #[arg(long, global = true)]
    emit_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a state and check coherence, density, and block eigenstructure.
    State {
        #[command(flatten)]
        state: StateArgs,
        /// Check partial-trace coherence up to this depth.
        #[arg(long, default_value_t = 0)]
        check_depth: usize,
        /// Validate prefixes as density matrices up to this depth (default: min(check depth, 8)).
        #[arg(long)]
        density_depth: Option<usize>,
        /// Report the eigenstructure of the block of this size.
        #[arg(long)]
        eigen: Vec<usize>,
        /// Number of leading blocks listed.
        #[arg(long, default_value_t = 4)]
        blocks: usize,
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
    },
    /// Premeasure queries, full tables, and dense/factored comparison.
    Measure {
        #[command(flatten)]
        state: StateArgs,
        #[command(flatten)]
        basis: BasisArgs,
        /// Bit string to query (repeatable).
        #[arg(long)]
        tau: Vec<BitString>,
        /// Tabulate every string of this length.
        #[arg(long)]
        tau_depth: Option<usize>,
        /// Compare dense and factored paths on every string up to --depth.
        #[arg(long)]
        oracle_compare: bool,
        #[arg(long, default_value_t = 11)]
        depth: usize,
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
    },
    /// Sample measurement outcomes. Without --out, one line of bits per seed goes to stdout.
    Sample {
        #[command(flatten)]
        state: StateArgs,
        #[command(flatten)]
        basis: BasisArgs,
        #[arg(long)]
        bits: usize,
        #[command(flatten)]
        seeds: SeedArgs,
        /// Directory for `seed-<s>.bits` and `seed-<s>.json` files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the statistical battery on bit files (or stdin lines).
    Battery {
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        /// Per-test CSV rows instead of the JSON report.
        #[arg(long)]
        csv: bool,
    },
    /// Martin-Löf tests: the witness test, lifting, and evaluation.
    Qmlt {
        #[command(subcommand)]
        command: QmltCommand,
    },
    /// Numerical checks of the block lemmas and the generalised family.
    Verify {
        #[command(subcommand)]
        command: VerifyCommand,
    },
    /// Run a JSON experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum QmltCommand {
    /// Build the witness test for the given levels and evaluate a state on it.
    Witness {
        #[arg(long = "m", value_delimiter = ',', required = true)]
        levels: Vec<usize>,
        /// Largest block index N the construction may use.
        #[arg(long, default_value_t = 64)]
        budget: usize,
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, default_value_t = 0.9)]
        delta: f64,
    },
    /// Lift a classical test to special projections; report ranks, τ, nesting.
    Lift {
        #[arg(long)]
        mlt: PathBuf,
        #[command(flatten)]
        basis: BasisArgs,
    },
    /// Evaluate a state on a lifted classical test.
    Eval {
        #[arg(long)]
        mlt: PathBuf,
        /// Accepted for readability; classical tests are always lifted.
        #[arg(long)]
        lifted: bool,
        #[command(flatten)]
        basis: BasisArgs,
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
    },
}

#[derive(Subcommand)]
enum VerifyCommand {
    KronPairing(LemmaArgs),
    QuadraticBounds(LemmaArgs),
    CornerBound(LemmaArgs),
    Family {
        /// Family spec JSON ({"h": {...}, "g": {...}, ...}).
        #[arg(long, conflicts_with_all = ["h", "g"])]
        family: Option<PathBuf>,
        #[arg(long, requires = "g")]
        h: Option<PathBuf>,
        #[arg(long, requires = "h")]
        g: Option<PathBuf>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        target_delta: Option<f64>,
        #[arg(long)]
        target_f: Option<f64>,
    },
}

#[derive(Args)]
struct LemmaArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct StateArgs {
    /// `paper-rho`, `mixed`, or a state-spec JSON file.
    #[arg(long)]
    state: Option<String>,
    #[arg(long, conflicts_with_all = ["state", "general"])]
    paper_rho: bool,
    /// Tables n -> h(n) and n -> g(n) as JSON files.
    #[arg(long, num_args = 2, value_names = ["H", "G"], conflicts_with = "state")]
    general: Option<Vec<PathBuf>>,
}

#[derive(Args)]
struct BasisArgs {
    /// `standard`, `hadamard`, or a basis JSON file.
    #[arg(long, default_value = "standard")]
    basis: String,
    /// Rotation angles, one per qubit, cycled.
    #[arg(long, value_delimiter = ',', conflicts_with = "basis")]
    theta: Vec<f64>,
}

#[derive(Args)]
struct SeedArgs {
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// `a..b` (inclusive) or a comma list.
    #[arg(long)]
    seeds: Option<String>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl StateArgs {
    fn resolve(&self) -> anyhow::Result<StateSpec> {
        if let Some([h, g]) = self.general.as_deref() {
            let h: BTreeMap<usize, u64> = read_json(h)?;
            let g: BTreeMap<usize, f64> = read_json(g)?;
            if !h.keys().eq(g.keys()) {
                bail!("h and g tables cover different block sizes");
            }
            return Ok(StateSpec::General {
                blocks: Some(h.keys().copied().collect()),
                h: h.into_values().collect(),
                g: g.into_values().collect(),
            });
        }
        Ok(match self.state.as_deref() {
            None | Some("paper-rho" | "paper_rho" | "rho") => StateSpec::PaperRho,
            Some("mixed" | "maximally-mixed" | "maximally_mixed") => StateSpec::MaximallyMixed,
            Some(path) => read_json(Path::new(path))?,
        })
    }
}

impl BasisArgs {
    fn resolve(&self) -> anyhow::Result<MeasurementSystem> {
        if !self.theta.is_empty() {
            return Ok(MeasurementSystem::rotation(self.theta.clone())?);
        }
        Ok(match self.basis.as_str() {
            "standard" => MeasurementSystem::standard(),
            "hadamard" => MeasurementSystem::hadamard(),
            path => read_json(Path::new(path))?,
        })
    }
}

fn parse_seeds(spec: &str) -> anyhow::Result<Vec<u64>> {
    let spec = spec.trim();
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().context("seed range start")?;
        let b: u64 = b.trim_start_matches('=').trim().parse().context("seed range end")?;
        if b < a {
            bail!("empty seed range {spec}");
        }
        return Ok((a..=b).collect());
    }
    spec.split(',').map(|s| s.trim().parse().with_context(|| format!("bad seed '{s}'"))).collect()
}

impl SeedArgs {
    fn resolve(&self) -> anyhow::Result<Vec<u64>> {
        match (&self.seeds, self.seed) {
            (Some(s), _) => parse_seeds(s),
            (None, Some(s)) => Ok(vec![s]),
            (None, None) => Ok(vec![0]),
        }
    }
}

fn resolve(command: Command) -> anyhow::Result<Op> {
    Ok(match command {
        Command::State { state, check_depth, density_depth, eigen, blocks, tolerance } => {
            Op::State(StateOp { state: state.resolve()?, check_depth, density_depth, eigen, blocks, tolerance })
        }
        Command::Measure { state, basis, tau, tau_depth, oracle_compare, depth, tolerance } => Op::Measure(MeasureOp {
            state: state.resolve()?,
            basis: basis.resolve()?,
            taus: tau,
            tau_depth,
            oracle_compare_depth: oracle_compare.then_some(depth),
            tolerance,
        }),
        Command::Sample { state, basis, bits, seeds, out } => {
            Op::Sample(SampleOp { state: state.resolve()?, basis: basis.resolve()?, bits, seeds: seeds.resolve()?, out })
        }
        Command::Battery { inputs, alpha, csv } => Op::Battery(BatteryOp { inputs, alpha, csv }),
        Command::Qmlt { command } => match command {
            QmltCommand::Witness { levels, budget, state, delta } => {
                Op::Witness(WitnessOp { levels, budget, state: state.resolve()?, delta })
            }
            QmltCommand::Lift { mlt, basis } => Op::Lift(LiftOp { mlt: read_json::<ClassicalMlt>(&mlt)?, basis: basis.resolve()? }),
            QmltCommand::Eval { mlt, lifted: _, basis, state, delta } => Op::Eval(EvalOp {
                mlt: read_json(&mlt)?,
                basis: basis.resolve()?,
                state: state.resolve()?,
                delta,
            }),
        },
        Command::Verify { command } => match command {
            VerifyCommand::KronPairing(a) => Op::KronPairing(LemmaOp { n: a.n, trials: a.trials, seed: a.seed }),
            VerifyCommand::QuadraticBounds(a) => Op::QuadraticBounds(LemmaOp { n: a.n, trials: a.trials, seed: a.seed }),
            VerifyCommand::CornerBound(a) => Op::CornerBound(LemmaOp { n: a.n, trials: a.trials, seed: a.seed }),
            VerifyCommand::Family { family, h, g, n_max, target_delta, target_f } => {
                let mut spec: FamilySpec = match (family, h, g) {
                    (Some(f), _, _) => read_json(&f)?,
                    (None, Some(h), Some(g)) => {
                        let mut spec = FamilySpec::from_fns(4, |_| 0, |_| 0.0);
                        spec.h = read_json(&h)?;
                        spec.g = read_json(&g)?;
                        spec.n_max = None;
                        spec
                    }
                    _ => bail!("give --family FILE or both --h and --g"),
                };
                spec.n_max = n_max.or(spec.n_max);
                spec.target_delta = target_delta.or(spec.target_delta);
                spec.target_f = target_f.or(spec.target_f);
                Op::Family(FamilyOp { family: spec })
            }
        },
        Command::Run { .. } => unreachable!("handled before resolution"),
    })
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let config = match cli.command {
        Command::Run { config } => {
            let mut c: ExperimentConfig = read_json(&config)?;
            c.dense_cap = cli.dense_cap.or(c.dense_cap);
            c
        }
        command => ExperimentConfig { dense_cap: cli.dense_cap, op: resolve(command)? },
    };
    let mut stdout = std::io::stdout().lock();
    if cli.emit_config {
        stdout.write_all(output::to_json(&config)?.as_bytes())?;
        return Ok(true);
    }
    let cap = config.dense_cap.map(DenseCap).unwrap_or_else(DenseCap::from_env);
    match ops::execute(&config.op, cap)? {
        Output::Raw { pass, text } => {
            stdout.write_all(text.as_bytes())?;
            Ok(pass)
        }
        Output::Report { pass, result } => {
            let report = output::Report {
                op: config.op.name(),
                version: env!("CARGO_PKG_VERSION"),
                config_hash: output::config_hash(&config)?,
                seed: config.op.seed(),
                pass,
                config: &config,
                result,
            };
            stdout.write_all(output::to_json(&report)?.as_bytes())?;
            Ok(pass)
        }
    }
}

/// 2 for bad input, 3 for resource caps, 1 for a measure-zero draw.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<qmeas::Error>() {
        Some(e) if e.is_resource_cap() => 3,
        Some(qmeas::Error::MeasureZeroPrefix { .. }) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
