//! Fully resolved experiment descriptions. Flags are resolved into these
//! before anything runs, so a config file reproduces a command line exactly.

use std::path::PathBuf;

use qmeas::states::StateSpec;
use qmeas::verify::FamilySpec;
use qmeas::{BitString, ClassicalMlt, MeasurementSystem};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Dense-matrix cap exponent; `QMEAS_DENSE_CAP` or the default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense_cap: Option<u32>,
    #[serde(flatten)]
    pub op: Op,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    State(StateOp),
    Measure(MeasureOp),
    Sample(SampleOp),
    Battery(BatteryOp),
    Witness(WitnessOp),
    Lift(LiftOp),
    Eval(EvalOp),
    KronPairing(LemmaOp),
    QuadraticBounds(LemmaOp),
    CornerBound(LemmaOp),
    Family(FamilyOp),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::State(_) => "state",
            Op::Measure(_) => "measure",
            Op::Sample(_) => "sample",
            Op::Battery(_) => "battery",
            Op::Witness(_) => "witness",
            Op::Lift(_) => "lift",
            Op::Eval(_) => "eval",
            Op::KronPairing(_) => "kron_pairing",
            Op::QuadraticBounds(_) => "quadratic_bounds",
            Op::CornerBound(_) => "corner_bound",
            Op::Family(_) => "family",
        }
    }

    /// The seed recorded in reports, if the operation draws random numbers.
    pub fn seed(&self) -> Option<serde_json::Value> {
        match self {
            Op::Sample(s) => Some(serde_json::json!(s.seeds)),
            Op::KronPairing(l) | Op::QuadraticBounds(l) | Op::CornerBound(l) => Some(l.seed.into()),
            _ => None,
        }
    }
}

fn default_state() -> StateSpec {
    StateSpec::PaperRho
}

fn default_basis() -> MeasurementSystem {
    MeasurementSystem::standard()
}

fn default_tolerance() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateOp {
    #[serde(default = "default_state")]
    pub state: StateSpec,
    #[serde(default)]
    pub check_depth: usize,
    /// Depth up to which prefixes are validated as density matrices by eigensolve.
    #[serde(default)]
    pub density_depth: Option<usize>,
    /// Block sizes whose eigenstructure is reported.
    #[serde(default)]
    pub eigen: Vec<usize>,
    #[serde(default = "default_block_listing")]
    pub blocks: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_block_listing() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureOp {
    #[serde(default = "default_state")]
    pub state: StateSpec,
    #[serde(default = "default_basis")]
    pub basis: MeasurementSystem,
    #[serde(default)]
    pub taus: Vec<BitString>,
    #[serde(default)]
    pub tau_depth: Option<usize>,
    #[serde(default)]
    pub oracle_compare_depth: Option<usize>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleOp {
    #[serde(default = "default_state")]
    pub state: StateSpec,
    #[serde(default = "default_basis")]
    pub basis: MeasurementSystem,
    pub bits: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatteryOp {
    /// Bit files; standard input when empty.
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub csv: bool,
}

fn default_alpha() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessOp {
    pub levels: Vec<usize>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_state")]
    pub state: StateSpec,
    #[serde(default = "default_witness_delta")]
    pub delta: f64,
}

fn default_budget() -> usize {
    64
}

fn default_witness_delta() -> f64 {
    0.9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiftOp {
    pub mlt: ClassicalMlt,
    #[serde(default = "default_basis")]
    pub basis: MeasurementSystem,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOp {
    pub mlt: ClassicalMlt,
    #[serde(default = "default_basis")]
    pub basis: MeasurementSystem,
    #[serde(default = "default_state")]
    pub state: StateSpec,
    #[serde(default = "default_eval_delta")]
    pub delta: f64,
}

fn default_eval_delta() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LemmaOp {
    pub n: Vec<usize>,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyOp {
    pub family: FamilySpec,
}
