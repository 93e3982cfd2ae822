//! Classical and quantum Martin-Löf tests at finite stage depth.
//!
//! Classical Σ⁰₁ classes are stored as explicit prefix sets `A_i ⊆ 2^i` at
//! finitely many depths. Quantum classes are sequences of special projections
//! `p_i`, kept symbolic where a dense `2^i × 2^i` matrix would be too large.
//! Limits (`τ`, `ρ(G)`) are reported at finite depth; both are approached
//! monotonically, so finite-depth values are lower bounds.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::matrixcore::{kron_capped, product_amplitudes, projector_unchecked, ComplexMatrix, DenseCap, C64};
use crate::measurement::{premeasure_dense, premeasure_factored, MeasurementSystem};
use crate::states::{block_gamma, DensityBlock, FactoredState, State, MAX_BLOCK_QUBITS, FIRST_BLOCK};
use crate::tol;

/// Nested-range and idempotence checks on projections.
const PROJECTION_TOL: f64 = 1e-9;

/// Largest `N` searched for when reporting the required `N(m)` of a rejected budget.
const WITNESS_SEARCH_LIMIT: usize = 1 << 26;

/// A classical Σ⁰₁ class given by prefix sets at finitely many depths.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<usize, BTreeSet<BitString>>", into = "BTreeMap<usize, BTreeSet<BitString>>")]
pub struct StagedSigmaClass {
    stages: BTreeMap<usize, BTreeSet<BitString>>,
}

impl TryFrom<BTreeMap<usize, BTreeSet<BitString>>> for StagedSigmaClass {
    type Error = Error;

    fn try_from(stages: BTreeMap<usize, BTreeSet<BitString>>) -> Result<Self> {
        Self::new(stages)
    }
}

impl From<StagedSigmaClass> for BTreeMap<usize, BTreeSet<BitString>> {
    fn from(c: StagedSigmaClass) -> Self {
        c.stages
    }
}

impl StagedSigmaClass {
    /// Validates string lengths and monotonicity between consecutive stored depths.
    pub fn new(stages: BTreeMap<usize, BTreeSet<BitString>>) -> Result<Self> {
        for (&depth, set) in &stages {
            if let Some(bad) = set.iter().find(|s| s.len() != depth) {
                return Err(Error::InvalidTest(format!("stage {depth} holds '{bad}' of length {}", bad.len())));
            }
        }
        let class = Self { stages };
        if let Some((i, j, sigma)) = class.monotonicity_violation() {
            return Err(Error::InvalidTest(format!(
                "stage {i} prefix '{sigma}' is not fully extended at stage {j}"
            )));
        }
        Ok(class)
    }

    pub fn stages(&self) -> &BTreeMap<usize, BTreeSet<BitString>> {
        &self.stages
    }

    pub fn depths(&self) -> impl Iterator<Item = usize> + '_ {
        self.stages.keys().copied()
    }

    pub fn stage(&self, depth: usize) -> Result<&BTreeSet<BitString>> {
        self.stages.get(&depth).ok_or(Error::MissingStage(depth))
    }

    /// `λ⟦A_i⟧ = |A_i|·2^{−i}`.
    pub fn uniform_measure(&self, depth: usize) -> Result<f64> {
        Ok(self.stage(depth)?.len() as f64 * (-(depth as f64)).exp2())
    }

    /// First `(i, j, σ)` with `σ ∈ A_i` but some extension of `σ` of length `j`
    /// missing from `A_j`, for consecutive stored depths `i < j`.
    pub fn monotonicity_violation(&self) -> Option<(usize, usize, BitString)> {
        let depths: Vec<usize> = self.depths().collect();
        for w in depths.windows(2) {
            let (i, j) = (w[0], w[1]);
            let next = &self.stages[&j];
            let need = 1usize.checked_shl((j - i) as u32).unwrap_or(usize::MAX);
            for sigma in &self.stages[&i] {
                if count_extensions(next, sigma, j) != need {
                    return Some((i, j, sigma.clone()));
                }
            }
        }
        None
    }
}

/// Number of strings in `set` (all of length `len`) that extend `sigma`.
/// Extensions of a prefix are contiguous in lexicographic order.
fn count_extensions(set: &BTreeSet<BitString>, sigma: &BitString, len: usize) -> usize {
    let pad = |b: bool| {
        let mut s = sigma.clone();
        (sigma.len()..len).for_each(|_| s.push(b));
        s
    };
    set.range(pad(false)..=pad(true)).count()
}

/// A classical Martin-Löf test: level `m` ↦ Σ⁰₁ class with measure `≤ 2^{−m}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClassicalMltDoc", into = "ClassicalMltDoc")]
pub struct ClassicalMlt {
    levels: BTreeMap<usize, StagedSigmaClass>,
}

#[derive(Serialize, Deserialize)]
struct ClassicalMltDoc {
    levels: BTreeMap<usize, StagedSigmaClass>,
}

impl TryFrom<ClassicalMltDoc> for ClassicalMlt {
    type Error = Error;

    fn try_from(doc: ClassicalMltDoc) -> Result<Self> {
        Self::new(doc.levels)
    }
}

impl From<ClassicalMlt> for ClassicalMltDoc {
    fn from(t: ClassicalMlt) -> Self {
        Self { levels: t.levels }
    }
}

impl ClassicalMlt {
    pub fn new(levels: BTreeMap<usize, StagedSigmaClass>) -> Result<Self> {
        for (&m, class) in &levels {
            for depth in class.depths() {
                let measure = class.uniform_measure(depth)?;
                if measure > (-(m as f64)).exp2() {
                    return Err(Error::InvalidTest(format!(
                        "level {m}, stage {depth}: measure {measure} exceeds 2^-{m}"
                    )));
                }
            }
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &BTreeMap<usize, StagedSigmaClass> {
        &self.levels
    }
}

/// A special projection `p` on `qubits` qubits.
#[derive(Debug, Clone)]
pub enum Projection {
    Zero { qubits: usize },
    /// Validated Hermitian idempotent matrix.
    Dense(ComplexMatrix),
    /// `Σ_{τ∈strings} |⊗_q b^{τ(q)}_q⟩⟨⊗_q b^{τ(q)}_q|`, the lift of a prefix set.
    Lifted { qubits: usize, basis: MeasurementSystem, strings: BTreeSet<BitString> },
    /// `(⊗_b P_supp(block_b)) ⊗ I_{2^trailing}`: projector onto the support of a
    /// block product, padded with identity.
    BlockSupport { blocks: Vec<DensityBlock>, trailing: usize },
}

impl Projection {
    /// Wraps a dense matrix after checking `p = p†` and `p² = p`.
    pub fn dense(p: ComplexMatrix) -> Result<Self> {
        p.qubits()?;
        let herm = p.hermitian_deviation();
        if herm > PROJECTION_TOL {
            return Err(Error::NotHermitian(herm));
        }
        let idem = p.matmul(&p)?.max_abs_diff(&p);
        if idem > PROJECTION_TOL {
            return Err(Error::BadShape(format!("not idempotent: max |p² − p| = {idem:e}")));
        }
        Ok(Projection::Dense(p))
    }

    pub fn qubits(&self) -> usize {
        match self {
            Projection::Zero { qubits } | Projection::Lifted { qubits, .. } => *qubits,
            Projection::Dense(p) => p.qubits().expect("validated on construction"),
            Projection::BlockSupport { blocks, trailing } => blocks.iter().map(DensityBlock::n).sum::<usize>() + trailing,
        }
    }

    pub fn rank(&self) -> BigUint {
        match self {
            Projection::Zero { .. } => BigUint::zero(),
            Projection::Dense(p) => BigUint::from(p.trace().re.round().max(0.0) as u64),
            Projection::Lifted { strings, .. } => BigUint::from(strings.len()),
            Projection::BlockSupport { blocks, trailing } => {
                blocks.iter().map(DensityBlock::support_rank).product::<BigUint>() << *trailing
            }
        }
    }

    /// `2^{−i}·rank(p)`.
    pub fn tau(&self) -> f64 {
        let i = self.qubits() as f64;
        match self {
            Projection::Zero { .. } => 0.0,
            Projection::Dense(_) => self.rank().to_f64().unwrap_or(f64::INFINITY) * (-i).exp2(),
            Projection::Lifted { strings, .. } => strings.len() as f64 * (-i).exp2(),
            // Per-block ratios avoid forming the huge rank.
            Projection::BlockSupport { blocks, .. } => blocks
                .iter()
                .map(|b| b.support_rank().to_f64().unwrap_or(f64::INFINITY) * (-(b.n() as f64)).exp2())
                .product(),
        }
    }

    pub fn to_dense(&self, cap: DenseCap) -> Result<ComplexMatrix> {
        let q = self.qubits();
        cap.check_qubits(q)?;
        let dim = 1usize << q;
        Ok(match self {
            Projection::Zero { .. } => ComplexMatrix::zeros(dim, dim),
            Projection::Dense(p) => p.clone(),
            Projection::Lifted { basis, strings, .. } => {
                let cols: Vec<Vec<C64>> =
                    strings.iter().map(|t| product_amplitudes(&basis.factors(0, t.bits()))).collect();
                projector_unchecked(dim, &cols)
            }
            Projection::BlockSupport { blocks, trailing } => {
                let mut p = ComplexMatrix::identity(1);
                for b in blocks {
                    p = kron_capped(&p, &block_support_projector(b, cap)?, cap)?;
                }
                kron_capped(&p, &ComplexMatrix::identity(1 << trailing), cap)?
            }
        })
    }
}

/// Projector onto the nonzero-eigenvalue eigenvectors of a structured block.
fn block_support_projector(block: &DensityBlock, cap: DenseCap) -> Result<ComplexMatrix> {
    cap.check_qubits(block.n())?;
    let cols: Vec<Vec<C64>> = block
        .analytic_eigensystem()?
        .into_iter()
        .filter(|p| p.value.abs() > tol::EXACT * block.diag_value())
        .map(|p| p.vector.to_dense(block.n()))
        .collect();
    Ok(projector_unchecked(1 << block.n(), &cols))
}

/// `tr(σ P_supp(d))` for structured blocks of equal size.
///
/// The zero eigenvectors of `d` are `(e_j − e_{j̄})/√2` for `j < r_d`, each
/// seeing `σ_diag − σ_corner` if `j` is also a corner row of `σ`, else `σ_diag`.
fn block_support_trace(state_block: &DensityBlock, proj_block: &DensityBlock) -> f64 {
    if !proj_block.has_zero_pairs() {
        return 1.0;
    }
    let r_d = proj_block.corner_count();
    let shared = r_d.min(state_block.corner_count());
    let diag = state_block.diag_value();
    let lost = r_d.to_f64().unwrap_or(f64::INFINITY) * diag - shared.to_f64().unwrap_or(f64::INFINITY) * state_block.corner_value();
    1.0 - lost
}

#[derive(Debug, Clone)]
enum ClassKind {
    Staged(BTreeMap<usize, Projection>),
    /// `p_k = 0` for `k < onset`, `P_supp(⊗ blocks) ⊗ I` from `onset` on.
    Support { blocks: Vec<DensityBlock>, onset: usize },
}

/// A quantum Σ⁰₁ class, materialized at finitely many depths or given by a rule.
#[derive(Debug, Clone)]
pub struct QuantumSigmaClass {
    kind: ClassKind,
}

impl QuantumSigmaClass {
    /// Explicit stages; each projection must act on exactly `depth` qubits.
    pub fn staged(stages: BTreeMap<usize, Projection>) -> Result<Self> {
        for (&depth, p) in &stages {
            if p.qubits() != depth {
                return Err(Error::BadShape(format!("stage {depth} holds a {}-qubit projection", p.qubits())));
            }
        }
        Ok(Self { kind: ClassKind::Staged(stages) })
    }

    /// The class with `p_k = 0` before the blocks are complete and
    /// `P_supp(⊗ blocks) ⊗ I` afterwards.
    pub fn block_support(blocks: Vec<DensityBlock>) -> Self {
        let onset = blocks.iter().map(DensityBlock::n).sum();
        Self { kind: ClassKind::Support { blocks, onset } }
    }

    /// Stored depths for a staged class, `[onset]` for a rule-based one.
    pub fn natural_depths(&self) -> Vec<usize> {
        match &self.kind {
            ClassKind::Staged(stages) => stages.keys().copied().collect(),
            ClassKind::Support { onset, .. } => vec![*onset],
        }
    }

    pub fn projection(&self, depth: usize) -> Result<Projection> {
        match &self.kind {
            ClassKind::Staged(stages) => stages.get(&depth).cloned().ok_or(Error::MissingStage(depth)),
            ClassKind::Support { blocks, onset } => Ok(if depth < *onset {
                Projection::Zero { qubits: depth }
            } else {
                Projection::BlockSupport { blocks: blocks.clone(), trailing: depth - onset }
            }),
        }
    }

    /// `2^{−i}·rank(p_i)`.
    pub fn tau(&self, depth: usize) -> Result<f64> {
        Ok(self.projection(depth)?.tau())
    }

    pub fn rank(&self, depth: usize) -> Result<BigUint> {
        Ok(self.projection(depth)?.rank())
    }

    /// Checks `p_j (p_i ⊗ I) = p_i ⊗ I` between consecutive natural depths.
    /// Dense when both fit the cap; lifted stages in a common basis fall back
    /// to the prefix-set condition, which implies nesting.
    pub fn check_nesting(&self, cap: DenseCap) -> Result<Vec<NestingCheck>> {
        let ClassKind::Staged(stages) = &self.kind else {
            // Zero, then a fixed projection padded with identities: nested by construction.
            return Ok(Vec::new());
        };
        let entries: Vec<(&usize, &Projection)> = stages.iter().collect();
        let mut out = Vec::new();
        for w in entries.windows(2) {
            let ((&i, pi), (&j, pj)) = (w[0], w[1]);
            let check = match (pi, pj) {
                (Projection::Zero { .. }, _) => NestingCheck { from: i, to: j, holds: true, deviation: None },
                (
                    Projection::Lifted { basis: bi, strings: si, .. },
                    Projection::Lifted { basis: bj, strings: sj, .. },
                ) if bi == bj && j > cap.0 as usize => {
                    let holds = si.iter().all(|s| count_extensions(sj, s, j) == 1 << (j - i));
                    NestingCheck { from: i, to: j, holds, deviation: None }
                }
                _ => {
                    let lifted = kron_capped(&pi.to_dense(cap)?, &ComplexMatrix::identity(1 << (j - i)), cap)?;
                    let dev = pj.to_dense(cap)?.matmul(&lifted)?.max_abs_diff(&lifted);
                    NestingCheck { from: i, to: j, holds: dev <= PROJECTION_TOL, deviation: Some(dev) }
                }
            };
            out.push(check);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NestingCheck {
    pub from: usize,
    pub to: usize,
    pub holds: bool,
    /// `max |p_j(p_i⊗I) − p_i⊗I|` when checked densely.
    pub deviation: Option<f64>,
}

/// A quantum Martin-Löf test.
#[derive(Debug, Clone, Default)]
pub struct QuantumMlt {
    pub levels: BTreeMap<usize, QuantumSigmaClass>,
}

impl QuantumMlt {
    pub fn tau_bound(m: usize) -> f64 {
        (-(m as f64)).exp2()
    }

    /// `(m, depth, τ)` wherever `τ(level m) > 2^{−m}` at a natural depth.
    pub fn tau_violations(&self) -> Result<Vec<(usize, usize, f64)>> {
        let mut out = Vec::new();
        for (&m, class) in &self.levels {
            for d in class.natural_depths() {
                let t = class.tau(d)?;
                if t > Self::tau_bound(m) {
                    out.push((m, d, t));
                }
            }
        }
        Ok(out)
    }
}

/// `ρ_i(G) = tr(ρ_i p_i)`.
///
/// Block-support projections against factored states with matching block
/// boundaries are traced blockwise at any depth; lifted projections are
/// summed as premeasures; anything else goes through dense matrices.
pub fn evaluate_state(g: &QuantumSigmaClass, state: &State, depth: usize, cap: DenseCap) -> Result<f64> {
    let p = g.projection(depth)?;
    match (&p, state) {
        (Projection::Zero { .. }, _) => Ok(0.0),
        (Projection::Lifted { basis, strings, .. }, State::Factored(f)) => {
            strings.iter().map(|t| premeasure_factored(f, basis, t)).sum()
        }
        (Projection::Lifted { basis, strings, .. }, State::Dense(_)) => {
            let prefix = state.prefix(depth, cap)?;
            strings.iter().map(|t| premeasure_dense(&prefix, basis, t)).sum()
        }
        (Projection::BlockSupport { blocks, .. }, State::Factored(f)) => match blockwise_support_trace(blocks, f, depth)? {
            Some(v) => Ok(v),
            None => dense_trace(&p, state, depth, cap),
        },
        _ => dense_trace(&p, state, depth, cap),
    }
}

fn dense_trace(p: &Projection, state: &State, depth: usize, cap: DenseCap) -> Result<f64> {
    let rho = state.prefix(depth, cap)?.rho;
    Ok(rho.trace_product(&p.to_dense(cap)?).re)
}

/// `None` when the state's block boundaries do not line up with the projection's.
/// Qubits past the projected blocks carry `I`, whose trace against the rest of
/// the state is 1.
fn blockwise_support_trace(blocks: &[DensityBlock], state: &FactoredState, depth: usize) -> Result<Option<f64>> {
    let mut state_blocks = state.blocks_covering(depth)?;
    state_blocks.truncate(blocks.len());
    if state_blocks.len() != blocks.len() || state_blocks.iter().zip(blocks).any(|((_, s), b)| s.n() != b.n()) {
        return Ok(None);
    }
    Ok(Some(state_blocks.iter().zip(blocks).map(|((_, s), b)| block_support_trace(s, b)).product()))
}

/// Eq. (3.3): each stage `A_i^m` becomes `Σ_{τ∈A_i^m} |⊗ b^{τ(q)}_q⟩⟨…|`.
/// Projections stay symbolic; [`Projection::to_dense`] materializes on demand.
pub fn lift_classical_mlt(t: &ClassicalMlt, basis: &MeasurementSystem) -> QuantumMlt {
    let levels = t
        .levels()
        .iter()
        .map(|(&m, class)| {
            let stages = class
                .stages()
                .iter()
                .map(|(&i, set)| (i, Projection::Lifted { qubits: i, basis: basis.clone(), strings: set.clone() }))
                .collect();
            (m, QuantumSigmaClass { kind: ClassKind::Staged(stages) })
        })
        .collect();
    QuantumMlt { levels }
}

/// The level-`m` witness test for the block state.
#[derive(Debug, Clone)]
pub struct WitnessTest {
    pub m: usize,
    /// Last block index `N(m)`.
    pub n_m: usize,
    /// Onset depth `γ(N) = Σ_{n=5}^{N} n`.
    pub gamma: usize,
    /// `|M_N| = Π (2ⁿ − ⌊2ⁿ/n⌋)`.
    pub rank: BigUint,
    /// `τ(T_m) = Π (1 − ⌊2ⁿ/n⌋ 2⁻ⁿ)`.
    pub tau: f64,
    /// `Π (1 − 1/n + 2⁻ⁿ)`, the bound that fixes `N(m)`.
    pub bound_product: f64,
    pub class: QuantumSigmaClass,
}

/// Partial products `Π_{n=5}^{N} (1 − 1/n + 2⁻ⁿ)` for `N = 5, 6, …, last`.
pub fn witness_bound_products(last: usize) -> Vec<f64> {
    let mut acc = 1.0;
    (FIRST_BLOCK..=last)
        .map(|n| {
            acc *= 1.0 - 1.0 / n as f64 + (-(n as f64)).exp2();
            acc
        })
        .collect()
}

/// Minimal `N ≤ limit` with `Π_{n=5}^{N} (1 − 1/n + 2⁻ⁿ) < 2^{−m}`.
pub fn witness_block_count(m: usize, limit: usize) -> Option<usize> {
    let target = (-(m as f64)).exp2();
    let mut acc = 1.0;
    for n in FIRST_BLOCK..=limit {
        acc *= 1.0 - 1.0 / n as f64 + (-(n as f64)).exp2();
        if acc < target {
            return Some(n);
        }
    }
    None
}

/// Builds `T_m`: `p_k = 0` for `k < γ(N)`, then the support projector of
/// `S_N = ⊗_{n=5}^{N} d_n` padded with identity.
pub fn build_witness_test(m: usize, budget: usize) -> Result<WitnessTest> {
    let usable = budget.min(MAX_BLOCK_QUBITS);
    let Some(n_m) = witness_block_count(m, usable) else {
        let required = witness_block_count(m, WITNESS_SEARCH_LIMIT);
        return Err(Error::BudgetExceeded { m, required, budget });
    };
    let blocks = (FIRST_BLOCK..=n_m).map(DensityBlock::dn).collect::<Result<Vec<_>>>()?;
    let rank = blocks.iter().map(DensityBlock::support_rank).product();
    let class = QuantumSigmaClass::block_support(blocks);
    let tau = class.tau(block_gamma(n_m))?;
    Ok(WitnessTest {
        m,
        n_m,
        gamma: block_gamma(n_m),
        rank,
        tau,
        bound_product: *witness_bound_products(n_m).last().expect("n_m >= 5"),
        class,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelEvaluation {
    pub level: usize,
    pub depths: Vec<usize>,
    pub values: Vec<f64>,
    /// Values non-decreasing in depth, within `1e-10`.
    pub monotone: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureReport {
    pub delta: f64,
    pub levels: Vec<LevelEvaluation>,
    /// Minimum over levels of the deepest evaluation; `None` for an empty test.
    pub min_evaluation: Option<f64>,
    /// True when `min_evaluation > delta`. Evaluations only grow with depth, so
    /// this is a lower-bound certificate established at finite depth.
    pub fails_at_order_delta: bool,
    pub certificate: &'static str,
}

/// Evaluates every level at its scheduled depths (natural depths when the
/// schedule omits a level) and decides failure at order `delta`.
pub fn failure_report(
    t: &QuantumMlt,
    state: &State,
    schedule: &BTreeMap<usize, Vec<usize>>,
    delta: f64,
    cap: DenseCap,
) -> Result<FailureReport> {
    let mut levels = Vec::new();
    for (&m, class) in &t.levels {
        let mut depths = schedule.get(&m).cloned().unwrap_or_else(|| class.natural_depths());
        depths.sort_unstable();
        depths.dedup();
        let values = depths.iter().map(|&d| evaluate_state(class, state, d, cap)).collect::<Result<Vec<_>>>()?;
        let monotone = values.windows(2).all(|w| w[0] <= w[1] + 1e-10);
        levels.push(LevelEvaluation { level: m, depths, values, monotone });
    }
    let min_evaluation = levels.iter().filter_map(|l| l.values.last().copied()).reduce(f64::min);
    Ok(FailureReport {
        delta,
        fails_at_order_delta: min_evaluation.is_some_and(|v| v > delta),
        min_evaluation,
        levels,
        certificate: "finite-depth lower bound: evaluations are non-decreasing in depth",
    })
}

/// `Π_{n=5}^{N} (1 − ⌊2ⁿ/n⌋ 2⁻ⁿ)` with exact integer ratios, for checking `τ(T_m)`.
pub fn witness_tau_exact(last: usize) -> f64 {
    (FIRST_BLOCK..=last)
        .map(|n| {
            let full = BigUint::one() << n;
            let r = crate::states::dn_corner_count(n);
            (full.clone() - r).to_f64().unwrap() / full.to_f64().unwrap()
        })
        .product()
}
