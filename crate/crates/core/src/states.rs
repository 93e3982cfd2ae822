//! States: the `d_n` blocks, factored tensor-product states, dense prefixes,
//! and coherence checking.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixcore::{
    complement_pair_sum, is_density_matrix, kron_capped, partial_trace_last_qubit,
    partial_trace_last_qubits, ComplexMatrix, DenseCap, QubitVector, C64,
};

/// Largest block size; `2^-n` stays a normal double below this.
pub const MAX_BLOCK_QUBITS: usize = 1000;

/// First block of the state `⊗_{n≥5} d_n`.
pub const FIRST_BLOCK: usize = 5;

/// `⌊2ⁿ/n⌋`.
pub fn dn_corner_count(n: usize) -> BigUint {
    (BigUint::one() << n) / BigUint::from(n)
}

/// A `2ⁿ × 2ⁿ` block with `2⁻ⁿ` on the diagonal and `corner_count` symmetric
/// pairs of `corner_value` at the extreme ends of the anti-diagonal: entries
/// `(j, 2ⁿ−1−j)` and `(2ⁿ−1−j, j)` for `j < corner_count` (0-based).
///
/// The anti-diagonal partner of an index is its bitwise complement, which is
/// what makes the block's algebra against product vectors tractable.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityBlock {
    n: usize,
    corner_count: BigUint,
    corner_value: f64,
}

impl DensityBlock {
    /// The block `d_n`: `⌊2ⁿ/n⌋` corner pairs of value `2⁻ⁿ`.
    pub fn dn(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::BadBlock(format!("d_n needs n >= 3, got {n}")));
        }
        if n > MAX_BLOCK_QUBITS {
            return Err(Error::BadBlock(format!("block size {n} exceeds {MAX_BLOCK_QUBITS}")));
        }
        Ok(Self { n, corner_count: dn_corner_count(n), corner_value: (-(n as f64)).exp2() })
    }

    /// A block with `h` corner pairs of value `g`; requires `h ≤ 2ⁿ⁻¹` and `0 ≤ g ≤ 2⁻ⁿ`.
    pub fn general(n: usize, h: impl Into<BigUint>, g: f64) -> Result<Self> {
        let h = h.into();
        let bad = |reason: String| Error::BadFamilyParams { n, reason };
        if n == 0 || n > MAX_BLOCK_QUBITS {
            return Err(bad(format!("block size must be in 1..={MAX_BLOCK_QUBITS}")));
        }
        if h > BigUint::one() << (n - 1) {
            return Err(bad(format!("h = {h} exceeds 2^(n-1)")));
        }
        let diag = (-(n as f64)).exp2();
        if !g.is_finite() || g < 0.0 {
            return Err(bad(format!("g = {g} must be a non-negative number")));
        }
        if g > diag {
            return Err(bad(format!("g = {g:e} exceeds 2^-n = {diag:e}")));
        }
        Ok(Self { n, corner_count: h, corner_value: g })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn corner_count(&self) -> &BigUint {
        &self.corner_count
    }

    pub fn corner_value(&self) -> f64 {
        self.corner_value
    }

    pub fn diag_value(&self) -> f64 {
        (-(self.n as f64)).exp2()
    }

    fn dim(&self) -> usize {
        1usize << self.n
    }

    fn corner_count_usize(&self) -> usize {
        self.corner_count.to_usize().expect("corner count of a materializable block fits usize")
    }

    /// Structured entry `(i, j)` (0-based). Only for `n < 64`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let mask = self.dim() - 1;
        let r = self.corner_count_usize();
        if i == j {
            self.diag_value()
        } else if j == mask ^ i && i.min(j) < r {
            self.corner_value
        } else {
            0.0
        }
    }

    /// Dense matrix of the block.
    pub fn materialize(&self, cap: DenseCap) -> Result<ComplexMatrix> {
        cap.check_qubits(self.n)?;
        let d = self.dim();
        let mut m = ComplexMatrix::from_real_diagonal(&vec![self.diag_value(); d]);
        let g = C64::new(self.corner_value, 0.0);
        for j in 0..self.corner_count_usize() {
            m.set(j, (d - 1) ^ j, g);
            m.set((d - 1) ^ j, j, g);
        }
        Ok(m)
    }

    /// `⟨W|d|W⟩` for the product vector `W = ⊗ factors`, in `O(n)`.
    pub fn quadratic_form(&self, factors: &[QubitVector]) -> f64 {
        assert_eq!(factors.len(), self.n, "one factor per block qubit");
        let norm: f64 = factors.iter().map(QubitVector::norm_sqr).product();
        let pairs = complement_pair_sum(factors, &self.corner_count);
        self.diag_value() * norm + self.corner_value * 2.0 * pairs.re
    }

    /// `tr[d (|u⟩⟨u| ⊗ I)]` where `u = ⊗ factors` covers the first `k ≤ n` qubits.
    pub fn prefix_marginal(&self, factors: &[QubitVector]) -> f64 {
        let k = factors.len();
        assert!(k <= self.n, "prefix longer than block");
        if k == self.n {
            return self.quadratic_form(factors);
        }
        let norm: f64 = factors.iter().map(QubitVector::norm_sqr).product();
        self.partial_marginal(k, norm)
    }

    /// Marginal of a `k < n` qubit prefix whose product vector has squared norm `norm`.
    pub fn partial_marginal(&self, k: usize, norm: f64) -> f64 {
        debug_assert!(k < self.n);
        // A corner entry couples j with its complement, whose traced-out high
        // bits all differ from j's; `|u⟩⟨u| ⊗ I` vanishes there. Only the
        // diagonal survives: 2^(n-k) copies of ‖u‖² weighted by 2^-n.
        self.diag_value() * ((self.n - k) as f64).exp2() * norm
    }

    /// Eigenvalues with multiplicities: `diag − g` and `diag + g` once per
    /// corner pair, `diag` on the unpaired middle.
    pub fn eigenvalue_multiplicities(&self) -> Vec<(f64, BigUint)> {
        let d = self.diag_value();
        let r = self.corner_count.clone();
        let middle = (BigUint::one() << self.n) - (&r << 1);
        vec![(d - self.corner_value, r.clone()), (d, middle), (d + self.corner_value, r)]
    }

    /// Number of zero eigenvalues, exact for the structured form.
    pub fn zero_multiplicity(&self) -> BigUint {
        if self.has_zero_pairs() {
            self.corner_count.clone()
        } else {
            BigUint::zero()
        }
    }

    /// True when each corner pair's minus eigenvalue `diag − g` vanishes.
    pub fn has_zero_pairs(&self) -> bool {
        let d = self.diag_value();
        !self.corner_count.is_zero() && (d - self.corner_value).abs() <= 1e-12 * d
    }

    /// Rank of the block, `2ⁿ` minus the zero multiplicity.
    pub fn support_rank(&self) -> BigUint {
        (BigUint::one() << self.n) - self.zero_multiplicity()
    }

    /// The full eigensystem without a numerical solve. Only for `n ≤ 24`.
    pub fn analytic_eigensystem(&self) -> Result<Vec<BlockEigenpair>> {
        if self.n > 24 {
            return Err(Error::CapExceeded { requested: self.n, cap: 24 });
        }
        let d = self.diag_value();
        let r = self.corner_count_usize();
        let dim = self.dim();
        let mut out = Vec::with_capacity(dim);
        for j in 0..r {
            out.push(BlockEigenpair { value: d + self.corner_value, vector: BlockEigenvector::Plus(j) });
            out.push(BlockEigenpair { value: d - self.corner_value, vector: BlockEigenvector::Minus(j) });
        }
        for i in r..dim - r {
            out.push(BlockEigenpair { value: d, vector: BlockEigenvector::Basis(i) });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockEigenpair {
    pub value: f64,
    pub vector: BlockEigenvector,
}

/// Eigenvectors of a structured block, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockEigenvector {
    /// `e_i`.
    Basis(usize),
    /// `(e_j + e_{j̄})/√2`.
    Plus(usize),
    /// `(e_j − e_{j̄})/√2`.
    Minus(usize),
}

impl BlockEigenvector {
    pub fn to_dense(self, n: usize) -> Vec<C64> {
        let dim = 1usize << n;
        let mut v = vec![C64::new(0.0, 0.0); dim];
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            BlockEigenvector::Basis(i) => v[i] = C64::new(1.0, 0.0),
            BlockEigenvector::Plus(j) => {
                v[j] = C64::new(s, 0.0);
                v[(dim - 1) ^ j] = C64::new(s, 0.0);
            }
            BlockEigenvector::Minus(j) => {
                v[j] = C64::new(s, 0.0);
                v[(dim - 1) ^ j] = C64::new(-s, 0.0);
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
enum BlockSource {
    /// `d_5 ⊗ d_6 ⊗ …`, unbounded.
    Rho,
    /// One-qubit blocks `I/2`, unbounded.
    MaximallyMixed,
    Explicit(Vec<DensityBlock>),
}

/// A state presented as a tensor product of [`DensityBlock`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredState {
    source: BlockSource,
    id: String,
}

impl FactoredState {
    pub fn paper_rho() -> Self {
        Self { source: BlockSource::Rho, id: "paper_rho".into() }
    }

    pub fn maximally_mixed() -> Self {
        Self { source: BlockSource::MaximallyMixed, id: "maximally_mixed".into() }
    }

    pub fn from_blocks(blocks: Vec<DensityBlock>) -> Self {
        let sizes: Vec<String> = blocks.iter().map(|b| b.n.to_string()).collect();
        Self { id: format!("blocks[{}]", sizes.join(",")), source: BlockSource::Explicit(blocks) }
    }

    /// The generalised family: block sizes `5, 6, …` with `h[i]` corner pairs of
    /// value `g[i]` in block `i`.
    pub fn general_family(h: &[u64], g: &[f64], sizes: Option<&[usize]>) -> Result<Self> {
        if h.len() != g.len() {
            return Err(Error::BadShape(format!("h has {} entries, g has {}", h.len(), g.len())));
        }
        let default_sizes: Vec<usize> = (0..h.len()).map(|i| FIRST_BLOCK + i).collect();
        let sizes = sizes.unwrap_or(&default_sizes);
        if sizes.len() != h.len() {
            return Err(Error::BadShape(format!("{} block sizes for {} table entries", sizes.len(), h.len())));
        }
        let blocks = sizes
            .iter()
            .zip(h.iter().zip(g))
            .map(|(&n, (&hv, &gv))| DensityBlock::general(n, hv, gv))
            .collect::<Result<Vec<_>>>()?;
        let mut state = Self::from_blocks(blocks);
        state.id = format!("general[{}]", h.len());
        Ok(state)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Block `idx` (0-based), if the state has one.
    pub fn block(&self, idx: usize) -> Option<DensityBlock> {
        match &self.source {
            BlockSource::Rho => DensityBlock::dn(FIRST_BLOCK + idx).ok(),
            BlockSource::MaximallyMixed => DensityBlock::general(1, 0u32, 0.0).ok(),
            BlockSource::Explicit(blocks) => blocks.get(idx).cloned(),
        }
    }

    /// Size of block `idx` without building it.
    pub fn block_size(&self, idx: usize) -> Option<usize> {
        match &self.source {
            BlockSource::Rho => {
                let n = FIRST_BLOCK + idx;
                (n <= MAX_BLOCK_QUBITS).then_some(n)
            }
            BlockSource::MaximallyMixed => Some(1),
            BlockSource::Explicit(blocks) => blocks.get(idx).map(DensityBlock::n),
        }
    }

    /// Total qubits covered; `None` for unbounded states.
    pub fn covered_qubits(&self) -> Option<usize> {
        match &self.source {
            BlockSource::Rho => Some((FIRST_BLOCK..=MAX_BLOCK_QUBITS).sum()),
            BlockSource::MaximallyMixed => None,
            BlockSource::Explicit(blocks) => Some(blocks.iter().map(DensityBlock::n).sum()),
        }
    }

    /// `(offset, block)` for every block that intersects qubits `0..k`.
    pub fn blocks_covering(&self, k: usize) -> Result<Vec<(usize, DensityBlock)>> {
        let mut out = Vec::new();
        let mut offset = 0;
        let mut idx = 0;
        while offset < k {
            let block = self.block(idx).ok_or(Error::OutOfCoverage { covered: offset, requested: k })?;
            let n = block.n;
            out.push((offset, block));
            offset += n;
            idx += 1;
        }
        Ok(out)
    }

    /// Cumulative qubit offsets of the first `count` blocks (`β` values), plus the end.
    pub fn block_offsets(&self, count: usize) -> Result<Vec<usize>> {
        let mut offsets = vec![0];
        for idx in 0..count {
            let n = self.block_size(idx).ok_or(Error::OutOfCoverage {
                covered: *offsets.last().unwrap(),
                requested: usize::MAX,
            })?;
            offsets.push(offsets.last().unwrap() + n);
        }
        Ok(offsets)
    }
}

/// `γ(N) = Σ_{n=5}^{N} n`, the qubits covered by blocks `d_5..=d_N`.
pub fn block_gamma(last_block: usize) -> usize {
    (FIRST_BLOCK..=last_block).sum()
}

/// A `k`-qubit density matrix `ρ_k`.
#[derive(Debug, Clone)]
pub struct DenseStatePrefix {
    pub depth: usize,
    pub rho: ComplexMatrix,
}

impl DenseStatePrefix {
    pub fn new(rho: ComplexMatrix) -> Result<Self> {
        Ok(Self { depth: rho.qubits()?, rho })
    }
}

/// An explicit finite chain `ρ_1, …, ρ_K`; `ρ_0 = [1]` is implicit.
#[derive(Debug, Clone)]
pub struct DenseChain {
    matrices: Vec<ComplexMatrix>,
}

impl DenseChain {
    /// Accepts any chain of correctly sized matrices; coherence is checked separately.
    pub fn new(matrices: Vec<ComplexMatrix>) -> Result<Self> {
        for (k, m) in matrices.iter().enumerate() {
            let q = m.qubits()?;
            if q != k + 1 {
                return Err(Error::BadShape(format!("matrix {} has {q} qubits, expected {}", k, k + 1)));
            }
        }
        Ok(Self { matrices })
    }

    /// The coherent chain obtained by tracing out last qubits of `top`.
    pub fn from_top(top: ComplexMatrix) -> Result<Self> {
        let k = top.qubits()?;
        let mut matrices = vec![top];
        for _ in 1..k {
            let next = partial_trace_last_qubit(matrices.last().unwrap())?;
            matrices.push(next);
        }
        matrices.reverse();
        Ok(Self { matrices })
    }

    pub fn depth(&self) -> usize {
        self.matrices.len()
    }

    pub fn prefix(&self, k: usize) -> Result<DenseStatePrefix> {
        if k == 0 {
            return Ok(DenseStatePrefix { depth: 0, rho: ComplexMatrix::identity(1) });
        }
        let rho = self
            .matrices
            .get(k - 1)
            .cloned()
            .ok_or(Error::OutOfCoverage { covered: self.depth(), requested: k })?;
        Ok(DenseStatePrefix { depth: k, rho })
    }

    pub fn matrices(&self) -> &[ComplexMatrix] {
        &self.matrices
    }
}

/// Any state presentation.
#[derive(Debug, Clone)]
pub enum State {
    Factored(FactoredState),
    Dense(DenseChain),
}

impl State {
    pub fn id(&self) -> String {
        match self {
            State::Factored(f) => f.id().to_string(),
            State::Dense(c) => format!("dense_prefix[{}]", c.depth()),
        }
    }

    /// Deepest prefix available, `None` if unbounded.
    pub fn max_depth(&self) -> Option<usize> {
        match self {
            State::Factored(f) => f.covered_qubits(),
            State::Dense(c) => Some(c.depth()),
        }
    }

    pub fn prefix(&self, k: usize, cap: DenseCap) -> Result<DenseStatePrefix> {
        match self {
            State::Factored(f) => prefix_density(f, k, cap),
            State::Dense(c) => {
                cap.check_qubits(k)?;
                c.prefix(k)
            }
        }
    }
}

impl From<FactoredState> for State {
    fn from(f: FactoredState) -> Self {
        State::Factored(f)
    }
}

impl From<DenseChain> for State {
    fn from(c: DenseChain) -> Self {
        State::Dense(c)
    }
}

/// `ρ_k` of a factored state: complete blocks tensored, the straddling block
/// traced down to its first qubits.
pub fn prefix_density(state: &FactoredState, k: usize, cap: DenseCap) -> Result<DenseStatePrefix> {
    cap.check_qubits(k)?;
    let mut rho = ComplexMatrix::identity(1);
    for (offset, block) in state.blocks_covering(k)? {
        let dense = block.materialize(cap)?;
        let keep = (k - offset).min(block.n());
        let part = partial_trace_last_qubits(&dense, block.n() - keep)?;
        rho = kron_capped(&rho, &part, cap)?;
    }
    Ok(DenseStatePrefix { depth: k, rho })
}

#[derive(Debug, Clone, Serialize)]
pub struct CoherenceReport {
    pub depth: usize,
    pub tol: f64,
    /// `max |PT(ρ_j) − ρ_{j−1}|` per `j = 1..=depth`.
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    /// First `j` whose deviation exceeds `tol`.
    pub first_failure: Option<usize>,
    pub pass: bool,
}

/// Checks `PT(ρ_j) = ρ_{j−1}` for `j ≤ depth`.
pub fn check_coherence(state: &State, depth: usize, tol: f64, cap: DenseCap) -> Result<CoherenceReport> {
    let mut deviations = Vec::with_capacity(depth);
    let mut prev = state.prefix(0, cap)?;
    for j in 1..=depth {
        let cur = state.prefix(j, cap)?;
        let traced = partial_trace_last_qubit(&cur.rho)?;
        deviations.push(traced.max_abs_diff(&prev.rho));
        prev = cur;
    }
    let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
    let first_failure = deviations.iter().position(|&d| !(d <= tol)).map(|i| i + 1);
    Ok(CoherenceReport { depth, tol, deviations, max_deviation, first_failure, pass: first_failure.is_none() })
}

/// Per-depth density-matrix validation of a state's prefixes.
pub fn check_prefix_densities(state: &State, depth: usize, tol: f64, cap: DenseCap) -> Result<Vec<bool>> {
    (1..=depth).map(|k| Ok(is_density_matrix(&state.prefix(k, cap)?.rho, tol).is_density)).collect()
}

/// JSON state specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSpec {
    PaperRho,
    MaximallyMixed,
    General {
        h: Vec<u64>,
        g: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        blocks: Option<Vec<usize>>,
    },
    DensePrefix { matrices: Vec<ComplexMatrix> },
}

impl StateSpec {
    pub fn build(&self) -> Result<State> {
        Ok(match self {
            StateSpec::PaperRho => FactoredState::paper_rho().into(),
            StateSpec::MaximallyMixed => FactoredState::maximally_mixed().into(),
            StateSpec::General { h, g, blocks } => FactoredState::general_family(h, g, blocks.as_deref())?.into(),
            StateSpec::DensePrefix { matrices } => DenseChain::new(matrices.clone())?.into(),
        })
    }
}
