//! Measurement systems and the induced premeasure on bit strings.
//!
//! Measuring `ρ` qubit by qubit, qubit `q` in the basis `(b⁰_q, b¹_q)`, gives
//! `p(τ) = tr[ρ_{|τ|} |⊗_q b^{τ(q)}_q⟩⟨⊗_q b^{τ(q)}_q|]`. Two evaluation routes
//! exist: a dense route straight from that trace, and a factored route for
//! block-product states that multiplies per-block measures.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::matrixcore::{product_amplitudes, DenseCap, QubitVector, C64};
use crate::states::{DenseStatePrefix, DensityBlock, FactoredState, State};
use crate::tol;

/// Identifier of the sampler's pseudo-random generator, recorded in every sample.
pub const SAMPLER_RNG: &str = "chacha20 (rand_chacha 0.9, seed_from_u64), u ~ U[0,1) via rand 0.9 f64; bit = 1 iff u >= P(0|prefix)";

/// Clamping beyond this is logged as a numeric-health warning.
const CLAMP_WARN: f64 = 1e-9;

/// A computable sequence of orthonormal bases of `ℂ²`, given by a finite generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisSpec", into = "BasisSpec")]
pub struct MeasurementSystem {
    spec: BasisSpec,
}

/// Serialized form of a [`MeasurementSystem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisSpec {
    Standard,
    Hadamard,
    /// Qubit `q` uses `b⁰ = (cos θ, sin θ)`, `b¹ = (−sin θ, cos θ)` with
    /// `θ = theta[q mod len]`.
    Rotation { theta: Vec<f64> },
    /// Qubit `q` uses `pairs[q mod len]`.
    Explicit { pairs: Vec<[QubitVector; 2]> },
}

impl TryFrom<BasisSpec> for MeasurementSystem {
    type Error = Error;

    fn try_from(spec: BasisSpec) -> Result<Self> {
        match &spec {
            BasisSpec::Rotation { theta } => {
                if theta.is_empty() || theta.iter().any(|t| !t.is_finite()) {
                    return Err(Error::BadQuery("rotation needs a non-empty list of finite angles".into()));
                }
            }
            BasisSpec::Explicit { pairs } => {
                if pairs.is_empty() {
                    return Err(Error::BadQuery("explicit basis list is empty".into()));
                }
                for (i, [b0, b1]) in pairs.iter().enumerate() {
                    for v in [b0, b1] {
                        if (v.norm_sqr() - 1.0).abs() > tol::NORM {
                            return Err(Error::NotOrthonormal(format!("pair {i}: vector not unit")));
                        }
                    }
                    if b0.inner(b1).norm() > tol::NORM {
                        return Err(Error::NotOrthonormal(format!("pair {i}: <b0|b1> = {}", b0.inner(b1))));
                    }
                }
            }
            BasisSpec::Standard | BasisSpec::Hadamard => {}
        }
        Ok(Self { spec })
    }
}

impl From<MeasurementSystem> for BasisSpec {
    fn from(m: MeasurementSystem) -> Self {
        m.spec
    }
}

impl MeasurementSystem {
    pub fn standard() -> Self {
        Self { spec: BasisSpec::Standard }
    }

    pub fn hadamard() -> Self {
        Self { spec: BasisSpec::Hadamard }
    }

    pub fn rotation(theta: Vec<f64>) -> Result<Self> {
        BasisSpec::Rotation { theta }.try_into()
    }

    pub fn explicit(pairs: Vec<[QubitVector; 2]>) -> Result<Self> {
        BasisSpec::Explicit { pairs }.try_into()
    }

    /// A periodic explicit system of `period` bases drawn uniformly on the
    /// Bloch sphere, each completed by its orthogonal vector.
    pub fn random(rng: &mut impl Rng, period: usize) -> Self {
        let pairs = (0..period.max(1))
            .map(|_| {
                let b0 = random_bloch_vector(rng);
                [b0, b0.orthogonal()]
            })
            .collect();
        Self { spec: BasisSpec::Explicit { pairs } }
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn id(&self) -> String {
        match &self.spec {
            BasisSpec::Standard => "standard".into(),
            BasisSpec::Hadamard => "hadamard".into(),
            BasisSpec::Rotation { theta } => format!("rotation[{}]", theta.len()),
            BasisSpec::Explicit { pairs } => format!("explicit[{}]", pairs.len()),
        }
    }

    /// `(b⁰, b¹)` for qubit `pos` (0-based).
    pub fn basis_at(&self, pos: usize) -> (QubitVector, QubitVector) {
        match &self.spec {
            BasisSpec::Standard => (QubitVector::standard(false), QubitVector::standard(true)),
            BasisSpec::Hadamard => (QubitVector::hadamard(false), QubitVector::hadamard(true)),
            BasisSpec::Rotation { theta } => {
                let (s, c) = theta[pos % theta.len()].sin_cos();
                (
                    QubitVector::new_unchecked(C64::new(c, 0.0), C64::new(s, 0.0)),
                    QubitVector::new_unchecked(C64::new(-s, 0.0), C64::new(c, 0.0)),
                )
            }
            BasisSpec::Explicit { pairs } => {
                let [b0, b1] = pairs[pos % pairs.len()];
                (b0, b1)
            }
        }
    }

    /// `b^{bit}` for qubit `pos`.
    pub fn vector(&self, pos: usize, bit: bool) -> QubitVector {
        let (b0, b1) = self.basis_at(pos);
        if bit {
            b1
        } else {
            b0
        }
    }

    /// Factors of `⊗_q b^{τ(q)}_{offset+q}`.
    pub fn factors(&self, offset: usize, tau: &[bool]) -> Vec<QubitVector> {
        tau.iter().enumerate().map(|(q, &b)| self.vector(offset + q, b)).collect()
    }
}

/// Uniform on the Bloch sphere.
pub fn random_bloch_vector(rng: &mut impl Rng) -> QubitVector {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    QubitVector::bloch(z.acos(), phi)
}

fn clamp_probability(x: f64, context: &str) -> f64 {
    if !(-CLAMP_WARN..=1.0 + CLAMP_WARN).contains(&x) {
        log::warn!("{context}: probability {x:e} clamped to [0, 1]");
    }
    x.clamp(0.0, 1.0)
}

/// `tr[ρ_n P_τ]` straight from the dense prefix.
pub fn premeasure_dense(prefix: &DenseStatePrefix, basis: &MeasurementSystem, tau: &BitString) -> Result<f64> {
    if tau.len() != prefix.depth {
        return Err(Error::BadQuery(format!("|tau| = {} but prefix depth is {}", tau.len(), prefix.depth)));
    }
    let w = product_amplitudes(&basis.factors(0, tau.bits()));
    Ok(clamp_probability(prefix.rho.quadratic_form(&w).re, "premeasure_dense"))
}

/// `p(τ)` for every `τ` of length `prefix.depth`, indexed by [`BitString::index`].
///
/// Rotates `ρ` into the measurement basis one qubit at a time, `U† ρ U` with
/// `U = ⊗_q [b⁰_q b¹_q]`, and reads off the diagonal.
pub fn premeasure_table_dense(prefix: &DenseStatePrefix, basis: &MeasurementSystem) -> Vec<f64> {
    let d = prefix.rho.rows();
    let mut m: Vec<C64> = (0..d * d).map(|k| prefix.rho.get(k / d, k % d)).collect();
    for q in 0..prefix.depth {
        let (b0, b1) = basis.basis_at(q);
        let bit = 1usize << q;
        for i in (0..d).filter(|i| i & bit == 0) {
            let (r0, r1) = (i * d, (i | bit) * d);
            for j in 0..d {
                let (x, y) = (m[r0 + j], m[r1 + j]);
                m[r0 + j] = b0.a.conj() * x + b0.b.conj() * y;
                m[r1 + j] = b1.a.conj() * x + b1.b.conj() * y;
            }
        }
        for row in m.chunks_mut(d) {
            for j in (0..d).filter(|j| j & bit == 0) {
                let (x, y) = (row[j], row[j | bit]);
                row[j] = x * b0.a + y * b0.b;
                row[j | bit] = x * b1.a + y * b1.b;
            }
        }
    }
    (0..d).map(|k| clamp_probability(m[k * d + k].re, "premeasure_table_dense")).collect()
}

/// `μ_i(σ) = tr[d (|⊗_q b^{σ(q)}_{offset+q}⟩⟨…|)]` for a complete block.
pub fn block_measure(block: &DensityBlock, basis: &MeasurementSystem, offset: usize, sigma: &BitString) -> Result<f64> {
    if sigma.len() != block.n() {
        return Err(Error::BadQuery(format!("block has {} qubits, sigma has {}", block.n(), sigma.len())));
    }
    Ok(block.quadratic_form(&basis.factors(offset, sigma.bits())))
}

/// [`block_measure`] by direct enumeration of the corner entries, each
/// coordinate of the product vector formed as an `n`-term product.
/// `O(corner_count · n)`; used as a cross-check.
pub fn block_measure_enumerated(
    block: &DensityBlock,
    basis: &MeasurementSystem,
    offset: usize,
    sigma: &BitString,
) -> Result<f64> {
    use num_traits::ToPrimitive;
    let n = block.n();
    if sigma.len() != n {
        return Err(Error::BadQuery(format!("block has {n} qubits, sigma has {}", sigma.len())));
    }
    let r = block
        .corner_count()
        .to_u64()
        .filter(|&r| r <= 1 << 26)
        .ok_or_else(|| Error::CapExceeded { requested: n, cap: 26 })?;
    let f = basis.factors(offset, sigma.bits());
    let coord = |j: u64| -> C64 { f.iter().enumerate().map(|(q, v)| v.component((j >> q) & 1 == 1)).product() };
    let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let norm: f64 = f.iter().map(QubitVector::norm_sqr).product();
    let corner: f64 = (0..r).map(|j| 2.0 * (coord(j).conj() * coord(mask ^ j)).re).sum();
    Ok(block.diag_value() * norm + block.corner_value() * corner)
}

/// Per-block factors of `p(τ)` on a factored state: complete blocks give
/// [`block_measure`], a trailing partial block its prefix marginal.
fn factored_terms(state: &FactoredState, basis: &MeasurementSystem, tau: &BitString) -> Result<Vec<f64>> {
    let len = tau.len();
    state
        .blocks_covering(len)?
        .into_iter()
        .map(|(offset, block)| {
            let end = (offset + block.n()).min(len);
            Ok(block.prefix_marginal(&basis.factors(offset, &tau.bits()[offset..end])))
        })
        .collect()
}

/// `p(τ)` on a factored state, as a product of per-block terms.
pub fn premeasure_factored(state: &FactoredState, basis: &MeasurementSystem, tau: &BitString) -> Result<f64> {
    let p: f64 = factored_terms(state, basis, tau)?.into_iter().product();
    Ok(clamp_probability(p, "premeasure_factored"))
}

/// `ln p(τ)`; stays finite for long strings whose probability underflows.
pub fn log_premeasure_factored(state: &FactoredState, basis: &MeasurementSystem, tau: &BitString) -> Result<f64> {
    Ok(compensated_sum(factored_terms(state, basis, tau)?.into_iter().map(|t| t.max(0.0).ln())))
}

/// Neumaier summation. Log-probabilities of long strings add up thousands of
/// terms; plain summation loses about `1e-9` at `10⁴` bits.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + carry
}

/// Something that assigns probabilities to cylinders.
pub trait Premeasure {
    fn premeasure(&self, tau: &BitString) -> Result<f64>;
}

/// Dense route over any state presentation.
pub struct DensePremeasure<'a> {
    pub state: &'a State,
    pub basis: &'a MeasurementSystem,
    pub cap: DenseCap,
}

impl Premeasure for DensePremeasure<'_> {
    fn premeasure(&self, tau: &BitString) -> Result<f64> {
        premeasure_dense(&self.state.prefix(tau.len(), self.cap)?, self.basis, tau)
    }
}

/// Factored route.
pub struct FactoredPremeasure<'a> {
    pub state: &'a FactoredState,
    pub basis: &'a MeasurementSystem,
}

impl Premeasure for FactoredPremeasure<'_> {
    fn premeasure(&self, tau: &BitString) -> Result<f64> {
        premeasure_factored(self.state, self.basis, tau)
    }
}

/// The uniform measure `λ(τ) = 2^{−|τ|}`.
pub struct UniformMeasure;

impl Premeasure for UniformMeasure {
    fn premeasure(&self, tau: &BitString) -> Result<f64> {
        Ok((-(tau.len() as f64)).exp2())
    }
}

/// `|p(τ) − p(τ0) − p(τ1)|`.
pub fn additivity_check(source: &impl Premeasure, tau: &BitString) -> Result<f64> {
    let p = source.premeasure(tau)?;
    let p0 = source.premeasure(&tau.extended(false))?;
    let p1 = source.premeasure(&tau.extended(true))?;
    Ok((p - p0 - p1).abs())
}

/// A sampled measurement record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitSample {
    #[serde(skip)]
    pub bits: BitString,
    pub n_bits: usize,
    pub seed: u64,
    pub basis: MeasurementSystem,
    pub state_id: String,
    pub generator: String,
    /// `P(bit_k | bits_{<k})` for the outcome actually drawn.
    pub conditional_probs: Vec<f64>,
}

impl BitSample {
    /// `Σ_k ln P(bit_k | bits_{<k})`.
    pub fn log_probability(&self) -> f64 {
        compensated_sum(self.conditional_probs.iter().map(|c| c.ln()))
    }

    /// One line of `0`/`1`; empty for an empty sample.
    pub fn to_ascii(&self) -> String {
        if self.bits.is_empty() {
            String::new()
        } else {
            format!("{}\n", self.bits)
        }
    }

    /// Writes `<stem>.bits` and `<stem>.json`; returns both paths.
    pub fn write_files(&self, stem: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
        let bits_path = stem.with_extension("bits");
        let json_path = stem.with_extension("json");
        std::fs::write(&bits_path, self.to_ascii())?;
        let json = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(&json_path, json + "\n")?;
        Ok((bits_path, json_path))
    }
}

/// Parses ASCII `0`/`1` text; whitespace separates nothing and is ignored.
pub fn parse_ascii_bits(text: &str) -> Result<BitString> {
    text.chars().filter(|c| !c.is_whitespace()).collect::<String>().parse()
}

/// Draws `length` outcomes by sequential qubit-wise measurement:
/// `P(next = b | τ) = p(τb)/p(τ)`. Deterministic in `seed`.
pub fn sample_bits(state: &FactoredState, basis: &MeasurementSystem, length: usize, seed: u64) -> Result<BitSample> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut bits = BitString::new();
    let mut conditional_probs = Vec::with_capacity(length);
    for (offset, block) in state.blocks_covering(length)? {
        let n = block.n();
        let take = n.min(length - offset);
        let mut factors: Vec<QubitVector> = Vec::with_capacity(n);
        let mut norm = 1.0;
        let mut marginal = 1.0;
        for q in 0..take {
            let pos = offset + q;
            let (b0, b1) = basis.basis_at(pos);
            let extend = |v: QubitVector| -> f64 {
                if q + 1 < n {
                    block.partial_marginal(q + 1, norm * v.norm_sqr())
                } else {
                    let mut full = factors.clone();
                    full.push(v);
                    block.quadratic_form(&full)
                }
            };
            let m0 = extend(b0);
            let p0 = m0 / marginal;
            let u: f64 = rng.random();
            let bit = u >= p0;
            let (v, m) = if bit { (b1, extend(b1)) } else { (b0, m0) };
            if !(m > 0.0) {
                bits.push(bit);
                return Err(Error::MeasureZeroPrefix { prefix: bits.to_string() });
            }
            conditional_probs.push(m / marginal);
            bits.push(bit);
            norm *= v.norm_sqr();
            factors.push(v);
            marginal = m;
        }
    }
    Ok(BitSample {
        n_bits: bits.len(),
        bits,
        seed,
        basis: basis.clone(),
        state_id: state.id().to_string(),
        generator: SAMPLER_RNG.to_string(),
        conditional_probs,
    })
}

/// One independent stream per seed, in seed order. Parallel, but identical
/// to running [`sample_bits`] sequentially.
pub fn sample_many(
    state: &FactoredState,
    basis: &MeasurementSystem,
    length: usize,
    seeds: &[u64],
) -> Result<Vec<BitSample>> {
    seeds.par_iter().map(|&s| sample_bits(state, basis, length, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixcore::ComplexMatrix;
    use crate::states::{prefix_density, DenseChain};
    use rand_chacha::ChaCha8Rng;

    const CAP: DenseCap = DenseCap(12);

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn pure_zero_state_in_standard_basis() {
        let prefix = DenseStatePrefix::new(ComplexMatrix::from_real_diagonal(&[1.0, 0.0])).unwrap();
        let b = MeasurementSystem::standard();
        assert_eq!(premeasure_dense(&prefix, &b, &bs("0")).unwrap(), 1.0);
        assert_eq!(premeasure_dense(&prefix, &b, &bs("1")).unwrap(), 0.0);
    }

    #[test]
    fn d5_standard_is_uniform() {
        let prefix = prefix_density(&FactoredState::paper_rho(), 5, CAP).unwrap();
        for tau in BitString::all(5) {
            assert_eq!(premeasure_dense(&prefix, &MeasurementSystem::standard(), &tau).unwrap(), 1.0 / 32.0);
        }
    }

    #[test]
    fn d5_hadamard_all_zero() {
        let prefix = prefix_density(&FactoredState::paper_rho(), 5, CAP).unwrap();
        let h = MeasurementSystem::hadamard();
        let tau = bs("00000");
        let expected = 11.0 / 256.0;
        assert!((premeasure_dense(&prefix, &h, &tau).unwrap() - expected).abs() < 1e-15);
        let block = DensityBlock::dn(5).unwrap();
        assert!((block_measure(&block, &h, 0, &tau).unwrap() - expected).abs() < 1e-15);
        assert!((block_measure_enumerated(&block, &h, 0, &tau).unwrap() - expected).abs() < 1e-15);
        assert_eq!(expected, 0.04296875);
    }

    #[test]
    fn length_mismatch_is_bad_query() {
        let prefix = prefix_density(&FactoredState::paper_rho(), 3, CAP).unwrap();
        assert!(matches!(
            premeasure_dense(&prefix, &MeasurementSystem::standard(), &bs("01")),
            Err(Error::BadQuery(_))
        ));
    }

    #[test]
    fn table_matches_single_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = MeasurementSystem::random(&mut rng, 3);
        let prefix = prefix_density(&FactoredState::paper_rho(), 7, CAP).unwrap();
        let table = premeasure_table_dense(&prefix, &b);
        for tau in BitString::all(7) {
            let single = premeasure_dense(&prefix, &b, &tau).unwrap();
            assert!((table[tau.index()] - single).abs() < 1e-15);
        }
    }

    #[test]
    fn block_measure_within_bounds_and_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in 5..=12 {
            let block = DensityBlock::dn(n).unwrap();
            let (lo, hi) = block_bounds(n);
            for _ in 0..50 {
                let b = MeasurementSystem::random(&mut rng, 7);
                let sigma = BitString::from_index(rng.random_range(0..1 << n), n);
                let offset = rng.random_range(0..40);
                let fast = block_measure(&block, &b, offset, &sigma).unwrap();
                let slow = block_measure_enumerated(&block, &b, offset, &sigma).unwrap();
                assert!((fast - slow).abs() < 1e-15);
                assert!(fast >= lo - 1e-12 && fast <= hi + 1e-12);
            }
        }
    }

    fn block_bounds(n: usize) -> (f64, f64) {
        let d = (-(n as f64)).exp2();
        (d * (1.0 - 2.0 / n as f64), d * (1.0 + 2.0 / n as f64))
    }

    #[test]
    fn standard_block_measure_is_flat() {
        let block = DensityBlock::dn(9).unwrap();
        for sigma in BitString::all(9).step_by(37) {
            assert_eq!(block_measure(&block, &MeasurementSystem::standard(), 3, &sigma).unwrap(), 1.0 / 512.0);
        }
    }

    #[test]
    fn factored_examples() {
        let rho = FactoredState::paper_rho();
        assert_eq!(premeasure_factored(&rho, &MeasurementSystem::hadamard(), &BitString::new()).unwrap(), 1.0);
        let tau: BitString = BitString::from_index(0x2d5_3c1, 23);
        assert_eq!(premeasure_factored(&rho, &MeasurementSystem::standard(), &tau).unwrap(), (-23f64).exp2());
    }

    #[test]
    fn factored_matches_dense_on_two_blocks() {
        let rho = FactoredState::paper_rho();
        let h = MeasurementSystem::hadamard();
        let prefix = prefix_density(&rho, 11, CAP).unwrap();
        let table = premeasure_table_dense(&prefix, &h);
        for tau in BitString::all(11).step_by(13) {
            let f = premeasure_factored(&rho, &h, &tau).unwrap();
            assert!((f - table[tau.index()]).abs() < 1e-10);
            let d5 = block_measure(&DensityBlock::dn(5).unwrap(), &h, 0, &tau.slice(0, 5)).unwrap();
            let d6 = block_measure(&DensityBlock::dn(6).unwrap(), &h, 5, &tau.slice(5, 11)).unwrap();
            assert_eq!(f, d5 * d6);
        }
    }

    #[test]
    fn additivity_paths() {
        let rho = FactoredState::paper_rho();
        let h = MeasurementSystem::hadamard();
        let state: State = rho.clone().into();
        let dense = DensePremeasure { state: &state, basis: &h, cap: CAP };
        let fact = FactoredPremeasure { state: &rho, basis: &h };
        for tau in ["", "0", "0110", "01101", "1011000010"] {
            let t = bs(tau);
            assert!(additivity_check(&dense, &t).unwrap() <= 1e-10);
            assert!(additivity_check(&fact, &t).unwrap() <= 1e-10);
        }
        assert_eq!(additivity_check(&UniformMeasure, &bs("0101")).unwrap(), 0.0);
    }

    #[test]
    fn dense_chain_additivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = ComplexMatrix::from_fn(16, 16, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let top = g.matmul(&g.adjoint()).unwrap();
        let top = top.scaled(top.trace().inv());
        let state: State = DenseChain::from_top(top).unwrap().into();
        let b = MeasurementSystem::random(&mut rng, 4);
        let src = DensePremeasure { state: &state, basis: &b, cap: CAP };
        for k in 0..4 {
            for tau in BitString::all(k) {
                assert!(additivity_check(&src, &tau).unwrap() <= 1e-12);
            }
        }
    }

    #[test]
    fn sampling_standard_basis_is_the_generator_stream() {
        let rho = FactoredState::paper_rho();
        let s = sample_bits(&rho, &MeasurementSystem::standard(), 500, 42).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let expected: Vec<bool> = (0..500).map(|_| rng.random::<f64>() >= 0.5).collect();
        assert_eq!(s.bits.bits(), expected.as_slice());
        assert!(s.conditional_probs.iter().all(|&c| c == 0.5));
    }

    #[test]
    fn empty_sample() {
        let s = sample_bits(&FactoredState::paper_rho(), &MeasurementSystem::hadamard(), 0, 1).unwrap();
        assert!(s.bits.is_empty() && s.conditional_probs.is_empty());
    }

    #[test]
    fn sample_conditionals_multiply_to_premeasure() {
        let rho = FactoredState::paper_rho();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = MeasurementSystem::random(&mut rng, 5);
        for seed in 0..5 {
            let s = sample_bits(&rho, &b, 60, seed).unwrap();
            let prod: f64 = s.conditional_probs.iter().product();
            let p = premeasure_factored(&rho, &b, &s.bits).unwrap();
            assert!((prod - p).abs() <= 1e-9 * p.max(1e-300) || (prod - p).abs() < 1e-30);
            assert!((s.log_probability() - log_premeasure_factored(&rho, &b, &s.bits).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn parallel_sampling_matches_sequential() {
        let rho = FactoredState::paper_rho();
        let h = MeasurementSystem::hadamard();
        let seeds: Vec<u64> = (1..=8).collect();
        let par = sample_many(&rho, &h, 300, &seeds).unwrap();
        for (s, seed) in par.iter().zip(&seeds) {
            assert_eq!(s, &sample_bits(&rho, &h, 300, *seed).unwrap());
        }
    }

    #[test]
    fn measure_zero_prefix_is_reported() {
        // A one-qubit pure |+⟩⟨+| block would need g = 1/2 = 2^-1: allowed.
        let block = DensityBlock::general(1, 1u32, 0.5).unwrap();
        let state = FactoredState::from_blocks(vec![block]);
        // In the Hadamard basis outcome 1 has probability 0, outcome 0 probability 1.
        let s = sample_bits(&state, &MeasurementSystem::hadamard(), 1, 3).unwrap();
        assert_eq!(s.bits.to_string(), "0");
        let flipped = MeasurementSystem::explicit(vec![[QubitVector::hadamard(true), QubitVector::hadamard(false)]]).unwrap();
        // Now outcome 0 has probability 0: any u ≥ 0 picks 1, which has probability 1.
        assert_eq!(sample_bits(&state, &flipped, 1, 3).unwrap().bits.to_string(), "1");
    }

    #[test]
    fn basis_json_round_trip_and_validation() {
        let json = r#"{"kind":"rotation","theta":[0.1,0.7]}"#;
        let b: MeasurementSystem = serde_json::from_str(json).unwrap();
        assert_eq!(serde_json::to_string(&b).unwrap(), json);
        let bad = r#"{"kind":"explicit","pairs":[[[[1,0],[0,0]],[[0.6,0],[0.8,0]]]]}"#;
        assert!(serde_json::from_str::<MeasurementSystem>(bad).is_err());
    }
}
