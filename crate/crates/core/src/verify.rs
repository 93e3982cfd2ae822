//! Numerical checks of the coordinate-pairing identity, the quadratic-form
//! bounds for `d_n`, and the constraints of the generalised block family.
//!
//! Every check returns a report with a signed worst margin: how far inside the
//! allowed region the worst trial landed. A check passes when
//! `worst_margin ≥ −slack`.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixcore::{
    complement_pair_sum, complement_pair_sum_enumerated, is_density_matrix, kron, product_amplitudes, DenseCap,
    QubitVector,
};
use crate::measurement::random_bloch_vector;
use crate::states::{dn_corner_count, DensityBlock, FIRST_BLOCK};

/// Slack used by the lemma checks.
pub const LEMMA_SLACK: f64 = 1e-12;

/// Trials that are also evaluated through a dense or enumerated oracle.
const ORACLE_TRIALS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma_id: String,
    pub trials: usize,
    pub worst_margin: f64,
    pub slack: f64,
    pub pass: bool,
    pub violations: usize,
    pub parameters: BTreeMap<String, String>,
    /// Largest disagreement between the fast evaluation and its oracle, if one ran.
    pub oracle_max_deviation: Option<f64>,
}

/// Per-trial generator: the base seed selects the key, the trial the stream.
/// Results do not depend on how trials are scheduled.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// `n` independent factors, uniform on the Bloch sphere.
pub fn random_factors(rng: &mut ChaCha20Rng, n: usize) -> Vec<QubitVector> {
    (0..n).map(|_| random_bloch_vector(rng)).collect()
}

#[derive(Clone, Copy)]
struct Trial {
    margin: f64,
    violation: bool,
    oracle: Option<f64>,
}

struct Tally {
    worst_margin: f64,
    violations: usize,
    oracle: Option<f64>,
}

fn run_trials(trials: usize, slack: f64, f: impl Fn(usize) -> Trial + Sync) -> Tally {
    let identity = Tally { worst_margin: f64::INFINITY, violations: 0, oracle: None };
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let r = f(t);
            let violation = r.violation || !(r.margin >= -slack);
            Tally { worst_margin: r.margin, violations: violation as usize, oracle: r.oracle }
        })
        .reduce(
            || Tally { ..identity },
            |a, b| Tally {
                worst_margin: a.worst_margin.min(b.worst_margin),
                violations: a.violations + b.violations,
                oracle: match (a.oracle, b.oracle) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                },
            },
        )
}

fn report(lemma_id: &str, trials: usize, slack: f64, tally: Tally, parameters: &[(&str, String)]) -> LemmaReport {
    let worst_margin = if trials == 0 { 0.0 } else { tally.worst_margin };
    LemmaReport {
        lemma_id: lemma_id.into(),
        trials,
        worst_margin,
        slack,
        pass: tally.violations == 0 && worst_margin >= -slack,
        violations: tally.violations,
        parameters: parameters.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        oracle_max_deviation: tally.oracle,
    }
}

/// `|v_k|·|v_{k̄}| = Π_i |a_i||b_i|` for every `k < 2ⁿ⁻¹`, with `V` built by
/// Kronecker products of the factors. Margin is minus the worst relative deviation.
pub fn verify_kron_pairing(n: usize, trials: usize, seed: u64) -> Result<LemmaReport> {
    if n == 0 || n > 12 {
        return Err(Error::BadQuery(format!("kron pairing needs 1 <= n <= 12, got {n}")));
    }
    let tally = run_trials(trials, LEMMA_SLACK, |t| {
        let factors = random_factors(&mut trial_rng(seed, t), n);
        let v = factors
            .iter()
            .skip(1)
            .try_fold(factors[0].as_column(), |acc, f| kron(&acc, &f.as_column()))
            .expect("n <= 12 fits the default cap")
            .column_entries();
        let rhs: f64 = factors.iter().map(|f| f.a.norm() * f.b.norm()).product();
        let mask = (1usize << n) - 1;
        let worst = (0..1usize << (n - 1))
            .map(|k| {
                let lhs = v[k].norm() * v[mask ^ k].norm();
                if rhs > 0.0 {
                    (lhs - rhs).abs() / rhs
                } else {
                    lhs
                }
            })
            .fold(0.0, f64::max);
        Trial { margin: -worst, violation: false, oracle: None }
    });
    Ok(report("kron_pairing", trials, LEMMA_SLACK, tally, &[("n", n.to_string()), ("seed", seed.to_string())]))
}

/// `2⁻ⁿ(1 − 2/n) ≤ ⟨W|d_n|W⟩ ≤ 2⁻ⁿ(1 + 2/n)` for random product vectors `W`.
/// For `n ≤ 10` the first trials are re-evaluated against the dense block.
pub fn verify_quadratic_bounds(n: usize, trials: usize, seed: u64) -> Result<LemmaReport> {
    if n < FIRST_BLOCK {
        return Err(Error::BadQuery(format!("quadratic bounds apply for n >= 5, got {n}")));
    }
    let block = DensityBlock::dn(n)?;
    let dense = (n <= 10).then(|| block.materialize(DenseCap(10))).transpose()?;
    let (lo, hi) = quadratic_bounds(n);
    let tally = run_trials(trials, LEMMA_SLACK, |t| {
        let factors = random_factors(&mut trial_rng(seed, t), n);
        let value = block.quadratic_form(&factors);
        let oracle = dense.as_ref().filter(|_| t < ORACLE_TRIALS).map(|d| {
            let w = product_amplitudes(&factors);
            (d.quadratic_form(&w).re - value).abs()
        });
        Trial { margin: (value - lo).min(hi - value), violation: false, oracle }
    });
    Ok(report("quadratic_bounds", trials, LEMMA_SLACK, tally, &[("n", n.to_string()), ("seed", seed.to_string())]))
}

/// `[2⁻ⁿ(1 − 2/n), 2⁻ⁿ(1 + 2/n)]`.
pub fn quadratic_bounds(n: usize) -> (f64, f64) {
    let d = (-(n as f64)).exp2();
    let w = 2.0 / n as f64;
    (d * (1.0 - w), d * (1.0 + w))
}

/// `|V†BV| = 2⁻ⁿ |Σ_{k<r_n} v̄_k v_{k̄}|`, `V` a product vector on `n − 1`
/// qubits and `B` the upper-right corner block of `d_n`.
pub fn corner_block_value(n: usize, v_factors: &[QubitVector]) -> f64 {
    (-(n as f64)).exp2() * complement_pair_sum(v_factors, &dn_corner_count(n)).norm()
}

/// `|V†BV| ≤ 2^{1−n}/n` for random product vectors `V` of `n − 1` qubits.
pub fn verify_corner_block_bound(n: usize, trials: usize, seed: u64) -> Result<LemmaReport> {
    if n < FIRST_BLOCK {
        return Err(Error::BadQuery(format!("corner bound applies for n >= 5, got {n}")));
    }
    DensityBlock::dn(n)?;
    let bound = (1.0 - n as f64).exp2() / n as f64;
    let r = dn_corner_count(n).to_u64().filter(|_| n <= 20);
    let tally = run_trials(trials, LEMMA_SLACK, |t| {
        let factors = random_factors(&mut trial_rng(seed, t), n - 1);
        let value = corner_block_value(n, &factors);
        let oracle = r.filter(|_| t < ORACLE_TRIALS).map(|r| {
            let slow = (-(n as f64)).exp2() * complement_pair_sum_enumerated(&factors, r).norm();
            (slow - value).abs()
        });
        Trial { margin: bound - value, violation: false, oracle }
    });
    Ok(report("corner_block_bound", trials, LEMMA_SLACK, tally, &[("n", n.to_string()), ("seed", seed.to_string())]))
}

/// Parameters of the generalised family: block `n` has `h(n)` corner pairs of
/// value `g(n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub h: BTreeMap<usize, u64>,
    pub g: BTreeMap<usize, f64>,
    /// Last block checked; defaults to the largest block in both tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_f: Option<f64>,
    /// Blocks up to this size are materialized and checked as density matrices.
    #[serde(default = "default_dense_check")]
    pub dense_check_max: usize,
}

fn default_dense_check() -> usize {
    10
}

impl FamilySpec {
    pub fn from_fns(n_max: usize, h: impl Fn(usize) -> u64, g: impl Fn(usize) -> f64) -> Self {
        let range = FIRST_BLOCK..=n_max;
        Self {
            h: range.clone().map(|n| (n, h(n))).collect(),
            g: range.map(|n| (n, g(n))).collect(),
            n_max: Some(n_max),
            target_delta: None,
            target_f: None,
            dense_check_max: default_dense_check(),
        }
    }

    /// `h(n) = ⌊2ⁿ/n⌋`, `g(n) = 2⁻ⁿ`: the blocks `d_n`.
    pub fn rho(n_max: usize) -> Self {
        Self::from_fns(n_max, |n| (1u64 << n) / n as u64, |n| (-(n as f64)).exp2())
    }

    fn last(&self) -> usize {
        self.n_max.unwrap_or_else(|| {
            let h = self.h.keys().next_back().copied().unwrap_or(0);
            let g = self.g.keys().next_back().copied().unwrap_or(0);
            h.min(g)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyRow {
    pub n: usize,
    pub h: u64,
    pub g: f64,
    /// `Π (1 − h 2⁻ⁿ)` up to `n`.
    pub support_product: f64,
    /// `Π (1 − h (2⁻ⁿ − g))` up to `n`.
    pub delta_product: f64,
    /// `Π (1 − 4g²h²/(1 − 2gh)²)` up to `n`; `None` once `1 − 2gh ≤ 0`.
    pub f_product: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityCheck {
    pub n: usize,
    pub is_density: bool,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyReport {
    pub n_max: usize,
    pub rows: Vec<FamilyRow>,
    pub support_monotone: bool,
    pub delta_monotone: bool,
    pub f_monotone: bool,
    /// First `n` with `1 − 2g(n)h(n) ≤ 0`.
    pub f_undefined_from: Option<usize>,
    pub delta_gap: Option<f64>,
    pub f_gap: Option<f64>,
    /// Every block equals `d_n` exactly.
    pub reduces_to_rho: bool,
    pub density_checks: Vec<DensityCheck>,
    pub pass: bool,
}

/// Partial products of the family at every `n ≤ n_max`, the `g(n) ≤ 2⁻ⁿ`
/// constraint, and density validity of the small blocks.
pub fn verify_family(spec: &FamilySpec) -> Result<FamilyReport> {
    let n_max = spec.last();
    if n_max < FIRST_BLOCK {
        return Err(Error::BadFamilyParams { n: n_max, reason: "tables must cover n = 5".into() });
    }
    let mut rows = Vec::new();
    let mut blocks = Vec::new();
    let (mut p1, mut p2, mut p3) = (1.0, 1.0, Some(1.0));
    let mut f_undefined_from = None;
    for n in FIRST_BLOCK..=n_max {
        let missing = |t: &str| Error::BadFamilyParams { n, reason: format!("{t} table has no entry") };
        let h = *spec.h.get(&n).ok_or_else(|| missing("h"))?;
        let g = *spec.g.get(&n).ok_or_else(|| missing("g"))?;
        let block = DensityBlock::general(n, h, g)?;
        let hf = h as f64;
        let diag = block.diag_value();
        p1 *= 1.0 - hf * diag;
        p2 *= 1.0 - hf * (diag - g);
        let denom = 1.0 - 2.0 * g * hf;
        if denom <= 0.0 && f_undefined_from.is_none() {
            f_undefined_from = Some(n);
        }
        p3 = p3.filter(|_| denom > 0.0).map(|p| p * (1.0 - 4.0 * g * g * hf * hf / (denom * denom)));
        rows.push(FamilyRow { n, h, g, support_product: p1, delta_product: p2, f_product: p3 });
        blocks.push(block);
    }
    let non_increasing = |vals: Vec<f64>| vals.windows(2).all(|w| w[1] <= w[0]);
    let support_monotone = non_increasing(rows.iter().map(|r| r.support_product).collect());
    let delta_monotone = non_increasing(rows.iter().map(|r| r.delta_product).collect());
    let f_monotone = non_increasing(rows.iter().map_while(|r| r.f_product).collect());
    let reduces_to_rho = blocks.iter().all(|b| DensityBlock::dn(b.n()).is_ok_and(|p| &p == b));
    let density_checks = blocks
        .iter()
        .filter(|b| b.n() <= spec.dense_check_max)
        .map(|b| {
            let diag = is_density_matrix(&b.materialize(DenseCap(spec.dense_check_max as u32))?, 1e-9);
            Ok(DensityCheck { n: b.n(), is_density: diag.is_density, min_eigenvalue: diag.min_eigenvalue })
        })
        .collect::<Result<Vec<_>>>()?;
    let last = rows.last().expect("range is non-empty");
    let delta_gap = spec.target_delta.map(|t| (last.delta_product - t).abs());
    let f_gap = spec.target_f.zip(last.f_product).map(|(t, v)| (v - t).abs());
    let pass = support_monotone
        && delta_monotone
        && f_monotone
        && f_undefined_from.is_none()
        && density_checks.iter().all(|c| c.is_density);
    Ok(FamilyReport {
        n_max,
        rows,
        support_monotone,
        delta_monotone,
        f_monotone,
        f_undefined_from,
        delta_gap,
        f_gap,
        reduces_to_rho,
        density_checks,
        pass,
    })
}

/// `|M_N| = Π_{n=5}^{N} (2ⁿ − ⌊2ⁿ/n⌋)`, exact.
pub fn support_rank_product(last: usize) -> BigUint {
    (FIRST_BLOCK..=last).map(|n| (BigUint::from(1u8) << n) - dn_corner_count(n)).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairing_one_qubit_and_hadamard() {
        let r = verify_kron_pairing(1, 20, 1).unwrap();
        assert!(r.pass && r.worst_margin > -1e-15);
        let h = vec![QubitVector::hadamard(false); 6];
        let v = product_amplitudes(&h);
        for k in 0..32 {
            assert!((v[k].norm() * v[63 ^ k].norm() - 1.0 / 64.0).abs() < 1e-15);
        }
    }

    #[test]
    fn pairing_random() {
        let r = verify_kron_pairing(8, 200, 3).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(verify_kron_pairing(13, 1, 0).is_err());
    }

    #[test]
    fn quadratic_examples() {
        let b = DensityBlock::dn(5).unwrap();
        let std: Vec<_> = (0..5).map(|i| QubitVector::standard(i % 2 == 0)).collect();
        assert_eq!(b.quadratic_form(&std), 1.0 / 32.0);
        let had = vec![QubitVector::hadamard(false); 5];
        assert!((b.quadratic_form(&had) - 11.0 / 256.0).abs() < 1e-16);
        assert!(11.0 / 256.0 <= quadratic_bounds(5).1);
        let r = verify_quadratic_bounds(7, 2000, 4).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.oracle_max_deviation.unwrap() < 1e-10);
        assert!(verify_quadratic_bounds(4, 1, 0).is_err());
    }

    #[test]
    fn corner_examples() {
        let had = vec![QubitVector::hadamard(false); 4];
        assert!((corner_block_value(5, &had) - 6.0 / 512.0).abs() < 1e-16);
        assert!(6.0 / 512.0 <= (-4f64).exp2() / 5.0);
        let mut zero = had.clone();
        zero[2] = QubitVector::standard(false);
        assert_eq!(corner_block_value(5, &zero), 0.0);
        let r = verify_corner_block_bound(8, 2000, 5).unwrap();
        assert!(r.pass && r.oracle_max_deviation.unwrap() < 1e-15, "{r:?}");
    }

    #[test]
    fn deterministic_across_runs() {
        assert_eq!(verify_quadratic_bounds(9, 500, 77).unwrap(), verify_quadratic_bounds(9, 500, 77).unwrap());
    }

    #[test]
    fn family_reduces_to_rho() {
        let r = verify_family(&FamilySpec::rho(12)).unwrap();
        assert!(r.reduces_to_rho && r.pass);
        for row in &r.rows {
            // With g = 2⁻ⁿ every factor of the δ-product is exactly 1.
            assert_eq!(row.delta_product, 1.0);
        }
        assert!((r.rows[4].support_product - crate::qmlt::witness_tau_exact(9)).abs() < 1e-15);
    }

    #[test]
    fn family_diagonal() {
        let mut spec = FamilySpec::from_fns(20, |_| 0, |_| 1e-9);
        spec.g.iter_mut().for_each(|(n, g)| *g = g.min((-(*n as f64)).exp2()));
        let r = verify_family(&spec).unwrap();
        assert!(r.rows.iter().all(|row| row.support_product == 1.0 && row.delta_product == 1.0 && row.f_product == Some(1.0)));
        assert!(!r.reduces_to_rho);
    }

    #[test]
    fn family_half_corner_to_thirty() {
        let spec = FamilySpec::from_fns(30, |n| (1u64 << n) / n as u64, |n| (-(n as f64) - 1.0).exp2());
        let r = verify_family(&spec).unwrap();
        assert_eq!(r.rows.len(), 26);
        assert!(r.support_monotone && r.delta_monotone && r.f_monotone && r.pass);
        assert!(r.rows.last().unwrap().delta_product < 1.0);
    }

    #[test]
    fn family_rejects_large_g() {
        let mut spec = FamilySpec::rho(8);
        spec.g.insert(6, 0.02);
        assert!(matches!(verify_family(&spec), Err(Error::BadFamilyParams { n: 6, .. })));
        spec.g.remove(&6);
        assert!(matches!(verify_family(&spec), Err(Error::BadFamilyParams { n: 6, .. })));
    }

    #[test]
    fn rank_product() {
        assert_eq!(support_rank_product(6), BigUint::from(1404u32));
    }
}
