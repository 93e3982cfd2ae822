//! A small statistical battery for sampled bit streams, following the NIST
//! SP 800-22 definitions of the individual tests.
//!
//! Passing the battery is evidence, not proof: it only says a stream does not
//! look biased to these particular statistics.

use std::io::Write;

use flate2::write::DeflateEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::bits::BitString;
use crate::error::{Error, Result};

pub const MIN_BITS: usize = 1000;
pub const BLOCK_FREQUENCY_M: usize = 128;
pub const SERIAL_M: usize = 2;
pub const APEN_M: usize = 2;

/// Confidence of the aggregate failure-count envelope.
pub const ENVELOPE_CONFIDENCE: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub pass: bool,
    /// Set when the test was not applicable and counted as a failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub stream_id: String,
    pub n_bits: usize,
    pub alpha: f64,
    pub tests: Vec<TestResult>,
    /// Deflate output bits per input bit. Reported, never judged.
    pub compression_ratio: f64,
}

impl BatteryReport {
    pub fn all_pass(&self) -> bool {
        self.tests.iter().all(|t| t.pass)
    }

    pub fn test(&self, name: &str) -> Option<&TestResult> {
        self.tests.iter().find(|t| t.name == name)
    }

    pub fn csv_header() -> &'static str {
        "stream_id,n_bits,test,statistic,p_value,pass"
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.tests
            .iter()
            .map(|t| format!("{},{},{},{:.16e},{:.16e},{}", self.stream_id, self.n_bits, t.name, t.statistic, t.p_value, t.pass))
            .collect()
    }
}

fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn igamc(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(a, x)
    }
}

/// Frequency (monobit): `s_obs = |Σ(2xᵢ − 1)|/√n`, `p = erfc(s_obs/√2)`.
pub fn monobit(bits: &[bool]) -> (f64, f64) {
    let n = bits.len() as f64;
    let s: i64 = bits.iter().map(|&b| if b { 1 } else { -1 }).sum();
    let s_obs = (s as f64).abs() / n.sqrt();
    (s_obs, erfc(s_obs / std::f64::consts::SQRT_2))
}

/// Frequency within blocks of `m` bits; the tail beyond the last full block is dropped.
pub fn block_frequency(bits: &[bool], m: usize) -> (f64, f64) {
    let blocks = bits.len() / m;
    let chi2: f64 = bits
        .chunks_exact(m)
        .map(|c| {
            let pi = c.iter().filter(|&&b| b).count() as f64 / m as f64;
            (pi - 0.5).powi(2)
        })
        .sum::<f64>()
        * 4.0
        * m as f64;
    (chi2, igamc(blocks as f64 / 2.0, chi2 / 2.0))
}

/// Runs test. Returns `None` when the frequency prerequisite
/// `|π − 1/2| < 2/√n` fails.
pub fn runs(bits: &[bool]) -> Option<(f64, f64)> {
    let n = bits.len() as f64;
    let pi = bits.iter().filter(|&&b| b).count() as f64 / n;
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return None;
    }
    let v = 1 + bits.windows(2).filter(|w| w[0] != w[1]).count();
    let v = v as f64;
    let q = pi * (1.0 - pi);
    let p = erfc((v - 2.0 * n * q).abs() / (2.0 * (2.0 * n).sqrt() * q));
    Some((v, p))
}

/// `ψ²_m` over overlapping (cyclic) `m`-bit patterns.
fn psi_sq(bits: &[bool], m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let n = bits.len();
    let mut counts = vec![0u64; 1 << m];
    for i in 0..n {
        let idx = (0..m).fold(0usize, |acc, j| (acc << 1) | bits[(i + j) % n] as usize);
        counts[idx] += 1;
    }
    let sum: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    (1u64 << m) as f64 / n as f64 * sum - n as f64
}

/// Serial test of order `m ≥ 2`: `(∇ψ², p₁, ∇²ψ², p₂)`.
pub fn serial(bits: &[bool], m: usize) -> (f64, f64, f64, f64) {
    let (a, b, c) = (psi_sq(bits, m), psi_sq(bits, m - 1), psi_sq(bits, m.saturating_sub(2)));
    let d1 = a - b;
    let d2 = a - 2.0 * b + c;
    let p1 = igamc((1u64 << (m - 2)) as f64, d1 / 2.0);
    let p2 = igamc((m as f64 - 3.0).exp2(), d2 / 2.0);
    (d1, p1, d2, p2)
}

/// Cumulative sums, forward or backward: `(z, p)`.
pub fn cusum(bits: &[bool], forward: bool) -> (f64, f64) {
    let n = bits.len() as f64;
    let step = |b: &bool| if *b { 1i64 } else { -1 };
    let mut s = 0i64;
    let mut z = 0i64;
    let mut visit = |b: &bool| {
        s += step(b);
        z = z.max(s.abs());
    };
    if forward {
        bits.iter().for_each(&mut visit);
    } else {
        bits.iter().rev().for_each(&mut visit);
    }
    let z = z as f64;
    let sq = n.sqrt();
    // Loop bounds follow the reference implementation: start truncated toward zero.
    let sum_over = |lo: f64, hi: f64, f: &dyn Fn(f64) -> f64| -> f64 {
        let mut k = lo.trunc();
        let mut acc = 0.0;
        while k <= hi {
            acc += f(k);
            k += 1.0;
        }
        acc
    };
    let first = sum_over((-n / z + 1.0) / 4.0, (n / z - 1.0) / 4.0, &|k| {
        phi((4.0 * k + 1.0) * z / sq) - phi((4.0 * k - 1.0) * z / sq)
    });
    let second = sum_over((-n / z - 3.0) / 4.0, (n / z - 1.0) / 4.0, &|k| {
        phi((4.0 * k + 3.0) * z / sq) - phi((4.0 * k + 1.0) * z / sq)
    });
    (z, (1.0 - first + second).clamp(0.0, 1.0))
}

fn phi_m(bits: &[bool], m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let n = bits.len();
    let mut counts = vec![0u64; 1 << m];
    for i in 0..n {
        let idx = (0..m).fold(0usize, |acc, j| (acc << 1) | bits[(i + j) % n] as usize);
        counts[idx] += 1;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let f = c as f64 / n as f64;
            f * f.ln()
        })
        .sum()
}

/// Approximate entropy of order `m`: `(χ², p)`.
pub fn approximate_entropy(bits: &[bool], m: usize) -> (f64, f64) {
    let n = bits.len() as f64;
    let apen = phi_m(bits, m) - phi_m(bits, m + 1);
    let chi2 = 2.0 * n * (std::f64::consts::LN_2 - apen);
    (chi2, igamc((m as f64 - 1.0).exp2(), chi2 / 2.0))
}

/// Deflate output size in bits divided by the input length.
pub fn compression_ratio(bits: &[bool]) -> f64 {
    if bits.is_empty() {
        return 0.0;
    }
    let bytes: Vec<u8> = bits.chunks(8).map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | (b as u8) << (7 - i))).collect();
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::default());
    enc.write_all(&bytes).expect("writing to a Vec cannot fail");
    let out = enc.finish().expect("writing to a Vec cannot fail");
    8.0 * out.len() as f64 / bits.len() as f64
}

/// Every test of the battery on one stream. Deterministic in the bits.
pub fn run_battery(bits: &BitString, stream_id: &str, alpha: f64) -> Result<BatteryReport> {
    let x = bits.bits();
    if x.len() < MIN_BITS {
        return Err(Error::InsufficientData { got: x.len(), need: MIN_BITS });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::BadQuery(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let result = |name: &str, (statistic, p_value): (f64, f64)| TestResult {
        name: name.into(),
        statistic,
        p_value,
        pass: p_value >= alpha,
        note: None,
    };
    let mut tests = vec![
        result("monobit", monobit(x)),
        result("block_frequency", block_frequency(x, BLOCK_FREQUENCY_M)),
    ];
    tests.push(match runs(x) {
        Some(r) => result("runs", r),
        None => TestResult {
            name: "runs".into(),
            statistic: f64::NAN,
            p_value: 0.0,
            pass: false,
            note: Some("frequency prerequisite failed".into()),
        },
    });
    let (d1, p1, d2, p2) = serial(x, SERIAL_M);
    tests.push(result("serial_1", (d1, p1)));
    tests.push(result("serial_2", (d2, p2)));
    tests.push(result("cusum_forward", cusum(x, true)));
    tests.push(result("cusum_backward", cusum(x, false)));
    tests.push(result("approximate_entropy", approximate_entropy(x, APEN_M)));
    Ok(BatteryReport {
        stream_id: stream_id.into(),
        n_bits: x.len(),
        alpha,
        tests,
        compression_ratio: compression_ratio(x),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestAggregate {
    pub name: String,
    pub failures: usize,
    pub pass_rate: f64,
    /// `failures > envelope_max_failures`.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateSummary {
    pub streams: usize,
    pub alpha: f64,
    /// Largest failure count inside the 99% binomial envelope for `streams` trials at rate `alpha`.
    pub envelope_max_failures: u64,
    pub tests: Vec<TestAggregate>,
    pub any_flagged: bool,
    pub mean_compression_ratio: f64,
}

/// Smallest `k` with `P[Binomial(trials, alpha) ≤ k] ≥ confidence`.
pub fn binomial_envelope(trials: u64, alpha: f64, confidence: f64) -> u64 {
    let Ok(dist) = Binomial::new(alpha, trials) else {
        return trials;
    };
    (0..=trials).find(|&k| dist.cdf(k) >= confidence).unwrap_or(trials)
}

/// Per-test failure counts across streams, flagged against the binomial envelope.
pub fn aggregate(reports: &[BatteryReport]) -> AggregateSummary {
    let alpha = reports.first().map_or(0.01, |r| r.alpha);
    let streams = reports.len();
    let envelope_max_failures = binomial_envelope(streams as u64, alpha, ENVELOPE_CONFIDENCE);
    let mut names: Vec<String> = Vec::new();
    for r in reports {
        for t in &r.tests {
            if !names.contains(&t.name) {
                names.push(t.name.clone());
            }
        }
    }
    let tests: Vec<TestAggregate> = names
        .into_iter()
        .map(|name| {
            let failures = reports.iter().filter(|r| r.test(&name).is_some_and(|t| !t.pass)).count();
            TestAggregate {
                pass_rate: 1.0 - failures as f64 / streams as f64,
                flagged: failures as u64 > envelope_max_failures,
                name,
                failures,
            }
        })
        .collect();
    AggregateSummary {
        streams,
        alpha,
        envelope_max_failures,
        any_flagged: tests.iter().any(|t| t.flagged),
        tests,
        mean_compression_ratio: reports.iter().map(|r| r.compression_ratio).sum::<f64>() / streams.max(1) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn b(s: &str) -> Vec<bool> {
        s.chars().map(|c| c == '1').collect()
    }

    const EPSILON_100: &str = "1100100100001111110110101010001000100001011010001100001000110100110001001100011001100010100010111000";

    #[test]
    fn reference_vectors() {
        assert!((monobit(&b("1011010101")).1 - 0.527089).abs() < 1e-6);
        assert!((monobit(&b(EPSILON_100)).1 - 0.109599).abs() < 1e-6);
        assert!((block_frequency(&b("0110011010"), 3).1 - 0.801252).abs() < 1e-6);
        assert!((runs(&b("1001101011")).unwrap().1 - 0.147232).abs() < 1e-6);
        let (_, p1, _, p2) = serial(&b("0011011101"), 3);
        assert!((p1 - 0.808792).abs() < 1e-6 && (p2 - 0.670320).abs() < 1e-6);
        assert!((approximate_entropy(&b("0100110101"), 3).1 - 0.261961).abs() < 1e-6);
        assert!((cusum(&b("1011010111"), true).1 - 0.4116588).abs() < 1e-6);
    }

    #[test]
    fn degenerate_streams_fail_designated_tests() {
        let zeros = BitString::from_bits(vec![false; 10_000]);
        let r = run_battery(&zeros, "zeros", 0.01).unwrap();
        assert!(r.test("monobit").unwrap().p_value < 1e-100 && !r.test("monobit").unwrap().pass);
        let alt = BitString::from_bits((0..10_000).map(|i| i % 2 == 1).collect());
        let r = run_battery(&alt, "alt", 0.01).unwrap();
        assert!(r.test("monobit").unwrap().pass);
        assert!(!r.test("runs").unwrap().pass);
        assert!(r.compression_ratio < 0.1);
    }

    #[test]
    fn short_streams_are_refused() {
        let short = BitString::from_bits(vec![true; 999]);
        assert!(matches!(run_battery(&short, "s", 0.01), Err(Error::InsufficientData { got: 999, need: 1000 })));
    }

    #[test]
    fn uniform_stream_passes_and_is_deterministic() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(1234);
        let bits = BitString::from_bits((0..100_000).map(|_| rng.random::<bool>()).collect());
        let a = run_battery(&bits, "u", 0.01).unwrap();
        assert_eq!(a, run_battery(&bits, "u", 0.01).unwrap());
        assert!(a.tests.iter().all(|t| (0.0..=1.0).contains(&t.p_value)));
        assert!(a.compression_ratio > 0.99);
    }

    #[test]
    fn envelope() {
        assert_eq!(binomial_envelope(100, 0.01, 0.99), 4);
        assert_eq!(binomial_envelope(1, 0.01, 0.99), 0);
    }

    #[test]
    fn aggregate_cases() {
        let zeros = BitString::from_bits(vec![false; 2000]);
        let one = run_battery(&zeros, "z", 0.01).unwrap();
        let s = aggregate(std::slice::from_ref(&one));
        assert_eq!(s.streams, 1);
        for t in &s.tests {
            assert_eq!(t.failures == 0, one.test(&t.name).unwrap().pass);
        }
        let many = vec![one; 100];
        let s = aggregate(&many);
        let mono = s.tests.iter().find(|t| t.name == "monobit").unwrap();
        assert!(mono.flagged && mono.pass_rate == 0.0);
    }
}
