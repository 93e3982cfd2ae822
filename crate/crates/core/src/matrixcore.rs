//! Dense complex linear algebra under a fixed Kronecker convention.
//!
//! `kron(A, B)` lets the index of `A` vary fastest:
//! `[a₁,b₁]ᵀ ⊗ [a₂,b₂]ᵀ = [a₁a₂, b₁a₂, a₁b₂, b₁b₂]ᵀ`. This is the reverse of
//! the textbook ordering, so `kron(A, B)` here equals `B ⊗_std A`. Indices in
//! code are 0-based; entry `(i, j)` is the 1-based entry `(i+1, j+1)`.

use nalgebra::DMatrix;
use num_bigint::BigUint;
use num_traits::Zero;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tol;

pub type C64 = num_complex::Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Upper bound on dense matrix dimension, as a power-of-two exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseCap(pub u32);

impl Default for DenseCap {
    fn default() -> Self {
        DenseCap(12)
    }
}

impl DenseCap {
    pub const ENV_VAR: &'static str = "QMEAS_DENSE_CAP";

    /// The default cap, overridden by `QMEAS_DENSE_CAP` when it parses.
    pub fn from_env() -> Self {
        std::env::var(Self::ENV_VAR)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .map(DenseCap)
            .unwrap_or_default()
    }

    pub fn check_qubits(self, qubits: usize) -> Result<()> {
        if qubits > self.0 as usize {
            Err(Error::CapExceeded { requested: qubits, cap: self.0 })
        } else {
            Ok(())
        }
    }

    fn check_dim(self, dim: usize) -> Result<()> {
        if dim > 1usize << self.0 {
            let requested = usize::BITS as usize - (dim - 1).leading_zeros() as usize;
            Err(Error::CapExceeded { requested, cap: self.0 })
        } else {
            Ok(())
        }
    }
}

/// A dense complex matrix. Column vectors are `d × 1` matrices.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl std::fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ComplexMatrix({}x{})", self.rows(), self.cols())
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self(DMatrix::from_fn(rows, cols, f))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        Self::from_fn(d, d, |i, j| if i == j { C64::new(diag[i], 0.0) } else { ZERO })
    }

    pub fn column(entries: &[C64]) -> Self {
        Self(DMatrix::from_column_slice(entries.len(), 1, entries))
    }

    /// Builds from row-major nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::BadShape("ragged matrix rows".into()));
        }
        Ok(Self::from_fn(r, c, |i, j| rows[i][j]))
    }

    pub fn to_rows(&self) -> Vec<Vec<C64>> {
        (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn inner(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: C64) {
        self.0[(i, j)] = value;
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    /// Number of qubits of a square power-of-two matrix.
    pub fn qubits(&self) -> Result<usize> {
        if !self.is_square() || !self.rows().is_power_of_two() {
            return Err(Error::BadShape(format!(
                "expected a square power-of-two matrix, got {}x{}",
                self.rows(),
                self.cols()
            )));
        }
        Ok(self.rows().trailing_zeros() as usize)
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols() != other.rows() {
            return Err(Error::BadShape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows(),
                self.cols(),
                other.rows(),
                other.cols()
            )));
        }
        Ok(Self(&self.0 * &other.0))
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self(&self.0 * factor)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    /// `tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        let n = self.rows();
        let mut acc = ZERO;
        for i in 0..n {
            for j in 0..self.cols() {
                acc += self.0[(i, j)] * other.0[(j, i)];
            }
        }
        acc
    }

    /// Maximum entry-wise modulus of `self − other`; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.0.shape() != other.0.shape() {
            return f64::INFINITY;
        }
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `max |M(i,j) − conj(M(j,i))|`.
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Entries of a column vector.
    pub fn column_entries(&self) -> Vec<C64> {
        self.0.column(0).iter().copied().collect()
    }

    /// `⟨v|M|v⟩` for a column vector `v`.
    pub fn quadratic_form(&self, v: &[C64]) -> C64 {
        let n = v.len();
        let mut acc = ZERO;
        for j in 0..n {
            if v[j] == ZERO {
                continue;
            }
            let mut col = ZERO;
            for i in 0..n {
                col += v[i].conj() * self.0[(i, j)];
            }
            acc += col * v[j];
        }
        acc
    }
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = self
            .to_rows()
            .into_iter()
            .map(|row| row.into_iter().map(|z| [z.re, z.im]).collect())
            .collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(deserializer)?;
        let rows: Vec<Vec<C64>> = rows
            .into_iter()
            .map(|row| row.into_iter().map(|[re, im]| C64::new(re, im)).collect())
            .collect();
        ComplexMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Kronecker product with the first factor's index varying fastest, checked
/// against the default dense cap.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    kron_capped(a, b, DenseCap::default())
}

pub fn kron_capped(a: &ComplexMatrix, b: &ComplexMatrix, cap: DenseCap) -> Result<ComplexMatrix> {
    let (ra, ca) = (a.rows(), a.cols());
    let (rb, cb) = (b.rows(), b.cols());
    let rows = ra.checked_mul(rb).ok_or(Error::CapExceeded { requested: usize::MAX, cap: cap.0 })?;
    let cols = ca.checked_mul(cb).ok_or(Error::CapExceeded { requested: usize::MAX, cap: cap.0 })?;
    cap.check_dim(rows.max(cols))?;
    let mut out = DMatrix::zeros(rows, cols);
    for jb in 0..cb {
        for ib in 0..rb {
            let y = b.0[(ib, jb)];
            if y == ZERO {
                continue;
            }
            for ja in 0..ca {
                for ia in 0..ra {
                    out[(ia + ra * ib, ja + ca * jb)] = a.0[(ia, ja)] * y;
                }
            }
        }
    }
    Ok(ComplexMatrix(out))
}

/// Traces out the last (slowest-index) qubit of a `2ⁿ × 2ⁿ` matrix.
pub fn partial_trace_last_qubit(rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = rho.qubits()?;
    if n == 0 {
        return Err(Error::BadShape("cannot trace a qubit out of a 1x1 matrix".into()));
    }
    let half = rho.rows() / 2;
    Ok(ComplexMatrix::from_fn(half, half, |i, j| rho.0[(i, j)] + rho.0[(i + half, j + half)]))
}

/// Traces out the last `count` qubits.
pub fn partial_trace_last_qubits(rho: &ComplexMatrix, count: usize) -> Result<ComplexMatrix> {
    let mut out = rho.clone();
    for _ in 0..count {
        out = partial_trace_last_qubit(&out)?;
    }
    Ok(out)
}

/// `Σ_v |v⟩⟨v|` over mutually orthonormal column vectors.
pub fn projector_from_vectors(vs: &[ComplexMatrix]) -> Result<ComplexMatrix> {
    let Some(first) = vs.first() else {
        return Err(Error::BadShape("empty vector list; dimension unknown".into()));
    };
    let dim = first.rows();
    let cols: Vec<Vec<C64>> = vs
        .iter()
        .map(|v| {
            if v.cols() != 1 || v.rows() != dim {
                Err(Error::BadShape(format!("expected {dim}x1 column vectors")))
            } else {
                Ok(v.column_entries())
            }
        })
        .collect::<Result<_>>()?;
    for (a, u) in cols.iter().enumerate() {
        for (b, w) in cols.iter().enumerate().skip(a) {
            let ip: C64 = u.iter().zip(w).map(|(x, y)| x.conj() * y).sum();
            let expected = if a == b { ONE } else { ZERO };
            if (ip - expected).norm() > tol::NORM {
                return Err(Error::NotOrthonormal(format!(
                    "<v{a}|v{b}> = {ip}, expected {expected}"
                )));
            }
        }
    }
    Ok(projector_unchecked(dim, &cols))
}

pub(crate) fn projector_unchecked(dim: usize, cols: &[Vec<C64>]) -> ComplexMatrix {
    let mut out = DMatrix::zeros(dim, dim);
    for v in cols {
        for j in 0..dim {
            let cj = v[j].conj();
            if cj == ZERO {
                continue;
            }
            for i in 0..dim {
                out[(i, j)] += v[i] * cj;
            }
        }
    }
    ComplexMatrix(out)
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<C64>,
}

/// Eigenpairs of a Hermitian matrix, sorted by ascending eigenvalue.
pub fn hermitian_eigensystem(m: &ComplexMatrix) -> Result<Vec<EigenPair>> {
    let dev = m.hermitian_deviation();
    if dev > tol::HERMITIAN {
        return Err(Error::NotHermitian(dev));
    }
    let eig = m.0.clone().symmetric_eigen();
    let mut pairs: Vec<EigenPair> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &value)| EigenPair {
            value,
            vector: eig.eigenvectors.column(k).iter().copied().collect(),
        })
        .collect();
    pairs.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(pairs)
}

/// Eigenvalues only, ascending.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Result<Vec<f64>> {
    let dev = m.hermitian_deviation();
    if dev > tol::HERMITIAN {
        return Err(Error::NotHermitian(dev));
    }
    let mut values: Vec<f64> = m.0.clone().symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityDiagnostic {
    pub is_density: bool,
    pub hermitian_deviation: f64,
    pub trace: f64,
    pub trace_imag: f64,
    pub min_eigenvalue: f64,
}

/// Hermitian within `tol`, unit trace within `tol`, spectrum bounded below by `−tol`.
pub fn is_density_matrix(m: &ComplexMatrix, tol: f64) -> DensityDiagnostic {
    let hermitian_deviation = m.hermitian_deviation();
    let tr = if m.is_square() { m.trace() } else { C64::new(f64::NAN, 0.0) };
    let min_eigenvalue = if m.is_square() && hermitian_deviation <= tol {
        // Eigenvalues of the Hermitian part.
        let sym = ComplexMatrix(( &m.0 + m.0.adjoint()) * C64::new(0.5, 0.0));
        sym.0.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        f64::NAN
    };
    let is_density = hermitian_deviation <= tol
        && (tr.re - 1.0).abs() <= tol
        && tr.im.abs() <= tol
        && min_eigenvalue >= -tol;
    DensityDiagnostic { is_density, hermitian_deviation, trace: tr.re, trace_imag: tr.im, min_eigenvalue }
}

/// A unit vector `[a, b]ᵀ` in `ℂ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitVector {
    pub a: C64,
    pub b: C64,
}

impl QubitVector {
    pub fn new(a: C64, b: C64) -> Result<Self> {
        let v = Self { a, b };
        if (v.norm_sqr() - 1.0).abs() > tol::NORM {
            return Err(Error::NotOrthonormal(format!("|a|²+|b|² = {}", v.norm_sqr())));
        }
        Ok(v)
    }

    pub const fn new_unchecked(a: C64, b: C64) -> Self {
        Self { a, b }
    }

    /// `|0⟩` or `|1⟩`.
    pub fn standard(bit: bool) -> Self {
        if bit {
            Self { a: ZERO, b: ONE }
        } else {
            Self { a: ONE, b: ZERO }
        }
    }

    /// `(|0⟩ ± |1⟩)/√2`.
    pub fn hadamard(bit: bool) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self { a: C64::new(s, 0.0), b: C64::new(if bit { -s } else { s }, 0.0) }
    }

    /// Point on the Bloch sphere: `[cos(θ/2), e^{iφ} sin(θ/2)]`.
    pub fn bloch(theta: f64, phi: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        Self { a: C64::new(c, 0.0), b: C64::from_polar(s, phi) }
    }

    /// The unit vector orthogonal to `self`, `[−conj(b), conj(a)]`.
    pub fn orthogonal(&self) -> Self {
        Self { a: -self.b.conj(), b: self.a.conj() }
    }

    pub fn component(&self, bit: bool) -> C64 {
        if bit {
            self.b
        } else {
            self.a
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.a.norm_sqr() + self.b.norm_sqr()
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.a.conj() * other.a + self.b.conj() * other.b
    }

    pub fn as_column(&self) -> ComplexMatrix {
        ComplexMatrix::column(&[self.a, self.b])
    }
}

impl Serialize for QubitVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        [[self.a.re, self.a.im], [self.b.re, self.b.im]].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for QubitVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let [[ar, ai], [br, bi]] = <[[f64; 2]; 2]>::deserialize(deserializer)?;
        QubitVector::new(C64::new(ar, ai), C64::new(br, bi)).map_err(serde::de::Error::custom)
    }
}

/// Coordinates of `⊗_q factors[q]`: entry `j` is `Π_q factors[q].component(bit_q(j))`.
pub fn product_amplitudes(factors: &[QubitVector]) -> Vec<C64> {
    let mut amps = vec![ONE];
    for f in factors {
        let mut next = Vec::with_capacity(amps.len() * 2);
        next.extend(amps.iter().map(|&x| x * f.a));
        next.extend(amps.iter().map(|&x| x * f.b));
        amps = next;
    }
    amps
}

/// `Σ_{j < count} conj(w_j) · w_{j̄}` for the product vector `w = ⊗ factors`,
/// where `j̄` is the bitwise complement of `j` over `factors.len()` bits.
///
/// Runs in `O(n)` regardless of `count` by walking the binary expansion of
/// `count` from its most significant bit: every `j < count` agrees with `count`
/// above some bit `t` where `count` has a one and `j` has a zero.
pub fn complement_pair_sum(factors: &[QubitVector], count: &BigUint) -> C64 {
    let n = factors.len();
    if count.is_zero() {
        return ZERO;
    }
    assert!(count.bits() <= n as u64, "pair count {count} does not fit in {n} bits");
    // conj(w_j) w_{j̄} factorises as Π_q h_q(bit_q(j)).
    let h: Vec<[C64; 2]> = factors.iter().map(|f| [f.a.conj() * f.b, f.b.conj() * f.a]).collect();
    let mut low = Vec::with_capacity(n + 1);
    low.push(ONE);
    for q in 0..n {
        let prev = low[q];
        low.push(prev * (h[q][0] + h[q][1]));
    }
    let mut sum = ZERO;
    let mut high = ONE;
    for t in (0..n).rev() {
        let bit = count.bit(t as u64);
        if bit {
            sum += high * h[t][0] * low[t];
        }
        high *= h[t][bit as usize];
    }
    sum
}

/// Reference evaluation of [`complement_pair_sum`] over explicit amplitudes.
pub fn complement_pair_sum_enumerated(factors: &[QubitVector], count: u64) -> C64 {
    let w = product_amplitudes(factors);
    let mask = w.len() - 1;
    (0..count as usize).map(|j| w[j].conj() * w[mask ^ j]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn random_matrix(rng: &mut impl Rng, r: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(r, cols, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_density(rng: &mut impl Rng, qubits: usize) -> ComplexMatrix {
        let d = 1 << qubits;
        let g = random_matrix(rng, d, d);
        let m = g.matmul(&g.adjoint()).unwrap();
        let tr = m.trace();
        m.scaled(tr.inv())
    }

    #[test]
    fn kron_vectors_follow_first_fastest_convention() {
        let (a1, b1, a2, b2) = (c(2.0), c(3.0), c(5.0), c(7.0));
        let v = kron(&ComplexMatrix::column(&[a1, b1]), &ComplexMatrix::column(&[a2, b2])).unwrap();
        assert_eq!(v.column_entries(), vec![a1 * a2, b1 * a2, a1 * b2, b1 * b2]);
    }

    #[test]
    fn kron_identity() {
        let i4 = kron(&ComplexMatrix::identity(2), &ComplexMatrix::identity(2)).unwrap();
        assert_eq!(i4, ComplexMatrix::identity(4));
    }

    #[test]
    fn kron_three_basis_vectors_matches_index_enumeration() {
        let e0 = ComplexMatrix::column(&[ONE, ZERO]);
        let e1 = ComplexMatrix::column(&[ZERO, ONE]);
        let v = kron(&kron(&e0, &e1).unwrap(), &e0).unwrap().column_entries();
        // Brute force: entry index = i1 + 2 i2 + 4 i3 over each factor's index.
        let factors = [[ONE, ZERO], [ZERO, ONE], [ONE, ZERO]];
        let mut oracle = vec![ZERO; 8];
        for i3 in 0..2 {
            for i2 in 0..2 {
                for i1 in 0..2 {
                    oracle[i1 + 2 * i2 + 4 * i3] = factors[0][i1] * factors[1][i2] * factors[2][i3];
                }
            }
        }
        assert_eq!(v, oracle);
        // 1-based position 3.
        assert_eq!(v.iter().position(|&z| z == ONE), Some(2));
    }

    #[test]
    fn kron_respects_cap() {
        let big = ComplexMatrix::identity(1 << 7);
        let err = kron_capped(&big, &big, DenseCap(12)).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { requested: 14, cap: 12 }));
    }

    #[test]
    fn partial_trace_of_product_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_density(&mut rng, 2);
        let sigma = random_density(&mut rng, 1);
        let pt = partial_trace_last_qubit(&kron(&rho, &sigma).unwrap()).unwrap();
        assert!(pt.max_abs_diff(&rho) < 1e-12);
    }

    #[test]
    fn partial_trace_of_bell_state_is_maximally_mixed() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = ComplexMatrix::column(&[c(s), ZERO, ZERO, c(s)]);
        let rho = bell.matmul(&bell.adjoint()).unwrap();
        let pt = partial_trace_last_qubit(&rho).unwrap();
        assert!(pt.max_abs_diff(&ComplexMatrix::identity(2).scaled(c(0.5))) < 1e-15);
    }

    #[test]
    fn partial_trace_matches_index_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = random_density(&mut rng, 3);
        let pt = partial_trace_last_qubit(&rho).unwrap();
        // Σ_k ⟨i,k|ρ|j,k⟩ with the last qubit as the high bit.
        for i in 0..4 {
            for j in 0..4 {
                let oracle: C64 = (0..2).map(|k| rho.get(i + 4 * k, j + 4 * k)).sum();
                assert!((pt.get(i, j) - oracle).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn partial_trace_rejects_bad_shape() {
        assert!(matches!(partial_trace_last_qubit(&ComplexMatrix::identity(3)), Err(Error::BadShape(_))));
    }

    #[test]
    fn projector_examples() {
        let e1 = ComplexMatrix::column(&[ONE, ZERO, ZERO, ZERO]);
        let p = projector_from_vectors(&[e1]).unwrap();
        assert_eq!(p.get(0, 0), ONE);
        assert_eq!(p.trace(), ONE);

        let basis: Vec<_> = (0..4)
            .map(|k| ComplexMatrix::column(&(0..4).map(|i| if i == k { ONE } else { ZERO }).collect::<Vec<_>>()))
            .collect();
        assert_eq!(projector_from_vectors(&basis).unwrap(), ComplexMatrix::identity(4));
    }

    #[test]
    fn paired_vectors_give_rank_two_idempotent() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let vs: Vec<_> = (0..2)
            .map(|i| {
                let mut v = vec![ZERO; 8];
                v[i] = c(s);
                v[7 - i] = c(s);
                ComplexMatrix::column(&v)
            })
            .collect();
        let p = projector_from_vectors(&vs).unwrap();
        assert!(p.matmul(&p).unwrap().max_abs_diff(&p) < 1e-12);
        assert_abs_diff_eq!(p.trace().re, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn projector_rejects_non_orthonormal() {
        let v = ComplexMatrix::column(&[ONE, ZERO]);
        let w = ComplexMatrix::column(&[c(0.6), c(0.8)]);
        assert!(matches!(projector_from_vectors(&[v, w]), Err(Error::NotOrthonormal(_))));
    }

    #[test]
    fn eigensystem_examples() {
        let flat = ComplexMatrix::from_real_diagonal(&[0.125; 8]);
        assert!(hermitian_eigenvalues(&flat).unwrap().iter().all(|&l| (l - 0.125).abs() < 1e-15));

        let cc = 0.3;
        let block = ComplexMatrix::from_fn(2, 2, |_, _| c(cc));
        let vals = hermitian_eigenvalues(&block).unwrap();
        assert!(vals[0].abs() < 1e-15 && (vals[1] - 2.0 * cc).abs() < 1e-15);
    }

    #[test]
    fn eigensystem_rejects_non_hermitian() {
        let m = ComplexMatrix::from_fn(2, 2, |i, j| if i < j { ONE } else { ZERO });
        assert!(matches!(hermitian_eigensystem(&m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn density_matrix_checks() {
        assert!(is_density_matrix(&ComplexMatrix::identity(2).scaled(c(0.5)), 1e-9).is_density);
        let bad = ComplexMatrix::from_real_diagonal(&[1.0, -0.001]);
        let diag = is_density_matrix(&bad, 1e-9);
        assert!(!diag.is_density);
        assert!(diag.min_eigenvalue < 0.0);
    }

    #[test]
    fn complement_pair_sum_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=9usize {
            let factors: Vec<_> = (0..n)
                .map(|_| QubitVector::bloch(rng.random_range(0.0..std::f64::consts::PI), rng.random_range(0.0..6.3)))
                .collect();
            for count in 0..=(1u64 << (n - 1)) {
                let fast = complement_pair_sum(&factors, &BigUint::from(count));
                let slow = complement_pair_sum_enumerated(&factors, count);
                assert!((fast - slow).norm() < 1e-14, "n={n} count={count}");
            }
        }
    }

    fn random_small(qubits: usize, seed: u64) -> ComplexMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_matrix(&mut rng, 1 << qubits, 1 << qubits)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn kron_is_associative(qa in 0usize..3, qb in 0usize..3, qc in 0usize..3, seed in any::<u64>()) {
            let (a, b, cm) = (random_small(qa, seed), random_small(qb, seed ^ 1), random_small(qc, seed ^ 2));
            let left = kron(&kron(&a, &b).unwrap(), &cm).unwrap();
            let right = kron(&a, &kron(&b, &cm).unwrap()).unwrap();
            prop_assert!(left.max_abs_diff(&right) < 1e-12);
        }

        #[test]
        fn trace_is_multiplicative(qa in 0usize..4, qb in 0usize..3, seed in any::<u64>()) {
            let (a, b) = (random_small(qa, seed), random_small(qb, seed ^ 7));
            let lhs = kron(&a, &b).unwrap().trace();
            prop_assert!((lhs - a.trace() * b.trace()).norm() < 1e-12 * (1.0 + lhs.norm()));
        }

        #[test]
        fn partial_trace_undoes_one_qubit_kron(q in 0usize..5, seed in any::<u64>()) {
            let a = random_small(q, seed);
            let s = random_small(1, seed ^ 3);
            let pt = partial_trace_last_qubit(&kron(&a, &s).unwrap()).unwrap();
            prop_assert!(pt.max_abs_diff(&a.scaled(s.trace())) < 1e-12);
        }

        #[test]
        fn projectors_are_hermitian_idempotent(q in 1usize..5, rank in 1usize..4, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_density(&mut rng, q);
            let eig = hermitian_eigensystem(&h).unwrap();
            let vs: Vec<_> = eig.iter().take(rank.min(1 << q)).map(|p| ComplexMatrix::column(&p.vector)).collect();
            let p = projector_from_vectors(&vs).unwrap();
            prop_assert!(p.hermitian_deviation() < 1e-9);
            prop_assert!(p.matmul(&p).unwrap().max_abs_diff(&p) < 1e-9);
        }

        #[test]
        fn eigensystem_reconstructs(q in 0usize..7, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_matrix(&mut rng, 1 << q, 1 << q);
            let h = g.add(&g.adjoint());
            let eig = hermitian_eigensystem(&h).unwrap();
            let d = 1 << q;
            let mut rebuilt = ComplexMatrix::zeros(d, d);
            for pair in &eig {
                let v = ComplexMatrix::column(&pair.vector);
                rebuilt = rebuilt.add(&v.matmul(&v.adjoint()).unwrap().scaled(c(pair.value)));
                let mv = h.matmul(&v).unwrap();
                prop_assert!(mv.max_abs_diff(&v.scaled(c(pair.value))) < tol::EIGEN);
            }
            prop_assert!(rebuilt.max_abs_diff(&h) < 1e-9);
        }
    }
}
