//! Frequencies and their resonance lattices.
//!
//! An [`ExactScalar`] is a rational combination `Σ qᵢβᵢ` over a declared
//! basis `β₀ = 1, β₁, …, β_s` of reals. The basis is *assumed* linearly
//! independent over ℚ; that is the caller's obligation and is never checked.
//! Under that assumption integer relations among exact scalars are decided by
//! exact rational linear algebra. Plain floats go through a bounded search
//! whose results are flagged heuristic.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{rational_kernel_lattice, saturate, RatMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum FreqError {
    #[error("scalars are declared over different bases")]
    BasisMismatch,
    #[error("expected {expected} basis coefficients, got {got}")]
    CoefficientCount { expected: usize, got: usize },
    #[error("exact arithmetic requested on a numeric frequency")]
    NotExact,
    #[error("relation vector entry does not fit in 64 bits")]
    Overflow,
}

/// The declared real basis; `β₀ = 1` is always present at index 0.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Basis {
    names: Vec<String>,
    values: Vec<f64>,
}

impl Basis {
    /// Basis `1, β₁, …` from the extra `(name, value)` elements.
    pub fn new<I, S>(extra: I) -> Arc<Basis>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut names = vec!["1".to_string()];
        let mut values = vec![1.0];
        for (n, v) in extra {
            names.push(n.into());
            values.push(v);
        }
        Arc::new(Basis { names, values })
    }

    /// The basis `{1}`: exact scalars are then plain rationals.
    pub fn rationals() -> Arc<Basis> {
        Self::new(std::iter::empty::<(String, f64)>())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn rat_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Rational coefficient vector over a shared [`Basis`], with its float value.
#[derive(Clone, Debug)]
pub struct ExactScalar {
    basis: Arc<Basis>,
    coeffs: Vec<BigRational>,
    value: f64,
}

impl PartialEq for ExactScalar {
    fn eq(&self, other: &Self) -> bool {
        self.basis == other.basis && self.coeffs == other.coeffs
    }
}

impl ExactScalar {
    pub fn new(basis: &Arc<Basis>, coeffs: Vec<BigRational>) -> Result<Self, FreqError> {
        if coeffs.len() != basis.len() {
            return Err(FreqError::CoefficientCount {
                expected: basis.len(),
                got: coeffs.len(),
            });
        }
        Ok(Self::build(basis.clone(), coeffs))
    }

    fn build(basis: Arc<Basis>, coeffs: Vec<BigRational>) -> Self {
        let value = coeffs
            .iter()
            .zip(basis.values())
            .map(|(q, b)| rat_f64(q) * b)
            .sum();
        ExactScalar {
            basis,
            coeffs,
            value,
        }
    }

    pub fn zero(basis: &Arc<Basis>) -> Self {
        Self::build(basis.clone(), vec![BigRational::zero(); basis.len()])
    }

    pub fn rational(basis: &Arc<Basis>, q: BigRational) -> Self {
        let mut coeffs = vec![BigRational::zero(); basis.len()];
        coeffs[0] = q;
        Self::build(basis.clone(), coeffs)
    }

    /// Shorthand for `num/den · β_index`.
    pub fn term(basis: &Arc<Basis>, index: usize, num: i64, den: i64) -> Self {
        let mut coeffs = vec![BigRational::zero(); basis.len()];
        coeffs[index] = BigRational::new(num.into(), den.into());
        Self::build(basis.clone(), coeffs)
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, FreqError> {
        if self.basis != other.basis {
            return Err(FreqError::BasisMismatch);
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(Self::build(self.basis.clone(), coeffs))
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, FreqError> {
        self.checked_add(&other.scale(&BigRational::from_integer((-1).into())))
    }

    pub fn scale(&self, q: &BigRational) -> Self {
        let coeffs = self.coeffs.iter().map(|a| a * q).collect();
        Self::build(self.basis.clone(), coeffs)
    }

    pub fn scale_int(&self, n: &BigInt) -> Self {
        self.scale(&BigRational::from_integer(n.clone()))
    }

    /// Coefficients as `"p/q"` strings (`"p"` for integers).
    pub fn coeff_strings(&self) -> Vec<String> {
        self.coeffs.iter().map(|q| q.to_string()).collect()
    }
}

impl fmt::Display for ExactScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (q, name) in self.coeffs.iter().zip(self.basis.names()) {
            if q.is_zero() {
                continue;
            }
            if name == "1" {
                parts.push(q.to_string());
            } else {
                parts.push(format!("{q}*{name}"));
            }
        }
        if parts.is_empty() {
            f.write_str("0")
        } else {
            f.write_str(&parts.join(" + "))
        }
    }
}

/// A frequency entry: exact over the declared basis, or a plain float.
#[derive(Clone, Debug, PartialEq)]
pub enum Scalar {
    Exact(ExactScalar),
    Numeric(f64),
}

impl Scalar {
    pub fn value(&self) -> f64 {
        match self {
            Scalar::Exact(e) => e.value(),
            Scalar::Numeric(x) => *x,
        }
    }

    pub fn as_exact(&self) -> Option<&ExactScalar> {
        match self {
            Scalar::Exact(e) => Some(e),
            Scalar::Numeric(_) => None,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Scalar::Exact(_))
    }
}

/// Ordered list of frequencies, possibly mixing exact and numeric entries.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct FrequencyVector(pub Vec<Scalar>);

impl FrequencyVector {
    pub fn exact(entries: Vec<ExactScalar>) -> Self {
        FrequencyVector(entries.into_iter().map(Scalar::Exact).collect())
    }

    pub fn numeric(entries: &[f64]) -> Self {
        FrequencyVector(entries.iter().map(|&x| Scalar::Numeric(x)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.0.iter().map(Scalar::value).collect()
    }

    /// All entries exact (an empty vector counts as exact).
    pub fn is_exact(&self) -> bool {
        self.0.iter().all(Scalar::is_exact)
    }

    pub fn exact_entries(&self) -> Option<Vec<&ExactScalar>> {
        self.0.iter().map(Scalar::as_exact).collect()
    }

    pub fn concat(&self, other: &FrequencyVector) -> FrequencyVector {
        FrequencyVector(self.0.iter().chain(&other.0).cloned().collect())
    }
}

/// Bounds for the numeric relation search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SearchOptions {
    pub height_bound: i64,
    pub tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            height_bound: 50,
            tol: 1e-8,
        }
    }
}

/// ℤ-basis of the integer relations of a frequency vector.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResonanceLattice {
    pub basis: Vec<Vec<i64>>,
    /// True when the lattice came from the bounded numeric search.
    pub heuristic: bool,
}

impl ResonanceLattice {
    pub fn rank(&self) -> usize {
        self.basis.len()
    }
}

pub(crate) fn to_i64_rows(rows: Vec<Vec<BigInt>>) -> Result<Vec<Vec<i64>>, FreqError> {
    rows.into_iter()
        .map(|r| r.iter().map(|x| x.to_i64().ok_or(FreqError::Overflow)).collect())
        .collect()
}

/// Exact relation lattice of exact scalars sharing one basis.
pub fn exact_relations(entries: &[&ExactScalar]) -> Result<Vec<Vec<i64>>, FreqError> {
    let n = entries.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let basis = entries[0].basis();
    if entries.iter().any(|e| e.basis() != basis) {
        return Err(FreqError::BasisMismatch);
    }
    let mut m = RatMatrix::zeros(basis.len(), n);
    for (j, e) in entries.iter().enumerate() {
        for (i, q) in e.coeffs().iter().enumerate() {
            m[(i, j)] = q.clone();
        }
    }
    to_i64_rows(rational_kernel_lattice(&m))
}

/// True iff the only integer relation among the exact entries is zero.
pub fn is_nonresonant(omega: &FrequencyVector) -> Result<bool, FreqError> {
    let entries = omega.exact_entries().ok_or(FreqError::NotExact)?;
    Ok(exact_relations(&entries)?.is_empty())
}

/// Resonance lattice: exact when every entry is exact, otherwise the bounded
/// numeric search with `opts`.
pub fn resonance_lattice(v: &FrequencyVector, opts: &SearchOptions) -> Result<ResonanceLattice, FreqError> {
    match v.exact_entries() {
        Some(entries) => Ok(ResonanceLattice {
            basis: exact_relations(&entries)?,
            heuristic: false,
        }),
        None => Ok(ResonanceLattice {
            basis: bounded_relation_search(&v.values(), opts)?,
            heuristic: true,
        }),
    }
}

fn gcd_i64(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Exhaustive search of the box `|pᵢ| ≤ H` for `|p·v| < tol`.
///
/// The coordinate with the largest `|vᵢ|` is solved for by rounding, so the
/// enumeration runs over the remaining `n − 1` coordinates. Primitive hits are
/// sorted by height, greedily reduced to an independent set and the span is
/// saturated, which returns a lattice basis rather than a list of hits.
pub fn bounded_relation_search(v: &[f64], opts: &SearchOptions) -> Result<Vec<Vec<i64>>, FreqError> {
    let n = v.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let h = opts.height_bound;
    let pivot = (0..n)
        .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
        .expect("nonempty");
    if v[pivot].abs() < opts.tol {
        return Ok((0..n)
            .map(|i| (0..n).map(|j| i64::from(i == j)).collect())
            .collect());
    }
    let others: Vec<usize> = (0..n).filter(|&i| i != pivot).collect();
    let mut hits: Vec<Vec<i64>> = Vec::new();
    let mut counter = vec![-h; others.len()];
    loop {
        let s: f64 = others.iter().zip(&counter).map(|(&i, &c)| c as f64 * v[i]).sum();
        let p_piv = (-s / v[pivot]).round();
        if p_piv.abs() <= h as f64 && (s + p_piv * v[pivot]).abs() < opts.tol {
            let mut p = vec![0i64; n];
            for (&i, &c) in others.iter().zip(&counter) {
                p[i] = c;
            }
            p[pivot] = p_piv as i64;
            let g = p.iter().fold(0, |acc, &x| gcd_i64(acc, x));
            let first = p.iter().find(|x| **x != 0).copied();
            if g == 1 && first.is_some_and(|x| x > 0) {
                hits.push(p);
            }
        }
        // Odometer over the non-pivot coordinates.
        let mut k = 0;
        loop {
            if k == counter.len() {
                return finish_search(hits, n);
            }
            counter[k] += 1;
            if counter[k] > h {
                counter[k] = -h;
                k += 1;
            } else {
                break;
            }
        }
    }
}

fn finish_search(mut hits: Vec<Vec<i64>>, n: usize) -> Result<Vec<Vec<i64>>, FreqError> {
    hits.sort_by(|a, b| {
        let ha = a.iter().map(|x| x.abs()).max();
        let hb = b.iter().map(|x| x.abs()).max();
        ha.cmp(&hb).then_with(|| a.cmp(b))
    });
    let mut chosen: Vec<Vec<BigInt>> = Vec::new();
    for p in hits {
        if chosen.len() + 1 >= n {
            break;
        }
        let mut trial = chosen.clone();
        trial.push(p.iter().map(|&x| BigInt::from(x)).collect());
        let m = crate::linalg::IntMatrix::from_rows(trial.clone(), n);
        if m.rank() == trial.len() {
            chosen = trial;
        }
    }
    to_i64_rows(saturate(&chosen, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sqrt2() -> Arc<Basis> {
        Basis::new([("sqrt2", std::f64::consts::SQRT_2)])
    }

    #[test]
    fn nonresonance_examples() {
        let b = sqrt2();
        let one = ExactScalar::term(&b, 0, 1, 1);
        let r2 = ExactScalar::term(&b, 1, 1, 1);
        let two = ExactScalar::term(&b, 0, 2, 1);
        assert!(is_nonresonant(&FrequencyVector::exact(vec![one.clone(), r2.clone()])).unwrap());
        assert!(!is_nonresonant(&FrequencyVector::exact(vec![one.clone(), two])).unwrap());
        let sum = one.checked_add(&r2).unwrap();
        let v = FrequencyVector::exact(vec![one, r2, sum]);
        assert!(!is_nonresonant(&v).unwrap());
        let lat = resonance_lattice(&v, &SearchOptions::default()).unwrap();
        assert_eq!(lat.basis, vec![vec![1, 1, -1]]);
    }

    #[test]
    fn exact_lattice_of_torus_example() {
        let b = sqrt2();
        let v = FrequencyVector::exact(vec![
            ExactScalar::term(&b, 0, 1, 1),
            ExactScalar::term(&b, 1, 1, 1),
            ExactScalar::term(&b, 0, 1, 2),
        ]);
        let lat = resonance_lattice(&v, &SearchOptions::default()).unwrap();
        assert!(!lat.heuristic);
        assert_eq!(lat.basis, vec![vec![1, 0, -2]]);
        let two = FrequencyVector::exact(vec![ExactScalar::term(&b, 0, 1, 1), ExactScalar::term(&b, 1, 1, 1)]);
        assert!(resonance_lattice(&two, &SearchOptions::default()).unwrap().basis.is_empty());
    }

    #[test]
    fn numeric_search_example() {
        let opts = SearchOptions {
            height_bound: 4,
            tol: 1e-6,
        };
        let lat = resonance_lattice(&FrequencyVector::numeric(&[1.0, 0.333333333]), &opts).unwrap();
        assert!(lat.heuristic);
        assert_eq!(lat.basis, vec![vec![1, -3]]);
    }

    #[test]
    fn numeric_search_rank_two() {
        let opts = SearchOptions {
            height_bound: 5,
            tol: 1e-9,
        };
        let basis = bounded_relation_search(&[1.0, 2.0, 3.0], &opts).unwrap();
        assert_eq!(basis.len(), 2);
        for p in &basis {
            let s: f64 = p.iter().zip([1.0, 2.0, 3.0]).map(|(a, b)| *a as f64 * b).sum();
            assert_eq!(s, 0.0);
        }
    }

    #[test]
    fn numeric_zero_vector() {
        let basis = bounded_relation_search(&[0.0, 0.0], &SearchOptions::default()).unwrap();
        assert_eq!(basis, vec![vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn scalar_arithmetic_tracks_value() {
        let b = sqrt2();
        let x = ExactScalar::term(&b, 1, 3, 7).checked_add(&ExactScalar::term(&b, 0, -2, 5)).unwrap();
        let y = x.scale(&BigRational::new(5.into(), 3.into()));
        let expect = (3.0 / 7.0 * std::f64::consts::SQRT_2 - 0.4) * 5.0 / 3.0;
        assert!((y.value() - expect).abs() < 1e-12);
        assert_eq!(y.to_string(), "-2/3 + 5/7*sqrt2");
    }

    #[test]
    fn mismatched_bases_rejected() {
        let a = ExactScalar::term(&sqrt2(), 0, 1, 1);
        let b = ExactScalar::term(&Basis::rationals(), 0, 1, 1);
        assert_eq!(a.checked_add(&b), Err(FreqError::BasisMismatch));
    }
}
