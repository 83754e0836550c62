//! Vector fields on 𝕋ᵏ × G and their flows.
//!
//! Every field handled here has the form `Y = u·∂φ + g·c(φ)` with a constant
//! horizontal part `u ∈ ℝᵏ` and a vertical part that is left-invariant in the
//! group variable, `ġ = g·c(φ)`, where `c: 𝕋ᵏ → 𝔤` is a finite Fourier series.
//! Such fields are automatically invariant under `h.(φ, g) = (φ, hg)`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::Serialize;
use thiserror::Error;

use crate::freqs::{ExactScalar, FrequencyVector, Scalar};
use crate::group::{circle_diff, exp_algebra, wrap_unit, AlgebraVector, GroupElement, GroupId};

#[derive(Debug, Error, PartialEq)]
pub enum DynError {
    #[error("frequency ω_{0} is zero; the missing lift cannot be completed")]
    ZeroFrequency(usize),
    #[error("expected exactly {expected} lifts, got {got}")]
    LiftCount { expected: usize, got: usize },
    #[error("lift directions do not leave exactly one direction to complete")]
    BadDirections,
    #[error("angles failed to close after one period (offset {0:.3e})")]
    PeriodMismatch(f64),
    #[error("inconsistent shapes: {0}")]
    Shape(String),
}

/// One Fourier mode `cos(2π n·φ)·cos + sin(2π n·φ)·sin`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FourierTerm {
    pub index: Vec<i64>,
    pub cos: AlgebraVector,
    pub sin: AlgebraVector,
}

/// Finite Fourier series `𝕋ᵏ → 𝔤`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoeffFunction {
    pub group: GroupId,
    pub k: usize,
    pub terms: Vec<FourierTerm>,
}

/// Sign-normalizes a multi-index: first nonzero entry positive. Returns the
/// sign that must multiply the sine coefficient.
fn canonical_index(n: &[i64]) -> (Vec<i64>, f64) {
    match n.iter().find(|x| **x != 0) {
        Some(x) if *x < 0 => (n.iter().map(|x| -x).collect(), -1.0),
        _ => (n.to_vec(), 1.0),
    }
}

impl CoeffFunction {
    pub fn zero(group: GroupId, k: usize) -> Self {
        CoeffFunction {
            group,
            k,
            terms: Vec::new(),
        }
    }

    pub fn constant(k: usize, v: AlgebraVector) -> Self {
        let group = v.group;
        CoeffFunction {
            group,
            k,
            terms: vec![FourierTerm {
                index: vec![0; k],
                cos: v,
                sin: AlgebraVector::zero(group),
            }],
        }
    }

    /// Adds the mode `cos(2π n·φ)·c + sin(2π n·φ)·s`.
    pub fn with_term(mut self, index: Vec<i64>, cos: AlgebraVector, sin: AlgebraVector) -> Self {
        assert_eq!(index.len(), self.k, "multi-index length must equal k");
        self.terms.push(FourierTerm { index, cos, sin });
        self
    }

    pub fn eval(&self, phi: &[f64]) -> AlgebraVector {
        let mut out = AlgebraVector::zero(self.group);
        for t in &self.terms {
            let arg: f64 = t.index.iter().zip(phi).map(|(n, p)| *n as f64 * p).sum::<f64>() * TAU;
            let (s, c) = arg.sin_cos();
            for (o, (a, b)) in out.coeffs.iter_mut().zip(t.cos.coeffs.iter().zip(&t.sin.coeffs)) {
                *o += c * a + s * b;
            }
        }
        out
    }

    /// Merges equal modes under the `n ~ −n` identification and drops modes
    /// that vanish identically.
    pub fn normalized(&self) -> CoeffFunction {
        let mut acc: BTreeMap<Vec<i64>, (AlgebraVector, AlgebraVector)> = BTreeMap::new();
        for t in &self.terms {
            let (idx, sign) = canonical_index(&t.index);
            let entry = acc
                .entry(idx)
                .or_insert_with(|| (AlgebraVector::zero(self.group), AlgebraVector::zero(self.group)));
            entry.0 = entry.0.add(&t.cos);
            entry.1 = entry.1.axpy(sign, &t.sin);
        }
        let terms = acc
            .into_iter()
            .filter_map(|(index, (cos, mut sin))| {
                if index.iter().all(|x| *x == 0) {
                    sin = AlgebraVector::zero(self.group);
                }
                (!(cos.is_zero() && sin.is_zero())).then_some(FourierTerm { index, cos, sin })
            })
            .collect();
        CoeffFunction {
            group: self.group,
            k: self.k,
            terms,
        }
    }

    /// Largest Euclidean norm of any coefficient after normalization.
    pub fn max_coeff_norm(&self) -> f64 {
        self.normalized()
            .terms
            .iter()
            .map(|t| t.cos.norm().max(t.sin.norm()))
            .fold(0.0, f64::max)
    }

    /// Mean over 𝕋ᵏ (the zero mode).
    pub fn mean(&self) -> AlgebraVector {
        self.terms
            .iter()
            .filter(|t| t.index.iter().all(|x| *x == 0))
            .fold(AlgebraVector::zero(self.group), |acc, t| acc.add(&t.cos))
    }

    pub fn scale(&self, s: f64) -> CoeffFunction {
        CoeffFunction {
            group: self.group,
            k: self.k,
            terms: self
                .terms
                .iter()
                .map(|t| FourierTerm {
                    index: t.index.clone(),
                    cos: t.cos.scale(s),
                    sin: t.sin.scale(s),
                })
                .collect(),
        }
    }

    /// `self + s·other`, normalized.
    pub fn axpy(&self, s: f64, other: &CoeffFunction) -> CoeffFunction {
        let mut terms = self.terms.clone();
        terms.extend(other.scale(s).terms);
        CoeffFunction {
            group: self.group,
            k: self.k,
            terms,
        }
        .normalized()
    }

    /// Directional derivative `u·∂c/∂φ`.
    pub fn derivative(&self, u: &[f64]) -> CoeffFunction {
        let terms = self
            .terms
            .iter()
            .filter_map(|t| {
                let w = TAU * t.index.iter().zip(u).map(|(n, x)| *n as f64 * x).sum::<f64>();
                (w != 0.0).then(|| FourierTerm {
                    index: t.index.clone(),
                    cos: t.sin.scale(w),
                    sin: t.cos.scale(-w),
                })
            })
            .collect();
        CoeffFunction {
            group: self.group,
            k: self.k,
            terms,
        }
        .normalized()
    }

    /// Pointwise Lie bracket `[c(φ), d(φ)]`, expanded exactly by the
    /// product-to-sum identities.
    pub fn bracket(&self, other: &CoeffFunction) -> CoeffFunction {
        let mut terms = Vec::new();
        if !self.group.is_abelian() {
            for a in &self.terms {
                for b in &other.terms {
                    let cc = a.cos.bracket(&b.cos);
                    let ss = a.sin.bracket(&b.sin);
                    let cs = a.cos.bracket(&b.sin);
                    let sc = a.sin.bracket(&b.cos);
                    let diff: Vec<i64> = a.index.iter().zip(&b.index).map(|(x, y)| x - y).collect();
                    let sum: Vec<i64> = a.index.iter().zip(&b.index).map(|(x, y)| x + y).collect();
                    terms.push(FourierTerm {
                        index: diff,
                        cos: cc.add(&ss).scale(0.5),
                        sin: sc.axpy(-1.0, &cs).scale(0.5),
                    });
                    terms.push(FourierTerm {
                        index: sum,
                        cos: cc.axpy(-1.0, &ss).scale(0.5),
                        sin: cs.add(&sc).scale(0.5),
                    });
                }
            }
        }
        CoeffFunction {
            group: self.group,
            k: self.k,
            terms,
        }
        .normalized()
    }

    /// Common direction of every coefficient, if all coefficients are
    /// parallel (within relative tolerance `tol`). `Some(None)` means the
    /// function vanishes.
    pub fn common_axis(&self, tol: f64) -> Option<Option<Vec<f64>>> {
        let mut axis: Option<Vec<f64>> = None;
        for t in &self.normalized().terms {
            for v in [&t.cos, &t.sin] {
                let n = v.norm();
                if n == 0.0 {
                    continue;
                }
                let u: Vec<f64> = v.coeffs.iter().map(|c| c / n).collect();
                match &axis {
                    None => axis = Some(u),
                    Some(a) => {
                        let d: f64 = a.iter().zip(&u).map(|(x, y)| x * y).sum();
                        if 1.0 - d.abs() > tol {
                            return None;
                        }
                    }
                }
            }
        }
        Some(axis)
    }
}

/// Vertical part of `[Y, Z]` for `Y = u·∂φ + g·c`, `Z = v·∂φ + g·d`:
/// `u·∂d/∂φ − v·∂c/∂φ + [c, d]`.
pub fn bracket_defect(u: &[f64], c: &CoeffFunction, v: &[f64], d: &CoeffFunction) -> CoeffFunction {
    d.derivative(u)
        .axpy(-1.0, &c.derivative(v))
        .axpy(1.0, &c.bracket(d))
}

/// A point `(φ, g)` of 𝕋ᵏ × G.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatePoint {
    pub phi: Vec<f64>,
    pub g: GroupElement,
}

impl StatePoint {
    pub fn new(phi: &[f64], g: GroupElement) -> Self {
        StatePoint {
            phi: phi.iter().map(|&x| wrap_unit(x)).collect(),
            g,
        }
    }

    /// Payload distance: angles on the circle and the group payload distance,
    /// combined in quadrature.
    pub fn distance(&self, other: &StatePoint) -> f64 {
        let a: f64 = self
            .phi
            .iter()
            .zip(&other.phi)
            .map(|(x, y)| circle_diff(*x, *y).powi(2))
            .sum();
        (a + self.g.distance(&other.g).powi(2)).sqrt()
    }

    /// Left action `h.(φ, g) = (φ, hg)`.
    pub fn act(&self, h: &GroupElement) -> StatePoint {
        StatePoint {
            phi: self.phi.clone(),
            g: h.compose(&self.g),
        }
    }
}

/// `u·∂φ + g·c(φ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub horizontal: Vec<f64>,
    pub vertical: CoeffFunction,
}

/// A lift `∂φ_direction + g·b(φ)` of a reduced generator.
#[derive(Clone, Debug, PartialEq)]
pub struct Lift {
    /// Zero-based direction index.
    pub direction: usize,
    pub vertical: CoeffFunction,
}

/// A symmetric system on 𝕋ᵏ × G with its declared lifts.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    pub group: GroupId,
    pub k: usize,
    pub omega: FrequencyVector,
    /// Vertical part `a` of `X = ω·∂φ + g·a(φ)`.
    pub vertical: CoeffFunction,
    /// `k − 1` lifts; the remaining one is completed from `X`.
    pub lifts: Vec<Lift>,
    pub base_point: StatePoint,
    /// Exact zero mode of `a`, one entry per algebra coordinate, in turns
    /// (`2π` radians per unit on SO(3)). Enables exact external frequencies.
    pub exact_vertical_mean: Option<Vec<ExactScalar>>,
}

impl SystemSpec {
    /// Checks that every piece has the declared `k` and group.
    pub fn validate(&self) -> Result<(), DynError> {
        let shape = |what: &str| Err(DynError::Shape(what.to_string()));
        if self.k == 0 {
            return shape("k must be at least 1");
        }
        if self.omega.len() != self.k {
            return shape("ω must have k entries");
        }
        let coeffs = std::iter::once(&self.vertical).chain(self.lifts.iter().map(|l| &l.vertical));
        for c in coeffs {
            if c.k != self.k || c.group != self.group {
                return shape("coefficient function has wrong k or group");
            }
            for t in &c.terms {
                if t.index.len() != self.k
                    || t.cos.coeffs.len() != self.group.dim()
                    || t.sin.coeffs.len() != self.group.dim()
                {
                    return shape("Fourier term has wrong dimensions");
                }
            }
        }
        if self.base_point.phi.len() != self.k || self.base_point.g.group() != self.group {
            return shape("base point has wrong dimensions");
        }
        if let Some(m) = &self.exact_vertical_mean {
            if m.len() != self.group.dim() {
                return shape("exact vertical mean has wrong dimension");
            }
        }
        Ok(())
    }

    pub fn omega_values(&self) -> Vec<f64> {
        self.omega.values()
    }

    pub fn x_field(&self) -> VectorField {
        VectorField {
            horizontal: self.omega_values(),
            vertical: self.vertical.clone(),
        }
    }
}

fn unit(k: usize, i: usize) -> Vec<f64> {
    (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()
}

impl Lift {
    pub fn field(&self, k: usize) -> VectorField {
        VectorField {
            horizontal: unit(k, self.direction),
            vertical: self.vertical.clone(),
        }
    }
}

/// Largest defect coefficient norm accepted as zero.
pub const BRACKET_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Violation {
    /// Two lifts whose bracket does not vanish.
    LiftsDoNotCommute { first: String, second: String, max_defect: f64 },
    /// A lift that is not a dynamical symmetry of X.
    NotASymmetry { lift: String, max_defect: f64 },
    LiftCount { expected: usize, got: usize },
    DirectionOutOfRange { lift: usize, direction: usize },
    DuplicateDirection { direction: usize },
    ResonantFrequencies { relation: Vec<i64> },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::LiftsDoNotCommute { first, second, max_defect } => {
                write!(f, "lifts {first} and {second} do not commute (max defect {max_defect:.3e})")
            }
            Violation::NotASymmetry { lift, max_defect } => {
                write!(f, "lift {lift} does not commute with X (max defect {max_defect:.3e})")
            }
            Violation::LiftCount { expected, got } => write!(f, "expected {expected} lifts, got {got}"),
            Violation::DirectionOutOfRange { lift, direction } => {
                write!(f, "lift #{lift} has direction {direction} outside 1..k")
            }
            Violation::DuplicateDirection { direction } => {
                write!(f, "direction {direction} is lifted more than once")
            }
            Violation::ResonantFrequencies { relation } => {
                write!(f, "reduced frequencies are resonant (relation {relation:?})")
            }
        }
    }
}

fn lift_label(direction: usize) -> String {
    format!("S{}", direction + 1)
}

/// Hypotheses of the reconstruction: `k − 1` lifts of distinct generators
/// that commute pairwise and with `X`, and nonresonant `ω` when it is exact.
pub fn check_hypotheses(spec: &SystemSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let k = spec.k;
    if spec.lifts.len() + 1 != k {
        out.push(Violation::LiftCount {
            expected: k - 1,
            got: spec.lifts.len(),
        });
    }
    let mut seen = vec![false; k];
    for (i, l) in spec.lifts.iter().enumerate() {
        if l.direction >= k {
            out.push(Violation::DirectionOutOfRange {
                lift: i + 1,
                direction: l.direction + 1,
            });
        } else if std::mem::replace(&mut seen[l.direction], true) {
            out.push(Violation::DuplicateDirection {
                direction: l.direction + 1,
            });
        }
    }
    if !out.is_empty() {
        return out;
    }
    if let Ok(false) = crate::freqs::is_nonresonant(&spec.omega) {
        let entries = spec.omega.exact_entries().expect("exact");
        if let Ok(rel) = crate::freqs::exact_relations(&entries) {
            out.push(Violation::ResonantFrequencies {
                relation: rel.into_iter().next().unwrap_or_default(),
            });
        }
    }
    for (i, a) in spec.lifts.iter().enumerate() {
        for b in &spec.lifts[i + 1..] {
            let defect = bracket_defect(
                &unit(k, a.direction),
                &a.vertical,
                &unit(k, b.direction),
                &b.vertical,
            )
            .max_coeff_norm();
            if defect >= BRACKET_TOL {
                out.push(Violation::LiftsDoNotCommute {
                    first: lift_label(a.direction),
                    second: lift_label(b.direction),
                    max_defect: defect,
                });
            }
        }
    }
    let omega = spec.omega_values();
    for l in &spec.lifts {
        let defect = bracket_defect(&unit(k, l.direction), &l.vertical, &omega, &spec.vertical).max_coeff_norm();
        if defect >= BRACKET_TOL {
            out.push(Violation::NotASymmetry {
                lift: lift_label(l.direction),
                max_defect: defect,
            });
        }
    }
    out
}

/// All `k` lifts, indexed by direction; the missing one is
/// `(X − Σ ωⱼSⱼ)/ω_m`.
pub fn complete_lifts(spec: &SystemSpec) -> Result<Vec<Lift>, DynError> {
    let k = spec.k;
    if spec.lifts.len() + 1 != k {
        return Err(DynError::LiftCount {
            expected: k - 1,
            got: spec.lifts.len(),
        });
    }
    let mut slots: Vec<Option<&Lift>> = vec![None; k];
    for l in &spec.lifts {
        if l.direction >= k || slots[l.direction].is_some() {
            return Err(DynError::BadDirections);
        }
        slots[l.direction] = Some(l);
    }
    let missing = slots.iter().position(Option::is_none).ok_or(DynError::BadDirections)?;
    let omega = spec.omega_values();
    if omega[missing] == 0.0 {
        return Err(DynError::ZeroFrequency(missing + 1));
    }
    let mut rest = spec.vertical.normalized();
    for l in &spec.lifts {
        rest = rest.axpy(-omega[l.direction], &l.vertical);
    }
    let completed = Lift {
        direction: missing,
        vertical: rest.scale(1.0 / omega[missing]).normalized(),
    };
    Ok((0..k)
        .map(|i| match slots[i] {
            Some(l) => l.clone(),
            None => completed.clone(),
        })
        .collect())
}

/// Default integrator step.
pub const DEFAULT_STEP: f64 = 1e-3;

/// `dexp⁻¹` for `g' = g·A`, truncated after the second commutator.
fn dexpinv(sigma: &AlgebraVector, a: &AlgebraVector) -> AlgebraVector {
    if sigma.group.is_abelian() {
        return a.clone();
    }
    let sa = sigma.bracket(a);
    let ssa = sigma.bracket(&sa);
    a.axpy(0.5, &sa).axpy(1.0 / 12.0, &ssa)
}

/// Time-`t` map of `field` from `m0`.
///
/// Angles advance exactly. The group part solves `ġ = g·c(φ₀ + s·u)` with a
/// fourth-order Runge–Kutta–Munthe-Kaas scheme: stages live in the Lie
/// algebra and each step ends with `g ← g·exp(σ)`. The step count is
/// `⌈|t|/step⌉`, so the result is deterministic for a fixed step.
pub fn flow(field: &VectorField, m0: &StatePoint, t: f64, step: f64) -> StatePoint {
    assert!(step > 0.0, "step must be positive");
    let phi0 = m0.phi.clone();
    let u = &field.horizontal;
    let phi_at = |s: f64| -> Vec<f64> { phi0.iter().zip(u).map(|(p, v)| p + s * v).collect() };
    let end_phi: Vec<f64> = phi_at(t);
    if t == 0.0 || field.vertical.terms.is_empty() {
        return StatePoint::new(&end_phi, m0.g.clone());
    }
    let n = (t.abs() / step).ceil().max(1.0) as usize;
    let h = t / n as f64;
    let a = |s: f64| field.vertical.eval(&phi_at(s));
    let mut g = m0.g.clone();
    for i in 0..n {
        let s = i as f64 * h;
        let k1 = a(s).scale(h);
        let mid = a(s + 0.5 * h);
        let k2 = dexpinv(&k1.scale(0.5), &mid).scale(h);
        let k3 = dexpinv(&k2.scale(0.5), &mid).scale(h);
        let k4 = dexpinv(&k3, &a(s + h)).scale(h);
        let sigma = k1
            .axpy(2.0, &k2)
            .axpy(2.0, &k3)
            .add(&k4)
            .scale(1.0 / 6.0);
        g = g.compose(&exp_algebra(&sigma));
    }
    StatePoint::new(&end_phi, g)
}

/// Phase of a unit-period lift at `m`: `γ = g(1)·g(0)⁻¹`.
pub fn phase(lift: &Lift, k: usize, m: &StatePoint, step: f64) -> Result<GroupElement, DynError> {
    let field = lift.field(k);
    let end = flow(&field, m, 1.0, step);
    let offset = end
        .phi
        .iter()
        .zip(&m.phi)
        .map(|(a, b)| circle_diff(*a, *b).abs())
        .fold(0.0, f64::max);
    if offset > 1e-12 {
        return Err(DynError::PeriodMismatch(offset));
    }
    Ok(end.g.compose(&m.g.inverse()))
}

/// Convenience: exact scalars as a [`FrequencyVector`].
pub fn exact_omega(entries: Vec<ExactScalar>) -> FrequencyVector {
    FrequencyVector(entries.into_iter().map(Scalar::Exact).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::rz;

    fn ez(c: f64) -> AlgebraVector {
        AlgebraVector::so3([0.0, 0.0, c])
    }

    #[test]
    fn bracket_defect_examples() {
        let k = 2;
        // Constant coefficients along one axis commute.
        let c = CoeffFunction::constant(k, ez(0.3));
        let d = CoeffFunction::constant(k, ez(-1.2));
        assert_eq!(bracket_defect(&[1.0, 0.0], &c, &[0.0, 1.0], &d).max_coeff_norm(), 0.0);

        let zero = CoeffFunction::zero(GroupId::So3, k);
        let s2 = zero.clone().with_term(vec![0, 1], AlgebraVector::zero(GroupId::So3), ez(1.0));
        assert_eq!(bracket_defect(&[1.0, 0.0], &zero, &[1.0, 0.0], &s2).max_coeff_norm(), 0.0);

        // ∂/∂φ₂ sin(2πφ₂) = 2π cos(2πφ₂).
        let defect = bracket_defect(&[0.0, 1.0], &zero, &[1.0, 0.0], &s2);
        assert_eq!(defect.terms.len(), 1);
        assert_eq!(defect.terms[0].index, vec![0, 1]);
        assert!((defect.terms[0].cos.coeffs[2] - TAU).abs() < 1e-12);
        assert!(defect.terms[0].sin.is_zero());
    }

    #[test]
    fn bracket_matches_pointwise_cross_product() {
        let k = 2;
        let c = CoeffFunction::zero(GroupId::So3, k)
            .with_term(vec![1, 0], AlgebraVector::so3([1.0, 0.5, 0.0]), AlgebraVector::so3([0.0, 0.2, 0.3]))
            .with_term(vec![0, 0], AlgebraVector::so3([0.1, 0.0, 0.7]), AlgebraVector::zero(GroupId::So3));
        let d = CoeffFunction::zero(GroupId::So3, k)
            .with_term(vec![1, -2], AlgebraVector::so3([0.0, 1.0, 0.4]), AlgebraVector::so3([0.3, 0.0, -1.0]));
        let br = c.bracket(&d);
        for phi in [[0.1, 0.7], [0.33, 0.05], [0.9, 0.41]] {
            let direct = c.eval(&phi).bracket(&d.eval(&phi));
            assert!(br.eval(&phi).axpy(-1.0, &direct).norm() < 1e-12);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let c = CoeffFunction::zero(GroupId::So3, 2)
            .with_term(vec![2, -1], AlgebraVector::so3([1.0, 0.5, 0.0]), AlgebraVector::so3([0.0, 0.2, 0.3]));
        let u = [0.3, 1.7];
        let d = c.derivative(&u);
        let phi = [0.21, 0.64];
        let h = 1e-6;
        let fwd: Vec<f64> = phi.iter().zip(&u).map(|(p, v)| p + h * v).collect();
        let bwd: Vec<f64> = phi.iter().zip(&u).map(|(p, v)| p - h * v).collect();
        let fd = c.eval(&fwd).axpy(-1.0, &c.eval(&bwd)).scale(0.5 / h);
        assert!(d.eval(&phi).axpy(-1.0, &fd).norm() < 1e-6);
    }

    #[test]
    fn flow_examples() {
        let t1 = CoeffFunction::zero(GroupId::Torus(1), 1);
        let field = VectorField {
            horizontal: vec![1.0],
            vertical: t1,
        };
        let m = StatePoint::new(&[0.2], GroupElement::torus(&[0.0]));
        let out = flow(&field, &m, 0.3, DEFAULT_STEP);
        assert!((out.phi[0] - 0.5).abs() < 1e-15);

        let c = 0.8;
        let field = VectorField {
            horizontal: vec![1.0],
            vertical: CoeffFunction::constant(1, ez(c)),
        };
        let m = StatePoint::new(&[0.0], GroupElement::identity(GroupId::So3));
        let out = flow(&field, &m, 1.0, 1e-3);
        assert!(out.g.distance(&rz(c)) < 1e-11);
    }

    #[test]
    fn phase_examples() {
        let k = 2;
        let trivial = Lift {
            direction: 0,
            vertical: CoeffFunction::zero(GroupId::So3, k),
        };
        let m = StatePoint::new(&[0.1, 0.4], GroupElement::identity(GroupId::So3));
        let g = phase(&trivial, k, &m, DEFAULT_STEP).unwrap();
        assert!(g.distance(&GroupElement::identity(GroupId::So3)) < 1e-15);

        let c = 1.3;
        let l = Lift {
            direction: 1,
            vertical: CoeffFunction::constant(k, ez(c)),
        };
        assert!(phase(&l, k, &m, DEFAULT_STEP).unwrap().distance(&rz(c)) < 1e-11);
    }

    #[test]
    fn k_one_has_vacuous_hypotheses() {
        let spec = SystemSpec {
            group: GroupId::So3,
            k: 1,
            omega: FrequencyVector::numeric(&[1.0]),
            vertical: CoeffFunction::constant(1, ez(0.4)),
            lifts: vec![],
            base_point: StatePoint::new(&[0.0], GroupElement::identity(GroupId::So3)),
            exact_vertical_mean: None,
        };
        assert!(check_hypotheses(&spec).is_empty());
        let lifts = complete_lifts(&spec).unwrap();
        assert_eq!(lifts.len(), 1);
        assert!(lifts[0].vertical.mean().axpy(-1.0, &ez(0.4)).norm() < 1e-15);
    }

    #[test]
    fn zero_frequency_is_rejected() {
        let spec = SystemSpec {
            group: GroupId::Torus(1),
            k: 2,
            omega: FrequencyVector::numeric(&[1.0, 0.0]),
            vertical: CoeffFunction::zero(GroupId::Torus(1), 2),
            lifts: vec![Lift {
                direction: 0,
                vertical: CoeffFunction::zero(GroupId::Torus(1), 2),
            }],
            base_point: StatePoint::new(&[0.0, 0.0], GroupElement::torus(&[0.0])),
            exact_vertical_mean: None,
        };
        assert_eq!(complete_lifts(&spec), Err(DynError::ZeroFrequency(2)));
    }

    #[test]
    fn structural_violations() {
        let mut spec = SystemSpec {
            group: GroupId::Torus(1),
            k: 3,
            omega: FrequencyVector::numeric(&[1.0, 2.0, 3.0]),
            vertical: CoeffFunction::zero(GroupId::Torus(1), 3),
            lifts: vec![
                Lift {
                    direction: 0,
                    vertical: CoeffFunction::zero(GroupId::Torus(1), 3),
                },
                Lift {
                    direction: 0,
                    vertical: CoeffFunction::zero(GroupId::Torus(1), 3),
                },
            ],
            base_point: StatePoint::new(&[0.0; 3], GroupElement::torus(&[0.0])),
            exact_vertical_mean: None,
        };
        assert_eq!(check_hypotheses(&spec), vec![Violation::DuplicateDirection { direction: 1 }]);
        spec.lifts.pop();
        assert_eq!(
            check_hypotheses(&spec),
            vec![Violation::LiftCount { expected: 2, got: 1 }]
        );
    }
}
