//! Compact groups supported by the pipeline: tori 𝕋ᵈ and SO(3).
//!
//! Torus elements are vectors of angles in turns, reduced to `[0, 1)`; the
//! Lie algebra uses the same units, so the exponential is reduction mod 1.
//! SO(3) elements are unit quaternions with the sign fixed so that `w ≥ 0`;
//! algebra vectors are rotation vectors in radians.
//!
//! [`GroupId`] is a closed enumeration. Adding SU(2) or SO(n) means adding a
//! variant, its payload in [`GroupElement`], and the arms of `exp`, `mul`,
//! `bracket`, `adjoint` and the torus helpers in this module.

use std::f64::consts::{PI, TAU};
use std::fmt;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{snf, IntMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "dim")]
pub enum GroupId {
    Torus(usize),
    So3,
}

impl GroupId {
    /// Dimension of the group (and of its Lie algebra).
    pub fn dim(self) -> usize {
        match self {
            GroupId::Torus(d) => d,
            GroupId::So3 => 3,
        }
    }

    pub fn rank(self) -> usize {
        match self {
            GroupId::Torus(d) => d,
            GroupId::So3 => 1,
        }
    }

    pub fn is_abelian(self) -> bool {
        matches!(self, GroupId::Torus(_))
    }

    /// Short human-readable name such as `S^1`, `T^3` or `SO(3)`.
    pub fn label(self) -> String {
        match self {
            GroupId::Torus(0) => "{e}".to_string(),
            GroupId::Torus(1) => "S^1".to_string(),
            GroupId::Torus(d) => format!("T^{d}"),
            GroupId::So3 => "SO(3)".to_string(),
        }
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GroupError {
    #[error("group mismatch: {0} vs {1}")]
    Mismatch(GroupId, GroupId),
    #[error("phases do not commute (pair {0}, {1}: commutator distance {2:.3e})")]
    NonCommutingPhases(usize, usize, f64),
    #[error("commuting phases {0} and {1} do not lie in a common torus")]
    NoCommonTorus(usize, usize),
    #[error("element is not in the torus (distance {0:.3e})")]
    NotInTorus(f64),
    #[error("no phases given")]
    NoPhases,
    #[error("algebra vector has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Tolerances used by the torus constructions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupTolerances {
    /// Payload distance allowed between `ab` and `ba`.
    pub comm: f64,
    /// Payload distance allowed between an element and its torus projection.
    pub mem: f64,
    /// Angle (radians) allowed between rotation axes.
    pub axis: f64,
}

impl Default for GroupTolerances {
    fn default() -> Self {
        GroupTolerances {
            comm: 1e-9,
            mem: 1e-9,
            axis: 1e-8,
        }
    }
}

/// Reduces an angle in turns to `[0, 1)`.
pub fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Principal representative of `x mod 1` in `[-1/2, 1/2)`.
pub fn wrap_centered(x: f64) -> f64 {
    let r = x - (x + 0.5).floor();
    if r >= 0.5 {
        r - 1.0
    } else {
        r
    }
}

/// Shortest signed distance on the circle ℝ/ℤ.
pub fn circle_diff(a: f64, b: f64) -> f64 {
    wrap_centered(a - b)
}

/// Unit quaternion `(w, x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quat(pub [f64; 4]);

impl Quat {
    pub const IDENTITY: Quat = Quat([1.0, 0.0, 0.0, 0.0]);

    pub fn product(self, o: Quat) -> Quat {
        let [a1, b1, c1, d1] = self.0;
        let [a2, b2, c2, d2] = o.0;
        Quat([
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ])
    }

    pub fn conj(self) -> Quat {
        let [w, x, y, z] = self.0;
        Quat([w, -x, -y, -z])
    }

    pub fn vector(self) -> [f64; 3] {
        [self.0[1], self.0[2], self.0[3]]
    }

    /// Normalizes and fixes the double-cover sign: `w > 0`, or `w = 0` and
    /// the first nonzero vector component positive.
    pub fn canonical(self) -> Quat {
        let n = self.0.iter().map(|c| c * c).sum::<f64>().sqrt();
        let mut q = self.0.map(|c| c / n);
        let flip = if q[0] != 0.0 {
            q[0] < 0.0
        } else {
            q[1..].iter().find(|c| **c != 0.0).is_some_and(|c| *c < 0.0)
        };
        if flip {
            q = q.map(|c| -c);
        }
        Quat(q)
    }

    /// Rotates a vector: `q v q⁻¹`.
    pub fn rotate(self, v: [f64; 3]) -> [f64; 3] {
        let p = Quat([0.0, v[0], v[1], v[2]]);
        self.product(p).product(self.conj()).vector()
    }

    /// Rotation vector (radians) with angle in `[0, π]`.
    pub fn log(self) -> [f64; 3] {
        let q = self.canonical();
        let v = q.vector();
        let s = norm3(v);
        if s < 1e-300 {
            return [0.0; 3];
        }
        let theta = 2.0 * s.atan2(q.0[0]);
        scale3(v, theta / s)
    }
}

pub(crate) fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Sign convention for axes: first component of magnitude above `eps` positive.
pub(crate) fn canonical_axis(u: [f64; 3]) -> [f64; 3] {
    let n = norm3(u);
    let u = scale3(u, 1.0 / n);
    match u.iter().find(|c| c.abs() > 1e-12) {
        Some(c) if *c < 0.0 => scale3(u, -1.0),
        _ => u,
    }
}

/// Rotation by `angle` radians about the z axis.
pub fn rz(angle: f64) -> GroupElement {
    exp_algebra(&AlgebraVector::so3([0.0, 0.0, angle]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupElement {
    Torus(Vec<f64>),
    So3(Quat),
}

impl GroupElement {
    pub fn identity(group: GroupId) -> GroupElement {
        match group {
            GroupId::Torus(d) => GroupElement::Torus(vec![0.0; d]),
            GroupId::So3 => GroupElement::So3(Quat::IDENTITY),
        }
    }

    /// Torus element from angles in turns (reduced mod 1).
    pub fn torus(angles: &[f64]) -> GroupElement {
        GroupElement::Torus(angles.iter().map(|&a| wrap_unit(a)).collect())
    }

    pub fn so3(q: [f64; 4]) -> GroupElement {
        GroupElement::So3(Quat(q).canonical())
    }

    pub fn group(&self) -> GroupId {
        match self {
            GroupElement::Torus(v) => GroupId::Torus(v.len()),
            GroupElement::So3(_) => GroupId::So3,
        }
    }

    /// Raw payload: torus angles, or quaternion components.
    pub fn payload(&self) -> Vec<f64> {
        match self {
            GroupElement::Torus(v) => v.clone(),
            GroupElement::So3(q) => q.0.to_vec(),
        }
    }

    /// Group product `self ∘ other`.
    pub fn mul(&self, other: &GroupElement) -> Result<GroupElement, GroupError> {
        if self.group() != other.group() {
            return Err(GroupError::Mismatch(self.group(), other.group()));
        }
        Ok(self.compose(other))
    }

    /// Product for operands already known to share a group.
    pub(crate) fn compose(&self, other: &GroupElement) -> GroupElement {
        match (self, other) {
            (GroupElement::Torus(a), GroupElement::Torus(b)) => {
                debug_assert_eq!(a.len(), b.len());
                GroupElement::Torus(a.iter().zip(b).map(|(x, y)| wrap_unit(x + y)).collect())
            }
            (GroupElement::So3(p), GroupElement::So3(q)) => {
                GroupElement::So3(p.product(*q).canonical())
            }
            _ => panic!("compose: group mismatch"),
        }
    }

    pub fn inverse(&self) -> GroupElement {
        match self {
            GroupElement::Torus(a) => GroupElement::Torus(a.iter().map(|x| wrap_unit(-x)).collect()),
            GroupElement::So3(q) => GroupElement::So3(q.conj().canonical()),
        }
    }

    /// Payload distance: Euclidean norm of circular differences on a torus,
    /// `min(|p − q|, |p + q|)` on quaternions. Infinite across groups.
    pub fn distance(&self, other: &GroupElement) -> f64 {
        match (self, other) {
            (GroupElement::Torus(a), GroupElement::Torus(b)) if a.len() == b.len() => a
                .iter()
                .zip(b)
                .map(|(x, y)| circle_diff(*x, *y).powi(2))
                .sum::<f64>()
                .sqrt(),
            (GroupElement::So3(p), GroupElement::So3(q)) => {
                let minus: f64 = p.0.iter().zip(q.0).map(|(a, b)| (a - b).powi(2)).sum();
                let plus: f64 = p.0.iter().zip(q.0).map(|(a, b)| (a + b).powi(2)).sum();
                minus.min(plus).sqrt()
            }
            _ => f64::INFINITY,
        }
    }

    /// Integer power by repeated squaring.
    pub fn pow(&self, n: i64) -> GroupElement {
        let mut base = if n < 0 { self.inverse() } else { self.clone() };
        let mut e = n.unsigned_abs();
        let mut acc = GroupElement::identity(self.group());
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.compose(&base);
            }
            base = base.compose(&base);
            e >>= 1;
        }
        acc
    }

    /// Adjoint action `Ad_g v = g v g⁻¹` on the Lie algebra.
    pub fn adjoint(&self, v: &AlgebraVector) -> AlgebraVector {
        match self {
            GroupElement::Torus(_) => v.clone(),
            GroupElement::So3(q) => AlgebraVector::so3(q.rotate(v.as3())),
        }
    }

    /// Uniformly distributed random element (Haar measure).
    pub fn random<R: Rng + ?Sized>(group: GroupId, rng: &mut R) -> GroupElement {
        match group {
            GroupId::Torus(d) => GroupElement::Torus((0..d).map(|_| rng.random::<f64>()).collect()),
            GroupId::So3 => {
                let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
                let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
                GroupElement::so3([
                    a * (TAU * u2).sin(),
                    a * (TAU * u2).cos(),
                    b * (TAU * u3).sin(),
                    b * (TAU * u3).cos(),
                ])
            }
        }
    }
}

/// Lie-algebra vector in the fixed basis of its group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgebraVector {
    pub group: GroupId,
    pub coeffs: Vec<f64>,
}

impl AlgebraVector {
    pub fn new(group: GroupId, coeffs: Vec<f64>) -> Result<Self, GroupError> {
        if coeffs.len() != group.dim() {
            return Err(GroupError::Dimension {
                expected: group.dim(),
                got: coeffs.len(),
            });
        }
        Ok(AlgebraVector { group, coeffs })
    }

    pub fn zero(group: GroupId) -> Self {
        AlgebraVector {
            group,
            coeffs: vec![0.0; group.dim()],
        }
    }

    pub fn so3(v: [f64; 3]) -> Self {
        AlgebraVector {
            group: GroupId::So3,
            coeffs: v.to_vec(),
        }
    }

    pub fn torus(v: &[f64]) -> Self {
        AlgebraVector {
            group: GroupId::Torus(v.len()),
            coeffs: v.to_vec(),
        }
    }

    pub(crate) fn as3(&self) -> [f64; 3] {
        [self.coeffs[0], self.coeffs[1], self.coeffs[2]]
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        AlgebraVector {
            group: self.group,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.group, other.group);
        AlgebraVector {
            group: self.group,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        debug_assert_eq!(self.group, other.group);
        AlgebraVector {
            group: self.group,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + s * b)
                .collect(),
        }
    }

    /// Lie bracket; the cross product on so(3), zero on a torus.
    pub fn bracket(&self, other: &Self) -> Self {
        match self.group {
            GroupId::Torus(_) => AlgebraVector::zero(self.group),
            GroupId::So3 => AlgebraVector::so3(cross3(self.as3(), other.as3())),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }
}

/// Group exponential.
pub fn exp_algebra(v: &AlgebraVector) -> GroupElement {
    match v.group {
        GroupId::Torus(_) => GroupElement::torus(&v.coeffs),
        GroupId::So3 => {
            let w = v.as3();
            let theta = norm3(w);
            let half = 0.5 * theta;
            // sin(θ/2)/θ, with its Taylor expansion near zero.
            let s = if theta < 1e-8 {
                0.5 - theta * theta / 48.0
            } else {
                half.sin() / theta
            };
            GroupElement::so3([half.cos(), s * w[0], s * w[1], s * w[2]])
        }
    }
}

/// Shape of a torus subgroup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TorusShape {
    /// The trivial subgroup `{e}`.
    Trivial,
    /// Rotations of SO(3) about a fixed unit axis.
    Axis { axis: [f64; 3] },
    /// Subtorus of 𝕋ᵈ; columns of `embedding` are the integral basis in
    /// ambient coordinates and span a primitive lattice.
    Sub { embedding: Vec<Vec<i64>> },
}

/// A torus subgroup with an integral basis of its Lie algebra.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusDescriptor {
    pub group: GroupId,
    pub dim: usize,
    pub integral_basis: Vec<AlgebraVector>,
    pub shape: TorusShape,
}

impl TorusDescriptor {
    pub fn trivial(group: GroupId) -> Self {
        TorusDescriptor {
            group,
            dim: 0,
            integral_basis: Vec::new(),
            shape: TorusShape::Trivial,
        }
    }

    /// The full torus 𝕋ᵈ with its standard basis.
    pub fn full_torus(d: usize) -> Self {
        if d == 0 {
            return Self::trivial(GroupId::Torus(0));
        }
        let embedding = (0..d)
            .map(|i| (0..d).map(|j| i64::from(i == j)).collect())
            .collect();
        Self::sub_torus_of(d, embedding)
    }

    /// One-parameter subgroup of SO(3) about `axis`, basis `2π·axis`.
    pub fn so3_axis(axis: [f64; 3]) -> Self {
        let u = canonical_axis(axis);
        TorusDescriptor {
            group: GroupId::So3,
            dim: 1,
            integral_basis: vec![AlgebraVector::so3(scale3(u, TAU))],
            shape: TorusShape::Axis { axis: u },
        }
    }

    fn sub_torus_of(d: usize, embedding: Vec<Vec<i64>>) -> Self {
        let dim = embedding.first().map_or(0, Vec::len);
        if dim == 0 {
            return Self::trivial(GroupId::Torus(d));
        }
        let integral_basis = (0..dim)
            .map(|j| AlgebraVector::torus(&embedding.iter().map(|r| r[j] as f64).collect::<Vec<_>>()))
            .collect();
        TorusDescriptor {
            group: GroupId::Torus(d),
            dim,
            integral_basis,
            shape: TorusShape::Sub { embedding },
        }
    }

    /// Subtorus whose integral basis is `Σⱼ cols[j][m] ξⱼ`, `m = 0..cols.cols()`.
    /// The columns must span a primitive sublattice of the current one.
    pub fn sub_torus(&self, cols: &IntMatrix) -> Self {
        assert_eq!(cols.rows(), self.dim, "basis change has wrong row count");
        let new_dim = cols.cols();
        if new_dim == 0 {
            return Self::trivial(self.group);
        }
        let c = |j: usize, m: usize| cols[(j, m)].to_i64().expect("small basis change");
        match &self.shape {
            TorusShape::Trivial => unreachable!("nonempty basis change on trivial torus"),
            TorusShape::Axis { axis } => {
                let s = c(0, 0);
                assert_eq!(s.abs(), 1, "axis torus basis change must be ±1");
                TorusDescriptor {
                    group: GroupId::So3,
                    dim: 1,
                    integral_basis: vec![AlgebraVector::so3(scale3(*axis, TAU * s as f64))],
                    shape: TorusShape::Axis { axis: *axis },
                }
            }
            TorusShape::Sub { embedding } => {
                let d = embedding.len();
                let emb = (0..d)
                    .map(|i| {
                        (0..new_dim)
                            .map(|m| (0..self.dim).map(|j| embedding[i][j] * c(j, m)).sum())
                            .collect()
                    })
                    .collect();
                Self::sub_torus_of(d, emb)
            }
        }
    }

    /// Algebra vector `Σ cⱼ ξⱼ`.
    pub fn from_coordinates(&self, c: &[f64]) -> AlgebraVector {
        assert_eq!(c.len(), self.dim);
        self.integral_basis
            .iter()
            .zip(c)
            .fold(AlgebraVector::zero(self.group), |acc, (b, x)| acc.axpy(*x, b))
    }

    /// Coordinates of an algebra vector in the integral basis, if it lies in
    /// the torus Lie algebra (relative residual below `tol`).
    pub fn coordinates_of(&self, v: &AlgebraVector, tol: f64) -> Option<Vec<f64>> {
        let c = self.project_coordinates(v);
        let back = self.from_coordinates(&c);
        let err = back.axpy(-1.0, v).norm();
        (err <= tol * (1.0 + v.norm())).then_some(c)
    }

    fn project_coordinates(&self, v: &AlgebraVector) -> Vec<f64> {
        match &self.shape {
            TorusShape::Trivial => Vec::new(),
            TorusShape::Axis { .. } => {
                let b = self.integral_basis[0].as3();
                vec![dot3(v.as3(), b) / dot3(b, b)]
            }
            TorusShape::Sub { embedding } => {
                let (y, s) = smith_coordinates(embedding, &v.coeffs);
                let z: Vec<f64> = y[..self.dim].to_vec();
                smith_back(&s, &z)
            }
        }
    }

    /// Principal coordinates (each in `[-1/2, 1/2)`) of the torus element
    /// closest to `g`, with the payload distance from `g` to it.
    pub fn nearest(&self, g: &GroupElement) -> (Vec<f64>, f64) {
        let coords = match (&self.shape, g) {
            (TorusShape::Trivial, _) => Vec::new(),
            (TorusShape::Axis { .. }, GroupElement::So3(q)) => {
                let b = self.integral_basis[0].as3();
                let u = scale3(b, 1.0 / norm3(b));
                let theta = 2.0 * dot3(q.vector(), u).atan2(q.0[0]);
                vec![wrap_centered(theta / TAU)]
            }
            (TorusShape::Sub { embedding }, GroupElement::Torus(x)) => {
                let (y, s) = smith_coordinates(embedding, x);
                let z: Vec<f64> = y[..self.dim].iter().map(|v| wrap_centered(*v)).collect();
                smith_back(&s, &z).into_iter().map(wrap_centered).collect()
            }
            _ => return (vec![0.0; self.dim], f64::INFINITY),
        };
        let dist = exp_algebra(&self.from_coordinates(&coords)).distance(g);
        (coords, dist)
    }

    pub fn distance_to(&self, g: &GroupElement) -> f64 {
        self.nearest(g).1
    }

    pub fn contains(&self, g: &GroupElement, tol: f64) -> bool {
        self.distance_to(g) <= tol
    }

    /// Rotation axis for SO(3) tori of dimension one.
    pub fn axis(&self) -> Option<[f64; 3]> {
        match &self.shape {
            TorusShape::Axis { axis } => Some(*axis),
            _ => None,
        }
    }
}

/// Coordinates of `x` after the Smith transform `U` of the embedding `E`
/// (`U E V = D`, `D` all ones for a primitive lattice).
fn smith_coordinates(embedding: &[Vec<i64>], x: &[f64]) -> (Vec<f64>, crate::linalg::SnfDecomposition) {
    let d = embedding.len();
    let cols = embedding.first().map_or(0, Vec::len);
    let e = IntMatrix::from_i64(embedding, cols);
    let s = snf(&e);
    let y = (0..d)
        .map(|i| {
            s.u.row(i)
                .iter()
                .zip(x)
                .map(|(a, b)| bigint_f64(a) * b)
                .sum()
        })
        .collect();
    (y, s)
}

fn smith_back(s: &crate::linalg::SnfDecomposition, z: &[f64]) -> Vec<f64> {
    let n = s.v.rows();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let dj = bigint_f64(&s.d[(j, j)]);
                    bigint_f64(&s.v[(i, j)]) * z[j] / dj
                })
                .sum()
        })
        .collect()
}

fn bigint_f64(x: &BigInt) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Smallest torus the pipeline can build that contains every phase: the full
/// group for 𝕋ᵈ, the common rotation axis for SO(3).
pub fn commuting_torus(phases: &[GroupElement]) -> Result<TorusDescriptor, GroupError> {
    commuting_torus_with(phases, &GroupTolerances::default())
}

pub fn commuting_torus_with(
    phases: &[GroupElement],
    tol: &GroupTolerances,
) -> Result<TorusDescriptor, GroupError> {
    let Some(first) = phases.first() else {
        return Err(GroupError::NoPhases);
    };
    let group = first.group();
    for p in phases {
        if p.group() != group {
            return Err(GroupError::Mismatch(group, p.group()));
        }
    }
    for i in 0..phases.len() {
        for j in i + 1..phases.len() {
            let ab = phases[i].compose(&phases[j]);
            let ba = phases[j].compose(&phases[i]);
            let dist = ab.distance(&ba);
            if dist > tol.comm {
                return Err(GroupError::NonCommutingPhases(i, j, dist));
            }
        }
    }
    match group {
        GroupId::Torus(d) => Ok(TorusDescriptor::full_torus(d)),
        GroupId::So3 => {
            let vecs: Vec<[f64; 3]> = phases
                .iter()
                .map(|p| match p {
                    GroupElement::So3(q) => q.vector(),
                    _ => unreachable!(),
                })
                .collect();
            // Reference axis from the best-conditioned nontrivial phase.
            let reference = (0..vecs.len())
                .filter(|&i| norm3(vecs[i]) > tol.mem)
                .max_by(|&a, &b| norm3(vecs[a]).total_cmp(&norm3(vecs[b])));
            let Some(r) = reference else {
                return Ok(TorusDescriptor::trivial(GroupId::So3));
            };
            let torus = TorusDescriptor::so3_axis(vecs[r]);
            let u = torus.axis().expect("axis torus");
            for (i, v) in vecs.iter().enumerate() {
                let n = norm3(*v);
                if n <= tol.mem {
                    continue;
                }
                let angle = norm3(cross3(u, *v)).atan2(dot3(u, *v).abs());
                let off_axis = norm3(cross3(u, *v));
                if angle > tol.axis && off_axis > tol.mem {
                    return Err(GroupError::NoCommonTorus(r.min(i), r.max(i)));
                }
            }
            Ok(torus)
        }
    }
}

/// Principal logarithm of `gamma` in `torus`: coordinates in `[-1/2, 1/2)`.
pub fn principal_log(gamma: &GroupElement, torus: &TorusDescriptor) -> Result<AlgebraVector, GroupError> {
    principal_log_with(gamma, torus, GroupTolerances::default().mem)
}

pub fn principal_log_with(
    gamma: &GroupElement,
    torus: &TorusDescriptor,
    tol_mem: f64,
) -> Result<AlgebraVector, GroupError> {
    if gamma.group() != torus.group {
        return Err(GroupError::Mismatch(gamma.group(), torus.group));
    }
    let (coords, dist) = torus.nearest(gamma);
    if dist > tol_mem {
        return Err(GroupError::NotInTorus(dist));
    }
    Ok(torus.from_coordinates(&coords))
}

/// Angle (radians, in `(-π, π]`) of an SO(3) element about `axis`.
pub fn angle_about(q: &Quat, axis: [f64; 3]) -> f64 {
    let theta = 2.0 * dot3(q.vector(), axis).atan2(q.0[0]);
    if theta <= -PI {
        theta + TAU
    } else if theta > PI {
        theta - TAU
    } else {
        theta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 1e-12;

    #[test]
    fn torus_mul_wraps() {
        let a = GroupElement::torus(&[0.7]);
        let b = GroupElement::torus(&[0.6]);
        let c = a.mul(&b).unwrap();
        assert!(c.distance(&GroupElement::torus(&[0.3])) < EPS);
    }

    #[test]
    fn mismatch_is_an_error() {
        let a = GroupElement::torus(&[0.7]);
        let b = GroupElement::identity(GroupId::So3);
        assert!(matches!(a.mul(&b), Err(GroupError::Mismatch(..))));
    }

    #[test]
    fn so3_inverse_and_same_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = GroupElement::random(GroupId::So3, &mut rng);
        let e = q.mul(&q.inverse()).unwrap();
        assert!(e.distance(&GroupElement::identity(GroupId::So3)) < EPS);
        let half = rz(PI / 2.0);
        assert!(half.mul(&half).unwrap().distance(&rz(PI)) < EPS);
    }

    #[test]
    fn exp_examples() {
        assert_eq!(
            exp_algebra(&AlgebraVector::zero(GroupId::So3)),
            GroupElement::identity(GroupId::So3)
        );
        let full = exp_algebra(&AlgebraVector::so3([0.0, 0.0, TAU]));
        assert!(full.distance(&GroupElement::identity(GroupId::So3)) < EPS);
        let quarter = exp_algebra(&AlgebraVector::so3([0.0, 0.0, PI / 2.0]));
        let c = (PI / 4.0).cos();
        let s = (PI / 4.0).sin();
        assert_eq!(quarter.payload().len(), 4);
        for (a, b) in quarter.payload().iter().zip([c, 0.0, 0.0, s]) {
            assert!((a - b).abs() < EPS);
        }
    }

    #[test]
    fn commuting_torus_examples() {
        let e = GroupElement::identity(GroupId::So3);
        assert_eq!(commuting_torus(&[e.clone(), e]).unwrap().dim, 0);

        let t = commuting_torus(&[rz(0.3), rz(1.1)]).unwrap();
        assert_eq!(t.dim, 1);
        let u = t.axis().unwrap();
        assert!((u[2] - 1.0).abs() < EPS);
        assert!(t.integral_basis[0].axpy(-1.0, &AlgebraVector::so3([0.0, 0.0, TAU])).norm() < EPS);

        let t = commuting_torus(&[GroupElement::torus(&[0.5, 0.0]), GroupElement::torus(&[0.0, 1.0 / 3.0])])
            .unwrap();
        assert_eq!(t.dim, 2);
        assert_eq!(t.integral_basis[0].coeffs, vec![1.0, 0.0]);
        assert_eq!(t.integral_basis[1].coeffs, vec![0.0, 1.0]);
    }

    #[test]
    fn commuting_torus_rejects() {
        let rx = exp_algebra(&AlgebraVector::so3([0.4, 0.0, 0.0]));
        assert!(matches!(
            commuting_torus(&[rx, rz(0.7)]),
            Err(GroupError::NonCommutingPhases(0, 1, _))
        ));
        // Half-turns about orthogonal axes commute but share no torus.
        let hx = exp_algebra(&AlgebraVector::so3([PI, 0.0, 0.0]));
        let hy = exp_algebra(&AlgebraVector::so3([0.0, PI, 0.0]));
        assert!(matches!(commuting_torus(&[hx, hy]), Err(GroupError::NoCommonTorus(..))));
    }

    #[test]
    fn antiparallel_axes_share_a_torus() {
        let t = commuting_torus(&[rz(0.3), rz(-1.1)]).unwrap();
        let eta = principal_log(&rz(-1.1), &t).unwrap();
        assert!((eta.coeffs[2] + 1.1).abs() < 1e-12);
    }

    #[test]
    fn principal_log_examples() {
        let t = TorusDescriptor::so3_axis([0.0, 0.0, 1.0]);
        let id = principal_log(&GroupElement::identity(GroupId::So3), &t).unwrap();
        assert!(id.is_zero() || id.norm() < EPS);
        let (c, _) = t.nearest(&rz(PI / 2.0));
        assert!((c[0] - 0.25).abs() < EPS);

        let t1 = TorusDescriptor::full_torus(1);
        let eta = principal_log(&GroupElement::torus(&[0.75]), &t1).unwrap();
        assert!((eta.coeffs[0] + 0.25).abs() < EPS);

        let off = exp_algebra(&AlgebraVector::so3([0.3, 0.0, 0.0]));
        assert!(matches!(principal_log(&off, &t), Err(GroupError::NotInTorus(_))));
    }

    #[test]
    fn subtorus_log_and_lattice() {
        // Diagonal circle (1, 2) inside 𝕋².
        let t = TorusDescriptor::full_torus(2).sub_torus(&IntMatrix::from_i64(&[vec![1], vec![2]], 1));
        let g = exp_algebra(&AlgebraVector::torus(&[0.3, 0.6]));
        let eta = principal_log(&g, &t).unwrap();
        assert!((eta.coeffs[0] - 0.3).abs() < EPS && (eta.coeffs[1] - 0.6).abs() < EPS);
        assert!(!t.contains(&GroupElement::torus(&[0.3, 0.3]), 1e-9));
        for c in [0.5, 1.0 / 3.0] {
            let z = t.from_coordinates(&[c]);
            assert!(exp_algebra(&z).distance(&GroupElement::identity(t.group)) > 1e-3);
        }
    }

    #[test]
    fn lattice_minimality_of_full_tori() {
        for t in [TorusDescriptor::full_torus(3), TorusDescriptor::so3_axis([1.0, 2.0, -0.5])] {
            let e = GroupElement::identity(t.group);
            for b in &t.integral_basis {
                assert!(exp_algebra(b).distance(&e) < 1e-12);
            }
            for c in [0.5, 1.0 / 3.0] {
                let z = t.from_coordinates(&vec![c; t.dim]);
                assert!(exp_algebra(&z).distance(&e) > 1e-3);
            }
        }
    }

    fn arb_so3() -> impl Strategy<Value = GroupElement> {
        any::<u64>().prop_map(|s| GroupElement::random(GroupId::So3, &mut ChaCha8Rng::seed_from_u64(s)))
    }

    fn arb_torus() -> impl Strategy<Value = GroupElement> {
        prop::collection::vec(0.0f64..1.0, 3).prop_map(|v| GroupElement::torus(&v))
    }

    proptest! {
        #[test]
        fn so3_associative_and_canonical(a in arb_so3(), b in arb_so3(), c in arb_so3()) {
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            prop_assert!(left.distance(&right) < EPS);
            if let GroupElement::So3(q) = a.compose(&b) {
                prop_assert!(q.0[0] >= 0.0);
                let n: f64 = q.0.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!((n - 1.0).abs() < EPS);
            }
        }

        #[test]
        fn torus_associative(a in arb_torus(), b in arb_torus(), c in arb_torus()) {
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            prop_assert!(left.distance(&right) < EPS);
        }

        #[test]
        fn principal_log_inverts_exp_mod_lattice(theta in -20.0f64..20.0, ax in prop::array::uniform3(-1.0f64..1.0)) {
            prop_assume!(norm3(ax) > 0.1);
            let t = TorusDescriptor::so3_axis(ax);
            let v = t.from_coordinates(&[theta]);
            let eta = principal_log(&exp_algebra(&v), &t).unwrap();
            let c = t.coordinates_of(&eta, 1e-9).unwrap()[0];
            prop_assert!((-0.5..0.5).contains(&c));
            let k = theta - c;
            prop_assert!((k - k.round()).abs() < 1e-9);
        }

        #[test]
        fn torus_log_inverts_exp(v in prop::collection::vec(-5.0f64..5.0, 2)) {
            let t = TorusDescriptor::full_torus(2);
            let eta = principal_log(&exp_algebra(&AlgebraVector::torus(&v)), &t).unwrap();
            for (a, b) in eta.coeffs.iter().zip(&v) {
                let k = b - a;
                prop_assert!((k - k.round()).abs() < 1e-9);
                prop_assert!((-0.5..0.5).contains(a));
            }
        }

        #[test]
        fn commuting_torus_contains_inputs(a in -3.0f64..3.0, b in -3.0f64..3.0, ax in prop::array::uniform3(-1.0f64..1.0)) {
            prop_assume!(norm3(ax) > 0.1);
            let u = scale3(ax, 1.0 / norm3(ax));
            let ps = [exp_algebra(&AlgebraVector::so3(scale3(u, a))), exp_algebra(&AlgebraVector::so3(scale3(u, b)))];
            let t = commuting_torus(&ps).unwrap();
            for p in &ps {
                prop_assert!(t.distance_to(p) < 1e-10);
            }
        }
    }
}
