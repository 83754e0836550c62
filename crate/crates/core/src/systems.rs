//! Ready-made example systems.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;

use crate::dynsys::{CoeffFunction, Lift, StatePoint, SystemSpec};
use crate::freqs::{Basis, ExactScalar, FrequencyVector};
use crate::group::{norm3, AlgebraVector, GroupElement, GroupId};

/// Basis `{1, √2}`.
pub fn sqrt2_basis() -> Arc<Basis> {
    Basis::new([("sqrt2", 2f64.sqrt())])
}

/// `ω = (1, √2)` over [`sqrt2_basis`].
pub fn omega_one_sqrt2() -> FrequencyVector {
    let b = sqrt2_basis();
    FrequencyVector::exact(vec![ExactScalar::term(&b, 0, 1, 1), ExactScalar::term(&b, 1, 1, 1)])
}

fn rational(b: &Arc<Basis>, num: i64, den: i64) -> ExactScalar {
    ExactScalar::rational(b, BigRational::new(BigInt::from(num), BigInt::from(den)))
}

/// `X = ∂α₁ + √2∂α₂ + ½∂α₃` on 𝕋² × S¹ with the trivial lift `S₁ = ∂α₁`.
pub fn torus3() -> SystemSpec {
    let g = GroupId::Torus(1);
    let omega = omega_one_sqrt2();
    let b = omega.exact_entries().unwrap()[0].basis().clone();
    SystemSpec {
        group: g,
        k: 2,
        omega,
        vertical: CoeffFunction::constant(2, AlgebraVector::torus(&[0.5])),
        lifts: vec![Lift {
            direction: 0,
            vertical: CoeffFunction::zero(g, 2),
        }],
        base_point: StatePoint::new(&[0.0, 0.0], GroupElement::identity(g)),
        exact_vertical_mean: Some(vec![rational(&b, 1, 2)]),
    }
}

/// `X = ∂φ₁ + √2∂φ₂ + g·(f₁(φ₁) + f₂(φ₂))ξ` on 𝕋² × SO(3) with
/// `S₁ = ∂φ₁ + g·f₁(φ₁)ξ`, `ξ = ê_z`.
pub fn so3_system(f1: CoeffFunction, f2: CoeffFunction) -> SystemSpec {
    let g = GroupId::So3;
    SystemSpec {
        group: g,
        k: 2,
        omega: omega_one_sqrt2(),
        vertical: f1.axpy(1.0, &f2),
        lifts: vec![Lift {
            direction: 0,
            vertical: f1,
        }],
        base_point: StatePoint::new(&[0.0, 0.0], GroupElement::identity(g)),
        exact_vertical_mean: None,
    }
}

fn ez(c: f64) -> AlgebraVector {
    AlgebraVector::so3([0.0, 0.0, c])
}

/// Constant `f₁ ≡ c₁`, `f₂ ≡ c₂` in radians; no exact data.
pub fn so3_constant_radians(c1: f64, c2: f64) -> SystemSpec {
    so3_system(CoeffFunction::constant(2, ez(c1)), CoeffFunction::constant(2, ez(c2)))
}

/// Constant `f₁ ≡ n₁/d₁` turns and `f₂ ≡ n₂/d₂` turns, with exact mean.
pub fn so3_constant_turns(n1: i64, d1: i64, n2: i64, d2: i64) -> SystemSpec {
    let c1 = TAU * n1 as f64 / d1 as f64;
    let c2 = TAU * n2 as f64 / d2 as f64;
    let mut spec = so3_constant_radians(c1, c2);
    let b = sqrt2_basis();
    let zero = ExactScalar::zero(&b);
    let sum = rational(&b, n1, d1).checked_add(&rational(&b, n2, d2)).unwrap();
    spec.exact_vertical_mean = Some(vec![zero.clone(), zero, sum]);
    spec
}

/// `f₁ = sin 2πφ₁`, `f₂ ≡ 1/6` turn.
pub fn so3_fourier() -> SystemSpec {
    let zero = AlgebraVector::zero(GroupId::So3);
    let f1 = CoeffFunction::zero(GroupId::So3, 2).with_term(vec![1, 0], zero.clone(), ez(1.0));
    let f2 = CoeffFunction::constant(2, ez(TAU / 6.0));
    let mut spec = so3_system(f1, f2);
    let b = sqrt2_basis();
    let zero = ExactScalar::zero(&b);
    spec.exact_vertical_mean = Some(vec![zero.clone(), zero, rational(&b, 1, 6)]);
    spec
}

/// Every vertical part zero.
pub fn trivial_so3() -> SystemSpec {
    so3_system(CoeffFunction::zero(GroupId::So3, 2), CoeffFunction::zero(GroupId::So3, 2))
}

/// Random commuting system with vertical data along one random axis `u`:
/// `bᵢ = (∂F/∂φᵢ + cᵢ)u` for a random Fourier polynomial `F`, and
/// `a = Σ ωᵢbᵢ`. The base point is random too.
pub fn random_common_axis<R: Rng + ?Sized>(rng: &mut R) -> SystemSpec {
    let g = GroupId::So3;
    let k = 2;
    let raw = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let n = norm3(raw).max(1e-3);
    let u = [raw[0] / n, raw[1] / n, raw[2] / n];
    let along = |s: f64| AlgebraVector::so3([u[0] * s, u[1] * s, u[2] * s]);
    let modes: Vec<(Vec<i64>, f64, f64)> = (0..3)
        .map(|_| {
            let idx = vec![rng.random_range(-2..=2), rng.random_range(-2..=2)];
            (idx, rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3))
        })
        .collect();
    let consts: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
    let omega = omega_one_sqrt2();
    let w = omega.values();

    let lift_vertical = |i: usize| {
        let mut f = CoeffFunction::constant(k, along(consts[i]));
        for (idx, a, b) in &modes {
            let s = TAU * idx[i] as f64;
            f = f.with_term(idx.clone(), along(s * b), along(-s * a));
        }
        f.normalized()
    };
    let b: Vec<CoeffFunction> = (0..k).map(lift_vertical).collect();
    let vertical = b[0].scale(w[0]).axpy(w[1], &b[1]);
    let phi = [rng.random::<f64>(), rng.random::<f64>()];
    SystemSpec {
        group: g,
        k,
        omega,
        vertical,
        lifts: vec![Lift {
            direction: 0,
            vertical: b[0].clone(),
        }],
        base_point: StatePoint::new(&phi, GroupElement::random(g, rng)),
        exact_vertical_mean: None,
    }
}
