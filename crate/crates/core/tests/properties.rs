//! Randomized properties of flows, phases, the reconstruction map and the
//! deck transformations.

use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use reltori::dynsys::{flow, phase, StatePoint, SystemSpec, DEFAULT_STEP};
use reltori::group::{circle_diff, GroupElement, GroupId};
use reltori::reconstruct::{deck_action, run_pipeline, LiftChart, PipelineOptions, PipelineResult};
use reltori::systems;

struct Fixture {
    spec: SystemSpec,
    result: PipelineResult,
}

fn fixture(spec: SystemSpec) -> Fixture {
    let result = run_pipeline(&spec, &PipelineOptions::default()).unwrap();
    Fixture { spec, result }
}

fn fourier() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| fixture(systems::so3_fourier()))
}

fn torus() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| fixture(systems::torus3()))
}

fn arb_element(group: GroupId) -> impl Strategy<Value = GroupElement> {
    any::<u64>().prop_map(move |seed| GroupElement::random(group, &mut ChaCha8Rng::seed_from_u64(seed)))
}

fn arb_point(group: GroupId) -> impl Strategy<Value = StatePoint> {
    (prop::collection::vec(0.0..1.0f64, 2), arb_element(group)).prop_map(|(phi, g)| StatePoint::new(&phi, g))
}

fn angles_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| circle_diff(*x, *y).abs() < tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn phase_is_conjugation_equivariant(m in arb_point(GroupId::So3), h in arb_element(GroupId::So3)) {
        let f = fourier();
        for lift in &f.result.lifts {
            let gamma = phase(lift, f.spec.k, &m, DEFAULT_STEP).unwrap();
            let moved = phase(lift, f.spec.k, &m.act(&h), DEFAULT_STEP).unwrap();
            let expected = h.mul(&gamma).unwrap().mul(&h.inverse()).unwrap();
            prop_assert!(moved.distance(&expected) < 1e-9);
        }
    }

    #[test]
    fn lift_flows_commute_with_x(m in arb_point(GroupId::So3), s in -1.0..1.0f64, t in -1.0..1.0f64) {
        let f = fourier();
        let x = f.spec.x_field();
        for lift in &f.result.lifts {
            let field = lift.field(f.spec.k);
            let a = flow(&x, &flow(&field, &m, s, DEFAULT_STEP), t, DEFAULT_STEP);
            let b = flow(&field, &flow(&x, &m, t, DEFAULT_STEP), s, DEFAULT_STEP);
            prop_assert!(a.distance(&b) < 1e-9);
        }
    }

    #[test]
    fn reconstruction_map_is_periodic(
        alpha in prop::collection::vec(0.0..1.0f64, 2),
        g in arb_element(GroupId::So3),
        i in 0usize..2,
    ) {
        let f = fourier();
        let j = LiftChart::reconstruction(&f.spec, &f.result, DEFAULT_STEP);
        let mut shifted = alpha.clone();
        shifted[i] += 1.0;
        prop_assert!(j.eval(&alpha, &g).distance(&j.eval(&shifted, &g)) < 1e-9);
    }

    #[test]
    fn reconstruction_map_inverts(alpha in prop::collection::vec(0.0..1.0f64, 2), g in arb_element(GroupId::So3)) {
        let f = fourier();
        let j = LiftChart::reconstruction(&f.spec, &f.result, DEFAULT_STEP);
        let (a, h) = j.invert(&j.eval(&alpha, &g));
        prop_assert!(angles_close(&a, &alpha, 1e-12));
        prop_assert!(h.distance(&g) < 1e-9);
    }

    #[test]
    fn deck_action_is_a_group_action(
        u in prop::collection::vec(0i64..2, 2),
        v in prop::collection::vec(0i64..2, 2),
        alpha in prop::collection::vec(0.0..1.0f64, 2),
        g in arb_element(GroupId::Torus(1)),
    ) {
        let t2 = &torus().result.resonance;
        let (a1, g1) = deck_action(t2, &v, &alpha, &g);
        let (a2, g2) = deck_action(t2, &u, &a1, &g1);
        let sum: Vec<i64> = u.iter().zip(&v).map(|(x, y)| (x + y) % t2.r).collect();
        let (a3, g3) = deck_action(t2, &sum, &alpha, &g);
        prop_assert!(angles_close(&a2, &a3, 1e-12));
        prop_assert!(g2.distance(&g3) < 1e-12);
    }

    #[test]
    fn deck_images_share_covering_point(
        u in prop::collection::vec(0i64..2, 2),
        alpha in prop::collection::vec(0.0..1.0f64, 2),
        g in arb_element(GroupId::Torus(1)),
    ) {
        let f = torus();
        let cover = LiftChart::covering(&f.spec, &f.result, DEFAULT_STEP);
        let (a, h) = deck_action(&f.result.resonance, &u, &alpha, &g);
        prop_assert!(cover.eval(&a, &h).distance(&cover.eval(&alpha, &g)) < 1e-9);
    }

    #[test]
    fn pipeline_is_deterministic_on_random_systems(seed in any::<u64>()) {
        let spec = systems::random_common_axis(&mut ChaCha8Rng::seed_from_u64(seed));
        let opts = PipelineOptions::default();
        let a = run_pipeline(&spec, &opts).unwrap();
        let b = run_pipeline(&spec, &opts).unwrap();
        prop_assert_eq!(a.drift.d1, b.drift.d1);
        prop_assert_eq!(a.resonance.resonance_basis, b.resonance.resonance_basis);
        prop_assert_eq!(a.drift.nu.values(), b.drift.nu.values());
    }
}

#[test]
fn so3_constant_example_keeps_rotation_axis() {
    let spec = systems::so3_constant_radians(1.0, 1.0);
    let m0 = StatePoint::new(&[0.0, 0.0], GroupElement::so3([0.8, 0.36, 0.0, 0.48]));
    let mut m = m0.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        m = flow(&spec.x_field(), &m, 0.05, DEFAULT_STEP);
        let rel = m0.g.inverse().mul(&m.g).unwrap();
        let q = rel.payload();
        let off_axis = q[1].hypot(q[2]);
        worst = worst.max(off_axis);
    }
    assert!(worst < 1e-7, "off-axis drift {worst}");
}

#[test]
fn exhaustive_kernel_matches_small_residues() {
    let f = torus();
    let t2 = &f.result.resonance;
    let cover = LiftChart::covering(&f.spec, &f.result, DEFAULT_STEP);
    let e = GroupElement::identity(GroupId::Torus(1));
    let base = cover.eval(&[0.0, 0.0], &e);
    let mut fixed = Vec::new();
    for u1 in 0..t2.r {
        for u2 in 0..t2.r {
            let alpha = [u1 as f64 / t2.r as f64, u2 as f64 / t2.r as f64];
            if cover.eval(&alpha, &e).distance(&base) < 1e-9 {
                fixed.push(vec![u1, u2]);
            }
        }
    }
    assert_eq!(Some(fixed), t2.k_subgroup.elements);
}
