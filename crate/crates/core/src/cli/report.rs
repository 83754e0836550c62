//! Deterministic JSON documents for the CLI outputs.

use serde::Serialize;
use serde_json::{json, Map, Value};

use super::config::RunConfig;
use crate::dynsys::SystemSpec;
use crate::freqs::{FrequencyVector, Scalar};
use crate::linalg::{IntMatrix, SnfDecomposition};
use crate::reconstruct::PipelineResult;
use crate::verify::VerificationReport;

fn round12(x: f64) -> f64 {
    let r = (x * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Applies `f` to every float in `v`; integers are left alone.
fn map_floats(v: Value, f: fn(f64) -> f64) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => json!(f(n.as_f64().unwrap_or(0.0))),
        Value::Array(a) => Value::Array(a.into_iter().map(|x| map_floats(x, f)).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, x)| (k, map_floats(x, f))).collect()),
        other => other,
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serializable")
}

fn scalar_json(s: &Scalar) -> Value {
    match s {
        Scalar::Exact(e) => json!({ "exact": e.coeff_strings(), "display": e.to_string(), "value": e.value() }),
        Scalar::Numeric(x) => json!({ "value": x }),
    }
}

fn freq_json(v: &FrequencyVector) -> Value {
    Value::Array(v.0.iter().map(scalar_json).collect())
}

fn basis_names(spec: &SystemSpec) -> Value {
    spec.omega
        .0
        .iter()
        .find_map(Scalar::as_exact)
        .map_or(json!(["1"]), |e| json!(e.basis().names()))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Full pipeline output. Computed floats are rounded to 12 decimals; the
/// config echo is kept verbatim so the run can be reproduced from it.
pub fn reconstruction_json(cfg: &RunConfig, spec: &SystemSpec, res: &PipelineResult) -> String {
    let pd = &res.phase;
    let drift = &res.drift;
    let reduction = &res.resonance;
    let given: Vec<usize> = spec.lifts.iter().map(|l| l.direction + 1).collect();
    let completed = (1..=spec.k).find(|d| !given.contains(d));
    let mut notes = pd.notes.clone();
    if res.heuristic() {
        notes.push("relation lattices come from the bounded numeric search".to_string());
    }
    let computed = json!({
        "choices": {
            "base_point": { "phi": spec.base_point.phi, "g": spec.base_point.g.payload() },
            "lift_directions": given,
            "completed_direction": completed,
            "log_branch": match &cfg.pipeline.branch_shift {
                None => json!("principal"),
                Some(s) => json!({ "principal_plus": s }),
            },
            "mode": cfg.pipeline.mode,
            "exact_route": pd.exact_drift.is_some(),
            "step": cfg.pipeline.step,
            "search": { "height_bound": cfg.pipeline.height_bound, "tol": cfg.pipeline.tol },
        },
        "basis": basis_names(spec),
        "phases": pd.phases.iter().map(|g| g.payload()).collect::<Vec<_>>(),
        "phase_torus": to_value(&pd.torus),
        "logs": pd.logs.iter().map(|v| v.coeffs.clone()).collect::<Vec<_>>(),
        "h": pd.h,
        "branch_offsets": pd.branch_offsets,
        "drift": {
            "nu": freq_json(&drift.nu),
            "nu_phase_torus": freq_json(&drift.nu_ambient),
            "d1": drift.d1,
            "drift_torus": to_value(&drift.torus),
            "drift_torus_basis": drift.basis_in_ambient,
            "homogeneous_relations": drift.homogeneous_relations,
            "heuristic": drift.heuristic,
            "base_label": drift.base_label,
        },
        "resonances": {
            "l": reduction.l,
            "resonance_basis": reduction.resonance_basis,
            "p": reduction.p,
            "r_factors": reduction.r_factors,
            "r": reduction.r,
            "basis_change": reduction.basis_change,
            "nu_prime": freq_json(&reduction.nu_prime),
            "delta": reduction.delta_coords,
            "eta_prime": reduction.eta_prime.iter().map(|v| v.coeffs.clone()).collect::<Vec<_>>(),
            "d0": reduction.d0,
            "nu_second": freq_json(&reduction.nu_second),
            "omega_prime": freq_json(&reduction.omega_prime),
            "k_subgroup": {
                "modulus": reduction.k_subgroup.modulus,
                "order": reduction.k_subgroup.order,
                "generators": reduction.k_subgroup.generators,
                "elements": reduction.k_subgroup.elements,
            },
            "f0_order": reduction.f0_order,
            "f0_invariants": reduction.f0_invariants,
            "covering_degree": reduction.covering_degree,
            "resonance_residuals": reduction.resonance_residuals,
            "reduced_nonresonant": reduction.reduced_nonresonant,
            "heuristic": reduction.heuristic,
            "base_label": reduction.base_label,
        },
        "heuristic": res.heuristic(),
        "notes": notes,
    });
    let mut doc = match map_floats(computed, round12) {
        Value::Object(o) => o,
        _ => unreachable!(),
    };
    doc.insert("config".to_string(), to_value(cfg));
    pretty(&Value::Object(doc))
}

pub fn verification_json(cfg: &RunConfig, rep: &VerificationReport) -> String {
    let mut doc: Map<String, Value> = match map_floats(
        json!({
            "rows": rep.rows,
            "frequencies": rep.frequencies,
            "fit_error": rep.fit_error,
            "predicted_group_drift": rep.predicted_group_drift,
            "heuristic": rep.heuristic,
            "pass": rep.passed(),
        }),
        sig12,
    ) {
        Value::Object(o) => o,
        _ => unreachable!(),
    };
    doc.insert("tolerances".to_string(), to_value(&rep.tolerances));
    doc.insert("config".to_string(), to_value(cfg));
    pretty(&Value::Object(doc))
}

fn int_rows(m: &IntMatrix) -> Value {
    Value::Array(
        (0..m.rows())
            .map(|i| {
                Value::Array(
                    m.row(i)
                        .iter()
                        .map(|x| x.to_string().parse::<i64>().map_or_else(|_| json!(x.to_string()), |n| json!(n)))
                        .collect(),
                )
            })
            .collect(),
    )
}

pub fn snf_json(a: &IntMatrix, s: &SnfDecomposition) -> String {
    pretty(&json!({
        "input": int_rows(a),
        "u": int_rows(&s.u),
        "d": int_rows(&s.d),
        "v": int_rows(&s.v),
        "invariant_factors": s.invariant_factors().iter().map(|x| x.to_string()).collect::<Vec<_>>(),
        "rank": s.rank(),
    }))
}

pub fn summary(res: &PipelineResult) -> String {
    let nu: Vec<String> = res
        .drift
        .nu
        .0
        .iter()
        .map(|s| match s {
            Scalar::Exact(e) => e.to_string(),
            Scalar::Numeric(x) => format!("{x:.12}"),
        })
        .collect();
    format!(
        "d1 = {}, nu = [{}], l = {}, r = {}, d0 = {}, |K| = {}, |F0| = {}, covering degree = {}, base = {}{}",
        res.drift.d1,
        nu.join(", "),
        res.resonance.l,
        res.resonance.r,
        res.resonance.d0,
        res.resonance.k_subgroup.order,
        res.resonance.f0_order,
        res.resonance.covering_degree,
        res.resonance.base_label,
        if res.heuristic() { " (heuristic)" } else { "" }
    )
}
