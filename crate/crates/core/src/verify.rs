//! Numerical certification of a reconstruction: conjugacy residuals, torus
//! residency along trajectories and empirical frequencies.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynsys::{flow, StatePoint, SystemSpec, VectorField, DEFAULT_STEP};
use crate::group::{
    angle_about, circle_diff, exp_algebra, AlgebraVector, GroupElement, GroupId, TorusDescriptor,
};
use crate::reconstruct::{deck_action, residues, LiftChart, PipelineResult};

#[derive(Debug, Error, PartialEq)]
pub enum VerifyError {
    #[error("frequency fit unstable: residual {residual:.3e} on series {series}")]
    FitUnstable { series: String, residual: f64 },
    #[error("trajectory has {0} samples; at least 3 are needed for a fit")]
    TooShort(usize),
}

/// Every tolerance used by the checks, echoed into reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub conjugacy: f64,
    pub phases: f64,
    pub residency: f64,
    pub frequency: f64,
    pub fit_unstable: f64,
    pub deck: f64,
    pub logs: f64,
    pub omega_eta: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            conjugacy: 1e-7,
            phases: 1e-8,
            residency: 1e-6,
            frequency: 1e-5,
            fit_unstable: 1e-3,
            deck: 1e-8,
            logs: 1e-10,
            omega_eta: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRow {
    pub fn new(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        CheckRow {
            name: name.into(),
            residual,
            tolerance,
            pass: residual <= tolerance,
        }
    }
}

/// Samples of one orbit on a uniform time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<StatePoint>,
    pub field: String,
    pub step: f64,
}

impl Trajectory {
    /// Orbit of `field` from `m0` sampled at `0, dt, …, n·dt`, integrating
    /// from sample to sample.
    pub fn sample(field: &VectorField, name: &str, m0: &StatePoint, dt: f64, n: usize, step: f64) -> Self {
        let mut times = Vec::with_capacity(n + 1);
        let mut points = Vec::with_capacity(n + 1);
        let mut m = m0.clone();
        times.push(0.0);
        points.push(m.clone());
        for i in 1..=n {
            m = flow(field, &m, dt, step);
            times.push(i as f64 * dt);
            points.push(m.clone());
        }
        Trajectory {
            times,
            points,
            field: name.to_string(),
            step,
        }
    }
}

/// Quantity expected to stay constant along an orbit of X.
#[derive(Clone, Debug)]
pub enum Invariant {
    /// `Σ aᵢφᵢ + Σ bⱼgⱼ mod 1` on raw coordinates; torus groups only.
    RawLinear { name: String, angles: Vec<i64>, group: Vec<i64> },
    /// `p·α + q·β mod 1` where `(α, h) = j⁻¹(m)` and `β` are the coordinates
    /// of `h₀⁻¹h` in `torus`.
    ChartLinear {
        name: String,
        chart: Box<LiftChart>,
        torus: TorusDescriptor,
        angles: Vec<i64>,
        group: Vec<i64>,
    },
    /// Distance of `h₀⁻¹h` from `torus`, with `h` the chart group part.
    ChartMembership { name: String, chart: Box<LiftChart>, torus: TorusDescriptor },
    /// Distance of `g(t)·g(0)⁻¹` from `torus`.
    TorusMembership { name: String, torus: TorusDescriptor },
}

impl Invariant {
    pub fn name(&self) -> &str {
        match self {
            Invariant::RawLinear { name, .. }
            | Invariant::ChartLinear { name, .. }
            | Invariant::ChartMembership { name, .. }
            | Invariant::TorusMembership { name, .. } => name,
        }
    }

    /// Drift of the invariant at `m` relative to the orbit start `m0`.
    fn drift(&self, m0: &StatePoint, m: &StatePoint) -> f64 {
        let dot = |c: &[i64], x: &[f64]| c.iter().zip(x).map(|(a, b)| *a as f64 * b).sum::<f64>();
        match self {
            Invariant::RawLinear { angles, group, .. } => {
                let v = |p: &StatePoint| dot(angles, &p.phi) + dot(group, &p.g.payload());
                circle_diff(v(m), v(m0)).abs()
            }
            Invariant::ChartLinear {
                chart,
                torus,
                angles,
                group,
                ..
            } => {
                let (a0, h0) = chart.invert(m0);
                let (a, h) = chart.invert(m);
                let beta = torus.nearest(&h0.inverse().compose(&h)).0;
                circle_diff(dot(angles, &a) + dot(group, &beta), dot(angles, &a0)).abs()
            }
            Invariant::ChartMembership { chart, torus, .. } => {
                let h0 = chart.invert(m0).1;
                let h = chart.invert(m).1;
                torus.distance_to(&h0.inverse().compose(&h))
            }
            Invariant::TorusMembership { torus, .. } => torus.distance_to(&m.g.compose(&m0.g.inverse())),
        }
    }
}

/// Largest drift of each invariant along the trajectory.
pub fn check_torus_residency(traj: &Trajectory, invariants: &[Invariant], tol: f64) -> Vec<CheckRow> {
    invariants
        .par_iter()
        .map(|inv| {
            let m0 = &traj.points[0];
            let worst = traj.points.iter().map(|m| inv.drift(m0, m)).fold(0.0, f64::max);
            CheckRow::new(format!("residency/{}", inv.name()), worst, tol)
        })
        .collect()
}

/// Invariants implied by the pipeline output.
pub fn default_invariants(spec: &SystemSpec, result: &PipelineResult, step: f64) -> Vec<Invariant> {
    let k = spec.k;
    let chart = Box::new(LiftChart::reconstruction(spec, result, step));
    let mut out = Vec::new();
    let raw_ok = matches!(spec.group, GroupId::Torus(_))
        && result.drift.basis_in_ambient.iter().enumerate().all(|(i, b)| {
            b.iter().enumerate().all(|(j, x)| *x == i64::from(i == j))
        })
        && result.drift.d1 == result.phase.torus.dim;
    for (n, rel) in result.resonance.resonance_basis.iter().enumerate() {
        let (angles, group) = (rel[..k].to_vec(), rel[k..].to_vec());
        if raw_ok {
            out.push(Invariant::RawLinear {
                name: format!("raw_resonance_{}", n + 1),
                angles: angles.clone(),
                group: group.clone(),
            });
        }
        out.push(Invariant::ChartLinear {
            name: format!("chart_resonance_{}", n + 1),
            chart: chart.clone(),
            torus: result.drift.torus.clone(),
            angles,
            group,
        });
    }
    out.push(Invariant::ChartMembership {
        name: "chart_group_in_drift_torus".to_string(),
        chart,
        torus: result.drift.torus.clone(),
    });
    out.push(Invariant::TorusMembership {
        name: "group_in_phase_torus".to_string(),
        torus: result.phase.torus.clone(),
    });
    out
}

/// Slopes of the unwrapped coordinates of a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrequencyFit {
    /// `k` angle slopes followed by the group slopes (turns per unit time).
    pub slopes: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Detected rotation axis for SO(3).
    pub axis: Option<[f64; 3]>,
}

fn unwrap(series: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut acc = series.first().copied().unwrap_or(0.0);
    out.push(acc);
    for w in series.windows(2) {
        acc += circle_diff(w[1], w[0]);
        out.push(acc);
    }
    out
}

/// Weighted least-squares slope with the smooth bump `exp(−1/(s(1−s)))`
/// on the normalized time `s`. For quasi-periodic data the bump makes the
/// error decay faster than any power of the time span. The residual is the
/// weighted RMS deviation divided by the span.
pub fn fit_slope(times: &[f64], values: &[f64]) -> (f64, f64) {
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let span = t1 - t0;
    let w: Vec<f64> = times
        .iter()
        .map(|t| {
            let s = (t - t0) / span;
            if s <= 0.0 || s >= 1.0 {
                0.0
            } else {
                (-1.0 / (s * (1.0 - s))).exp()
            }
        })
        .collect();
    let sw: f64 = w.iter().sum();
    let tm = w.iter().zip(times).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = w.iter().zip(values).map(|(a, b)| a * b).sum::<f64>() / sw;
    let stt: f64 = w.iter().zip(times).map(|(a, t)| a * (t - tm).powi(2)).sum();
    let sty: f64 = w
        .iter()
        .zip(times.iter().zip(values))
        .map(|(a, (t, y))| a * (t - tm) * (y - ym))
        .sum();
    let slope = sty / stt;
    let rss: f64 = w
        .iter()
        .zip(times.iter().zip(values))
        .map(|(a, (t, y))| a * (y - ym - slope * (t - tm)).powi(2))
        .sum();
    (slope, (rss / sw).sqrt() / span)
}

/// Rotation axis of the motion `g(t)·g(0)⁻¹`, taken from the sample with
/// the largest rotation.
fn detect_axis(rel: &[GroupElement]) -> Option<[f64; 3]> {
    let mut best: Option<[f64; 3]> = None;
    let mut best_norm = 1e-9;
    for g in rel {
        if let GroupElement::So3(q) = g {
            let v = q.vector();
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > best_norm {
                best_norm = n;
                best = Some([v[0] / n, v[1] / n, v[2] / n]);
            }
        }
    }
    best.map(crate::group::canonical_axis)
}

/// Unwrapped linear fits of every angle and of the group motion.
pub fn extract_frequencies(traj: &Trajectory, fit_tol: f64) -> Result<FrequencyFit, VerifyError> {
    let n = traj.points.len();
    if n < 3 {
        return Err(VerifyError::TooShort(n));
    }
    let k = traj.points[0].phi.len();
    let mut series: Vec<(String, Vec<f64>)> = (0..k)
        .map(|i| (format!("angle_{}", i + 1), unwrap(&traj.points.iter().map(|p| p.phi[i]).collect::<Vec<_>>())))
        .collect();
    let g0inv = traj.points[0].g.inverse();
    let rel: Vec<GroupElement> = traj.points.iter().map(|p| p.g.compose(&g0inv)).collect();
    let mut axis = None;
    match traj.points[0].g.group() {
        GroupId::Torus(d) => {
            for j in 0..d {
                let s: Vec<f64> = rel.iter().map(|g| g.payload()[j]).collect();
                series.push((format!("group_{}", j + 1), unwrap(&s)));
            }
        }
        GroupId::So3 => {
            axis = detect_axis(&rel);
            let s: Vec<f64> = match axis {
                Some(u) => rel
                    .iter()
                    .map(|g| match g {
                        GroupElement::So3(q) => angle_about(q, u) / TAU,
                        GroupElement::Torus(_) => unreachable!(),
                    })
                    .collect(),
                None => vec![0.0; n],
            };
            series.push(("group_axis".to_string(), unwrap(&s)));
        }
    }
    let mut slopes = Vec::new();
    let mut residuals = Vec::new();
    for (name, y) in &series {
        let (s, r) = fit_slope(&traj.times, y);
        if !(r <= fit_tol) {
            return Err(VerifyError::FitUnstable {
                series: name.clone(),
                residual: r,
            });
        }
        slopes.push(s);
        residuals.push(r);
    }
    Ok(FrequencyFit { slopes, residuals, axis })
}

/// Parameters of a verification run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyOptions {
    /// Integrator step; configured through the pipeline options.
    #[serde(skip, default = "default_step")]
    pub step: f64,
    /// Times for the conjugacy checks; sample `s` uses `t_grid[s mod len]`.
    pub t_grid: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    /// Trajectory length and sampling interval.
    pub horizon: f64,
    pub sample_dt: f64,
    pub tolerances: Tolerances,
}

fn default_step() -> f64 {
    DEFAULT_STEP
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            step: DEFAULT_STEP,
            t_grid: (1..=20).map(|i| i as f64 * 0.25).collect(),
            samples: 20,
            seed: 7,
            horizon: 100.0,
            sample_dt: 0.05,
            tolerances: Tolerances::default(),
        }
    }
}

fn random_alpha<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    (0..k).map(|_| rng.random::<f64>()).collect()
}

fn shift(alpha: &[f64], rate: &[f64], t: f64) -> Vec<f64> {
    alpha.iter().zip(rate).map(|(a, w)| a + t * w).collect()
}

fn star(c: &[f64], basis: &[AlgebraVector], group: GroupId) -> AlgebraVector {
    c.iter()
        .zip(basis)
        .fold(AlgebraVector::zero(group), |acc, (x, b)| acc.axpy(*x, b))
}

/// Conjugacy residuals for the reconstruction map, the torus chart, the
/// translations `J` and the covering `j′`, each the maximum payload
/// distance over `opts.samples` random samples.
pub fn check_conjugacy(spec: &SystemSpec, result: &PipelineResult, opts: &VerifyOptions) -> Vec<CheckRow> {
    let group = spec.group;
    let k = spec.k;
    let x = spec.x_field();
    let omega = spec.omega_values();
    let j = LiftChart::reconstruction(spec, result, opts.step);
    let jp = LiftChart::covering(spec, result, opts.step);
    let t1 = &result.drift;
    let t2 = &result.resonance;
    let nu = t1.nu.values();
    let nu2 = t2.nu_second.values();
    let omega_p = t2.omega_prime.values();
    let drift = star(&omega, &result.phase.logs, group);
    let tol = opts.tolerances.conjugacy;
    if opts.t_grid.is_empty() || opts.samples == 0 {
        return ["flow_on_j", "torus_chart", "j_invariance", "flow_on_covering"]
            .iter()
            .map(|n| CheckRow::new(format!("conjugacy/{n}"), 0.0, tol))
            .collect();
    }

    let per_sample: Vec<[f64; 4]> = (0..opts.samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(s as u64));
            let t = opts.t_grid[s % opts.t_grid.len()];
            let alpha = random_alpha(k, &mut rng);
            let g = GroupElement::random(group, &mut rng);

            let lhs = flow(&x, &j.eval(&alpha, &g), t, opts.step);
            let rhs = j.eval(&shift(&alpha, &omega, t), &g.compose(&exp_algebra(&drift.scale(t))));
            let r_j = lhs.distance(&rhs);

            let beta = random_alpha(t1.d1, &mut rng);
            let lhs = flow(&x, &j.torus_chart(&t1.torus, &g, &alpha, &beta), t, opts.step);
            let rhs = j.torus_chart(&t1.torus, &g, &shift(&alpha, &omega, t), &shift(&beta, &nu, t));
            let r_chart = lhs.distance(&rhs);

            let beta2 = random_alpha(k, &mut rng);
            let h = GroupElement::random(group, &mut rng);
            let point = j.eval(&beta2, &h);
            let lhs = flow(&x, &j.translate(&alpha, &g, &point), t, opts.step);
            let rhs = j.translate(&alpha, &g, &flow(&x, &point, t, opts.step));
            let r_inv = lhs.distance(&rhs);

            let lhs = flow(&x, &jp.eval(&alpha, &g), t, opts.step);
            let xi2 = t2.torus_zero.from_coordinates(&nu2.iter().map(|v| v * t).collect::<Vec<_>>());
            let rhs = jp.eval(&shift(&alpha, &omega_p, t), &g.compose(&exp_algebra(&xi2)));
            let r_cov = lhs.distance(&rhs);
            [r_j, r_chart, r_inv, r_cov]
        })
        .collect();
    let worst = |i: usize| per_sample.iter().map(|r| r[i]).fold(0.0, f64::max);
    vec![
        CheckRow::new("conjugacy/flow_on_j", worst(0), tol),
        CheckRow::new("conjugacy/torus_chart", worst(1), tol),
        CheckRow::new("conjugacy/j_invariance", worst(2), tol),
        CheckRow::new("conjugacy/flow_on_covering", worst(3), tol),
    ]
}

/// Algebraic consistency of the pipeline output: `exp(ηᵢ) = γᵢ`,
/// `ω★η = ν★ξ`, `exp(δᵢ) = e` and the normalized resonances.
pub fn check_structure(spec: &SystemSpec, result: &PipelineResult, tol: &Tolerances) -> Vec<CheckRow> {
    let group = spec.group;
    let pd = &result.phase;
    let e = GroupElement::identity(group);
    let logs = pd
        .logs
        .iter()
        .zip(&pd.phases)
        .map(|(eta, g)| exp_algebra(eta).distance(g))
        .fold(0.0, f64::max);
    let omega = spec.omega_values();
    let lhs = star(&omega, &pd.logs, group);
    let rhs = result.drift.torus.from_coordinates(&result.drift.nu.values());
    let delta = result
        .resonance
        .delta
        .iter()
        .map(|d| exp_algebra(d).distance(&e))
        .fold(0.0, f64::max);
    let res = result.resonance.resonance_residuals.iter().map(|x| x.abs()).fold(0.0, f64::max);
    vec![
        CheckRow::new("structure/exp_logs_equal_phases", logs, tol.logs),
        CheckRow::new("structure/omega_eta_equals_nu_xi", lhs.axpy(-1.0, &rhs).norm(), tol.omega_eta),
        CheckRow::new("structure/exp_delta_is_identity", delta, tol.logs),
        CheckRow::new("structure/normalized_resonances", res, tol.omega_eta),
    ]
}

/// Deck transformations and fibre structure of the covering `j′`.
///
/// Every deck image of `(0, e)` and of one random point must map to the
/// same point; `exp(u★δ/r) = e` must hold exactly on `K`; the number of
/// distinct `exp(u★δ/r)` must equal `|F₀|`.
pub fn check_covering(spec: &SystemSpec, result: &PipelineResult, opts: &VerifyOptions) -> Vec<CheckRow> {
    let t2 = &result.resonance;
    let k = spec.k;
    let group = spec.group;
    let tol = opts.tolerances.deck;
    let jp = LiftChart::covering(spec, result, opts.step);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let e = GroupElement::identity(group);
    let starts = vec![(vec![0.0; k], e.clone()), (random_alpha(k, &mut rng), GroupElement::random(group, &mut rng))];
    let all: Vec<Vec<i64>> = if t2.covering_degree <= 4096 {
        residues(t2.r, k).collect()
    } else {
        Vec::new()
    };
    let fibre = starts
        .par_iter()
        .map(|(a, g)| {
            let base = jp.eval(a, g);
            all.iter()
                .map(|u| {
                    let (a2, g2) = deck_action(t2, u, a, g);
                    jp.eval(&a2, &g2).distance(&base)
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);

    let images: Vec<(Vec<i64>, GroupElement)> = all.iter().map(|u| (u.clone(), deck_action(t2, u, &vec![0.0; k], &e).1)).collect();
    let mut k_mismatch = 0usize;
    for (u, g) in &images {
        let in_k = t2.k_subgroup.contains(u, &t2.p, &t2.r_factors);
        if in_k != (g.distance(&e) < tol) {
            k_mismatch += 1;
        }
    }
    let mut distinct: Vec<&GroupElement> = Vec::new();
    for (_, g) in &images {
        if !distinct.iter().any(|d| d.distance(g) < tol) {
            distinct.push(g);
        }
    }
    let mut rows = vec![CheckRow::new("covering/deck_images_share_fibre", fibre, tol)];
    if !all.is_empty() {
        rows.push(CheckRow::new("covering/k_subgroup_matches_kernel", k_mismatch as f64, 0.0));
        rows.push(CheckRow::new(
            "covering/f0_order_matches_images",
            (distinct.len() as f64 - t2.f0_order as f64).abs(),
            0.0,
        ));
    }
    rows
}

/// Frequency rows comparing fitted slopes with `ω` and the predicted drift.
pub fn check_frequencies(spec: &SystemSpec, result: &PipelineResult, fit: &FrequencyFit, tol: f64) -> Vec<CheckRow> {
    let omega = spec.omega_values();
    let k = spec.k;
    let mut rows: Vec<CheckRow> = omega
        .iter()
        .enumerate()
        .map(|(i, w)| CheckRow::new(format!("frequency/angle_{}", i + 1), (fit.slopes[i] - w).abs(), tol))
        .collect();
    let pd = &result.phase;
    if let Some(pred) = pd.predicted_group_drift(&omega) {
        match spec.group {
            GroupId::Torus(_) => {
                for (j, p) in pred.iter().enumerate() {
                    rows.push(CheckRow::new(
                        format!("frequency/group_{}", j + 1),
                        (fit.slopes[k + j] - p).abs(),
                        tol,
                    ));
                }
            }
            GroupId::So3 => {
                if let Some(p) = pred.first() {
                    let fitted = fit.slopes[k];
                    let same_axis = match (fit.axis, pd.torus.axis()) {
                        (Some(a), Some(b)) => a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>(),
                        _ => 1.0,
                    };
                    rows.push(CheckRow::new("frequency/group_axis", (fitted * same_axis.signum() - p).abs(), tol));
                }
            }
        }
    }
    rows
}

/// Assembled results of [`run_verification`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub rows: Vec<CheckRow>,
    pub frequencies: Option<FrequencyFit>,
    pub fit_error: Option<String>,
    pub predicted_group_drift: Option<Vec<f64>>,
    pub tolerances: Tolerances,
    pub heuristic: bool,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.fit_error.is_none() && self.rows.iter().all(|r| r.pass)
    }
}

/// Runs every check and returns the report with the sampled orbit of X.
pub fn run_verification(
    spec: &SystemSpec,
    result: &PipelineResult,
    opts: &VerifyOptions,
) -> (VerificationReport, Trajectory) {
    let tol = &opts.tolerances;
    let samples = (opts.horizon / opts.sample_dt).round().max(0.0) as usize;
    let traj = Trajectory::sample(&spec.x_field(), "X", &spec.base_point, opts.sample_dt, samples, opts.step);

    let mut rows = check_structure(spec, result, tol);
    rows.extend(check_conjugacy(spec, result, opts));
    rows.extend(check_covering(spec, result, opts));
    rows.extend(check_torus_residency(
        &traj,
        &default_invariants(spec, result, opts.step),
        tol.residency,
    ));
    let (frequencies, fit_error) = match extract_frequencies(&traj, tol.fit_unstable) {
        Ok(fit) => {
            rows.extend(check_frequencies(spec, result, &fit, tol.frequency));
            (Some(fit), None)
        }
        Err(e) => (None, Some(e.to_string())),
    };
    let report = VerificationReport {
        rows,
        frequencies,
        fit_error,
        predicted_group_drift: result.phase.predicted_group_drift(&spec.omega_values()),
        tolerances: tol.clone(),
        heuristic: result.heuristic(),
    };
    (report, traj)
}
