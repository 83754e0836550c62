//! Phases, logarithms, external frequencies and the resolution of
//! resonances, plus the reconstruction charts built from them.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::dynsys::{
    check_hypotheses, complete_lifts, flow, phase, CoeffFunction, DynError, Lift, StatePoint, SystemSpec,
    Violation, DEFAULT_STEP,
};
use crate::freqs::{
    bounded_relation_search, exact_relations, is_nonresonant, resonance_lattice, ExactScalar, FreqError,
    FrequencyVector, Scalar, SearchOptions,
};
use crate::group::{
    commuting_torus_with, exp_algebra, wrap_unit, AlgebraVector, GroupElement, GroupError, GroupId,
    GroupTolerances, TorusDescriptor,
};
use crate::linalg::{hnf_kernel, snf, IntMatrix, RatMatrix};

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("hypotheses violated: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Hypotheses(Vec<Violation>),
    #[error(transparent)]
    Dynamics(#[from] DynError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Frequency(#[from] FreqError),
    #[error("exact and numeric external frequencies disagree: {0}")]
    ExactRouteMismatch(String),
    #[error("resonance lattice does not split off the internal frequencies")]
    DegenerateResonance,
    #[error("integer quantity too large: {0}")]
    Overflow(&'static str),
}

/// How external frequencies are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Exact rational arithmetic whenever the data allows it, with the
    /// numeric route as a flagged fallback.
    #[default]
    Exact,
    /// Numeric phases and the bounded relation search throughout.
    Numeric,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOptions {
    pub mode: Mode,
    pub step: f64,
    pub search: SearchOptions,
    pub group_tol: GroupTolerances,
    /// Integer shifts added to the principal logarithm coordinates
    /// (one row per lift). The recorded branch offsets stay canonical.
    pub branch_shift: Option<Vec<Vec<i64>>>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            mode: Mode::Exact,
            step: DEFAULT_STEP,
            search: SearchOptions::default(),
            group_tol: GroupTolerances::default(),
            branch_shift: None,
        }
    }
}

/// Largest accepted gap between the exact and numeric external frequencies.
pub const EXACT_ROUTE_TOL: f64 = 1e-8;

/// Phases at the base point and their logarithms.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseData {
    pub phases: Vec<GroupElement>,
    /// Torus containing every phase.
    pub torus: TorusDescriptor,
    pub logs: Vec<AlgebraVector>,
    /// `h[j][i]`: coordinate `j` of `ηᵢ` in the torus integral basis.
    pub h: Vec<Vec<f64>>,
    /// Per lift, the integer gap between the mean of its vertical part and
    /// its principal logarithm. Present when every mean lies in the torus
    /// Lie algebra.
    pub branch_offsets: Option<Vec<Vec<i64>>>,
    /// `Hω` in exact arithmetic, when available.
    pub exact_drift: Option<Vec<ExactScalar>>,
    pub notes: Vec<String>,
}

impl PhaseData {
    /// `Hω`, numerically.
    pub fn drift(&self, omega: &[f64]) -> Vec<f64> {
        self.h
            .iter()
            .map(|row| row.iter().zip(omega).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Growth rate of the raw torus coordinates of `g(t)·g(0)⁻¹` along X:
    /// `Hω + Zω` with the canonical branch offsets `Z`.
    pub fn predicted_group_drift(&self, omega: &[f64]) -> Option<Vec<f64>> {
        let z = self.branch_offsets.as_ref()?;
        let mut d = self.drift(omega);
        for (i, zi) in z.iter().enumerate() {
            for (dj, zij) in d.iter_mut().zip(zi) {
                *dj += *zij as f64 * omega[i];
            }
        }
        Some(d)
    }

    pub fn log_coordinates(&self, i: usize) -> Vec<f64> {
        self.h.iter().map(|row| row[i]).collect()
    }
}

/// Closure of the drift `exp(tω★η)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftTorus {
    /// External frequencies in the integral basis of `torus`.
    pub nu: FrequencyVector,
    /// The same drift in the coordinates of the phase torus.
    pub nu_ambient: FrequencyVector,
    pub d1: usize,
    pub torus: TorusDescriptor,
    /// Integral basis of `torus` in phase-torus coordinates.
    pub basis_in_ambient: Vec<Vec<i64>>,
    pub homogeneous_relations: Vec<Vec<i64>>,
    pub heuristic: bool,
    pub base_label: String,
}

/// Resolution of the resonances between internal and external frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct ResonanceReduction {
    /// ℤ-basis `(p̃ʲ, q̃ʲ)` of the resonances of `(ω, ν)`.
    pub resonance_basis: Vec<Vec<i64>>,
    pub l: usize,
    /// Normalized resonances `(pⁱ, rᵢeⁱ)`.
    pub p: Vec<Vec<i64>>,
    pub r_factors: Vec<i64>,
    pub r: i64,
    /// Rows: the new integral basis `ξ′ᵢ = Σⱼ Zᵢⱼ ξⱼ`.
    pub basis_change: Vec<Vec<i64>>,
    /// Torus with basis `ξ′`.
    pub torus_prime: TorusDescriptor,
    pub nu_prime: FrequencyVector,
    pub delta_coords: Vec<Vec<i64>>,
    pub delta: Vec<AlgebraVector>,
    pub eta_prime: Vec<AlgebraVector>,
    pub d0: usize,
    pub nu_second: FrequencyVector,
    pub omega_prime: FrequencyVector,
    /// Torus spanned by the last `d₀` vectors of `ξ′`.
    pub torus_zero: TorusDescriptor,
    pub k_subgroup: KSubgroup,
    pub f0_order: u64,
    pub f0_invariants: Vec<i64>,
    pub covering_degree: u64,
    /// `pⁱ·ω + rᵢν′ᵢ` for each normalized resonance.
    pub resonance_residuals: Vec<f64>,
    /// Exact-mode verdict on `(ω′, ν″)`; `None` when not decidable.
    pub reduced_nonresonant: Option<bool>,
    pub heuristic: bool,
    pub base_label: String,
}

/// `K = {u ∈ ℤ_rᵏ : u·pʲ/rⱼ ∈ ℤ}`.
#[derive(Clone, Debug, PartialEq)]
pub struct KSubgroup {
    pub modulus: i64,
    pub generators: Vec<Vec<i64>>,
    pub order: u64,
    /// Every element, when `rᵏ` is small enough to enumerate.
    pub elements: Option<Vec<Vec<i64>>>,
}

impl KSubgroup {
    pub fn contains(&self, u: &[i64], p: &[Vec<i64>], r_factors: &[i64]) -> bool {
        p.iter()
            .zip(r_factors)
            .all(|(pj, rj)| pj.iter().zip(u).map(|(a, b)| a * b).sum::<i64>().rem_euclid(*rj) == 0)
    }
}

/// Enumeration cap for `ℤ_rᵏ`.
pub const ENUMERATION_LIMIT: u64 = 1 << 20;

/// Everything the pipeline computes for one system.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineResult {
    pub lifts: Vec<Lift>,
    pub phase: PhaseData,
    pub drift: DriftTorus,
    pub resonance: ResonanceReduction,
}

impl PipelineResult {
    pub fn heuristic(&self) -> bool {
        self.drift.heuristic || self.resonance.heuristic
    }
}

/// Checks the hypotheses, completes the lifts and runs every stage.
pub fn run_pipeline(spec: &SystemSpec, opts: &PipelineOptions) -> Result<PipelineResult, ReconstructError> {
    spec.validate()?;
    let violations = check_hypotheses(spec);
    if !violations.is_empty() {
        return Err(ReconstructError::Hypotheses(violations));
    }
    let lifts = complete_lifts(spec)?;
    let phase = compute_phase_data(spec, &lifts, opts)?;
    let t1 = drift_torus(&spec.omega, &phase, opts)?;
    let t2 = reduce_resonances(&spec.omega, &phase, &t1, opts)?;
    Ok(PipelineResult { lifts, phase, drift: t1, resonance: t2 })
}

/// Index `c` such that every coefficient of every function is parallel to
/// the coordinate axis `ê_c`. `Some(None)` when all functions vanish.
fn coordinate_axis(fns: &[&CoeffFunction]) -> Option<Option<usize>> {
    let mut found = None;
    for f in fns {
        match f.common_axis(1e-12)? {
            None => {}
            Some(u) => {
                let c = u.iter().position(|x| x.abs() > 1.0 - 1e-12)?;
                if found.is_some_and(|d| d != c) {
                    return None;
                }
                found = Some(c);
            }
        }
    }
    Some(found)
}

fn to_turns(group: GroupId) -> f64 {
    match group {
        GroupId::So3 => std::f64::consts::TAU,
        GroupId::Torus(_) => 1.0,
    }
}

/// Phases of the completed lifts at the base point and their principal
/// logarithms in the smallest available torus.
pub fn compute_phase_data(
    spec: &SystemSpec,
    lifts: &[Lift],
    opts: &PipelineOptions,
) -> Result<PhaseData, ReconstructError> {
    let k = spec.k;
    let base = &spec.base_point;
    let phases = lifts
        .iter()
        .map(|l| phase(l, k, base, opts.step))
        .collect::<Result<Vec<_>, _>>()?;
    let torus = commuting_torus_with(&phases, &opts.group_tol)?;
    let mut coords = Vec::with_capacity(k);
    for g in &phases {
        let (c, dist) = torus.nearest(g);
        if dist > opts.group_tol.mem {
            return Err(GroupError::NotInTorus(dist).into());
        }
        coords.push(c);
    }
    let mut notes = Vec::new();

    let means: Option<Vec<Vec<f64>>> = lifts
        .iter()
        .map(|l| torus.coordinates_of(&base.g.adjoint(&l.vertical.mean()), 1e-9))
        .collect();
    let branch_offsets: Option<Vec<Vec<i64>>> = means.as_ref().map(|m| {
        m.iter()
            .zip(&coords)
            .map(|(mi, ci)| mi.iter().zip(ci).map(|(a, b)| (a - b).round() as i64).collect())
            .collect()
    });

    if let Some(shift) = &opts.branch_shift {
        if shift.len() != k || shift.iter().any(|s| s.len() != torus.dim) {
            return Err(DynError::Shape("branch shift must be k rows of torus dimension".into()).into());
        }
        for (c, s) in coords.iter_mut().zip(shift) {
            for (x, y) in c.iter_mut().zip(s) {
                *x += *y as f64;
            }
        }
        notes.push("logarithms shifted off the principal branch".to_string());
    }

    let logs: Vec<AlgebraVector> = coords.iter().map(|c| torus.from_coordinates(c)).collect();
    let h: Vec<Vec<f64>> = (0..torus.dim).map(|j| coords.iter().map(|c| c[j]).collect()).collect();

    let mut pd = PhaseData {
        phases,
        torus,
        logs,
        h,
        branch_offsets,
        exact_drift: None,
        notes,
    };
    if opts.mode == Mode::Exact {
        match exact_drift(spec, lifts, &pd, opts) {
            Ok(Some(nu)) => pd.exact_drift = Some(nu),
            Ok(None) => pd
                .notes
                .push("exact route unavailable; external frequencies are numeric".to_string()),
            Err(e) => return Err(e),
        }
    }
    Ok(pd)
}

/// Exact `Hω` for vertical data along a single coordinate axis.
///
/// Along such data the vertical parts of commuting lifts form a closed
/// 1-form, so each logarithm is the mean of its vertical part minus an
/// integer branch offset and `Hω = mean(a) − Σ ωᵢ zᵢ`.
fn exact_drift(
    spec: &SystemSpec,
    lifts: &[Lift],
    pd: &PhaseData,
    opts: &PipelineOptions,
) -> Result<Option<Vec<ExactScalar>>, ReconstructError> {
    let (Some(a0), Some(omega)) = (&spec.exact_vertical_mean, spec.omega.exact_entries()) else {
        return Ok(None);
    };
    let Some(z) = &pd.branch_offsets else {
        return Ok(None);
    };
    let mut fns: Vec<&CoeffFunction> = vec![&spec.vertical];
    fns.extend(lifts.iter().map(|l| &l.vertical));
    let Some(axis) = coordinate_axis(&fns) else {
        return Ok(None);
    };
    let basis = omega[0].basis().clone();
    if a0.iter().any(|x| x.basis() != &basis) {
        return Err(FreqError::BasisMismatch.into());
    }
    let numeric_mean = spec.vertical.mean();
    let scale = to_turns(spec.group);
    for (e, n) in a0.iter().zip(&numeric_mean.coeffs) {
        if (e.value() * scale - n).abs() > EXACT_ROUTE_TOL {
            return Err(ReconstructError::ExactRouteMismatch(format!(
                "declared exact mean {} does not match the Fourier zero mode {n}",
                e
            )));
        }
    }
    let d2 = pd.torus.dim;
    let mean_coords: Vec<ExactScalar> = match spec.group {
        GroupId::Torus(_) => a0.clone(),
        GroupId::So3 => {
            if d2 == 0 {
                Vec::new()
            } else {
                let Some(c) = axis else {
                    return Ok(None);
                };
                let mut e = [0.0; 3];
                e[c] = 1.0;
                let moved = spec.base_point.g.adjoint(&AlgebraVector::so3(e)).coeffs;
                let u = pd.torus.axis().expect("axis torus");
                let s: f64 = moved.iter().zip(u).map(|(a, b)| a * b).sum();
                let sign = if s < 0.0 { -1 } else { 1 };
                vec![a0[c].scale_int(&BigInt::from(sign))]
            }
        }
    };
    let mut nu = Vec::with_capacity(d2);
    for (j, m) in mean_coords.iter().enumerate() {
        let mut acc = m.clone();
        for (i, w) in omega.iter().enumerate() {
            let mut zij = z[i][j];
            if let Some(shift) = &opts.branch_shift {
                zij -= shift[i][j];
            }
            acc = acc.checked_sub(&w.scale_int(&BigInt::from(zij)))?;
        }
        nu.push(acc);
    }
    let numeric = pd.drift(&spec.omega_values());
    for (e, n) in nu.iter().zip(&numeric) {
        if (e.value() - n).abs() > EXACT_ROUTE_TOL {
            return Err(ReconstructError::ExactRouteMismatch(format!(
                "exact {} = {} vs numeric {n}",
                e,
                e.value()
            )));
        }
    }
    Ok(Some(nu))
}

fn int_matrix_cols(cols: &[Vec<i64>], rows: usize) -> IntMatrix {
    let data: Vec<Vec<i64>> = (0..rows).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    IntMatrix::from_i64(&data, cols.len())
}

fn big_rows_to_i64(rows: Vec<Vec<BigInt>>) -> Result<Vec<Vec<i64>>, ReconstructError> {
    rows.into_iter()
        .map(|r| {
            r.iter()
                .map(|x| x.to_i64().ok_or(ReconstructError::Overflow("lattice entry")))
                .collect()
        })
        .collect()
}

/// Solves `Σ_m c_m·basis[m] = target` for numeric data by normal equations.
fn solve_in_basis(basis: &[Vec<i64>], target: &[f64]) -> Vec<f64> {
    let n = basis.len();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|p| {
            (0..n)
                .map(|q| basis[p].iter().zip(&basis[q]).map(|(x, y)| (*x * *y) as f64).sum())
                .collect()
        })
        .collect();
    let mut b: Vec<f64> = (0..n)
        .map(|p| basis[p].iter().zip(target).map(|(x, y)| *x as f64 * y).sum())
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|x, y| a[*x][col].abs().total_cmp(&a[*y][col].abs()))
            .expect("nonempty");
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for c in col..n {
                    a[row][c] -= f * a[col][c];
                }
                b[row] -= f * b[col];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

/// Exact counterpart of [`solve_in_basis`], one rational solve per basis
/// coefficient of the scalars.
fn solve_in_basis_exact(basis: &[Vec<i64>], target: &[&ExactScalar]) -> Result<Vec<ExactScalar>, ReconstructError> {
    let n = basis.len();
    let b0 = target[0].basis().clone();
    let gram = RatMatrix::from_rows(
        (0..n)
            .map(|p| {
                (0..n)
                    .map(|q| {
                        BigRational::from_integer(BigInt::from(
                            basis[p].iter().zip(&basis[q]).map(|(x, y)| x * y).sum::<i64>(),
                        ))
                    })
                    .collect()
            })
            .collect(),
        n,
    );
    let mut out = vec![vec![BigRational::zero(); b0.len()]; n];
    for idx in 0..b0.len() {
        let rhs: Vec<BigRational> = (0..n)
            .map(|p| {
                basis[p]
                    .iter()
                    .zip(target)
                    .fold(BigRational::zero(), |acc, (x, t)| {
                        acc + BigRational::from_integer(BigInt::from(*x)) * &t.coeffs()[idx]
                    })
            })
            .collect();
        let sol = gram.solve(&rhs).expect("integral basis has full rank");
        for (m, v) in sol.into_iter().enumerate() {
            out[m][idx] = v;
        }
    }
    Ok(out
        .into_iter()
        .map(|c| ExactScalar::new(&b0, c))
        .collect::<Result<Vec<_>, _>>()?)
}

fn quotient_label(group: GroupId, parts: &[String]) -> String {
    let parts: Vec<&String> = parts.iter().filter(|p| !p.is_empty()).collect();
    match parts.len() {
        0 => group.label(),
        1 => format!("{}/{}", group.label(), parts[0]),
        _ => format!(
            "{}/({})",
            group.label(),
            parts.iter().map(|p| p.as_str()).collect::<Vec<_>>().join("·")
        ),
    }
}

fn torus_label(d: usize) -> String {
    match d {
        0 => String::new(),
        1 => "S^1".to_string(),
        d => format!("T^{d}"),
    }
}

/// External frequencies and the torus `T₁` they generate.
pub fn drift_torus(
    omega: &FrequencyVector,
    pd: &PhaseData,
    opts: &PipelineOptions,
) -> Result<DriftTorus, ReconstructError> {
    let d2 = pd.torus.dim;
    let nu_ambient = match &pd.exact_drift {
        Some(e) => FrequencyVector::exact(e.clone()),
        None => FrequencyVector::numeric(&pd.drift(&omega.values())),
    };
    let heuristic = !nu_ambient.is_exact();
    let relations = match nu_ambient.exact_entries() {
        Some(entries) => exact_relations(&entries)?,
        None => bounded_relation_search(&nu_ambient.values(), &opts.search)?,
    };
    let basis_in_ambient: Vec<Vec<i64>> = if d2 == 0 {
        Vec::new()
    } else if relations.is_empty() {
        (0..d2).map(|i| (0..d2).map(|j| i64::from(i == j)).collect()).collect()
    } else {
        big_rows_to_i64(hnf_kernel(&IntMatrix::from_i64(&relations, d2)))?
    };
    let d1 = basis_in_ambient.len();
    let torus = pd.torus.sub_torus(&int_matrix_cols(&basis_in_ambient, d2));
    let nu = if d1 == 0 {
        FrequencyVector::default()
    } else {
        match nu_ambient.exact_entries() {
            Some(entries) => FrequencyVector::exact(solve_in_basis_exact(&basis_in_ambient, &entries)?),
            None => FrequencyVector::numeric(&solve_in_basis(&basis_in_ambient, &nu_ambient.values())),
        }
    };
    let base_label = quotient_label(pd.torus.group, &[torus_label(d1)]);
    Ok(DriftTorus {
        nu,
        nu_ambient,
        d1,
        torus,
        basis_in_ambient,
        homogeneous_relations: relations,
        heuristic,
        base_label,
    })
}

fn exact_combination(coeffs: &[i64], entries: &[&ExactScalar]) -> Result<ExactScalar, FreqError> {
    let mut acc = ExactScalar::zero(entries[0].basis());
    for (c, e) in coeffs.iter().zip(entries) {
        acc = acc.checked_add(&e.scale_int(&BigInt::from(*c)))?;
    }
    Ok(acc)
}

fn combine(coeffs: &[i64], v: &FrequencyVector) -> Result<Scalar, FreqError> {
    match v.exact_entries() {
        Some(e) if !e.is_empty() => Ok(Scalar::Exact(exact_combination(coeffs, &e)?)),
        _ => Ok(Scalar::Numeric(
            coeffs.iter().zip(v.values()).map(|(c, x)| *c as f64 * x).sum(),
        )),
    }
}

/// Normalizes the resonances of `(ω, ν)` and builds the covering data.
pub fn reduce_resonances(
    omega: &FrequencyVector,
    pd: &PhaseData,
    t1: &DriftTorus,
    opts: &PipelineOptions,
) -> Result<ResonanceReduction, ReconstructError> {
    let k = omega.len();
    let d1 = t1.d1;
    let joint = omega.concat(&t1.nu);
    let lattice = resonance_lattice(&joint, &opts.search)?;
    let heuristic = lattice.heuristic || t1.heuristic;
    let l = lattice.rank();
    if l > d1 {
        return Err(ReconstructError::DegenerateResonance);
    }
    let q_cols: Vec<Vec<i64>> = lattice.basis.iter().map(|b| b[k..].to_vec()).collect();
    let snf_q = snf(&int_matrix_cols(&q_cols, d1));
    let u = snf_q.u.to_i64().ok_or(ReconstructError::Overflow("unimodular transform"))?;
    let v = snf_q.v.to_i64().ok_or(ReconstructError::Overflow("unimodular transform"))?;
    let r_factors: Vec<i64> = (0..l)
        .map(|i| snf_q.d[(i, i)].to_i64().ok_or(ReconstructError::Overflow("invariant factor")))
        .collect::<Result<_, _>>()?;
    if r_factors.iter().any(|r| *r <= 0) {
        return Err(ReconstructError::DegenerateResonance);
    }
    let p: Vec<Vec<i64>> = (0..l)
        .map(|i| (0..k).map(|m| (0..l).map(|j| v[j][i] * lattice.basis[j][m]).sum()).collect())
        .collect();
    let r = r_factors.iter().copied().max().unwrap_or(1);

    let u_inv = snf_q
        .u
        .inverse_unimodular()
        .and_then(|m| m.to_i64())
        .ok_or(ReconstructError::Overflow("unimodular inverse"))?;
    let nu_prime = FrequencyVector(
        (0..d1)
            .map(|i| combine(&(0..d1).map(|j| u_inv[j][i]).collect::<Vec<_>>(), &t1.nu))
            .collect::<Result<_, _>>()?,
    );
    let torus_prime = t1.torus.sub_torus(&int_matrix_cols(&u, d1));
    let torus_zero = t1.torus.sub_torus(&int_matrix_cols(&u[l..], d1));

    let delta_coords: Vec<Vec<i64>> = (0..k)
        .map(|i| (0..d1).map(|j| if j < l { r / r_factors[j] * p[j][i] } else { 0 }).collect())
        .collect();
    let delta: Vec<AlgebraVector> = delta_coords
        .iter()
        .map(|c| torus_prime.from_coordinates(&c.iter().map(|x| *x as f64).collect::<Vec<_>>()))
        .collect();
    let eta_prime: Vec<AlgebraVector> = pd
        .logs
        .iter()
        .zip(&delta)
        .map(|(e, dl)| e.scale(r as f64).add(dl))
        .collect();

    let d0 = d1 - l;
    let nu_second = FrequencyVector(nu_prime.0[l..].to_vec());
    let inv_r = BigRational::new(BigInt::one(), BigInt::from(r));
    let omega_prime = FrequencyVector(
        omega
            .0
            .iter()
            .map(|s| match s {
                Scalar::Exact(e) => Scalar::Exact(e.scale(&inv_r)),
                Scalar::Numeric(x) => Scalar::Numeric(x / r as f64),
            })
            .collect(),
    );

    let omega_vals = omega.values();
    let nu_prime_vals = nu_prime.values();
    let mut resonance_residuals = Vec::with_capacity(l);
    for i in 0..l {
        let res = match (omega.exact_entries(), nu_prime.0[i].as_exact()) {
            (Some(w), Some(n)) => {
                let s = exact_combination(&p[i], &w)?.checked_add(&n.scale_int(&BigInt::from(r_factors[i])))?;
                if !s.is_zero() {
                    return Err(ReconstructError::DegenerateResonance);
                }
                0.0
            }
            _ => p[i].iter().zip(&omega_vals).map(|(a, b)| *a as f64 * b).sum::<f64>()
                + r_factors[i] as f64 * nu_prime_vals[i],
        };
        resonance_residuals.push(res);
    }
    let reduced = omega_prime.concat(&nu_second);
    let reduced_nonresonant = if reduced.is_exact() {
        Some(is_nonresonant(&reduced)?)
    } else {
        None
    };

    let (k_subgroup, f0_invariants, f0_order) = k_structure(&p, &r_factors, r, k)?;
    let covering_degree = (r as u64)
        .checked_pow(k as u32)
        .ok_or(ReconstructError::Overflow("covering degree"))?;
    let f0_label = f0_invariants
        .iter()
        .map(|n| format!("Z_{n}"))
        .collect::<Vec<_>>()
        .join(" x ");
    let base_label = quotient_label(pd.torus.group, &[torus_label(d0), f0_label]);

    Ok(ResonanceReduction {
        resonance_basis: lattice.basis,
        l,
        p,
        r_factors,
        r,
        basis_change: u,
        torus_prime,
        nu_prime,
        delta_coords,
        delta,
        eta_prime,
        d0,
        nu_second,
        omega_prime,
        torus_zero,
        k_subgroup,
        f0_order,
        f0_invariants,
        covering_degree,
        resonance_residuals,
        reduced_nonresonant,
        heuristic,
        base_label,
    })
}

/// `K`, the invariant factors of `ℤ_rᵏ/K` and its order.
///
/// The preimage of `K` in ℤᵏ is the projection of the integer kernel of
/// `[P | diag(rⱼ)]`; its Smith form gives the quotient structure.
fn k_structure(
    p: &[Vec<i64>],
    r_factors: &[i64],
    r: i64,
    k: usize,
) -> Result<(KSubgroup, Vec<i64>, u64), ReconstructError> {
    let l = p.len();
    let rows: Vec<Vec<i64>> = (0..l)
        .map(|j| {
            let mut row = p[j].clone();
            row.extend((0..l).map(|m| if m == j { r_factors[j] } else { 0 }));
            row
        })
        .collect();
    let preimage: Vec<Vec<i64>> = if l == 0 {
        (0..k).map(|i| (0..k).map(|j| i64::from(i == j)).collect()).collect()
    } else {
        big_rows_to_i64(hnf_kernel(&IntMatrix::from_i64(&rows, k + l)))?
            .into_iter()
            .map(|v| v[..k].to_vec())
            .collect()
    };
    let pre = IntMatrix::from_i64(&preimage, k);
    let invariants: Vec<i64> = snf(&pre)
        .invariant_factors()
        .into_iter()
        .filter(|x| !x.is_one())
        .map(|x| x.abs().to_i64().ok_or(ReconstructError::Overflow("F0 invariant")))
        .collect::<Result<_, _>>()?;
    let f0_order = invariants
        .iter()
        .try_fold(1u64, |acc, x| acc.checked_mul(*x as u64))
        .ok_or(ReconstructError::Overflow("F0 order"))?;
    let total = (r as u64)
        .checked_pow(k as u32)
        .ok_or(ReconstructError::Overflow("covering degree"))?;
    let order = total / f0_order;

    let mut generators: Vec<Vec<i64>> = Vec::new();
    for g in &preimage {
        let red: Vec<i64> = g.iter().map(|x| x.rem_euclid(r)).collect();
        if red.iter().any(|x| *x != 0) && !generators.contains(&red) {
            generators.push(red);
        }
    }
    let mut kg = KSubgroup {
        modulus: r,
        generators,
        order,
        elements: None,
    };
    if total <= ENUMERATION_LIMIT {
        let elements: Vec<Vec<i64>> = residues(r, k).filter(|u| kg.contains(u, p, r_factors)).collect();
        assert_eq!(elements.len() as u64, order, "K enumeration disagrees with Smith form");
        kg.elements = Some(elements);
    }
    Ok((kg, invariants, f0_order))
}

/// All of `ℤ_rᵏ` in lexicographic order.
pub fn residues(r: i64, k: usize) -> impl Iterator<Item = Vec<i64>> {
    let total = (r as u64).pow(k as u32);
    (0..total).map(move |mut n| {
        let mut u = vec![0i64; k];
        for x in u.iter_mut().rev() {
            *x = (n % r as u64) as i64;
            n /= r as u64;
        }
        u
    })
}

/// `g·exp(−α★η)·Φ^S_{sα}(m̄)` for a fixed lift set, logs and time scale `s`.
///
/// With `s = 1` and the logarithms `η` this is the reconstruction map `j`;
/// with `s = r` and `η′` it is the covering `j′`.
#[derive(Clone, Debug)]
pub struct LiftChart {
    pub lifts: Vec<Lift>,
    pub logs: Vec<AlgebraVector>,
    pub base: StatePoint,
    pub time_scale: f64,
    pub step: f64,
}

fn star(alpha: &[f64], v: &[AlgebraVector], group: GroupId) -> AlgebraVector {
    alpha
        .iter()
        .zip(v)
        .fold(AlgebraVector::zero(group), |acc, (a, x)| acc.axpy(*a, x))
}

impl LiftChart {
    pub fn reconstruction(spec: &SystemSpec, result: &PipelineResult, step: f64) -> Self {
        LiftChart {
            lifts: result.lifts.clone(),
            logs: result.phase.logs.clone(),
            base: spec.base_point.clone(),
            time_scale: 1.0,
            step,
        }
    }

    pub fn covering(spec: &SystemSpec, result: &PipelineResult, step: f64) -> Self {
        LiftChart {
            lifts: result.lifts.clone(),
            logs: result.resonance.eta_prime.clone(),
            base: spec.base_point.clone(),
            time_scale: result.resonance.r as f64,
            step,
        }
    }

    fn group(&self) -> GroupId {
        self.base.g.group()
    }

    /// `Φ^{S₁}_{sα₁} ∘ … ∘ Φ^{S_k}_{sα_k}(m̄)`.
    pub fn lift_flow(&self, alpha: &[f64]) -> StatePoint {
        let k = self.lifts.len();
        let mut m = self.base.clone();
        for i in (0..k).rev() {
            m = flow(&self.lifts[i].field(k), &m, self.time_scale * alpha[i], self.step);
        }
        m
    }

    pub fn eval(&self, alpha: &[f64], g: &GroupElement) -> StatePoint {
        let m = self.lift_flow(alpha);
        let h = g.compose(&exp_algebra(&star(alpha, &self.logs, self.group()).scale(-1.0)));
        m.act(&h)
    }

    /// Inverse of the reconstruction map; `α` is returned in `[0, 1)ᵏ`.
    /// Only meaningful for time scale one, where the chart is a bijection.
    pub fn invert(&self, m: &StatePoint) -> (Vec<f64>, GroupElement) {
        assert_eq!(self.time_scale, 1.0, "the covering chart has no global inverse");
        let alpha: Vec<f64> = m
            .phi
            .iter()
            .zip(&self.base.phi)
            .map(|(x, y)| wrap_unit(x - y))
            .collect();
        let flowed = self.lift_flow(&alpha);
        let g = m
            .g
            .compose(&flowed.g.inverse())
            .compose(&exp_algebra(&star(&alpha, &self.logs, self.group())));
        (alpha, g)
    }

    /// `J_{(α,g)}(x) = j(α + β, g·h)` where `x = j(β, h)`.
    pub fn translate(&self, alpha: &[f64], g: &GroupElement, x: &StatePoint) -> StatePoint {
        let (beta, h) = self.invert(x);
        let sum: Vec<f64> = alpha.iter().zip(&beta).map(|(a, b)| a + b).collect();
        self.eval(&sum, &g.compose(&h))
    }

    /// `i_g(α, β) = j(α, g·exp(β★ξ))` for the integral basis `ξ` of `torus`.
    pub fn torus_chart(&self, torus: &TorusDescriptor, g: &GroupElement, alpha: &[f64], beta: &[f64]) -> StatePoint {
        self.eval(alpha, &g.compose(&exp_algebra(&torus.from_coordinates(beta))))
    }
}

/// Deck transformation `Ψ_u(α, g) = (α + u/r, g·exp(u★δ/r))`.
pub fn deck_action(t2: &ResonanceReduction, u: &[i64], alpha: &[f64], g: &GroupElement) -> (Vec<f64>, GroupElement) {
    let r = t2.r as f64;
    let shifted: Vec<f64> = alpha
        .iter()
        .zip(u)
        .map(|(a, x)| wrap_unit(a + *x as f64 / r))
        .collect();
    let group = g.group();
    let v = star(&u.iter().map(|x| *x as f64 / r).collect::<Vec<_>>(), &t2.delta, group);
    (shifted, g.compose(&exp_algebra(&v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;

    #[test]
    fn torus_example_pipeline() {
        let spec = systems::torus3();
        let res = run_pipeline(&spec, &PipelineOptions::default()).unwrap();
        let pd = &res.phase;
        assert!(pd.phases[0].distance(&GroupElement::torus(&[0.0])) < 1e-15);
        let gamma2 = 1.0 / (2.0 * 2f64.sqrt());
        assert!(pd.phases[1].distance(&GroupElement::torus(&[gamma2])) < 1e-12);
        assert!((pd.h[0][1] - gamma2).abs() < 1e-12);

        let nu = res.drift.nu.0[0].as_exact().unwrap();
        assert_eq!(nu.to_string(), "1/2");
        assert_eq!(res.drift.d1, 1);
        assert!(!res.heuristic());

        let t2 = &res.resonance;
        assert_eq!(t2.l, 1);
        assert_eq!(t2.p, vec![vec![-1, 0]]);
        assert_eq!(t2.r_factors, vec![2]);
        assert_eq!(t2.r, 2);
        assert_eq!(t2.d0, 0);
        assert_eq!(t2.delta_coords, vec![vec![-1], vec![0]]);
        assert_eq!(t2.k_subgroup.elements, Some(vec![vec![0, 0], vec![0, 1]]));
        assert_eq!(t2.f0_order, 2);
        assert_eq!(t2.covering_degree, 4);
        assert_eq!(t2.base_label, "S^1/Z_2");
        assert_eq!(t2.reduced_nonresonant, Some(true));
        assert_eq!(
            t2.omega_prime.values(),
            vec![0.5, 2f64.sqrt() / 2.0]
        );
    }

    #[test]
    fn so3_rational_example() {
        let spec = systems::so3_constant_turns(1, 6, 1, 6);
        let res = run_pipeline(&spec, &PipelineOptions::default()).unwrap();
        assert_eq!(res.drift.nu.0[0].as_exact().unwrap().to_string(), "1/3");
        assert_eq!(res.resonance.r, 3);
        assert_eq!(res.resonance.d0, 0);
        assert_eq!(res.resonance.f0_order, 3);
        assert_eq!(res.resonance.k_subgroup.order, 3);
        assert_eq!(res.resonance.covering_degree, 9);
        assert_eq!(res.resonance.base_label, "SO(3)/Z_3");
    }

    #[test]
    fn trivial_vertical_parts() {
        let spec = systems::trivial_so3();
        let res = run_pipeline(&spec, &PipelineOptions::default()).unwrap();
        assert_eq!(res.phase.torus.dim, 0);
        assert_eq!(res.drift.d1, 0);
        assert!(res.drift.nu.is_empty());
        assert_eq!(res.resonance.l, 0);
        assert_eq!(res.resonance.r, 1);
        assert_eq!(res.resonance.f0_order, 1);
        assert_eq!(res.resonance.k_subgroup.order, 1);
    }

    #[test]
    fn numeric_mode_flags_heuristic() {
        let spec = systems::so3_constant_radians(1.0, 1.0);
        let opts = PipelineOptions {
            mode: Mode::Numeric,
            ..Default::default()
        };
        let res = run_pipeline(&spec, &opts).unwrap();
        assert!(res.heuristic());
        assert!((res.drift.nu.values()[0] - 1.0 / std::f64::consts::PI).abs() < 1e-10);
        assert_eq!(res.resonance.l, 0);
        assert_eq!(res.resonance.d0, 1);
    }

    #[test]
    fn shifted_branch_keeps_canonical_offsets() {
        let spec = systems::torus3();
        let opts = PipelineOptions {
            branch_shift: Some(vec![vec![1], vec![0]]),
            ..Default::default()
        };
        let res = run_pipeline(&spec, &opts).unwrap();
        assert_eq!(res.drift.nu.0[0].as_exact().unwrap().to_string(), "3/2");
        assert_eq!(res.phase.branch_offsets, Some(vec![vec![0], vec![0]]));
    }

    #[test]
    fn deck_action_examples() {
        let spec = systems::torus3();
        let res = run_pipeline(&spec, &PipelineOptions::default()).unwrap();
        let g = GroupElement::torus(&[0.3]);
        let (a, h) = deck_action(&res.resonance, &[0, 0], &[0.1, 0.2], &g);
        assert_eq!(a, vec![0.1, 0.2]);
        assert!(h.distance(&g) < 1e-15);
        let (a, h) = deck_action(&res.resonance, &[1, 0], &[0.1, 0.2], &g);
        assert!((a[0] - 0.6).abs() < 1e-15 && (a[1] - 0.2).abs() < 1e-15);
        assert!(h.distance(&GroupElement::torus(&[0.8])) < 1e-15);
    }

    #[test]
    fn reconstruction_map_examples() {
        let spec = systems::torus3();
        let res = run_pipeline(&spec, &PipelineOptions::default()).unwrap();
        let j = LiftChart::reconstruction(&spec, &res, DEFAULT_STEP);
        let e = GroupElement::torus(&[0.0]);
        assert!(j.eval(&[0.0, 0.0], &e).distance(&spec.base_point) < 1e-15);
        let g = GroupElement::torus(&[0.37]);
        let m = j.eval(&[0.25, 0.6], &g);
        let expected = StatePoint::new(&[0.25, 0.6], g.clone());
        assert!(m.distance(&expected) < 1e-12);
        let (alpha, h) = j.invert(&m);
        assert!((alpha[0] - 0.25).abs() < 1e-12 && (alpha[1] - 0.6).abs() < 1e-12);
        assert!(h.distance(&g) < 1e-12);
    }
}
