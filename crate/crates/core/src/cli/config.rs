//! Run configuration: TOML (or JSON) files describing a system and the
//! options of each subcommand. The schema is documented in
//! `docs/config.md`.

use std::f64::consts::TAU;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynsys::{CoeffFunction, Lift, StatePoint, SystemSpec, DEFAULT_STEP};
use crate::freqs::{Basis, ExactScalar, FrequencyVector, Scalar, SearchOptions};
use crate::group::{AlgebraVector, GroupElement, GroupId};
use crate::reconstruct::{Mode, PipelineOptions};
use crate::verify::VerifyOptions;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

/// A scalar as written in a config file.
///
/// Integers and rational strings (`"3/4"`) are exact rationals, floats are
/// numeric, and a list is an exact combination of the declared basis
/// `1, β₁, …` with integer or rational-string coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarInput {
    Int(i64),
    Float(f64),
    Text(String),
    Combination(Vec<RationalInput>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RationalInput {
    Int(i64),
    Text(String),
}

impl RationalInput {
    fn parse(&self) -> Result<BigRational, ConfigError> {
        match self {
            RationalInput::Int(n) => Ok(BigRational::from_integer((*n).into())),
            RationalInput::Text(s) => {
                BigRational::from_str(s.trim()).or_else(|_| invalid(format!("not a rational number: {s:?}")))
            }
        }
    }
}

impl ScalarInput {
    pub fn to_scalar(&self, basis: &Arc<Basis>) -> Result<Scalar, ConfigError> {
        match self {
            ScalarInput::Float(x) => Ok(Scalar::Numeric(*x)),
            ScalarInput::Int(n) => Ok(Scalar::Exact(ExactScalar::rational(basis, BigRational::from_integer((*n).into())))),
            ScalarInput::Text(s) => Ok(Scalar::Exact(ExactScalar::rational(
                basis,
                RationalInput::Text(s.clone()).parse()?,
            ))),
            ScalarInput::Combination(c) => {
                let coeffs = c.iter().map(RationalInput::parse).collect::<Result<Vec<_>, _>>()?;
                ExactScalar::new(basis, coeffs)
                    .map(Scalar::Exact)
                    .or_else(|e| invalid(e.to_string()))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupName {
    So3,
    Torus,
}

/// Unit of SO(3) algebra coefficients. Torus coefficients are always turns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleUnit {
    #[default]
    Radians,
    Turns,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisEntry {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub index: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cos: Option<Vec<ScalarInput>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sin: Option<Vec<ScalarInput>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftConfig {
    /// One-based direction index.
    pub direction: usize,
    #[serde(default)]
    pub terms: Vec<TermConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasePointConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<f64>>,
    /// Quaternion `[w, x, y, z]` for SO(3), angles in turns for tori.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub group: GroupName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torus_dim: Option<usize>,
    pub k: usize,
    #[serde(default)]
    pub angle_unit: AngleUnit,
    #[serde(default)]
    pub basis: Vec<BasisEntry>,
    pub omega: Vec<ScalarInput>,
    #[serde(default)]
    pub vertical: Vec<TermConfig>,
    #[serde(default)]
    pub lifts: Vec<LiftConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_point: Option<BasePointConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub step: f64,
    pub height_bound: i64,
    pub tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch_shift: Option<Vec<Vec<i64>>>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let s = SearchOptions::default();
        PipelineConfig {
            mode: Mode::Exact,
            step: DEFAULT_STEP,
            height_bound: s.height_bound,
            tol: s.tol,
            branch_shift: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub verify: VerifyOptions,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            Self::from_toml(&text)?
        };
        cfg.system_spec()?;
        Ok(cfg)
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            mode: self.pipeline.mode,
            step: self.pipeline.step,
            search: SearchOptions {
                height_bound: self.pipeline.height_bound,
                tol: self.pipeline.tol,
            },
            branch_shift: self.pipeline.branch_shift.clone(),
            ..Default::default()
        }
    }

    pub fn verify_options(&self) -> VerifyOptions {
        VerifyOptions {
            step: self.pipeline.step,
            ..self.verify.clone()
        }
    }

    pub fn system_spec(&self) -> Result<SystemSpec, ConfigError> {
        self.system.build()
    }
}

impl SystemConfig {
    fn group_id(&self) -> Result<GroupId, ConfigError> {
        match (self.group, self.torus_dim) {
            (GroupName::So3, None) => Ok(GroupId::So3),
            (GroupName::So3, Some(_)) => invalid("torus_dim is only valid for torus groups"),
            (GroupName::Torus, d) => {
                let d = d.unwrap_or(1);
                if d == 0 {
                    return invalid("torus_dim must be at least 1");
                }
                Ok(GroupId::Torus(d))
            }
        }
    }

    fn basis(&self) -> Result<Arc<Basis>, ConfigError> {
        for (i, b) in self.basis.iter().enumerate() {
            if b.name == "1" || self.basis[..i].iter().any(|c| c.name == b.name) {
                return invalid(format!("duplicate basis name {:?}", b.name));
            }
            if !b.value.is_finite() {
                return invalid(format!("basis element {:?} is not finite", b.name));
            }
        }
        Ok(Basis::new(self.basis.iter().map(|b| (b.name.clone(), b.value))))
    }

    /// Factor converting config coefficients to algebra coordinates.
    fn unit_scale(&self, group: GroupId) -> f64 {
        match (group, self.angle_unit) {
            (GroupId::So3, AngleUnit::Turns) => TAU,
            _ => 1.0,
        }
    }

    fn vector(&self, entries: &Option<Vec<ScalarInput>>, group: GroupId, basis: &Arc<Basis>) -> Result<Vec<Scalar>, ConfigError> {
        match entries {
            None => Ok(vec![Scalar::Numeric(0.0); group.dim()]),
            Some(v) if v.len() != group.dim() => invalid(format!(
                "coefficient vector has {} entries, expected {}",
                v.len(),
                group.dim()
            )),
            Some(v) => v.iter().map(|s| s.to_scalar(basis)).collect(),
        }
    }

    fn coeff_function(&self, terms: &[TermConfig], group: GroupId, basis: &Arc<Basis>) -> Result<CoeffFunction, ConfigError> {
        let scale = self.unit_scale(group);
        let mut f = CoeffFunction::zero(group, self.k);
        for t in terms {
            if t.index.len() != self.k {
                return invalid(format!("Fourier index {:?} must have k = {} entries", t.index, self.k));
            }
            let to_alg = |v: Vec<Scalar>| {
                AlgebraVector::new(group, v.iter().map(|s| s.value() * scale).collect()).expect("dimension checked")
            };
            let cos = to_alg(self.vector(&t.cos, group, basis)?);
            let sin = to_alg(self.vector(&t.sin, group, basis)?);
            f = f.with_term(t.index.clone(), cos, sin);
        }
        Ok(f)
    }

    /// Exact zero mode of `a` in turns, when every zero-mode entry is exact
    /// and the unit is turns.
    fn exact_mean(&self, group: GroupId, basis: &Arc<Basis>) -> Result<Option<Vec<ExactScalar>>, ConfigError> {
        if group == GroupId::So3 && self.angle_unit == AngleUnit::Radians {
            return Ok(None);
        }
        let mut acc = vec![ExactScalar::zero(basis); group.dim()];
        for t in self.vertical.iter().filter(|t| t.index.iter().all(|x| *x == 0)) {
            for (slot, s) in acc.iter_mut().zip(self.vector(&t.cos, group, basis)?) {
                match (&t.cos, s) {
                    (None, _) => {}
                    (Some(_), Scalar::Exact(e)) => {
                        *slot = slot.checked_add(&e).or_else(|e| invalid(e.to_string()))?;
                    }
                    (Some(_), Scalar::Numeric(_)) => return Ok(None),
                }
            }
        }
        Ok(Some(acc))
    }

    pub fn build(&self) -> Result<SystemSpec, ConfigError> {
        let group = self.group_id()?;
        if self.k == 0 {
            return invalid("k must be at least 1");
        }
        let basis = self.basis()?;
        if self.omega.len() != self.k {
            return invalid(format!("omega has {} entries, expected k = {}", self.omega.len(), self.k));
        }
        let omega = FrequencyVector(self.omega.iter().map(|s| s.to_scalar(&basis)).collect::<Result<_, _>>()?);
        let vertical = self.coeff_function(&self.vertical, group, &basis)?;
        let lifts = self
            .lifts
            .iter()
            .map(|l| {
                if l.direction == 0 || l.direction > self.k {
                    return invalid(format!("lift direction {} outside 1..{}", l.direction, self.k));
                }
                Ok(Lift {
                    direction: l.direction - 1,
                    vertical: self.coeff_function(&l.terms, group, &basis)?,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let base = self.base_point.clone().unwrap_or(BasePointConfig { phi: None, g: None });
        let phi = base.phi.unwrap_or_else(|| vec![0.0; self.k]);
        if phi.len() != self.k {
            return invalid("base_point.phi must have k entries");
        }
        let g = match (group, base.g) {
            (g, None) => GroupElement::identity(g),
            (GroupId::So3, Some(q)) => {
                let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
                if q.len() != 4 || !(n > 0.0) {
                    return invalid("base_point.g must be a nonzero quaternion [w, x, y, z]");
                }
                GroupElement::so3([q[0], q[1], q[2], q[3]])
            }
            (GroupId::Torus(d), Some(x)) => {
                if x.len() != d {
                    return invalid("base_point.g must have torus_dim entries");
                }
                GroupElement::torus(&x)
            }
        };
        let spec = SystemSpec {
            group,
            k: self.k,
            omega,
            vertical,
            lifts,
            base_point: StatePoint::new(&phi, g),
            exact_vertical_mean: self.exact_mean(group, &basis)?,
        };
        spec.validate().or_else(|e| invalid(e.to_string()))?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TORUS3: &str = r#"
[system]
group = "torus"
k = 2
basis = [{ name = "sqrt2", value = 1.4142135623730951 }]
omega = [1, [0, 1]]
vertical = [{ index = [0, 0], cos = ["1/2"] }]
lifts = [{ direction = 1 }]
"#;

    #[test]
    fn parses_torus_example() {
        let cfg = RunConfig::from_toml(TORUS3).unwrap();
        let spec = cfg.system_spec().unwrap();
        assert_eq!(spec, crate::systems::torus3());
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = TORUS3.replace("k = 2", "k = 2\nfrobnicate = 1");
        assert!(RunConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn numeric_entries_disable_exact_mean() {
        let cfg = RunConfig::from_toml(&TORUS3.replace("\"1/2\"", "0.5")).unwrap();
        assert_eq!(cfg.system_spec().unwrap().exact_vertical_mean, None);
    }

    #[test]
    fn so3_turns_scale_to_radians() {
        let text = r#"
[system]
group = "so3"
k = 1
angle_unit = "turns"
omega = [1]
vertical = [{ index = [0], cos = [0, 0, "1/4"] }]
"#;
        let spec = RunConfig::from_toml(text).unwrap().system_spec().unwrap();
        assert!((spec.vertical.mean().coeffs[2] - TAU / 4.0).abs() < 1e-15);
        assert_eq!(spec.exact_vertical_mean.unwrap()[2].to_string(), "1/4");
    }

    #[test]
    fn bad_shapes_are_reported() {
        assert!(RunConfig::from_toml(&TORUS3.replace("omega = [1, [0, 1]]", "omega = [1]"))
            .unwrap()
            .system_spec()
            .is_err());
        assert!(RunConfig::from_toml(&TORUS3.replace("direction = 1", "direction = 3"))
            .unwrap()
            .system_spec()
            .is_err());
    }
}
