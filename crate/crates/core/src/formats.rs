//! JSON file formats for models, regions, trial designs and count tables.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::lattice::{LatticePoint, OutcomeModel, Region};
use crate::paths::{PathCountTable, PathCounts, PointKind};
use crate::scalar::{parse_rational, Rational};
use crate::trial::{IneffectiveRule, PromisingRule, Stage, StageRule, TrialDesign};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub p: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

/// A model is exact when every probability is written as an integer or a
/// `"num/den"` string; any decimal entry switches the whole model to `f64`.
#[derive(Clone, Debug, PartialEq)]
pub enum LoadedModel {
    Exact(OutcomeModel<Rational>),
    Float(OutcomeModel<f64>),
}

impl LoadedModel {
    pub fn k(&self) -> usize {
        match self {
            LoadedModel::Exact(m) => m.k(),
            LoadedModel::Float(m) => m.k(),
        }
    }

    pub fn to_float(&self) -> OutcomeModel<f64> {
        match self {
            LoadedModel::Exact(m) => m.to_float(),
            LoadedModel::Float(m) => m.clone(),
        }
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<LoadedModel> {
        if let Some(k) = self.k {
            if k != self.p.len() {
                return Err(Error::DimensionMismatch { expected: k, found: self.p.len() });
            }
        }
        let mut exact = true;
        let mut values = Vec::with_capacity(self.p.len());
        for v in &self.p {
            let text = match v {
                Value::Number(n) => {
                    if !(n.is_u64() || n.is_i64()) {
                        exact = false;
                    }
                    n.to_string()
                }
                Value::String(s) => {
                    if s.contains('.') || s.contains(['e', 'E']) {
                        exact = false;
                    }
                    s.clone()
                }
                other => return Err(Error::Parse(format!("probability must be a number or string, got {other}"))),
            };
            values.push(text);
        }
        if exact {
            let p = values.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>>>()?;
            Ok(LoadedModel::Exact(OutcomeModel::new(p, self.labels.clone())?))
        } else {
            let p = values
                .iter()
                .map(|s| {
                    if s.contains('/') {
                        parse_rational(s).map(|r| crate::scalar::rational_to_f64(&r))
                    } else {
                        f64::from_str(s).map_err(|_| Error::Parse(format!("bad probability {s:?}")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(LoadedModel::Float(OutcomeModel::new(p, self.labels.clone())?))
        }
    }

    pub fn load(path: &Path) -> Result<LoadedModel> {
        parse_json::<ModelSpec>(&read(path)?, "model")?.build()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum RegionSpec {
    Linear { coeffs: Vec<i64>, target: i64, horizon: usize },
    Explicit {
        accessible: Vec<Vec<u32>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        horizon: Option<usize>,
    },
    Trial { design: String },
}

impl RegionSpec {
    /// Trial design paths are resolved against `base_dir` when relative.
    pub fn build(&self, base_dir: &Path) -> Result<Region> {
        match self {
            RegionSpec::Linear { coeffs, target, horizon } => {
                Region::linear(coeffs.clone(), *target, *horizon)
            }
            RegionSpec::Explicit { accessible, horizon } => {
                let region = Region::explicit(accessible.iter().cloned().map(LatticePoint::from))?;
                Ok(match horizon {
                    Some(h) => region.with_horizon(*h),
                    None => region,
                })
            }
            RegionSpec::Trial { design } => {
                let path = PathBuf::from(design);
                let path = if path.is_relative() { base_dir.join(path) } else { path };
                Ok(crate::trial::trial_region(&DesignSpec::load(&path)?))
            }
        }
    }

    pub fn load(path: &Path) -> Result<Region> {
        let spec: RegionSpec = parse_json(&read(path)?, "region")?;
        spec.build(path.parent().unwrap_or(Path::new(".")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromisingSpec {
    pub r_min: i64,
    pub e_max: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IneffectiveSpec {
    pub r_max: i64,
    pub e_min: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinalSpec {
    pub promising: PromisingSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ineffective: Option<IneffectiveSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub n: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub promising: Option<PromisingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ineffective: Option<IneffectiveSpec>,
    #[serde(default, rename = "final", skip_serializing_if = "Option::is_none")]
    pub final_rule: Option<FinalSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub stages: Vec<StageSpec>,
}

impl From<PromisingSpec> for PromisingRule {
    fn from(s: PromisingSpec) -> Self {
        PromisingRule { r_min: s.r_min, e_max: s.e_max }
    }
}

impl From<IneffectiveSpec> for IneffectiveRule {
    fn from(s: IneffectiveSpec) -> Self {
        IneffectiveRule { r_max: s.r_max, e_min: s.e_min }
    }
}

impl DesignSpec {
    pub fn build(&self) -> Result<TrialDesign> {
        let stages = self
            .stages
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let rule = match (s.promising, s.ineffective, s.final_rule) {
                    (Some(p), Some(i), None) => StageRule::Interim { promising: p.into(), ineffective: i.into() },
                    (None, None, Some(f)) => StageRule::Final {
                        promising: f.promising.into(),
                        ineffective: f.ineffective.map(Into::into),
                    },
                    _ => {
                        return Err(Error::InvalidDesign(format!(
                            "stage {} needs either promising+ineffective or final",
                            i + 1
                        )))
                    }
                };
                Ok(Stage { n: s.n, rule })
            })
            .collect::<Result<Vec<_>>>()?;
        TrialDesign::new(stages)
    }

    pub fn from_design(design: &TrialDesign) -> Self {
        let stages = design
            .stages()
            .iter()
            .map(|s| match s.rule {
                StageRule::Interim { promising, ineffective } => StageSpec {
                    n: s.n,
                    promising: Some(PromisingSpec { r_min: promising.r_min, e_max: promising.e_max }),
                    ineffective: Some(IneffectiveSpec { r_max: ineffective.r_max, e_min: ineffective.e_min }),
                    final_rule: None,
                },
                StageRule::Final { promising, ineffective } => StageSpec {
                    n: s.n,
                    promising: None,
                    ineffective: None,
                    final_rule: Some(FinalSpec {
                        promising: PromisingSpec { r_min: promising.r_min, e_max: promising.e_max },
                        ineffective: ineffective.map(|i| IneffectiveSpec { r_max: i.r_max, e_min: i.e_min }),
                    }),
                },
            })
            .collect();
        Self { stages }
    }

    pub fn load(path: &Path) -> Result<TrialDesign> {
        parse_json::<DesignSpec>(&read(path)?, "design")?.build()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindSpec {
    Accessible,
    Boundary,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntrySpec {
    pub point: Vec<u32>,
    pub kind: KindSpec,
    pub total: String,
    pub from_unit: Vec<String>,
}

/// Path-count table with big integers as decimal strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    pub dim: usize,
    pub horizon: usize,
    pub points: Vec<TableEntrySpec>,
}

impl TableSpec {
    pub fn from_table(table: &PathCountTable) -> Self {
        Self {
            dim: table.dim(),
            horizon: table.horizon(),
            points: table
                .iter()
                .map(|(x, c)| TableEntrySpec {
                    point: x.coords().to_vec(),
                    kind: match c.kind {
                        PointKind::Accessible => KindSpec::Accessible,
                        PointKind::Boundary => KindSpec::Boundary,
                    },
                    total: c.total.to_string(),
                    from_unit: c.from_unit.iter().map(ToString::to_string).collect(),
                })
                .collect(),
        }
    }

    pub fn build(&self) -> Result<PathCountTable> {
        let big = |s: &str| {
            BigUint::from_str(s).map_err(|_| Error::Parse(format!("bad count {s:?}")))
        };
        let entries = self
            .points
            .iter()
            .map(|e| {
                Ok((
                    LatticePoint::from(e.point.clone()),
                    PathCounts {
                        kind: match e.kind {
                            KindSpec::Accessible => PointKind::Accessible,
                            KindSpec::Boundary => PointKind::Boundary,
                        },
                        total: big(&e.total)?,
                        from_unit: e.from_unit.iter().map(|s| big(s)).collect::<Result<_>>()?,
                    },
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        PathCountTable::from_entries(self.dim, self.horizon, entries)
    }
}
